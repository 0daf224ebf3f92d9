//! Simulation of multivariate generalized Pareto data.
//!
//! The prototype is `V = Z / U` with `U ~ U(0, 1)` independent of the
//! generator `Z`. Its copula is a GPC exactly when `Z` is bounded; general
//! margins come from `Y_i = H_{α_i}^{-1}(1 - U / Z_i)`, and only the upper
//! tail of `Y` is distributionally exact for unbounded generators.

use rand::Rng;
use rand_distr::Open01;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dnorm::{sample_generator, Family, GeneratorSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pseudo::{to_pseudo_sample, Provenance, PseudoSample};
use crate::rng::{stream, Purpose, BLOCK_ROWS};

/// Lower clamp for `1 - U/Z_i` before the marginal quantile transform.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "alpha", rename_all = "snake_case")]
pub enum Margins {
    /// `V = Z/U`, standard Pareto upper tails.
    SimplePareto,
    /// All `α_i = 1`: `Y = -U / Z`.
    Standard,
    /// All `α_i = 0`: `Y = log Z - log U`.
    Gumbel,
    GeneralAlpha(Vec<f64>),
    /// Uniform margins; the copula of `V`.
    CopulaScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpdSampleConfig {
    pub spec: GeneratorSpec,
    pub margins: Margins,
    pub n: usize,
    pub seed: u64,
    /// Almost-sure bound `c >= 1` of the generator; required for exact GPC output.
    pub generator_bound: Option<f64>,
}

impl GpdSampleConfig {
    pub fn new(spec: GeneratorSpec, margins: Margins, n: usize, seed: u64) -> Self {
        Self { spec, margins, n, seed, generator_bound: None }
    }
}

/// Draws `n` iid U(0, 1) radial variables from their own stream.
fn radial_uniforms(n: usize, seed: u64) -> Vec<f64> {
    let mut u = vec![0.0; n];
    u.par_chunks_mut(BLOCK_ROWS).enumerate().for_each(|(b, chunk)| {
        let mut rng = stream(seed, Purpose::Radial, b as u64);
        for v in chunk {
            *v = rng.sample(Open01);
        }
    });
    u
}

fn draw(config: &GpdSampleConfig) -> Result<(Matrix, Vec<f64>)> {
    if config.n == 0 {
        return Err(Error::Parameter("n must be positive".into()));
    }
    let z = sample_generator(&config.spec, config.n, config.seed)?;
    let u = radial_uniforms(config.n, config.seed);
    Ok((z, u))
}

/// Rows are iid copies of `Z / U`.
pub fn simulate_simple_gpd(config: &GpdSampleConfig) -> Result<Matrix> {
    if config.margins != Margins::SimplePareto {
        return Err(Error::Parameter("simulate_simple_gpd needs SimplePareto margins".into()));
    }
    let (mut z, u) = draw(config)?;
    let d = z.ncols();
    for (row, &ui) in z.as_mut_slice().chunks_exact_mut(d).zip(&u) {
        for v in row {
            *v /= ui;
        }
    }
    Ok(z)
}

/// `H_α^{-1}(1 - s)` written in terms of the survival probability `s`.
fn quantile_from_survival(alpha: f64, s: f64) -> f64 {
    if alpha > 0.0 {
        -s.powf(1.0 / alpha)
    } else if alpha < 0.0 {
        s.powf(1.0 / alpha)
    } else {
        -s.ln()
    }
}

/// `Y_i = H_{α_i}^{-1}(1 - U / Z_i)`, with `1 - U/Z_i` clamped to at least
/// [`PROBABILITY_FLOOR`] when `Z_i < U`.
pub fn simulate_general_gpd(config: &GpdSampleConfig) -> Result<Matrix> {
    let d = config.spec.dim();
    let alphas = match &config.margins {
        Margins::Standard => vec![1.0; d],
        Margins::Gumbel => vec![0.0; d],
        Margins::GeneralAlpha(a) => {
            if a.len() != d {
                return Err(Error::Shape { expected: d, got: a.len() });
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter("alpha values must be finite".into()));
            }
            a.clone()
        }
        other => {
            return Err(Error::Parameter(format!("simulate_general_gpd cannot produce {other:?} margins")));
        }
    };
    let (mut z, u) = draw(config)?;
    let s_max = 1.0 - PROBABILITY_FLOOR;
    for (row, &ui) in z.as_mut_slice().chunks_exact_mut(d).zip(&u) {
        for (v, &alpha) in row.iter_mut().zip(&alphas) {
            let s = if *v > 0.0 { (ui / *v).min(s_max) } else { s_max };
            *v = quantile_from_survival(alpha, s);
        }
    }
    Ok(z)
}

/// Copula-scale sample of `V = Z / U`.
///
/// Bounded generators use the exact marginal CDF (`F(x) = 1 - 1/x` in the
/// upper tail; the atom at zero of the spike generator is spread uniformly
/// over `(0, 1 - 1/d)` with an independent stream). Other families fall back
/// to the rank transform and are not flagged as exact.
pub fn simulate_copula_scale(config: &GpdSampleConfig) -> Result<PseudoSample> {
    let d = config.spec.dim();
    if let Some(c) = config.generator_bound {
        match config.spec.known_bound() {
            Some(b) if c >= b && c >= 1.0 => {}
            Some(b) => {
                return Err(Error::Parameter(format!("generator bound {c} is below the family's bound {b}")));
            }
            None => {
                return Err(Error::Parameter("no almost-sure bound is known for this generator family".into()));
            }
        }
    }
    match config.spec.family() {
        Family::ConstantOne => {
            let u = radial_uniforms(config.n.max(1), config.seed);
            if config.n == 0 {
                return Err(Error::Parameter("n must be positive".into()));
            }
            let mut m = Matrix::zeros(config.n, d);
            for (row, &ui) in m.as_mut_slice().chunks_exact_mut(d).zip(&u) {
                // F(1/U) = 1 - U
                row.fill(1.0 - ui);
            }
            PseudoSample::new(m, Provenance::Simulated, true)
        }
        Family::PermutedSpike => {
            let (mut z, u) = draw(config)?;
            let df = d as f64;
            let atom_mass = 1.0 - 1.0 / df;
            z.as_mut_slice().par_chunks_mut(BLOCK_ROWS * d).zip(u.par_chunks(BLOCK_ROWS)).enumerate().for_each(
                |(b, (rows, us))| {
                    let mut rng = stream(config.seed, Purpose::Atom, b as u64);
                    for (row, &ui) in rows.chunks_exact_mut(d).zip(us) {
                        for v in row.iter_mut() {
                            *v = if *v > 0.0 {
                                1.0 - ui / df
                            } else {
                                let w: f64 = rng.sample(Open01);
                                atom_mass * w
                            };
                        }
                    }
                },
            );
            PseudoSample::new(z, Provenance::Simulated, true)
        }
        _ => {
            let v = simulate_simple_gpd(&GpdSampleConfig { margins: Margins::SimplePareto, ..config.clone() })?;
            to_pseudo_sample(&v)
        }
    }
}

/// Simulates according to `config.margins`, returning the data matrix.
pub fn simulate(config: &GpdSampleConfig) -> Result<Matrix> {
    match config.margins {
        Margins::SimplePareto => simulate_simple_gpd(config),
        Margins::CopulaScale => Ok(simulate_copula_scale(config)?.data().clone()),
        _ => simulate_general_gpd(config),
    }
}

/// Sidecar record stored next to a simulated CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub config: GpdSampleConfig,
    pub rows: usize,
    pub cols: usize,
    /// Copula-scale output only.
    pub provenance: Option<Provenance>,
    pub exact_gpc: Option<bool>,
}

/// Writes a sample as CSV with header `x1,...,xd`.
pub fn write_sample_csv<W: std::io::Write>(sample: &Matrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((1..=sample.ncols()).map(|j| format!("x{j}")))?;
    for row in sample.rows_iter() {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// One grid point of the δ-neighborhood tail diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub x: f64,
    /// `x * #{Z_i/U > x} / n` per margin.
    pub raw: Vec<f64>,
    /// `1 - mean((Z_i - x)+)` per margin. `min(x, Z_i)` is the conditional
    /// expectation of the raw term given `Z`, and `E Z_i = 1` serves as a
    /// control variate: `mean(min(x, Z_i)) - (mean(Z_i) - 1)`.
    pub smoothed: Vec<f64>,
}

/// `x * (1 - F_i(x))` for `V_i = Z_i / U` over an increasing grid of `x > 1`.
pub fn delta_neighborhood_diagnostic(
    spec: &GeneratorSpec,
    x_grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<DiagnosticRow>> {
    if x_grid.iter().any(|x| !(*x > 1.0)) {
        return Err(Error::Parameter("diagnostic grid values must exceed 1".into()));
    }
    if x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("diagnostic grid must be strictly increasing".into()));
    }
    let config = GpdSampleConfig::new(spec.clone(), Margins::SimplePareto, n, seed);
    let (z, u) = draw(&config)?;
    let d = spec.dim();
    let nf = n as f64;
    Ok(x_grid
        .iter()
        .map(|&x| {
            let mut exceed = vec![0usize; d];
            let mut over = vec![0.0; d];
            for (row, &ui) in z.rows_iter().zip(&u) {
                for j in 0..d {
                    if row[j] / ui > x {
                        exceed[j] += 1;
                    }
                    over[j] += (row[j] - x).max(0.0);
                }
            }
            DiagnosticRow {
                x,
                raw: exceed.iter().map(|&k| x * k as f64 / nf).collect(),
                smoothed: over.iter().map(|s| 1.0 - s / nf).collect(),
            }
        })
        .collect())
}
