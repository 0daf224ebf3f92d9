//! D-norms defined by their generators.
//!
//! A D-norm is `||x||_D = E(max_i |x_i| Z_i)` for a random generator `Z` with
//! `Z_i >= 0` and `E(Z_i) = 1`. The dual D-norm function is
//! `E(min_i |x_i| Z_i)`. Handles evaluate both, in closed form where one is
//! known and otherwise by Monte Carlo over a single shared generator sample.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, Purpose, BLOCK_ROWS};
use crate::special::gamma;

/// Largest dimension accepted by [`DNormHandle::dual_via_inclusion_exclusion`].
pub const MAX_INCLUSION_EXCLUSION_DIM: usize = 20;

const PSD_TOLERANCE: f64 = 1e-12;

/// Generator family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `Z = (1, ..., 1)`; generates the sup-norm.
    ConstantOne,
    /// Random permutation of `(d, 0, ..., 0)`; generates the L1 norm.
    PermutedSpike,
    /// iid Fréchet(p) components scaled by `1/Γ(1 - 1/p)`; generates `||.||_p`.
    #[serde(rename = "logistic")]
    LogisticFrechet { p: f64 },
    /// `Z_i = exp(X_i - σ_ii/2)` with `X ~ N(0, Σ)`.
    HuslerReiss { sigma: Vec<Vec<f64>> },
}

/// A validated generator description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct GeneratorSpec {
    family: Family,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    #[serde(flatten)]
    family: Family,
    dim: usize,
}

impl TryFrom<RawSpec> for GeneratorSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        GeneratorSpec::new(raw.family, raw.dim)
    }
}

impl From<GeneratorSpec> for RawSpec {
    fn from(spec: GeneratorSpec) -> Self {
        RawSpec { family: spec.family, dim: spec.dim }
    }
}

impl GeneratorSpec {
    pub fn new(family: Family, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("dimension must be at least 1".into()));
        }
        match &family {
            Family::LogisticFrechet { p } => {
                if !(p.is_finite() && *p > 1.0) {
                    return Err(Error::Parameter(format!("logistic parameter p must be > 1, got {p}")));
                }
            }
            Family::HuslerReiss { sigma } => {
                if sigma.len() != dim || sigma.iter().any(|r| r.len() != dim) {
                    return Err(Error::Parameter(format!("Sigma must be {dim}x{dim}")));
                }
                hr_factor(sigma)?;
            }
            Family::ConstantOne | Family::PermutedSpike => {}
        }
        Ok(Self { family, dim })
    }

    pub fn constant_one(dim: usize) -> Result<Self> {
        Self::new(Family::ConstantOne, dim)
    }

    pub fn permuted_spike(dim: usize) -> Result<Self> {
        Self::new(Family::PermutedSpike, dim)
    }

    pub fn logistic(p: f64, dim: usize) -> Result<Self> {
        Self::new(Family::LogisticFrechet { p }, dim)
    }

    pub fn husler_reiss(sigma: Vec<Vec<f64>>) -> Result<Self> {
        let dim = sigma.len();
        Self::new(Family::HuslerReiss { sigma }, dim)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Almost-sure upper bound of the generator components, if one is known.
    pub fn known_bound(&self) -> Option<f64> {
        match self.family {
            Family::ConstantOne => Some(1.0),
            Family::PermutedSpike => Some(self.dim as f64),
            _ => None,
        }
    }

    /// Closed form of the generated norm, if known.
    pub fn closed_form(&self) -> Option<ClosedForm> {
        match self.family {
            Family::ConstantOne => Some(ClosedForm::Sup),
            Family::PermutedSpike => Some(ClosedForm::L1),
            Family::LogisticFrechet { p } => Some(ClosedForm::Logistic(p)),
            Family::HuslerReiss { .. } => None,
        }
    }
}

/// Factor `L` with `L L^T = Σ`: Cholesky, or eigenvalue-clipped for singular PSD input.
fn hr_factor(sigma: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = sigma.len();
    let m = DMatrix::from_fn(d, d, |i, j| sigma[i][j]);
    let scale = m.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    for i in 0..d {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::Parameter("Sigma must be symmetric".into()));
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("Sigma has non-finite entries".into()));
    }
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = m.symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let tol = PSD_TOLERANCE * lambda_max.max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < -tol) {
        return Err(Error::Parameter("Sigma is not positive semi-definite".into()));
    }
    let roots = DVector::from_iterator(d, eig.eigenvalues.iter().map(|&l| if l > tol { l.sqrt() } else { 0.0 }));
    Ok(eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Per-family row sampler with precomputed constants.
enum RowSampler {
    ConstantOne,
    Spike { d: usize },
    Logistic { inv_p: f64, norm: f64 },
    HuslerReiss { factor: DMatrix<f64>, half_var: Vec<f64> },
}

impl RowSampler {
    fn new(spec: &GeneratorSpec) -> Result<Self> {
        Ok(match &spec.family {
            Family::ConstantOne => RowSampler::ConstantOne,
            Family::PermutedSpike => RowSampler::Spike { d: spec.dim },
            Family::LogisticFrechet { p } => RowSampler::Logistic { inv_p: 1.0 / p, norm: gamma(1.0 - 1.0 / p) },
            Family::HuslerReiss { sigma } => RowSampler::HuslerReiss {
                factor: hr_factor(sigma)?,
                half_var: (0..spec.dim).map(|i| 0.5 * sigma[i][i]).collect(),
            },
        })
    }

    fn fill(&self, rng: &mut ChaCha8Rng, row: &mut [f64], normals: &mut [f64]) {
        match self {
            RowSampler::ConstantOne => row.fill(1.0),
            RowSampler::Spike { d } => {
                row.fill(0.0);
                row[rng.random_range(0..*d)] = *d as f64;
            }
            RowSampler::Logistic { inv_p, norm } => {
                for z in row.iter_mut() {
                    let u: f64 = rng.sample(Open01);
                    *z = (-u.ln()).powf(-inv_p) / norm;
                }
            }
            RowSampler::HuslerReiss { factor, half_var } => {
                for v in normals.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                for (i, z) in row.iter_mut().enumerate() {
                    let x: f64 = (0..normals.len()).map(|k| factor[(i, k)] * normals[k]).sum();
                    *z = (x - half_var[i]).exp();
                }
            }
        }
    }
}

/// Draws `n` iid copies of the generator `Z`, one per row.
pub fn sample_generator(spec: &GeneratorSpec, n: usize, seed: u64) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::Parameter("sample size must be at least 1".into()));
    }
    let d = spec.dim;
    let sampler = RowSampler::new(spec)?;
    let mut data = vec![0.0; n * d];
    data.par_chunks_mut(BLOCK_ROWS * d).enumerate().for_each(|(b, chunk)| {
        let mut rng = stream(seed, Purpose::Generator, b as u64);
        let mut normals = vec![0.0; d];
        for row in chunk.chunks_exact_mut(d) {
            sampler.fill(&mut rng, row, &mut normals);
        }
    });
    Ok(Matrix::from_vec(n, d, data))
}

/// Known closed form of a D-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClosedForm {
    Sup,
    L1,
    Logistic(f64),
}

impl ClosedForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            ClosedForm::Sup => x.iter().fold(0.0_f64, |a, v| a.max(v.abs())),
            ClosedForm::L1 => x.iter().map(|v| v.abs()).sum(),
            ClosedForm::Logistic(p) => {
                // scale by the max component to avoid overflow for large p
                let m = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                if m == 0.0 {
                    return 0.0;
                }
                m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
            }
        }
    }
}

/// Monte Carlo settings of a handle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub sample_count: usize,
    pub rng_seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { sample_count: 100_000, rng_seed: 0 }
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
}

/// A D-norm with an optional closed form and a shared-sample Monte Carlo evaluator.
#[derive(Debug)]
pub struct DNormHandle {
    spec: GeneratorSpec,
    closed_form: Option<ClosedForm>,
    mc: McConfig,
    sample: OnceLock<Matrix>,
}

impl DNormHandle {
    /// Handle using the family's closed form when one exists.
    pub fn new(spec: GeneratorSpec, mc: McConfig) -> Result<Self> {
        if mc.sample_count < 2 {
            return Err(Error::Parameter("sample_count must be at least 2".into()));
        }
        let closed_form = spec.closed_form();
        Ok(Self { spec, closed_form, mc, sample: OnceLock::new() })
    }

    /// Handle that always evaluates by Monte Carlo.
    pub fn monte_carlo_only(spec: GeneratorSpec, mc: McConfig) -> Result<Self> {
        let mut h = Self::new(spec, mc)?;
        h.closed_form = None;
        Ok(h)
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn closed_form(&self) -> Option<ClosedForm> {
        self.closed_form
    }

    pub fn mc_config(&self) -> McConfig {
        self.mc
    }

    /// The shared generator sample (drawn on first use).
    pub fn sample(&self) -> &Matrix {
        self.sample.get_or_init(|| {
            sample_generator(&self.spec, self.mc.sample_count, self.mc.rng_seed)
                .expect("spec validated at construction")
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.dim {
            return Err(Error::Shape { expected: self.spec.dim, got: x.len() });
        }
        Ok(())
    }

    fn mc_mean<F>(&self, f: F) -> McEstimate
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let sample = self.sample();
        let d = sample.ncols();
        let partials: Vec<(f64, f64)> = sample
            .as_slice()
            .par_chunks(BLOCK_ROWS * d)
            .map(|chunk| {
                chunk.chunks_exact(d).fold((0.0, 0.0), |(s, s2), row| {
                    let v = f(row);
                    (s + v, s2 + v * v)
                })
            })
            .collect();
        let (sum, sum2) = partials.iter().fold((0.0, 0.0), |(a, b), (s, s2)| (a + s, b + s2));
        let n = sample.nrows() as f64;
        let mean = sum / n;
        let var = ((sum2 - sum * mean) / (n - 1.0)).max(0.0);
        McEstimate { mean, se: (var / n).sqrt() }
    }

    /// `||x||_D`: closed form when available, else the Monte Carlo mean.
    pub fn eval_dnorm(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        match self.closed_form {
            Some(cf) => Ok(cf.eval(x)),
            None => Ok(self.eval_dnorm_mc(x)?.mean),
        }
    }

    /// Monte Carlo estimate of `E(max_i |x_i| Z_i)`, ignoring any closed form.
    pub fn eval_dnorm_mc(&self, x: &[f64]) -> Result<McEstimate> {
        self.check_dim(x)?;
        let ax: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        Ok(self.mc_mean(|z| ax.iter().zip(z).fold(0.0_f64, |a, (xi, zi)| a.max(xi * zi))))
    }

    /// Dual D-norm function `E(min_i |x_i| Z_i)`.
    pub fn eval_dual(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        match self.closed_form {
            Some(ClosedForm::Sup) => Ok(x.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()))),
            Some(ClosedForm::L1) => Ok(if self.spec.dim >= 2 { 0.0 } else { x[0].abs() }),
            _ => Ok(self.eval_dual_mc(x)?.mean),
        }
    }

    /// Monte Carlo estimate of the dual, ignoring any closed form.
    pub fn eval_dual_mc(&self, x: &[f64]) -> Result<McEstimate> {
        self.check_dim(x)?;
        let ax: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        Ok(self.mc_mean(|z| ax.iter().zip(z).fold(f64::INFINITY, |a, (xi, zi)| a.min(xi * zi))))
    }

    /// Dual via `sum_{T != ∅} (-1)^{|T|-1} || sum_{i in T} x_i e_i ||_D`.
    pub fn dual_via_inclusion_exclusion(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let d = x.len();
        if d > MAX_INCLUSION_EXCLUSION_DIM {
            return Err(Error::Capacity(format!(
                "inclusion-exclusion needs 2^{d} - 1 terms; at most d = {MAX_INCLUSION_EXCLUSION_DIM} supported"
            )));
        }
        if let Some(v) = x.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Parameter(format!("components must be nonnegative, got {v}")));
        }
        let mut total = 0.0;
        let mut y = vec![0.0; d];
        for mask in 1u32..(1u32 << d) {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = if mask & (1 << i) != 0 { x[i] } else { 0.0 };
            }
            let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
            total += sign * self.eval_dnorm(&y)?;
        }
        Ok(total.max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mc(n: usize) -> McConfig {
        McConfig { sample_count: n, rng_seed: 0 }
    }

    #[test]
    fn constant_one_rows_are_ones() {
        let z = sample_generator(&GeneratorSpec::constant_one(3).unwrap(), 2, 0).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 1.0));
        assert_eq!(z.nrows(), 2);
    }

    #[test]
    fn husler_reiss_zero_sigma_is_constant() {
        let spec = GeneratorSpec::husler_reiss(vec![vec![0.0; 2]; 2]).unwrap();
        let z = sample_generator(&spec, 2, 0).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 1.0));
        let h = DNormHandle::new(spec, mc(1000)).unwrap();
        assert_relative_eq!(h.eval_dnorm(&[2.0, 5.0]).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_sigma_accepted() {
        // perfectly correlated pair
        let spec = GeneratorSpec::husler_reiss(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let z = sample_generator(&spec, 100, 3).unwrap();
        for r in z.rows_iter() {
            assert_relative_eq!(r[0], r[1], max_relative = 1e-9);
        }
    }

    #[test]
    fn permuted_spike_column_means_near_one() {
        let z = sample_generator(&GeneratorSpec::permuted_spike(2).unwrap(), 1_000_000, 0).unwrap();
        for m in z.column_means() {
            assert!((m - 1.0).abs() < 0.01, "mean {m}");
        }
        assert!(z.rows_iter().all(|r| r.iter().filter(|v| **v == 0.0).count() == 1));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(matches!(GeneratorSpec::logistic(1.0, 2), Err(Error::Parameter(_))));
        assert!(matches!(GeneratorSpec::logistic(0.5, 2), Err(Error::Parameter(_))));
        let not_psd = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(GeneratorSpec::husler_reiss(not_psd), Err(Error::Parameter(_))));
        let asym = vec![vec![1.0, 0.5], vec![0.1, 1.0]];
        assert!(matches!(GeneratorSpec::husler_reiss(asym), Err(Error::Parameter(_))));
        assert!(GeneratorSpec::constant_one(0).is_err());
        assert!(sample_generator(&GeneratorSpec::constant_one(2).unwrap(), 0, 0).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let sup = DNormHandle::new(GeneratorSpec::constant_one(3).unwrap(), mc(10)).unwrap();
        assert_eq!(sup.eval_dnorm(&[1.0, -2.0, 3.0]).unwrap(), 3.0);
        let l2 = DNormHandle::new(GeneratorSpec::logistic(2.0, 2).unwrap(), mc(10)).unwrap();
        assert_relative_eq!(l2.eval_dnorm(&[3.0, 4.0]).unwrap(), 5.0, epsilon = 1e-12);
        assert!(matches!(l2.eval_dnorm(&[1.0]), Err(Error::Shape { expected: 2, got: 1 })));
    }

    #[test]
    fn logistic_mc_agrees_with_closed_form() {
        let h = DNormHandle::new(GeneratorSpec::logistic(3.0, 3).unwrap(), mc(200_000)).unwrap();
        let est = h.eval_dnorm_mc(&[1.0, 1.0, 1.0]).unwrap();
        let exact = 3f64.powf(1.0 / 3.0);
        assert_relative_eq!(exact, 1.442_249_570_307_408, epsilon = 1e-12);
        assert!((est.mean - exact).abs() < 4.0 * est.se, "{est:?}");
    }

    #[test]
    fn dual_examples() {
        let l1 = DNormHandle::new(GeneratorSpec::permuted_spike(2).unwrap(), mc(10)).unwrap();
        assert_eq!(l1.eval_dual(&[0.3, 7.0]).unwrap(), 0.0);
        assert_eq!(l1.eval_dual_mc(&[0.3, 7.0]).unwrap().mean, 0.0);
        let sup = DNormHandle::new(GeneratorSpec::constant_one(3).unwrap(), mc(10)).unwrap();
        assert_eq!(sup.eval_dual(&[2.0, 5.0, 3.0]).unwrap(), 2.0);

        let l2 = DNormHandle::new(GeneratorSpec::logistic(2.0, 2).unwrap(), mc(200_000)).unwrap();
        let est = l2.eval_dual_mc(&[1.0, 1.0]).unwrap();
        // oracle: ||e1|| + ||e2|| - ||(1,1)||_2
        let oracle = 2.0 - 2f64.sqrt();
        assert!((est.mean - oracle).abs() < 4.0 * est.se, "{est:?}");
    }

    #[test]
    fn inclusion_exclusion_examples() {
        let sup = DNormHandle::new(GeneratorSpec::constant_one(3).unwrap(), mc(10)).unwrap();
        assert_relative_eq!(sup.dual_via_inclusion_exclusion(&[2.0, 5.0, 3.0]).unwrap(), 2.0, epsilon = 1e-12);
        let l1 = DNormHandle::new(GeneratorSpec::permuted_spike(2).unwrap(), mc(10)).unwrap();
        assert_relative_eq!(l1.dual_via_inclusion_exclusion(&[1.0, 2.0]).unwrap(), 0.0, epsilon = 1e-12);
        let l2 = DNormHandle::new(GeneratorSpec::logistic(2.0, 2).unwrap(), mc(10)).unwrap();
        assert_relative_eq!(
            l2.dual_via_inclusion_exclusion(&[1.0, 1.0]).unwrap(),
            2.0 - 2f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(matches!(sup.dual_via_inclusion_exclusion(&[1.0, -1.0, 0.0]), Err(Error::Parameter(_))));
        let big = DNormHandle::new(GeneratorSpec::constant_one(21).unwrap(), mc(10)).unwrap();
        assert!(matches!(big.dual_via_inclusion_exclusion(&[1.0; 21]), Err(Error::Capacity(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec: GeneratorSpec = serde_json::from_str(r#"{"family": "logistic", "p": 2.5, "dim": 4}"#).unwrap();
        assert_eq!(spec, GeneratorSpec::logistic(2.5, 4).unwrap());
        let hr = GeneratorSpec::husler_reiss(vec![vec![1.0, 0.5], vec![0.5, 2.0]]).unwrap();
        let text = serde_json::to_string(&hr).unwrap();
        assert_eq!(serde_json::from_str::<GeneratorSpec>(&text).unwrap(), hr);
        assert!(serde_json::from_str::<GeneratorSpec>(r#"{"family": "logistic", "p": 0.5, "dim": 2}"#).is_err());
    }

    #[test]
    fn shared_sample_is_reused() {
        let h = DNormHandle::monte_carlo_only(GeneratorSpec::logistic(2.0, 2).unwrap(), mc(1000)).unwrap();
        let a = h.eval_dnorm(&[1.0, 2.0]).unwrap();
        let b = h.eval_dnorm(&[2.0, 4.0]).unwrap();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-14);
    }
}
