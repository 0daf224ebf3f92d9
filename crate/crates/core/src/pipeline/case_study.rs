//! Margin fits plus joint exceedance estimates for a set of scenarios.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exceedance::{estimate_exceedance, CopulaTarget, ExceedanceEstimate};
use crate::gpd::{fit_margin, GpdMarginFit};
use crate::pipeline::ingest::{Dataset, IngestOptions};
use crate::pseudo::to_pseudo_sample;
use crate::stat_tests::CiMethod;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    pub column: String,
    /// GPD threshold `s` in data units.
    pub gpd_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// Physical thresholds by column; columns left out do not take part.
    pub thresholds: BTreeMap<String, f64>,
}

fn default_level() -> f64 {
    0.95
}
fn default_p_min() -> f64 {
    0.5
}
fn default_grid_size() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub margins: Vec<MarginConfig>,
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_p_min")]
    pub p_min: f64,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    /// Recorded in the report; the rank-based pipeline itself draws no random numbers.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ci_method: CiMethod,
    /// Estimate scenarios with thresholds below their GPD threshold, using
    /// the empirical df for those margins.
    #[serde(default)]
    pub include_non_extreme: bool,
    #[serde(default)]
    pub ingest: IngestOptions,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.margins.is_empty() {
            return Err(Error::Parameter("no margins configured".into()));
        }
        for (i, m) in self.margins.iter().enumerate() {
            if self.margins[..i].iter().any(|o| o.column == m.column) {
                return Err(Error::Parameter(format!("margin '{}' configured twice", m.column)));
            }
        }
        for sc in &self.scenarios {
            if sc.thresholds.is_empty() {
                return Err(Error::Parameter(format!("scenario '{}' has no thresholds", sc.name)));
            }
            if let Some(c) = sc.thresholds.keys().find(|c| !self.margins.iter().any(|m| &m.column == *c)) {
                return Err(Error::UnknownColumn(format!("{c} (scenario '{}')", sc.name)));
            }
        }
        for (i, sc) in self.scenarios.iter().enumerate() {
            if self.scenarios[..i].iter().any(|o| o.name == sc.name) {
                return Err(Error::Parameter(format!("scenario name '{}' used twice", sc.name)));
            }
        }
        Ok(())
    }
}

/// One margin evaluated at one scenario threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    /// `threshold >= s`: p0 comes from the fitted GPD tail.
    pub extreme: bool,
    pub p0: f64,
    pub se_p0: Option<f64>,
    /// Fraction of observations `<= threshold`.
    pub empirical_p0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub column: String,
    /// The GPD fit, evaluated at its own threshold `s`.
    pub fit: GpdMarginFit,
    pub thresholds: Vec<ThresholdRow>,
}

impl MarginReport {
    pub fn row(&self, threshold: f64) -> Option<&ThresholdRow> {
        self.thresholds.iter().find(|r| r.threshold == threshold)
    }

    /// Table-3 shaped rows: the fit re-evaluated at every extreme threshold.
    pub fn table_rows(&self) -> Result<Vec<GpdMarginFit>> {
        self.thresholds.iter().filter(|r| r.extreme).map(|r| self.fit.with_target(r.threshold)).collect()
    }
}

/// Joint row with every quantity in percent: `(t0, p_hat, q_hat, lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentRow {
    pub t0: f64,
    pub p_hat: f64,
    pub q_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

impl PercentRow {
    pub fn from_estimate(est: &ExceedanceEstimate) -> Self {
        Self {
            t0: 100.0 * est.t0,
            p_hat: 100.0 * est.p_hat,
            q_hat: 100.0 * est.q_hat,
            ci_lower: 100.0 * est.ci_lower,
            ci_upper: 100.0 * est.ci_upper,
        }
    }

    pub fn rounded(&self, decimals: i32) -> Self {
        Self {
            t0: round_to(self.t0, decimals),
            p_hat: round_to(self.p_hat, decimals),
            q_hat: round_to(self.q_hat, decimals),
            ci_lower: round_to(self.ci_lower, decimals),
            ci_upper: round_to(self.ci_upper, decimals),
        }
    }

    /// Checks `q = t0 * p / 100` (percent arithmetic) after rounding to `decimals`.
    pub fn verify_identity(&self, decimals: i32) -> Result<()> {
        let product = round_to(self.t0 * self.p_hat / 100.0, decimals);
        let q = round_to(self.q_hat, decimals);
        // compare in units of the last decimal to avoid representation noise
        let f = 10f64.powi(decimals);
        if ((product - q) * f).abs() < 0.5 {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "t0 * p_hat = {product} does not match q_hat = {q} at {decimals} decimals"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioStatus {
    Estimated,
    /// Some threshold lies below its GPD threshold; not estimated.
    ExcludedNonExtreme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub columns: Vec<String>,
    pub thresholds: Vec<f64>,
    pub x0: Vec<f64>,
    pub non_extreme: Vec<String>,
    pub status: ScenarioStatus,
    pub estimate: Option<ExceedanceEstimate>,
    pub percent: Option<PercentRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub columns: Vec<String>,
    pub n: usize,
    pub dropped_rows: usize,
    pub season: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub dataset: DatasetSummary,
    pub level: f64,
    pub p_min: f64,
    pub grid_size: usize,
    pub seed: u64,
    pub ci_method: CiMethod,
    pub margins: Vec<MarginReport>,
    pub scenarios: Vec<ScenarioReport>,
}

fn fit_one(dataset: &Dataset, m: &MarginConfig, thresholds: &[f64]) -> Result<MarginReport> {
    let data = dataset.column(&m.column)?;
    let fit = fit_margin(&m.column, &data, m.gpd_threshold, m.gpd_threshold)?;
    let n = data.len() as f64;
    let rows = thresholds
        .iter()
        .map(|&y| {
            let empirical_p0 = data.iter().filter(|&&x| x <= y).count() as f64 / n;
            if y >= m.gpd_threshold {
                let r = fit.with_target(y)?;
                Ok(ThresholdRow { threshold: y, extreme: true, p0: r.p0, se_p0: r.se.p0, empirical_p0 })
            } else {
                Ok(ThresholdRow { threshold: y, extreme: false, p0: empirical_p0, se_p0: None, empirical_p0 })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MarginReport { column: m.column.clone(), fit, thresholds: rows })
}

/// Fits every margin, assembles `x0` from the p0 values and estimates each
/// scenario on the empirical copula of the data.
pub fn run_case_study(dataset: &Dataset, config: &ScenarioConfig) -> Result<CaseStudyReport> {
    config.validate()?;
    let margins = config
        .margins
        .iter()
        .map(|m| {
            let mut ys: Vec<f64> = config.scenarios.iter().filter_map(|s| s.thresholds.get(&m.column).copied()).collect();
            ys.sort_by(f64::total_cmp);
            ys.dedup();
            fit_one(dataset, m, &ys).map_err(|e| e.context(format!("margin '{}'", m.column)))
        })
        .collect::<Result<Vec<_>>>()?;

    let all: Vec<usize> =
        config.margins.iter().map(|m| dataset.index_of(&m.column)).collect::<Result<_>>()?;
    let pseudo = to_pseudo_sample(&dataset.data.select_columns(&all))?;

    let scenarios = config
        .scenarios
        .par_iter()
        .map(|sc| {
            let mut cols = Vec::new();
            let mut idx = Vec::new();
            let mut thresholds = Vec::new();
            let mut x0 = Vec::new();
            let mut non_extreme = Vec::new();
            for (j, (m, rep)) in config.margins.iter().zip(&margins).enumerate() {
                let Some(&y) = sc.thresholds.get(&m.column) else { continue };
                let row = rep.row(y).expect("threshold row exists");
                if !row.extreme {
                    non_extreme.push(m.column.clone());
                }
                cols.push(m.column.clone());
                idx.push(j);
                thresholds.push(y);
                x0.push(row.p0);
            }
            let mut report = ScenarioReport {
                name: sc.name.clone(),
                columns: cols,
                thresholds,
                x0: x0.clone(),
                non_extreme,
                status: ScenarioStatus::ExcludedNonExtreme,
                estimate: None,
                percent: None,
            };
            if !report.non_extreme.is_empty() && !config.include_non_extreme {
                return Ok(report);
            }
            let run = || -> Result<ExceedanceEstimate> {
                let target = CopulaTarget::new(x0, config.level, config.p_min, config.grid_size, config.ci_method)?;
                estimate_exceedance(&pseudo.select_columns(&idx), &target)
            };
            let est = run().map_err(|e| match e {
                Error::DegenerateCoordinate { index } => Error::Parameter(format!(
                    "p0 of column '{}' is 1; drop that margin from the scenario",
                    report.columns[index]
                )),
                other => other,
            });
            let est = est.map_err(|e| e.context(format!("scenario '{}'", sc.name)))?;
            let percent = PercentRow::from_estimate(&est);
            percent.verify_identity(4).map_err(|e| e.context(format!("scenario '{}'", sc.name)))?;
            report.status = ScenarioStatus::Estimated;
            report.estimate = Some(est);
            report.percent = Some(percent);
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CaseStudyReport {
        dataset: DatasetSummary {
            columns: dataset.columns.clone(),
            n: dataset.n(),
            dropped_rows: dataset.dropped_rows,
            season: dataset.season.clone(),
        },
        level: config.level,
        p_min: config.p_min,
        grid_size: config.grid_size,
        seed: config.seed,
        ci_method: config.ci_method,
        margins,
        scenarios,
    })
}
