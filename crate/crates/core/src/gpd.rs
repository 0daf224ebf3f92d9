//! Univariate generalized Pareto distributions.
//!
//! Two parametrizations are provided: the standard family `H_α` and the
//! threshold-excess family with scale `σ` and shape `ξ`, whose survival
//! function is `(1 + ξ z/σ)^(-1/ξ)` for an excess `z >= 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{nelder_mead, NelderMeadOptions};

/// Below this `|ξ|` the exponential limit is used.
pub const XI_ZERO: f64 = 1e-6;

/// Minimum number of excesses accepted by [`fit_gpd_mle`].
pub const MIN_EXCESSES: usize = 10;

/// Shape parameter `α` of the standard GPD `H_α`.
///
/// `α > 0`: `1 - (-x)^α` on `[-1, 0]`; `α < 0`: `1 - x^α` on `[1, ∞)`;
/// `α = 0`: `1 - exp(-x)` on `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdShapeAlpha(pub f64);

impl GpdShapeAlpha {
    pub fn cdf(self, x: f64) -> f64 {
        gpd_cdf_alpha(self.0, x)
    }

    pub fn quantile(self, u: f64) -> Result<f64> {
        gpd_quantile_alpha(self.0, u)
    }
}

/// `H_α(x)`, clamped to 0 below and 1 above the support.
pub fn gpd_cdf_alpha(alpha: f64, x: f64) -> f64 {
    if alpha > 0.0 {
        if x <= -1.0 {
            0.0
        } else if x >= 0.0 {
            1.0
        } else {
            -(alpha * (-x).ln()).exp_m1()
        }
    } else if alpha < 0.0 {
        if x <= 1.0 {
            0.0
        } else {
            -(alpha * x.ln()).exp_m1()
        }
    } else if x <= 0.0 {
        0.0
    } else {
        -(-x).exp_m1()
    }
}

/// `H_α^{-1}(u)` for `u` in `(0, 1)`.
pub fn gpd_quantile_alpha(alpha: f64, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("quantile argument must lie in (0, 1), got {u}")));
    }
    let log_surv = (-u).ln_1p();
    Ok(if alpha > 0.0 {
        -(log_surv / alpha).exp()
    } else if alpha < 0.0 {
        (log_surv / alpha).exp()
    } else {
        -log_surv
    })
}

/// Survival of an excess `z >= 0` under GPD(σ, ξ); zero beyond the upper endpoint.
pub fn gpd_survival(z: f64, sigma: f64, xi: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    if xi.abs() < XI_ZERO {
        return (-z / sigma).exp();
    }
    let w = 1.0 + xi * z / sigma;
    if w <= 0.0 {
        0.0
    } else {
        (-(xi * z / sigma).ln_1p() / xi).exp()
    }
}

/// Excess quantile of GPD(σ, ξ) at probability `u` in `(0, 1)`.
pub fn gpd_excess_quantile(u: f64, sigma: f64, xi: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("quantile argument must lie in (0, 1), got {u}")));
    }
    let log_surv = (-u).ln_1p();
    Ok(if xi.abs() < XI_ZERO { -sigma * log_surv } else { sigma * (-xi * log_surv).exp_m1() / xi })
}

/// Log-likelihood of excesses under GPD(σ, ξ); `-inf` outside the feasible region.
pub fn gpd_log_likelihood(excesses: &[f64], sigma: f64, xi: f64) -> f64 {
    if !(sigma > 0.0) || !xi.is_finite() {
        return f64::NEG_INFINITY;
    }
    let k = excesses.len() as f64;
    if xi.abs() < XI_ZERO {
        return -k * sigma.ln() - excesses.iter().sum::<f64>() / sigma;
    }
    let mut acc = 0.0;
    for &z in excesses {
        let a = xi * z / sigma;
        if a <= -1.0 {
            return f64::NEG_INFINITY;
        }
        acc += a.ln_1p();
    }
    -k * sigma.ln() - (1.0 + 1.0 / xi) * acc
}

/// Maximum-likelihood estimate of GPD(σ, ξ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub sigma: f64,
    pub xi: f64,
    /// Asymptotic covariance of (σ̂, ξ̂); present only when ξ̂ > -1/2.
    pub covariance: Option<[[f64; 2]; 2]>,
    pub log_likelihood: f64,
    pub n_excess: usize,
    pub iterations: usize,
}

impl GpdFit {
    pub fn se_sigma(&self) -> Option<f64> {
        self.covariance.map(|c| c[0][0].sqrt())
    }

    pub fn se_xi(&self) -> Option<f64> {
        self.covariance.map(|c| c[1][1].sqrt())
    }
}

/// Inverse expected information of GPD(σ, ξ) for `k` excesses.
pub fn gpd_asymptotic_covariance(sigma: f64, xi: f64, k: usize) -> Option<[[f64; 2]; 2]> {
    if xi <= -0.5 || k == 0 {
        return None;
    }
    let c = (1.0 + xi) / k as f64;
    Some([[c * 2.0 * sigma * sigma, c * sigma], [c * sigma, c * (1.0 + xi)]])
}

fn moment_start(excesses: &[f64]) -> (f64, f64) {
    let k = excesses.len() as f64;
    let mean = excesses.iter().sum::<f64>() / k;
    let var = excesses.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (k - 1.0);
    if !(var > 0.0) {
        return (mean, 0.0);
    }
    let ratio = mean * mean / var;
    let xi = (0.5 * (1.0 - ratio)).clamp(-0.45, 0.45);
    let sigma = 0.5 * mean * (ratio + 1.0);
    (sigma, xi)
}

/// Fits GPD(σ, ξ) to positive excesses by Nelder-Mead on `(ln σ, ξ)`.
///
/// The search is confined to `ξ > -1`, where the likelihood is bounded.
/// An estimate that ends on that boundary is reported as a convergence error.
pub fn fit_gpd_mle(excesses: &[f64], init: Option<(f64, f64)>) -> Result<GpdFit> {
    if excesses.len() < MIN_EXCESSES {
        return Err(Error::Data(format!(
            "at least {MIN_EXCESSES} excesses required, got {}",
            excesses.len()
        )));
    }
    if let Some(z) = excesses.iter().find(|z| !(z.is_finite() && **z > 0.0)) {
        return Err(Error::Data(format!("excesses must be finite and positive, got {z}")));
    }
    let objective = |theta: &[f64]| {
        let xi = theta[1];
        if xi <= -1.0 {
            return f64::INFINITY;
        }
        -gpd_log_likelihood(excesses, theta[0].exp(), xi)
    };
    let mut start = init.unwrap_or_else(|| moment_start(excesses));
    if !(start.0 > 0.0) || !objective(&[start.0.ln(), start.1]).is_finite() {
        start = moment_start(excesses);
        if !objective(&[start.0.ln(), start.1]).is_finite() {
            start = (excesses.iter().sum::<f64>() / excesses.len() as f64, 0.0);
        }
    }
    let budget = 2000;
    let first = nelder_mead(
        objective,
        &[start.0.ln(), start.1],
        NelderMeadOptions { f_tol: 1e-8, max_iter: budget, step: 0.1 },
    );
    // Restart from the first optimum to guard against a collapsed simplex.
    let second = nelder_mead(
        objective,
        &first.x,
        NelderMeadOptions { f_tol: 1e-8, max_iter: budget - first.iterations, step: 0.01 },
    );
    let best = if second.f <= first.f { &second } else { &first };
    let sigma = best.x[0].exp();
    let xi = best.x[1];
    if !(first.converged && second.converged) || !best.f.is_finite() {
        return Err(Error::Convergence {
            message: format!("no convergence within {budget} iterations"),
            sigma,
            xi,
        });
    }
    if xi < -1.0 + 1e-3 {
        return Err(Error::Convergence { message: "shape estimate on the xi = -1 boundary".into(), sigma, xi });
    }
    Ok(GpdFit {
        sigma,
        xi,
        covariance: gpd_asymptotic_covariance(sigma, xi, excesses.len()),
        log_likelihood: -best.f,
        n_excess: excesses.len(),
        iterations: first.iterations + second.iterations,
    })
}

/// Empirical exceedance of a threshold `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalExceedance {
    pub n_total: usize,
    pub n_exceed: usize,
    pub eep: f64,
    pub se_eep: f64,
}

/// Counts `x > s`; `se_eep` is the binomial standard error.
pub fn empirical_exceedance(data: &[f64], s: f64) -> Result<EmpiricalExceedance> {
    if data.is_empty() {
        return Err(Error::Data("empty data".into()));
    }
    let n = data.len();
    let k = data.iter().filter(|&&x| x > s).count();
    let eep = k as f64 / n as f64;
    Ok(EmpiricalExceedance { n_total: n, n_exceed: k, eep, se_eep: (eep * (1.0 - eep) / n as f64).sqrt() })
}

/// Inputs of the piecing-together estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecingInputs {
    pub threshold: f64,
    pub eep: f64,
    pub se_eep: f64,
    pub sigma: f64,
    pub xi: f64,
    pub covariance: Option<[[f64; 2]; 2]>,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecingResult {
    pub p0: f64,
    /// Delta-method standard error; absent without a parameter covariance.
    pub se_p0: Option<f64>,
    /// Gradient of p0 with respect to (eep, σ, ξ).
    pub gradient: [f64; 3],
}

/// `p0 = 1 - eep * S(y - s)` with the delta-method standard error.
pub fn piecing_together_p0(inputs: &PiecingInputs) -> Result<PiecingResult> {
    let PiecingInputs { threshold, eep, se_eep, sigma, xi, covariance, target } = *inputs;
    if !(target >= threshold) {
        return Err(Error::Domain(format!("target {target} lies below the GPD threshold {threshold}")));
    }
    if !(sigma > 0.0) || !(0.0..=1.0).contains(&eep) {
        return Err(Error::Parameter("sigma must be positive and eep in [0, 1]".into()));
    }
    let z = target - threshold;
    let surv = gpd_survival(z, sigma, xi);
    let p0 = 1.0 - eep * surv;

    let (d_sigma, d_xi) = if surv == 0.0 || z == 0.0 {
        (0.0, 0.0)
    } else if xi.abs() < XI_ZERO {
        (z / (sigma * sigma), z * z / (2.0 * sigma * sigma))
    } else {
        let w = 1.0 + xi * z / sigma;
        (z / (sigma * sigma * w), (xi * z / sigma).ln_1p() / (xi * xi) - z / (xi * sigma * w))
    };
    // d log S -> d p0
    let gradient = [-surv, -eep * surv * d_sigma, -eep * surv * d_xi];
    let se_p0 = covariance.map(|c| {
        let g = [gradient[1], gradient[2]];
        let quad = g[0] * g[0] * c[0][0] + 2.0 * g[0] * g[1] * c[0][1] + g[1] * g[1] * c[1][1];
        (gradient[0] * gradient[0] * se_eep * se_eep + quad).max(0.0).sqrt()
    });
    Ok(PiecingResult { p0, se_p0, gradient })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginStandardErrors {
    #[serde(rename = "EEP")]
    pub eep: f64,
    pub sigma: Option<f64>,
    pub xi: Option<f64>,
    pub p0: Option<f64>,
}

/// A fitted margin and its piecing-together probability for one target level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpdMarginFit {
    #[serde(rename = "pollutant")]
    pub label: String,
    #[serde(rename = "threshold")]
    pub target_y: f64,
    #[serde(rename = "s")]
    pub threshold_s: f64,
    #[serde(rename = "n")]
    pub n_total: usize,
    #[serde(rename = "NE")]
    pub n_exceed: usize,
    #[serde(rename = "EEP")]
    pub eep: f64,
    pub sigma: f64,
    pub xi: f64,
    pub p0: f64,
    pub covariance: Option<[[f64; 2]; 2]>,
    pub se: MarginStandardErrors,
}

impl GpdMarginFit {
    /// Same fit, re-evaluated at another target level.
    pub fn with_target(&self, target_y: f64) -> Result<Self> {
        let r = piecing_together_p0(&PiecingInputs {
            threshold: self.threshold_s,
            eep: self.eep,
            se_eep: self.se.eep,
            sigma: self.sigma,
            xi: self.xi,
            covariance: self.covariance,
            target: target_y,
        })?;
        let mut out = self.clone();
        out.target_y = target_y;
        out.p0 = r.p0;
        out.se.p0 = r.se_p0;
        Ok(out)
    }
}

/// Empirical exceedance of `s`, GPD fit of the excesses and p0 at `target_y`.
pub fn fit_margin(label: &str, data: &[f64], s: f64, target_y: f64) -> Result<GpdMarginFit> {
    let emp = empirical_exceedance(data, s)?;
    let excesses: Vec<f64> = data.iter().filter(|&&x| x > s).map(|x| x - s).collect();
    let fit = fit_gpd_mle(&excesses, None)?;
    let base = GpdMarginFit {
        label: label.to_string(),
        target_y,
        threshold_s: s,
        n_total: emp.n_total,
        n_exceed: emp.n_exceed,
        eep: emp.eep,
        sigma: fit.sigma,
        xi: fit.xi,
        p0: f64::NAN,
        covariance: fit.covariance,
        se: MarginStandardErrors { eep: emp.se_eep, sigma: fit.se_sigma(), xi: fit.se_xi(), p0: None },
    };
    base.with_target(target_y)
}

/// Row of the mean-excess table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanExcessRow {
    pub threshold: f64,
    pub n_exceed: usize,
    pub mean_excess: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Row of the parameter-stability table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub threshold: f64,
    pub n_exceed: usize,
    pub sigma: Option<f64>,
    pub xi: Option<f64>,
    /// `σ - ξ s`, constant in `s` above a valid threshold.
    pub modified_scale: Option<f64>,
    pub se_xi: Option<f64>,
}

/// `count` evenly spaced candidate thresholds from the median up to the
/// level that still leaves [`MIN_EXCESSES`] exceedances.
pub fn threshold_grid(data: &[f64], count: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = data.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() <= MIN_EXCESSES || count == 0 {
        return Vec::new();
    }
    let lo = sorted[sorted.len() / 2];
    let hi = sorted[sorted.len() - MIN_EXCESSES - 1];
    if count == 1 || hi <= lo {
        return vec![lo];
    }
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

/// Mean excess `E(X - u | X > u)` with a normal 95% interval, per threshold.
pub fn mean_excess_table(data: &[f64], thresholds: &[f64]) -> Vec<MeanExcessRow> {
    thresholds
        .iter()
        .filter_map(|&u| {
            let ex: Vec<f64> = data.iter().filter(|&&x| x > u).map(|x| x - u).collect();
            if ex.len() < 2 {
                return None;
            }
            let k = ex.len() as f64;
            let mean = ex.iter().sum::<f64>() / k;
            let sd = (ex.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
            let half = 1.959_963_984_540_054 * sd / k.sqrt();
            Some(MeanExcessRow { threshold: u, n_exceed: ex.len(), mean_excess: mean, ci_lo: mean - half, ci_hi: mean + half })
        })
        .collect()
}

/// GPD fits over a range of thresholds; failed fits leave empty cells.
pub fn parameter_stability_table(data: &[f64], thresholds: &[f64]) -> Vec<StabilityRow> {
    thresholds
        .iter()
        .map(|&u| {
            let ex: Vec<f64> = data.iter().filter(|&&x| x > u).map(|x| x - u).collect();
            match fit_gpd_mle(&ex, None) {
                Ok(fit) => StabilityRow {
                    threshold: u,
                    n_exceed: ex.len(),
                    sigma: Some(fit.sigma),
                    xi: Some(fit.xi),
                    modified_scale: Some(fit.sigma - fit.xi * u),
                    se_xi: fit.se_xi(),
                },
                Err(_) => StabilityRow {
                    threshold: u,
                    n_exceed: ex.len(),
                    sigma: None,
                    xi: None,
                    modified_scale: None,
                    se_xi: None,
                },
            }
        })
        .collect()
}
