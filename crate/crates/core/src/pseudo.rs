//! Copula-scale samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Exact marginal transform of simulated data.
    Simulated,
    /// Column ranks divided by `n + 1`.
    RankTransform,
}

/// An `n x d` matrix of observations strictly inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSample {
    data: Matrix,
    provenance: Provenance,
    exact_gpc: bool,
}

impl PseudoSample {
    /// Wraps copula-scale data; every entry must lie in `(0, 1)`.
    pub fn new(data: Matrix, provenance: Provenance, exact_gpc: bool) -> Result<Self> {
        if let Some(v) = data.as_slice().iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Domain(format!("copula-scale value {v} outside (0, 1)")));
        }
        Ok(Self { data, provenance, exact_gpc })
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// True when the sample comes from an exact GPC (bounded generator).
    pub fn exact_gpc(&self) -> bool {
        self.exact_gpc
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn select_columns(&self, idx: &[usize]) -> PseudoSample {
        PseudoSample { data: self.data.select_columns(idx), provenance: self.provenance, exact_gpc: self.exact_gpc }
    }
}

/// Ranks `1..=n` with ties given their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Empirical-copula transform: column ranks divided by `n + 1`.
pub fn to_pseudo_sample(raw: &Matrix) -> Result<PseudoSample> {
    let n = raw.nrows();
    if n < 2 {
        return Err(Error::Data(format!("at least 2 rows required, got {n}")));
    }
    if raw.as_slice().iter().any(|v| v.is_nan()) {
        return Err(Error::Data("missing values must be dropped before the rank transform".into()));
    }
    let mut out = Matrix::zeros(n, raw.ncols());
    let denom = (n + 1) as f64;
    for j in 0..raw.ncols() {
        for (i, r) in average_ranks(&raw.column(j)).into_iter().enumerate() {
            out.set(i, j, r / denom);
        }
    }
    PseudoSample::new(out, Provenance::RankTransform, false)
}
