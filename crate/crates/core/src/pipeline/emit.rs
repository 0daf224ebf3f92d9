//! Writes a case-study report as files:
//!
//! ```text
//! out_dir/summary.json
//! out_dir/margins/<column>.json
//! out_dir/scans/<scenario>.csv            (+ <scenario>.symmetrized.csv)
//! ```
//!
//! Output depends only on the report, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exceedance::write_scan_csv;
use crate::pipeline::case_study::{CaseStudyReport, DatasetSummary, PercentRow, ScenarioStatus, ThresholdRow};
use crate::stat_tests::CiMethod;

pub const SUMMARY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub level: f64,
    pub p_min: f64,
    pub grid_size: usize,
    pub seed: u64,
    pub ci_method: CiMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSummary {
    pub column: String,
    pub s: f64,
    pub n: usize,
    pub n_exceed: usize,
    pub eep: f64,
    pub sigma: f64,
    pub xi: f64,
    pub se_eep: f64,
    pub se_sigma: Option<f64>,
    pub se_xi: Option<f64>,
    pub thresholds: Vec<ThresholdRow>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub status: ScenarioStatus,
    pub columns: Vec<String>,
    pub thresholds: Vec<f64>,
    pub x0: Vec<f64>,
    pub non_extreme: Vec<String>,
    pub t0: Option<f64>,
    pub m_at_t0: Option<usize>,
    pub joint_count: Option<usize>,
    pub p_hat: Option<f64>,
    pub q_hat: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub fallback_used: Option<bool>,
    pub symmetrized_x0: Option<Vec<f64>>,
    pub percent: Option<PercentRow>,
    pub scan_file: Option<String>,
    pub symmetrized_scan_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format_version: u32,
    pub dataset: DatasetSummary,
    pub settings: Settings,
    pub margins: Vec<MarginSummary>,
    pub scenarios: Vec<ScenarioSummary>,
}

/// File-name-safe version of a label.
pub fn slug(label: &str) -> String {
    let s: String =
        label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::from(e).context(format!("writing {}", path.display())))
}

fn write_scan(path: &Path, scan: &[crate::exceedance::ScanRow]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::from(e).context(format!("writing {}", path.display())))?;
    write_scan_csv(scan, std::io::BufWriter::new(file))
}

/// Builds the summary without touching the filesystem.
pub fn summarize(report: &CaseStudyReport) -> Summary {
    let margins = report
        .margins
        .iter()
        .map(|m| MarginSummary {
            column: m.column.clone(),
            s: m.fit.threshold_s,
            n: m.fit.n_total,
            n_exceed: m.fit.n_exceed,
            eep: m.fit.eep,
            sigma: m.fit.sigma,
            xi: m.fit.xi,
            se_eep: m.fit.se.eep,
            se_sigma: m.fit.se.sigma,
            se_xi: m.fit.se.xi,
            thresholds: m.thresholds.clone(),
            file: format!("margins/{}.json", slug(&m.column)),
        })
        .collect();
    let scenarios = report
        .scenarios
        .iter()
        .map(|s| {
            let est = s.estimate.as_ref();
            let sym = est.and_then(|e| e.symmetrized.as_ref());
            ScenarioSummary {
                name: s.name.clone(),
                status: s.status,
                columns: s.columns.clone(),
                thresholds: s.thresholds.clone(),
                x0: s.x0.clone(),
                non_extreme: s.non_extreme.clone(),
                t0: est.map(|e| e.t0),
                m_at_t0: est.map(|e| e.m_at_t0),
                joint_count: est.map(|e| e.joint_count),
                p_hat: est.map(|e| e.p_hat),
                q_hat: est.map(|e| e.q_hat),
                ci_lower: est.map(|e| e.ci_lower),
                ci_upper: est.map(|e| e.ci_upper),
                fallback_used: est.map(|e| e.fallback_used),
                symmetrized_x0: sym.map(|c| c.x0.clone()),
                percent: s.percent,
                scan_file: est.map(|_| format!("scans/{}.csv", slug(&s.name))),
                symmetrized_scan_file: sym.map(|_| format!("scans/{}.symmetrized.csv", slug(&s.name))),
            }
        })
        .collect();
    Summary {
        format_version: SUMMARY_FORMAT_VERSION,
        dataset: report.dataset.clone(),
        settings: Settings {
            level: report.level,
            p_min: report.p_min,
            grid_size: report.grid_size,
            seed: report.seed,
            ci_method: report.ci_method,
        },
        margins,
        scenarios,
    }
}

/// Writes the report below `out_dir` and returns the written paths.
pub fn emit_diagnostics(report: &CaseStudyReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out = out_dir.as_ref();
    let mkdir = |p: PathBuf| {
        fs::create_dir_all(&p).map_err(|e| Error::from(e).context(format!("creating {}", p.display())))
    };
    mkdir(out.join("margins"))?;
    mkdir(out.join("scans"))?;

    let mut slugs: Vec<String> = report.scenarios.iter().map(|s| slug(&s.name)).collect();
    slugs.sort();
    if slugs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Parameter("scenario names collide after conversion to file names".into()));
    }

    let summary = summarize(report);
    let mut written = Vec::new();
    for (m, ms) in report.margins.iter().zip(&summary.margins) {
        let path = out.join(&ms.file);
        write_json(&path, m)?;
        written.push(path);
    }
    for (s, ss) in report.scenarios.iter().zip(&summary.scenarios) {
        let Some(est) = &s.estimate else { continue };
        if let Some(f) = &ss.scan_file {
            let path = out.join(f);
            write_scan(&path, &est.scan)?;
            written.push(path);
        }
        if let (Some(f), Some(sym)) = (&ss.symmetrized_scan_file, &est.symmetrized) {
            let path = out.join(f);
            write_scan(&path, &sym.scan)?;
            written.push(path);
        }
    }
    let path = out.join("summary.json");
    write_json(&path, &summary)?;
    written.push(path);
    Ok(written)
}
