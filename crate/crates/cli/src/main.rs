//! `gpcopula` command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use gpcopula::dnorm::{DNormHandle, GeneratorSpec, McConfig, MAX_INCLUSION_EXCLUSION_DIM};
use gpcopula::exceedance::{estimate_exceedance, write_scan_csv, CopulaTarget, DEFAULT_GRID_SIZE, DEFAULT_LEVEL, DEFAULT_P_MIN};
use gpcopula::gpd::{fit_margin, mean_excess_table, parameter_stability_table, threshold_grid};
use gpcopula::pipeline::{emit_diagnostics, ingest, run_case_study, Aggregation, IngestOptions, ScenarioConfig, Season};
use gpcopula::pseudo::to_pseudo_sample;
use gpcopula::simulate::{
    delta_neighborhood_diagnostic, simulate_copula_scale, simulate, write_sample_csv, GpdSampleConfig, Margins,
    SimulationRecord,
};
use gpcopula::stat_tests::CiMethod;

#[derive(Parser, Debug)]
#[command(name = "gpcopula", version, about = "Generalized Pareto copulas, D-norms and joint exceedance estimation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// RNG seed [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Confidence level [default: 0.95]
    #[arg(long, global = true)]
    level: Option<f64>,
    /// p-value acceptance floor for t0 [default: 0.5]
    #[arg(long, global = true)]
    p_min: Option<f64>,
    /// Number of t grid points [default: 200]
    #[arg(long, global = true)]
    grid_size: Option<usize>,
    /// clopper-pearson or agresti-coull [default: clopper-pearson]
    #[arg(long, global = true)]
    ci_method: Option<CiMethod>,
}

#[derive(Args, Debug, Clone)]
struct GeneratorArgs {
    /// constant-one, permuted-spike, logistic or husler-reiss
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Logistic parameter p > 1
    #[arg(long)]
    p: Option<f64>,
    /// Hüsler-Reiss covariance, rows separated by ';' (e.g. "1,0.5;0.5,1")
    #[arg(long)]
    sigma: Option<String>,
    /// Generator spec as a JSON file, e.g. {"family":"logistic","p":2,"dim":3}
    #[arg(long, conflicts_with_all = ["family", "dim", "p", "sigma"])]
    spec: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a multivariate GPD sample to CSV (plus a JSON sidecar)
    Simulate {
        #[command(flatten)]
        generator: GeneratorArgs,
        /// simple-pareto, standard, gumbel, copula-scale or alpha:a1,a2,...
        #[arg(long, default_value = "simple-pareto")]
        margins: String,
        #[arg(short, long)]
        n: usize,
        /// Almost-sure bound of the generator (copula-scale output)
        #[arg(long)]
        generator_bound: Option<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Evaluate a D-norm and its dual at a point
    Dnorm {
        #[command(flatten)]
        generator: GeneratorArgs,
        /// Comma-separated point
        #[arg(long)]
        x: String,
        /// Monte Carlo sample size
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Fit a GPD above a threshold and piece together p0 values
    FitMargin {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long)]
        column: String,
        /// GPD threshold s
        #[arg(long)]
        threshold: f64,
        /// Levels y >= s for p0 = P(X <= y); repeat or separate by commas
        #[arg(long, value_delimiter = ',')]
        target: Vec<f64>,
        #[arg(long, default_value = ",")]
        delimiter: char,
        /// Parameter-stability table over candidate thresholds (CSV)
        #[arg(long)]
        stability_out: Option<PathBuf>,
        /// Mean-excess table over candidate thresholds (CSV)
        #[arg(long)]
        mean_excess_out: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        candidates: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Estimate P(U >= x0) on the empirical copula of a CSV file
    EstimateJoint {
        #[arg(short, long)]
        input: PathBuf,
        /// Columns to use, comma-separated [default: all]
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<String>>,
        /// Copula-scale critical point, one component per column
        #[arg(long)]
        x0: String,
        #[arg(long, default_value = ",")]
        delimiter: char,
        #[arg(long)]
        scan_out: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Margin fits and scenario estimates from a JSON config
    CaseStudy {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        date_column: Option<String>,
        /// summer, winter or months:m1,m2,...
        #[arg(long)]
        season: Option<Season>,
        /// none, daily-max or daily-mean
        #[arg(long)]
        aggregate: Option<Aggregation>,
        #[arg(long)]
        delimiter: Option<char>,
    },
    /// Tail diagnostic x * (1 - F(x)) of Z/U per margin
    Diagnose {
        #[command(flatten)]
        generator: GeneratorArgs,
        #[arg(long, default_value = "5,20,50")]
        x_grid: String,
        #[arg(short, long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("'{v}' is not a number")))
        .collect()
}

fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';').map(parse_list).collect()
}

fn generator_spec(g: &GeneratorArgs) -> Result<GeneratorSpec> {
    if let Some(path) = &g.spec {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(serde_json::from_str(&text)?);
    }
    let family = g.family.as_deref().ok_or_else(|| anyhow!("--family or --spec is required"))?;
    let dim = || g.dim.ok_or_else(|| anyhow!("--dim is required for family '{family}'"));
    Ok(match family {
        "constant-one" => GeneratorSpec::constant_one(dim()?)?,
        "permuted-spike" => GeneratorSpec::permuted_spike(dim()?)?,
        "logistic" => GeneratorSpec::logistic(g.p.ok_or_else(|| anyhow!("--p is required"))?, dim()?)?,
        "husler-reiss" => {
            let sigma = parse_matrix(g.sigma.as_deref().ok_or_else(|| anyhow!("--sigma is required"))?)?;
            if let Some(d) = g.dim {
                if d != sigma.len() {
                    bail!("--dim {d} does not match the {}x{} covariance", sigma.len(), sigma.len());
                }
            }
            GeneratorSpec::husler_reiss(sigma)?
        }
        other => bail!("unknown family '{other}'"),
    })
}

fn parse_margins(s: &str) -> Result<Margins> {
    Ok(match s {
        "simple-pareto" => Margins::SimplePareto,
        "standard" => Margins::Standard,
        "gumbel" => Margins::Gumbel,
        "copula-scale" => Margins::CopulaScale,
        other => match other.strip_prefix("alpha:") {
            Some(list) => Margins::GeneralAlpha(parse_list(list)?),
            None => bail!("unknown margins '{other}'"),
        },
    })
}

/// Pretty JSON to a file, or to stdout.
fn emit_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn warn(message: &str) {
    eprintln!("warning: {message}");
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let seed = g.seed.unwrap_or(0);
    match cli.command {
        Command::Simulate { generator, margins, n, generator_bound, out } => {
            let spec = generator_spec(&generator)?;
            let config = GpdSampleConfig { spec, margins: parse_margins(&margins)?, n, seed, generator_bound };
            let (data, provenance, exact) = if config.margins == Margins::CopulaScale {
                let p = simulate_copula_scale(&config)?;
                (p.data().clone(), Some(p.provenance()), Some(p.exact_gpc()))
            } else {
                (simulate(&config)?, None, None)
            };
            let file = fs::File::create(&out).with_context(|| format!("writing {}", out.display()))?;
            write_sample_csv(&data, std::io::BufWriter::new(file))?;
            let sidecar = PathBuf::from(format!("{}.json", out.display()));
            let record =
                SimulationRecord { config, rows: data.nrows(), cols: data.ncols(), provenance, exact_gpc: exact };
            emit_json(&serde_json::to_value(&record)?, Some(&sidecar))?;
            if exact == Some(false) {
                warn("generator is not known to be bounded; copula-scale output uses ranks and is not an exact GPC");
            }
            emit_json(&json!({"rows": data.nrows(), "cols": data.ncols(), "csv": out, "sidecar": sidecar}), None)
        }
        Command::Dnorm { generator, x, samples } => {
            let spec = generator_spec(&generator)?;
            let x = parse_list(&x)?;
            let h = DNormHandle::new(spec, McConfig { sample_count: samples, rng_seed: seed })?;
            let norm_mc = h.eval_dnorm_mc(&x)?;
            let dual_mc = h.eval_dual_mc(&x)?;
            let ie = if h.dim() <= MAX_INCLUSION_EXCLUSION_DIM { Some(h.dual_via_inclusion_exclusion(&x)?) } else { None };
            emit_json(
                &json!({
                    "spec": h.spec(),
                    "x": x,
                    "closed_form": h.closed_form().is_some(),
                    "norm": h.eval_dnorm(&x)?,
                    "norm_mc": {"mean": norm_mc.mean, "se": norm_mc.se},
                    "dual": h.eval_dual(&x)?,
                    "dual_mc": {"mean": dual_mc.mean, "se": dual_mc.se},
                    "dual_inclusion_exclusion": ie,
                }),
                None,
            )
        }
        Command::FitMargin { input, column, threshold, target, delimiter, stability_out, mean_excess_out, candidates, out } => {
            let opts = IngestOptions { delimiter, columns: Some(vec![column.clone()]), ..Default::default() };
            let ds = ingest(&input, &opts)?;
            let data = ds.column(&column)?;
            let targets = if target.is_empty() { vec![threshold] } else { target };
            let base = fit_margin(&column, &data, threshold, threshold)?;
            let rows = targets.iter().map(|&y| base.with_target(y)).collect::<gpcopula::Result<Vec<_>>>()?;
            let grid = threshold_grid(&data, candidates);
            if let Some(path) = stability_out {
                let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
                for r in parameter_stability_table(&data, &grid) {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            if let Some(path) = mean_excess_out {
                let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
                for r in mean_excess_table(&data, &grid) {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            emit_json(&json!({"dropped_rows": ds.dropped_rows, "rows": rows}), out.as_deref())
        }
        Command::EstimateJoint { input, columns, x0, delimiter, scan_out, out } => {
            let ds = ingest(&input, &IngestOptions { delimiter, columns, ..Default::default() })?;
            let x0 = parse_list(&x0)?;
            if x0.len() != ds.columns.len() {
                bail!("x0 has {} components but {} columns were selected", x0.len(), ds.columns.len());
            }
            let target = CopulaTarget::new(
                x0,
                g.level.unwrap_or(DEFAULT_LEVEL),
                g.p_min.unwrap_or(DEFAULT_P_MIN),
                g.grid_size.unwrap_or(DEFAULT_GRID_SIZE),
                g.ci_method.unwrap_or_default(),
            )?;
            let est = estimate_exceedance(&to_pseudo_sample(&ds.data)?, &target)?;
            if est.fallback_used {
                warn("no grid point reached p_min; t0 maximizes min(p_ks, p_cvm) instead");
            }
            if let Some(path) = scan_out {
                let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
                write_scan_csv(&est.scan, std::io::BufWriter::new(file))?;
            }
            let sym = est.symmetrized.as_ref();
            emit_json(
                &json!({
                    "columns": ds.columns,
                    "n": est.n,
                    "dropped_rows": ds.dropped_rows,
                    "x0": est.x0,
                    "t0": est.t0,
                    "m_at_t0": est.m_at_t0,
                    "joint_count": est.joint_count,
                    "p_hat": est.p_hat,
                    "q_hat": est.q_hat,
                    "ci_lower": est.ci_lower,
                    "ci_upper": est.ci_upper,
                    "ci_method": est.ci_raw.method,
                    "level": est.ci_raw.level,
                    "fallback_used": est.fallback_used,
                    "symmetrized_x0": sym.map(|s| s.x0.clone()),
                }),
                out.as_deref(),
            )
        }
        Command::CaseStudy { input, config, out_dir, date_column, season, aggregate, delimiter } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = ScenarioConfig::from_json(&text)?;
            if let Some(v) = g.seed {
                cfg.seed = v;
            }
            if let Some(v) = g.level {
                cfg.level = v;
            }
            if let Some(v) = g.p_min {
                cfg.p_min = v;
            }
            if let Some(v) = g.grid_size {
                cfg.grid_size = v;
            }
            if let Some(v) = g.ci_method {
                cfg.ci_method = v;
            }
            let mut opts = cfg.ingest.clone();
            if date_column.is_some() {
                opts.date_column = date_column;
            }
            if season.is_some() {
                opts.season = season;
            }
            if let Some(a) = aggregate {
                opts.aggregation = a;
            }
            if let Some(d) = delimiter {
                opts.delimiter = d;
            }
            if opts.columns.is_none() {
                opts.columns = Some(cfg.margins.iter().map(|m| m.column.clone()).collect());
            }
            let ds = ingest(&input, &opts)?;
            let report = run_case_study(&ds, &cfg)?;
            emit_diagnostics(&report, &out_dir)?;
            print_summary(&report);
            Ok(())
        }
        Command::Diagnose { generator, x_grid, n, out } => {
            let spec = generator_spec(&generator)?;
            let rows = delta_neighborhood_diagnostic(&spec, &parse_list(&x_grid)?, n, seed)?;
            emit_json(&json!({"spec": spec, "n": n, "seed": seed, "rows": rows}), out.as_deref())
        }
    }
}

/// Percent-rounded tables for people; the files carry full precision.
fn print_summary(report: &gpcopula::pipeline::CaseStudyReport) {
    println!("n = {} (dropped {})", report.dataset.n, report.dataset.dropped_rows);
    println!("{:<12} {:>9} {:>9} {:>6} {:>9} {:>9} {:>8} {:>9}", "margin", "threshold", "s", "NE", "EEP%", "sigma", "xi", "p0%");
    for m in &report.margins {
        for r in &m.thresholds {
            println!(
                "{:<12} {:>9} {:>9} {:>6} {:>9.3} {:>9.3} {:>8.3} {:>9.3}{}",
                m.column,
                r.threshold,
                m.fit.threshold_s,
                m.fit.n_exceed,
                100.0 * m.fit.eep,
                m.fit.sigma,
                m.fit.xi,
                100.0 * r.p0,
                if r.extreme { "" } else { "  (not extreme)" }
            );
        }
    }
    println!("{:<16} {:>9} {:>9} {:>9} {:>9} {:>9}", "scenario", "t0%", "p_hat%", "q_hat%", "LB%", "UB%");
    for s in &report.scenarios {
        match &s.percent {
            Some(p) => {
                let r = p.rounded(4);
                println!(
                    "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                    s.name, r.t0, r.p_hat, r.q_hat, r.ci_lower, r.ci_upper
                );
                if s.estimate.as_ref().is_some_and(|e| e.fallback_used) {
                    warn(&format!("scenario '{}': no grid point reached p_min; t0 from the maximal p-value", s.name));
                }
            }
            None => println!("{:<16} excluded: not extreme in {}", s.name, s.non_extreme.join(", ")),
        }
    }
}

fn error_json(kind: &str, message: &str) -> String {
    json!({"error": {"kind": kind, "message": message}}).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_json("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.chain().find_map(|c| c.downcast_ref::<gpcopula::Error>()).map_or("argument", |e| e.kind());
            eprintln!("{}", error_json(kind, &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
