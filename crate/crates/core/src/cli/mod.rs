//! Command-line front end.

pub mod config;
pub mod report;
pub mod series;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimate::{fit_qmle, FitOptions};
use crate::inference::{sandwich, wald_statistic};
use crate::montecarlo::{emit_boxplot_data, run_design, write_csv, McSummary};
use crate::params::{parameter_names, unpack, EstimationMode, ModelOrders, SpecConfig};
use crate::simulate::{simulate_with, Innovations, DEFAULT_BURN_IN};
use crate::stationarity::{
    estimate_lyapunov, spectral_radius_b, DEFAULT_LYAPUNOV_REPLICATIONS, DEFAULT_LYAPUNOV_STEPS,
};
use crate::volatility::{check_identifiability, InitPolicy};

use config::McConfig;
use report::{Diagnostics, FitDocument, Provenance, WindowReport};
use series::{load_series, SeriesFile, SeriesKind};

#[derive(Debug, Parser)]
#[command(name = "apgarch", version, about = "CCC asymmetric power GARCH toolkit")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a path from a spec document.
    Simulate(SimulateArgs),
    /// Fit a model to a CSV series.
    Fit(FitArgs),
    /// Wald test of linear restrictions on a fitted report.
    Wald(WaldArgs),
    /// Estimate the top Lyapunov exponent of a spec.
    Lyapunov(LyapunovArgs),
    /// Run a Monte Carlo experiment.
    Mc(McArgs),
    /// Check the identifiability rank condition of a spec.
    Identifiability(SpecArgs),
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    /// TOML spec document.
    #[arg(long)]
    pub spec: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standardized Student t innovations with this many degrees of freedom.
    #[arg(long)]
    pub student_t: Option<f64>,
    /// Also write the volatilities h_t.
    #[arg(long)]
    pub with_volatility: bool,
    /// Output CSV (stdout when omitted).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Zero,
    Mean,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = SeriesKind::Returns)]
    pub kind: SeriesKind,
    /// The file has no header row; columns are then addressed by 1-based index.
    #[arg(long)]
    pub no_header: bool,
    #[arg(long)]
    pub date_column: Option<String>,
    /// Comma-separated value columns (default: all but the date column).
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    /// Multiplier for log-price differences.
    #[arg(long, default_value_t = 100.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    /// Comma-separated fixed powers; estimated when omitted.
    #[arg(long, value_delimiter = ',')]
    pub delta: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub max_iterations: usize,
    #[arg(long, value_enum, default_value_t = InitArg::Mean)]
    pub init: InitArg,
    /// Also fit this many equal consecutive windows.
    #[arg(long, default_value_t = 1)]
    pub subperiods: usize,
    /// JSON report path.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Print the JSON report instead of the text table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct WaldArgs {
    /// JSON report written by `fit`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub window: usize,
    /// CSV rows holding the entries of C followed by c; `#` starts a comment.
    #[arg(long)]
    pub constraints: PathBuf,
}

#[derive(Debug, Args)]
pub struct LyapunovArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = DEFAULT_LYAPUNOV_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = DEFAULT_LYAPUNOV_REPLICATIONS)]
    pub replications: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// TOML experiment document.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub summary_csv: Option<PathBuf>,
    #[arg(long)]
    pub boxplot_csv: Option<PathBuf>,
    /// Per-replication estimates.
    #[arg(long)]
    pub estimates_csv: Option<PathBuf>,
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_spec(path: &Path) -> Result<(crate::params::ModelSpec, EstimationMode)> {
    SpecConfig::from_toml_str(&read_to_string(path)?)?.to_spec()
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    if let Some(t) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match cli.command {
        Command::Simulate(a) => run_simulate(&a, out),
        Command::Fit(a) => run_fit(&a, out).map(|_| ()),
        Command::Wald(a) => run_wald(&a, out),
        Command::Lyapunov(a) => run_lyapunov(&a, out),
        Command::Mc(a) => run_mc(&a, out).map(|_| ()),
        Command::Identifiability(a) => run_identifiability(&a, out),
    }
}

pub fn run_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let (spec, _) = read_spec(&a.spec)?;
    let innovations = match a.student_t {
        Some(df) => Innovations::StudentT { df },
        None => Innovations::Gaussian,
    };
    let sim = simulate_with(&spec, a.n, a.burn_in, a.seed, innovations)?.output;
    let m = spec.orders.m;
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|i| format!("eps_{i}")));
    if a.with_volatility {
        header.extend((1..=m).map(|i| format!("h_{i}")));
    }
    let sink: Box<dyn Write + '_> = match &a.output {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(&mut *out),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&header).map_err(csv_err)?;
    for t in 0..a.n {
        let mut row = vec![(t + 1).to_string()];
        row.extend(sim.returns.row(t).iter().map(f64::to_string));
        if a.with_volatility {
            row.extend(sim.volatility.h_row(t).iter().map(f64::to_string));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Equal consecutive windows of `n / k` rows, the remainder going to the last.
pub fn subperiod_ranges(n: usize, k: usize) -> Vec<(usize, usize)> {
    let len = n / k;
    (0..k)
        .map(|i| (i * len, if i + 1 == k { n } else { (i + 1) * len }))
        .collect()
}

pub fn run_fit(a: &FitArgs, out: &mut dyn Write) -> Result<FitDocument> {
    if a.subperiods == 0 {
        return Err(Error::InvalidOptions("subperiods must be at least 1".into()));
    }
    let file = SeriesFile {
        path: a.input.clone(),
        has_header: !a.no_header,
        date_column: a.date_column.clone(),
        value_columns: a.columns.clone(),
        kind: a.kind,
        scale: a.scale,
    };
    let series = load_series(&file)?;
    let m = series.returns.m();
    let orders = ModelOrders::new(m, a.p, a.q)?;
    let mode = if a.delta.is_empty() {
        EstimationMode::DeltaEstimated
    } else if a.delta.len() == 1 {
        EstimationMode::DeltaKnown(vec![a.delta[0]; m])
    } else {
        EstimationMode::DeltaKnown(a.delta.clone())
    };
    let mut options = FitOptions::new(mode.clone());
    options.starts = a.starts;
    options.seed = a.seed;
    options.max_iterations = a.max_iterations;
    options.init = match a.init {
        InitArg::Zero => InitPolicy::ZeroOmega,
        InitArg::Mean => InitPolicy::SampleMean,
    };
    let names = parameter_names(&orders, &mode);
    let n = series.returns.n();
    let mut windows = vec![("full sample".to_string(), (0, n))];
    if a.subperiods > 1 {
        for (i, r) in subperiod_ranges(n, a.subperiods).into_iter().enumerate() {
            windows.push((format!("subperiod {}", i + 1), r));
        }
    }
    let mut reports = Vec::new();
    for (label, (start, end)) in windows {
        let returns = series.returns.window(start, end)?;
        let fit = fit_qmle(&returns, orders, &options)?;
        if !fit.converged {
            eprintln!("warning: {label}: optimizer stopped before convergence");
        }
        let cov = sandwich(&fit, &returns).map_err(|e| e.to_string());
        let spec = unpack(&fit.v_hat)?;
        let lyap = (orders.q > 0)
            .then(|| estimate_lyapunov(&spec, DEFAULT_LYAPUNOV_STEPS, DEFAULT_LYAPUNOV_REPLICATIONS, a.seed))
            .transpose()?;
        let diagnostics = Diagnostics {
            lyapunov_gamma: lyap.as_ref().map(|l| l.gamma_hat).filter(|g| g.is_finite()),
            lyapunov_std_error: lyap.as_ref().map(|l| l.std_error).filter(|s| s.is_finite()),
            b_spectral_radius: spectral_radius_b(&spec),
            boundary_active: fit.boundary_active.iter().map(|&k| names[k].clone()).collect(),
        };
        let dates = match &series.dates {
            Some(d) => (d.get(start).cloned(), d.get(end - 1).cloned()),
            None => (None, None),
        };
        reports.push(WindowReport::new(
            label,
            (start, end),
            dates,
            names.clone(),
            &fit,
            cov.as_ref().map_err(Clone::clone),
            diagnostics,
        ));
    }
    let doc = FitDocument {
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            input: a.input.display().to_string(),
            kind: format!("{:?}", a.kind).to_lowercase(),
            scale: a.scale,
            dropped_rows: series.dropped_rows,
            seed: a.seed,
            starts: a.starts,
            max_iterations: a.max_iterations,
            subperiods: a.subperiods,
            split_rule: format!(
                "{} equal consecutive row windows of floor(n/{}) rows, remainder to the last; not date-aligned",
                a.subperiods, a.subperiods
            ),
        },
        windows: reports,
    };
    let json = doc.to_json()?;
    if let Some(p) = &a.output {
        std::fs::write(p, &json)?;
    }
    if a.json {
        writeln!(out, "{json}")?;
    } else {
        if series.dropped_rows > 0 {
            writeln!(out, "dropped {} rows with missing values", series.dropped_rows)?;
        }
        write!(out, "{}", doc.render())?;
    }
    Ok(doc)
}

/// Reads `C` and `c` from constraint CSV text: each row holds `s0` entries of C then one of c.
pub fn parse_constraints(text: &str, s0: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: k + 1,
            column: 0,
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.len() != s0 + 1 {
            return Err(Error::Parse {
                row: line,
                column: rec.len(),
                message: format!("expected {} fields, found {}", s0 + 1, rec.len()),
            });
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    row: line,
                    column: j + 1,
                    message: format!("'{cell}' is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 0,
            column: 0,
            message: "no constraint rows".into(),
        });
    }
    let c = DMatrix::from_fn(rows.len(), s0, |i, j| rows[i][j]);
    let v = rows.iter().map(|r| r[s0]).collect();
    Ok((c, v))
}

pub fn run_wald(a: &WaldArgs, out: &mut dyn Write) -> Result<()> {
    let doc = FitDocument::from_json(&read_to_string(&a.report)?)?;
    let w = doc
        .windows
        .get(a.window)
        .ok_or_else(|| Error::Config(format!("report has no window {}", a.window)))?;
    let sigma = w.sigma_matrix().ok_or(Error::SingularConstraintCovariance)?;
    let (c, v) = parse_constraints(&read_to_string(&a.constraints)?, w.estimates.len())?;
    let res = wald_statistic(&w.estimates, &sigma, w.n, &c, &v)?;
    writeln!(out, "window: {}", w.label)?;
    writeln!(out, "statistic {:.6}, df {}, p-value {:.6}", res.statistic, res.df, res.p_value)?;
    for (level, rej) in &res.reject_at {
        writeln!(out, "  level {:.2}: {}", level, if *rej { "reject" } else { "do not reject" })?;
    }
    Ok(())
}

pub fn run_lyapunov(a: &LyapunovArgs, out: &mut dyn Write) -> Result<()> {
    let (spec, _) = read_spec(&a.spec)?;
    let est = estimate_lyapunov(&spec, a.steps, a.replications, a.seed)?;
    writeln!(
        out,
        "gamma_hat {:.6}, std_error {:.6} ({} steps x {} replications, {} restarts)",
        est.gamma_hat, est.std_error, est.n_steps, est.n_replications, est.restarts
    )?;
    writeln!(out, "strictly stationary (gamma + 3 s.e. < 0): {}", est.is_stationary(3.0))?;
    writeln!(out, "spectral radius of B: {:.6}", spectral_radius_b(&spec))?;
    Ok(())
}

pub fn run_identifiability(a: &SpecArgs, out: &mut dyn Write) -> Result<()> {
    let (spec, _) = read_spec(&a.spec)?;
    let r = check_identifiability(&spec);
    writeln!(out, "A+(1) + A-(1) nonzero: {}", r.nonzero_sum)?;
    if r.trivially_identified {
        writeln!(out, "p = 0: identified without the rank condition")?;
    } else {
        writeln!(out, "rank of M: {} of {} (full rank: {})", r.rank_m, spec.orders.m, r.full_rank)?;
        writeln!(out, "M = {}", r.m_matrix)?;
    }
    writeln!(out, "left coprimeness not checked")?;
    Ok(())
}

pub fn run_mc(a: &McArgs, out: &mut dyn Write) -> Result<McSummary> {
    let mut cfg = McConfig::from_toml_str(&read_to_string(&a.config)?)?;
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.starts {
        cfg.starts = s;
    }
    let design = cfg.to_design()?;
    let summary = run_design(&design)?;
    writeln!(
        out,
        "n = {}, replications = {} (used {}, failed {}), quartiles by linear interpolation",
        cfg.n, cfg.replications, summary.used, summary.failures
    )?;
    let width = summary.per_parameter.iter().map(|p| p.name.len()).max().unwrap_or(9).max(9);
    writeln!(
        out,
        "{:<width$}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}",
        "parameter", "true", "bias", "rmse", "q1", "median", "q3"
    )?;
    for p in &summary.per_parameter {
        writeln!(
            out,
            "{:<width$}  {:10.5}  {:10.5}  {:10.5}  {:10.5}  {:10.5}  {:10.5}",
            p.name, p.true_value, p.bias, p.rmse, p.q1, p.median, p.q3
        )?;
    }
    if let Some(r) = summary.rejection_pct {
        writeln!(out, "rejection frequency: {r:.1}%")?;
    }
    if let Some(p) = &a.summary_csv {
        write_csv(&summary.per_parameter, std::fs::File::create(p)?)?;
    }
    if let Some(p) = &a.boxplot_csv {
        write_csv(&emit_boxplot_data(&summary.per_parameter), std::fs::File::create(p)?)?;
    }
    if let Some(p) = &a.estimates_csv {
        let names = parameter_names(&design.truth.orders, &design.mode);
        let mut w = csv::Writer::from_writer(std::fs::File::create(p)?);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut header = vec!["replication".to_string(), "seed".into(), "used".into(), "rejected".into()];
        header.extend(names);
        w.write_record(&header).map_err(csv_err)?;
        for r in &summary.replications {
            let mut row = vec![
                r.index.to_string(),
                r.seed.to_string(),
                r.used().to_string(),
                r.rejected.map_or(String::new(), |b| b.to_string()),
            ];
            match &r.estimate {
                Some(e) => row.extend(e.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), header.len() - 4)),
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(summary)
}
