//! Monte Carlo replication of the estimator's sampling distribution and of
//! Wald rejection frequencies.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit_qmle, FitOptions};
use crate::inference::{sandwich, wald_test};
use crate::params::{pack, parameter_names, validate, EstimationMode, ModelSpec};
use crate::simulate::{derive_seed, simulate, DEFAULT_BURN_IN};
use crate::stationarity::{estimate_lyapunov, DEFAULT_LYAPUNOV_REPLICATIONS, DEFAULT_LYAPUNOV_STEPS};

/// Linear restriction `C v = c` tested in every replication.
#[derive(Debug, Clone, PartialEq)]
pub struct WaldDesign {
    pub c_matrix: DMatrix<f64>,
    pub c_vector: Vec<f64>,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McDesign {
    pub truth: ModelSpec,
    pub mode: EstimationMode,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub burn_in: usize,
    /// Optimizer settings; the mode and seed are taken from the design.
    pub fit: FitOptions,
    pub wald: Option<WaldDesign>,
    /// Skip the stationarity check on the true parameter.
    pub allow_nonstationary: bool,
}

impl McDesign {
    pub fn new(truth: ModelSpec, mode: EstimationMode, n: usize, replications: usize, seed: u64) -> Self {
        Self {
            truth,
            fit: FitOptions::new(mode.clone()),
            mode,
            n,
            replications,
            seed,
            burn_in: DEFAULT_BURN_IN,
            wald: None,
            allow_nonstationary: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub true_value: f64,
    pub bias: f64,
    pub rmse: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotRow {
    pub parameter: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub index: usize,
    pub seed: u64,
    pub estimate: Option<Vec<f64>>,
    pub converged: bool,
    pub rejected: Option<bool>,
    /// Why the replication was excluded, if it was.
    pub failure: Option<String>,
}

impl ReplicationOutcome {
    pub fn used(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub per_parameter: Vec<ParameterSummary>,
    pub rejection_pct: Option<f64>,
    pub failures: usize,
    pub used: usize,
    pub replications: Vec<ReplicationOutcome>,
}

impl McSummary {
    /// Estimates of the replications that entered the aggregates.
    pub fn estimates(&self) -> Vec<Vec<f64>> {
        self.replications
            .iter()
            .filter(|r| r.used())
            .filter_map(|r| r.estimate.clone())
            .collect()
    }
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`, the "type 7" rule). `sorted` must be ascending.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bias, RMSE and five-number summaries from per-replication estimates.
pub fn summarize(names: &[String], truth: &[f64], estimates: &[Vec<f64>]) -> Vec<ParameterSummary> {
    let n = estimates.len() as f64;
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut col: Vec<f64> = estimates.iter().map(|e| e[k]).collect();
            let bias = col.iter().map(|v| v - truth[k]).sum::<f64>() / n;
            let rmse = (col.iter().map(|v| (v - truth[k]).powi(2)).sum::<f64>() / n).sqrt();
            col.sort_by(f64::total_cmp);
            ParameterSummary {
                name: name.clone(),
                true_value: truth[k],
                bias,
                rmse,
                q1: quantile_type7(&col, 0.25),
                median: quantile_type7(&col, 0.5),
                q3: quantile_type7(&col, 0.75),
                min: col.first().copied().unwrap_or(f64::NAN),
                max: col.last().copied().unwrap_or(f64::NAN),
            }
        })
        .collect()
}

pub fn emit_boxplot_data(summaries: &[ParameterSummary]) -> Vec<BoxplotRow> {
    summaries
        .iter()
        .map(|s| BoxplotRow {
            parameter: s.name.clone(),
            min: s.min,
            q1: s.q1,
            median: s.median,
            q3: s.q3,
            max: s.max,
        })
        .collect()
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

fn check_stationarity(design: &McDesign) -> Result<()> {
    if design.allow_nonstationary || design.truth.orders.q == 0 {
        return Ok(());
    }
    let est = estimate_lyapunov(
        &design.truth,
        DEFAULT_LYAPUNOV_STEPS,
        DEFAULT_LYAPUNOV_REPLICATIONS,
        design.seed,
    )?;
    if est.gamma_hat - 3.0 * est.std_error >= 0.0 {
        return Err(Error::StationarityVeto {
            gamma_hat: est.gamma_hat,
            std_error: est.std_error,
        });
    }
    Ok(())
}

fn replicate(design: &McDesign, index: usize) -> ReplicationOutcome {
    let seed = derive_seed(design.seed, index as u64);
    let mut outcome = ReplicationOutcome {
        index,
        seed,
        estimate: None,
        converged: false,
        rejected: None,
        failure: None,
    };
    let sim = match simulate(&design.truth, design.n, design.burn_in, seed) {
        Ok(s) => s,
        Err(e) => {
            outcome.failure = Some(format!("simulation: {e}"));
            return outcome;
        }
    };
    let mut options = design.fit.clone();
    options.mode = design.mode.clone();
    options.seed = seed;
    let fit = match fit_qmle(&sim.returns, design.truth.orders, &options) {
        Ok(f) => f,
        Err(e) => {
            outcome.failure = Some(format!("fit: {e}"));
            return outcome;
        }
    };
    outcome.estimate = Some(fit.v_hat.values.clone());
    outcome.converged = fit.converged;
    if !fit.converged {
        outcome.failure = Some("optimizer did not converge".into());
        return outcome;
    }
    if let Some(w) = &design.wald {
        match sandwich(&fit, &sim.returns).and_then(|cov| wald_test(&fit, &cov, &w.c_matrix, &w.c_vector)) {
            Ok(out) => outcome.rejected = Some(out.p_value <= w.level),
            Err(e) => outcome.failure = Some(format!("wald: {e}")),
        }
    }
    outcome
}

/// Simulates, fits and optionally tests `design.replications` independent paths.
///
/// Replications whose fit fails, does not converge or whose Wald test cannot
/// be computed are excluded from every aggregate and counted in `failures`.
pub fn run_design(design: &McDesign) -> Result<McSummary> {
    if design.replications == 0 {
        return Err(Error::InvalidOptions("replications must be at least 1".into()));
    }
    if let Some(w) = &design.wald {
        if !(0.0..=1.0).contains(&w.level) {
            return Err(Error::InvalidOptions(format!("test level {} outside [0, 1]", w.level)));
        }
    }
    if let Some(v) = validate(&design.truth).first() {
        return Err(Error::InvalidSpec(v.to_string()));
    }
    let truth = pack(&design.truth, &design.mode)?;
    check_stationarity(design)?;
    let replications: Vec<ReplicationOutcome> = (0..design.replications)
        .into_par_iter()
        .map(|r| replicate(design, r))
        .collect();
    let estimates: Vec<Vec<f64>> = replications
        .iter()
        .filter(|r| r.used())
        .filter_map(|r| r.estimate.clone())
        .collect();
    let used = estimates.len();
    let names = parameter_names(&design.truth.orders, &design.mode);
    let rejection_pct = design.wald.as_ref().and_then(|_| {
        (used > 0).then(|| {
            let rejected = replications.iter().filter(|r| r.rejected == Some(true)).count();
            100.0 * rejected as f64 / used as f64
        })
    });
    Ok(McSummary {
        per_parameter: summarize(&names, &truth.values, &estimates),
        rejection_pct,
        failures: design.replications - used,
        used,
        replications,
    })
}

/// Percentage of used replications rejecting the configured restriction.
pub fn rejection_frequency(design: &McDesign) -> Result<f64> {
    if design.wald.is_none() {
        return Err(Error::InvalidOptions("design has no Wald restriction".into()));
    }
    run_design(design)?
        .rejection_pct
        .ok_or(Error::AllStartsInvalid)
}
