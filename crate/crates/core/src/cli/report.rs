//! Fit reports: machine-readable JSON plus an aligned text rendering.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::inference::SandwichCovariance;
use crate::params::{EstimationMode, ModelOrders, ParamVector};
use crate::volatility::InitPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Top Lyapunov exponent at the estimate; `None` when it is `-inf`.
    pub lyapunov_gamma: Option<f64>,
    pub lyapunov_std_error: Option<f64>,
    pub b_spectral_radius: f64,
    pub boundary_active: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub label: String,
    /// Half-open row range of the return series.
    pub start: usize,
    pub end: usize,
    pub first_date: Option<String>,
    pub last_date: Option<String>,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    /// "known" or "estimate".
    pub delta_mode: String,
    pub delta_fixed: Option<Vec<f64>>,
    /// "zero" or "mean".
    pub init: String,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    /// `None` marks an unavailable standard error.
    pub std_errors: Vec<Option<f64>>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub start_index: usize,
    pub n: usize,
    pub start_objectives: Vec<Option<f64>>,
    pub projected_gradient_norm: Option<f64>,
    pub boundary_active: Vec<usize>,
    pub sigma_hat: Option<Vec<Vec<f64>>>,
    pub j_condition: Option<f64>,
    pub inference_error: Option<String>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub input: String,
    pub kind: String,
    pub scale: f64,
    pub dropped_rows: usize,
    pub seed: u64,
    pub starts: usize,
    pub max_iterations: usize,
    pub subperiods: usize,
    /// How subperiod windows were formed.
    pub split_rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub provenance: Provenance,
    /// Full sample first, then subperiods in order.
    pub windows: Vec<WindowReport>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn init_key(init: &InitPolicy) -> &'static str {
    match init {
        InitPolicy::SampleMean => "mean",
        _ => "zero",
    }
}

pub fn matrix_rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

impl WindowReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label: String,
        range: (usize, usize),
        dates: (Option<String>, Option<String>),
        names: Vec<String>,
        fit: &FitResult,
        cov: std::result::Result<&SandwichCovariance, String>,
        diagnostics: Diagnostics,
    ) -> Self {
        let orders = fit.v_hat.orders;
        let s = fit.v_hat.len();
        let (std_errors, sigma_hat, j_condition, inference_error) = match cov {
            Ok(c) => (c.std_errors.clone(), Some(matrix_rows(&c.sigma_hat)), Some(c.j_condition), None),
            Err(e) => (vec![None; s], None, None, Some(e)),
        };
        Self {
            label,
            start: range.0,
            end: range.1,
            first_date: dates.0,
            last_date: dates.1,
            m: orders.m,
            p: orders.p,
            q: orders.q,
            delta_mode: fit.v_hat.mode.label().to_string(),
            delta_fixed: match &fit.v_hat.mode {
                EstimationMode::DeltaKnown(d) => Some(d.clone()),
                EstimationMode::DeltaEstimated => None,
            },
            init: init_key(&fit.init).to_string(),
            names,
            estimates: fit.v_hat.values.clone(),
            std_errors,
            objective: fit.objective,
            converged: fit.converged,
            iterations: fit.iterations,
            start_index: fit.start_index,
            n: fit.n,
            start_objectives: fit.start_objectives.iter().copied().map(finite).collect(),
            projected_gradient_norm: finite(fit.projected_gradient_norm),
            boundary_active: fit.boundary_active.clone(),
            sigma_hat,
            j_condition,
            inference_error,
            diagnostics,
        }
    }

    pub fn mode(&self) -> Result<EstimationMode> {
        match (self.delta_mode.as_str(), &self.delta_fixed) {
            ("known", Some(d)) => Ok(EstimationMode::DeltaKnown(d.clone())),
            ("estimate", None) => Ok(EstimationMode::DeltaEstimated),
            _ => Err(Error::Config(format!("inconsistent delta mode '{}'", self.delta_mode))),
        }
    }

    /// Rebuilds the fit this window was produced from.
    pub fn fit_result(&self) -> Result<FitResult> {
        let orders = ModelOrders::new(self.m, self.p, self.q)?;
        let init = match self.init.as_str() {
            "zero" => InitPolicy::ZeroOmega,
            "mean" => InitPolicy::SampleMean,
            other => return Err(Error::Config(format!("unknown init policy '{other}'"))),
        };
        Ok(FitResult {
            v_hat: ParamVector::new(self.estimates.clone(), self.mode()?, orders)?,
            objective: self.objective,
            converged: self.converged,
            iterations: self.iterations,
            start_index: self.start_index,
            n: self.n,
            start_objectives: self
                .start_objectives
                .iter()
                .map(|v| v.unwrap_or(f64::INFINITY))
                .collect(),
            projected_gradient_norm: self.projected_gradient_norm.unwrap_or(f64::INFINITY),
            boundary_active: self.boundary_active.clone(),
            init,
        })
    }

    pub fn sigma_matrix(&self) -> Option<DMatrix<f64>> {
        let rows = self.sigma_hat.as_ref()?;
        let s = rows.len();
        Some(DMatrix::from_fn(s, s, |i, j| rows[i][j]))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let dates = match (&self.first_date, &self.last_date) {
            (Some(a), Some(b)) => format!(", {a} to {b}"),
            _ => String::new(),
        };
        let _ = writeln!(
            out,
            "{} (rows {}..{}{}), n = {}, CCC-APGARCH({}, {}), delta {}",
            self.label, self.start, self.end, dates, self.n, self.p, self.q, self.delta_mode
        );
        let width = self.names.iter().map(String::len).max().unwrap_or(9).max(9);
        let _ = writeln!(out, "  {:<width$}  {:>12}  {:>12}", "parameter", "estimate", "std.error");
        for (k, name) in self.names.iter().enumerate() {
            let se = match self.std_errors[k] {
                Some(v) => format!("{v:12.5}"),
                None => format!("{:>12}", "unavailable"),
            };
            let flag = if self.boundary_active.contains(&k) { "  (at bound)" } else { "" };
            let _ = writeln!(out, "  {:<width$}  {:12.5}  {}{}", name, self.estimates[k], se, flag);
        }
        let _ = writeln!(
            out,
            "  objective {:.6}, converged {}, iterations {}",
            self.objective, self.converged, self.iterations
        );
        let gamma = match (self.diagnostics.lyapunov_gamma, self.diagnostics.lyapunov_std_error) {
            (Some(g), Some(s)) => format!("{g:.4} (s.e. {s:.4})"),
            _ => "-inf".to_string(),
        };
        let _ = writeln!(
            out,
            "  lyapunov exponent {}, spectral radius of B {:.4}",
            gamma, self.diagnostics.b_spectral_radius
        );
        if let Some(e) = &self.inference_error {
            let _ = writeln!(out, "  standard errors unavailable: {e}");
        }
        out
    }
}

impl FitDocument {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("report: {e}")))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.provenance.subperiods > 1 {
            let _ = writeln!(out, "subperiods: {}\n", self.provenance.split_rule);
        }
        for w in &self.windows {
            out.push_str(&w.render());
            out.push('\n');
        }
        out
    }
}
