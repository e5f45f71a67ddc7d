//! Gaussian quasi-likelihood criterion
//!
//! ```text
//! l_t = eps_t' H_t^{-1} eps_t + log |H_t|,   H_t = D_t R D_t,   L_n = mean(l_t)
//! ```
//!
//! evaluated through the factorized form
//! `l_t = sum_i log h_it + log |R| + z_t' R^{-1} z_t` with `z_t = D_t^{-1} eps_t`.
//! Invalid parameter points evaluate to `+inf` rather than an error so that
//! optimizers can treat them as a penalty.

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::{unpack_unchecked, ModelSpec, ParamVector};
use crate::volatility::{admissible, run_recursion, InitPolicy, ReturnsMatrix};

pub const DEFAULT_GRADIENT_STEP: f64 = 1e-5;

/// Criterion value and per-observation terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    /// Mean of `per_obs`, or `+inf` when invalid.
    pub total: f64,
    pub per_obs: Vec<f64>,
    pub valid: bool,
}

impl ObjectiveValue {
    fn invalid() -> Self {
        Self {
            total: f64::INFINITY,
            per_obs: Vec::new(),
            valid: false,
        }
    }
}

/// Factorized correlation: inverse and log-determinant.
struct CorrelationTerms {
    inv: DMatrix<f64>,
    log_det: f64,
}

fn correlation_terms(r: &DMatrix<f64>) -> Option<CorrelationTerms> {
    if r.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let chol = Cholesky::new(r.clone())?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Some(CorrelationTerms {
        inv: chol.inverse(),
        log_det,
    })
}

/// Runs the recursion and feeds each `l_t` to `visit`. `None` on any invalidity.
fn for_each_term<F: FnMut(usize, f64)>(
    spec: &ModelSpec,
    returns: &ReturnsMatrix,
    init: &InitPolicy,
    mut visit: F,
) -> Option<()> {
    if !admissible(spec) {
        return None;
    }
    let corr = correlation_terms(&spec.r)?;
    let m = spec.orders.m;
    let inv = corr.inv.as_slice();
    let delta = &spec.delta;
    let mut z = vec![0.0; m];
    let mut finite = true;
    let res = run_recursion(spec, returns, init, |t, hpow| {
        let eps = returns.row(t);
        let mut log_h_sum = 0.0;
        for i in 0..m {
            let ln_h = if delta[i] == 2.0 {
                hpow[i].ln()
            } else {
                (2.0 / delta[i]) * hpow[i].ln()
            };
            log_h_sum += ln_h;
            z[i] = eps[i] * (-0.5 * ln_h).exp();
        }
        let mut quad = 0.0;
        for j in 0..m {
            let mut s = 0.0;
            for i in 0..m {
                s += inv[j * m + i] * z[i];
            }
            quad += z[j] * s;
        }
        let l = log_h_sum + corr.log_det + quad;
        if !l.is_finite() {
            finite = false;
        }
        visit(t, l);
    });
    (res.is_ok() && finite).then_some(())
}

/// Criterion `L_n` and the terms `l_t` at the packed parameter `v`.
pub fn neg_quasi_loglik(v: &ParamVector, returns: &ReturnsMatrix, init: &InitPolicy) -> ObjectiveValue {
    let Ok(spec) = unpack_unchecked(v) else {
        return ObjectiveValue::invalid();
    };
    spec_neg_quasi_loglik(&spec, returns, init)
}

/// Same as [`neg_quasi_loglik`] for a structured spec.
pub fn spec_neg_quasi_loglik(spec: &ModelSpec, returns: &ReturnsMatrix, init: &InitPolicy) -> ObjectiveValue {
    let mut per_obs = Vec::with_capacity(returns.n());
    match for_each_term(spec, returns, init, |_, l| per_obs.push(l)) {
        Some(()) => ObjectiveValue {
            total: per_obs.iter().sum::<f64>() / per_obs.len() as f64,
            per_obs,
            valid: true,
        },
        None => ObjectiveValue::invalid(),
    }
}

/// `L_n` only; `+inf` when invalid.
pub fn objective_total(v: &ParamVector, returns: &ReturnsMatrix, init: &InitPolicy) -> f64 {
    let Ok(spec) = unpack_unchecked(v) else {
        return f64::INFINITY;
    };
    let mut sum = 0.0;
    match for_each_term(&spec, returns, init, |_, l| sum += l) {
        Some(()) => sum / returns.n() as f64,
        None => f64::INFINITY,
    }
}

/// Objective over raw coordinates, with mode and orders taken from `template`.
pub fn objective_fn<'a>(
    template: &'a ParamVector,
    returns: &'a ReturnsMatrix,
    init: &'a InitPolicy,
) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |x: &[f64]| objective_total(&template.with_values(x.to_vec()), returns, init)
}

/// Step used for coordinate `x` at relative scale `step_scale`.
pub fn gradient_step(x: f64, step_scale: f64) -> f64 {
    step_scale * x.abs().max(1e-4)
}

/// Central-difference gradient of `f`, falling back to one-sided differences
/// on coordinates where a probe is invalid (non-finite).
pub fn numerical_gradient<F>(f: &F, x: &[f64], step_scale: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let f0 = f(x);
    if !f0.is_finite() {
        return Err(Error::GradientAtInvalidPoint { coordinate: None });
    }
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let h = gradient_step(x[i], step_scale);
            let mut probe = x.to_vec();
            probe[i] = x[i] + h;
            let fp = f(&probe);
            probe[i] = x[i] - h;
            let fm = f(&probe);
            match (fp.is_finite(), fm.is_finite()) {
                (true, true) => Ok((fp - fm) / (2.0 * h)),
                (true, false) => Ok((fp - f0) / h),
                (false, true) => Ok((f0 - fm) / h),
                (false, false) => Err(Error::GradientAtInvalidPoint { coordinate: Some(i) }),
            }
        })
        .collect()
}

/// Central-difference gradient of `L_n` at `v`.
pub fn loglik_gradient(
    v: &ParamVector,
    returns: &ReturnsMatrix,
    init: &InitPolicy,
    step_scale: f64,
) -> Result<Vec<f64>> {
    numerical_gradient(&objective_fn(v, returns, init), &v.values, step_scale)
}

/// Per-observation numerical scores `d l_t / d v`, one row per observation.
///
/// The full recursion is rerun at every probe, so each `l_t(v +- h e_i)` is
/// exact; invalid probes fall back to one-sided differences as in
/// [`numerical_gradient`].
pub fn per_observation_scores(
    v: &ParamVector,
    returns: &ReturnsMatrix,
    init: &InitPolicy,
    step_scale: f64,
) -> Result<Vec<Vec<f64>>> {
    let base = neg_quasi_loglik(v, returns, init);
    if !base.valid {
        return Err(Error::GradientAtInvalidPoint { coordinate: None });
    }
    let terms = |x: &[f64]| {
        let o = neg_quasi_loglik(&v.with_values(x.to_vec()), returns, init);
        o.valid.then_some(o.per_obs)
    };
    let columns: Vec<Vec<f64>> = (0..v.len())
        .into_par_iter()
        .map(|i| {
            let x = &v.values;
            let h = gradient_step(x[i], step_scale);
            let mut probe = x.clone();
            probe[i] = x[i] + h;
            let fp = terms(&probe);
            probe[i] = x[i] - h;
            let fm = terms(&probe);
            let f0 = &base.per_obs;
            match (fp, fm) {
                (Some(p), Some(m)) => Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()),
                (Some(p), None) => Ok(p.iter().zip(f0).map(|(a, b)| (a - b) / h).collect()),
                (None, Some(m)) => Ok(f0.iter().zip(&m).map(|(a, b)| (a - b) / h).collect()),
                (None, None) => Err(Error::GradientAtInvalidPoint { coordinate: Some(i) }),
            }
        })
        .collect::<Result<_>>()?;
    let n = returns.n();
    Ok((0..n).map(|t| columns.iter().map(|c| c[t]).collect()).collect())
}
