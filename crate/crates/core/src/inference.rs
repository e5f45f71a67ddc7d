//! Sandwich covariance of the QMLE and Wald tests of linear restrictions.
//!
//! Both information matrices are built from numerical derivatives:
//! `I` from outer products of per-observation scores, `J` from second
//! differences of the mean criterion.

use nalgebra::{Cholesky, DMatrix, DVector, LU};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::likelihood::{objective_fn, per_observation_scores, DEFAULT_GRADIENT_STEP};
use crate::volatility::{numerical_rank, ReturnsMatrix};

pub const HESSIAN_STEP: f64 = 1e-4;
pub const MAX_J_CONDITION: f64 = 1e10;
pub const WALD_LEVELS: [f64; 3] = [0.10, 0.05, 0.01];

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCovariance {
    pub i_hat: DMatrix<f64>,
    pub j_hat: DMatrix<f64>,
    /// `J^{-1} I J^{-1}`, the asymptotic covariance of `sqrt(n) (v_hat - v0)`.
    pub sigma_hat: DMatrix<f64>,
    /// `sqrt(diag(sigma_hat) / n)`; `None` where the diagonal is negative.
    pub std_errors: Vec<Option<f64>>,
    pub j_condition: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldOutcome {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// `(level, rejected)` for each level in [`WALD_LEVELS`].
    pub reject_at: Vec<(f64, bool)>,
}

impl WaldOutcome {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value <= level
    }
}

/// Averaged outer product of score rows.
pub fn outer_from_scores(scores: &[Vec<f64>], s: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(s, s);
    for g in scores {
        for j in 0..s {
            for i in j..s {
                out[(i, j)] += g[i] * g[j];
            }
        }
    }
    let n = scores.len().max(1) as f64;
    for j in 0..s {
        for i in j..s {
            let v = out[(i, j)] / n;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// `I_hat = mean_t g_t g_t'` from numerical per-observation scores at the estimate.
pub fn score_outer(fit: &FitResult, returns: &ReturnsMatrix) -> Result<DMatrix<f64>> {
    let scores = per_observation_scores(&fit.v_hat, returns, &fit.init, DEFAULT_GRADIENT_STEP)?;
    Ok(outer_from_scores(&scores, fit.v_hat.len()))
}

/// Step and stencil shift per coordinate: the centre moves by one step when a
/// central probe would leave the valid region.
fn stencil_axes<F>(f: &F, x: &[f64], step_scale: f64) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let h = step_scale * x[i].abs().max(0.1);
            let probe = |d: f64| {
                let mut y = x.to_vec();
                y[i] += d;
                f(&y).is_finite()
            };
            if probe(h) && probe(-h) {
                Ok((h, 0.0))
            } else if probe(h) && probe(2.0 * h) {
                Ok((h, h))
            } else if probe(-h) && probe(-2.0 * h) {
                Ok((h, -h))
            } else {
                Err(Error::GradientAtInvalidPoint { coordinate: Some(i) })
            }
        })
        .collect()
}

/// Symmetrized second-difference Hessian of `f` at `x`.
///
/// Diagonal entries use the three-point formula, cross entries the four-point
/// stencil; steps are `step_scale * max(|x_i|, 0.1)`.
pub fn numerical_hessian<F>(f: &F, x: &[f64], step_scale: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let s = x.len();
    if !f(x).is_finite() {
        return Err(Error::GradientAtInvalidPoint { coordinate: None });
    }
    let axes = stencil_axes(f, x, step_scale)?;
    let pairs: Vec<(usize, usize)> = (0..s).flat_map(|i| (i..s).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut centre = x.to_vec();
            centre[i] += axes[i].1;
            if j != i {
                centre[j] += axes[j].1;
            }
            let at = |di: f64, dj: f64| {
                let mut y = centre.clone();
                y[i] += di;
                y[j] += dj;
                f(&y)
            };
            let hi = axes[i].0;
            if i == j {
                (at(hi, 0.0) - 2.0 * at(0.0, 0.0) + at(-hi, 0.0)) / (hi * hi)
            } else {
                let hj = axes[j].0;
                (at(hi, hj) - at(hi, -hj) - at(-hi, hj) + at(-hi, -hj)) / (4.0 * hi * hj)
            }
        })
        .collect();
    let mut out = DMatrix::zeros(s, s);
    for (&(i, j), v) in pairs.iter().zip(values) {
        if !v.is_finite() {
            return Err(Error::GradientAtInvalidPoint { coordinate: Some(j) });
        }
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    Ok(out)
}

/// Ratio of extreme singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// `J_hat` with its condition number.
pub fn hessian(fit: &FitResult, returns: &ReturnsMatrix) -> Result<(DMatrix<f64>, f64)> {
    let f = objective_fn(&fit.v_hat, returns, &fit.init);
    let j = numerical_hessian(&f, &fit.v_hat.values, HESSIAN_STEP)?;
    let condition = condition_number(&j);
    if condition > MAX_J_CONDITION {
        return Err(Error::IllConditionedJ { condition });
    }
    Ok((j, condition))
}

/// Sandwich `J^{-1} I J^{-1}` by two LU solves.
pub fn sandwich_from(i_hat: DMatrix<f64>, j_hat: DMatrix<f64>, n: usize) -> Result<SandwichCovariance> {
    let s = i_hat.nrows();
    if i_hat.ncols() != s || j_hat.shape() != (s, s) {
        return Err(Error::Dimension("information matrices must be square and of equal size".into()));
    }
    let j_condition = condition_number(&j_hat);
    if j_condition > MAX_J_CONDITION {
        return Err(Error::IllConditionedJ { condition: j_condition });
    }
    let lu = LU::new(j_hat.clone());
    let left = lu
        .solve(&i_hat)
        .ok_or(Error::IllConditionedJ { condition: f64::INFINITY })?;
    let sigma = lu
        .solve(&left.transpose())
        .ok_or(Error::IllConditionedJ { condition: f64::INFINITY })?;
    let sigma_hat = (&sigma + sigma.transpose()) * 0.5;
    let std_errors = (0..s)
        .map(|k| {
            let v = sigma_hat[(k, k)] / n as f64;
            (v >= 0.0).then(|| v.sqrt())
        })
        .collect();
    Ok(SandwichCovariance {
        i_hat,
        j_hat,
        sigma_hat,
        std_errors,
        j_condition,
        n,
    })
}

pub fn sandwich(fit: &FitResult, returns: &ReturnsMatrix) -> Result<SandwichCovariance> {
    let i_hat = score_outer(fit, returns)?;
    let (j_hat, _) = hessian(fit, returns)?;
    sandwich_from(i_hat, j_hat, fit.n)
}

/// Wald statistic for `H0: C v = c`, using `C sigma C' / n` as the covariance
/// of `C v_hat`.
pub fn wald_statistic(
    estimate: &[f64],
    sigma_hat: &DMatrix<f64>,
    n: usize,
    c_matrix: &DMatrix<f64>,
    c_vector: &[f64],
) -> Result<WaldOutcome> {
    let s0 = estimate.len();
    let rows = c_matrix.nrows();
    if c_matrix.ncols() != s0 || c_vector.len() != rows || sigma_hat.shape() != (s0, s0) || rows == 0 {
        return Err(Error::Dimension(format!(
            "constraint matrix is {}x{}, vector has {} entries, parameter has {s0}",
            rows,
            c_matrix.ncols(),
            c_vector.len()
        )));
    }
    let rank = numerical_rank(c_matrix);
    if rank < rows {
        return Err(Error::RankDeficientConstraints { rank, rows });
    }
    let v = DVector::from_column_slice(estimate);
    let diff = c_matrix * v - DVector::from_column_slice(c_vector);
    let var = c_matrix * sigma_hat * c_matrix.transpose() / n as f64;
    let chol = Cholesky::new(var).ok_or(Error::SingularConstraintCovariance)?;
    let statistic = diff.dot(&chol.solve(&diff)).max(0.0);
    let p_value = chi2_upper_tail(statistic, rows);
    Ok(WaldOutcome {
        statistic,
        df: rows,
        p_value,
        reject_at: WALD_LEVELS.iter().map(|&l| (l, p_value <= l)).collect(),
    })
}

pub fn wald_test(
    fit: &FitResult,
    cov: &SandwichCovariance,
    c_matrix: &DMatrix<f64>,
    c_vector: &[f64],
) -> Result<WaldOutcome> {
    wald_statistic(&fit.v_hat.values, &cov.sigma_hat, cov.n, c_matrix, c_vector)
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (k, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + k as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let front = (-x + a * x.ln() - ln_gamma(a)).exp();
    if x < a + 1.0 {
        // series for P
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (1.0 - front * sum).clamp(0.0, 1.0)
    } else {
        // modified Lentz continued fraction for Q
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (front * h).clamp(0.0, 1.0)
    }
}

/// Upper tail probability of the chi-square distribution with `df` degrees of freedom.
pub fn chi2_upper_tail(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df as f64 / 2.0, x / 2.0)
}
