//! Strict stationarity diagnostics: the random companion matrices `C_t`, a
//! Monte Carlo estimate of their top Lyapunov exponent, and the spectral radius
//! of the GARCH companion matrix.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::ModelSpec;
use crate::simulate::{correlation_factor, derive_seed};
use crate::volatility::pow_nonneg;

pub const DEFAULT_LYAPUNOV_STEPS: usize = 10_000;
pub const DEFAULT_LYAPUNOV_REPLICATIONS: usize = 100;

/// Restarts allowed per replication before the exponent is declared `-inf`.
const MAX_RESTARTS: usize = 8;

/// One realization of the stacked companion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionMatrix {
    pub c: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovEstimate {
    pub gamma_hat: f64,
    pub std_error: f64,
    pub n_steps: usize,
    pub n_replications: usize,
    /// Replications restarted because the iterate collapsed to zero.
    pub restarts: usize,
}

impl LyapunovEstimate {
    /// `gamma_hat + k * std_error < 0`.
    pub fn is_stationary(&self, k: f64) -> bool {
        self.gamma_hat + k * self.std_error < 0.0
    }
}

/// `Upsilon+ = diag(max(0, eta)^delta)`, `Upsilon- = diag(max(0, -eta)^delta)`.
pub fn upsilon(eta_tilde: &[f64], delta: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = eta_tilde.len();
    let mut up = DMatrix::zeros(m, m);
    let mut um = DMatrix::zeros(m, m);
    for i in 0..m {
        let e = eta_tilde[i];
        if e > 0.0 {
            up[(i, i)] = pow_nonneg(e, delta[i]);
        } else {
            um[(i, i)] = pow_nonneg(-e, delta[i]);
        }
    }
    (up, um)
}

/// Effective GARCH order after padding `p = 0` to one zero lag.
fn padded_p(spec: &ModelSpec) -> usize {
    spec.orders.p.max(1)
}

/// The `(p + 2q) m` square companion matrix for one draw of `eta_tilde`.
///
/// Block rows, in order: `Upsilon+ [A+ | A- | B]`, the shift of the positive
/// parts, `Upsilon- [A+ | A- | B]`, the shift of the negative parts,
/// `[A+ | A- | B]`, the shift of the powered volatilities. `p = 0` is treated
/// as `p = 1` with a zero `B_1`.
pub fn companion(spec: &ModelSpec, eta_tilde: &[f64]) -> Result<CompanionMatrix> {
    let o = spec.orders;
    let (m, q) = (o.m, o.q);
    if q == 0 {
        return Err(Error::UnsupportedOrder(
            "companion analysis needs q >= 1".into(),
        ));
    }
    let p = padded_p(spec);
    let dim = (p + 2 * q) * m;

    // top row block [A+_1..A+_q | A-_1..A-_q | B_1..B_p]
    let mut top = DMatrix::zeros(m, dim);
    for k in 0..q {
        top.view_mut((0, k * m), (m, m)).copy_from(&spec.a_plus[k]);
        top.view_mut((0, (q + k) * m), (m, m))
            .copy_from(&spec.a_minus[k]);
    }
    for k in 0..o.p {
        top.view_mut((0, (2 * q + k) * m), (m, m)).copy_from(&spec.b[k]);
    }
    let (up, um) = upsilon(eta_tilde, &spec.delta);

    let mut c = DMatrix::zeros(dim, dim);
    c.view_mut((0, 0), (m, dim)).copy_from(&(&up * &top));
    c.view_mut((q * m, 0), (m, dim)).copy_from(&(&um * &top));
    c.view_mut((2 * q * m, 0), (m, dim)).copy_from(&top);
    let shift = |c: &mut DMatrix<f64>, start: usize, lags: usize| {
        for r in m..lags * m {
            c[(start + r, start + r - m)] = 1.0;
        }
    };
    shift(&mut c, 0, q);
    shift(&mut c, q * m, q);
    shift(&mut c, 2 * q * m, p);
    Ok(CompanionMatrix { c })
}

/// Applies `C_t` to a vector without materializing the matrix.
struct CompanionOperator {
    top: DMatrix<f64>,
    m: usize,
    p: usize,
    q: usize,
    delta: Vec<f64>,
}

impl CompanionOperator {
    fn new(spec: &ModelSpec) -> Result<Self> {
        let o = spec.orders;
        if o.q == 0 {
            return Err(Error::UnsupportedOrder(
                "companion analysis needs q >= 1".into(),
            ));
        }
        let (m, q, p) = (o.m, o.q, padded_p(spec));
        let mut top = DMatrix::zeros(m, (p + 2 * q) * m);
        for k in 0..q {
            top.view_mut((0, k * m), (m, m)).copy_from(&spec.a_plus[k]);
            top.view_mut((0, (q + k) * m), (m, m))
                .copy_from(&spec.a_minus[k]);
        }
        for k in 0..o.p {
            top.view_mut((0, (2 * q + k) * m), (m, m)).copy_from(&spec.b[k]);
        }
        Ok(Self {
            top,
            m,
            p,
            q,
            delta: spec.delta.clone(),
        })
    }

    fn dim(&self) -> usize {
        (self.p + 2 * self.q) * self.m
    }

    /// `out = C_t v`.
    fn apply(&self, eta_tilde: &[f64], v: &DVector<f64>, out: &mut DVector<f64>) {
        let (m, q, p) = (self.m, self.q, self.p);
        let u = &self.top * v;
        let blocks = [(0, q), (q * m, q), (2 * q * m, p)];
        for (start, lags) in blocks {
            for r in (m..lags * m).rev() {
                out[start + r] = v[start + r - m];
            }
        }
        for i in 0..m {
            let e = eta_tilde[i];
            let (up, um) = if e > 0.0 {
                (pow_nonneg(e, self.delta[i]), 0.0)
            } else {
                (0.0, pow_nonneg(-e, self.delta[i]))
            };
            out[i] = up * u[i];
            out[q * m + i] = um * u[i];
            out[2 * q * m + i] = u[i];
        }
    }
}

/// Accumulated `log ||C_n .. C_1 v0||` computed by renormalized iteration.
///
/// Returns `None` when the iterate collapses to exactly zero.
pub fn log_growth(spec: &ModelSpec, etas: &[Vec<f64>], v0: &DVector<f64>) -> Result<Option<f64>> {
    let op = CompanionOperator::new(spec)?;
    let mut v = v0.clone();
    let mut next = DVector::zeros(op.dim());
    let mut acc = 0.0;
    for eta in etas {
        op.apply(eta, &v, &mut next);
        let norm = next.norm();
        if norm == 0.0 {
            return Ok(None);
        }
        acc += norm.ln();
        std::mem::swap(&mut v, &mut next);
        v /= norm;
    }
    Ok(Some(acc))
}

fn one_replication(
    op: &CompanionOperator,
    factor: &DMatrix<f64>,
    n_steps: usize,
    seed: u64,
) -> (f64, usize) {
    let m = op.m;
    let dim = op.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut restarts = 0;
    let mut next = DVector::zeros(dim);
    let mut eta = DVector::zeros(m);
    let mut eta_tilde = DVector::zeros(m);
    'restart: loop {
        // positive start vector: the matrices are nonnegative, so the
        // iterate stays in the positive cone
        let mut v = DVector::from_fn(dim, |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            z.abs() + f64::MIN_POSITIVE
        });
        v /= v.norm();
        let mut acc = 0.0;
        for _ in 0..n_steps {
            for i in 0..m {
                eta[i] = rng.sample(StandardNormal);
            }
            factor.mul_to(&eta, &mut eta_tilde);
            op.apply(eta_tilde.as_slice(), &v, &mut next);
            let norm = next.norm();
            if norm == 0.0 {
                restarts += 1;
                if restarts > MAX_RESTARTS {
                    return (f64::NEG_INFINITY, restarts);
                }
                continue 'restart;
            }
            acc += norm.ln();
            std::mem::swap(&mut v, &mut next);
            v /= norm;
        }
        return (acc / n_steps as f64, restarts);
    }
}

/// Monte Carlo estimate of the top Lyapunov exponent of `{C_t}` with Gaussian
/// innovations. Replications use seeds derived from `seed` and run in
/// parallel; the result does not depend on scheduling.
pub fn estimate_lyapunov(
    spec: &ModelSpec,
    n_steps: usize,
    n_replications: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if n_steps < 100 {
        return Err(Error::InvalidOptions("n_steps must be >= 100".into()));
    }
    if n_replications == 0 {
        return Err(Error::InvalidOptions("n_replications must be >= 1".into()));
    }
    let factor = correlation_factor(&spec.r)?;
    let op = CompanionOperator::new(spec)?;
    let reps: Vec<(f64, usize)> = (0..n_replications)
        .into_par_iter()
        .map(|r| one_replication(&op, &factor, n_steps, derive_seed(seed, r as u64)))
        .collect();
    let restarts = reps.iter().map(|r| r.1).sum();
    if reps.iter().any(|r| r.0 == f64::NEG_INFINITY) {
        return Ok(LyapunovEstimate {
            gamma_hat: f64::NEG_INFINITY,
            std_error: 0.0,
            n_steps,
            n_replications,
            restarts,
        });
    }
    let n = n_replications as f64;
    let mean = reps.iter().map(|r| r.0).sum::<f64>() / n;
    let std_error = if n_replications > 1 {
        let var = reps.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(LyapunovEstimate {
        gamma_hat: mean,
        std_error,
        n_steps,
        n_replications,
        restarts,
    })
}

/// The `pm x pm` companion matrix of `B_1 .. B_p`.
pub fn b_companion(spec: &ModelSpec) -> DMatrix<f64> {
    let o = spec.orders;
    let (m, p) = (o.m, o.p);
    let mut c = DMatrix::zeros(p * m, p * m);
    for k in 0..p {
        c.view_mut((0, k * m), (m, m)).copy_from(&spec.b[k]);
    }
    for r in m..p * m {
        c[(r, r - m)] = 1.0;
    }
    c
}

/// Spectral radius of the GARCH companion matrix (0 when `p = 0`).
pub fn spectral_radius_b(spec: &ModelSpec) -> f64 {
    if spec.orders.p == 0 {
        return 0.0;
    }
    b_companion(spec)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}
