//! The powered-volatility recursion
//!
//! ```text
//! h_t^{delta/2} = omega + sum_i A_i+ (eps+_{t-i})^{delta/2} + A_i- (eps-_{t-i})^{delta/2}
//!                       + sum_j B_j h_{t-j}^{delta/2}
//! ```
//!
//! with componentwise powers, together with its ARCH(infinity) expansion and
//! the rank-based identifiability diagnostic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::params::ModelSpec;
use crate::stationarity::spectral_radius_b;

/// Any powered volatility above this aborts the recursion.
pub const EXPLOSION_THRESHOLD: f64 = 1e300;

/// Observed returns, one row per time step (row-major `n x m`).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsMatrix {
    data: Vec<f64>,
    n: usize,
    m: usize,
}

impl ReturnsMatrix {
    pub fn new(n: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Dimension("returns matrix must be non-empty".into()));
        }
        if data.len() != n * m {
            return Err(Error::Dimension(format!(
                "returns buffer has {} entries, expected {}",
                data.len(),
                n * m
            )));
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Parse {
                row: k / m,
                column: k % m,
                message: "non-finite return".into(),
            });
        }
        Ok(Self { data, n, m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("ragged returns rows".into()));
        }
        Self::new(rows.len(), m, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.m..(t + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|t| self.data[t * self.m + i]).collect()
    }

    /// Rows `start..end`.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n {
            return Err(Error::Dimension(format!(
                "window {start}..{end} outside 0..{}",
                self.n
            )));
        }
        Self::new(
            end - start,
            self.m,
            self.data[start * self.m..end * self.m].to_vec(),
        )
    }
}

/// Powered positive and negative parts of one return vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSplit {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

/// `x^d` for `x >= 0`, exact for the common powers 1 and 2.
#[inline]
pub(crate) fn pow_nonneg(x: f64, d: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if d == 2.0 {
        x * x
    } else if d == 1.0 {
        x
    } else {
        x.powf(d)
    }
}

/// `hpow^{2/delta}`; identity when `delta == 2`.
#[inline]
pub(crate) fn hpow_to_h(hpow: f64, delta: f64) -> f64 {
    if delta == 2.0 {
        hpow
    } else {
        ((2.0 / delta) * hpow.ln()).exp()
    }
}

#[inline]
pub(crate) fn split_into(eps: &[f64], delta: &[f64], plus: &mut [f64], minus: &mut [f64]) {
    for i in 0..eps.len() {
        let e = eps[i];
        if e > 0.0 {
            plus[i] = pow_nonneg(e, delta[i]);
            minus[i] = 0.0;
        } else {
            plus[i] = 0.0;
            minus[i] = pow_nonneg(-e, delta[i]);
        }
    }
}

/// `plus_i = max(0, eps_i)^{delta_i}`, `minus_i = max(0, -eps_i)^{delta_i}`.
pub fn power_split(eps: &[f64], delta: &[f64]) -> PowerSplit {
    let mut plus = vec![0.0; eps.len()];
    let mut minus = vec![0.0; eps.len()];
    split_into(eps, delta, &mut plus, &mut minus);
    PowerSplit { plus, minus }
}

/// Explicit presample values. Index 0 is lag 1 (the most recent value).
#[derive(Debug, Clone, PartialEq)]
pub struct Presample {
    /// `q` rows of powered positive parts.
    pub plus: Vec<Vec<f64>>,
    /// `q` rows of powered negative parts.
    pub minus: Vec<Vec<f64>>,
    /// `p` rows of powered volatilities.
    pub hpow: Vec<Vec<f64>>,
}

/// How the recursion is started before the first observation.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitPolicy {
    /// Presample powered returns 0 and presample powered volatility omega.
    #[default]
    ZeroOmega,
    /// Presample powered returns at their sample means, powered volatility omega.
    SampleMean,
    /// Caller-supplied presample (used to replay a simulated path exactly).
    Presample(Presample),
}

/// Powered volatilities `h_t^{delta/2}` and volatilities `h_t`, row-major `n x m`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityPath {
    pub hpow: Vec<f64>,
    pub h: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub presample: InitPolicy,
}

impl VolatilityPath {
    pub fn hpow_row(&self, t: usize) -> &[f64] {
        &self.hpow[t * self.m..(t + 1) * self.m]
    }

    pub fn h_row(&self, t: usize) -> &[f64] {
        &self.h[t * self.m..(t + 1) * self.m]
    }

    /// `D_t = diag(sqrt(h_t))`.
    pub fn d_matrix(&self, t: usize) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.m,
            self.h_row(t).iter().map(|x| x.sqrt()),
        ))
    }

    /// `H_t = D_t R D_t`.
    pub fn h_matrix(&self, t: usize, r: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.d_matrix(t);
        &d * r * &d
    }
}

/// Cheap admissibility check used before running the recursion.
pub(crate) fn admissible(spec: &ModelSpec) -> bool {
    spec.omega.iter().all(|&w| w > 0.0 && w.is_finite())
        && spec.delta.iter().all(|&d| d > 0.0 && d.is_finite())
        && spec
            .a_plus
            .iter()
            .chain(&spec.a_minus)
            .chain(&spec.b)
            .all(|a| a.iter().all(|&x| x >= 0.0 && x.is_finite()))
}

/// Shared one-step evaluator used by both the recursion and the simulator so
/// that the two produce bit-identical paths.
///
/// History buffers are row-major with the presample rows first: the ARCH
/// buffers hold `q` presample rows, the GARCH buffer `p`.
pub(crate) struct Kernel<'a> {
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub omega: &'a [f64],
    pub a_plus: Vec<&'a [f64]>,
    pub a_minus: Vec<&'a [f64]>,
    pub b: Vec<&'a [f64]>,
}

impl<'a> Kernel<'a> {
    pub fn new(spec: &'a ModelSpec) -> Self {
        let o = spec.orders;
        Self {
            m: o.m,
            p: o.p,
            q: o.q,
            omega: &spec.omega,
            a_plus: spec.a_plus.iter().map(|a| a.as_slice()).collect(),
            a_minus: spec.a_minus.iter().map(|a| a.as_slice()).collect(),
            b: spec.b.iter().map(|a| a.as_slice()).collect(),
        }
    }

    /// Fills the presample rows of the history buffers.
    pub fn seed_history(
        &self,
        init: &InitPolicy,
        mean_plus: Option<&[f64]>,
        mean_minus: Option<&[f64]>,
        plus: &mut [f64],
        minus: &mut [f64],
        hpow: &mut [f64],
    ) -> Result<()> {
        let (m, p, q) = (self.m, self.p, self.q);
        match init {
            InitPolicy::ZeroOmega | InitPolicy::SampleMean => {
                for k in 0..q {
                    let row = k * m..(k + 1) * m;
                    match (init, mean_plus, mean_minus) {
                        (InitPolicy::SampleMean, Some(mp), Some(mm)) => {
                            plus[row.clone()].copy_from_slice(mp);
                            minus[row].copy_from_slice(mm);
                        }
                        _ => {
                            plus[row.clone()].fill(0.0);
                            minus[row].fill(0.0);
                        }
                    }
                }
                for k in 0..p {
                    hpow[k * m..(k + 1) * m].copy_from_slice(self.omega);
                }
            }
            InitPolicy::Presample(pre) => {
                let ok = pre.plus.len() == q
                    && pre.minus.len() == q
                    && pre.hpow.len() == p
                    && pre
                        .plus
                        .iter()
                        .chain(&pre.minus)
                        .chain(&pre.hpow)
                        .all(|r| r.len() == m);
                if !ok {
                    return Err(Error::Dimension("presample shape does not match orders".into()));
                }
                // buffer row q-1 is lag 1
                for k in 0..q {
                    let row = (q - 1 - k) * m..(q - k) * m;
                    plus[row.clone()].copy_from_slice(&pre.plus[k]);
                    minus[row].copy_from_slice(&pre.minus[k]);
                }
                for k in 0..p {
                    hpow[(p - 1 - k) * m..(p - k) * m].copy_from_slice(&pre.hpow[k]);
                }
            }
        }
        Ok(())
    }

    /// Powered volatility of observation `t` into `out`.
    #[inline]
    pub fn step(&self, t: usize, plus: &[f64], minus: &[f64], hpow: &[f64], out: &mut [f64]) {
        let m = self.m;
        out.copy_from_slice(self.omega);
        for k in 1..=self.q {
            let base = (self.q + t - k) * m;
            let (ap, am) = (self.a_plus[k - 1], self.a_minus[k - 1]);
            for j in 0..m {
                let xp = plus[base + j];
                let xm = minus[base + j];
                let col = j * m;
                for i in 0..m {
                    out[i] += ap[col + i] * xp + am[col + i] * xm;
                }
            }
        }
        for k in 1..=self.p {
            let base = (self.p + t - k) * m;
            let bk = self.b[k - 1];
            for j in 0..m {
                let x = hpow[base + j];
                let col = j * m;
                for i in 0..m {
                    out[i] += bk[col + i] * x;
                }
            }
        }
    }
}

/// Runs the recursion over `returns`, calling `visit(t, hpow_t)` for each
/// observation. Returns the full powered-volatility history (presample rows
/// first).
pub(crate) fn run_recursion<F>(
    spec: &ModelSpec,
    returns: &ReturnsMatrix,
    init: &InitPolicy,
    mut visit: F,
) -> Result<Vec<f64>>
where
    F: FnMut(usize, &[f64]),
{
    let o = spec.orders;
    let (m, p, q, n) = (o.m, o.p, o.q, returns.n());
    if returns.m() != m {
        return Err(Error::Dimension(format!(
            "returns have {} columns, spec has m = {m}",
            returns.m()
        )));
    }
    if !admissible(spec) {
        return Err(Error::InvalidSpec(
            "omega and delta must be positive and coefficients nonnegative".into(),
        ));
    }
    let kernel = Kernel::new(spec);
    let mut plus = vec![0.0; (q + n) * m];
    let mut minus = vec![0.0; (q + n) * m];
    if q > 0 {
        for t in 0..n {
            let row = (q + t) * m..(q + t + 1) * m;
            let (pl, mi) = (&mut plus[row.clone()], &mut minus[row]);
            split_into(returns.row(t), &spec.delta, pl, mi);
        }
    }
    let (mean_plus, mean_minus) = if matches!(init, InitPolicy::SampleMean) && q > 0 {
        let mut mp = vec![0.0; m];
        let mut mm = vec![0.0; m];
        for t in 0..n {
            for i in 0..m {
                mp[i] += plus[(q + t) * m + i];
                mm[i] += minus[(q + t) * m + i];
            }
        }
        mp.iter_mut().chain(mm.iter_mut()).for_each(|x| *x /= n as f64);
        (Some(mp), Some(mm))
    } else {
        (None, None)
    };
    let mut hpow = vec![0.0; (p + n) * m];
    kernel.seed_history(
        init,
        mean_plus.as_deref(),
        mean_minus.as_deref(),
        &mut plus,
        &mut minus,
        &mut hpow,
    )?;
    let mut cur = vec![0.0; m];
    for t in 0..n {
        kernel.step(t, &plus, &minus, &hpow, &mut cur);
        if cur.iter().any(|&x| !(x <= EXPLOSION_THRESHOLD)) {
            return Err(Error::ExplosivePath { index: t });
        }
        hpow[(p + t) * m..(p + t + 1) * m].copy_from_slice(&cur);
        visit(t, &cur);
    }
    Ok(hpow)
}

/// Evaluates the volatility recursion over the observed returns.
pub fn recursion(
    spec: &ModelSpec,
    returns: &ReturnsMatrix,
    init: &InitPolicy,
) -> Result<VolatilityPath> {
    let m = spec.orders.m;
    let n = returns.n();
    let mut h = Vec::with_capacity(n * m);
    let full = run_recursion(spec, returns, init, |_, row| {
        h.extend(row.iter().zip(&spec.delta).map(|(&x, &d)| hpow_to_h(x, d)));
    })?;
    let p = spec.orders.p;
    Ok(VolatilityPath {
        hpow: full[p * m..].to_vec(),
        h,
        n,
        m,
        presample: init.clone(),
    })
}

/// Truncated expansion `h^{delta/2}_t = c + sum_k Psi+_k eps+_{t-k} + Psi-_k eps-_{t-k}`.
#[derive(Debug, Clone)]
pub struct ArchInfinity {
    /// `Psi+_0 .. Psi+_K` (`Psi+_0 = 0`).
    pub psi_plus: Vec<DMatrix<f64>>,
    pub psi_minus: Vec<DMatrix<f64>>,
    /// `B(1)^{-1} omega`.
    pub constant: DVector<f64>,
}

/// Coefficients of `B(L)^{-1} A+(L)` and `B(L)^{-1} A-(L)` up to lag `truncation`.
pub fn arch_infinity_weights(spec: &ModelSpec, truncation: usize) -> Result<ArchInfinity> {
    let o = spec.orders;
    let m = o.m;
    let radius = spectral_radius_b(spec);
    if radius >= 1.0 {
        return Err(Error::NonInvertibleBPolynomial {
            spectral_radius: radius,
        });
    }
    let expand = |a: &[DMatrix<f64>]| {
        let mut psi: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, m)];
        for k in 1..=truncation {
            let mut cur = if k <= o.q {
                a[k - 1].clone()
            } else {
                DMatrix::zeros(m, m)
            };
            for j in 1..=o.p.min(k - 1) {
                cur += &spec.b[j - 1] * &psi[k - j];
            }
            psi.push(cur);
        }
        psi
    };
    let mut b1 = DMatrix::identity(m, m);
    for bj in &spec.b {
        b1 -= bj;
    }
    let constant = b1
        .lu()
        .solve(&DVector::from_column_slice(&spec.omega))
        .ok_or(Error::NonInvertibleBPolynomial {
            spectral_radius: radius,
        })?;
    Ok(ArchInfinity {
        psi_plus: expand(&spec.a_plus),
        psi_minus: expand(&spec.a_minus),
        constant,
    })
}

/// Outcome of the rank-based identifiability check.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiabilityReport {
    /// Left-coprimeness of the lag polynomials is never verified.
    pub left_coprime_skipped: bool,
    /// `p = 0`: identifiability holds without the rank condition.
    pub trivially_identified: bool,
    /// `A+(1) + A-(1) != 0`.
    pub nonzero_sum: bool,
    pub rank_m: usize,
    pub full_rank: bool,
    /// The `m x 3m` matrix of highest-degree column coefficients.
    pub m_matrix: DMatrix<f64>,
}

/// Relative singular-value threshold for the numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Numerical rank: singular values above `RANK_TOLERANCE * sigma_max`.
pub fn numerical_rank(x: &DMatrix<f64>) -> usize {
    if x.is_empty() {
        return 0;
    }
    let sv = x.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * smax).count()
}

/// For each column, the coefficient vector of the highest lag at which that
/// column is nonzero (a zero column if it vanishes at every lag).
fn top_degree_columns(mats: &[DMatrix<f64>], m: usize) -> Vec<DVector<f64>> {
    (0..m)
        .map(|col| {
            mats.iter()
                .rev()
                .map(|a| a.column(col).into_owned())
                .find(|c| c.iter().any(|&x| x != 0.0))
                .unwrap_or_else(|| DVector::zeros(m))
        })
        .collect()
}

pub fn check_identifiability(spec: &ModelSpec) -> IdentifiabilityReport {
    let o = spec.orders;
    let m = o.m;
    let mut sum = DMatrix::zeros(m, m);
    for a in spec.a_plus.iter().chain(&spec.a_minus) {
        sum += a;
    }
    let nonzero_sum = sum.iter().any(|&x| x != 0.0);
    let cols: Vec<DVector<f64>> = top_degree_columns(&spec.a_plus, m)
        .into_iter()
        .chain(top_degree_columns(&spec.a_minus, m))
        .chain(top_degree_columns(&spec.b, m))
        .collect();
    let m_matrix = DMatrix::from_columns(&cols);
    if o.p == 0 {
        return IdentifiabilityReport {
            left_coprime_skipped: true,
            trivially_identified: true,
            nonzero_sum,
            rank_m: m,
            full_rank: true,
            m_matrix,
        };
    }
    let rank_m = numerical_rank(&m_matrix);
    IdentifiabilityReport {
        left_coprime_skipped: true,
        trivially_identified: false,
        nonzero_sum,
        rank_m,
        full_rank: rank_m == m,
        m_matrix,
    }
}
