//! Model parameterization: orders, the structured [`ModelSpec`], the flat
//! [`ParamVector`] used by the optimizer, and the human-editable config form.
//!
//! Packed layout (both estimation modes):
//!
//! ```text
//! omega (m) | vec(A1+) .. vec(Aq+) | vec(A1-) .. vec(Aq-) | vec(B1) .. vec(Bp) | [delta (m)] | rho
//! ```
//!
//! `vec` is column-major and `rho` is the strict lower triangle of `R` read
//! column by column: (2,1), (3,1), .., (m,1), (3,2), .., (m,m-1).

use std::fmt;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Series dimension `m`, GARCH order `p` and ARCH order `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOrders {
    pub m: usize,
    pub p: usize,
    pub q: usize,
}

impl ModelOrders {
    pub fn new(m: usize, p: usize, q: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidSpec("series dimension m must be >= 1".into()));
        }
        Ok(Self { m, p, q })
    }

    /// Number of strict lower-triangular correlation entries.
    pub fn n_rho(&self) -> usize {
        self.m * (self.m - 1) / 2
    }
}

/// Whether the power vector is fixed or part of the estimated parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimationMode {
    /// Power vector fixed at the carried values; the packed vector holds no
    /// power entries.
    DeltaKnown(Vec<f64>),
    DeltaEstimated,
}

impl EstimationMode {
    pub fn estimates_delta(&self) -> bool {
        matches!(self, EstimationMode::DeltaEstimated)
    }

    pub fn label(&self) -> &'static str {
        match self {
            EstimationMode::DeltaKnown(_) => "known",
            EstimationMode::DeltaEstimated => "estimate",
        }
    }
}

/// Full CCC-APGARCH(p, q) parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub orders: ModelOrders,
    pub omega: Vec<f64>,
    pub a_plus: Vec<DMatrix<f64>>,
    pub a_minus: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub r: DMatrix<f64>,
    pub delta: Vec<f64>,
}

impl ModelSpec {
    /// Builds a spec after checking that every component has the shape the
    /// orders require. Values are not checked here, see [`validate`].
    pub fn new(
        orders: ModelOrders,
        omega: Vec<f64>,
        a_plus: Vec<DMatrix<f64>>,
        a_minus: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        r: DMatrix<f64>,
        delta: Vec<f64>,
    ) -> Result<Self> {
        let spec = Self {
            orders,
            omega,
            a_plus,
            a_minus,
            b,
            r,
            delta,
        };
        spec.check_shapes()?;
        Ok(spec)
    }

    pub fn check_shapes(&self) -> Result<()> {
        let ModelOrders { m, p, q } = self.orders;
        let bad = |what: &str| Err(Error::InvalidSpec(format!("shape mismatch in {what}")));
        if self.omega.len() != m {
            return bad("omega");
        }
        if self.delta.len() != m {
            return bad("delta");
        }
        if self.a_plus.len() != q || self.a_minus.len() != q || self.b.len() != p {
            return bad("lag counts");
        }
        let square = |x: &DMatrix<f64>| x.nrows() == m && x.ncols() == m;
        if !self.a_plus.iter().chain(&self.a_minus).chain(&self.b).all(square) {
            return bad("coefficient matrices");
        }
        if !square(&self.r) {
            return bad("correlation matrix");
        }
        Ok(())
    }

    /// Strict lower triangle of `R` in packed order.
    pub fn rho(&self) -> Vec<f64> {
        rho_from_correlation(&self.r)
    }

    /// Constant-volatility spec (p = q = 0).
    pub fn constant(omega: Vec<f64>, r: DMatrix<f64>, delta: Vec<f64>) -> Result<Self> {
        let m = omega.len();
        Self::new(
            ModelOrders::new(m, 0, 0)?,
            omega,
            vec![],
            vec![],
            vec![],
            r,
            delta,
        )
    }
}

/// Correlation matrix with unit diagonal from its packed strict lower triangle.
pub fn correlation_from_rho(m: usize, rho: &[f64]) -> DMatrix<f64> {
    let mut r = DMatrix::identity(m, m);
    let mut k = 0;
    for j in 0..m {
        for i in (j + 1)..m {
            r[(i, j)] = rho[k];
            r[(j, i)] = rho[k];
            k += 1;
        }
    }
    r
}

pub fn rho_from_correlation(r: &DMatrix<f64>) -> Vec<f64> {
    let m = r.nrows();
    let mut out = Vec::with_capacity(m * (m - 1) / 2);
    for j in 0..m {
        for i in (j + 1)..m {
            out.push(r[(i, j)]);
        }
    }
    out
}

/// Packed vector length for the given orders and mode.
pub fn param_count(orders: &ModelOrders, mode: &EstimationMode) -> usize {
    let ModelOrders { m, p, q } = *orders;
    let base = m + m * m * (p + 2 * q) + orders.n_rho();
    if mode.estimates_delta() {
        base + m
    } else {
        base
    }
}

/// Offsets of each block inside a packed vector.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub orders: ModelOrders,
    pub estimates_delta: bool,
}

impl Layout {
    pub fn new(orders: ModelOrders, mode: &EstimationMode) -> Self {
        Self {
            orders,
            estimates_delta: mode.estimates_delta(),
        }
    }

    pub fn omega(&self) -> std::ops::Range<usize> {
        0..self.orders.m
    }

    /// Block of the `A+` matrix at zero-based lag index `lag` (lag `lag + 1`).
    pub fn a_plus(&self, lag: usize) -> std::ops::Range<usize> {
        let mm = self.orders.m * self.orders.m;
        let start = self.orders.m + lag * mm;
        start..start + mm
    }

    pub fn a_minus(&self, lag: usize) -> std::ops::Range<usize> {
        self.a_plus(self.orders.q + lag)
    }

    pub fn b(&self, lag: usize) -> std::ops::Range<usize> {
        self.a_plus(2 * self.orders.q + lag)
    }

    fn coeff_end(&self) -> usize {
        let ModelOrders { m, p, q } = self.orders;
        m + m * m * (2 * q + p)
    }

    pub fn delta(&self) -> Option<std::ops::Range<usize>> {
        self.estimates_delta
            .then(|| self.coeff_end()..self.coeff_end() + self.orders.m)
    }

    pub fn rho(&self) -> std::ops::Range<usize> {
        let start = self.coeff_end() + if self.estimates_delta { self.orders.m } else { 0 };
        start..start + self.orders.n_rho()
    }

    pub fn len(&self) -> usize {
        self.rho().end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Range of every nonnegative coefficient entry (A+, A-, B).
    pub fn coefficients(&self) -> std::ops::Range<usize> {
        self.orders.m..self.coeff_end()
    }
}

/// Human-readable names in packed order, 1-based indices.
pub fn parameter_names(orders: &ModelOrders, mode: &EstimationMode) -> Vec<String> {
    let ModelOrders { m, p, q } = *orders;
    let mut names = Vec::with_capacity(param_count(orders, mode));
    for i in 0..m {
        names.push(format!("omega[{}]", i + 1));
    }
    let matrix = |prefix: &str, lag: usize, names: &mut Vec<String>| {
        for col in 0..m {
            for row in 0..m {
                names.push(format!("{prefix}{}[{},{}]", lag + 1, row + 1, col + 1));
            }
        }
    };
    for k in 0..q {
        matrix("a_plus_", k, &mut names);
    }
    for k in 0..q {
        matrix("a_minus_", k, &mut names);
    }
    for k in 0..p {
        matrix("b_", k, &mut names);
    }
    if mode.estimates_delta() {
        for i in 0..m {
            names.push(format!("delta[{}]", i + 1));
        }
    }
    for j in 0..m {
        for i in (j + 1)..m {
            names.push(format!("rho[{},{}]", i + 1, j + 1));
        }
    }
    names
}

/// Flat parameter vector together with the mode and orders needed to decode it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub mode: EstimationMode,
    pub orders: ModelOrders,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, mode: EstimationMode, orders: ModelOrders) -> Result<Self> {
        let expected = param_count(&orders, &mode);
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: values.len(),
            });
        }
        if let EstimationMode::DeltaKnown(d) = &mode {
            if d.len() != orders.m {
                return Err(Error::DeltaLengthMismatch {
                    expected: orders.m,
                    found: d.len(),
                });
            }
        }
        Ok(Self {
            values,
            mode,
            orders,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.orders, &self.mode)
    }

    /// Same mode and orders, different values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            values,
            mode: self.mode.clone(),
            orders: self.orders,
        }
    }
}

/// Encodes a spec. With [`EstimationMode::DeltaKnown`] the fixed powers are
/// taken from the mode, so the same spec can be packed under a hypothesized
/// power vector.
pub fn pack(spec: &ModelSpec, mode: &EstimationMode) -> Result<ParamVector> {
    spec.check_shapes()?;
    let orders = spec.orders;
    if let EstimationMode::DeltaKnown(d) = mode {
        if d.len() != orders.m {
            return Err(Error::DeltaLengthMismatch {
                expected: orders.m,
                found: d.len(),
            });
        }
    }
    let mut values = Vec::with_capacity(param_count(&orders, mode));
    values.extend_from_slice(&spec.omega);
    for mat in spec.a_plus.iter().chain(&spec.a_minus).chain(&spec.b) {
        values.extend_from_slice(mat.as_slice());
    }
    if mode.estimates_delta() {
        values.extend_from_slice(&spec.delta);
    }
    values.extend(spec.rho());
    ParamVector::new(values, mode.clone(), orders)
}

/// Decodes without checking that `R` is positive definite.
pub fn unpack_unchecked(v: &ParamVector) -> Result<ModelSpec> {
    let layout = v.layout();
    if v.values.len() != layout.len() {
        return Err(Error::LengthMismatch {
            expected: layout.len(),
            found: v.values.len(),
        });
    }
    let ModelOrders { m, p, q } = v.orders;
    let x = &v.values;
    let mat = |r: std::ops::Range<usize>| DMatrix::from_column_slice(m, m, &x[r]);
    let delta = match (&v.mode, layout.delta()) {
        (EstimationMode::DeltaKnown(d), _) => d.clone(),
        (EstimationMode::DeltaEstimated, Some(r)) => x[r].to_vec(),
        (EstimationMode::DeltaEstimated, None) => unreachable!(),
    };
    Ok(ModelSpec {
        orders: v.orders,
        omega: x[layout.omega()].to_vec(),
        a_plus: (0..q).map(|k| mat(layout.a_plus(k))).collect(),
        a_minus: (0..q).map(|k| mat(layout.a_minus(k))).collect(),
        b: (0..p).map(|k| mat(layout.b(k))).collect(),
        r: correlation_from_rho(m, &x[layout.rho()]),
        delta,
    })
}

/// Inverse of [`pack`]. Fails if the reconstructed correlation matrix is not
/// positive definite.
pub fn unpack(v: &ParamVector) -> Result<ModelSpec> {
    let spec = unpack_unchecked(v)?;
    if Cholesky::new(spec.r.clone()).is_none() {
        return Err(Error::NonPositiveDefiniteCorrelation);
    }
    Ok(spec)
}

/// A single failed check reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    NonFinite(String),
    OmegaNotPositive(usize),
    DeltaNotPositive(usize),
    NegativeCoefficient {
        matrix: &'static str,
        lag: usize,
        row: usize,
        col: usize,
    },
    CorrelationDiagonal(usize),
    CorrelationAsymmetric(usize, usize),
    CorrelationOutOfRange(usize, usize),
    CorrelationNotPositiveDefinite,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(s) => write!(f, "shape: {s}"),
            Violation::NonFinite(s) => write!(f, "{s} not finite"),
            Violation::OmegaNotPositive(i) => write!(f, "omega[{i}] not strictly positive"),
            Violation::DeltaNotPositive(i) => write!(f, "delta[{i}] not strictly positive"),
            Violation::NegativeCoefficient {
                matrix,
                lag,
                row,
                col,
            } => write!(f, "{matrix}[{lag}][{row},{col}] negative"),
            Violation::CorrelationDiagonal(i) => write!(f, "R[{i},{i}] not equal to 1"),
            Violation::CorrelationAsymmetric(i, j) => write!(f, "R[{i},{j}] != R[{j},{i}]"),
            Violation::CorrelationOutOfRange(i, j) => write!(f, "R[{i},{j}] outside (-1, 1)"),
            Violation::CorrelationNotPositiveDefinite => write!(f, "R not positive definite"),
        }
    }
}

/// Lists every violated constraint; an empty list means the spec is valid.
pub fn validate(spec: &ModelSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Err(e) = spec.check_shapes() {
        out.push(Violation::Shape(e.to_string()));
        return out;
    }
    let m = spec.orders.m;
    for (i, &w) in spec.omega.iter().enumerate() {
        if !w.is_finite() {
            out.push(Violation::NonFinite(format!("omega[{i}]")));
        } else if w <= 0.0 {
            out.push(Violation::OmegaNotPositive(i));
        }
    }
    for (i, &d) in spec.delta.iter().enumerate() {
        if !d.is_finite() {
            out.push(Violation::NonFinite(format!("delta[{i}]")));
        } else if d <= 0.0 {
            out.push(Violation::DeltaNotPositive(i));
        }
    }
    let groups: [(&'static str, &Vec<DMatrix<f64>>); 3] =
        [("a_plus", &spec.a_plus), ("a_minus", &spec.a_minus), ("b", &spec.b)];
    for (name, mats) in groups {
        for (lag, mat) in mats.iter().enumerate() {
            for col in 0..m {
                for row in 0..m {
                    let x = mat[(row, col)];
                    if !x.is_finite() {
                        out.push(Violation::NonFinite(format!("{name}[{lag}][{row},{col}]")));
                    } else if x < 0.0 {
                        out.push(Violation::NegativeCoefficient {
                            matrix: name,
                            lag,
                            row,
                            col,
                        });
                    }
                }
            }
        }
    }
    let r = &spec.r;
    let mut finite_r = true;
    for i in 0..m {
        for j in 0..m {
            if !r[(i, j)].is_finite() {
                out.push(Violation::NonFinite(format!("R[{i},{j}]")));
                finite_r = false;
            }
        }
    }
    if !finite_r {
        return out;
    }
    for i in 0..m {
        if r[(i, i)] != 1.0 {
            out.push(Violation::CorrelationDiagonal(i));
        }
        for j in (i + 1)..m {
            if r[(i, j)] != r[(j, i)] {
                out.push(Violation::CorrelationAsymmetric(i, j));
            }
            if r[(i, j)].abs() >= 1.0 || r[(j, i)].abs() >= 1.0 {
                out.push(Violation::CorrelationOutOfRange(i, j));
            }
        }
    }
    let sym = (r + r.transpose()) * 0.5;
    if Cholesky::new(sym).is_none() {
        out.push(Violation::CorrelationNotPositiveDefinite);
    }
    out
}

/// `delta_mode` key of the config document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DeltaModeKey {
    #[default]
    Known,
    Estimate,
}

/// Config-document form of a spec. Matrices are written row by row.
///
/// ```toml
/// m = 2
/// p = 0
/// q = 1
/// omega = [1.0, 1.0]
/// a_plus = [[[0.25, 0.05], [0.05, 0.25]]]
/// a_minus = [[[0.5, 0.5], [0.5, 0.5]]]
/// b = []
/// rho = [0.5]
/// delta = [2.0, 2.0]
/// delta_mode = "known"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub omega: Vec<f64>,
    #[serde(default)]
    pub a_plus: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub a_minus: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub rho: Vec<f64>,
    pub delta: Vec<f64>,
    #[serde(default)]
    pub delta_mode: DeltaModeKey,
}

fn rows_to_matrix(m: usize, rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config(format!("{what} must be a {m}x{m} matrix")));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

fn matrix_to_rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| (0..x.ncols()).map(|j| x[(i, j)]).collect())
        .collect()
}

impl SpecConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_spec(spec: &ModelSpec, mode: &EstimationMode) -> Self {
        let ModelOrders { m, p, q } = spec.orders;
        Self {
            m,
            p,
            q,
            omega: spec.omega.clone(),
            a_plus: spec.a_plus.iter().map(matrix_to_rows).collect(),
            a_minus: spec.a_minus.iter().map(matrix_to_rows).collect(),
            b: spec.b.iter().map(matrix_to_rows).collect(),
            rho: spec.rho(),
            delta: spec.delta.clone(),
            delta_mode: if mode.estimates_delta() {
                DeltaModeKey::Estimate
            } else {
                DeltaModeKey::Known
            },
        }
    }

    /// Structured spec plus the estimation mode (known mode carries `delta`).
    pub fn to_spec(&self) -> Result<(ModelSpec, EstimationMode)> {
        let orders = ModelOrders::new(self.m, self.p, self.q)?;
        let m = self.m;
        let mats = |xs: &[Vec<Vec<f64>>], n: usize, what: &str| -> Result<Vec<DMatrix<f64>>> {
            if xs.len() != n {
                return Err(Error::Config(format!("{what} must hold {n} matrices")));
            }
            xs.iter().map(|rows| rows_to_matrix(m, rows, what)).collect()
        };
        if self.rho.len() != orders.n_rho() {
            return Err(Error::Config(format!(
                "rho must hold {} entries",
                orders.n_rho()
            )));
        }
        if self.omega.len() != m || self.delta.len() != m {
            return Err(Error::Config(format!("omega and delta must have length {m}")));
        }
        let spec = ModelSpec::new(
            orders,
            self.omega.clone(),
            mats(&self.a_plus, self.q, "a_plus")?,
            mats(&self.a_minus, self.q, "a_minus")?,
            mats(&self.b, self.p, "b")?,
            correlation_from_rho(m, &self.rho),
            self.delta.clone(),
        )?;
        let mode = match self.delta_mode {
            DeltaModeKey::Known => EstimationMode::DeltaKnown(self.delta.clone()),
            DeltaModeKey::Estimate => EstimationMode::DeltaEstimated,
        };
        Ok((spec, mode))
    }
}
