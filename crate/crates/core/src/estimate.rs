//! Quasi-maximum likelihood estimation with multistart.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::{objective_fn, objective_total, DEFAULT_GRADIENT_STEP};
use crate::optim::{refine, simplex, Bounds, MinimizeOptions};
use crate::params::{param_count, rho_from_correlation, EstimationMode, Layout, ModelOrders, ParamVector};
use crate::simulate::derive_seed;
use crate::volatility::{pow_nonneg, InitPolicy, ReturnsMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub mode: EstimationMode,
    /// Box for the packed vector; [`default_bounds`] when `None`.
    pub bounds: Option<Bounds>,
    pub starts: usize,
    /// Cap on quasi-Newton iterations.
    pub max_iterations: usize,
    /// Cap on simplex iterations per start.
    pub simplex_iterations: usize,
    pub tolerance: f64,
    pub grad_tol: f64,
    /// Simplex restarts after an unconverged quasi-Newton phase.
    pub restarts: usize,
    pub seed: u64,
    pub init: InitPolicy,
    /// Replaces the heuristic first start.
    pub initial: Option<Vec<f64>>,
}

impl FitOptions {
    pub fn new(mode: EstimationMode) -> Self {
        Self {
            mode,
            bounds: None,
            starts: 1,
            max_iterations: 5000,
            simplex_iterations: 400,
            tolerance: 1e-10,
            grad_tol: 1e-4,
            restarts: 2,
            seed: 0,
            init: InitPolicy::SampleMean,
            initial: None,
        }
    }

    fn minimize_options(&self) -> MinimizeOptions {
        MinimizeOptions {
            max_iterations: self.max_iterations,
            simplex_iterations: self.simplex_iterations,
            tolerance: self.tolerance,
            grad_tol: self.grad_tol,
            gradient_step: DEFAULT_GRADIENT_STEP,
            restarts: self.restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub v_hat: ParamVector,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Index of the start whose simplex phase was polished.
    pub start_index: usize,
    pub n: usize,
    /// Objective after the simplex phase of each start (`+inf` if invalid).
    pub start_objectives: Vec<f64>,
    pub projected_gradient_norm: f64,
    /// Coordinates lying on a bound at the optimum.
    pub boundary_active: Vec<usize>,
    pub init: InitPolicy,
}

/// Box realizing the compact parameter set.
pub fn default_bounds(orders: &ModelOrders, mode: &EstimationMode) -> Bounds {
    let layout = Layout::new(*orders, mode);
    let s = layout.len();
    let mut lower = vec![0.0; s];
    let mut upper = vec![10.0; s];
    for i in layout.omega() {
        lower[i] = 1e-6;
        upper[i] = 1e3;
    }
    if let Some(r) = layout.delta() {
        for i in r {
            lower[i] = 0.05;
            upper[i] = 4.0;
        }
    }
    for i in layout.rho() {
        lower[i] = -0.999;
        upper[i] = 0.999;
    }
    Bounds { lower, upper }
}

/// Heuristic first start: moment-matched intercept, small ARCH coefficients,
/// persistent diagonal GARCH block and sample correlations.
pub fn heuristic_start(returns: &ReturnsMatrix, orders: &ModelOrders, mode: &EstimationMode) -> Vec<f64> {
    let layout = Layout::new(*orders, mode);
    let m = orders.m;
    let n = returns.n() as f64;
    let mut v = vec![0.0; layout.len()];
    let delta: Vec<f64> = match mode {
        EstimationMode::DeltaKnown(d) => d.clone(),
        EstimationMode::DeltaEstimated => vec![1.5; m],
    };
    for (k, i) in layout.omega().enumerate() {
        let mean = returns.column(k).iter().map(|e| pow_nonneg(e.abs(), delta[k])).sum::<f64>() / n;
        v[i] = 0.5 * mean;
    }
    let arch = |r: std::ops::Range<usize>, v: &mut [f64]| {
        for (idx, i) in r.enumerate() {
            v[i] = if idx % m == idx / m { 0.05 } else { 0.01 };
        }
    };
    for lag in 0..orders.q {
        arch(layout.a_plus(lag), &mut v);
        arch(layout.a_minus(lag), &mut v);
    }
    if orders.p >= 1 {
        for (idx, i) in layout.b(0).enumerate() {
            v[i] = if idx % m == idx / m { 0.8 } else { 0.0 };
        }
    }
    if let Some(r) = layout.delta() {
        for i in r {
            v[i] = 1.5;
        }
    }
    let corr = sample_correlation(returns);
    for (i, rho) in layout.rho().zip(rho_from_correlation(&corr)) {
        v[i] = rho;
    }
    v
}

fn sample_correlation(returns: &ReturnsMatrix) -> DMatrix<f64> {
    let m = returns.m();
    let n = returns.n() as f64;
    let cols: Vec<Vec<f64>> = (0..m).map(|i| returns.column(i)).collect();
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let mut cov = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let c = cols[i].iter().zip(&cols[j]).map(|(a, b)| (a - means[i]) * (b - means[j])).sum::<f64>() / n;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0
        } else {
            let d = (cov[(i, i)] * cov[(j, j)]).sqrt();
            if d > 0.0 {
                cov[(i, j)] / d
            } else {
                0.0
            }
        }
    })
}

/// Start vectors: the heuristic (or caller) start followed by jittered copies.
pub fn start_points(
    returns: &ReturnsMatrix,
    orders: &ModelOrders,
    options: &FitOptions,
    bounds: &Bounds,
) -> Vec<Vec<f64>> {
    let mut first = options
        .initial
        .clone()
        .unwrap_or_else(|| heuristic_start(returns, orders, &options.mode));
    bounds.clamp(&mut first);
    let mut out = vec![first.clone()];
    for k in 1..options.starts {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(options.seed, k as u64));
        let mut x: Vec<f64> = first.iter().map(|v| v * rng.random_range(0.5..1.5)).collect();
        bounds.clamp(&mut x);
        out.push(x);
    }
    out
}

/// QML estimate of the packed parameter from `returns`.
pub fn fit_qmle(returns: &ReturnsMatrix, orders: ModelOrders, options: &FitOptions) -> Result<FitResult> {
    if returns.m() != orders.m {
        return Err(Error::InvalidSpec(format!(
            "returns have {} columns, model has m = {}",
            returns.m(),
            orders.m
        )));
    }
    if let EstimationMode::DeltaKnown(d) = &options.mode {
        if d.len() != orders.m {
            return Err(Error::DeltaLengthMismatch {
                expected: orders.m,
                found: d.len(),
            });
        }
    }
    let s = param_count(&orders, &options.mode);
    if returns.n() <= s {
        return Err(Error::NotEnoughData { n: returns.n(), params: s });
    }
    if options.starts == 0 {
        return Err(Error::InvalidOptions("starts must be at least 1".into()));
    }
    let bounds = options.bounds.clone().unwrap_or_else(|| default_bounds(&orders, &options.mode));
    if bounds.len() != s {
        return Err(Error::InvalidOptions(format!("expected {s} bound pairs, got {}", bounds.len())));
    }
    if let Some(x) = &options.initial {
        if x.len() != s {
            return Err(Error::InvalidOptions(format!("initial point has {} entries, expected {s}", x.len())));
        }
    }
    let template = ParamVector::new(vec![0.0; s], options.mode.clone(), orders)?;
    let f = objective_fn(&template, returns, &options.init);
    let opts = options.minimize_options();
    let starts = start_points(returns, &orders, options, &bounds);
    let warm: Vec<_> = starts
        .par_iter()
        .map(|x0| simplex(&f, x0, &bounds, &opts))
        .collect::<Result<_>>()?;
    let start_objectives: Vec<f64> = warm.iter().map(|w| w.value).collect();
    let (start_index, best) = warm
        .iter()
        .enumerate()
        .filter(|(_, w)| w.value.is_finite())
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .ok_or(Error::AllStartsInvalid)?;
    let min = refine(&f, &best.x, &bounds, &opts)?;
    let v_hat = template.with_values(min.x);
    let objective = objective_total(&v_hat, returns, &options.init);
    Ok(FitResult {
        boundary_active: bounds.active(&v_hat.values, 1e-9),
        v_hat,
        objective,
        converged: min.converged,
        iterations: best.iterations + min.iterations,
        start_index,
        n: returns.n(),
        start_objectives,
        projected_gradient_norm: min.projected_gradient_norm,
        init: options.init.clone(),
    })
}
