//! Box-constrained minimization: a bounded Nelder-Mead warm-up followed by
//! projected quasi-Newton iterations on a numerical gradient.

use crate::error::{Error, Result};
use crate::likelihood::numerical_gradient;

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidOptions("bound vectors differ in length".into()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::InvalidOptions(format!("lower bound exceeds upper bound at coordinate {i}")));
        }
        Ok(Self { lower, upper })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Coordinates sitting on a bound (within `tol` relative to the bound width).
    pub fn active(&self, x: &[f64], tol: f64) -> Vec<usize> {
        (0..x.len())
            .filter(|&i| {
                let w = (self.upper[i] - self.lower[i]).max(1e-12);
                (x[i] - self.lower[i]).abs() <= tol * w || (self.upper[i] - x[i]).abs() <= tol * w
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    /// Cap on quasi-Newton iterations.
    pub max_iterations: usize,
    /// Cap on Nelder-Mead iterations before switching to quasi-Newton.
    pub simplex_iterations: usize,
    /// Relative function-spread tolerance ending the simplex phase.
    pub tolerance: f64,
    /// Projected-gradient sup-norm declaring convergence.
    pub grad_tol: f64,
    pub gradient_step: f64,
    /// Simplex restarts from an unconverged quasi-Newton endpoint.
    pub restarts: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            simplex_iterations: 400,
            tolerance: 1e-10,
            grad_tol: 1e-4,
            gradient_step: 1e-5,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
}

fn eval<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn nelder_mead<F>(f: &F, x0: &[f64], fx0: f64, bounds: &Bounds, opts: &MinimizeOptions) -> (Vec<f64>, f64, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let s = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), fx0)];
    for i in 0..s {
        let step = 0.1 * x0[i].abs().max(0.05);
        let mut x = x0.to_vec();
        x[i] += step;
        bounds.clamp(&mut x);
        if x[i] == x0[i] {
            x[i] -= step;
            bounds.clamp(&mut x);
        }
        let fx = eval(f, &x);
        simplex.push((x, fx));
    }
    let point = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> {
        let mut p: Vec<f64> = c.iter().zip(w).map(|(a, b)| a + t * (b - a)).collect();
        bounds.clamp(&mut p);
        p
    };
    let mut it = 0;
    while it < opts.simplex_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[s].1;
        if best.is_finite() && worst.is_finite() && worst - best <= opts.tolerance.max(1e-9) * (best.abs() + 1e-12) {
            break;
        }
        it += 1;
        let mut centroid = vec![0.0; s];
        for (x, _) in &simplex[..s] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / s as f64;
            }
        }
        let reflected = point(&centroid, &simplex[s].0, -1.0);
        let fr = eval(f, &reflected);
        if fr < simplex[0].1 {
            let expanded = point(&centroid, &simplex[s].0, -2.0);
            let fe = eval(f, &expanded);
            simplex[s] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[s - 1].1 {
            simplex[s] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < simplex[s].1 {
            let c = point(&centroid, &reflected, 0.5);
            let fc = eval(f, &c);
            (c, fc)
        } else {
            let c = point(&centroid, &simplex[s].0, 0.5);
            let fc = eval(f, &c);
            (c, fc)
        };
        if fc < simplex[s].1.min(fr) {
            simplex[s] = (contracted, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for item in simplex.iter_mut().skip(1) {
            let x = point(&x_best, &item.0, 0.5);
            let fx = eval(f, &x);
            *item = (x, fx);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    (x, fx, it)
}

fn projected_gradient(x: &[f64], g: &[f64], bounds: &Bounds) -> f64 {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (xi, gi))| (xi - (xi - gi).clamp(bounds.lower[i], bounds.upper[i])).abs())
        .fold(0.0, f64::max)
}

/// Result of the derivative-free phase.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Bounded Nelder-Mead from `x0` (clamped into the box), stopping once the
/// relative spread of simplex values drops below `tolerance` or after
/// `simplex_iterations` iterations.
pub fn simplex<F>(f: &F, x0: &[f64], bounds: &Bounds, opts: &MinimizeOptions) -> Result<SimplexResult>
where
    F: Fn(&[f64]) -> f64,
{
    if x0.len() != bounds.len() {
        return Err(Error::InvalidOptions("start and bounds differ in length".into()));
    }
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);
    let fx0 = eval(f, &x);
    if !fx0.is_finite() {
        return Ok(SimplexResult {
            x,
            value: f64::INFINITY,
            iterations: 0,
        });
    }
    let (x, value, iterations) = nelder_mead(f, &x, fx0, bounds, opts);
    Ok(SimplexResult { x, value, iterations })
}

/// Minimizes `f` over the box `bounds` starting from `x0`: simplex warm-up
/// then [`polish`].
///
/// `f` may return `+inf` to reject a point. Convergence means the sup-norm of
/// the projected gradient fell below `grad_tol`.
pub fn minimize<F>(f: &F, x0: &[f64], bounds: &Bounds, opts: &MinimizeOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let warm = simplex(f, x0, bounds, opts)?;
    let mut out = refine(f, &warm.x, bounds, opts)?;
    out.iterations += warm.iterations;
    Ok(out)
}

/// [`polish`] from `x0`. While the result is unconverged, a fresh simplex is
/// built around it and polished again, up to `opts.restarts` times; the best
/// point seen is returned.
pub fn refine<F>(f: &F, x0: &[f64], bounds: &Bounds, opts: &MinimizeOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut best = polish(f, x0, bounds, opts)?;
    let mut iterations = best.iterations;
    for _ in 0..opts.restarts {
        if best.converged || !best.value.is_finite() {
            break;
        }
        let warm = simplex(f, &best.x, bounds, opts)?;
        let next = polish(f, &warm.x, bounds, opts)?;
        iterations += warm.iterations + next.iterations;
        if next.converged || next.value < best.value {
            best = next;
        }
    }
    best.iterations = iterations;
    Ok(best)
}

/// Projected BFGS on a central-difference gradient from a point inside the box.
pub fn polish<F>(f: &F, x0: &[f64], bounds: &Bounds, opts: &MinimizeOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if x0.len() != bounds.len() {
        return Err(Error::InvalidOptions("start and bounds differ in length".into()));
    }
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);
    let mut fx = eval(f, &x);
    if !fx.is_finite() {
        return Ok(Minimum {
            x,
            value: f64::INFINITY,
            converged: false,
            iterations: 0,
            projected_gradient_norm: f64::INFINITY,
        });
    }
    let s = x.len();
    let mut g = match numerical_gradient(f, &x, opts.gradient_step) {
        Ok(g) => g,
        Err(_) => {
            return Ok(Minimum {
                x,
                value: fx,
                converged: false,
                iterations: 0,
                projected_gradient_norm: f64::INFINITY,
            })
        }
    };
    let mut hinv = identity(s);
    let mut fresh = true;
    let mut pg = projected_gradient(&x, &g, bounds);
    let mut it = 0;
    while it < opts.max_iterations && pg >= opts.grad_tol {
        it += 1;
        let at_bound: Vec<bool> = (0..s)
            .map(|i| (x[i] <= bounds.lower[i] && g[i] > 0.0) || (x[i] >= bounds.upper[i] && g[i] < 0.0))
            .collect();
        let g_free: Vec<f64> = (0..s).map(|i| if at_bound[i] { 0.0 } else { g[i] }).collect();
        let mut d = mat_vec(&hinv, &g_free);
        for (i, di) in d.iter_mut().enumerate() {
            *di = if at_bound[i] { 0.0 } else { -*di };
        }
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            hinv = identity(s);
            fresh = true;
            d = g_free.iter().map(|v| -v).collect();
            slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                break;
            }
        }
        let mut alpha = 1.0;
        if fresh {
            let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let xmax = x.iter().fold(1e-2f64, |a, v| a.max(v.abs()));
            alpha = (0.1 * xmax / dmax).min(1.0);
        }
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            bounds.clamp(&mut trial);
            let ft = eval(f, &trial);
            let decrease: f64 = trial.iter().zip(&x).zip(&g).map(|((t, a), gi)| gi * (t - a)).sum();
            if ft.is_finite() && ft <= fx + 1e-4 * decrease.min(0.0) && ft <= fx {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break;
            }
            hinv = identity(s);
            fresh = true;
            continue;
        };
        let g_new = match numerical_gradient(f, &x_new, opts.gradient_step) {
            Ok(g) => g,
            Err(_) => break,
        };
        let sv: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = sv.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss = sv.iter().map(|v| v * v).sum::<f64>().sqrt();
        let yy = yv.iter().map(|v| v * v).sum::<f64>();
        if sy > 1e-12 * ss * yy.sqrt() {
            if fresh {
                let scale = sy / yy;
                for (k, h) in hinv.iter_mut().enumerate() {
                    *h = if k % (s + 1) == 0 { scale } else { 0.0 };
                }
            }
            bfgs_update(&mut hinv, &sv, &yv, sy);
            fresh = false;
        }
        let stalled = fx - f_new <= 1e-15 * fx.abs().max(1.0) && ss <= 1e-14;
        x = x_new;
        fx = f_new;
        g = g_new;
        pg = projected_gradient(&x, &g, bounds);
        if stalled {
            break;
        }
    }
    Ok(Minimum {
        converged: pg < opts.grad_tol,
        x,
        value: fx,
        iterations: it,
        projected_gradient_norm: pg,
    })
}

fn identity(s: usize) -> Vec<f64> {
    let mut h = vec![0.0; s * s];
    for i in 0..s {
        h[i * s + i] = 1.0;
    }
    h
}

fn mat_vec(h: &[f64], v: &[f64]) -> Vec<f64> {
    let s = v.len();
    (0..s).map(|i| (0..s).map(|j| h[i * s + j] * v[j]).sum()).collect()
}

/// Inverse-Hessian BFGS update in place.
fn bfgs_update(h: &mut [f64], s_vec: &[f64], y: &[f64], sy: f64) {
    let n = s_vec.len();
    let hy = mat_vec(h, y);
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    let rho = 1.0 / sy;
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s_vec[i] * s_vec[j] - rho * (hy[i] * s_vec[j] + s_vec[i] * hy[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unbounded(s: usize) -> Bounds {
        Bounds::new(vec![-1e6; s], vec![1e6; s]).unwrap()
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let m = minimize(&f, &[-1.2, 1.0], &unbounded(2), &MinimizeOptions::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn restarts_resume_a_truncated_polish() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let mut opts = MinimizeOptions {
            max_iterations: 5,
            restarts: 0,
            ..MinimizeOptions::default()
        };
        let once = refine(&f, &[-1.2, 1.0], &unbounded(2), &opts).unwrap();
        assert!(!once.converged);
        opts.restarts = 200;
        let many = refine(&f, &[-1.2, 1.0], &unbounded(2), &opts).unwrap();
        assert!(many.converged);
        assert!(many.value < once.value);
        assert!(many.iterations > once.iterations);
    }

    #[test]
    fn respects_bounds_and_reports_active() {
        // unconstrained minimum at (-1, 2); box forces x0 >= 0
        let f = |x: &[f64]| (x[0] + 1.0).powi(2) + (x[1] - 2.0).powi(2);
        let b = Bounds::new(vec![0.0, -5.0], vec![5.0, 5.0]).unwrap();
        let m = minimize(&f, &[3.0, 3.0], &b, &MinimizeOptions::default()).unwrap();
        assert!(m.converged);
        assert_eq!(m.x[0], 0.0);
        assert!((m.x[1] - 2.0).abs() < 1e-5);
        assert_eq!(b.active(&m.x, 1e-9), vec![0]);
    }

    #[test]
    fn tolerates_infinite_regions() {
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::INFINITY } else { x[0] - x[0].ln() };
        let b = Bounds::new(vec![-1.0], vec![10.0]).unwrap();
        let m = minimize(&f, &[5.0], &b, &MinimizeOptions::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn infeasible_start_is_reported() {
        let f = |_: &[f64]| f64::INFINITY;
        let m = minimize(&f, &[1.0], &unbounded(1), &MinimizeOptions::default()).unwrap();
        assert!(!m.converged);
        assert_eq!(m.value, f64::INFINITY);
    }

    #[test]
    fn rejects_malformed_bounds() {
        assert!(Bounds::new(vec![1.0], vec![0.0]).is_err());
        assert!(Bounds::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn matches_grid_search_in_one_dimension() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(4) + 0.2 * (3.0 * x[0]).cos() + x[0].exp() * 0.1;
        let b = Bounds::new(vec![-1.0], vec![1.0]).unwrap();
        let m = minimize(&f, &[0.0], &b, &MinimizeOptions::default()).unwrap();
        let grid = (0..=200_000)
            .map(|k| -1.0 + 2.0 * k as f64 / 200_000.0)
            .min_by(|a, c| f(&[*a]).total_cmp(&f(&[*c])))
            .unwrap();
        assert!((m.x[0] - grid).abs() < 1e-4, "{} vs {}", m.x[0], grid);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn recovers_convex_quadratic_minimum(
            centre in proptest::collection::vec(-3.0f64..3.0, 4),
            weights in proptest::collection::vec(0.2f64..5.0, 4),
            start in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let f = |x: &[f64]| {
                let mut s = 0.0;
                for i in 0..4 { s += weights[i] * (x[i] - centre[i]).powi(2); }
                s + 0.3 * (x[0] - centre[0]) * (x[1] - centre[1])
            };
            let m = minimize(&f, &start, &unbounded(4), &MinimizeOptions::default()).unwrap();
            prop_assert!(m.converged);
            for i in 0..4 {
                prop_assert!((m.x[i] - centre[i]).abs() < 1e-4);
            }
        }
    }
}
