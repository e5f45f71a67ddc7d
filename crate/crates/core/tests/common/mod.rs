#![allow(dead_code)]

use apgarch::params::{correlation_from_rho, ModelOrders, ModelSpec};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

/// Bivariate ARCH(1) design with delta = (2, 2) used for the sampling experiments.
pub fn arch1_design() -> ModelSpec {
    ModelSpec::new(
        ModelOrders::new(2, 0, 1).unwrap(),
        vec![1.0, 1.0],
        vec![DMatrix::from_row_slice(2, 2, &[0.25, 0.05, 0.05, 0.25])],
        vec![DMatrix::from_element(2, 2, 0.5)],
        vec![],
        correlation_from_rho(2, &[0.5]),
        vec![2.0, 2.0],
    )
    .unwrap()
}

/// Design of the Wald experiment with powers `tau`.
pub fn power_test_design(tau: [f64; 2]) -> ModelSpec {
    ModelSpec::new(
        ModelOrders::new(2, 0, 1).unwrap(),
        vec![0.2, 0.3],
        vec![DMatrix::from_row_slice(2, 2, &[0.25, 0.05, 0.05, 0.25])],
        vec![DMatrix::from_element(2, 2, 0.5)],
        vec![],
        correlation_from_rho(2, &[0.5]),
        tau.to_vec(),
    )
    .unwrap()
}

/// Random correlation matrix from a Gram matrix.
pub fn random_correlation(rng: &mut ChaCha20Rng, m: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0f64..1.0));
    let cov = &a * a.transpose() + DMatrix::identity(m, m) * 0.3;
    DMatrix::from_fn(m, m, |i, j| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt())
}

/// Random spec with nonnegative coefficients. `b_scale` bounds the diagonal GARCH mass.
pub fn random_spec(rng: &mut ChaCha20Rng, b_scale: f64) -> ModelSpec {
    let m = rng.random_range(1..=3);
    let p = rng.random_range(0..=2);
    let q = rng.random_range(1..=2);
    let coef = |rng: &mut ChaCha20Rng, hi: f64| DMatrix::from_fn(m, m, |_, _| rng.random_range(0.0..hi));
    let arch_hi = 0.2 / (m * q) as f64;
    let a_plus = (0..q).map(|_| coef(rng, arch_hi)).collect();
    let a_minus = (0..q).map(|_| coef(rng, arch_hi)).collect();
    let b = (0..p)
        .map(|_| {
            DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    rng.random_range(0.0..b_scale / p as f64)
                } else {
                    rng.random_range(0.0..0.05)
                }
            })
        })
        .collect();
    ModelSpec::new(
        ModelOrders::new(m, p, q).unwrap(),
        (0..m).map(|_| rng.random_range(0.1..1.0)).collect(),
        a_plus,
        a_minus,
        b,
        random_correlation(rng, m),
        (0..m).map(|_| rng.random_range(0.5..3.0)).collect(),
    )
    .unwrap()
}
