//! Trajectory generation: `eps_t = D_t eta~_t` with `eta~_t = L eta_t`,
//! `L L' = R`, and `D_t` driven by the shared volatility kernel.

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::params::ModelSpec;
use crate::volatility::{
    admissible, hpow_to_h, split_into, InitPolicy, Kernel, Presample, ReturnsMatrix,
    VolatilityPath, EXPLOSION_THRESHOLD,
};

pub const DEFAULT_BURN_IN: usize = 1_000;

/// Generator identification recorded with every simulated path.
pub const GENERATOR: &str = "ChaCha20Rng(rand_chacha 0.9) + StandardNormal(rand_distr 0.5 ziggurat)";

/// Innovation law for `eta_t`, always standardized to identity covariance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Innovations {
    #[default]
    Gaussian,
    /// Student t with `df > 2` degrees of freedom, rescaled to unit variance.
    StudentT { df: f64 },
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub returns: ReturnsMatrix,
    pub volatility: VolatilityPath,
    /// Presample values in effect at the first retained observation.
    pub presample: Presample,
    pub seed: u64,
    pub burn_in: usize,
    pub generator: &'static str,
}

/// Simulation output together with the correlated innovations `eta~_t`.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub output: SimulationOutput,
    pub eta_tilde: Vec<Vec<f64>>,
}

/// Lower-triangular `L` with `L L' = R`.
pub fn correlation_factor(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Cholesky::new(r.clone())
        .map(|c| c.l())
        .ok_or(Error::NonPositiveDefiniteCorrelation)
}

/// SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th independent stream derived from `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ splitmix64(index)
}

/// Simulates `n` observations after `burn_in` discarded steps, Gaussian innovations.
pub fn simulate(spec: &ModelSpec, n: usize, burn_in: usize, seed: u64) -> Result<SimulationOutput> {
    Ok(simulate_with(spec, n, burn_in, seed, Innovations::Gaussian)?.output)
}

/// Like [`simulate`] but also returns `eta~_t`.
pub fn simulate_with_innovations(
    spec: &ModelSpec,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SimulationTrace> {
    simulate_with(spec, n, burn_in, seed, Innovations::Gaussian)
}

pub fn simulate_with(
    spec: &ModelSpec,
    n: usize,
    burn_in: usize,
    seed: u64,
    innovations: Innovations,
) -> Result<SimulationTrace> {
    if n == 0 {
        return Err(Error::InvalidOptions("n must be >= 1".into()));
    }
    spec.check_shapes()?;
    if !admissible(spec) {
        return Err(Error::InvalidSpec(
            "omega and delta must be positive and coefficients nonnegative".into(),
        ));
    }
    let factor = correlation_factor(&spec.r)?;
    let student = match innovations {
        Innovations::Gaussian => None,
        Innovations::StudentT { df } => {
            if !(df > 2.0) {
                return Err(Error::InvalidOptions("Student t needs df > 2".into()));
            }
            let dist = StudentT::new(df).map_err(|e| Error::InvalidOptions(e.to_string()))?;
            Some((dist, ((df - 2.0) / df).sqrt()))
        }
    };

    let o = spec.orders;
    let (m, p, q) = (o.m, o.p, o.q);
    let total = burn_in + n;
    let kernel = Kernel::new(spec);
    let mut plus = vec![0.0; (q + total) * m];
    let mut minus = vec![0.0; (q + total) * m];
    let mut hpow = vec![0.0; (p + total) * m];
    kernel.seed_history(&InitPolicy::ZeroOmega, None, None, &mut plus, &mut minus, &mut hpow)?;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut eps = Vec::with_capacity(n * m);
    let mut h_out = Vec::with_capacity(n * m);
    let mut eta_out = Vec::with_capacity(n);
    let mut cur = vec![0.0; m];
    let mut eta = vec![0.0; m];
    let mut eta_tilde = vec![0.0; m];
    let mut e_t = vec![0.0; m];
    let mut h_t = vec![0.0; m];
    for t in 0..total {
        kernel.step(t, &plus, &minus, &hpow, &mut cur);
        if cur.iter().any(|&x| !(x <= EXPLOSION_THRESHOLD)) {
            return Err(Error::ExplosivePath { index: t });
        }
        hpow[(p + t) * m..(p + t + 1) * m].copy_from_slice(&cur);
        for i in 0..m {
            eta[i] = match &student {
                None => rng.sample(StandardNormal),
                Some((dist, scale)) => dist.sample(&mut rng) * scale,
            };
        }
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..=i {
                s += factor[(i, j)] * eta[j];
            }
            eta_tilde[i] = s;
            h_t[i] = hpow_to_h(cur[i], spec.delta[i]);
            e_t[i] = h_t[i].sqrt() * s;
        }
        if q > 0 {
            let row = (q + t) * m..(q + t + 1) * m;
            split_into(&e_t, &spec.delta, &mut plus[row.clone()], &mut minus[row]);
        }
        if t >= burn_in {
            eps.extend_from_slice(&e_t);
            h_out.extend_from_slice(&h_t);
            eta_out.push(eta_tilde.clone());
        }
    }

    let presample = Presample {
        plus: (1..=q)
            .map(|k| plus[(q + burn_in - k) * m..(q + burn_in - k + 1) * m].to_vec())
            .collect(),
        minus: (1..=q)
            .map(|k| minus[(q + burn_in - k) * m..(q + burn_in - k + 1) * m].to_vec())
            .collect(),
        hpow: (1..=p)
            .map(|k| hpow[(p + burn_in - k) * m..(p + burn_in - k + 1) * m].to_vec())
            .collect(),
    };
    let volatility = VolatilityPath {
        hpow: hpow[(p + burn_in) * m..].to_vec(),
        h: h_out,
        n,
        m,
        presample: InitPolicy::Presample(presample.clone()),
    };
    Ok(SimulationTrace {
        output: SimulationOutput {
            returns: ReturnsMatrix::new(n, m, eps)?,
            volatility,
            presample,
            seed,
            burn_in,
            generator: GENERATOR,
        },
        eta_tilde: eta_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::fixtures::arch1_design;
    use crate::params::{correlation_from_rho, ModelOrders};

    fn sample_cov(x: &ReturnsMatrix) -> DMatrix<f64> {
        let (n, m) = (x.n(), x.m());
        let mut mean = vec![0.0; m];
        for t in 0..n {
            for i in 0..m {
                mean[i] += x.row(t)[i] / n as f64;
            }
        }
        DMatrix::from_fn(m, m, |i, j| {
            (0..n)
                .map(|t| (x.row(t)[i] - mean[i]) * (x.row(t)[j] - mean[j]))
                .sum::<f64>()
                / n as f64
        })
    }

    #[test]
    fn factor_examples() {
        assert_eq!(correlation_factor(&DMatrix::identity(3, 3)).unwrap(), DMatrix::identity(3, 3));
        let l = correlation_factor(&correlation_from_rho(2, &[0.5])).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.75f64.sqrt()]);
        assert!((l - expect).abs().max() < 1e-15);
        assert!(matches!(
            correlation_factor(&correlation_from_rho(2, &[1.5])),
            Err(Error::NonPositiveDefiniteCorrelation)
        ));
    }

    #[test]
    fn factor_reconstructs_random_correlations() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for _ in 0..50 {
            let g = DMatrix::from_fn(4, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
            let s = &g * g.transpose();
            let d = DMatrix::from_diagonal(&s.diagonal().map(|x| 1.0 / x.sqrt()));
            let mut r = &d * s * &d;
            for i in 0..4 {
                r[(i, i)] = 1.0;
            }
            let l = correlation_factor(&r).unwrap();
            assert!((&l * l.transpose() - &r).abs().max() < 1e-12);
            for i in 0..4 {
                for j in (i + 1)..4 {
                    assert_eq!(l[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn white_noise_moments() {
        let spec =
            ModelSpec::constant(vec![1.0, 1.0], DMatrix::identity(2, 2), vec![2.0, 2.0]).unwrap();
        let sim = simulate(&spec, 100_000, 0, 1).unwrap();
        let c = sample_cov(&sim.returns);
        assert!((c - DMatrix::<f64>::identity(2, 2)).abs().max() < 0.02);

        let spec = ModelSpec::constant(
            vec![1.0, 1.0],
            correlation_from_rho(2, &[0.5]),
            vec![2.0, 2.0],
        )
        .unwrap();
        let sim = simulate(&spec, 100_000, 0, 2).unwrap();
        let c = sample_cov(&sim.returns);
        let corr = c[(0, 1)] / (c[(0, 0)] * c[(1, 1)]).sqrt();
        assert!((corr - 0.5).abs() < 0.02);
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = arch1_design();
        let a = simulate(&spec, 300, 50, 77).unwrap();
        let b = simulate(&spec, 300, 50, 77).unwrap();
        assert_eq!(a.returns, b.returns);
        assert_eq!(a.volatility, b.volatility);
        let c = simulate(&spec, 300, 50, 78).unwrap();
        assert_ne!(a.returns, c.returns);
    }

    #[test]
    fn returns_are_volatility_times_correlated_noise() {
        let spec = arch1_design();
        let tr = simulate_with_innovations(&spec, 200, 10, 3).unwrap();
        let out = &tr.output;
        assert_eq!(out.returns.n(), 200);
        for t in 0..200 {
            for i in 0..2 {
                let e = out.volatility.h_row(t)[i].sqrt() * tr.eta_tilde[t][i];
                assert_eq!(out.returns.row(t)[i], e);
            }
        }
    }

    #[test]
    fn half_path_variances_agree() {
        // symmetric, small coefficients so fourth moments exist
        let spec = ModelSpec::new(
            ModelOrders::new(2, 1, 1).unwrap(),
            vec![0.1, 0.1],
            vec![DMatrix::from_row_slice(2, 2, &[0.05, 0.01, 0.01, 0.05])],
            vec![DMatrix::from_row_slice(2, 2, &[0.05, 0.01, 0.01, 0.05])],
            vec![DMatrix::from_diagonal_element(2, 2, 0.6)],
            correlation_from_rho(2, &[0.3]),
            vec![2.0, 2.0],
        )
        .unwrap();
        let n = 200_000;
        let sim = simulate(&spec, n, 1000, 12).unwrap();
        let first = sim.returns.window(0, n / 2).unwrap();
        let second = sim.returns.window(n / 2, n).unwrap();
        let (c1, c2) = (sample_cov(&first), sample_cov(&second));
        for i in 0..2 {
            let ratio = c1[(i, i)] / c2[(i, i)];
            assert!((0.9..=1.1).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn student_innovations_are_standardized() {
        let spec = ModelSpec::constant(vec![1.0], DMatrix::identity(1, 1), vec![2.0]).unwrap();
        let tr = simulate_with(&spec, 200_000, 0, 5, Innovations::StudentT { df: 8.0 }).unwrap();
        let c = sample_cov(&tr.output.returns);
        assert!((c[(0, 0)] - 1.0).abs() < 0.03);
        assert!(simulate_with(&spec, 10, 0, 5, Innovations::StudentT { df: 2.0 }).is_err());
    }

    #[test]
    fn explosive_spec_fails() {
        let spec = ModelSpec::new(
            ModelOrders::new(1, 1, 1).unwrap(),
            vec![1.0],
            vec![DMatrix::from_element(1, 1, 5.0)],
            vec![DMatrix::from_element(1, 1, 5.0)],
            vec![DMatrix::from_element(1, 1, 3.0)],
            DMatrix::identity(1, 1),
            vec![2.0],
        )
        .unwrap();
        assert!(matches!(
            simulate(&spec, 5000, 0, 1),
            Err(Error::ExplosivePath { .. })
        ));
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..100).map(|i| derive_seed(42, i)).collect();
        let mut u = s.clone();
        u.sort();
        u.dedup();
        assert_eq!(u.len(), 100);
    }
}
