//! Experiment documents for the `mc` subcommand.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::{McDesign, WaldDesign};
use crate::params::SpecConfig;
use crate::simulate::DEFAULT_BURN_IN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaldConfig {
    /// Rows of the restriction matrix.
    pub c: Vec<Vec<f64>>,
    pub c_vector: Vec<f64>,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.05
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_starts() -> usize {
    1
}

/// ```toml
/// n = 5000
/// replications = 20
/// seed = 7
///
/// [truth]
/// m = 2
/// # ... remaining spec keys
///
/// [wald]
/// c = [[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0], [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0]]
/// c_vector = [1.0, 1.0]
/// level = 0.05
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n: usize,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default)]
    pub allow_nonstationary: bool,
    pub truth: SpecConfig,
    #[serde(default)]
    pub wald: Option<WaldConfig>,
}

impl McConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_design(&self) -> Result<McDesign> {
        let (truth, mode) = self.truth.to_spec()?;
        let mut d = McDesign::new(truth, mode, self.n, self.replications, self.seed);
        d.burn_in = self.burn_in;
        d.fit.starts = self.starts;
        d.allow_nonstationary = self.allow_nonstationary;
        if let Some(w) = &self.wald {
            let rows = w.c.len();
            let cols = w.c.first().map_or(0, Vec::len);
            if w.c.iter().any(|r| r.len() != cols) {
                return Err(Error::Config("wald.c rows differ in length".into()));
            }
            d.wald = Some(WaldDesign {
                c_matrix: DMatrix::from_fn(rows, cols, |i, j| w.c[i][j]),
                c_vector: w.c_vector.clone(),
                level: w.level,
            });
        }
        Ok(d)
    }
}
