use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use stslr::estimate::{BinMean, Gauge, NuggetMode, Weighting};
use stslr::quadrature::QuadratureSpec;

/// Optional settings read from `--config`. Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub bins: Option<BinsConfig>,
    pub projection: Option<ProjectionConfig>,
    pub delta_t: Option<f64>,
    pub rescale: Option<f64>,
    pub weighting: Option<Weighting>,
    pub nugget: Option<NuggetMode>,
    pub gauge: Option<Gauge>,
    pub quadrature: Option<QuadratureSpec>,
    pub psd_designs: Option<usize>,
    pub psd_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinsConfig {
    pub max_lag_fraction: Option<f64>,
    pub bin_width: Option<f64>,
    pub tolerance: Option<f64>,
    pub min_pairs: Option<usize>,
    pub bin_mean: Option<BinMean>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub mode: Option<stslr::dataio::ProjectionMode>,
    pub reference_latitude: Option<f64>,
    pub divisor: Option<f64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
