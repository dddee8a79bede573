//! JSON run configurations. Every document is schema-strict: unknown keys are
//! rejected so a typo in a hyperparameter name cannot silently fall back to a
//! default.

use anyhow::{bail, Context, Result};
use circdrift::basis::Expansion;
use circdrift::experiments::{self, McmcParams};
use circdrift::prior::PriorSpec;
use serde::Deserialize;

/// Norm order: a JSON number, or the string `"inf"`.
#[derive(Clone, Copy, Debug)]
pub struct NormOrder(pub f64);

impl<'de> Deserialize<'de> for NormOrder {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Name(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(p) => Ok(NormOrder(p)),
            Raw::Name(name) => match name.to_ascii_lowercase().as_str() {
                "inf" | "infinity" => Ok(NormOrder(f64::INFINITY)),
                other => Err(serde::de::Error::custom(format!(
                    "norm order must be a number or \"inf\", got \"{other}\""
                ))),
            },
        }
    }
}

/// Drift specification: a smooth synthetic truth, explicit coefficients, or a
/// sine wave (simulation only).
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum TruthConfig {
    Besov {
        beta: f64,
        seminorm: f64,
        cap: u32,
        seed: u64,
    },
    Expansion {
        r: u32,
        coeffs: Vec<f64>,
    },
    Sine {
        amplitude: f64,
    },
}

impl TruthConfig {
    /// Expansion form, required by the study commands.
    pub fn expansion(&self) -> Result<Expansion> {
        match self {
            TruthConfig::Besov {
                beta,
                seminorm,
                cap,
                seed,
            } => Ok(experiments::make_truth(*beta, *seminorm, *cap, *seed)),
            TruthConfig::Expansion { r, coeffs } => {
                Expansion::new(*r, coeffs.clone()).context("invalid truth expansion")
            }
            TruthConfig::Sine { .. } => bail!("config error: sine truth is only usable for simulation"),
        }
    }

    /// Drift callable for simulation.
    pub fn drift(&self) -> Result<Box<dyn Fn(f64) -> f64 + Sync>> {
        match self {
            TruthConfig::Sine { amplitude } => {
                let a = *amplitude;
                Ok(Box::new(move |x: f64| a * (2.0 * std::f64::consts::PI * x).sin()))
            }
            _ => {
                let interp = self.expansion()?.interpolant();
                Ok(Box::new(move |x: f64| interp.eval(x)))
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapConfig {
    pub cap: u32,
    pub grid: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSampleConfig {
    pub prior: PriorSpec,
    pub draws: usize,
    /// Truncation levels are capped here when sampling draws.
    pub cap: u32,
    pub grid_points: usize,
    #[serde(default)]
    pub heatmap: Option<HeatmapConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub truth: TruthConfig,
    pub x0: f64,
    pub t: f64,
    pub dt: f64,
    #[serde(default = "default_true")]
    pub emit_path: bool,
    #[serde(default = "default_nbins")]
    pub nbins: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_true() -> bool {
    true
}

fn default_nbins() -> usize {
    50
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfigJson {
    pub iters: usize,
    pub burn_in: usize,
    pub step_s: f64,
    pub r_max: u32,
}

impl McmcConfigJson {
    pub fn params(&self) -> Result<McmcParams> {
        if self.burn_in >= self.iters {
            bail!(
                "config error: burn_in ({}) must be below iters ({})",
                self.burn_in,
                self.iters
            );
        }
        Ok(McmcParams {
            iters: self.iters,
            burn_in: self.burn_in,
            step_s: self.step_s,
            r_max: self.r_max,
        })
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub q: f64,
    pub ngrid: usize,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self { q: 0.95, ngrid: 128 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub prior: PriorSpec,
    #[serde(default)]
    pub path_file: Option<String>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    pub mcmc: McmcConfigJson,
    #[serde(default)]
    pub band: Option<BandConfig>,
    pub grid_cap: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateStudyConfigJson {
    pub truth: TruthConfig,
    pub beta: f64,
    pub horizons: Vec<f64>,
    pub replicates: usize,
    pub dt: f64,
    #[serde(default)]
    pub x0: f64,
    pub prior: PriorSpec,
    pub mcmc: McmcConfigJson,
    pub norms: Vec<NormOrder>,
    pub grid_cap: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RateStudyConfigJson {
    pub fn build(&self, seed: u64) -> Result<experiments::RateStudyConfig> {
        Ok(experiments::RateStudyConfig {
            truth: self.truth.expansion()?,
            beta: self.beta,
            horizons: self.horizons.clone(),
            replicates: self.replicates,
            dt: self.dt,
            x0: self.x0,
            prior: self.prior,
            mcmc: self.mcmc.params()?,
            norms: self.norms.iter().map(|p| p.0).collect(),
            grid_cap: self.grid_cap,
            seed,
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressStudyConfigJson {
    pub truth: TruthConfig,
    pub beta: f64,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub noise_sd: f64,
    pub prior: PriorSpec,
    pub mcmc: McmcConfigJson,
    pub norms: Vec<NormOrder>,
    pub grid_cap: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RegressStudyConfigJson {
    pub fn build(&self, seed: u64) -> Result<experiments::RegressionStudyConfig> {
        Ok(experiments::RegressionStudyConfig {
            truth: self.truth.expansion()?,
            beta: self.beta,
            sizes: self.sizes.clone(),
            replicates: self.replicates,
            noise_sd: self.noise_sd,
            prior: self.prior,
            mcmc: self.mcmc.params()?,
            norms: self.norms.iter().map(|p| p.0).collect(),
            grid_cap: self.grid_cap,
            seed,
        })
    }
}

/// Parses a strict-schema JSON config, naming the offending key on failure.
pub fn parse<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).with_context(|| format!("config error in {what} document"))
}
