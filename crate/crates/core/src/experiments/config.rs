//! Experiment configuration, read from TOML with unknown keys rejected.
//!
//! ```toml
//! statistic = "studentized-u"   # self-normalized-sum | studentized-u | generic
//! dist = "normal(sigma=1)"
//! kernel = "t"
//! n-list = [50, 200, 800]
//! x-grid = [0.5, 1.0, 1.5]
//! reps = 100000
//! seed = 7
//! workers = 4
//! estimator = "both"            # plain | tilted | both
//!
//! [envelope]
//! p = 3.0
//! c-fit = true
//! c1 = 1.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::kernels::{builtin_kernel, BoundKernel};
use crate::tilting::Statistic;

pub const SEED_ENV: &str = "SELFNORM_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    /// S_n / V_n
    SelfNormalizedSum,
    /// Jackknife-Studentized U-statistic of `kernel`
    StudentizedU,
    /// Student's t statistic √n X̄ / s
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    #[default]
    Plain,
    Tilted,
    /// Runs both and reports the one with the smaller standard error.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EnvelopeConfig {
    /// Moment order p ∈ (2, 3] of the U-statistic envelope.
    #[serde(default = "default_p")]
    pub p: f64,
    /// Fit the implied constant Ĉ.
    #[serde(default = "default_true")]
    pub c_fit: bool,
    /// Constant of the x-range predicate.
    #[serde(default = "default_one")]
    pub c1: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            p: 3.0,
            c_fit: true,
            c1: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BoundsConfig {
    /// Constant in the side condition L_nx ≤ c1 x².
    #[serde(default = "default_one")]
    pub c1_param: f64,
    /// Replications for the R and breve-R estimates; 0 skips them.
    #[serde(default)]
    pub remainder_reps: usize,
    #[serde(default)]
    pub use_d3: bool,
    #[serde(default = "default_one")]
    pub c4: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            c1_param: 1.0,
            remainder_reps: 0,
            use_d3: false,
            c4: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConcentrationSettings {
    #[serde(default = "default_concentration_reps")]
    pub reps: usize,
}

impl Default for ConcentrationSettings {
    fn default() -> Self {
        ConcentrationSettings { reps: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct KernelCheckSettings {
    #[serde(default = "default_trials")]
    pub trials: usize,
}

impl Default for KernelCheckSettings {
    fn default() -> Self {
        KernelCheckSettings { trials: 1_000_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub statistic: StatisticKind,
    pub dist: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    pub n_list: Vec<usize>,
    pub x_grid: Vec<f64>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub concentration: ConcentrationSettings,
    #[serde(default)]
    pub kernel_check: KernelCheckSettings,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_p() -> f64 {
    3.0
}
fn default_true() -> bool {
    true
}
fn default_one() -> f64 {
    1.0
}
fn default_reps() -> usize {
    100_000
}
fn default_workers() -> usize {
    1
}
fn default_concentration_reps() -> usize {
    100_000
}
fn default_trials() -> usize {
    1_000_000
}

fn bad(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {msg}"))
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(
        statistic: StatisticKind,
        dist: &str,
        kernel: Option<&str>,
        n_list: Vec<usize>,
        x_grid: Vec<f64>,
    ) -> Self {
        ExperimentConfig {
            statistic,
            dist: dist.to_string(),
            kernel: kernel.map(str::to_string),
            n_list,
            x_grid,
            reps: default_reps(),
            seed: 0,
            workers: 1,
            estimator: EstimatorKind::Plain,
            envelope: EnvelopeConfig::default(),
            bounds: BoundsConfig::default(),
            concentration: ConcentrationSettings::default(),
            kernel_check: KernelCheckSettings::default(),
            output: OutputConfig::default(),
        }
    }

    /// Parses and validates; parse errors carry the TOML line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Replaces the seed with `SELFNORM_SEED` when that variable is set.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned 64-bit integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let dist = self.distribution()?;
        if self.n_list.is_empty() {
            return Err(bad("n-list", "must not be empty"));
        }
        if self.x_grid.is_empty() {
            return Err(bad("x-grid", "must not be empty"));
        }
        if let Some(x) = self.x_grid.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(bad("x-grid", format!("{x} is not a finite value ≥ 0")));
        }
        if self.x_grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("x-grid", "must be sorted ascending"));
        }
        if self.reps < 1000 {
            return Err(bad("reps", format!("{} < 1000", self.reps)));
        }
        if self.workers == 0 {
            return Err(bad("workers", "must be at least 1"));
        }
        if !(self.envelope.p > 2.0 && self.envelope.p <= 3.0) {
            return Err(bad("envelope.p", format!("{} is outside (2, 3]", self.envelope.p)));
        }
        if !(self.envelope.c1 > 0.0) {
            return Err(bad("envelope.c1", "must be positive"));
        }
        if !(self.bounds.c1_param > 0.0) {
            return Err(bad("bounds.c1-param", "must be positive"));
        }
        if self.concentration.reps < 1000 {
            return Err(bad("concentration.reps", format!("{} < 1000", self.concentration.reps)));
        }
        match (self.statistic, &self.kernel) {
            (StatisticKind::StudentizedU, None) => return Err(bad("kernel", "required for studentized-u")),
            (StatisticKind::StudentizedU, Some(name)) => {
                let k = builtin_kernel(name).map_err(|e| bad("kernel", e))?;
                if let Some(&n) = self.n_list.iter().find(|&&n| n <= 2 * k.degree) {
                    return Err(bad("n-list", format!("n = {n} must exceed 2m = {}", 2 * k.degree)));
                }
            }
            (_, Some(_)) => return Err(bad("kernel", "only used with studentized-u")),
            (_, None) => {
                if let Some(&n) = self.n_list.iter().find(|&&n| n < 2) {
                    return Err(bad("n-list", format!("n = {n} must be at least 2")));
                }
            }
        }
        if let Some(k) = &self.kernel {
            builtin_kernel(k)
                .and_then(|k| k.bind(&dist))
                .map_err(|e| bad("kernel", e))?;
        }
        Ok(())
    }

    pub fn distribution(&self) -> Result<DistributionSpec> {
        self.dist.parse().map_err(|e| bad("dist", e))
    }

    /// The kernel bound to the configured law, for studentized-u.
    pub fn bound_kernel(&self) -> Result<Option<BoundKernel>> {
        match &self.kernel {
            Some(k) => Ok(Some(builtin_kernel(k)?.bind(&self.distribution()?)?)),
            None => Ok(None),
        }
    }

    pub fn tail_statistic(&self, bk: Option<&BoundKernel>) -> Statistic {
        match (self.statistic, bk) {
            (StatisticKind::SelfNormalizedSum, _) => Statistic::SelfNormalized,
            (StatisticKind::Generic, _) => Statistic::StudentT,
            (StatisticKind::StudentizedU, Some(bk)) => Statistic::StudentizedU(Box::new(bk.clone())),
            (StatisticKind::StudentizedU, None) => unreachable!("validated configs carry a kernel"),
        }
    }
}
