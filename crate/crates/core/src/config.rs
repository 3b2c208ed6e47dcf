//! TOML experiment configuration.
//!
//! Every default is spelled out by [`reference_config`], so a resolved config
//! echoed into an output file fully determines the run.

use serde::{Deserialize, Serialize};

use crate::bounds::BoundContext;
use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::sampler::{SamplerConfig, ScoreMode};
use crate::schedule::ScheduleSpec;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schedule: ScheduleSpec,
    pub data: DataSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub bound: BoundSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Per-coordinate variance of the isotropic Gaussian data law.
    pub sigma0_sq: f64,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub steps: usize,
    pub chains: usize,
    pub seed: u64,
    pub score: ScoreMode,
    pub checkpoints: Vec<usize>,
    /// Write terminal states as a binary matrix next to the JSON output.
    pub write_states: bool,
    /// Refuse to sample when the stepsize violates the admissibility conditions.
    pub require_admissible: bool,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            steps: 1000,
            chains: 10_000,
            seed: 0,
            score: ScoreMode::ExactGaussian,
            checkpoints: Vec::new(),
            write_states: false,
            require_admissible: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSection {
    /// L2 score error `M`.
    pub score_error: f64,
    /// Time-Lipschitz score constant `M1`.
    pub score_lipschitz: f64,
}

impl Default for BoundSection {
    fn default() -> Self {
        BoundSection { score_error: 0.0, score_lipschitz: 0.0 }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Schema(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Schema(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let field = |path: &str, e: Error| Error::Schema(format!("{path}: {e}"));
        self.model().map_err(|e| field("data", e))?;
        if self.sampler.steps == 0 {
            return Err(Error::Schema("sampler.steps: must be at least 1".into()));
        }
        if self.sampler.chains == 0 {
            return Err(Error::Schema("sampler.chains: must be at least 1".into()));
        }
        if self.sampler.score == ScoreMode::Custom {
            return Err(Error::Schema("sampler.score: custom scores cannot be configured from a file".into()));
        }
        self.sampler_config().validate(&self.schedule).map_err(|e| field("sampler", e))?;
        let b = self.bound;
        if !(b.score_error >= 0.0 && b.score_lipschitz >= 0.0 && b.score_error.is_finite() && b.score_lipschitz.is_finite()) {
            return Err(Error::Schema("bound: score_error and score_lipschitz must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<GaussianModel> {
        GaussianModel::new(self.data.sigma0_sq, self.data.d)
    }

    pub fn eta(&self) -> f64 {
        self.schedule.horizon() / self.sampler.steps as f64
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            d: self.data.d,
            steps: self.sampler.steps,
            eta: self.eta(),
            seed: self.sampler.seed,
            chains: self.sampler.chains,
            score_mode: self.sampler.score,
            keep_states: self.sampler.write_states,
            checkpoints: self.sampler.checkpoints.clone(),
        }
    }

    /// Bound constants for the configured Gaussian data and score errors.
    pub fn bound_context(&self) -> Result<BoundContext> {
        let mut ctx = BoundContext::gaussian(&self.model()?, &self.schedule, self.sampler.steps, self.eta())?;
        ctx.score_error = self.bound.score_error;
        ctx.score_lipschitz = self.bound.score_lipschitz;
        Ok(ctx)
    }
}

/// A complete config with every default written out.
pub fn reference_config() -> String {
    let cfg = Config {
        schedule: ScheduleSpec::new(crate::schedule::Family::VpLinear { beta_min: 0.1, beta_max: 20.0 }, 1.0)
            .expect("valid reference schedule"),
        data: DataSection { sigma0_sq: 0.64, d: 8 },
        sampler: SamplerSection::default(),
        bound: BoundSection::default(),
    };
    let families = crate::schedule::Family::BUILTIN_NAMES.join(", ");
    format!(
        "# Reference configuration. Every field is shown with its default.\n\
         # schedule.family is one of: {families}\n\
         # sampler.score.kind is exact_gaussian or perturbed (with field m).\n\n{}",
        cfg.to_toml()
    )
}
