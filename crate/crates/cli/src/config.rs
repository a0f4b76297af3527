//! Experiment configuration files.
//!
//! Every table rejects unknown keys. Errors carry the line of the offending
//! key when it can be found in the source text.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use instadep::envs::{
    calibrate_norm_bounds, CartPoleLite, CartPoleParams, Driving, DrivingParams, FamilyTag, NoiseInjectConfig,
    NoiseInjected, RewardAugmentConfig, RewardAugmented, RewardFamily,
};
use instadep::models::{MeanKind, ScaleKind};
use instadep::planning::TrainConfig;
use instadep::{Environment, Grid, ModelSpec, RngStream};

#[derive(Debug, Error)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(source: Option<&str>, key: &str, message: impl Into<String>) -> Self {
        Self { line: source.and_then(|s| line_of(s, key)), message: message.into() }
    }
}

/// 1-based line of `key = ...` or a `[key]` / `[parent.key]` header.
fn line_of(source: &str, key: &str) -> Option<usize> {
    source.lines().position(|l| {
        let t = l.trim_start();
        if let Some(h) = t.strip_prefix('[') {
            let name = h.trim_end().trim_end_matches(']');
            return name == key || name.ends_with(&format!(".{key}"));
        }
        t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    VisualRegion,
    RewardFamilies,
    ModelCompare,
    Sweep,
    TheoryReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Driving,
    CartpoleLite,
}

/// Extra `r_reward · mean Norm((s_i + s_j)²)` reward; bounds are calibrated
/// on the configured environment under a random policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardBlock {
    pub r_reward: f64,
    pub pairs: Vec<(usize, usize)>,
    #[serde(default = "default_calibration_steps")]
    pub calibration_steps: usize,
}

fn default_calibration_steps() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    #[serde(default)]
    pub driving: DrivingParams,
    #[serde(default)]
    pub cartpole: CartPoleParams,
    /// CartPoleLite reward family; `reward_families` iterates over all six.
    #[serde(default = "default_family")]
    pub family: FamilyTag,
    /// Noise injection on top of Driving. CartPoleLite injects its own.
    pub noise: Option<NoiseInjectConfig>,
    pub reward: Option<RewardBlock>,
}

fn default_family() -> FamilyTag {
    FamilyTag::Original
}

impl EnvConfig {
    pub fn state_dim(&self) -> usize {
        match self.kind {
            EnvKind::Driving => 2,
            EnvKind::CartpoleLite => 4,
        }
    }

    /// Build the environment, with `family` overriding the configured one.
    pub fn build(&self, family: Option<FamilyTag>) -> instadep::Result<Box<dyn Environment>> {
        let mut env: Box<dyn Environment> = match self.kind {
            EnvKind::Driving => {
                let base = Driving::new(self.driving.clone())?;
                match &self.noise {
                    Some(n) => Box::new(NoiseInjected::new(base, n.clone())?),
                    None => Box::new(base),
                }
            }
            EnvKind::CartpoleLite => Box::new(CartPoleLite::new(
                self.cartpole.clone(),
                RewardFamily::standard(family.unwrap_or(self.family)),
            )?),
        };
        if let Some(r) = &self.reward {
            let mut rng = RngStream::new(0).split("reward-calibration");
            let norm_bounds = calibrate_norm_bounds(&env, &r.pairs, r.calibration_steps, &mut rng);
            let cfg = RewardAugmentConfig { r_reward: r.r_reward, pairs: r.pairs.clone(), norm_bounds };
            env = Box::new(RewardAugmented::new(env, cfg)?);
        }
        Ok(env)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub bounds: Vec<(f64, f64)>,
    /// Cells per axis.
    pub n: usize,
}

impl GridConfig {
    pub fn build(&self) -> instadep::Result<Grid> {
        Grid::uniform(&self.bounds, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeanChoice {
    #[default]
    LinearLeastSquares,
    TabularConditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mean: MeanChoice,
    /// Required by `tabular_conditional`.
    pub grid: Option<GridConfig>,
    pub scales: ScaleKind,
}

impl ModelConfig {
    pub fn spec(&self) -> instadep::Result<ModelSpec> {
        let mean = match self.mean {
            MeanChoice::LinearLeastSquares => MeanKind::LinearLeastSquares,
            MeanChoice::TabularConditional => {
                let g = self.grid.as_ref().ok_or_else(|| {
                    instadep::Error::InvalidParams("tabular_conditional needs [model.grid]".into())
                })?;
                MeanKind::TabularConditional { grid: g.build()? }
            }
        };
        Ok(ModelSpec { mean, scales: self.scales })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    pub window: GridConfig,
    pub n_mc: usize,
    /// Episodes per seed for the metrics table.
    pub eval_episodes: usize,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            window: GridConfig { bounds: vec![(-2.0, 2.0), (-2.0, 2.0)], n: 64 },
            n_mc: 200,
            eval_episodes: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    RNoise,
    PairCorr,
    RReward,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::RNoise => "r_noise",
            SweepAxis::PairCorr => "pair_corr",
            SweepAxis::RReward => "r_reward",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub n_mc: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self { n_mc: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Random-policy transitions scored by the likelihood loss.
    pub likelihood_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { likelihood_samples: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub env: Option<EnvConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    /// Loop sizes `N/E/M/G` and learner settings.
    #[serde(default)]
    pub train: TrainConfig,
    pub q_grid: Option<GridConfig>,
    pub region: Option<RegionConfig>,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub theory: TheoryConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_toml(source: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(source).map_err(|e| ConfigError {
            line: e.span().map(|s| source[..s.start].matches('\n').count() + 1),
            message: e.message().trim().to_string(),
        })?;
        cfg.validate_with(Some(source))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_toml(&source)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_with(None)
    }

    fn validate_with(&self, src: Option<&str>) -> Result<(), ConfigError> {
        let err = |key: &str, msg: String| Err(ConfigError::at(src, key, msg));
        if self.seeds.is_empty() {
            return err("seeds", "seeds must be nonempty".into());
        }
        if self.experiment == ExperimentKind::TheoryReport {
            if self.theory.n_mc < 2 {
                return err("n_mc", "theory.n_mc must be at least 2".into());
            }
            return Ok(());
        }
        let Some(env) = &self.env else {
            return err("experiment", "this experiment needs an [env] table".into());
        };
        if let Err(e) = self.train.validate() {
            return err("train", e.to_string());
        }
        if let Err(e) = self.model.spec() {
            return err("model", e.to_string());
        }
        match env.kind {
            EnvKind::Driving => {
                if let Err(e) = env.driving.validate() {
                    return err("driving", e.to_string());
                }
                if let Some(n) = &env.noise {
                    if let Err(e) = n.validate(2) {
                        return err("noise", e.to_string());
                    }
                }
            }
            EnvKind::CartpoleLite => {
                if env.noise.is_some() {
                    return err("noise", "cartpole_lite injects its own noise; set [env.cartpole] r_noise".into());
                }
                if let Err(e) = RewardFamily::standard(env.family).validate() {
                    return err("family", e.to_string());
                }
            }
        }
        if let Some(r) = &env.reward {
            if r.pairs.iter().any(|&(i, j)| i >= env.state_dim() || j >= env.state_dim()) {
                return err("reward", "reward pair index out of range".into());
            }
        }
        match self.experiment {
            ExperimentKind::VisualRegion => {
                if env.kind != EnvKind::Driving {
                    return err("kind", "visual_region needs env kind = \"driving\"".into());
                }
                if env.noise.is_some() || env.reward.is_some() {
                    return err("env", "visual_region plans on plain Driving; drop [env.noise] / [env.reward]".into());
                }
                let region = self.region.clone().unwrap_or_default();
                if region.window.bounds.len() != 2 || region.window.n == 0 || region.n_mc == 0 {
                    return err("region", "region window must be 2-D with n ≥ 1 and n_mc ≥ 1".into());
                }
                if let Err(e) = region.window.build() {
                    return err("window", e.to_string());
                }
            }
            ExperimentKind::RewardFamilies => {
                if env.kind != EnvKind::CartpoleLite {
                    return err("kind", "reward_families needs env kind = \"cartpole_lite\"".into());
                }
            }
            ExperimentKind::ModelCompare => {
                if env.kind == EnvKind::Driving && env.noise.is_none() {
                    return err("env", "model_compare on driving needs an [env.noise] table".into());
                }
            }
            ExperimentKind::Sweep => {
                let Some(sweep) = &self.sweep else {
                    return err("experiment", "sweep needs a [sweep] table".into());
                };
                if sweep.values.is_empty() {
                    return err("values", "sweep values must be nonempty".into());
                }
                let ok = match (sweep.axis, env.kind) {
                    (SweepAxis::RReward, _) => env.reward.is_some(),
                    (_, EnvKind::Driving) => env.noise.is_some(),
                    (_, EnvKind::CartpoleLite) => true,
                };
                if !ok {
                    return err("axis", format!("sweep axis {} has no table to act on", sweep.axis.name()));
                }
            }
            ExperimentKind::TheoryReport => unreachable!(),
        }
        if self.experiment != ExperimentKind::VisualRegion {
            let Some(q) = &self.q_grid else {
                return err("experiment", "this experiment needs a [q_grid] table".into());
            };
            if q.bounds.len() != env.state_dim() {
                return err(
                    "q_grid",
                    format!("q_grid has {} axes, environment has {} dimensions", q.bounds.len(), env.state_dim()),
                );
            }
            if let Err(e) = q.build() {
                return err("q_grid", e.to_string());
            }
        }
        Ok(())
    }

    /// A copy with one sweep parameter replaced.
    pub fn with_axis_value(&self, axis: SweepAxis, value: f64) -> Self {
        let mut c = self.clone();
        let env = c.env.as_mut().expect("validated");
        match (axis, env.kind) {
            (SweepAxis::RReward, _) => env.reward.as_mut().expect("validated").r_reward = value,
            (SweepAxis::RNoise, EnvKind::Driving) => env.noise.as_mut().expect("validated").r_noise = value,
            (SweepAxis::PairCorr, EnvKind::Driving) => env.noise.as_mut().expect("validated").pair_corr = value,
            (SweepAxis::RNoise, EnvKind::CartpoleLite) => env.cartpole.r_noise = value,
            (SweepAxis::PairCorr, EnvKind::CartpoleLite) => env.cartpole.pair_corr = Some(value),
        }
        c
    }
}
