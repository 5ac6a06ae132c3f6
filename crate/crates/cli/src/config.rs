//! Experiment configuration: one TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use mealwise::features::SyntheticClusterSpec;
use mealwise::harness::{AccuracyMode, Scenario, UpdateCadence, DEFAULT_CHECKPOINTS};
use mealwise::pdsn::{GammaMode, TrainConfig, DEFAULT_MAX_SESSIONS, DEFAULT_TEMPERATURE};
use mealwise::personalizer::{ContextSpace, ForgettingFactors};
use mealwise::simulator::PatternSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub pattern: PatternSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub personalizer: PersonalizerSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProviderConfig {
    Synthetic {
        #[serde(default = "d_classes")]
        classes: usize,
        #[serde(default = "d_dim")]
        dim: usize,
        #[serde(default = "d_one")]
        separation: f64,
        #[serde(default = "d_noise")]
        noise_sigma: f64,
        #[serde(default = "d_samples")]
        samples_per_class: usize,
        #[serde(default = "d_half")]
        test_fraction: f64,
    },
    Embeddings {
        path: PathBuf,
    },
}

fn d_classes() -> usize {
    101
}
fn d_dim() -> usize {
    32
}
fn d_one() -> f64 {
    1.0
}
fn d_noise() -> f64 {
    0.28
}
fn d_samples() -> usize {
    40
}
fn d_half() -> f64 {
    0.5
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Synthetic {
            classes: d_classes(),
            dim: d_dim(),
            separation: d_one(),
            noise_sigma: d_noise(),
            samples_per_class: d_samples(),
            test_fraction: d_half(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternSection {
    pub users: usize,
    pub classes_per_user_mean: f64,
    pub meals_per_user: usize,
    pub frequency_skew: f64,
    pub context_concentration: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location_concentration: Option<f64>,
}

impl Default for PatternSection {
    fn default() -> Self {
        let p = PatternSpec::default();
        Self {
            users: p.num_users,
            classes_per_user_mean: p.classes_per_user_mean,
            meals_per_user: p.meals_per_user,
            frequency_skew: 1.5,
            context_concentration: p.context_concentration,
            location_concentration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub gamma: GammaMode,
    pub temperature: f64,
    pub max_sessions: usize,
    /// Sizes of the incremental sessions; they take the trailing classes.
    pub sessions: Vec<usize>,
    /// Training samples per new class in a session; 0 keeps them all.
    pub session_shots: usize,
    pub train: TrainSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            gamma: GammaMode::Learned,
            temperature: DEFAULT_TEMPERATURE,
            max_sessions: DEFAULT_MAX_SESSIONS,
            sessions: Vec::new(),
            session_shots: 0,
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub replay_per_class: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            nesterov: t.nesterov,
            batch_size: t.batch_size,
            epochs: t.epochs,
            replay_per_class: t.replay_per_class,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonalizerSection {
    pub alphas: [f64; 3],
    pub times: Vec<String>,
    pub locations: Vec<String>,
    pub cadence: UpdateCadence,
}

impl Default for PersonalizerSection {
    fn default() -> Self {
        let f = ForgettingFactors::default();
        let c = ContextSpace::default();
        Self {
            alphas: [f.alpha_f, f.alpha_t, f.alpha_l],
            times: c.times().to_vec(),
            locations: c.locations().to_vec(),
            cadence: UpdateCadence::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoints: Vec<usize>,
    pub mode: AccuracyMode,
    pub scenarios: Vec<Scenario>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            mode: AccuracyMode::default(),
            scenarios: Scenario::ALL.to_vec(),
        }
    }
}

/// Seeds of every stochastic stage, derived from the master seed.
#[derive(Debug, Clone, Copy)]
pub struct Seeds {
    pub synthetic: u64,
    pub split: u64,
    pub pattern: u64,
    pub train: u64,
    pub gamma: u64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let ProviderConfig::Embeddings { path: p } = &mut cfg.provider {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.context_space()?;
        self.factors()?;
        self.train_config().validate()?;
        self.pattern_spec()?.validate()?;
        if self.eval.checkpoints.is_empty() {
            return Err(CliError::user("eval.checkpoints must not be empty"));
        }
        if let ProviderConfig::Embeddings { path } = &self.provider {
            if !path.is_file() {
                return Err(CliError::user(format!("embedding file not found: {}", path.display())));
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        let s = self.seed;
        Seeds {
            synthetic: s,
            split: s.wrapping_add(1),
            pattern: s.wrapping_add(2),
            train: s.wrapping_add(3),
            gamma: s.wrapping_add(4),
        }
    }

    pub fn context_space(&self) -> Result<ContextSpace, CliError> {
        Ok(ContextSpace::new(
            self.personalizer.times.clone(),
            self.personalizer.locations.clone(),
        )?)
    }

    pub fn factors(&self) -> Result<ForgettingFactors, CliError> {
        let [f, t, l] = self.personalizer.alphas;
        Ok(ForgettingFactors::new(f, t, l)?)
    }

    pub fn pattern_spec(&self) -> Result<PatternSpec, CliError> {
        Ok(PatternSpec {
            num_users: self.pattern.users,
            classes_per_user_mean: self.pattern.classes_per_user_mean,
            meals_per_user: self.pattern.meals_per_user,
            frequency_skew: self.pattern.frequency_skew,
            context_space: self.context_space()?,
            context_concentration: self.pattern.context_concentration,
            location_concentration: self.pattern.location_concentration,
            seed: self.seeds().pattern,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.model.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            nesterov: t.nesterov,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: self.seeds().train,
            replay_per_class: t.replay_per_class,
        }
    }

    pub fn synthetic_spec(&self) -> Option<(SyntheticClusterSpec, f64)> {
        match self.provider {
            ProviderConfig::Synthetic {
                classes,
                dim,
                separation,
                noise_sigma,
                samples_per_class,
                test_fraction,
            } => Some((
                SyntheticClusterSpec {
                    num_classes: classes,
                    dim,
                    centroid_separation: separation,
                    noise_sigma,
                    samples_per_class,
                    seed: self.seeds().synthetic,
                },
                test_fraction,
            )),
            ProviderConfig::Embeddings { .. } => None,
        }
    }
}
