//! The TOML experiment file and its mapping onto simulator configurations.
//!
//! One file describes a comparison grid: a list of architectures plus any
//! number of named experiments. Every experiment runs once per architecture
//! with the same master seed, so the curves are comparable round by round.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use kfc_core::attack::{AttackKind, AttackSpec};
use kfc_core::data::PatternKey;
use kfc_core::mlcore::TrainSpec;
use kfc_core::sim::{Architecture, DataSpec, ModelKind, Participation, Scenario, SimConfig};

/// Supported experiment-file schema version.
pub const SCHEMA_VERSION: u32 = 1;

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_flip_fraction() -> f64 {
    1.0
}

fn default_eta() -> f64 {
    1.0
}

fn default_krum_f() -> usize {
    1
}

fn default_trim_fraction() -> f64 {
    0.1
}

fn default_validation_fraction() -> f64 {
    0.2
}

fn default_pow_difficulty_bits() -> u32 {
    8
}

fn default_goal_max_retries() -> u32 {
    3
}

fn default_pattern_value() -> f64 {
    0.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub schema_version: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Architectures every experiment compares, unless overridden per
    /// experiment.
    pub architectures: Vec<String>,
    pub experiments: BTreeMap<String, ExperimentConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub architectures: Option<Vec<String>>,
    pub scenario: ScenarioConfig,
    pub rounds: usize,
    pub n_clients: usize,
    pub n_pools: usize,
    #[serde(default)]
    pub clients_per_round: Option<ParticipationConfig>,
    pub master_seed: u64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_krum_f")]
    pub krum_f: usize,
    #[serde(default = "default_trim_fraction")]
    pub trim_fraction: f64,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default = "default_pow_difficulty_bits")]
    pub pow_difficulty_bits: u32,
    #[serde(default)]
    pub stakes: Option<Vec<f64>>,
    #[serde(default)]
    pub accuracy_goal: Option<f64>,
    #[serde(default = "default_goal_max_retries")]
    pub goal_max_retries: u32,
    pub attack: AttackConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
}

#[derive(Clone, Copy, Debug, Deserialize)]
pub enum ScenarioConfig {
    #[serde(rename = "none")]
    None,
    A,
    B,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipationConfig {
    #[serde(default)]
    pub fraction: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKindConfig,
    #[serde(default = "default_flip_fraction")]
    pub flip_fraction: f64,
    /// Defaults to true for backdoor attacks and false otherwise.
    #[serde(default)]
    pub boost: Option<bool>,
    #[serde(default)]
    pub pattern: Option<PatternConfig>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
pub enum AttackKindConfig {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "byzantine-flip")]
    ByzantineFlip,
    #[serde(rename = "backdoor")]
    Backdoor,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    pub shape: PatternShape,
    pub row: usize,
    pub col: usize,
    #[serde(default = "default_pattern_value")]
    pub value: f64,
    pub target_label: usize,
    /// Width of the feature grid; defaults to sqrt(features) when square.
    #[serde(default)]
    pub grid_width: Option<usize>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
pub enum PatternShape {
    #[serde(rename = "pixel")]
    Pixel,
    #[serde(rename = "cross")]
    Cross,
    #[serde(rename = "square")]
    Square,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum DataConfig {
    #[serde(rename = "synthetic")]
    Synthetic {
        classes: usize,
        features: usize,
        train_per_class: usize,
        test_per_class: usize,
        spread: f64,
    },
    #[serde(rename = "csv")]
    Csv {
        train_path: PathBuf,
        test_path: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: ModelArchConfig,
    #[serde(default)]
    pub hidden: Option<usize>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
pub enum ModelArchConfig {
    #[serde(rename = "softmax-linear")]
    SoftmaxLinear,
    #[serde(rename = "mlp1")]
    Mlp1,
}

/// Parse and validate an experiment file.
pub fn load_experiment_file(path: &Path) -> Result<ExperimentFile, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let file: ExperimentFile =
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(format!(
            "unsupported schema_version {} (this build supports {SCHEMA_VERSION})",
            file.schema_version
        ));
    }
    if file.experiments.is_empty() {
        return Err("config declares no experiments".into());
    }
    if file.architectures.is_empty() {
        return Err("config declares no architectures".into());
    }
    for name in file.experiments.keys() {
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(format!(
                "experiment name '{name}' must be non-empty and use [A-Za-z0-9_-]"
            ));
        }
    }
    Ok(file)
}

pub fn parse_architectures(names: &[String]) -> Result<Vec<Architecture>, String> {
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let arch: Architecture = name.parse().map_err(|e| format!("{e}"))?;
        if out.contains(&arch) {
            return Err(format!("architecture '{name}' listed twice"));
        }
        out.push(arch);
    }
    Ok(out)
}

impl ExperimentConfig {
    /// The architectures this experiment compares.
    pub fn architectures<'a>(&'a self, file_level: &'a [String]) -> &'a [String] {
        self.architectures.as_deref().unwrap_or(file_level)
    }

    /// Lower this experiment onto a simulator configuration for one
    /// architecture, optionally overriding the master seed.
    pub fn to_sim_config(
        &self,
        architecture: Architecture,
        seed_override: Option<u64>,
    ) -> Result<SimConfig, String> {
        let scenario = match self.scenario {
            ScenarioConfig::None => Scenario::None,
            ScenarioConfig::A => Scenario::A,
            ScenarioConfig::B => Scenario::B,
        };
        let clients_per_round = match self.clients_per_round {
            None => Participation::Fraction(0.1),
            Some(ParticipationConfig {
                fraction: Some(f),
                count: None,
            }) => Participation::Fraction(f),
            Some(ParticipationConfig {
                fraction: None,
                count: Some(c),
            }) => Participation::Count(c),
            Some(_) => {
                return Err("clients_per_round needs exactly one of fraction / count".into())
            }
        };
        // CSV feature counts are only known at load time, so patterns over
        // CSV data must state their grid width explicitly.
        let features = match &self.data {
            DataConfig::Synthetic { features, .. } => Some(*features),
            DataConfig::Csv { .. } => None,
        };
        let pattern = match &self.attack.pattern {
            None => None,
            Some(p) => Some(build_pattern(p, features)?),
        };
        let kind = match self.attack.kind {
            AttackKindConfig::None => AttackKind::None,
            AttackKindConfig::ByzantineFlip => AttackKind::ByzantineFlip,
            AttackKindConfig::Backdoor => AttackKind::Backdoor,
        };
        let boost = self
            .attack
            .boost
            .unwrap_or(kind == AttackKind::Backdoor);
        if kind == AttackKind::Backdoor && pattern.is_none() {
            return Err("backdoor attack needs [experiments.<name>.attack.pattern]".into());
        }
        if let DataConfig::Synthetic { classes: k, .. } = &self.data {
            if let Some(p) = &pattern {
                if p.target_label() >= *k {
                    return Err(format!(
                        "pattern target_label {} out of range for {k} classes",
                        p.target_label()
                    ));
                }
            }
        }
        let attack = AttackSpec {
            kind,
            pattern,
            flip_fraction: self.attack.flip_fraction,
            boost,
            n_attackers_in_round: 1,
        };
        let model = match self.model.arch {
            ModelArchConfig::SoftmaxLinear => ModelKind::SoftmaxLinear,
            ModelArchConfig::Mlp1 => ModelKind::Mlp1 {
                hidden: self
                    .model
                    .hidden
                    .ok_or_else(|| "mlp1 needs a hidden width".to_string())?,
            },
        };
        let data = match &self.data {
            DataConfig::Synthetic {
                classes,
                features,
                train_per_class,
                test_per_class,
                spread,
            } => DataSpec::Synthetic {
                classes: *classes,
                features: *features,
                train_per_class: *train_per_class,
                test_per_class: *test_per_class,
                spread: *spread,
            },
            DataConfig::Csv {
                train_path,
                test_path,
            } => DataSpec::Csv {
                train_path: train_path.clone(),
                test_path: test_path.clone(),
            },
        };
        let train_spec = TrainSpec::new(
            self.train.epochs,
            self.train.learning_rate,
            self.train.batch_size,
            0,
        )
        .map_err(|e| e.to_string())?;
        let config = SimConfig {
            architecture,
            n_clients: self.n_clients,
            n_pools: self.n_pools,
            clients_per_round,
            scenario,
            attack,
            rounds: self.rounds,
            train_spec,
            model,
            data,
            krum_f: self.krum_f,
            trim_fraction: self.trim_fraction,
            eta: self.eta,
            validation_fraction: self.validation_fraction,
            pow_difficulty_bits: self.pow_difficulty_bits,
            stakes: self.stakes.clone(),
            accuracy_goal: self.accuracy_goal,
            goal_max_retries: self.goal_max_retries,
            master_seed: seed_override.unwrap_or(self.master_seed),
        };
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}

fn build_pattern(config: &PatternConfig, features: Option<usize>) -> Result<PatternKey, String> {
    let grid_width = match (config.grid_width, features) {
        (Some(w), _) => w,
        (None, Some(p)) => {
            let w = (p as f64).sqrt().round() as usize;
            if w * w != p {
                return Err(format!(
                    "feature count {p} is not square; set pattern.grid_width explicitly"
                ));
            }
            w
        }
        (None, None) => {
            return Err("patterns over csv data need pattern.grid_width".into());
        }
    };
    let built = match config.shape {
        PatternShape::Pixel => PatternKey::pixel(
            grid_width,
            config.row,
            config.col,
            config.value,
            config.target_label,
        ),
        PatternShape::Cross => PatternKey::cross(
            grid_width,
            config.row,
            config.col,
            config.value,
            config.target_label,
        ),
        PatternShape::Square => PatternKey::square(
            grid_width,
            config.row,
            config.col,
            config.value,
            config.target_label,
        ),
    };
    built.map_err(|e| e.to_string())
}
