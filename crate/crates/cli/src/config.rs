//! Run configuration: a TOML file, then `ANDIKIT_SEED`, then `key=value`
//! overrides, deserialized into [`RunConfig`].

use std::path::{Path, PathBuf};

use andikit::experiments::{AugmentationMode, DecileMode, DEFAULT_NOISE_GRID};
use andikit::gradcam::ClassChoice;
use andikit::network::{ModelConfig, TrainingSpec};
use andikit::stats::DEFAULT_N_SUB;
use andikit::trajgen::{DatasetSpec, LengthLaw, Mechanism};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

pub const SEED_ENV: &str = "ANDIKIT_SEED";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Run directory; `runs/<command>` when unset.
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub inputs: Inputs,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub evaluate: EvaluateSection,
    pub gradcam: GradcamSection,
    pub erasure: ErasureSection,
    pub augment: AugmentSection,
    pub noise: NoiseSection,
    pub stats: StatsSection,
    pub export: ExportSection,
}

/// Input files. Which ones a command needs is checked when it runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub dataset: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Per-trajectory class probabilities to evaluate instead of a model.
    pub predictions: Option<PathBuf>,
    /// Checkpoints of the targeted-augmentation replicates.
    pub targeted: Vec<PathBuf>,
    /// Checkpoints of the random-augmentation replicates.
    pub random: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub per_class: usize,
    /// Fixed length; ignored when `length_min`/`length_max` are set.
    pub length: usize,
    pub length_min: Option<usize>,
    pub length_max: Option<usize>,
    pub noise: f64,
    /// Class names; all eight when empty.
    pub classes: Vec<String>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            per_class: 10,
            length: 200,
            length_min: None,
            length_max: None,
            noise: 0.0,
            classes: Vec::new(),
        }
    }
}

impl DatasetSection {
    pub fn spec(&self, seed: u64) -> Result<DatasetSpec, CliError> {
        let length_law = match (self.length_min, self.length_max) {
            (None, None) => LengthLaw::Fixed(self.length),
            (Some(min), Some(max)) => LengthLaw::Uniform { min, max },
            _ => return Err(CliError::Config("dataset.length_min and dataset.length_max go together".into())),
        };
        let classes = if self.classes.is_empty() {
            Mechanism::ALL.to_vec()
        } else {
            self.classes
                .iter()
                .map(|c| c.parse::<Mechanism>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Config(e.to_string()))?
        };
        let spec = DatasetSpec {
            classes,
            per_class: self.per_class,
            length_law,
            noise_amplitude: self.noise,
            seed,
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub input_len: usize,
    pub scale: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            input_len: 200,
            scale: 0.5,
        }
    }
}

impl ModelSection {
    pub fn config(&self) -> Result<ModelConfig, CliError> {
        let c = ModelConfig::scaled(self.input_len, self.scale);
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub lr_halving_period: usize,
    pub max_epochs: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let d = TrainingSpec::default();
        Self {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            patience: d.patience,
            lr_halving_period: d.lr_halving_period,
            max_epochs: d.max_epochs,
        }
    }
}

impl TrainingSection {
    pub fn spec(&self, seed: u64) -> Result<TrainingSpec, CliError> {
        let s = TrainingSpec {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            patience: self.patience,
            lr_halving_period: self.lr_halving_period,
            max_epochs: self.max_epochs,
            seed,
        };
        s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub alpha_bins: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { alpha_bins: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcamSection {
    pub class_choice: ClassChoice,
}

impl Default for GradcamSection {
    fn default() -> Self {
        Self {
            class_choice: ClassChoice::TrueClass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErasureSection {
    pub decile_mode: DecileMode,
    pub class_choice: ClassChoice,
    pub random_fraction: f64,
    /// Seeds of the random-erasure baseline; the run seed when empty.
    pub seeds: Vec<u64>,
}

impl Default for ErasureSection {
    fn default() -> Self {
        Self {
            decile_mode: DecileMode::PerTrajectory,
            class_choice: ClassChoice::Predicted,
            random_fraction: 0.1,
            seeds: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub mode: AugmentationMode,
    pub fraction: f64,
    /// Models trained, with seeds `seed, seed + 1, ...`.
    pub replicates: usize,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            mode: AugmentationMode::Targeted,
            fraction: 0.6,
            replicates: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub grid: Vec<f64>,
    pub per_class: usize,
    pub length: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            grid: DEFAULT_NOISE_GRID.to_vec(),
            per_class: 250,
            length: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    /// Window length and stride; taken from the receptive-field probe when unset.
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub n_sub: usize,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            window: None,
            stride: None,
            n_sub: DEFAULT_N_SUB,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    /// 1-based residual stage.
    pub block: usize,
}

impl Default for ExportSection {
    fn default() -> Self {
        Self { block: 4 }
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| CliError::Config(format!("empty key in `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Layers the config file, `ANDIKIT_SEED` and `key=value` overrides.
    pub fn resolve(path: Option<&Path>, seed_env: Option<&str>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::input(p, e))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        if let Some(s) = seed_env {
            let seed: u64 = s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{s}` is not an unsigned integer")))?;
            table.insert("seed".into(), Value::Integer(seed as i64));
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{o}` is not key=value")))?;
            set_dotted(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
