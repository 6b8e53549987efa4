//! Residual 1-D convolutional classifier: construction, training,
//! evaluation and persistence.

mod checkpoint;
mod config;
mod evaluate;
mod model;
mod train;

pub use checkpoint::{Checkpoint, ManifestEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, TrainingSpec, FULL_SCALE_CHANNELS};
pub use evaluate::{
    activation_header, argmax, confidence_by_alpha, evaluate, export_activations, Classifier, ConfidenceBin,
    Evaluation, ALPHA_BIN_RANGE, INFERENCE_BATCH,
};
pub use model::{BodyOutput, ForwardOutput, Mode, Model, NamedTensor, RunningStats, BN_MOMENTUM};
pub use train::{train, train_replicates, train_with_progress, EarlyStopping, EpochRecord, TrainOutcome, TrainingMeta, Verdict};
