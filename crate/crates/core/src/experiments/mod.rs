//! Grad-CAM guided erasure, augmentation and noise-robustness experiments.

mod augment;
mod erasure;
mod noise;

pub use augment::{
    augment_dataset, rotate_trajectory, AugmentationManifest, AugmentationMode, AugmentationSpec, AugmentedEntry,
};
pub use erasure::{
    assign_deciles, decile_ranks, erase_subintervals, targeted_erasure_curve, DecileMode, ErasureConfig,
    ErasureCurve, DECILES,
};
pub use noise::{mean_and_std_error, noise_robustness_curve, NoiseCurve, NoiseLevel, SchemeAccuracy, DEFAULT_NOISE_GRID};
