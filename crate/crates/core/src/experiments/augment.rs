use std::f64::consts::TAU;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::gradcam::{gradcam_trajectories, ClassChoice};
use crate::network::Model;
use crate::trajgen::{Dataset, Trajectory};

/// Rotation about the origin by `angle` radians.
pub fn rotate_trajectory(traj: &Trajectory, angle: f64) -> Trajectory {
    let (s, c) = angle.sin_cos();
    let x = traj.x.iter().zip(&traj.y).map(|(x, y)| x * c - y * s).collect();
    let y = traj.x.iter().zip(&traj.y).map(|(x, y)| x * s + y * c).collect();
    traj.with_positions(x, y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationMode {
    /// Highest mean Grad-CAM score first.
    Targeted,
    Random,
}

impl std::fmt::Display for AugmentationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AugmentationMode::Targeted => "targeted",
            AugmentationMode::Random => "random",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub mode: AugmentationMode,
    /// Share of the training set that is rotated and appended.
    pub fraction: f64,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn new(mode: AugmentationMode, seed: u64) -> Self {
        Self {
            mode,
            fraction: 0.6,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "augmentation fraction {} outside (0, 1]",
                self.fraction
            )));
        }
        Ok(())
    }

    /// Number of appended trajectories for a training set of `n`.
    pub fn added(&self, n: usize) -> usize {
        (((1.0 + self.fraction) * n as f64).ceil() as usize).saturating_sub(n).min(n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedEntry {
    /// Index of the source trajectory in the original training set.
    pub source: usize,
    pub angle: f64,
    /// Mean Grad-CAM score (targeted mode only).
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationManifest {
    pub spec: AugmentationSpec,
    pub class_choice: Option<ClassChoice>,
    pub original_size: usize,
    pub entries: Vec<AugmentedEntry>,
}

/// Appends rotated copies of selected training trajectories. Targeted mode
/// ranks by mean Grad-CAM score of the predicted class and needs `model`.
pub fn augment_dataset<F: Scalar>(
    train_set: &Dataset,
    model: Option<&Model<F>>,
    spec: &AugmentationSpec,
) -> Result<(Dataset, AugmentationManifest)> {
    spec.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("augmentation source".into()));
    }
    let n = train_set.len();
    let k = spec.added(n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (selected, scores, choice): (Vec<usize>, Option<Vec<f64>>, _) = match spec.mode {
        AugmentationMode::Targeted => {
            let model = model.ok_or(Error::Untrained)?;
            let choice = ClassChoice::Predicted;
            let cams = gradcam_trajectories(model, &train_set.trajectories, choice)?;
            let means: Vec<f64> = cams
                .iter()
                .map(|c| c.scores.iter().sum::<f64>() / c.scores.len() as f64)
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
            order.truncate(k);
            (order, Some(means), Some(choice))
        }
        AugmentationMode::Random => {
            let mut idx = sample(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            (idx, None, None)
        }
    };
    let mut trajectories = train_set.trajectories.clone();
    let mut entries = Vec::with_capacity(k);
    for &i in &selected {
        let angle = rng.random::<f64>() * TAU;
        trajectories.push(rotate_trajectory(&train_set.trajectories[i], angle));
        entries.push(AugmentedEntry {
            source: i,
            angle,
            score: scores.as_ref().map(|s| s[i]),
        });
    }
    Ok((
        Dataset::new(trajectories),
        AugmentationManifest {
            spec: spec.clone(),
            class_choice: choice,
            original_size: n,
            entries,
        },
    ))
}
