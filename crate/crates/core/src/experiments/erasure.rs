use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::gradcam::{gradcam_trajectories, subinterval_ranges, ClassChoice, GradCam};
use crate::network::{evaluate, Model};
use crate::trajgen::{trajectory_seed, Dataset, Trajectory};

pub const DECILES: usize = 10;

/// Sets every point inside a masked subinterval to the origin. Subintervals
/// partition the left-padded input of length `input_len`; masked padding
/// has nothing to erase.
pub fn erase_subintervals(traj: &Trajectory, mask: &[bool], input_len: usize) -> Result<Trajectory> {
    let len = traj.len();
    if len > input_len {
        return Err(Error::TooLong {
            len,
            target: input_len,
        });
    }
    let ranges = subinterval_ranges(mask.len(), input_len)?;
    let pad = input_len - len;
    let (mut x, mut y) = (traj.x.clone(), traj.y.clone());
    for (r, _) in ranges.iter().zip(mask).filter(|(_, &m)| m) {
        let lo = r.start.max(pad) - pad;
        let hi = r.end.max(pad) - pad;
        x[lo..hi].fill(0.0);
        y[lo..hi].fill(0.0);
    }
    Ok(traj.with_positions(x, y))
}

/// How decile membership of node scores is ranked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecileMode {
    /// Within each trajectory's own scores.
    PerTrajectory,
    /// Over the scores of all trajectories pooled.
    Global,
}

/// 1-based decile of each score by ascending rank; ties broken by position.
pub fn decile_ranks(scores: &[f64]) -> Vec<usize> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * DECILES / n + 1;
    }
    out
}

/// Decile of every node of every trajectory.
pub fn assign_deciles(cams: &[GradCam], mode: DecileMode) -> Vec<Vec<usize>> {
    match mode {
        DecileMode::PerTrajectory => cams.iter().map(|c| decile_ranks(&c.scores)).collect(),
        DecileMode::Global => {
            let flat: Vec<f64> = cams.iter().flat_map(|c| c.scores.iter().copied()).collect();
            let ranks = decile_ranks(&flat);
            let mut it = ranks.into_iter();
            cams.iter().map(|c| it.by_ref().take(c.scores.len()).collect()).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErasureConfig {
    pub decile_mode: DecileMode,
    pub class_choice: ClassChoice,
    /// Per-subinterval erasure probability of the random baseline.
    pub random_fraction: f64,
    pub seed: u64,
}

impl Default for ErasureConfig {
    fn default() -> Self {
        Self {
            decile_mode: DecileMode::PerTrajectory,
            class_choice: ClassChoice::Predicted,
            random_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErasureCurve {
    pub config: ErasureConfig,
    /// Accuracy without erasure.
    pub control: f64,
    /// Accuracy after erasing decile `d` (index `d - 1`).
    pub per_decile: Vec<f64>,
    /// Mean fraction of subintervals erased per decile run.
    pub erased_fraction: Vec<f64>,
    pub random_baseline: f64,
}

fn erased_accuracy<F: Scalar>(
    model: &Model<F>,
    dataset: &Dataset,
    masks: impl Fn(usize) -> Vec<bool>,
) -> Result<f64> {
    let len = model.config().input_len;
    let erased = dataset
        .iter()
        .enumerate()
        .map(|(i, t)| erase_subintervals(t, &masks(i), len))
        .collect::<Result<Vec<_>>>()?;
    Ok(evaluate(model, &Dataset::new(erased))?.accuracy)
}

/// Accuracy after erasing each Grad-CAM decile, plus the random-erasure
/// baseline and the unerased control.
pub fn targeted_erasure_curve<F: Scalar>(model: &Model<F>, dataset: &Dataset, config: &ErasureConfig) -> Result<ErasureCurve> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("erasure set".into()));
    }
    if !(0.0..=1.0).contains(&config.random_fraction) {
        return Err(Error::InvalidConfig(format!("random fraction {}", config.random_fraction)));
    }
    let cams = gradcam_trajectories(model, &dataset.trajectories, config.class_choice)?;
    let deciles = assign_deciles(&cams, config.decile_mode);
    let control = evaluate(model, dataset)?.accuracy;
    let mut per_decile = Vec::with_capacity(DECILES);
    let mut erased_fraction = Vec::with_capacity(DECILES);
    let total: usize = deciles.iter().map(Vec::len).sum();
    for d in 1..=DECILES {
        let hits = deciles.iter().flatten().filter(|&&k| k == d).count();
        erased_fraction.push(hits as f64 / total as f64);
        per_decile.push(erased_accuracy(model, dataset, |i| deciles[i].iter().map(|&k| k == d).collect())?);
    }
    let random_baseline = erased_accuracy(model, dataset, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(config.seed, i as u64));
        (0..deciles[i].len()).map(|_| rng.random::<f64>() < config.random_fraction).collect()
    })?;
    Ok(ErasureCurve {
        config: config.clone(),
        control,
        per_decile,
        erased_fraction,
        random_baseline,
    })
}
