use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::trajgen::{preprocess_input, Dataset, Trajectory, NUM_CLASSES};

use super::Model;

/// Trajectories per inference batch.
pub const INFERENCE_BATCH: usize = 64;

/// Anything that maps trajectories to class probabilities.
pub trait Classifier: Sync {
    fn predict_proba(&self, trajectories: &[Trajectory]) -> Result<Vec<[f64; NUM_CLASSES]>>;
}

impl<F: Scalar> Model<F> {
    /// Preprocessed network input for one trajectory.
    pub fn encode(&self, traj: &Trajectory) -> Result<Vec<F>> {
        Ok(preprocess_input(traj, self.config().input_len)?
            .into_iter()
            .map(F::of)
            .collect())
    }
}

impl<F: Scalar> Classifier for Model<F> {
    fn predict_proba(&self, trajectories: &[Trajectory]) -> Result<Vec<[f64; NUM_CLASSES]>> {
        if self.config().num_classes != NUM_CLASSES || self.config().in_channels != 2 {
            return Err(Error::InvalidConfig(
                "trajectory classification needs 2 input channels and 8 classes".into(),
            ));
        }
        let batches: Vec<Vec<Vec<f64>>> = trajectories
            .par_chunks(INFERENCE_BATCH)
            .map(|chunk| {
                let inputs = chunk.iter().map(|t| self.encode(t)).collect::<Result<Vec<_>>>()?;
                let refs: Vec<&[F]> = inputs.iter().map(Vec::as_slice).collect();
                self.predict_batch(&refs)
            })
            .collect::<Result<_>>()?;
        Ok(batches
            .into_iter()
            .flatten()
            .map(|p| {
                let mut row = [0.0; NUM_CLASSES];
                row.copy_from_slice(&p);
                row
            })
            .collect())
    }
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Classification summary over a labelled dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean of the per-class hit rates over classes present in the data.
    pub accuracy: f64,
    /// Row `i`: fraction of class-`i` trajectories predicted as each class.
    /// Rows of absent classes are all zero.
    pub confusion: [[f64; NUM_CLASSES]; NUM_CLASSES],
    pub support: [usize; NUM_CLASSES],
}

pub fn evaluate<C: Classifier + ?Sized>(classifier: &C, dataset: &Dataset) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("evaluation set".into()));
    }
    let probs = classifier.predict_proba(&dataset.trajectories)?;
    let mut counts = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (t, p) in dataset.iter().zip(&probs) {
        counts[t.label.index()][argmax(p)] += 1;
    }
    let mut confusion = [[0.0; NUM_CLASSES]; NUM_CLASSES];
    let mut support = [0usize; NUM_CLASSES];
    let mut hit_rates = Vec::new();
    for (i, row) in counts.iter().enumerate() {
        let n: usize = row.iter().sum();
        support[i] = n;
        if n == 0 {
            continue;
        }
        for (c, &k) in confusion[i].iter_mut().zip(row) {
            *c = k as f64 / n as f64;
        }
        hit_rates.push(confusion[i][i]);
    }
    Ok(Evaluation {
        accuracy: hit_rates.iter().sum::<f64>() / hit_rates.len() as f64,
        confusion,
        support,
    })
}

/// Mean predicted probabilities of one true class inside one exponent bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBin {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub count: usize,
    /// `None` when no trajectory of the class falls in the bin.
    pub mean_probabilities: Option<[f64; NUM_CLASSES]>,
}

/// Exponent range covered by [`confidence_by_alpha`] bins.
pub const ALPHA_BIN_RANGE: (f64, f64) = (0.0, 2.0);

/// Per true class, mean predicted probability vectors over equal-width
/// bins of the true exponent on `[0, 2)`. Indexed `[class][bin]`.
pub fn confidence_by_alpha<C: Classifier + ?Sized>(
    classifier: &C,
    dataset: &Dataset,
    bins: usize,
) -> Result<Vec<Vec<ConfidenceBin>>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("confidence set".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("at least one exponent bin is required".into()));
    }
    let (lo, hi) = ALPHA_BIN_RANGE;
    let width = (hi - lo) / bins as f64;
    let probs = classifier.predict_proba(&dataset.trajectories)?;
    let mut sums = vec![vec![([0.0; NUM_CLASSES], 0usize); bins]; NUM_CLASSES];
    for (t, p) in dataset.iter().zip(&probs) {
        let b = (((t.alpha - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        let cell = &mut sums[t.label.index()][b];
        for (s, v) in cell.0.iter_mut().zip(p) {
            *s += v;
        }
        cell.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|row| {
            row.into_iter()
                .enumerate()
                .map(|(b, (s, n))| ConfidenceBin {
                    alpha_lo: lo + b as f64 * width,
                    alpha_hi: lo + (b + 1) as f64 * width,
                    count: n,
                    mean_probabilities: (n > 0).then(|| s.map(|v| v / n as f64)),
                })
                .collect()
        })
        .collect())
}

/// Header of the activation export file.
pub fn activation_header(dim: usize) -> String {
    let mut h = String::from("label,alpha");
    for i in 1..=dim {
        h.push_str(&format!(",v{i}"));
    }
    h
}

/// Writes the length-averaged output of stage `block_index` (1-based) for
/// every trajectory: a header line, then `label,alpha,v1,...,vC` records.
pub fn export_activations<F: Scalar, W: Write>(
    model: &Model<F>,
    dataset: &Dataset,
    block_index: usize,
    mut out: W,
) -> Result<usize> {
    let stages = model.config().base_channels.len();
    if block_index == 0 || block_index > stages {
        return Err(Error::InvalidConfig(format!(
            "block index {block_index} outside 1..={stages}"
        )));
    }
    let vectors: Vec<Vec<f64>> = dataset
        .trajectories
        .par_iter()
        .map(|t| {
            let fwd = model.forward_classify(&model.encode(t)?)?;
            Ok(fwd.stage_pooled[block_index - 1].clone())
        })
        .collect::<Result<_>>()?;
    let dim = model.config().channels()[block_index - 1];
    writeln!(out, "{}", activation_header(dim))?;
    for (t, v) in dataset.iter().zip(&vectors) {
        write!(out, "{},{:?}", t.label, t.alpha)?;
        for x in v {
            write!(out, ",{x:?}")?;
        }
        writeln!(out)?;
    }
    Ok(vectors.len())
}
