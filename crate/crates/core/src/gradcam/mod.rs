//! Grad-CAM saliency over the final convolutional feature map.
//!
//! For a class probability `p` and feature maps `A^k`, the channel weights
//! are `a^k = mean_i dp/dA^k_i` and the node scores `G_i = sum_k a^k A^k_i`.
//! Scores are not rectified.

mod probe;
mod subinterval;

use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::network::{argmax, Mode, Model, INFERENCE_BATCH};
use crate::trajgen::Trajectory;

pub use probe::{probe_receptive_field, ReceptiveFieldProbe, RESPONSE_THRESHOLD};
pub use subinterval::{assign_to_subintervals, subinterval_ranges, tiling_stride, window_scores, WindowScore};

/// Which class probability is differentiated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassChoice {
    /// Ground-truth label of the trajectory.
    TrueClass,
    /// The model's arg-max prediction.
    Predicted,
}

impl std::fmt::Display for ClassChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassChoice::TrueClass => "true_class",
            ClassChoice::Predicted => "predicted",
        })
    }
}

/// Grad-CAM result for one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCam {
    pub class_index: usize,
    pub probabilities: Vec<f64>,
    /// `a^k`, one per feature map.
    pub weights: Vec<f64>,
    /// `G_i`, one per final-layer position.
    pub scores: Vec<f64>,
}

/// `G_i = sum_k weights[k] * features[k][i]` for a `[C, n]` feature map.
pub fn combine<F: Scalar>(weights: &[f64], features: &Tensor<F>) -> Result<Vec<f64>> {
    let shape = features.shape();
    if shape.len() != 2 || shape[0] != weights.len() {
        return Err(Error::Shape(format!(
            "{} weights for feature map {shape:?}",
            weights.len()
        )));
    }
    let n = shape[1];
    let mut g = vec![0.0; n];
    for (a, row) in weights.iter().zip(features.data().chunks(n)) {
        for (gi, v) in g.iter_mut().zip(row) {
            *gi += a * v.as_f64();
        }
    }
    Ok(g)
}

/// Channel weights for an arbitrary scalar head over a `[C, n]` feature map.
pub fn feature_weights_with<F, H>(features: &Tensor<F>, head: H) -> Result<Vec<f64>>
where
    F: Scalar,
    H: FnOnce(&mut Tape<F>, Var) -> Result<Var>,
{
    let shape = features.shape().to_vec();
    if shape.len() != 2 || shape[1] == 0 {
        return Err(Error::Shape(format!("feature map {shape:?}")));
    }
    let mut tape = Tape::new();
    let a = tape.leaf(features.clone(), true);
    let p = head(&mut tape, a)?;
    tape.backward(p)?;
    let n = shape[1];
    Ok(match tape.grad(a) {
        Some(g) => g
            .chunks(n)
            .map(|row| row.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64)
            .collect(),
        None => vec![0.0; shape[0]],
    })
}

/// Final convolutional feature maps of a batch, `[N, C, n]`, in evaluation mode.
pub fn final_features<F: Scalar>(model: &Model<F>, inputs: &[&[F]]) -> Result<Tensor<F>> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape, false);
    let x = tape.leaf(model.batch_tensor(inputs)?, false);
    let body = model.body(&mut tape, &vars, x, Mode::Eval)?;
    Ok(tape.value(body.features).clone())
}

fn check_class<F: Scalar>(model: &Model<F>, class: usize) -> Result<()> {
    if class >= model.config().num_classes {
        return Err(Error::ClassIndex(class));
    }
    Ok(())
}

/// Grad-CAM for a batch of flat inputs. `classes[b]` selects the
/// differentiated class of sample `b`; `None` takes the prediction.
pub fn gradcam_batch<F: Scalar>(model: &Model<F>, inputs: &[&[F]], classes: &[Option<usize>]) -> Result<Vec<GradCam>> {
    if inputs.len() != classes.len() {
        return Err(Error::Shape("one class choice per input is required".into()));
    }
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    for c in classes.iter().flatten() {
        check_class(model, *c)?;
    }
    let features = Arc::new(final_features(model, inputs)?);
    let (nb, nc, n) = (features.shape()[0], features.shape()[1], features.shape()[2]);
    let k = model.config().num_classes;

    let mut tape = Tape::new();
    let vars = model.bind(&mut tape, false);
    let a = tape.param(Arc::clone(&features));
    let logits = model.head(&mut tape, &vars, a)?;
    let probs = tape.softmax(logits)?;
    let prob_rows: Vec<Vec<f64>> = tape
        .value(probs)
        .data()
        .chunks(k)
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect();
    let chosen: Vec<usize> = classes
        .iter()
        .zip(&prob_rows)
        .map(|(c, p)| c.unwrap_or_else(|| argmax(p)))
        .collect();
    let flat: Vec<usize> = chosen.iter().enumerate().map(|(b, &c)| b * k + c).collect();
    // samples do not interact in evaluation mode, so the summed probability
    // yields every per-sample gradient at once
    let picked = tape.pick(probs, &flat)?;
    let total = tape.sum(picked);
    tape.backward(total)?;
    let grad = tape.grad(a).map(<[F]>::to_vec).unwrap_or_else(|| vec![F::zero(); nb * nc * n]);

    let mut out = Vec::with_capacity(nb);
    for b in 0..nb {
        let g = &grad[b * nc * n..(b + 1) * nc * n];
        let weights: Vec<f64> = g
            .chunks(n)
            .map(|row| row.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64)
            .collect();
        let fmap = Tensor::new(vec![nc, n], features.data()[b * nc * n..(b + 1) * nc * n].to_vec())?;
        out.push(GradCam {
            class_index: chosen[b],
            probabilities: prob_rows[b].clone(),
            scores: combine(&weights, &fmap)?,
            weights,
        });
    }
    Ok(out)
}

/// `a^k` for one flat input and class.
pub fn feature_weights<F: Scalar>(model: &Model<F>, input: &[F], class: usize) -> Result<Vec<f64>> {
    Ok(gradcam_batch(model, &[input], &[Some(class)])?.remove(0).weights)
}

/// `G` for one flat input and class.
pub fn gradcam_scores<F: Scalar>(model: &Model<F>, input: &[F], class: usize) -> Result<Vec<f64>> {
    Ok(gradcam_batch(model, &[input], &[Some(class)])?.remove(0).scores)
}

/// Grad-CAM over trajectories, batched and sharded across threads.
pub fn gradcam_trajectories<F: Scalar>(
    model: &Model<F>,
    trajectories: &[Trajectory],
    choice: ClassChoice,
) -> Result<Vec<GradCam>> {
    let batches: Vec<Vec<GradCam>> = trajectories
        .par_chunks(INFERENCE_BATCH)
        .map(|chunk| {
            let inputs = chunk.iter().map(|t| model.encode(t)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&[F]> = inputs.iter().map(Vec::as_slice).collect();
            let classes: Vec<Option<usize>> = chunk
                .iter()
                .map(|t| match choice {
                    ClassChoice::TrueClass => Some(t.label.index()),
                    ClassChoice::Predicted => None,
                })
                .collect();
            gradcam_batch(model, &refs, &classes)
        })
        .collect::<Result<_>>()?;
    Ok(batches.into_iter().flatten().collect())
}

/// Per-input Grad-CAM profile with its input mapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCamProfile {
    pub class_choice: ClassChoice,
    pub class_index: usize,
    pub node_scores: Vec<f64>,
    /// Input index range covered by each node.
    pub subintervals: Vec<Range<usize>>,
    pub windows: Vec<WindowScore>,
}

impl GradCamProfile {
    pub fn new(cam: &GradCam, choice: ClassChoice, input_len: usize, window: usize, stride: usize) -> Result<Self> {
        Ok(Self {
            class_choice: choice,
            class_index: cam.class_index,
            node_scores: cam.scores.clone(),
            subintervals: subinterval_ranges(cam.scores.len(), input_len)?,
            windows: window_scores(&cam.scores, input_len, window, stride)?,
        })
    }
}

/// Writes `trajectory_id,class_used,g1,...,gn` records after a header line,
/// followed by a `node,start,end` block describing the subinterval map.
pub fn write_gradcam_report<W: Write>(
    mut out: W,
    cams: &[(usize, &GradCam)],
    choice: ClassChoice,
    input_len: usize,
) -> Result<()> {
    let n = cams.first().map_or(0, |c| c.1.scores.len());
    if n == 0 {
        return Err(Error::EmptyDataset("no Grad-CAM records".into()));
    }
    let mut header = String::from("trajectory_id,class_used");
    for i in 1..=n {
        header.push_str(&format!(",g{i}"));
    }
    writeln!(out, "{header}")?;
    for (id, cam) in cams {
        if cam.scores.len() != n {
            return Err(Error::Shape("Grad-CAM records of different lengths".into()));
        }
        write!(out, "{id},{}", crate::trajgen::Mechanism::from_index(cam.class_index).ok_or(Error::ClassIndex(cam.class_index))?)?;
        for g in &cam.scores {
            write!(out, ",{g:?}")?;
        }
        writeln!(out)?;
    }
    writeln!(out)?;
    writeln!(out, "# class choice: {choice}")?;
    writeln!(out, "node,start,end")?;
    for (i, r) in subinterval_ranges(n, input_len)?.iter().enumerate() {
        writeln!(out, "{},{},{}", i + 1, r.start, r.end)?;
    }
    Ok(())
}
