use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::Result;
use crate::network::{Model, INFERENCE_BATCH};

use super::{final_features, tiling_stride};

/// Fraction of a node's peak response that delimits its window.
pub const RESPONSE_THRESHOLD: f64 = 0.9;

/// Impulse-response map of the final feature positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceptiveFieldProbe {
    pub input_len: usize,
    /// `responses[j][i]`: change of node `j` when input step `i` goes from
    /// 0 to 1 in every channel, divided by the node's largest change.
    pub responses: Vec<Vec<f64>>,
    /// Impulse location of each node's largest response.
    pub peaks: Vec<usize>,
    /// Distance from the first to the last impulse location whose response
    /// reaches [`RESPONSE_THRESHOLD`], inclusive. Untrained responses are
    /// jagged, so a contiguous run around the peak is often a single step.
    pub spans: Vec<usize>,
    /// Median span.
    pub window: usize,
    /// Median distance between adjacent nodes' peaks.
    pub stride: usize,
}

impl ReceptiveFieldProbe {
    /// Window and stride for Grad-CAM subtrajectories: the measured window,
    /// with the stride tightened so every final node gets one window.
    pub fn recommended_windows(&self) -> Result<(usize, usize)> {
        let window = self.window.clamp(1, self.input_len);
        Ok((window, tiling_stride(self.input_len, window, self.peaks.len())?))
    }
}

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    let n = v.len();
    if n == 0 {
        0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]).div_ceil(2)
    }
}

/// Measures how each final-layer position responds to a unit impulse at
/// every input step, starting from an all-zero input. A node's response is
/// the Euclidean norm of the change across feature maps.
pub fn probe_receptive_field<F: Scalar>(model: &Model<F>) -> Result<ReceptiveFieldProbe> {
    let cfg = model.config();
    let (ch, len) = (cfg.in_channels, cfg.input_len);
    let zero = vec![F::zero(); ch * len];
    let base = final_features(model, &[&zero])?;
    let (nc, n) = (base.shape()[1], base.shape()[2]);
    let base = base.data().to_vec();

    let steps: Vec<usize> = (0..len).collect();
    let columns: Vec<Vec<Vec<f64>>> = steps
        .par_chunks(INFERENCE_BATCH)
        .map(|chunk| {
            let inputs: Vec<Vec<F>> = chunk
                .iter()
                .map(|&i| {
                    let mut x = zero.clone();
                    for c in 0..ch {
                        x[c * len + i] = F::one();
                    }
                    x
                })
                .collect();
            let refs: Vec<&[F]> = inputs.iter().map(Vec::as_slice).collect();
            let feats = final_features(model, &refs)?;
            Ok(feats
                .data()
                .chunks(nc * n)
                .map(|sample| {
                    (0..n)
                        .map(|j| {
                            (0..nc)
                                .map(|k| (sample[k * n + j].as_f64() - base[k * n + j].as_f64()).powi(2))
                                .sum::<f64>()
                                .sqrt()
                        })
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    // columns[i][j] -> responses[j][i]
    let columns: Vec<Vec<f64>> = columns.into_iter().flatten().collect();
    let mut responses = vec![vec![0.0; len]; n];
    for (i, col) in columns.iter().enumerate() {
        for (j, &v) in col.iter().enumerate() {
            responses[j][i] = v;
        }
    }
    let mut peaks = Vec::with_capacity(n);
    let mut spans = Vec::with_capacity(n);
    for curve in responses.iter_mut() {
        let (peak, max) = curve
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        if max > 0.0 {
            curve.iter_mut().for_each(|v| *v /= max);
        }
        let above: Vec<usize> = if max > 0.0 {
            (0..len).filter(|&i| curve[i] >= RESPONSE_THRESHOLD).collect()
        } else {
            Vec::new()
        };
        peaks.push(peak);
        spans.push(match (above.first(), above.last()) {
            (Some(lo), Some(hi)) => hi - lo + 1,
            _ => 0,
        });
    }
    let spacing: Vec<usize> = peaks.windows(2).map(|p| p[1].abs_diff(p[0])).collect();
    Ok(ReceptiveFieldProbe {
        input_len: len,
        window: median(spans.clone()),
        stride: median(spacing).max(1),
        responses,
        peaks,
        spans,
    })
}
