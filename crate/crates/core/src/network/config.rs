use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajgen::NUM_CLASSES;

/// Shape of the residual classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_len: usize,
    pub in_channels: usize,
    /// Output channels of the four stages before width scaling.
    pub base_channels: Vec<usize>,
    /// Width multiplier applied to `base_channels`.
    pub scale: f64,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub stem_padding: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    pub pool_padding: usize,
    pub block_kernel: usize,
    pub block_padding: usize,
    pub blocks_per_stage: usize,
    pub num_classes: usize,
}

pub const FULL_SCALE_CHANNELS: [usize; 4] = [64, 128, 256, 512];

impl ModelConfig {
    /// Reference architecture on length-1000 inputs.
    pub fn full_scale() -> Self {
        Self {
            input_len: 1000,
            in_channels: 2,
            base_channels: FULL_SCALE_CHANNELS.to_vec(),
            scale: 1.0,
            stem_kernel: 35,
            stem_stride: 2,
            stem_padding: 17,
            pool_kernel: 3,
            pool_stride: 2,
            pool_padding: 1,
            block_kernel: 15,
            block_padding: 7,
            blocks_per_stage: 2,
            num_classes: NUM_CLASSES,
        }
    }

    /// Reference architecture at another input length and width.
    pub fn scaled(input_len: usize, scale: f64) -> Self {
        Self {
            input_len,
            scale,
            ..Self::full_scale()
        }
    }

    /// Per-stage channel counts after width scaling (at least 1).
    pub fn channels(&self) -> Vec<usize> {
        self.base_channels
            .iter()
            .map(|&c| ((c as f64 * self.scale).round() as usize).max(1))
            .collect()
    }

    /// Stride of the first block in each stage.
    pub fn stage_stride(stage: usize) -> usize {
        if stage == 0 {
            1
        } else {
            2
        }
    }

    /// Lengths after the stem convolution and after each stage.
    pub fn stage_lengths(&self) -> Result<Vec<usize>> {
        self.validate()?;
        Ok(self.lengths_unchecked())
    }

    fn lengths_unchecked(&self) -> Vec<usize> {
        let out = |len: usize, k: usize, s: usize, p: usize| (len + 2 * p).checked_sub(k).map(|v| v / s + 1);
        let mut lengths = Vec::with_capacity(self.base_channels.len() + 1);
        let Some(stem) = out(self.input_len, self.stem_kernel, self.stem_stride, self.stem_padding) else {
            return lengths;
        };
        lengths.push(stem);
        let Some(mut len) = out(stem, self.pool_kernel, self.pool_stride, self.pool_padding) else {
            return lengths;
        };
        for stage in 0..self.base_channels.len() {
            match out(len, self.block_kernel, Self::stage_stride(stage), self.block_padding) {
                Some(l) => len = l,
                None => return lengths,
            }
            lengths.push(len);
        }
        lengths
    }

    /// Number of positions in the final convolutional feature map.
    pub fn final_len(&self) -> Result<usize> {
        Ok(*self.stage_lengths()?.last().expect("validated"))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.base_channels.is_empty() {
            return bad("no stages".into());
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad(format!("width scale {} must be positive", self.scale));
        }
        if self.in_channels == 0 || self.num_classes < 2 || self.blocks_per_stage == 0 {
            return bad("channel, class and block counts must be positive".into());
        }
        if [self.stem_kernel, self.stem_stride, self.pool_kernel, self.pool_stride, self.block_kernel]
            .contains(&0)
        {
            return bad("kernels and strides must be positive".into());
        }
        if 2 * self.block_padding + 1 != self.block_kernel {
            return bad(format!(
                "block kernel {} with padding {} does not preserve length",
                self.block_kernel, self.block_padding
            ));
        }
        let lengths = self.lengths_unchecked();
        if lengths.len() != self.base_channels.len() + 1 || lengths.contains(&0) {
            return bad(format!("input length {} too short for the network", self.input_len));
        }
        Ok(())
    }
}

/// Optimisation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpec {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// The learning rate halves every this many epochs.
    pub lr_halving_period: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 64,
            patience: 10,
            lr_halving_period: 10,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl TrainingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
            || self.batch_size == 0
            || self.patience == 0
            || self.lr_halving_period == 0
            || self.max_epochs == 0
        {
            return Err(Error::InvalidConfig(format!("training spec {self:?} has non-positive fields")));
        }
        Ok(())
    }

    /// Learning rate used during zero-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate * 0.5f64.powi((epoch / self.lr_halving_period) as i32)
    }
}
