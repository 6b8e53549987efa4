use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{BatchStats, BnMode, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::ModelConfig;

/// Batchnorm running-statistic momentum.
pub const BN_MOMENTUM: f64 = 0.1;

/// Batchnorm normalization source for a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor<F> {
    pub name: String,
    pub value: Arc<Tensor<F>>,
}

/// Running mean and variance of one batchnorm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<F> {
    pub name: String,
    pub mean: Vec<F>,
    pub var: Vec<F>,
}

#[derive(Clone, Copy, Debug)]
struct ConvBn {
    weight: usize,
    scale: usize,
    shift: usize,
    bn: usize,
    stride: usize,
    padding: usize,
}

#[derive(Clone, Debug)]
struct Block {
    conv1: ConvBn,
    conv2: ConvBn,
    down: Option<ConvBn>,
}

#[derive(Clone, Debug)]
struct Plan {
    stem: ConvBn,
    stages: Vec<Vec<Block>>,
    fc_weight: usize,
    fc_bias: usize,
}

/// Tape handles produced by [`Model::body`].
pub struct BodyOutput<F> {
    /// Final convolutional feature map, `[N, C, n]`.
    pub features: Var,
    /// Output of every stage, in order.
    pub stages: Vec<Var>,
    /// Batch statistics per batchnorm layer (training mode only).
    pub stats: Vec<(usize, BatchStats<F>)>,
}

/// Single-input forward pass results.
#[derive(Clone, Debug)]
pub struct ForwardOutput<F> {
    pub probabilities: Vec<f64>,
    /// Final convolutional feature map, `[C, n]`.
    pub final_conv: Tensor<F>,
    /// Length-averaged output of every stage.
    pub stage_pooled: Vec<Vec<f64>>,
}

/// 1-D residual classifier.
#[derive(Clone, Debug)]
pub struct Model<F> {
    config: ModelConfig,
    params: Vec<NamedTensor<F>>,
    running: Vec<RunningStats<F>>,
    plan: Plan,
}

struct Builder<'a, F> {
    params: Vec<NamedTensor<F>>,
    running: Vec<RunningStats<F>>,
    rng: &'a mut ChaCha8Rng,
}

impl<F: Scalar> Builder<'_, F> {
    fn push(&mut self, name: String, shape: Vec<usize>, data: Vec<F>) -> usize {
        self.params.push(NamedTensor {
            name,
            value: Arc::new(Tensor::new(shape, data).expect("consistent shape")),
        });
        self.params.len() - 1
    }

    fn gaussian(&mut self, n: usize, std: f64) -> Vec<F> {
        let dist = Normal::new(0.0, std).expect("finite std");
        (0..n).map(|_| F::of(dist.sample(self.rng))).collect()
    }

    fn conv_bn(&mut self, name: &str, c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize) -> ConvBn {
        let w = self.gaussian(c_out * c_in * k, (2.0 / (c_in * k) as f64).sqrt());
        let weight = self.push(format!("{name}.weight"), vec![c_out, c_in, k], w);
        let scale = self.push(format!("{name}.bn.scale"), vec![c_out], vec![F::one(); c_out]);
        let shift = self.push(format!("{name}.bn.shift"), vec![c_out], vec![F::zero(); c_out]);
        self.running.push(RunningStats {
            name: format!("{name}.bn"),
            mean: vec![F::zero(); c_out],
            var: vec![F::one(); c_out],
        });
        ConvBn {
            weight,
            scale,
            shift,
            bn: self.running.len() - 1,
            stride,
            padding,
        }
    }
}

impl<F: Scalar> Model<F> {
    /// Freshly initialized model: He-scaled Gaussian convolutions,
    /// `N(0, 1/fan_in)` head weights, zero head bias, identity batchnorm.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            params: Vec::new(),
            running: Vec::new(),
            rng: &mut rng,
        };
        let ch = config.channels();
        let stem = b.conv_bn(
            "stem",
            config.in_channels,
            ch[0],
            config.stem_kernel,
            config.stem_stride,
            config.stem_padding,
        );
        let mut stages = Vec::new();
        let mut c_in = ch[0];
        for (s, &c_out) in ch.iter().enumerate() {
            let mut blocks = Vec::new();
            for bi in 0..config.blocks_per_stage {
                let stride = if bi == 0 { ModelConfig::stage_stride(s) } else { 1 };
                let name = format!("stage{}.block{}", s + 1, bi + 1);
                let (k, p) = (config.block_kernel, config.block_padding);
                let conv1 = b.conv_bn(&format!("{name}.conv1"), c_in, c_out, k, stride, p);
                let conv2 = b.conv_bn(&format!("{name}.conv2"), c_out, c_out, k, 1, p);
                let down = (stride != 1 || c_in != c_out)
                    .then(|| b.conv_bn(&format!("{name}.shortcut"), c_in, c_out, 1, stride, 0));
                blocks.push(Block { conv1, conv2, down });
                c_in = c_out;
            }
            stages.push(blocks);
        }
        let classes = config.num_classes;
        let w = b.gaussian(classes * c_in, (1.0 / c_in as f64).sqrt());
        let fc_weight = b.push("fc.weight".into(), vec![classes, c_in], w);
        let fc_bias = b.push("fc.bias".into(), vec![classes], vec![F::zero(); classes]);
        let (params, running) = (b.params, b.running);
        Ok(Self {
            config,
            params,
            running,
            plan: Plan {
                stem,
                stages,
                fc_weight,
                fc_bias,
            },
        })
    }

    /// Rebuilds a model from stored arrays, matched by name and shape.
    pub fn from_parts(config: ModelConfig, params: Vec<NamedTensor<F>>, running: Vec<RunningStats<F>>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.params.len() || running.len() != model.running.len() {
            return Err(Error::Shape("stored arrays do not match the configuration".into()));
        }
        for (dst, src) in model.params.iter_mut().zip(params) {
            if dst.name != src.name || dst.value.shape() != src.value.shape() {
                return Err(Error::Shape(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    src.name,
                    src.value.shape(),
                    dst.name,
                    dst.value.shape()
                )));
            }
            *dst = src;
        }
        for (dst, src) in model.running.iter_mut().zip(running) {
            if dst.name != src.name || dst.mean.len() != src.mean.len() || dst.var.len() != src.var.len() {
                return Err(Error::Shape(format!("running statistics `{}` mismatch", src.name)));
            }
            *dst = src;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[NamedTensor<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [NamedTensor<F>] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats<F>] {
        &self.running
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn cast<G: Scalar>(&self) -> Model<G> {
        let conv = |v: &[F]| v.iter().map(|x| G::of(x.as_f64())).collect();
        Model {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    value: Arc::new(p.value.cast()),
                })
                .collect(),
            running: self
                .running
                .iter()
                .map(|r| RunningStats {
                    name: r.name.clone(),
                    mean: conv(&r.mean),
                    var: conv(&r.var),
                })
                .collect(),
            plan: self.plan.clone(),
        }
    }

    /// Registers every parameter on `tape`, tracked for gradients when
    /// `trainable`.
    pub fn bind(&self, tape: &mut Tape<F>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                let v = Arc::clone(&p.value);
                if trainable {
                    tape.param(v)
                } else {
                    tape.constant(v)
                }
            })
            .collect()
    }

    fn conv_bn(
        &self,
        tape: &mut Tape<F>,
        vars: &[Var],
        x: Var,
        layer: ConvBn,
        mode: Mode,
        stats: &mut Vec<(usize, BatchStats<F>)>,
    ) -> Result<Var> {
        let y = tape.conv1d(x, vars[layer.weight], layer.stride, layer.padding)?;
        let running = &self.running[layer.bn];
        let bn_mode = match mode {
            Mode::Train => BnMode::Train,
            Mode::Eval => BnMode::Eval {
                mean: &running.mean,
                var: &running.var,
            },
        };
        let (out, batch) = tape.batchnorm(y, vars[layer.scale], vars[layer.shift], bn_mode)?;
        if let Some(b) = batch {
            stats.push((layer.bn, b));
        }
        Ok(out)
    }

    /// Stem and residual stages on `[N, C_in, L]` input.
    pub fn body(&self, tape: &mut Tape<F>, vars: &[Var], input: Var, mode: Mode) -> Result<BodyOutput<F>> {
        let shape = tape.value(input).shape();
        if shape.len() != 3 || shape[1] != self.config.in_channels || shape[2] != self.config.input_len {
            return Err(Error::Shape(format!(
                "model expects [N, {}, {}] input, got {shape:?}",
                self.config.in_channels, self.config.input_len
            )));
        }
        let mut stats = Vec::new();
        let c = &self.config;
        let x = self.conv_bn(tape, vars, input, self.plan.stem, mode, &mut stats)?;
        let x = tape.relu(x);
        let mut x = tape.max_pool1d(x, c.pool_kernel, c.pool_stride, c.pool_padding)?;
        let mut stages = Vec::with_capacity(self.plan.stages.len());
        for blocks in &self.plan.stages {
            for block in blocks {
                let h = self.conv_bn(tape, vars, x, block.conv1, mode, &mut stats)?;
                let h = tape.relu(h);
                let h = self.conv_bn(tape, vars, h, block.conv2, mode, &mut stats)?;
                let shortcut = match block.down {
                    Some(d) => self.conv_bn(tape, vars, x, d, mode, &mut stats)?,
                    None => x,
                };
                let sum = tape.add(h, shortcut)?;
                x = tape.relu(sum);
            }
            stages.push(x);
        }
        Ok(BodyOutput {
            features: x,
            stages,
            stats,
        })
    }

    /// Global average pool and fully-connected layer; returns logits `[N, classes]`.
    pub fn head(&self, tape: &mut Tape<F>, vars: &[Var], features: Var) -> Result<Var> {
        let pooled = tape.global_avg_pool(features)?;
        tape.linear(pooled, vars[self.plan.fc_weight], vars[self.plan.fc_bias])
    }

    /// Exponential running-average update from training-mode batch statistics.
    pub fn update_running_stats(&mut self, stats: &[(usize, BatchStats<F>)]) {
        let m = F::of(BN_MOMENTUM);
        let keep = F::one() - m;
        for (idx, b) in stats {
            let r = &mut self.running[*idx];
            for (rm, &bm) in r.mean.iter_mut().zip(&b.mean) {
                *rm = keep * *rm + m * bm;
            }
            for (rv, &bv) in r.var.iter_mut().zip(&b.var) {
                *rv = keep * *rv + m * bv;
            }
        }
    }

    /// Stacks flat `C_in x L` inputs into one batch tensor.
    pub fn batch_tensor(&self, inputs: &[&[F]]) -> Result<Tensor<F>> {
        let width = self.config.in_channels * self.config.input_len;
        let mut data = Vec::with_capacity(inputs.len() * width);
        for x in inputs {
            if x.len() != width {
                return Err(Error::Shape(format!("input of {} values, expected {width}", x.len())));
            }
            data.extend_from_slice(x);
        }
        Tensor::new(vec![inputs.len(), self.config.in_channels, self.config.input_len], data)
    }

    /// Class probabilities for a batch of flat inputs, in evaluation mode.
    pub fn predict_batch(&self, inputs: &[&[F]]) -> Result<Vec<Vec<f64>>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let x = tape.leaf(self.batch_tensor(inputs)?, false);
        let body = self.body(&mut tape, &vars, x, Mode::Eval)?;
        let logits = self.head(&mut tape, &vars, body.features)?;
        let probs = tape.softmax(logits)?;
        Ok(tape
            .value(probs)
            .data()
            .chunks(self.config.num_classes)
            .map(|row| row.iter().map(|v| v.as_f64()).collect())
            .collect())
    }

    /// Evaluation-mode pass over one flat input, keeping intermediate maps.
    pub fn forward_classify(&self, input: &[F]) -> Result<ForwardOutput<F>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let x = tape.leaf(self.batch_tensor(&[input])?, false);
        let body = self.body(&mut tape, &vars, x, Mode::Eval)?;
        let logits = self.head(&mut tape, &vars, body.features)?;
        let probs = tape.softmax(logits)?;
        let final_conv = tape.value(body.features).clone();
        let shape = final_conv.shape()[1..].to_vec();
        let stage_pooled = body
            .stages
            .iter()
            .map(|&s| {
                let t = tape.value(s);
                let len = t.shape()[2];
                t.data()
                    .chunks(len)
                    .map(|row| row.iter().map(|v| v.as_f64()).sum::<f64>() / len as f64)
                    .collect()
            })
            .collect();
        Ok(ForwardOutput {
            probabilities: tape.value(probs).data().iter().map(|v| v.as_f64()).collect(),
            final_conv: final_conv.reshape(shape)?,
            stage_pooled,
        })
    }
}
