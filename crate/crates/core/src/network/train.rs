use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamConfig, ParamGrad, Scalar, Tape};
use crate::error::{Error, Result};
use crate::trajgen::{trajectory_seed, Dataset};

use super::{argmax, Mode, Model, ModelConfig, NamedTensor, TrainingSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Provenance stored alongside trained weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    /// Zero-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub stopped_early: bool,
}

pub struct TrainOutcome<F> {
    /// Weights from the epoch with the lowest validation loss.
    pub model: Model<F>,
    pub meta: TrainingMeta,
    pub history: Vec<EpochRecord>,
}

/// Encoded inputs and class targets of a dataset.
struct Encoded<F> {
    inputs: Vec<Vec<F>>,
    targets: Vec<usize>,
}

fn encode<F: Scalar>(model: &Model<F>, data: &Dataset) -> Result<Encoded<F>> {
    Ok(Encoded {
        inputs: data.iter().map(|t| model.encode(t)).collect::<Result<_>>()?,
        targets: data.iter().map(|t| t.label.index()).collect(),
    })
}

impl<F: Scalar> Model<F> {
    /// Evaluation-mode summed cross-entropy and hit count over one batch.
    pub fn loss_and_hits(&self, inputs: &[&[F]], targets: &[usize]) -> Result<(f64, usize)> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let x = tape.leaf(self.batch_tensor(inputs)?, false);
        let body = self.body(&mut tape, &vars, x, Mode::Eval)?;
        let logits = self.head(&mut tape, &vars, body.features)?;
        let hits = hit_count(tape.value(logits).data(), targets);
        let loss = tape.softmax_cross_entropy(logits, targets)?;
        Ok((tape.value(loss).data()[0].as_f64() * targets.len() as f64, hits))
    }

    /// One optimisation step on a batch; returns the batch loss and hits.
    pub fn train_step(
        &mut self,
        adam: &mut Adam<F>,
        inputs: &[&[F]],
        targets: &[usize],
        lr: f64,
    ) -> Result<(f64, usize)> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, true);
        let x = tape.leaf(self.batch_tensor(inputs)?, false);
        let body = self.body(&mut tape, &vars, x, Mode::Train)?;
        let logits = self.head(&mut tape, &vars, body.features)?;
        let hits = hit_count(tape.value(logits).data(), targets);
        let loss = tape.softmax_cross_entropy(logits, targets)?;
        let loss_value = tape.value(loss).data()[0].as_f64();
        tape.backward(loss)?;
        let grads: Vec<Vec<F>> = vars
            .iter()
            .zip(self.params())
            .map(|(&v, p)| tape.grad(v).map_or_else(|| vec![F::zero(); p.value.len()], <[F]>::to_vec))
            .collect();
        drop(tape);
        let mut pairs: Vec<ParamGrad<'_, F>> = self
            .params_mut()
            .iter_mut()
            .zip(&grads)
            .map(|(p, g)| {
                let NamedTensor { name, value } = p;
                ParamGrad {
                    name: name.as_str(),
                    value: Arc::make_mut(value).data_mut(),
                    grad: g,
                }
            })
            .collect();
        adam.step(&mut pairs, lr)?;
        self.update_running_stats(&body.stats);
        Ok((loss_value * targets.len() as f64, hits))
    }
}

fn hit_count<F: Scalar>(logits: &[F], targets: &[usize]) -> usize {
    let k = logits.len() / targets.len().max(1);
    logits
        .chunks(k)
        .zip(targets)
        .filter(|(row, &t)| {
            let row: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
            argmax(&row) == t
        })
        .count()
}

fn batched_eval<F: Scalar>(model: &Model<F>, data: &Encoded<F>, batch: usize) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut hits = 0;
    for (xs, ts) in data.inputs.chunks(batch).zip(data.targets.chunks(batch)) {
        let refs: Vec<&[F]> = xs.iter().map(Vec::as_slice).collect();
        let (l, h) = model.loss_and_hits(&refs, ts)?;
        loss += l;
        hits += h;
    }
    let n = data.targets.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

/// Trains with Adam on shuffled mini-batches, halving the learning rate
/// every `lr_halving_period` epochs and stopping once the validation loss
/// has not improved for `patience` consecutive epochs.
pub fn train<F: Scalar>(model: Model<F>, train_set: &Dataset, val_set: &Dataset, spec: &TrainingSpec) -> Result<TrainOutcome<F>> {
    train_with_progress(model, train_set, val_set, spec, |_| {})
}

pub fn train_with_progress<F, P>(
    mut model: Model<F>,
    train_set: &Dataset,
    val_set: &Dataset,
    spec: &TrainingSpec,
    mut progress: P,
) -> Result<TrainOutcome<F>>
where
    F: Scalar,
    P: FnMut(&EpochRecord),
{
    spec.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set".into()));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyDataset("validation set".into()));
    }
    let train_data = encode(&model, train_set)?;
    let val_data = encode(&model, val_set)?;
    let mut adam = Adam::new(AdamConfig::default());
    let mut order: Vec<usize> = (0..train_data.targets.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, Model<F>)> = None;
    let mut stopper = EarlyStopping::new(spec.patience);
    let mut stopped_early = false;

    for epoch in 0..spec.max_epochs {
        let lr = spec.lr_at(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(spec.seed, epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0;
        for batch in order.chunks(spec.batch_size) {
            let inputs: Vec<&[F]> = batch.iter().map(|&i| train_data.inputs[i].as_slice()).collect();
            let targets: Vec<usize> = batch.iter().map(|&i| train_data.targets[i]).collect();
            let (l, h) = model.train_step(&mut adam, &inputs, &targets, lr)?;
            loss_sum += l;
            hits += h;
        }
        let n = order.len() as f64;
        let (val_loss, val_accuracy) = batched_eval(&model, &val_data, spec.batch_size)?;
        let record = EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / n,
            train_accuracy: hits as f64 / n,
            val_loss,
            val_accuracy,
        };
        progress(&record);
        history.push(record);

        match stopper.observe(val_loss) {
            Verdict::Improved => best = Some((val_loss, val_accuracy, epoch, model.clone())),
            Verdict::Stalled => {}
            Verdict::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    let (val_loss, val_accuracy, best_epoch, model) =
        best.ok_or_else(|| Error::Degenerate("validation loss was never finite".into()))?;
    Ok(TrainOutcome {
        model,
        meta: TrainingMeta {
            seed: spec.seed,
            epochs_run: history.len(),
            best_epoch,
            val_loss,
            val_accuracy,
            stopped_early,
        },
        history,
    })
}

/// Independent replicates: for each seed, a fresh model initialized and
/// shuffled from that seed. Replicates run in parallel; each is
/// single-threaded apart from its own inference batches.
pub fn train_replicates<F: Scalar>(
    config: &ModelConfig,
    seeds: &[u64],
    train_set: &Dataset,
    val_set: &Dataset,
    spec: &TrainingSpec,
) -> Result<Vec<TrainOutcome<F>>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let model = Model::new(config.clone(), seed)?;
            train(model, train_set, val_set, &TrainingSpec { seed, ..spec.clone() })
        })
        .collect()
}

/// Validation-loss watcher for early stopping.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    since_best: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Stalled,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> Verdict {
        if val_loss < self.best {
            self.best = val_loss;
            self.since_best = 0;
            Verdict::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Stalled
            }
        }
    }
}
