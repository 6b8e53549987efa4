//! Command pipelines. Each command reads its declared inputs, writes the
//! resolved config and input hashes, then its outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use andikit::experiments::{
    augment_dataset, noise_robustness_curve, targeted_erasure_curve, AugmentationMode, AugmentationSpec, ErasureConfig,
};
use andikit::gradcam::{gradcam_trajectories, probe_receptive_field, subinterval_ranges, write_gradcam_report};
use andikit::network::{
    confidence_by_alpha, evaluate, export_activations, train_with_progress, Checkpoint, Classifier, Model,
    TrainOutcome, TrainingMeta,
};
use andikit::stats::correlation_report;
use andikit::trajgen::{build_dataset, content_hash, read_dataset, write_dataset, Dataset, DatasetSpec, LengthLaw, Mechanism, Trajectory, NUM_CLASSES};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{RunDir, Schema};
use crate::plotdata::{emit_plotdata, Report};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Generate,
    Train,
    Evaluate,
    Gradcam,
    EraseEval,
    AugmentTrain,
    NoiseEval,
    StatsCorr,
    ProbeRf,
    ExportActivations,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Generate,
        Command::Train,
        Command::Evaluate,
        Command::Gradcam,
        Command::EraseEval,
        Command::AugmentTrain,
        Command::NoiseEval,
        Command::StatsCorr,
        Command::ProbeRf,
        Command::ExportActivations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Gradcam => "gradcam",
            Command::EraseEval => "erase-eval",
            Command::AugmentTrain => "augment-train",
            Command::NoiseEval => "noise-eval",
            Command::StatsCorr => "stats-corr",
            Command::ProbeRf => "probe-rf",
            Command::ExportActivations => "export-activations",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// What a finished run wrote.
#[derive(Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub outputs: Vec<PathBuf>,
}

enum Parsed {
    Dataset(Dataset),
    Checkpoint(Box<Checkpoint>),
    Predictions(PredictionTable),
}

struct Input {
    role: String,
    path: PathBuf,
    sha256: String,
    parsed: Parsed,
}

#[derive(Clone, Copy)]
enum Kind {
    Dataset,
    Checkpoint,
    Predictions,
}

impl Input {
    /// Reads and parses an input, so a bad file fails the run before any output exists.
    fn load(role: &str, path: Option<&PathBuf>, kind: Kind) -> Result<Self, CliError> {
        let path = path.ok_or_else(|| CliError::MissingInput {
            role: role.to_string(),
            detail: format!("set inputs.{role}"),
        })?;
        let bytes = std::fs::read(path).map_err(|e| match CliError::input(path, e) {
            CliError::MissingInput { detail, .. } => CliError::MissingInput {
                role: role.to_string(),
                detail: format!("{}: {detail}", path.display()),
            },
            other => other,
        })?;
        let bad = |e: &dyn std::fmt::Display| CliError::bad_input(path, e);
        let parsed = match kind {
            Kind::Dataset => {
                let ds = read_dataset(bytes.as_slice()).map_err(|e| bad(&e))?;
                if ds.is_empty() {
                    return Err(bad(&"dataset has no records"));
                }
                Parsed::Dataset(ds)
            }
            Kind::Checkpoint => Parsed::Checkpoint(Box::new(Checkpoint::read(bytes.as_slice()).map_err(|e| bad(&e))?)),
            Kind::Predictions => {
                let text = std::str::from_utf8(&bytes).map_err(|e| bad(&e))?;
                Parsed::Predictions(PredictionTable::parse(text).map_err(|e| bad(&e))?)
            }
        };
        Ok(Self {
            role: role.to_string(),
            path: path.clone(),
            sha256: content_hash(&bytes),
            parsed,
        })
    }

    fn dataset(&self) -> &Dataset {
        match &self.parsed {
            Parsed::Dataset(d) => d,
            _ => unreachable!("{} is not a dataset", self.role),
        }
    }

    fn checkpoint(&self) -> &Checkpoint {
        match &self.parsed {
            Parsed::Checkpoint(c) => c,
            _ => unreachable!("{} is not a checkpoint", self.role),
        }
    }

    /// A checkpoint that went through training.
    fn trained(&self) -> Result<&Model<f32>, CliError> {
        let ck = self.checkpoint();
        ck.meta.as_ref().ok_or(andikit::Error::Untrained)?;
        Ok(&ck.model)
    }
}

#[derive(Serialize)]
struct InputRecord {
    path: PathBuf,
    sha256: String,
}

/// Class probabilities read from a CSV with header
/// `trajectory_id,<class names>`, one row per trajectory in dataset order.
pub struct PredictionTable {
    rows: Vec<[f64; NUM_CLASSES]>,
}

impl PredictionTable {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or("empty predictions file")?;
        let expected: Vec<&str> = std::iter::once("trajectory_id").chain(Mechanism::ALL.iter().map(|m| m.name())).collect();
        if header.trim_end().split(',').collect::<Vec<_>>() != expected {
            return Err(format!("header must be `{}`", expected.join(",")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != NUM_CLASSES + 1 {
                return Err(format!("row {i}: expected {} fields", NUM_CLASSES + 1));
            }
            if fields[0].parse::<usize>().ok() != Some(i) {
                return Err(format!("row {i}: trajectory ids must run 0, 1, 2, ..."));
            }
            let mut p = [0.0f64; NUM_CLASSES];
            for (slot, f) in p.iter_mut().zip(&fields[1..]) {
                *slot = f.parse().map_err(|e| format!("row {i}: {e}"))?;
                if !slot.is_finite() {
                    return Err(format!("row {i}: non-finite probability"));
                }
            }
            rows.push(p);
        }
        Ok(Self { rows })
    }
}

impl Classifier for PredictionTable {
    fn predict_proba(&self, trajectories: &[Trajectory]) -> andikit::Result<Vec<[f64; NUM_CLASSES]>> {
        if trajectories.len() != self.rows.len() {
            return Err(andikit::Error::Shape(format!(
                "{} predictions for {} trajectories",
                self.rows.len(),
                trajectories.len()
            )));
        }
        Ok(self.rows.clone())
    }
}

fn dataset_bytes(ds: &Dataset) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_dataset(ds, &mut buf)?;
    Ok(buf)
}

fn history_csv(outcome_history: &[andikit::network::EpochRecord]) -> String {
    let mut s = String::from("epoch,learning_rate,train_loss,train_accuracy,val_loss,val_accuracy\n");
    for r in outcome_history {
        writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{:?}",
            r.epoch, r.learning_rate, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
        )
        .unwrap();
    }
    s
}

fn class_counts(ds: &Dataset) -> BTreeMap<&'static str, usize> {
    Mechanism::ALL.iter().map(|m| m.name()).zip(ds.count_per_class()).collect()
}

fn train_model(
    cfg: &RunConfig,
    seed: u64,
    train_set: &Dataset,
    val_set: &Dataset,
    tag: &str,
) -> Result<TrainOutcome<f32>, CliError> {
    let model = Model::<f32>::new(cfg.model.config()?, seed)?;
    let spec = cfg.training.spec(seed)?;
    Ok(train_with_progress(model, train_set, val_set, &spec, |r| {
        eprintln!(
            "{tag}epoch {} lr {:e} train loss {:.4} acc {:.4} val loss {:.4} acc {:.4}",
            r.epoch, r.learning_rate, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
        );
    })?)
}

fn write_plot(run: &mut RunDir, report: &Report) -> Result<(), CliError> {
    let csv = emit_plotdata(report)?;
    run.write(report.file_name(), csv.as_bytes(), Schema::Csv)?;
    Ok(())
}

/// Input files a command reads, by role.
fn load_inputs(command: Command, cfg: &RunConfig) -> Result<Vec<Input>, CliError> {
    let i = &cfg.inputs;
    let ds = |role: &str, p: &Option<PathBuf>| Input::load(role, p.as_ref(), Kind::Dataset);
    let ck = |role: &str, p: &Option<PathBuf>| Input::load(role, p.as_ref(), Kind::Checkpoint);
    let mut v = Vec::new();
    match command {
        Command::Generate => {}
        Command::Train => {
            v.push(ds("train", &i.train)?);
            v.push(ds("val", &i.val)?);
        }
        Command::Evaluate => {
            v.push(ds("dataset", &i.dataset)?);
            match (&i.checkpoint, &i.predictions) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Config("set only one of inputs.checkpoint and inputs.predictions".into()))
                }
                (_, Some(p)) => v.push(Input::load("predictions", Some(p), Kind::Predictions)?),
                _ => v.push(ck("checkpoint", &i.checkpoint)?),
            }
        }
        Command::Gradcam | Command::EraseEval | Command::StatsCorr | Command::ExportActivations => {
            v.push(ck("checkpoint", &i.checkpoint)?);
            v.push(ds("dataset", &i.dataset)?);
        }
        Command::AugmentTrain => {
            v.push(ds("train", &i.train)?);
            v.push(ds("val", &i.val)?);
            if cfg.augment.mode == AugmentationMode::Targeted {
                v.push(ck("checkpoint", &i.checkpoint)?);
            }
        }
        Command::NoiseEval => {
            if i.targeted.is_empty() && i.random.is_empty() {
                return Err(CliError::MissingInput {
                    role: "targeted/random".into(),
                    detail: "set inputs.targeted and/or inputs.random".into(),
                });
            }
            for (k, p) in i.targeted.iter().enumerate() {
                v.push(Input::load(&format!("targeted[{k}]"), Some(p), Kind::Checkpoint)?);
            }
            for (k, p) in i.random.iter().enumerate() {
                v.push(Input::load(&format!("random[{k}]"), Some(p), Kind::Checkpoint)?);
            }
        }
        Command::ProbeRf => {
            if i.checkpoint.is_some() {
                v.push(ck("checkpoint", &i.checkpoint)?);
            }
        }
    }
    Ok(v)
}

fn find<'a>(inputs: &'a [Input], role: &str) -> &'a Input {
    inputs.iter().find(|i| i.role == role).expect("input loaded by load_inputs")
}

/// Config sections a command uses, checked before anything is written.
fn check_config(command: Command, cfg: &RunConfig) -> Result<(), CliError> {
    match command {
        Command::Generate => drop(cfg.dataset.spec(cfg.seed)?),
        Command::Train | Command::AugmentTrain => {
            cfg.model.config()?;
            cfg.training.spec(cfg.seed)?;
            if command == Command::AugmentTrain {
                let spec = AugmentationSpec {
                    mode: cfg.augment.mode,
                    fraction: cfg.augment.fraction,
                    seed: cfg.seed,
                };
                spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
                if cfg.augment.replicates == 0 {
                    return Err(CliError::Config("augment.replicates must be at least 1".into()));
                }
            }
        }
        Command::Evaluate if cfg.evaluate.alpha_bins == 0 => {
            return Err(CliError::Config("evaluate.alpha_bins must be at least 1".into()))
        }
        Command::EraseEval if !(0.0..=1.0).contains(&cfg.erasure.random_fraction) => {
            return Err(CliError::Config("erasure.random_fraction must lie in [0, 1]".into()))
        }
        Command::NoiseEval => {
            DatasetSpec::balanced(cfg.noise.per_class, LengthLaw::Fixed(cfg.noise.length), cfg.seed)
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
            if cfg.noise.grid.is_empty() || cfg.noise.grid.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(CliError::Config("noise.grid needs non-negative finite levels".into()));
            }
        }
        Command::StatsCorr => match (cfg.stats.window, cfg.stats.stride) {
            (Some(0), _) | (_, Some(0)) => return Err(CliError::Config("stats.window and stats.stride must be positive".into())),
            (Some(_), None) | (None, Some(_)) => {
                return Err(CliError::Config("stats.window and stats.stride go together".into()))
            }
            _ if cfg.stats.n_sub == 0 => return Err(CliError::Config("stats.n_sub must be at least 1".into())),
            _ => {}
        },
        Command::ProbeRf => drop(cfg.model.config()?),
        Command::ExportActivations if cfg.export.block == 0 => {
            return Err(CliError::Config("export.block is 1-based".into()))
        }
        _ => {}
    }
    Ok(())
}

/// Runs `command` under `cfg` and returns what it wrote.
pub fn run(command: Command, cfg: &RunConfig) -> Result<RunSummary, CliError> {
    check_config(command, cfg)?;
    let inputs = load_inputs(command, cfg)?;
    let dir = cfg
        .out_dir
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(command.name()));
    let paths: Vec<PathBuf> = inputs.iter().map(|i| i.path.clone()).collect();
    let mut run = RunDir::create(&dir, &paths)?;
    run.write("config.resolved.toml", cfg.to_toml().as_bytes(), Schema::Toml)?;
    let records: BTreeMap<&str, InputRecord> = inputs
        .iter()
        .map(|i| {
            (
                i.role.as_str(),
                InputRecord {
                    path: i.path.clone(),
                    sha256: i.sha256.clone(),
                },
            )
        })
        .collect();
    run.write_json("inputs.json", &records)?;

    match command {
        Command::Generate => generate(cfg, &mut run)?,
        Command::Train => train_cmd(cfg, &inputs, &mut run)?,
        Command::Evaluate => evaluate_cmd(cfg, &inputs, &mut run)?,
        Command::Gradcam => gradcam_cmd(cfg, &inputs, &mut run)?,
        Command::EraseEval => erase_cmd(cfg, &inputs, &mut run)?,
        Command::AugmentTrain => augment_cmd(cfg, &inputs, &mut run)?,
        Command::NoiseEval => noise_cmd(cfg, &inputs, &mut run)?,
        Command::StatsCorr => stats_cmd(cfg, &inputs, &mut run)?,
        Command::ProbeRf => probe_cmd(cfg, &inputs, &mut run)?,
        Command::ExportActivations => export_cmd(cfg, &inputs, &mut run)?,
    }
    Ok(RunSummary {
        dir,
        outputs: run.written().to_vec(),
    })
}

fn generate(cfg: &RunConfig, run: &mut RunDir) -> Result<(), CliError> {
    let spec = cfg.dataset.spec(cfg.seed)?;
    let ds = build_dataset(&spec)?;
    let bytes = dataset_bytes(&ds)?;
    run.write("dataset.txt", &bytes, Schema::Dataset)?;
    #[derive(Serialize)]
    struct R<'a> {
        records: usize,
        per_class: BTreeMap<&'static str, usize>,
        spec: &'a DatasetSpec,
        dataset_sha256: String,
    }
    run.write_json(
        "generate.json",
        &R {
            records: ds.len(),
            per_class: class_counts(&ds),
            spec: &spec,
            dataset_sha256: content_hash(&bytes),
        },
    )?;
    Ok(())
}

fn train_cmd(cfg: &RunConfig, inputs: &[Input], run: &mut RunDir) -> Result<(), CliError> {
    let train_set = find(inputs, "train").dataset();
    let val_set = find(inputs, "val").dataset();
    let outcome = train_model(cfg, cfg.seed, train_set, val_set, "")?;
    let ck = Checkpoint {
        model: outcome.model,
        meta: Some(outcome.meta.clone()),
    };
    let bytes = ck.to_bytes()?;
    run.write("model.ckpt", &bytes, Schema::Checkpoint)?;
    run.write("history.csv", history_csv(&outcome.history).as_bytes(), Schema::Csv)?;
    #[derive(Serialize)]
    struct R<'a> {
        meta: &'a TrainingMeta,
        parameters: usize,
        history: &'a [andikit::network::EpochRecord],
        checkpoint_sha256: String,
    }
    run.write_json(
        "train.json",
        &R {
            meta: &outcome.meta,
            parameters: ck.model.num_parameters(),
            history: &outcome.history,
            checkpoint_sha256: content_hash(&bytes),
        },
    )?;
    Ok(())
}

fn evaluate_cmd(cfg: &RunConfig, inputs: &[Input], run: &mut RunDir) -> Result<(), CliError> {
    let ds = find(inputs, "dataset").dataset();
    let classifier: &dyn Classifier = match inputs.iter().find(|i| i.role == "predictions").map(|i| &i.parsed) {
        Some(Parsed::Predictions(p)) => p,
        _ => &find(inputs, "checkpoint").checkpoint().model,
    };
    let eval = evaluate(classifier, ds)?;
    let confidence = confidence_by_alpha(classifier, ds, cfg.evaluate.alpha_bins)?;
    #[derive(Serialize)]
    struct R<'a> {
        accuracy: f64,
        records: usize,
        evaluation: &'a andikit::network::Evaluation,
        confidence: &'a [Vec<andikit::network::ConfidenceBin>],
    }
    run.write_json(
        "evaluate.json",
        &R {
            accuracy: eval.accuracy,
            records: ds.len(),
            evaluation: &eval,
            confidence: &confidence,
        },
    )?;
    write_plot(run, &Report::Confusion(Box::new(eval)))?;
    write_plot(run, &Report::Confidence(confidence))?;
    Ok(())
}

fn gradcam_cmd(cfg: &RunConfig, inputs: &[Input], run: &mut RunDir) -> Result<(), CliError> {
    let model = &find(inputs, "checkpoint").checkpoint().model;
    let ds = find(inputs, "dataset").dataset();
    let choice = cfg.gradcam.class_choice;
    let cams = gradcam_trajectories(model, &ds.trajectories, choice)?;
    let input_len = model.config().input_len;
    let refs: Vec<(usize, &_)> = cams.iter().enumerate().collect();
    let mut buf = Vec::new();
    write_gradcam_report(&mut buf, &refs, choice, input_len)?;
    run.write("gradcam.csv", &buf, Schema::Csv)?;
    let nodes = cams.first().map_or(0, |c| c.scores.len());
    let mut mean = vec![vec![0.0; nodes]; NUM_CLASSES];
    let mut count = [0usize; NUM_CLASSES];
    for (t, c) in ds.iter().zip(&cams) {
        count[t.label.index()] += 1;
        for (m, g) in mean[t.label.index()].iter_mut().zip(&c.scores) {
            *m += g;
        }
    }
    for (row, &n) in mean.iter_mut().zip(&count) {
        row.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    }
    #[derive(Serialize)]
    struct R {
        class_choice: andikit::gradcam::ClassChoice,
        trajectories: usize,
        input_len: usize,
        nodes: usize,
        subintervals: Vec<std::ops::Range<usize>>,
        mean_scores_by_true_class: BTreeMap<&'static str, Vec<f64>>,
    }
    run.write_json(
        "gradcam.json",
        &R {
            class_choice: choice,
            trajectories: cams.len(),
            input_len,
            nodes,
            subintervals: subinterval_ranges(nodes, input_len)?,
            mean_scores_by_true_class: Mechanism::ALL.iter().map(|m| m.name()).zip(mean).collect(),
        },
    )?;
    Ok(())
}

fn erase_cmd(cfg: &RunConfig, inputs: &[Input], run: &mut RunDir) -> Result<(), CliError> {
    let model = find(inputs, "checkpoint").trained()?;
    let ds = find(inputs, "dataset").dataset();
    let seeds = if cfg.erasure.seeds.is_empty() {
        vec![cfg.seed]
    } else {
        cfg.erasure.seeds.clone()
    };
    let curves = seeds
        .iter()
        .map(|&seed| {
            let ec = ErasureConfig {
                decile_mode: cfg.erasure.decile_mode,
                class_choice: cfg.erasure.class_choice,
                random_fraction: cfg.erasure.random_fraction,
                seed,
            };
            targeted_erasure_curve(model, ds, &ec)
        })
        .collect::<andikit::Result<Vec<_>>>()?;
    let report = Report::Erasure(curves);
    run.write_json("erase-eval.json", &report)?;
    write_plot(run, &report)
}

fn augment_cmd(cfg: &RunConfig, inputs: &[Input], run: &mut RunDir) -> Result<(), CliError> {
    let train_set = find(inputs, "train").dataset();
    let val_set = find(inputs, "val").dataset();
    let guide = match cfg.augment.mode {
        AugmentationMode::Targeted => Some(find(inputs, "checkpoint").trained()?),
        AugmentationMode::Random => None,
    };
    let seeds: Vec<u64> = (0..cfg.augment.replicates as u64).map(|i| cfg.seed + i).collect();
    let results = seeds
        .par_iter()
        .map(|&seed| {
            let spec = AugmentationSpec {
                mode: cfg.augment.mode,
                fraction: cfg.augment.fraction,
                seed,
            };
            let (augmented, manifest) = augment_dataset(train_set, guide, &spec)?;
            let outcome = train_model(cfg, seed, &augmented, val_set, &format!("[seed {seed}] "))?;
            Ok((manifest, outcome))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    #[derive(Serialize)]
    struct Replicate<'a> {
        seed: u64,
        checkpoint: String,
        checkpoint_sha256: String,
        training_size: usize,
        meta: &'a TrainingMeta,
        history: &'a [andikit::network::EpochRecord],
    }
    let mut replicates = Vec::new();
    for (k, (seed, (manifest, outcome))) in seeds.iter().zip(&results).enumerate() {
        let ck = Checkpoint {
            model: outcome.model.clone(),
            meta: Some(outcome.meta.clone()),
        };
        let bytes = ck.to_bytes()?;
        let name = format!("replicate_{k}.ckpt");
        run.write(&name, &bytes, Schema::Checkpoint)?;
        run.write_json(&format!("augment_{k}.json"), manifest)?;
        replicates.push(Replicate {
            seed: *seed,
            checkpoint: name,
            checkpoint_sha256: content_hash(&bytes),
            training_size: manifest.original_size + manifest.entries.len(),
            meta: &outcome.meta,
            history: &outcome.history,
        });
    }
    #[derive(Serialize)]
    struct R<'a> {
        mode: AugmentationMode,
        fraction: f64,
        replicates: Vec<Replicate<'a>>,
    }
    run.write_json(
        "augment-train.json",
        &R {
            mode: cfg.augment.mode,
            fraction: cfg.augment.fraction,
            replicates,
        },
    )?;
    Ok(())
}

fn noise_cmd(cfg: &RunConfig, inputs: &[Input], run: &mut RunDir) -> Result<(), CliError> {
    let load = |prefix: &str| -> Result<Vec<&Model<f32>>, CliError> {
        inputs.iter().filter(|i| i.role.starts_with(prefix)).map(Input::trained).collect()
    };
    let targeted = load("targeted[")?;
    let random = load("random[")?;
    let mut schemes: Vec<(&str, Vec<&dyn Classifier>)> = Vec::new();
    for (name, models) in [("targeted", &targeted), ("random", &random)] {
        if !models.is_empty() {
            schemes.push((name, models.iter().map(|&m| m as &dyn Classifier).collect()));
        }
    }
    let spec = DatasetSpec::balanced(cfg.noise.per_class, LengthLaw::Fixed(cfg.noise.length), cfg.seed);
    let curve = noise_robustness_curve(&schemes, &spec, &cfg.noise.grid)?;
    let report = Report::Noise(curve);
    run.write_json("noise-eval.json", &report)?;
    write_plot(run, &report)
}

fn stats_cmd(cfg: &RunConfig, inputs: &[Input], run: &mut RunDir) -> Result<(), CliError> {
    let model = &find(inputs, "checkpoint").checkpoint().model;
    let ds = find(inputs, "dataset").dataset();
    let (window, stride) = match (cfg.stats.window, cfg.stats.stride) {
        (Some(w), Some(s)) => (w, s),
        _ => probe_receptive_field(model)?.recommended_windows()?,
    };
    let mut report = correlation_report(model, ds, window, stride, cfg.stats.n_sub)?;
    let mut buf = Vec::new();
    report.write_windows(&mut buf)?;
    run.write("windows.csv", &buf, Schema::Csv)?;
    // per-window rows live in windows.csv
    report.windows.clear();
    let report = Report::Correlation(report);
    run.write_json("stats-corr.json", &report)?;
    write_plot(run, &report)
}

fn probe_cmd(cfg: &RunConfig, inputs: &[Input], run: &mut RunDir) -> Result<(), CliError> {
    let model = match inputs.iter().find(|i| i.role == "checkpoint") {
        Some(i) => i.checkpoint().model.clone(),
        None => Model::<f32>::new(cfg.model.config()?, cfg.seed)?,
    };
    let probe = probe_receptive_field(&model)?;
    let (window, stride) = probe.recommended_windows()?;
    let mut csv = String::from("impulse");
    for j in 1..=probe.responses.len() {
        write!(csv, ",n{j}").unwrap();
    }
    csv.push('\n');
    for i in 0..probe.input_len {
        write!(csv, "{i}").unwrap();
        for curve in &probe.responses {
            write!(csv, ",{:?}", curve[i]).unwrap();
        }
        csv.push('\n');
    }
    run.write("responses.csv", csv.as_bytes(), Schema::Csv)?;
    #[derive(Serialize)]
    struct R<'a> {
        input_len: usize,
        nodes: usize,
        peaks: &'a [usize],
        spans: &'a [usize],
        window: usize,
        peak_spacing: usize,
        recommended_window: usize,
        recommended_stride: usize,
    }
    run.write_json(
        "probe-rf.json",
        &R {
            input_len: probe.input_len,
            nodes: probe.peaks.len(),
            peaks: &probe.peaks,
            spans: &probe.spans,
            window: probe.window,
            peak_spacing: probe.stride,
            recommended_window: window,
            recommended_stride: stride,
        },
    )?;
    Ok(())
}

fn export_cmd(cfg: &RunConfig, inputs: &[Input], run: &mut RunDir) -> Result<(), CliError> {
    let model = &find(inputs, "checkpoint").checkpoint().model;
    let ds = find(inputs, "dataset").dataset();
    let mut buf = Vec::new();
    let rows = export_activations(model, ds, cfg.export.block, &mut buf)?;
    run.write("activations.csv", &buf, Schema::Csv)?;
    #[derive(Serialize)]
    struct R {
        block: usize,
        rows: usize,
        dim: usize,
    }
    run.write_json(
        "export-activations.json",
        &R {
            block: cfg.export.block,
            rows,
            dim: model.config().channels()[cfg.export.block - 1],
        },
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("plot".parse::<Command>().is_err());
    }

    #[test]
    fn prediction_table_checks_layout() {
        let header = format!("trajectory_id,{}", Mechanism::ALL.map(|m| m.name()).join(","));
        let ok = format!("{header}\n0,1,0,0,0,0,0,0,0\n1,0,1,0,0,0,0,0,0\n");
        assert_eq!(PredictionTable::parse(&ok).unwrap().rows.len(), 2);
        assert!(PredictionTable::parse("id,a\n").is_err());
        assert!(PredictionTable::parse(&format!("{header}\n1,1,0,0,0,0,0,0,0\n")).is_err());
        assert!(PredictionTable::parse(&format!("{header}\n0,1,0,0\n")).is_err());
    }
}
