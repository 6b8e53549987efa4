use std::path::PathBuf;
use std::process::ExitCode;

use andikit_cli::{run, CliError, Command, RunConfig, SEED_ENV};
use clap::{Args, Parser, Subcommand};

/// Reproducible, config-driven runs of the andikit pipeline.
#[derive(Parser)]
#[command(name = "andikit", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a labelled trajectory dataset
    Generate(RunArgs),
    /// Train a classifier on `inputs.train`, early-stopped on `inputs.val`
    Train(RunArgs),
    /// Accuracy, confusion matrix and confidence-by-exponent of a checkpoint or predictions file
    Evaluate(RunArgs),
    /// Per-node Grad-CAM scores for every trajectory
    Gradcam(RunArgs),
    /// Accuracy after erasing each Grad-CAM decile, with a random baseline
    EraseEval(RunArgs),
    /// Train replicates on rotation-augmented training sets
    AugmentTrain(RunArgs),
    /// Accuracy of augmentation schemes across measurement-noise levels
    NoiseEval(RunArgs),
    /// Per-class correlations between windowed statistics and Grad-CAM
    StatsCorr(RunArgs),
    /// Impulse-response receptive field of the final layer
    ProbeRf(RunArgs),
    /// Length-averaged activations of one residual stage
    ExportActivations(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Run directory (overrides `out_dir`)
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Cap on worker threads
    #[arg(long)]
    workers: Option<usize>,

    /// `key=value` overrides; dotted keys address sections, e.g. `dataset.per_class=50`
    overrides: Vec<String>,
}

impl Cmd {
    fn split(self) -> (Command, RunArgs) {
        match self {
            Cmd::Generate(a) => (Command::Generate, a),
            Cmd::Train(a) => (Command::Train, a),
            Cmd::Evaluate(a) => (Command::Evaluate, a),
            Cmd::Gradcam(a) => (Command::Gradcam, a),
            Cmd::EraseEval(a) => (Command::EraseEval, a),
            Cmd::AugmentTrain(a) => (Command::AugmentTrain, a),
            Cmd::NoiseEval(a) => (Command::NoiseEval, a),
            Cmd::StatsCorr(a) => (Command::StatsCorr, a),
            Cmd::ProbeRf(a) => (Command::ProbeRf, a),
            Cmd::ExportActivations(a) => (Command::ExportActivations, a),
        }
    }
}

fn execute(command: Command, args: RunArgs) -> Result<(), CliError> {
    let seed_env = std::env::var(SEED_ENV).ok();
    let mut cfg = RunConfig::resolve(args.config.as_deref(), seed_env.as_deref(), &args.overrides)?;
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    if let Some(n) = cfg.workers {
        if n == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let summary = run(command, &cfg)?;
    for p in &summary.outputs {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = cli.command.split();
    match execute(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
