use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bgan::bayesgan::{self, Model};
use bgan::checks::{self, CheckReport};
use bgan::config::{Experiment, ExperimentConfig};
use bgan::datagen::{self, Dataset};
use bgan::experiment::{self, RunFailure};
use bgan::predict::{argmax, Predictor};
use bgan::{par, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Bayesian GAN experiments: training, evaluation and self-checks.
#[derive(Parser, Debug)]
#[command(name = "bgan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train and write metrics, checkpoint and plots.
    Train(TrainArgs),
    /// Bayesian model average test error of a checkpoint on a labeled dataset.
    Eval(EvalArgs),
    /// Finite-difference gradient suite or known-posterior sampler suite.
    Check(CheckArgs),
    /// Print the default configuration of an experiment.
    Defaults {
        #[arg(default_value = "synth_unsup")]
        experiment: String,
    },
    /// Write a synthetic dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled CSV, or IDX images when --labels is given.
    #[arg(long)]
    data: PathBuf,
    /// IDX labels file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Block-mean downsampling factor for IDX images.
    #[arg(long, default_value_t = 1)]
    downsample: usize,
    /// Average only the discriminators of the last collection.
    #[arg(long)]
    last_only: bool,
    /// Write per-example class probabilities here.
    #[arg(long)]
    probs: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(value_enum)]
    kind: CheckKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    ambient_dim: usize,
    #[arg(long, default_value_t = 2)]
    latent_dim: usize,
    /// Tag points with one of K mixing matrices.
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Bayes,
    Map,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CheckKind {
    Gradients,
    Sampler,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_numeric() => EXIT_NUMERIC,
        Error::Config(_) | Error::SpecMismatch(_) => EXIT_CONFIG,
        _ => 1,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = par::init_from_env();
    match cli.command {
        Command::Train(a) => cmd_train(a, threads),
        Command::Eval(a) => cmd_eval(a),
        Command::Check(a) => cmd_check(a.kind, a.seed),
        Command::Defaults { experiment } => match experiment.parse::<Experiment>() {
            Ok(e) => {
                print!("{}", ExperimentConfig::defaults(e).to_text());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Synth(a) => cmd_synth(a),
    }
}

fn resolve_config(a: &TrainArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &a.config {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Config(format!("config file {} does not exist", path.display())));
            }
            ExperimentConfig::load(path)?
        }
        None => ExperimentConfig::defaults(Experiment::SynthUnsup),
    };
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(o) = &a.output {
        cfg.output = o.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.repeats {
        cfg.repeats = r;
    }
    if let Some(m) = a.model {
        cfg.model = match m {
            ModelArg::Bayes => Model::Bayes,
            ModelArg::Map => Model::Map,
        };
    }
    Ok(cfg)
}

fn cmd_train(a: TrainArgs, threads: usize) -> ExitCode {
    let cfg = match resolve_config(&a) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    match cfg.experiment {
        Experiment::GradientCheck => return cmd_check(CheckKind::Gradients, cfg.seed),
        Experiment::SamplerCheck => return cmd_check(CheckKind::Sampler, cfg.seed),
        _ => {}
    }
    if let Err(e) = cfg.validate() {
        return fail(&e);
    }
    println!("# effective configuration ({threads} worker threads)");
    print!("{}", cfg.to_text());
    let _ = std::io::stdout().flush();

    match experiment::run_experiment(&cfg) {
        Ok(outcome) => {
            for run in &outcome.runs {
                let metric = run.final_metric().map(|m| format!("{m:.6}")).unwrap_or_else(|| "n/a".into());
                let what = if cfg.experiment == Experiment::SynthUnsup { "final JSD" } else { "final BMA test error" };
                println!("seed {}: {what} {metric}", run.config.seed);
                if let Some(e) = run.final_sample_error {
                    println!("seed {}: final single-sample test error {e:.6}", run.config.seed);
                }
                if let Some(e) = run.supervised_error {
                    println!("seed {}: supervised-only test error {e:.6}", run.config.seed);
                }
            }
            if let Some((m, s)) = outcome.summary {
                println!("summary over {} repeats: {m:.6} +- {s:.6} (mean +- 2 stdev)", outcome.runs.len());
            }
            println!("outputs in {}", cfg.output.display());
            ExitCode::SUCCESS
        }
        Err(RunFailure { error, iteration, .. }) => {
            match iteration {
                Some(i) => eprintln!("error at iteration {i}: {error}"),
                None => eprintln!("error: {error}"),
            }
            ExitCode::from(exit_code(&error))
        }
    }
}

fn load_eval_data(a: &EvalArgs) -> Result<Dataset, Error> {
    let data = match &a.labels {
        Some(labels) => datagen::load_idx(&a.data, labels)?,
        None => datagen::read_csv(&a.data)?,
    };
    if a.downsample > 1 {
        datagen::downsample(&data, a.downsample)
    } else {
        Ok(data)
    }
}

fn cmd_eval(a: EvalArgs) -> ExitCode {
    let run = || -> Result<(), Error> {
        let set = bayesgan::load_checkpoint(&a.checkpoint)?;
        let data = load_eval_data(&a)?;
        let spec = set.disc_spec();
        if spec.input_dim() != data.dim() {
            return Err(Error::SpecMismatch(format!(
                "checkpoint discriminator takes {} features, dataset has {}",
                spec.input_dim(),
                data.dim()
            )));
        }
        let samples: Vec<_> = if a.last_only {
            let last = set.collected_disc.last().map(|c| c.iteration);
            set.collected_disc.iter().filter(|c| Some(c.iteration) == last).map(|c| c.params.clone()).collect()
        } else {
            set.collected_disc.iter().map(|c| c.params.clone()).collect()
        };
        if samples.is_empty() {
            return Err(Error::Config("checkpoint holds no collected discriminator samples".into()));
        }
        let predictor = Predictor::new(samples).map_err(|e| Error::SpecMismatch(format!("{e}")))?;
        if data.num_classes() > predictor.num_classes() {
            return Err(Error::SpecMismatch(format!(
                "dataset has labels up to {}, discriminator knows {} classes",
                data.num_classes(),
                predictor.num_classes()
            )));
        }
        let test = data.to_labeled()?;
        let err = predictor.test_error(&test)?;
        println!("samples averaged: {}", predictor.len());
        println!("misclassified: {} of {}", err.misclassified, err.total);
        println!("error rate: {:.6}", err.rate());
        if let Some(path) = &a.probs {
            write_probs(path, &predictor, &data)?;
        }
        Ok(())
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn write_probs(path: &Path, predictor: &Predictor, data: &Dataset) -> Result<(), Error> {
    let probs = predictor.predict_bma(&data.x)?;
    let k = predictor.num_classes();
    let mut text = String::from("index,label,predicted");
    for c in 1..=k {
        text.push_str(&format!(",p{c}"));
    }
    text.push('\n');
    for i in 0..probs.rows() {
        let row = probs.row(i);
        let label = data.labels.as_ref().map(|l| l[i].to_string()).unwrap_or_default();
        text.push_str(&format!("{i},{label},{}", argmax(row) + 1));
        for p in row {
            text.push_str(&format!(",{p:.17e}"));
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_check(kind: CheckKind, seed: u64) -> ExitCode {
    let result: Result<CheckReport, Error> = match kind {
        CheckKind::Gradients => checks::gradient_suite(seed),
        CheckKind::Sampler => checks::sampler_suite(seed),
    };
    match result {
        Ok(report) => {
            print!("{}", report.table());
            if report.passed() {
                println!("all checks passed");
                ExitCode::SUCCESS
            } else {
                println!("some checks FAILED");
                ExitCode::from(EXIT_NUMERIC)
            }
        }
        Err(e) => fail(&e),
    }
}

fn cmd_synth(a: SynthArgs) -> ExitCode {
    let spec = datagen::SyntheticSpec {
        ambient_dim: a.ambient_dim,
        latent_dim: a.latent_dim,
        n: a.n,
        seed: a.seed,
    };
    let data = match a.classes {
        Some(k) => datagen::gen_synthetic_classes(&spec, k),
        None => datagen::gen_synthetic(&spec).map(|s| s.data),
    };
    match data.and_then(|d| datagen::write_csv(&d, &a.output)) {
        Ok(()) => {
            println!("wrote {} points to {}", a.n, a.output.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
