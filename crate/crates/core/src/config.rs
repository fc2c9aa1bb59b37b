//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment; keys are dotted
//! (`sghmc.alpha = 0.1`). Unset keys take the defaults listed by
//! [`ExperimentConfig::to_text`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bayesgan::Model;
use crate::error::{Error, Result};
use crate::netcore::Init;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    SynthUnsup,
    SynthSemi,
    MnistSemi,
    SamplerCheck,
    GradientCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::SynthUnsup => "synth_unsup",
            Experiment::SynthSemi => "synth_semi",
            Experiment::MnistSemi => "mnist_semi",
            Experiment::SamplerCheck => "sampler_check",
            Experiment::GradientCheck => "gradient_check",
        }
    }

    fn real_data(self) -> bool {
        self == Experiment::MnistSemi
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "synth_unsup" => Experiment::SynthUnsup,
            "synth_semi" => Experiment::SynthSemi,
            "mnist_semi" => Experiment::MnistSemi,
            "sampler_check" => Experiment::SamplerCheck,
            "gradient_check" => Experiment::GradientCheck,
            other => return Err(Error::Config(format!("unknown experiment '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub n: usize,
    pub n_test: usize,
    pub ambient_dim: usize,
    pub latent_dim: usize,
    pub num_classes: usize,
    pub n_labeled: usize,
    /// Seed for the labeled subset, offset from the run seed.
    pub split_seed: u64,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub downsample: usize,
    /// Caps on the MNIST pools; 0 keeps everything.
    pub max_train: usize,
    pub max_test: usize,
}

/// How chains start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    He,
    /// A draw from the configured prior.
    Prior,
    Normal(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub z_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub init: InitKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: Model,
    pub seed: u64,
    pub output: PathBuf,
    pub repeats: usize,
    pub data: DataConfig,
    pub net: NetConfig,
    pub n_gen: usize,
    pub n_disc: usize,
    pub j_gen: usize,
    pub j_disc: usize,
    pub num_mcmc: usize,
    pub prior_sigma2: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub burn_in: u64,
    pub adam_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub noise: bool,
    /// Iterations after burn-in.
    pub sample_iters: u64,
    pub collect_every: u64,
    /// Prior variance standing in for a flat prior in map mode.
    pub map_flat_sigma2: f64,
    pub jsd_samples: usize,
    pub wallclock: bool,
    pub checkpoint: bool,
    pub plots: bool,
    pub supervised_iters: u64,
    pub supervised_hidden: Vec<usize>,
}

impl ExperimentConfig {
    /// Defaults for one experiment kind.
    pub fn defaults(experiment: Experiment) -> Self {
        let real = experiment.real_data();
        Self {
            experiment,
            model: Model::Bayes,
            seed: 0,
            output: PathBuf::from("out"),
            repeats: 1,
            data: DataConfig {
                n: 10_000,
                n_test: 10_000,
                ambient_dim: 100,
                latent_dim: 2,
                num_classes: if real { 10 } else { 4 },
                n_labeled: if real { 100 } else { 16 },
                split_seed: 0,
                train_images: PathBuf::from("data/train-images-idx3-ubyte"),
                train_labels: PathBuf::from("data/train-labels-idx1-ubyte"),
                test_images: PathBuf::from("data/t10k-images-idx3-ubyte"),
                test_labels: PathBuf::from("data/t10k-labels-idx1-ubyte"),
                downsample: 2,
                max_train: 0,
                max_test: 0,
            },
            net: NetConfig {
                z_dim: 10,
                gen_hidden: vec![1000],
                disc_hidden: vec![1000],
                init: InitKind::He,
            },
            n_gen: 64,
            n_disc: 64,
            j_gen: 10,
            j_disc: 1,
            num_mcmc: 2,
            prior_sigma2: if real { 10.0 } else { 1.0 },
            alpha: 0.1,
            gamma: 1e-3,
            burn_in: if real { 5000 } else { 1000 },
            adam_lr: 1e-3,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            noise: true,
            sample_iters: 5000,
            collect_every: 1000,
            map_flat_sigma2: 1e16,
            jsd_samples: 10_000,
            wallclock: false,
            checkpoint: true,
            plots: true,
            supervised_iters: 2000,
            supervised_hidden: vec![500],
        }
    }

    pub fn total_iters(&self) -> u64 {
        self.burn_in + self.sample_iters
    }

    /// Chain initialization with the prior resolved.
    pub fn init(&self) -> Init {
        match self.net.init {
            InitKind::He => Init::He,
            InitKind::Prior => Init::Prior {
                sigma: self.prior_sigma2.sqrt(),
            },
            InitKind::Normal(sigma) => Init::Prior { sigma },
        }
    }

    /// Parses config text. The `experiment` key, when present, picks the
    /// defaults that the remaining keys override.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            pairs.push((no + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let experiment = pairs
            .iter()
            .rev()
            .find(|(_, k, _)| k == "experiment")
            .map(|(_, _, v)| v.parse())
            .transpose()?
            .unwrap_or(Experiment::SynthUnsup);
        let mut cfg = Self::defaults(experiment);
        for (no, k, v) in &pairs {
            cfg.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {no}: {m}")),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<usize>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|p| num(key, p.trim())).collect()
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "on" | "1" | "yes" => Ok(true),
                "false" | "off" | "0" | "no" => Ok(false),
                _ => Err(Error::Config(format!("{key}: expected true/false, got '{v}'"))),
            }
        }
        let d = &mut self.data;
        match key {
            "experiment" => self.experiment = value.parse()?,
            "model" => self.model = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "output" => self.output = PathBuf::from(value),
            "repeats" => self.repeats = num(key, value)?,
            "data.n" => d.n = num(key, value)?,
            "data.n_test" => d.n_test = num(key, value)?,
            "data.ambient_dim" => d.ambient_dim = num(key, value)?,
            "data.latent_dim" => d.latent_dim = num(key, value)?,
            "data.num_classes" => d.num_classes = num(key, value)?,
            "data.n_labeled" => d.n_labeled = num(key, value)?,
            "data.split_seed" => d.split_seed = num(key, value)?,
            "data.train_images" => d.train_images = PathBuf::from(value),
            "data.train_labels" => d.train_labels = PathBuf::from(value),
            "data.test_images" => d.test_images = PathBuf::from(value),
            "data.test_labels" => d.test_labels = PathBuf::from(value),
            "data.downsample" => d.downsample = num(key, value)?,
            "data.max_train" => d.max_train = num(key, value)?,
            "data.max_test" => d.max_test = num(key, value)?,
            "net.z_dim" => self.net.z_dim = num(key, value)?,
            "net.gen_hidden" => self.net.gen_hidden = list(key, value)?,
            "net.disc_hidden" => self.net.disc_hidden = list(key, value)?,
            "net.init" => {
                self.net.init = match value {
                    "he" => InitKind::He,
                    "prior" => InitKind::Prior,
                    other => match other.strip_prefix("normal:") {
                        Some(s) => InitKind::Normal(num(key, s)?),
                        None => return Err(Error::Config(format!("{key}: expected he, prior or normal:SIGMA"))),
                    },
                }
            }
            "posterior.n_gen" => self.n_gen = num(key, value)?,
            "posterior.n_disc" => self.n_disc = num(key, value)?,
            "posterior.j_gen" => self.j_gen = num(key, value)?,
            "posterior.j_disc" => self.j_disc = num(key, value)?,
            "posterior.num_mcmc" => self.num_mcmc = num(key, value)?,
            "prior.sigma2" => self.prior_sigma2 = num(key, value)?,
            "sghmc.alpha" => self.alpha = num(key, value)?,
            "sghmc.gamma" => self.gamma = num(key, value)?,
            "sghmc.burn_in" => self.burn_in = num(key, value)?,
            "sghmc.adam_lr" => self.adam_lr = num(key, value)?,
            "sghmc.adam_beta1" => self.adam_beta1 = num(key, value)?,
            "sghmc.adam_beta2" => self.adam_beta2 = num(key, value)?,
            "sghmc.adam_eps" => self.adam_eps = num(key, value)?,
            "sghmc.noise" => self.noise = flag(key, value)?,
            "train.sample_iters" => self.sample_iters = num(key, value)?,
            "train.collect_every" => self.collect_every = num(key, value)?,
            "map.flat_sigma2" => self.map_flat_sigma2 = num(key, value)?,
            "eval.jsd_samples" => self.jsd_samples = num(key, value)?,
            "eval.wallclock" => self.wallclock = flag(key, value)?,
            "output.checkpoint" => self.checkpoint = flag(key, value)?,
            "output.plots" => self.plots = flag(key, value)?,
            "supervised.iters" => self.supervised_iters = num(key, value)?,
            "supervised.hidden" => self.supervised_hidden = list(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a form [`parse`](Self::parse)
    /// reads back.
    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let init = match self.net.init {
            InitKind::He => "he".to_string(),
            InitKind::Prior => "prior".to_string(),
            InitKind::Normal(sigma) => format!("normal:{sigma}"),
        };
        let d = &self.data;
        let rows: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.name().into()),
            ("model", self.model.name().into()),
            ("seed", self.seed.to_string()),
            ("output", self.output.display().to_string()),
            ("repeats", self.repeats.to_string()),
            ("data.n", d.n.to_string()),
            ("data.n_test", d.n_test.to_string()),
            ("data.ambient_dim", d.ambient_dim.to_string()),
            ("data.latent_dim", d.latent_dim.to_string()),
            ("data.num_classes", d.num_classes.to_string()),
            ("data.n_labeled", d.n_labeled.to_string()),
            ("data.split_seed", d.split_seed.to_string()),
            ("data.train_images", d.train_images.display().to_string()),
            ("data.train_labels", d.train_labels.display().to_string()),
            ("data.test_images", d.test_images.display().to_string()),
            ("data.test_labels", d.test_labels.display().to_string()),
            ("data.downsample", d.downsample.to_string()),
            ("data.max_train", d.max_train.to_string()),
            ("data.max_test", d.max_test.to_string()),
            ("net.z_dim", self.net.z_dim.to_string()),
            ("net.gen_hidden", list(&self.net.gen_hidden)),
            ("net.disc_hidden", list(&self.net.disc_hidden)),
            ("net.init", init),
            ("posterior.n_gen", self.n_gen.to_string()),
            ("posterior.n_disc", self.n_disc.to_string()),
            ("posterior.j_gen", self.j_gen.to_string()),
            ("posterior.j_disc", self.j_disc.to_string()),
            ("posterior.num_mcmc", self.num_mcmc.to_string()),
            ("prior.sigma2", self.prior_sigma2.to_string()),
            ("sghmc.alpha", self.alpha.to_string()),
            ("sghmc.gamma", self.gamma.to_string()),
            ("sghmc.burn_in", self.burn_in.to_string()),
            ("sghmc.adam_lr", self.adam_lr.to_string()),
            ("sghmc.adam_beta1", self.adam_beta1.to_string()),
            ("sghmc.adam_beta2", self.adam_beta2.to_string()),
            ("sghmc.adam_eps", self.adam_eps.to_string()),
            ("sghmc.noise", self.noise.to_string()),
            ("train.sample_iters", self.sample_iters.to_string()),
            ("train.collect_every", self.collect_every.to_string()),
            ("map.flat_sigma2", self.map_flat_sigma2.to_string()),
            ("eval.jsd_samples", self.jsd_samples.to_string()),
            ("eval.wallclock", self.wallclock.to_string()),
            ("output.checkpoint", self.checkpoint.to_string()),
            ("output.plots", self.plots.to_string()),
            ("supervised.iters", self.supervised_iters.to_string()),
            ("supervised.hidden", list(&self.supervised_hidden)),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Checks ranges and, for real-data runs, that the input files exist.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.n_gen == 0 || self.n_disc == 0 || self.j_gen == 0 || self.j_disc == 0 || self.num_mcmc == 0 {
            return bad("batch sizes and chain counts must be positive".into());
        }
        if !(self.prior_sigma2 > 0.0) || !(self.map_flat_sigma2 > 0.0) {
            return bad("prior variances must be positive".into());
        }
        if self.collect_every == 0 {
            return bad("train.collect_every must be at least 1".into());
        }
        if self.net.z_dim == 0 {
            return bad("net.z_dim must be positive".into());
        }
        if self.jsd_samples < 10 {
            return bad("eval.jsd_samples must be at least 10".into());
        }
        if self.experiment.real_data() {
            for p in [
                &self.data.train_images,
                &self.data.train_labels,
                &self.data.test_images,
                &self.data.test_labels,
            ] {
                if !p.exists() {
                    return bad(format!("data file {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }
}
