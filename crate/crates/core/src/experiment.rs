//! Experiment runners: synthetic unsupervised and semi-supervised runs,
//! downsampled MNIST, repeats with summaries, and output files.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::bayesgan::{self, Model, SampleSet, TrainAbort, TrainConfig, TrainData};
use crate::config::{Experiment, ExperimentConfig};
use crate::datagen::{self, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::{self, Projection2D};
use crate::netcore::{Batch, NetworkSpec, OutputHead, ParamVector};
use crate::posterior::{LabeledSet, Mode, PosteriorConfig, PriorSpec};
use crate::predict::{self, Predictor, SupervisedConfig};
use crate::report::{self, MetricRecord, Series};
use crate::sghmc::{AdamConfig, NoiseStream, SghmcConfig};

/// Stream id for generated evaluation samples.
const STREAM_EVAL: u64 = 8 << 32;

/// Data for a synthetic unsupervised run, plus the fixed evaluation space.
#[derive(Debug, Clone)]
pub struct SynthUnsupData {
    pub train: Batch,
    pub test: Batch,
    pub projection: Projection2D,
    pub test_2d: Batch,
}

/// `n` training and `n_test` held-out points from one draw of the linear
/// process; PCA is fit on the held-out points.
pub fn synth_unsup_data(cfg: &ExperimentConfig) -> Result<SynthUnsupData> {
    let d = &cfg.data;
    let all = datagen::gen_synthetic(&SyntheticSpec {
        ambient_dim: d.ambient_dim,
        latent_dim: d.latent_dim,
        n: d.n + d.n_test,
        seed: cfg.seed,
    })?;
    let train_idx: Vec<usize> = (0..d.n).collect();
    let test_idx: Vec<usize> = (d.n..d.n + d.n_test).collect();
    let train = all.data.x.select_rows(&train_idx);
    let test = all.data.x.select_rows(&test_idx);
    let projection = eval::pca_fit(&test)?;
    let test_2d = eval::pca_apply(&projection, &test)?;
    Ok(SynthUnsupData {
        train,
        test,
        projection,
        test_2d,
    })
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Sampler and network settings for one run.
pub fn train_config(cfg: &ExperimentConfig, n_data: usize, data_dim: usize, mode: Mode) -> Result<TrainConfig> {
    let k = cfg.data.num_classes;
    let gen_spec = NetworkSpec::relu(&sizes(cfg.net.z_dim, &cfg.net.gen_hidden, data_dim), OutputHead::Linear)?;
    let disc_spec = match mode {
        Mode::Unsupervised => NetworkSpec::relu(&sizes(data_dim, &cfg.net.disc_hidden, 1), OutputHead::Sigmoid)?,
        Mode::SemiSupervised => NetworkSpec::relu(&sizes(data_dim, &cfg.net.disc_hidden, k + 1), OutputHead::Softmax)?,
    };
    let sigma = cfg.prior_sigma2.sqrt();
    let base = TrainConfig {
        posterior: PosteriorConfig {
            mode,
            num_classes: if mode == Mode::SemiSupervised { k } else { 1 },
            n_gen: cfg.n_gen,
            n_disc: cfg.n_disc,
            n_data,
            n_labeled: if mode == Mode::SemiSupervised { cfg.data.n_labeled } else { 0 },
            j_gen: cfg.j_gen,
            j_disc: cfg.j_disc,
        },
        prior: PriorSpec::isotropic(sigma)?,
        sghmc: SghmcConfig {
            alpha: cfg.alpha,
            gamma: cfg.gamma,
            burn_in_iters: cfg.burn_in,
            adam: AdamConfig {
                lr: cfg.adam_lr,
                beta1: cfg.adam_beta1,
                beta2: cfg.adam_beta2,
                eps: cfg.adam_eps,
            },
            noise_enabled: cfg.noise,
            seed: cfg.seed,
        },
        num_mcmc: cfg.num_mcmc,
        total_iters: cfg.total_iters(),
        collect_every: cfg.collect_every,
        model: Model::Bayes,
        gen_spec: Arc::new(gen_spec),
        disc_spec: Arc::new(disc_spec),
        init: cfg.init(),
    };
    match cfg.model {
        Model::Bayes => {
            base.validate()?;
            Ok(base)
        }
        Model::Map => base.map_baseline(cfg.map_flat_sigma2.sqrt()),
    }
}

/// JSD between pooled generator output and the held-out data, both in the
/// held-out PCA plane.
pub fn generator_jsd(
    gens: &[&ParamVector],
    count: usize,
    stream: &mut NoiseStream,
    projection: &Projection2D,
    test_2d: &Batch,
) -> Result<f64> {
    let fake = bayesgan::sample_generators(gens, count, stream)?;
    let fake_2d = eval::pca_apply(projection, &fake)?;
    eval::jsd(test_2d, &fake_2d)
}

/// Everything a finished run produced.
#[derive(Debug)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub samples: SampleSet,
    pub records: Vec<MetricRecord>,
    /// Test error of the last collected discriminator sample alone.
    pub final_sample_error: Option<f64>,
    /// Test error of the supervised-only baseline (MNIST runs).
    pub supervised_error: Option<f64>,
    /// Held-out data and generated samples in the PCA plane, for plots.
    pub pca_points: Option<(Batch, Batch)>,
}

impl RunOutput {
    /// Final JSD or test error, whichever the experiment records.
    pub fn final_metric(&self) -> Option<f64> {
        let last = self.records.last()?;
        last.jsd_nats.or(last.test_error)
    }
}

/// A run that failed part-way, with the iteration it failed in.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub iteration: Option<u64>,
    pub records: Vec<MetricRecord>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.iteration {
            Some(i) => write!(f, "failed at iteration {i}: {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            iteration: None,
            records: Vec::new(),
        }
    }
}

impl From<Box<TrainAbort>> for RunFailure {
    fn from(a: Box<TrainAbort>) -> Self {
        Self {
            error: a.error,
            iteration: Some(a.iteration),
            records: a.records,
        }
    }
}

fn clock(start: Instant, on: bool) -> Option<f64> {
    on.then(|| start.elapsed().as_secs_f64())
}

pub fn run_synth_unsup(cfg: &ExperimentConfig) -> std::result::Result<RunOutput, RunFailure> {
    let data = synth_unsup_data(cfg)?;
    let tc = train_config(cfg, data.train.rows(), data.train.cols(), Mode::Unsupervised)?;
    let start = Instant::now();
    let mut stream = NoiseStream::new(cfg.seed, STREAM_EVAL);
    let mut probe = |s: &SampleSet| -> Result<MetricRecord> {
        let jsd = generator_jsd(&s.gen_params(), cfg.jsd_samples, &mut stream, &data.projection, &data.test_2d)?;
        Ok(MetricRecord {
            iteration: s.iteration,
            jsd_nats: Some(jsd),
            test_error: None,
            n_gen_samples: cfg.jsd_samples,
            wallclock_s: clock(start, cfg.wallclock),
        })
    };
    let train = TrainData {
        unlabeled: data.train.clone(),
        labeled: None,
    };
    let (samples, records) = bayesgan::train(&tc, &train, Some(&mut probe))?;
    let mut s = NoiseStream::new(cfg.seed, STREAM_EVAL + 1);
    let fake = bayesgan::sample_generators(&samples.gen_params(), cfg.jsd_samples, &mut s)?;
    let fake_2d = eval::pca_apply(&data.projection, &fake)?;
    Ok(RunOutput {
        config: cfg.clone(),
        samples,
        records,
        final_sample_error: None,
        supervised_error: None,
        pca_points: Some((data.test_2d, fake_2d)),
    })
}

/// Labeled subset, unlabeled pool and test set for a semi-supervised run.
#[derive(Debug, Clone)]
pub struct SemiData {
    pub labeled: LabeledSet,
    pub unlabeled: Batch,
    pub test: LabeledSet,
}

pub fn synth_semi_data(cfg: &ExperimentConfig) -> Result<SemiData> {
    let d = &cfg.data;
    let all = datagen::gen_synthetic_classes(
        &SyntheticSpec {
            ambient_dim: d.ambient_dim,
            latent_dim: d.latent_dim,
            n: d.n + d.n_test,
            seed: cfg.seed,
        },
        d.num_classes,
    )?;
    let train = all.subset(&(0..d.n).collect::<Vec<_>>());
    let test = all.subset(&(d.n..d.n + d.n_test).collect::<Vec<_>>());
    semi_split(cfg, &train, &test)
}

fn semi_split(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<SemiData> {
    let split = datagen::make_split(train, cfg.data.n_labeled, cfg.seed ^ cfg.data.split_seed.rotate_left(17))?;
    Ok(SemiData {
        labeled: split.labeled,
        unlabeled: split.unlabeled,
        test: test.to_labeled()?,
    })
}

pub fn mnist_data(cfg: &ExperimentConfig) -> Result<SemiData> {
    let d = &cfg.data;
    let load = |images: &Path, labels: &Path, cap: usize| -> Result<Dataset> {
        let mut ds = datagen::load_idx(images, labels)?;
        if cap > 0 && cap < ds.len() {
            ds = ds.subset(&(0..cap).collect::<Vec<_>>());
        }
        if d.downsample > 1 {
            ds = datagen::downsample(&ds, d.downsample)?;
        }
        Ok(ds)
    };
    let train = load(&d.train_images, &d.train_labels, d.max_train)?;
    let test = load(&d.test_images, &d.test_labels, d.max_test)?;
    semi_split(cfg, &train, &test)
}

/// Bayesian model average over every collected discriminator sample.
pub fn bma_error(samples: &SampleSet, test: &LabeledSet) -> Result<f64> {
    let discs: Vec<ParamVector> = samples.collected_disc.iter().map(|c| c.params.clone()).collect();
    Ok(Predictor::new(discs)?.test_error(test)?.rate())
}

/// Test error of the most recently collected discriminator sample alone.
pub fn final_sample_error(samples: &SampleSet, test: &LabeledSet) -> Result<f64> {
    let last = samples
        .collected_disc
        .last()
        .ok_or_else(|| Error::Config("no discriminator samples were collected".into()))?;
    Ok(Predictor::new(vec![last.params.clone()])?.test_error(test)?.rate())
}

pub fn run_semi(cfg: &ExperimentConfig, data: &SemiData) -> std::result::Result<RunOutput, RunFailure> {
    let tc = train_config(cfg, data.unlabeled.rows(), data.unlabeled.cols(), Mode::SemiSupervised)?;
    let start = Instant::now();
    let mut probe = |s: &SampleSet| -> Result<MetricRecord> {
        Ok(MetricRecord {
            iteration: s.iteration,
            jsd_nats: None,
            test_error: Some(bma_error(s, &data.test)?),
            n_gen_samples: 0,
            wallclock_s: clock(start, cfg.wallclock),
        })
    };
    let train = TrainData {
        unlabeled: data.unlabeled.clone(),
        labeled: Some(data.labeled.clone()),
    };
    let (samples, records) = bayesgan::train(&tc, &train, Some(&mut probe))?;
    let final_sample_error = if samples.collected_disc.is_empty() {
        None
    } else {
        Some(final_sample_error(&samples, &data.test)?)
    };
    let supervised_error = if cfg.experiment == Experiment::MnistSemi {
        let sup = predict::train_supervised(
            &data.labeled,
            cfg.data.num_classes,
            &SupervisedConfig {
                hidden: cfg.supervised_hidden.clone(),
                iters: cfg.supervised_iters,
                adam: tc.sghmc.adam,
                prior_sigma: cfg.prior_sigma2.sqrt(),
                seed: cfg.seed.wrapping_add(1),
            },
        )?;
        Some(sup.test_error(&data.test)?.rate())
    } else {
        None
    };
    Ok(RunOutput {
        config: cfg.clone(),
        samples,
        records,
        final_sample_error,
        supervised_error,
        pca_points: None,
    })
}

/// Runs one training experiment with the configured seed.
pub fn run_once(cfg: &ExperimentConfig) -> std::result::Result<RunOutput, RunFailure> {
    match cfg.experiment {
        Experiment::SynthUnsup => run_synth_unsup(cfg),
        Experiment::SynthSemi => run_semi(cfg, &synth_semi_data(cfg)?),
        Experiment::MnistSemi => run_semi(cfg, &mnist_data(cfg)?),
        Experiment::SamplerCheck | Experiment::GradientCheck => Err(Error::Config(format!(
            "{} is a check, not a training experiment",
            cfg.experiment.name()
        ))
        .into()),
    }
}

/// Mean and twice the sample standard deviation.
pub fn mean_two_stdev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 2.0 * var.sqrt())
}

/// Per-repeat seed: `seed + 1000 * repeat`.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    seed.wrapping_add(1000 * repeat as u64)
}

/// Writes metrics, the resolved config, a checkpoint and plots into `dir`.
pub fn write_outputs(dir: &Path, run: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report::write_metrics(&dir.join("metrics.csv"), &run.records)?;
    report::write_text(&dir.join("config.txt"), &run.config.to_text())?;
    let cfg = &run.config;
    if cfg.checkpoint {
        bayesgan::save_checkpoint(&run.samples, &dir.join("checkpoint.bgan"))?;
    }
    let mut summary = String::new();
    if let Some(e) = run.final_sample_error {
        summary.push_str(&format!("final_sample_error,{e:.17e}\n"));
    }
    if let Some(e) = run.supervised_error {
        summary.push_str(&format!("supervised_error,{e:.17e}\n"));
    }
    if let Some(m) = run.final_metric() {
        summary.push_str(&format!("final_metric,{m:.17e}\n"));
    }
    report::write_text(&dir.join("final.csv"), &summary)?;
    if !cfg.plots {
        return Ok(());
    }
    let curve: Vec<(f64, f64)> = run
        .records
        .iter()
        .filter_map(|r| r.jsd_nats.or(r.test_error).map(|v| (r.iteration as f64, v)))
        .collect();
    let (what, y) = if run.records.iter().any(|r| r.jsd_nats.is_some()) {
        ("JSD", "JSD (nats)")
    } else {
        ("test error", "error rate")
    };
    report::write_text(
        &dir.join("curve.svg"),
        &report::line_svg(
            &format!("{what} at collection points ({})", cfg.model.name()),
            "iteration",
            y,
            &[Series {
                name: cfg.model.name(),
                points: curve,
            }],
        ),
    )?;
    if let Some((truth, fake)) = &run.pca_points {
        let pts = |b: &Batch| (0..b.rows()).map(|i| (b.row(i)[0], b.row(i)[1])).collect();
        report::write_text(
            &dir.join("pca.svg"),
            &report::scatter_svg(
                "held-out data and generated samples (PCA plane)",
                "PC 1",
                "PC 2",
                &[
                    Series {
                        name: "data",
                        points: pts(truth),
                    },
                    Series {
                        name: "generated",
                        points: pts(fake),
                    },
                ],
            ),
        )?;
    }
    let gens: Vec<&ParamVector> = run.samples.collected_gen.iter().map(|c| &c.params).collect();
    if gens.len() >= 3 {
        let mds = eval::mds_embed(&gens)?;
        let fit = eval::cluster_count(&mds.coords, cfg.seed);
        let mut groups: Vec<Series> = Vec::new();
        let names: Vec<String> = (0..fit.k_best).map(|c| format!("cluster {}", c + 1)).collect();
        for (c, name) in names.iter().enumerate() {
            groups.push(Series {
                name,
                points: mds
                    .coords
                    .iter()
                    .zip(&fit.labels)
                    .filter(|(_, l)| **l == c)
                    .map(|(p, _)| (p[0], p[1]))
                    .collect(),
            });
        }
        report::write_text(
            &dir.join("mds.svg"),
            &report::scatter_svg("generator weight samples (classical MDS)", "MDS 1", "MDS 2", &groups),
        )?;
    }
    Ok(())
}

/// Outcome of [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunOutput>,
    /// `(mean, 2 * stdev)` of the final metric across repeats.
    pub summary: Option<(f64, f64)>,
}

/// Runs `cfg.repeats` repeats, each in its own subdirectory when there is
/// more than one, then writes `summary.csv`.
pub fn run_experiment(cfg: &ExperimentConfig) -> std::result::Result<ExperimentOutcome, RunFailure> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let mut c = cfg.clone();
        c.seed = repeat_seed(cfg.seed, r);
        c.repeats = 1;
        c.output = if cfg.repeats > 1 {
            cfg.output.join(format!("repeat-{r}"))
        } else {
            cfg.output.clone()
        };
        let run = match run_once(&c) {
            Ok(run) => run,
            Err(f) => {
                // keep what was measured before the failure
                let _ = std::fs::create_dir_all(&c.output);
                let _ = report::write_metrics(&c.output.join("metrics.csv"), &f.records);
                return Err(f);
            }
        };
        write_outputs(&c.output, &run)?;
        runs.push(run);
    }
    let finals: Vec<f64> = runs.iter().filter_map(RunOutput::final_metric).collect();
    let summary = (finals.len() == runs.len() && !finals.is_empty()).then(|| mean_two_stdev(&finals));
    if cfg.repeats > 1 {
        let mut text = String::from("repeat,seed,final_metric\n");
        for (r, run) in runs.iter().enumerate() {
            text.push_str(&format!(
                "{r},{},{}\n",
                run.config.seed,
                run.final_metric().map(|m| format!("{m:.17e}")).unwrap_or_default()
            ));
        }
        if let Some((m, s)) = summary {
            text.push_str(&format!("mean,,{m:.17e}\ntwo_stdev,,{s:.17e}\n"));
        }
        std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
        report::write_text(&cfg.output.join("summary.csv"), &text)?;
    }
    Ok(ExperimentOutcome { runs, summary })
}

/// Output directory for a repeat, as laid out by [`run_experiment`].
pub fn repeat_dir(cfg: &ExperimentConfig, repeat: usize) -> PathBuf {
    if cfg.repeats > 1 {
        cfg.output.join(format!("repeat-{repeat}"))
    } else {
        cfg.output.clone()
    }
}
