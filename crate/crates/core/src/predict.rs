//! Bayesian model averaging over discriminator samples.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::netcore::{self, Batch, Init, LossSpec, NetworkSpec, OutputHead, ParamVector};
use crate::par;
use crate::posterior::LabeledSet;
use crate::sghmc::{adam_step, AdamConfig, ChainState, NoiseStream, Phase, SghmcConfig};

/// Averages class predictions of `T` discriminator samples.
#[derive(Debug, Clone)]
pub struct Predictor {
    samples: Vec<ParamVector>,
    num_classes: usize,
    /// Index of the first class column in the logits (1 for a `K + 1`
    /// semi-supervised head, 0 for a plain `K`-way classifier).
    first_class: usize,
}

impl Predictor {
    /// Predictor over semi-supervised discriminators with `K + 1` outputs.
    pub fn new(samples: Vec<ParamVector>) -> Result<Self> {
        Self::build(samples, 1)
    }

    /// Predictor over plain `K`-way softmax classifiers.
    pub fn plain(samples: Vec<ParamVector>) -> Result<Self> {
        Self::build(samples, 0)
    }

    fn build(samples: Vec<ParamVector>, first_class: usize) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Config("predictor needs at least one sample".into()))?;
        let spec = first.spec().clone();
        if samples.iter().any(|s| s.spec() != &spec) {
            return Err(Error::Config("predictor samples have different network specs".into()));
        }
        if spec.head() != OutputHead::Softmax || spec.output_dim() < first_class + 2 {
            return Err(Error::Config(format!(
                "predictor needs a softmax head with at least {} outputs",
                first_class + 2
            )));
        }
        Ok(Self {
            num_classes: spec.output_dim() - first_class,
            samples,
            first_class,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Class distribution of one sample, renormalized over the real classes.
    pub fn predict_one(&self, sample: usize, x: &Batch) -> Result<Batch> {
        let logits = netcore::logits(&self.samples[sample], x)?;
        let k = self.num_classes;
        let mut out = Vec::with_capacity(x.rows() * k);
        for i in 0..x.rows() {
            let row = &logits.row(i)[self.first_class..];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|&s| (s - max).exp()).collect();
            let z: f64 = e.iter().sum();
            out.extend(e.iter().map(|v| v / z));
        }
        Batch::new(x.rows(), k, out)
    }

    /// `n x K` matrix of averaged class probabilities for classes `1..=K`.
    pub fn predict_bma(&self, x: &Batch) -> Result<Batch> {
        let per = par::try_map_range(self.samples.len(), |s| self.predict_one(s, x))?;
        let t = self.samples.len() as f64;
        let mut acc = vec![0.0; x.rows() * self.num_classes];
        for p in &per {
            for (a, v) in acc.iter_mut().zip(p.as_slice()) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= t;
        }
        Batch::new(x.rows(), self.num_classes, acc)
    }

    /// Classes `1..=K` by argmax, ties toward the smaller class.
    pub fn classify(&self, x: &Batch) -> Result<Vec<usize>> {
        let probs = self.predict_bma(x)?;
        Ok((0..probs.rows()).map(|i| argmax(probs.row(i)) + 1).collect())
    }

    pub fn test_error(&self, test: &LabeledSet) -> Result<TestError> {
        if let Some(&bad) = test.y.iter().find(|&&y| y == 0 || y > self.num_classes) {
            return Err(Error::Data(format!(
                "label {bad} outside 1..={}",
                self.num_classes
            )));
        }
        let predicted = self.classify(&test.x)?;
        let misclassified = predicted.iter().zip(&test.y).filter(|(p, y)| p != y).count();
        Ok(TestError {
            misclassified,
            total: test.len(),
        })
    }
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestError {
    pub misclassified: usize,
    pub total: usize,
}

impl TestError {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.misclassified as f64 / self.total as f64
        }
    }
}

/// Settings for the supervised-only baseline classifier.
#[derive(Debug, Clone)]
pub struct SupervisedConfig {
    pub hidden: Vec<usize>,
    pub iters: u64,
    pub adam: AdamConfig,
    /// Weight decay as a Gaussian prior standard deviation.
    pub prior_sigma: f64,
    pub seed: u64,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        Self {
            hidden: vec![500],
            iters: 2000,
            adam: AdamConfig::default(),
            prior_sigma: 10f64.sqrt(),
            seed: 0,
        }
    }
}

/// Full-batch Adam on the labeled set alone; returns a [`Predictor::plain`].
pub fn train_supervised(labeled: &LabeledSet, num_classes: usize, cfg: &SupervisedConfig) -> Result<Predictor> {
    let mut sizes = vec![labeled.x.cols()];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(num_classes);
    let spec = Arc::new(NetworkSpec::relu(&sizes, OutputHead::Softmax)?);
    let mut stream = NoiseStream::new(cfg.seed, 0);
    let mut params = netcore::init_params_with(spec, Init::He, stream.rng())?;
    let labels: Vec<usize> = labeled.y.iter().map(|&y| y - 1).collect();
    let sghmc = SghmcConfig {
        burn_in_iters: cfg.iters,
        adam: cfg.adam,
        seed: cfg.seed,
        ..SghmcConfig::default()
    };
    let mut state = ChainState::new(params.len(), &sghmc, 0);
    let s2 = cfg.prior_sigma * cfg.prior_sigma;
    for _ in 0..cfg.iters {
        let (_, mut g) = netcore::loss_grad(
            &params,
            &labeled.x,
            &LossSpec::LogSoftmaxClass {
                labels: &labels,
                weight: 1.0,
            },
        )?;
        for (gi, &t) in g.values_mut().iter_mut().zip(params.values()) {
            *gi -= t / s2;
        }
        debug_assert_eq!(state.phase, Phase::BurnIn);
        adam_step(params.values_mut(), &mut state, g.values(), &sghmc)?;
    }
    Predictor::plain(vec![params])
}
