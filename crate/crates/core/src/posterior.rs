//! Log conditional posteriors of the generator and discriminator weights.
//!
//! Unsupervised conditionals use a single-logit sigmoid discriminator:
//!
//! ```text
//! log p(g | z, d)    = (N/n_g) sum_i ln D(G(z_i))                          + ln p(g)
//! log p(d | z, X, g) = (N/n_d) sum_i ln D(x_i) + (N/n_g) sum_i ln(1 - D(G(z_i))) + ln p(d)
//! ```
//!
//! Semi-supervised conditionals use a `K + 1` softmax head whose class 0 marks
//! generated samples:
//!
//! ```text
//! log p(g | z, d)         = (N/n_g) sum_i ln(1 - D0(G(z_i)))                         + ln p(g)
//! log p(d | z, X, D_s, g) = (N/n_d) sum_i ln(1 - D0(x_i)) + (N/n_g) sum_i ln D0(G(z_i))
//!                           + sum_{(x, y) in D_s} ln Dy(x)                           + ln p(d)
//! ```
//!
//! The labeled term is evaluated on the whole labeled set and is not rescaled.
//! Additive constants that do not depend on the sampled weights are dropped.
//!
//! The marginal gradients sum the per-noise-set, per-opposing-sample
//! conditional gradients (prior included in every term).

use crate::error::{Error, Result};
use crate::netcore::{self, Batch, LossSpec, OutputHead, ParamVector};
use crate::par;

/// Standard deviations of the isotropic Gaussian weight priors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub sigma_g: f64,
    pub sigma_d: f64,
}

impl PriorSpec {
    pub fn new(sigma_g: f64, sigma_d: f64) -> Result<Self> {
        let p = Self { sigma_g, sigma_d };
        p.validate()?;
        Ok(p)
    }

    pub fn isotropic(sigma: f64) -> Result<Self> {
        Self::new(sigma, sigma)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("sigma_g", self.sigma_g), ("sigma_d", self.sigma_d)] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Unsupervised,
    SemiSupervised,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Unsupervised => "unsupervised",
            Mode::SemiSupervised => "semi_supervised",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorConfig {
    pub mode: Mode,
    /// Number of real classes `K`; the discriminator has `K + 1` outputs.
    pub num_classes: usize,
    pub n_gen: usize,
    pub n_disc: usize,
    /// Total number of real datapoints `N`.
    pub n_data: usize,
    pub n_labeled: usize,
    /// Simple Monte Carlo noise sets per generator update.
    pub j_gen: usize,
    /// Simple Monte Carlo noise sets per discriminator update.
    pub j_disc: usize,
}

impl PosteriorConfig {
    pub fn unsupervised(n_data: usize, batch: usize, j_gen: usize, j_disc: usize) -> Self {
        Self {
            mode: Mode::Unsupervised,
            num_classes: 1,
            n_gen: batch,
            n_disc: batch,
            n_data,
            n_labeled: 0,
            j_gen,
            j_disc,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::SemiSupervised && self.num_classes < 2 {
            return Err(Error::Config(format!(
                "semi-supervised mode needs K >= 2 classes, got {}",
                self.num_classes
            )));
        }
        for (name, v) in [
            ("n_gen", self.n_gen),
            ("n_disc", self.n_disc),
            ("j_gen", self.j_gen),
            ("j_disc", self.j_disc),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.n_data < self.n_disc {
            return Err(Error::Config(format!(
                "dataset size N={} is smaller than the discriminator batch n_d={}",
                self.n_data, self.n_disc
            )));
        }
        Ok(())
    }

    /// Likelihood scale `N / n_g` for generated-sample terms.
    pub fn gen_scale(&self) -> f64 {
        self.n_data as f64 / self.n_gen as f64
    }

    /// Likelihood scale `N / n_d` for real minibatch terms.
    pub fn disc_scale(&self) -> f64 {
        self.n_data as f64 / self.n_disc as f64
    }
}

/// Labeled examples; labels are in `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: Batch,
    pub y: Vec<usize>,
}

impl LabeledSet {
    pub fn new(x: Batch, y: Vec<usize>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Shape(format!(
                "{} labeled rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// `-||theta||^2 / (2 sigma^2) - (P/2) ln(2 pi sigma^2)`.
pub fn log_prior(params: &ParamVector, sigma: f64) -> f64 {
    let p = params.len() as f64;
    let s2 = sigma * sigma;
    -params.norm_sq() / (2.0 * s2) - 0.5 * p * (2.0 * std::f64::consts::PI * s2).ln()
}

/// Adds `count * (-theta / sigma^2)` into `grad`.
fn add_prior_grad(params: &ParamVector, sigma: f64, count: f64, grad: &mut [f64]) {
    let s2 = sigma * sigma;
    for (g, &t) in grad.iter_mut().zip(params.values()) {
        *g -= count * (t / s2);
    }
}

/// Gradient of [`log_prior`]: `-theta / sigma^2`.
pub fn log_prior_grad(params: &ParamVector, sigma: f64) -> ParamVector {
    let mut g = ParamVector::zeros(params.spec().clone());
    add_prior_grad(params, sigma, 1.0, g.values_mut());
    g
}

fn check_disc_head(disc: &ParamVector, cfg: &PosteriorConfig) -> Result<()> {
    let spec = disc.spec();
    match cfg.mode {
        Mode::Unsupervised => {
            if spec.head() != OutputHead::Sigmoid {
                return Err(Error::Config(
                    "unsupervised discriminator needs a single-logit sigmoid head".into(),
                ));
            }
        }
        Mode::SemiSupervised => {
            if spec.head() != OutputHead::Softmax || spec.output_dim() != cfg.num_classes + 1 {
                return Err(Error::Config(format!(
                    "semi-supervised discriminator needs a softmax head with K+1={} outputs, has {} ({})",
                    cfg.num_classes + 1,
                    spec.output_dim(),
                    spec.head().name()
                )));
            }
        }
    }
    Ok(())
}

fn check_pair(gen: &ParamVector, disc: &ParamVector) -> Result<()> {
    if gen.spec().output_dim() != disc.spec().input_dim() {
        return Err(Error::Shape(format!(
            "generator emits {} features, discriminator reads {}",
            gen.spec().output_dim(),
            disc.spec().input_dim()
        )));
    }
    Ok(())
}

fn check_rows(b: &Batch, rows: usize, what: &str) -> Result<()> {
    if b.rows() != rows {
        return Err(Error::Shape(format!(
            "{what} has {} rows, expected {rows}",
            b.rows()
        )));
    }
    Ok(())
}

fn check_labels(labeled: &LabeledSet, k: usize) -> Result<()> {
    if let Some(&bad) = labeled.y.iter().find(|&&y| y == 0 || y > k) {
        return Err(Error::Data(format!("label {bad} outside 1..={k}")));
    }
    Ok(())
}

/// Loss the generator maximizes on the discriminator's logits of fake samples.
fn gen_loss(cfg: &PosteriorConfig) -> LossSpec<'static> {
    let weight = cfg.gen_scale();
    match cfg.mode {
        Mode::Unsupervised => LossSpec::LogSigmoid { weight },
        Mode::SemiSupervised => LossSpec::LogSoftmaxReal { weight },
    }
}

/// Discriminator loss on fake samples.
fn fake_loss(cfg: &PosteriorConfig) -> LossSpec<'static> {
    let weight = cfg.gen_scale();
    match cfg.mode {
        Mode::Unsupervised => LossSpec::LogOneMinusSigmoid { weight },
        Mode::SemiSupervised => LossSpec::LogSoftmaxFake { weight },
    }
}

/// Discriminator loss on real (unlabeled) samples.
fn real_loss(cfg: &PosteriorConfig) -> LossSpec<'static> {
    let weight = cfg.disc_scale();
    match cfg.mode {
        Mode::Unsupervised => LossSpec::LogSigmoid { weight },
        Mode::SemiSupervised => LossSpec::LogSoftmaxReal { weight },
    }
}

fn shifted_labels(labeled: &LabeledSet) -> &[usize] {
    // labels are already 1..=K and index the softmax directly
    &labeled.y
}

fn log_cond_gen(
    gen: &ParamVector,
    z: &Batch,
    disc: &ParamVector,
    prior: &PriorSpec,
    cfg: &PosteriorConfig,
) -> Result<f64> {
    check_rows(z, cfg.n_gen, "noise batch")?;
    check_pair(gen, disc)?;
    check_disc_head(disc, cfg)?;
    let fake = netcore::forward_trace(gen, z)?.logits().clone();
    let logits = netcore::logits(disc, &fake)?;
    let (lik, _) = gen_loss(cfg).value_and_grad(&logits)?;
    Ok(lik + log_prior(gen, prior.sigma_g))
}

/// Unsupervised generator conditional for one noise batch.
pub fn log_cond_gen_unsup(
    gen: &ParamVector,
    z: &Batch,
    disc: &ParamVector,
    prior: &PriorSpec,
    cfg: &PosteriorConfig,
) -> Result<f64> {
    let cfg = PosteriorConfig {
        mode: Mode::Unsupervised,
        ..*cfg
    };
    log_cond_gen(gen, z, disc, prior, &cfg)
}

/// Semi-supervised generator conditional for one noise batch.
pub fn log_cond_gen_semi(
    gen: &ParamVector,
    z: &Batch,
    disc: &ParamVector,
    prior: &PriorSpec,
    cfg: &PosteriorConfig,
) -> Result<f64> {
    let cfg = PosteriorConfig {
        mode: Mode::SemiSupervised,
        ..*cfg
    };
    log_cond_gen(gen, z, disc, prior, &cfg)
}

fn log_cond_disc(
    disc: &ParamVector,
    z: &Batch,
    x: &Batch,
    labeled: Option<&LabeledSet>,
    gen: &ParamVector,
    prior: &PriorSpec,
    cfg: &PosteriorConfig,
) -> Result<f64> {
    check_rows(z, cfg.n_gen, "noise batch")?;
    check_rows(x, cfg.n_disc, "real minibatch")?;
    check_pair(gen, disc)?;
    check_disc_head(disc, cfg)?;
    let fake = netcore::logits(gen, z)?;
    let (real_v, _) = real_loss(cfg).value_and_grad(&netcore::logits(disc, x)?)?;
    let (fake_v, _) = fake_loss(cfg).value_and_grad(&netcore::logits(disc, &fake)?)?;
    let mut total = real_v + fake_v + log_prior(disc, prior.sigma_d);
    if cfg.mode == Mode::SemiSupervised {
        if let Some(ls) = labeled.filter(|l| !l.is_empty()) {
            check_labels(ls, cfg.num_classes)?;
            let loss = LossSpec::LogSoftmaxClass {
                labels: shifted_labels(ls),
                weight: 1.0,
            };
            total += loss.value_and_grad(&netcore::logits(disc, &ls.x)?)?.0;
        }
    }
    Ok(total)
}

/// Unsupervised discriminator conditional for one noise batch and real minibatch.
pub fn log_cond_disc_unsup(
    disc: &ParamVector,
    z: &Batch,
    x: &Batch,
    gen: &ParamVector,
    prior: &PriorSpec,
    cfg: &PosteriorConfig,
) -> Result<f64> {
    let cfg = PosteriorConfig {
        mode: Mode::Unsupervised,
        ..*cfg
    };
    log_cond_disc(disc, z, x, None, gen, prior, &cfg)
}

/// Semi-supervised discriminator conditional, including the full labeled set.
pub fn log_cond_disc_semi(
    disc: &ParamVector,
    z: &Batch,
    x: &Batch,
    labeled: &LabeledSet,
    gen: &ParamVector,
    prior: &PriorSpec,
    cfg: &PosteriorConfig,
) -> Result<f64> {
    let cfg = PosteriorConfig {
        mode: Mode::SemiSupervised,
        ..*cfg
    };
    log_cond_disc(disc, z, x, Some(labeled), gen, prior, &cfg)
}

/// Conditional posterior value for the current mode (either role).
pub fn log_cond_gen_mode(
    gen: &ParamVector,
    z: &Batch,
    disc: &ParamVector,
    prior: &PriorSpec,
    cfg: &PosteriorConfig,
) -> Result<f64> {
    log_cond_gen(gen, z, disc, prior, cfg)
}

pub fn log_cond_disc_mode(
    disc: &ParamVector,
    z: &Batch,
    x: &Batch,
    labeled: Option<&LabeledSet>,
    gen: &ParamVector,
    prior: &PriorSpec,
    cfg: &PosteriorConfig,
) -> Result<f64> {
    log_cond_disc(disc, z, x, labeled, gen, prior, cfg)
}

/// Summed generator conditional and its gradient.
///
/// Returns `sum_i sum_k log p(gen | z_i, disc_k)` and its gradient with
/// respect to `gen`. All noise sets are pushed through the generator as one
/// stacked batch; per-sample discriminator input gradients are accumulated
/// before a single generator backward pass.
pub fn marginal_gen(
    gen: &ParamVector,
    noise_sets: &[Batch],
    disc_samples: &[&ParamVector],
    prior: &PriorSpec,
    cfg: &PosteriorConfig,
) -> Result<(f64, ParamVector)> {
    if noise_sets.is_empty() || disc_samples.is_empty() {
        return Err(Error::Config(
            "marginal gradient needs at least one noise set and one discriminator sample".into(),
        ));
    }
    for z in noise_sets {
        check_rows(z, cfg.n_gen, "noise batch")?;
    }
    for d in disc_samples {
        check_pair(gen, d)?;
        check_disc_head(d, cfg)?;
    }
    let z_all = Batch::vstack(&noise_sets.iter().collect::<Vec<_>>())?;
    let trace = netcore::forward_trace(gen, &z_all)?;
    let fake = trace.logits();
    let loss = gen_loss(cfg);

    let per_disc = par::try_map_range(disc_samples.len(), |k| -> Result<(f64, Batch)> {
        let d = disc_samples[k];
        let dtrace = netcore::forward_trace(d, fake)?;
        let (v, g_logits) = loss.value_and_grad(dtrace.logits())?;
        let g_in = netcore::backward(d, fake, &dtrace, g_logits, 1.0, None, true)
            .expect("input gradient requested");
        Ok((v, g_in))
    })?;

    let mut value = 0.0;
    let mut g_fake = Batch::zeros(fake.rows(), fake.cols());
    for (v, g) in &per_disc {
        value += v;
        for (a, b) in g_fake.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *a += b;
        }
    }

    let terms = (noise_sets.len() * disc_samples.len()) as f64;
    value += terms * log_prior(gen, prior.sigma_g);
    let mut grad = ParamVector::zeros(gen.spec().clone());
    netcore::backward(gen, &z_all, &trace, g_fake, 1.0, Some(grad.values_mut()), false);
    add_prior_grad(gen, prior.sigma_g, terms, grad.values_mut());
    ensure_finite_grad(&grad)?;
    Ok((value, grad))
}

/// Gradient part of [`marginal_gen`].
pub fn marginal_grad_gen(
    gen: &ParamVector,
    noise_sets: &[Batch],
    disc_samples: &[&ParamVector],
    prior: &PriorSpec,
    cfg: &PosteriorConfig,
) -> Result<ParamVector> {
    marginal_gen(gen, noise_sets, disc_samples, prior, cfg).map(|(_, g)| g)
}

/// Summed discriminator conditional and its gradient.
///
/// Returns `sum_i sum_k log p(disc | z_i, X, D_s, gen_k)`. The real-data,
/// labeled and prior terms are identical across the `(i, k)` pairs, so they
/// are evaluated once and weighted by the number of pairs.
pub fn marginal_disc(
    disc: &ParamVector,
    noise_sets: &[Batch],
    x: &Batch,
    labeled: Option<&LabeledSet>,
    gen_samples: &[&ParamVector],
    prior: &PriorSpec,
    cfg: &PosteriorConfig,
) -> Result<(f64, ParamVector)> {
    if noise_sets.is_empty() || gen_samples.is_empty() {
        return Err(Error::Config(
            "marginal gradient needs at least one noise set and one generator sample".into(),
        ));
    }
    check_disc_head(disc, cfg)?;
    check_rows(x, cfg.n_disc, "real minibatch")?;
    for z in noise_sets {
        check_rows(z, cfg.n_gen, "noise batch")?;
    }
    for g in gen_samples {
        check_pair(g, disc)?;
    }
    let labeled = labeled.filter(|l| cfg.mode == Mode::SemiSupervised && !l.is_empty());
    if let Some(ls) = labeled {
        check_labels(ls, cfg.num_classes)?;
    }

    let z_all = Batch::vstack(&noise_sets.iter().collect::<Vec<_>>())?;
    let fakes = par::try_map_range(gen_samples.len(), |k| netcore::logits(gen_samples[k], &z_all))?;
    let fake_all = Batch::vstack(&fakes.iter().collect::<Vec<_>>())?;

    let terms = (noise_sets.len() * gen_samples.len()) as f64;
    let mut grad = ParamVector::zeros(disc.spec().clone());
    let mut value = 0.0;

    let ftrace = netcore::forward_trace(disc, &fake_all)?;
    let (fv, fg) = fake_loss(cfg).value_and_grad(ftrace.logits())?;
    value += fv;
    netcore::backward(disc, &fake_all, &ftrace, fg, 1.0, Some(grad.values_mut()), false);

    let rtrace = netcore::forward_trace(disc, x)?;
    let (rv, rg) = real_loss(cfg).value_and_grad(rtrace.logits())?;
    value += terms * rv;
    netcore::backward(disc, x, &rtrace, rg, terms, Some(grad.values_mut()), false);

    if let Some(ls) = labeled {
        let ltrace = netcore::forward_trace(disc, &ls.x)?;
        let loss = LossSpec::LogSoftmaxClass {
            labels: shifted_labels(ls),
            weight: 1.0,
        };
        let (lv, lg) = loss.value_and_grad(ltrace.logits())?;
        value += terms * lv;
        netcore::backward(disc, &ls.x, &ltrace, lg, terms, Some(grad.values_mut()), false);
    }

    value += terms * log_prior(disc, prior.sigma_d);
    add_prior_grad(disc, prior.sigma_d, terms, grad.values_mut());
    ensure_finite_grad(&grad)?;
    Ok((value, grad))
}

/// Gradient part of [`marginal_disc`].
pub fn marginal_grad_disc(
    disc: &ParamVector,
    noise_sets: &[Batch],
    x: &Batch,
    labeled: Option<&LabeledSet>,
    gen_samples: &[&ParamVector],
    prior: &PriorSpec,
    cfg: &PosteriorConfig,
) -> Result<ParamVector> {
    marginal_disc(disc, noise_sets, x, labeled, gen_samples, prior, cfg).map(|(_, g)| g)
}

fn ensure_finite_grad(g: &ParamVector) -> Result<()> {
    if g.values().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric("posterior gradient is not finite"))
    }
}
