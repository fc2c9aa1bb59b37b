//! Sample-set orchestration: interleaved generator and discriminator SGHMC
//! updates, burn-in, collection, and the maximum-likelihood (MAP) baseline.
//!
//! The sample set holds `J_g * M` generator chains and `J_d * M`
//! discriminator chains, indexed `j * M + m`. Within one iteration:
//!
//! 1. every generator group `j` draws `J_g` fresh noise batches; chain
//!    `(j, m)` takes one step on the summed gradient against the
//!    discriminator samples `{d(k, m)}_k`;
//! 2. every discriminator group `j` draws `J_d` noise batches and one real
//!    minibatch (plus the whole labeled set); chain `(j, m)` takes one step
//!    against the freshly updated generators `{g(k, m)}_k`.
//!
//! Every random draw comes from its own ChaCha stream keyed by role and
//! index, so a chain's streams do not depend on how many chains exist.

use std::sync::Arc;

use rand::seq::SliceRandom;

mod checkpoint;
pub use checkpoint::{check_compatible, load_checkpoint, load_checkpoint_for, save_checkpoint};

use crate::error::{Error, Result};
use crate::netcore::{init_params_with, Batch, Init, NetworkSpec, ParamVector};
use crate::par;
use crate::posterior::{self, LabeledSet, Mode, PosteriorConfig, PriorSpec};
use crate::report::MetricRecord;
use crate::sghmc::{self, ChainState, NoiseStream, SghmcConfig};

pub const STREAM_GEN_CHAIN: u64 = 1 << 32;
pub const STREAM_DISC_CHAIN: u64 = 2 << 32;
pub const STREAM_GEN_Z: u64 = 3 << 32;
pub const STREAM_DISC_Z: u64 = 4 << 32;
pub const STREAM_DATA: u64 = 5 << 32;
pub const STREAM_GEN_INIT: u64 = 6 << 32;
pub const STREAM_DISC_INIT: u64 = 7 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Posterior sampling.
    Bayes,
    /// Noise-free iterative MAP optimization with single chains (ML-GAN).
    Map,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Bayes => "bayes",
            Model::Map => "map",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayes" => Ok(Model::Bayes),
            "map" | "ml" => Ok(Model::Map),
            other => Err(Error::Config(format!("unknown model '{other}' (bayes|map)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub posterior: PosteriorConfig,
    pub prior: PriorSpec,
    /// Sampler settings; `sghmc.seed` is the master seed of the whole run.
    pub sghmc: SghmcConfig,
    /// `M`: chains per simple Monte Carlo group.
    pub num_mcmc: usize,
    pub total_iters: u64,
    pub collect_every: u64,
    pub model: Model,
    pub gen_spec: Arc<NetworkSpec>,
    pub disc_spec: Arc<NetworkSpec>,
    /// How chains are initialized.
    pub init: Init,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.posterior.validate()?;
        self.prior.validate()?;
        self.sghmc.validate()?;
        if self.num_mcmc == 0 {
            return Err(Error::Config("M must be at least 1".into()));
        }
        if self.collect_every == 0 {
            return Err(Error::Config("collect_every must be at least 1".into()));
        }
        if self.model == Model::Map {
            let p = &self.posterior;
            if p.j_gen != 1 || p.j_disc != 1 || self.num_mcmc != 1 || self.sghmc.noise_enabled {
                return Err(Error::Config(
                    "map mode needs J_g = J_d = M = 1 and injected noise off".into(),
                ));
            }
        }
        if self.gen_spec.output_dim() != self.disc_spec.input_dim() {
            return Err(Error::Config(format!(
                "generator output ({}) does not match discriminator input ({})",
                self.gen_spec.output_dim(),
                self.disc_spec.input_dim()
            )));
        }
        Ok(())
    }

    /// The ML-GAN counterpart of this configuration: single chains, no
    /// injected noise, and a flat prior.
    pub fn map_baseline(&self, flat_sigma: f64) -> Result<Self> {
        let mut c = self.clone();
        c.model = Model::Map;
        c.posterior.j_gen = 1;
        c.posterior.j_disc = 1;
        c.num_mcmc = 1;
        c.sghmc.noise_enabled = false;
        c.prior = PriorSpec::isotropic(flat_sigma)?;
        c.validate()?;
        Ok(c)
    }

    pub fn gen_chains(&self) -> usize {
        self.posterior.j_gen * self.num_mcmc
    }

    pub fn disc_chains(&self) -> usize {
        self.posterior.j_disc * self.num_mcmc
    }

    /// Collection happens after iteration `t` (1-based) once burn-in is over.
    pub fn is_collection_point(&self, t: u64) -> bool {
        t > self.sghmc.burn_in_iters && (t - self.sghmc.burn_in_iters).is_multiple_of(self.collect_every)
    }
}

/// Real data for one run.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub unlabeled: Batch,
    pub labeled: Option<LabeledSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub params: ParamVector,
    pub state: ChainState,
}

/// A snapshot of one chain taken at a collection point.
#[derive(Debug, Clone, PartialEq)]
pub struct Collected {
    pub iteration: u64,
    pub chain: usize,
    pub params: ParamVector,
}

/// Epoch-wise sampling without replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCursor {
    pub stream: NoiseStream,
    pub perm: Vec<u32>,
    pub pos: usize,
    /// Total datapoints handed out so far.
    pub consumed: u64,
}

impl DataCursor {
    pub fn new(seed: u64, n: usize) -> Self {
        let mut c = Self {
            stream: NoiseStream::new(seed, STREAM_DATA),
            perm: (0..n as u32).collect(),
            pos: 0,
            consumed: 0,
        };
        c.reshuffle();
        c
    }

    fn reshuffle(&mut self) {
        self.perm.shuffle(self.stream.rng());
        self.pos = 0;
    }

    /// Next `count` indices; a batch that runs past the end of an epoch
    /// continues into a freshly shuffled one.
    pub fn next_batch(&mut self, count: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if self.pos == self.perm.len() {
                self.reshuffle();
            }
            out.push(self.perm[self.pos] as usize);
            self.pos += 1;
        }
        self.consumed += count as u64;
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub j_gen: usize,
    pub j_disc: usize,
    pub num_mcmc: usize,
    pub gen: Vec<Chain>,
    pub disc: Vec<Chain>,
    pub gen_noise: Vec<NoiseStream>,
    pub disc_noise: Vec<NoiseStream>,
    pub data: DataCursor,
    /// Completed iterations.
    pub iteration: u64,
    pub d_seen: u64,
    pub collected_gen: Vec<Collected>,
    pub collected_disc: Vec<Collected>,
}

impl SampleSet {
    /// Fresh chains drawn from `cfg.init`.
    pub fn init(cfg: &TrainConfig, n_data: usize) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.sghmc.seed;
        let make = |spec: &Arc<NetworkSpec>, init_stream: u64, chain_stream: u64, c: usize| {
            let mut s = NoiseStream::new(seed, init_stream + c as u64);
            let params = init_params_with(spec.clone(), cfg.init, s.rng())?;
            let state = ChainState::new(params.len(), &cfg.sghmc, chain_stream + c as u64);
            Ok::<_, Error>(Chain { params, state })
        };
        let gen = (0..cfg.gen_chains())
            .map(|c| make(&cfg.gen_spec, STREAM_GEN_INIT, STREAM_GEN_CHAIN, c))
            .collect::<Result<Vec<_>>>()?;
        let disc = (0..cfg.disc_chains())
            .map(|c| make(&cfg.disc_spec, STREAM_DISC_INIT, STREAM_DISC_CHAIN, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            j_gen: cfg.posterior.j_gen,
            j_disc: cfg.posterior.j_disc,
            num_mcmc: cfg.num_mcmc,
            gen,
            disc,
            gen_noise: (0..cfg.posterior.j_gen)
                .map(|j| NoiseStream::new(seed, STREAM_GEN_Z + j as u64))
                .collect(),
            disc_noise: (0..cfg.posterior.j_disc)
                .map(|j| NoiseStream::new(seed, STREAM_DISC_Z + j as u64))
                .collect(),
            data: DataCursor::new(seed, n_data),
            iteration: 0,
            d_seen: 0,
            collected_gen: Vec::new(),
            collected_disc: Vec::new(),
        })
    }

    pub fn gen_spec(&self) -> &Arc<NetworkSpec> {
        self.gen[0].params.spec()
    }

    pub fn disc_spec(&self) -> &Arc<NetworkSpec> {
        self.disc[0].params.spec()
    }

    pub fn gen_params(&self) -> Vec<&ParamVector> {
        self.gen.iter().map(|c| &c.params).collect()
    }

    pub fn disc_params(&self) -> Vec<&ParamVector> {
        self.disc.iter().map(|c| &c.params).collect()
    }

    /// Discriminator samples paired with MCMC index `m`.
    fn disc_for(&self, m: usize) -> Vec<&ParamVector> {
        (0..self.j_disc)
            .map(|k| &self.disc[k * self.num_mcmc + m].params)
            .collect()
    }

    fn gen_for(&self, m: usize) -> Vec<&ParamVector> {
        (0..self.j_gen)
            .map(|k| &self.gen[k * self.num_mcmc + m].params)
            .collect()
    }

    fn collect(&mut self) {
        let t = self.iteration;
        for (c, chain) in self.gen.iter().enumerate() {
            self.collected_gen.push(Collected {
                iteration: t,
                chain: c,
                params: chain.params.clone(),
            });
        }
        for (c, chain) in self.disc.iter().enumerate() {
            self.collected_disc.push(Collected {
                iteration: t,
                chain: c,
                params: chain.params.clone(),
            });
        }
    }
}

fn check_data(data: &TrainData, cfg: &TrainConfig) -> Result<()> {
    let n = data.unlabeled.rows();
    if n != cfg.posterior.n_data {
        return Err(Error::Config(format!(
            "posterior config says N={}, data has {n} rows",
            cfg.posterior.n_data
        )));
    }
    if cfg.posterior.n_disc > n {
        return Err(Error::Config(format!(
            "discriminator batch {} exceeds dataset size {n}",
            cfg.posterior.n_disc
        )));
    }
    if data.unlabeled.cols() != cfg.disc_spec.input_dim() {
        return Err(Error::Shape(format!(
            "data has {} features, discriminator reads {}",
            data.unlabeled.cols(),
            cfg.disc_spec.input_dim()
        )));
    }
    if cfg.posterior.mode == Mode::SemiSupervised && data.labeled.is_none() && cfg.posterior.n_labeled > 0 {
        return Err(Error::Config("semi-supervised run without a labeled set".into()));
    }
    Ok(())
}

/// Draws `count` noise batches of `rows x dim` from one stream.
fn draw_noise(stream: &mut NoiseStream, count: usize, rows: usize, dim: usize) -> Vec<Batch> {
    (0..count)
        .map(|_| Batch::standard_normal(rows, dim, stream.rng()))
        .collect()
}

/// One iteration: generator sweep, then discriminator sweep.
pub fn run_iteration(set: &mut SampleSet, data: &TrainData, cfg: &TrainConfig) -> Result<()> {
    check_data(data, cfg)?;
    let p = &cfg.posterior;
    let m_count = set.num_mcmc;
    let n_data = p.n_data as u64;
    let z_dim = cfg.gen_spec.input_dim();

    // generator sweep
    let gen_noise: Vec<Vec<Batch>> = set
        .gen_noise
        .iter_mut()
        .map(|s| draw_noise(s, p.j_gen, p.n_gen, z_dim))
        .collect();
    let grads = {
        let set_ref = &*set;
        par::try_map_range(set_ref.gen.len(), |c| {
            let (j, m) = (c / m_count, c % m_count);
            posterior::marginal_grad_gen(
                &set_ref.gen[c].params,
                &gen_noise[j],
                &set_ref.disc_for(m),
                &cfg.prior,
                p,
            )
            .map_err(|e| e.in_chain("generator", c))
        })?
    };
    apply_steps(&mut set.gen, &grads, cfg, n_data, "generator")?;

    // discriminator sweep
    let mut disc_noise = Vec::with_capacity(set.j_disc);
    let mut real = Vec::with_capacity(set.j_disc);
    for j in 0..set.j_disc {
        disc_noise.push(draw_noise(&mut set.disc_noise[j], p.j_disc, p.n_gen, z_dim));
        let idx = set.data.next_batch(p.n_disc);
        real.push(data.unlabeled.select_rows(&idx));
    }
    set.d_seen = set.data.consumed.min(n_data);
    let labeled = data.labeled.as_ref();
    let grads = {
        let set_ref = &*set;
        par::try_map_range(set_ref.disc.len(), |c| {
            let (j, m) = (c / m_count, c % m_count);
            posterior::marginal_grad_disc(
                &set_ref.disc[c].params,
                &disc_noise[j],
                &real[j],
                labeled,
                &set_ref.gen_for(m),
                &cfg.prior,
                p,
            )
            .map_err(|e| e.in_chain("discriminator", c))
        })?
    };
    for chain in set.gen.iter_mut().chain(set.disc.iter_mut()) {
        chain.state.d_seen = set.d_seen;
    }
    apply_steps(&mut set.disc, &grads, cfg, n_data, "discriminator")?;
    set.iteration += 1;
    Ok(())
}

fn apply_steps(
    chains: &mut [Chain],
    grads: &[ParamVector],
    cfg: &TrainConfig,
    n_data: u64,
    role: &'static str,
) -> Result<()> {
    let results = {
        let mut out: Vec<Result<()>> = (0..chains.len()).map(|_| Ok(())).collect();
        let mut pairs: Vec<(&mut Chain, &mut Result<()>)> = chains.iter_mut().zip(out.iter_mut()).collect();
        par::for_each_mut(&mut pairs, |c, (chain, res)| {
            let Chain { params, state } = &mut **chain;
            **res = sghmc::step(params.values_mut(), state, grads[c].values(), &cfg.sghmc, n_data)
                .and_then(|_| {
                    if params.values().iter().all(|v| v.is_finite()) {
                        Ok(())
                    } else {
                        Err(Error::numeric("parameters became non-finite"))
                    }
                });
        });
        out
    };
    for (c, r) in results.into_iter().enumerate() {
        r.map_err(|e| e.in_chain(role, c))?;
    }
    Ok(())
}

/// Pull-based metric hook invoked at each collection point.
pub trait MetricProbe {
    fn measure(&mut self, samples: &SampleSet) -> Result<MetricRecord>;
}

impl<F> MetricProbe for F
where
    F: FnMut(&SampleSet) -> Result<MetricRecord>,
{
    fn measure(&mut self, samples: &SampleSet) -> Result<MetricRecord> {
        self(samples)
    }
}

/// A run that stopped early, with everything produced up to the failure.
#[derive(Debug)]
pub struct TrainAbort {
    pub error: Error,
    pub iteration: u64,
    pub samples: SampleSet,
    pub records: Vec<MetricRecord>,
}

impl std::fmt::Display for TrainAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "training aborted at iteration {}: {}", self.iteration, self.error)
    }
}

impl std::error::Error for TrainAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub type TrainOutput = (SampleSet, Vec<MetricRecord>);

/// Runs `cfg.total_iters` iterations from freshly initialized chains.
pub fn train(
    cfg: &TrainConfig,
    data: &TrainData,
    probe: Option<&mut dyn MetricProbe>,
) -> std::result::Result<TrainOutput, Box<TrainAbort>> {
    let samples = match SampleSet::init(cfg, data.unlabeled.rows()) {
        Ok(s) => s,
        Err(error) => {
            // nothing to hand back beyond an empty history
            return Err(Box::new(TrainAbort {
                error,
                iteration: 0,
                samples: empty_set(),
                records: Vec::new(),
            }));
        }
    };
    resume(cfg, data, samples, probe)
}

/// Continues a sample set (fresh or checkpointed) up to `cfg.total_iters`.
pub fn resume(
    cfg: &TrainConfig,
    data: &TrainData,
    mut samples: SampleSet,
    mut probe: Option<&mut dyn MetricProbe>,
) -> std::result::Result<TrainOutput, Box<TrainAbort>> {
    let mut records = Vec::new();
    while samples.iteration < cfg.total_iters {
        if let Err(error) = run_iteration(&mut samples, data, cfg) {
            let iteration = samples.iteration + 1;
            return Err(Box::new(TrainAbort {
                error,
                iteration,
                samples,
                records,
            }));
        }
        if cfg.is_collection_point(samples.iteration) {
            samples.collect();
            if let Some(p) = probe.as_deref_mut() {
                match p.measure(&samples) {
                    Ok(r) => records.push(r),
                    Err(error) => {
                        let iteration = samples.iteration;
                        return Err(Box::new(TrainAbort {
                            error,
                            iteration,
                            samples,
                            records,
                        }));
                    }
                }
            }
        }
    }
    Ok((samples, records))
}

fn empty_set() -> SampleSet {
    SampleSet {
        j_gen: 0,
        j_disc: 0,
        num_mcmc: 0,
        gen: Vec::new(),
        disc: Vec::new(),
        gen_noise: Vec::new(),
        disc_noise: Vec::new(),
        data: DataCursor {
            stream: NoiseStream::new(0, STREAM_DATA),
            perm: Vec::new(),
            pos: 0,
            consumed: 0,
        },
        iteration: 0,
        d_seen: 0,
        collected_gen: Vec::new(),
        collected_disc: Vec::new(),
    }
}

/// Draws `count` samples from the generator mixture, splitting the count as
/// evenly as possible across `gens` (earlier generators take the remainder).
pub fn sample_generators(gens: &[&ParamVector], count: usize, stream: &mut NoiseStream) -> Result<Batch> {
    if gens.is_empty() {
        return Err(Error::Config("no generator samples".into()));
    }
    let z_dim = gens[0].spec().input_dim();
    let per = count / gens.len();
    let extra = count % gens.len();
    let noises: Vec<Batch> = (0..gens.len())
        .map(|i| Batch::standard_normal(per + usize::from(i < extra), z_dim, stream.rng()))
        .collect();
    let outs = par::try_map_range(gens.len(), |i| {
        if noises[i].rows() == 0 {
            return Ok(None);
        }
        crate::netcore::forward(gens[i], &noises[i]).map(Some)
    })?;
    let parts: Vec<&Batch> = outs.iter().flatten().collect();
    Batch::vstack(&parts)
}
