//! Stochastic-gradient Hamiltonian Monte Carlo with an Adam burn-in phase.
//!
//! One SGHMC step (gradient `g` of the log posterior, ascent direction):
//!
//! ```text
//! v     <- (1 - alpha) v + eta g + n,   n ~ N(0, 2 alpha eta I)
//! theta <- theta + v
//! ```
//!
//! The momentum is refreshed before the position moves. With the injected
//! noise switched off the step is heavy-ball gradient ascent, and with
//! `alpha = 1` it is plain gradient ascent at rate `eta`. The discretization
//! noise estimate is taken to be zero.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SghmcConfig {
    /// Friction, in `(0, 1]`.
    pub alpha: f64,
    /// Learning-rate numerator; `eta = gamma / d_seen`.
    pub gamma: f64,
    pub burn_in_iters: u64,
    pub adam: AdamConfig,
    /// Off turns every step into noise-free momentum ascent (MAP mode).
    pub noise_enabled: bool,
    pub seed: u64,
}

impl Default for SghmcConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 1e-3,
            burn_in_iters: 1000,
            adam: AdamConfig::default(),
            noise_enabled: true,
            seed: 0,
        }
    }
}

impl SghmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("friction alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    BurnIn,
    Sghmc,
}

/// Counter-based normal stream: a ChaCha8 key from `seed`, one stream id per
/// chain, and the word position as the only mutable state.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Restores a stream at a saved position.
    pub fn at(seed: u64, stream: u64, word_pos: u128) -> Self {
        let mut s = Self::new(seed, stream);
        s.rng.set_word_pos(word_pos);
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl PartialEq for NoiseStream {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed && self.stream == other.stream && self.word_pos() == other.word_pos()
    }
}

/// Per-chain sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub v: Vec<f64>,
    pub step: u64,
    /// Unique real datapoints seen so far (drives the learning-rate decay).
    pub d_seen: u64,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub phase: Phase,
    pub noise: NoiseStream,
}

impl ChainState {
    pub fn new(dim: usize, cfg: &SghmcConfig, stream: u64) -> Self {
        Self {
            v: vec![0.0; dim],
            step: 0,
            d_seen: 0,
            adam_m: vec![0.0; dim],
            adam_v: vec![0.0; dim],
            phase: phase_at(0, cfg),
            noise: NoiseStream::new(cfg.seed, stream),
        }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }
}

fn phase_at(step: u64, cfg: &SghmcConfig) -> Phase {
    if step < cfg.burn_in_iters {
        Phase::BurnIn
    } else {
        Phase::Sghmc
    }
}

/// `gamma / max(d_seen, 1)` with `d_seen` capped at `n_data`.
pub fn lr_schedule(gamma: f64, d_seen: u64, n_data: u64) -> f64 {
    let d = d_seen.min(n_data.max(1)).max(1);
    gamma / d as f64
}

fn check_step(theta: &[f64], state: &ChainState, grad: &[f64]) -> Result<()> {
    if theta.len() != grad.len() || theta.len() != state.dim() {
        return Err(Error::Shape(format!(
            "parameter ({}), gradient ({}) and state ({}) sizes differ",
            theta.len(),
            grad.len(),
            state.dim()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(format!("gradient entry {i} is not finite")));
    }
    Ok(())
}

/// One SGHMC step at learning rate `eta`.
pub fn sghmc_step(
    theta: &mut [f64],
    state: &mut ChainState,
    grad: &[f64],
    cfg: &SghmcConfig,
    eta: f64,
) -> Result<()> {
    check_step(theta, state, grad)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {eta}")));
    }
    let keep = 1.0 - cfg.alpha;
    if cfg.noise_enabled {
        let noise_std = (2.0 * cfg.alpha * eta).sqrt();
        for ((t, v), &g) in theta.iter_mut().zip(state.v.iter_mut()).zip(grad) {
            let n = noise_std * state.noise.standard_normal();
            *v = keep * *v + eta * g + n;
            *t += *v;
        }
    } else {
        for ((t, v), &g) in theta.iter_mut().zip(state.v.iter_mut()).zip(grad) {
            *v = keep * *v + eta * g;
            *t += *v;
        }
    }
    state.step += 1;
    state.phase = phase_at(state.step, cfg);
    Ok(())
}

/// One bias-corrected Adam ascent step.
pub fn adam_step(
    theta: &mut [f64],
    state: &mut ChainState,
    grad: &[f64],
    cfg: &SghmcConfig,
) -> Result<()> {
    check_step(theta, state, grad)?;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = cfg.adam;
    // Adam's own counter is the number of burn-in steps taken so far.
    let t = state.step.min(cfg.burn_in_iters) as i32 + 1;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((th, m), s), &g) in theta
        .iter_mut()
        .zip(state.adam_m.iter_mut())
        .zip(state.adam_v.iter_mut())
        .zip(grad)
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *s = beta2 * *s + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let s_hat = *s / c2;
        *th += lr * m_hat / (s_hat.sqrt() + eps);
    }
    state.step += 1;
    state.phase = phase_at(state.step, cfg);
    Ok(())
}

/// Adam during burn-in, SGHMC afterwards with the decayed learning rate.
pub fn step(
    theta: &mut [f64],
    state: &mut ChainState,
    grad: &[f64],
    cfg: &SghmcConfig,
    n_data: u64,
) -> Result<()> {
    match state.phase {
        Phase::BurnIn => adam_step(theta, state, grad, cfg),
        Phase::Sghmc => {
            let eta = lr_schedule(cfg.gamma, state.d_seen, n_data);
            sghmc_step(theta, state, grad, cfg, eta)
        }
    }
}

/// Moments of a post-burn-in SGHMC trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryStats {
    pub mean: Vec<f64>,
    /// Row-major `dim x dim` sample covariance.
    pub covariance: Vec<f64>,
    /// Retained positions, row-major `steps x dim`.
    pub samples: Vec<f64>,
    pub dim: usize,
}

impl TrajectoryStats {
    pub fn variance(&self, i: usize) -> f64 {
        self.covariance[i * self.dim + i]
    }

    /// Number of sign changes of coordinate `i` along the trajectory.
    pub fn sign_changes(&self, i: usize) -> usize {
        let mut last = 0.0f64;
        let mut changes = 0;
        for row in self.samples.chunks(self.dim) {
            let x = row[i];
            if x != 0.0 {
                if last != 0.0 && x.signum() != last.signum() {
                    changes += 1;
                }
                last = x;
            }
        }
        changes
    }
}

/// Runs SGHMC at a fixed learning rate on a closed-form target.
///
/// `grad_log_density` returns the gradient of the log density. The first
/// `burn_in` steps are discarded; a trajectory whose norm exceeds `1e6` is
/// reported as diverged.
pub fn sample_known_posterior<F>(
    mut grad_log_density: F,
    init: &[f64],
    burn_in: usize,
    steps: usize,
    cfg: &SghmcConfig,
    eta: f64,
) -> Result<TrajectoryStats>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let dim = init.len();
    let run_cfg = SghmcConfig {
        burn_in_iters: 0,
        ..*cfg
    };
    run_cfg.validate()?;
    let mut theta = init.to_vec();
    let mut state = ChainState::new(dim, &run_cfg, 0);
    let mut samples = Vec::with_capacity(steps * dim);
    for i in 0..burn_in + steps {
        let g = grad_log_density(&theta);
        sghmc_step(&mut theta, &mut state, &g, &run_cfg, eta)?;
        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        if !(norm <= 1e6) {
            return Err(Error::numeric(format!("sampler diverged at step {i} (norm {norm:e})")));
        }
        if i >= burn_in {
            samples.extend_from_slice(&theta);
        }
    }
    let n = steps.max(1) as f64;
    let mut mean = vec![0.0; dim];
    for row in samples.chunks(dim) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x / n;
        }
    }
    let mut covariance = vec![0.0; dim * dim];
    for row in samples.chunks(dim) {
        for a in 0..dim {
            for b in 0..dim {
                covariance[a * dim + b] += (row[a] - mean[a]) * (row[b] - mean[b]) / (n - 1.0).max(1.0);
            }
        }
    }
    Ok(TrajectoryStats {
        mean,
        covariance,
        samples,
        dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64, noise: bool) -> SghmcConfig {
        SghmcConfig {
            alpha,
            gamma: 1.0,
            burn_in_iters: 0,
            noise_enabled: noise,
            seed: 5,
            ..SghmcConfig::default()
        }
    }

    #[test]
    fn schedule() {
        assert_eq!(lr_schedule(2.0, 0, 10_000), 2.0);
        assert_eq!(lr_schedule(2.0, 1000, 10_000), 0.002);
        assert_eq!(lr_schedule(2.0, 50_000, 10_000), 2.0 / 10_000.0);
        let mut last = f64::INFINITY;
        for d in 0..3000 {
            let eta = lr_schedule(3.0, d, 2000);
            assert!(eta <= last && eta >= 3.0 / 2000.0);
            last = eta;
        }
    }

    #[test]
    fn unit_friction_without_noise_is_gradient_ascent() {
        let c = cfg(1.0, false);
        let mut theta = vec![1.0, -2.0];
        let mut reference = theta.clone();
        let mut st = ChainState::new(2, &c, 0);
        for _ in 0..50 {
            let g: Vec<f64> = theta.iter().map(|t| -t).collect();
            sghmc_step(&mut theta, &mut st, &g, &c, 0.1).unwrap();
            let gr: Vec<f64> = reference.iter().map(|t| -t).collect();
            for (r, gi) in reference.iter_mut().zip(&gr) {
                *r += 0.1 * gi;
            }
            assert_eq!(theta, reference);
        }
    }

    #[test]
    fn heavy_ball_without_noise() {
        let c = cfg(0.3, false);
        let mut theta = vec![2.0];
        let mut st = ChainState::new(1, &c, 0);
        let (mut x, mut v) = (2.0f64, 0.0f64);
        for _ in 0..40 {
            let g = vec![-theta[0]];
            sghmc_step(&mut theta, &mut st, &g, &c, 0.05).unwrap();
            v = 0.7 * v + 0.05 * -x;
            x += v;
            assert_eq!(theta[0], x);
        }
    }

    #[test]
    fn zero_gradient_fixed_point_and_errors() {
        let c = cfg(0.5, false);
        let mut theta = vec![0.3, 0.4];
        let mut st = ChainState::new(2, &c, 0);
        sghmc_step(&mut theta, &mut st, &[0.0, 0.0], &c, 0.1).unwrap();
        assert_eq!(theta, vec![0.3, 0.4]);
        assert!(sghmc_step(&mut theta, &mut st, &[f64::NAN, 0.0], &c, 0.1).unwrap_err().is_numeric());
        assert!(matches!(
            sghmc_step(&mut theta, &mut st, &[0.0, 0.0], &c, 0.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn injected_noise_variance() {
        let c = cfg(0.2, true);
        let eta = 0.05;
        let n = 100_000;
        let mut theta = vec![0.0; n];
        let mut st = ChainState::new(n, &c, 3);
        sghmc_step(&mut theta, &mut st, &vec![0.0; n], &c, eta).unwrap();
        // from v = 0 and zero gradient, v' is exactly the injected noise
        let mean = st.v.iter().sum::<f64>() / n as f64;
        let var = st.v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = 2.0 * 0.2 * eta;
        assert!((var - want).abs() < 0.02 * want, "{var} vs {want}");
    }

    #[test]
    fn noise_streams_are_per_chain() {
        let c = cfg(0.2, true);
        let mut a = ChainState::new(4, &c, 7);
        let mut b = ChainState::new(4, &c, 7);
        let mut other = ChainState::new(4, &c, 8);
        let (mut ta, mut tb, mut to) = (vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]);
        for _ in 0..3 {
            sghmc_step(&mut ta, &mut a, &[0.0; 4], &c, 0.1).unwrap();
            sghmc_step(&mut tb, &mut b, &[0.0; 4], &c, 0.1).unwrap();
            sghmc_step(&mut to, &mut other, &[0.0; 4], &c, 0.1).unwrap();
        }
        assert_eq!(ta, tb);
        assert_ne!(ta, to);
        let restored = NoiseStream::at(a.noise.seed(), a.noise.stream(), a.noise.word_pos());
        assert_eq!(restored, a.noise);
    }

    #[test]
    fn adam_behaviour() {
        let c = SghmcConfig {
            burn_in_iters: 10_000,
            ..cfg(0.1, true)
        };
        let mut theta = vec![1.0, 2.0];
        let mut st = ChainState::new(2, &c, 0);
        adam_step(&mut theta, &mut st, &[0.0, 0.0], &c).unwrap();
        assert_eq!(theta, vec![1.0, 2.0]);

        // single step from zero moments, independent reimplementation
        let g = [0.37, -2.5];
        let mut theta = vec![0.0, 0.0];
        let mut st = ChainState::new(2, &c, 0);
        adam_step(&mut theta, &mut st, &g, &c).unwrap();
        let a = c.adam;
        for k in 0..2 {
            let m = (1.0 - a.beta1) * g[k] / (1.0 - a.beta1);
            let v = (1.0 - a.beta2) * g[k] * g[k] / (1.0 - a.beta2);
            let want = a.lr * m / (v.sqrt() + a.eps);
            assert!((theta[k] - want).abs() < 1e-12);
        }

        // constant gradient: per-step movement approaches lr * sign(g)
        let mut theta = vec![0.0, 0.0];
        let mut st = ChainState::new(2, &c, 0);
        let mut prev = theta.clone();
        for _ in 0..2000 {
            prev.clone_from(&theta);
            adam_step(&mut theta, &mut st, &[3.0, -0.01], &c).unwrap();
        }
        assert!((theta[0] - prev[0] - a.lr).abs() < 1e-6);
        assert!((theta[1] - prev[1] + a.lr).abs() < 1e-5);
    }

    #[test]
    fn phase_follows_step_count() {
        let c = SghmcConfig {
            burn_in_iters: 2,
            ..cfg(0.1, false)
        };
        let mut theta = vec![0.0];
        let mut st = ChainState::new(1, &c, 0);
        for i in 0..5u64 {
            assert_eq!(st.phase == Phase::BurnIn, i < 2);
            step(&mut theta, &mut st, &[1.0], &c, 100).unwrap();
        }
    }

    #[test]
    fn noise_free_sampler_converges_to_mode() {
        let c = cfg(0.5, false);
        let stats = sample_known_posterior(|t| vec![-(t[0] - 3.0)], &[0.0], 2000, 10, &c, 0.05).unwrap();
        assert!((stats.mean[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn divergence_is_reported() {
        let c = cfg(0.5, false);
        let err = sample_known_posterior(|t| vec![t[0]], &[1.0], 10_000, 10, &c, 0.5).unwrap_err();
        assert!(err.is_numeric());
    }
}
