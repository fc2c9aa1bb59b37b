//! Self-verification suites behind `bgan check`.
//!
//! The gradient suite compares every marginal posterior gradient with
//! central finite differences of the summed log conditionals on small random
//! networks. The sampler suite runs SGHMC on closed-form targets.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::netcore::{init_params, Batch, Init, NetworkSpec, OutputHead, ParamVector};
use crate::posterior::{self, LabeledSet, Mode, PosteriorConfig, PriorSpec};
use crate::sghmc::{self, ChainState, SghmcConfig};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Fraction of probed coordinates that must agree.
pub const FD_PASS_FRACTION: f64 = 0.99;
pub const FD_INSTANCES: usize = 10;

/// One row of a check table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
    pub passed: bool,
}

impl CheckRow {
    fn new(name: &str, value: f64, limit: f64, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            value,
            limit,
            detail,
            passed,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    /// Fixed-width table, one line per check.
    pub fn table(&self) -> String {
        let mut out = format!("{:<42} {:>12} {:>12}  {:<6} {}\n", "check", "value", "limit", "status", "detail");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<42} {:>12.4e} {:>12.4e}  {:<6} {}\n",
                r.name,
                r.value,
                r.limit,
                if r.passed { "ok" } else { "FAIL" },
                r.detail
            ));
        }
        out
    }
}

/// Relative error with a floor so that coordinates with a vanishing
/// gradient compare absolutely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Agreement statistics of one gradient against finite differences.
#[derive(Debug, Clone, Copy, Default)]
pub struct FdStats {
    pub probed: usize,
    pub within: usize,
    pub max_rel: f64,
}

impl FdStats {
    fn merge(&mut self, o: FdStats) {
        self.probed += o.probed;
        self.within += o.within;
        self.max_rel = self.max_rel.max(o.max_rel);
    }

    pub fn fraction(&self) -> f64 {
        if self.probed == 0 {
            1.0
        } else {
            self.within as f64 / self.probed as f64
        }
    }
}

/// Central differences of `f` around `theta` on every coordinate.
fn compare_fd<F>(theta: &ParamVector, analytic: &ParamVector, mut f: F) -> Result<FdStats>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    let mut stats = FdStats::default();
    let mut probe = theta.clone();
    for i in 0..theta.len() {
        let x = theta.values()[i];
        probe.values_mut()[i] = x + FD_STEP;
        let up = f(&probe)?;
        probe.values_mut()[i] = x - FD_STEP;
        let down = f(&probe)?;
        probe.values_mut()[i] = x;
        let fd = (up - down) / (2.0 * FD_STEP);
        let rel = relative_error(fd, analytic.values()[i]);
        stats.probed += 1;
        if rel <= FD_REL_TOL {
            stats.within += 1;
        }
        stats.max_rel = stats.max_rel.max(rel);
    }
    Ok(stats)
}

struct Instance {
    gen: ParamVector,
    disc: ParamVector,
    noise: Vec<Batch>,
    x: Batch,
    labeled: Option<LabeledSet>,
    opp_gen: Vec<ParamVector>,
    opp_disc: Vec<ParamVector>,
    cfg: PosteriorConfig,
    prior: PriorSpec,
}

fn instance(mode: Mode, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (z_dim, x_dim, hidden) = (3, 5, 7);
    let k = 3;
    let gen_spec = Arc::new(NetworkSpec::relu(&[z_dim, hidden, x_dim], OutputHead::Linear)?);
    let disc_spec = Arc::new(match mode {
        Mode::Unsupervised => NetworkSpec::relu(&[x_dim, hidden, 1], OutputHead::Sigmoid)?,
        Mode::SemiSupervised => NetworkSpec::relu(&[x_dim, hidden, k + 1], OutputHead::Softmax)?,
    });
    let init = Init::Prior { sigma: 0.7 };
    let mut next = || rng.random::<u64>();
    let gen = init_params(gen_spec.clone(), init, next())?;
    let disc = init_params(disc_spec.clone(), init, next())?;
    let opp_gen = (0..2)
        .map(|_| init_params(gen_spec.clone(), init, next()))
        .collect::<Result<Vec<_>>>()?;
    let opp_disc = (0..2)
        .map(|_| init_params(disc_spec.clone(), init, next()))
        .collect::<Result<Vec<_>>>()?;
    let (n_gen, n_disc, n_lab) = (4, 6, 5);
    let mut cfg = PosteriorConfig::unsupervised(60, n_disc, 2, 2);
    cfg.n_gen = n_gen;
    let mut rng = ChaCha8Rng::seed_from_u64(next());
    let noise = (0..2).map(|_| Batch::standard_normal(n_gen, z_dim, &mut rng)).collect();
    let x = Batch::standard_normal(n_disc, x_dim, &mut rng);
    let labeled = match mode {
        Mode::Unsupervised => None,
        Mode::SemiSupervised => {
            cfg.mode = Mode::SemiSupervised;
            cfg.num_classes = k;
            cfg.n_labeled = n_lab;
            let y = (0..n_lab).map(|i| i % k + 1).collect();
            Some(LabeledSet::new(Batch::standard_normal(n_lab, x_dim, &mut rng), y)?)
        }
    };
    Ok(Instance {
        gen,
        disc,
        noise,
        x,
        labeled,
        opp_gen,
        opp_disc,
        cfg,
        prior: PriorSpec::new(1.3, 0.9)?,
    })
}

/// Finite-difference agreement of the generator marginal gradient.
fn gen_stats(inst: &Instance) -> Result<FdStats> {
    let discs: Vec<&ParamVector> = inst.opp_disc.iter().collect();
    let grad = posterior::marginal_grad_gen(&inst.gen, &inst.noise, &discs, &inst.prior, &inst.cfg)?;
    compare_fd(&inst.gen, &grad, |g| {
        let mut total = 0.0;
        for z in &inst.noise {
            for d in &discs {
                total += posterior::log_cond_gen_mode(g, z, d, &inst.prior, &inst.cfg)?;
            }
        }
        Ok(total)
    })
}

fn disc_stats(inst: &Instance) -> Result<FdStats> {
    let gens: Vec<&ParamVector> = inst.opp_gen.iter().collect();
    let labeled = inst.labeled.as_ref();
    let grad = posterior::marginal_grad_disc(&inst.disc, &inst.noise, &inst.x, labeled, &gens, &inst.prior, &inst.cfg)?;
    compare_fd(&inst.disc, &grad, |d| {
        let mut total = 0.0;
        for z in &inst.noise {
            for g in &gens {
                total += posterior::log_cond_disc_mode(d, z, &inst.x, labeled, g, &inst.prior, &inst.cfg)?;
            }
        }
        Ok(total)
    })
}

/// Gradient table: one row per (role, mode) over [`FD_INSTANCES`] instances.
pub fn gradient_suite(seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::default();
    for mode in [Mode::Unsupervised, Mode::SemiSupervised] {
        let (mut gen, mut disc) = (FdStats::default(), FdStats::default());
        for i in 0..FD_INSTANCES as u64 {
            let inst = instance(mode, seed.wrapping_mul(1_000_003).wrapping_add(i))?;
            gen.merge(gen_stats(&inst)?);
            disc.merge(disc_stats(&inst)?);
        }
        for (role, s) in [("generator", gen), ("discriminator", disc)] {
            report.rows.push(CheckRow::new(
                &format!("{role} {} max rel err", mode.name()),
                s.max_rel,
                FD_REL_TOL,
                s.fraction() >= FD_PASS_FRACTION,
                format!("{}/{} coords within tolerance", s.within, s.probed),
            ));
        }
    }
    Ok(report)
}

pub const GAUSS_STEPS: usize = 200_000;
pub const GAUSS_BURN_IN: usize = 5_000;

fn sampler_cfg(alpha: f64, noise: bool, seed: u64) -> SghmcConfig {
    SghmcConfig {
        alpha,
        burn_in_iters: 0,
        noise_enabled: noise,
        seed,
        ..SghmcConfig::default()
    }
}

/// Known-posterior sampler table.
pub fn sampler_suite(seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::default();

    let cfg = sampler_cfg(0.1, true, seed);
    let stats = sghmc::sample_known_posterior(|t| t.iter().map(|x| -x).collect(), &[0.0, 0.0], GAUSS_BURN_IN, GAUSS_STEPS, &cfg, 0.01)?;
    let mean_err = stats.mean.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    report.rows.push(CheckRow::new(
        "gaussian mean abs err",
        mean_err,
        0.05,
        mean_err <= 0.05,
        format!("mean ({:.4}, {:.4})", stats.mean[0], stats.mean[1]),
    ));
    let var_err = (0..2).fold(0.0f64, |m, i| m.max((stats.variance(i) - 1.0).abs()));
    report.rows.push(CheckRow::new(
        "gaussian variance rel err",
        var_err,
        0.10,
        var_err <= 0.10,
        format!("variances ({:.4}, {:.4})", stats.variance(0), stats.variance(1)),
    ));

    // unit friction without noise against a plain gradient-ascent loop
    let cfg = sampler_cfg(1.0, false, seed);
    let eta = 0.05;
    let grad = |t: &[f64]| vec![-(t[0] - 1.0), -2.0 * (t[1] + 0.5)];
    let mut theta = vec![3.0, -2.0];
    let mut reference = theta.clone();
    let mut state = ChainState::new(2, &cfg, 0);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let g = grad(&theta);
        sghmc::sghmc_step(&mut theta, &mut state, &g, &cfg, eta)?;
        let g = grad(&reference);
        for (r, gi) in reference.iter_mut().zip(&g) {
            *r += eta * gi;
        }
        if theta.iter().zip(&reference).any(|(a, b)| a.to_bits() != b.to_bits()) {
            mismatches += 1;
        }
    }
    report.rows.push(CheckRow::new(
        "unit friction == gradient ascent",
        mismatches as f64,
        0.0,
        mismatches == 0,
        "bitwise mismatching steps of 1000".into(),
    ));

    // symmetric mixture of N(-2, 1) and N(2, 1)
    let cfg = sampler_cfg(0.1, true, seed ^ 0x9e37_79b9);
    let stats = sghmc::sample_known_posterior(
        |t| {
            let (a, b) = (-(t[0] - 2.0).powi(2) / 2.0, -(t[0] + 2.0).powi(2) / 2.0);
            let wa = 1.0 / (1.0 + (b - a).exp());
            vec![-(t[0] - 2.0) * wa - (t[0] + 2.0) * (1.0 - wa)]
        },
        &[2.0],
        GAUSS_BURN_IN,
        GAUSS_STEPS,
        &cfg,
        0.01,
    )?;
    let changes = stats.sign_changes(0);
    report.rows.push(CheckRow::new(
        "bimodal sign changes",
        changes as f64,
        10.0,
        changes >= 10,
        "modes at -2 and 2".into(),
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_suite_passes() {
        let r = gradient_suite(1).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r.passed(), "{}", r.table());
    }

    #[test]
    fn sampler_suite_passes() {
        let r = sampler_suite(2).unwrap();
        assert!(r.passed(), "{}", r.table());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.0001) - 1e-4 / 1.0001).abs() < 1e-15);
        assert_eq!(relative_error(1e-9, 0.0), 1e-3);
    }
}
