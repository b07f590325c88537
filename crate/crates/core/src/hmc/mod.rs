//! No-U-Turn sampling with warmup adaptation and a multi-chain runner.
//!
//! Warmup follows the usual fast/slow/fast schedule: dual averaging of the
//! step size toward `target_accept` throughout, and a diagonal inverse metric
//! re-estimated at the end of each doubling slow window. Each chain draws
//! from its own ChaCha stream keyed by `(seed, chain index)`, so results do
//! not depend on how chains are scheduled across threads.

mod adapt;
mod nuts;

use crate::error::{Error, Result};
use crate::targets::{TargetSpec, UnconstrainedState};
use adapt::{DualAveraging, WindowedAdaptation};
use nuts::{Nuts, PhasePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::Instant;

/// A differentiable log density in unconstrained coordinates.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns `log p(x)` and writes its gradient into `grad`.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl LogDensity for TargetSpec {
    fn dim(&self) -> usize {
        TargetSpec::dim(self)
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        TargetSpec::log_density_and_grad(self, x, grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub warmup_iters: usize,
    pub retain_iters: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    /// Energy error beyond which a transition counts as divergent.
    pub divergence_threshold: f64,
    pub seed: u64,
    pub chains: usize,
    pub init_step_size: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            warmup_iters: 1000,
            retain_iters: 1000,
            target_accept: 0.8,
            max_tree_depth: 10,
            divergence_threshold: 1000.0,
            seed: 1,
            chains: 10,
            init_step_size: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.retain_iters == 0 {
            return Err(Error::Config("retain_iters must be positive".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!("target_accept must lie in (0,1), got {}", self.target_accept)));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::Config("max_tree_depth must be positive".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::Config("divergence_threshold must be positive".into()));
        }
        if !(self.init_step_size > 0.0) {
            return Err(Error::Config("init_step_size must be positive".into()));
        }
        Ok(())
    }
}

/// Retained draws and per-transition statistics of one chain, in the
/// sampler's unconstrained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawChain {
    pub chain_index: u64,
    /// `retain_iters × dim`, row per draw.
    pub draws: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
    pub accept_stat: Vec<f64>,
    pub tree_depth: Vec<usize>,
    pub n_leapfrog: Vec<usize>,
    pub divergent: Vec<bool>,
    pub energy_error: Vec<f64>,
    pub warmup_divergences: usize,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub warmup_seconds: f64,
    pub sampling_seconds: f64,
}

impl RawChain {
    pub fn divergences(&self) -> usize {
        self.divergent.iter().filter(|d| **d).count()
    }

    pub fn mean_accept_stat(&self) -> f64 {
        self.accept_stat.iter().sum::<f64>() / self.accept_stat.len() as f64
    }

    /// Column `j` of the draws.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|r| r[j]).collect()
    }
}

fn chain_rng(seed: u64, chain_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_index);
    rng
}

fn initial_point<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    init: Option<&[f64]>,
    rng: &mut R,
) -> Result<PhasePoint> {
    let dim = target.dim();
    if let Some(x) = init {
        if x.len() != dim {
            return Err(Error::Dimension { expected: dim, got: x.len() });
        }
        let z = PhasePoint::new(target, x.to_vec());
        if z.is_finite() {
            return Ok(z);
        }
    }
    for _ in 0..100 {
        let x: Vec<f64> = match init {
            Some(base) => base.iter().map(|b| b + rng.random_range(-2.0..2.0)).collect(),
            None => (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
        };
        let z = PhasePoint::new(target, x);
        if z.is_finite() {
            return Ok(z);
        }
    }
    Err(Error::Init("log density non-finite at the initial point after 100 jittered retries".into()))
}

/// Runs one chain of warmup plus retained NUTS transitions.
///
/// Without `init` the chain starts uniformly on `(-2, 2)` in every
/// coordinate.
pub fn sample_chain<T: LogDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    init: Option<&[f64]>,
    chain_index: u64,
) -> Result<RawChain> {
    config.validate()?;
    let dim = target.dim();
    let mut rng = chain_rng(config.seed, chain_index);
    let mut z = initial_point(target, init, &mut rng)?;

    let warmup_start = Instant::now();
    let mut sampler = Nuts {
        target,
        inv_metric: vec![1.0; dim],
        step_size: config.init_step_size,
        max_depth: config.max_tree_depth,
        max_delta_h: config.divergence_threshold,
    };
    let mut warmup_divergences = 0;
    if config.warmup_iters > 0 {
        sampler.find_reasonable_step_size(&z, &mut rng);
        let mut dual = DualAveraging::new(config.target_accept, sampler.step_size);
        let mut windows = WindowedAdaptation::new(dim, config.warmup_iters);
        for _ in 0..config.warmup_iters {
            let (next, info) = sampler.transition(&z, &mut rng);
            z = next;
            warmup_divergences += info.divergent as usize;
            sampler.step_size = dual.learn(info.accept_stat);
            if let Some(var) = windows.learn(&z.x) {
                sampler.inv_metric = var;
                sampler.find_reasonable_step_size(&z, &mut rng);
                dual.restart(sampler.step_size);
            }
        }
        sampler.step_size = dual.final_step_size();
    }
    let warmup_seconds = warmup_start.elapsed().as_secs_f64();

    let sampling_start = Instant::now();
    let n = config.retain_iters;
    let mut chain = RawChain {
        chain_index,
        draws: Vec::with_capacity(n),
        log_density: Vec::with_capacity(n),
        accept_stat: Vec::with_capacity(n),
        tree_depth: Vec::with_capacity(n),
        n_leapfrog: Vec::with_capacity(n),
        divergent: Vec::with_capacity(n),
        energy_error: Vec::with_capacity(n),
        warmup_divergences,
        step_size: sampler.step_size,
        inv_metric: sampler.inv_metric.clone(),
        warmup_seconds,
        sampling_seconds: 0.0,
    };
    for _ in 0..n {
        let (next, info) = sampler.transition(&z, &mut rng);
        z = next;
        chain.draws.push(z.x.clone());
        chain.log_density.push(z.logp);
        chain.accept_stat.push(info.accept_stat);
        chain.tree_depth.push(info.depth);
        chain.n_leapfrog.push(info.n_leapfrog);
        chain.divergent.push(info.divergent);
        chain.energy_error.push(info.max_energy_error);
    }
    chain.sampling_seconds = sampling_start.elapsed().as_secs_f64();
    Ok(chain)
}

/// Post-warmup output of one chain on a posterior target, with draws also
/// mapped to coefficient space.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub raw: RawChain,
    /// `retain_iters × n₂` coefficient draws.
    pub z2_draws: Vec<Vec<f64>>,
    /// `g(z₂) + λ‖z₂‖_q^q` per draw.
    pub log_summary: Vec<f64>,
    pub divergences: usize,
    /// Warmup plus sampling, in seconds.
    pub wall_time: f64,
}

impl ChainDraws {
    pub fn draws(&self) -> &[Vec<f64>] {
        &self.raw.draws
    }

    pub fn z2_column(&self, j: usize) -> Vec<f64> {
        self.z2_draws.iter().map(|r| r[j]).collect()
    }

    /// Number of post-warmup transitions whose energy error exceeded
    /// `threshold`, recounted from the recorded errors.
    pub fn recount_divergences(&self, threshold: f64) -> usize {
        self.raw.energy_error.iter().filter(|e| **e > threshold).count()
    }
}

fn finish_chain(target: &TargetSpec, raw: RawChain) -> Result<ChainDraws> {
    let mut z2_draws = Vec::with_capacity(raw.draws.len());
    let mut log_summary = Vec::with_capacity(raw.draws.len());
    for row in &raw.draws {
        let z2 = target.recover_z2(row)?;
        log_summary.push(target.summary(&z2));
        z2_draws.push(z2);
    }
    let divergences = raw.divergences();
    let wall_time = raw.warmup_seconds + raw.sampling_seconds;
    Ok(ChainDraws { raw, z2_draws, log_summary, divergences, wall_time })
}

/// A single chain on a posterior target, using chain index 0.
pub fn nuts_sample(target: &TargetSpec, config: &SamplerConfig, init: &UnconstrainedState) -> Result<ChainDraws> {
    nuts_sample_indexed(target, config, init, 0)
}

pub fn nuts_sample_indexed(
    target: &TargetSpec,
    config: &SamplerConfig,
    init: &UnconstrainedState,
    chain_index: u64,
) -> Result<ChainDraws> {
    let raw = sample_chain(target, config, Some(init.as_slice()), chain_index)?;
    finish_chain(target, raw)
}

/// Runs one chain per init; chain `i` uses RNG stream `i`. A failing chain
/// yields an `Err` in its slot without affecting the others.
pub fn run_chains(
    target: &TargetSpec,
    config: &SamplerConfig,
    inits: &[UnconstrainedState],
) -> Vec<Result<ChainDraws>> {
    let indexed: Vec<(u64, UnconstrainedState)> =
        inits.iter().cloned().enumerate().map(|(i, s)| (i as u64, s)).collect();
    run_indexed_chains(target, config, &indexed)
}

/// Like [`run_chains`] with explicit logical chain indices.
pub fn run_indexed_chains(
    target: &TargetSpec,
    config: &SamplerConfig,
    inits: &[(u64, UnconstrainedState)],
) -> Vec<Result<ChainDraws>> {
    inits
        .par_iter()
        .map(|(idx, init)| nuts_sample_indexed(target, config, init, *idx))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct StdNormal(usize);

    impl LogDensity for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let mut lp = 0.0;
            for (g, v) in grad.iter_mut().zip(x) {
                *g = -v;
                lp -= 0.5 * v * v;
            }
            lp
        }
    }

    struct Broken;

    impl LogDensity for Broken {
        fn dim(&self) -> usize {
            2
        }
        fn log_density_and_grad(&self, _x: &[f64], grad: &mut [f64]) -> f64 {
            grad.fill(0.0);
            f64::NAN
        }
    }

    #[test]
    fn std_normal_calibration() {
        let config = SamplerConfig { chains: 1, seed: 42, ..Default::default() };
        let chain = sample_chain(&StdNormal(10), &config, None, 0).unwrap();
        let acc = chain.mean_accept_stat();
        assert!((acc - 0.8).abs() < 0.05, "mean accept stat {acc}");
        assert_eq!(chain.divergences(), 0);
        assert_eq!(chain.draws.len(), 1000);
        for j in 0..10 {
            let col = chain.column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 0.2);
        }
    }

    #[test]
    fn deterministic_given_seed_and_index() {
        let config = SamplerConfig { warmup_iters: 200, retain_iters: 100, seed: 9, ..Default::default() };
        let a = sample_chain(&StdNormal(3), &config, Some(&[0.1, 0.2, 0.3]), 4).unwrap();
        let b = sample_chain(&StdNormal(3), &config, Some(&[0.1, 0.2, 0.3]), 4).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.energy_error, b.energy_error);
        let c = sample_chain(&StdNormal(3), &config, Some(&[0.1, 0.2, 0.3]), 5).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn init_failure_after_retries() {
        let config = SamplerConfig::default();
        let err = sample_chain(&Broken, &config, None, 0).unwrap_err();
        assert!(matches!(err, Error::Init(_)));
    }

    #[test]
    fn config_validation() {
        let bad = SamplerConfig { target_accept: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig { retain_iters: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let d = SamplerConfig::default();
        assert_eq!((d.warmup_iters, d.retain_iters, d.max_tree_depth, d.chains), (1000, 1000, 10, 10));
        assert_eq!(d.target_accept, 0.8);
        assert_eq!(d.divergence_threshold, 1000.0);
    }
}
