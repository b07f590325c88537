#![allow(dead_code)]

use epmix::diagnostics::ess;
use epmix::exp_power::lambda_for_variance;
use epmix::hmc::{run_chains, ChainDraws, SamplerConfig};
use epmix::quadrature::{integrate_real_line, integrate_upper, QuadOptions};
use epmix::special::{logit, std_normal};
use epmix::targets::{Parametrization, RegressionProblem, TargetSpec};
use epmix::{ExpPowerParams, MixtureLatents};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian design with `y = X z + e`.
pub fn regression(m: usize, n: usize, z: &[f64], sigma2: f64, seed: u64) -> RegressionProblem {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(m, n, |_, _| std_normal(&mut r));
    let zt = DVector::from_column_slice(z);
    let e = DVector::from_fn(m, |_, _| sigma2.sqrt() * std_normal(&mut r));
    RegressionProblem::new(&x * zt + e, x, sigma2).unwrap()
}

/// Uniform draw on `(lo, hi)` avoiding `(-gap, gap)`.
pub fn away_from_zero<R: Rng>(r: &mut R, lo: f64, hi: f64, gap: f64) -> f64 {
    loop {
        let v = r.random_range(lo..hi);
        if v.abs() > gap {
            return v;
        }
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// A joint prior draw of `(w, ξ, δ)` conditioned on the coefficients
/// `z = c(ξ,δ)·w` lying in `[-3, 3]`, mapped to the state of `spec`.
pub fn joint_prior_point<R: Rng>(spec: &TargetSpec, q: f64, n: usize, r: &mut R) -> Vec<f64> {
    let nc = TargetSpec::new(spec.smooth().clone(), spec.ep(), Parametrization::NonCentered).unwrap();
    loop {
        let lat = MixtureLatents::draw_prior(q, n, r).unwrap();
        let mut state: Vec<f64> = (0..n).map(|_| std_normal(r)).collect();
        state.extend(lat.xi.iter().map(|x| x.ln()));
        state.extend(lat.delta.iter().map(|d| logit(d / std::f64::consts::PI)));
        let z2 = nc.recover_z2(&state).unwrap();
        if z2.iter().any(|z| z.abs() > 3.0) {
            continue;
        }
        if spec.parametrization() == Parametrization::Centered {
            state[..n].copy_from_slice(&z2);
        }
        return state;
    }
}

pub const QS: [f64; 5] = [0.2, 0.6, 1.0, 1.4, 1.8];

/// The prior variance is fixed at 1, as on the experiment grid.
///
/// Largest `|analytic - fd| / max(|analytic|, 1)` over 100 random interior
/// points, using central differences with step `1e-5`.
pub fn max_gradient_error(p: Parametrization, q: f64, seed: u64) -> f64 {
    let n = 4;
    let prob = regression(25, n, &[0.8, -0.4, 0.0, 0.2], 0.7, seed);
    let spec = TargetSpec::regression(prob, ExpPowerParams::new(q, lambda_for_variance(q, 1.0).unwrap()).unwrap(), p).unwrap();
    let mut r = rng(seed + 100);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = match p {
            Parametrization::Naive => (0..n).map(|_| away_from_zero(&mut r, -2.0, 2.0, 0.1)).collect(),
            _ => joint_prior_point(&spec, q, n, &mut r),
        };
        let mut grad = vec![0.0; x.len()];
        spec.log_density_and_grad(&x, &mut grad);
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (spec.log_density(&xp) - spec.log_density(&xm)) / (2.0 * h);
            let err = (grad[i] - fd).abs() / grad[i].abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

pub fn opts(rel: f64) -> QuadOptions {
    QuadOptions { abs_tol: 0.0, rel_tol: rel, max_intervals: 2000 }
}

pub fn one_dim_problem() -> RegressionProblem {
    RegressionProblem::from_rows(vec![0.7, -0.3, 1.2], &[vec![1.0], vec![0.5], vec![2.0]], 1.0).unwrap()
}

pub fn naive_evidence(spec: &TargetSpec) -> f64 {
    let f = |z: f64| spec.log_density(&[z]).exp();
    // split at the kink of |z|^q
    integrate_upper(|z| f(-z), 0.0, opts(1e-10)).value + integrate_upper(f, 0.0, opts(1e-10)).value
}

pub fn latent_evidence(spec: &TargetSpec) -> f64 {
    integrate_real_line(
        |t| {
            integrate_real_line(
                |u| integrate_real_line(|a| spec.log_density(&[a, u, t]).exp(), opts(1e-9)).value,
                opts(1e-8),
            )
            .value
        },
        opts(1e-7),
    )
    .value
}

/// Starting state with coefficients uniform on `(-1, 1)` and latents drawn
/// from their priors.
pub fn init_for(target: &TargetSpec, seed: u64) -> epmix::targets::UnconstrainedState {
    let mut r = rng(seed);
    let n = target.n_coef();
    let z: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let latents = if target.parametrization().uses_latents() {
        Some(MixtureLatents::draw_prior(target.ep().q(), n, &mut r).unwrap())
    } else {
        None
    };
    target.to_unconstrained(&z, latents.as_ref()).unwrap()
}

fn total_ess(chains: &[ChainDraws], f: impl Fn(&ChainDraws) -> Vec<f64>) -> f64 {
    chains.iter().map(|c| ess(&f(c)).unwrap().value).sum()
}

/// Largest standardized errors of the NUTS posterior against the
/// closed-form ridge posterior, in Monte Carlo standard errors.
#[derive(Debug, Clone, Copy)]
pub struct RidgeCheck {
    pub worst_mean: f64,
    pub worst_variance: f64,
}

/// Naive target at `q = 2` on a synthetic `m = 50`, `n₂ = 8` regression,
/// 10 chains of 1000 retained draws.
pub fn ridge_check(seed: u64) -> RidgeCheck {
    let truth = [1.0, -0.5, 0.0, 0.25, 0.8, 0.0, -1.2, 0.4];
    let problem = regression(50, 8, &truth, 1.0, 11);
    let lambda = 0.5;
    let (post_mean, post_cov) = problem.ridge_posterior(lambda).unwrap();
    let ep = ExpPowerParams::new(2.0, lambda).unwrap();
    let target = TargetSpec::regression(problem, ep, Parametrization::Naive).unwrap();
    let cfg = SamplerConfig { chains: 10, seed, ..SamplerConfig::default() };
    let inits: Vec<_> = (0..10).map(|c| init_for(&target, 100 + c)).collect();
    let chains: Vec<ChainDraws> = run_chains(&target, &cfg, &inits).into_iter().map(|c| c.unwrap()).collect();

    let mut out = RidgeCheck { worst_mean: 0.0, worst_variance: 0.0 };
    for j in 0..8 {
        let all: Vec<f64> = chains.iter().flat_map(|c| c.z2_column(j)).collect();
        let mu = mean(&all);
        let var = variance(&all);
        let mcse_mean = (var / total_ess(&chains, |c| c.z2_column(j))).sqrt();
        out.worst_mean = out.worst_mean.max((mu - post_mean[j]).abs() / mcse_mean);
        let sq = |c: &ChainDraws| c.z2_column(j).iter().map(|v| (v - mu) * (v - mu)).collect::<Vec<_>>();
        let sq_all: Vec<f64> = chains.iter().flat_map(&sq).collect();
        let mcse_var = (variance(&sq_all) / total_ess(&chains, sq)).sqrt();
        out.worst_variance = out.worst_variance.max((var - post_cov[(j, j)]).abs() / mcse_var);
    }
    out
}
