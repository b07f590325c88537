//! Effective sample size, split R-hat, Gaussian kernel density estimates and
//! per-chain summaries.

use crate::error::{Error, Result};
use crate::hmc::ChainDraws;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Number of grid points used by [`kde`] unless told otherwise.
pub const KDE_GRID: usize = 512;

/// An effective sample size. `degenerate` marks constant input, in which
/// case `value` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssEstimate {
    pub value: f64,
    pub degenerate: bool,
}

fn check_series(x: &[f64], min_len: usize) -> Result<()> {
    if x.len() < min_len {
        return Err(Error::Domain(format!("series needs at least {min_len} values, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series contains non-finite values".into()));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Biased autocovariance at every lag, via zero-padded FFT.
pub fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().take(n).map(|c| c.re / (len as f64 * n as f64)).collect()
}

/// Single-chain ESS with Geyer's initial monotone positive sequence.
///
/// Autocorrelations are summed in consecutive pairs until a pair sum turns
/// negative, and pair sums are forced to be non-increasing.
pub fn ess(x: &[f64]) -> Result<EssEstimate> {
    check_series(x, 10)?;
    let n = x.len();
    let acov = autocovariance(x);
    if !(acov[0] > 0.0) || acov[0] <= 1e-300 {
        return Ok(EssEstimate { value: 0.0, degenerate: true });
    }
    let rho: Vec<f64> = acov.iter().map(|a| a / acov[0]).collect();

    let mut pairs = Vec::new();
    let mut t = 0;
    while t + 1 < n {
        let p = rho[t] + rho[t + 1];
        if p < 0.0 {
            break;
        }
        pairs.push(p);
        t += 2;
    }
    for i in 1..pairs.len() {
        if pairs[i] > pairs[i - 1] {
            pairs[i] = pairs[i - 1];
        }
    }
    let tau = (-1.0 + 2.0 * pairs.iter().sum::<f64>()).max(1.0 / (n as f64).log10());
    Ok(EssEstimate { value: n as f64 / tau, degenerate: false })
}

fn columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = rows.first().map_or(0, |r| r.len());
    (0..dim).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

/// Minimum ESS over the columns of a `draws × params` matrix. Degenerate
/// columns drive the minimum to 0 and set the flag.
pub fn min_ess_over_columns(rows: &[Vec<f64>]) -> Result<EssEstimate> {
    let cols = columns(rows);
    if cols.is_empty() {
        return Err(Error::Domain("no parameters to summarize".into()));
    }
    let mut best = EssEstimate { value: f64::INFINITY, degenerate: false };
    for c in &cols {
        let e = ess(c)?;
        best.degenerate |= e.degenerate;
        best.value = best.value.min(e.value);
    }
    Ok(best)
}

/// Minimum ESS over every sampled (unconstrained) coordinate of a chain.
pub fn min_ess_over_params(draws: &ChainDraws) -> Result<EssEstimate> {
    min_ess_over_columns(draws.draws())
}

/// Minimum ESS over the recovered coefficient draws of a chain.
pub fn min_ess_z2(draws: &ChainDraws) -> Result<EssEstimate> {
    min_ess_over_columns(&draws.z2_draws)
}

/// Split potential scale reduction factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhatEstimate {
    pub value: f64,
    /// Within-chain variance was zero.
    pub degenerate: bool,
}

/// Split R-hat. Each chain is cut into two halves (the middle draw of an
/// odd-length chain is dropped), so a single chain is accepted.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<RhatEstimate> {
    if chains.is_empty() {
        return Err(Error::Domain("split_rhat needs at least one chain".into()));
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(Error::Domain("chains must have equal length".into()));
    }
    for c in chains {
        check_series(c, 4)?;
    }
    let half = len / 2;
    let splits: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[len - half..]]).collect();
    let n = half as f64;
    let means: Vec<f64> = splits.iter().map(|s| mean(s)).collect();
    let w = splits.iter().map(|s| sample_variance(s)).sum::<f64>() / splits.len() as f64;
    let b = n * sample_variance(&means);
    if w <= 0.0 {
        let value = if b > 0.0 { f64::INFINITY } else { 1.0 };
        return Ok(RhatEstimate { value, degenerate: true });
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok(RhatEstimate { value: (var_plus / w).sqrt(), degenerate: false })
}

/// Largest split R-hat over the coefficient coordinates of a set of chains.
pub fn rhat_max_z2(chains: &[&ChainDraws]) -> Result<RhatEstimate> {
    let first = chains.first().ok_or_else(|| Error::Domain("no chains".into()))?;
    let dim = first.z2_draws.first().map_or(0, |r| r.len());
    let mut worst = RhatEstimate { value: f64::NEG_INFINITY, degenerate: false };
    for j in 0..dim {
        let series: Vec<Vec<f64>> = chains.iter().map(|c| c.z2_column(j)).collect();
        let r = split_rhat(&series)?;
        worst.degenerate |= r.degenerate;
        if !(r.value <= worst.value) {
            worst.value = r.value;
        }
    }
    Ok(worst)
}

/// A kernel density estimate on an even grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, `0.9·min(sd, IQR/1.34)·N^{-1/5}`. A zero IQR
/// with positive sd falls back to the sd.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    check_series(values, 2)?;
    let sd = sample_variance(values).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::Degenerate("KDE input has zero spread".into()));
    }
    Ok(0.9 * spread * (values.len() as f64).powf(-0.2))
}

/// Gaussian KDE on `grid` evenly spaced points spanning the data range
/// widened by three bandwidths on each side.
pub fn kde(values: &[f64], grid: usize) -> Result<Kde> {
    if grid < 2 {
        return Err(Error::Domain("KDE grid needs at least 2 points".into()));
    }
    let h = silverman_bandwidth(values)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (grid - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let points: Vec<f64> = (0..grid).map(|i| lo + step * i as f64).collect();
    let density = points
        .iter()
        .map(|&g| {
            values
                .iter()
                .map(|&v| {
                    let u = (g - v) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(Kde { grid: points, density, bandwidth: h })
}

/// Per-chain figures reported by the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSummary {
    pub mean_log_summary: f64,
    /// Raw estimate; may exceed the number of draws for antithetic chains.
    pub min_ess: f64,
    pub ess_degenerate: bool,
    pub rhat_max: f64,
    pub divergences: usize,
    pub wall_time: f64,
}

impl ChainSummary {
    pub fn new(draws: &ChainDraws, rhat_max: f64) -> Result<Self> {
        let ess = min_ess_over_params(draws)?;
        Ok(Self {
            mean_log_summary: mean(&draws.log_summary),
            min_ess: ess.value,
            ess_degenerate: ess.degenerate,
            rhat_max,
            divergences: draws.divergences,
            wall_time: draws.wall_time,
        })
    }

    /// `min_ess` capped at 1.5 times the retained draw count.
    pub fn reported_min_ess(&self, retain_iters: usize) -> f64 {
        self.min_ess.min(1.5 * retain_iters as f64)
    }
}
