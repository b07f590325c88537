//! Gamma–Zolotarev construction of the polynomially tilted positive stable
//! scales that turn an exponential power law into a normal scale mixture.
//!
//! With `ξ ~ gamma((2+q)/(2q), 1)` and `δ` drawn from the Zolotarev density
//! `p(δ|q)` on `(0, π)`, the scale `v = ½ (ξ / k(δ|q))^{(2-q)/q}` makes
//! `z | v ~ N(0, v / λ^{2/q})` marginally exponential power with exponent `q`
//! and rate `λ`. All products of powers of sines are evaluated on the log
//! scale.

use crate::error::{domain, Error, Result};
use crate::exp_power::ExpPowerParams;
use crate::special::{ln_gamma, open_uniform, sample_ln_gamma_unit, std_normal};
use rand::Rng;
use std::f64::consts::PI;

/// Number of cells in the piecewise-constant rejection envelope.
pub const ENVELOPE_CELLS: usize = 1024;
const ENVELOPE_SUBGRID: usize = 16;

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 2.0) {
        return domain(format!("mixture exponent q must lie in (0, 2), got {q}"));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < PI) {
        return domain(format!("angle delta must lie in (0, pi), got {delta}"));
    }
    Ok(())
}

/// `(ln sin(qδ/2), ln sin((2-q)δ/2), ln sin δ)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LnSines {
    pub half_q: f64,
    pub half_comp: f64,
    pub full: f64,
}

impl LnSines {
    pub(crate) fn new(delta: f64, q: f64) -> Self {
        // sin δ through the nearer endpoint keeps precision close to π
        let full = if delta > 0.5 * PI { (PI - delta).sin() } else { delta.sin() };
        Self {
            half_q: (0.5 * q * delta).sin().ln(),
            half_comp: (0.5 * (2.0 - q) * delta).sin().ln(),
            full: full.ln(),
        }
    }

    /// `ln k(δ|q)^{(q-2)/(2q)}`, which is also the unnormalized log
    /// Zolotarev density.
    pub(crate) fn ln_zolotarev_kernel(&self, q: f64) -> f64 {
        -0.5 * self.half_q + (q - 2.0) / (2.0 * q) * self.half_comp + self.full / q
    }

    /// `ln k(δ|q)`.
    pub(crate) fn ln_k(&self, q: f64) -> f64 {
        -q / (q - 2.0) * self.half_q + self.half_comp + 2.0 / (q - 2.0) * self.full
    }
}

/// `k(δ|q) = sin(qδ/2)^{-q/(q-2)} sin((2-q)δ/2) sin(δ)^{2/(q-2)}`.
pub fn k_factor(delta: f64, q: f64) -> Result<f64> {
    Ok(ln_k_factor(delta, q)?.exp())
}

pub fn ln_k_factor(delta: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    check_delta(delta)?;
    Ok(LnSines::new(delta, q).ln_k(q))
}

/// Shape of the gamma law of `ξ`, `(2+q)/(2q)`.
pub fn xi_shape(q: f64) -> f64 {
    (2.0 + q) / (2.0 * q)
}

/// Log of `Γ(3/2) Γ(1/2 + 1/q) / (π Γ(1 + 1/q))`.
pub fn zolotarev_log_norm(q: f64) -> f64 {
    ln_gamma(1.5) + ln_gamma(0.5 + 1.0 / q) - PI.ln() - ln_gamma(1.0 + 1.0 / q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZolotarevParams {
    q: f64,
}

impl ZolotarevParams {
    pub fn new(q: f64) -> Result<Self> {
        check_q(q)?;
        Ok(Self { q })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn log_norm(&self) -> f64 {
        zolotarev_log_norm(self.q)
    }

    pub fn logpdf(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        Ok(self.logpdf_unchecked(delta))
    }

    fn logpdf_unchecked(&self, delta: f64) -> f64 {
        self.log_norm() + LnSines::new(delta, self.q).ln_zolotarev_kernel(self.q)
    }

    /// Density limit as `δ → 0⁺`; the powers of `δ` cancel exactly.
    pub fn density_at_zero(&self) -> f64 {
        let q = self.q;
        (self.log_norm() - 0.5 * (0.5 * q).ln() + (q - 2.0) / (2.0 * q) * (0.5 * (2.0 - q)).ln())
            .exp()
    }

    /// Density on the closed interval, using the boundary limits.
    fn density_closed(&self, delta: f64) -> f64 {
        if delta <= 0.0 {
            self.density_at_zero()
        } else if delta >= PI {
            0.0
        } else {
            self.logpdf_unchecked(delta).exp()
        }
    }
}

pub fn zolotarev_logpdf(delta: f64, q: f64) -> Result<f64> {
    ZolotarevParams::new(q)?.logpdf(delta)
}

/// Rejection sampler for the Zolotarev density beneath a piecewise-constant
/// envelope of per-cell density maxima. Immutable once built.
#[derive(Debug, Clone)]
pub struct ZolotarevSampler {
    params: ZolotarevParams,
    cell_max: Vec<f64>,
    cumulative: Vec<f64>,
    width: f64,
}

impl ZolotarevSampler {
    pub fn new(q: f64) -> Result<Self> {
        let params = ZolotarevParams::new(q)?;
        let width = PI / ENVELOPE_CELLS as f64;
        let fine = ENVELOPE_CELLS * ENVELOPE_SUBGRID;
        let h = PI / fine as f64;
        let grid: Vec<f64> = (0..=fine).map(|j| params.density_closed(j as f64 * h)).collect();
        if let Some(bad) = grid.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "zolotarev density at delta={} for q={q}",
                bad as f64 * h
            )));
        }

        let mut cell_max = vec![0.0f64; ENVELOPE_CELLS];
        for (c, m) in cell_max.iter_mut().enumerate() {
            let lo = c * ENVELOPE_SUBGRID;
            *m = grid[lo..=lo + ENVELOPE_SUBGRID].iter().cloned().fold(0.0, f64::max);
        }
        // Refine every interior local maximum of the fine grid; the density is
        // monotone between them, so cell endpoints bound everything else.
        for j in 1..fine {
            if grid[j] >= grid[j - 1] && grid[j] >= grid[j + 1] {
                let (lo, hi) = ((j - 1) as f64 * h, (j + 1) as f64 * h);
                let peak = golden_max(|d| params.density_closed(d), lo, hi);
                let first = ((lo / width).floor() as usize).min(ENVELOPE_CELLS - 1);
                let last = ((hi / width).ceil() as usize).min(ENVELOPE_CELLS);
                for m in &mut cell_max[first..last] {
                    *m = m.max(peak);
                }
            }
        }

        let mut cumulative = Vec::with_capacity(ENVELOPE_CELLS);
        let mut acc = 0.0;
        for m in &cell_max {
            acc += m * width;
            cumulative.push(acc);
        }
        Ok(Self { params, cell_max, cumulative, width })
    }

    pub fn params(&self) -> ZolotarevParams {
        self.params
    }

    /// Total envelope mass; the expected acceptance rate is its reciprocal.
    pub fn envelope_mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_one_counted(rng).0
    }

    fn sample_one_counted<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, usize) {
        let total = self.envelope_mass();
        let mut proposals = 0;
        loop {
            proposals += 1;
            let target = rng.random::<f64>() * total;
            let cell = self.cumulative.partition_point(|&c| c <= target).min(ENVELOPE_CELLS - 1);
            let delta = (cell as f64 + open_uniform(rng)) * self.width;
            if delta <= 0.0 || delta >= PI {
                continue;
            }
            let bound = self.cell_max[cell];
            if open_uniform(rng) * bound < self.params.logpdf_unchecked(delta).exp() {
                return (delta, proposals);
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// Draws `n` angles and reports the empirical acceptance rate.
    pub fn sample_with_acceptance<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<f64>, f64) {
        let mut proposals = 0;
        let draws = (0..n)
            .map(|_| {
                let (d, p) = self.sample_one_counted(rng);
                proposals += p;
                d
            })
            .collect();
        (draws, n as f64 / proposals as f64)
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd).max(f(a)).max(f(b))
}

pub fn zolotarev_sample<R: Rng + ?Sized>(q: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    Ok(ZolotarevSampler::new(q)?.sample(n, rng))
}

/// Log of `v = ½ ξ^{(2-q)/q} sin(qδ/2)^{-1} sin((2-q)δ/2)^{(q-2)/q} sin(δ)^{2/q}`.
pub fn ln_v_from_latents(xi: f64, delta: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    check_delta(delta)?;
    if !(xi > 0.0 && xi.is_finite()) {
        return domain(format!("xi must be positive and finite, got {xi}"));
    }
    Ok(ln_v_unchecked(xi.ln(), &LnSines::new(delta, q), q))
}

pub(crate) fn ln_v_unchecked(ln_xi: f64, s: &LnSines, q: f64) -> f64 {
    -std::f64::consts::LN_2 + (2.0 - q) / q * ln_xi - s.half_q + (q - 2.0) / q * s.half_comp
        + 2.0 / q * s.full
}

pub fn v_from_latents(xi: f64, delta: f64, q: f64) -> Result<f64> {
    Ok(ln_v_from_latents(xi, delta, q)?.exp())
}

/// Draws `n` polynomially tilted positive stable scales with index `q/2`.
pub fn tilted_stable_sample<R: Rng + ?Sized>(q: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let sampler = ZolotarevSampler::new(q)?;
    Ok(tilted_stable_with(&sampler, n, rng))
}

fn tilted_stable_with<R: Rng + ?Sized>(sampler: &ZolotarevSampler, n: usize, rng: &mut R) -> Vec<f64> {
    let q = sampler.params().q();
    let shape = xi_shape(q);
    (0..n)
        .map(|_| {
            let ln_xi = sample_ln_gamma_unit(shape, rng);
            let delta = sampler.sample_one(rng);
            ln_v_unchecked(ln_xi, &LnSines::new(delta, q), q).exp()
        })
        .collect()
}

/// Exponential power draws composed as `z = N(0,1) · sqrt(v / λ^{2/q})`.
pub fn compose_ep_sample<R: Rng + ?Sized>(
    params: &ExpPowerParams,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    params.require_mixture_range()?;
    let sampler = ZolotarevSampler::new(params.q())?;
    let scale = params.lambda().powf(-2.0 / params.q());
    let v = tilted_stable_with(&sampler, n, rng);
    Ok(v.into_iter().map(|v| std_normal(rng) * (v * scale).sqrt()).collect())
}

/// Per-coordinate latent variables of the mixture parametrizations.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureLatents {
    pub xi: Vec<f64>,
    pub delta: Vec<f64>,
    /// Standardized coefficients; only the non-centered form uses them.
    pub w: Vec<f64>,
}

impl MixtureLatents {
    pub fn new(xi: Vec<f64>, delta: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if delta.len() != xi.len() {
            return Err(Error::Dimension { expected: xi.len(), got: delta.len() });
        }
        if w.len() != xi.len() {
            return Err(Error::Dimension { expected: xi.len(), got: w.len() });
        }
        if let Some(x) = xi.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return domain(format!("xi entries must be positive, got {x}"));
        }
        for &d in &delta {
            check_delta(d)?;
        }
        Ok(Self { xi, delta, w })
    }

    /// Draws `(ξ, δ)` from their priors; `w` is left at zero.
    pub fn draw_prior<R: Rng + ?Sized>(q: f64, n: usize, rng: &mut R) -> Result<Self> {
        let sampler = ZolotarevSampler::new(q)?;
        let shape = xi_shape(q);
        let mut xi = Vec::with_capacity(n);
        let mut delta = Vec::with_capacity(n);
        for _ in 0..n {
            xi.push(crate::special::sample_gamma(shape, 1.0, rng));
            delta.push(sampler.sample_one(rng));
        }
        Ok(Self { xi, delta, w: vec![0.0; n] })
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}
