//! Log posterior targets for the three parametrizations of a bridge prior.
//!
//! * naive: `-g(z) - λ‖z‖_q^q`, non-differentiable at zero when `q ≤ 1`;
//! * centered: `z` sampled jointly with the mixture latents `(ξ, δ)`;
//! * non-centered: standardized `w` with `z = c(ξ, δ) ∘ w`.
//!
//! Mixture latents are moved to unconstrained coordinates through
//! `ξ = exp(u)` and `δ = π · logistic(t)`; the log-Jacobians of both maps are
//! part of the returned log density. Every target is normalized so that it
//! integrates to the same evidence `∫ exp(-g(z)) p(z) dz`.

use crate::error::{domain, Error, Result};
use crate::exp_power::ExpPowerParams;
use crate::mixture::{LnSines, MixtureLatents};
use crate::special::{ln_gamma, ln_logistic, logistic, logit};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// The smooth part `g(z)` of the negative log posterior.
pub trait SmoothTerm: Send + Sync + fmt::Debug {
    fn n_coef(&self) -> usize;

    /// Returns `g(z)` and writes `∇g(z)` into `grad`.
    fn value_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64;

    fn value(&self, z: &[f64]) -> f64 {
        let mut scratch = vec![0.0; z.len()];
        self.value_and_grad(z, &mut scratch)
    }
}

/// Gaussian linear regression `y = X z + e`, `e ~ N(0, σ² I)`, with
/// `g(z) = ‖y - X z‖² / (2σ²)`.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    y: DVector<f64>,
    x: DMatrix<f64>,
    sigma2: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl RegressionProblem {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        if y.is_empty() || x.ncols() == 0 {
            return domain("regression needs m >= 1 observations and n >= 1 coefficients");
        }
        if x.nrows() != y.len() {
            return Err(Error::Dimension { expected: y.len(), got: x.nrows() });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return domain("design and response must be finite");
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return domain(format!("noise variance must be positive, got {sigma2}"));
        }
        let gram = x.tr_mul(&x);
        let xty = x.tr_mul(&y);
        let yty = y.dot(&y);
        Ok(Self { y, x, sigma2, gram, xty, yty })
    }

    /// Builds from row-major data.
    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>], sigma2: f64) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension { expected: n, got: r.len() });
        }
        let x = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
        Self::new(DVector::from_vec(y), x, sigma2)
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    /// `‖y - X z‖²`, computed from the residual directly.
    pub fn residual_sq(&self, z: &[f64]) -> f64 {
        let z = DVector::from_column_slice(z);
        (&self.y - &self.x * z).norm_squared()
    }

    /// Closed-form posterior `(mean, covariance)` under the Gaussian prior
    /// `exp(-λ‖z‖²)`; the `q = 2` reference case.
    pub fn ridge_posterior(&self, lambda: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.n_coef();
        let precision = &self.gram / self.sigma2 + DMatrix::identity(n, n) * (2.0 * lambda);
        let chol = precision
            .cholesky()
            .ok_or_else(|| Error::Degenerate("ridge precision not positive definite".into()))?;
        let mean = chol.solve(&(&self.xty / self.sigma2));
        Ok((mean, chol.inverse()))
    }
}

impl SmoothTerm for RegressionProblem {
    fn n_coef(&self) -> usize {
        self.x.ncols()
    }

    fn value_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let n = z.len();
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..n {
            let mut gz = 0.0;
            for j in 0..n {
                gz += self.gram[(i, j)] * z[j];
            }
            quad += z[i] * gz;
            lin += z[i] * self.xty[i];
            grad[i] = (gz - self.xty[i]) / self.sigma2;
        }
        (self.yty - 2.0 * lin + quad).max(0.0) / (2.0 * self.sigma2)
    }
}

/// `g ≡ 0`: the prior alone.
#[derive(Debug, Clone)]
pub struct PriorOnly {
    pub n: usize,
}

impl SmoothTerm for PriorOnly {
    fn n_coef(&self) -> usize {
        self.n
    }

    fn value_and_grad(&self, _z: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parametrization {
    Naive,
    Centered,
    NonCentered,
}

impl Parametrization {
    pub const ALL: [Parametrization; 3] =
        [Parametrization::Naive, Parametrization::Centered, Parametrization::NonCentered];

    pub fn name(&self) -> &'static str {
        match self {
            Parametrization::Naive => "naive",
            Parametrization::Centered => "centered",
            Parametrization::NonCentered => "noncentered",
        }
    }

    pub fn uses_latents(&self) -> bool {
        !matches!(self, Parametrization::Naive)
    }
}

impl fmt::Display for Parametrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Parametrization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "naive" => Ok(Parametrization::Naive),
            "centered" | "centred" => Ok(Parametrization::Centered),
            "noncentered" | "noncentred" => Ok(Parametrization::NonCentered),
            other => Err(Error::Config(format!("unknown parametrization '{other}'"))),
        }
    }
}

/// A point in the sampler's coordinates. Naive: `z`; centered: `(z, ln ξ,
/// logit(δ/π))`; non-centered: `(w, ln ξ, logit(δ/π))`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedState(Vec<f64>);

impl UnconstrainedState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("unconstrained state has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Angle `δ = π·logistic(t)` carried with its complement so that sines stay
/// accurate near both ends of `(0, π)`.
#[derive(Debug, Clone, Copy)]
struct Angle {
    delta: f64,
    sigma: f64,
    sigma_comp: f64,
    ln_delta: f64,
    /// `ln` of the distance to the nearer endpoint of `(0, π)`.
    ln_edge: f64,
}

/// `ln sin(c·x)` given `ln x`, exact also when `x` underflows.
fn ln_sin_scaled(c: f64, x: f64, ln_x: f64) -> f64 {
    let y = c * x;
    if y < 1e-4 {
        c.ln() + ln_x - y * y / 6.0
    } else {
        y.sin().ln()
    }
}

impl Angle {
    fn from_logit(t: f64) -> Self {
        let sigma = logistic(t);
        let sigma_comp = logistic(-t);
        Self {
            delta: PI * sigma,
            sigma,
            sigma_comp,
            ln_delta: PI.ln() + ln_logistic(t),
            ln_edge: PI.ln() + ln_logistic(-t.abs()),
        }
    }

    fn sines(&self, q: f64) -> LnSines {
        let edge = PI * self.sigma.min(self.sigma_comp);
        LnSines {
            half_q: ln_sin_scaled(0.5 * q, self.delta, self.ln_delta),
            half_comp: ln_sin_scaled(0.5 * (2.0 - q), self.delta, self.ln_delta),
            full: ln_sin_scaled(1.0, edge, self.ln_edge),
        }
    }

    /// `cot(δ)` with `sin δ` taken through the nearer endpoint.
    fn cot_full(&self) -> f64 {
        self.delta.cos() / (PI * self.sigma.min(self.sigma_comp)).sin()
    }

    fn d_delta_dt(&self) -> f64 {
        PI * self.sigma * self.sigma_comp
    }

    fn ln_jacobian(t: f64) -> f64 {
        PI.ln() + ln_logistic(t) + ln_logistic(-t)
    }

    fn d_ln_jacobian(&self) -> f64 {
        self.sigma_comp - self.sigma
    }

    /// Derivative of the log Zolotarev kernel in the logit `t`, using its
    /// limits 0 and `-1/q` where δ rounds to 0 or π.
    fn d_kernel_dt(&self, q: f64) -> f64 {
        if self.sigma == 0.0 {
            0.0
        } else if self.sigma_comp == 0.0 {
            -1.0 / q
        } else {
            self.d_kernel(q) * self.d_delta_dt()
        }
    }

    /// Derivative of the log Zolotarev kernel `ln k^{(q-2)/(2q)}` in δ.
    fn d_kernel(&self, q: f64) -> f64 {
        let cot = |x: f64| x.cos() / x.sin();
        -0.25 * q * cot(0.5 * q * self.delta)
            + (q - 2.0) / (2.0 * q) * 0.5 * (2.0 - q) * cot(0.5 * (2.0 - q) * self.delta)
            + self.cot_full() / q
    }
}

/// A posterior target: smooth term, bridge prior and parametrization.
#[derive(Debug, Clone)]
pub struct TargetSpec {
    smooth: Arc<dyn SmoothTerm>,
    ep: ExpPowerParams,
    parametrization: Parametrization,
}

impl TargetSpec {
    pub fn new(
        smooth: Arc<dyn SmoothTerm>,
        ep: ExpPowerParams,
        parametrization: Parametrization,
    ) -> Result<Self> {
        if parametrization.uses_latents() {
            ep.require_mixture_range()?;
        }
        if smooth.n_coef() == 0 {
            return domain("target needs at least one coefficient");
        }
        Ok(Self { smooth, ep, parametrization })
    }

    pub fn regression(
        problem: RegressionProblem,
        ep: ExpPowerParams,
        parametrization: Parametrization,
    ) -> Result<Self> {
        Self::new(Arc::new(problem), ep, parametrization)
    }

    pub fn ep(&self) -> ExpPowerParams {
        self.ep
    }

    pub fn parametrization(&self) -> Parametrization {
        self.parametrization
    }

    pub fn smooth(&self) -> &Arc<dyn SmoothTerm> {
        &self.smooth
    }

    pub fn n_coef(&self) -> usize {
        self.smooth.n_coef()
    }

    /// Dimension of the unconstrained state.
    pub fn dim(&self) -> usize {
        if self.parametrization.uses_latents() {
            3 * self.n_coef()
        } else {
            self.n_coef()
        }
    }

    fn check_dim(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: state.len() });
        }
        Ok(())
    }

    /// Constant making each target integrate to the same evidence.
    fn log_const(&self) -> f64 {
        let q = self.ep.q();
        let n = self.n_coef() as f64;
        match self.parametrization {
            Parametrization::Naive => n * self.ep.log_norm_const(),
            Parametrization::Centered => {
                n * (q.ln() + self.ep.lambda().ln() / q - LN_2 - PI.ln() - ln_gamma(1.0 / q))
            }
            Parametrization::NonCentered => {
                n * (q.ln() - 1.5 * LN_2 - PI.ln() - ln_gamma(1.0 / q))
            }
        }
    }

    /// Log scale `ln c` mapping `w` to `z`: `z = c w` with
    /// `c = 2^{-1/2} λ^{-1/q} ξ^{(2-q)/(2q)} k(δ|q)^{(q-2)/(2q)}`.
    fn ln_noncentered_scale(&self, u: f64, s: &LnSines) -> f64 {
        let q = self.ep.q();
        -0.5 * LN_2 - self.ep.lambda().ln() / q + (2.0 - q) / (2.0 * q) * u + s.ln_zolotarev_kernel(q)
    }

    /// Log density in unconstrained coordinates; writes its gradient into
    /// `grad`. Overflow shows up as a non-finite return value.
    pub fn log_density_and_grad(&self, state: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(state.len(), self.dim());
        debug_assert_eq!(grad.len(), self.dim());
        let n = self.n_coef();
        let q = self.ep.q();
        let lambda = self.ep.lambda();
        match self.parametrization {
            Parametrization::Naive => {
                let g = self.smooth.value_and_grad(state, grad);
                let mut penalty = 0.0;
                for i in 0..n {
                    let a = state[i].abs();
                    penalty += a.powf(q);
                    // subgradient zero at the kink
                    let d = if a > 0.0 { lambda * q * a.powf(q - 1.0) * state[i].signum() } else { 0.0 };
                    grad[i] = -grad[i] - d;
                }
                -g - lambda * penalty + self.log_const()
            }
            Parametrization::Centered => {
                let (z, rest) = state.split_at(n);
                let (u, t) = rest.split_at(n);
                let g = self.smooth.value_and_grad(z, &mut grad[..n]);
                let scale = lambda.powf(2.0 / q);
                let mut total = -g + self.log_const();
                for i in 0..n {
                    let angle = Angle::from_logit(t[i]);
                    let s = angle.sines(q);
                    let ln_kernel = s.ln_zolotarev_kernel(q);
                    // ln of ξ^{(q-2)/q} sin(qδ/2) sin((2-q)δ/2)^{(2-q)/q} sin(δ)^{-2/q}
                    let ln_a = (q - 2.0) / q * u[i] - 2.0 * ln_kernel;
                    // zero coefficients contribute nothing even when the precision overflows
                    let (quad, dquad_dz) = if z[i] == 0.0 {
                        (0.0, 0.0)
                    } else {
                        let quad = (scale.ln() + ln_a + 2.0 * z[i].abs().ln()).exp();
                        (quad, 2.0 * quad / z[i])
                    };
                    let xi = u[i].exp();
                    total += -quad - xi + u[i] + Angle::ln_jacobian(t[i]);

                    grad[i] = -grad[i] - dquad_dz;
                    grad[n + i] = -(q - 2.0) / q * quad - xi + 1.0;
                    let d_angle = if quad == 0.0 { 0.0 } else { 2.0 * quad * angle.d_kernel_dt(q) };
                    grad[2 * n + i] = d_angle + angle.d_ln_jacobian();
                }
                total
            }
            Parametrization::NonCentered => {
                let (w, rest) = state.split_at(n);
                let (u, t) = rest.split_at(n);
                let mut z = vec![0.0; n];
                let mut angles = Vec::with_capacity(n);
                let mut prior = self.log_const();
                let shape_term = (2.0 - q) / (2.0 * q);
                for i in 0..n {
                    let angle = Angle::from_logit(t[i]);
                    let s = angle.sines(q);
                    z[i] = if w[i] == 0.0 { 0.0 } else { self.ln_noncentered_scale(u[i], &s).exp() * w[i] };
                    prior += -0.5 * w[i] * w[i] + (shape_term + 1.0) * u[i] - u[i].exp()
                        + s.ln_zolotarev_kernel(q)
                        + Angle::ln_jacobian(t[i]);
                    angles.push(angle);
                }
                let mut grad_z = vec![0.0; n];
                let g = self.smooth.value_and_grad(&z, &mut grad_z);
                for i in 0..n {
                    let gz = -grad_z[i];
                    let angle = &angles[i];
                    let c = if w[i] != 0.0 { z[i] / w[i] } else { self.scale_at(u[i], angle) };
                    grad[i] = gz * c - w[i];
                    grad[n + i] = gz * z[i] * shape_term + shape_term + 1.0 - u[i].exp();
                    grad[2 * n + i] = (gz * z[i] + 1.0) * angle.d_kernel_dt(q) + angle.d_ln_jacobian();
                }
                prior - g
            }
        }
    }

    fn scale_at(&self, u: f64, angle: &Angle) -> f64 {
        self.ln_noncentered_scale(u, &angle.sines(self.ep.q())).exp()
    }

    pub fn log_density(&self, state: &[f64]) -> f64 {
        let mut scratch = vec![0.0; state.len()];
        self.log_density_and_grad(state, &mut scratch)
    }

    /// Coefficients `z₂` implied by an unconstrained state.
    pub fn recover_z2(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(state)?;
        let n = self.n_coef();
        match self.parametrization {
            Parametrization::Naive | Parametrization::Centered => Ok(state[..n].to_vec()),
            Parametrization::NonCentered => Ok((0..n)
                .map(|i| self.scale_at(state[n + i], &Angle::from_logit(state[2 * n + i])) * state[i])
                .collect()),
        }
    }

    /// Latents `(ξ, δ, w)` of a mixture-parametrized state.
    pub fn latents(&self, state: &[f64]) -> Result<Option<MixtureLatents>> {
        self.check_dim(state)?;
        if !self.parametrization.uses_latents() {
            return Ok(None);
        }
        let n = self.n_coef();
        let xi = state[n..2 * n].iter().map(|u| u.exp()).collect();
        let delta = state[2 * n..].iter().map(|t| PI * logistic(*t)).collect();
        let w = match self.parametrization {
            Parametrization::NonCentered => state[..n].to_vec(),
            _ => {
                let z = &state[..n];
                (0..n)
                    .map(|i| z[i] / self.scale_at(state[n + i], &Angle::from_logit(state[2 * n + i])))
                    .collect()
            }
        };
        Ok(Some(MixtureLatents { xi, delta, w }))
    }

    /// Unconstrained state reproducing coefficients `z2`; mixture forms need
    /// `(ξ, δ)` from `latents` (their `w` is ignored and recomputed).
    pub fn to_unconstrained(&self, z2: &[f64], latents: Option<&MixtureLatents>) -> Result<UnconstrainedState> {
        let n = self.n_coef();
        if z2.len() != n {
            return Err(Error::Dimension { expected: n, got: z2.len() });
        }
        if !self.parametrization.uses_latents() {
            return UnconstrainedState::new(z2.to_vec());
        }
        let lat = latents.ok_or_else(|| Error::Domain("mixture parametrization needs latents".into()))?;
        if lat.len() != n {
            return Err(Error::Dimension { expected: n, got: lat.len() });
        }
        let mut out = Vec::with_capacity(3 * n);
        let u: Vec<f64> = lat.xi.iter().map(|x| x.ln()).collect();
        let t: Vec<f64> = lat.delta.iter().map(|d| logit(d / PI)).collect();
        match self.parametrization {
            Parametrization::Centered => out.extend_from_slice(z2),
            _ => {
                for i in 0..n {
                    out.push(z2[i] / self.scale_at(u[i], &Angle::from_logit(t[i])));
                }
            }
        }
        out.extend(u);
        out.extend(t);
        UnconstrainedState::new(out)
    }

    /// `g(z₂) + λ‖z₂‖_q^q`.
    pub fn summary(&self, z2: &[f64]) -> f64 {
        self.smooth.value(z2) + self.ep.penalty(z2)
    }
}

/// Log target and gradient; a non-finite value is reported as an error.
pub fn log_target_and_grad(spec: &TargetSpec, state: &UnconstrainedState) -> Result<(f64, Vec<f64>)> {
    spec.check_dim(state.as_slice())?;
    let mut grad = vec![0.0; spec.dim()];
    let value = spec.log_density_and_grad(state.as_slice(), &mut grad);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("log target {value} at state {:?}", state.as_slice())));
    }
    Ok((value, grad))
}

pub fn recover_z2(spec: &TargetSpec, state: &UnconstrainedState) -> Result<Vec<f64>> {
    spec.recover_z2(state.as_slice())
}

/// `‖y - X z₂‖² / (2σ²) + λ‖z₂‖_q^q`, the scalar tracked across chains.
pub fn log_unnorm_posterior_summary(problem: &RegressionProblem, ep: &ExpPowerParams, z2: &[f64]) -> Result<f64> {
    if z2.len() != problem.n_coef() {
        return Err(Error::Dimension { expected: problem.n_coef(), got: z2.len() });
    }
    Ok(problem.residual_sq(z2) / (2.0 * problem.sigma2()) + ep.penalty(z2))
}
