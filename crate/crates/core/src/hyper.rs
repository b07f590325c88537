//! Marginal-likelihood estimates of the noise and prior variances, and the
//! grid of prior settings built from them.

use crate::error::{domain, Error, Result};
use crate::exp_power::{ep_variance, lambda_for_variance};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::fmt;
use std::str::FromStr;

/// Which quadratic weight the evidence objective uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvidenceForm {
    /// `½ log|Σ| + ½ y'Σ⁻¹y`, the Gaussian negative log marginal likelihood
    /// up to a constant.
    #[default]
    Gaussian,
    /// `½ log|Σ| + y'Σ⁻¹y`. Its minimizer is exactly twice the Gaussian one.
    Unhalved,
}

impl EvidenceForm {
    fn quad_weight(self) -> f64 {
        match self {
            EvidenceForm::Gaussian => 0.5,
            EvidenceForm::Unhalved => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EvidenceForm::Gaussian => "gaussian",
            EvidenceForm::Unhalved => "unhalved",
        }
    }
}

impl fmt::Display for EvidenceForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvidenceForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "half" => Ok(EvidenceForm::Gaussian),
            "unhalved" | "printed" => Ok(EvidenceForm::Unhalved),
            other => Err(Error::Config(format!("unknown evidence form '{other}'"))),
        }
    }
}

/// The evidence objective with the eigendecomposition of `XX'` computed once.
///
/// With `XX' = Σ eᵢuᵢuᵢ'` the objective is
/// `½ Σ log(τ²eᵢ+σ²) + w Σ (uᵢ'y)²/(τ²eᵢ+σ²)`, `w` set by the form.
#[derive(Debug, Clone)]
pub struct Evidence {
    eigenvalues: DVector<f64>,
    projections: DVector<f64>,
    form: EvidenceForm,
    y_sq_mean: f64,
    eig_mean: f64,
}

impl Evidence {
    pub fn new(y: &DVector<f64>, x: &DMatrix<f64>, form: EvidenceForm) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension { expected: y.len(), got: x.nrows() });
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evidence inputs contain non-finite values".into()));
        }
        let gram = x * x.transpose();
        let eig = SymmetricEigen::new(gram);
        // XX' is positive semidefinite; clip rounding noise below zero
        let eigenvalues = eig.eigenvalues.map(|e| e.max(0.0));
        let projections = (eig.eigenvectors.transpose() * y).map(|p| p * p);
        let m = y.len() as f64;
        Ok(Self {
            eig_mean: eigenvalues.sum() / m,
            y_sq_mean: y.norm_squared() / m,
            eigenvalues,
            projections,
            form,
        })
    }

    pub fn m(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn form(&self) -> EvidenceForm {
        self.form
    }

    pub fn value(&self, sigma2: f64, tau2: f64) -> f64 {
        let w = self.form.quad_weight();
        self.eigenvalues
            .iter()
            .zip(self.projections.iter())
            .map(|(e, p)| {
                let s = tau2 * e + sigma2;
                0.5 * s.ln() + w * p / s
            })
            .sum()
    }
}

/// Evaluates the evidence objective at `(sigma2, tau2)`.
pub fn evidence_objective(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    sigma2: f64,
    tau2: f64,
    form: EvidenceForm,
) -> Result<f64> {
    if !(sigma2 > 0.0 && tau2 > 0.0) {
        return domain(format!("variances must be positive, got sigma2={sigma2}, tau2={tau2}"));
    }
    let v = Evidence::new(y, x, form)?.value(sigma2, tau2);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("evidence objective at sigma2={sigma2}, tau2={tau2}")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub f_tol: f64,
    pub max_iter: usize,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { f_tol: 1e-10, max_iter: 20_000, initial_step: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder–Mead simplex minimization. Converged when the spread of function
/// values over the simplex falls below `f_tol`.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], opts: NelderMeadOptions) -> NelderMeadResult {
    let n = start.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), eval(start)));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best.is_finite() && (worst - best).abs() <= opts.f_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (w - c)).collect()
        };

        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x0 = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&x0) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            *v = eval(x);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult { x, value, iterations, converged }
}

/// One optimizer run of [`fit_sigma2_tau2`].
#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    pub start: (f64, f64),
    pub start_value: f64,
    pub result: NelderMeadResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceFit {
    pub sigma2: f64,
    pub tau2: f64,
    pub objective: f64,
    /// The optimum sits against the search box in log space, e.g. `y = 0`
    /// drives both variances toward zero.
    pub at_boundary: bool,
    pub starts: Vec<StartOutcome>,
}

/// Half-width of the log-variance search box around the data scale.
const LOG_BOX: f64 = 30.0;

/// Minimizes the evidence objective over `(log σ², log τ²)` from a 3×3 grid
/// of starts spread around the data scale, returning the best optimum.
pub fn fit_sigma2_tau2(y: &DVector<f64>, x: &DMatrix<f64>, form: EvidenceForm) -> Result<EvidenceFit> {
    if y.len() < 2 {
        return domain(format!("need at least 2 observations, got {}", y.len()));
    }
    let ev = Evidence::new(y, x, form)?;
    let y_scale = if ev.y_sq_mean > 0.0 { ev.y_sq_mean } else { 1.0 };
    let x_scale = if ev.eig_mean > 0.0 { ev.eig_mean } else { 1.0 };
    let center = [y_scale.ln(), (y_scale / x_scale).ln()];
    let in_box = |p: &[f64]| p.iter().zip(&center).all(|(v, c)| (v - c).abs() <= LOG_BOX);
    let objective = |p: &[f64]| {
        if !in_box(p) {
            return f64::INFINITY;
        }
        ev.value(p[0].exp(), p[1].exp())
    };

    let offsets = [-std::f64::consts::LN_10, 0.0, std::f64::consts::LN_10];
    let mut starts = Vec::with_capacity(9);
    for a in offsets {
        for b in offsets {
            let s = [center[0] + a, center[1] + b];
            let mut result = nelder_mead(objective, &s, NelderMeadOptions::default());
            if result.converged {
                // a restart guards against a collapsed simplex
                result = nelder_mead(objective, &result.x, NelderMeadOptions::default());
            }
            starts.push(StartOutcome { start: (s[0].exp(), s[1].exp()), start_value: objective(&s), result });
        }
    }

    let best = starts
        .iter()
        .filter(|s| s.result.converged && s.result.value.is_finite())
        .min_by(|a, b| a.result.value.total_cmp(&b.result.value))
        .ok_or_else(|| {
            let detail: Vec<String> = starts
                .iter()
                .map(|s| format!("start ({:.3e},{:.3e}) -> f={} after {} iters", s.start.0, s.start.1, s.result.value, s.result.iterations))
                .collect();
            Error::Optimization(format!("no Nelder-Mead start converged: {}", detail.join("; ")))
        })?;
    let p = &best.result.x;
    let at_boundary = p.iter().zip(&center).any(|(v, c)| (v - c).abs() > LOG_BOX - 1.0);
    Ok(EvidenceFit {
        sigma2: p[0].exp(),
        tau2: p[1].exp(),
        objective: best.result.value,
        at_boundary,
        starts,
    })
}

/// One setting `(σ², λ, q)` of the posterior experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPoint {
    pub sigma2: f64,
    pub lambda: f64,
    pub q: f64,
}

impl ThetaPoint {
    pub fn new(sigma2: f64, lambda: f64, q: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) || !(lambda > 0.0 && lambda.is_finite()) {
            return domain(format!("sigma2 and lambda must be positive, got {sigma2}, {lambda}"));
        }
        if !(q > 0.0 && q < 2.0) {
            return domain(format!("q must lie in (0,2), got {q}"));
        }
        Ok(Self { sigma2, lambda, q })
    }

    pub fn prior_variance(&self) -> f64 {
        ep_variance(self.q, self.lambda).unwrap_or(f64::NAN)
    }
}

/// The default exponents `q = 2k/10`, `k = 1..9`.
pub fn default_q_grid() -> Vec<f64> {
    (1..=9).map(|k| 2.0 * k as f64 / 10.0).collect()
}

/// Nine points `q = 2k/10` with λ chosen so the prior variance is `tau2_hat`.
pub fn build_theta_grid(sigma2_hat: f64, tau2_hat: f64) -> Result<Vec<ThetaPoint>> {
    build_theta_grid_for(sigma2_hat, tau2_hat, &default_q_grid())
}

/// Like [`build_theta_grid`] for an arbitrary list of exponents.
pub fn build_theta_grid_for(sigma2_hat: f64, tau2_hat: f64, qs: &[f64]) -> Result<Vec<ThetaPoint>> {
    if !(sigma2_hat > 0.0 && tau2_hat > 0.0) {
        return domain(format!("variances must be positive, got {sigma2_hat}, {tau2_hat}"));
    }
    qs.iter()
        .map(|&q| ThetaPoint::new(sigma2_hat, lambda_for_variance(q, tau2_hat)?, q))
        .collect()
}
