//! The exponential power (generalized normal) law with density proportional
//! to `exp(-λ|z|^q)`.

use crate::error::{domain, Result};
use crate::special::{ln_gamma, open_uniform, sample_ln_gamma_unit};
use rand::Rng;

/// Exponent `q` and rate `λ` of `exp(-λ‖z‖_q^q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpPowerParams {
    q: f64,
    lambda: f64,
}

impl ExpPowerParams {
    /// Accepts `0 < q ≤ 2` and `λ > 0`.
    pub fn new(q: f64, lambda: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 2.0) {
            return domain(format!("exponent q must lie in (0, 2], got {q}"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return domain(format!("rate lambda must be positive and finite, got {lambda}"));
        }
        Ok(Self { q, lambda })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Rejects `q = 2`, where the gamma–Zolotarev mixture degenerates.
    pub fn require_mixture_range(&self) -> Result<()> {
        if self.q >= 2.0 {
            return domain(format!("mixture representation needs q < 2, got {}", self.q));
        }
        Ok(())
    }

    /// Per-coordinate log normalizing constant `log(q λ^{1/q} / (2Γ(1/q)))`.
    pub fn log_norm_const(&self) -> f64 {
        self.q.ln() + self.lambda.ln() / self.q - std::f64::consts::LN_2 - ln_gamma(1.0 / self.q)
    }

    /// `λ Σ|zᵢ|^q`.
    pub fn penalty(&self, z: &[f64]) -> f64 {
        self.lambda * z.iter().map(|x| x.abs().powf(self.q)).sum::<f64>()
    }

    /// Normalized log density of i.i.d. coordinates.
    pub fn logpdf(&self, z: &[f64]) -> f64 {
        z.len() as f64 * self.log_norm_const() - self.penalty(z)
    }

    pub fn variance(&self) -> f64 {
        (ln_gamma(3.0 / self.q) - ln_gamma(1.0 / self.q)).exp() * self.lambda.powf(-2.0 / self.q)
    }

    /// Direct sampler: `|z|^q ~ gamma(1/q, rate λ)` with a random sign.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let ln_g = sample_ln_gamma_unit(1.0 / self.q, rng) - self.lambda.ln();
                let magnitude = (ln_g / self.q).exp();
                if open_uniform(rng) < 0.5 {
                    -magnitude
                } else {
                    magnitude
                }
            })
            .collect()
    }
}

pub fn ep_log_norm_const(q: f64, lambda: f64) -> Result<f64> {
    Ok(ExpPowerParams::new(q, lambda)?.log_norm_const())
}

pub fn ep_logpdf(q: f64, lambda: f64, z: &[f64]) -> Result<f64> {
    Ok(ExpPowerParams::new(q, lambda)?.logpdf(z))
}

pub fn ep_variance(q: f64, lambda: f64) -> Result<f64> {
    Ok(ExpPowerParams::new(q, lambda)?.variance())
}

pub fn ep_sample<R: Rng + ?Sized>(params: &ExpPowerParams, n: usize, rng: &mut R) -> Vec<f64> {
    params.sample(n, rng)
}

/// The rate that gives an exponential power prior the variance `tau2`:
/// `(Γ(3/q) / (τ² Γ(1/q)))^{q/2}`.
pub fn lambda_for_variance(q: f64, tau2: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 2.0) {
        return domain(format!("exponent q must lie in (0, 2], got {q}"));
    }
    if !(tau2 > 0.0 && tau2.is_finite()) {
        return domain(format!("target variance must be positive, got {tau2}"));
    }
    let ln = ln_gamma(3.0 / q) - ln_gamma(1.0 / q) - tau2.ln();
    Ok((0.5 * q * ln).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ks::ks_one_sample;
    use crate::quadrature::{integrate_real_line, QuadOptions};
    use crate::special::std_normal_cdf;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quad_opts() -> QuadOptions {
        QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 20_000 }
    }

    #[test]
    fn log_norm_const_closed_forms() {
        let normal = ep_log_norm_const(2.0, 0.5).unwrap();
        assert!((normal - (-0.918_938_533_204_672_7)).abs() < 1e-13);
        let laplace = ep_log_norm_const(1.0, 1.0).unwrap();
        assert!((laplace - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn log_norm_const_matches_quadrature_at_half() {
        // reciprocal of ∫ exp(-|z|^{1/2}) dz; the integral is 2·Γ(3)·... evaluated numerically here
        let r = integrate_real_line(|z| (-z.abs().sqrt()).exp(), quad_opts());
        let got = ep_log_norm_const(0.5, 1.0).unwrap();
        assert!((got + r.value.ln()).abs() < 1e-9, "{got} vs {}", -r.value.ln());
    }

    #[test]
    fn logpdf_examples() {
        assert!((ep_logpdf(2.0, 0.5, &[0.0]).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-13);
        assert!((ep_logpdf(1.0, 1.0, &[0.0, 0.0]).unwrap() + 1.386_294_361_119_890_6).abs() < 1e-13);
        // q=0.4, λ=2 at z=1.5 against a quadrature-normalized kernel
        let kernel = |z: f64| -2.0 * z.abs().powf(0.4);
        let norm = integrate_real_line(|z| kernel(z).exp(), quad_opts()).value;
        let want = kernel(1.5) - norm.ln();
        assert!((ep_logpdf(0.4, 2.0, &[1.5]).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn density_integrates_to_one() {
        for &q in &[0.3, 0.7, 1.0, 1.4, 2.0] {
            let p = ExpPowerParams::new(q, 1.3).unwrap();
            let r = integrate_real_line(|z| p.logpdf(&[z]).exp(), quad_opts());
            assert!((r.value - 1.0).abs() < 1e-8, "q={q}: {}", r.value);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(ExpPowerParams::new(0.0, 1.0).is_err());
        assert!(ExpPowerParams::new(-1.0, 1.0).is_err());
        assert!(ExpPowerParams::new(1.0, 0.0).is_err());
        assert!(ExpPowerParams::new(2.5, 1.0).is_err());
        assert!(lambda_for_variance(1.0, 0.0).is_err());
        assert!(ExpPowerParams::new(2.0, 1.0).unwrap().require_mixture_range().is_err());
    }

    #[test]
    fn variance_closed_forms() {
        assert!((ep_variance(2.0, 0.5).unwrap() - 1.0).abs() < 1e-13);
        assert!((ep_variance(1.0, 1.0).unwrap() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn lambda_for_variance_examples() {
        assert!((lambda_for_variance(2.0, 1.0).unwrap() - 0.5).abs() < 1e-14);
        assert!((lambda_for_variance(1.0, 2.0).unwrap() - 1.0).abs() < 1e-14);
        let lam = lambda_for_variance(0.8, 0.5).unwrap();
        assert!((ep_variance(0.8, lam).unwrap() - 0.5).abs() < 0.5 * 1e-12);
    }

    #[test]
    fn variance_round_trip_over_grid() {
        for k in 1..=9 {
            let q = 0.2 * k as f64;
            for &tau2 in &[0.1, 1.0, 10.0] {
                let lam = lambda_for_variance(q, tau2).unwrap();
                let v = ep_variance(q, lam).unwrap();
                assert!((v - tau2).abs() / tau2 < 1e-10, "q={q} tau2={tau2}: {v}");
            }
        }
    }

    #[test]
    fn sampler_normal_and_laplace_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let n = 100_000;
        let normal = ExpPowerParams::new(2.0, 0.5).unwrap().sample(n, &mut rng);
        let var = normal.iter().map(|x| x * x).sum::<f64>() / n as f64;
        // var of the sample variance of N(0,1) is 2/n
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
        assert!(ks_one_sample(&normal, std_normal_cdf).p_value > 0.01);

        let laplace = ExpPowerParams::new(1.0, 1.0).unwrap().sample(n, &mut rng);
        let mean_abs = laplace.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        assert!((mean_abs - 1.0).abs() < 3.0 / (n as f64).sqrt());
        let laplace_cdf = |x: f64| if x < 0.0 { 0.5 * x.exp() } else { 1.0 - 0.5 * (-x).exp() };
        assert!(ks_one_sample(&laplace, laplace_cdf).p_value > 0.01);
    }

    #[test]
    fn sampler_variance_small_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = ExpPowerParams::new(0.4, 3.0).unwrap();
        let n = 1_000_000;
        let xs = p.sample(n, &mut rng);
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let m4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
        let se = ((m4 - m2 * m2) / n as f64).sqrt();
        assert!((m2 - p.variance()).abs() < 3.0 * se, "{m2} vs {} (se {se})", p.variance());
    }

    proptest! {
        #[test]
        fn logpdf_is_symmetric(q in 0.05f64..2.0, lam in 0.01f64..20.0,
                               z in proptest::collection::vec(-50.0f64..50.0, 1..6)) {
            let p = ExpPowerParams::new(q, lam).unwrap();
            let neg: Vec<f64> = z.iter().map(|x| -x).collect();
            prop_assert_eq!(p.logpdf(&z), p.logpdf(&neg));
            prop_assert!(p.logpdf(&z).is_finite());
        }
    }
}
