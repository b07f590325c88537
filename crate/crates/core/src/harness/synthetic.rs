//! Synthetic regression data with equicorrelated Gaussian covariates.

use crate::error::{domain, Result};
use crate::special::std_normal;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `y = X z + σ e` with rows of `X` drawn from an equicorrelated standard
/// normal law.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDesign {
    pub m: usize,
    pub coefficients: Vec<f64>,
    /// Correlation between every pair of covariates, in `[0, 1)`.
    pub correlation: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

/// Weak effects relative to unit noise, so that small-`q` posteriors are
/// strongly shaped by the prior.
const WEAK_EFFECTS: [f64; 8] = [0.21, 0.09, -0.06, 0.0, 0.075, 0.0, 0.0, 0.03];

impl SyntheticDesign {
    /// 60 rows and 8 covariates.
    pub fn desk(seed: u64) -> Self {
        Self { m: 60, coefficients: WEAK_EFFECTS.to_vec(), correlation: 0.3, noise_sd: 1.0, seed }
    }

    /// 97 rows and 8 covariates.
    pub fn prostate_shaped(seed: u64) -> Self {
        Self { m: 97, ..Self::desk(seed) }
    }

    /// 68 rows and 72 covariates, six of them active.
    pub fn glucose_shaped(seed: u64) -> Self {
        let mut coefficients = vec![0.0; 72];
        coefficients[..6].copy_from_slice(&[0.3, -0.2, 0.15, 0.1, -0.1, 0.05]);
        Self { m: 68, coefficients, correlation: 0.3, noise_sd: 1.0, seed }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk(seed)),
            "prostate" | "prostate-shaped" => Ok(Self::prostate_shaped(seed)),
            "glucose" | "glucose-shaped" => Ok(Self::glucose_shaped(seed)),
            other => domain(format!("unknown synthetic preset '{other}' (desk, prostate, glucose)")),
        }
    }

    pub fn n_coef(&self) -> usize {
        self.coefficients.len()
    }

    pub fn generate(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if self.m == 0 || self.coefficients.is_empty() {
            return domain("synthetic design needs rows and coefficients");
        }
        if !(0.0..1.0).contains(&self.correlation) || !(self.noise_sd >= 0.0) {
            return domain("correlation must lie in [0,1) and noise_sd be nonnegative");
        }
        let n = self.n_coef();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (a, b) = ((1.0 - self.correlation).sqrt(), self.correlation.sqrt());
        let mut x = DMatrix::zeros(self.m, n);
        for i in 0..self.m {
            let shared = std_normal(&mut rng);
            for j in 0..n {
                x[(i, j)] = a * std_normal(&mut rng) + b * shared;
            }
        }
        let z = DVector::from_column_slice(&self.coefficients);
        let noise = DVector::from_fn(self.m, |_, _| self.noise_sd * std_normal(&mut rng));
        Ok((&x * z + noise, x))
    }

    pub fn covariate_names(&self) -> Vec<String> {
        (1..=self.n_coef()).map(|j| format!("x{j}")).collect()
    }
}
