//! Exponential power (bridge) priors through the gamma–Zolotarev normal scale
//! mixture, with naive, centered and non-centered posterior targets for
//! Gaussian regression, a multinomial NUTS sampler, MCMC diagnostics,
//! evidence-based hyperparameter fitting and an experiment harness that
//! compares the three parametrizations.

pub mod diagnostics;
pub mod error;
pub mod exp_power;
pub mod harness;
pub mod hmc;
pub mod hyper;
pub mod ks;
pub mod mixture;
pub mod quadrature;
pub mod special;
pub mod targets;

pub use error::{Error, Result};
pub use exp_power::ExpPowerParams;
pub use mixture::MixtureLatents;
