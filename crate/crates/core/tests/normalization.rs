mod common;

use common::{latent_evidence, naive_evidence, one_dim_problem, opts};
use epmix::mixture::ZolotarevParams;
use epmix::quadrature::integrate;
use epmix::targets::{Parametrization, TargetSpec};
use epmix::ExpPowerParams;

#[test]
fn evidence_agrees_across_parametrizations() {
    for q in [0.6, 1.0, 1.5] {
        let ep = ExpPowerParams::new(q, 1.0).unwrap();
        let naive = naive_evidence(&TargetSpec::regression(one_dim_problem(), ep, Parametrization::Naive).unwrap());
        for p in [Parametrization::Centered, Parametrization::NonCentered] {
            let e = latent_evidence(&TargetSpec::regression(one_dim_problem(), ep, p).unwrap());
            assert!(((e - naive) / naive).abs() < 1e-4, "q={q} {p}: {e} vs naive {naive}");
        }
    }
}

#[test]
fn zolotarev_density_integrates_to_one() {
    for k in 1..=9 {
        let q = 2.0 * k as f64 / 10.0;
        let z = ZolotarevParams::new(q).unwrap();
        let r = integrate(|d| z.logpdf(d).map(f64::exp).unwrap_or(0.0), 0.0, std::f64::consts::PI, opts(1e-10));
        assert!((r.value - 1.0).abs() < 1e-6, "q={q}: {}", r.value);
    }
}
