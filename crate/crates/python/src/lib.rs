//! Python bindings: exponential power densities and samplers, the
//! gamma-Zolotarev mixture, bridge regression targets, NUTS, diagnostics,
//! the evidence fit and the experiment harness.

use epmix::diagnostics;
use epmix::exp_power;
use epmix::harness::{self, ExperimentConfig};
use epmix::hmc::{self, SamplerConfig};
use epmix::hyper::{self, EvidenceForm};
use epmix::mixture;
use epmix::targets::{Parametrization, RegressionProblem, TargetSpec, UnconstrainedState};
use epmix::{Error, ExpPowerParams, MixtureLatents};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::Init(_) | Error::NonFinite(_) | Error::Optimization(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for epmix::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("design rows have unequal lengths"));
    }
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

fn parametrization(name: &str) -> PyResult<Parametrization> {
    name.parse().py()
}

#[pyfunction]
fn ep_logpdf(q: f64, lam: f64, z: Vec<f64>) -> PyResult<f64> {
    exp_power::ep_logpdf(q, lam, &z).py()
}

#[pyfunction]
fn ep_log_norm_const(q: f64, lam: f64) -> PyResult<f64> {
    exp_power::ep_log_norm_const(q, lam).py()
}

#[pyfunction]
fn ep_variance(q: f64, lam: f64) -> PyResult<f64> {
    exp_power::ep_variance(q, lam).py()
}

/// Rate `λ` giving prior variance `tau2` at exponent `q`.
#[pyfunction]
fn lambda_for_variance(q: f64, tau2: f64) -> PyResult<f64> {
    exp_power::lambda_for_variance(q, tau2).py()
}

/// Direct exponential power draws.
#[pyfunction]
#[pyo3(signature = (q, lam, n, seed=1))]
fn ep_sample(q: f64, lam: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let p = ExpPowerParams::new(q, lam).py()?;
    Ok(exp_power::ep_sample(&p, n, &mut rng(seed)))
}

/// Exponential power draws through the gamma-Zolotarev normal mixture.
#[pyfunction]
#[pyo3(signature = (q, lam, n, seed=1))]
fn compose_ep_sample(q: f64, lam: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let p = ExpPowerParams::new(q, lam).py()?;
    mixture::compose_ep_sample(&p, n, &mut rng(seed)).py()
}

#[pyfunction]
fn zolotarev_logpdf(delta: f64, q: f64) -> PyResult<f64> {
    mixture::zolotarev_logpdf(delta, q).py()
}

#[pyfunction]
#[pyo3(signature = (q, n, seed=1))]
fn zolotarev_sample(q: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    mixture::zolotarev_sample(q, n, &mut rng(seed)).py()
}

#[pyfunction]
fn k_factor(delta: f64, q: f64) -> PyResult<f64> {
    mixture::k_factor(delta, q).py()
}

/// Mixing variance `v` of the normal scale mixture at latents `(ξ, δ)`.
#[pyfunction]
fn v_from_latents(xi: f64, delta: f64, q: f64) -> PyResult<f64> {
    mixture::v_from_latents(xi, delta, q).py()
}

/// A bridge regression posterior in one of the three parametrizations.
#[pyclass(name = "Target", module = "epmix_py")]
struct PyTarget {
    inner: TargetSpec,
}

#[pymethods]
impl PyTarget {
    #[new]
    #[pyo3(signature = (y, x, sigma2, q, lam, parametrization="noncentered"))]
    fn new(y: Vec<f64>, x: Vec<Vec<f64>>, sigma2: f64, q: f64, lam: f64, parametrization: &str) -> PyResult<Self> {
        let problem = RegressionProblem::new(DVector::from_vec(y), matrix(&x)?, sigma2).py()?;
        let ep = ExpPowerParams::new(q, lam).py()?;
        let inner = TargetSpec::regression(problem, ep, self::parametrization(parametrization)?).py()?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n_coef(&self) -> usize {
        self.inner.n_coef()
    }

    #[getter]
    fn parametrization(&self) -> &'static str {
        self.inner.parametrization().name()
    }

    fn log_density(&self, state: Vec<f64>) -> PyResult<f64> {
        Ok(self.log_density_and_grad(state)?.0)
    }

    fn log_density_and_grad(&self, state: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        let state = UnconstrainedState::new(state).py()?;
        epmix::targets::log_target_and_grad(&self.inner, &state).py()
    }

    fn recover_z2(&self, state: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.recover_z2(&state).py()
    }

    /// State reproducing `z2`; mixture forms need `xi` and `delta`.
    #[pyo3(signature = (z2, xi=None, delta=None))]
    fn to_unconstrained(&self, z2: Vec<f64>, xi: Option<Vec<f64>>, delta: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let latents = match (xi, delta) {
            (Some(xi), Some(delta)) => {
                let w = vec![0.0; xi.len()];
                Some(MixtureLatents::new(xi, delta, w).py()?)
            }
            (None, None) => None,
            _ => return Err(PyValueError::new_err("give both xi and delta or neither")),
        };
        Ok(self.inner.to_unconstrained(&z2, latents.as_ref()).py()?.into_inner())
    }

    /// `g(z₂) + λ‖z₂‖_q^q`.
    fn summary(&self, z2: Vec<f64>) -> PyResult<f64> {
        if z2.len() != self.inner.n_coef() {
            return Err(py_err(Error::Dimension { expected: self.inner.n_coef(), got: z2.len() }));
        }
        Ok(self.inner.summary(&z2))
    }

    fn __repr__(&self) -> String {
        let ep = self.inner.ep();
        format!(
            "Target(parametrization={}, n_coef={}, q={}, lam={})",
            self.inner.parametrization(),
            self.inner.n_coef(),
            ep.q(),
            ep.lambda()
        )
    }
}

fn default_inits(target: &TargetSpec, chains: usize, seed: u64) -> PyResult<Vec<UnconstrainedState>> {
    let n = target.n_coef();
    (0..chains)
        .map(|c| {
            let z = harness::shared_z2_init(seed, c, n);
            let latents = if target.parametrization().uses_latents() {
                Some(harness::initial_latents(seed, c, target.ep().q(), n).py()?)
            } else {
                None
            };
            target.to_unconstrained(&z, latents.as_ref()).py()
        })
        .collect()
}

/// Runs NUTS chains on `target`. Without `inits`, chain `c` starts from the
/// harness's shared coefficient start with prior-drawn latents.
///
/// Returns one dict per chain with keys `z2`, `draws`, `log_summary`,
/// `divergences`, `step_size`, `accept_stat` and `wall_time`.
#[pyfunction]
#[pyo3(signature = (target, chains=4, warmup=1000, retain=1000, seed=1, target_accept=0.8, max_tree_depth=10, inits=None))]
#[allow(clippy::too_many_arguments)]
fn sample<'py>(
    py: Python<'py>,
    target: &PyTarget,
    chains: usize,
    warmup: usize,
    retain: usize,
    seed: u64,
    target_accept: f64,
    max_tree_depth: usize,
    inits: Option<Vec<Vec<f64>>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let config = SamplerConfig {
        warmup_iters: warmup,
        retain_iters: retain,
        target_accept,
        max_tree_depth,
        seed,
        chains,
        ..SamplerConfig::default()
    };
    config.validate().py()?;
    let inits = match inits {
        Some(v) => v.into_iter().map(|s| UnconstrainedState::new(s).py()).collect::<PyResult<Vec<_>>>()?,
        None => default_inits(&target.inner, chains, seed)?,
    };
    let spec = target.inner.clone();
    let results = py.allow_threads(|| hmc::run_chains(&spec, &config, &inits));
    results
        .into_iter()
        .map(|r| {
            let c = r.py()?;
            let d = PyDict::new(py);
            d.set_item("z2", &c.z2_draws)?;
            d.set_item("draws", &c.raw.draws)?;
            d.set_item("log_summary", &c.log_summary)?;
            d.set_item("divergences", c.divergences)?;
            d.set_item("step_size", c.raw.step_size)?;
            d.set_item("accept_stat", c.raw.mean_accept_stat())?;
            d.set_item("wall_time", c.wall_time)?;
            Ok(d)
        })
        .collect()
}

/// Effective sample size of one chain.
#[pyfunction]
fn ess(x: Vec<f64>) -> PyResult<f64> {
    Ok(diagnostics::ess(&x).py()?.value)
}

/// Split R-hat across chains of equal length.
#[pyfunction]
fn split_rhat(chains: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(diagnostics::split_rhat(&chains).py()?.value)
}

/// Gaussian kernel density estimate on a grid: `(grid, density, bandwidth)`.
#[pyfunction]
#[pyo3(signature = (values, grid=diagnostics::KDE_GRID))]
fn kde(values: Vec<f64>, grid: usize) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let k = diagnostics::kde(&values, grid).py()?;
    Ok((k.grid, k.density, k.bandwidth))
}

/// Negative log marginal likelihood of `y` under the Gaussian-prior model.
#[pyfunction]
#[pyo3(signature = (y, x, sigma2, tau2, form="gaussian"))]
fn evidence_objective(y: Vec<f64>, x: Vec<Vec<f64>>, sigma2: f64, tau2: f64, form: &str) -> PyResult<f64> {
    let form: EvidenceForm = form.parse().py()?;
    hyper::evidence_objective(&DVector::from_vec(y), &matrix(&x)?, sigma2, tau2, form).py()
}

/// Empirical Bayes `(σ², τ²)`; returns a dict with `sigma2`, `tau2`,
/// `objective` and `at_boundary`.
#[pyfunction]
#[pyo3(signature = (y, x, form="gaussian"))]
fn fit_sigma2_tau2<'py>(py: Python<'py>, y: Vec<f64>, x: Vec<Vec<f64>>, form: &str) -> PyResult<Bound<'py, PyDict>> {
    let form: EvidenceForm = form.parse().py()?;
    let fit = hyper::fit_sigma2_tau2(&DVector::from_vec(y), &matrix(&x)?, form).py()?;
    let d = PyDict::new(py);
    d.set_item("sigma2", fit.sigma2)?;
    d.set_item("tau2", fit.tau2)?;
    d.set_item("objective", fit.objective)?;
    d.set_item("at_boundary", fit.at_boundary)?;
    Ok(d)
}

/// `(σ², λ, q)` triples at prior variance `tau2_hat`, over the default q grid
/// unless `qs` is given.
#[pyfunction]
#[pyo3(signature = (sigma2_hat, tau2_hat, qs=None))]
fn build_theta_grid(sigma2_hat: f64, tau2_hat: f64, qs: Option<Vec<f64>>) -> PyResult<Vec<(f64, f64, f64)>> {
    let qs = qs.unwrap_or_else(hyper::default_q_grid);
    let grid = hyper::build_theta_grid_for(sigma2_hat, tau2_hat, &qs).py()?;
    Ok(grid.into_iter().map(|t| (t.sigma2, t.lambda, t.q)).collect())
}

/// Runs the full experiment on a CSV file. `options` takes the same keys as
/// a configuration file (`chains`, `warmup`, `q_list`, ...). Returns the
/// paths of the files written.
#[pyfunction]
#[pyo3(signature = (data, out_dir, options=None))]
fn run_experiment(
    py: Python<'_>,
    data: PathBuf,
    out_dir: PathBuf,
    options: Option<&Bound<'_, PyDict>>,
) -> PyResult<Vec<PathBuf>> {
    let mut config = ExperimentConfig { data, out_dir, ..ExperimentConfig::default() };
    if let Some(options) = options {
        for (k, v) in options.iter() {
            let value = match v.extract::<Vec<f64>>() {
                Ok(list) => list.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
                Err(_) => v.str()?.to_string(),
            };
            config.set(&k.str()?.to_string(), &value).py()?;
        }
    }
    let report = py.allow_threads(|| harness::run_experiment(&config)).py()?;
    Ok(report.files)
}

#[pymodule]
fn epmix_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTarget>()?;
    m.add_function(wrap_pyfunction!(ep_logpdf, m)?)?;
    m.add_function(wrap_pyfunction!(ep_log_norm_const, m)?)?;
    m.add_function(wrap_pyfunction!(ep_variance, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_for_variance, m)?)?;
    m.add_function(wrap_pyfunction!(ep_sample, m)?)?;
    m.add_function(wrap_pyfunction!(compose_ep_sample, m)?)?;
    m.add_function(wrap_pyfunction!(zolotarev_logpdf, m)?)?;
    m.add_function(wrap_pyfunction!(zolotarev_sample, m)?)?;
    m.add_function(wrap_pyfunction!(k_factor, m)?)?;
    m.add_function(wrap_pyfunction!(v_from_latents, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(ess, m)?)?;
    m.add_function(wrap_pyfunction!(split_rhat, m)?)?;
    m.add_function(wrap_pyfunction!(kde, m)?)?;
    m.add_function(wrap_pyfunction!(evidence_objective, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sigma2_tau2, m)?)?;
    m.add_function(wrap_pyfunction!(build_theta_grid, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
