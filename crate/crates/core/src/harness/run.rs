//! The full experiment: evidence fit, θ-grid, chains for every
//! (θ, parametrization) cell, and the report files.

use super::config::ExperimentConfig;
use super::dataset::{load_dataset, Dataset};
use super::plot::plot_summary;
use crate::diagnostics::{kde, min_ess_z2, rhat_max_z2, ChainSummary, KDE_GRID};
use crate::error::{Error, Result};
use crate::hmc::{run_indexed_chains, ChainDraws};
use crate::hyper::{build_theta_grid_for, fit_sigma2_tau2, EvidenceFit, ThetaPoint};
use crate::mixture::MixtureLatents;
use crate::targets::{Parametrization, RegressionProblem, TargetSpec, UnconstrainedState};
use crate::ExpPowerParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const KDE_FILE: &str = "kde.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const METADATA_FILE: &str = "metadata.txt";

pub const SUMMARY_HEADER: [&str; 11] = [
    "dataset",
    "q",
    "parametrization",
    "chain",
    "mean_log_summary",
    "min_ess",
    "rhat_max",
    "divergences",
    "wall_time_s",
    "min_ess_z2",
    "status",
];

const INIT_STREAM_KEY: u64 = 0x1a2b_3c4d_5e6f_7081;
const LATENT_STREAM_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

/// Outcome of one chain in one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStatus {
    Ok,
    /// Every coordinate of the chain was constant.
    EssDegenerate,
    InitFailed,
    SamplerFailed,
    /// The target could not be built for this θ-point.
    TargetInvalid,
}

impl ChainStatus {
    pub fn code(self) -> &'static str {
        match self {
            ChainStatus::Ok => "ok",
            ChainStatus::EssDegenerate => "ess_degenerate",
            ChainStatus::InitFailed => "init_failed",
            ChainStatus::SamplerFailed => "sampler_failed",
            ChainStatus::TargetInvalid => "target_invalid",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        [Self::Ok, Self::EssDegenerate, Self::InitFailed, Self::SamplerFailed, Self::TargetInvalid]
            .into_iter()
            .find(|s| s.code() == code)
    }

    /// Whether the chain produced draws.
    pub fn has_draws(self) -> bool {
        matches!(self, ChainStatus::Ok | ChainStatus::EssDegenerate)
    }
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub q: f64,
    pub parametrization: Parametrization,
    pub chain: usize,
    pub mean_log_summary: f64,
    /// Reported value, capped at 1.5 times the retained draws.
    pub min_ess: f64,
    pub rhat_max: f64,
    pub divergences: usize,
    pub wall_time_s: f64,
    pub min_ess_z2: f64,
    pub status: ChainStatus,
}

fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "NA".into()
    } else if v > 0.0 {
        "Inf".into()
    } else {
        "-Inf".into()
    }
}

fn parse_f(s: &str) -> Result<f64> {
    match s {
        "NA" => Ok(f64::NAN),
        "Inf" => Ok(f64::INFINITY),
        "-Inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| Error::Data(format!("invalid number '{s}'"))),
    }
}

impl SummaryRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.dataset.clone(),
            fmt_f(self.q),
            self.parametrization.name().to_string(),
            self.chain.to_string(),
            fmt_f(self.mean_log_summary),
            fmt_f(self.min_ess),
            fmt_f(self.rhat_max),
            self.divergences.to_string(),
            fmt_f(self.wall_time_s),
            fmt_f(self.min_ess_z2),
            self.status.code().to_string(),
        ]
    }

    pub fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() < 9 {
            return Err(Error::Data(format!("summary row has {} fields, expected at least 9", rec.len())));
        }
        let status = match rec.get(10) {
            Some(code) => ChainStatus::from_code(code).ok_or_else(|| Error::Data(format!("unknown status '{code}'")))?,
            None => ChainStatus::Ok,
        };
        Ok(Self {
            dataset: rec[0].to_string(),
            q: parse_f(&rec[1])?,
            parametrization: rec[2].parse().map_err(|_| Error::Data(format!("unknown parametrization '{}'", &rec[2])))?,
            chain: rec[3].parse().map_err(|_| Error::Data(format!("invalid chain '{}'", &rec[3])))?,
            mean_log_summary: parse_f(&rec[4])?,
            min_ess: parse_f(&rec[5])?,
            rhat_max: parse_f(&rec[6])?,
            divergences: rec[7].parse().map_err(|_| Error::Data(format!("invalid divergences '{}'", &rec[7])))?,
            wall_time_s: parse_f(&rec[8])?,
            min_ess_z2: rec.get(9).map(parse_f).transpose()?.unwrap_or(f64::NAN),
            status,
        })
    }
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(SUMMARY_HEADER).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record(r.to_record()).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.records()
        .map(|rec| SummaryRow::from_record(&rec.map_err(|e| Error::Data(e.to_string()))?))
        .collect()
}

/// One KDE curve point of a chain's log-summary draws.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeRow {
    pub q: f64,
    pub parametrization: Parametrization,
    pub chain: usize,
    pub grid_point: f64,
    pub density: f64,
}

pub fn write_kde_csv(path: &Path, rows: &[KdeRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(["q", "parametrization", "chain", "grid_point", "density"]).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record([fmt_f(r.q), r.parametrization.name().into(), r.chain.to_string(), fmt_f(r.grid_point), fmt_f(r.density)])
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_kde_csv(path: &Path) -> Result<Vec<KdeRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            if rec.len() != 5 {
                return Err(Error::Data(format!("KDE row has {} fields, expected 5", rec.len())));
            }
            Ok(KdeRow {
                q: parse_f(&rec[0])?,
                parametrization: rec[1].parse().map_err(|_| Error::Data(format!("unknown parametrization '{}'", &rec[1])))?,
                chain: rec[2].parse().map_err(|_| Error::Data(format!("invalid chain '{}'", &rec[2])))?,
                grid_point: parse_f(&rec[3])?,
                density: parse_f(&rec[4])?,
            })
        })
        .collect()
}

/// The shared coefficient starting point of chain `chain`, uniform on
/// `(-2, 2)` in every coordinate.
pub fn shared_z2_init(seed: u64, chain: usize, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INIT_STREAM_KEY);
    rng.set_stream(chain as u64);
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Starting latents `(ξ, δ)` of chain `chain` drawn from their priors at
/// exponent `q`; identical for the centered and non-centered forms.
pub fn initial_latents(seed: u64, chain: usize, q: f64, n: usize) -> Result<MixtureLatents> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ LATENT_STREAM_KEY ^ q.to_bits().rotate_left(29));
    rng.set_stream(chain as u64);
    MixtureLatents::draw_prior(q, n, &mut rng)
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub dataset: Dataset,
    pub fit: Option<EvidenceFit>,
    pub sigma2_hat: f64,
    pub tau2_hat: f64,
    pub theta: Vec<ThetaPoint>,
    pub rows: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| !r.status.has_draws())
    }

    pub fn rows_for(&self, q: f64, p: Parametrization) -> Vec<&SummaryRow> {
        self.rows.iter().filter(|r| (r.q - q).abs() < 1e-12 && r.parametrization == p).collect()
    }
}

struct CellOutput {
    rows: Vec<SummaryRow>,
    kde: Vec<KdeRow>,
    timing: Vec<(usize, f64, f64)>,
}

fn failed_row(dataset: &str, theta: &ThetaPoint, p: Parametrization, chain: usize, status: ChainStatus) -> SummaryRow {
    SummaryRow {
        dataset: dataset.to_string(),
        q: theta.q,
        parametrization: p,
        chain,
        mean_log_summary: f64::NAN,
        min_ess: f64::NAN,
        rhat_max: f64::NAN,
        divergences: 0,
        wall_time_s: f64::NAN,
        min_ess_z2: f64::NAN,
        status,
    }
}

fn run_cell(
    config: &ExperimentConfig,
    data: &Dataset,
    theta: &ThetaPoint,
    p: Parametrization,
    inits: &[Vec<f64>],
) -> CellOutput {
    let chains = config.sampler.chains;
    let n = data.n_coef();
    let failed_cell = |status| CellOutput {
        rows: (0..chains).map(|c| failed_row(&data.name, theta, p, c, status)).collect(),
        kde: Vec::new(),
        timing: Vec::new(),
    };
    let spec = match RegressionProblem::new(data.y.clone(), data.x.clone(), theta.sigma2)
        .and_then(|prob| Ok((prob, ExpPowerParams::new(theta.q, theta.lambda)?)))
        .and_then(|(prob, ep)| TargetSpec::regression(prob, ep, p))
    {
        Ok(s) => s,
        Err(_) => return failed_cell(ChainStatus::TargetInvalid),
    };

    let mut states: Vec<(u64, UnconstrainedState)> = Vec::with_capacity(chains);
    for (c, z2) in inits.iter().enumerate() {
        let latents = if p.uses_latents() {
            match initial_latents(config.seed(), c, theta.q, n) {
                Ok(l) => Some(l),
                Err(_) => return failed_cell(ChainStatus::InitFailed),
            }
        } else {
            None
        };
        match spec.to_unconstrained(z2, latents.as_ref()) {
            Ok(s) => states.push((c as u64, s)),
            Err(_) => return failed_cell(ChainStatus::InitFailed),
        }
    }

    let results = run_indexed_chains(&spec, &config.sampler, &states);
    let ok: Vec<&ChainDraws> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let rhat = if ok.is_empty() { f64::NAN } else { rhat_max_z2(&ok).map(|r| r.value).unwrap_or(f64::NAN) };

    let mut out = CellOutput { rows: Vec::with_capacity(chains), kde: Vec::new(), timing: Vec::new() };
    for (c, res) in results.iter().enumerate() {
        let draws = match res {
            Ok(d) => d,
            Err(Error::Init(_)) => {
                out.rows.push(failed_row(&data.name, theta, p, c, ChainStatus::InitFailed));
                continue;
            }
            Err(_) => {
                out.rows.push(failed_row(&data.name, theta, p, c, ChainStatus::SamplerFailed));
                continue;
            }
        };
        out.timing.push((c, draws.raw.warmup_seconds, draws.raw.sampling_seconds));
        let row = match ChainSummary::new(draws, rhat) {
            Ok(s) => SummaryRow {
                dataset: data.name.clone(),
                q: theta.q,
                parametrization: p,
                chain: c,
                mean_log_summary: s.mean_log_summary,
                min_ess: s.reported_min_ess(config.sampler.retain_iters),
                rhat_max: rhat,
                divergences: s.divergences,
                wall_time_s: s.wall_time,
                min_ess_z2: min_ess_z2(draws).map(|e| e.value.min(1.5 * config.sampler.retain_iters as f64)).unwrap_or(f64::NAN),
                status: if s.ess_degenerate { ChainStatus::EssDegenerate } else { ChainStatus::Ok },
            },
            Err(_) => failed_row(&data.name, theta, p, c, ChainStatus::SamplerFailed),
        };
        out.rows.push(row);
        if let Ok(k) = kde(&draws.log_summary, KDE_GRID) {
            out.kde.extend(k.grid.iter().zip(&k.density).map(|(g, d)| KdeRow {
                q: theta.q,
                parametrization: p,
                chain: c,
                grid_point: *g,
                density: *d,
            }));
        }
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| x.is_finite());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn write_metadata(path: &Path, config: &ExperimentConfig, report: &ExperimentReport, inits: &[Vec<f64>]) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "version={}", env!("CARGO_PKG_VERSION"));
    for line in config.to_kv_lines() {
        let _ = writeln!(s, "config.{line}");
    }
    let d = &report.dataset;
    let _ = writeln!(s, "dataset.name={}", d.name);
    let _ = writeln!(s, "dataset.m={}", d.m());
    let _ = writeln!(s, "dataset.n2={}", d.n_coef());
    let _ = writeln!(s, "dataset.covariates={}", d.covariates.join(","));
    let _ = writeln!(s, "dataset.standardized={}", d.standardized);
    let _ = writeln!(s, "hyper.source={}", if report.fit.is_some() { "evidence_fit" } else { "override" });
    let _ = writeln!(s, "hyper.evidence_form={}", config.evidence_form);
    let _ = writeln!(s, "hyper.sigma2_hat={}", report.sigma2_hat);
    let _ = writeln!(s, "hyper.tau2_hat={}", report.tau2_hat);
    if let Some(fit) = &report.fit {
        let _ = writeln!(s, "hyper.objective={}", fit.objective);
        let _ = writeln!(s, "hyper.at_boundary={}", fit.at_boundary);
    }
    for t in &report.theta {
        let _ = writeln!(s, "theta.q{}=sigma2:{},lambda:{}", t.q, t.sigma2, t.lambda);
    }
    let _ = writeln!(s, "rng=chacha8, stream per chain index");
    let _ = writeln!(s, "init.z2=uniform(-2,2), shared across parametrizations by chain index");
    let _ = writeln!(s, "init.latents=xi and delta drawn from their priors per chain; noncentered w from the inverse recovery map");
    let _ = writeln!(s, "ess.estimator=within-chain, fft autocovariance, geyer initial monotone sequence");
    let _ = writeln!(s, "ess.min_ess_coordinates=unconstrained sampler coordinates");
    let _ = writeln!(s, "ess.min_ess_z2_coordinates=coefficients");
    let _ = writeln!(s, "ess.report_cap=1.5*retain");
    let _ = writeln!(s, "rhat=split rhat across chains of a cell, max over coefficients");
    let _ = writeln!(s, "kde=gaussian, silverman bandwidth, {KDE_GRID} points, range +-3 bandwidths");
    let _ = writeln!(s, "summary.log_summary=g(z2)+lambda*sum|z2|^q");
    let _ = writeln!(s, "wall_time=warmup plus sampling; split in {TIMING_FILE}");
    for (c, z) in inits.iter().enumerate() {
        let _ = writeln!(s, "init.chain.{c}={}", z.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
    }
    for w in &report.warnings {
        let _ = writeln!(s, "warning={w}");
    }
    fs::write(path, s)?;
    Ok(())
}

/// Parses the `init.chain.<c>` entries of a metadata file.
pub fn read_metadata_inits(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut inits = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("init.chain.") {
            let (_, values) = rest.split_once('=').ok_or_else(|| Error::Data(format!("bad metadata line '{line}'")))?;
            inits.push(values.split(',').map(parse_f).collect::<Result<Vec<f64>>>()?);
        }
    }
    Ok(inits)
}

/// Runs every (θ, parametrization) cell and writes the summary, KDE, timing
/// and metadata files plus the three plots into `config.out_dir`.
///
/// Chain failures are recorded in the summary's `status` column and never
/// stop the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let dataset = load_dataset(&config.data, &config.response, config.standardize)?;
    let (fit, sigma2_hat, tau2_hat) = match config.hyper_override {
        Some((s, t)) => (None, s, t),
        None => {
            let fit = fit_sigma2_tau2(&dataset.y, &dataset.x, config.evidence_form)?;
            let (s, t) = (fit.sigma2, fit.tau2);
            (Some(fit), s, t)
        }
    };
    let mut warnings = Vec::new();
    if fit.as_ref().is_some_and(|f| f.at_boundary) {
        warnings.push("evidence optimum at the search boundary".to_string());
    }
    let theta = build_theta_grid_for(sigma2_hat, tau2_hat, &config.q_list)?;
    let n = dataset.n_coef();
    let inits: Vec<Vec<f64>> = (0..config.sampler.chains).map(|c| shared_z2_init(config.seed(), c, n)).collect();

    let cells: Vec<(ThetaPoint, Parametrization)> =
        theta.iter().flat_map(|t| config.parametrizations.iter().map(move |p| (*t, *p))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outputs: Vec<CellOutput> =
        pool.install(|| cells.par_iter().map(|(t, p)| run_cell(config, &dataset, t, *p, &inits)).collect());

    fs::create_dir_all(&config.out_dir)?;
    let mut rows = Vec::new();
    let mut kde_rows = Vec::new();
    let mut timing = String::from("q,parametrization,chain,warmup_s,sampling_s\n");
    for ((t, p), out) in cells.iter().zip(outputs) {
        for (c, w, s) in &out.timing {
            let _ = writeln!(timing, "{},{},{c},{w},{s}", t.q, p.name());
        }
        rows.extend(out.rows);
        kde_rows.extend(out.kde);
    }

    if config.parametrizations.contains(&Parametrization::Naive)
        && config.parametrizations.contains(&Parametrization::NonCentered)
    {
        if let Some(t) = theta.iter().find(|t| (t.q - 1.8).abs() < 1e-9) {
            let wall = |p| median(rows.iter().filter(|r| r.q == t.q && r.parametrization == p).map(|r| r.wall_time_s).collect());
            let (naive, nc) = (wall(Parametrization::Naive), wall(Parametrization::NonCentered));
            if !(naive < nc) {
                warnings.push(format!("q=1.8: median naive wall time {naive:.3}s not below noncentered {nc:.3}s"));
            }
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let out = &config.out_dir;
    let summary_path = out.join(SUMMARY_FILE);
    let kde_path = out.join(KDE_FILE);
    write_summary_csv(&summary_path, &rows)?;
    write_kde_csv(&kde_path, &kde_rows)?;
    fs::write(out.join(TIMING_FILE), timing)?;

    let mut report = ExperimentReport {
        dataset,
        fit,
        sigma2_hat,
        tau2_hat,
        theta,
        rows,
        files: vec![summary_path.clone(), kde_path.clone(), out.join(TIMING_FILE), out.join(METADATA_FILE)],
        warnings,
    };
    write_metadata(&out.join(METADATA_FILE), config, &report, &inits)?;
    if !report.all_failed() {
        report.files.extend(plot_summary(&summary_path, Some(&kde_path), out, config.plot_q)?);
    }
    Ok(report)
}
