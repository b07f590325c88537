use clap::{Args, Parser, Subcommand};
use epmix::harness::{
    exit_code, exit_code_for, load_dataset, plot_summary, run_experiment, write_dataset_csv, ExperimentConfig,
    SyntheticDesign,
};
use epmix::hyper::{build_theta_grid_for, default_q_grid, fit_sigma2_tau2, EvidenceForm};
use epmix::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "epmix", version, about = "Exponential power prior experiments with naive, centered and non-centered samplers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full θ-grid × parametrization × chain experiment.
    Run(RunArgs),
    /// Redraw the figures from existing summary and KDE tables.
    Plot(PlotArgs),
    /// Fit (σ², τ²) by evidence maximization and print the θ-grid.
    Fit(FitArgs),
    /// Write a synthetic regression dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Key-value configuration file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    response: Option<String>,
    /// Center and scale covariates and center the response.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    standardize: Option<String>,
    /// Comma-separated parametrizations (naive, centered, noncentered).
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    chains: Option<String>,
    #[arg(long)]
    warmup: Option<String>,
    #[arg(long)]
    retain: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Comma-separated exponents replacing the default 0.2, 0.4, ..., 1.8.
    #[arg(long = "q-list")]
    q_list: Option<String>,
    #[arg(long = "plot-q")]
    plot_q: Option<String>,
    /// gaussian (default) or unhalved.
    #[arg(long = "evidence-form")]
    evidence_form: Option<String>,
    /// Fixed noise variance; requires --tau2 and skips the evidence fit.
    #[arg(long)]
    sigma2: Option<String>,
    #[arg(long)]
    tau2: Option<String>,
    #[arg(long)]
    workers: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("data", &self.data),
            ("response", &self.response),
            ("standardize", &self.standardize),
            ("params", &self.params),
            ("chains", &self.chains),
            ("warmup", &self.warmup),
            ("retain", &self.retain),
            ("seed", &self.seed),
            ("out", &self.out),
            ("q_list", &self.q_list),
            ("plot_q", &self.plot_q),
            ("evidence_form", &self.evidence_form),
            ("sigma2", &self.sigma2),
            ("tau2", &self.tau2),
            ("workers", &self.workers),
        ]
    }

    fn to_config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_kv_file(path)?,
            None => ExperimentConfig::default(),
        };
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    summary: PathBuf,
    #[arg(long)]
    kde: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long = "plot-q", default_value_t = 0.2)]
    plot_q: f64,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "true")]
    standardize: String,
    #[arg(long = "evidence-form", default_value = "gaussian")]
    evidence_form: String,
}

#[derive(Args)]
struct SynthArgs {
    /// desk (60×8), prostate (97×8) or glucose (68×72).
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_bool(s: &str) -> Result<bool, Error> {
    let mut cfg = ExperimentConfig::default();
    cfg.set("standardize", s)?;
    Ok(cfg.standardize)
}

fn run(args: RunArgs) -> Result<i32, Error> {
    let cfg = args.to_config()?;
    let report = run_experiment(&cfg)?;
    println!(
        "dataset {} (m={}, n2={}): sigma2_hat={:.6} tau2_hat={:.6}",
        report.dataset.name,
        report.dataset.m(),
        report.dataset.n_coef(),
        report.sigma2_hat,
        report.tau2_hat
    );
    println!("{} summary rows written to {}", report.rows.len(), cfg.out_dir.display());
    if report.all_failed() {
        eprintln!("every cell failed");
        return Ok(exit_code::ALL_FAILED);
    }
    Ok(exit_code::SUCCESS)
}

fn fit(args: FitArgs) -> Result<i32, Error> {
    let form: EvidenceForm = args.evidence_form.parse()?;
    let data = load_dataset(&args.data, &args.response, parse_bool(&args.standardize)?)?;
    let fit = fit_sigma2_tau2(&data.y, &data.x, form)?;
    println!("sigma2_hat={}", fit.sigma2);
    println!("tau2_hat={}", fit.tau2);
    println!("objective={}", fit.objective);
    println!("at_boundary={}", fit.at_boundary);
    for t in build_theta_grid_for(fit.sigma2, fit.tau2, &default_q_grid())? {
        println!("q={} lambda={} sigma2={}", t.q, t.lambda, t.sigma2);
    }
    Ok(exit_code::SUCCESS)
}

fn synth(args: SynthArgs) -> Result<i32, Error> {
    let design = SyntheticDesign::preset(&args.preset, args.seed).map_err(|e| Error::Config(e.to_string()))?;
    let (y, x) = design.generate()?;
    write_dataset_csv(&args.out, "y", &design.covariate_names(), &y, &x)?;
    println!("wrote {} ({} rows, {} covariates)", args.out.display(), y.len(), x.ncols());
    Ok(exit_code::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit_code::CONFIG } else { exit_code::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Plot(a) => plot_summary(&a.summary, a.kde.as_deref(), &a.out, a.plot_q).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
            exit_code::SUCCESS
        }),
        Command::Fit(a) => fit(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
