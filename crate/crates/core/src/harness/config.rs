//! Experiment configuration from a flat `key = value` file with overrides.

use crate::error::{Error, Result};
use crate::hmc::SamplerConfig;
use crate::hyper::{default_q_grid, EvidenceForm};
use crate::targets::Parametrization;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub response: String,
    pub standardize: bool,
    pub parametrizations: Vec<Parametrization>,
    pub sampler: SamplerConfig,
    pub q_list: Vec<f64>,
    /// Fixed `(σ², τ²)` in place of the evidence fit.
    pub hyper_override: Option<(f64, f64)>,
    pub evidence_form: EvidenceForm,
    pub out_dir: PathBuf,
    /// Exponent whose KDE curves are plotted.
    pub plot_q: f64,
    /// Thread limit; 0 uses every available core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            response: "y".into(),
            standardize: true,
            parametrizations: Parametrization::ALL.to_vec(),
            sampler: SamplerConfig::default(),
            q_list: default_q_grid(),
            hyper_override: None,
            evidence_form: EvidenceForm::default(),
            out_dir: PathBuf::from("results"),
            plot_q: 0.2,
            workers: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

impl ExperimentConfig {
    pub fn seed(&self) -> u64 {
        self.sampler.seed
    }

    /// Sets one option. Keys are case-insensitive and `-` and `_` are
    /// interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key.trim().to_ascii_lowercase().replace('-', "_");
        let v = value.trim();
        match k.as_str() {
            "data" => self.data = PathBuf::from(v),
            "response" => self.response = v.to_string(),
            "standardize" => self.standardize = parse_bool(&k, v)?,
            "params" | "parametrizations" => {
                self.parametrizations = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.parse())
                    .collect::<Result<Vec<Parametrization>>>()
                    .map_err(|e| Error::Config(e.to_string()))?
            }
            "chains" => self.sampler.chains = parse(&k, v)?,
            "warmup" => self.sampler.warmup_iters = parse(&k, v)?,
            "retain" => self.sampler.retain_iters = parse(&k, v)?,
            "seed" => self.sampler.seed = parse(&k, v)?,
            "target_accept" => self.sampler.target_accept = parse(&k, v)?,
            "max_tree_depth" => self.sampler.max_tree_depth = parse(&k, v)?,
            "divergence_threshold" => self.sampler.divergence_threshold = parse(&k, v)?,
            "out" | "out_dir" => self.out_dir = PathBuf::from(v),
            "q_list" => self.q_list = parse_list(&k, v)?,
            "plot_q" => self.plot_q = parse(&k, v)?,
            "workers" => self.workers = parse(&k, v)?,
            "evidence_form" => self.evidence_form = v.parse()?,
            "sigma2" | "sigma2_tau2" | "tau2" => {
                let (mut s, mut t) = self.hyper_override.unwrap_or((f64::NAN, f64::NAN));
                match k.as_str() {
                    "sigma2" => s = parse(&k, v)?,
                    "tau2" => t = parse(&k, v)?,
                    _ => {
                        let pair: Vec<f64> = parse_list(&k, v)?;
                        if pair.len() != 2 {
                            return Err(Error::Config("sigma2_tau2 takes two values".into()));
                        }
                        (s, t) = (pair[0], pair[1]);
                    }
                }
                self.hyper_override = Some((s, t));
            }
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_kv_str(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_kv_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_kv_str(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parametrizations.is_empty() {
            return Err(Error::Config("at least one parametrization is required".into()));
        }
        if self.data.as_os_str().is_empty() {
            return Err(Error::Config("no dataset given".into()));
        }
        if self.sampler.chains == 0 {
            return Err(Error::Config("chains must be positive".into()));
        }
        if self.q_list.is_empty() || self.q_list.iter().any(|q| !(*q > 0.0 && *q < 2.0)) {
            return Err(Error::Config(format!("q values must lie in (0,2), got {:?}", self.q_list)));
        }
        if let Some((s, t)) = self.hyper_override {
            if !(s > 0.0 && t > 0.0) {
                return Err(Error::Config("sigma2 and tau2 overrides must both be set and positive".into()));
            }
        }
        self.sampler.validate()
    }

    /// Every option as `key=value` lines, in a fixed order.
    pub fn to_kv_lines(&self) -> Vec<String> {
        let s = &self.sampler;
        let mut lines = vec![
            format!("data={}", self.data.display()),
            format!("response={}", self.response),
            format!("standardize={}", self.standardize),
            format!(
                "params={}",
                self.parametrizations.iter().map(|p| p.name()).collect::<Vec<_>>().join(",")
            ),
            format!("chains={}", s.chains),
            format!("warmup={}", s.warmup_iters),
            format!("retain={}", s.retain_iters),
            format!("seed={}", s.seed),
            format!("target_accept={}", s.target_accept),
            format!("max_tree_depth={}", s.max_tree_depth),
            format!("divergence_threshold={}", s.divergence_threshold),
            format!("q_list={}", self.q_list.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(",")),
            format!("plot_q={}", self.plot_q),
            format!("evidence_form={}", self.evidence_form),
        ];
        if let Some((sg, t)) = self.hyper_override {
            lines.push(format!("sigma2={sg}"));
            lines.push(format!("tau2={t}"));
        }
        lines
    }
}
