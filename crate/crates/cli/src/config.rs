//! Experiment configuration: TOML file, then command-line overrides.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chldp::green::GreenStudyOptions;
use chldp::model::{validate_assumptions, ScanOptions};
use chldp::optimizer::{MRule, RateOptions};
use chldp::CoefficientSpec;
use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const OUT_DIR_ENV: &str = "CHLDP_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads; 0 means one per logical core.
    pub threads: usize,
    pub out_dir: Option<PathBuf>,
    pub model: CoefficientSpec,
    pub n: usize,
    /// Time steps; falls back to `m_rule` when absent.
    pub m: Option<usize>,
    pub m_rule: MRule,
    pub n_list: Vec<usize>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub xbar: f64,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    pub y: Option<f64>,
    pub y_list: Vec<f64>,
    pub samples: usize,
    pub simulate: SimulateOptions,
    pub mc: McOptions,
    pub rate: RateOptions,
    pub green: GreenStudyOptions,
    pub scan: ScanOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: 0,
            out_dir: None,
            model: CoefficientSpec::default(),
            n: 8,
            m: None,
            m_rule: MRule::default(),
            n_list: vec![8, 16, 32],
            horizon: 0.5,
            xbar: 1.0,
            eps: 0.1,
            eps_list: vec![0.4, 0.2, 0.1],
            y: None,
            y_list: Vec::new(),
            samples: 10_000,
            simulate: SimulateOptions::default(),
            mc: McOptions::default(),
            rate: RateOptions::default(),
            green: GreenStudyOptions::default(),
            scan: ScanOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateOptions {
    pub paths: usize,
    /// Write every time slice instead of the terminal state only.
    pub full_path: bool,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            paths: 10,
            full_path: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McOptions {
    /// Tilt the samples towards the minimizing control.
    pub importance: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { importance: true }
    }
}

/// Flags shared by every subcommand; each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $CHLDP_OUT_DIR, then the current directory).
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',', global = true)]
    pub n_list: Option<Vec<usize>>,
    /// Time horizon.
    #[arg(long = "T", global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, value_delimiter = ',', global = true)]
    pub eps_list: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub xbar: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub y: Option<f64>,
    #[arg(long, value_delimiter = ',', global = true, allow_negative_numbers = true)]
    pub y_list: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(over: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = match &over.config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply(over);
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value.clone() {
                    self.$field = v;
                }
            };
        }
        set!(seed, o.seed);
        set!(threads, o.threads);
        set!(n, o.n);
        set!(n_list, o.n_list);
        set!(horizon, o.horizon);
        set!(xbar, o.xbar);
        set!(samples, o.samples);
        set!(y_list, o.y_list);
        if o.out.is_some() {
            self.out_dir = o.out.clone();
        }
        if o.m.is_some() {
            self.m = o.m;
        }
        if o.y.is_some() {
            self.y = o.y;
        }
        if let Some(e) = o.eps {
            self.eps = e;
            self.eps_list = vec![e];
        }
        set!(eps_list, o.eps_list);
    }

    pub fn steps(&self, n: usize) -> usize {
        self.m.unwrap_or_else(|| self.m_rule.steps(n))
    }

    pub fn m_rule(&self) -> MRule {
        match self.m {
            Some(m) => MRule::Fixed { m },
            None => self.m_rule,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    /// Range checks. The assumption scan is separate so `validate` can report
    /// it instead of refusing to run.
    pub fn check(&self) -> anyhow::Result<()> {
        if self.n == 0 || self.n_list.iter().any(|&n| n == 0) {
            bail!("n must be positive");
        }
        if self.m == Some(0) {
            bail!("m must be positive");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            bail!("T must be positive, got {}", self.horizon);
        }
        if !(0.0..=PI).contains(&self.xbar) {
            bail!("xbar must lie in [0, pi], got {}", self.xbar);
        }
        if !(0.0..=1.0).contains(&self.eps) {
            bail!("eps must lie in [0, 1], got {}", self.eps);
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            bail!("eps_list entries must lie in (0, 1]");
        }
        if self.samples < 100 {
            bail!("samples must be at least 100, got {}", self.samples);
        }
        if self.y.is_some_and(|y| !y.is_finite()) || self.y_list.iter().any(|y| !y.is_finite()) {
            bail!("y values must be finite");
        }
        Ok(())
    }

    pub fn check_assumptions(&self) -> anyhow::Result<()> {
        let coeffs = self.model.build()?;
        let rep = validate_assumptions(&coeffs, &self.scan)?;
        if let Some(c) = rep.checks.iter().find(|c| !c.passed) {
            bail!("assumption check '{}' failed: measured {:.3e}, threshold {:.3e}", c.name, c.measured, c.threshold);
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML form, without the settings that cannot
    /// change results (threads, output directory).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = 0;
        c.out_dir = None;
        let text = toml::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_and_flags() {
        let mut c: ExperimentConfig = toml::from_str("n = 4\nT = 1.0\n[model]\ndrift = \"zero\"\n").unwrap();
        assert_eq!(c.n, 4);
        assert_eq!(c.horizon, 1.0);
        c.apply(&Overrides {
            n: Some(16),
            eps: Some(0.05),
            ..Default::default()
        });
        assert_eq!(c.n, 16);
        assert_eq!(c.eps_list, vec![0.05]);
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1").is_err());
    }

    #[test]
    fn hash_ignores_threads() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.threads = 7;
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn range_checks() {
        let mut c = ExperimentConfig::default();
        assert!(c.check().is_ok());
        c.eps = 2.0;
        assert!(c.check().is_err());
    }
}
