//! Experiment files and flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use frugalzo::{BetaVMode, OptimizerConfig, OptimizerKind, RestoreMode, RunConfig};
use serde::{Deserialize, Serialize};

pub const DEFAULT_OUT: &str = "results";
pub const OUT_ENV: &str = "FRUGALZO_OUT";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<frugalzo::Error> for CliError {
    fn from(e: frugalzo::Error) -> Self {
        match e {
            frugalzo::Error::InvalidConfig { key, reason } => CliError::Config(format!("`{key}`: {reason}")),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Optimizer settings; absent keys fall back to the base section, then to defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub kind: Option<OptimizerKind>,
    pub eta: Option<f64>,
    pub mu: Option<f64>,
    pub h: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub warmup: Option<usize>,
    pub beta_v_mode: Option<BetaVMode>,
    pub blocks: Option<usize>,
    pub restore: Option<RestoreMode>,
    pub toy_two_seed: Option<bool>,
}

impl OptimizerSpec {
    /// Fields set in `top` win over `self`.
    pub fn overlay(&self, top: &OptimizerSpec) -> OptimizerSpec {
        OptimizerSpec {
            label: top.label.clone().or_else(|| self.label.clone()),
            kind: top.kind.or(self.kind),
            eta: top.eta.or(self.eta),
            mu: top.mu.or(self.mu),
            h: top.h.or(self.h),
            beta1: top.beta1.or(self.beta1),
            beta2: top.beta2.or(self.beta2),
            epsilon: top.epsilon.or(self.epsilon),
            warmup: top.warmup.or(self.warmup),
            beta_v_mode: top.beta_v_mode.or(self.beta_v_mode),
            blocks: top.blocks.or(self.blocks),
            restore: top.restore.or(self.restore),
            toy_two_seed: top.toy_two_seed.or(self.toy_two_seed),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind.unwrap_or(OptimizerKind::Adamezo)
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind().to_string())
    }

    pub fn config(&self) -> OptimizerConfig {
        let d = OptimizerConfig::default();
        let mut cfg = OptimizerConfig {
            eta: self.eta.unwrap_or(d.eta),
            mu: self.mu.unwrap_or(d.mu),
            horizon: self.h.unwrap_or(d.horizon),
            beta1: self.beta1.unwrap_or(d.beta1),
            beta2: self.beta2.unwrap_or(d.beta2),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            warmup_steps: self.warmup,
            beta_v_mode: self.beta_v_mode.unwrap_or(d.beta_v_mode),
            blocks: self.blocks.unwrap_or(d.blocks),
            restore: self.restore.unwrap_or(d.restore),
            toy_two_seed: self.toy_two_seed.unwrap_or(d.toy_two_seed),
        };
        if self.kind() == OptimizerKind::FirstOrderAdam {
            cfg.beta1 = self.beta1.unwrap_or(0.9);
            cfg.beta2 = self.beta2.unwrap_or(0.999);
        }
        cfg
    }

    /// Every field filled in, for the metadata echo.
    pub fn resolved(&self) -> OptimizerSpec {
        let c = self.config();
        OptimizerSpec {
            label: Some(self.label()),
            kind: Some(self.kind()),
            eta: Some(c.eta),
            mu: Some(c.mu),
            h: Some(c.horizon),
            beta1: Some(c.beta1),
            beta2: Some(c.beta2),
            epsilon: Some(c.epsilon),
            warmup: Some(c.warmup()),
            beta_v_mode: Some(c.beta_v_mode),
            blocks: Some(c.blocks),
            restore: Some(c.restore),
            toy_two_seed: Some(c.toy_two_seed),
        }
    }
}

/// Parsed experiment file.
///
/// ```toml
/// task = "synthetic"
/// steps = 20000
/// seeds = [0, 1, 2]
///
/// [optimizer]          # base settings
/// eta = 3e-4
///
/// [[optimizers]]       # compare entries, layered over [optimizer]
/// kind = "mezo"
/// eta = 1e-3
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub task: Option<String>,
    pub dim: Option<usize>,
    pub examples: Option<usize>,
    pub data_seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub steps: Option<u64>,
    pub eval_every: Option<u64>,
    pub patience: Option<u32>,
    pub batch_size: Option<usize>,
    pub record_params: Option<bool>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub optimizers: Vec<OptimizerSpec>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    /// Reads TOML, a JSON spec, or the `spec` object of a run's `.meta.json`.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let mut value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
            if let Some(inner) = value.get_mut("spec") {
                value = inner.take();
            }
            serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident),*) => { $( if o.$field.is_some() { self.$field = o.$field.clone(); } )* };
        }
        set!(task, steps, eval_every, patience, seed, out, batch_size);
        let top = o.optimizer();
        self.optimizer = self.optimizer.overlay(&top);
        for entry in &mut self.optimizers {
            *entry = entry.overlay(&top);
        }
    }

    pub fn task_name(&self) -> CliResult<&str> {
        self.task
            .as_deref()
            .ok_or_else(|| CliError::Config("`task`: missing (f1, f2, f3, quadratic, synthetic)".into()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(default_out)
    }

    pub fn run_config(&self, opt: &OptimizerSpec, seed: u64) -> CliResult<RunConfig> {
        let d = RunConfig::default();
        let cfg = RunConfig {
            optimizer: opt.kind(),
            opt: opt.config(),
            max_steps: self.steps.unwrap_or(d.max_steps),
            eval_every: self.eval_every.unwrap_or(d.eval_every),
            patience: self.patience.unwrap_or(d.patience),
            seed,
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            record_params: self.record_params.unwrap_or(d.record_params),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Compare entries with the base section folded in.
    pub fn entries(&self) -> Vec<OptimizerSpec> {
        self.optimizers.iter().map(|e| self.optimizer.overlay(e)).collect()
    }

    pub fn seed_list(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![self.seed.unwrap_or(0)])
    }

    /// Copy with every defaulted field written out, for one concrete run.
    pub fn resolved_for(&self, opt: &OptimizerSpec, seed: u64) -> CliResult<ExperimentSpec> {
        let cfg = self.run_config(opt, seed)?;
        Ok(ExperimentSpec {
            task: self.task.clone(),
            dim: self.dim,
            examples: self.examples,
            data_seed: Some(self.data_seed.unwrap_or(seed)),
            data: self.data.clone(),
            steps: Some(cfg.max_steps),
            eval_every: Some(cfg.eval_every),
            patience: Some(cfg.patience),
            batch_size: Some(cfg.batch_size),
            record_params: Some(cfg.record_params),
            seed: Some(seed),
            seeds: None,
            out: Some(self.out_dir()),
            optimizer: opt.resolved(),
            optimizers: Vec::new(),
        })
    }
}

pub fn default_out() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Values given on the command line.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// f1, f2, f3, quadratic or synthetic
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long = "opt")]
    pub kind: Option<OptimizerKind>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Horizon
    #[arg(long)]
    pub h: Option<usize>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Plain-MeZO warm-up steps (default: h)
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    /// normalized or unit
    #[arg(long)]
    pub beta_v_mode: Option<BetaVMode>,
    /// regenerate or snapshot
    #[arg(long)]
    pub restore: Option<RestoreMode>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub patience: Option<u32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $FRUGALZO_OUT or ./results)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Alternate between two fixed directions
    #[arg(long)]
    pub toy_two_seed: bool,
}

impl Overrides {
    fn optimizer(&self) -> OptimizerSpec {
        OptimizerSpec {
            label: None,
            kind: self.kind,
            eta: self.eta,
            mu: self.mu,
            h: self.h,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            warmup: self.warmup,
            beta_v_mode: self.beta_v_mode,
            blocks: self.blocks,
            restore: self.restore,
            toy_two_seed: self.toy_two_seed.then_some(true),
        }
    }
}
