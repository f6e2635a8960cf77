use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::partition::BlockPartition;
use crate::spsa::RestoreMode;

/// Scaling applied to the preconditioned AdaMeZO update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaVMode {
    /// `sqrt(S2) / S1` with `Sk = sum_{i<h} beta_k^i`, which turns the raw truncated
    /// sums into EMA-normalised moments.
    #[default]
    Normalized,
    /// Always 1.
    Unit,
}

impl FromStr for BetaVMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "normalized" => Ok(Self::Normalized),
            "unit" => Ok(Self::Unit),
            other => Err(format!("unknown beta_v mode `{other}`")),
        }
    }
}

/// Hyperparameters shared by all optimizers. Irrelevant fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub eta: f64,
    pub mu: f64,
    /// Number of projection records kept (`h`).
    pub horizon: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Plain-MeZO warm-up steps (`T_w`); `None` means "equal to the horizon".
    pub warmup_steps: Option<usize>,
    pub beta_v_mode: BetaVMode,
    /// Number of contiguous parameter blocks, clamped to the dimension.
    pub blocks: usize,
    pub restore: RestoreMode,
    /// Alternate between two fixed directions instead of drawing a fresh seed per step.
    pub toy_two_seed: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            mu: 1e-3,
            horizon: 10,
            beta1: 0.7,
            beta2: 0.9,
            epsilon: 1e-8,
            warmup_steps: None,
            beta_v_mode: BetaVMode::Normalized,
            blocks: 1,
            restore: RestoreMode::Regenerate,
            toy_two_seed: false,
        }
    }
}

impl OptimizerConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_steps.unwrap_or(self.horizon)
    }

    pub fn partition(&self, dim: usize) -> BlockPartition {
        BlockPartition::even(dim, self.blocks)
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(key: &'static str, reason: impl Into<String>) -> Result<()> {
            Err(Error::InvalidConfig {
                key,
                reason: reason.into(),
            })
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad("eta", format!("must be finite and >= 0, got {}", self.eta));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return bad("mu", format!("must be > 0, got {}", self.mu));
        }
        if self.horizon == 0 {
            return bad("h", "horizon must be >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", format!("must lie in [0, 1), got {}", self.beta1));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", format!("must lie in [0, 1), got {}", self.beta2));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon", format!("must be > 0, got {}", self.epsilon));
        }
        if self.blocks == 0 {
            return bad("blocks", "need at least one block");
        }
        Ok(())
    }
}

/// `sum_{i<k} beta^i`, accumulated term by term.
pub fn geometric_sum(beta: f64, k: usize) -> f64 {
    let mut total = 0.0;
    let mut term = 1.0;
    for _ in 0..k {
        total += term;
        term *= beta;
    }
    total
}

/// Cancel factor for an effective horizon of `k` records.
pub fn beta_v_for(mode: BetaVMode, beta1: f64, beta2: f64, k: usize) -> f64 {
    match mode {
        BetaVMode::Unit => 1.0,
        BetaVMode::Normalized => geometric_sum(beta2, k).sqrt() / geometric_sum(beta1, k),
    }
}

/// Cancel factor at the configured horizon.
pub fn beta_v(cfg: &OptimizerConfig) -> f64 {
    beta_v_for(cfg.beta_v_mode, cfg.beta1, cfg.beta2, cfg.horizon)
}

/// Which update rule a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Mezo,
    Hmezo,
    Adamezo,
    ReferenceZoAdam,
    FirstOrderAdam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        Self::Mezo,
        Self::Hmezo,
        Self::Adamezo,
        Self::ReferenceZoAdam,
        Self::FirstOrderAdam,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mezo => "mezo",
            Self::Hmezo => "hmezo",
            Self::Adamezo => "adamezo",
            Self::ReferenceZoAdam => "reference_zo_adam",
            Self::FirstOrderAdam => "first_order_adam",
        }
    }

    pub fn is_zeroth_order(self) -> bool {
        !matches!(self, Self::FirstOrderAdam)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let normalized = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == normalized || (normalized == "adam" && *k == Self::FirstOrderAdam))
            .ok_or_else(|| format!("unknown optimizer `{s}`"))
    }
}
