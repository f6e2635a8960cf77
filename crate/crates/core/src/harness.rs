//! Training loop, termination rules and trajectory bookkeeping.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::objective::{sample_batch, Objective, ForwardPasses};
use crate::optim::{OptimizerConfig, OptimizerKind, Optimizer};
use crate::rng::RngState;

/// Subsequence of the run seed used for mini-batch sampling.
pub const BATCH_SUBSEQUENCE: u64 = 2;

/// Dimension up to which parameters are snapshotted every step.
pub const DENSE_SNAPSHOT_MAX_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub optimizer: OptimizerKind,
    pub opt: OptimizerConfig,
    /// Step budget `T`.
    pub max_steps: u64,
    pub eval_every: u64,
    /// Consecutive non-improving evaluations that end the run.
    pub patience: u32,
    pub seed: u64,
    /// Mini-batch size; ignored by objectives without a dataset.
    pub batch_size: usize,
    pub record_params: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adamezo,
            opt: OptimizerConfig::default(),
            max_steps: 20_000,
            eval_every: 100,
            patience: 5,
            seed: 0,
            batch_size: 16,
            record_params: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key, reason: &str| {
            Err(Error::InvalidConfig {
                key,
                reason: reason.into(),
            })
        };
        if self.max_steps == 0 {
            return bad("steps", "step budget must be >= 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every", "evaluation interval must be >= 1");
        }
        if self.patience == 0 {
            return bad("patience", "patience must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "batch size must be >= 1");
        }
        self.opt.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalReason {
    Plateau,
    Budget,
    Divergence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u64,
    /// `None` for the initial row.
    pub train_loss: Option<f64>,
    pub eval_loss: Option<f64>,
    /// Optimizer forward passes so far (evaluation measurements excluded).
    pub forward_passes: u64,
    /// Evaluation forward passes so far.
    pub eval_passes: u64,
    pub params: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub objective: String,
    pub optimizer: OptimizerKind,
    pub dim: usize,
    /// Starts with a step-0 row holding the initial evaluation.
    pub rows: Vec<TrajectoryRow>,
    pub terminal: TerminalReason,
    /// Dense Euclidean path length, accumulated every step.
    pub path_length: f64,
    pub peak_aux_floats: usize,
    pub peak_rng_states: usize,
    pub final_params: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.step)
    }

    /// Last measured evaluation loss.
    pub fn terminal_loss(&self) -> f64 {
        self.rows
            .iter()
            .rev()
            .find_map(|r| r.eval_loss)
            .unwrap_or(f64::NAN)
    }

    pub fn forward_passes(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.forward_passes)
    }

    pub fn eval_passes(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.eval_passes)
    }

    /// Optimizer forward passes at the first evaluation with loss `<= target`.
    pub fn passes_to_reach(&self, target: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.eval_loss.is_some_and(|l| l <= target))
            .map(|r| r.forward_passes)
    }

    /// Writes `step, train_loss, eval_loss, forward_passes[, w_0..w_{d-1}]`.
    ///
    /// Parameter columns appear when any row carries a snapshot; rows without one
    /// leave them empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let with_params = self.rows.iter().any(|r| r.params.is_some());
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec![
            "step".to_string(),
            "train_loss".into(),
            "eval_loss".into(),
            "forward_passes".into(),
            "eval_passes".into(),
        ];
        if with_params {
            header.extend((0..self.dim).map(|i| format!("w_{i}")));
        }
        writer.write_record(&header)?;
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
        for row in &self.rows {
            let mut rec = vec![
                row.step.to_string(),
                fmt(row.train_loss),
                fmt(row.eval_loss),
                row.forward_passes.to_string(),
                row.eval_passes.to_string(),
            ];
            if with_params {
                match &row.params {
                    Some(p) => rec.extend(p.iter().map(|v| format!("{v:?}"))),
                    None => rec.extend(std::iter::repeat_n(String::new(), self.dim)),
                }
            }
            writer.write_record(&rec)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// `sum_t ||w_{t+1} - w_t||_2` over the recorded snapshots.
pub fn trajectory_length(traj: &Trajectory) -> Result<f64> {
    let snaps: Vec<&Vec<f64>> = traj.rows.iter().filter_map(|r| r.params.as_ref()).collect();
    if snaps.is_empty() {
        return Err(Error::MissingSnapshots);
    }
    Ok(snaps.windows(2).map(|p| distance(p[0], p[1])).sum())
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Best-so-far tracker: a measurement improves only if strictly lower.
#[derive(Clone, Copy, Debug)]
pub struct PlateauDetector {
    best: f64,
    stale: u32,
    patience: u32,
}

impl PlateauDetector {
    pub fn new(patience: u32) -> Self {
        Self {
            best: f64::INFINITY,
            stale: 0,
            patience,
        }
    }

    /// Records a measurement; returns `true` when patience is exhausted.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Runs from the objective's initial point.
pub fn run<O: Objective + ?Sized>(cfg: &RunConfig, obj: &O) -> Result<Trajectory> {
    let mut opt = Optimizer::new(cfg.optimizer, cfg.opt.clone(), obj.dim(), cfg.seed)?;
    run_with(cfg, obj, &mut opt, obj.initial_point())
}

/// Runs a pre-built optimizer from `w0`. The optimizer must be fresh.
pub fn run_with<O: Objective + ?Sized, N: crate::rng::NoiseSource>(
    cfg: &RunConfig,
    obj: &O,
    opt: &mut Optimizer<N>,
    w0: Vec<f64>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let dim = obj.dim();
    let dense = dim <= DENSE_SNAPSHOT_MAX_DIM;
    let snapshot = |w: &[f64], step: u64, measured: bool| {
        (cfg.record_params && (dense || measured || step == 0)).then(|| w.to_vec())
    };

    let mut w = w0;
    let mut passes = ForwardPasses::new();
    let mut eval_passes = 0u64;
    let mut batch_rng = RngState::with_subsequence(cfg.seed, BATCH_SUBSEQUENCE);
    let mut plateau = PlateauDetector::new(cfg.patience);
    let mut path_length = 0.0;
    let mut prev = w.clone();

    let measure = |w: &[f64], eval_passes: &mut u64| {
        *eval_passes += 1;
        obj.holdout_loss(w)
    };
    let initial = measure(&w, &mut eval_passes);
    plateau.observe(initial);
    let mut rows = vec![TrajectoryRow {
        step: 0,
        train_loss: None,
        eval_loss: Some(initial),
        forward_passes: 0,
        eval_passes,
        params: snapshot(&w, 0, true),
    }];

    let mut terminal = TerminalReason::Budget;
    for step in 1..=cfg.max_steps {
        let (batch, next) = sample_batch(obj, batch_rng, cfg.batch_size.min(obj.dataset_len().unwrap_or(0)))?;
        batch_rng = next;
        let report = match opt.step(obj, &mut w, &batch, &mut passes) {
            Ok(r) => r,
            Err(Error::Divergence { .. }) => {
                terminal = TerminalReason::Divergence;
                break;
            }
            Err(e) => return Err(e),
        };
        if w.iter().any(|x| !x.is_finite()) {
            terminal = TerminalReason::Divergence;
            break;
        }
        path_length += distance(&w, &prev);
        prev.copy_from_slice(&w);

        let due = step % cfg.eval_every == 0;
        let last = step == cfg.max_steps;
        let mut eval_loss = None;
        let mut stop = false;
        if due || last {
            let l = measure(&w, &mut eval_passes);
            if !l.is_finite() {
                terminal = TerminalReason::Divergence;
                stop = true;
            } else if due && plateau.observe(l) {
                terminal = TerminalReason::Plateau;
                stop = true;
            }
            eval_loss = Some(l);
        }
        rows.push(TrajectoryRow {
            step,
            train_loss: Some(report.train_loss),
            eval_loss,
            forward_passes: passes.count(),
            eval_passes,
            params: snapshot(&w, step, eval_loss.is_some()),
        });
        if stop {
            break;
        }
    }

    Ok(Trajectory {
        objective: obj.name().to_string(),
        optimizer: opt.kind(),
        dim,
        rows,
        terminal,
        path_length,
        peak_aux_floats: opt.ledger().peak_floats(),
        peak_rng_states: opt.ledger().peak_states(),
        final_params: w,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    /// Optimizer passes `a` needed to first reach `b`'s terminal loss.
    pub fp_to_reach_b_terminal: Option<u64>,
    /// `1 - fp_a / fp_b`, where `fp_b` is when `b` itself first reached that loss.
    pub savings_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub pairs: Vec<PairComparison>,
    pub terminal_losses: Vec<f64>,
    pub path_lengths: Vec<f64>,
}

impl ComparisonReport {
    pub fn pair(&self, a: &str, b: &str) -> Option<&PairComparison> {
        self.pairs.iter().find(|p| p.a == a && p.b == b)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Pairwise "passes to reach the other run's terminal loss" for labelled runs.
pub fn compare(runs: &[(String, Trajectory)]) -> Result<ComparisonReport> {
    if runs.len() < 2 {
        return Err(Error::TooFewRuns(2));
    }
    let first = &runs[0].1;
    if let Some((_, t)) = runs.iter().find(|(_, t)| t.objective != first.objective) {
        return Err(Error::IncompatibleObjectives(
            first.objective.clone(),
            t.objective.clone(),
        ));
    }
    let mut pairs = Vec::new();
    for (la, ta) in runs {
        for (lb, tb) in runs {
            if std::ptr::eq(ta, tb) {
                continue;
            }
            let target = tb.terminal_loss();
            let fp_a = ta.passes_to_reach(target);
            let fp_b = tb.passes_to_reach(target);
            let savings_ratio = match (fp_a, fp_b) {
                (Some(a), Some(b)) if b > 0 => Some(1.0 - a as f64 / b as f64),
                (Some(_), Some(_)) => Some(0.0),
                _ => None,
            };
            pairs.push(PairComparison {
                a: la.clone(),
                b: lb.clone(),
                fp_to_reach_b_terminal: fp_a,
                savings_ratio,
            });
        }
    }
    Ok(ComparisonReport {
        pairs,
        terminal_losses: runs.iter().map(|(_, t)| t.terminal_loss()).collect(),
        path_lengths: runs.iter().map(|(_, t)| t.path_length).collect(),
    })
}
