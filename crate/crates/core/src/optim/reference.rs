//! Full-memory oracles for the in-place rules.
//!
//! Both oracles materialise every direction as a whole-vector Gaussian block from
//! the record's seed (no cached states, no partition) and keep their moments in
//! `d`-length vectors.

use std::collections::VecDeque;

use crate::error::Result;
use crate::objective::Objective;
use crate::rng::{fill_gaussian, NoiseSource, Philox, RngState};
use crate::spsa::{Probe, ProjectionRecord};

use super::config::{beta_v_for, OptimizerConfig};
use super::zo::{horizon_weight, StepCtx};

fn direction(seed: u64, z: &mut [f64]) -> Result<()> {
    fill_gaussian(RngState::new(seed), z).map(|_| ())
}

/// Adam-style zeroth-order update with the moments held in memory.
///
/// With a finite horizon `stored_m`/`stored_v` are rebuilt each step as the exact
/// truncated sums over the last `h` records. With `horizon = None` they are plain
/// untruncated recursions `m <- beta1 m + p z`, `v <- beta2 v + p^2 z.z`.
#[derive(Clone, Debug)]
pub struct ReferenceZoAdam {
    horizon: Option<usize>,
    records: VecDeque<ProjectionRecord>,
    seen: usize,
    pub stored_m: Vec<f64>,
    pub stored_v: Vec<f64>,
    z: Vec<f64>,
}

impl ReferenceZoAdam {
    pub fn new(dim: usize, horizon: Option<usize>) -> Self {
        Self {
            horizon,
            records: VecDeque::new(),
            seen: 0,
            stored_m: vec![0.0; dim],
            stored_v: vec![0.0; dim],
            z: vec![0.0; dim],
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &ProjectionRecord> {
        self.records.iter()
    }

    pub(crate) fn push_record(&mut self, rec: ProjectionRecord) {
        self.seen += 1;
        if let Some(h) = self.horizon {
            if self.records.len() == h {
                self.records.pop_front();
            }
            self.records.push_back(rec);
        }
    }

    /// Auxiliary reals this oracle keeps alive: both moments and one direction.
    pub fn aux_floats(&self) -> usize {
        3 * self.z.len()
    }

    /// One step. The caller's `StepCtx` only supplies the probe; directions here
    /// always come from the Philox stream of each record's seed.
    pub fn step<N: NoiseSource + ?Sized, O: Objective + ?Sized>(
        &mut self,
        ctx: &mut StepCtx<'_, N, O>,
        w: &mut [f64],
        step: u64,
        seed: u64,
    ) -> Result<Probe> {
        self.step_with(ctx, w, step, seed, &Philox)
    }

    /// Like [`step`](Self::step) with an explicit direction source.
    pub fn step_with<N: NoiseSource + ?Sized, O: Objective + ?Sized, Z: NoiseSource + ?Sized>(
        &mut self,
        ctx: &mut StepCtx<'_, N, O>,
        w: &mut [f64],
        step: u64,
        seed: u64,
        directions: &Z,
    ) -> Result<Probe> {
        let probe = ctx.probe(w, seed, step)?;
        let rec = probe.record;
        self.push_record(rec);
        let cfg: &OptimizerConfig = ctx.cfg;
        let fill = |seed: u64, z: &mut [f64]| -> Result<()> {
            let state = RngState::new(seed);
            state.advance(z.len() as u64)?;
            for (i, zi) in z.iter_mut().enumerate() {
                *zi = directions.gaussian(&state, i as u64);
            }
            Ok(())
        };

        match self.horizon {
            Some(_) => {
                if step <= cfg.warmup() as u64 {
                    fill(seed, &mut self.z)?;
                    let coeff = cfg.eta * rec.projection;
                    for (wi, zi) in w.iter_mut().zip(&self.z) {
                        *wi += -coeff * zi;
                    }
                    return Ok(probe);
                }
                self.stored_m.fill(0.0);
                self.stored_v.fill(0.0);
                for (tau, r) in self.records.iter().rev().enumerate() {
                    fill(r.seed, &mut self.z)?;
                    let p = r.projection;
                    let c1 = horizon_weight(cfg.beta1, tau) * p;
                    let c2 = horizon_weight(cfg.beta2, tau) * (p * p);
                    for ((m, v), z) in self.stored_m.iter_mut().zip(&mut self.stored_v).zip(&self.z) {
                        *m += c1 * z;
                        *v += c2 * (z * z);
                    }
                }
                let lr = cfg.eta * beta_v_for(cfg.beta_v_mode, cfg.beta1, cfg.beta2, self.records.len());
                self.apply(w, lr, cfg.epsilon);
            }
            None => {
                fill(seed, &mut self.z)?;
                let p = rec.projection;
                for ((m, v), z) in self.stored_m.iter_mut().zip(&mut self.stored_v).zip(&self.z) {
                    *m = cfg.beta1 * *m + p * z;
                    *v = cfg.beta2 * *v + (p * p) * (z * z);
                }
                if step <= cfg.warmup() as u64 {
                    let coeff = cfg.eta * p;
                    for (wi, zi) in w.iter_mut().zip(&self.z) {
                        *wi += -coeff * zi;
                    }
                } else {
                    let lr = cfg.eta * beta_v_for(cfg.beta_v_mode, cfg.beta1, cfg.beta2, self.seen);
                    self.apply(w, lr, cfg.epsilon);
                }
            }
        }
        Ok(probe)
    }

    fn apply(&self, w: &mut [f64], lr: f64, epsilon: f64) {
        for ((wi, m), v) in w.iter_mut().zip(&self.stored_m).zip(&self.stored_v) {
            *wi -= lr * (m / (v + epsilon).sqrt());
        }
    }
}

/// Stored-momentum counterpart of the truncated-momentum rule: builds
/// `m = sum_tau beta1^(tau-1) p_tau z_tau` as a full vector, then `w <- w - eta m`.
#[derive(Clone, Debug)]
pub struct TruncatedMomentumOracle {
    horizon: usize,
    records: VecDeque<ProjectionRecord>,
    pub stored_m: Vec<f64>,
    z: Vec<f64>,
}

impl TruncatedMomentumOracle {
    pub fn new(dim: usize, horizon: usize) -> Self {
        Self {
            horizon,
            records: VecDeque::new(),
            stored_m: vec![0.0; dim],
            z: vec![0.0; dim],
        }
    }

    pub fn step<N: NoiseSource + ?Sized, O: Objective + ?Sized>(
        &mut self,
        ctx: &mut StepCtx<'_, N, O>,
        w: &mut [f64],
        step: u64,
        seed: u64,
    ) -> Result<Probe> {
        let probe = ctx.probe(w, seed, step)?;
        if self.records.len() == self.horizon {
            self.records.pop_front();
        }
        self.records.push_back(probe.record);
        self.stored_m.fill(0.0);
        for (tau, r) in self.records.iter().rev().enumerate() {
            direction(r.seed, &mut self.z)?;
            let c = horizon_weight(ctx.cfg.beta1, tau) * r.projection;
            for (m, z) in self.stored_m.iter_mut().zip(&self.z) {
                *m += c * z;
            }
        }
        for (wi, m) in w.iter_mut().zip(&self.stored_m) {
            *wi -= ctx.cfg.eta * m;
        }
        Ok(probe)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::MemoryLedger;
    use crate::objective::{Batch, ForwardPasses, FnObjective};
    use crate::optim::config::BetaVMode;
    use crate::rng::FixedPattern;

    #[test]
    fn untruncated_matches_textbook_adam_on_scalar_stream() {
        // Textbook recursion with (1 - beta) prefactors and bias correction,
        // epsilon inside the root: w -= eta * mhat / sqrt(vhat + eps').
        // The cancel factor reproduces it with eps' = eps / S2(t).
        let (b1, b2, eta, eps) = (0.7, 0.9, 0.05, 1e-8);
        let cfg = OptimizerConfig {
            eta,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
            warmup_steps: Some(0),
            beta_v_mode: BetaVMode::Normalized,
            ..Default::default()
        };
        let obj = FnObjective::new("cubic", vec![1.5], |w| w[0].powi(3) + w[0] * w[0]);
        let noise = FixedPattern(vec![1.0]);
        let partition = cfg.partition(1);
        let mut oracle = ReferenceZoAdam::new(1, None);
        let mut w = vec![1.5];
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.5f64);
        for t in 1..=3u64 {
            let mut passes = ForwardPasses::new();
            let mut ledger = MemoryLedger::new();
            let mut ctx = StepCtx {
                noise: &noise,
                obj: &obj,
                batch: &Batch::Full,
                cfg: &cfg,
                partition: &partition,
                passes: &mut passes,
                ledger: &mut ledger,
            };
            let probe = oracle.step_with(&mut ctx, &mut w, t, t, &noise).unwrap();
            let g = probe.record.projection;
            // same probe value feeds the textbook recursion
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t as i32));
            let vhat = v / (1.0 - b2.powi(t as i32));
            let s2 = (1.0 - b2.powi(t as i32)) / (1.0 - b2);
            x -= eta * mhat / (vhat + eps / s2).sqrt();
            assert!((w[0] - x).abs() < 1e-12, "step {t}: {} vs {x}", w[0]);
        }
    }

    #[test]
    fn zero_betas_give_unit_steps() {
        let cfg = OptimizerConfig {
            eta: 0.1,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 1e-14,
            horizon: 4,
            warmup_steps: Some(0),
            ..Default::default()
        };
        let obj = crate::objective::Quadratic::random(6, 2);
        let partition = cfg.partition(6);
        let mut oracle = ReferenceZoAdam::new(6, Some(4));
        let mut w = vec![0.5; 6];
        for t in 1..=5u64 {
            let before = w.clone();
            let mut passes = ForwardPasses::new();
            let mut ledger = MemoryLedger::new();
            let mut ctx = StepCtx {
                noise: &Philox,
                obj: &obj,
                batch: &Batch::Full,
                cfg: &cfg,
                partition: &partition,
                passes: &mut passes,
                ledger: &mut ledger,
            };
            oracle.step(&mut ctx, &mut w, t, 50 + t).unwrap();
            for (a, b) in w.iter().zip(&before) {
                assert!(((a - b).abs() - 0.1).abs() < 1e-6, "{}", (a - b).abs());
            }
        }
    }
}
