//! Optimizers and the per-run state they own.
//!
//! [`Optimizer`] drives one run: it derives the per-step seed, owns the horizon
//! buffer and state cache, and dispatches to the update rule of its
//! [`OptimizerKind`]. The rules themselves are free functions in [`zo`] so that
//! tests and oracles can call them with explicit state.

mod adam;
mod buffer;
mod checkpoint;
mod config;
mod reference;
pub mod zo;

pub use adam::FirstOrderAdam;
pub use buffer::{HorizonBuffer, StateCache};
pub use checkpoint::Checkpoint;
pub use config::{beta_v, beta_v_for, geometric_sum, BetaVMode, OptimizerConfig, OptimizerKind};
pub use reference::{ReferenceZoAdam, TruncatedMomentumOracle};
pub use zo::{adamezo_step, hmezo_step, mezo_step, StepCtx};

use crate::error::{Error, Result};
use crate::ledger::MemoryLedger;
use crate::objective::{check_dim, Batch, ForwardPasses, Objective};
use crate::partition::BlockPartition;
use crate::rng::{u64_at, NoiseSource, Philox};

/// Subsequence of the run seed's stream that supplies per-step direction seeds.
pub const SEED_SUBSEQUENCE: u64 = 1;

/// Per-step direction seeds derived from one run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedSchedule {
    pub run_seed: u64,
    /// Alternate between the first two seeds of the schedule forever.
    pub two_seed: bool,
}

impl SeedSchedule {
    pub fn new(run_seed: u64) -> Self {
        Self {
            run_seed,
            two_seed: false,
        }
    }

    /// Seed for 1-based `step`.
    pub fn seed_for(&self, step: u64) -> u64 {
        let slot = step.saturating_sub(1);
        let slot = if self.two_seed { slot % 2 } else { slot };
        u64_at(self.run_seed, SEED_SUBSEQUENCE, slot)
    }
}

#[derive(Clone, Debug)]
enum Extra {
    None,
    Reference(ReferenceZoAdam),
    Adam(FirstOrderAdam),
}

/// What one step observed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub step: u64,
    /// Probe midpoint for zeroth-order rules, pre-update loss for Adam.
    pub train_loss: f64,
    pub projection: Option<f64>,
}

/// A single optimizer run's mutable state.
#[derive(Clone, Debug)]
pub struct Optimizer<N: NoiseSource = Philox> {
    kind: OptimizerKind,
    cfg: OptimizerConfig,
    partition: BlockPartition,
    schedule: SeedSchedule,
    noise: N,
    step: u64,
    buffer: HorizonBuffer,
    cache: StateCache,
    ledger: MemoryLedger,
    extra: Extra,
}

impl Optimizer<Philox> {
    pub fn new(kind: OptimizerKind, cfg: OptimizerConfig, dim: usize, run_seed: u64) -> Result<Self> {
        Self::with_noise(Philox, kind, cfg, dim, run_seed)
    }
}

impl<N: NoiseSource> Optimizer<N> {
    pub fn with_noise(
        noise: N,
        kind: OptimizerKind,
        cfg: OptimizerConfig,
        dim: usize,
        run_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if dim == 0 {
            return Err(Error::InvalidConfig {
                key: "dim",
                reason: "parameter vector is empty".into(),
            });
        }
        let partition = cfg.partition(dim);
        let mut ledger = MemoryLedger::new();
        let extra = match kind {
            OptimizerKind::ReferenceZoAdam => {
                let oracle = ReferenceZoAdam::new(dim, Some(cfg.horizon));
                ledger.acquire_floats(oracle.aux_floats());
                Extra::Reference(oracle)
            }
            OptimizerKind::FirstOrderAdam => {
                // m, v and the gradient
                ledger.acquire_floats(3 * dim);
                Extra::Adam(FirstOrderAdam::new(dim))
            }
            _ => Extra::None,
        };
        let schedule = SeedSchedule {
            run_seed,
            two_seed: cfg.toy_two_seed,
        };
        Ok(Self {
            kind,
            buffer: HorizonBuffer::new(cfg.horizon),
            cfg,
            partition,
            schedule,
            noise,
            step: 0,
            cache: StateCache::new(),
            ledger,
            extra,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn schedule(&self) -> SeedSchedule {
        self.schedule
    }

    /// Steps completed so far.
    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn buffer(&self) -> &HorizonBuffer {
        &self.buffer
    }

    pub fn cache(&self) -> &StateCache {
        &self.cache
    }

    pub fn ledger(&self) -> &MemoryLedger {
        &self.ledger
    }

    /// Advances one step in place.
    pub fn step<O: Objective + ?Sized>(
        &mut self,
        obj: &O,
        w: &mut [f64],
        batch: &Batch,
        passes: &mut ForwardPasses,
    ) -> Result<StepReport> {
        check_dim(obj, w)?;
        let step = self.step + 1;
        let seed = self.schedule.seed_for(step);
        let mut ctx = StepCtx {
            noise: &self.noise,
            obj,
            batch,
            cfg: &self.cfg,
            partition: &self.partition,
            passes,
            ledger: &mut self.ledger,
        };
        let probe = match (&mut self.extra, self.kind) {
            (_, OptimizerKind::Mezo) => Some(mezo_step(&mut ctx, w, step, seed)?),
            (_, OptimizerKind::Hmezo) => Some(hmezo_step(&mut ctx, w, step, seed, &mut self.buffer)?),
            (_, OptimizerKind::Adamezo) => Some(adamezo_step(
                &mut ctx,
                w,
                step,
                seed,
                &mut self.buffer,
                &mut self.cache,
            )?),
            (Extra::Reference(oracle), _) => {
                let probe = oracle.step_with(&mut ctx, w, step, seed, &self.noise)?;
                self.buffer.push(probe.record);
                Some(probe)
            }
            (Extra::Adam(adam), _) => {
                let loss = adam.step(obj, &self.cfg, w, batch, passes)?;
                self.step = step;
                return Ok(StepReport {
                    step,
                    train_loss: loss,
                    projection: None,
                });
            }
            (Extra::None, k) => unreachable!("{k} carries no extra state"),
        };
        self.step = step;
        let probe = probe.expect("zeroth-order step");
        Ok(StepReport {
            step,
            train_loss: probe.mean_loss(),
            projection: Some(probe.record.projection),
        })
    }

    /// Serialisable snapshot of the buffer, cache and step counter.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            step: self.step,
            records: self.buffer.iter().copied().collect(),
            cache: self.cache.to_rows(),
        }
    }

    /// Resumes from a checkpoint taken by an optimizer with the same kind and config.
    pub fn resume(&mut self, ckpt: &Checkpoint) -> Result<()> {
        match self.kind {
            OptimizerKind::FirstOrderAdam => {
                return Err(Error::BadCheckpoint(
                    "first-order Adam keeps full moments that are not checkpointed".into(),
                ))
            }
            OptimizerKind::Mezo | OptimizerKind::Hmezo | OptimizerKind::Adamezo | OptimizerKind::ReferenceZoAdam => {}
        }
        if ckpt.records.len() > self.cfg.horizon {
            return Err(Error::BadCheckpoint(format!(
                "{} records exceed horizon {}",
                ckpt.records.len(),
                self.cfg.horizon
            )));
        }
        if ckpt.records.last().is_some_and(|r| r.step > ckpt.step) {
            return Err(Error::BadCheckpoint("record newer than checkpoint step".into()));
        }
        let cache = StateCache::from_rows(ckpt.cache.clone())
            .ok_or_else(|| Error::BadCheckpoint("ragged cache grid".into()))?;
        let mut buffer = HorizonBuffer::new(self.cfg.horizon);
        for r in &ckpt.records {
            if buffer.newest(1).is_some_and(|last| last.step >= r.step) {
                return Err(Error::BadCheckpoint("record steps must increase".into()));
            }
            buffer.push(*r);
        }
        if let Extra::Reference(oracle) = &mut self.extra {
            let mut fresh = ReferenceZoAdam::new(self.partition.dim(), Some(self.cfg.horizon));
            ckpt.records.iter().for_each(|r| fresh.push_record(*r));
            *oracle = fresh;
        }
        self.cache.reset(0, 0, &mut self.ledger);
        self.ledger.acquire_states(cache.rows() * cache.cols());
        self.cache = cache;
        self.buffer = buffer;
        self.step = ckpt.step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{make_toy, Quadratic, ToyFn};

    fn bits(w: &[f64]) -> Vec<u64> {
        w.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn two_seed_schedule_alternates() {
        let s = SeedSchedule {
            run_seed: 3,
            two_seed: true,
        };
        assert_ne!(s.seed_for(1), s.seed_for(2));
        assert_eq!(s.seed_for(1), s.seed_for(3));
        assert_eq!(s.seed_for(2), s.seed_for(100));
        let free = SeedSchedule::new(3);
        assert_eq!(free.seed_for(1), s.seed_for(1));
        assert_ne!(free.seed_for(3), free.seed_for(1));
    }

    #[test]
    fn every_zo_step_costs_two_passes() {
        let obj = Quadratic::random(8, 1);
        for kind in OptimizerKind::ALL.into_iter().filter(|k| k.is_zeroth_order()) {
            let cfg = OptimizerConfig {
                eta: 1e-3,
                horizon: 3,
                ..Default::default()
            };
            let mut opt = Optimizer::new(kind, cfg, 8, 5).unwrap();
            let mut w = vec![0.0; 8];
            let mut passes = ForwardPasses::new();
            for step in 1..=10 {
                opt.step(&obj, &mut w, &Batch::Full, &mut passes).unwrap();
                assert_eq!(passes.count(), 2 * step, "{kind}");
            }
        }
    }

    #[test]
    fn hmezo_horizon_one_is_mezo() {
        let obj = make_toy(ToyFn::F1);
        for beta1 in [0.0, 0.5, 0.9] {
            let cfg = OptimizerConfig {
                eta: 0.01,
                horizon: 1,
                beta1,
                ..Default::default()
            };
            let mut a = Optimizer::new(OptimizerKind::Mezo, cfg.clone(), 2, 8).unwrap();
            let mut b = Optimizer::new(OptimizerKind::Hmezo, cfg, 2, 8).unwrap();
            let (mut wa, mut wb) = (obj.initial_point(), obj.initial_point());
            let mut passes = ForwardPasses::new();
            for _ in 0..100 {
                a.step(&obj, &mut wa, &Batch::Full, &mut passes).unwrap();
                b.step(&obj, &mut wb, &Batch::Full, &mut passes).unwrap();
                assert_eq!(bits(&wa), bits(&wb));
            }
        }
    }

    #[test]
    fn hmezo_zero_beta_is_mezo() {
        let obj = make_toy(ToyFn::F3);
        let cfg = OptimizerConfig {
            eta: 0.005,
            horizon: 7,
            beta1: 0.0,
            ..Default::default()
        };
        let mut a = Optimizer::new(OptimizerKind::Mezo, cfg.clone(), 2, 1).unwrap();
        let mut b = Optimizer::new(OptimizerKind::Hmezo, cfg, 2, 1).unwrap();
        let (mut wa, mut wb) = (obj.initial_point(), obj.initial_point());
        let mut passes = ForwardPasses::new();
        for _ in 0..100 {
            a.step(&obj, &mut wa, &Batch::Full, &mut passes).unwrap();
            b.step(&obj, &mut wb, &Batch::Full, &mut passes).unwrap();
        }
        assert_eq!(bits(&wa), bits(&wb));
    }

    #[test]
    fn checkpoint_resume_continues_identically() {
        let obj = Quadratic::random(12, 4);
        let cfg = OptimizerConfig {
            eta: 0.01,
            horizon: 4,
            blocks: 3,
            ..Default::default()
        };
        let mut full = Optimizer::new(OptimizerKind::Adamezo, cfg.clone(), 12, 77).unwrap();
        let mut w_full = vec![0.0; 12];
        let mut passes = ForwardPasses::new();
        for _ in 0..20 {
            full.step(&obj, &mut w_full, &Batch::Full, &mut passes).unwrap();
        }
        let json = full.checkpoint().to_json().unwrap();
        let mut w_resumed = w_full.clone();
        for _ in 0..15 {
            full.step(&obj, &mut w_full, &Batch::Full, &mut passes).unwrap();
        }

        let mut resumed = Optimizer::new(OptimizerKind::Adamezo, cfg, 12, 77).unwrap();
        resumed.resume(&Checkpoint::from_json(&json).unwrap()).unwrap();
        assert_eq!(resumed.steps_done(), 20);
        for _ in 0..15 {
            resumed.step(&obj, &mut w_resumed, &Batch::Full, &mut passes).unwrap();
        }
        assert_eq!(bits(&w_full), bits(&w_resumed));
    }

    #[test]
    fn adam_cannot_resume() {
        let mut opt = Optimizer::new(OptimizerKind::FirstOrderAdam, OptimizerConfig::default(), 2, 0).unwrap();
        let ckpt = opt.checkpoint();
        assert!(matches!(opt.resume(&ckpt), Err(Error::BadCheckpoint(_))));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = OptimizerConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(Optimizer::new(OptimizerKind::Adamezo, cfg, 4, 0).is_err());
    }
}
