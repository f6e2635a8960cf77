//! In-place zeroth-order update rules.
//!
//! All three rules share the two-point probe; they differ only in how past
//! projection records are replayed into the parameters.

use crate::error::Result;
use crate::ledger::MemoryLedger;
use crate::objective::{Batch, ForwardPasses, Objective};
use crate::partition::BlockPartition;
use crate::rng::{NoiseSource, RngState};
use crate::spsa::{perturb_inplace, spsa_projection, Probe};

use super::buffer::{HorizonBuffer, StateCache};
use super::config::{beta_v_for, OptimizerConfig};

/// Everything a single optimizer step reads or charges besides its own state.
pub struct StepCtx<'a, N: ?Sized, O: ?Sized> {
    pub noise: &'a N,
    pub obj: &'a O,
    pub batch: &'a Batch,
    pub cfg: &'a OptimizerConfig,
    pub partition: &'a BlockPartition,
    pub passes: &'a mut ForwardPasses,
    pub ledger: &'a mut MemoryLedger,
}

impl<N: NoiseSource + ?Sized, O: Objective + ?Sized> StepCtx<'_, N, O> {
    pub(crate) fn probe(&mut self, w: &mut [f64], seed: u64, step: u64) -> Result<Probe> {
        spsa_projection(
            self.noise,
            self.obj,
            w,
            self.batch,
            self.cfg.mu,
            seed,
            step,
            self.partition,
            self.cfg.restore,
            self.passes,
            self.ledger,
        )
    }
}

/// Weight of the `tau`-th newest record (0-based): `beta^tau`.
#[inline]
pub(crate) fn horizon_weight(beta: f64, tau: usize) -> f64 {
    beta.powi(tau as i32)
}

/// `w <- w - eta * p * z(seed)`.
pub fn mezo_step<N: NoiseSource + ?Sized, O: Objective + ?Sized>(
    ctx: &mut StepCtx<'_, N, O>,
    w: &mut [f64],
    step: u64,
    seed: u64,
) -> Result<Probe> {
    let probe = ctx.probe(w, seed, step)?;
    let coeff = ctx.cfg.eta * probe.record.projection;
    perturb_inplace(ctx.noise, w, seed, -coeff, ctx.partition)?;
    Ok(probe)
}

/// Truncated momentum: replays the last `h` records with weights `beta1^(tau-1)`.
pub fn hmezo_step<N: NoiseSource + ?Sized, O: Objective + ?Sized>(
    ctx: &mut StepCtx<'_, N, O>,
    w: &mut [f64],
    step: u64,
    seed: u64,
    buffer: &mut HorizonBuffer,
) -> Result<Probe> {
    let probe = ctx.probe(w, seed, step)?;
    buffer.push(probe.record);
    for tau in 0..buffer.len() {
        let rec = buffer.newest(tau + 1).expect("tau < len");
        let coeff = ctx.cfg.eta * horizon_weight(ctx.cfg.beta1, tau) * rec.projection;
        perturb_inplace(ctx.noise, w, rec.seed, -coeff, ctx.partition)?;
    }
    Ok(probe)
}

/// Block-wise Adam-style update with moments rebuilt from cached generator states.
///
/// Per block only two temporaries of the block's length are alive. The stream of
/// each record is resumed from the state saved after the previous block instead of
/// being regenerated from its seed.
pub fn adamezo_step<N: NoiseSource + ?Sized, O: Objective + ?Sized>(
    ctx: &mut StepCtx<'_, N, O>,
    w: &mut [f64],
    step: u64,
    seed: u64,
    buffer: &mut HorizonBuffer,
    cache: &mut StateCache,
) -> Result<Probe> {
    let probe = ctx.probe(w, seed, step)?;
    buffer.push(probe.record);
    let cfg = ctx.cfg;

    if step <= cfg.warmup() as u64 {
        let coeff = cfg.eta * probe.record.projection;
        perturb_inplace(ctx.noise, w, seed, -coeff, ctx.partition)?;
        return Ok(probe);
    }

    let records = buffer.len();
    let blocks = ctx.partition.num_blocks();
    cache.reset(records, blocks, ctx.ledger);
    let lr = cfg.eta * beta_v_for(cfg.beta_v_mode, cfg.beta1, cfg.beta2, records);

    let width = ctx.partition.max_block_len();
    ctx.ledger.acquire_floats(2 * width);
    let mut m = vec![0.0; width];
    let mut v = vec![0.0; width];

    for (b, range) in ctx.partition.ranges().enumerate() {
        let len = range.len();
        let (m, v) = (&mut m[..len], &mut v[..len]);
        m.fill(0.0);
        v.fill(0.0);
        for tau in 0..records {
            let rec = buffer.newest(tau + 1).expect("tau < len");
            let state = match b {
                0 => RngState::new(rec.seed),
                _ => cache
                    .get(tau, b - 1)
                    .unwrap_or_else(|| RngState::new(rec.seed).jump(range.start as u64)),
            };
            let p = rec.projection;
            let c1 = horizon_weight(cfg.beta1, tau) * p;
            let c2 = horizon_weight(cfg.beta2, tau) * (p * p);
            for (j, (mj, vj)) in m.iter_mut().zip(v.iter_mut()).enumerate() {
                let z = ctx.noise.gaussian(&state, j as u64);
                *mj += c1 * z;
                *vj += c2 * (z * z);
            }
            cache.set(tau, b, state.advance(len as u64)?);
        }
        for (wi, (mj, vj)) in w[range].iter_mut().zip(m.iter().zip(v.iter())) {
            *wi -= lr * (mj / (vj + cfg.epsilon).sqrt());
        }
    }

    ctx.ledger.release_floats(2 * width);
    Ok(probe)
}
