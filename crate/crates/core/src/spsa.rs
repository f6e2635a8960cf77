//! Two-point gradient projections with in-place perturbation.
//!
//! The direction `z(seed)` is never materialised: each block of the partition is
//! streamed from the generator in partition order, so the concatenation is the
//! same stream for every partition of the same vector.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ledger::MemoryLedger;
use crate::objective::{eval, Batch, ForwardPasses, Objective};
use crate::partition::BlockPartition;
use crate::rng::{NoiseSource, RngState};

/// One step's persisted gradient estimate: `projection * z(seed)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRecord {
    pub step: u64,
    pub seed: u64,
    pub projection: f64,
}

/// How the parameters are returned to their original value after probing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestoreMode {
    /// Regenerate `z` and undo the perturbation arithmetically. Needs no extra
    /// memory; exact whenever every `w_i ± mu z_i` is representable, otherwise the
    /// parameters may move by an ulp.
    #[default]
    Regenerate,
    /// Copy the parameters before probing and copy them back. Always bit-exact;
    /// costs `d` auxiliary floats for the duration of the probe.
    Snapshot,
}

impl FromStr for RestoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "regenerate" => Ok(Self::Regenerate),
            "snapshot" => Ok(Self::Snapshot),
            other => Err(format!("unknown restore mode `{other}`")),
        }
    }
}

/// Result of a two-point probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub record: ProjectionRecord,
    pub loss_plus: f64,
    pub loss_minus: f64,
}

impl Probe {
    /// Midpoint of the two probe losses, a free estimate of the current loss.
    pub fn mean_loss(&self) -> f64 {
        0.5 * (self.loss_plus + self.loss_minus)
    }
}

/// `w += scale * z(seed)`, streamed block by block.
pub fn perturb_inplace<N: NoiseSource + ?Sized>(
    noise: &N,
    w: &mut [f64],
    seed: u64,
    scale: f64,
    partition: &BlockPartition,
) -> Result<()> {
    partition.check_dim(w.len())?;
    let mut state = RngState::new(seed);
    for range in partition.ranges() {
        let next = state.advance(range.len() as u64)?;
        for (i, wi) in w[range].iter_mut().enumerate() {
            *wi += scale * noise.gaussian(&state, i as u64);
        }
        state = next;
    }
    Ok(())
}

/// Estimates `z^T grad L(w, batch)` as `(L(w + mu z) - L(w - mu z)) / (2 mu)`.
///
/// Consumes exactly two forward passes. On divergence the parameters are put back
/// before the error is returned.
#[allow(clippy::too_many_arguments)]
pub fn spsa_projection<N: NoiseSource + ?Sized, O: Objective + ?Sized>(
    noise: &N,
    obj: &O,
    w: &mut [f64],
    batch: &Batch,
    mu: f64,
    seed: u64,
    step: u64,
    partition: &BlockPartition,
    restore: RestoreMode,
    passes: &mut ForwardPasses,
    ledger: &mut MemoryLedger,
) -> Result<Probe> {
    debug_assert!(mu > 0.0);
    let snapshot = match restore {
        RestoreMode::Regenerate => None,
        RestoreMode::Snapshot => {
            ledger.acquire_floats(w.len());
            Some(w.to_vec())
        }
    };
    let restore_to = |w: &mut [f64], from: f64, ledger: &mut MemoryLedger| -> Result<()> {
        match &snapshot {
            Some(saved) => {
                w.copy_from_slice(saved);
                ledger.release_floats(saved.len());
                Ok(())
            }
            None => perturb_inplace(noise, w, seed, from, partition),
        }
    };

    perturb_inplace(noise, w, seed, mu, partition)?;
    let loss_plus = match eval(obj, w, batch, passes) {
        Ok(l) => l,
        Err(e) => {
            restore_to(w, -mu, ledger)?;
            return Err(e);
        }
    };
    perturb_inplace(noise, w, seed, -2.0 * mu, partition)?;
    let loss_minus = eval(obj, w, batch, passes);
    restore_to(w, mu, ledger)?;
    let loss_minus = loss_minus?;

    Ok(Probe {
        record: ProjectionRecord {
            step,
            seed,
            projection: (loss_plus - loss_minus) / (2.0 * mu),
        },
        loss_plus,
        loss_minus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{grad_exact, make_toy, FnObjective, Quadratic, ToyFn};
    use crate::rng::{gaussian_block, FixedPattern, Philox};
    use proptest::prelude::*;

    fn bits(w: &[f64]) -> Vec<u64> {
        w.iter().map(|x| x.to_bits()).collect()
    }

    fn probe<N: NoiseSource, O: Objective>(
        noise: &N,
        obj: &O,
        w: &mut [f64],
        mu: f64,
        seed: u64,
        restore: RestoreMode,
    ) -> (Probe, u64) {
        let mut passes = ForwardPasses::new();
        let partition = BlockPartition::whole(w.len());
        let p = spsa_projection(
            noise,
            obj,
            w,
            &Batch::Full,
            mu,
            seed,
            1,
            &partition,
            restore,
            &mut passes,
            &mut MemoryLedger::new(),
        )
        .unwrap();
        (p, passes.count())
    }

    #[test]
    fn zero_scale_is_identity() {
        let mut w = vec![0.1, -2.5, 3.25];
        let before = bits(&w);
        perturb_inplace(&Philox, &mut w, 9, 0.0, &BlockPartition::whole(3)).unwrap();
        assert_eq!(bits(&w), before);
    }

    #[test]
    fn unit_scale_adds_first_draws() {
        let mut w = vec![1.0, 2.0, 3.0];
        perturb_inplace(&Philox, &mut w, 5, 1.0, &BlockPartition::per_coordinate(3)).unwrap();
        let (z, _) = gaussian_block(RngState::new(5), 3).unwrap();
        for i in 0..3 {
            assert_eq!(w[i].to_bits(), ((i + 1) as f64 + z[i]).to_bits());
        }
    }

    #[test]
    fn three_move_dance_exact_on_dyadic_grid() {
        // +-mu*z lands on representable values, so regenerate-and-subtract is exact.
        let noise = FixedPattern(vec![1.0, -0.5, 0.25]);
        let mut w = vec![3.0, -1.5, 0.75];
        let before = bits(&w);
        let p = BlockPartition::whole(3);
        let mu = 1.0 / 1024.0;
        perturb_inplace(&noise, &mut w, 1, mu, &p).unwrap();
        perturb_inplace(&noise, &mut w, 1, -2.0 * mu, &p).unwrap();
        perturb_inplace(&noise, &mut w, 1, mu, &p).unwrap();
        assert_eq!(bits(&w), before);
    }

    #[test]
    fn regenerate_restore_drifts_at_most_ulps() {
        let obj = Quadratic::random(50, 1);
        let mut w: Vec<f64> = (0..50).map(|i| RngState::new(3).peek_gaussian(i)).collect();
        let before = w.clone();
        probe(&Philox, &obj, &mut w, 1e-3, 77, RestoreMode::Regenerate);
        for (a, b) in w.iter().zip(&before) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1e-3));
        }
    }

    #[test]
    fn quadratic_forced_direction_is_exact() {
        let f = FnObjective::new("square", vec![3.0], |w| w[0] * w[0]);
        let (p, passes) = probe(&FixedPattern(vec![1.0]), &f, &mut [3.0], 1e-3, 0, RestoreMode::Snapshot);
        assert!((p.record.projection - 6.0).abs() < 1e-9);
        assert_eq!(passes, 2);

        let f3 = make_toy(ToyFn::F3);
        let (p, _) = probe(&FixedPattern(vec![1.0, 0.0]), &f3, &mut [-1.0, 1.0], 1e-3, 0, RestoreMode::Snapshot);
        assert!((p.record.projection + 200.0).abs() < 1e-9, "{}", p.record.projection);
    }

    #[test]
    fn second_order_error_on_f1() {
        let f1 = make_toy(ToyFn::F1);
        let w0 = [0.2, 6.75];
        let seed = 21;
        let (z, _) = gaussian_block(RngState::new(seed), 2).unwrap();
        let g = grad_exact(&f1, &w0).unwrap();
        let exact = z[0] * g[0] + z[1] * g[1];
        let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&mu| {
                let (p, _) = probe(&Philox, &f1, &mut w0.clone(), mu, seed, RestoreMode::Snapshot);
                (p.record.projection - exact).abs()
            })
            .collect();
        for pair in errs.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}, errors {errs:?}");
        }
    }

    #[test]
    fn snapshot_mode_accounts_memory() {
        let obj = make_toy(ToyFn::F2);
        let mut ledger = MemoryLedger::new();
        let mut w = vec![-1.0, -1.0];
        spsa_projection(
            &Philox,
            &obj,
            &mut w,
            &Batch::Full,
            1e-3,
            4,
            1,
            &BlockPartition::whole(2),
            RestoreMode::Snapshot,
            &mut ForwardPasses::new(),
            &mut ledger,
        )
        .unwrap();
        assert_eq!(ledger.peak_floats(), 2);
        assert_eq!(ledger.live_floats(), 0);
    }

    #[test]
    fn divergence_restores_parameters() {
        let obj = FnObjective::new("cliff", vec![0.0, 0.0], |w| if w[0] > 0.0 { f64::INFINITY } else { 0.0 });
        let mut w = vec![0.0, 0.0];
        let mut passes = ForwardPasses::new();
        let res = spsa_projection(
            &FixedPattern(vec![1.0]),
            &obj,
            &mut w,
            &Batch::Full,
            0.5,
            0,
            1,
            &BlockPartition::whole(2),
            RestoreMode::Regenerate,
            &mut passes,
            &mut MemoryLedger::new(),
        );
        assert!(res.is_err());
        assert_eq!(w, vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn snapshot_restore_is_bit_exact(
            w in prop::collection::vec(-1e3f64..1e3, 1..40),
            seed in any::<u64>(),
            mu in 1e-6f64..1.0,
        ) {
            let obj = FnObjective::new("sum-sq", w.clone(), |x| x.iter().map(|v| v * v).sum());
            let mut x = w.clone();
            probe(&Philox, &obj, &mut x, mu, seed, RestoreMode::Snapshot);
            prop_assert_eq!(bits(&x), bits(&w));
        }

        #[test]
        fn perturbation_is_partition_invariant(
            w in prop::collection::vec(-10f64..10.0, 1..60),
            seed in any::<u64>(),
            blocks in 1usize..70,
        ) {
            let mut a = w.clone();
            let mut b = w.clone();
            perturb_inplace(&Philox, &mut a, seed, 0.3, &BlockPartition::whole(w.len())).unwrap();
            perturb_inplace(&Philox, &mut b, seed, 0.3, &BlockPartition::even(w.len(), blocks)).unwrap();
            prop_assert_eq!(bits(&a), bits(&b));
        }
    }
}
