//! Forward-pass-only optimizers.
//!
//! MeZO, its truncated-momentum variant h-MeZO, and AdaMeZO, which rebuilds
//! Adam-style first and second moments block by block from cached counter-based
//! generator states instead of storing them. Full-memory oracles, toy landscapes
//! and a small training harness live alongside.

pub mod error;
pub mod harness;
pub mod ledger;
pub mod objective;
pub mod optim;
pub mod partition;
pub mod rng;
pub mod spsa;

pub use error::{Error, Result};
pub use harness::{
    compare, run, run_with, trajectory_length, ComparisonReport, RunConfig, TerminalReason, Trajectory,
};
pub use ledger::MemoryLedger;
pub use objective::{
    eval, grad_exact, make_synthetic_classification, make_toy, sample_batch, Batch, Dataset,
    FnObjective, ForwardPasses, LogisticTask, Objective, Quadratic, Toy, ToyFn,
};
pub use optim::{
    beta_v, BetaVMode, Checkpoint, HorizonBuffer, Optimizer, OptimizerConfig, OptimizerKind,
    SeedSchedule, StateCache,
};
pub use partition::BlockPartition;
pub use rng::{gaussian_block, rng_init, rng_jump, GaussianBlock, NoiseSource, Philox, RngState};
pub use spsa::{perturb_inplace, spsa_projection, ProjectionRecord, RestoreMode};
