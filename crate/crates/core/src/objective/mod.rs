//! Loss functions and forward-pass accounting.
//!
//! Every loss evaluation made by an optimizer goes through [`eval`], which is the
//! only place a [`ForwardPasses`] counter is incremented.

mod logistic;
mod quadratic;
mod toy;

pub use logistic::{make_synthetic_classification, Dataset, LogisticTask};
pub use quadratic::Quadratic;
pub use toy::{make_toy, Toy, ToyFn};

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Examples a loss is evaluated on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Batch {
    /// The whole training set; the only batch toy objectives ever see.
    Full,
    /// Training-example indices, sorted ascending, without repeats.
    Indices(Vec<usize>),
}

impl Batch {
    pub fn len(&self, dataset_len: usize) -> usize {
        match self {
            Batch::Full => dataset_len,
            Batch::Indices(ix) => ix.len(),
        }
    }

    pub fn is_empty(&self, dataset_len: usize) -> bool {
        self.len(dataset_len) == 0
    }
}

/// A deterministic loss `L(w, batch)`.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Raw loss. Callers that count forward passes go through [`eval`].
    fn loss(&self, w: &[f64], batch: &Batch) -> f64;

    /// Full-batch analytic gradient, when one exists.
    fn gradient(&self, _w: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Number of training examples, or `None` for objectives without a dataset.
    fn dataset_len(&self) -> Option<usize> {
        None
    }

    /// Loss used for evaluation measurements. Defaults to the full-batch training loss.
    fn holdout_loss(&self, w: &[f64]) -> f64 {
        self.loss(w, &Batch::Full)
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

/// Running count of loss evaluations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForwardPasses(u64);

impl ForwardPasses {
    pub fn new() -> Self {
        Self(0)
    }

    pub fn count(&self) -> u64 {
        self.0
    }
}

/// Evaluates the loss as one forward pass.
pub fn eval<O: Objective + ?Sized>(
    obj: &O,
    w: &[f64],
    batch: &Batch,
    passes: &mut ForwardPasses,
) -> Result<f64> {
    check_dim(obj, w)?;
    passes.0 += 1;
    let loss = obj.loss(w, batch);
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Divergence { loss })
    }
}

/// Analytic gradient oracle.
pub fn grad_exact<O: Objective + ?Sized>(obj: &O, w: &[f64]) -> Result<Vec<f64>> {
    check_dim(obj, w)?;
    obj.gradient(w)
        .ok_or_else(|| Error::NoGradient(obj.name().to_string()))
}

pub(crate) fn check_dim<O: Objective + ?Sized>(obj: &O, w: &[f64]) -> Result<()> {
    if w.len() == obj.dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: w.len(),
        })
    }
}

/// Samples `size` distinct training indices uniformly (Floyd's algorithm).
///
/// Consumes exactly `size` slots of `rng`. Objectives without a dataset always
/// return [`Batch::Full`] and leave the state untouched; asking for the whole
/// dataset returns every index in canonical order.
pub fn sample_batch<O: Objective + ?Sized>(
    obj: &O,
    rng: RngState,
    size: usize,
) -> Result<(Batch, RngState)> {
    let Some(n) = obj.dataset_len() else {
        return Ok((Batch::Full, rng));
    };
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if size > n {
        return Err(Error::BatchTooLarge {
            requested: size,
            available: n,
        });
    }
    let mut state = rng;
    let mut chosen = std::collections::BTreeSet::new();
    for j in (n - size)..n {
        let t = state.next_below(j as u64 + 1)? as usize;
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    Ok((Batch::Indices(chosen.into_iter().collect()), state))
}

type LossFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Objective built from closures; ignores batches.
pub struct FnObjective {
    name: String,
    dim: usize,
    init: Vec<f64>,
    loss: LossFn,
    grad: Option<GradFn>,
}

impl FnObjective {
    pub fn new(
        name: impl Into<String>,
        init: Vec<f64>,
        loss: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim: init.len(),
            init,
            loss: Box::new(loss),
            grad: None,
        }
    }

    pub fn with_gradient(
        mut self,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Box::new(grad));
        self
    }
}

impl Objective for FnObjective {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, w: &[f64], _batch: &Batch) -> f64 {
        (self.loss)(w)
    }

    fn gradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        self.grad.as_ref().map(|g| g(w))
    }

    fn initial_point(&self) -> Vec<f64> {
        self.init.clone()
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_counts_and_checks() {
        let obj = make_toy(ToyFn::F3);
        let mut passes = ForwardPasses::new();
        assert_eq!(eval(&obj, &[-1.0, 1.0], &Batch::Full, &mut passes).unwrap(), 101.0);
        assert_eq!(passes.count(), 1);
        assert!(matches!(
            eval(&obj, &[1.0], &Batch::Full, &mut passes),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        let bad = FnObjective::new("nan", vec![0.0], |_| f64::NAN);
        assert!(matches!(
            eval(&bad, &[0.0], &Batch::Full, &mut passes),
            Err(Error::Divergence { .. })
        ));
        assert_eq!(passes.count(), 2);
    }

    #[test]
    fn grad_unsupported() {
        let obj = FnObjective::new("black-box", vec![0.0], |w| w[0] * w[0]);
        assert!(matches!(grad_exact(&obj, &[1.0]), Err(Error::NoGradient(_))));
    }

    #[test]
    fn toy_batches_are_full() {
        let obj = make_toy(ToyFn::F1);
        let s = RngState::new(1);
        let (b, next) = sample_batch(&obj, s, 16).unwrap();
        assert_eq!(b, Batch::Full);
        assert_eq!(next, s);
    }

    #[test]
    fn batch_sampling() {
        let task = make_synthetic_classification(4, 50, 3);
        let n = task.dataset_len().unwrap();
        let s = RngState::with_subsequence(9, 2);
        let (all, _) = sample_batch(&task, s, n).unwrap();
        assert_eq!(all, Batch::Indices((0..n).collect()));

        let (b1, s1) = sample_batch(&task, s, 8).unwrap();
        let (b2, _) = sample_batch(&task, s, 8).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(s1.offset, 8);
        let Batch::Indices(ix) = &b1 else { panic!() };
        assert_eq!(ix.len(), 8);
        assert!(ix.windows(2).all(|p| p[0] < p[1]));
        assert!(ix.iter().all(|&i| i < n));

        assert!(matches!(
            sample_batch(&task, s, n + 1),
            Err(Error::BatchTooLarge { .. })
        ));
    }

    #[test]
    fn empty_dataset() {
        let task = LogisticTask::from_dataset("empty", Dataset::new(3, vec![], vec![]));
        assert!(matches!(
            sample_batch(&task, RngState::new(0), 1),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn batch_sampling_is_roughly_uniform() {
        let task = make_synthetic_classification(2, 25, 1);
        let n = task.dataset_len().unwrap();
        let mut hits = vec![0u32; n];
        let mut s = RngState::with_subsequence(5, 2);
        let rounds = 20_000;
        for _ in 0..rounds {
            let (b, next) = sample_batch(&task, s, 4).unwrap();
            s = next;
            if let Batch::Indices(ix) = b {
                for i in ix {
                    hits[i] += 1;
                }
            }
        }
        let expected = rounds as f64 * 4.0 / n as f64;
        for h in hits {
            assert!((h as f64 - expected).abs() < 0.1 * expected, "{h} vs {expected}");
        }
    }
}
