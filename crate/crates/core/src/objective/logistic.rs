use std::io::{Read, Write};

use super::{Batch, Objective};
use crate::error::{Error, Result};
use crate::rng::RngState;

/// Row-major feature matrix with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Self {
        assert_eq!(features.len(), dim * labels.len());
        Self {
            dim,
            features,
            labels,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> (&[f64], f64) {
        (&self.features[i * self.dim..(i + 1) * self.dim], self.labels[i])
    }

    /// Writes `feature_0, ..., feature_{d-1}, label` rows in canonical order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("feature_{i}")).collect();
        header.push("label".into());
        writer.write_record(&header)?;
        for i in 0..self.len() {
            let (x, y) = self.row(i);
            let mut record: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            record.push(format!("{y:?}"));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let header = reader.headers()?.clone();
        let dim = header.len().saturating_sub(1);
        let well_formed = header.iter().next_back() == Some("label")
            && header
                .iter()
                .take(dim)
                .enumerate()
                .all(|(i, h)| h == format!("feature_{i}"));
        if !well_formed {
            return Err(Error::InvalidConfig {
                key: "dataset",
                reason: "header must be feature_0..feature_{d-1},label".into(),
            });
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for record in reader.records() {
            let record = record?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::InvalidConfig {
                    key: "dataset",
                    reason: format!("bad number `{s}`: {e}"),
                })
            };
            for field in record.iter().take(dim) {
                features.push(parse(field)?);
            }
            labels.push(parse(&record[dim])?);
        }
        Ok(Self::new(dim, features, labels))
    }
}

/// Mean binary cross-entropy of a linear classifier.
///
/// The first 80% of the rows (rounded up) train; the remaining rows form the
/// held-out split used for evaluation measurements.
#[derive(Clone, Debug)]
pub struct LogisticTask {
    name: String,
    data: Dataset,
    train_len: usize,
}

impl LogisticTask {
    pub fn from_dataset(name: impl Into<String>, data: Dataset) -> Self {
        let train_len = data.len() - data.len() / 5;
        Self {
            name: name.into(),
            data,
            train_len,
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn train_len(&self) -> usize {
        self.train_len
    }

    fn mean_loss(&self, w: &[f64], rows: impl Iterator<Item = usize>) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for i in rows {
            let (x, y) = self.data.row(i);
            total += bce_with_logit(dot(x, w), y);
            count += 1;
        }
        total / count as f64
    }

    /// Mean loss over the full training split.
    pub fn train_loss(&self, w: &[f64]) -> f64 {
        self.mean_loss(w, 0..self.train_len)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1 + e^s) - y s`, computed without overflow.
fn bce_with_logit(s: f64, y: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p() - y * s
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression on a noisy, nearly separable synthetic dataset.
///
/// Features are i.i.d. standard normal; the label is `1[x . u + 0.1 e > 0]` for a
/// random unit vector `u` and standard normal noise `e`.
pub fn make_synthetic_classification(d: usize, n: usize, seed: u64) -> LogisticTask {
    let teacher_raw: Vec<f64> = (0..d)
        .map(|i| RngState::with_subsequence(seed, 10).peek_gaussian(i as u64))
        .collect();
    let norm = dot(&teacher_raw, &teacher_raw).sqrt();
    let teacher: Vec<f64> = teacher_raw.iter().map(|t| t / norm).collect();
    let feats = RngState::with_subsequence(seed, 11);
    let noise = RngState::with_subsequence(seed, 12);
    let features: Vec<f64> = (0..n * d).map(|i| feats.peek_gaussian(i as u64)).collect();
    let labels = (0..n)
        .map(|i| {
            let score = dot(&features[i * d..(i + 1) * d], &teacher) + 0.1 * noise.peek_gaussian(i as u64);
            if score > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    LogisticTask::from_dataset(
        format!("synthetic-{d}x{n}-seed{seed}"),
        Dataset::new(d, features, labels),
    )
}

impl Objective for LogisticTask {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.data.dim
    }

    fn loss(&self, w: &[f64], batch: &Batch) -> f64 {
        match batch {
            Batch::Full => self.train_loss(w),
            Batch::Indices(ix) => self.mean_loss(w, ix.iter().copied()),
        }
    }

    fn gradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        let mut g = vec![0.0; self.data.dim];
        for i in 0..self.train_len {
            let (x, y) = self.data.row(i);
            let r = sigmoid(dot(x, w)) - y;
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += r * xj;
            }
        }
        let n = self.train_len as f64;
        g.iter_mut().for_each(|v| *v /= n);
        Some(g)
    }

    fn dataset_len(&self) -> Option<usize> {
        Some(self.train_len)
    }

    fn holdout_loss(&self, w: &[f64]) -> f64 {
        if self.train_len == self.data.len() {
            return self.train_loss(w);
        }
        self.mean_loss(w, self.train_len..self.data.len())
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::{central_diff, max_rel_err};
    use super::*;

    #[test]
    fn zero_weights_give_ln2() {
        let task = make_synthetic_classification(8, 40, 1);
        let w = vec![0.0; 8];
        let ln2 = std::f64::consts::LN_2;
        assert!((task.loss(&w, &Batch::Full) - ln2).abs() < 1e-15);
        assert!((task.loss(&w, &Batch::Indices(vec![3, 7])) - ln2).abs() < 1e-15);
        assert!((task.holdout_loss(&w) - ln2).abs() < 1e-15);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = make_synthetic_classification(6, 30, 9);
        let b = make_synthetic_classification(6, 30, 9);
        assert_eq!(a.dataset(), b.dataset());
        assert_ne!(a.dataset(), make_synthetic_classification(6, 30, 10).dataset());
    }

    #[test]
    fn split_sizes() {
        let task = make_synthetic_classification(3, 512, 0);
        assert_eq!(task.train_len(), 410);
        assert_eq!(task.dataset_len(), Some(410));
    }

    #[test]
    fn labels_are_mixed() {
        let task = make_synthetic_classification(20, 200, 4);
        let pos: f64 = (0..200).map(|i| task.dataset().row(i).1).sum();
        assert!(pos > 60.0 && pos < 140.0, "{pos}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let task = make_synthetic_classification(5, 60, 2);
        for k in 0..20u64 {
            let w: Vec<f64> = (0..5)
                .map(|i| RngState::with_subsequence(k, 77).peek_gaussian(i))
                .collect();
            let fd = central_diff(|x| task.train_loss(x), &w, 1e-6);
            let g = task.gradient(&w).unwrap();
            assert!(max_rel_err(&g, &fd) <= 1e-5, "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn loss_is_stable_for_large_logits() {
        assert!((bce_with_logit(800.0, 1.0)).abs() < 1e-12);
        assert!((bce_with_logit(-800.0, 0.0)).abs() < 1e-12);
        assert!((bce_with_logit(800.0, 0.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn csv_roundtrip() {
        let task = make_synthetic_classification(3, 10, 5);
        let mut buf = Vec::new();
        task.dataset().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("feature_0,feature_1,feature_2,label\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(&back, task.dataset());
    }

    #[test]
    fn csv_rejects_bad_header() {
        let bad = "a,b,label\n1,2,0\n";
        assert!(Dataset::read_csv(bad.as_bytes()).is_err());
    }
}
