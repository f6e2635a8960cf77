use super::{Batch, Objective};
use crate::rng::RngState;

/// `0.5 (w - c)^T A (w - c)` with a dense symmetric `A`. Ignores batches.
#[derive(Clone, Debug)]
pub struct Quadratic {
    name: String,
    dim: usize,
    a: Vec<f64>,
    center: Vec<f64>,
    init: Vec<f64>,
}

impl Quadratic {
    /// Builds from a row-major symmetric matrix. The start point defaults to the origin.
    pub fn new(name: impl Into<String>, a: Vec<f64>, center: Vec<f64>) -> Self {
        let dim = center.len();
        assert_eq!(a.len(), dim * dim, "matrix must be {dim}x{dim}");
        Self {
            name: name.into(),
            dim,
            a,
            init: vec![0.0; dim],
            center,
        }
    }

    /// `0.5 w^T diag(diag) w`.
    pub fn diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut a = vec![0.0; d * d];
        for (i, &x) in diag.iter().enumerate() {
            a[i * d + i] = x;
        }
        Self::new(format!("diag-quadratic-{d}"), a, vec![0.0; d])
    }

    /// A reproducible ill-conditioned SPD quadratic: diagonal curvatures log-uniform
    /// in [1, 100] plus a rank-one coupling, centred at a Gaussian point. Starts at 0.
    pub fn random(d: usize, seed: u64) -> Self {
        let mut rng = RngState::with_subsequence(seed, 20);
        let mut a = vec![0.0; d * d];
        let u: Vec<f64> = (0..d).map(|i| rng.peek_gaussian(i as u64)).collect();
        rng = rng.jump(d as u64);
        for i in 0..d {
            let frac = rng.next_below(1 << 40).expect("fresh stream") as f64 / (1u64 << 40) as f64;
            a[i * d + i] = 100f64.powf(frac);
            for j in 0..d {
                a[i * d + j] += u[i] * u[j] / d as f64;
            }
        }
        let center = (0..d)
            .map(|i| RngState::with_subsequence(seed, 21).peek_gaussian(i as u64))
            .collect();
        Self::new(format!("random-quadratic-{d}-{seed}"), a, center)
    }

    pub fn starting_at(mut self, init: Vec<f64>) -> Self {
        assert_eq!(init.len(), self.dim);
        self.init = init;
        self
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    fn shifted(&self, w: &[f64]) -> Vec<f64> {
        w.iter().zip(&self.center).map(|(x, c)| x - c).collect()
    }
}

impl Objective for Quadratic {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, w: &[f64], _batch: &Batch) -> f64 {
        let x = self.shifted(w);
        let mut total = 0.0;
        for (i, row) in self.a.chunks_exact(self.dim).enumerate() {
            let ax: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            total += x[i] * ax;
        }
        0.5 * total
    }

    fn gradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        let x = self.shifted(w);
        Some(
            self.a
                .chunks_exact(self.dim)
                .map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum())
                .collect(),
        )
    }

    fn initial_point(&self) -> Vec<f64> {
        self.init.clone()
    }
}
