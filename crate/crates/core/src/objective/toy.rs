use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::{Batch, Objective};

/// The three 2-D test landscapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyFn {
    /// `8(x-1)^2 (1.3x^2 + 2x + 1) + 0.5(y-4)^2`, minimum at (1, 4).
    F1,
    /// Beale's function, minimum at (3, 0.5).
    F2,
    /// `100x^2 + y^2`, minimum at the origin.
    F3,
}

impl ToyFn {
    pub const ALL: [ToyFn; 3] = [ToyFn::F1, ToyFn::F2, ToyFn::F3];

    pub fn value(self, x: f64, y: f64) -> f64 {
        match self {
            ToyFn::F1 => {
                8.0 * (x - 1.0).powi(2) * (1.3 * x * x + 2.0 * x + 1.0) + 0.5 * (y - 4.0).powi(2)
            }
            ToyFn::F2 => {
                let (a, b, c) = beale_residuals(x, y);
                a * a + b * b + c * c
            }
            ToyFn::F3 => 100.0 * x * x + y * y,
        }
    }

    pub fn gradient(self, x: f64, y: f64) -> [f64; 2] {
        match self {
            ToyFn::F1 => {
                let q = 1.3 * x * x + 2.0 * x + 1.0;
                [
                    16.0 * (x - 1.0) * q + 8.0 * (x - 1.0).powi(2) * (2.6 * x + 2.0),
                    y - 4.0,
                ]
            }
            ToyFn::F2 => {
                let (a, b, c) = beale_residuals(x, y);
                let (y2, y3) = (y * y, y * y * y);
                [
                    2.0 * (a * (y - 1.0) + b * (y2 - 1.0) + c * (y3 - 1.0)),
                    2.0 * x * (a + 2.0 * b * y + 3.0 * c * y2),
                ]
            }
            ToyFn::F3 => [200.0 * x, 2.0 * y],
        }
    }

    /// Starting point used in the toy benchmark table.
    pub fn initial_point(self) -> [f64; 2] {
        match self {
            ToyFn::F1 => [0.2, 6.75],
            ToyFn::F2 => [-1.0, -1.0],
            ToyFn::F3 => [-1.0, 1.0],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ToyFn::F1 => "f1",
            ToyFn::F2 => "f2",
            ToyFn::F3 => "f3",
        }
    }
}

fn beale_residuals(x: f64, y: f64) -> (f64, f64, f64) {
    (
        1.5 - x + x * y,
        2.25 - x + x * y * y,
        2.625 - x + x * y * y * y,
    )
}

impl fmt::Display for ToyFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToyFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f1" => Ok(ToyFn::F1),
            "f2" => Ok(ToyFn::F2),
            "f3" => Ok(ToyFn::F3),
            other => Err(format!("unknown toy function `{other}`")),
        }
    }
}

/// A 2-D toy landscape. Ignores batches.
#[derive(Clone, Debug)]
pub struct Toy {
    which: ToyFn,
    init: [f64; 2],
}

impl Toy {
    pub fn which(&self) -> ToyFn {
        self.which
    }

    pub fn starting_at(mut self, init: [f64; 2]) -> Self {
        self.init = init;
        self
    }
}

pub fn make_toy(which: ToyFn) -> Toy {
    Toy {
        which,
        init: which.initial_point(),
    }
}

impl Objective for Toy {
    fn name(&self) -> &str {
        self.which.as_str()
    }

    fn dim(&self) -> usize {
        2
    }

    fn loss(&self, w: &[f64], _batch: &Batch) -> f64 {
        self.which.value(w[0], w[1])
    }

    fn gradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        Some(self.which.gradient(w[0], w[1]).to_vec())
    }

    fn initial_point(&self) -> Vec<f64> {
        self.init.to_vec()
    }
}
