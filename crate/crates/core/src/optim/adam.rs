use crate::error::Result;
use crate::objective::{eval, grad_exact, Batch, ForwardPasses, Objective};

use super::config::OptimizerConfig;

/// Exact-gradient Adam with bias correction, `w -= eta * mhat / (sqrt(vhat) + eps)`.
#[derive(Clone, Debug)]
pub struct FirstOrderAdam {
    t: i32,
    pub stored_m: Vec<f64>,
    pub stored_v: Vec<f64>,
}

impl FirstOrderAdam {
    pub fn new(dim: usize) -> Self {
        Self {
            t: 0,
            stored_m: vec![0.0; dim],
            stored_v: vec![0.0; dim],
        }
    }

    /// One step; returns the loss at the pre-update parameters (one forward pass).
    pub fn step<O: Objective + ?Sized>(
        &mut self,
        obj: &O,
        cfg: &OptimizerConfig,
        w: &mut [f64],
        batch: &Batch,
        passes: &mut ForwardPasses,
    ) -> Result<f64> {
        let g = grad_exact(obj, w)?;
        let loss = eval(obj, w, batch, passes)?;
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (((wi, gi), m), v) in w
            .iter_mut()
            .zip(&g)
            .zip(&mut self.stored_m)
            .zip(&mut self.stored_v)
        {
            *m = b1 * *m + (1.0 - b1) * gi;
            *v = b2 * *v + (1.0 - b2) * gi * gi;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *wi -= cfg.eta * mhat / (vhat.sqrt() + cfg.epsilon);
        }
        Ok(loss)
    }
}
