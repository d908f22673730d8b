use serde::{Deserialize, Serialize};

use super::ModelParams;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam optimizer moments for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    step: u64,
    m: ModelParams,
    v: ModelParams,
}

impl AdamState {
    pub fn new(lr: f64, d: usize, h: usize) -> Self {
        Self {
            lr,
            step: 0,
            m: ModelParams::zeros(d, h),
            v: ModelParams::zeros(d, h),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Returns the updated parameters with bias-corrected moments.
    pub fn step(&mut self, params: &ModelParams, grads: &ModelParams) -> ModelParams {
        assert!(params.same_shape(grads) && params.same_shape(&self.m), "optimizer shape mismatch");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let mut out = params.clone();
        for (((w, g), m), v) in out
            .values_mut()
            .zip(grads.values())
            .zip(self.m.values_mut())
            .zip(self.v.values_mut())
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        }
        out
    }
}
