use serde::{Deserialize, Serialize};

use crate::numerics::{Gradients, ParamId, ParamTape};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(tape: &ParamTape<S>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<S>> = tape.params().iter().map(|p| vec![S::zero(); p.value.len()]).collect();
        AdamState {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update. Frozen prefixes (the padding row) are
/// never touched.
pub fn adam_step<S: Scalar>(tape: &mut ParamTape<S>, grads: &Gradients<S>, state: &mut AdamState<S>, lr: f64) {
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let (b1, b2) = (S::from_f64_lossy(c.beta1), S::from_f64_lossy(c.beta2));
    let (one_b1, one_b2) = (S::one() - b1, S::one() - b2);
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let step = S::from_f64_lossy(lr / bc1);
    let inv_bc2 = S::from_f64_lossy(1.0 / bc2);
    let eps = S::from_f64_lossy(c.eps);
    for i in 0..tape.len() {
        let id = ParamId(i);
        let frozen = tape.param(id).frozen_prefix;
        let g = &grads.get(id).data()[frozen..];
        let m = &mut state.m[i][frozen..];
        let v = &mut state.v[i][frozen..];
        let theta = &mut tape.value_mut(id)[frozen..];
        for j in 0..g.len() {
            m[j] = b1 * m[j] + one_b1 * g[j];
            v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
            theta[j] -= step * m[j] / ((v[j] * inv_bc2).sqrt() + eps);
        }
    }
}
