//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::model::{Gradients, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Per-parameter first/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub step: u64,
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub params: AdamParams,
}

impl TrainState {
    pub fn new(model: &NetworkModel, params: AdamParams) -> Self {
        Self {
            step: 0,
            first_moment: Gradients::zeros_like(model),
            second_moment: Gradients::zeros_like(model),
            params,
        }
    }
}

/// One Adam update over every trainable parameter array.
pub fn adam_step(model: &mut NetworkModel, grads: &Gradients, state: &mut TrainState) {
    state.step += 1;
    let t = state.step as i32;
    let p = state.params;
    let bc1 = 1.0 - p.beta1.powi(t);
    let bc2 = 1.0 - p.beta2.powi(t);

    let params = model.param_slices_mut();
    let gs = grads.slices();
    let ms = state.first_moment.slices_mut();
    let vs = state.second_moment.slices_mut();
    for (((param, grad), moment1), moment2) in
        params.into_iter().zip(gs).zip(ms).zip(vs)
    {
        debug_assert_eq!(param.0, grad.0);
        for i in 0..param.1.len() {
            let g = grad.1[i];
            let m = p.beta1 * moment1.1[i] + (1.0 - p.beta1) * g;
            let v = p.beta2 * moment2.1[i] + (1.0 - p.beta2) * g * g;
            moment1.1[i] = m;
            moment2.1[i] = v;
            param.1[i] -= p.learning_rate * (m / bc1) / ((v / bc2).sqrt() + p.epsilon);
        }
    }
}
