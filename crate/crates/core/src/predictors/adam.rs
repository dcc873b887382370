//! Adam parameter updates with bias correction.

use super::net::TrainConfig;

/// First/second moment accumulators and step counter for one parameter group.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over a parameter group.
///
/// Updated parameters are rounded to f32 precision so that exporting them to
/// a 32-bit checkpoint and importing them back is lossless.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient shape mismatch");
    assert_eq!(params.len(), state.m.len(), "parameter/state shape mismatch");
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.adam_beta1.powi(t);
    let bias2 = 1.0 - cfg.adam_beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.adam_beta1 * state.m[i] + (1.0 - cfg.adam_beta1) * g;
        state.v[i] = cfg.adam_beta2 * state.v[i] + (1.0 - cfg.adam_beta2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        let updated = params[i] - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        params[i] = updated as f32 as f64;
    }
}
