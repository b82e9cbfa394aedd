use super::model::{Params, StudentModel};
use super::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl From<&TrainConfig> for AdamHyper {
    fn from(c: &TrainConfig) -> Self {
        AdamHyper {
            lr: c.lr,
            beta1: c.adam_beta1,
            beta2: c.adam_beta2,
            eps: c.adam_eps,
        }
    }
}

/// Bias-corrected Adam update of `theta` in place. `t` is the 1-based step.
pub fn adam_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    hp: AdamHyper,
) {
    debug_assert!(t >= 1);
    let c1 = 1.0 - hp.beta1.powi(t as i32);
    let c2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Params,
    v: Params,
    t: u64,
}

impl AdamState {
    pub fn new(model: &StudentModel) -> Self {
        AdamState {
            m: Params::zeros_like(&model.params),
            v: Params::zeros_like(&model.params),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One Adam step over every parameter tensor of `model`.
pub fn adam_step(model: &mut StudentModel, grads: &Params, state: &mut AdamState, hp: AdamHyper) {
    state.t += 1;
    let t = state.t;
    let grads = [&grads.w1, &grads.b1, &grads.w2, &grads.b2];
    let thetas = model.params.tensors_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((theta, g), m), v) in thetas.into_iter().zip(grads).zip(ms).zip(vs) {
        adam_update(theta, g, m, v, t, hp);
    }
}
