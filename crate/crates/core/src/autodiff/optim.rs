use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::StateShapeMismatch);
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::StateShapeMismatch);
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::from_vec(vec![1.0, -2.0]);
        let mut state = AdamState::new([&p]);
        let g = vec![Tensor::zeros(&[2])];
        adam_step(&mut [&mut p], &g, &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_hand_value() {
        let mut p = Tensor::from_vec(vec![0.0]);
        let mut state = AdamState::new([&p]);
        let g = vec![Tensor::from_vec(vec![1.0])];
        adam_step(&mut [&mut p], &g, &mut state, &AdamConfig::default()).unwrap();
        // m_hat = v_hat = 1
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_runs_agree() {
        let run = || {
            let mut p = Tensor::from_vec(vec![0.3, 0.1]);
            let mut state = AdamState::new([&p]);
            for i in 0..5 {
                let g = vec![Tensor::from_vec(vec![i as f64 - 2.0, 0.5])];
                adam_step(&mut [&mut p], &g, &mut state, &AdamConfig::default()).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let mut p = Tensor::from_vec(vec![0.0, 0.0]);
        let mut state = AdamState::new([&Tensor::zeros(&[3])]);
        let g = vec![Tensor::zeros(&[2])];
        let r = adam_step(&mut [&mut p], &g, &mut state, &AdamConfig::default());
        assert!(matches!(r, Err(Error::StateShapeMismatch)));
    }
}
