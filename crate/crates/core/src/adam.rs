//! Adam with bias correction.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::ParamSet;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            step: 0,
            m: sizes.iter().map(|&n| alloc::vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| alloc::vec![0.0; n]).collect(),
        }
    }

    pub fn for_params<F: Real, P: ParamSet<F>>(params: &P) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self::new(&sizes)
    }
}

/// One Adam update over matching lists of parameter and gradient buffers.
pub fn adam_step<F: Real>(
    params: &mut [&mut [F]],
    grads: &[&[F]],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "{} parameter tensors, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::Shape(format!(
                "tensor {i}: {} params, {} grads, {} optimizer entries",
                p.len(),
                g.len(),
                state.m[i].len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            let gj = g[j].f64();
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            let update = cfg.learning_rate * m_hat / (libm::sqrt(v_hat) + cfg.epsilon);
            if update != 0.0 {
                p[j] = F::of(p[j].f64() - update);
            }
        }
    }
    Ok(())
}

/// Applies [`adam_step`] to a whole network given a gradient holder of the same layout.
pub fn adam_step_params<F: Real, P: ParamSet<F>>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let grad_tensors = grads.tensors();
    let grad_slices: Vec<&[F]> = grad_tensors.iter().map(|(_, t)| t.data.as_slice()).collect();
    let mut tensors = params.tensors_mut();
    let mut param_slices: Vec<&mut [F]> = tensors
        .iter_mut()
        .map(|(_, t)| t.data.as_mut_slice())
        .collect();
    adam_step(&mut param_slices, &grad_slices, state, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = [1.5f64, -2.0];
        let mut state = AdamState::new(&[2]);
        adam_step(&mut [&mut p[..]], &[&[0.0, 0.0][..]], &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(p, [1.5, -2.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = 1, v_hat = 1 at t = 1, so the update is lr / (1 + eps).
        let mut p = [0.0f64];
        let mut state = AdamState::new(&[1]);
        adam_step(&mut [&mut p[..]], &[&[1.0][..]], &mut state, &AdamConfig::default()).unwrap();
        let want = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - want).abs() < 1e-15);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut p = [0.3f32, 0.3];
        let mut state = AdamState::new(&[2]);
        for g in [0.5, -0.2, 0.9] {
            adam_step(&mut [&mut p[..]], &[&[g, g][..]], &mut state, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p[0].to_bits(), p[1].to_bits());
    }

    #[test]
    fn shape_mismatch() {
        let mut p = [0.0f64; 2];
        let mut state = AdamState::new(&[2]);
        let r = adam_step(&mut [&mut p[..]], &[&[1.0][..]], &mut state, &AdamConfig::default());
        assert!(matches!(r, Err(Error::Shape(_))));
        assert_eq!(state.step, 0);
    }
}
