use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for a list of parameters.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        AdamState {
            config,
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].len() != p.len() {
            return Err(Error::shape(format!(
                "adam: parameter {i} has shape {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let (one, eps) = (T::one(), T::lit(c.eps));
    let (inv1, inv2, step) = (T::lit(1.0 / bc1), T::lit(1.0 / bc2), T::lit(c.lr));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let mhat = *mi * inv1;
            let vhat = *vi * inv2;
            *x -= step * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_run(g: f64, steps: usize) -> Vec<f64> {
        let mut p = vec![Tensor::scalar(1.0f64)];
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut s = AdamState::new(cfg, &p);
        let mut trace = vec![1.0];
        for _ in 0..steps {
            adam_step(&mut p, &[Tensor::scalar(g)], &mut s).unwrap();
            trace.push(p[0].item());
        }
        trace
    }

    #[test]
    fn zero_gradient_keeps_params() {
        assert_eq!(scalar_run(0.0, 3), vec![1.0; 4]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [0.37, -4.0] {
            let t = scalar_run(g, 1);
            // m_hat = g, v_hat = g^2 at t = 1.
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((t[1] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let t = scalar_run(2.5, 2);
        assert!(t[1] < t[0] && t[2] < t[1]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = vec![Tensor::<f64>::zeros(vec![2])];
        let mut s = AdamState::new(AdamConfig::default(), &p);
        assert!(adam_step(&mut p, &[Tensor::zeros(vec![3])], &mut s).is_err());
        assert_eq!(s.step(), 0);
    }
}
