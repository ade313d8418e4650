//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_LR: f64 = 5e-5;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        AdamState {
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.v[i]
    }
}

pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape {
            op: "adam_step",
            lhs: vec![params.len()],
            rhs: vec![grads.len()],
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / bias1;
            let v_hat = *vi / bias2;
            *w -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let s = AdamState::new(&[], DEFAULT_LR);
        assert_eq!(s.lr, 5e-5);
        assert_eq!((s.beta1, s.beta2, s.eps), (0.9, 0.999, 1e-8));
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![Tensor::scalar(0.0)];
        let mut s = AdamState::new(&p, DEFAULT_LR);
        adam_step(&mut p, &[Tensor::scalar(2.0)], &mut s).unwrap();
        // m̂ = 2, v̂ = 4  →  −lr · 2 / (2 + ε)
        let expected = -5e-5 * 2.0 / (2.0 + 1e-8);
        assert!((p[0].item() - expected).abs() < 1e-18);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = vec![Tensor::vector(vec![1.5, -2.0])];
        let mut s = AdamState::new(&p, DEFAULT_LR);
        adam_step(&mut p, &[Tensor::zeros(&[2])], &mut s).unwrap();
        assert_eq!(p[0].data(), &[1.5, -2.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = vec![Tensor::zeros(&[2])];
        let mut s = AdamState::new(&p, DEFAULT_LR);
        assert!(adam_step(&mut p, &[Tensor::zeros(&[3])], &mut s).is_err());
    }

    #[test]
    fn deterministic_bitwise() {
        let init = vec![Tensor::vector(vec![0.1, -0.2, 0.3])];
        let g = vec![Tensor::vector(vec![0.5, 1e-3, -7.0])];
        let run = || {
            let mut p = init.clone();
            let mut s = AdamState::new(&p, 1e-3);
            for _ in 0..5 {
                adam_step(&mut p, &g, &mut s).unwrap();
            }
            p[0].data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn second_moment_is_nonnegative() {
        let mut p = vec![Tensor::vector(vec![0.0, 0.0])];
        let mut s = AdamState::new(&p, 1e-3);
        for k in 0..4 {
            let g = Tensor::vector(vec![-(k as f64), k as f64 * 0.5]);
            adam_step(&mut p, &[g], &mut s).unwrap();
        }
        assert!(s.second_moment(0).iter().all(|&v| v >= 0.0));
        assert_eq!(s.step_count, 4);
    }
}
