//! AdamW: Adam moments with weight decay applied straight to the weights.

use serde::{Deserialize, Serialize};

use super::tape::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self { learning_rate, weight_decay, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moments per parameter tensor, plus the step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn for_params(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }
}

/// Euclidean norm over every gradient entry.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().flat_map(|g| &g.data).map(|v| v * v).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        grads.iter_mut().flat_map(|g| g.data.iter_mut()).for_each(|v| *v *= s);
    }
    norm
}

impl AdamW {
    /// `w ← w (1 − ηλ) − η m̂ / (√v̂ + ε)`.
    pub fn step(&self, params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) {
        assert_eq!(params.len(), grads.len());
        if state.m.len() != params.len() {
            *state = AdamState::for_params(params);
        }
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.learning_rate * self.weight_decay;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len());
            let (m, v) = (&mut state.m[i], &mut state.v[i]);
            for k in 0..p.len() {
                let gk = g.data[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p.data[k] = p.data[k] * decay - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Vec<Tensor> {
        vec![Tensor::new(vec![3], vec![1.0, -2.0, 0.5]), Tensor::new(vec![1], vec![4.0])]
    }

    #[test]
    fn zero_gradient_only_decays() {
        let opt = AdamW::new(0.01, 0.1);
        let mut p = params();
        let g: Vec<Tensor> = p.iter().map(|t| Tensor::zeros(t.shape.clone())).collect();
        let mut s = AdamState::for_params(&p);
        opt.step(&mut p, &g, &mut s);
        for (a, b) in p.iter().zip(params()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(*x, y * (1.0 - 0.01 * 0.1));
            }
        }
    }

    #[test]
    fn first_step_moves_by_about_the_learning_rate() {
        let opt = AdamW::new(1e-3, 0.0);
        let mut p = params();
        let g = vec![Tensor::new(vec![3], vec![0.3, -7.0, 1e-3]), Tensor::new(vec![1], vec![50.0])];
        let mut s = AdamState::for_params(&p);
        opt.step(&mut p, &g, &mut s);
        for ((a, b), gr) in p.iter().zip(params()).zip(&g) {
            for ((x, y), gk) in a.data.iter().zip(&b.data).zip(&gr.data) {
                let dw = x - y;
                assert!(dw.abs() >= 0.99e-3 && dw.abs() <= 1e-3, "{dw}");
                assert_eq!(dw.signum(), -gk.signum());
            }
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let opt = AdamW::new(1e-2, 1e-2);
        let g = vec![Tensor::new(vec![3], vec![0.1, 0.2, -0.3]), Tensor::new(vec![1], vec![1.0])];
        let run = || {
            let mut p = params();
            let mut s = AdamState::default();
            opt.step(&mut p, &g, &mut s);
            opt.step(&mut p, &g, &mut s);
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut g = vec![Tensor::new(vec![2], vec![3.0, 0.0]), Tensor::new(vec![1], vec![4.0])];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-15);
        assert_eq!(clip_global_norm(&mut g, 2.0), global_norm(&g));
    }
}
