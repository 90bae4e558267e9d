//! Bias-corrected Adam.

use crate::params::{ParamGrads, Parameters};
use crate::tensor::{shape_err, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Minimize: θ ← θ − lr·m̂/(√v̂+ε).
    Descent,
    /// Maximize: θ ← θ + lr·m̂/(√v̂+ε).
    Ascent,
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub direction: Direction,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, direction: Direction) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, direction, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &ParamGrads) -> Result<(), TensorError> {
        let mut tensors = params.named_mut();
        if grads.0.len() != tensors.len() {
            return Err(shape_err("adam_step", format!("{} parameters, {} gradients", tensors.len(), grads.0.len())));
        }
        for ((name, t), g) in tensors.iter().zip(&grads.0) {
            if t.len() != g.len() {
                return Err(shape_err("adam_step", format!("{name}: {} values, {} gradients", t.len(), g.len())));
            }
        }
        if self.m.is_empty() {
            self.m = grads.0.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.0.len() || self.m.iter().zip(&grads.0).any(|(m, g)| m.len() != g.len()) {
            return Err(shape_err("adam_step", "moment buffers do not match parameters"));
        }

        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let sign = match self.direction {
            Direction::Descent => -1.0,
            Direction::Ascent => 1.0,
        };
        for (((_, param), g), (m, v)) in tensors.iter_mut().zip(&grads.0).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let values = param.data_mut();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                values[j] += sign * self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            if !param.is_finite() {
                return Err(TensorError::NonFinite { op: "adam_step" });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[derive(Clone)]
    struct Two(Tensor, Tensor);

    impl Parameters for Two {
        fn named(&self) -> Vec<(String, &Tensor)> {
            vec![("a".into(), &self.0), ("b".into(), &self.1)]
        }
        fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
            vec![("a".into(), &mut self.0), ("b".into(), &mut self.1)]
        }
    }

    fn two() -> Two {
        Two(Tensor::vector(vec![0.5, -0.5]).unwrap(), Tensor::vector(vec![0.5]).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = two();
        let mut adam = Adam::new(1e-3, Direction::Descent);
        adam.step(&mut p, &ParamGrads(vec![vec![0.0, 0.0], vec![0.0]])).unwrap();
        assert_eq!(p.0.data(), &[0.5, -0.5]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = two();
        let mut adam = Adam::new(1e-3, Direction::Descent);
        adam.step(&mut p, &ParamGrads(vec![vec![1.0, 1.0], vec![1.0]])).unwrap();
        // m̂ = v̂ = 1 so the step is lr/(1+ε)
        let delta = p.0.data()[0] - 0.5;
        assert!((delta + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15, "{delta}");
        // identical gradients, identical updates
        assert_eq!(p.1.data()[0] - 0.5, delta);

        let mut q = two();
        let mut up = Adam::new(1e-3, Direction::Ascent);
        up.step(&mut q, &ParamGrads(vec![vec![1.0, 1.0], vec![1.0]])).unwrap();
        assert!((q.0.data()[0] - 0.5 + delta).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = two();
        let mut adam = Adam::new(1e-3, Direction::Descent);
        assert!(adam.step(&mut p, &ParamGrads(vec![vec![1.0], vec![1.0]])).is_err());
        assert!(adam.step(&mut p, &ParamGrads(vec![vec![1.0, 1.0]])).is_err());
    }
}
