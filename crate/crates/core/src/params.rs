//! Named parameter collections and their initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::tensor::Tensor;

/// A fixed, ordered set of named tensors.
pub trait Parameters {
    fn named(&self) -> Vec<(String, &Tensor)>;
    fn named_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn num_values(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    fn sum_squares(&self) -> f64 {
        self.named().iter().map(|(_, t)| t.sum_squares()).sum()
    }
}

/// One gradient buffer per parameter, in [`Parameters::named`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads(pub Vec<Vec<f64>>);

impl ParamGrads {
    pub fn zeros_like<P: Parameters + ?Sized>(params: &P) -> Self {
        Self(params.named().iter().map(|(_, t)| vec![0.0; t.len()]).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|&g| g == 0.0)
    }
}

/// Glorot-uniform: U(±√(6/(fan_in+fan_out))).
pub fn glorot<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, shape, bound)
}

pub fn uniform<R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let dist = Uniform::new_inclusive(-bound, bound);
    let n = shape.iter().product();
    Tensor::raw(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect())
}

pub fn normal<R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    Tensor::raw(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect())
}
