use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major tensor of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "Tensor::from_vec",
                format!("{:?} = {} values", shape, n),
                format!("{} values", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Centered uniform init scaled by 1/sqrt(fan_in).
    pub fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|_| dist.sample(rng)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

/// A tensor paired with its gradient accumulator. Frozen params still
/// receive gradients (upstream flow needs them) but are never updated.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(&value.shape);
        Param {
            name: name.into(),
            value,
            grad,
            trainable: true,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}
