//! Dense row-major tensors and trainable parameters.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![T::zero(); n], grad: None }
    }

    pub fn from_f32(shape: Vec<usize>, data: &[f32]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::of_f64(v as f64)).collect())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading (batch) dimension.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn item(&self, i: usize) -> &[T] {
        let k = self.item_len();
        &self.data[i * k..(i + 1) * k]
    }
}

/// A named trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> Self {
        let mut value = Tensor::new(shape, data).expect("parameter shape matches data");
        value.grad = Some(vec![T::zero(); value.len()]);
        Param { name: name.into(), value }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![T::zero(); n])
    }

    /// Gaussian with std `sqrt(2 / fan_in)`.
    pub fn he(name: impl Into<String>, shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, he_values(n, fan_in, rng))
    }

    pub fn data(&self) -> &[T] {
        &self.value.data
    }

    pub fn shape(&self) -> &[usize] {
        &self.value.shape
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn grad(&self) -> &[T] {
        self.value.grad.as_deref().expect("parameters always carry a gradient")
    }

    pub fn grad_mut(&mut self) -> &mut [T] {
        self.value.grad.as_deref_mut().expect("parameters always carry a gradient")
    }

    /// Value and gradient borrowed together.
    pub fn split_mut(&mut self) -> (&mut [T], &mut [T]) {
        let Tensor { data, grad, .. } = &mut self.value;
        (data, grad.as_deref_mut().expect("parameters always carry a gradient"))
    }

    pub fn zero_grad(&mut self) {
        self.grad_mut().fill(T::zero());
    }
}

pub fn he_values<T: Scalar>(n: usize, fan_in: usize, rng: &mut impl Rng) -> Vec<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::of_f64(z * std)
        })
        .collect()
}
