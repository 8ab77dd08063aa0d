//! Sequential layer stacks.

use super::{Layer, Param, Pass, Scalar, Tensor};
use crate::exec::ExecMode;
use crate::{Error, Result};

/// A chain of layers mapping `[N, ..input_shape]` to `[N, outputs]` scores.
pub struct Network<T: Scalar> {
    input_shape: Vec<usize>,
    outputs: usize,
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Network<T> {
    /// Validates the shape chain; the last layer must emit a flat score vector.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Box<dyn Layer<T>>>) -> Result<Self> {
        let mut shape = input_shape.clone();
        for (i, l) in layers.iter().enumerate() {
            shape = l
                .output_shape(&shape)
                .map_err(|e| Error::Shape(format!("layer {i} ({}): {e}", l.kind())))?;
        }
        let [outputs] = shape[..] else {
            return Err(Error::Shape(format!("network output {shape:?} is not a score vector")));
        };
        Ok(Network { input_shape, outputs, layers })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn layers(&self) -> &[Box<dyn Layer<T>>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Box<dyn Layer<T>>] {
        &mut self.layers
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape.len() != self.input_shape.len() + 1 || x.shape[1..] != self.input_shape[..] {
            return Err(Error::Shape(format!(
                "input {:?} does not match [N, {:?}]",
                x.shape, self.input_shape
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = self.layers[0].forward(x, pass)?;
        for l in &mut self.layers[1..] {
            h = l.forward(&h, pass)?;
        }
        Ok(h)
    }

    /// Cache-free evaluation-mode forward pass.
    pub fn infer(&self, x: &Tensor<T>, mode: ExecMode) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = self.layers[0].infer(x, mode)?;
        for l in &self.layers[1..] {
            h = l.infer(&h, mode)?;
        }
        Ok(h)
    }

    /// Backpropagates a score gradient, accumulating parameter gradients.
    /// Returns the gradient with respect to the input.
    pub fn backward(&mut self, grad: &Tensor<T>, mode: ExecMode) -> Result<Tensor<T>> {
        let mut g = grad.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g, mode)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Highest-scoring class per batch item.
    pub fn predict(&self, x: &Tensor<T>, mode: ExecMode) -> Result<Vec<usize>> {
        let scores = self.infer(x, mode)?;
        Ok(scores.data.chunks(self.outputs).map(argmax).collect())
    }
}

/// Index of the largest value; ties go to the lowest index, NaN never wins.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] || (v[best].is_nan() && !x.is_nan()) {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Flatten, Relu};
    use crate::rng::{stream, Stream};

    #[test]
    fn argmax_tie_goes_low() {
        assert_eq!(argmax(&[0.2f32, 0.7, 0.7]), 1);
        assert_eq!(argmax(&[0.5f64, 0.5]), 0);
        assert_eq!(argmax(&[f64::NAN, 0.1]), 1);
    }

    #[test]
    fn shape_chain_validated() {
        let mut rng = stream(0, Stream::Init, 0);
        let ok = Network::<f32>::new(
            vec![2, 3],
            vec![Box::new(Flatten::new()), Box::new(Dense::new("a", 6, 4, &mut rng).unwrap()), Box::new(Relu::new())],
        )
        .unwrap();
        assert_eq!(ok.outputs(), 4);
        assert_eq!(ok.param_count(), 6 * 4 + 4);
        let bad = Network::<f32>::new(vec![2, 3], vec![Box::new(Dense::new("a", 5, 4, &mut rng).unwrap())]);
        assert!(bad.is_err());
        assert!(ok.infer(&Tensor::zeros(vec![1, 3, 2]), ExecMode::Sequential).is_err());
    }

    #[test]
    fn forward_equals_infer_in_eval_mode() {
        let mut rng = stream(0, Stream::Init, 0);
        let mut net = Network::<f64>::new(
            vec![3],
            vec![Box::new(Dense::new("a", 3, 5, &mut rng).unwrap()), Box::new(Relu::new()), Box::new(Dense::new("b", 5, 2, &mut rng).unwrap())],
        )
        .unwrap();
        let x = Tensor::new(vec![2, 3], vec![0.1, -0.4, 0.9, 1.0, 0.3, -0.2]).unwrap();
        let a = net.forward(&x, Pass::eval(ExecMode::Sequential)).unwrap();
        let b = net.infer(&x, ExecMode::Sequential).unwrap();
        assert_eq!(a, b);
    }
}
