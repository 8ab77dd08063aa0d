//! Layers with hand-written backward passes.
//!
//! Activations are laid out `[N, H, W, C]` (batch first, channels last) for
//! convolutions and `[N, F]` for dense layers. Every layer caches what its
//! backward pass needs during `forward`; `infer` is the cache-free variant used
//! for read-only inference.

use std::any::Any;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::scalar::{gemm_rows, Mat};
use super::{Param, Scalar, Tensor};
use crate::exec::{for_each_chunk_mut, for_each_chunk_pair_mut, ExecMode};
use crate::{Error, Result};

/// Forward-pass settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pass {
    pub mode: ExecMode,
    /// Enables dropout.
    pub training: bool,
}

impl Pass {
    pub fn train(mode: ExecMode) -> Self {
        Pass { mode, training: true }
    }

    pub fn eval(mode: ExecMode) -> Self {
        Pass { mode, training: false }
    }
}

/// A differentiable layer. `Any` lets callers reach layer-specific state
/// through `&dyn Layer` (e.g. capsule outputs).
pub trait Layer<T: Scalar>: Any + Send + Sync {
    fn kind(&self) -> &'static str;

    /// Output shape of one batch item given the item's input shape.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    fn infer(&self, x: &Tensor<T>, mode: ExecMode) -> Result<Tensor<T>>;

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>>;

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, grad: &Tensor<T>, mode: ExecMode) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }
}

fn no_cache(kind: &str) -> Error {
    Error::Shape(format!("{kind}: backward called without a cached forward pass"))
}

fn check_grad_shape<T>(kind: &str, grad: &Tensor<T>, want: &[usize]) -> Result<()> {
    if grad.shape != want {
        return Err(Error::Shape(format!("{kind}: gradient shape {:?}, expected {want:?}", grad.shape)));
    }
    Ok(())
}

/// Valid (unpadded) 2-D cross-correlation. Weights are `[C_out, K_h, K_w, C_in]`.
pub struct Conv2d<T: Scalar> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<(Vec<usize>, Vec<T>)>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Shape(format!("{name}: zero-sized convolution geometry")));
        }
        let fan_in = kernel.0 * kernel.1 * in_channels;
        Ok(Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: Param::he(format!("{name}.weight"), vec![out_channels, kernel.0, kernel.1, in_channels], fan_in, rng),
            bias: Param::zeros(format!("{name}.bias"), vec![out_channels]),
            cache: None,
        })
    }

    fn patch_len(&self) -> usize {
        self.kernel.0 * self.kernel.1 * self.in_channels
    }

    fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        if h < kh || w < kw {
            return Err(Error::Shape(format!(
                "convolution kernel {kh}x{kw} does not fit a {h}x{w} input"
            )));
        }
        Ok(((h - kh) / self.stride.0 + 1, (w - kw) / self.stride.1 + 1))
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize)> {
        match x.shape[..] {
            [n, h, w, c] if c == self.in_channels => {
                let (ho, wo) = self.out_hw(h, w)?;
                Ok((n, h, w, ho, wo))
            }
            _ => Err(Error::Shape(format!(
                "convolution expects [N, H, W, {}], got {:?}",
                self.in_channels, x.shape
            ))),
        }
    }

    fn im2col(&self, x: &Tensor<T>, mode: ExecMode) -> Result<(Vec<T>, usize, usize, usize)> {
        let (n, h, w, ho, wo) = self.geometry(x)?;
        let _ = h;
        let c = self.in_channels;
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let k = self.patch_len();
        let mut cols = vec![T::zero(); n * ho * wo * k];
        let item = x.item_len();
        for_each_chunk_mut(mode, &mut cols, ho * wo * k, |s, out| {
            let xs = &x.data[s * item..(s + 1) * item];
            for oh in 0..ho {
                for ow in 0..wo {
                    let row = &mut out[(oh * wo + ow) * k..(oh * wo + ow + 1) * k];
                    for i in 0..kh {
                        let src = ((oh * sh + i) * w + ow * sw) * c;
                        row[i * kw * c..(i + 1) * kw * c].copy_from_slice(&xs[src..src + kw * c]);
                    }
                }
            }
        });
        Ok((cols, n, ho, wo))
    }

    fn apply(&self, cols: &[T], n: usize, ho: usize, wo: usize, mode: ExecMode) -> Tensor<T> {
        let k = self.patch_len();
        let co = self.out_channels;
        let m = n * ho * wo;
        let mut out = vec![T::zero(); m * co];
        gemm_rows(mode, m, k, co, T::one(), Mat::rows(cols, k), Mat::rows(self.weight.data(), k).t(), T::zero(), &mut out);
        let b = self.bias.data();
        for row in out.chunks_mut(co) {
            for (o, &bi) in row.iter_mut().zip(b) {
                *o = *o + bi;
            }
        }
        Tensor { shape: vec![n, ho, wo, co], data: out, grad: None }
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn kind(&self) -> &'static str {
        "conv2d"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *input {
            [h, w, c] if c == self.in_channels => {
                let (ho, wo) = self.out_hw(h, w)?;
                Ok(vec![ho, wo, self.out_channels])
            }
            _ => Err(Error::Shape(format!("convolution expects [H, W, {}], got {input:?}", self.in_channels))),
        }
    }

    fn infer(&self, x: &Tensor<T>, mode: ExecMode) -> Result<Tensor<T>> {
        let (cols, n, ho, wo) = self.im2col(x, mode)?;
        Ok(self.apply(&cols, n, ho, wo, mode))
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let (cols, n, ho, wo) = self.im2col(x, pass.mode)?;
        let out = self.apply(&cols, n, ho, wo, pass.mode);
        self.cache = Some((x.shape.clone(), cols));
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<T>, mode: ExecMode) -> Result<Tensor<T>> {
        let (in_shape, cols) = self.cache.as_ref().ok_or_else(|| no_cache("conv2d"))?;
        let (n, h, w, c) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
        let (ho, wo) = self.out_hw(h, w)?;
        let co = self.out_channels;
        check_grad_shape("conv2d", grad, &[n, ho, wo, co])?;
        let k = self.patch_len();
        let m = n * ho * wo;
        let g = &grad.data;

        {
            let (_, dw) = self.weight.split_mut();
            gemm_rows(mode, co, m, k, T::one(), Mat::rows(g, co).t(), Mat::rows(cols, k), T::one(), dw);
        }
        let db = self.bias.grad_mut();
        for row in g.chunks(co) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d = *d + v;
            }
        }

        let mut dcols = vec![T::zero(); m * k];
        gemm_rows(mode, m, co, k, T::one(), Mat::rows(g, co), Mat::rows(self.weight.data(), k), T::zero(), &mut dcols);

        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let mut dx = vec![T::zero(); n * h * w * c];
        for_each_chunk_mut(mode, &mut dx, h * w * c, |s, dxs| {
            let src = &dcols[s * ho * wo * k..(s + 1) * ho * wo * k];
            for oh in 0..ho {
                for ow in 0..wo {
                    let row = &src[(oh * wo + ow) * k..(oh * wo + ow + 1) * k];
                    for i in 0..kh {
                        let dst = ((oh * sh + i) * w + ow * sw) * c;
                        for (d, &v) in dxs[dst..dst + kw * c].iter_mut().zip(&row[i * kw * c..(i + 1) * kw * c]) {
                            *d = *d + v;
                        }
                    }
                }
            }
        });
        Ok(Tensor { shape: in_shape.clone(), data: dx, grad: None })
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Affine map `[N, in] -> [N, out]`. Weights are `[in, out]`.
pub struct Dense<T: Scalar> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Shape(format!("{name}: zero-sized dense layer")));
        }
        Ok(Dense {
            weight: Param::he(format!("{name}.weight"), vec![inputs, outputs], inputs, rng),
            bias: Param::zeros(format!("{name}.bias"), vec![outputs]),
            cache: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    fn check(&self, x: &Tensor<T>) -> Result<usize> {
        if x.shape.len() != 2 || x.shape[1] != self.inputs() {
            return Err(Error::Shape(format!("dense layer expects [N, {}], got {:?}", self.inputs(), x.shape)));
        }
        Ok(x.shape[0])
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn kind(&self) -> &'static str {
        "dense"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input != [self.inputs()] {
            return Err(Error::Shape(format!("dense layer expects [{}], got {input:?}", self.inputs())));
        }
        Ok(vec![self.outputs()])
    }

    fn infer(&self, x: &Tensor<T>, mode: ExecMode) -> Result<Tensor<T>> {
        let n = self.check(x)?;
        let (i, o) = (self.inputs(), self.outputs());
        let mut out = vec![T::zero(); n * o];
        for row in out.chunks_mut(o) {
            row.copy_from_slice(self.bias.data());
        }
        gemm_rows(mode, n, i, o, T::one(), Mat::rows(&x.data, i), Mat::rows(self.weight.data(), o), T::one(), &mut out);
        Ok(Tensor { shape: vec![n, o], data: out, grad: None })
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let out = self.infer(x, pass.mode)?;
        self.cache = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<T>, mode: ExecMode) -> Result<Tensor<T>> {
        let x = self.cache.as_ref().ok_or_else(|| no_cache("dense"))?;
        let (n, i, o) = (x.shape[0], self.inputs(), self.outputs());
        check_grad_shape("dense", grad, &[n, o])?;
        {
            let (_, dw) = self.weight.split_mut();
            gemm_rows(mode, i, n, o, T::one(), Mat::rows(&x.data, i).t(), Mat::rows(&grad.data, o), T::one(), dw);
        }
        let db = self.bias.grad_mut();
        for row in grad.data.chunks(o) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d = *d + v;
            }
        }
        let mut dx = vec![T::zero(); n * i];
        gemm_rows(mode, n, o, i, T::one(), Mat::rows(&grad.data, o), Mat::rows(self.weight.data(), o).t(), T::zero(), &mut dx);
        Ok(Tensor { shape: vec![n, i], data: dx, grad: None })
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Default)]
pub struct Relu<T> {
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Relu { cache: None }
    }
}

impl<T: Scalar> Layer<T> for Relu<T> {
    fn kind(&self) -> &'static str {
        "relu"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn infer(&self, x: &Tensor<T>, _mode: ExecMode) -> Result<Tensor<T>> {
        let data = x.data.iter().map(|&v| v.max(T::zero())).collect();
        Ok(Tensor { shape: x.shape.clone(), data, grad: None })
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let out = self.infer(x, pass.mode)?;
        self.cache = Some(out.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<T>, _mode: ExecMode) -> Result<Tensor<T>> {
        let out = self.cache.as_ref().ok_or_else(|| no_cache("relu"))?;
        check_grad_shape("relu", grad, &out.shape)?;
        let data = grad
            .data
            .iter()
            .zip(&out.data)
            .map(|(&g, &y)| if y > T::zero() { g } else { T::zero() })
            .collect();
        Ok(Tensor { shape: grad.shape.clone(), data, grad: None })
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` in training,
/// identity otherwise.
pub struct Dropout<T> {
    pub rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<T>>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Range(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Dropout { rate, rng, mask: None })
    }
}

impl<T: Scalar> Layer<T> for Dropout<T> {
    fn kind(&self) -> &'static str {
        "dropout"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn infer(&self, x: &Tensor<T>, _mode: ExecMode) -> Result<Tensor<T>> {
        Ok(Tensor { shape: x.shape.clone(), data: x.data.clone(), grad: None })
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        if !pass.training || self.rate == 0.0 {
            self.mask = None;
            return self.infer(x, pass.mode);
        }
        let keep = T::of_f64(1.0 / (1.0 - self.rate));
        let rate = self.rate;
        let rng = &mut self.rng;
        let mask: Vec<T> = (0..x.len()).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect();
        let data = x.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.mask = Some(mask);
        Ok(Tensor { shape: x.shape.clone(), data, grad: None })
    }

    fn backward(&mut self, grad: &Tensor<T>, _mode: ExecMode) -> Result<Tensor<T>> {
        let data = match &self.mask {
            Some(mask) => {
                if mask.len() != grad.len() {
                    return Err(Error::Shape("dropout: gradient size differs from the forward pass".into()));
                }
                grad.data.iter().zip(mask).map(|(&g, &m)| g * m).collect()
            }
            None => grad.data.clone(),
        };
        Ok(Tensor { shape: grad.shape.clone(), data, grad: None })
    }
}

/// Non-overlapping max pooling over `[N, H, W, C]`; trailing rows/columns
/// that do not fill a window are dropped.
pub struct MaxPool2d<T> {
    pub kernel: (usize, usize),
    cache: Option<(Vec<usize>, Vec<usize>)>,
    _t: std::marker::PhantomData<T>,
}

impl<T: Scalar> MaxPool2d<T> {
    pub fn new(kernel: (usize, usize)) -> Result<Self> {
        if kernel.0 == 0 || kernel.1 == 0 {
            return Err(Error::Shape("zero-sized pooling window".into()));
        }
        Ok(MaxPool2d { kernel, cache: None, _t: std::marker::PhantomData })
    }

    fn pool(&self, x: &Tensor<T>, mode: ExecMode) -> Result<(Tensor<T>, Vec<usize>)> {
        let [n, h, w, c] = x.shape[..] else {
            return Err(Error::Shape(format!("max pooling expects [N, H, W, C], got {:?}", x.shape)));
        };
        let (kh, kw) = self.kernel;
        let (ho, wo) = (h / kh, w / kw);
        if ho == 0 || wo == 0 {
            return Err(Error::Shape(format!("pooling window {kh}x{kw} does not fit {h}x{w}")));
        }
        let per = ho * wo * c;
        let mut out = vec![T::zero(); n * per];
        let mut arg = vec![0usize; n * per];
        for_each_chunk_pair_mut(mode, &mut out, per, &mut arg, per, |s, o, a| {
            let base = s * h * w * c;
            for oh in 0..ho {
                for ow in 0..wo {
                    for ch in 0..c {
                        let mut best = base + ((oh * kh) * w + ow * kw) * c + ch;
                        for i in 0..kh {
                            for j in 0..kw {
                                let idx = base + ((oh * kh + i) * w + ow * kw + j) * c + ch;
                                if x.data[idx] > x.data[best] {
                                    best = idx;
                                }
                            }
                        }
                        let k = (oh * wo + ow) * c + ch;
                        o[k] = x.data[best];
                        a[k] = best;
                    }
                }
            }
        });
        Ok((Tensor { shape: vec![n, ho, wo, c], data: out, grad: None }, arg))
    }
}

impl<T: Scalar> Layer<T> for MaxPool2d<T> {
    fn kind(&self) -> &'static str {
        "maxpool2d"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *input {
            [h, w, c] if h >= self.kernel.0 && w >= self.kernel.1 => Ok(vec![h / self.kernel.0, w / self.kernel.1, c]),
            _ => Err(Error::Shape(format!("pooling {:?} does not fit input {input:?}", self.kernel))),
        }
    }

    fn infer(&self, x: &Tensor<T>, mode: ExecMode) -> Result<Tensor<T>> {
        Ok(self.pool(x, mode)?.0)
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let (out, arg) = self.pool(x, pass.mode)?;
        self.cache = Some((x.shape.clone(), arg));
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<T>, _mode: ExecMode) -> Result<Tensor<T>> {
        let (shape, arg) = self.cache.as_ref().ok_or_else(|| no_cache("maxpool2d"))?;
        if grad.len() != arg.len() {
            return Err(Error::Shape("max pooling: gradient size differs from the forward pass".into()));
        }
        let mut dx = vec![T::zero(); shape.iter().product()];
        for (&a, &g) in arg.iter().zip(&grad.data) {
            dx[a] = dx[a] + g;
        }
        Ok(Tensor { shape: shape.clone(), data: dx, grad: None })
    }
}

/// Collapses every non-batch dimension.
#[derive(Default)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten { cache: None }
    }
}

impl<T: Scalar> Layer<T> for Flatten {
    fn kind(&self) -> &'static str {
        "flatten"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(vec![input.iter().product()])
    }

    fn infer(&self, x: &Tensor<T>, _mode: ExecMode) -> Result<Tensor<T>> {
        Tensor::new(vec![x.batch(), x.item_len()], x.data.clone())
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        self.cache = Some(x.shape.clone());
        <Self as Layer<T>>::infer(self, x, pass.mode)
    }

    fn backward(&mut self, grad: &Tensor<T>, _mode: ExecMode) -> Result<Tensor<T>> {
        let shape = self.cache.as_ref().ok_or_else(|| no_cache("flatten"))?;
        Tensor::new(shape.clone(), grad.data.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn rand_tensor(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
        let mut rng = stream(seed, Stream::Check, 0);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct quadruple-loop convolution.
    fn naive_conv(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Vec<f64> {
        let [n, h, w, c] = x.shape[..] else { unreachable!() };
        let (kh, kw) = conv.kernel;
        let (sh, sw) = conv.stride;
        let co = conv.out_channels;
        let (ho, wo) = ((h - kh) / sh + 1, (w - kw) / sw + 1);
        let wt = conv.weight.data();
        let mut out = vec![0.0; n * ho * wo * co];
        for s in 0..n {
            for oh in 0..ho {
                for ow in 0..wo {
                    for o in 0..co {
                        let mut acc = conv.bias.data()[o];
                        for i in 0..kh {
                            for j in 0..kw {
                                for ch in 0..c {
                                    let xv = x.data[((s * h + oh * sh + i) * w + ow * sw + j) * c + ch];
                                    acc += xv * wt[((o * kh + i) * kw + j) * c + ch];
                                }
                            }
                        }
                        out[((s * ho + oh) * wo + ow) * co + o] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_loop() {
        let mut rng = stream(3, Stream::Init, 0);
        let mut conv = Conv2d::<f64>::new("c", 2, 3, (2, 2), (1, 1), &mut rng).unwrap();
        conv.bias.value.data = vec![0.1, -0.2, 0.3];
        let x = rand_tensor(vec![2, 4, 4, 2], 5);
        let got = conv.infer(&x, ExecMode::Parallel).unwrap();
        assert_eq!(got.shape, vec![2, 3, 3, 3]);
        for (a, b) in got.data.iter().zip(naive_conv(&conv, &x)) {
            assert!((a - b).abs() <= 1e-12);
        }
        let strided = Conv2d::<f64>::new("s", 2, 4, (1, 3), (1, 2), &mut rng).unwrap();
        let x = rand_tensor(vec![3, 2, 9, 2], 6);
        let got = strided.infer(&x, ExecMode::Sequential).unwrap();
        assert_eq!(got.shape, vec![3, 2, 4, 4]);
        for (a, b) in got.data.iter().zip(naive_conv(&strided, &x)) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn conv_output_geometry() {
        let mut rng = stream(1, Stream::Init, 0);
        let conv = Conv2d::<f32>::new("c", 2, 512, (1, 10), (1, 10), &mut rng).unwrap();
        assert_eq!(conv.output_shape(&[10, 100, 2]).unwrap(), vec![10, 10, 512]);
        assert!(conv.output_shape(&[10, 5, 2]).is_err());
        assert!(Conv2d::<f32>::new("z", 2, 4, (1, 0), (1, 1), &mut rng).is_err());
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut rng = stream(1, Stream::Init, 0);
        let mut conv = Conv2d::<f64>::new("c", 3, 3, (1, 1), (1, 1), &mut rng).unwrap();
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        conv.weight.value.data = w;
        let x = rand_tensor(vec![2, 3, 4, 3], 9);
        assert_eq!(conv.infer(&x, ExecMode::Parallel).unwrap().data, x.data);
    }

    #[test]
    fn dense_examples() {
        let mut rng = stream(1, Stream::Init, 0);
        let mut d = Dense::<f64>::new("d", 2, 1, &mut rng).unwrap();
        d.weight.value.data = vec![1.0, 1.0];
        let x = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        assert_eq!(d.infer(&x, ExecMode::Sequential).unwrap().data, vec![7.0]);
        let mut id = Dense::<f64>::new("i", 3, 3, &mut rng).unwrap();
        id.weight.value.data = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let x = rand_tensor(vec![4, 3], 2);
        assert_eq!(id.infer(&x, ExecMode::Sequential).unwrap().data, x.data);
        assert!(d.infer(&rand_tensor(vec![1, 3], 1), ExecMode::Sequential).is_err());
    }

    #[test]
    fn dropout_identity_at_inference_and_unbiased_in_training() {
        let mut d = Dropout::<f64>::new(0.1, stream(1, Stream::Dropout, 0)).unwrap();
        let x = Tensor::new(vec![1, 1000], vec![2.0; 1000]).unwrap();
        assert_eq!(d.forward(&x, Pass::eval(ExecMode::Sequential)).unwrap().data, x.data);
        let mut sum = 0.0;
        let passes = 100;
        for _ in 0..passes {
            sum += d.forward(&x, Pass::train(ExecMode::Sequential)).unwrap().data.iter().sum::<f64>();
        }
        let mean = sum / (passes * 1000) as f64;
        assert!((mean - 2.0).abs() < 0.02, "{mean}");
        assert!(Dropout::<f64>::new(1.0, stream(1, Stream::Dropout, 0)).is_err());
    }

    #[test]
    fn maxpool_picks_window_maximum() {
        let mut p = MaxPool2d::<f64>::new((1, 2)).unwrap();
        let x = Tensor::new(vec![1, 1, 5, 1], vec![1.0, 3.0, -1.0, -2.0, 9.0]).unwrap();
        let y = p.forward(&x, Pass::eval(ExecMode::Sequential)).unwrap();
        assert_eq!(y.shape, vec![1, 1, 2, 1]);
        assert_eq!(y.data, vec![3.0, -1.0]);
        let g = p.backward(&Tensor::new(vec![1, 1, 2, 1], vec![1.0, 2.0]).unwrap(), ExecMode::Sequential).unwrap();
        assert_eq!(g.data, vec![0.0, 1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut rng = stream(1, Stream::Init, 0);
        let mut d = Dense::<f64>::new("d", 2, 2, &mut rng).unwrap();
        assert!(d.backward(&Tensor::zeros(vec![1, 2]), ExecMode::Sequential).is_err());
    }
}
