//! Capsule network: convolutional front end, primary capsules, dynamic
//! routing to one digit capsule per load bus, squash activation and the
//! margin loss.
//!
//! The class score of bus `q` is the length of its digit capsule `v_q`.

use std::any::Any;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{for_each_chunk_mut, map_indexed, ExecMode};
use crate::grid::CaseName;
use crate::nn::{check_labels, softmax_in_place, Conv2d, Dropout, Layer, Mat, Network, Param, Pass, Relu, Scalar, Tensor};
use crate::pmu::FEATURE_CHANNELS;
use crate::rng::{mix, stream, Stream};
use crate::{Error, Result};

/// Vectors at most this long squash to zero.
pub const SQUASH_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginLossConfig {
    pub m_plus: f64,
    pub m_minus: f64,
    pub lambda: f64,
}

impl Default for MarginLossConfig {
    fn default() -> Self {
        MarginLossConfig { m_plus: 0.9, m_minus: 0.1, lambda: 0.5 }
    }
}

impl MarginLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.m_minus && self.m_minus < self.m_plus && self.m_plus < 1.0 && self.lambda >= 0.0) {
            return Err(Error::Config(format!("invalid margin loss settings {self:?}")));
        }
        Ok(())
    }
}

/// Layer geometry of a capsule network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapsPlan {
    /// `(H, W, C)` of one input window: generators, time steps, channels.
    pub input: (usize, usize, usize),
    pub conv1_kernels: usize,
    pub conv1_size: (usize, usize),
    pub conv1_stride: (usize, usize),
    pub dropout: f64,
    pub conv2_kernels: usize,
    pub conv2_size: (usize, usize),
    pub conv2_stride: (usize, usize),
    pub primary_dim: usize,
    pub digit_count: usize,
    pub digit_dim: usize,
    pub routing_iters: usize,
}

fn conv_out(len: usize, k: usize, s: usize) -> Option<usize> {
    (len >= k && s > 0).then(|| (len - k) / s + 1)
}

impl CapsPlan {
    pub fn for_case(case: CaseName) -> Self {
        let (n_gen, n_load) = match case {
            CaseName::Ieee14 => (5, 9),
            CaseName::Ieee39 => (10, 29),
            CaseName::Ieee57 => (7, 50),
        };
        let (conv2_size, conv2_stride, primary_dim, digit_dim) = match case {
            CaseName::Ieee14 => ((2, 2), (1, 2), 8, 16),
            CaseName::Ieee39 => ((2, 2), (2, 2), 8, 16),
            CaseName::Ieee57 => ((2, 5), (1, 1), 16, 32),
        };
        CapsPlan {
            input: (n_gen, 100, FEATURE_CHANNELS),
            conv1_kernels: 512,
            conv1_size: (1, 10),
            conv1_stride: (1, 10),
            dropout: 0.1,
            conv2_kernels: 256,
            conv2_size,
            conv2_stride,
            primary_dim,
            digit_count: n_load,
            digit_dim,
            routing_iters: 5,
        }
    }

    /// `(H, W, C)` after the first convolution.
    pub fn conv1_output(&self) -> Option<(usize, usize, usize)> {
        let h = conv_out(self.input.0, self.conv1_size.0, self.conv1_stride.0)?;
        let w = conv_out(self.input.1, self.conv1_size.1, self.conv1_stride.1)?;
        Some((h, w, self.conv1_kernels))
    }

    /// `(H, W, C)` after the second convolution.
    pub fn conv2_output(&self) -> Option<(usize, usize, usize)> {
        let (h, w, _) = self.conv1_output()?;
        let h = conv_out(h, self.conv2_size.0, self.conv2_stride.0)?;
        let w = conv_out(w, self.conv2_size.1, self.conv2_stride.1)?;
        Some((h, w, self.conv2_kernels))
    }

    /// Number of primary capsules `P`.
    pub fn primary_count(&self) -> usize {
        self.conv2_output().map_or(0, |(h, w, c)| h * w * c / self.primary_dim.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self
            .conv2_output()
            .ok_or_else(|| Error::Shape(format!("convolutions do not fit the {:?} input", self.input)))?;
        if self.primary_dim == 0 || !self.conv2_kernels.is_multiple_of(self.primary_dim) {
            return Err(Error::Shape(format!(
                "{} conv2 channels do not split into {}-dimensional capsules",
                self.conv2_kernels, self.primary_dim
            )));
        }
        if self.digit_count == 0 || self.digit_dim == 0 || self.routing_iters == 0 || h * w * c == 0 {
            return Err(Error::Shape("empty capsule layer or zero routing iterations".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Range(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

pub fn plan_for_case(case: CaseName) -> CapsPlan {
    CapsPlan::for_case(case)
}

/// `v = (|d|^2 / (1 + |d|^2)) d / |d|`, zero for `|d| <= 1e-8`.
pub fn squash<T: Scalar>(d: &[T]) -> Vec<T> {
    let mut v = d.to_vec();
    squash_in_place(&mut v);
    v
}

fn norm<T: Scalar>(d: &[T]) -> T {
    d.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn squash_in_place<T: Scalar>(d: &mut [T]) {
    let n = norm(d);
    let scale = if n.as_f64() <= SQUASH_GUARD { T::zero() } else { n / (T::one() + n * n) };
    for x in d.iter_mut() {
        *x = *x * scale;
    }
}

/// Gradient of [`squash`] at `s` applied to `dv`, added into `ds`.
fn squash_backward<T: Scalar>(s: &[T], dv: &[T], ds: &mut [T]) {
    let n = norm(s);
    if n.as_f64() <= SQUASH_GUARD {
        return;
    }
    let n2 = n * n;
    let one = T::one();
    let g = n / (one + n2);
    let gp_over_n = (one - n2) / ((one + n2) * (one + n2) * n);
    let sdv: T = s.iter().zip(dv).map(|(&a, &b)| a * b).sum();
    for ((d, &sv), &g_out) in ds.iter_mut().zip(s).zip(dv) {
        *d = *d + g * g_out + sv * gp_over_n * sdv;
    }
}

/// Per-capsule margin loss for one sample given its capsule lengths.
pub fn margin_loss<T: Scalar>(lengths: &[T], label: usize, cfg: &MarginLossConfig) -> T {
    let (mp, mm, lam) = (T::of_f64(cfg.m_plus), T::of_f64(cfg.m_minus), T::of_f64(cfg.lambda));
    lengths
        .iter()
        .enumerate()
        .map(|(q, &len)| {
            if q == label {
                let h = (mp - len).max(T::zero());
                h * h
            } else {
                let h = (len - mm).max(T::zero());
                lam * h * h
            }
        })
        .sum()
}

/// Batch-mean margin loss over `[N, Q]` capsule lengths and its gradient.
pub fn margin_loss_batch<T: Scalar>(lengths: &Tensor<T>, labels: &[usize], cfg: &MarginLossConfig) -> Result<(T, Tensor<T>)> {
    let q = check_labels(lengths, labels)?;
    let inv_n = T::one() / T::of_f64(labels.len() as f64);
    let (mp, mm, lam) = (T::of_f64(cfg.m_plus), T::of_f64(cfg.m_minus), T::of_f64(cfg.lambda));
    let two = T::of_f64(2.0);
    let mut grad = vec![T::zero(); lengths.len()];
    let mut total = T::zero();
    for ((row, g), &label) in lengths.data.chunks(q).zip(grad.chunks_mut(q)).zip(labels) {
        total = total + margin_loss(row, label, cfg);
        for (k, (&len, gk)) in row.iter().zip(g.iter_mut()).enumerate() {
            *gk = if k == label {
                -two * (mp - len).max(T::zero())
            } else {
                two * lam * (len - mm).max(T::zero())
            } * inv_n;
        }
    }
    Ok((total * inv_n, Tensor { shape: lengths.shape.clone(), data: grad, grad: None }))
}

/// Intermediate values of one routing run, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTrace<T> {
    pub primary: usize,
    pub digits: usize,
    pub dim: usize,
    pub iters: usize,
    /// Coupling coefficients per iteration, `[r][P][Q]`.
    pub coupling: Vec<T>,
    /// Pre-squash digit inputs per iteration, `[r][Q][d_q]`.
    pub inputs: Vec<T>,
    /// Digit outputs per iteration, `[r][Q][d_q]`.
    pub outputs: Vec<T>,
}

impl<T: Scalar> RoutingTrace<T> {
    pub fn coupling_at(&self, iter: usize) -> &[T] {
        let k = self.primary * self.digits;
        &self.coupling[iter * k..(iter + 1) * k]
    }

    fn input_at(&self, iter: usize) -> &[T] {
        let k = self.digits * self.dim;
        &self.inputs[iter * k..(iter + 1) * k]
    }

    pub fn output_at(&self, iter: usize) -> &[T] {
        let k = self.digits * self.dim;
        &self.outputs[iter * k..(iter + 1) * k]
    }

    /// Final digit capsules `[Q][d_q]`.
    pub fn v(&self) -> &[T] {
        self.output_at(self.iters - 1)
    }

    /// Final coupling coefficients `[P][Q]`.
    pub fn c(&self) -> &[T] {
        self.coupling_at(self.iters - 1)
    }
}

/// Prediction vectors of one sample: `u_hat[p][q][j]` sits at
/// `base + p * p_stride + q * dim + j`.
struct Predictions<'a, T> {
    data: &'a [T],
    base: usize,
    p_stride: usize,
    dim: usize,
}

impl<T> Predictions<'_, T> {
    #[inline]
    fn at(&self, p: usize, q: usize) -> &[T] {
        let o = self.base + p * self.p_stride + q * self.dim;
        &self.data[o..o + self.dim]
    }
}

fn route<T: Scalar>(u: &Predictions<'_, T>, primary: usize, digits: usize, iters: usize) -> RoutingTrace<T> {
    let dim = u.dim;
    let pq = primary * digits;
    let qd = digits * dim;
    let mut b = vec![T::zero(); pq];
    let mut trace = RoutingTrace {
        primary,
        digits,
        dim,
        iters,
        coupling: Vec::with_capacity(iters * pq),
        inputs: Vec::with_capacity(iters * qd),
        outputs: Vec::with_capacity(iters * qd),
    };
    for t in 0..iters {
        let mut c = b.clone();
        for row in c.chunks_mut(digits) {
            softmax_in_place(row);
        }
        let mut s = vec![T::zero(); qd];
        for p in 0..primary {
            for q in 0..digits {
                let cpq = c[p * digits + q];
                for (acc, &x) in s[q * dim..(q + 1) * dim].iter_mut().zip(u.at(p, q)) {
                    *acc = *acc + cpq * x;
                }
            }
        }
        let mut v = s.clone();
        for vq in v.chunks_mut(dim) {
            squash_in_place(vq);
        }
        if t + 1 < iters {
            for p in 0..primary {
                for q in 0..digits {
                    let agree: T = u.at(p, q).iter().zip(&v[q * dim..(q + 1) * dim]).map(|(&a, &b)| a * b).sum();
                    b[p * digits + q] = b[p * digits + q] + agree;
                }
            }
        }
        trace.coupling.extend_from_slice(&c);
        trace.inputs.extend_from_slice(&s);
        trace.outputs.extend_from_slice(&v);
    }
    trace
}

/// Backpropagates `dv` (wrt the final digit capsules) through every routing
/// iteration, including the logit updates. Writes the gradient wrt the
/// predictions into `du` laid out `[P][Q][d_q]`.
fn route_backward<T: Scalar>(u: &Predictions<'_, T>, trace: &RoutingTrace<T>, dv_final: &[T], du: &mut [T]) {
    let (primary, digits, dim) = (trace.primary, trace.digits, trace.dim);
    let qd = digits * dim;
    du.fill(T::zero());
    // gradient wrt the logits b_{t+1}
    let mut db_next = vec![T::zero(); primary * digits];
    let mut dc = vec![T::zero(); primary * digits];
    for t in (0..trace.iters).rev() {
        let v = trace.output_at(t);
        let mut dv = if t + 1 == trace.iters { dv_final.to_vec() } else { vec![T::zero(); qd] };
        if t + 1 < trace.iters {
            // b_{t+1} = b_t + <u_hat, v_t>
            for p in 0..primary {
                for q in 0..digits {
                    let g = db_next[p * digits + q];
                    if g == T::zero() {
                        continue;
                    }
                    let up = u.at(p, q);
                    let o = (p * digits + q) * dim;
                    for j in 0..dim {
                        dv[q * dim + j] = dv[q * dim + j] + g * up[j];
                        du[o + j] = du[o + j] + g * v[q * dim + j];
                    }
                }
            }
        }
        let s = trace.input_at(t);
        let mut ds = vec![T::zero(); qd];
        for q in 0..digits {
            squash_backward(&s[q * dim..(q + 1) * dim], &dv[q * dim..(q + 1) * dim], &mut ds[q * dim..(q + 1) * dim]);
        }
        let c = trace.coupling_at(t);
        for p in 0..primary {
            for q in 0..digits {
                let up = u.at(p, q);
                let dsq = &ds[q * dim..(q + 1) * dim];
                let cpq = c[p * digits + q];
                let o = (p * digits + q) * dim;
                let mut acc = T::zero();
                for j in 0..dim {
                    acc = acc + dsq[j] * up[j];
                    du[o + j] = du[o + j] + cpq * dsq[j];
                }
                dc[p * digits + q] = acc;
            }
        }
        // softmax backward, plus the identity path b_t -> b_{t+1}
        for p in 0..primary {
            let row = p * digits..(p + 1) * digits;
            let dot: T = c[row.clone()].iter().zip(&dc[row.clone()]).map(|(&a, &b)| a * b).sum();
            for k in row {
                db_next[k] = db_next[k] + c[k] * (dc[k] - dot);
            }
        }
    }
}

/// Routes one sample's prediction vectors `[P][Q][d_q]` for `iters` iterations.
pub fn dynamic_routing<T: Scalar>(u_hat: &[T], primary: usize, digits: usize, dim: usize, iters: usize) -> Result<RoutingTrace<T>> {
    if iters == 0 || primary == 0 || digits == 0 || dim == 0 {
        return Err(Error::Shape("routing needs at least one capsule, dimension and iteration".into()));
    }
    if u_hat.len() != primary * digits * dim {
        return Err(Error::Shape(format!(
            "{} prediction values for {primary}x{digits}x{dim}",
            u_hat.len()
        )));
    }
    let u = Predictions { data: u_hat, base: 0, p_stride: digits * dim, dim };
    Ok(route(&u, primary, digits, iters))
}

struct CapsCache<T> {
    in_shape: Vec<usize>,
    /// Pre-squash primary capsules `[N][P][d_p]` (the conv output).
    s: Vec<T>,
    /// Squashed primary capsules `[N][P][d_p]`.
    u: Vec<T>,
    /// Predictions `[P][N][Q][d_q]`.
    u_hat: Vec<T>,
    traces: Vec<RoutingTrace<T>>,
}

/// Primary capsules, per-pair transforms `W_pq` and dynamic routing.
/// Input: the second convolution's `[N, H, W, C]` activations. Output:
/// digit-capsule lengths `[N, Q]`.
pub struct CapsuleLayer<T: Scalar> {
    pub primary: usize,
    pub primary_dim: usize,
    pub digits: usize,
    pub digit_dim: usize,
    pub iters: usize,
    /// `[P, d_p, Q, d_q]`.
    pub weight: Param<T>,
    cache: Option<CapsCache<T>>,
}

impl<T: Scalar> CapsuleLayer<T> {
    /// Transform weights are Gaussian with std `sqrt(2 / (P d_p))`; the block
    /// of each digit class `q` comes from its own random stream, so classes
    /// are initialized independently of one another.
    pub fn new(name: &str, primary: usize, primary_dim: usize, digits: usize, digit_dim: usize, iters: usize, seed: u64) -> Result<Self> {
        if primary == 0 || primary_dim == 0 || digits == 0 || digit_dim == 0 || iters == 0 {
            return Err(Error::Shape(format!("{name}: empty capsule layer")));
        }
        let std = (2.0 / (primary * primary_dim) as f64).sqrt();
        let mut w = vec![T::zero(); primary * primary_dim * digits * digit_dim];
        for q in 0..digits {
            let mut rng = stream(seed, Stream::Init, mix(0xCA75, q as u64));
            for pi in 0..primary * primary_dim {
                for j in 0..digit_dim {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    w[(pi * digits + q) * digit_dim + j] = T::of_f64(z * std);
                }
            }
        }
        Ok(CapsuleLayer {
            primary,
            primary_dim,
            digits,
            digit_dim,
            iters,
            weight: Param::new(format!("{name}.weight"), vec![primary, primary_dim, digits, digit_dim], w),
            cache: None,
        })
    }

    fn qd(&self) -> usize {
        self.digits * self.digit_dim
    }

    fn check(&self, x: &Tensor<T>) -> Result<usize> {
        if x.shape.len() < 2 || x.item_len() != self.primary * self.primary_dim {
            return Err(Error::Shape(format!(
                "capsule layer expects {} values per item, got shape {:?}",
                self.primary * self.primary_dim,
                x.shape
            )));
        }
        Ok(x.batch())
    }

    fn squash_primary(&self, x: &Tensor<T>, mode: ExecMode) -> Vec<T> {
        let mut u = x.data.clone();
        for_each_chunk_mut(mode, &mut u, self.primary * self.primary_dim, |_, item| {
            for cap in item.chunks_mut(self.primary_dim) {
                squash_in_place(cap);
            }
        });
        u
    }

    /// `u_hat[p][n] = u[n][p] W_p`, stored `[P][N][Q d_q]`.
    fn predict(&self, u: &[T], n: usize, mode: ExecMode) -> Vec<T> {
        let (pc, dp, qd) = (self.primary, self.primary_dim, self.qd());
        let mut u_hat = vec![T::zero(); pc * n * qd];
        let w = self.weight.data();
        for_each_chunk_mut(mode, &mut u_hat, n * qd, |p, out| {
            let a = Mat::strided(&u[p * dp..], pc * dp, 1);
            let b = Mat::rows(&w[p * dp * qd..(p + 1) * dp * qd], qd);
            T::gemm(n, dp, qd, T::one(), a, b, T::zero(), crate::nn::MatMut::rows(out, qd));
        });
        u_hat
    }

    /// Primary capsules, predictions and one routing trace per sample.
    #[allow(clippy::type_complexity)]
    fn run(&self, x: &Tensor<T>, mode: ExecMode) -> Result<(Vec<T>, Vec<T>, Vec<RoutingTrace<T>>)> {
        let n = self.check(x)?;
        let u = self.squash_primary(x, mode);
        let u_hat = self.predict(&u, n, mode);
        let qd = self.qd();
        let traces = map_indexed(mode, n, |i| {
            let pred = Predictions { data: &u_hat, base: i * qd, p_stride: n * qd, dim: self.digit_dim };
            route(&pred, self.primary, self.digits, self.iters)
        });
        Ok((u, u_hat, traces))
    }

    fn lengths(&self, traces: &[RoutingTrace<T>]) -> Tensor<T> {
        let data = traces.iter().flat_map(|t| t.v().chunks(self.digit_dim).map(norm).collect::<Vec<_>>()).collect();
        Tensor { shape: vec![traces.len(), self.digits], data, grad: None }
    }

    /// Digit capsules `[N, Q, d_q]` in evaluation mode.
    pub fn capsules(&self, x: &Tensor<T>, mode: ExecMode) -> Result<Tensor<T>> {
        let (_, _, traces) = self.run(x, mode)?;
        let data = traces.iter().flat_map(|t| t.v().iter().copied()).collect();
        Tensor::new(vec![traces.len(), self.digits, self.digit_dim], data)
    }

    /// Routing traces of the last training-mode forward pass.
    pub fn last_traces(&self) -> Option<&[RoutingTrace<T>]> {
        self.cache.as_ref().map(|c| c.traces.as_slice())
    }
}

impl<T: Scalar> Layer<T> for CapsuleLayer<T> {
    fn kind(&self) -> &'static str {
        "capsules"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.iter().product::<usize>() != self.primary * self.primary_dim {
            return Err(Error::Shape(format!(
                "input {input:?} does not hold {} capsules of dimension {}",
                self.primary, self.primary_dim
            )));
        }
        Ok(vec![self.digits])
    }

    fn infer(&self, x: &Tensor<T>, mode: ExecMode) -> Result<Tensor<T>> {
        let (_, _, traces) = self.run(x, mode)?;
        Ok(self.lengths(&traces))
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let (u, u_hat, traces) = self.run(x, pass.mode)?;
        let out = self.lengths(&traces);
        self.cache = Some(CapsCache { in_shape: x.shape.clone(), s: x.data.clone(), u, u_hat, traces });
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<T>, mode: ExecMode) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Shape("capsules: backward called without a cached forward pass".into()))?;
        let n = cache.traces.len();
        let (pc, dp, q, dq) = (self.primary, self.primary_dim, self.digits, self.digit_dim);
        let qd = q * dq;
        if grad.shape != [n, q] {
            return Err(Error::Shape(format!("capsules: gradient shape {:?}, expected [{n}, {q}]", grad.shape)));
        }

        // lengths -> digit capsules -> predictions, per sample
        let mut du_hat = vec![T::zero(); n * pc * qd];
        for_each_chunk_mut(mode, &mut du_hat, pc * qd, |i, out| {
            let trace = &cache.traces[i];
            let mut dv = vec![T::zero(); qd];
            for k in 0..q {
                let vk = &trace.v()[k * dq..(k + 1) * dq];
                let len = norm(vk);
                if len > T::zero() {
                    let g = grad.data[i * q + k] / len;
                    for (d, &x) in dv[k * dq..(k + 1) * dq].iter_mut().zip(vk) {
                        *d = g * x;
                    }
                }
            }
            let pred = Predictions { data: &cache.u_hat, base: i * qd, p_stride: n * qd, dim: dq };
            route_backward(&pred, trace, &dv, out);
        });

        // dW_p = u_p^T du_hat_p
        {
            let u = &cache.u;
            let du = &du_hat;
            let (_, dw) = self.weight.split_mut();
            for_each_chunk_mut(mode, dw, dp * qd, |p, out| {
                let a = Mat::strided(&u[p * dp..], pc * dp, 1).t();
                let b = Mat::strided(&du[p * qd..], pc * qd, 1);
                T::gemm(dp, n, qd, T::one(), a, b, T::one(), crate::nn::MatMut::rows(out, qd));
            });
        }

        // du_p = du_hat_p W_p^T, stored [P][N][d_p]
        let mut du = vec![T::zero(); pc * n * dp];
        let w = self.weight.data();
        for_each_chunk_mut(mode, &mut du, n * dp, |p, out| {
            let a = Mat::strided(&du_hat[p * qd..], pc * qd, 1);
            let b = Mat::rows(&w[p * dp * qd..(p + 1) * dp * qd], qd).t();
            T::gemm(n, qd, dp, T::one(), a, b, T::zero(), crate::nn::MatMut::rows(out, dp));
        });

        // through the primary squash
        let mut dx = vec![T::zero(); n * pc * dp];
        for_each_chunk_mut(mode, &mut dx, pc * dp, |i, out| {
            for p in 0..pc {
                let s = &cache.s[(i * pc + p) * dp..(i * pc + p + 1) * dp];
                let g = &du[(p * n + i) * dp..(p * n + i + 1) * dp];
                squash_backward(s, g, &mut out[p * dp..(p + 1) * dp]);
            }
        });
        Tensor::new(cache.in_shape.clone(), dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight]
    }
}

/// Builds the capsule network for a plan. Parameters derive from `seed`.
pub fn build_capsnet<T: Scalar>(plan: &CapsPlan, seed: u64) -> Result<Network<T>> {
    plan.validate()?;
    let (h, w, c) = plan.input;
    let mut r1 = stream(seed, Stream::Init, 1);
    let mut r2 = stream(seed, Stream::Init, 2);
    let layers: Vec<Box<dyn Layer<T>>> = vec![
        Box::new(Conv2d::new("conv1", c, plan.conv1_kernels, plan.conv1_size, plan.conv1_stride, &mut r1)?),
        Box::new(Relu::new()),
        Box::new(Dropout::new(plan.dropout, stream(seed, Stream::Dropout, 1))?),
        Box::new(Conv2d::new("conv2", plan.conv1_kernels, plan.conv2_kernels, plan.conv2_size, plan.conv2_stride, &mut r2)?),
        Box::new(Relu::new()),
        Box::new(CapsuleLayer::new(
            "digit",
            plan.primary_count(),
            plan.primary_dim,
            plan.digit_count,
            plan.digit_dim,
            plan.routing_iters,
            seed,
        )?),
    ];
    Network::new(vec![h, w, c], layers)
}

/// The capsule layer at the end of a capsule network, if there is one.
pub fn capsule_layer<T: Scalar>(net: &Network<T>) -> Option<&CapsuleLayer<T>> {
    let last: &dyn Any = net.layers().last()?.as_ref();
    last.downcast_ref::<CapsuleLayer<T>>()
}

/// Evaluation-mode digit capsules `[N, Q, d_q]` and their lengths `[N, Q]`.
pub fn forward_capsules<T: Scalar>(net: &Network<T>, x: &Tensor<T>, mode: ExecMode) -> Result<(Tensor<T>, Tensor<T>)> {
    let caps = capsule_layer(net).ok_or_else(|| Error::Config("model is not a capsule network".into()))?;
    let layers = net.layers();
    let mut h = layers[0].infer(x, mode)?;
    for l in &layers[1..layers.len() - 1] {
        h = l.infer(&h, mode)?;
    }
    let v = caps.capsules(&h, mode)?;
    let dq = caps.digit_dim;
    let lengths = Tensor::new(vec![v.shape[0], v.shape[1]], v.data.chunks(dq).map(norm).collect())?;
    Ok((v, lengths))
}
