//! Central finite-difference gradient checks.

use rand::seq::index;

use super::{Network, Pass, Tensor};
use crate::exec::ExecMode;
use crate::rng::{stream, Stream};
use crate::Result;

/// Scalar loss of the network output and its gradient wrt that output.
pub type LossFn<'a> = dyn Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>)> + 'a;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub h: f64,
    /// Elements checked per parameter block; larger blocks are subsampled.
    pub max_per_block: usize,
    pub check_input: bool,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { h: 1e-5, max_per_block: 64, check_input: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err() <= tol
    }
}

/// Relative error with a floor tied to the block's gradient scale, so entries
/// that are zero up to rounding do not dominate.
fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn pick(len: usize, max: usize, seed: u64, block: usize) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    let mut rng = stream(seed, Stream::Check, block as u64);
    let mut v = index::sample(&mut rng, len, max).into_vec();
    v.sort_unstable();
    v
}

/// Compares analytic gradients from `backward` with central differences of
/// the evaluation-mode loss, per parameter block (and the input if asked).
pub fn grad_check(net: &mut Network<f64>, x: &Tensor<f64>, loss: &LossFn, opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mode = ExecMode::Sequential;
    net.zero_grad();
    let out = net.forward(x, Pass::eval(mode))?;
    let (_, dout) = loss(&out)?;
    let dx = net.backward(&dout, mode)?;
    let analytic: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad().to_vec()).collect();
    let names: Vec<String> = net.params().iter().map(|p| p.name.clone()).collect();
    let h = opts.h;

    let eval = |net: &Network<f64>, x: &Tensor<f64>| -> Result<f64> { Ok(loss(&net.infer(x, mode)?)?.0) };

    let mut blocks = Vec::new();
    for (b, grad) in analytic.iter().enumerate() {
        let floor = 1e-3 * grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) + 1e-12;
        let mut worst = 0.0f64;
        let idx = pick(grad.len(), opts.max_per_block, opts.seed, b);
        for &i in &idx {
            let orig = net.params()[b].data()[i];
            net.params_mut()[b].value.data[i] = orig + h;
            let lp = eval(net, x)?;
            net.params_mut()[b].value.data[i] = orig - h;
            let lm = eval(net, x)?;
            net.params_mut()[b].value.data[i] = orig;
            worst = worst.max(rel_err(grad[i], (lp - lm) / (2.0 * h), floor));
        }
        blocks.push(BlockError { name: names[b].clone(), max_rel_err: worst, checked: idx.len() });
    }
    if opts.check_input {
        let floor = 1e-3 * dx.data.iter().fold(0.0f64, |m, g| m.max(g.abs())) + 1e-12;
        let idx = pick(x.len(), opts.max_per_block, opts.seed, analytic.len());
        let mut worst = 0.0f64;
        let mut xp = x.clone();
        for &i in &idx {
            xp.data[i] = x.data[i] + h;
            let lp = eval(net, &xp)?;
            xp.data[i] = x.data[i] - h;
            let lm = eval(net, &xp)?;
            xp.data[i] = x.data[i];
            worst = worst.max(rel_err(dx.data[i], (lp - lm) / (2.0 * h), floor));
        }
        blocks.push(BlockError { name: "input".into(), max_rel_err: worst, checked: idx.len() });
    }
    net.zero_grad();
    Ok(GradCheckReport { blocks })
}

/// Half the sum of squared outputs weighted by fixed coefficients: a smooth
/// loss that exercises every output unit.
pub fn weighted_square_loss(weights: Vec<f64>) -> impl Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>)> {
    move |y: &Tensor<f64>| {
        let mut g = y.clone();
        let mut l = 0.0;
        for (i, v) in g.data.iter_mut().enumerate() {
            let w = weights[i % weights.len()];
            l += 0.5 * w * *v * *v;
            *v *= w;
        }
        Ok((l, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{cross_entropy, Conv2d, Dense, Flatten, Layer, MaxPool2d, Relu};
    use rand::Rng;

    fn input(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
        let mut rng = stream(seed, Stream::Check, 99);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn single_dense_layer() {
        let mut rng = stream(1, Stream::Init, 0);
        let mut net = Network::new(vec![6], vec![Box::new(Dense::new("d", 6, 4, &mut rng).unwrap()) as Box<dyn Layer<f64>>]).unwrap();
        let x = input(vec![3, 6], 1);
        let loss = weighted_square_loss(vec![1.0, -0.5, 2.0, 0.3]);
        let r = grad_check(&mut net, &x, &loss, GradCheckOptions::default()).unwrap();
        assert!(r.passes(1e-7), "{r:?}");
    }

    #[test]
    fn conv_stack_with_cross_entropy() {
        let mut rng = stream(2, Stream::Init, 0);
        let layers: Vec<Box<dyn Layer<f64>>> = vec![
            Box::new(Conv2d::new("c1", 2, 3, (1, 3), (1, 2), &mut rng).unwrap()),
            Box::new(Relu::new()),
            Box::new(Conv2d::new("c2", 3, 4, (2, 2), (1, 1), &mut rng).unwrap()),
            Box::new(MaxPool2d::new((1, 2)).unwrap()),
            Box::new(Flatten::new()),
            Box::new(Dense::new("d", 8, 3, &mut rng).unwrap()),
        ];
        let mut net = Network::new(vec![3, 9, 2], layers).unwrap();
        let x = input(vec![2, 3, 9, 2], 2);
        let loss = |y: &Tensor<f64>| cross_entropy(y, &[2, 0]);
        let r = grad_check(&mut net, &x, &loss, GradCheckOptions { max_per_block: 200, ..Default::default() }).unwrap();
        assert!(r.passes(1e-6), "{r:?}");
        assert_eq!(r.blocks.len(), 7);
    }
}
