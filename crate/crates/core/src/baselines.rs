//! Comparison classifiers trained with softmax cross-entropy: a deep MLP, a
//! 1-D CNN convolving along time per generator, and a 2-D CNN with max pooling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nn::{Conv2d, Dense, Dropout, Flatten, Layer, MaxPool2d, Network, Relu, Scalar};
use crate::rng::{stream, Stream};
use crate::{Error, Result};

pub const BASELINE_DROPOUT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Mlp,
    Cnn1d,
    Cnn2d,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Mlp, BaselineKind::Cnn1d, BaselineKind::Cnn2d];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Mlp => "mlp",
            BaselineKind::Cnn1d => "cnn1d",
            BaselineKind::Cnn2d => "cnn2d",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline '{s}' (expected mlp, cnn1d or cnn2d)")))
    }
}

/// Builds a baseline for `(H, W, C)` inputs and `classes` outputs.
pub fn build_baseline<T: Scalar>(kind: BaselineKind, input: (usize, usize, usize), classes: usize, seed: u64) -> Result<Network<T>> {
    let (h, w, c) = input;
    let mut rng = stream(seed, Stream::Init, 100);
    let mut drop_id = 100;
    let mut dropout = || -> Result<Box<dyn Layer<T>>> {
        drop_id += 1;
        Ok(Box::new(Dropout::new(BASELINE_DROPOUT, stream(seed, Stream::Dropout, drop_id))?))
    };
    let layers: Vec<Box<dyn Layer<T>>> = match kind {
        BaselineKind::Mlp => vec![
            Box::new(Flatten::new()),
            Box::new(Dense::new("fc1", h * w * c, 512, &mut rng)?),
            Box::new(Relu::new()),
            dropout()?,
            Box::new(Dense::new("fc2", 512, 256, &mut rng)?),
            Box::new(Relu::new()),
            dropout()?,
            Box::new(Dense::new("out", 256, classes, &mut rng)?),
        ],
        BaselineKind::Cnn1d => {
            let w1 = conv_len(w, 10, 2)?;
            let w2 = conv_len(w1, 10, 2)?;
            vec![
                Box::new(Conv2d::new("conv1", c, 64, (1, 10), (1, 2), &mut rng)?),
                Box::new(Relu::new()),
                Box::new(Conv2d::new("conv2", 64, 64, (1, 10), (1, 2), &mut rng)?),
                Box::new(Relu::new()),
                dropout()?,
                Box::new(Flatten::new()),
                Box::new(Dense::new("fc1", h * w2 * 64, 128, &mut rng)?),
                Box::new(Relu::new()),
                dropout()?,
                Box::new(Dense::new("out", 128, classes, &mut rng)?),
            ]
        }
        BaselineKind::Cnn2d => {
            let (h1, w1) = (conv_len(h, 2, 1)?, conv_len(w, 10, 1)? / 2);
            let (h2, w2) = (conv_len(h1, 2, 1)?, conv_len(w1, 5, 1)? / 2);
            vec![
                Box::new(Conv2d::new("conv1", c, 64, (2, 10), (1, 1), &mut rng)?),
                Box::new(Relu::new()),
                Box::new(MaxPool2d::new((1, 2))?),
                Box::new(Conv2d::new("conv2", 64, 128, (2, 5), (1, 1), &mut rng)?),
                Box::new(Relu::new()),
                Box::new(MaxPool2d::new((1, 2))?),
                dropout()?,
                Box::new(Flatten::new()),
                Box::new(Dense::new("fc1", h2 * w2 * 128, 256, &mut rng)?),
                Box::new(Relu::new()),
                dropout()?,
                Box::new(Dense::new("out", 256, classes, &mut rng)?),
            ]
        }
    };
    Network::new(vec![h, w, c], layers)
}

fn conv_len(len: usize, k: usize, s: usize) -> Result<usize> {
    if len < k {
        return Err(Error::Shape(format!("kernel {k} does not fit length {len}")));
    }
    Ok((len - k) / s + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::ExecMode;
    use crate::nn::{cross_entropy, grad_check, softmax, GradCheckOptions, Tensor};
    use rand::Rng;

    #[test]
    fn shapes_per_case() {
        let mlp = build_baseline::<f32>(BaselineKind::Mlp, (5, 100, 2), 9, 0).unwrap();
        assert_eq!(mlp.params()[0].shape(), &[1000, 512]);
        assert_eq!(mlp.outputs(), 9);
        let c2 = build_baseline::<f32>(BaselineKind::Cnn2d, (10, 100, 2), 29, 0).unwrap();
        assert_eq!(c2.outputs(), 29);
        let c1 = build_baseline::<f32>(BaselineKind::Cnn1d, (7, 100, 2), 50, 0).unwrap();
        assert_eq!(c1.outputs(), 50);
        assert!("svm".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn cross_entropy_gradients_all_kinds() {
        for kind in BaselineKind::ALL {
            let mut net = build_baseline::<f64>(kind, (3, 40, 2), 3, 1).unwrap();
            let mut rng = stream(4, Stream::Check, 0);
            let x = Tensor::new(vec![2, 3, 40, 2], (0..480).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let loss = |y: &Tensor<f64>| cross_entropy(y, &[0, 2]);
            let r = grad_check(&mut net, &x, &loss, GradCheckOptions { max_per_block: 40, ..Default::default() }).unwrap();
            assert!(r.passes(1e-5), "{kind}: {r:?}");
            let p = softmax(&net.infer(&x, ExecMode::Sequential).unwrap());
            for row in p.data.chunks(3) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }
}
