//! Softmax and cross-entropy.

use super::{Scalar, Tensor};
use crate::{Error, Result};

/// Softmax along the last axis.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let k = x.shape.last().copied().unwrap_or(1).max(1);
    let mut data = x.data.clone();
    for row in data.chunks_mut(k) {
        softmax_in_place(row);
    }
    Tensor { shape: x.shape.clone(), data, grad: None }
}

pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Validates `[N, Q]` scores against `N` labels and returns `Q`.
pub fn check_labels<T>(scores: &Tensor<T>, labels: &[usize]) -> Result<usize> {
    let [n, q] = scores.shape[..] else {
        return Err(Error::Shape(format!("scores must be [N, Q], got {:?}", scores.shape)));
    };
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} score rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= q) {
        return Err(Error::Shape(format!("label {bad} outside {q} classes")));
    }
    Ok(q)
}

/// Mean softmax cross-entropy over the batch and its gradient wrt the logits.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let q = check_labels(logits, labels)?;
    let n = labels.len();
    let mut grad = softmax(logits);
    let inv_n = T::one() / T::of_f64(n as f64);
    let mut loss = T::zero();
    for (row, (&l, lg)) in grad.data.chunks_mut(q).zip(labels.iter().zip(logits.data.chunks(q))) {
        let m = lg.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + lg.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        loss = loss + (lse - lg[l]);
        row[l] = row[l] - T::one();
        for v in row.iter_mut() {
            *v = *v * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}
