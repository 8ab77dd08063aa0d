//! Floating-point element types and strided matrix products.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

use crate::exec::{for_each_chunk_mut, ExecMode};

/// Element type of tensors: `f32` for training, `f64` for gradient checks.
pub trait Scalar: Float + Sum + Debug + Default + Send + Sync + 'static {
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` on strided views.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: Mat<'_, Self>, b: Mat<'_, Self>, beta: Self, c: MatMut<'_, Self>);
}

macro_rules! impl_scalar {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            #[inline]
            fn of_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
            fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: Mat<'_, Self>, b: Mat<'_, Self>, beta: Self, c: MatMut<'_, Self>) {
                a.check(m, k);
                b.check(k, n);
                c.check(m, n);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: `check` verified every addressed element lies inside its slice.
                unsafe {
                    $f(m, k, n, alpha, a.data.as_ptr(), a.rs, a.cs, b.data.as_ptr(), b.rs, b.cs, beta, c.data.as_mut_ptr(), c.rs, c.cs);
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Read-only strided matrix view.
#[derive(Clone, Copy)]
pub struct Mat<'a, T> {
    pub data: &'a [T],
    pub rs: isize,
    pub cs: isize,
}

impl<'a, T> Mat<'a, T> {
    /// Row-major view with `cols` columns.
    pub fn rows(data: &'a [T], cols: usize) -> Self {
        Mat { data, rs: cols as isize, cs: 1 }
    }

    pub fn strided(data: &'a [T], rs: usize, cs: usize) -> Self {
        Mat { data, rs: rs as isize, cs: cs as isize }
    }

    pub fn t(self) -> Self {
        Mat { data: self.data, rs: self.cs, cs: self.rs }
    }

    fn check(&self, r: usize, c: usize) {
        if r > 0 && c > 0 {
            let last = (r - 1) as isize * self.rs + (c - 1) as isize * self.cs;
            assert!(self.rs >= 0 && self.cs >= 0 && (last as usize) < self.data.len(), "matrix view out of bounds");
        }
    }
}

/// Mutable strided matrix view.
pub struct MatMut<'a, T> {
    pub data: &'a mut [T],
    pub rs: isize,
    pub cs: isize,
}

impl<'a, T> MatMut<'a, T> {
    pub fn rows(data: &'a mut [T], cols: usize) -> Self {
        MatMut { data, rs: cols as isize, cs: 1 }
    }

    pub fn strided(data: &'a mut [T], rs: usize, cs: usize) -> Self {
        MatMut { data, rs: rs as isize, cs: cs as isize }
    }

    fn check(&self, r: usize, c: usize) {
        if r > 0 && c > 0 {
            let last = (r - 1) as isize * self.rs + (c - 1) as isize * self.cs;
            assert!(self.rs >= 0 && self.cs >= 0 && (last as usize) < self.data.len(), "matrix view out of bounds");
        }
    }
}

/// Rows of C per parallel task. Fixed so results do not depend on thread count.
const ROW_BLOCK: usize = 64;

/// `c = alpha * a * b + beta * c` for a row-major, contiguous `c` of shape
/// `m x n`, split into row blocks across threads.
#[allow(clippy::too_many_arguments)]
pub fn gemm_rows<T: Scalar>(mode: ExecMode, m: usize, k: usize, n: usize, alpha: T, a: Mat<'_, T>, b: Mat<'_, T>, beta: T, c: &mut [T]) {
    assert_eq!(c.len(), m * n, "output buffer size");
    a.check(m, k);
    if m <= ROW_BLOCK || !mode.is_parallel() {
        T::gemm(m, k, n, alpha, a, b, beta, MatMut::rows(c, n));
        return;
    }
    for_each_chunk_mut(mode, c, ROW_BLOCK * n, |blk, chunk| {
        let r0 = blk * ROW_BLOCK;
        let rows = chunk.len() / n;
        let a_off = r0 as isize * a.rs;
        let sub = Mat { data: &a.data[a_off as usize..], rs: a.rs, cs: a.cs };
        T::gemm(rows, k, n, alpha, sub, b, beta, MatMut::rows(chunk, n));
    });
}
