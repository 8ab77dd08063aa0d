//! Dense nonsymmetric eigenvalues via nalgebra's real Schur decomposition.

use nalgebra::{Complex, DMatrix, DVector};

use crate::{Error, Result};

pub type Complex64 = Complex<f64>;

const MAX_SCHUR_ITERS: usize = 10_000;

/// All eigenvalues of a square real matrix, sorted by descending real part
/// then descending imaginary part.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::Shape(format!("eigenvalues of a {}x{} matrix", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, MAX_SCHUR_ITERS)
        .ok_or_else(|| Error::Numeric(format!("Schur iteration did not converge in {MAX_SCHUR_ITERS} sweeps")))?;
    let mut eigs: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    Ok(eigs)
}

/// Unit eigenvector for `lambda` by shifted inverse iteration.
pub fn eigenvector(a: &DMatrix<f64>, lambda: Complex64) -> Result<DVector<Complex64>> {
    let n = a.nrows();
    let scale = a.norm().max(1.0);
    let shift = lambda + Complex64::new(scale * 1e-10, scale * 1e-10);
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let v = Complex64::new(a[(i, j)], 0.0);
        if i == j { v - shift } else { v }
    });
    let lu = shifted.lu();
    let mut v = DVector::from_fn(n, |i, _| Complex64::new(1.0 + i as f64 * 0.37, 0.5 - i as f64 * 0.11));
    v /= Complex64::new(v.norm(), 0.0);
    for _ in 0..4 {
        let w = lu
            .solve(&v)
            .ok_or_else(|| Error::Numeric("inverse iteration hit an exactly singular shift".into()))?;
        let norm = w.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Numeric("inverse iteration diverged".into()));
        }
        v = w / Complex64::new(norm, 0.0);
    }
    Ok(v)
}

/// `|A v - lambda v|` for a unit `v`.
pub fn eigen_residual(a: &DMatrix<f64>, lambda: Complex64, v: &DVector<Complex64>) -> f64 {
    let ac = a.map(|x| Complex64::new(x, 0.0));
    (ac * v - v * lambda).norm()
}
