//! Spectral functions of Hermitian matrices.

use super::eig::eigh;
use super::matrix::{ComplexMatrix, ZERO};
use super::TOL_PSD;
use crate::error::{Error, Result};

/// Eigenvalues at or below this are treated as zero by support-restricted functions.
pub(crate) const SUPPORT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFn {
    Sqrt,
    Log2,
    Exp2,
}

/// Applies `f` to the eigenvalues of a Hermitian matrix.
///
/// With `on_support`, zero eigenvalues of `Log2` map to zero instead of
/// failing. `Sqrt` and `Log2` clip eigenvalues in `[-TOL_PSD, 0)` to zero.
pub fn matrix_fn(m: &ComplexMatrix, f: MatrixFn, on_support: bool) -> Result<ComplexMatrix> {
    super::eig::check_hermitian(m)?;
    let e = eigh(m);
    if f != MatrixFn::Exp2 && e.min() < -TOL_PSD {
        return Err(Error::NegativeEigenvalue { value: e.min() });
    }
    match f {
        MatrixFn::Sqrt => Ok(e.reconstruct_with(|x| x.max(0.0).sqrt())),
        MatrixFn::Exp2 => Ok(e.reconstruct_with(f64::exp2)),
        MatrixFn::Log2 => {
            if !on_support && e.min() <= SUPPORT_TOL {
                return Err(Error::Singular);
            }
            Ok(e.reconstruct_with(|x| if x > SUPPORT_TOL { x.log2() } else { 0.0 }))
        }
    }
}

/// Projector onto the eigenvectors with eigenvalue above [`SUPPORT_TOL`].
pub(crate) fn support_projector(m: &ComplexMatrix) -> ComplexMatrix {
    eigh(m).reconstruct_with(|x| if x > SUPPORT_TOL { 1.0 } else { 0.0 })
}

/// Moore-Penrose inverse of a Hermitian PSD matrix.
pub(crate) fn pinv_hermitian(m: &ComplexMatrix) -> ComplexMatrix {
    eigh(m).reconstruct_with(|x| if x > SUPPORT_TOL { 1.0 / x } else { 0.0 })
}

/// `m^{-1/2}` on the support of `m`, zero elsewhere.
pub(crate) fn inverse_sqrt_on_support(m: &ComplexMatrix) -> ComplexMatrix {
    eigh(m).reconstruct_with(|x| if x > SUPPORT_TOL { 1.0 / x.sqrt() } else { 0.0 })
}

/// Lower-triangular Cholesky factor `L` with `m = L L†`.
pub fn cholesky(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    super::eig::check_hermitian(m)?;
    let n = m.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Singular);
        }
        let d = d.sqrt();
        l[(j, j)] = d.into();
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            l[(i, j)] = ZERO;
        }
    }
    Ok(l)
}
