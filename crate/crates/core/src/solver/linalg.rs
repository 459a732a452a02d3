//! Small dense factorizations used by the solvers.

use crate::qmatrix::{ComplexMatrix, ZERO};

/// Cholesky factor of a real symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub(crate) struct RealCholesky {
    n: usize,
    l: Vec<f64>,
}

impl RealCholesky {
    pub fn factor(mut a: Vec<f64>, n: usize) -> Option<Self> {
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                let (ri, rj) = (i * n, j * n);
                for k in 0..j {
                    s -= a[ri + k] * a[rj + k];
                }
                a[i * n + j] = s / d;
            }
        }
        Some(Self { n, l: a })
    }

    /// Retries with a growing diagonal shift when the matrix is numerically
    /// indefinite.
    pub fn factor_regularized(a: Vec<f64>, n: usize) -> Option<Self> {
        if let Some(f) = Self::factor(a.clone(), n) {
            return Some(f);
        }
        let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(1e-300);
        let mut shift = 1e-14 * scale;
        for _ in 0..12 {
            let mut b = a.clone();
            for i in 0..n {
                b[i * n + i] += shift;
            }
            if let Some(f) = Self::factor(b, n) {
                return Some(f);
            }
            shift *= 10.0;
        }
        None
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = &self.l;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }
}

/// Inverse of a lower-triangular complex matrix with nonzero diagonal.
pub(crate) fn lower_inverse(l: &ComplexMatrix) -> ComplexMatrix {
    let n = l.rows();
    let mut inv = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = l[(j, j)].inv();
        for i in j + 1..n {
            let mut s = ZERO;
            for k in j..i {
                s += l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / l[(i, i)];
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::{cholesky, random_density_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn real_solve() {
        let a = vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let f = RealCholesky::factor(a.clone(), 3).unwrap();
        let x = f.solve(&[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|k| a[i * 3 + k] * x[k]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-14);
        }
        assert!(RealCholesky::factor(vec![1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn triangular_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_density_matrix(5, 5, &mut rng);
        let l = cholesky(&m).unwrap();
        let li = lower_inverse(&l);
        assert!(li.matmul(&l).max_abs_diff(&ComplexMatrix::identity(5)) < 1e-10);
    }
}
