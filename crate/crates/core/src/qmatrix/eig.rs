//! Hermitian eigendecomposition.
//!
//! Small matrices use cyclic Jacobi rotations, which give eigenvectors that are
//! orthonormal to machine precision. Above [`JACOBI_MAX_DIM`] the matrix is
//! reduced to real tridiagonal form with Householder reflections and finished
//! with implicit QL, since a Jacobi sweep costs O(n³) and several are needed.

use super::matrix::{ComplexMatrix, C64, ONE, ZERO};
use super::TOL_HERM;
use crate::error::{Error, Result};

/// Largest dimension handled by the Jacobi path.
pub const JACOBI_MAX_DIM: usize = 64;

const MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug)]
pub struct HermitianEig {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: ComplexMatrix,
}

impl HermitianEig {
    /// `V f(Λ) V†`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        let v = &self.vectors;
        let mut scaled = v.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= fv[j];
            }
        }
        scaled.matmul_adjoint(v)
    }

    /// `V diag(values) V†` with replacement eigenvalues.
    pub fn reconstruct_with_values(&self, values: &[f64]) -> ComplexMatrix {
        assert_eq!(values.len(), self.values.len());
        let v = &self.vectors;
        let mut scaled = v.clone();
        for i in 0..v.rows() {
            for (j, &x) in values.iter().enumerate() {
                scaled[(i, j)] *= x;
            }
        }
        scaled.matmul_adjoint(v)
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.reconstruct_with(|x| x)
    }

    pub fn min(&self) -> f64 {
        *self.values.last().expect("empty spectrum")
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    /// Column `j` of the eigenvector matrix.
    pub fn vector(&self, j: usize) -> Vec<C64> {
        self.vectors.column(j)
    }
}

/// Eigendecomposition of a Hermitian matrix, checking Hermiticity first.
pub fn hermitian_eig(m: &ComplexMatrix) -> Result<HermitianEig> {
    check_hermitian(m)?;
    Ok(eigh(m))
}

pub(crate) fn check_hermitian(m: &ComplexMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let deviation = m.hermitian_deviation();
    if deviation > TOL_HERM {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

/// Eigendecomposition of the Hermitian part of `m` without validation.
pub(crate) fn eigh(m: &ComplexMatrix) -> HermitianEig {
    let a = m.hermitian_part();
    let (mut values, mut vectors) = if a.rows() <= JACOBI_MAX_DIM {
        jacobi(a)
    } else {
        let (d, e, q) = tridiagonalize(a, true);
        let q = q.expect("requested accumulation");
        let (vals, zt) = tql(d, e, true);
        (vals, times_real_transposed(&q, &zt.expect("requested vectors")))
    };
    sort_descending(&mut values, &mut vectors);
    HermitianEig { values, vectors }
}

/// Eigenvalues only, descending.
pub(crate) fn eigvalsh(m: &ComplexMatrix) -> Vec<f64> {
    let a = m.hermitian_part();
    let mut values = if a.rows() <= JACOBI_MAX_DIM {
        jacobi(a).0
    } else {
        let (d, e, _) = tridiagonalize(a, false);
        tql(d, e, false).0
    };
    values.sort_by(|x, y| y.total_cmp(x));
    values
}

fn sort_descending(values: &mut Vec<f64>, vectors: &mut ComplexMatrix) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let v = ComplexMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    *values = sorted;
    *vectors = v;
}

fn jacobi(mut a: ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = a.rows();
    let mut v = ComplexMatrix::identity(n);
    if n == 1 {
        return (vec![a[(0, 0)].re], v);
    }
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let z = a[(p, q)];
                let mag = z.norm();
                if mag <= 1e-300 || mag <= 1e-18 * scale {
                    a[(p, q)] = ZERO;
                    a[(q, p)] = ZERO;
                    continue;
                }
                let phase = z / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U = diag(1, conj(phase)) * [[c, s], [-s, c]]
                let u_pp = C64::new(c, 0.0);
                let u_pq = C64::new(s, 0.0);
                let u_qp = -phase.conj() * s;
                let u_qq = phase.conj() * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * u_pp + akq * u_qp;
                    a[(k, q)] = akp * u_pq + akq * u_qq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
                    a[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * u_pp + vkq * u_qp;
                    v[(k, q)] = vkp * u_pq + vkq * u_qq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)].re).collect(), v)
}

/// Householder reduction to real symmetric tridiagonal form.
///
/// Returns the diagonal, the sub-diagonal (length n-1, nonnegative) and, when
/// requested, the unitary `Q` with `A = Q T Q†`.
fn tridiagonalize(mut a: ComplexMatrix, accumulate: bool) -> (Vec<f64>, Vec<f64>, Option<ComplexMatrix>) {
    let n = a.rows();
    let mut q = accumulate.then(|| ComplexMatrix::identity(n));
    let mut v = vec![ZERO; n];
    let mut p = vec![ZERO; n];
    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let x0 = a[(k + 1, k)];
        let norm_x = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        let tail = norm_x * norm_x - x0.norm_sqr();
        if tail <= 1e-300 {
            continue;
        }
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        let alpha = -phase * norm_x;
        // v = x - alpha e1, normalized
        for i in 0..m {
            v[i] = a[(k + 1 + i, k)];
        }
        v[0] -= alpha;
        let vn = v[..m].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in v[..m].iter_mut() {
            *z /= vn;
        }
        // p = A22 v
        for i in 0..m {
            let row = (k + 1 + i) * n + (k + 1);
            let arow = &a.data()[row..row + m];
            p[i] = arow.iter().zip(&v[..m]).map(|(x, y)| x * y).sum();
        }
        let kk: C64 = v[..m].iter().zip(&p[..m]).map(|(x, y)| x.conj() * y).sum();
        let kk = kk.re;
        for i in 0..m {
            p[i] -= v[i] * kk;
        }
        // A22 -= 2 (v w† + w v†)
        {
            let data = a.data_mut();
            for i in 0..m {
                let vi2 = v[i] * 2.0;
                let wi2 = p[i] * 2.0;
                let row = (k + 1 + i) * n + (k + 1);
                for j in 0..m {
                    data[row + j] -= vi2 * p[j].conj() + wi2 * v[j].conj();
                }
            }
        }
        a[(k + 1, k)] = alpha;
        a[(k, k + 1)] = alpha.conj();
        for i in k + 2..n {
            a[(i, k)] = ZERO;
            a[(k, i)] = ZERO;
        }
        if let Some(qm) = q.as_mut() {
            // Q <- Q (I - 2 v v†) on columns k+1..n
            for r in 0..n {
                let row = r * n + (k + 1);
                let qrow = &mut qm.data_mut()[row..row + m];
                let dot: C64 = qrow.iter().zip(&v[..m]).map(|(x, y)| x * y).sum();
                let dot2 = dot * 2.0;
                for (x, y) in qrow.iter_mut().zip(&v[..m]) {
                    *x -= dot2 * y.conj();
                }
            }
        }
    }
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    let mut e = vec![0.0; n.saturating_sub(1)];
    // Remove off-diagonal phases with a diagonal unitary.
    let mut delta = vec![ONE; n];
    for k in 0..n.saturating_sub(1) {
        let off = a[(k + 1, k)];
        let mag = off.norm();
        e[k] = mag;
        delta[k + 1] = if mag > 0.0 { delta[k] * off / mag } else { delta[k] };
    }
    if let Some(qm) = q.as_mut() {
        for r in 0..n {
            for c in 0..n {
                qm[(r, c)] *= delta[c];
            }
        }
    }
    (d, e, q)
}

/// Implicit QL on a real symmetric tridiagonal matrix.
fn tql(mut d: Vec<f64>, e_in: Vec<f64>, vectors: bool) -> (Vec<f64>, Option<Vec<f64>>) {
    let n = d.len();
    let mut e = e_in;
    e.push(0.0);
    let mut z = vectors.then(|| vec![0.0f64; n * n]);
    if let Some(z) = z.as_mut() {
        for i in 0..n {
            z[i * n + i] = 1.0;
        }
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m;
            let mut early = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_mut() {
                    // rows of z are eigenvector components, stored transposed
                    let (lo, hi) = z.split_at_mut((i + 1) * n);
                    let zi = &mut lo[i * n..];
                    let zi1 = &mut hi[..n];
                    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let fz = *b;
                        *b = s * *a + c * fz;
                        *a = c * *a - s * fz;
                    }
                }
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    (d, z)
}

/// `q zᵀ` for real `z` given row-major.
fn times_real_transposed(q: &ComplexMatrix, zt: &[f64]) -> ComplexMatrix {
    let n = q.rows();
    let mut out = ComplexMatrix::zeros(n, n);
    let qd = q.data();
    let od = out.data_mut();
    for r in 0..n {
        let qrow = &qd[r * n..(r + 1) * n];
        for c in 0..n {
            let zrow = &zt[c * n..(c + 1) * n];
            let (mut re, mut im) = (0.0, 0.0);
            for (a, &b) in qrow.iter().zip(zrow) {
                re += a.re * b;
                im += a.im * b;
            }
            od[r * n + c] = C64::new(re, im);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::random::random_hermitian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn residual(m: &ComplexMatrix, e: &HermitianEig) -> f64 {
        (m - &e.reconstruct()).frobenius_norm()
    }

    #[test]
    fn pauli_z_and_identity() {
        let z = ComplexMatrix::from_real_diag(&[1.0, -1.0]);
        let e = hermitian_eig(&z).unwrap();
        assert_eq!(e.values, vec![1.0, -1.0]);
        let half = ComplexMatrix::identity(2).scale_real(0.5);
        let e = hermitian_eig(&half).unwrap();
        assert!(e.values.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = ComplexMatrix::identity(2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(hermitian_eig(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn random_reconstruction_both_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[1, 2, 5, 8, 31, 64, 65, 100, 200] {
            let m = random_hermitian(n, &mut rng);
            let e = eigh(&m);
            let res = residual(&m, &e);
            assert!(res <= 1e-9 * n as f64, "n={n} residual {res}");
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            let vv = e.vectors.adjoint().matmul(&e.vectors);
            assert!(vv.max_abs_diff(&ComplexMatrix::identity(n)) < 1e-10);
            let vals = eigvalsh(&m);
            for (a, b) in vals.iter().zip(&e.values) {
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn degenerate_spectrum_large() {
        let n = 96;
        let mut m = ComplexMatrix::identity(n);
        m[(3, 3)] = C64::new(2.0, 0.0);
        let e = eigh(&m);
        assert!((e.values[0] - 2.0).abs() < 1e-12);
        assert!(residual(&m, &e) < 1e-10);
    }
}
