//! Minimization of `D(ρ‖σ(y))` over an affine family `σ(y) = σ0 + Σ_k y_k S_k`
//! restricted to a spectrahedron `{B_l(y) ⪰ 0}`, by a log-barrier path
//! following method with exact Newton steps.
//!
//! Derivatives of `-Tr ρ ln σ` use first and second divided differences of
//! the logarithm in the eigenbasis of `σ`.

use super::linalg::RealCholesky;
use crate::qmatrix::{cholesky, eigh, ComplexMatrix, C64, ZERO};

const LN2: f64 = std::f64::consts::LN_2;
const MAX_NEWTON: usize = 600;
const T_GROWTH: f64 = 8.0;

/// Hermitian matrix stored as its nonzero entries, both triangles included.
pub(crate) type SparseHerm = Vec<(usize, usize, C64)>;

pub(crate) fn sparse_of(m: &ComplexMatrix) -> SparseHerm {
    let mut out = Vec::new();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m[(i, j)];
            if v.norm_sqr() > 1e-30 {
                out.push((i, j, v));
            }
        }
    }
    out
}

pub(crate) fn dense_of(s: &SparseHerm, n: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    for &(i, j, v) in s {
        m[(i, j)] += v;
    }
    m
}

/// Orthonormal basis of the traceless Hermitian `n x n` matrices.
pub(crate) fn traceless_basis(n: usize) -> Vec<SparseHerm> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * n - 1);
    for p in 0..n {
        for q in p + 1..n {
            out.push(vec![(p, q, C64::new(h, 0.0)), (q, p, C64::new(h, 0.0))]);
            out.push(vec![(p, q, C64::new(0.0, h)), (q, p, C64::new(0.0, -h))]);
        }
    }
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        let mut e: SparseHerm = (0..k).map(|i| (i, i, C64::new(1.0 / norm, 0.0))).collect();
        e.push((k, k, C64::new(-(k as f64) / norm, 0.0)));
        out.push(e);
    }
    out
}

/// A barrier block `B(y) = B0 + Σ_k y_k B_k ⪰ 0`.
#[derive(Clone, Debug)]
pub(crate) struct Barrier {
    pub constant: ComplexMatrix,
    pub dirs: Vec<SparseHerm>,
}

#[derive(Clone, Debug)]
pub(crate) struct RelEntProblem {
    /// `ρ` expressed in the coordinates of `σ`.
    pub rho: ComplexMatrix,
    /// `Tr ρ ln ρ` in nats.
    pub rho_log_rho: f64,
    pub sigma0: ComplexMatrix,
    pub dirs: Vec<SparseHerm>,
    pub barriers: Vec<Barrier>,
}

#[derive(Clone, Debug)]
pub(crate) struct RelEntSolution {
    pub y: Vec<f64>,
    pub value_bits: f64,
    pub dual_bound_bits: f64,
    pub newton_steps: usize,
    pub converged: bool,
}

impl RelEntProblem {
    pub fn sigma(&self, y: &[f64]) -> ComplexMatrix {
        let mut s = self.sigma0.clone();
        for (k, d) in self.dirs.iter().enumerate() {
            for &(i, j, v) in d {
                s[(i, j)] += v * y[k];
            }
        }
        s
    }

    fn barrier_value(b: &Barrier, y: &[f64]) -> ComplexMatrix {
        let mut m = b.constant.clone();
        for (k, d) in b.dirs.iter().enumerate() {
            for &(i, j, v) in d {
                m[(i, j)] += v * y[k];
            }
        }
        m
    }

    /// Relative entropy in nats, or `None` outside the domain.
    fn objective(&self, y: &[f64]) -> Option<f64> {
        let s = self.sigma(y).hermitian_part();
        let e = eigh(&s);
        if e.min() <= 0.0 {
            return None;
        }
        let log = e.reconstruct_with(f64::ln);
        Some(self.rho_log_rho - self.rho.trace_product_re(&log))
    }

    fn barrier(&self, y: &[f64]) -> Option<f64> {
        let mut total = 0.0;
        for b in &self.barriers {
            let m = Self::barrier_value(b, y).hermitian_part();
            let l = cholesky(&m).ok()?;
            total -= 2.0 * (0..l.rows()).map(|i| l[(i, i)].re.ln()).sum::<f64>();
        }
        Some(total)
    }

    /// Value of `t f + φ`, or `None` when `y` is infeasible.
    fn merit(&self, y: &[f64], t: f64) -> Option<f64> {
        let phi = self.barrier(y)?;
        let f = self.objective(y)?;
        Some(t * f + phi)
    }

    /// Gradient and Hessian of `f` in nats.
    fn objective_derivatives(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.dirs.len();
        let s = self.sigma(y);
        let e = eigh(&s);
        let n = e.values.len();
        let lam = &e.values;
        let v = &e.vectors;
        let rt = v.adjoint().matmul(&self.rho).matmul(v);
        let g1 = |i: usize, j: usize| first_dd(lam[i], lam[j]);
        // S̃_k = V† S_k V
        let st: Vec<ComplexMatrix> = self
            .dirs
            .iter()
            .map(|d| {
                let mut out = ComplexMatrix::zeros(n, n);
                for &(i, j, val) in d {
                    for a in 0..n {
                        let left = v[(i, a)].conj() * val;
                        if left == ZERO {
                            continue;
                        }
                        for b in 0..n {
                            out[(a, b)] += left * v[(j, b)];
                        }
                    }
                }
                out
            })
            .collect();
        // gradient: -Re Σ_ij ρ̃_ji Γ1_ij S̃_ij
        let mut gw = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                gw[(i, j)] = rt[(j, i)] * g1(i, j);
            }
        }
        let grad: Vec<f64> = st
            .iter()
            .map(|sk| {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += (gw[(i, j)] * sk[(i, j)]).re;
                    }
                }
                -acc
            })
            .collect();
        // Γ2[i][mm][j]
        let mut g2 = vec![0.0; n * n * n];
        for i in 0..n {
            for mm in 0..n {
                for j in 0..n {
                    g2[(i * n + mm) * n + j] = second_dd(lam[i], lam[mm], lam[j]);
                }
            }
        }
        // W_k[mm][j] = Σ_i ρ̃_ji Γ2(i, mm, j) S̃k_{i mm}
        let w: Vec<ComplexMatrix> = st
            .iter()
            .map(|sk| {
                let mut out = ComplexMatrix::zeros(n, n);
                for i in 0..n {
                    for mm in 0..n {
                        let s_im = sk[(i, mm)];
                        if s_im == ZERO {
                            continue;
                        }
                        for j in 0..n {
                            out[(mm, j)] += rt[(j, i)] * g2[(i * n + mm) * n + j] * s_im;
                        }
                    }
                }
                out
            })
            .collect();
        let mut t = vec![0.0; m * m];
        for k in 0..m {
            for l in 0..m {
                let (wk, sl) = (&w[k], &st[l]);
                let acc: f64 = wk.data().iter().zip(sl.data()).map(|(a, b)| (a * b).re).sum();
                t[k * m + l] = acc;
            }
        }
        let mut hess = vec![0.0; m * m];
        for k in 0..m {
            for l in 0..m {
                hess[k * m + l] = -(t[k * m + l] + t[l * m + k]);
            }
        }
        (grad, hess)
    }

    fn barrier_derivatives(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.dirs.len();
        let mut grad = vec![0.0; m];
        let mut hess = vec![0.0; m * m];
        for b in &self.barriers {
            let bm = Self::barrier_value(b, y).hermitian_part();
            let inv = crate::qmatrix::pinv_hermitian(&bm);
            let n = bm.rows();
            let p: Vec<ComplexMatrix> = b
                .dirs
                .iter()
                .map(|d| {
                    let mut out = ComplexMatrix::zeros(n, n);
                    for &(i, j, val) in d {
                        for a in 0..n {
                            let left = inv[(a, i)] * val;
                            if left == ZERO {
                                continue;
                            }
                            for c in 0..n {
                                out[(a, c)] += left * inv[(j, c)];
                            }
                        }
                    }
                    out
                })
                .collect();
            for k in 0..m {
                grad[k] -= b.dirs[k].iter().map(|&(i, j, v)| (v * inv[(j, i)]).re).sum::<f64>();
                for l in k..m {
                    let h: f64 = b.dirs[l].iter().map(|&(i, j, v)| (v * p[k][(j, i)]).re).sum();
                    hess[k * m + l] += h;
                    if l != k {
                        hess[l * m + k] += h;
                    }
                }
            }
        }
        (grad, hess)
    }

    /// Follows the central path from the strictly feasible `y0` until the
    /// barrier gap `ν/t` drops below `tol` bits.
    pub fn solve(&self, y0: Vec<f64>, tol: f64) -> RelEntSolution {
        let m = self.dirs.len();
        let nu: f64 = self.barriers.iter().map(|b| b.constant.rows() as f64).sum();
        let mut y = y0;
        assert!(self.merit(&y, 1.0).is_some(), "starting point must be strictly feasible");
        if m == 0 {
            let f = self.objective(&y).unwrap_or(f64::INFINITY) / LN2;
            return RelEntSolution {
                y,
                value_bits: f,
                dual_bound_bits: f,
                newton_steps: 0,
                converged: true,
            };
        }
        let mut t = 1.0;
        let mut steps = 0;
        let mut converged = false;
        'outer: loop {
            loop {
                if steps >= MAX_NEWTON {
                    break 'outer;
                }
                steps += 1;
                let (gf, hf) = self.objective_derivatives(&y);
                let (gb, hb) = self.barrier_derivatives(&y);
                let g: Vec<f64> = (0..m).map(|k| t * gf[k] + gb[k]).collect();
                let h: Vec<f64> = (0..m * m).map(|k| t * hf[k] + hb[k]).collect();
                let Some(chol) = RealCholesky::factor_regularized(h, m) else {
                    break 'outer;
                };
                let dir: Vec<f64> = chol.solve(&g).iter().map(|v| -v).collect();
                let dec: f64 = -g.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
                if dec / 2.0 <= 1e-10 {
                    break;
                }
                let f0 = self.merit(&y, t).expect("iterate stays feasible");
                let mut s = 1.0;
                let mut accepted = false;
                for _ in 0..60 {
                    let cand: Vec<f64> = y.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
                    if let Some(f1) = self.merit(&cand, t) {
                        if f1 <= f0 - 0.25 * s * dec {
                            y = cand;
                            accepted = true;
                            break;
                        }
                    }
                    s *= 0.5;
                }
                if !accepted {
                    // no further progress possible at this precision
                    break;
                }
                if dec / 2.0 <= 1e-8 && s == 1.0 {
                    break;
                }
            }
            if nu / t / LN2 < tol {
                converged = true;
                break;
            }
            t *= T_GROWTH;
        }
        let f = self.objective(&y).expect("feasible") / LN2;
        RelEntSolution {
            y,
            value_bits: f.max(0.0),
            dual_bound_bits: (f - nu / t / LN2).max(0.0),
            newton_steps: steps,
            converged,
        }
    }
}

/// `(ln a - ln b)/(a - b)`.
fn first_dd(a: f64, b: f64) -> f64 {
    let d = a - b;
    if d.abs() <= 1e-9 * a.abs().max(b.abs()) {
        2.0 / (a + b)
    } else if d.abs() < 0.5 * b.abs() {
        (d / b).ln_1p() / d
    } else {
        (a.ln() - b.ln()) / d
    }
}

/// Second divided difference of `ln` at `a, b, c`.
fn second_dd(a: f64, b: f64, c: f64) -> f64 {
    let mut v = [a, b, c];
    v.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    let [x, y, z] = v;
    let close = |p: f64, q: f64| (p - q).abs() <= 1e-7 * p.abs().max(q.abs());
    if close(x, z) {
        let mid = (x + y + z) / 3.0;
        -0.5 / (mid * mid)
    } else if close(x, y) {
        let m = 0.5 * (x + y);
        (first_dd(z, m) - 1.0 / m) / (z - m)
    } else if close(y, z) {
        let m = 0.5 * (y + z);
        (1.0 / m - first_dd(m, x)) / (m - x)
    } else {
        (first_dd(z, y) - first_dd(y, x)) / (z - x)
    }
}
