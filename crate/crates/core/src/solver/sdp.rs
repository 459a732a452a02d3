//! Dense primal-dual interior-point method for linear matrix inequalities
//! over complex Hermitian blocks.
//!
//! Problems are stated as `minimize obj·y` subject to
//! `Z_l = C_l + Σ_i y_i F_{i,l} ⪰ 0` for every block `l`. The Lagrange dual
//! is `maximize -Σ_l Re Tr(C_l X_l)` over `X_l ⪰ 0` with
//! `Σ_l Re Tr(F_{i,l} X_l) = obj_i`. Search directions are HKM with a
//! Mehrotra predictor-corrector.

use super::linalg::{lower_inverse, RealCholesky};
use crate::error::{Error, Result};
use crate::qmatrix::{cholesky, eigvalsh, ComplexMatrix, C64, ZERO};

/// Default absolute duality-gap tolerance.
pub(crate) const GAP_TOL: f64 = 1e-7;
/// Default iteration cap.
pub(crate) const MAX_ITER: usize = 200;

const INFEAS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub val: C64,
}

/// Handle to a Hermitian matrix variable.
#[derive(Clone, Debug)]
pub(crate) struct HermVar {
    pub n: usize,
    /// `(p, q, id_re, id_im)` for `p < q`, and `(p, p, id, usize::MAX)` on the diagonal.
    pub ids: Vec<(usize, usize, usize, usize)>,
}

/// Handle to a general complex matrix variable.
#[derive(Clone, Debug)]
pub(crate) struct ComplexVar {
    /// `(p, q, id_re, id_im)`.
    pub ids: Vec<(usize, usize, usize, usize)>,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Sdp {
    sizes: Vec<usize>,
    constant: Vec<ComplexMatrix>,
    coeffs: Vec<Vec<Entry>>,
    obj: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum SdpStatus {
    Converged,
    MaxIter,
}

#[derive(Clone, Debug)]
pub(crate) struct SdpSolution {
    pub y: Vec<f64>,
    pub x: Vec<ComplexMatrix>,
    /// `obj·y`.
    pub primal: f64,
    /// `-Σ Re Tr(C X)`; a lower bound on the optimum when `X` is feasible.
    pub dual: f64,
    pub iterations: usize,
    pub status: SdpStatus,
}

impl SdpSolution {
    pub fn gap(&self) -> f64 {
        (self.primal - self.dual).abs()
    }
}

impl Sdp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.obj.len()
    }

    /// New scalar variable with objective weight 0.
    pub fn scalar(&mut self) -> usize {
        self.obj.push(0.0);
        self.coeffs.push(Vec::new());
        self.obj.len() - 1
    }

    pub fn hermitian(&mut self, n: usize) -> HermVar {
        let mut ids = Vec::with_capacity(n * n);
        for p in 0..n {
            ids.push((p, p, self.scalar(), usize::MAX));
            for q in p + 1..n {
                let re = self.scalar();
                let im = self.scalar();
                ids.push((p, q, re, im));
            }
        }
        HermVar { n, ids }
    }

    pub fn complex(&mut self, rows: usize, cols: usize) -> ComplexVar {
        let mut ids = Vec::with_capacity(rows * cols);
        for p in 0..rows {
            for q in 0..cols {
                let re = self.scalar();
                let im = self.scalar();
                ids.push((p, q, re, im));
            }
        }
        ComplexVar { ids }
    }

    pub fn set_objective(&mut self, var: usize, weight: f64) {
        self.obj[var] = weight;
    }

    /// New block `Z = constant + ...`; returns its index.
    pub fn block(&mut self, constant: ComplexMatrix) -> usize {
        assert!(constant.is_square());
        self.sizes.push(constant.rows());
        self.constant.push(constant.hermitian_part());
        self.sizes.len() - 1
    }

    /// Adds `y_var * m` (Hermitian `m`) at offset `(off, off)` of `block`.
    pub fn add_scalar(&mut self, block: usize, var: usize, off: usize, m: &ComplexMatrix) {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = m[(i, j)];
                if v != ZERO {
                    self.coeffs[var].push(Entry {
                        block,
                        row: off + i,
                        col: off + j,
                        val: v,
                    });
                }
            }
        }
    }

    /// Adds `y_var * val` at entry `(row, col)` and its conjugate at `(col, row)`.
    pub fn add_entry(&mut self, block: usize, var: usize, row: usize, col: usize, val: C64) {
        if row == col {
            self.coeffs[var].push(Entry {
                block,
                row,
                col,
                val: C64::new(val.re, 0.0),
            });
        } else {
            self.coeffs[var].push(Entry { block, row, col, val });
            self.coeffs[var].push(Entry {
                block,
                row: col,
                col: row,
                val: val.conj(),
            });
        }
    }

    /// Adds `sign * H` at offset `(off, off)`.
    pub fn add_hermitian(&mut self, block: usize, h: &HermVar, off: usize, sign: f64) {
        for &(p, q, re, im) in &h.ids {
            if p == q {
                self.add_entry(block, re, off + p, off + p, C64::new(sign, 0.0));
            } else {
                self.add_entry(block, re, off + p, off + q, C64::new(sign, 0.0));
                self.add_entry(block, im, off + p, off + q, C64::new(0.0, sign));
            }
        }
    }

    /// Adds `f(H)` at offset `(off, off)` for a linear map `f` that preserves
    /// Hermiticity.
    pub fn add_hermitian_mapped(
        &mut self,
        block: usize,
        h: &HermVar,
        off: usize,
        f: impl Fn(&ComplexMatrix) -> ComplexMatrix,
    ) {
        let n = h.n;
        for &(p, q, re, im) in &h.ids {
            let mut e = ComplexMatrix::zeros(n, n);
            if p == q {
                e[(p, p)] = C64::new(1.0, 0.0);
                self.add_scalar(block, re, off, &f(&e));
            } else {
                e[(p, q)] = C64::new(1.0, 0.0);
                e[(q, p)] = C64::new(1.0, 0.0);
                self.add_scalar(block, re, off, &f(&e));
                e[(p, q)] = C64::new(0.0, 1.0);
                e[(q, p)] = C64::new(0.0, -1.0);
                self.add_scalar(block, im, off, &f(&e));
            }
        }
    }

    /// Places `Y` at `(row_off, col_off)` and `Y†` at the mirrored position.
    pub fn add_offdiag(&mut self, block: usize, y: &ComplexVar, row_off: usize, col_off: usize) {
        for &(p, q, re, im) in &y.ids {
            self.add_entry(block, re, row_off + p, col_off + q, C64::new(1.0, 0.0));
            self.add_entry(block, im, row_off + p, col_off + q, C64::new(0.0, 1.0));
        }
    }

    /// Adds `Re Tr(Y K)` to the 1x1 `block`.
    pub fn add_re_trace(&mut self, block: usize, y: &ComplexVar, k: &ComplexMatrix, scale: f64) {
        for &(p, q, re, im) in &y.ids {
            let kqp = k[(q, p)];
            if kqp.re != 0.0 {
                self.add_entry(block, re, 0, 0, C64::new(scale * kqp.re, 0.0));
            }
            if kqp.im != 0.0 {
                self.add_entry(block, im, 0, 0, C64::new(-scale * kqp.im, 0.0));
            }
        }
    }

    /// Adds `scale * Tr H` to the 1x1 `block`.
    pub fn add_trace(&mut self, block: usize, h: &HermVar, scale: f64) {
        for &(p, q, re, _) in &h.ids {
            if p == q {
                self.add_entry(block, re, 0, 0, C64::new(scale, 0.0));
            }
        }
    }

    /// Value of a Hermitian variable at `y`.
    pub fn hermitian_value(h: &HermVar, y: &[f64]) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(h.n, h.n);
        for &(p, q, re, im) in &h.ids {
            if p == q {
                m[(p, p)] = C64::new(y[re], 0.0);
            } else {
                m[(p, q)] = C64::new(y[re], y[im]);
                m[(q, p)] = C64::new(y[re], -y[im]);
            }
        }
        m
    }

    /// `C_l + Σ y_i F_{i,l}` for every block.
    pub fn slack(&self, y: &[f64]) -> Vec<ComplexMatrix> {
        let mut z = self.constant.clone();
        for (i, entries) in self.coeffs.iter().enumerate() {
            for e in entries {
                z[e.block][(e.row, e.col)] += e.val * y[i];
            }
        }
        z
    }

    pub fn solve(&self) -> Result<SdpSolution> {
        self.solve_with(GAP_TOL, MAX_ITER)
    }

    pub fn solve_with(&self, gap_tol: f64, max_iter: usize) -> Result<SdpSolution> {
        Ipm::new(self).run(gap_tol, max_iter)
    }
}

struct Ipm<'a> {
    p: &'a Sdp,
    n_total: f64,
}

struct Direction {
    dy: Vec<f64>,
    dx: Vec<ComplexMatrix>,
    dz: Vec<ComplexMatrix>,
}

impl<'a> Ipm<'a> {
    fn new(p: &'a Sdp) -> Self {
        Self {
            p,
            n_total: p.sizes.iter().sum::<usize>() as f64,
        }
    }

    fn initial_point(&self) -> (Vec<ComplexMatrix>, Vec<ComplexMatrix>) {
        let p = self.p;
        let nb = p.sizes.len();
        let mut fnorm = vec![vec![0.0; p.num_vars()]; nb];
        for (i, entries) in p.coeffs.iter().enumerate() {
            for e in entries {
                fnorm[e.block][i] += e.val.norm_sqr();
            }
        }
        let mut x = Vec::with_capacity(nb);
        let mut z = Vec::with_capacity(nb);
        for (l, &n) in p.sizes.iter().enumerate() {
            let nf = n as f64;
            let mut xi: f64 = 10.0f64.max(nf.sqrt());
            let mut eta: f64 = 10.0f64.max(nf.sqrt()).max(p.constant[l].frobenius_norm());
            for (i, f) in fnorm[l].iter().enumerate() {
                if *f > 0.0 {
                    let f = f.sqrt();
                    xi = xi.max(nf * (1.0 + p.obj[i].abs()) / (1.0 + f));
                    eta = eta.max(f);
                }
            }
            x.push(ComplexMatrix::identity(n).scale_real(xi));
            z.push(ComplexMatrix::identity(n).scale_real(eta));
        }
        (x, z)
    }

    fn run(&self, gap_tol: f64, max_iter: usize) -> Result<SdpSolution> {
        let p = self.p;
        let m = p.num_vars();
        let nb = p.sizes.len();
        let (mut x, mut z) = self.initial_point();
        let mut y = vec![0.0; m];
        let obj_norm = 1.0 + p.obj.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c_norm = 1.0 + p.constant.iter().map(|c| c.frobenius_norm().powi(2)).sum::<f64>().sqrt();
        let mut best: Option<SdpSolution> = None;

        for iter in 0..max_iter {
            let slack = p.slack(&y);
            let rd: Vec<ComplexMatrix> = (0..nb).map(|l| &slack[l] - &z[l]).collect();
            let fx = self.apply_adjoint(&x);
            let rp: Vec<f64> = (0..m).map(|i| p.obj[i] - fx[i]).collect();
            let primal = dot(&p.obj, &y);
            let dual = -(0..nb).map(|l| p.constant[l].trace_product_re(&x[l])).sum::<f64>();
            let pinf = norm(&rp) / obj_norm;
            let dinf = rd.iter().map(|r| r.frobenius_norm().powi(2)).sum::<f64>().sqrt() / c_norm;
            let sol = SdpSolution {
                y: y.clone(),
                x: x.clone(),
                primal,
                dual,
                iterations: iter,
                status: SdpStatus::MaxIter,
            };
            let gap = (primal - dual).abs();
            if pinf < INFEAS_TOL && dinf < INFEAS_TOL && gap <= gap_tol {
                return Ok(SdpSolution {
                    status: SdpStatus::Converged,
                    ..sol
                });
            }
            if pinf < 1e-6 && dinf < 1e-6 && best.as_ref().is_none_or(|b| gap < b.gap()) {
                best = Some(sol);
            }

            let mu = (0..nb).map(|l| x[l].trace_product_re(&z[l])).sum::<f64>() / self.n_total;
            let zinv: Vec<ComplexMatrix> = match z.iter().map(hpd_inverse).collect::<Result<Vec<_>>>() {
                Ok(v) => v,
                Err(_) => break,
            };
            let schur = match self.schur(&x, &zinv) {
                Some(s) => s,
                None => break,
            };

            let pred = self.direction(&schur, &x, &zinv, &rd, 0.0, None);
            let ap = max_step(&x, &pred.dx);
            let ad = max_step(&z, &pred.dz);
            let (ap, ad) = ((0.95 * ap).min(1.0), (0.95 * ad).min(1.0));
            let mu_aff = (0..nb)
                .map(|l| {
                    let xa = {
                        let mut t = x[l].clone();
                        t.axpy(C64::new(ap, 0.0), &pred.dx[l]);
                        t
                    };
                    let mut za = z[l].clone();
                    za.axpy(C64::new(ad, 0.0), &pred.dz[l]);
                    xa.trace_product_re(&za)
                })
                .sum::<f64>()
                / self.n_total;
            let ratio = (mu_aff / mu).clamp(0.0, 1.0);
            let expon = 3.0f64.max(3.0 * ap.min(ad).powi(2)).max(1.0);
            let sigma = ratio.powf(expon).min(1.0);

            let corr: Vec<ComplexMatrix> = (0..nb).map(|l| zinv[l].matmul(&pred.dz[l]).matmul(&pred.dx[l])).collect();
            let dir = self.direction(&schur, &x, &zinv, &rd, sigma * mu, Some(&corr));
            let gamma = 0.9 + 0.09 * ap.min(ad);
            let ap = (gamma * max_step(&x, &dir.dx)).min(1.0);
            let ad = (gamma * max_step(&z, &dir.dz)).min(1.0);
            for l in 0..nb {
                x[l].axpy(C64::new(ap, 0.0), &dir.dx[l]);
                x[l] = x[l].hermitian_part();
                z[l].axpy(C64::new(ad, 0.0), &dir.dz[l]);
                z[l] = z[l].hermitian_part();
            }
            for (yi, di) in y.iter_mut().zip(&dir.dy) {
                *yi += ad * di;
            }
            if !y.iter().all(|v| v.is_finite()) {
                break;
            }
        }
        match best {
            Some(b) => Ok(b),
            None => Err(Error::SolverFailure(
                "interior-point method did not reach a feasible iterate".into(),
            )),
        }
    }

    /// `Re Tr(F_i X)` for every variable.
    fn apply_adjoint(&self, x: &[ComplexMatrix]) -> Vec<f64> {
        self.p
            .coeffs
            .iter()
            .map(|entries| entries.iter().map(|e| (e.val * x[e.block][(e.col, e.row)]).re).sum())
            .collect()
    }

    /// Cholesky factor of `M_ij = Re Tr(F_i Z⁻¹ F_j X)`.
    fn schur(&self, x: &[ComplexMatrix], zinv: &[ComplexMatrix]) -> Option<RealCholesky> {
        let p = self.p;
        let m = p.num_vars();
        let nb = p.sizes.len();
        let mut mat = vec![0.0; m * m];
        let mut g: Vec<Option<ComplexMatrix>> = vec![None; nb];
        for j in 0..m {
            for slot in g.iter_mut() {
                *slot = None;
            }
            for e in &p.coeffs[j] {
                let n = p.sizes[e.block];
                let gj = g[e.block].get_or_insert_with(|| ComplexMatrix::zeros(n, n));
                let (zi, xb) = (&zinv[e.block], &x[e.block]);
                for r in 0..n {
                    let a = zi[(r, e.row)] * e.val;
                    if a == ZERO {
                        continue;
                    }
                    let xrow = xb.row(e.col);
                    let grow = &mut gj.data_mut()[r * n..(r + 1) * n];
                    for (gv, xv) in grow.iter_mut().zip(xrow) {
                        *gv += a * xv;
                    }
                }
            }
            for i in j..m {
                let mut acc = 0.0;
                for e in &p.coeffs[i] {
                    if let Some(gj) = &g[e.block] {
                        acc += (e.val * gj[(e.col, e.row)]).re;
                    }
                }
                mat[i * m + j] = acc;
                mat[j * m + i] = acc;
            }
        }
        RealCholesky::factor_regularized(mat, m)
    }

    fn direction(
        &self,
        schur: &RealCholesky,
        x: &[ComplexMatrix],
        zinv: &[ComplexMatrix],
        rd: &[ComplexMatrix],
        target: f64,
        corr: Option<&[ComplexMatrix]>,
    ) -> Direction {
        let p = self.p;
        let nb = p.sizes.len();
        // R = target Z⁻¹ - Z⁻¹ Rd X - corr
        let r: Vec<ComplexMatrix> = (0..nb)
            .map(|l| {
                let mut t = zinv[l].matmul(&rd[l]).matmul(&x[l]).scale_real(-1.0);
                if target != 0.0 {
                    t.axpy(C64::new(target, 0.0), &zinv[l]);
                }
                if let Some(c) = corr {
                    t -= &c[l];
                }
                t
            })
            .collect();
        let fr = self.apply_adjoint(&r);
        let rhs: Vec<f64> = fr.iter().zip(&p.obj).map(|(a, o)| a - o).collect();
        let dy = schur.solve(&rhs);
        let mut dz: Vec<ComplexMatrix> = rd.to_vec();
        for (i, entries) in p.coeffs.iter().enumerate() {
            for e in entries {
                dz[e.block][(e.row, e.col)] += e.val * dy[i];
            }
        }
        let dx = (0..nb)
            .map(|l| {
                // ΔX = sym(target Z⁻¹ - X - Z⁻¹ ΔZ X - corr)
                let mut t = zinv[l].matmul(&dz[l]).matmul(&x[l]).scale_real(-1.0);
                t -= &x[l];
                if target != 0.0 {
                    t.axpy(C64::new(target, 0.0), &zinv[l]);
                }
                if let Some(c) = corr {
                    t -= &c[l];
                }
                t.hermitian_part()
            })
            .collect();
        Direction { dy, dx, dz }
    }
}

fn hpd_inverse(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let l = cholesky(&m.hermitian_part())?;
    let li = lower_inverse(&l);
    Ok(li.adjoint().matmul(&li))
}

/// Largest `α` (capped at 1e6) with `m + α d ⪰ 0` on every block.
fn max_step(m: &[ComplexMatrix], d: &[ComplexMatrix]) -> f64 {
    let mut alpha: f64 = 1e6;
    for (a, b) in m.iter().zip(d) {
        let Ok(l) = cholesky(&a.hermitian_part()) else {
            return 0.0;
        };
        let li = lower_inverse(&l);
        let t = li.matmul(b).matmul_adjoint(&li);
        let min = *eigvalsh(&t).last().expect("nonempty block");
        if min < 0.0 {
            alpha = alpha.min(-1.0 / min);
        }
    }
    alpha
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::eigh;

    #[test]
    fn min_eigenvalue_as_sdp() {
        // maximize t subject to A - t I ⪰ 0
        let a = ComplexMatrix::from_fn(3, 3, |i, j| {
            if i == j {
                C64::new([2.0, 3.0, 1.5][i], 0.0)
            } else if i < j {
                C64::new(0.3, 0.2 * (i + j) as f64)
            } else {
                C64::new(0.3, -0.2 * (i + j) as f64)
            }
        });
        let mut p = Sdp::new();
        let t = p.scalar();
        p.set_objective(t, -1.0);
        let b = p.block(a.clone());
        p.add_scalar(b, t, 0, &ComplexMatrix::identity(3).scale_real(-1.0));
        let s = p.solve().unwrap();
        assert_eq!(s.status, SdpStatus::Converged);
        let exact = eigh(&a).min();
        assert!((s.y[t] - exact).abs() < 1e-7, "{} vs {exact}", s.y[t]);
        assert!(s.gap() < 1e-7);
    }

    #[test]
    fn fidelity_as_sdp() {
        // max Re Tr X subject to [[ρ, X], [X†, σ]] ⪰ 0 equals F(ρ, σ)
        let rho = ComplexMatrix::from_real_diag(&[0.7, 0.3]);
        let sigma = ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => C64::new(0.4, 0.0),
            (1, 1) => C64::new(0.6, 0.0),
            (0, 1) => C64::new(0.1, 0.2),
            _ => C64::new(0.1, -0.2),
        });
        let mut big = ComplexMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                big[(i, j)] = rho[(i, j)];
                big[(i + 2, j + 2)] = sigma[(i, j)];
            }
        }
        let mut p = Sdp::new();
        let x = p.complex(2, 2);
        let b = p.block(big);
        p.add_offdiag(b, &x, 0, 2);
        for &(pp, q, re, _) in &x.ids {
            if pp == q {
                p.set_objective(re, -1.0);
            }
        }
        let s = p.solve().unwrap();
        let f = crate::qmatrix::fidelity_ops(&rho, &sigma);
        assert!((-s.primal - f).abs() < 1e-7, "{} vs {f}", -s.primal);
    }
}
