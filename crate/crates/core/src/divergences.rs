//! Entropies, relative entropies, max-relative entropies and their smoothed
//! versions. Everything is in bits.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::qmatrix::{
    eigh, eigvalsh, partial_trace, permute_parties, tensor_product, Bipartition, ComplexMatrix, DensityOperator,
    HermitianEig, C64, SUPPORT_TOL,
};
use crate::separability::ProductEnsemble;
use crate::solver::sdp::{Sdp, SdpStatus};

/// Below this smoothing parameter the unsmoothed quantity is returned.
const EPS_EXACT: f64 = 1e-9;
/// Weight of `ρ` outside `supp σ` that still counts as contained.
const SUPPORT_LEAK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Exact,
    Converged,
    MaxIter,
    Infeasible,
}

/// A divergence value together with its certificate.
#[derive(Clone, Debug, Serialize)]
pub struct DivergenceValue {
    #[serde(serialize_with = "serialize_bits")]
    pub bits: f64,
    /// Optimizer or feasible point of the underlying problem.
    #[serde(skip)]
    pub certificate: Option<DensityOperator>,
    /// Lower bound for minimizations.
    pub dual_bound: Option<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Separable decomposition of the certificate, when one was constructed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<ProductEnsemble>,
}

/// Writes `+∞` as the string `"inf"`.
pub fn serialize_bits<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

impl DivergenceValue {
    pub fn exact(bits: f64) -> Self {
        Self {
            bits,
            certificate: None,
            dual_bound: Some(bits),
            status: if bits.is_infinite() {
                SolveStatus::Infeasible
            } else {
                SolveStatus::Exact
            },
            iterations: 0,
            ensemble: None,
        }
    }

    pub fn infinite() -> Self {
        Self::exact(f64::INFINITY)
    }

    pub fn is_infinite(&self) -> bool {
        self.bits.is_infinite()
    }

    /// `bits - dual_bound` when a bound is available.
    pub fn gap(&self) -> Option<f64> {
        self.dual_bound.map(|d| if self.bits.is_infinite() { 0.0 } else { self.bits - d })
    }
}

fn check_same_shape(a: &DensityOperator, b: &DensityOperator) -> Result<()> {
    if a.dims().dims() != b.dims().dims() {
        return Err(Error::DimMismatch(format!(
            "{:?} against {:?}",
            a.dims().dims(),
            b.dims().dims()
        )));
    }
    Ok(())
}

/// `-Σ λ log2 λ` over the nonzero eigenvalues.
pub fn von_neumann_entropy(s: &DensityOperator) -> Result<f64> {
    if s.is_subnormalized() {
        return Err(Error::Subnormalized);
    }
    Ok(entropy_of_spectrum(&s.eigenvalues()))
}

pub(crate) fn entropy_of_spectrum(values: &[f64]) -> f64 {
    values
        .iter()
        .filter(|&&x| x > SUPPORT_TOL)
        .map(|&x| -x * x.log2())
        .sum::<f64>()
        .max(0.0)
}

fn entropy_of(s: &DensityOperator, keep: &[&str]) -> Result<f64> {
    let m = partial_trace(s, keep)?;
    Ok(entropy_of_spectrum(&m.eigenvalues()))
}

/// Eigenvectors of `m` with eigenvalue above the support threshold.
pub(crate) fn support_basis(e: &HermitianEig) -> (ComplexMatrix, Vec<f64>) {
    let keep: Vec<usize> = (0..e.values.len()).filter(|&i| e.values[i] > SUPPORT_TOL).collect();
    let n = e.vectors.rows();
    let basis = ComplexMatrix::from_fn(n, keep.len(), |i, j| e.vectors[(i, keep[j])]);
    let vals = keep.iter().map(|&i| e.values[i]).collect();
    (basis, vals)
}

/// Weight of `rho` outside the span of the columns of `w`.
fn leak(rho: &ComplexMatrix, w: &ComplexMatrix) -> f64 {
    let inside = w.adjoint().matmul(rho).matmul(w).trace().re;
    rho.trace().re - inside
}

/// `Tr ρ (log2 ρ - log2 σ)`, or `+∞` when `supp ρ ⊄ supp σ`.
pub fn relative_entropy(rho: &DensityOperator, sigma: &DensityOperator) -> Result<DivergenceValue> {
    check_same_shape(rho, sigma)?;
    Ok(DivergenceValue::exact(relative_entropy_ops(rho.op(), sigma.op())))
}

pub(crate) fn relative_entropy_ops(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> f64 {
    let es = eigh(sigma);
    let (w, vals) = support_basis(&es);
    if leak(rho, &w) > SUPPORT_LEAK {
        return f64::INFINITY;
    }
    let er = eigh(rho);
    let rlr: f64 = er.values.iter().filter(|&&x| x > SUPPORT_TOL).map(|&x| x * x.log2()).sum();
    let rc = w.adjoint().matmul(rho).matmul(&w);
    let cross: f64 = (0..vals.len()).map(|i| rc[(i, i)].re * vals[i].log2()).sum();
    let d = rlr - cross;
    let normalized = (rho.trace().re - 1.0).abs() < 1e-9 && (sigma.trace().re - 1.0).abs() < 1e-9;
    if normalized {
        d.max(0.0)
    } else {
        d
    }
}

/// `ρ_L ⊗ ρ_R` arranged in the party order of `s`.
pub fn product_of_marginals(s: &DensityOperator, cut: &Bipartition) -> Result<DensityOperator> {
    cut.validate(s.dims())?;
    let left = partial_trace(s, &cut.left)?;
    let right = partial_trace(s, &cut.right)?;
    let prod = tensor_product(&left, &right);
    let labels = prod.dims().labels();
    let order = s
        .dims()
        .labels()
        .iter()
        .map(|l| labels.iter().position(|x| x == l).expect("cut covers all parties"))
        .collect::<Vec<_>>();
    permute_parties(&prod, &order)
}

/// `I(L:R) = H(L) + H(R) - H(LR)`.
pub fn mutual_information(s: &DensityOperator, cut: &Bipartition) -> Result<f64> {
    if s.is_subnormalized() {
        return Err(Error::Subnormalized);
    }
    cut.validate(s.dims())?;
    let l: Vec<&str> = cut.left.iter().map(String::as_str).collect();
    let r: Vec<&str> = cut.right.iter().map(String::as_str).collect();
    let h = entropy_of_spectrum(&s.eigenvalues());
    Ok((entropy_of(s, &l)? + entropy_of(s, &r)? - h).max(0.0))
}

/// `I(A:B|C) = H(AC) + H(BC) - H(ABC) - H(C)`.
pub fn conditional_mutual_information<S: AsRef<str>>(
    s: &DensityOperator,
    a: &[S],
    b: &[S],
    c: &[S],
) -> Result<f64> {
    if s.is_subnormalized() {
        return Err(Error::Subnormalized);
    }
    let a: Vec<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: Vec<&str> = b.iter().map(AsRef::as_ref).collect();
    let c: Vec<&str> = c.iter().map(AsRef::as_ref).collect();
    if a.is_empty() || b.is_empty() || c.is_empty() {
        return Err(Error::BadPartition("A, B and C must be nonempty".into()));
    }
    let all: Vec<&str> = a.iter().chain(&b).chain(&c).copied().collect();
    let idx = s.dims().indices_of(&all)?;
    if idx.len() != s.dims().len() {
        return Err(Error::BadPartition(format!(
            "A, B, C cover {} of {} parties",
            idx.len(),
            s.dims().len()
        )));
    }
    let ac: Vec<&str> = a.iter().chain(&c).copied().collect();
    let bc: Vec<&str> = b.iter().chain(&c).copied().collect();
    let h_abc = entropy_of_spectrum(&s.eigenvalues());
    let v = entropy_of(s, &ac)? + entropy_of(s, &bc)? - h_abc - entropy_of(s, &c)?;
    Ok(v.max(0.0))
}

/// `log2 λ*` with `λ*` the largest eigenvalue of `σ^{-1/2} ρ σ^{-1/2}` on `supp σ`.
pub fn d_max(rho: &DensityOperator, sigma: &DensityOperator) -> Result<DivergenceValue> {
    check_same_shape(rho, sigma)?;
    let bits = d_max_ops(rho.op(), sigma.op());
    let normalized = !rho.is_subnormalized() && !sigma.is_subnormalized();
    Ok(DivergenceValue::exact(if normalized { bits.max(0.0) } else { bits }))
}

pub(crate) fn d_max_ops(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> f64 {
    let es = eigh(sigma);
    let (w, vals) = support_basis(&es);
    if leak(rho, &w) > SUPPORT_LEAK {
        return f64::INFINITY;
    }
    let r = vals.len();
    let rc = w.adjoint().matmul(rho).matmul(&w);
    let scaled = ComplexMatrix::from_fn(r, r, |i, j| rc[(i, j)] / (vals[i] * vals[j]).sqrt());
    let top = eigvalsh(&scaled)[0];
    if top <= 0.0 {
        f64::NEG_INFINITY
    } else {
        top.log2()
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::BadParameter(format!("smoothing parameter {eps} outside [0, 1)")));
    }
    Ok(())
}

/// Smallest `log2 λ` with `ρ̄ ≤ λ σ` over subnormalized `ρ̄` within purified
/// distance `eps` of `ρ`.
pub fn smooth_d_max(rho: &DensityOperator, sigma: &DensityOperator, eps: f64) -> Result<DivergenceValue> {
    check_same_shape(rho, sigma)?;
    check_eps(eps)?;
    if rho.is_subnormalized() {
        return Err(Error::Subnormalized);
    }
    if eps < EPS_EXACT {
        let mut v = d_max(rho, sigma)?;
        v.certificate = Some(rho.clone());
        return Ok(v);
    }
    let c = (1.0 - eps * eps).sqrt();
    let (w, svals) = support_basis(&eigh(sigma.op()));
    let inside = w.adjoint().matmul(rho.op()).matmul(&w).trace().re;
    if inside < c * c - SUPPORT_LEAK {
        return Ok(DivergenceValue::infinite());
    }
    let (v, rvals) = support_basis(&eigh(rho.op()));
    let (rs, rr) = (svals.len(), rvals.len());

    let mut p = Sdp::new();
    let lam = p.scalar();
    p.set_objective(lam, 1.0);
    let rbar = p.hermitian(rs);
    let y = p.complex(rr, rs);
    // λ Σ - R ⪰ 0
    let b1 = p.block(ComplexMatrix::zeros(rs, rs));
    p.add_scalar(b1, lam, 0, &ComplexMatrix::from_real_diag(&svals));
    p.add_hermitian(b1, &rbar, 0, -1.0);
    add_ball(&mut p, &rbar, &y, &rvals, &w.adjoint().matmul(&v), c);

    let sol = p.solve()?;
    let lam_v = sol.y[lam];
    check_sdp(&sol, lam_v.abs().max(1.0))?;
    let r = Sdp::hermitian_value(&rbar, &sol.y);
    let cert = w.matmul(&r).matmul_adjoint(&w).hermitian_part();
    let bits = lam_v.max(f64::MIN_POSITIVE).log2().max(0.0).min(d_max_ops(rho.op(), sigma.op()));
    Ok(DivergenceValue {
        bits,
        certificate: Some(DensityOperator::from_parts_unchecked(cert, rho.dims().clone(), true)),
        dual_bound: Some(if sol.dual > 0.0 { sol.dual.log2().max(0.0).min(bits) } else { 0.0 }),
        status: status_of(&sol),
        iterations: sol.iterations,
        ensemble: None,
    })
}

/// Adds the purified-distance ball `F(ρ, W R W†) ≥ c`, `Tr R ≤ 1` with `ρ`
/// compressed to its support (`rvals`) and `k = W† V`.
pub(crate) fn add_ball(
    p: &mut Sdp,
    rbar: &crate::solver::sdp::HermVar,
    y: &crate::solver::sdp::ComplexVar,
    rvals: &[f64],
    k: &ComplexMatrix,
    c: f64,
) {
    let (rr, rs) = (rvals.len(), rbar.n);
    let tr = p.block(ComplexMatrix::identity(1));
    p.add_trace(tr, rbar, -1.0);
    let mut c0 = ComplexMatrix::zeros(rr + rs, rr + rs);
    for (i, &x) in rvals.iter().enumerate() {
        c0[(i, i)] = C64::new(x, 0.0);
    }
    let fb = p.block(c0);
    p.add_offdiag(fb, y, 0, rr);
    p.add_hermitian(fb, rbar, rr, 1.0);
    let lin = p.block(ComplexMatrix::identity(1).scale_real(-c));
    p.add_re_trace(lin, y, k, 1.0);
}

pub(crate) fn status_of(sol: &crate::solver::sdp::SdpSolution) -> SolveStatus {
    match sol.status {
        SdpStatus::Converged => SolveStatus::Converged,
        SdpStatus::MaxIter => SolveStatus::MaxIter,
    }
}

/// Rejects a non-converged solve whose gap is not small relative to `scale`.
pub(crate) fn check_sdp(sol: &crate::solver::sdp::SdpSolution, scale: f64) -> Result<()> {
    if sol.status == SdpStatus::MaxIter && sol.gap() > 1e-5 * scale {
        return Err(Error::SolverFailure(format!(
            "duality gap {:.3e} after {} iterations",
            sol.gap(),
            sol.iterations
        )));
    }
    Ok(())
}

/// `min 2 log2 Tr √ρ̄_P` over subnormalized `ρ̄_P` within purified distance
/// `eps` of the marginal on `party`.
///
/// The optimal `ρ̄` commutes with the marginal, so the problem reduces to
/// the spectrum: minimize `Σ x` over `x ≥ 0`, `‖x‖ ≤ 1`, `Σ √p_i x_i ≥ √(1-ε²)`.
pub fn smooth_max_entropy<S: AsRef<str>>(s: &DensityOperator, party: &[S], eps: f64) -> Result<DivergenceValue> {
    if s.is_subnormalized() {
        return Err(Error::Subnormalized);
    }
    check_eps(eps)?;
    let marginal = partial_trace(s, party)?;
    let e = marginal.eig();
    let p: Vec<f64> = e.values.iter().map(|&x| x.max(0.0)).collect();
    if eps < EPS_EXACT {
        let t: f64 = p.iter().map(|x| x.sqrt()).sum();
        let mut v = DivergenceValue::exact(2.0 * t.log2());
        v.certificate = Some(marginal);
        return Ok(v);
    }
    let c = (1.0 - eps * eps).sqrt();
    let n = p.len();
    let mut prob = Sdp::new();
    let x: Vec<usize> = (0..n).map(|_| prob.scalar()).collect();
    for &xi in &x {
        prob.set_objective(xi, 1.0);
    }
    let pos = prob.block(ComplexMatrix::zeros(n, n));
    for (i, &xi) in x.iter().enumerate() {
        prob.add_entry(pos, xi, i, i, C64::new(1.0, 0.0));
    }
    let norm = prob.block(ComplexMatrix::identity(n + 1));
    for (i, &xi) in x.iter().enumerate() {
        prob.add_entry(norm, xi, 0, i + 1, C64::new(1.0, 0.0));
    }
    let lin = prob.block(ComplexMatrix::identity(1).scale_real(-c));
    for (i, &xi) in x.iter().enumerate() {
        prob.add_entry(lin, xi, 0, 0, C64::new(p[i].sqrt(), 0.0));
    }
    let sol = prob.solve()?;
    check_sdp(&sol, 1.0)?;
    let xs: Vec<f64> = x.iter().map(|&i| sol.y[i].max(0.0)).collect();
    let cert = e.reconstruct_with_values(&xs.iter().map(|v| v * v).collect::<Vec<_>>());
    let sum: f64 = xs.iter().sum();
    Ok(DivergenceValue {
        bits: 2.0 * sum.max(f64::MIN_POSITIVE).log2(),
        certificate: Some(DensityOperator::from_parts_unchecked(cert, marginal.dims().clone(), true)),
        dual_bound: Some(2.0 * sol.dual.max(f64::MIN_POSITIVE).log2()),
        status: status_of(&sol),
        iterations: sol.iterations,
        ensemble: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::{make_state, StateFamily, SubsystemDims};

    fn qubit(d: [f64; 2]) -> DensityOperator {
        DensityOperator::new(ComplexMatrix::from_real_diag(&d), SubsystemDims::single("A", 2).unwrap()).unwrap()
    }

    #[test]
    fn entropies() {
        assert!(von_neumann_entropy(&qubit([1.0, 0.0])).unwrap().abs() < 1e-15);
        assert!((von_neumann_entropy(&qubit([0.5, 0.5])).unwrap() - 1.0).abs() < 1e-15);
        let half = DensityOperator::new_subnormalized(
            ComplexMatrix::from_real_diag(&[0.5, 0.0]),
            SubsystemDims::single("A", 2).unwrap(),
        )
        .unwrap();
        assert!(matches!(von_neumann_entropy(&half), Err(Error::Subnormalized)));
    }

    #[test]
    fn relative_entropy_values() {
        let z0 = qubit([1.0, 0.0]);
        let z1 = qubit([0.0, 1.0]);
        let mixed = qubit([0.5, 0.5]);
        assert!(relative_entropy(&z0, &z0).unwrap().bits.abs() < 1e-15);
        assert!((relative_entropy(&z0, &mixed).unwrap().bits - 1.0).abs() < 1e-15);
        assert!(relative_entropy(&z0, &z1).unwrap().is_infinite());
        assert!((d_max(&z0, &mixed).unwrap().bits - 1.0).abs() < 1e-15);
        assert!(d_max(&mixed, &z0).unwrap().is_infinite());
        assert!(d_max(&mixed, &mixed).unwrap().bits.abs() < 1e-15);
    }

    #[test]
    fn infinity_serializes_as_string() {
        let v = serde_json::to_value(DivergenceValue::infinite()).unwrap();
        assert_eq!(v["bits"], "inf");
        assert_eq!(v["status"], "infeasible");
    }

    #[test]
    fn mutual_information_values() {
        let bell = make_state(&StateFamily::Bell).unwrap();
        assert!((mutual_information(&bell, &Bipartition::ab()).unwrap() - 2.0).abs() < 1e-12);
        let mc = make_state(&StateFamily::MaxCorr(2)).unwrap();
        assert!((mutual_information(&mc, &Bipartition::ab()).unwrap() - 1.0).abs() < 1e-12);
        let ghz = make_state(&StateFamily::Ghz(3)).unwrap();
        assert!((conditional_mutual_information(&ghz, &["A"], &["B"], &["C"]).unwrap() - 1.0).abs() < 1e-12);
        assert!(conditional_mutual_information(&ghz, &["A"], &["B"], &["B"]).is_err());
        assert!(mutual_information(&ghz, &Bipartition::ab()).is_err());
    }

    #[test]
    fn smooth_d_max_basics() {
        let z0 = qubit([1.0, 0.0]);
        let mixed = qubit([0.5, 0.5]);
        let exact = smooth_d_max(&z0, &mixed, 0.0).unwrap();
        assert!((exact.bits - 1.0).abs() < 1e-12);
        let same = smooth_d_max(&mixed, &mixed, 0.2).unwrap();
        assert!(same.bits.abs() < 1e-6);
        let s = smooth_d_max(&z0, &mixed, 0.1).unwrap();
        assert!(s.bits > 0.0 && s.bits < 1.0, "{}", s.bits);
        assert!(s.gap().unwrap() < 1e-6);
    }

    #[test]
    fn smooth_max_entropy_basics() {
        let mixed = qubit([0.5, 0.5]);
        assert!((smooth_max_entropy(&mixed, &["A"], 0.0).unwrap().bits - 1.0).abs() < 1e-12);
        assert!(smooth_max_entropy(&qubit([1.0, 0.0]), &["A"], 0.0).unwrap().bits.abs() < 1e-12);
        let s = smooth_max_entropy(&mixed, &["A"], 0.1).unwrap();
        assert!(s.bits < 1.0);
    }
}
