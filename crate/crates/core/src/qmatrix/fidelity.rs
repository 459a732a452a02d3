//! Uhlmann fidelity and purified distance.

use super::eig::{eigh, eigvalsh, HermitianEig};
use super::matrix::{ComplexMatrix, C64};
use super::state::DensityOperator;
use crate::error::{Error, Result};

/// Generalized fidelity `‖√a √b‖₁ + √((1 - Tr a)(1 - Tr b))`.
pub fn fidelity(a: &DensityOperator, b: &DensityOperator) -> Result<f64> {
    check_dims(a, b)?;
    Ok(fidelity_ops(a.op(), b.op()))
}

/// `√(1 - F²)` with `F` the generalized fidelity.
pub fn purified_distance(a: &DensityOperator, b: &DensityOperator) -> Result<f64> {
    check_dims(a, b)?;
    Ok(purified_distance_ops(a.op(), b.op()))
}

fn check_dims(a: &DensityOperator, b: &DensityOperator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(format!(
            "fidelity between dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Eigenvalues above this count as support when taking square roots.
const ROOT_SUPPORT: f64 = 1e-15;

pub(crate) fn fidelity_ops(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    generalized(&eigh(a), &eigh(b), a, b)
}

/// `‖√a √b‖₁` from the singular values of `√Λa Va† Vb √Λb` on both supports.
/// The Gram matrix is formed on the smaller side so it has no spurious null
/// space whose rounding noise would survive the square root.
fn root_overlap(ea: &HermitianEig, eb: &HermitianEig) -> f64 {
    let sa: Vec<usize> = (0..ea.values.len()).filter(|&k| ea.values[k] > ROOT_SUPPORT).collect();
    let sb: Vec<usize> = (0..eb.values.len()).filter(|&k| eb.values[k] > ROOT_SUPPORT).collect();
    if sa.is_empty() || sb.is_empty() {
        return 0.0;
    }
    let n = ea.vectors.rows();
    let k = ComplexMatrix::from_fn(sa.len(), sb.len(), |i, j| {
        let (p, q) = (sa[i], sb[j]);
        let dot: C64 = (0..n).map(|r| ea.vectors[(r, p)].conj() * eb.vectors[(r, q)]).sum();
        dot * (ea.values[p] * eb.values[q]).sqrt()
    });
    let gram = if sa.len() <= sb.len() {
        k.matmul_adjoint(&k)
    } else {
        k.adjoint().matmul(&k)
    };
    eigvalsh(&gram.hermitian_part()).iter().map(|&x| x.max(0.0).sqrt()).sum()
}

fn generalized(ea: &HermitianEig, eb: &HermitianEig, a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let f = root_overlap(ea, eb);
    let (ta, tb) = (a.trace().re, b.trace().re);
    let corr = ((1.0 - ta).max(0.0) * (1.0 - tb).max(0.0)).sqrt();
    (f + corr).min(1.0)
}

pub(crate) fn purified_distance_ops(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let (ea, eb) = (eigh(a), eigh(b));
    let f = generalized(&ea, &eb, a, b);
    let p = (1.0 - f * f).max(0.0).sqrt();
    let (ta, tb) = (a.trace().re, b.trace().re);
    if (ta - 1.0).abs() > 1e-9 || (tb - 1.0).abs() > 1e-9 {
        return p;
    }
    // 1 - F ≤ ‖√a - √b‖²/2, so ‖√a - √b‖_F bounds P from above without the
    // cancellation in 1 - F² for nearly equal states.
    let root = |e: &HermitianEig| e.reconstruct_with(|x| x.max(0.0).sqrt());
    let bound = (&root(&ea) - &root(&eb)).frobenius_norm();
    p.min(bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::dims::SubsystemDims;

    fn qubit(diag: [f64; 2]) -> DensityOperator {
        DensityOperator::new(ComplexMatrix::from_real_diag(&diag), SubsystemDims::single("A", 2).unwrap()).unwrap()
    }

    #[test]
    fn textbook_values() {
        let z0 = qubit([1.0, 0.0]);
        let z1 = qubit([0.0, 1.0]);
        let mixed = qubit([0.5, 0.5]);
        assert!((fidelity(&z0, &z0).unwrap() - 1.0).abs() < 1e-15);
        assert!(fidelity(&z0, &z1).unwrap().abs() < 1e-15);
        assert!((fidelity(&mixed, &z0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(purified_distance(&z0, &z0).unwrap() < 1e-15);
        assert!((purified_distance(&z0, &z1).unwrap() - 1.0).abs() < 1e-15);
        assert!((purified_distance(&mixed, &z0).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn subnormalized_correction() {
        let d = SubsystemDims::single("A", 2).unwrap();
        let half = DensityOperator::new_subnormalized(ComplexMatrix::from_real_diag(&[0.5, 0.0]), d).unwrap();
        let z0 = qubit([1.0, 0.0]);
        assert!((fidelity(&half, &z0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
