//! Density operators and pure states with subsystem structure.

use super::dims::SubsystemDims;
use super::eig::{eigh, eigvalsh, HermitianEig};
use super::matrix::{ComplexMatrix, C64};
use super::{TOL_HERM, TOL_PSD, TOL_TRACE};
use crate::error::{Error, Result};

/// A Hermitian positive semidefinite operator of unit (or at most unit) trace.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    op: ComplexMatrix,
    dims: SubsystemDims,
    subnormalized: bool,
}

impl DensityOperator {
    /// Validates a normalized state.
    pub fn new(op: ComplexMatrix, dims: SubsystemDims) -> Result<Self> {
        Self::validated(op, dims, false)
    }

    /// Validates a state with trace at most one.
    pub fn new_subnormalized(op: ComplexMatrix, dims: SubsystemDims) -> Result<Self> {
        Self::validated(op, dims, true)
    }

    /// Clips eigenvalues in `[-TOL_PSD, 0)` to zero and renormalizes.
    pub fn with_repair(op: ComplexMatrix, dims: SubsystemDims) -> Result<Self> {
        check_shape(&op, &dims)?;
        let dev = op.hermitian_deviation();
        if dev > TOL_HERM {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let e = eigh(&op);
        if e.min() < -TOL_PSD {
            return Err(Error::NegativeEigenvalue { value: e.min() });
        }
        let clipped = e.reconstruct_with(|x| x.max(0.0));
        let tr = clipped.trace().re;
        if tr <= 0.0 {
            return Err(Error::InvalidState("zero trace".into()));
        }
        Ok(Self {
            op: clipped.scale_real(1.0 / tr),
            dims,
            subnormalized: false,
        })
    }

    fn validated(op: ComplexMatrix, dims: SubsystemDims, subnormalized: bool) -> Result<Self> {
        check_shape(&op, &dims)?;
        if !op.all_finite() {
            return Err(Error::InvalidState("non-finite entries".into()));
        }
        let dev = op.hermitian_deviation();
        if dev > TOL_HERM {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let tr = op.trace().re;
        if subnormalized {
            if tr > 1.0 + TOL_TRACE {
                return Err(Error::InvalidState(format!("trace {tr} exceeds 1")));
            }
        } else if (tr - 1.0).abs() > TOL_TRACE {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = *eigvalsh(&op).last().expect("nonempty");
        if min < -TOL_PSD {
            return Err(Error::NegativeEigenvalue { value: min });
        }
        Ok(Self {
            op: op.hermitian_part(),
            dims,
            subnormalized,
        })
    }

    /// Wraps an operator that is a state by construction.
    pub(crate) fn from_parts_unchecked(op: ComplexMatrix, dims: SubsystemDims, subnormalized: bool) -> Self {
        debug_assert_eq!(op.rows(), dims.total());
        Self {
            op,
            dims,
            subnormalized,
        }
    }

    pub fn from_pure(psi: &PureState) -> Self {
        Self {
            op: ComplexMatrix::projector(&psi.vec),
            dims: psi.dims.clone(),
            subnormalized: false,
        }
    }

    pub fn maximally_mixed(dims: SubsystemDims) -> Self {
        let d = dims.total();
        Self {
            op: ComplexMatrix::identity(d).scale_real(1.0 / d as f64),
            dims,
            subnormalized: false,
        }
    }

    /// Computational basis state `|i⟩⟨i|`.
    pub fn basis(dims: SubsystemDims, index: usize) -> Result<Self> {
        let d = dims.total();
        if index >= d {
            return Err(Error::BadParameter(format!("basis index {index} out of range {d}")));
        }
        let mut op = ComplexMatrix::zeros(d, d);
        op[(index, index)] = C64::new(1.0, 0.0);
        Ok(Self::from_parts_unchecked(op, dims, false))
    }

    pub fn op(&self) -> &ComplexMatrix {
        &self.op
    }

    pub fn into_op(self) -> ComplexMatrix {
        self.op
    }

    pub fn dims(&self) -> &SubsystemDims {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.op.rows()
    }

    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    pub fn is_subnormalized(&self) -> bool {
        self.subnormalized
    }

    pub fn eig(&self) -> HermitianEig {
        eigh(&self.op)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigvalsh(&self.op)
    }

    /// Number of eigenvalues above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.eigenvalues().iter().filter(|&&x| x > tol).count()
    }

    /// `U ρ U†` for a unitary on the full space.
    pub fn conjugate(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.rows() != self.dim() || u.cols() != self.dim() {
            return Err(Error::DimMismatch(format!(
                "unitary is {}x{}, state dimension {}",
                u.rows(),
                u.cols(),
                self.dim()
            )));
        }
        let op = u.matmul(&self.op).matmul_adjoint(u).hermitian_part();
        Ok(Self::from_parts_unchecked(op, self.dims.clone(), self.subnormalized))
    }

    /// Same operator with a different labelling of the same dimensions.
    pub fn with_dims(&self, dims: SubsystemDims) -> Result<Self> {
        if dims.dims() != self.dims.dims() {
            return Err(Error::DimMismatch("relabelling must keep the local dimensions".into()));
        }
        Ok(Self::from_parts_unchecked(self.op.clone(), dims, self.subnormalized))
    }

    /// `t * self` as a subnormalized state (`0 <= t <= 1`).
    pub fn scaled(&self, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::BadParameter(format!("scale {t} outside [0, 1]")));
        }
        Ok(Self::from_parts_unchecked(self.op.scale_real(t), self.dims.clone(), true))
    }

    /// Convex combination `(1 - t) self + t other`.
    pub fn mix(&self, other: &Self, t: f64) -> Result<Self> {
        if self.dims.dims() != other.dims.dims() {
            return Err(Error::DimMismatch("mixing states of different shape".into()));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::BadParameter(format!("mixing weight {t} outside [0, 1]")));
        }
        let mut op = self.op.scale_real(1.0 - t);
        op.axpy(C64::new(t, 0.0), &other.op);
        Ok(Self::from_parts_unchecked(
            op,
            self.dims.clone(),
            self.subnormalized || other.subnormalized,
        ))
    }

    /// Checks the invariants of a valid state, for use in tests and asserts.
    pub fn check_invariants(&self) -> Result<()> {
        Self::validated(self.op.clone(), self.dims.clone(), self.subnormalized).map(|_| ())
    }
}

fn check_shape(op: &ComplexMatrix, dims: &SubsystemDims) -> Result<()> {
    if !op.is_square() {
        return Err(Error::DimMismatch(format!(
            "operator is {}x{}, expected square",
            op.rows(),
            op.cols()
        )));
    }
    if dims.total() != op.rows() {
        return Err(Error::DimMismatch(format!(
            "subsystem dimensions multiply to {}, operator dimension is {}",
            dims.total(),
            op.rows()
        )));
    }
    Ok(())
}

/// A normalized state vector.
#[derive(Clone, Debug)]
pub struct PureState {
    vec: Vec<C64>,
    dims: SubsystemDims,
}

impl PureState {
    pub fn new(vec: Vec<C64>, dims: SubsystemDims) -> Result<Self> {
        if vec.len() != dims.total() {
            return Err(Error::DimMismatch(format!(
                "vector length {} for total dimension {}",
                vec.len(),
                dims.total()
            )));
        }
        let norm = vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("vector norm {norm} differs from 1")));
        }
        Ok(Self { vec, dims })
    }

    /// Normalizes `vec` before wrapping it.
    pub fn normalized(mut vec: Vec<C64>, dims: SubsystemDims) -> Result<Self> {
        let norm = vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        for z in vec.iter_mut() {
            *z /= norm;
        }
        Self::new(vec, dims)
    }

    pub fn vec(&self) -> &[C64] {
        &self.vec
    }

    pub fn dims(&self) -> &SubsystemDims {
        &self.dims
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator::from_pure(self)
    }

    /// `|self⟩ ⊗ |other⟩`.
    pub fn tensor(&self, other: &Self) -> Self {
        let vec = self
            .vec
            .iter()
            .flat_map(|a| other.vec.iter().map(move |b| a * b))
            .collect();
        Self {
            vec,
            dims: self.dims.concat(&other.dims),
        }
    }
}
