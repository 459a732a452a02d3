//! Dense complex operator algebra over labelled multipartite spaces.

mod dims;
mod eig;
mod families;
mod fidelity;
mod funcs;
mod io;
mod matrix;
pub(crate) mod ops;
mod random;
mod state;

/// Maximum entrywise `|m - m†|` accepted as Hermitian.
pub const TOL_HERM: f64 = 1e-10;
/// Most negative eigenvalue accepted as positive semidefinite.
pub const TOL_PSD: f64 = 1e-9;
/// Allowed deviation of a normalized trace from one.
pub const TOL_TRACE: f64 = 1e-9;
/// Largest total dimension any dense routine will build.
pub const DENSE_LIMIT: usize = 4096;

pub use dims::{Bipartition, Party, SubsystemDims};
pub use eig::{hermitian_eig, HermitianEig, JACOBI_MAX_DIM};
pub(crate) use eig::{eigh, eigvalsh};
pub use families::{make_state, StateFamily};
pub use fidelity::{fidelity, purified_distance};
pub(crate) use fidelity::purified_distance_ops;
#[cfg(test)]
pub(crate) use fidelity::fidelity_ops;
pub use funcs::{cholesky, matrix_fn, MatrixFn};
pub(crate) use funcs::{inverse_sqrt_on_support, pinv_hermitian, support_projector, SUPPORT_TOL};
pub use io::{parse_state, read_state, state_to_json};
pub use matrix::{ComplexMatrix, C64};
pub(crate) use matrix::ZERO;
pub use ops::{partial_trace, partial_transpose, partial_transpose_many, permute_parties, tensor_power, tensor_product, trace_out};
pub use random::{random_density_matrix, random_hermitian, random_unit_vector, random_unitary};
pub use state::{DensityOperator, PureState};

/// Fails with `DimensionBlowup` when `dim` exceeds [`DENSE_LIMIT`].
pub(crate) fn guard_dim(dim: usize) -> crate::error::Result<()> {
    if dim > DENSE_LIMIT {
        return Err(crate::error::Error::DimensionBlowup {
            dim,
            limit: DENSE_LIMIT,
        });
    }
    Ok(())
}
