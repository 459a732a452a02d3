#![allow(dead_code)]

use disent::qmatrix::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn qubits(n: usize) -> SubsystemDims {
    SubsystemDims::uniform(&vec![2; n]).unwrap()
}

pub fn random_state(dims: &[usize], rank: usize, seed: u64) -> DensityOperator {
    let d: usize = dims.iter().product();
    let m = random_density_matrix(d, rank, &mut rng(seed));
    DensityOperator::new(m, SubsystemDims::uniform(dims).unwrap()).unwrap()
}

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn ket(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| c(x)).collect()
}

pub fn pure(v: &[C64], dims: &SubsystemDims) -> DensityOperator {
    PureState::normalized(v.to_vec(), dims.clone()).unwrap().to_density()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_real_diag(&[1.0, -1.0])
}

/// `Σ_j p_j ρ_A^j ⊗ ρ_B^j ⊗ U|j⟩⟨j|U†`: a quantum Markov chain A - C - B
/// written in A, B, C order.
pub fn markov_state(seed: u64) -> DensityOperator {
    let mut r = rng(seed);
    let u = random_unitary(2, &mut r);
    let w = random_density_matrix(2, 2, &mut r);
    let p = [w[(0, 0)].re, w[(1, 1)].re];
    let mut op = ComplexMatrix::zeros(8, 8);
    for (j, &pj) in p.iter().enumerate() {
        let a = random_density_matrix(2, 2, &mut r);
        let b = random_density_matrix(2, 2, &mut r);
        let cj = u.column(j);
        let term = a.kron(&b).kron(&ComplexMatrix::projector(&cj));
        op.axpy(c(pj), &term);
    }
    DensityOperator::new(op, qubits(3)).unwrap()
}

/// Fidelity from the definition `‖√a √b‖₁`, via the eigenvalues of `√a b √a`.
pub fn fidelity_oracle(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let sa = matrix_fn(a, MatrixFn::Sqrt, true).unwrap();
    let m = sa.matmul(b).matmul(&sa).hermitian_part();
    hermitian_eig(&m).unwrap().values.iter().map(|&x| x.max(0.0).sqrt()).sum()
}

pub fn entropy_oracle(m: &ComplexMatrix) -> f64 {
    hermitian_eig(m)
        .unwrap()
        .values
        .iter()
        .filter(|&&x| x > 1e-15)
        .map(|&x| -x * x.log2())
        .sum()
}
