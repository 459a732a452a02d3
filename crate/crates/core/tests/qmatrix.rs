mod common;

use common::*;
use disent::qmatrix::*;
use disent::Error;
use proptest::prelude::*;

fn bell() -> DensityOperator {
    make_state(&StateFamily::Bell).unwrap()
}

#[test]
fn tensor_of_mixed_qubits_is_mixed() {
    let half = DensityOperator::maximally_mixed(SubsystemDims::single("A", 2).unwrap());
    let half_b = DensityOperator::maximally_mixed(SubsystemDims::single("B", 2).unwrap());
    let t = tensor_product(&half, &half_b);
    assert_eq!(t.dims().labels(), vec!["A", "B"]);
    assert!(t.op().max_abs_diff(&ComplexMatrix::identity(4).scale_real(0.25)) < 1e-15);
}

#[test]
fn tensor_of_basis_states() {
    let zero = DensityOperator::basis(SubsystemDims::single("A", 2).unwrap(), 0).unwrap();
    let one = DensityOperator::basis(SubsystemDims::single("B", 2).unwrap(), 1).unwrap();
    let t = tensor_product(&zero, &one);
    let expected = DensityOperator::basis(SubsystemDims::bipartite(2, 2), 1).unwrap();
    assert!(t.op().max_abs_diff(expected.op()) < 1e-15);
}

#[test]
fn tracing_out_a_tensor_factor() {
    let rho = random_state(&[2], 2, 1);
    let sigma = random_state(&[3], 3, 2).with_dims(SubsystemDims::single("B", 3).unwrap()).unwrap();
    let t = tensor_product(&rho, &sigma);
    let back = partial_trace(&t, &["A"]).unwrap();
    assert!(back.op().max_abs_diff(rho.op()) < 1e-14);
}

#[test]
fn marginals_of_entangled_states() {
    let a = partial_trace(&bell(), &["A"]).unwrap();
    assert!(a.op().max_abs_diff(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-15);

    let ghz = make_state(&StateFamily::Ghz(3)).unwrap();
    let bc = partial_trace(&ghz, &["B", "C"]).unwrap();
    let expected = ComplexMatrix::from_real_diag(&[0.5, 0.0, 0.0, 0.5]);
    assert!(bc.op().max_abs_diff(&expected) < 1e-15);
    assert_eq!(bc.dims().labels(), vec!["B", "C"]);

    let prod = tensor_product(&random_state(&[2], 1, 3), &random_state(&[2], 2, 4).with_dims(SubsystemDims::single("B", 2).unwrap()).unwrap());
    let a = partial_trace(&prod, &["A"]).unwrap();
    assert!(a.op().max_abs_diff(random_state(&[2], 1, 3).op()) < 1e-14);
}

#[test]
fn unknown_labels_are_rejected() {
    assert!(matches!(partial_trace(&bell(), &["Z"]), Err(Error::UnknownLabel(_))));
    assert!(matches!(partial_transpose(&bell(), "Q"), Err(Error::UnknownLabel(_))));
}

#[test]
fn partial_transpose_examples() {
    let diag = DensityOperator::new(ComplexMatrix::from_real_diag(&[0.1, 0.2, 0.3, 0.4]), qubits(2)).unwrap();
    assert!(partial_transpose(&diag, "B").unwrap().max_abs_diff(diag.op()) < 1e-15);

    let pt = partial_transpose(&bell(), "B").unwrap();
    let e = hermitian_eig(&pt).unwrap();
    assert!((e.min() + 0.5).abs() < 1e-12);

    let mixed = DensityOperator::maximally_mixed(qubits(2));
    assert!(partial_transpose(&mixed, "A").unwrap().max_abs_diff(mixed.op()) < 1e-15);
}

#[test]
fn eigendecomposition_examples() {
    let e = hermitian_eig(&ComplexMatrix::identity(2).scale_real(0.5)).unwrap();
    assert_eq!(e.values, vec![0.5, 0.5]);
    let e = hermitian_eig(&pauli_z()).unwrap();
    assert!((e.values[0] - 1.0).abs() < 1e-15 && (e.values[1] + 1.0).abs() < 1e-15);

    let h = random_hermitian(8, &mut rng(5));
    let e = hermitian_eig(&h).unwrap();
    assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    assert!((&h - &e.reconstruct()).frobenius_norm() <= 1e-9 * 8.0);

    let mut bad = ComplexMatrix::identity(2);
    bad[(0, 1)] = c(1.0);
    assert!(matches!(hermitian_eig(&bad), Err(Error::NotHermitian { .. })));
}

#[test]
fn large_eigendecompositions_reconstruct() {
    for &n in &[JACOBI_MAX_DIM + 1, 256] {
        let h = random_hermitian(n, &mut rng(n as u64));
        let e = hermitian_eig(&h).unwrap();
        assert!((&h - &e.reconstruct()).frobenius_norm() <= 1e-9 * n as f64);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn spectral_functions() {
    let q = ComplexMatrix::identity(4).scale_real(0.25);
    assert!(matrix_fn(&q, MatrixFn::Sqrt, false).unwrap().max_abs_diff(&ComplexMatrix::identity(4).scale_real(0.5)) < 1e-15);
    let l = matrix_fn(&ComplexMatrix::identity(2).scale_real(0.5), MatrixFn::Log2, false).unwrap();
    assert!(l.max_abs_diff(&ComplexMatrix::identity(2).scale_real(-1.0)) < 1e-15);
    let e = matrix_fn(&ComplexMatrix::identity(2).scale_real(3.0), MatrixFn::Exp2, false).unwrap();
    assert!(e.max_abs_diff(&ComplexMatrix::identity(2).scale_real(8.0)) < 1e-12);

    let rho = random_state(&[2, 2], 3, 6);
    let s = matrix_fn(rho.op(), MatrixFn::Sqrt, false).unwrap();
    assert!(s.matmul(&s).max_abs_diff(rho.op()) < 1e-9);

    // zero eigenvalues map to zero on the support, and fail off it
    let p = ComplexMatrix::from_real_diag(&[1.0, 0.0]);
    let l = matrix_fn(&p, MatrixFn::Log2, true).unwrap();
    assert!(l.max_abs() < 1e-15);
    assert!(matrix_fn(&p, MatrixFn::Log2, false).is_err());
    let neg = ComplexMatrix::from_real_diag(&[1.0, -1e-3]);
    assert!(matches!(matrix_fn(&neg, MatrixFn::Sqrt, false), Err(Error::NegativeEigenvalue { .. })));
}

#[test]
fn fidelity_and_distance_examples() {
    let q = SubsystemDims::single("A", 2).unwrap();
    let zero = DensityOperator::basis(q.clone(), 0).unwrap();
    let one = DensityOperator::basis(q.clone(), 1).unwrap();
    let mixed = DensityOperator::maximally_mixed(q);
    let rho = random_state(&[2], 2, 7);
    assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-12);
    assert!(fidelity(&zero, &one).unwrap().abs() < 1e-12);
    assert!((fidelity(&mixed, &zero).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    assert!(purified_distance(&rho, &rho).unwrap() < 1e-6);
    assert!((purified_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-12);
    assert!((purified_distance(&mixed, &zero).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    assert!(matches!(fidelity(&zero, &bell()), Err(Error::DimMismatch(_))));
}

#[test]
fn generalized_fidelity_of_subnormalized_states() {
    let q = SubsystemDims::single("A", 2).unwrap();
    let a = DensityOperator::new_subnormalized(ComplexMatrix::from_real_diag(&[0.5, 0.0]), q.clone()).unwrap();
    let b = DensityOperator::new_subnormalized(ComplexMatrix::from_real_diag(&[0.0, 0.5]), q).unwrap();
    // ‖√a √b‖₁ = 0, plus √(0.5 · 0.5)
    assert!((fidelity(&a, &b).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn family_examples() {
    let b = bell();
    assert!((b.trace() - 1.0).abs() < 1e-15);
    assert_eq!(b.rank(1e-9), 1);

    let mc = make_state(&StateFamily::MaxCorr(3)).unwrap();
    assert_eq!(mc.rank(1e-9), 3);
    let pt = partial_transpose(&mc, "B").unwrap();
    assert!(hermitian_eig(&pt).unwrap().min() >= -1e-12);

    let w = make_state(&StateFamily::Werner(1.0)).unwrap();
    assert!(hermitian_eig(&partial_transpose(&w, "B").unwrap()).unwrap().min() < 0.0);

    assert!(matches!(make_state(&StateFamily::Werner(1.5)), Err(Error::BadParameter(_))));
    assert!(matches!(make_state(&StateFamily::Ghz(1)), Err(Error::BadParameter(_))));
    assert!(make_state(&StateFamily::Random { seed: 1, dims: vec![2, 2], rank: 0 }).is_err());

    let r1 = make_state(&StateFamily::Random { seed: 9, dims: vec![2, 3], rank: 2 }).unwrap();
    let r2 = make_state(&StateFamily::Random { seed: 9, dims: vec![2, 3], rank: 2 }).unwrap();
    assert_eq!(r1.op(), r2.op());
    assert_eq!(r1.rank(1e-9), 2);
}

#[test]
fn state_invariants_are_enforced() {
    let mut m = ComplexMatrix::from_real_diag(&[0.5, 0.5]);
    m[(0, 1)] = c(1e-6);
    assert!(matches!(
        DensityOperator::new(m, SubsystemDims::single("A", 2).unwrap()),
        Err(Error::NotHermitian { .. })
    ));
    let neg = ComplexMatrix::from_real_diag(&[1.1, -0.1]);
    assert!(matches!(
        DensityOperator::new(neg, SubsystemDims::single("A", 2).unwrap()),
        Err(Error::NegativeEigenvalue { .. })
    ));
    let short = ComplexMatrix::from_real_diag(&[0.5, 0.4]);
    assert!(DensityOperator::new(short.clone(), SubsystemDims::single("A", 2).unwrap()).is_err());
    assert!(DensityOperator::new_subnormalized(short, SubsystemDims::single("A", 2).unwrap()).is_ok());
    assert!(DensityOperator::new(ComplexMatrix::identity(3).scale_real(1.0 / 3.0), qubits(2)).is_err());
    assert!(SubsystemDims::new([("A", 2), ("A", 2)]).is_err());
}

#[test]
fn state_file_round_trip() {
    let rho = random_state(&[2, 3], 4, 10);
    let text = state_to_json(&rho);
    let back = parse_state(&text).unwrap();
    assert_eq!(back.dims(), rho.dims());
    assert!(back.op().max_abs_diff(rho.op()) < 1e-15);
    let err = parse_state(r#"{"dims": [{"label": "A", "dim": 2}], "matrix_re": [[1, 0]], "matrix_im": [[0, 0], [0, 0]]}"#);
    assert!(matches!(err, Err(Error::StateFile { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn partial_transpose_swaps_indices(seed in any::<u64>(), rank in 1usize..=6) {
        let s = random_state(&[2, 3], rank, seed);
        let pt = partial_transpose(&s, "B").unwrap();
        for a in 0..2 {
            for b in 0..3 {
                for a2 in 0..2 {
                    for b2 in 0..3 {
                        prop_assert_eq!(pt[(3 * a + b, 3 * a2 + b2)], s.op()[(3 * a + b2, 3 * a2 + b)]);
                    }
                }
            }
        }
        prop_assert!(pt.hermitian_deviation() <= 1e-15);
    }

    #[test]
    fn partial_transpose_twice_is_identity(seed in any::<u64>(), terms in 1usize..=5) {
        // product mixtures stay states under the partial transpose
        let mut r = rng(seed);
        let mut op = ComplexMatrix::zeros(4, 4);
        for _ in 0..terms {
            let a = random_density_matrix(2, 2, &mut r);
            let b = random_density_matrix(2, 1, &mut r);
            op.axpy(c(1.0 / terms as f64), &a.kron(&b));
        }
        let s = DensityOperator::new(op, qubits(2)).unwrap();
        let once = DensityOperator::new(partial_transpose(&s, "B").unwrap(), qubits(2)).unwrap();
        let twice = partial_transpose(&once, "B").unwrap();
        prop_assert!(twice.max_abs_diff(s.op()) <= 1e-12);
    }

    #[test]
    fn fidelity_is_symmetric_and_unitarily_invariant(seed in any::<u64>(), ra in 1usize..=4, rb in 1usize..=4) {
        let a = random_state(&[2, 2], ra, seed);
        let b = random_state(&[2, 2], rb, seed ^ 0xabcd);
        let f = fidelity(&a, &b).unwrap();
        prop_assert!((f - fidelity(&b, &a).unwrap()).abs() <= 1e-9);
        let u = random_unitary(4, &mut rng(seed.wrapping_add(1)));
        let fu = fidelity(&a.conjugate(&u).unwrap(), &b.conjugate(&u).unwrap()).unwrap();
        prop_assert!((f - fu).abs() <= 1e-9);
        prop_assert!((f - fidelity_oracle(a.op(), b.op())).abs() <= 1e-8);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
    }

    #[test]
    fn purified_distance_triangle(seed in any::<u64>()) {
        let s: Vec<DensityOperator> = (0..3).map(|k| random_state(&[2, 2], 1 + ((seed >> k) % 4) as usize, seed.wrapping_add(k))).collect();
        let ab = purified_distance(&s[0], &s[1]).unwrap();
        let bc = purified_distance(&s[1], &s[2]).unwrap();
        let ac = purified_distance(&s[0], &s[2]).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn partial_trace_yields_states(seed in any::<u64>(), rank in 1usize..=8) {
        let s = random_state(&[2, 2, 2], rank, seed);
        for keep in [vec!["A"], vec!["B", "C"], vec!["A", "C"]] {
            let t = partial_trace(&s, &keep).unwrap();
            prop_assert!(t.check_invariants().is_ok());
            prop_assert!((t.trace() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), n in 1usize..=40) {
        let h = random_hermitian(n, &mut rng(seed));
        let e = hermitian_eig(&h).unwrap();
        prop_assert!((&h - &e.reconstruct()).frobenius_norm() <= 1e-9 * n as f64);
    }
}
