mod common;

use common::*;
use disent::convexsplit::{bell_diagonal_separable, build_convex_split, ConvexSplitSpec};
use disent::protocol::*;
use disent::qmatrix::*;
use disent::separability::{e_max_smooth, SepApprox, SepTarget};
use disent::Error;
use proptest::prelude::*;

fn bell() -> DensityOperator {
    make_state(&StateFamily::Bell).unwrap()
}

fn identity_ensemble(dims: &SubsystemDims) -> UnitaryEnsemble {
    let labels = dims.labels();
    let sides = labels.iter().map(|l| vec![l.to_string()]).collect();
    let unitaries = dims.dims().iter().map(|&d| vec![ComplexMatrix::identity(d)]).collect();
    UnitaryEnsemble::new(dims.clone(), sides, unitaries).unwrap()
}

fn random_ensemble(m: usize, seed: u64) -> UnitaryEnsemble {
    let mut r = rng(seed);
    let unitaries = (0..2).map(|_| (0..m).map(|_| random_unitary(2, &mut r)).collect()).collect();
    UnitaryEnsemble::new(qubits(2), vec![vec!["A".into()], vec!["B".into()]], unitaries).unwrap()
}

fn bell_emax(eps: f64) -> f64 {
    let b = bell();
    let cut = SepTarget::Cut(Bipartition::first_vs_rest(b.dims()));
    e_max_smooth(&b, &cut, eps, &SepApprox::ppt()).unwrap().bits
}

fn keep_parties(s: &DensityOperator, n: usize) -> ComplexMatrix {
    let labels = s.dims().labels();
    let keep: Vec<&str> = labels[..n].iter().map(|l| &**l).collect();
    partial_trace(s, &keep).unwrap().op().clone()
}

fn traced_dilation(ens: &UnitaryEnsemble, s: &DensityOperator) -> ComplexMatrix {
    keep_parties(&gamma_dilation(ens, s).unwrap(), s.dims().len())
}

#[test]
fn randomizing_map_examples() {
    let rho = random_state(&[2, 2], 3, 5);
    let id = identity_ensemble(rho.dims());
    assert!(apply_randomizing_map(&id, &rho).unwrap().op().max_abs_diff(rho.op()) < 1e-15);
    let mixed = DensityOperator::maximally_mixed(qubits(2));
    let out = apply_randomizing_map(&random_ensemble(4, 1), &mixed).unwrap();
    assert!(out.op().max_abs_diff(mixed.op()) < 1e-14);
    let three = random_state(&[2, 2, 2], 2, 1);
    assert!(matches!(apply_randomizing_map(&id, &three), Err(Error::DimMismatch(_))));
}

#[test]
fn swap_ensemble_reproduces_the_convex_split() {
    let sigma = bell_diagonal_separable();
    for rho in [bell(), random_state(&[2, 2], 2, 8)] {
        for m in 1..=3 {
            let ens = build_swap_ensemble(m, rho.dims()).unwrap();
            let out = apply_randomizing_map(&ens, &catalyst_input(&rho, &sigma, m).unwrap()).unwrap();
            let spec = ConvexSplitSpec::new(rho.clone(), sigma.clone(), m, 0.1, 0.1).unwrap();
            let tau = build_convex_split(&spec).unwrap();
            assert!(out.op().max_abs_diff(tau.op()) < 1e-12, "M = {m}");
        }
    }
}

#[test]
fn swap_ensembles() {
    let dims = qubits(2);
    let one = build_swap_ensemble(1, &dims).unwrap();
    assert_eq!(one.m(), 1);
    assert_eq!(one.unitary(0, 0), &ComplexMatrix::identity(2));
    let two = build_swap_ensemble(2, &dims).unwrap();
    let mut swap = ComplexMatrix::zeros(4, 4);
    for (r, col) in [(0, 0), (2, 1), (1, 2), (3, 3)] {
        swap[(r, col)] = c(1.0);
    }
    for side in 0..2 {
        assert_eq!(two.unitary(side, 0), &ComplexMatrix::identity(4));
        assert_eq!(two.unitary(side, 1), &swap);
    }
    let three = build_swap_ensemble(3, &dims).unwrap();
    assert_eq!(three.num_sides(), 2);
    assert_eq!(three.parties().len(), 6);
    for side in 0..2 {
        for i in 0..3 {
            let u = three.unitary(side, i);
            assert_eq!((u.rows(), u.cols()), (8, 8));
            for r in 0..8 {
                let row: Vec<f64> = (0..8).map(|k| u[(r, k)].re).collect();
                assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
                assert_eq!(row.iter().filter(|&&x| x == 0.0).count(), 7);
            }
            assert!(u.matmul(u).max_abs_diff(&ComplexMatrix::identity(8)) < 1e-15);
        }
    }
    assert!(matches!(build_swap_ensemble(0, &dims), Err(Error::BadParameter(_))));
}

#[test]
fn malformed_ensembles_are_rejected() {
    let dims = qubits(2);
    let sides = || vec![vec!["A".to_string()], vec!["B".to_string()]];
    let not_unitary = ComplexMatrix::from_real_diag(&[1.0, 0.5]);
    let id = ComplexMatrix::identity(2);
    assert!(UnitaryEnsemble::new(dims.clone(), sides(), vec![vec![id.clone()], vec![not_unitary]]).is_err());
    assert!(UnitaryEnsemble::new(dims.clone(), sides(), vec![vec![id.clone()], vec![id.clone(), id.clone()]]).is_err());
    assert!(UnitaryEnsemble::new(dims.clone(), vec![vec!["A".into()]], vec![vec![id.clone()]]).is_err());
    assert!(UnitaryEnsemble::new(dims, sides(), vec![vec![id.clone()], vec![ComplexMatrix::identity(4)]]).is_err());
}

#[test]
fn separable_inputs_need_one_register() {
    let product = tensor_product(&random_state(&[2], 2, 2), &random_state(&[2], 1, 3));
    for rho in [make_state(&StateFamily::MaxCorr(2)).unwrap(), product] {
        let cands = default_candidates(&rho, 0.1, 0.05).unwrap();
        let best = one_shot_cost_search(&rho, 0.1, 0.05, &cands).unwrap();
        assert_eq!(best.m, 1);
        assert_eq!(best.log2_m, 0.0);
        assert!(best.pass && best.achieved_distance <= 1e-6);
    }
    let mc = make_state(&StateFamily::MaxCorr(2)).unwrap();
    let cat = Catalyst::from_state("self", mc.clone()).unwrap();
    let r = run_disentangling(&mc, &cat, 0.2, 0.1).unwrap();
    assert_eq!(r.m, 1);
    assert!(r.pass && r.achieved_distance <= 1e-7);
    let d = decouple_to_separable(&mc, &cat, 0.2, 0.1).unwrap();
    assert_eq!((d.m, d.discarded_bits), (1, 0.0));
}

#[test]
fn bell_with_the_bell_diagonal_catalyst() {
    let cat = Catalyst::from_state("bell_diag_sep", bell_diagonal_separable()).unwrap();
    assert_eq!(cat.certification, Certification::PptExact);
    let r = run_disentangling(&bell(), &cat, 0.2, 0.1).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.achieved_distance <= 0.2);
    assert!(r.log2_m <= bell_emax(0.1) + 10f64.log2() + 1.0);
    assert!(r.lower_bound_bits <= r.log2_m && r.log2_m <= r.upper_bound_bits + UPPER_SLACK_BITS);
    assert!((r.log2_m - (r.m as f64).log2()).abs() < 1e-15);
    assert!(r.m <= r.budget_m);
}

#[test]
fn werner_report_is_sandwiched() {
    let rho = make_state(&StateFamily::Werner(0.9)).unwrap();
    let cands = default_candidates(&rho, 0.25, 0.1).unwrap();
    let r = run_disentangling(&rho, &cands[0], 0.25, 0.1).unwrap();
    assert!(r.lower_bound_bits <= r.log2_m + 1e-9);
    assert!(r.log2_m <= r.upper_bound_bits + UPPER_SLACK_BITS);
    let b = cost_bounds(&rho, 0.25, 0.1).unwrap();
    assert_eq!((b.lower_bits, b.upper_bits), (r.lower_bound_bits, r.upper_bound_bits));
}

#[test]
fn cost_search_for_bell() {
    let rho = bell();
    let cands = default_candidates(&rho, 0.3, 0.1).unwrap();
    let best = one_shot_cost_search(&rho, 0.3, 0.1, &cands).unwrap();
    assert!(best.pass, "{best:?}");
    assert!(best.log2_m >= bell_emax(0.3) - 1e-6);
    assert!(best.log2_m <= bell_emax(0.2) + 10f64.log2() + 1.0 + UPPER_SLACK_BITS);
    for cat in &cands {
        if let Ok(r) = run_disentangling(&rho, cat, 0.3, 0.1) {
            if r.pass {
                assert!(best.m <= r.m);
            }
        }
    }
    let mixed = Catalyst::from_state("mixed", DensityOperator::maximally_mixed(qubits(2))).unwrap();
    let poor = one_shot_cost_search(&rho, 0.3, 0.1, &[mixed]).unwrap();
    assert!(poor.m > best.m, "{} vs {}", poor.m, best.m);
    assert!(matches!(one_shot_cost_search(&rho, 0.3, 0.1, &[]), Err(Error::BadParameter(_))));
}

#[test]
fn bad_parameters() {
    let cat = Catalyst::from_state("s", bell_diagonal_separable()).unwrap();
    for (eps, delta) in [(0.1, 0.2), (0.1, 0.0), (1.0, 0.1)] {
        assert!(matches!(run_disentangling(&bell(), &cat, eps, delta), Err(Error::BadParameter(_))));
    }
    assert!(matches!(Catalyst::from_state("bell", bell()), Err(Error::PreconditionViolated(_))));
    let wrong = Catalyst::from_state("big", DensityOperator::maximally_mixed(SubsystemDims::bipartite(2, 3))).unwrap();
    assert!(matches!(run_disentangling(&bell(), &wrong, 0.2, 0.1), Err(Error::DimMismatch(_))));
}

#[test]
fn dilation_examples() {
    let rho = random_state(&[2, 2], 4, 21);
    let dil = gamma_dilation(&identity_ensemble(rho.dims()), &rho).unwrap();
    assert_eq!(dil.dims().dims(), vec![2, 2, 1, 1]);
    assert!(dil.op().max_abs_diff(rho.op()) < 1e-15);

    let b = bell();
    let ens = build_swap_ensemble(2, b.dims()).unwrap();
    let input = catalyst_input(&b, &bell_diagonal_separable(), 2).unwrap();
    let direct = apply_randomizing_map(&ens, &input).unwrap();
    assert!(traced_dilation(&ens, &input).max_abs_diff(direct.op()) < 1e-12);

    let ens = random_ensemble(3, 4);
    let direct = apply_randomizing_map(&ens, &rho).unwrap();
    assert!(traced_dilation(&ens, &rho).max_abs_diff(direct.op()) < 1e-12);
}

#[test]
fn operator_inequality_examples() {
    let m = 3;
    let sigma = bell_diagonal_separable();
    let gamma = make_state(&StateFamily::MaxCorr(m)).unwrap();
    let (holds, slack) = check_operator_inequality(&tensor_product(&sigma, &gamma), &sigma, m).unwrap();
    assert!(holds && slack.abs() < 1e-12 && slack <= 0.0);

    for seed in 0..10 {
        let parts: Vec<DensityOperator> = (0..m).map(|i| random_state(&[2, 2], 1 + i, seed * 10 + i as u64)).collect();
        let mut marginal = ComplexMatrix::zeros(4, 4);
        let mut ext = ComplexMatrix::zeros(4 * m * m, 4 * m * m);
        for (i, p) in parts.iter().enumerate() {
            marginal.axpy(c(1.0 / m as f64), p.op());
            let mut flag = ComplexMatrix::zeros(m * m, m * m);
            flag[(i * m + i, i * m + i)] = c(1.0);
            ext.axpy(c(1.0 / m as f64), &p.op().kron(&flag));
        }
        let marginal = DensityOperator::new(marginal, qubits(2)).unwrap();
        let dims = qubits(2).concat(&SubsystemDims::new([("XA", m), ("XB", m)]).unwrap());
        let ext = DensityOperator::new(ext, dims).unwrap();
        let (holds, slack) = check_operator_inequality(&ext, &marginal, m).unwrap();
        assert!(holds, "seed {seed}: {slack}");
    }

    let outside = tensor_product(&sigma, &DensityOperator::maximally_mixed(SubsystemDims::bipartite(m, m)));
    assert!(matches!(
        check_operator_inequality(&outside, &sigma, m),
        Err(Error::PreconditionViolated(_))
    ));
}

#[test]
fn decoupling_bell() {
    let cands = default_candidates(&bell(), 0.3, 0.1).unwrap();
    let best = one_shot_cost_search(&bell(), 0.3, 0.1, &cands).unwrap();
    let cat = cands.iter().find(|c| c.id == best.catalyst_id).unwrap();
    let sep = decouple_to_separable(&bell(), cat, 0.3, 0.1).unwrap();
    assert!(sep.distance <= 0.3);
    assert_eq!(sep.m, best.m);
    assert!((sep.discarded_bits - 2.0 * (sep.m as f64).log2()).abs() < 1e-12);
    let residual = sep.residual.as_ref().unwrap();
    assert!((residual.trace() - 1.0).abs() < 1e-12);

    let prod = decouple_to_product(&bell(), 0.3, 0.1).unwrap();
    assert!(prod.distance <= 0.3);
    let ratio = prod.discarded_bits / sep.discarded_bits;
    assert!((1.5..=2.5).contains(&ratio), "{} / {}", prod.discarded_bits, sep.discarded_bits);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn randomizing_maps_are_channels(seed in any::<u64>(), m in 1usize..=4, rank in 1usize..=4) {
        let rho = random_state(&[2, 2], rank, seed);
        let out = apply_randomizing_map(&random_ensemble(m, seed ^ 3), &rho).unwrap();
        prop_assert!((out.trace() - 1.0).abs() <= 1e-12);
        prop_assert!(out.op().max_abs_diff(&out.op().adjoint()) <= 1e-12);
        prop_assert!(hermitian_eig(out.op()).unwrap().values.iter().all(|&x| x >= -1e-12));
        prop_assert!(DensityOperator::new(out.op().clone(), out.dims().clone()).is_ok());
    }

    #[test]
    fn dilation_is_consistent(seed in any::<u64>(), m in 1usize..=3) {
        let rho = random_state(&[2, 2], 2, seed);
        let ens = random_ensemble(m, seed ^ 5);
        let direct = apply_randomizing_map(&ens, &rho).unwrap();
        prop_assert!(traced_dilation(&ens, &rho).max_abs_diff(direct.op()) <= 1e-12);
    }
}
