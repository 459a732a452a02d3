//! Tensor products, partial traces, partial transposes and party permutations.

use super::dims::SubsystemDims;
use super::matrix::{ComplexMatrix, ZERO};
use super::state::DensityOperator;
use crate::error::{Error, Result};

pub fn tensor_product(a: &DensityOperator, b: &DensityOperator) -> DensityOperator {
    DensityOperator::from_parts_unchecked(
        a.op().kron(b.op()),
        a.dims().concat(b.dims()),
        a.is_subnormalized() || b.is_subnormalized(),
    )
}

/// `s^{⊗n}`; copies after the first carry primed labels.
pub fn tensor_power(s: &DensityOperator, n: usize) -> Result<DensityOperator> {
    if n == 0 {
        return Err(Error::BadParameter("tensor power must be at least 1".into()));
    }
    super::guard_dim(s.dim().checked_pow(n as u32).unwrap_or(usize::MAX))?;
    let mut out = s.clone();
    for _ in 1..n {
        out = tensor_product(&out, s);
    }
    Ok(out)
}

/// Multi-index bookkeeping for splitting a space into kept and traced factors.
struct Split {
    kept_total: usize,
    traced_total: usize,
    /// `compose[k * traced_total + t]` is the full index.
    compose: Vec<usize>,
}

fn split(dims: &[usize], kept: &[usize]) -> Split {
    let n = dims.len();
    let traced: Vec<usize> = (0..n).filter(|i| !kept.contains(i)).collect();
    let kept_sorted = {
        let mut k = kept.to_vec();
        k.sort_unstable();
        k
    };
    let kept_total: usize = kept_sorted.iter().map(|&i| dims[i]).product();
    let traced_total: usize = traced.iter().map(|&i| dims[i]).product();
    let mut strides = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let offsets = |parties: &[usize], total: usize| -> Vec<usize> {
        let mut out = vec![0usize; total];
        for (idx, slot) in out.iter_mut().enumerate() {
            let mut rem = idx;
            let mut full = 0;
            for &p in parties.iter().rev() {
                full += (rem % dims[p]) * strides[p];
                rem /= dims[p];
            }
            *slot = full;
        }
        out
    };
    let ko = offsets(&kept_sorted, kept_total);
    let to = offsets(&traced, traced_total);
    let mut compose = Vec::with_capacity(kept_total * traced_total);
    for k in &ko {
        for t in &to {
            compose.push(k + t);
        }
    }
    Split {
        kept_total,
        traced_total,
        compose,
    }
}

/// Partial trace over every factor whose index is not in `keep`.
pub(crate) fn partial_trace_matrix(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> ComplexMatrix {
    let sp = split(dims, keep);
    let (dk, dt) = (sp.kept_total, sp.traced_total);
    let mut out = ComplexMatrix::zeros(dk, dk);
    for k1 in 0..dk {
        for k2 in 0..dk {
            let mut acc = ZERO;
            for t in 0..dt {
                acc += m[(sp.compose[k1 * dt + t], sp.compose[k2 * dt + t])];
            }
            out[(k1, k2)] = acc;
        }
    }
    out
}

/// Keeps the labelled factors (in their original order) and traces out the rest.
pub fn partial_trace<S: AsRef<str>>(s: &DensityOperator, keep: &[S]) -> Result<DensityOperator> {
    let idx = s.dims().indices_of(keep)?;
    if idx.is_empty() {
        return Err(Error::BadParameter("partial trace must keep at least one party".into()));
    }
    let op = partial_trace_matrix(s.op(), &s.dims().dims(), &idx);
    Ok(DensityOperator::from_parts_unchecked(
        op.hermitian_part(),
        s.dims().restrict(&idx),
        s.is_subnormalized(),
    ))
}

/// Traces out the labelled factors.
pub fn trace_out<S: AsRef<str>>(s: &DensityOperator, discard: &[S]) -> Result<DensityOperator> {
    let drop = s.dims().indices_of(discard)?;
    let keep: Vec<String> = s
        .dims()
        .parties()
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, p)| p.label.clone())
        .collect();
    partial_trace(s, &keep)
}

/// Transposes the factors listed in `parties` (indices into `dims`).
pub(crate) fn partial_transpose_matrix(m: &ComplexMatrix, dims: &[usize], parties: &[usize]) -> ComplexMatrix {
    let n = m.rows();
    let k = dims.len();
    let mut strides = vec![1usize; k];
    for i in (0..k.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    // For index i, the part contributed by transposed factors.
    let tpart: Vec<usize> = (0..n)
        .map(|i| {
            parties
                .iter()
                .map(|&p| ((i / strides[p]) % dims[p]) * strides[p])
                .sum()
        })
        .collect();
    ComplexMatrix::from_fn(n, n, |i, j| {
        let (ti, tj) = (tpart[i], tpart[j]);
        m[(i - ti + tj, j - tj + ti)]
    })
}

/// Transpose on one labelled factor.
pub fn partial_transpose(s: &DensityOperator, party: &str) -> Result<ComplexMatrix> {
    let idx = s.dims().index_of(party)?;
    Ok(partial_transpose_matrix(s.op(), &s.dims().dims(), &[idx]))
}

/// Transpose on several labelled factors.
pub fn partial_transpose_many<S: AsRef<str>>(s: &DensityOperator, parties: &[S]) -> Result<ComplexMatrix> {
    let idx = s.dims().indices_of(parties)?;
    Ok(partial_transpose_matrix(s.op(), &s.dims().dims(), &idx))
}

/// Index permutation for reordering factors: new factor `p` is old factor `order[p]`.
pub(crate) fn permutation_table(dims: &[usize], order: &[usize]) -> Vec<usize> {
    let k = dims.len();
    let n: usize = dims.iter().product();
    let mut old_strides = vec![1usize; k];
    for i in (0..k.saturating_sub(1)).rev() {
        old_strides[i] = old_strides[i + 1] * dims[i + 1];
    }
    let new_dims: Vec<usize> = order.iter().map(|&o| dims[o]).collect();
    // table[new_index] = old_index
    (0..n)
        .map(|idx| {
            let mut rem = idx;
            let mut old = 0;
            for p in (0..k).rev() {
                let digit = rem % new_dims[p];
                rem /= new_dims[p];
                old += digit * old_strides[order[p]];
            }
            old
        })
        .collect()
}

/// Reorders the tensor factors of `s`; factor `p` of the result is factor
/// `order[p]` of the input.
pub fn permute_parties(s: &DensityOperator, order: &[usize]) -> Result<DensityOperator> {
    let k = s.dims().len();
    let mut check = order.to_vec();
    check.sort_unstable();
    if check != (0..k).collect::<Vec<_>>() {
        return Err(Error::BadParameter(format!("{order:?} is not a permutation of {k} parties")));
    }
    let table = permutation_table(&s.dims().dims(), order);
    let op = s.op();
    let n = op.rows();
    let out = ComplexMatrix::from_fn(n, n, |i, j| op[(table[i], table[j])]);
    let parties = order.iter().map(|&o| s.dims().parties()[o].clone()).collect::<Vec<_>>();
    let dims = SubsystemDims::try_from(parties)?;
    Ok(DensityOperator::from_parts_unchecked(out, dims, s.is_subnormalized()))
}

/// Operator `op` acting on the factors `on` (in that order), identity elsewhere.
pub(crate) fn embed_operator(op: &ComplexMatrix, dims: &[usize], on: &[usize]) -> ComplexMatrix {
    let n: usize = dims.iter().product();
    let d_on: usize = on.iter().map(|&i| dims[i]).product();
    assert_eq!(op.rows(), d_on, "operator dimension does not match its factors");
    let rest: Vec<usize> = (0..dims.len()).filter(|i| !on.contains(i)).collect();
    let d_rest = n / d_on;
    // full index of (on-index a in the given order, rest-index r)
    let k = dims.len();
    let mut strides = vec![1usize; k];
    for i in (0..k.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let offsets = |parties: &[usize], total: usize| -> Vec<usize> {
        (0..total)
            .map(|idx| {
                let mut rem = idx;
                let mut full = 0;
                for &p in parties.iter().rev() {
                    full += (rem % dims[p]) * strides[p];
                    rem /= dims[p];
                }
                full
            })
            .collect()
    };
    let on_off = offsets(on, d_on);
    let rest_off = offsets(&rest, d_rest);
    let mut out = ComplexMatrix::zeros(n, n);
    for a in 0..d_on {
        for b in 0..d_on {
            let v = op[(a, b)];
            if v == ZERO {
                continue;
            }
            for &r in &rest_off {
                out[(on_off[a] + r, on_off[b] + r)] = v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::families::{make_state, StateFamily};
    use crate::qmatrix::matrix::C64;

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let bell = make_state(&StateFamily::Bell).unwrap();
        let a = partial_trace(&bell, &["A"]).unwrap();
        let half = ComplexMatrix::identity(2).scale_real(0.5);
        assert!(a.op().max_abs_diff(&half) < 1e-15);
    }

    #[test]
    fn ghz3_pair_marginal() {
        let ghz = make_state(&StateFamily::Ghz(3)).unwrap();
        let bc = partial_trace(&ghz, &["B", "C"]).unwrap();
        let expected = ComplexMatrix::from_real_diag(&[0.5, 0.0, 0.0, 0.5]);
        assert!(bc.op().max_abs_diff(&expected) < 1e-15);
        assert_eq!(bc.dims().labels(), vec!["B", "C"]);
    }

    #[test]
    fn product_marginals_and_order() {
        let d = SubsystemDims::single("A", 2).unwrap();
        let rho = DensityOperator::new(ComplexMatrix::from_real_diag(&[0.7, 0.3]), d).unwrap();
        let sigma = DensityOperator::maximally_mixed(SubsystemDims::single("B", 3).unwrap());
        let prod = tensor_product(&rho, &sigma);
        assert!(partial_trace(&prod, &["A"]).unwrap().op().max_abs_diff(rho.op()) < 1e-15);
        assert!(partial_trace(&prod, &["B"]).unwrap().op().max_abs_diff(sigma.op()) < 1e-15);
        assert!(matches!(partial_trace(&prod, &["Z"]), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn basis_tensor() {
        let d = SubsystemDims::single("A", 2).unwrap();
        let z0 = DensityOperator::basis(d.clone(), 0).unwrap();
        let z1 = DensityOperator::basis(d, 1).unwrap();
        let p = tensor_product(&z0, &z1);
        assert_eq!(p.op()[(1, 1)], C64::new(1.0, 0.0));
        assert_eq!(p.dims().labels(), vec!["A", "A'"]);
    }

    #[test]
    fn permute_then_back() {
        let s = make_state(&StateFamily::Random {
            seed: 1,
            dims: vec![2, 3, 2],
            rank: 3,
        })
        .unwrap();
        let p = permute_parties(&s, &[2, 0, 1]).unwrap();
        assert_eq!(p.dims().labels(), vec!["C", "A", "B"]);
        let back = permute_parties(&p, &[1, 2, 0]).unwrap();
        assert!(back.op().max_abs_diff(s.op()) < 1e-15);
        let ab = partial_trace(&s, &["A", "B"]).unwrap();
        let ab2 = partial_trace(&p, &["A", "B"]).unwrap();
        assert!(ab.op().max_abs_diff(ab2.op()) < 1e-14);
    }

    #[test]
    fn embed_matches_kron() {
        let x = ComplexMatrix::from_fn(2, 2, |i, j| if i != j { C64::new(1.0, 0.0) } else { ZERO });
        let full = embed_operator(&x, &[2, 2], &[1]);
        let expected = ComplexMatrix::identity(2).kron(&x);
        assert!(full.max_abs_diff(&expected) < 1e-15);
        let first = embed_operator(&x, &[2, 3], &[0]);
        assert!(first.max_abs_diff(&x.kron(&ComplexMatrix::identity(3))) < 1e-15);
    }

    #[test]
    fn partial_transpose_of_bell() {
        let bell = make_state(&StateFamily::Bell).unwrap();
        let pt = partial_transpose(&bell, "B").unwrap();
        let vals = crate::qmatrix::eig::eigvalsh(&pt);
        assert!((vals[3] + 0.5).abs() < 1e-12);
        let twice = partial_transpose_matrix(&pt, &[2, 2], &[1]);
        assert!(twice.max_abs_diff(bell.op()) < 1e-15);
    }
}
