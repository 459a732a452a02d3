//! The convex split construction `(1/N) Σ_i ρ_i ⊗ σ^{⊗(N-1)}` and checks of
//! how close it is to `σ^{⊗N}`.

use serde::Serialize;

use crate::divergences::{smooth_d_max, SolveStatus};
use crate::error::{Error, Result};
use crate::qmatrix::{
    eigh, guard_dim, make_state, purified_distance_ops, tensor_power, ComplexMatrix, DensityOperator, StateFamily,
    SubsystemDims, C64,
};

/// Off-diagonal size below which two operators count as jointly diagonal.
const COMMUTE_TOL: f64 = 1e-10;
/// Slack when rounding a register count up, absorbing solver error in the ratio.
const CEIL_SLACK: f64 = 1e-6;
/// Ratios closer than this (relative) are one class in the commuting sum.
const RATIO_MERGE: f64 = 1e-12;
/// Most type classes the commuting sum enumerates before falling back to
/// dense matrices.
const TYPE_LIMIT: f64 = 2e6;

#[derive(Clone, Debug)]
pub struct ConvexSplitSpec {
    pub rho: DensityOperator,
    pub sigma: DensityOperator,
    pub n: usize,
    pub zeta: f64,
    pub xi: f64,
}

impl ConvexSplitSpec {
    pub fn new(rho: DensityOperator, sigma: DensityOperator, n: usize, zeta: f64, xi: f64) -> Result<Self> {
        if rho.dims().dims() != sigma.dims().dims() {
            return Err(Error::DimMismatch(format!(
                "ρ has dims {:?}, σ has {:?}",
                rho.dims().dims(),
                sigma.dims().dims()
            )));
        }
        if n == 0 {
            return Err(Error::BadParameter("N must be at least 1".into()));
        }
        if !(zeta >= 0.0) || !(xi > 0.0) || zeta + xi > 1.0 + 1e-12 {
            return Err(Error::BadParameter(format!("need ζ ≥ 0, ξ > 0, ζ + ξ ≤ 1; got ζ={zeta}, ξ={xi}")));
        }
        Ok(Self { rho, sigma, n, zeta, xi })
    }

    pub fn bound(&self) -> f64 {
        self.zeta + self.xi
    }
}

/// `τ = (1/N) Σ_i ρ_i ⊗ σ^{⊗(N-1)}` with `ρ` in register `i`.
pub fn build_convex_split(spec: &ConvexSplitSpec) -> Result<DensityOperator> {
    split_state(&spec.rho, &spec.sigma, spec.n)
}

pub(crate) fn split_state(rho: &DensityOperator, sigma: &DensityOperator, n: usize) -> Result<DensityOperator> {
    let d = sigma.dim();
    let total = d.checked_pow(n as u32).unwrap_or(usize::MAX);
    guard_dim(total)?;
    let dims = tensor_power(sigma, 1)?.dims().clone();
    let mut dims_all = dims.clone();
    for _ in 1..n {
        dims_all = dims_all.concat(&dims);
    }
    let mut op = ComplexMatrix::zeros(total, total);
    for i in 0..n {
        let mut term = ComplexMatrix::identity(1);
        for k in 0..n {
            term = term.kron(if k == i { rho.op() } else { sigma.op() });
        }
        op += &term;
    }
    let op = op.scale_real(1.0 / n as f64);
    Ok(DensityOperator::from_parts_unchecked(op, dims_all, rho.is_subnormalized()))
}

/// Eigenvalues of `ρ` and `σ` in a common eigenbasis, when they commute.
pub(crate) fn joint_spectrum(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Option<(Vec<f64>, Vec<f64>)> {
    if rho.matmul(sigma).max_abs_diff(&sigma.matmul(rho)) > COMMUTE_TOL {
        return None;
    }
    // a generic combination of commuting operators separates every joint eigenspace
    let mut h = sigma.clone();
    h.axpy(C64::new(0.618_033_988_749_894_8, 0.0), rho);
    let v = eigh(&h).vectors;
    let rd = v.adjoint().matmul(rho).matmul(&v);
    let sd = v.adjoint().matmul(sigma).matmul(&v);
    let n = rd.rows();
    let mut off = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off = off.max(rd[(i, j)].norm()).max(sd[(i, j)].norm());
            }
        }
    }
    if off > COMMUTE_TOL {
        return None;
    }
    Some(((0..n).map(|i| rd[(i, i)].re).collect(), (0..n).map(|i| sd[(i, i)].re.max(0.0)).collect()))
}

/// Joint outcomes grouped by the ratio `p/q`, as `(ratio, total q)`.
fn ratio_classes(p: &[f64], q: &[f64]) -> Vec<(f64, f64)> {
    let mut cats: Vec<(f64, f64)> = p
        .iter()
        .zip(q)
        .filter(|(_, &qk)| qk > 0.0)
        .map(|(&pk, &qk)| (pk.max(0.0) / qk, qk))
        .collect();
    cats.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(cats.len());
    for (r, qk) in cats {
        match merged.last_mut() {
            Some(last) if (r - last.0).abs() <= RATIO_MERGE * r.max(1.0) => {
                last.0 = (last.0 * last.1 + r * qk) / (last.1 + qk);
                last.1 += qk;
            }
            _ => merged.push((r, qk)),
        }
    }
    merged
}

/// Number of ways to spread `n` registers over `k` classes.
fn type_count(k: usize, n: usize) -> f64 {
    (1..k).fold(1.0, |acc, j| acc * (n + j) as f64 / j as f64)
}

/// Purified distance of the convex split state to `σ^{⊗N}` for commuting
/// `ρ`, `σ` given by their joint spectra, summing over type classes. `None`
/// when there are more than `TYPE_LIMIT` classes.
pub(crate) fn commuting_split_distance(p: &[f64], q: &[f64], n: usize) -> Option<f64> {
    let classes = ratio_classes(p, q);
    if type_count(classes.len(), n) > TYPE_LIMIT {
        return None;
    }
    let cats: Vec<(f64, f64)> = classes.iter().map(|&(r, qk)| (r, qk.ln())).collect();
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, k| {
            *acc += (k as f64).ln();
            Some(*acc)
        }))
        .collect();
    // 1 - F = Σ_t w_t (1 - √s_t), with Σ_t w_t = 1
    let mut one_minus_f = 0.0;
    let mut counts = vec![0usize; cats.len()];
    fn walk(
        k: usize,
        left: usize,
        counts: &mut Vec<usize>,
        cats: &[(f64, f64)],
        ln_fact: &[f64],
        n: usize,
        acc: &mut f64,
    ) {
        if k + 1 == cats.len() {
            counts[k] = left;
            let mut lw = ln_fact[n];
            let mut s = 0.0;
            for (c, &(r, lq)) in counts.iter().zip(cats) {
                lw += *c as f64 * lq - ln_fact[*c];
                s += *c as f64 * r;
            }
            let s = s / n as f64;
            *acc += lw.exp() * (1.0 - s) / (1.0 + s.sqrt());
            return;
        }
        for c in 0..=left {
            counts[k] = c;
            walk(k + 1, left - c, counts, cats, ln_fact, n, acc);
        }
    }
    if cats.is_empty() {
        return Some(1.0);
    }
    walk(0, n, &mut counts, &cats, &ln_fact, n, &mut one_minus_f);
    // mixing never moves τ further from σ^{⊗N} than ρ is from σ
    let hellinger: f64 = p.iter().zip(q).map(|(&a, &b)| (a.max(0.0).sqrt() - b.max(0.0).sqrt()).powi(2)).sum();
    let omf = one_minus_f.min(hellinger / 2.0).clamp(0.0, 1.0);
    Some((omf * (2.0 - omf)).max(0.0).sqrt())
}

/// `P(τ, σ^{⊗N})` for the construction with `ρ` and `σ`.
pub(crate) fn split_distance(rho: &DensityOperator, sigma: &DensityOperator, n: usize) -> Result<f64> {
    if let Some(d) = joint_spectrum(rho.op(), sigma.op()).and_then(|(p, q)| commuting_split_distance(&p, &q, n)) {
        return Ok(d);
    }
    let tau = split_state(rho, sigma, n)?;
    let target = tensor_power(sigma, n)?;
    Ok(purified_distance_ops(target.op(), tau.op()))
}

/// Exact `P(τ, σ^{⊗N})`.
pub fn convex_split_distance(spec: &ConvexSplitSpec) -> Result<f64> {
    split_distance(&spec.rho, &spec.sigma, spec.n)
}

/// Register count together with the smoothing it was derived from.
#[derive(Clone, Debug)]
pub struct RegisterBudget {
    pub n: usize,
    pub dmax_bits: f64,
    pub status: SolveStatus,
    /// Smoothed state achieving `dmax_bits`.
    pub rho_bar: DensityOperator,
}

/// `N = ⌈2^{D_max^ζ(ρ‖σ)} / ξ⌉`; `ζ = 0` uses the unsmoothed value.
pub fn register_budget(rho: &DensityOperator, sigma: &DensityOperator, zeta: f64, xi: f64) -> Result<RegisterBudget> {
    if !(zeta >= 0.0) || !(xi > 0.0) {
        return Err(Error::BadParameter(format!("need ζ ≥ 0 and ξ > 0; got ζ={zeta}, ξ={xi}")));
    }
    let v = smooth_d_max(rho, sigma, zeta)?;
    if v.is_infinite() {
        return Err(Error::InfeasibleSupport(format!(
            "no state within {zeta} of ρ is supported on supp σ"
        )));
    }
    let ratio = v.bits.exp2();
    let n = ((ratio / xi) - CEIL_SLACK).ceil().max(1.0);
    if n > usize::MAX as f64 / 2.0 {
        return Err(Error::BadParameter(format!("register count {n} is not representable")));
    }
    Ok(RegisterBudget {
        n: n as usize,
        dmax_bits: v.bits,
        status: v.status,
        rho_bar: v.certificate.unwrap_or_else(|| rho.clone()),
    })
}

/// Number of registers the convex split lemma asks for.
pub fn registers_for(rho: &DensityOperator, sigma: &DensityOperator, zeta: f64, xi: f64) -> Result<usize> {
    if !(zeta > 0.0) {
        return Err(Error::BadParameter(format!("ζ must be positive, got {zeta}")));
    }
    Ok(register_budget(rho, sigma, zeta, xi)?.n)
}

/// One instance of the lemma check.
#[derive(Clone, Debug)]
pub struct LemmaInstance {
    pub rho_id: String,
    pub sigma_id: String,
    pub rho: DensityOperator,
    pub sigma: DensityOperator,
    pub zeta: f64,
    pub xi: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaRow {
    pub rho_id: String,
    pub sigma_id: String,
    pub zeta: f64,
    pub xi: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub dmax_bits: f64,
    #[serde(rename = "measured_P")]
    pub measured_p: f64,
    /// Distance of the construction built from the smoothed state.
    #[serde(rename = "smoothed_P")]
    pub smoothed_p: f64,
    pub bound: f64,
    pub pass: bool,
    pub error: Option<String>,
}

impl LemmaRow {
    pub const CSV_HEADER: &'static str = "rho_id,sigma_id,zeta,xi,N,dmax_bits,measured_P,bound,pass";
}

/// Evaluates every instance; failures are recorded in the row, never thrown.
pub fn verify_lemma(grid: &[LemmaInstance]) -> Vec<LemmaRow> {
    grid.iter().map(verify_instance).collect()
}

fn verify_instance(inst: &LemmaInstance) -> LemmaRow {
    let mut row = LemmaRow {
        rho_id: inst.rho_id.clone(),
        sigma_id: inst.sigma_id.clone(),
        zeta: inst.zeta,
        xi: inst.xi,
        n: 0,
        dmax_bits: f64::NAN,
        measured_p: f64::NAN,
        smoothed_p: f64::NAN,
        bound: inst.zeta + inst.xi,
        pass: false,
        error: None,
    };
    let run = || -> Result<(RegisterBudget, f64, f64)> {
        let budget = register_budget(&inst.rho, &inst.sigma, inst.zeta, inst.xi)?;
        let measured = split_distance(&inst.rho, &inst.sigma, budget.n)?;
        // the smoothed state rarely commutes with σ, so it may be out of reach
        let smoothed = split_distance(&budget.rho_bar, &inst.sigma, budget.n).unwrap_or(f64::NAN);
        Ok((budget, measured, smoothed))
    };
    match run() {
        Ok((budget, measured, smoothed)) => {
            row.n = budget.n;
            row.dmax_bits = budget.dmax_bits;
            row.measured_p = measured;
            row.smoothed_p = smoothed;
            row.pass = measured <= row.bound + 1e-9;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Bell-diagonal two-qubit state `(1/3)Φ⁺ + (2/3) I/4`, separable with
/// Bell weights `(1/2, 1/6, 1/6, 1/6)`.
pub fn bell_diagonal_separable() -> DensityOperator {
    let bell = make_state(&StateFamily::Bell).expect("bell is valid");
    let mixed = DensityOperator::maximally_mixed(bell.dims().clone());
    bell.mix(&mixed, 2.0 / 3.0).expect("same dims")
}

/// Two-qubit grid used by `verify lemma --grid default`.
pub fn default_lemma_grid() -> Result<Vec<LemmaInstance>> {
    let mixed_id = "mixed";
    let bd_id = "bell_diag_sep";
    let mixed = DensityOperator::maximally_mixed(SubsystemDims::bipartite(2, 2));
    let bd = bell_diagonal_separable();
    let family = |s: &str| -> Result<DensityOperator> { make_state(&s.parse::<StateFamily>()?) };
    let mut grid = Vec::new();
    let mut push = |rho_id: &str, rho: &DensityOperator, sigma_id: &str, sigma: &DensityOperator, zeta: f64, xi: f64| {
        grid.push(LemmaInstance {
            rho_id: rho_id.into(),
            sigma_id: sigma_id.into(),
            rho: rho.clone(),
            sigma: sigma.clone(),
            zeta,
            xi,
        });
    };
    for id in ["bell", "werner:0.9", "isotropic:0.8", "maxcorr:2"] {
        let rho = family(id)?;
        for (sid, sigma) in [(mixed_id, &mixed), (bd_id, &bd)] {
            for (zeta, xi) in [(0.05, 0.3), (0.1, 0.5)] {
                push(id, &rho, sid, sigma, zeta, xi);
            }
        }
    }
    for id in ["bell", "werner:0.9"] {
        push(id, &family(id)?, bd_id, &bd, 0.05, 0.2);
    }
    for id in ["random:1,2x2,2", "random:2,2x2,4"] {
        let rho = family(id)?;
        for (zeta, xi) in [(0.05, 0.3), (0.1, 0.5)] {
            push(id, &rho, mixed_id, &mixed, zeta, xi);
        }
    }
    // ρ and σ not commuting: the dense path, kept at N ≤ 4
    let r1 = family("random:1,2x2,2")?;
    push("random:1,2x2,2", &r1, bd_id, &bd, 0.05, 0.9);
    push(bd_id, &bd, mixed_id, &mixed, 0.1, 0.5);
    push(bd_id, &bd, bd_id, &bd, 0.1, 0.3);
    push(mixed_id, &mixed, mixed_id, &mixed, 0.05, 0.5);
    Ok(grid)
}

/// `P(τ_N, σ^{⊗N})` for `N = 1..=n_max`.
pub fn distance_sweep(rho: &DensityOperator, sigma: &DensityOperator, n_max: usize) -> Result<Vec<f64>> {
    (1..=n_max).map(|n| split_distance(rho, sigma, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::{fidelity, SubsystemDims};

    fn qubit(diag: [f64; 2]) -> DensityOperator {
        DensityOperator::new(ComplexMatrix::from_real_diag(&diag), SubsystemDims::single("A", 2).unwrap()).unwrap()
    }

    #[test]
    fn small_constructions() {
        let z = qubit([1.0, 0.0]);
        let m = qubit([0.5, 0.5]);
        let one = split_state(&z, &m, 1).unwrap();
        assert!(one.op().max_abs_diff(z.op()) < 1e-15);
        let two = split_state(&z, &m, 2).unwrap();
        let expected = (&z.op().kron(m.op()) + &m.op().kron(z.op())).scale_real(0.5);
        assert!(two.op().max_abs_diff(&expected) < 1e-15);
        let same = split_state(&m, &m, 3).unwrap();
        assert!(same.op().max_abs_diff(tensor_power(&m, 3).unwrap().op()) < 1e-15);
    }

    #[test]
    fn fast_path_matches_dense() {
        let z = qubit([1.0, 0.0]);
        let m = qubit([0.5, 0.5]);
        for n in 1..=5 {
            let tau = split_state(&z, &m, n).unwrap();
            let f = fidelity(&tau, &tensor_power(&m, n).unwrap()).unwrap();
            let dense = (1.0 - f * f).sqrt();
            let fast = split_distance(&z, &m, n).unwrap();
            assert!((dense - fast).abs() < 1e-9, "n={n}: {dense} vs {fast}");
        }
        assert_eq!(split_distance(&m, &m, 4).unwrap(), 0.0);
    }

    #[test]
    fn register_count_examples() {
        let z = qubit([1.0, 0.0]);
        let m = qubit([0.5, 0.5]);
        assert_eq!(registers_for(&m, &m, 0.1, 0.3).unwrap(), 4);
        assert_eq!(registers_for(&z, &m, 1e-6, 0.5).unwrap(), 4);
    }
}
