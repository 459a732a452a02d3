//! Separable states and computable surrogates for them: the PPT relaxation
//! (a superset of the separable set, equal to it in 2⊗2 and 2⊗3) and explicit
//! product ensembles (a subset).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::divergences::{
    add_ball, check_sdp, relative_entropy_ops, status_of, support_basis, DivergenceValue, SolveStatus,
};
use crate::error::{Error, Result};
use crate::qmatrix::ops::{partial_transpose_matrix, permutation_table};
use crate::qmatrix::{
    eigh, eigvalsh, random_unit_vector, Bipartition, ComplexMatrix, DensityOperator, Party, PureState,
    SubsystemDims, C64, TOL_PSD, ZERO,
};
use crate::solver::relent::{sparse_of, traceless_basis, Barrier, RelEntProblem, SparseHerm};
use crate::solver::sdp::Sdp;

const LMO_RESTARTS: usize = 32;
const LMO_GAIN_TOL: f64 = 1e-9;
const LMO_SEED: u64 = 0x5eed_0f_5e9;
const MAX_ATOMS_ROUNDS: usize = 200;
/// Multiple of `I/d` added to ensemble states so that `log σ` stays finite.
pub const ENSEMBLE_REGULARIZATION: f64 = 1e-12;
const EPS_EXACT: f64 = 1e-9;

/// One term `w ⊗_p |a_p⟩⟨a_p|` of a product ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsemblePoint {
    pub weight: f64,
    pub states: Vec<Vec<C64>>,
}

/// Explicit convex combination of product pure states.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductEnsemble {
    parties: SubsystemDims,
    points: Vec<EnsemblePoint>,
}

impl ProductEnsemble {
    pub fn new(parties: SubsystemDims, points: Vec<EnsemblePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::BadParameter("an ensemble needs at least one point".into()));
        }
        let dims = parties.dims();
        let mut total = 0.0;
        for (j, pt) in points.iter().enumerate() {
            if !(pt.weight > 0.0) || !pt.weight.is_finite() {
                return Err(Error::BadParameter(format!("point {j}: weight {} is not positive", pt.weight)));
            }
            total += pt.weight;
            if pt.states.len() != dims.len() {
                return Err(Error::DimMismatch(format!(
                    "point {j}: {} local states for {} parties",
                    pt.states.len(),
                    dims.len()
                )));
            }
            for (p, v) in pt.states.iter().enumerate() {
                if v.len() != dims[p] {
                    return Err(Error::DimMismatch(format!(
                        "point {j}, party {p}: vector length {} for dimension {}",
                        v.len(),
                        dims[p]
                    )));
                }
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidState(format!("point {j}, party {p}: norm {norm}")));
                }
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::BadParameter(format!("weights sum to {total}")));
        }
        Ok(Self { parties, points })
    }

    /// Builds from pure product states, renormalizing the weights.
    pub(crate) fn from_unnormalized(parties: SubsystemDims, mut points: Vec<EnsemblePoint>) -> Result<Self> {
        points.retain(|p| p.weight > 0.0);
        let total: f64 = points.iter().map(|p| p.weight).sum();
        for p in &mut points {
            p.weight /= total;
        }
        Self::new(parties, points)
    }

    pub fn parties(&self) -> &SubsystemDims {
        &self.parties
    }

    pub fn points(&self) -> &[EnsemblePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Σ_j w_j ⊗_p |a_jp⟩⟨a_jp|`.
    pub fn realize(&self) -> DensityOperator {
        let d = self.parties.total();
        let mut op = ComplexMatrix::zeros(d, d);
        for pt in &self.points {
            let v = kron_vectors(&pt.states);
            op.axpy(C64::new(pt.weight, 0.0), &ComplexMatrix::projector(&v));
        }
        DensityOperator::from_parts_unchecked(op.hermitian_part(), self.parties.clone(), false)
    }

    /// Ensemble of the tensor product of the realized states.
    pub fn tensor(&self, other: &Self) -> Self {
        let parties = self.parties.concat(&other.parties);
        let mut points = Vec::with_capacity(self.len() * other.len());
        for a in &self.points {
            for b in &other.points {
                points.push(EnsemblePoint {
                    weight: a.weight * b.weight,
                    states: a.states.iter().chain(&b.states).cloned().collect(),
                });
            }
        }
        Self { parties, points }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::StateFile {
            field: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    weight: f64,
    states: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct RawEnsemble {
    parties: Vec<Party>,
    points: Vec<RawPoint>,
}

impl Serialize for ProductEnsemble {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawEnsemble {
            parties: self.parties.parties().to_vec(),
            points: self
                .points
                .iter()
                .map(|p| RawPoint {
                    weight: p.weight,
                    states: p
                        .states
                        .iter()
                        .map(|v| v.iter().map(|z| [z.re, z.im]).collect())
                        .collect(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProductEnsemble {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawEnsemble::deserialize(d)?;
        let parties = SubsystemDims::try_from(raw.parties).map_err(serde::de::Error::custom)?;
        let points = raw
            .points
            .into_iter()
            .map(|p| EnsemblePoint {
                weight: p.weight,
                states: p
                    .states
                    .into_iter()
                    .map(|v| v.into_iter().map(|[re, im]| C64::new(re, im)).collect())
                    .collect(),
            })
            .collect();
        ProductEnsemble::new(parties, points).map_err(serde::de::Error::custom)
    }
}

/// The state an ensemble describes.
pub fn realize(ens: &ProductEnsemble) -> DensityOperator {
    ens.realize()
}

pub(crate) fn kron_vectors(states: &[Vec<C64>]) -> Vec<C64> {
    let mut out = vec![C64::new(1.0, 0.0)];
    for v in states {
        out = out.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
    }
    out
}

/// Which separability notion an optimization targets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SepTarget {
    /// Separable across one cut; parties on the same side are grouped.
    Cut(Bipartition),
    /// Fully separable across every party.
    Full,
}

impl From<Bipartition> for SepTarget {
    fn from(c: Bipartition) -> Self {
        Self::Cut(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxMode {
    Ppt,
    Ensemble,
}

impl std::str::FromStr for ApproxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppt" => Ok(Self::Ppt),
            "ensemble" => Ok(Self::Ensemble),
            _ => Err(Error::BadParameter(format!("unknown approximation mode `{s}`"))),
        }
    }
}

/// Computable stand-in for the separable set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SepApprox {
    pub mode: ApproxMode,
    /// PPT constraints to impose; empty means every cut implied by the target.
    pub cut_set: Vec<Bipartition>,
}

impl SepApprox {
    pub fn ppt() -> Self {
        Self {
            mode: ApproxMode::Ppt,
            cut_set: Vec::new(),
        }
    }

    pub fn ensemble() -> Self {
        Self {
            mode: ApproxMode::Ensemble,
            cut_set: Vec::new(),
        }
    }

    pub fn with_mode(mode: ApproxMode) -> Self {
        Self {
            mode,
            cut_set: Vec::new(),
        }
    }
}

/// True when the PPT set coincides with the separable set for `target`.
pub fn ppt_is_exact(dims: &SubsystemDims, target: &SepTarget) -> bool {
    let groups = match target {
        SepTarget::Cut(c) => match (dims.indices_of(&c.left), dims.indices_of(&c.right)) {
            (Ok(l), Ok(r)) => vec![l, r],
            _ => return false,
        },
        SepTarget::Full => (0..dims.len()).map(|i| vec![i]).collect(),
    };
    if groups.len() != 2 {
        return false;
    }
    let d = dims.dims();
    let mut g: Vec<usize> = groups.iter().map(|g| g.iter().map(|&i| d[i]).product()).collect();
    g.sort_unstable();
    g[0] * g[1] <= 6
}

/// Party indices transposed by each PPT constraint.
fn ppt_cuts(dims: &SubsystemDims, target: &SepTarget, approx: &SepApprox) -> Result<Vec<Vec<usize>>> {
    if !approx.cut_set.is_empty() {
        return approx.cut_set.iter().map(|c| c.validate(dims)).collect();
    }
    match target {
        SepTarget::Cut(c) => Ok(vec![c.validate(dims)?]),
        SepTarget::Full => {
            let k = dims.len();
            if k < 2 {
                return Err(Error::BadPartition("full separability needs two or more parties".into()));
            }
            Ok((1..(1usize << (k - 1)))
                .map(|mask| (1..k).filter(|i| mask & (1 << (i - 1)) != 0).collect())
                .collect())
        }
    }
}

/// Groups of party indices treated as single systems by ensemble mode.
fn groups_of(dims: &SubsystemDims, target: &SepTarget) -> Result<Vec<Vec<usize>>> {
    match target {
        SepTarget::Cut(c) => {
            c.validate(dims)?;
            let mut l = dims.indices_of(&c.left)?;
            let mut r = dims.indices_of(&c.right)?;
            l.sort_unstable();
            r.sort_unstable();
            Ok(vec![l, r])
        }
        SepTarget::Full => {
            if dims.len() < 2 {
                return Err(Error::BadPartition("full separability needs two or more parties".into()));
            }
            Ok((0..dims.len()).map(|i| vec![i]).collect())
        }
    }
}

/// Reordering that makes every group contiguous.
struct Grouping {
    order: Vec<usize>,
    table: Vec<usize>,
    group_dims: Vec<usize>,
    parties: SubsystemDims,
}

impl Grouping {
    fn new(dims: &SubsystemDims, target: &SepTarget) -> Result<Self> {
        let groups = groups_of(dims, target)?;
        let d = dims.dims();
        let order: Vec<usize> = groups.iter().flatten().copied().collect();
        let table = permutation_table(&d, &order);
        let group_dims: Vec<usize> = groups.iter().map(|g| g.iter().map(|&i| d[i]).product()).collect();
        let labels: Vec<String> = groups
            .iter()
            .map(|g| g.iter().map(|&i| dims.parties()[i].label.as_str()).collect::<String>())
            .collect();
        let parties = SubsystemDims::new(labels.into_iter().zip(group_dims.iter().copied()))?;
        Ok(Self {
            order,
            table,
            group_dims,
            parties,
        })
    }

    /// Operator in grouped order.
    fn to_grouped(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let n = m.rows();
        ComplexMatrix::from_fn(n, n, |i, j| m[(self.table[i], self.table[j])])
    }

    /// Operator back in the original order.
    fn from_grouped(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let n = m.rows();
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(self.table[i], self.table[j])] = m[(i, j)];
            }
        }
        out
    }

    fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(i, &o)| i == o)
    }
}

/// PPT test across `cut`: `(min eigenvalue ≥ -1e-9, min eigenvalue)`.
pub fn is_ppt(s: &DensityOperator, cut: &Bipartition) -> Result<(bool, f64)> {
    let right = cut.validate(s.dims())?;
    let pt = partial_transpose_matrix(s.op(), &s.dims().dims(), &right);
    let min = *eigvalsh(&pt).last().expect("nonempty");
    Ok((min >= -TOL_PSD, min))
}

fn min_pt_eigenvalue(op: &ComplexMatrix, dims: &[usize], cuts: &[Vec<usize>]) -> f64 {
    cuts.iter()
        .map(|c| *eigvalsh(&partial_transpose_matrix(op, dims, c)).last().expect("nonempty"))
        .fold(f64::INFINITY, f64::min)
}

fn check_normalized(rho: &DensityOperator) -> Result<()> {
    if rho.is_subnormalized() {
        return Err(Error::Subnormalized);
    }
    Ok(())
}

/// Relative entropy of entanglement `min_σ D(ρ‖σ)` over the approximation
/// set. PPT mode gives a lower bound, ensemble mode an upper bound.
pub fn ree(rho: &DensityOperator, target: &SepTarget, approx: &SepApprox, tol: f64) -> Result<DivergenceValue> {
    check_normalized(rho)?;
    if !(tol > 0.0) {
        return Err(Error::BadParameter(format!("tolerance {tol} must be positive")));
    }
    match approx.mode {
        ApproxMode::Ppt => ree_ppt(rho, target, approx, tol),
        ApproxMode::Ensemble => ree_ensemble(rho, target, tol),
    }
}

fn ree_ppt(rho: &DensityOperator, target: &SepTarget, approx: &SepApprox, tol: f64) -> Result<DivergenceValue> {
    let dims = rho.dims().dims();
    let cuts = ppt_cuts(rho.dims(), target, approx)?;
    if min_pt_eigenvalue(rho.op(), &dims, &cuts) >= -TOL_PSD {
        let mut v = DivergenceValue::exact(0.0);
        v.certificate = Some(rho.clone());
        return Ok(v);
    }
    let d = rho.dim();
    let basis = traceless_basis(d);
    let mixed = ComplexMatrix::identity(d).scale_real(1.0 / d as f64);
    let mut barriers = vec![Barrier {
        constant: mixed.clone(),
        dirs: basis.clone(),
    }];
    for c in &cuts {
        barriers.push(Barrier {
            constant: mixed.clone(),
            dirs: basis
                .iter()
                .map(|s| {
                    let dense = crate::solver::relent::dense_of(s, d);
                    sparse_of(&partial_transpose_matrix(&dense, &dims, c))
                })
                .collect(),
        });
    }
    let problem = RelEntProblem {
        rho: rho.op().clone(),
        rho_log_rho: rho_log_rho(rho.op()),
        sigma0: mixed,
        dirs: basis,
        barriers,
    };
    let m = problem.dirs.len();
    let sol = problem.solve(vec![0.0; m], tol);
    let sigma = DensityOperator::with_repair(problem.sigma(&sol.y).hermitian_part(), rho.dims().clone())?;
    Ok(DivergenceValue {
        bits: sol.value_bits,
        certificate: Some(sigma),
        dual_bound: Some(sol.dual_bound_bits),
        status: if sol.converged {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIter
        },
        iterations: sol.newton_steps,
        ensemble: None,
    })
}

fn rho_log_rho(rho: &ComplexMatrix) -> f64 {
    eigvalsh(rho).iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum()
}

/// Computational-basis product states of the grouped systems.
fn basis_atoms(group_dims: &[usize]) -> Vec<Vec<Vec<C64>>> {
    let total: usize = group_dims.iter().product();
    (0..total)
        .map(|mut idx| {
            let mut digits = vec![0; group_dims.len()];
            for p in (0..group_dims.len()).rev() {
                digits[p] = idx % group_dims[p];
                idx /= group_dims[p];
            }
            digits
                .iter()
                .zip(group_dims)
                .map(|(&k, &d)| {
                    let mut v = vec![ZERO; d];
                    v[k] = C64::new(1.0, 0.0);
                    v
                })
                .collect()
        })
        .collect()
}

/// Approximately maximizes `⟨a_1…a_k| G |a_1…a_k⟩` over product unit vectors
/// by alternating top-eigenvector updates from seeded random starts.
pub(crate) fn best_product_state(g: &ComplexMatrix, group_dims: &[usize], seed: u64) -> (f64, Vec<Vec<C64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for _ in 0..LMO_RESTARTS {
        let mut vecs: Vec<Vec<C64>> = group_dims.iter().map(|&d| random_unit_vector(d, &mut rng)).collect();
        let mut value = f64::NEG_INFINITY;
        for _ in 0..500 {
            for p in 0..group_dims.len() {
                let local = contract_except(g, group_dims, &vecs, p);
                let e = eigh(&local);
                vecs[p] = e.vector(0);
            }
            let v = kron_vectors(&vecs);
            let new = expectation(g, &v);
            let gain = new - value;
            value = new;
            if gain.abs() < LMO_GAIN_TOL * 1e-3 {
                break;
            }
        }
        if value > best.0 {
            best = (value, vecs);
        }
    }
    best
}

fn expectation(g: &ComplexMatrix, v: &[C64]) -> f64 {
    let gv = g.matvec(v);
    v.iter().zip(&gv).map(|(a, b)| (a.conj() * b).re).sum()
}

/// `G_p[i][j] = ⟨…e_i…| G |…e_j…⟩` with every other slot fixed to `vecs`.
fn contract_except(g: &ComplexMatrix, dims: &[usize], vecs: &[Vec<C64>], p: usize) -> ComplexMatrix {
    let dp = dims[p];
    let columns: Vec<Vec<C64>> = (0..dp)
        .map(|i| {
            let mut s = vecs.to_vec();
            let mut e = vec![ZERO; dp];
            e[i] = C64::new(1.0, 0.0);
            s[p] = e;
            kron_vectors(&s)
        })
        .collect();
    let g_cols: Vec<Vec<C64>> = columns.iter().map(|c| g.matvec(c)).collect();
    ComplexMatrix::from_fn(dp, dp, |i, j| {
        columns[i].iter().zip(&g_cols[j]).map(|(a, b)| a.conj() * b).sum()
    })
    .hermitian_part()
}

/// Gradient of `-Tr ρ ln σ` (up to sign): `V (Γ1 ∘ V†ρV) V†`.
fn log_derivative_adjoint(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> ComplexMatrix {
    let e = eigh(sigma);
    let n = e.values.len();
    let v = &e.vectors;
    let rt = v.adjoint().matmul(rho).matmul(v);
    let lam = &e.values;
    let mut w = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (lam[i].max(1e-300), lam[j].max(1e-300));
            let g1 = if (a - b).abs() <= 1e-12 * a.max(b) {
                2.0 / (a + b)
            } else {
                (a.ln() - b.ln()) / (a - b)
            };
            w[(i, j)] = rt[(i, j)] * g1;
        }
    }
    v.matmul(&w).matmul_adjoint(v).hermitian_part()
}

/// Weights on the simplex minimizing `D(ρ‖Σ w_j P_j + reg)`.
fn optimal_weights(rho: &ComplexMatrix, rlr: f64, projectors: &[ComplexMatrix], tol: f64) -> Vec<f64> {
    let n = projectors.len();
    if n == 1 {
        return vec![1.0];
    }
    let d = rho.rows();
    let reg = ComplexMatrix::identity(d).scale_real(ENSEMBLE_REGULARIZATION / d as f64);
    // orthonormal basis of zero-sum vectors
    let zero_sum: Vec<Vec<f64>> = (0..n - 1)
        .map(|k| {
            let norm = (((k + 1) * (k + 2)) as f64).sqrt();
            let mut b = vec![0.0; n];
            for x in b.iter_mut().take(k + 1) {
                *x = 1.0 / norm;
            }
            b[k + 1] = -((k + 1) as f64) / norm;
            b
        })
        .collect();
    let mut sigma0 = reg;
    for p in projectors {
        sigma0.axpy(C64::new(1.0 / n as f64, 0.0), p);
    }
    let dirs: Vec<SparseHerm> = zero_sum
        .iter()
        .map(|b| {
            let mut m = ComplexMatrix::zeros(d, d);
            for (bj, p) in b.iter().zip(projectors) {
                if *bj != 0.0 {
                    m.axpy(C64::new(*bj, 0.0), p);
                }
            }
            sparse_of(&m)
        })
        .collect();
    let barriers = (0..n)
        .map(|j| Barrier {
            constant: ComplexMatrix::from_real_diag(&[1.0 / n as f64]),
            dirs: zero_sum
                .iter()
                .map(|b| if b[j] != 0.0 { vec![(0, 0, C64::new(b[j], 0.0))] } else { vec![] })
                .collect(),
        })
        .collect();
    let problem = RelEntProblem {
        rho: rho.clone(),
        rho_log_rho: rlr,
        sigma0,
        dirs,
        barriers,
    };
    let sol = problem.solve(vec![0.0; n - 1], tol);
    (0..n)
        .map(|j| 1.0 / n as f64 + zero_sum.iter().zip(&sol.y).map(|(b, y)| b[j] * y).sum::<f64>())
        .map(|w| w.max(0.0))
        .collect()
}

fn ree_ensemble(rho: &DensityOperator, target: &SepTarget, tol: f64) -> Result<DivergenceValue> {
    let grouping = Grouping::new(rho.dims(), target)?;
    let r = grouping.to_grouped(rho.op());
    let d = r.rows();
    let rlr = rho_log_rho(&r);
    let reg = ComplexMatrix::identity(d).scale_real(ENSEMBLE_REGULARIZATION / d as f64);
    if let Some(ens) = exact_qubit_ensemble(&r, &grouping) {
        let mut sigma = ens.realize().into_op();
        sigma.axpy(C64::new(1.0, 0.0), &reg);
        let value = relative_entropy_ops(&r, &sigma);
        let cert = grouping.from_grouped(&sigma.scale_real(1.0 / (1.0 + ENSEMBLE_REGULARIZATION)));
        return Ok(DivergenceValue {
            bits: value,
            certificate: Some(DensityOperator::from_parts_unchecked(cert, rho.dims().clone(), false)),
            dual_bound: Some(0.0),
            status: SolveStatus::Exact,
            iterations: 0,
            ensemble: Some(ens),
        });
    }
    let mut atoms = basis_atoms(&grouping.group_dims);
    let mut weights = Vec::new();
    let mut rounds = 0;
    let mut gap = f64::INFINITY;
    let mut value = f64::INFINITY;
    while rounds < MAX_ATOMS_ROUNDS {
        rounds += 1;
        let projectors: Vec<ComplexMatrix> = atoms.iter().map(|a| ComplexMatrix::projector(&kron_vectors(a))).collect();
        weights = optimal_weights(&r, rlr, &projectors, (gap * 0.1).clamp(tol * 0.05, 1e-2));
        // drop atoms that carry no weight
        let keep: Vec<usize> = (0..atoms.len()).filter(|&j| weights[j] > 1e-11).collect();
        atoms = keep.iter().map(|&j| atoms[j].clone()).collect();
        let projectors: Vec<&ComplexMatrix> = keep.iter().map(|&j| &projectors[j]).collect();
        weights = keep.iter().map(|&j| weights[j]).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let mut sigma = reg.clone();
        for (w, p) in weights.iter().zip(&projectors) {
            sigma.axpy(C64::new(*w, 0.0), p);
        }
        value = relative_entropy_ops(&r, &sigma);
        let g = log_derivative_adjoint(&r, &sigma);
        let (best, vecs) = best_product_state(&g, &grouping.group_dims, LMO_SEED ^ rounds as u64);
        let current = g.trace_product_re(&sigma);
        gap = ((best - current) / std::f64::consts::LN_2).max(0.0);
        if gap < tol {
            break;
        }
        atoms.push(vecs);
    }
    let points = atoms
        .into_iter()
        .zip(&weights)
        .map(|(states, &weight)| EnsemblePoint { weight, states })
        .collect();
    let ens = ProductEnsemble::from_unnormalized(grouping.parties.clone(), points)?;
    let mut sigma = ens.realize().into_op();
    sigma.axpy(C64::new(1.0, 0.0), &reg);
    let cert = grouping.from_grouped(&sigma.scale_real(1.0 / (1.0 + ENSEMBLE_REGULARIZATION)));
    Ok(DivergenceValue {
        bits: value,
        certificate: Some(DensityOperator::from_parts_unchecked(cert, rho.dims().clone(), false)),
        dual_bound: Some((value - gap).max(0.0)),
        status: if gap < tol {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIter
        },
        iterations: rounds,
        ensemble: Some(ens),
    })
}

/// Smooth max-relative entropy of entanglement: `min log2 λ` over `ρ̄` in the
/// `eps` ball and `σ` in the approximation set with `ρ̄ ≤ λ σ`.
pub fn e_max_smooth(rho: &DensityOperator, target: &SepTarget, eps: f64, approx: &SepApprox) -> Result<DivergenceValue> {
    check_normalized(rho)?;
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::BadParameter(format!("smoothing parameter {eps} outside [0, 1)")));
    }
    match approx.mode {
        ApproxMode::Ppt => e_max_ppt(rho, target, eps, approx),
        ApproxMode::Ensemble => e_max_ensemble(rho, target, eps),
    }
}

fn e_max_ppt(rho: &DensityOperator, target: &SepTarget, eps: f64, approx: &SepApprox) -> Result<DivergenceValue> {
    let dims = rho.dims().dims();
    let cuts = ppt_cuts(rho.dims(), target, approx)?;
    if min_pt_eigenvalue(rho.op(), &dims, &cuts) >= -TOL_PSD {
        let mut v = DivergenceValue::exact(0.0);
        v.certificate = Some(rho.clone());
        return Ok(v);
    }
    let d = rho.dim();
    let mut p = Sdp::new();
    let s = p.hermitian(d);
    for &(a, b, re, _) in &s.ids {
        if a == b {
            p.set_objective(re, 1.0);
        }
    }
    for c in &cuts {
        let blk = p.block(ComplexMatrix::zeros(d, d));
        p.add_hermitian_mapped(blk, &s, 0, |m| partial_transpose_matrix(m, &dims, c));
    }
    add_dominance(&mut p, rho, eps, |p, blk| p.add_hermitian(blk, &s, 0, 1.0));
    let sol = p.solve()?;
    let lam = sol.primal;
    check_sdp(&sol, lam.abs().max(1.0))?;
    let sm = Sdp::hermitian_value(&s, &sol.y);
    let sigma = DensityOperator::with_repair(sm.scale_real(1.0 / lam).hermitian_part(), rho.dims().clone())?;
    Ok(DivergenceValue {
        bits: lam.log2().max(0.0),
        certificate: Some(sigma),
        dual_bound: Some(if sol.dual > 0.0 { sol.dual.log2().max(0.0) } else { 0.0 }),
        status: status_of(&sol),
        iterations: sol.iterations,
        ensemble: None,
    })
}

/// Adds the block `S - ρ̄ ⪰ 0` (with `S` added by `add_s`) and, for `eps > 0`,
/// the smoothing ball around `ρ`. Returns the dominance block index.
fn add_dominance(p: &mut Sdp, rho: &DensityOperator, eps: f64, add_s: impl FnOnce(&mut Sdp, usize)) -> usize {
    let d = rho.dim();
    if eps < EPS_EXACT {
        let blk = p.block(rho.op().scale_real(-1.0));
        add_s(p, blk);
        return blk;
    }
    let c = (1.0 - eps * eps).sqrt();
    let (v, rvals) = support_basis(&eigh(rho.op()));
    let rbar = p.hermitian(d);
    let y = p.complex(rvals.len(), d);
    let blk = p.block(ComplexMatrix::zeros(d, d));
    add_s(p, blk);
    p.add_hermitian(blk, &rbar, 0, -1.0);
    add_ball(p, &rbar, &y, &rvals, &v, c);
    blk
}

fn e_max_ensemble(rho: &DensityOperator, target: &SepTarget, eps: f64) -> Result<DivergenceValue> {
    let grouping = Grouping::new(rho.dims(), target)?;
    let grouped = if grouping.is_identity() {
        rho.clone()
    } else {
        DensityOperator::from_parts_unchecked(grouping.to_grouped(rho.op()), rho.dims().clone(), false)
    };
    if let Some(ens) = exact_qubit_ensemble(grouped.op(), &grouping) {
        let sigma = ens.realize();
        if crate::qmatrix::purified_distance_ops(grouped.op(), sigma.op()) <= eps + 1e-12 {
            let cert = grouping.from_grouped(sigma.op());
            return Ok(DivergenceValue {
                bits: 0.0,
                certificate: Some(DensityOperator::from_parts_unchecked(cert, rho.dims().clone(), false)),
                dual_bound: Some(0.0),
                status: SolveStatus::Exact,
                iterations: 0,
                ensemble: Some(ens),
            });
        }
    }
    let mut atoms = basis_atoms(&grouping.group_dims);
    let mut rounds = 0;
    loop {
        rounds += 1;
        let projectors: Vec<ComplexMatrix> = atoms.iter().map(|a| ComplexMatrix::projector(&kron_vectors(a))).collect();
        let n = atoms.len();
        let mut p = Sdp::new();
        let s: Vec<usize> = (0..n).map(|_| p.scalar()).collect();
        for &v in &s {
            p.set_objective(v, 1.0);
        }
        let nonneg = p.block(ComplexMatrix::zeros(n, n));
        for (j, &v) in s.iter().enumerate() {
            p.add_entry(nonneg, v, j, j, C64::new(1.0, 0.0));
        }
        let dom = add_dominance(&mut p, &grouped, eps, |p, blk| {
            for (&v, proj) in s.iter().zip(&projectors) {
                p.add_scalar(blk, v, 0, proj);
            }
        });
        let sol = p.solve()?;
        let lam = sol.primal;
        check_sdp(&sol, lam.abs().max(1.0))?;
        let x = &sol.x[dom];
        let (kappa, vecs) = best_product_state(x, &grouping.group_dims, LMO_SEED ^ rounds as u64);
        if kappa <= 1.0 + 1e-7 || rounds >= MAX_ATOMS_ROUNDS {
            let weights: Vec<f64> = s.iter().map(|&v| sol.y[v].max(0.0)).collect();
            let points = atoms
                .into_iter()
                .zip(weights)
                .filter(|(_, w)| *w > 1e-12 * lam)
                .map(|(states, weight)| EnsemblePoint { weight, states })
                .collect();
            let ens = ProductEnsemble::from_unnormalized(grouping.parties.clone(), points)?;
            let cert = grouping.from_grouped(ens.realize().op());
            let lower = if sol.dual > 0.0 { (sol.dual / kappa.max(1.0)).log2() } else { 0.0 };
            return Ok(DivergenceValue {
                bits: lam.log2().max(0.0),
                certificate: Some(DensityOperator::from_parts_unchecked(cert, rho.dims().clone(), false)),
                dual_bound: Some(lower.max(0.0)),
                status: if kappa <= 1.0 + 1e-7 {
                    status_of(&sol)
                } else {
                    SolveStatus::MaxIter
                },
                iterations: rounds,
                ensemble: Some(ens),
            });
        }
        atoms.push(vecs);
    }
}

/// Result of a nearest-separable-state search.
#[derive(Clone, Debug)]
pub struct SepDistance {
    /// Purified distance to the witness.
    pub distance: f64,
    pub fidelity: f64,
    pub witness: DensityOperator,
    pub ensemble: Option<ProductEnsemble>,
    pub status: SolveStatus,
    pub mode: ApproxMode,
}

/// Minimal purified distance from `s` to the approximation set.
pub fn nearest_sep_distance(s: &DensityOperator, target: &SepTarget, approx: &SepApprox) -> Result<SepDistance> {
    check_normalized(s)?;
    match approx.mode {
        ApproxMode::Ppt => nearest_ppt(s, target, approx),
        ApproxMode::Ensemble => nearest_ensemble(s, target),
    }
}

fn nearest_ppt(s: &DensityOperator, target: &SepTarget, approx: &SepApprox) -> Result<SepDistance> {
    let dims = s.dims().dims();
    let cuts = ppt_cuts(s.dims(), target, approx)?;
    if min_pt_eigenvalue(s.op(), &dims, &cuts) >= -TOL_PSD {
        return Ok(SepDistance {
            distance: 0.0,
            fidelity: 1.0,
            witness: s.clone(),
            ensemble: None,
            status: SolveStatus::Exact,
            mode: ApproxMode::Ppt,
        });
    }
    let d = s.dim();
    let (v, rvals) = support_basis(&eigh(s.op()));
    let rr = rvals.len();
    let mut p = Sdp::new();
    let basis = traceless_basis(d);
    let ys: Vec<usize> = (0..basis.len()).map(|_| p.scalar()).collect();
    let y = p.complex(rr, d);
    let mixed = ComplexMatrix::identity(d).scale_real(1.0 / d as f64);
    for c in &cuts {
        let blk = p.block(mixed.clone());
        for (b, &var) in basis.iter().zip(&ys) {
            let dense = crate::solver::relent::dense_of(b, d);
            p.add_scalar(blk, var, 0, &partial_transpose_matrix(&dense, &dims, c));
        }
    }
    let mut c0 = ComplexMatrix::zeros(rr + d, rr + d);
    for (i, &x) in rvals.iter().enumerate() {
        c0[(i, i)] = C64::new(x, 0.0);
    }
    for i in 0..d {
        c0[(rr + i, rr + i)] = C64::new(1.0 / d as f64, 0.0);
    }
    let fb = p.block(c0);
    p.add_offdiag(fb, &y, 0, rr);
    for (b, &var) in basis.iter().zip(&ys) {
        p.add_scalar(fb, var, rr, &crate::solver::relent::dense_of(b, d));
    }
    // minimize -Re Tr(Y V)
    for &(a, b, re, im) in &y.ids {
        let k = v[(b, a)];
        p.set_objective(re, -k.re);
        p.set_objective(im, k.im);
    }
    let sol = p.solve()?;
    check_sdp(&sol, 1.0)?;
    let mut sigma = mixed;
    for (b, &var) in basis.iter().zip(&ys) {
        sigma.axpy(C64::new(sol.y[var], 0.0), &crate::solver::relent::dense_of(b, d));
    }
    let witness = DensityOperator::with_repair(sigma.hermitian_part(), s.dims().clone())?;
    let f = (-sol.primal).clamp(0.0, 1.0);
    Ok(SepDistance {
        distance: (1.0 - f * f).max(0.0).sqrt(),
        fidelity: f,
        witness,
        ensemble: None,
        status: status_of(&sol),
        mode: ApproxMode::Ppt,
    })
}

fn nearest_ensemble(s: &DensityOperator, target: &SepTarget) -> Result<SepDistance> {
    let grouping = Grouping::new(s.dims(), target)?;
    let r = grouping.to_grouped(s.op());
    if let Some(ens) = exact_qubit_ensemble(&r, &grouping) {
        let witness_op = grouping.from_grouped(ens.realize().op());
        let witness = DensityOperator::from_parts_unchecked(witness_op, s.dims().clone(), false);
        return Ok(SepDistance {
            distance: crate::qmatrix::purified_distance(s, &witness)?,
            fidelity: crate::qmatrix::fidelity(s, &witness)?,
            witness,
            ensemble: Some(ens),
            status: SolveStatus::Exact,
            mode: ApproxMode::Ensemble,
        });
    }
    let d = r.rows();
    let (v, rvals) = support_basis(&eigh(&r));
    let rr = rvals.len();
    let mut atoms = basis_atoms(&grouping.group_dims);
    let mut rounds = 0;
    loop {
        rounds += 1;
        let projectors: Vec<ComplexMatrix> = atoms.iter().map(|a| ComplexMatrix::projector(&kron_vectors(a))).collect();
        let n = atoms.len();
        let mut p = Sdp::new();
        let w: Vec<usize> = (0..n).map(|_| p.scalar()).collect();
        let y = p.complex(rr, d);
        let nonneg = p.block(ComplexMatrix::zeros(n, n));
        for (j, &var) in w.iter().enumerate() {
            p.add_entry(nonneg, var, j, j, C64::new(1.0, 0.0));
        }
        let tr = p.block(ComplexMatrix::identity(1));
        for &var in &w {
            p.add_entry(tr, var, 0, 0, C64::new(-1.0, 0.0));
        }
        let mut c0 = ComplexMatrix::zeros(rr + d, rr + d);
        for (i, &x) in rvals.iter().enumerate() {
            c0[(i, i)] = C64::new(x, 0.0);
        }
        let fb = p.block(c0);
        p.add_offdiag(fb, &y, 0, rr);
        for (&var, proj) in w.iter().zip(&projectors) {
            p.add_scalar(fb, var, rr, proj);
        }
        for &(a, b, re, im) in &y.ids {
            let k = v[(b, a)];
            p.set_objective(re, -k.re);
            p.set_objective(im, k.im);
        }
        let sol = p.solve()?;
        check_sdp(&sol, 1.0)?;
        let x22 = sol.x[fb].select(&(rr..rr + d).collect::<Vec<_>>(), &(rr..rr + d).collect::<Vec<_>>());
        let price = sol.x[tr][(0, 0)].re;
        let (best, vecs) = best_product_state(&x22, &grouping.group_dims, LMO_SEED ^ rounds as u64);
        if best <= price + 1e-8 || rounds >= MAX_ATOMS_ROUNDS {
            let weights: Vec<f64> = w.iter().map(|&var| sol.y[var].max(0.0)).collect();
            let points = atoms
                .into_iter()
                .zip(weights)
                .filter(|(_, wt)| *wt > 1e-12)
                .map(|(states, weight)| EnsemblePoint { weight, states })
                .collect();
            let ens = ProductEnsemble::from_unnormalized(grouping.parties.clone(), points)?;
            let witness_op = grouping.from_grouped(ens.realize().op());
            let witness = DensityOperator::from_parts_unchecked(witness_op, s.dims().clone(), false);
            let f = crate::qmatrix::fidelity(s, &witness)?;
            return Ok(SepDistance {
                distance: crate::qmatrix::purified_distance(s, &witness)?,
                fidelity: f,
                witness,
                ensemble: Some(ens),
                status: if best <= price + 1e-8 {
                    status_of(&sol)
                } else {
                    SolveStatus::MaxIter
                },
                mode: ApproxMode::Ensemble,
            });
        }
        atoms.push(vecs);
    }
}

/// Product pure state `|a⟩ ⊗ |b⟩ ⊗ …` as a [`PureState`].
pub fn product_state(parties: &SubsystemDims, states: &[Vec<C64>]) -> Result<PureState> {
    PureState::new(kron_vectors(states), parties.clone())
}

/// Triangle with sides `a`, `b`, `c`: angles `(β, γ)` with `a + b e^{iβ} + c e^{iγ} = 0`.
fn close_triangle(a: f64, b: f64, c: f64) -> (f64, f64) {
    let beta = if a * b > 0.0 {
        ((c * c - a * a - b * b) / (2.0 * a * b)).clamp(-1.0, 1.0).acos()
    } else {
        std::f64::consts::PI
    };
    let rest = -(C64::new(a, 0.0) + C64::from_polar(b, beta));
    (beta, rest.arg())
}

/// Rank-one factorization `y ≈ w^{1/2} |a⟩ ⊗ |b⟩` of a two-qubit vector.
fn qubit_product(y: &[C64]) -> Option<EnsemblePoint> {
    let m = ComplexMatrix::from_fn(2, 2, |i, j| y[2 * i + j]);
    let e = eigh(&m.matmul_adjoint(&m));
    if e.values[0] <= 1e-300 {
        return None;
    }
    let a = e.vector(0);
    let b: Vec<C64> = (0..2).map(|j| a[0].conj() * m[(0, j)] + a[1].conj() * m[(1, j)]).collect();
    let weight: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    let norm = weight.sqrt();
    Some(EnsemblePoint {
        weight,
        states: vec![a, b.iter().map(|z| z / norm).collect()],
    })
}

/// Four-term product decomposition of a two-qubit state with zero concurrence
/// (Wootters' construction). `None` if the state is entangled.
fn two_qubit_decomposition(r: &ComplexMatrix) -> Option<Vec<EnsemblePoint>> {
    let e = eigh(r);
    let v: Vec<Vec<C64>> = (0..4)
        .map(|j| {
            let s = e.values[j].max(0.0).sqrt();
            e.vector(j).iter().map(|z| z * s).collect()
        })
        .collect();
    // bilinear form of σ_y ⊗ σ_y
    let tau = |a: &[C64], b: &[C64]| -a[0] * b[3] + a[1] * b[2] + a[2] * b[1] - a[3] * b[0];
    let t = ComplexMatrix::from_fn(4, 4, |i, j| tau(&v[i], &v[j]));
    // Takagi factorization through the real symmetric embedding
    let emb = ComplexMatrix::from_fn(8, 8, |i, j| {
        let z = t[(i % 4, j % 4)];
        let x = match (i < 4, j < 4) {
            (true, true) => z.re,
            (false, false) => -z.re,
            _ => z.im,
        };
        C64::new(x, 0.0)
    });
    let te = eigh(&emb);
    let mut real_cols: Vec<Vec<f64>> = Vec::new();
    let mut takagi: Vec<(f64, Vec<C64>)> = Vec::new();
    for k in 0..8 {
        if takagi.len() == 4 {
            break;
        }
        let col = te.vector(k);
        let pivot = col.iter().copied().fold(ZERO, |m, z| if z.norm() > m.norm() { z } else { m });
        let phase = pivot.conj() / pivot.norm();
        let mut w: Vec<f64> = col.iter().map(|z| (z * phase).re).collect();
        for c in &real_cols {
            let d: f64 = c.iter().zip(&w).map(|(a, b)| a * b).sum();
            w.iter_mut().zip(c).for_each(|(x, a)| *x -= d * a);
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 0.5 {
            continue;
        }
        w.iter_mut().for_each(|x| *x /= n);
        real_cols.push(w.clone());
        let mut u: Vec<C64> = (0..4).map(|i| C64::new(w[i], w[i + 4])).collect();
        for (_, c) in &takagi {
            let d: C64 = c.iter().zip(&u).map(|(a, b)| a.conj() * b).sum();
            u.iter_mut().zip(c).for_each(|(x, a)| *x -= d * a);
        }
        let n = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n < 0.5 {
            continue;
        }
        u.iter_mut().for_each(|z| *z /= n);
        takagi.push((te.values[k].max(0.0), u));
    }
    if takagi.len() < 4 {
        return None;
    }
    let lam: Vec<f64> = takagi.iter().map(|(s, _)| *s).collect();
    if lam[0] > lam[1] + lam[2] + lam[3] + 1e-10 {
        return None;
    }
    let x: Vec<Vec<C64>> = takagi
        .iter()
        .map(|(_, u)| (0..4).map(|a| (0..4).map(|i| u[i].conj() * v[i][a]).sum()).collect())
        .collect();
    // phases φ with Σ λ_j e^{iφ_j} = 0
    let l = (lam[0] - lam[1]).max(lam[2] - lam[3]).min(lam[2] + lam[3]);
    let (b2, g) = close_triangle(lam[0], lam[1], l);
    let (b3, g4) = close_triangle(l, lam[2], lam[3]);
    let rot = g + std::f64::consts::PI;
    let phi = [0.0, b2, b3 + rot, g4 + rot];
    let signs = [[1.0, 1.0, 1.0, 1.0], [1.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];
    let points = signs
        .iter()
        .filter_map(|row| {
            let y: Vec<C64> = (0..4)
                .map(|a| (0..4).map(|j| C64::from_polar(0.5 * row[j], 0.5 * phi[j]) * x[j][a]).sum())
                .collect();
            qubit_product(&y)
        })
        .collect();
    Some(points)
}

/// Exact product ensemble for separable two-qubit inputs in grouped order.
fn exact_qubit_ensemble(r: &ComplexMatrix, grouping: &Grouping) -> Option<ProductEnsemble> {
    if grouping.group_dims != [2, 2] {
        return None;
    }
    let points = two_qubit_decomposition(r)?;
    ProductEnsemble::from_unnormalized(grouping.parties.clone(), points).ok()
}
