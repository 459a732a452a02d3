//! Catalytic disentangling: coordinated random local unitaries acting on the
//! input together with a separable catalyst, the converse gadgets, and the
//! decoupling variants.

use serde::Serialize;

use crate::convexsplit::{register_budget, split_distance, split_state};
use crate::divergences::product_of_marginals;
use crate::error::{Error, Result};
use crate::qmatrix::ops::{partial_trace_matrix, partial_transpose_matrix};
use crate::qmatrix::{
    eigh, eigvalsh, guard_dim, permute_parties, tensor_product, Bipartition, ComplexMatrix, DensityOperator,
    SubsystemDims, C64, TOL_PSD, ZERO,
};
use crate::separability::{
    e_max_smooth, nearest_sep_distance, ppt_is_exact, ree, EnsemblePoint, ProductEnsemble, SepApprox, SepTarget,
};

const UNITARY_TOL: f64 = 1e-10;
/// Slack allowed above the achievability bound, in bits.
pub const UPPER_SLACK_BITS: f64 = 1e-3;
/// Eigenvalues closer than this are treated as one eigenspace when pinching.
const PINCH_TOL: f64 = 1e-9;

/// Coordinated local unitaries: entry `i` applies `unitaries[k][i]` on side `k`.
#[derive(Clone, Debug)]
pub struct UnitaryEnsemble {
    parties: SubsystemDims,
    /// Party indices making up each side, in tensor order.
    sides: Vec<Vec<usize>>,
    unitaries: Vec<Vec<ComplexMatrix>>,
}

impl UnitaryEnsemble {
    pub fn new(parties: SubsystemDims, sides: Vec<Vec<String>>, unitaries: Vec<Vec<ComplexMatrix>>) -> Result<Self> {
        if sides.len() != unitaries.len() || sides.is_empty() {
            return Err(Error::BadParameter(format!(
                "{} sides but {} unitary lists",
                sides.len(),
                unitaries.len()
            )));
        }
        let side_idx: Vec<Vec<usize>> = sides.iter().map(|s| parties.indices_of(s)).collect::<Result<_>>()?;
        let mut all: Vec<usize> = side_idx.iter().flatten().copied().collect();
        all.sort_unstable();
        if all != (0..parties.len()).collect::<Vec<_>>() {
            return Err(Error::BadPartition("sides must partition the parties".into()));
        }
        let m = unitaries[0].len();
        if m == 0 {
            return Err(Error::BadParameter("an ensemble needs at least one element".into()));
        }
        let dims = parties.dims();
        for (k, list) in unitaries.iter().enumerate() {
            if list.len() != m {
                return Err(Error::BadParameter(format!("side {k} has {} unitaries, expected {m}", list.len())));
            }
            let d: usize = side_idx[k].iter().map(|&i| dims[i]).product();
            for (i, u) in list.iter().enumerate() {
                if u.rows() != d || u.cols() != d {
                    return Err(Error::DimMismatch(format!("side {k}, entry {i}: expected {d}×{d}")));
                }
                let dev = u.matmul_adjoint(u).max_abs_diff(&ComplexMatrix::identity(d));
                if dev > UNITARY_TOL {
                    return Err(Error::BadParameter(format!("side {k}, entry {i} is not unitary ({dev:e})")));
                }
            }
        }
        Ok(Self {
            parties,
            sides: side_idx,
            unitaries,
        })
    }

    pub fn m(&self) -> usize {
        self.unitaries[0].len()
    }

    pub fn parties(&self) -> &SubsystemDims {
        &self.parties
    }

    pub fn num_sides(&self) -> usize {
        self.sides.len()
    }

    pub fn unitary(&self, side: usize, i: usize) -> &ComplexMatrix {
        &self.unitaries[side][i]
    }

    fn side_order(&self) -> Vec<usize> {
        self.sides.iter().flatten().copied().collect()
    }

    fn side_dims(&self) -> Vec<usize> {
        let dims = self.parties.dims();
        self.sides.iter().map(|s| s.iter().map(|&i| dims[i]).product()).collect()
    }

    fn side_label(&self, k: usize) -> &str {
        &self.parties.parties()[self.sides[k][0]].label
    }

    /// `U^i_1 ⊗ … ⊗ U^i_k (·) (…)†` on an operator in side order.
    fn conjugate(&self, m: &ComplexMatrix, i: usize) -> ComplexMatrix {
        let dims = self.side_dims();
        let mut out = m.clone();
        let total = m.rows();
        let mut pre = 1;
        for (k, &d) in dims.iter().enumerate() {
            let post = total / (pre * d);
            out = conjugate_factor(&out, pre, d, post, &self.unitaries[k][i]);
            pre *= d;
        }
        out
    }
}

/// `(I ⊗ U ⊗ I) m (I ⊗ U ⊗ I)†` with `U` on the middle factor of `pre × d × post`.
fn conjugate_factor(m: &ComplexMatrix, pre: usize, d: usize, post: usize, u: &ComplexMatrix) -> ComplexMatrix {
    let n = m.rows();
    let mut left = ComplexMatrix::zeros(n, n);
    for a in 0..pre {
        for b in 0..post {
            for i in 0..d {
                let row = (a * d + i) * post + b;
                for j in 0..d {
                    let uij = u[(i, j)];
                    if uij == ZERO {
                        continue;
                    }
                    let src = (a * d + j) * post + b;
                    let (dst_row, src_row) = (row * n, src * n);
                    let data = m.data();
                    let out = left.data_mut();
                    for c in 0..n {
                        out[dst_row + c] += uij * data[src_row + c];
                    }
                }
            }
        }
    }
    let mut out = ComplexMatrix::zeros(n, n);
    let ud = u.conj();
    for r in 0..n {
        let lrow = &left.data()[r * n..(r + 1) * n];
        let orow = &mut out.data_mut()[r * n..(r + 1) * n];
        for a in 0..pre {
            for b in 0..post {
                for i in 0..d {
                    let mut acc = ZERO;
                    for j in 0..d {
                        let v = ud[(i, j)];
                        if v != ZERO {
                            acc += lrow[(a * d + j) * post + b] * v;
                        }
                    }
                    orow[(a * d + i) * post + b] = acc;
                }
            }
        }
    }
    out
}

fn inverse_order(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (p, &o) in order.iter().enumerate() {
        inv[o] = p;
    }
    inv
}

fn check_parties(ens: &UnitaryEnsemble, s: &DensityOperator) -> Result<()> {
    if s.dims() != ens.parties() {
        return Err(Error::DimMismatch(format!(
            "ensemble acts on {:?} but the state has {:?}",
            ens.parties().labels(),
            s.dims().labels()
        )));
    }
    Ok(())
}

/// `Λ^M(s) = (1/M) Σ_i U_i s U_i†`.
pub fn apply_randomizing_map(ens: &UnitaryEnsemble, s: &DensityOperator) -> Result<DensityOperator> {
    check_parties(ens, s)?;
    let order = ens.side_order();
    let grouped = permute_parties(s, &order)?;
    let m = ens.m();
    let mut acc = ComplexMatrix::zeros(s.dim(), s.dim());
    for i in 0..m {
        acc += &ens.conjugate(grouped.op(), i);
    }
    let mixed = DensityOperator::from_parts_unchecked(
        acc.scale_real(1.0 / m as f64),
        grouped.dims().clone(),
        s.is_subnormalized(),
    );
    permute_parties(&mixed, &inverse_order(&order))
}

/// Parties of `copies` copies of `dims`, laid out copy by copy.
pub fn copies_dims(dims: &SubsystemDims, copies: usize) -> SubsystemDims {
    let mut out = dims.clone();
    for _ in 1..copies {
        out = out.concat(dims);
    }
    out
}

/// Permutation matrix swapping factors `0` and `i` of `m` factors of dimension `d`.
fn register_swap(d: usize, m: usize, i: usize) -> ComplexMatrix {
    let n = d.pow(m as u32);
    let mut u = ComplexMatrix::zeros(n, n);
    for col in 0..n {
        let mut digits = vec![0; m];
        let mut rem = col;
        for k in (0..m).rev() {
            digits[k] = rem % d;
            rem /= d;
        }
        digits.swap(0, i);
        let row = digits.iter().fold(0, |acc, &x| acc * d + x);
        u[(row, col)] = C64::new(1.0, 0.0);
    }
    u
}

/// Entry `i` swaps register `0` with register `i` on every side at once.
pub fn build_swap_ensemble(m: usize, party_dims: &SubsystemDims) -> Result<UnitaryEnsemble> {
    if m == 0 {
        return Err(Error::BadParameter("M must be at least 1".into()));
    }
    let k = party_dims.len();
    let local: usize = party_dims.total();
    guard_dim(local.checked_pow(m as u32).unwrap_or(usize::MAX))?;
    let parties = copies_dims(party_dims, m);
    let labels = parties.labels();
    let dims = party_dims.dims();
    let sides: Vec<Vec<String>> = (0..k)
        .map(|p| (0..m).map(|c| labels[c * k + p].to_string()).collect())
        .collect();
    let unitaries: Vec<Vec<ComplexMatrix>> = (0..k)
        .map(|p| (0..m).map(|i| register_swap(dims[p], m, i)).collect())
        .collect();
    UnitaryEnsemble::new(parties, sides, unitaries)
}

/// Label of the classical register attached to a side.
fn register_label(side: &str) -> String {
    format!("X_{side}")
}

/// Controlled dilation: `s ⊗ γ` with `γ = (1/M) Σ_i |i…i⟩⟨i…i|` on one
/// register per side, conjugated by `Σ_x U^x ⊗ |x⟩⟨x|` on every side.
pub fn gamma_dilation(ens: &UnitaryEnsemble, s: &DensityOperator) -> Result<DensityOperator> {
    check_parties(ens, s)?;
    let m = ens.m();
    let k = ens.num_sides();
    let n = s.dim();
    let xdim = m.checked_pow(k as u32).unwrap_or(usize::MAX);
    guard_dim(n.saturating_mul(xdim))?;
    let order = ens.side_order();
    let inv = inverse_order(&order);
    let grouped = permute_parties(s, &order)?;
    let total = n * xdim;
    let mut out = ComplexMatrix::zeros(total, total);
    // γ is diagonal with weight 1/M on x = (i, …, i)
    let diag_index = |i: usize| (0..k).fold(0, |acc, _| acc * m + i);
    for i in 0..m {
        let x = diag_index(i);
        let block = ens.conjugate(grouped.op(), i).scale_real(1.0 / m as f64);
        let back = permute_matrix(&block, &grouped.dims().dims(), &inv);
        for r in 0..n {
            for c in 0..n {
                out[(r * xdim + x, c * xdim + x)] = back[(r, c)];
            }
        }
    }
    let mut xparties = Vec::new();
    for side in 0..k {
        xparties.push((register_label(ens.side_label(side)), m));
    }
    let dims = s.dims().concat(&SubsystemDims::new(xparties)?);
    Ok(DensityOperator::from_parts_unchecked(out, dims, s.is_subnormalized()))
}

fn permute_matrix(m: &ComplexMatrix, dims: &[usize], order: &[usize]) -> ComplexMatrix {
    let table = crate::qmatrix::ops::permutation_table(dims, order);
    let n = m.rows();
    ComplexMatrix::from_fn(n, n, |i, j| m[(table[i], table[j])])
}

/// Checks `σ_ext ≤ σ_marginal ⊗ Π = M σ_marginal ⊗ γ` for an extension that is
/// classical on its trailing `X` registers and supported where they agree.
/// Returns `(holds, min eigenvalue of the difference)`.
pub fn check_operator_inequality(
    sigma_ext: &DensityOperator,
    sigma_marginal: &DensityOperator,
    m: usize,
) -> Result<(bool, f64)> {
    let base = sigma_marginal.dims().len();
    let ext = sigma_ext.dims();
    if ext.len() <= base || ext.dims()[..base] != sigma_marginal.dims().dims()[..] {
        return Err(Error::DimMismatch(
            "the extension must carry the marginal's parties followed by classical registers".into(),
        ));
    }
    let xs = &ext.dims()[base..];
    if xs.iter().any(|&d| d != m) {
        return Err(Error::DimMismatch(format!("classical registers must have dimension {m}, got {xs:?}")));
    }
    let n = sigma_marginal.dim();
    let xdim: usize = xs.iter().product();
    let k = xs.len();
    let on_diagonal = |x: usize| {
        let mut digits = Vec::with_capacity(k);
        let mut rem = x;
        for _ in 0..k {
            digits.push(rem % m);
            rem /= m;
        }
        digits.iter().all(|&d| d == digits[0])
    };
    let op = sigma_ext.op();
    let mut leak = 0.0f64;
    for r in 0..n * xdim {
        for c in 0..n * xdim {
            let (xr, xc) = (r % xdim, c % xdim);
            if xr != xc || !on_diagonal(xr) {
                leak = leak.max(op[(r, c)].norm());
            }
        }
    }
    if leak > 1e-9 {
        return Err(Error::PreconditionViolated(format!(
            "extension is not classical on the maximally correlated subspace (entry {leak:e})"
        )));
    }
    let mut slack = 0.0f64;
    let idx: Vec<usize> = (0..n).collect();
    for x in (0..xdim).filter(|&x| on_diagonal(x)) {
        let rows: Vec<usize> = idx.iter().map(|r| r * xdim + x).collect();
        let block = op.select(&rows, &rows);
        let diff = sigma_marginal.op() - &block;
        slack = slack.min(*eigvalsh(&diff).last().expect("nonempty"));
    }
    Ok((slack >= -TOL_PSD, slack))
}

/// How a catalyst's separability is established.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Certification {
    /// An explicit product ensemble.
    Ensemble,
    /// PPT in dimensions where PPT implies separable.
    PptExact,
    /// PPT only; separability is not implied.
    PptRelaxation,
}

impl Certification {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ensemble => "ensemble",
            Self::PptExact => "ppt_exact",
            Self::PptRelaxation => "ppt_relaxation",
        }
    }
}

/// A separable state offered as catalyst, together with its certificate.
#[derive(Clone, Debug)]
pub struct Catalyst {
    pub id: String,
    pub state: DensityOperator,
    pub ensemble: Option<ProductEnsemble>,
    pub certification: Certification,
}

fn target_for(dims: &SubsystemDims) -> Result<SepTarget> {
    match dims.len() {
        0 | 1 => Err(Error::BadPartition("a protocol needs two or more parties".into())),
        2 => Ok(SepTarget::Cut(Bipartition::first_vs_rest(dims))),
        _ => Ok(SepTarget::Full),
    }
}

fn all_cuts(dims: &SubsystemDims) -> Vec<Vec<usize>> {
    let k = dims.len();
    (1..(1usize << (k - 1)))
        .map(|mask| (1..k).filter(|i| mask & (1 << (i - 1)) != 0).collect())
        .collect()
}

fn min_pt(op: &ComplexMatrix, dims: &SubsystemDims) -> f64 {
    let d = dims.dims();
    all_cuts(dims)
        .iter()
        .map(|c| *eigvalsh(&partial_transpose_matrix(op, &d, c)).last().expect("nonempty"))
        .fold(f64::INFINITY, f64::min)
}

impl Catalyst {
    /// Certifies `state` by the PPT test across every bipartition.
    pub fn from_state(id: impl Into<String>, state: DensityOperator) -> Result<Self> {
        let id = id.into();
        if state.is_subnormalized() {
            return Err(Error::Subnormalized);
        }
        target_for(state.dims())?;
        let min = min_pt(state.op(), state.dims());
        if min < -TOL_PSD {
            return Err(Error::PreconditionViolated(format!(
                "catalyst `{id}` is not PPT (partial transpose eigenvalue {min:e})"
            )));
        }
        let exact = state.dims().len() == 2 && ppt_is_exact(state.dims(), &SepTarget::Full);
        Ok(Self {
            id,
            state,
            ensemble: None,
            certification: if exact {
                Certification::PptExact
            } else {
                Certification::PptRelaxation
            },
        })
    }

    pub fn from_ensemble(id: impl Into<String>, ens: ProductEnsemble) -> Result<Self> {
        let state = ens.realize();
        target_for(state.dims())?;
        Ok(Self {
            id: id.into(),
            state,
            ensemble: Some(ens),
            certification: Certification::Ensemble,
        })
    }

    /// Pinches the catalyst onto the eigenspaces of `rho` when the result keeps
    /// its certificate. This never increases `D_max(ρ‖σ)` and makes the pair
    /// commute.
    pub fn pinched_for(&self, rho: &DensityOperator) -> Self {
        let e = eigh(rho.op());
        let n = e.values.len();
        let mut out = ComplexMatrix::zeros(n, n);
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && (e.values[start] - e.values[end]).abs() <= PINCH_TOL {
                end += 1;
            }
            let cols: Vec<usize> = (start..end).collect();
            let rows: Vec<usize> = (0..n).collect();
            let v = e.vectors.select(&rows, &cols);
            let proj = v.matmul_adjoint(&v);
            out += &proj.matmul(self.state.op()).matmul(&proj);
            start = end;
        }
        let Ok(pinched) = DensityOperator::with_repair(out.hermitian_part(), self.state.dims().clone()) else {
            return self.clone();
        };
        match Catalyst::from_state(self.id.clone(), pinched) {
            Ok(c) if c.certification == Certification::PptExact => c,
            _ => self.clone(),
        }
    }
}

/// Spectral product ensemble of `⊗_p s_p`.
fn product_ensemble(marginals: &[DensityOperator], parties: &SubsystemDims) -> Result<ProductEnsemble> {
    let mut points = vec![EnsemblePoint {
        weight: 1.0,
        states: Vec::new(),
    }];
    for s in marginals {
        let e = eigh(s.op());
        let mut next = Vec::new();
        for pt in &points {
            for (j, &w) in e.values.iter().enumerate() {
                if w > 1e-15 {
                    let mut states = pt.states.clone();
                    states.push(e.vector(j));
                    next.push(EnsemblePoint {
                        weight: pt.weight * w,
                        states,
                    });
                }
            }
        }
        points = next;
    }
    let total: f64 = points.iter().map(|p| p.weight).sum();
    for p in &mut points {
        p.weight /= total;
    }
    ProductEnsemble::new(parties.clone(), points)
}

/// Result of one disentangling run.
#[derive(Clone, Debug, Serialize)]
pub struct ProtocolReport {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "log2_M")]
    pub log2_m: f64,
    pub eps_target: f64,
    pub delta: f64,
    /// `P(Λ^M(ρ ⊗ σ^{⊗(M-1)}), σ^{⊗M})`, an upper bound on the distance to
    /// the separable set.
    pub achieved_distance: f64,
    pub approx_mode: Certification,
    pub lower_bound_bits: f64,
    pub upper_bound_bits: f64,
    pub catalyst_id: String,
    pub pass: bool,
    /// Register count from the convex split budget.
    #[serde(rename = "budget_M")]
    pub budget_m: usize,
}

impl ProtocolReport {
    pub const CSV_HEADER: &'static str =
        "state_id,eps,delta,M,log2_M,lower_bits,upper_bits,achieved_distance,approx_mode,pass";
}

/// One-shot bounds on the disentangling cost of `rho`.
#[derive(Clone, Copy, Debug)]
pub struct CostBounds {
    /// `E_max^ε`.
    pub lower_bits: f64,
    /// `E_max^{ε-δ} + log2(1/δ) + 1`.
    pub upper_bits: f64,
}

fn check_eps_delta(eps: f64, delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= eps && eps < 1.0) {
        return Err(Error::BadParameter(format!("need 1 > ε ≥ δ > 0; got ε={eps}, δ={delta}")));
    }
    Ok(())
}

/// Theorem bounds computed in PPT mode.
pub fn cost_bounds(rho: &DensityOperator, eps: f64, delta: f64) -> Result<CostBounds> {
    check_eps_delta(eps, delta)?;
    let target = target_for(rho.dims())?;
    let lower = e_max_smooth(rho, &target, eps, &SepApprox::ppt())?;
    let inner = e_max_smooth(rho, &target, eps - delta, &SepApprox::ppt())?;
    Ok(CostBounds {
        lower_bits: lower.bits,
        upper_bits: inner.bits + (1.0 / delta).log2() + 1.0,
    })
}

/// Smallest `M ≤ m_max` whose output is within `eps` of `σ^{⊗M}`; otherwise
/// `m_max` and its distance.
fn smallest_m(rho: &DensityOperator, sigma: &DensityOperator, eps: f64, m_max: usize) -> Result<(usize, f64)> {
    let mut last = f64::INFINITY;
    for m in 1..=m_max {
        last = split_distance(rho, sigma, m)?;
        if last <= eps {
            return Ok((m, last));
        }
    }
    Ok((m_max, last))
}

fn check_catalyst(rho: &DensityOperator, cat: &Catalyst) -> Result<()> {
    if rho.is_subnormalized() {
        return Err(Error::Subnormalized);
    }
    if rho.dims().dims() != cat.state.dims().dims() {
        return Err(Error::DimMismatch(format!(
            "state dims {:?} but catalyst dims {:?}",
            rho.dims().dims(),
            cat.state.dims().dims()
        )));
    }
    Ok(())
}

fn run_with_bounds(rho: &DensityOperator, cat: &Catalyst, eps: f64, delta: f64, b: CostBounds) -> Result<ProtocolReport> {
    check_catalyst(rho, cat)?;
    let budget = register_budget(rho, &cat.state, eps - delta, delta / 2.0)?;
    let (m, achieved) = smallest_m(rho, &cat.state, eps, budget.n)?;
    let log2_m = (m as f64).log2();
    let pass = achieved <= eps
        && b.lower_bits <= log2_m + 1e-9
        && log2_m <= b.upper_bits + UPPER_SLACK_BITS
        && cat.certification != Certification::PptRelaxation;
    Ok(ProtocolReport {
        m,
        log2_m,
        eps_target: eps,
        delta,
        achieved_distance: achieved,
        approx_mode: cat.certification,
        lower_bound_bits: b.lower_bits,
        upper_bound_bits: b.upper_bits,
        catalyst_id: cat.id.clone(),
        pass,
        budget_m: budget.n,
    })
}

/// Runs the swap protocol with catalyst `σ^{⊗(M-1)}`, using the smallest `M`
/// up to the convex split budget whose output is certified within `eps`.
pub fn run_disentangling(rho: &DensityOperator, catalyst: &Catalyst, eps: f64, delta: f64) -> Result<ProtocolReport> {
    check_catalyst(rho, catalyst)?;
    let b = cost_bounds(rho, eps, delta)?;
    run_with_bounds(rho, catalyst, eps, delta, b)
}

/// The natural separable anchors for `rho`: the nearest PPT state, the PPT
/// relative-entropy optimizer, the smooth max-entropy optimizer, the
/// maximally mixed state and the product-basis dephasing of `rho`.
pub fn default_candidates(rho: &DensityOperator, eps: f64, delta: f64) -> Result<Vec<Catalyst>> {
    check_eps_delta(eps, delta)?;
    let target = target_for(rho.dims())?;
    let mut out = Vec::new();
    let nearest = nearest_sep_distance(rho, &target, &SepApprox::ppt())?;
    out.push(Catalyst::from_state("nearest_sep", nearest.witness)?);
    if let Some(c) = ree(rho, &target, &SepApprox::ppt(), 1e-8)?.certificate {
        if let Ok(cat) = Catalyst::from_state("ree_ppt", c) {
            out.push(cat);
        }
    }
    if let Some(c) = e_max_smooth(rho, &target, eps - delta, &SepApprox::ppt())?.certificate {
        if let Ok(cat) = Catalyst::from_state("emax_ppt", c) {
            out.push(cat);
        }
    }
    out.push(Catalyst::from_ensemble(
        "mixed",
        product_ensemble(
            &rho.dims().parties().iter().map(|p| DensityOperator::maximally_mixed(SubsystemDims::single(&p.label, p.dim).expect("valid"))).collect::<Vec<_>>(),
            rho.dims(),
        )?,
    )?);
    out.push(Catalyst::from_ensemble("dephased", dephased_ensemble(rho)?)?);
    Ok(out.into_iter().map(|c| c.pinched_for(rho)).collect())
}

/// `Σ_x ⟨x|ρ|x⟩ |x⟩⟨x|` over the product basis, as an ensemble.
fn dephased_ensemble(rho: &DensityOperator) -> Result<ProductEnsemble> {
    let dims = rho.dims().dims();
    let mut points = Vec::new();
    for x in 0..rho.dim() {
        let w = rho.op()[(x, x)].re;
        if w <= 1e-15 {
            continue;
        }
        let mut rem = x;
        let mut digits = vec![0; dims.len()];
        for p in (0..dims.len()).rev() {
            digits[p] = rem % dims[p];
            rem /= dims[p];
        }
        let states = digits
            .iter()
            .zip(&dims)
            .map(|(&k, &d)| {
                let mut v = vec![ZERO; d];
                v[k] = C64::new(1.0, 0.0);
                v
            })
            .collect();
        points.push(EnsemblePoint { weight: w, states });
    }
    let total: f64 = points.iter().map(|p| p.weight).sum();
    for p in &mut points {
        p.weight /= total;
    }
    ProductEnsemble::new(rho.dims().clone(), points)
}

/// Best report over the candidates: the smallest certified `M`, ties going to
/// the earlier candidate. Without any passing candidate, the closest output.
pub fn one_shot_cost_search(
    rho: &DensityOperator,
    eps: f64,
    delta: f64,
    candidates: &[Catalyst],
) -> Result<ProtocolReport> {
    if candidates.is_empty() {
        return Err(Error::BadParameter("no catalyst candidates".into()));
    }
    let b = cost_bounds(rho, eps, delta)?;
    let mut best: Option<ProtocolReport> = None;
    let mut first_err = None;
    for cat in candidates {
        match run_with_bounds(rho, cat, eps, delta, b) {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(cur) => match (r.pass, cur.pass) {
                        (true, false) => true,
                        (true, true) => r.m < cur.m,
                        (false, false) => r.achieved_distance < cur.achieved_distance,
                        (false, true) => false,
                    },
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(r), _) => Ok(r),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("nonempty candidate list"),
    }
}

/// Outcome of implementing the randomizing map with the classical ancilla
/// and discarding the ancilla registers.
#[derive(Clone, Debug, Serialize)]
pub struct DecouplingReport {
    #[serde(rename = "M")]
    pub m: usize,
    /// Total size of the discarded registers, `Σ_sides log2 M`.
    pub discarded_bits: f64,
    /// Distance of the residual state to the target.
    pub distance: f64,
    pub eps_target: f64,
    pub catalyst_id: String,
    #[serde(skip)]
    pub residual: Option<DensityOperator>,
}

fn decouple(rho: &DensityOperator, cat: &Catalyst, eps: f64, delta: f64) -> Result<DecouplingReport> {
    check_eps_delta(eps, delta)?;
    check_catalyst(rho, cat)?;
    let budget = register_budget(rho, &cat.state, eps - delta, delta / 2.0)?;
    let (m, distance) = smallest_m(rho, &cat.state, eps, budget.n)?;
    let sides = rho.dims().len();
    let residual = residual_state(rho, &cat.state, m)?;
    Ok(DecouplingReport {
        m,
        discarded_bits: sides as f64 * (m as f64).log2(),
        distance,
        eps_target: eps,
        catalyst_id: cat.id.clone(),
        residual,
    })
}

/// The state left after discarding the ancillas, when it fits in memory.
fn residual_state(rho: &DensityOperator, sigma: &DensityOperator, m: usize) -> Result<Option<DensityOperator>> {
    let n = rho.dim().checked_pow(m as u32).unwrap_or(usize::MAX);
    let sides = rho.dims().len() as u32;
    let xdim = m.checked_pow(sides).unwrap_or(usize::MAX);
    if n.saturating_mul(xdim) <= crate::qmatrix::DENSE_LIMIT {
        let ens = build_swap_ensemble(m, rho.dims())?;
        let input = catalyst_input(rho, sigma, m)?;
        let dilated = gamma_dilation(&ens, &input)?;
        let keep: Vec<usize> = (0..ens.parties().len()).collect();
        let op = partial_trace_matrix(dilated.op(), &dilated.dims().dims(), &keep);
        return Ok(Some(DensityOperator::from_parts_unchecked(op, input.dims().clone(), false)));
    }
    if n <= crate::qmatrix::DENSE_LIMIT {
        return Ok(Some(split_state(rho, sigma, m)?));
    }
    Ok(None)
}

/// `ρ ⊗ σ^{⊗(M-1)}` with parties laid out copy by copy.
pub fn catalyst_input(rho: &DensityOperator, sigma: &DensityOperator, m: usize) -> Result<DensityOperator> {
    guard_dim(rho.dim().checked_pow(m as u32).unwrap_or(usize::MAX))?;
    let mut s = rho.clone();
    for _ in 1..m {
        s = tensor_product(&s, sigma);
    }
    Ok(s)
}

/// Decoupling to a separable state with a separable catalyst.
pub fn decouple_to_separable(
    rho: &DensityOperator,
    catalyst: &Catalyst,
    eps: f64,
    delta: f64,
) -> Result<DecouplingReport> {
    decouple(rho, catalyst, eps, delta)
}

/// Decoupling to the product of the marginals of `rho`.
pub fn decouple_to_product(rho: &DensityOperator, eps: f64, delta: f64) -> Result<DecouplingReport> {
    let marginals: Vec<DensityOperator> = (0..rho.dims().len())
        .map(|p| {
            let label = rho.dims().parties()[p].label.clone();
            crate::qmatrix::partial_trace(rho, &[label])
        })
        .collect::<Result<_>>()?;
    let ens = product_ensemble(&marginals, rho.dims())?;
    let mut cat = Catalyst::from_ensemble("product_of_marginals", ens)?;
    // the spectral ensemble reproduces the marginals up to rounding; use them exactly
    if rho.dims().len() == 2 {
        cat.state = product_of_marginals(rho, &Bipartition::first_vs_rest(rho.dims()))?;
    }
    decouple(rho, &cat, eps, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::{make_state, StateFamily};

    #[test]
    fn swap_ensemble_shapes() {
        let dims = SubsystemDims::bipartite(2, 2);
        let e1 = build_swap_ensemble(1, &dims).unwrap();
        assert_eq!(e1.m(), 1);
        assert_eq!(e1.unitary(0, 0), &ComplexMatrix::identity(2));
        let e3 = build_swap_ensemble(3, &dims).unwrap();
        for side in 0..2 {
            for i in 0..3 {
                let u = e3.unitary(side, i);
                assert_eq!(u.rows(), 8);
                assert!(u.matmul(u).max_abs_diff(&ComplexMatrix::identity(8)) < 1e-15);
            }
        }
    }

    #[test]
    fn swap_map_is_convex_split() {
        let bell = make_state(&StateFamily::Bell).unwrap();
        let sigma = crate::convexsplit::bell_diagonal_separable();
        for m in 1..=3 {
            let ens = build_swap_ensemble(m, bell.dims()).unwrap();
            let input = catalyst_input(&bell, &sigma, m).unwrap();
            let out = apply_randomizing_map(&ens, &input).unwrap();
            let tau = split_state(&bell, &sigma, m).unwrap();
            assert!(out.op().max_abs_diff(tau.op()) < 1e-12, "m={m}");
        }
    }

    #[test]
    fn dilation_traces_to_map() {
        let bell = make_state(&StateFamily::Bell).unwrap();
        let ens = build_swap_ensemble(2, bell.dims()).unwrap();
        let input = catalyst_input(&bell, &crate::convexsplit::bell_diagonal_separable(), 2).unwrap();
        let dil = gamma_dilation(&ens, &input).unwrap();
        let keep: Vec<usize> = (0..4).collect();
        let traced = partial_trace_matrix(dil.op(), &dil.dims().dims(), &keep);
        let direct = apply_randomizing_map(&ens, &input).unwrap();
        assert!(traced.max_abs_diff(direct.op()) < 1e-12);
    }

    #[test]
    fn operator_inequality_cases() {
        let bell = make_state(&StateFamily::Bell).unwrap();
        let gamma = make_state(&StateFamily::MaxCorr(3)).unwrap();
        let ext = tensor_product(&bell, &gamma);
        let (holds, slack) = check_operator_inequality(&ext, &bell, 3).unwrap();
        assert!(holds && slack.abs() < 1e-12);
        let mixed = DensityOperator::maximally_mixed(SubsystemDims::bipartite(3, 3));
        let bad = tensor_product(&bell, &mixed);
        assert!(matches!(
            check_operator_inequality(&bad, &bell, 3),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn separable_input_needs_one_register() {
        let mc = make_state(&StateFamily::MaxCorr(2)).unwrap();
        let cands = default_candidates(&mc, 0.1, 0.05).unwrap();
        let r = one_shot_cost_search(&mc, 0.1, 0.05, &cands).unwrap();
        assert_eq!(r.m, 1);
        assert!(r.pass);
    }
}
