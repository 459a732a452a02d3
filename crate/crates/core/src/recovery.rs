//! Local recovery of tripartite states: Choi channels, the Petz map, the
//! relative entropy of recovery and the recovery-degrading convex split.

use serde::Serialize;

use crate::convexsplit::{register_budget, split_distance};
use crate::divergences::{
    conditional_mutual_information, relative_entropy_ops, support_basis, DivergenceValue, SolveStatus,
};
use crate::error::{Error, Result};
use crate::protocol::{build_swap_ensemble, check_operator_inequality, copies_dims, gamma_dilation};
use crate::qmatrix::{inverse_sqrt_on_support, support_projector};
use crate::qmatrix::ops::partial_trace_matrix;
use crate::qmatrix::{
    eigh, eigvalsh, matrix_fn, partial_trace, permute_parties, purified_distance, tensor_power, ComplexMatrix,
    DensityOperator, MatrixFn, SubsystemDims, C64, TOL_PSD, ZERO,
};
use crate::solver::relent::{dense_of, sparse_of, traceless_basis, Barrier, RelEntProblem, SparseHerm};
use crate::solver::sdp::Sdp;

/// Weight of the fully depolarizing channel mixed into the optimizer's
/// starting point so that it is strictly feasible.
const START_MIXING: f64 = 1e-4;

/// A channel in Choi form `J = Σ_ij |i⟩⟨j| ⊗ R(|i⟩⟨j|)`, inputs first.
#[derive(Clone, Debug)]
pub struct ChannelChoi {
    choi: ComplexMatrix,
    in_dims: SubsystemDims,
    out_dims: SubsystemDims,
}

impl ChannelChoi {
    pub fn new(choi: ComplexMatrix, in_dims: SubsystemDims, out_dims: SubsystemDims) -> Result<Self> {
        let (din, dout) = (in_dims.total(), out_dims.total());
        if choi.rows() != din * dout || !choi.is_square() {
            return Err(Error::DimMismatch(format!(
                "Choi matrix is {}×{}, expected {}",
                choi.rows(),
                choi.cols(),
                din * dout
            )));
        }
        let dev = choi.hermitian_deviation();
        if dev > crate::qmatrix::TOL_HERM {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let choi = choi.hermitian_part();
        let min = eigvalsh(&choi).last().copied().unwrap_or(0.0);
        if min < -TOL_PSD {
            return Err(Error::NegativeEigenvalue { value: min });
        }
        let tp = partial_trace_matrix(&choi, &[din, dout], &[0]).max_abs_diff(&ComplexMatrix::identity(din));
        if tp > 1e-9 {
            return Err(Error::InvalidState(format!("channel is not trace preserving (deviation {tp:e})")));
        }
        Ok(Self {
            choi,
            in_dims,
            out_dims,
        })
    }

    pub fn identity(dims: SubsystemDims) -> Self {
        let d = dims.total();
        let mut choi = ComplexMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                choi[(i * d + i, j * d + j)] = C64::new(1.0, 0.0);
            }
        }
        Self {
            choi,
            in_dims: dims.clone(),
            out_dims: dims,
        }
    }

    /// `X ↦ Tr(X) ω`.
    pub fn replacer(in_dims: SubsystemDims, omega: &DensityOperator) -> Self {
        let din = in_dims.total();
        Self {
            choi: ComplexMatrix::identity(din).kron(omega.op()),
            in_dims,
            out_dims: omega.dims().clone(),
        }
    }

    pub fn choi(&self) -> &ComplexMatrix {
        &self.choi
    }

    pub fn in_dims(&self) -> &SubsystemDims {
        &self.in_dims
    }

    pub fn out_dims(&self) -> &SubsystemDims {
        &self.out_dims
    }
}

/// `(I ⊗ R)(s)` with `R` acting on the parties `on`. The output lists the
/// untouched parties in their original order, followed by the channel's
/// output parties.
pub fn apply_channel<S: AsRef<str>>(ch: &ChannelChoi, s: &DensityOperator, on: &[S]) -> Result<DensityOperator> {
    let idx = s.dims().indices_of(on)?;
    let dims = s.dims().dims();
    let on_dims: Vec<usize> = idx.iter().map(|&i| dims[i]).collect();
    if on_dims != ch.in_dims.dims() {
        return Err(Error::DimMismatch(format!(
            "channel input dims {:?} but parties {:?} have dims {on_dims:?}",
            ch.in_dims.dims(),
            on.iter().map(AsRef::as_ref).collect::<Vec<_>>()
        )));
    }
    let rest: Vec<usize> = (0..dims.len()).filter(|i| !idx.contains(i)).collect();
    let order: Vec<usize> = rest.iter().chain(&idx).copied().collect();
    let p = permute_parties(s, &order)?;
    let (din, dout) = (ch.in_dims.total(), ch.out_dims.total());
    let nr = s.dim() / din;
    let j = &ch.choi;
    let mut out = ComplexMatrix::zeros(nr * dout, nr * dout);
    for r in 0..nr {
        for r2 in 0..nr {
            for i in 0..din {
                for k in 0..din {
                    let v = p.op()[(r * din + i, r2 * din + k)];
                    if v == ZERO {
                        continue;
                    }
                    for o in 0..dout {
                        for o2 in 0..dout {
                            out[(r * dout + o, r2 * dout + o2)] += v * j[(i * dout + o, k * dout + o2)];
                        }
                    }
                }
            }
        }
    }
    let out_dims = s.dims().restrict(&rest).concat(&ch.out_dims);
    DensityOperator::with_repair(out.hermitian_part(), out_dims)
}

fn labels_of<S: AsRef<str>>(v: &[S]) -> Vec<String> {
    v.iter().map(|s| s.as_ref().to_string()).collect()
}

/// Marginal on `labels`, with parties in the order given.
fn marginal_in_order(s: &DensityOperator, labels: &[String]) -> Result<DensityOperator> {
    let kept = partial_trace(s, labels)?;
    let order = labels.iter().map(|l| kept.dims().index_of(l)).collect::<Result<Vec<_>>>()?;
    permute_parties(&kept, &order)
}

/// Petz recovery `C → AC` built from the marginals of `s`:
/// `X ↦ ρ_AC^{1/2} (I_A ⊗ ρ_C^{-1/2} X ρ_C^{-1/2}) ρ_AC^{1/2}` on the support
/// of `ρ_C`, and trace-and-replace with `ρ_AC` off it.
pub fn petz_map<S: AsRef<str>>(s: &DensityOperator, from: &[S], rebuild: &[S]) -> Result<ChannelChoi> {
    let c = labels_of(from);
    let a = labels_of(rebuild);
    if c.is_empty() || a.is_empty() {
        return Err(Error::BadPartition("Petz map needs nonempty conditioning and rebuilt parties".into()));
    }
    let ac_labels: Vec<String> = a.iter().chain(&c).cloned().collect();
    let rho_ac = marginal_in_order(s, &ac_labels)?;
    let rho_c = marginal_in_order(s, &c)?;
    let (da, dc) = (rho_ac.dim() / rho_c.dim(), rho_c.dim());
    let sq = matrix_fn(rho_ac.op(), MatrixFn::Sqrt, true)?;
    let ic = inverse_sqrt_on_support(rho_c.op());
    let off = &ComplexMatrix::identity(dc) - &support_projector(rho_c.op());
    let omega = rho_ac.op().scale_real(1.0 / rho_ac.trace());
    let dout = da * dc;
    let mut choi = ComplexMatrix::zeros(dc * dout, dc * dout);
    for i in 0..dc {
        for j in 0..dc {
            let x = ComplexMatrix::from_fn(dc, dc, |p, q| ic[(p, i)] * ic[(j, q)]);
            let mut block = sq.matmul(&ComplexMatrix::identity(da).kron(&x)).matmul(&sq);
            block.axpy(off[(j, i)], &omega);
            for o in 0..dout {
                for o2 in 0..dout {
                    choi[(i * dout + o, j * dout + o2)] = block[(o, o2)];
                }
            }
        }
    }
    ChannelChoi::new(choi, rho_c.dims().clone(), rho_ac.dims().clone())
}

/// Parties of a tripartite split, validated against `s`.
struct Split {
    a: Vec<String>,
    b: Vec<String>,
    c: Vec<String>,
}

impl Split {
    fn new<S: AsRef<str>>(s: &DensityOperator, a: &[S], b: &[S], c: &[S]) -> Result<Self> {
        let (a, b, c) = (labels_of(a), labels_of(b), labels_of(c));
        if a.is_empty() || b.is_empty() || c.is_empty() {
            return Err(Error::BadPartition("A, B and C must be nonempty".into()));
        }
        let mut all: Vec<usize> = s.dims().indices_of(&[a.clone(), b.clone(), c.clone()].concat())?;
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        if all.len() != n {
            return Err(Error::BadPartition("A, B and C must be disjoint".into()));
        }
        Ok(Self { a, b, c })
    }

    fn abc(&self) -> Vec<String> {
        [self.a.clone(), self.b.clone(), self.c.clone()].concat()
    }

    fn bac(&self) -> Vec<String> {
        [self.b.clone(), self.a.clone(), self.c.clone()].concat()
    }

    fn bc(&self) -> Vec<String> {
        [self.b.clone(), self.c.clone()].concat()
    }
}

/// `(I_B ⊗ R)(ρ_BC)` with parties ordered `A, B, C`.
pub fn recovered_state<S: AsRef<str>>(
    s: &DensityOperator,
    ch: &ChannelChoi,
    a: &[S],
    b: &[S],
    c: &[S],
) -> Result<DensityOperator> {
    let split = Split::new(s, a, b, c)?;
    let rho_bc = marginal_in_order(s, &split.bc())?;
    let out = apply_channel(ch, &rho_bc, &split.c)?;
    let nb = split.b.len();
    let na = split.a.len();
    let nc = split.c.len();
    let order: Vec<usize> = (nb..nb + na).chain(0..nb).chain(nb + na..nb + na + nc).collect();
    let out = permute_parties(&out, &order)?;
    let abc = marginal_in_order(s, &split.abc())?;
    out.with_dims(abc.dims().clone())
}

/// Petz channel `C → AC` and the state it recovers, in `A, B, C` order.
pub fn petz_recovered<S: AsRef<str>>(
    s: &DensityOperator,
    a: &[S],
    b: &[S],
    c: &[S],
) -> Result<(ChannelChoi, DensityOperator)> {
    let ch = petz_map(s, c, a)?;
    let rec = recovered_state(s, &ch, a, b, c)?;
    Ok((ch, rec))
}

/// Result of optimizing over recovery channels.
#[derive(Clone, Debug)]
pub struct RecoveryValue {
    /// Bits, certificate (recovered state in `A, B, C` order) and bounds.
    pub value: DivergenceValue,
    pub channel: ChannelChoi,
    /// `D(ρ ‖ Petz-recovered ρ)`, an upper bound on the optimum.
    pub petz_bits: f64,
}

/// Orthonormal basis of Hermitian `d x d` matrices.
fn hermitian_basis(d: usize) -> Vec<ComplexMatrix> {
    let mut out: Vec<ComplexMatrix> = traceless_basis(d).iter().map(|b| dense_of(b, d)).collect();
    out.push(ComplexMatrix::identity(d).scale_real(1.0 / (d as f64).sqrt()));
    out
}

/// Directions spanning `{D : Tr_out D = 0}`, an orthonormal family.
fn tp_directions(din: usize, dout: usize) -> Vec<ComplexMatrix> {
    let ins = hermitian_basis(din);
    let outs: Vec<ComplexMatrix> = traceless_basis(dout).iter().map(|b| dense_of(b, dout)).collect();
    let mut dirs = Vec::with_capacity(ins.len() * outs.len());
    for h in &ins {
        for t in &outs {
            dirs.push(h.kron(t));
        }
    }
    dirs
}

/// The linear map `J ↦ (I_B ⊗ R_J)(ρ_BC)` on Choi matrices, `B, A, C` order.
fn recovery_map(rho_bc: &ComplexMatrix, nb: usize, din: usize, dout: usize, j: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(nb * dout, nb * dout);
    for r in 0..nb {
        for r2 in 0..nb {
            for i in 0..din {
                for k in 0..din {
                    let v = rho_bc[(r * din + i, r2 * din + k)];
                    if v == ZERO {
                        continue;
                    }
                    for o in 0..dout {
                        for o2 in 0..dout {
                            out[(r * dout + o, r2 * dout + o2)] += v * j[(i * dout + o, k * dout + o2)];
                        }
                    }
                }
            }
        }
    }
    out
}

struct RecoverySetup {
    split: Split,
    rho_bac: DensityOperator,
    rho_bc: DensityOperator,
    petz: ChannelChoi,
    nb: usize,
    din: usize,
    dout: usize,
    dirs: Vec<ComplexMatrix>,
    /// Fully depolarizing Choi matrix `I ⊗ I / d_out`.
    j0: ComplexMatrix,
}

impl RecoverySetup {
    fn new<S: AsRef<str>>(s: &DensityOperator, a: &[S], b: &[S], c: &[S]) -> Result<Self> {
        if s.is_subnormalized() {
            return Err(Error::Subnormalized);
        }
        let split = Split::new(s, a, b, c)?;
        let rho_bac = marginal_in_order(s, &split.bac())?;
        let rho_bc = marginal_in_order(s, &split.bc())?;
        let petz = petz_map(s, c, a)?;
        let din = petz.in_dims.total();
        let dout = petz.out_dims.total();
        let nb = rho_bc.dim() / din;
        Ok(Self {
            split,
            rho_bac,
            rho_bc,
            petz,
            nb,
            din,
            dout,
            dirs: tp_directions(din, dout),
            j0: ComplexMatrix::identity(din * dout).scale_real(1.0 / dout as f64),
        })
    }

    fn sigma(&self, j: &ComplexMatrix) -> ComplexMatrix {
        recovery_map(self.rho_bc.op(), self.nb, self.din, self.dout, j)
    }

    fn choi_at(&self, y: &[f64]) -> ComplexMatrix {
        let mut j = self.j0.clone();
        for (d, &v) in self.dirs.iter().zip(y) {
            j.axpy(C64::new(v, 0.0), d);
        }
        j.hermitian_part()
    }

    fn coordinates(&self, j: &ComplexMatrix) -> Vec<f64> {
        let diff = j - &self.j0;
        self.dirs.iter().map(|d| d.trace_product_re(&diff)).collect()
    }

    fn channel(&self, j: ComplexMatrix) -> Result<ChannelChoi> {
        // project back onto the trace-preserving, positive set against rounding
        let e = eigh(&j);
        let j = e.reconstruct_with(|x| x.max(0.0));
        let (din, dout) = (self.din, self.dout);
        let tr = partial_trace_matrix(&j, &[din, dout], &[0]);
        let fix = inverse_sqrt_on_support(&tr).kron(&ComplexMatrix::identity(dout));
        let j = fix.matmul(&j).matmul(&fix).hermitian_part();
        ChannelChoi::new(j, self.petz.in_dims.clone(), self.petz.out_dims.clone())
    }

    fn to_abc(&self, bac: ComplexMatrix) -> Result<DensityOperator> {
        let st = DensityOperator::with_repair(bac.hermitian_part(), self.rho_bac.dims().clone())?;
        let (nb, na, nc) = (self.split.b.len(), self.split.a.len(), self.split.c.len());
        let order: Vec<usize> = (nb..nb + na).chain(0..nb).chain(nb + na..nb + na + nc).collect();
        permute_parties(&st, &order)
    }
}

/// `D(A;B|C) = min_R D(ρ_ABC ‖ (I_B ⊗ R_{C→AC})(ρ_BC))` by barrier Newton
/// iterations over trace-preserving Choi matrices, started at the Petz map.
pub fn rel_entropy_of_recovery<S: AsRef<str>>(
    s: &DensityOperator,
    a: &[S],
    b: &[S],
    c: &[S],
    tol: f64,
) -> Result<RecoveryValue> {
    if !(tol > 0.0) {
        return Err(Error::BadParameter(format!("tolerance must be positive, got {tol}")));
    }
    let setup = RecoverySetup::new(s, a, b, c)?;
    let petz_sigma = setup.sigma(setup.petz.choi());
    let petz_bits = relative_entropy_ops(setup.rho_bac.op(), &petz_sigma);
    if petz_bits <= tol {
        let certificate = setup.to_abc(petz_sigma)?;
        return Ok(RecoveryValue {
            value: DivergenceValue {
                bits: petz_bits.max(0.0),
                certificate: Some(certificate),
                dual_bound: Some(0.0),
                status: SolveStatus::Converged,
                iterations: 0,
                ensemble: None,
            },
            channel: setup.petz.clone(),
            petz_bits,
        });
    }
    let mut start = setup.petz.choi().scale_real(1.0 - START_MIXING);
    start += &setup.j0.scale_real(START_MIXING);
    let dirs: Vec<SparseHerm> = setup.dirs.iter().map(sparse_of).collect();
    let problem = RelEntProblem {
        rho: setup.rho_bac.op().clone(),
        rho_log_rho: eigvalsh(setup.rho_bac.op()).iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum(),
        sigma0: setup.sigma(&setup.j0),
        dirs: setup.dirs.iter().map(|d| sparse_of(&setup.sigma(d))).collect(),
        barriers: vec![Barrier {
            constant: setup.j0.clone(),
            dirs,
        }],
    };
    let sol = problem.solve(setup.coordinates(&start), tol);
    let (bits, j, status) = if sol.value_bits <= petz_bits {
        let status = if sol.converged {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIter
        };
        (sol.value_bits, setup.choi_at(&sol.y), status)
    } else {
        (petz_bits, setup.petz.choi().clone(), SolveStatus::Converged)
    };
    let channel = setup.channel(j)?;
    let certificate = setup.to_abc(setup.sigma(channel.choi()))?;
    Ok(RecoveryValue {
        value: DivergenceValue {
            bits: bits.max(0.0),
            certificate: Some(certificate),
            dual_bound: Some(sol.dual_bound_bits.max(0.0).min(bits.max(0.0))),
            status,
            iterations: sol.newton_steps,
            ensemble: None,
        },
        channel,
        petz_bits,
    })
}

/// `max_R F(ρ_ABC, (I_B ⊗ R)(ρ_BC))` (root fidelity) by semidefinite
/// programming, with the optimal channel.
pub fn fidelity_of_recovery<S: AsRef<str>>(
    s: &DensityOperator,
    a: &[S],
    b: &[S],
    c: &[S],
) -> Result<(f64, ChannelChoi)> {
    let setup = RecoverySetup::new(s, a, b, c)?;
    let d = setup.rho_bac.dim();
    let (v, rvals) = support_basis(&eigh(setup.rho_bac.op()));
    let rr = rvals.len();
    let mut p = Sdp::new();
    let ys: Vec<usize> = setup.dirs.iter().map(|_| p.scalar()).collect();
    let y = p.complex(rr, d);
    let jb = p.block(setup.j0.clone());
    for (dir, &var) in setup.dirs.iter().zip(&ys) {
        p.add_scalar(jb, var, 0, dir);
    }
    let mut c0 = ComplexMatrix::zeros(rr + d, rr + d);
    for (i, &x) in rvals.iter().enumerate() {
        c0[(i, i)] = C64::new(x, 0.0);
    }
    let s0 = setup.sigma(&setup.j0);
    for i in 0..d {
        for k in 0..d {
            c0[(rr + i, rr + k)] = s0[(i, k)];
        }
    }
    let fb = p.block(c0);
    p.add_offdiag(fb, &y, 0, rr);
    for (dir, &var) in setup.dirs.iter().zip(&ys) {
        p.add_scalar(fb, var, rr, &setup.sigma(dir));
    }
    // minimize -Re Tr(Y V)
    for &(a, b, re, im) in &y.ids {
        let k = v[(b, a)];
        p.set_objective(re, -k.re);
        p.set_objective(im, k.im);
    }
    let sol = p.solve()?;
    crate::divergences::check_sdp(&sol, 1.0)?;
    let yv: Vec<f64> = ys.iter().map(|&k| sol.y[k]).collect();
    let channel = setup.channel(setup.choi_at(&yv))?;
    Ok(((-sol.primal).clamp(0.0, 1.0), channel))
}

/// Outcome of the recovery-degrading convex split with a Petz-recovered
/// catalyst.
#[derive(Clone, Debug, Serialize)]
pub struct RecoveryReport {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "log2_M")]
    pub log2_m: f64,
    pub eps_target: f64,
    /// Smoothing split used for the register budget.
    pub delta: f64,
    /// `P(Λ^M(ρ ⊗ ω), σ^{⊗M})` with `σ` the Petz-recovered state.
    pub achieved_distance: f64,
    pub approx_mode: &'static str,
    /// Smoothed `D_max(ρ ‖ σ)` behind the budget.
    pub lower_bound_bits: f64,
    /// `log2` of the register budget.
    pub upper_bound_bits: f64,
    pub catalyst_id: &'static str,
    pub pass: bool,
    #[serde(rename = "budget_M")]
    pub budget_m: usize,
    pub rec_value_bits: f64,
    pub cmi_bits: f64,
    pub petz_distance: f64,
}

impl RecoveryReport {
    pub const CSV_HEADER: &'static str = "state_id,eps,delta,M,log2_M,lower_bits,upper_bits,achieved_distance,approx_mode,pass,rec_value_bits,cmi_bits,petz_distance";
}

fn three_parties(rho: &DensityOperator) -> Result<[String; 3]> {
    let labels = rho.dims().labels();
    if labels.len() != 3 {
        return Err(Error::BadPartition(format!("expected a tripartite state, got {} parties", labels.len())));
    }
    Ok([labels[0].to_string(), labels[1].to_string(), labels[2].to_string()])
}

/// Register budget for recovery degrading to `eps`, splitting it evenly
/// between smoothing and the convex split.
pub fn recovery_budget(rho: &DensityOperator, eps: f64) -> Result<usize> {
    let [a, b, c] = three_parties(rho)?;
    let (_, sigma) = petz_recovered(rho, &[a], &[b], &[c])?;
    Ok(register_budget(rho, &sigma, eps / 2.0, eps / 2.0)?.n)
}

/// Runs the swap protocol on `ρ_ABC` with catalyst `ω = σ^{⊗(M-1)}`, where
/// `σ = (I_B ⊗ R_Petz)(ρ_BC)`, and measures the output against `σ^{⊗M}`.
/// The recovery map on the output is restricted to the Petz family.
pub fn simulate_recovery_degrading(rho: &DensityOperator, m: usize, eps: f64) -> Result<RecoveryReport> {
    if m == 0 {
        return Err(Error::BadParameter("M must be at least 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::BadParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    let [a, b, c] = three_parties(rho)?;
    let (ab, bb, cb) = ([a.clone()], [b.clone()], [c.clone()]);
    let (_, sigma) = petz_recovered(rho, &ab, &bb, &cb)?;
    let budget = register_budget(rho, &sigma, eps / 2.0, eps / 2.0)?;
    let achieved = split_distance(rho, &sigma, m)?;
    let rec = rel_entropy_of_recovery(rho, &ab, &bb, &cb, 1e-7)?;
    Ok(RecoveryReport {
        m,
        log2_m: (m as f64).log2(),
        eps_target: eps,
        delta: eps / 2.0,
        achieved_distance: achieved,
        approx_mode: "petz_family",
        lower_bound_bits: budget.dmax_bits,
        upper_bound_bits: (budget.n as f64).log2(),
        catalyst_id: "petz_recovered",
        pass: achieved <= eps,
        budget_m: budget.n,
        rec_value_bits: rec.value.bits,
        cmi_bits: conditional_mutual_information(rho, &ab, &bb, &cb)?,
        petz_distance: purified_distance(rho, &sigma)?,
    })
}

/// Both constructive steps of the converse, for `M` copies.
#[derive(Clone, Debug, Serialize)]
pub struct AppendixCheck {
    pub holds: bool,
    /// Smallest eigenvalue of `σ_AB ⊗ Π − β`.
    pub slack: f64,
    /// Largest entry of `P_C ρ_BC^{⊗M} P_C† − P_B† ρ_BC^{⊗M} P_B` over the
    /// swap permutations.
    pub commutation_residual: f64,
}

/// Checks that the controlled permutations on the `C` copies of
/// `ρ_BC^{⊗M}` can be moved onto the `B` copies, and that the dilated state
/// `β = V(ρ^{⊗M} ⊗ γ)V†` satisfies `β ≤ Tr_X β ⊗ Π`.
pub fn appendix_converse_check(rho: &DensityOperator, m: usize) -> Result<AppendixCheck> {
    let [_, b, c] = three_parties(rho)?;
    if m == 0 {
        return Err(Error::BadParameter("M must be at least 1".into()));
    }
    crate::qmatrix::guard_dim(rho.dim().checked_pow(m as u32).unwrap_or(usize::MAX))?;
    let rho_bc = marginal_in_order(rho, &[b, c])?;
    let bc_power = tensor_power(&rho_bc, m)?;
    let swaps = build_swap_ensemble(m, rho_bc.dims())?;
    let dims = bc_power.dims().dims();
    let bidx: Vec<usize> = (0..m).map(|k| 2 * k).collect();
    let cidx: Vec<usize> = (0..m).map(|k| 2 * k + 1).collect();
    let mut residual = 0.0f64;
    for i in 0..m {
        let pb = crate::qmatrix::ops::embed_operator(swaps.unitary(0, i), &dims, &bidx);
        let pc = crate::qmatrix::ops::embed_operator(swaps.unitary(1, i), &dims, &cidx);
        let lhs = pc.matmul(bc_power.op()).matmul_adjoint(&pc);
        let rhs = pb.adjoint().matmul(bc_power.op()).matmul(&pb);
        residual = residual.max(lhs.max_abs_diff(&rhs));
    }

    let power = tensor_power(rho, m)?;
    let ens = build_swap_ensemble(m, rho.dims())?;
    let beta = gamma_dilation(&ens, &power.with_dims(copies_dims(rho.dims(), m))?)?;
    let keep: Vec<usize> = (0..ens.parties().len()).collect();
    let marginal_op = partial_trace_matrix(beta.op(), &beta.dims().dims(), &keep);
    let marginal = DensityOperator::with_repair(marginal_op.hermitian_part(), ens.parties().clone())?;
    let (holds, slack) = check_operator_inequality(&beta, &marginal, m)?;
    Ok(AppendixCheck {
        holds: holds && residual <= 1e-9,
        slack,
        commutation_residual: residual,
    })
}
