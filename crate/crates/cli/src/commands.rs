use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use disent::convexsplit::{default_lemma_grid, verify_lemma, LemmaRow};
use disent::divergences::{
    d_max, mutual_information, product_of_marginals, smooth_d_max, smooth_max_entropy, von_neumann_entropy,
};
use disent::protocol::{default_candidates, one_shot_cost_search, Certification, ProtocolReport};
use disent::qmatrix::{make_state, partial_trace, read_state, Bipartition, DensityOperator, StateFamily};
use disent::recovery::{appendix_converse_check, recovery_budget, simulate_recovery_degrading, RecoveryReport};
use disent::separability::{e_max_smooth, ree, SepApprox, SepTarget};

use crate::output::{emit, Cell, Format, Table};
use crate::{Approx, Output, VerifyKind};

const MEASURE_HEADER: &str = "state_id,parties,dim,entropy_bits,marginal_entropy_bits,mutual_info_bits,ree_ppt_bits,ree_ensemble_bits,e_max_ppt_bits,e_max_ensemble_bits,dmax_product_bits,smooth_dmax_product_bits,hmax_bits,eps";
const SWEEP_HEADER: &str =
    "param,state_id,mutual_info_bits,ree_ppt_bits,ree_ensemble_bits,e_max_ppt_bits,e_max_ensemble_bits,status";
const APPENDIX_HEADER: &str = "state_id,M,holds,slack,commutation_residual";

/// Parses `file:PATH`, a family string, or a path to an existing file.
pub fn load_state(spec: &str) -> Result<DensityOperator> {
    if let Some(path) = spec.strip_prefix("file:") {
        return read_state(path).with_context(|| format!("reading state file {path}"));
    }
    match spec.parse::<StateFamily>() {
        Ok(f) => Ok(make_state(&f)?),
        Err(e) if std::path::Path::new(spec).is_file() => {
            let _ = e;
            read_state(spec).with_context(|| format!("reading state file {spec}"))
        }
        Err(e) => Err(e.into()),
    }
}

fn target(s: &DensityOperator) -> Result<SepTarget> {
    match s.dims().len() {
        0 | 1 => bail!("state has a single party; entanglement measures need two or more"),
        2 => Ok(SepTarget::Cut(Bipartition::first_vs_rest(s.dims()))),
        _ => Ok(SepTarget::Full),
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0 && eps < 1.0) {
        bail!("--eps must lie in [0, 1), got {eps}");
    }
    Ok(())
}

struct Measures {
    mutual: f64,
    ree_ppt: f64,
    ree_ens: f64,
    emax_ppt: f64,
    emax_ens: f64,
}

fn core_measures(s: &DensityOperator, eps: f64, tol: f64, approx: Approx) -> Result<Measures> {
    let t = target(s)?;
    let cut = Bipartition::first_vs_rest(s.dims());
    let pick = |on: bool, f: &dyn Fn() -> disent::Result<f64>| -> Result<f64> {
        if on {
            Ok(f()?)
        } else {
            Ok(f64::NAN)
        }
    };
    Ok(Measures {
        mutual: mutual_information(s, &cut)?,
        ree_ppt: pick(approx.ppt(), &|| Ok(ree(s, &t, &SepApprox::ppt(), tol)?.bits))?,
        ree_ens: pick(approx.ensemble(), &|| Ok(ree(s, &t, &SepApprox::ensemble(), tol)?.bits))?,
        emax_ppt: pick(approx.ppt(), &|| Ok(e_max_smooth(s, &t, eps, &SepApprox::ppt())?.bits))?,
        emax_ens: pick(approx.ensemble(), &|| Ok(e_max_smooth(s, &t, eps, &SepApprox::ensemble())?.bits))?,
    })
}

pub fn measure(spec: &str, eps: f64, tol: f64, approx: Approx, out: &Output) -> Result<u8> {
    check_eps(eps)?;
    if !(tol > 0.0) {
        bail!("--tol must be positive, got {tol}");
    }
    let s = load_state(spec)?;
    let m = core_measures(&s, eps, tol, approx)?;
    let first = s.dims().parties()[0].label.clone();
    let cut = Bipartition::first_vs_rest(s.dims());
    let product = product_of_marginals(&s, &cut)?;
    let row: Vec<Cell> = vec![
        spec.into(),
        s.dims().len().into(),
        s.dim().into(),
        von_neumann_entropy(&s)?.into(),
        von_neumann_entropy(&partial_trace(&s, &[first.as_str()])?)?.into(),
        m.mutual.into(),
        m.ree_ppt.into(),
        m.ree_ens.into(),
        m.emax_ppt.into(),
        m.emax_ens.into(),
        d_max(&s, &product)?.bits.into(),
        smooth_d_max(&s, &product, eps)?.bits.into(),
        smooth_max_entropy(&s, &[first.as_str()], eps)?.bits.into(),
        eps.into(),
    ];
    let table = Table::single(MEASURE_HEADER, row);
    emit(&table.render(out.format.unwrap_or(Format::Json)), out.out.as_deref())?;
    Ok(0)
}

fn protocol_row(state_id: &str, r: &ProtocolReport) -> Vec<Cell> {
    vec![
        state_id.into(),
        r.eps_target.into(),
        r.delta.into(),
        r.m.into(),
        r.log2_m.into(),
        r.lower_bound_bits.into(),
        r.upper_bound_bits.into(),
        r.achieved_distance.into(),
        r.approx_mode.as_str().into(),
        r.pass.into(),
    ]
}

fn run_protocol(s: &DensityOperator, eps: f64, delta: f64, approx: Approx) -> Result<ProtocolReport> {
    let mut cands = default_candidates(s, eps, delta)?;
    cands.retain(|c| match c.certification {
        Certification::Ensemble => approx.ensemble() || approx.ppt(),
        Certification::PptExact | Certification::PptRelaxation => approx.ppt(),
    });
    Ok(one_shot_cost_search(s, eps, delta, &cands)?)
}

pub fn protocol(spec: &str, eps: f64, delta: f64, approx: Approx, out: &Output) -> Result<u8> {
    let s = load_state(spec)?;
    let r = run_protocol(&s, eps, delta, approx)?;
    let text = match out.format.unwrap_or(Format::Json) {
        Format::Csv => Table::single(&format!("{},catalyst_id", ProtocolReport::CSV_HEADER), {
            let mut row = protocol_row(spec, &r);
            row.push(r.catalyst_id.clone().into());
            row
        })
        .render(Format::Csv),
        Format::Json => {
            let mut v = serde_json::to_value(&r)?;
            v["state_id"] = spec.into();
            round_json(&mut v);
            let mut t = serde_json::to_string_pretty(&v)?;
            t.push('\n');
            t
        }
    };
    emit(&text, out.out.as_deref())?;
    Ok(if r.pass { 0 } else { 1 })
}

fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            let x = crate::output::sig12(n.as_f64().expect("f64"));
            if let Some(r) = serde_json::Number::from_f64(x + 0.0) {
                *n = r;
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_json),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

fn thm1_grid() -> Vec<(&'static str, f64, f64)> {
    vec![
        ("bell", 0.2, 0.1),
        ("bell", 0.3, 0.1),
        ("werner:0.9", 0.2, 0.1),
        ("werner:0.9", 0.3, 0.1),
        ("isotropic:0.8", 0.2, 0.1),
        ("werner:0.4", 0.2, 0.1),
    ]
}

#[allow(clippy::too_many_arguments)]
pub fn verify(
    kind: VerifyKind,
    grid: &str,
    seed: u64,
    state: Option<&str>,
    m: Option<usize>,
    eps: f64,
    threads: Option<usize>,
    out: &Output,
) -> Result<u8> {
    if grid != "default" {
        bail!("unknown grid `{grid}`; only `default` is available");
    }
    let format = out.format.unwrap_or(Format::Csv);
    let pool = pool(threads)?;
    let (table, failed, solver_failures) = match kind {
        VerifyKind::Lemma => {
            let rows = pool.install(|| -> Result<Vec<LemmaRow>> {
                let instances = default_lemma_grid()?;
                Ok(instances.par_iter().map(|i| verify_lemma(std::slice::from_ref(i)).remove(0)).collect())
            })?;
            let mut t = Table::new(LemmaRow::CSV_HEADER);
            let mut errors = 0;
            for r in &rows {
                errors += usize::from(r.error.is_some());
                t.push(vec![
                    r.rho_id.clone().into(),
                    r.sigma_id.clone().into(),
                    r.zeta.into(),
                    r.xi.into(),
                    r.n.into(),
                    r.dmax_bits.into(),
                    r.measured_p.into(),
                    r.bound.into(),
                    r.pass.into(),
                ]);
            }
            // rows outside the bound are reported, not fatal
            (t, false, errors)
        }
        VerifyKind::Thm1 => {
            let rows: Vec<(&str, f64, f64, Result<ProtocolReport>)> = pool.install(|| {
                thm1_grid()
                    .into_par_iter()
                    .map(|(id, e, d)| (id, e, d, load_state(id).and_then(|s| run_protocol(&s, e, d, Approx::Both))))
                    .collect()
            });
            let mut t = Table::new(ProtocolReport::CSV_HEADER);
            let (mut failed, mut errors) = (false, 0);
            for (id, e, d, r) in rows {
                match r {
                    Ok(r) => {
                        failed |= !r.pass;
                        t.push(protocol_row(id, &r));
                    }
                    Err(err) => {
                        eprintln!("row {id} eps={e} delta={d}: {err:#}");
                        errors += 1;
                        let nan = f64::NAN;
                        t.push(vec![
                            id.into(),
                            e.into(),
                            d.into(),
                            0usize.into(),
                            nan.into(),
                            nan.into(),
                            nan.into(),
                            nan.into(),
                            "error".into(),
                            false.into(),
                        ]);
                    }
                }
            }
            (t, failed, errors)
        }
        VerifyKind::Recovery => {
            let id = state.unwrap_or("ghz:3");
            let s = load_state(id)?;
            let m = match m {
                Some(m) => m,
                None => recovery_budget(&s, eps)?,
            };
            let r = simulate_recovery_degrading(&s, m, eps)?;
            let mut t = Table::new(RecoveryReport::CSV_HEADER);
            t.push(vec![
                id.into(),
                r.eps_target.into(),
                r.delta.into(),
                r.m.into(),
                r.log2_m.into(),
                r.lower_bound_bits.into(),
                r.upper_bound_bits.into(),
                r.achieved_distance.into(),
                r.approx_mode.into(),
                r.pass.into(),
                r.rec_value_bits.into(),
                r.cmi_bits.into(),
                r.petz_distance.into(),
            ]);
            (t, !r.pass, 0)
        }
        VerifyKind::Appendix => {
            let m = m.unwrap_or(2);
            let ids: Vec<String> = match state {
                Some(s) => vec![s.to_string()],
                None => std::iter::once("ghz:3".to_string())
                    .chain((0..10).map(|k| format!("random:{},2x2x2,8", seed + k)))
                    .collect(),
            };
            let rows: Vec<Result<disent::recovery::AppendixCheck>> = pool.install(|| {
                ids.par_iter()
                    .map(|id| Ok(appendix_converse_check(&load_state(id)?, m)?))
                    .collect()
            });
            let mut t = Table::new(APPENDIX_HEADER);
            let mut failed = false;
            for (id, r) in ids.iter().zip(rows) {
                let r = r?;
                failed |= !r.holds;
                t.push(vec![
                    id.clone().into(),
                    m.into(),
                    r.holds.into(),
                    r.slack.into(),
                    r.commutation_residual.into(),
                ]);
            }
            (t, failed, 0)
        }
    };
    emit(&table.render(format), out.out.as_deref())?;
    Ok(if solver_failures > 0 {
        2
    } else if failed {
        1
    } else {
        0
    })
}

/// `START:STOP:STEP`, inclusive of `STOP` up to rounding.
fn linspace(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number `{p}` in grid")))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else {
        bail!("grid range must be START:STOP:STEP, got `{spec}`");
    };
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
        bail!("grid step must be positive and bounds finite");
    }
    if stop < start {
        return Ok(Vec::new());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| crate::output::sig12(start + k as f64 * step)).collect())
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    grid: &str,
    state: Option<&str>,
    eps: f64,
    tol: f64,
    approx: Approx,
    seed: u64,
    threads: Option<usize>,
    out: &Output,
) -> Result<u8> {
    let _ = seed;
    let (param, range) = grid
        .split_once('=')
        .with_context(|| format!("grid must be PARAM=START:STOP:STEP, got `{grid}`"))?;
    let values = linspace(range)?;
    if values.is_empty() {
        bail!("grid `{grid}` is empty");
    }
    // (param value, state id, eps)
    let points: Vec<(f64, String, f64)> = match param {
        "werner" | "isotropic" => {
            check_eps(eps)?;
            values.iter().map(|&v| (v, format!("{param}:{v}"), eps)).collect()
        }
        "eps" => {
            let id = state.context("an eps sweep needs --state")?;
            for &v in &values {
                check_eps(v)?;
            }
            values.iter().map(|&v| (v, id.to_string(), v)).collect()
        }
        other => bail!("unknown sweep parameter `{other}`; use werner, isotropic or eps"),
    };
    let rows: Vec<(f64, String, Result<Measures>)> = pool(threads)?.install(|| {
        points
            .into_par_iter()
            .map(|(v, id, e)| {
                let r = load_state(&id).and_then(|s| core_measures(&s, e, tol, approx));
                (v, id, r)
            })
            .collect()
    });
    let mut t = Table::new(SWEEP_HEADER);
    for (v, id, r) in rows {
        let row = match r {
            Ok(m) => vec![
                v.into(),
                id.into(),
                m.mutual.into(),
                m.ree_ppt.into(),
                m.ree_ens.into(),
                m.emax_ppt.into(),
                m.emax_ens.into(),
                "ok".into(),
            ],
            Err(e) => {
                let nan = f64::NAN;
                vec![
                    v.into(),
                    id.into(),
                    nan.into(),
                    nan.into(),
                    nan.into(),
                    nan.into(),
                    nan.into(),
                    format!("{e:#}").into(),
                ]
            }
        };
        t.push(row);
    }
    emit(&t.render(out.format.unwrap_or(Format::Csv)), out.out.as_deref())?;
    Ok(0)
}
