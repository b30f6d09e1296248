//! Acceptance criteria. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits nonzero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::thread;
use std::time::Instant;

use common::*;
use coupled_splitting::model::{kkt_residual, solve_kkt_oracle};
use coupled_splitting::rp::run_expected_iteration;
use coupled_splitting::solver::{
    admm2_linearized_step, admm2_step, bcd_step, bcpg_step, min_kkt_sq_curve, run_solver,
};
use coupled_splitting::spectral::{
    analyze, bcd_rate_matrices, cyclic_update_matrix, divergence_witness, oscillation_demo,
    rank_identity_check, SpectralReport,
};
use coupled_splitting::{IterateState, ProblemInstance, SolverConfig, Status, Trace, Variant};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;

/// Tolerances, all pinned.
const KKT_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100_000;
const ORACLE_DIST: f64 = 1e-6;
const LYAPUNOV_SLACK: f64 = 1e-9;
/// Residual level treated as rounding noise, relative to the data scale.
const ROUNDING_FLOOR: f64 = 100.0 * f64::EPSILON;
const OPTIMALITY_RECHECK: f64 = 1e-10;
const QS_LOWER: f64 = -1e-10;
const QS_UPPER: f64 = 4.0 / 3.0;
const HAND_EIG_TOL: f64 = 1e-12;
const ONE_BAND: f64 = 1e-8;
const EXPECTED_STEP: f64 = 1e-10;
const RATE_TOL: f64 = 1e-10;
const CLOSED_FORM_TOL: f64 = 1e-12;
const EQUIV_TOL: f64 = 1e-12;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lift<T>(r: coupled_splitting::Result<T>, what: &str) -> Result<T, String> {
    r.map_err(|e| format!("{what}: {e}"))
}

struct TwoBlockRun {
    planted: Planted,
    trace: Trace,
}

/// The 50 two-block runs shared by criteria 1 and 2.
fn two_block_runs() -> &'static Result<Vec<TwoBlockRun>, String> {
    static RUNS: OnceLock<Result<Vec<TwoBlockRun>, String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (0..50u64)
            .map(|t| {
                let planted = two_block_instance(&mut rng(1000 + t), 1.0);
                let cfg = SolverConfig::new(Variant::Admm2)
                    .with_r(planted.r.clone())
                    .with_tol(KKT_TOL)
                    .with_max_iter(MAX_ITER);
                let (d, m) = (planted.inst.d(), planted.inst.m());
                let trace = run_solver(
                    &planted.inst,
                    &cfg,
                    &DVector::zeros(d),
                    &DVector::zeros(m),
                    Some(&planted.kkt),
                )
                .map_err(|e| format!("instance {t}: {e}"))?;
                Ok(TwoBlockRun { planted, trace })
            })
            .collect()
    })
}

fn criterion_1() -> Outcome {
    let runs = two_block_runs().as_ref().map_err(Clone::clone)?;
    let mut compared = 0;
    let mut worst_dist = 0.0_f64;
    let mut max_k = 0;
    for (t, run) in runs.iter().enumerate() {
        let p = &run.planted;
        let blocks_ok = (0..2).all(|i| {
            let dims = p.inst.blocks.dims();
            let ai = a_cols(&p.inst.a, dims, i);
            let mat = block(&p.inst.h, dims, i, i) + &p.inst.theta[i].sigma + ai.transpose() * ai + &p.r[i];
            eig_min(&mat) > 1e-10
        });
        ensure(blocks_ok, || format!("instance {t} violates the uniqueness condition"))?;
        let planted_res = lift(kkt_residual(&p.inst, &p.kkt), "kkt_residual")?;
        ensure(planted_res.max().is_some_and(|r| r <= 1e-12), || {
            format!("instance {t}: planted point is not a KKT point ({:?})", planted_res.max())
        })?;

        let last = run.trace.last();
        ensure(run.trace.status == Status::Converged && last.is_exact(), || {
            format!("instance {t} ({:?}): status {} after {} iterations", p.kinds, run.trace.status, run.trace.iterations())
        })?;
        let res = last.max_residual().unwrap();
        ensure(res <= KKT_TOL, || format!("instance {t}: residual {res:e}"))?;
        max_k = max_k.max(run.trace.iterations());

        let x = &run.trace.final_state.x;
        if p.is_quadratic() {
            let oracle = lift(solve_kkt_oracle(&p.inst), "solve_kkt_oracle")?;
            let dist = (x - &oracle.x).norm().max((x - &p.kkt.x).norm());
            worst_dist = worst_dist.max(dist);
            compared += 1;
            ensure(dist <= ORACLE_DIST, || format!("instance {t}: distance to oracle {dist:e}"))?;
        }
    }
    Ok(format!(
        "50 runs converged (max k = {max_k}); {compared} quadratic runs within {worst_dist:.1e} of the oracle"
    ))
}

fn criterion_2() -> Outcome {
    let runs = two_block_runs().as_ref().map_err(Clone::clone)?;
    let mut steps = 0;
    let mut tightest = f64::INFINITY;
    for (t, run) in runs.iter().enumerate() {
        // The bound uses the optimality condition that produced x₂ᵏ, so it
        // starts with the first step taken from a computed iterate.
        for pair in run.trace.records.windows(2).skip(1) {
            let (prev, next) = (&pair[0], &pair[1]);
            let (Some(v0), Some(v1), Some(bound)) = (prev.lyapunov, next.lyapunov, next.contraction_bound) else {
                return Err(format!("instance {t}: missing Lyapunov data at k = {}", next.k));
            };
            let slack = LYAPUNOV_SLACK * v0;
            ensure(v1 <= v0 + slack, || {
                format!("instance {t}: V increased at k = {}: {v0:e} -> {v1:e}", next.k)
            })?;
            ensure(v0 - v1 >= bound - slack, || {
                format!(
                    "instance {t}: decrease {:e} below bound {bound:e} at k = {}",
                    v0 - v1,
                    next.k
                )
            })?;
            if bound > 0.0 {
                tightest = tightest.min((v0 - v1) / bound);
            }
            steps += 1;
        }
    }
    Ok(format!("{steps} steps checked; smallest decrease/bound ratio {tightest:.3}"))
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    let mut at_floor = Vec::new();
    for t in 0..50u64 {
        let p = two_block_instance(&mut rng(1000 + t), 1.0);
        let cfg = SolverConfig::new(Variant::Admm2)
            .with_r(p.r.clone())
            .with_tol(0.0)
            .with_max_iter(10_000);
        let (d, m) = (p.inst.d(), p.inst.m());
        let trace = lift(
            run_solver(&p.inst, &cfg, &DVector::zeros(d), &DVector::zeros(m), None),
            "run_solver",
        )?;
        let curve = min_kkt_sq_curve(&trace);
        let at = |k: usize| curve.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v);
        let (Some(v100), Some(v10k)) = (at(100), at(10_000)) else {
            return Err(format!("instance {t}: run stopped at k = {}", trace.iterations()));
        };
        // Residuals at the rounding level of the residual evaluation cannot
        // decrease further; k·min then grows like k whatever the method does.
        let fin = &trace.final_state;
        let scale = [
            p.inst.h.amax() * fin.x.amax(),
            p.inst.a.amax() * (fin.x.amax() + fin.mu.amax()),
            p.inst.g.amax(),
            p.inst.b.amax(),
            1.0,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        let floor = ROUNDING_FLOOR * scale;
        let best100 = (v100 / 100.0).sqrt();
        if best100 <= floor {
            at_floor.push(t);
            continue;
        }
        if v10k <= v100 / 10.0 {
            worst = worst.max(v10k / v100);
        } else {
            failures.push(format!("{t} (min residual {best100:.1e} by k=100)"));
        }
    }
    ensure(failures.is_empty(), || {
        format!("{} runs miss the factor 10: {}", failures.len(), failures.join(", "))
    })?;
    Ok(format!(
        "{} runs checked, largest ratio value(10^4)/value(10^2) = {worst:.1e}; {} runs already at the rounding floor by k=100 ({:?})",
        50 - at_floor.len(),
        at_floor.len(),
        at_floor
    ))
}

fn criterion_4() -> Outcome {
    let mut worst_residual = 0.0_f64;
    let mut worst_gap = f64::INFINITY;
    for t in 0..20u64 {
        let (inst, y_true) = singular_two_block_instance(&mut rng(4000 + t));
        let dims = inst.blocks.dims();
        let min_block = (0..2)
            .map(|i| {
                let ai = a_cols(&inst.a, dims, i);
                eig_min(&(block(&inst.h, dims, i, i) + ai.transpose() * ai))
            })
            .fold(f64::INFINITY, f64::min);
        ensure(min_block <= 1e-10, || format!("instance {t} satisfies the uniqueness condition"))?;

        let w = lift(divergence_witness(&inst, 1.0, &[]), "divergence_witness")?
            .ok_or_else(|| format!("instance {t}: no witness returned"))?;
        let ybar = DVector::from_vec(w.ybar.clone());
        let defect = (&inst.h * &ybar).norm().max((&inst.a * &ybar).norm());
        ensure((ybar.norm() - 1.0).abs() < 1e-12 && defect <= 1e-10, || {
            format!("instance {t}: witness defect {defect:e}")
        })?;
        ensure(ybar.dot(&y_true).abs() > 1.0 - 1e-8, || {
            format!("instance {t}: witness is not the planted null direction")
        })?;

        let (d, m) = (inst.d(), inst.m());
        let cfg = SolverConfig::new(Variant::Admm2);
        let demo = lift(
            oscillation_demo(&inst, &cfg, &ybar, &DVector::zeros(d), &DVector::zeros(m), 200),
            "oscillation_demo",
        )?;
        ensure(demo.is_non_convergent(), || format!("instance {t}: tail gap {:e}", demo.tail_gap))?;
        ensure(demo.max_optimality_residual <= OPTIMALITY_RECHECK, || {
            format!("instance {t}: optimality recheck {:e}", demo.max_optimality_residual)
        })?;
        worst_residual = worst_residual.max(demo.max_optimality_residual);
        worst_gap = worst_gap.min(demo.tail_gap);
    }
    Ok(format!(
        "20 certified witnesses; smallest tail gap {worst_gap:.3}, worst subproblem residual {worst_residual:.1e}"
    ))
}

struct Analyzed {
    planted: Planted,
    beta: f64,
    report: SpectralReport,
}

/// The 200 instances shared by criteria 5 to 7.
fn analyzed() -> &'static Result<Vec<Analyzed>, String> {
    static SET: OnceLock<Result<Vec<Analyzed>, String>> = OnceLock::new();
    SET.get_or_init(|| {
        (0..200usize)
            .map(|t| {
                let n = [2, 3, 4][t % 3];
                let beta = [0.1, 1.0, 10.0][(t / 3) % 3];
                let planted = nblock_qp_instance(&mut rng(5000 + t as u64), n, 3);
                let report = analyze(&planted.inst, beta).map_err(|e| format!("instance {t}: {e}"))?;
                Ok(Analyzed { planted, beta, report })
            })
            .collect()
    })
}

fn hand_instance() -> ProblemInstance {
    ProblemInstance::quadratic(
        vec![1, 1],
        DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
        DVector::zeros(2),
        DMatrix::identity(2, 2),
        DVector::zeros(2),
    )
    .unwrap()
}

fn criterion_5() -> Outcome {
    let set = analyzed().as_ref().map_err(Clone::clone)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (t, a) in set.iter().enumerate() {
        let inst = &a.planted.inst;
        let (q, _) = q_m_oracle(inst, a.beta);
        let scale = q.amax().max(1.0);
        let q_err = max_abs_diff(&q, &a.report.q_matrix());
        ensure(q_err <= 1e-10 * scale, || format!("instance {t}: Q differs from the oracle by {q_err:e}"))?;
        ensure(eig_min(&q) > 0.0 && a.report.q_min_eig > 0.0, || {
            format!("instance {t}: Q not positive definite ({:e})", eig_min(&q))
        })?;
        let eig = eig_qs_oracle(&q, &s_oracle(inst, a.beta));
        for &v in &eig {
            ensure((QS_LOWER..QS_UPPER).contains(&v), || format!("instance {t}: eig(QS) contains {v}"))?;
        }
        ensure(a.report.verdicts.lemma_3_1, || format!("instance {t}: report verdict is false"))?;
        lo = lo.min(eig[0]);
        hi = hi.max(*eig.last().unwrap());
    }
    let report = lift(analyze(&hand_instance(), 1.0), "analyze")?;
    let want = [7.0 / 9.0, 10.0 / 9.0];
    let err = report
        .eig_qs
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(report.eig_qs.len() == 2 && err <= HAND_EIG_TOL, || {
        format!("hand instance: eig(QS) = {:?}", report.eig_qs)
    })?;
    Ok(format!("200 instances, eig(QS) within [{lo:.3e}, {hi:.6}]; hand instance {{7/9, 10/9}} to {err:.0e}"))
}

/// Band, multiplicity and rank checks on one analyzed instance.
fn spectrum_checks(inst: &ProblemInstance, beta: f64, report: &SpectralReport) -> Result<(), String> {
    let (d, m) = (inst.d(), inst.m());
    let (_, mm) = q_m_oracle(inst, beta);
    let m_err = max_abs_diff(&mm, &report.m_matrix());
    ensure(m_err <= 1e-9 * mm.amax().max(1.0), || format!("M differs from the oracle by {m_err:e}"))?;

    let s = s_oracle(inst, beta);
    let mut kkt = DMatrix::zeros(d + m, d + m);
    kkt.view_mut((0, 0), (d, d)).copy_from(&s);
    kkt.view_mut((0, d), (d, m)).copy_from(&(-inst.a.transpose()));
    kkt.view_mut((d, 0), (m, d)).copy_from(&(&inst.a * beta));
    let (r_kkt, r_s, r_ata) = (rank(&kkt), rank(&s), rank(&(inst.a.transpose() * &inst.a * beta)));
    ensure(r_kkt == r_s + r_ata, || format!("rank identity fails: {r_kkt} != {r_s} + {r_ata}"))?;
    let ri = lift(rank_identity_check(inst, beta), "rank_identity_check")?;
    ensure(ri.holds && ri.lhs == r_kkt, || format!("library rank identity {ri:?}"))?;

    let eig = eigenvalues(&mm);
    let mut near_one = 0;
    for z in eig.iter() {
        let on_one = (z - nalgebra::Complex::new(1.0, 0.0)).norm() < ONE_BAND;
        ensure(z.norm() < 1.0 - ONE_BAND || on_one, || format!("eigenvalue {z} in the forbidden band"))?;
        near_one += usize::from(on_one);
    }
    let gm = d + m - rank(&(&mm - DMatrix::identity(d + m, d + m)));
    let am = d + m - r_ata - r_s;
    ensure(report.am_one == report.gm_one, || {
        format!("am_one {} != gm_one {}", report.am_one, report.gm_one)
    })?;
    ensure(am == gm && gm == near_one && report.gm_one == gm, || {
        format!("multiplicities: formula {am}, eigenspace {gm}, numeric {near_one}, report {}", report.gm_one)
    })?;
    ensure(report.verdicts.lemma_3_3 && report.verdicts.lemma_3_4 && report.verdicts.lemma_3_5, || {
        format!("report verdicts {:?}", report.verdicts)
    })
}

fn criterion_6() -> Outcome {
    let set = analyzed().as_ref().map_err(Clone::clone)?;
    let mut with_one = 0;
    for (t, a) in set.iter().enumerate() {
        spectrum_checks(&a.planted.inst, a.beta, &a.report).map_err(|e| format!("instance {t}: {e}"))?;
        with_one += usize::from(a.report.gm_one > 0);
    }
    Ok(format!("200 instances; {with_one} have eigenvalue 1, all semisimple"))
}

fn expected_limit(inst: &ProblemInstance, beta: f64) -> Result<(usize, f64), String> {
    let (d, m) = (inst.d(), inst.m());
    let trace = lift(
        run_expected_iteration(inst, beta, &DVector::zeros(d), &DVector::zeros(m), 1_000_000),
        "run_expected_iteration",
    )?;
    let step = trace.final_step.unwrap_or(0.0);
    ensure(trace.converged && step <= EXPECTED_STEP, || {
        format!("no convergence after {} steps (last step {step:e})", trace.last().k)
    })?;
    let last = trace.last();
    let (stat, feas) = qp_kkt_residual(inst, &last.x, &last.mu);
    let res = stat.max(feas);
    ensure(res <= KKT_TOL, || format!("limit violates the KKT system by {res:e}"))?;
    Ok((last.k, res))
}

fn criterion_7() -> Outcome {
    let set = analyzed().as_ref().map_err(Clone::clone)?;
    let (mut max_k, mut worst) = (0, 0.0_f64);
    for (t, a) in set.iter().enumerate() {
        let (k, res) = expected_limit(&a.planted.inst, a.beta).map_err(|e| format!("instance {t}: {e}"))?;
        max_k = max_k.max(k);
        worst = worst.max(res);
    }
    for beta in [0.1, 1.0, 10.0] {
        let inst = ProblemInstance::quadratic(
            vec![1, 1],
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let (k, res) = expected_limit(&inst, beta).map_err(|e| format!("H=0, A=[1,1], beta={beta}: {e}"))?;
        max_k = max_k.max(k);
        worst = worst.max(res);
    }
    Ok(format!("203 instances converged (max k = {max_k}); worst KKT residual {worst:.1e}"))
}

fn criterion_8() -> Outcome {
    let inst = cyclic_counterexample();
    let cyc = lift(cyclic_update_matrix(&inst, 1.0, 1.0), "cyclic_update_matrix")?;
    // Identity-order update matrix built by hand.
    let s = s_oracle(&inst, 1.0);
    let l = l_sigma_oracle(&s, &[1, 1, 1], &[0, 1, 2]);
    let mut lbar = DMatrix::zeros(6, 6);
    lbar.view_mut((0, 0), (3, 3)).copy_from(&l);
    lbar.view_mut((3, 0), (3, 3)).copy_from(&inst.a);
    lbar.view_mut((3, 3), (3, 3)).fill_with_identity();
    let mut rbar = DMatrix::zeros(6, 6);
    rbar.view_mut((0, 0), (3, 3)).copy_from(&(&l - &s));
    rbar.view_mut((0, 3), (3, 3)).copy_from(&inst.a.transpose());
    rbar.view_mut((3, 3), (3, 3)).fill_with_identity();
    let rho = spectral_radius(&(lbar.try_inverse().unwrap() * rbar));
    ensure(cyc.rho > 1.0 && (cyc.rho - rho).abs() <= RATE_TOL, || {
        format!("cyclic radius {} (oracle {rho})", cyc.rho)
    })?;

    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data/cyclic_divergence.json");
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let status = Command::new(env!("CARGO_BIN_EXE_coupled-splitting"))
        .args(["solve", data, "--variant", "admm_cyclic_n", "--out"])
        .arg(out.path())
        .output()
        .map_err(|e| e.to_string())?
        .status;
    ensure(status.code() == Some(3), || format!("solve exited with {status}"))?;

    let report = lift(analyze(&inst, 1.0), "analyze")?;
    spectrum_checks(&inst, 1.0, &report)?;
    let x0 = DVector::from_element(3, 1.0);
    let trace = lift(
        run_expected_iteration(&inst, 1.0, &x0, &DVector::zeros(3), 1_000_000),
        "run_expected_iteration",
    )?;
    let last = trace.last();
    let (stat, feas) = qp_kkt_residual(&inst, &last.x, &last.mu);
    ensure(trace.converged && trace.final_step.unwrap_or(0.0) <= EXPECTED_STEP && stat.max(feas) <= KKT_TOL, || {
        format!("expected iteration: converged={} residual {:e}", trace.converged, stat.max(feas))
    })?;
    Ok(format!(
        "cyclic rho = {:.6} (solve exit 3); expected rho(M) = {:.6}, expectation converged in {} steps",
        cyc.rho, report.rho_m, last.k
    ))
}

/// BCD iteration matrices in both orders, built by hand.
fn bcd_oracle(h: &DMatrix<f64>, d1: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = h.nrows();
    let d2 = d - d1;
    let h11 = h.view((0, 0), (d1, d1)).into_owned();
    let h22 = h.view((d1, d1), (d2, d2)).into_owned();
    let h12 = h.view((0, d1), (d1, d2)).into_owned();
    let i11 = h11.try_inverse().unwrap();
    let i22 = h22.try_inverse().unwrap();
    let mut m1 = DMatrix::zeros(d, d);
    m1.view_mut((0, d1), (d1, d2)).copy_from(&(-&i11 * &h12));
    m1.view_mut((d1, d1), (d2, d2)).copy_from(&(&i22 * h12.transpose() * &i11 * &h12));
    let mut m2 = DMatrix::zeros(d, d);
    m2.view_mut((0, 0), (d1, d1)).copy_from(&(&i11 * &h12 * &i22 * h12.transpose()));
    m2.view_mut((d1, 0), (d2, d1)).copy_from(&(-&i22 * h12.transpose()));
    (m1, m2)
}

fn criterion_9() -> Outcome {
    let mut r = rng(9000);
    let mut largest_gap = 0.0_f64;
    for t in 0..100 {
        let (d1, d2) = (r.random_range(1..=3), r.random_range(1..=3));
        let d = d1 + d2;
        let h = loop {
            let rows = r.random_range(1..=d + 1);
            let h = sym(&random_psd(&mut r, d, rows));
            let dims = [d1, d2];
            if eig_min(&block(&h, &dims, 0, 0)) > 1e-3 && eig_min(&block(&h, &dims, 1, 1)) > 1e-3 {
                break h;
            }
        };
        let rates = lift(bcd_rate_matrices(&h, d1), "bcd_rate_matrices")?;
        let (m1, m2) = bcd_oracle(&h, d1);
        let (o1, o2) = (spectral_radius(&m1), spectral_radius(&m2));
        let o3 = spectral_radius(&((&m1 + &m2) * 0.5));
        let rr = rates.radii;
        ensure(
            (rr.rho1 - o1).abs() <= RATE_TOL && (rr.rho2 - o2).abs() <= RATE_TOL && (rr.rho3 - o3).abs() <= RATE_TOL,
            || format!("instance {t}: radii {rr:?} vs oracle ({o1}, {o2}, {o3})"),
        )?;
        ensure((o1 - o2).abs() <= RATE_TOL && (rr.rho1 - rr.rho2).abs() <= RATE_TOL, || {
            format!("instance {t}: rho(M1) = {o1} but rho(M2) = {o2}")
        })?;
        ensure(o3 >= o1 - RATE_TOL && rr.rho3 >= rr.rho1 - RATE_TOL, || {
            format!("instance {t}: rho(M3) = {o3} < rho(M1) = {o1}")
        })?;
        largest_gap = largest_gap.max(o3 - o1);
    }

    let mut cases: Vec<(f64, Option<f64>)> = vec![(0.5, Some(0.375)), (1.0, Some(1.0))];
    cases.extend((0..20).map(|_| (r.random_range(-1.0..1.0), None)));
    for (c, expected) in cases {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, c, c, 1.0]);
        let rates = lift(bcd_rate_matrices(&h, 1), "bcd_rate_matrices")?;
        let s1 = c * c;
        let closed = (s1 + s1.sqrt()) / 2.0;
        let rr = rates.radii;
        ensure(rr.sigma1.is_some_and(|s| (s - s1).abs() <= CLOSED_FORM_TOL), || {
            format!("c = {c}: sigma1 {:?}", rr.sigma1)
        })?;
        ensure((rr.rho3 - closed).abs() <= CLOSED_FORM_TOL, || {
            format!("c = {c}: rho(M3) = {} vs closed form {closed}", rr.rho3)
        })?;
        if let Some(v) = expected {
            ensure((rr.rho3 - v).abs() <= CLOSED_FORM_TOL, || format!("sigma1 = {s1}: rho(M3) = {}", rr.rho3))?;
        }
    }
    Ok(format!(
        "100 random H: rho(M1) = rho(M2), largest rho(M3) - rho(M1) = {largest_gap:.3}; 22 normalized cases match the closed form"
    ))
}

fn max_rel_gap(a: &IterateState, b: &IterateState) -> f64 {
    let scale = a.x.amax().max(a.mu.amax()).max(1.0);
    (&a.x - &b.x).amax().max((&a.mu - &b.mu).amax()) / scale
}

fn criterion_10() -> Outcome {
    let mut worst_admm = 0.0_f64;
    let mut worst_bcd = 0.0_f64;
    for t in 0..20u64 {
        let mut r = rng(10_000 + t);
        let beta = [0.5, 1.0, 2.0][t as usize % 3];
        let p = two_block_instance(&mut r, beta);
        let dims = p.inst.blocks.dims().to_vec();
        let (d, m) = (p.inst.d(), p.inst.m());
        let (scalars, mats): (Vec<f64>, Vec<DMatrix<f64>>) = (0..2)
            .map(|i| linearizing_r(&block(&p.inst.h, &dims, i, i), &a_cols(&p.inst.a, &dims, i), beta))
            .unzip();
        let lin = SolverConfig::new(Variant::Admm2Linearized).with_beta(beta).with_r_scalars(scalars);
        let prox = SolverConfig::new(Variant::Admm2).with_beta(beta).with_r(mats);
        let start = IterateState::new(uniform_vec(&mut r, d), uniform_vec(&mut r, m));
        let (mut a, mut b) = (start.clone(), start);
        for k in 0..100 {
            a = lift(admm2_linearized_step(&p.inst, &lin, &a), "admm2_linearized_step")?;
            b = lift(admm2_step(&p.inst, &prox, &b), "admm2_step")?;
            let gap = max_rel_gap(&a, &b);
            ensure(gap <= EQUIV_TOL, || format!("ADMM instance {t}, iteration {k}: gap {gap:e}"))?;
            worst_admm = worst_admm.max(gap);
        }

        let n = 2 + (t as usize % 2);
        let p = mixed_instance(&mut r, n, 0.0);
        let dims = p.inst.blocks.dims().to_vec();
        let (scalars, mats): (Vec<f64>, Vec<DMatrix<f64>>) = (0..n)
            .map(|i| linearizing_r(&block(&p.inst.h, &dims, i, i), &a_cols(&p.inst.a, &dims, i), 0.0))
            .unzip();
        let bcpg = SolverConfig::new(Variant::Bcpg).with_r_scalars(scalars);
        let bcd = SolverConfig::new(Variant::Bcd).with_r(mats);
        let start = IterateState::new(uniform_vec(&mut r, p.inst.d()), DVector::zeros(p.inst.m()));
        let (mut a, mut b) = (start.clone(), start);
        for k in 0..100 {
            a = lift(bcpg_step(&p.inst, &bcpg, &a), "bcpg_step")?;
            b = lift(bcd_step(&p.inst, &bcd, &b), "bcd_step")?;
            let gap = max_rel_gap(&a, &b);
            ensure(gap <= EQUIV_TOL, || format!("BCD instance {t}, iteration {k}: gap {gap:e}"))?;
            worst_bcd = worst_bcd.max(gap);
        }
    }
    Ok(format!(
        "20 instances x 100 iterations; largest gap {worst_admm:.1e} (ADMM), {worst_bcd:.1e} (BCD)"
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "two-block iterate convergence", criterion_1),
        (2, "Lyapunov contraction", criterion_2),
        (3, "o(1/k) residual decay", criterion_3),
        (4, "necessity witness", criterion_4),
        (5, "QS spectrum", criterion_5),
        (6, "rank identity and eigenvalue 1", criterion_6),
        (7, "expected iteration limit", criterion_7),
        (8, "cyclic divergence contrast", criterion_8),
        (9, "BCD rates", criterion_9),
        (10, "variant equivalences", criterion_10),
    ];
    // ACCEPTANCE_ONLY=2,3 runs a subset.
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let selected: Vec<_> = criteria
        .iter()
        .filter(|(id, _, _)| only.as_ref().is_none_or(|o| o.contains(id)))
        .collect();
    let handles: Vec<_> = selected
        .iter()
        .map(|&&(id, name, f)| {
            let h = thread::Builder::new()
                .stack_size(16 << 20)
                .spawn(move || {
                    let start = Instant::now();
                    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
                        let msg = e
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_default();
                        Err(format!("panicked: {msg}"))
                    });
                    eprintln!("criterion {id} finished in {:.1?}", start.elapsed());
                    out
                })
                .expect("spawn");
            (id, name, h)
        })
        .collect();
    let mut failed = 0;
    for (id, name, h) in handles {
        match h.join().expect("join") {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", selected.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
