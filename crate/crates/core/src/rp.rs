//! Randomly permuted sweeps: every iteration updates the blocks in a fresh
//! uniformly drawn order, then updates the multiplier.
//!
//! Permutation `counter` of a sampler seeded with `seed` is drawn from a
//! ChaCha8 stream keyed by `(seed, counter)`, so any single draw can be
//! reproduced without replaying the ones before it. Trial `t` of a
//! multi-trial run uses the seed `seed ^ t`.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::solver::{self, fmt_num, IterateState, SolverConfig, SweepEngine, Trace};
use crate::spectral;

/// Expected iterations stop once a step is at most this long.
pub const EXPECTED_STEP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationSampler {
    seed: u64,
    counter: u64,
}

impl PermutationSampler {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of the next draw.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Draw `counter` of the stream keyed by `seed`, as a 0-based order.
    pub fn permutation_at(seed: u64, counter: u64, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(counter);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        perm
    }

    pub fn sample(&mut self, n: usize) -> Vec<usize> {
        let perm = Self::permutation_at(self.seed, self.counter, n);
        self.counter += 1;
        perm
    }
}

/// Uniform random order of `n` blocks (0-based); advances the sampler.
pub fn sample_permutation(sampler: &mut PermutationSampler, n: usize) -> Vec<usize> {
    sampler.sample(n)
}

/// Seed of trial `trial` in a run seeded with `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed ^ trial as u64
}

/// One sweep in the 0-based block order `sigma`, then the multiplier update.
pub fn rp_sweep(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    state: &IterateState,
    sigma: &[usize],
) -> Result<IterateState> {
    let n = inst.n();
    let mut sorted = sigma.to_vec();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::InvalidParameter(format!(
            "{sigma:?} is not a permutation of the {n} blocks"
        )));
    }
    SweepEngine::new(inst, cfg)?.sweep(state, sigma)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationMode {
    /// Propagated through the expected update matrix.
    Exact,
    /// Average over sampled trials.
    SampleMean,
}

impl ExpectationMode {
    pub fn name(self) -> &'static str {
        match self {
            ExpectationMode::Exact => "exact",
            ExpectationMode::SampleMean => "sample_mean",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpectationRow {
    pub k: usize,
    pub x: DVector<f64>,
    pub mu: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpectationTrace {
    pub mode: ExpectationMode,
    pub rows: Vec<ExpectationRow>,
    /// Number of trials behind a sample mean; 0 in exact mode.
    pub trials: usize,
    /// Per-trial sampler seeds; empty in exact mode.
    pub seeds: Vec<u64>,
    /// Exact mode: the last step fell below [`EXPECTED_STEP_TOL`].
    pub converged: bool,
    /// Length of the last step `‖z^{k+1} - z^k‖`.
    pub final_step: Option<f64>,
}

impl ExpectationTrace {
    pub fn last(&self) -> &ExpectationRow {
        self.rows.last().expect("expectation trace has an initial row")
    }

    pub fn row(&self, k: usize) -> Option<&ExpectationRow> {
        self.rows.get(k).filter(|r| r.k == k)
    }

    /// CSV with columns `k,Ex_1..Ex_d,Emu_1..Emu_m,mode`.
    pub fn to_csv(&self, comments: &[String]) -> String {
        expectation_csv(&[self], comments)
    }
}

/// Writes several expectation traces (for instance exact and sample mean)
/// into one CSV document.
pub fn expectation_csv(traces: &[&ExpectationTrace], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    let (d, m) = traces
        .first()
        .and_then(|t| t.rows.first())
        .map_or((0, 0), |r| (r.x.len(), r.mu.len()));
    let mut cols = vec!["k".to_string()];
    cols.extend((1..=d).map(|i| format!("Ex_{i}")));
    cols.extend((1..=m).map(|i| format!("Emu_{i}")));
    cols.push("mode".into());
    out.push_str(&cols.join(","));
    out.push('\n');
    for t in traces {
        for row in &t.rows {
            let mut cells = vec![row.k.to_string()];
            cells.extend(row.x.iter().map(|v| fmt_num(*v)));
            cells.extend(row.mu.iter().map(|v| fmt_num(*v)));
            cells.push(t.mode.name().into());
            out.push_str(&cells.join(","));
            out.push('\n');
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct RpRun {
    pub traces: Vec<Trace>,
    pub seeds: Vec<u64>,
    pub mean: ExpectationTrace,
}

impl RpRun {
    /// Per-trial traces in one CSV, with a leading `trial` column.
    pub fn traces_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            out.push_str(&format!("# {c}\n"));
        }
        let n_blocks = self.traces.first().map_or(0, |t| t.n_blocks);
        out.push_str(&solver::csv_header(n_blocks, true));
        out.push('\n');
        for (t, trace) in self.traces.iter().enumerate() {
            trace.push_rows(&mut out, Some(t));
        }
        for (t, trace) in self.traces.iter().enumerate() {
            out.push_str(&trace.status_line(Some(t)));
        }
        out
    }
}

/// Runs `trials` independent randomly permuted runs of the configured variant.
///
/// The sample mean at iteration `k` averages the trials' iterates, holding a
/// trial at its final iterate once it has stopped.
pub fn run_rp_solver(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    x0: &DVector<f64>,
    mu0: &DVector<f64>,
    seed: u64,
    trials: usize,
) -> Result<RpRun> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let engine = solver::prepare_run(inst, cfg)?;
    let n = inst.n();
    let (d, m) = (inst.d(), inst.m());
    let mut sum_x: Vec<DVector<f64>> = Vec::new();
    let mut sum_mu: Vec<DVector<f64>> = Vec::new();
    let mut finals = Vec::with_capacity(trials);
    let mut traces = Vec::with_capacity(trials);
    let mut seeds = Vec::with_capacity(trials);
    for t in 0..trials {
        let s = trial_seed(seed, t);
        let mut sampler = PermutationSampler::new(s);
        let mut len = 0;
        let trace = solver::run_with_orders(
            &engine,
            cfg,
            x0,
            mu0,
            None,
            |_| sampler.sample(n),
            &mut |state: &IterateState| {
                if sum_x.len() <= len {
                    sum_x.push(DVector::zeros(d));
                    sum_mu.push(DVector::zeros(m));
                }
                sum_x[len] += &state.x;
                sum_mu[len] += &state.mu;
                len += 1;
            },
        )?;
        finals.push((len, trace.final_state.x.clone(), trace.final_state.mu.clone()));
        traces.push(trace);
        seeds.push(s);
    }
    let horizon = sum_x.len();
    for (len, x, mu) in &finals {
        for k in *len..horizon {
            sum_x[k] += x;
            sum_mu[k] += mu;
        }
    }
    let scale = 1.0 / trials as f64;
    let rows = sum_x
        .into_iter()
        .zip(sum_mu)
        .enumerate()
        .map(|(k, (x, mu))| ExpectationRow {
            k,
            x: x * scale,
            mu: mu * scale,
        })
        .collect();
    let all_converged = traces.iter().all(|t| t.status == solver::Status::Converged);
    Ok(RpRun {
        traces,
        seeds: seeds.clone(),
        mean: ExpectationTrace {
            mode: ExpectationMode::SampleMean,
            rows,
            trials,
            seeds,
            converged: all_converged,
            final_step: None,
        },
    })
}

/// Propagates `E z^{k+1} = M E z^k + E[L̄_σ⁻¹] b̄` from `z⁰ = (x0, mu0)` for up
/// to `k_max` steps, stopping early once a step is at most
/// [`EXPECTED_STEP_TOL`]. Only defined when every separable term is zero.
pub fn run_expected_iteration(
    inst: &ProblemInstance,
    beta: f64,
    x0: &DVector<f64>,
    mu0: &DVector<f64>,
    k_max: usize,
) -> Result<ExpectationTrace> {
    if !inst.all_theta_zero() {
        return Err(Error::Unsupported(
            "the exact expected iteration needs every separable term to be zero".into(),
        ));
    }
    let (d, m) = (inst.d(), inst.m());
    if x0.len() != d || mu0.len() != m {
        return Err(Error::structural("x0", format!("expected lengths {d} and {m}")));
    }
    let report = spectral::build_q_m(inst, beta)?;
    let mm = report.m_matrix();
    let q = report.q_matrix();
    // E[L̄_σ⁻¹] = [Q 0; -βAQ I]
    let bbar = spectral::bbar(inst, beta, 1.0);
    let c = bbar.rows(0, d).into_owned();
    let qc = &q * c;
    let mut offset = DVector::zeros(d + m);
    offset.rows_mut(0, d).copy_from(&qc);
    offset
        .rows_mut(d, m)
        .copy_from(&(bbar.rows(d, m) - &inst.a * &qc * beta));

    let mut z = DVector::zeros(d + m);
    z.rows_mut(0, d).copy_from(x0);
    z.rows_mut(d, m).copy_from(mu0);
    let split = |k: usize, z: &DVector<f64>| ExpectationRow {
        k,
        x: z.rows(0, d).into_owned(),
        mu: z.rows(d, m).into_owned(),
    };
    let mut rows = vec![split(0, &z)];
    let mut converged = false;
    let mut final_step = None;
    for k in 1..=k_max {
        let next = &mm * &z + &offset;
        let step = (&next - &z).norm();
        z = next;
        rows.push(split(k, &z));
        final_step = Some(step);
        if !step.is_finite() {
            break;
        }
        if step <= EXPECTED_STEP_TOL {
            converged = true;
            break;
        }
    }
    Ok(ExpectationTrace {
        mode: ExpectationMode::Exact,
        rows,
        trials: 0,
        seeds: Vec::new(),
        converged,
        final_step,
    })
}

/// Euclidean norm of the residual of `[H -Aᵀ; βA 0][x; μ] = [-g; βb]`.
pub fn kkt_system_residual(inst: &ProblemInstance, beta: f64, x: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    let top = &inst.h * x - inst.a.transpose() * mu + &inst.g;
    let bottom = (&inst.a * x - &inst.b) * beta;
    (top.norm_squared() + bottom.norm_squared()).sqrt()
}
