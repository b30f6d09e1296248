//! Deterministic block-sweep engines: two-block proximal ADMM (optionally
//! linearized), cyclic n-block ADMM, and proximal BCD / BCPG.
//!
//! All variants share one sweep. For block `i` the subproblem is
//!
//! ```text
//! min θ_i(x_i) + ½ x_iᵀ E_i x_i - rhs_iᵀ x_i,   E_i = H_ii + β A_iᵀA_i + R_i
//! rhs_i = -(Σ_{j≠i} H_ij x_j + g_i) + A_iᵀμ - β A_iᵀ(Σ_{j≠i} A_j x_j - b) + R_i x_i^k
//! ```
//!
//! where the `β` and `μ` terms are absent for BCD. The multiplier update is
//! `μ ← μ - γβ(Ax - b)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{condition, Error, Result};
use crate::linalg;
use crate::model::{self, ConditionMode, KKTPoint, ProblemInstance};
use crate::prox::{self, ProxFn};

/// Upper end of the admissible dual stepsize interval, `(1 + √5) / 2`.
pub const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

/// Iterates whose norm exceeds this are declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Admm2,
    Admm2Linearized,
    AdmmCyclicN,
    Bcd,
    Bcpg,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Admm2,
        Variant::Admm2Linearized,
        Variant::AdmmCyclicN,
        Variant::Bcd,
        Variant::Bcpg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Admm2 => "admm2",
            Variant::Admm2Linearized => "admm2_linearized",
            Variant::AdmmCyclicN => "admm_cyclic_n",
            Variant::Bcd => "bcd",
            Variant::Bcpg => "bcpg",
        }
    }

    /// Uses the constraint rows and a multiplier.
    pub fn is_constrained(self) -> bool {
        !matches!(self, Variant::Bcd | Variant::Bcpg)
    }

    pub fn is_linearized(self) -> bool {
        matches!(self, Variant::Admm2Linearized | Variant::Bcpg)
    }

    pub fn is_two_block(self) -> bool {
        matches!(self, Variant::Admm2 | Variant::Admm2Linearized)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    /// Penalty parameter; ignored by `bcd` and `bcpg`.
    pub beta: f64,
    /// Dual stepsize in `(0, (1+√5)/2)`.
    pub gamma: f64,
    /// Proximal matrices `R_i`. Empty means all zero.
    pub r: Vec<DMatrix<f64>>,
    /// Linearization weights `r_i` for the linearized variants. `None` picks
    /// the smallest admissible values (see [`linearization_proximal`]).
    pub r_scalars: Option<Vec<f64>>,
    /// Stopping tolerance on the largest residual component.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Admm2,
            beta: 1.0,
            gamma: 1.0,
            r: Vec::new(),
            r_scalars: None,
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

impl SolverConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_r(mut self, r: Vec<DMatrix<f64>>) -> Self {
        self.r = r;
        self
    }

    pub fn with_r_scalars(mut self, r: Vec<f64>) -> Self {
        self.r_scalars = Some(r);
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    /// Checks `β > 0`, `0 < γ < (1+√5)/2`, `tol ≥ 0` and the proximal data.
    pub fn validate(&self, inst: &ProblemInstance) -> Result<()> {
        if self.variant.is_constrained() && !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < GOLDEN_RATIO) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, (1+sqrt 5)/2), got {}",
                self.gamma
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be nonnegative, got {}",
                self.tol
            )));
        }
        model::check_proximal_matrices(inst, &self.r)?;
        if let Some(rs) = &self.r_scalars {
            if rs.len() != inst.n() {
                return Err(Error::structural(
                    "r_scalars",
                    format!("expected {} weights, got {}", inst.n(), rs.len()),
                ));
            }
            if rs.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(Error::InvalidParameter(
                    "linearization weights must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    fn effective_beta(&self) -> f64 {
        if self.variant.is_constrained() {
            self.beta
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterateState {
    pub x: DVector<f64>,
    /// Previous primal iterate; equal to `x` at `k = 0`.
    pub x_prev: DVector<f64>,
    pub mu: DVector<f64>,
    pub k: usize,
}

impl IterateState {
    pub fn new(x: DVector<f64>, mu: DVector<f64>) -> Self {
        Self {
            x_prev: x.clone(),
            x,
            mu,
            k: 0,
        }
    }

    pub fn zeros(inst: &ProblemInstance) -> Self {
        Self::new(DVector::zeros(inst.d()), DVector::zeros(inst.m()))
    }

    pub fn is_divergent(&self) -> bool {
        let bad = |v: &DVector<f64>| {
            let n = v.norm();
            !n.is_finite() || n > DIVERGENCE_LIMIT
        };
        bad(&self.x) || bad(&self.mu)
    }

    fn check_dims(&self, inst: &ProblemInstance) -> Result<()> {
        if self.x.len() != inst.d() || self.x_prev.len() != inst.d() {
            return Err(Error::structural("x", format!("expected length {}", inst.d())));
        }
        if self.mu.len() != inst.m() {
            return Err(Error::structural("mu", format!("expected length {}", inst.m())));
        }
        Ok(())
    }
}

/// Linearization weights and the induced proximal matrices.
///
/// `Admm` mode uses `r_i = λ_max(H_ii + β A_iᵀA_i)`, `Bcd` mode uses
/// `r_i = λ_max(H_ii)`; in both cases `R_i = r_i I - (that matrix)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinearizationMode {
    Admm,
    Bcd,
}

pub fn linearization_proximal(
    inst: &ProblemInstance,
    beta: f64,
    mode: LinearizationMode,
) -> Vec<(f64, DMatrix<f64>)> {
    let beta = match mode {
        LinearizationMode::Admm => beta,
        LinearizationMode::Bcd => 0.0,
    };
    model::subproblem_blocks(inst, beta, false, &[])
        .into_iter()
        .map(|blk| {
            let r = linalg::sym_max_eig(&blk);
            let n = blk.nrows();
            (r, DMatrix::identity(n, n) * r - blk)
        })
        .collect()
}

/// How a block subproblem is solved.
#[derive(Clone, Debug)]
enum Route {
    /// θ_i zero or quadratic: factor `E_i + P_i`.
    Direct { factor: Factor, q: DVector<f64> },
    /// `E_i = r I`: one proximal step.
    Prox { r: f64 },
    /// Half-point gradient step followed by a proximal step with weight `r`.
    Linearized { r: f64 },
}

#[derive(Clone, Debug)]
enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    /// Minimum-norm solves for singular subproblems.
    PseudoInverse(DMatrix<f64>),
}

/// Treatment of singular zero/quadratic subproblems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubproblemPolicy {
    /// Refuse with a condition error.
    Strict,
    /// Pick the minimum-norm minimizer.
    MinNorm,
}

#[derive(Clone, Debug)]
struct BlockData {
    route: Route,
    /// `E_i = H_ii + β A_iᵀA_i + R_i` with the effective `R_i`.
    e: DMatrix<f64>,
    h_rows: DMatrix<f64>,
    h_ii: DMatrix<f64>,
    a_i: DMatrix<f64>,
}

/// A prepared sweep for one instance and configuration.
///
/// Preparation factors every block subproblem once; sweeps can then be run in
/// any block order.
#[derive(Clone, Debug)]
pub struct SweepEngine<'a> {
    inst: &'a ProblemInstance,
    variant: Variant,
    beta: f64,
    gamma: f64,
    r_eff: Vec<DMatrix<f64>>,
    blocks: Vec<BlockData>,
    warnings: Vec<String>,
}

impl<'a> SweepEngine<'a> {
    pub fn new(inst: &'a ProblemInstance, cfg: &SolverConfig) -> Result<Self> {
        Self::with_policy(inst, cfg, SubproblemPolicy::Strict)
    }

    pub fn with_policy(
        inst: &'a ProblemInstance,
        cfg: &SolverConfig,
        policy: SubproblemPolicy,
    ) -> Result<Self> {
        cfg.validate(inst)?;
        let beta = cfg.effective_beta();
        let mut warnings = Vec::new();
        let (r_eff, lin_weights) = if cfg.variant.is_linearized() {
            let mode = if cfg.variant.is_constrained() {
                LinearizationMode::Admm
            } else {
                LinearizationMode::Bcd
            };
            let auto = linearization_proximal(inst, beta, mode);
            let weights: Vec<f64> = match &cfg.r_scalars {
                Some(rs) => {
                    for (i, (&r, (rmin, _))) in rs.iter().zip(&auto).enumerate() {
                        if r < *rmin * (1.0 - 1e-12) {
                            warnings.push(format!(
                                "block {}: linearization weight {r} is below the largest eigenvalue {rmin}; proximal term is indefinite",
                                i + 1
                            ));
                        }
                    }
                    rs.clone()
                }
                None => auto.iter().map(|(r, _)| *r).collect(),
            };
            let blocks = model::subproblem_blocks(inst, beta, false, &[]);
            let r_eff = blocks
                .iter()
                .zip(&weights)
                .map(|(blk, &r)| DMatrix::identity(blk.nrows(), blk.nrows()) * r - blk)
                .collect();
            (r_eff, Some(weights))
        } else {
            let r_eff = if cfg.r.is_empty() {
                inst.blocks
                    .dims()
                    .iter()
                    .map(|&d| DMatrix::zeros(d, d))
                    .collect()
            } else {
                cfg.r.clone()
            };
            (r_eff, None)
        };

        let mut blocks = Vec::with_capacity(inst.n());
        for i in 0..inst.n() {
            let range = inst.blocks.range(i);
            let a_i = inst.a_block(i);
            let h_ii = inst.h_block(i, i);
            let e = &h_ii + a_i.transpose() * &a_i * beta + &r_eff[i];
            let theta = &inst.theta[i];
            let route = match &lin_weights {
                Some(w) => {
                    if !(w[i] > 0.0) {
                        return Err(Error::Condition {
                            condition: condition::SUBPROBLEM_SINGULAR,
                            detail: format!("block {}: linearization weight is zero", i + 1),
                        });
                    }
                    Route::Linearized { r: w[i] }
                }
                None => direct_or_prox(i, theta, &e, policy)?,
            };
            blocks.push(BlockData {
                route,
                e,
                h_rows: inst.h.rows(range.start, range.len()).into_owned(),
                h_ii,
                a_i,
            });
        }
        Ok(Self {
            inst,
            variant: cfg.variant,
            beta,
            gamma: cfg.gamma,
            r_eff,
            blocks,
            warnings,
        })
    }

    pub fn instance(&self) -> &ProblemInstance {
        self.inst
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Effective proximal matrices (for linearized variants, `r_i I - E_i^0`).
    pub fn proximal_matrices(&self) -> &[DMatrix<f64>] {
        &self.r_eff
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `rhs_i` evaluated at the current mixed iterate `x` (blocks already
    /// updated in this sweep hold new values).
    fn rhs(&self, i: usize, x: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        let blk = &self.blocks[i];
        let xi = self.inst.block_of(x, i);
        let coupling = &blk.h_rows * x - &blk.h_ii * &xi;
        let gi = self.inst.block_of(&self.inst.g, i);
        let mut rhs = -(coupling + gi) + &self.r_eff[i] * &xi;
        if self.variant.is_constrained() {
            let others = &self.inst.a * x - &blk.a_i * &xi - &self.inst.b;
            rhs += blk.a_i.transpose() * (mu - others * self.beta);
        }
        rhs
    }

    /// Minimizer of block `i`'s subproblem given the mixed iterate `x`.
    pub fn solve_block(&self, i: usize, x: &DVector<f64>, mu: &DVector<f64>) -> Result<DVector<f64>> {
        let blk = &self.blocks[i];
        let theta = &self.inst.theta[i];
        match &blk.route {
            Route::Direct { factor, q } => {
                let rhs = self.rhs(i, x, mu) - q;
                Ok(match factor {
                    Factor::Cholesky(ch) => ch.solve(&rhs),
                    Factor::PseudoInverse(pinv) => pinv * rhs,
                })
            }
            Route::Prox { r } => {
                let rhs = self.rhs(i, x, mu);
                prox::prox_eval(theta, *r, &(rhs / *r))
            }
            Route::Linearized { r } => {
                let half = self.half_point(i, *r, x, mu);
                prox::prox_eval(theta, *r, &half)
            }
        }
    }

    /// `[(rI - H_ii - βA_iᵀA_i) x_i - βA_iᵀ(Σ_{j≠i} A_j x_j - b) - Σ_{j≠i} H_ij x_j - g_i + A_iᵀμ] / r`
    fn half_point(&self, i: usize, r: f64, x: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        let blk = &self.blocks[i];
        let xi = self.inst.block_of(x, i);
        let di = xi.len();
        let gi = self.inst.block_of(&self.inst.g, i);
        let coupling = &blk.h_rows * x - &blk.h_ii * &xi;
        let mut curv = DMatrix::identity(di, di) * r - &blk.h_ii;
        let mut v = -coupling - gi;
        if self.variant.is_constrained() {
            curv -= blk.a_i.transpose() * &blk.a_i * self.beta;
            let others = &self.inst.a * x - &blk.a_i * &xi - &self.inst.b;
            v -= blk.a_i.transpose() * others * self.beta;
            v += blk.a_i.transpose() * mu;
        }
        (curv * xi + v) / r
    }

    /// Distance from zero to the subdifferential of block `i`'s subproblem
    /// objective at `candidate`, with the rest of the iterate taken from `x`.
    pub fn subproblem_residual(
        &self,
        i: usize,
        x: &DVector<f64>,
        mu: &DVector<f64>,
        candidate: &DVector<f64>,
    ) -> Result<f64> {
        let rhs = self.rhs(i, x, mu);
        let s = &self.blocks[i].e * candidate - rhs;
        prox::subdiff_distance(&self.inst.theta[i], candidate, &s)
    }

    /// One sweep over the blocks in `order` (0-based), then the multiplier update.
    pub fn sweep(&self, state: &IterateState, order: &[usize]) -> Result<IterateState> {
        state.check_dims(self.inst)?;
        let mut x = state.x.clone();
        for &i in order {
            let xi = self.solve_block(i, &x, &state.mu)?;
            let off = self.inst.blocks.offsets()[i];
            x.rows_mut(off, xi.len()).copy_from(&xi);
        }
        let mu = self.dual_update(&state.mu, &x);
        Ok(IterateState {
            x_prev: state.x.clone(),
            x,
            mu,
            k: state.k + 1,
        })
    }

    pub(crate) fn dual_update(&self, mu: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        if self.variant.is_constrained() {
            mu - (&self.inst.a * x - &self.inst.b) * (self.gamma * self.beta)
        } else {
            mu.clone()
        }
    }

    pub fn identity_order(&self) -> Vec<usize> {
        (0..self.inst.n()).collect()
    }

    pub fn step(&self, state: &IterateState) -> Result<IterateState> {
        self.sweep(state, &self.identity_order())
    }

    /// Per-block surrogate dual residuals for a sweep in `order` that produced
    /// `next` from `prev`:
    /// `-R_i Δx_i + Σ_{j after i} (H_ij + β A_iᵀA_j) Δx_j`.
    pub fn surrogate_dual(&self, prev: &IterateState, next: &IterateState, order: &[usize]) -> Vec<f64> {
        let dx = &next.x - &prev.x;
        let mut out = vec![0.0; self.inst.n()];
        for (pos, &i) in order.iter().enumerate() {
            let blk = &self.blocks[i];
            let mut s = -(&self.r_eff[i] * self.inst.block_of(&dx, i));
            for &j in &order[pos + 1..] {
                let dxj = self.inst.block_of(&dx, j);
                s += self.inst.h_block(i, j) * &dxj;
                if self.variant.is_constrained() {
                    s += blk.a_i.transpose() * (self.inst.a_block(j) * dxj) * self.beta;
                }
            }
            out[i] = s.norm();
        }
        out
    }

    fn residuals(&self, x: &DVector<f64>, mu: &DVector<f64>) -> Result<model::ResidualTriple> {
        model::residual_parts(self.inst, x, mu, !self.variant.is_constrained())
    }

    /// Builds a trace record for `next`, produced from `prev` by a sweep in
    /// `order` (or the initial record when `prev` is `None`).
    pub(crate) fn record(
        &self,
        prev: Option<&IterateState>,
        next: &IterateState,
        order: &[usize],
        reference: Option<&KKTPoint>,
    ) -> Result<TraceRecord> {
        let res = self.residuals(&next.x, &next.mu)?;
        let surrogate_dual = prev.map(|p| self.surrogate_dual(p, next, order));
        let surrogate = surrogate_dual.as_ref().map(|s| {
            (s.iter().map(|v| v * v).sum::<f64>() + res.r_feas * res.r_feas).sqrt()
        });
        let lyapunov_enabled = reference.is_some() && self.inst.n() == 2;
        let (lyapunov, contraction_bound) = if lyapunov_enabled {
            let reference = reference.expect("checked");
            let v = lyapunov_with(self.inst, self.beta, &self.r_eff, next, reference);
            let bound = prev.map(|p| contraction_bound_with(self.inst, self.beta, &self.r_eff, p, next));
            (Some(v), bound)
        } else {
            (None, None)
        };
        Ok(TraceRecord {
            k: next.k,
            r_dual: res.r_dual,
            r_feas: res.r_feas,
            surrogate_dual,
            surrogate,
            objective: self.inst.objective(&next.x),
            lyapunov,
            contraction_bound,
        })
    }
}

fn direct_or_prox(
    i: usize,
    theta: &ProxFn,
    e: &DMatrix<f64>,
    policy: SubproblemPolicy,
) -> Result<Route> {
    if let Some((p, q)) = theta.quadratic_parts() {
        let mat = e + p;
        let scale = linalg::max_abs(&mat).max(1.0);
        let min_eig = linalg::sym_eigenvalues(&mat)[0];
        let factor = if min_eig > 1e-12 * scale {
            Factor::Cholesky(
                mat.clone()
                    .cholesky()
                    .ok_or_else(|| Error::Numerical(format!("block {}: Cholesky failed", i + 1)))?,
            )
        } else {
            match policy {
                SubproblemPolicy::Strict => {
                    return Err(Error::Condition {
                        condition: condition::SUBPROBLEM_SINGULAR,
                        detail: format!(
                            "block {}: subproblem matrix is singular (min eigenvalue {min_eig:e})",
                            i + 1
                        ),
                    })
                }
                SubproblemPolicy::MinNorm => {
                    let svd = nalgebra::SVD::new(mat.clone(), true, true);
                    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
                    let pinv = if smax == 0.0 {
                        DMatrix::zeros(mat.nrows(), mat.ncols())
                    } else {
                        svd.pseudo_inverse(linalg::RANK_RTOL * smax)
                            .map_err(|e| Error::Numerical(e.to_string()))?
                    };
                    Factor::PseudoInverse(pinv)
                }
            }
        };
        return Ok(Route::Direct { factor, q });
    }
    let d = e.nrows();
    let r = e.trace() / d as f64;
    let off = (e - DMatrix::identity(d, d) * r).abs().max();
    if r > 0.0 && off <= 1e-12 * r {
        return Ok(Route::Prox { r });
    }
    if r <= 0.0 && off <= 1e-12 {
        return Err(Error::Condition {
            condition: condition::SUBPROBLEM_SINGULAR,
            detail: format!("block {}: subproblem matrix is zero", i + 1),
        });
    }
    Err(Error::Unsupported(format!(
        "block {}: `{}` term with a non-identity subproblem matrix has no closed-form solve; use a linearized variant",
        i + 1,
        theta.kind.name()
    )))
}

fn lyapunov_with(
    inst: &ProblemInstance,
    beta: f64,
    r_eff: &[DMatrix<f64>],
    state: &IterateState,
    reference: &KKTPoint,
) -> f64 {
    let sigma = inst.sigma();
    let r = linalg::block_diag(r_eff);
    let dx = &state.x - &reference.x;
    let a2 = inst.a_block(1);
    let w2 = inst.h_block(1, 1) + &inst.theta[1].sigma + a2.transpose() * &a2 * beta;
    let dx2 = inst.block_of(&dx, 1);
    let back2 = inst.block_of(&(&state.x - &state.x_prev), 1);
    let mut v = 7.0 / 8.0 * linalg::wnorm_sq(&dx, &(&inst.h + &sigma + r * (4.0 / 7.0)))
        + 0.5 * linalg::wnorm_sq(&dx2, &w2)
        + 0.5 * linalg::wnorm_sq(&back2, &r_eff[1]);
    if beta > 0.0 {
        v += (&state.mu - &reference.mu).norm_squared() / (2.0 * beta);
    }
    v
}

fn contraction_bound_with(
    inst: &ProblemInstance,
    beta: f64,
    r_eff: &[DMatrix<f64>],
    prev: &IterateState,
    next: &IterateState,
) -> f64 {
    let sigma = inst.sigma();
    let r = linalg::block_diag(r_eff);
    let dx = &next.x - &prev.x;
    let dx2 = inst.block_of(&dx, 1);
    let a2 = inst.a_block(1);
    let w2 = inst.h_block(1, 1) + &inst.theta[1].sigma + a2.transpose() * &a2 * (3.0 * beta);
    let mut v = linalg::wnorm_sq(&dx, &(&inst.h + sigma + r * 8.0)) / 16.0
        + linalg::wnorm_sq(&dx2, &w2) / 6.0;
    if beta > 0.0 {
        v += (&next.mu - &prev.mu).norm_squared() / (2.0 * beta);
    }
    v
}

fn require_two_blocks(inst: &ProblemInstance, what: &str) -> Result<()> {
    if inst.n() != 2 {
        return Err(Error::Usage(format!(
            "{what} needs exactly 2 blocks, instance has {}",
            inst.n()
        )));
    }
    Ok(())
}

/// Two-block contraction measure against a KKT point:
///
/// ```text
/// 7/8 ‖x - x̄‖²_{H+Σ+(4/7)R} + ½‖x₂ - x̄₂‖²_{H₂₂+Σ₂+βA₂ᵀA₂}
///   + (1/2β)‖μ - μ̄‖² + ½‖x₂ - x₂_prev‖²_{R₂}
/// ```
///
/// `R` is the effective proximal matrix of the configured variant.
pub fn lyapunov_value(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    state: &IterateState,
    reference: &KKTPoint,
) -> Result<f64> {
    require_two_blocks(inst, "the contraction measure")?;
    let engine = SweepEngine::with_policy(inst, cfg, SubproblemPolicy::MinNorm)?;
    Ok(lyapunov_with(inst, engine.beta, &engine.r_eff, state, reference))
}

/// Guaranteed per-step decrease of [`lyapunov_value`] from `prev` to `next`:
///
/// ```text
/// (1/16)‖Δx‖²_{H+Σ+8R} + (1/6)‖Δx₂‖²_{H₂₂+Σ₂+3βA₂ᵀA₂} + (1/2β)‖Δμ‖²
/// ```
pub fn lyapunov_decrease_bound(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    prev: &IterateState,
    next: &IterateState,
) -> Result<f64> {
    require_two_blocks(inst, "the contraction measure")?;
    let engine = SweepEngine::with_policy(inst, cfg, SubproblemPolicy::MinNorm)?;
    Ok(contraction_bound_with(inst, engine.beta, &engine.r_eff, prev, next))
}

fn step_with(inst: &ProblemInstance, cfg: &SolverConfig, variant: Variant, state: &IterateState) -> Result<IterateState> {
    let cfg = SolverConfig {
        variant,
        ..cfg.clone()
    };
    SweepEngine::new(inst, &cfg)?.step(state)
}

/// One two-block proximal ADMM iteration with the configured `R_i`.
pub fn admm2_step(inst: &ProblemInstance, cfg: &SolverConfig, state: &IterateState) -> Result<IterateState> {
    require_two_blocks(inst, "admm2")?;
    step_with(inst, cfg, Variant::Admm2, state)
}

/// One linearized two-block ADMM iteration (half-point plus proximal step).
pub fn admm2_linearized_step(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    state: &IterateState,
) -> Result<IterateState> {
    require_two_blocks(inst, "admm2_linearized")?;
    step_with(inst, cfg, Variant::Admm2Linearized, state)
}

/// One cyclic n-block ADMM iteration.
pub fn admm_cyclic_n_step(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    state: &IterateState,
) -> Result<IterateState> {
    step_with(inst, cfg, Variant::AdmmCyclicN, state)
}

/// One cyclic proximal BCD sweep; constraint rows are ignored.
pub fn bcd_step(inst: &ProblemInstance, cfg: &SolverConfig, state: &IterateState) -> Result<IterateState> {
    step_with(inst, cfg, Variant::Bcd, state)
}

/// One block proximal-gradient sweep.
pub fn bcpg_step(inst: &ProblemInstance, cfg: &SolverConfig, state: &IterateState) -> Result<IterateState> {
    step_with(inst, cfg, Variant::Bcpg, state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Diverged,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::Diverged => "diverged",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// Exact per-block dual residuals; `None` for blocks without a
    /// subdifferential oracle.
    pub r_dual: Vec<Option<f64>>,
    pub r_feas: f64,
    /// Per-block surrogate dual residuals (undefined at `k = 0`).
    pub surrogate_dual: Option<Vec<f64>>,
    /// Euclidean norm of the surrogate triple.
    pub surrogate: Option<f64>,
    pub objective: Option<f64>,
    pub lyapunov: Option<f64>,
    /// Guaranteed decrease of `lyapunov` over the step ending at this record.
    pub contraction_bound: Option<f64>,
}

impl TraceRecord {
    pub fn is_exact(&self) -> bool {
        self.r_dual.iter().all(Option::is_some)
    }

    /// Largest residual component: exact when available, surrogate otherwise.
    pub fn max_residual(&self) -> Option<f64> {
        if self.is_exact() {
            Some(
                self.r_dual
                    .iter()
                    .flatten()
                    .fold(self.r_feas, |a, &b| a.max(b)),
            )
        } else {
            self.surrogate_dual
                .as_ref()
                .map(|s| s.iter().fold(self.r_feas, |a, &b| a.max(b)))
        }
    }

    /// Sum of squared residual components, exact or surrogate as above.
    pub fn residual_sq(&self) -> Option<f64> {
        let feas = self.r_feas * self.r_feas;
        if self.is_exact() {
            Some(self.r_dual.iter().flatten().map(|v| v * v).sum::<f64>() + feas)
        } else {
            self.surrogate_dual
                .as_ref()
                .map(|s| s.iter().map(|v| v * v).sum::<f64>() + feas)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub n_blocks: usize,
    pub records: Vec<TraceRecord>,
    pub status: Status,
    pub final_state: IterateState,
    pub warnings: Vec<String>,
}

impl Trace {
    pub fn iterations(&self) -> usize {
        self.final_state.k
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace has an initial record")
    }

    /// CSV with columns `k,r_dual_1..r_dual_n,r_feas,surrogate,objective,lyapunov`.
    /// `comments` are emitted as leading `#` lines; the terminal status is the
    /// last line.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str(&csv_header(self.n_blocks, false));
        out.push('\n');
        self.push_rows(&mut out, None);
        out.push_str(&self.status_line(None));
        out
    }

    pub(crate) fn push_rows(&self, out: &mut String, trial: Option<usize>) {
        for rec in &self.records {
            let mut cells: Vec<String> = Vec::with_capacity(self.n_blocks + 6);
            if let Some(t) = trial {
                cells.push(t.to_string());
            }
            cells.push(rec.k.to_string());
            cells.extend(rec.r_dual.iter().map(|r| opt_num(*r)));
            cells.push(fmt_num(rec.r_feas));
            cells.push(opt_num(rec.surrogate));
            cells.push(opt_num(rec.objective));
            cells.push(opt_num(rec.lyapunov));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
    }

    pub(crate) fn status_line(&self, trial: Option<usize>) -> String {
        let prefix = trial.map(|t| format!("trial={t},")).unwrap_or_default();
        let mut s = format!("# {prefix}status={},k={}\n", self.status, self.iterations());
        for w in &self.warnings {
            s.push_str(&format!("# warning: {w}\n"));
        }
        s
    }
}

pub(crate) fn csv_header(n_blocks: usize, with_trial: bool) -> String {
    let mut cols: Vec<String> = Vec::new();
    if with_trial {
        cols.push("trial".into());
    }
    cols.push("k".into());
    cols.extend((1..=n_blocks).map(|i| format!("r_dual_{i}")));
    for c in ["r_feas", "surrogate", "objective", "lyapunov"] {
        cols.push(c.into());
    }
    cols.join(",")
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// Runs the configured variant from `(x0, mu0)` until the largest residual
/// component is at most `tol`, `max_iter` iterations, or divergence.
pub fn run_solver(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    x0: &DVector<f64>,
    mu0: &DVector<f64>,
    reference: Option<&KKTPoint>,
) -> Result<Trace> {
    let engine = prepare_run(inst, cfg)?;
    let order = engine.identity_order();
    run_with_orders(&engine, cfg, x0, mu0, reference, |_| order.clone(), &mut |_| {})
}

/// Variant prerequisites that are checked once per run.
pub(crate) fn prepare_run<'a>(inst: &'a ProblemInstance, cfg: &SolverConfig) -> Result<SweepEngine<'a>> {
    if cfg.variant.is_two_block() {
        require_two_blocks(inst, cfg.variant.name())?;
    }
    if cfg.variant.is_two_block() {
        let probe = SweepEngine::with_policy(inst, cfg, SubproblemPolicy::MinNorm)?;
        let report = model::check_uniqueness_condition(inst, &probe.r_eff, ConditionMode::TwoBlockFull)?;
        model::require_condition(&report)?;
    }
    SweepEngine::new(inst, cfg)
}

pub(crate) fn run_with_orders<F>(
    engine: &SweepEngine<'_>,
    cfg: &SolverConfig,
    x0: &DVector<f64>,
    mu0: &DVector<f64>,
    reference: Option<&KKTPoint>,
    mut next_order: F,
    observe: &mut dyn FnMut(&IterateState),
) -> Result<Trace>
where
    F: FnMut(usize) -> Vec<usize>,
{
    let inst = engine.inst;
    let mu0 = if engine.variant.is_constrained() {
        mu0.clone()
    } else {
        DVector::zeros(inst.m())
    };
    let mut state = IterateState::new(x0.clone(), mu0);
    state.check_dims(inst)?;
    observe(&state);
    let identity = engine.identity_order();
    let mut records = vec![engine.record(None, &state, &identity, reference)?];
    let mut status = Status::MaxIter;
    let converged = |rec: &TraceRecord| rec.max_residual().is_some_and(|r| r <= cfg.tol);
    if converged(&records[0]) {
        status = Status::Converged;
    } else {
        for k in 0..cfg.max_iter {
            let order = next_order(k);
            let next = engine.sweep(&state, &order)?;
            observe(&next);
            if next.is_divergent() {
                state = next;
                status = Status::Diverged;
                break;
            }
            let rec = engine.record(Some(&state), &next, &order, reference)?;
            state = next;
            let done = converged(&rec);
            records.push(rec);
            if done {
                status = Status::Converged;
                break;
            }
        }
    }
    Ok(Trace {
        n_blocks: inst.n(),
        records,
        status,
        final_state: state,
        warnings: engine.warnings.clone(),
    })
}

/// `(k, k · min_{1≤i≤k} residual²_i)` over the records with `k ≥ 1`.
pub fn min_kkt_sq_curve(trace: &Trace) -> Vec<(usize, f64)> {
    let mut best = f64::INFINITY;
    trace
        .records
        .iter()
        .filter(|r| r.k >= 1)
        .filter_map(|r| {
            let sq = r.residual_sq()?;
            best = best.min(sq);
            Some((r.k, r.k as f64 * best))
        })
        .collect()
}
