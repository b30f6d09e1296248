//! Problem instances
//!
//! ```text
//! minimize   Σ θ_i(x_i) + ½ xᵀ H x + gᵀ x
//! subject to Σ A_i x_i = b
//! ```
//!
//! plus structural validation, the subproblem-uniqueness tests, and a direct
//! KKT solve used as ground truth for quadratic instances.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{condition, Error, Result};
use crate::linalg;
use crate::prox::{self, ProxFn};

/// Default threshold for "positive definite" in the uniqueness tests.
pub const CONDITION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockStructure {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    m: usize,
}

impl BlockStructure {
    pub fn new(dims: Vec<usize>, m: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::structural("blocks", "at least one block is required"));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::structural("blocks", format!("block {i} has size 0")));
        }
        let offsets = dims
            .iter()
            .scan(0, |acc, &d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        Ok(Self { dims, offsets, m })
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }

    pub fn d(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn dim(&self, i: usize) -> usize {
        self.dims[i]
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.dims[i]
    }
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub blocks: BlockStructure,
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    /// `m × d`; column block `i` is `A_i`.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub theta: Vec<ProxFn>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub symmetry_defect: f64,
    pub min_eig_h: f64,
    pub norm_h: f64,
    pub partition_consistent: bool,
}

impl ProblemInstance {
    /// Builds and validates an instance.
    pub fn new(
        dims: Vec<usize>,
        h: DMatrix<f64>,
        g: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        theta: Vec<ProxFn>,
    ) -> Result<Self> {
        let blocks = BlockStructure::new(dims, a.nrows())?;
        let inst = Self {
            blocks,
            h,
            g,
            a,
            b,
            theta,
        };
        validate_instance(&inst)?;
        Ok(inst)
    }

    /// Instance with every separable term identically zero.
    pub fn quadratic(
        dims: Vec<usize>,
        h: DMatrix<f64>,
        g: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Self> {
        let theta = dims.iter().map(|&d| ProxFn::zero(d)).collect();
        Self::new(dims, h, g, a, b, theta)
    }

    pub fn n(&self) -> usize {
        self.blocks.n()
    }

    pub fn d(&self) -> usize {
        self.blocks.d()
    }

    pub fn m(&self) -> usize {
        self.blocks.m()
    }

    pub fn h_block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let (ri, rj) = (self.blocks.range(i), self.blocks.range(j));
        self.h
            .view((ri.start, rj.start), (ri.len(), rj.len()))
            .into_owned()
    }

    pub fn a_block(&self, i: usize) -> DMatrix<f64> {
        let r = self.blocks.range(i);
        self.a.columns(r.start, r.len()).into_owned()
    }

    pub fn block_of(&self, x: &DVector<f64>, i: usize) -> DVector<f64> {
        let r = self.blocks.range(i);
        x.rows(r.start, r.len()).into_owned()
    }

    /// All θ_i are zero or quadratic.
    pub fn is_quadratic(&self) -> bool {
        self.theta.iter().all(ProxFn::is_smooth_quadratic)
    }

    pub fn all_theta_zero(&self) -> bool {
        self.theta.iter().all(ProxFn::is_zero)
    }

    /// `blockdiag(Σ_i)`
    pub fn sigma(&self) -> DMatrix<f64> {
        let blocks: Vec<_> = self.theta.iter().map(|t| t.sigma.clone()).collect();
        linalg::block_diag(&blocks)
    }

    /// `Σ θ_i(x_i) + ½ xᵀHx + gᵀx`, or `None` when some θ_i has no value oracle.
    pub fn objective(&self, x: &DVector<f64>) -> Option<f64> {
        let mut total = 0.5 * linalg::wnorm_sq(x, &self.h) + self.g.dot(x);
        for (i, t) in self.theta.iter().enumerate() {
            total += t.value(&self.block_of(x, i))?;
        }
        Some(total)
    }
}

/// Checks sizes, symmetry and semidefiniteness of `H`, and the separable terms.
pub fn validate_instance(inst: &ProblemInstance) -> Result<ValidationReport> {
    let d = inst.blocks.d();
    let m = inst.blocks.m();
    let dims_ok = |field: &str, got: (usize, usize), want: (usize, usize)| {
        if got != want {
            Err(Error::structural(
                field,
                format!("expected {}x{}, got {}x{}", want.0, want.1, got.0, got.1),
            ))
        } else {
            Ok(())
        }
    };
    dims_ok("H", inst.h.shape(), (d, d))?;
    dims_ok("g", (inst.g.len(), 1), (d, 1))?;
    dims_ok("A", inst.a.shape(), (m, d))?;
    dims_ok("b", (inst.b.len(), 1), (m, 1))?;
    if inst.theta.len() != inst.blocks.n() {
        return Err(Error::structural(
            "theta",
            format!(
                "expected {} separable terms, got {}",
                inst.blocks.n(),
                inst.theta.len()
            ),
        ));
    }
    let non_finite = |s: &[f64]| s.iter().any(|v| !v.is_finite());
    for (name, bad) in [
        ("H", non_finite(inst.h.as_slice())),
        ("g", non_finite(inst.g.as_slice())),
        ("A", non_finite(inst.a.as_slice())),
        ("b", non_finite(inst.b.as_slice())),
    ] {
        if bad {
            return Err(Error::structural(name, "non-finite entry"));
        }
    }
    let symmetry_defect = linalg::symmetry_defect(&inst.h);
    if symmetry_defect > 1e-12 * linalg::max_abs(&inst.h) {
        return Err(Error::structural("H", "H not symmetric"));
    }
    let norm_h = linalg::spectral_norm(&inst.h);
    let min_eig_h = linalg::sym_eigenvalues(&inst.h)[0];
    if min_eig_h < -1e-10 * norm_h {
        return Err(Error::structural(
            "H",
            format!("H not positive semidefinite (min eigenvalue {min_eig_h:e})"),
        ));
    }
    for (i, t) in inst.theta.iter().enumerate() {
        t.validate(inst.blocks.dim(i), &format!("theta[{i}]"))?;
    }
    Ok(ValidationReport {
        symmetry_defect,
        min_eig_h,
        norm_h,
        partition_consistent: true,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KKTPoint {
    pub x: DVector<f64>,
    pub mu: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionMode {
    /// `blockdiag(H_ii + Σ_i + A_iᵀA_i + R_i)`, two blocks.
    TwoBlockFull,
    /// `blockdiag(H_ii + A_iᵀA_i)`, any number of blocks, θ ≡ 0.
    NblockQp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub satisfied: bool,
    pub min_eigenvalue: f64,
    pub matrix_checked: ConditionMode,
    /// Unit null direction of the test matrix when the condition fails.
    pub witness: Option<DVector<f64>>,
}

/// Diagonal blocks `H_ii + [Σ_i] + β A_iᵀA_i + [R_i]`.
pub(crate) fn subproblem_blocks(
    inst: &ProblemInstance,
    beta: f64,
    include_sigma: bool,
    r: &[DMatrix<f64>],
) -> Vec<DMatrix<f64>> {
    (0..inst.n())
        .map(|i| {
            let ai = inst.a_block(i);
            let mut blk = inst.h_block(i, i) + ai.transpose() * &ai * beta;
            if include_sigma {
                blk += &inst.theta[i].sigma;
            }
            if let Some(ri) = r.get(i) {
                blk += ri;
            }
            blk
        })
        .collect()
}

/// Smallest eigenvalue over the diagonal blocks, with a unit null direction
/// embedded in the full space when it does not exceed `tol`.
pub(crate) fn block_min_eig(
    inst: &ProblemInstance,
    blocks: &[DMatrix<f64>],
    tol: f64,
) -> (f64, Option<DVector<f64>>) {
    let mut best = f64::INFINITY;
    let mut witness = None;
    for (i, blk) in blocks.iter().enumerate() {
        let (val, vec) = linalg::sym_min_eig(blk).expect("nonempty block");
        if val < best {
            best = val;
            if val <= tol {
                let mut w = DVector::zeros(inst.d());
                w.rows_mut(inst.blocks.offsets()[i], vec.len()).copy_from(&vec);
                witness = Some(w);
            } else {
                witness = None;
            }
        }
    }
    (best, witness)
}

/// Tests whether every block subproblem has a unique solution.
pub fn check_uniqueness_condition(
    inst: &ProblemInstance,
    r: &[DMatrix<f64>],
    mode: ConditionMode,
) -> Result<ConditionReport> {
    let blocks = match mode {
        ConditionMode::TwoBlockFull => {
            if inst.n() != 2 {
                return Err(Error::Usage(format!(
                    "two_block_full requires 2 blocks, instance has {}",
                    inst.n()
                )));
            }
            check_proximal_matrices(inst, r)?;
            subproblem_blocks(inst, 1.0, true, r)
        }
        ConditionMode::NblockQp => {
            if !inst.all_theta_zero() {
                return Err(Error::Usage(
                    "nblock_qp requires every separable term to be zero".into(),
                ));
            }
            subproblem_blocks(inst, 1.0, false, &[])
        }
    };
    let (min_eigenvalue, witness) = block_min_eig(inst, &blocks, CONDITION_TOL);
    Ok(ConditionReport {
        satisfied: min_eigenvalue > CONDITION_TOL,
        min_eigenvalue,
        matrix_checked: mode,
        witness,
    })
}

/// Validates a list of proximal matrices against the block sizes. An empty
/// list stands for all zeros.
pub fn check_proximal_matrices(inst: &ProblemInstance, r: &[DMatrix<f64>]) -> Result<()> {
    if r.is_empty() {
        return Ok(());
    }
    if r.len() != inst.n() {
        return Err(Error::structural(
            "R",
            format!("expected {} proximal matrices, got {}", inst.n(), r.len()),
        ));
    }
    for (i, ri) in r.iter().enumerate() {
        let di = inst.blocks.dim(i);
        if ri.shape() != (di, di) {
            return Err(Error::structural(
                format!("R[{i}]"),
                format!("expected {di}x{di}"),
            ));
        }
        let scale = linalg::max_abs(ri).max(1.0);
        if linalg::symmetry_defect(ri) > 1e-12 * scale {
            return Err(Error::structural(format!("R[{i}]"), "R not symmetric"));
        }
        if linalg::sym_eigenvalues(ri)[0] < -1e-10 * scale {
            return Err(Error::structural(
                format!("R[{i}]"),
                "R not positive semidefinite",
            ));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualTriple {
    /// Per-block `d(0, ∂θ_i(x_i) + (Hx+g)_i - A_iᵀμ)`; `None` for opaque terms.
    pub r_dual: Vec<Option<f64>>,
    pub r_feas: f64,
}

impl ResidualTriple {
    pub fn is_exact(&self) -> bool {
        self.r_dual.iter().all(Option::is_some)
    }

    /// Largest component, or `None` when some block is not exact.
    pub fn max(&self) -> Option<f64> {
        self.r_dual
            .iter()
            .try_fold(self.r_feas, |acc, r| r.map(|v| acc.max(v)))
    }

    pub fn sum_sq(&self) -> Option<f64> {
        self.r_dual
            .iter()
            .try_fold(self.r_feas * self.r_feas, |acc, r| r.map(|v| acc + v * v))
    }
}

/// Exact KKT residuals of a primal-dual pair.
pub fn kkt_residual(inst: &ProblemInstance, pt: &KKTPoint) -> Result<ResidualTriple> {
    residual_parts(inst, &pt.x, &pt.mu, false)
}

/// With `ignore_constraints` the multiplier and the constraint rows are
/// dropped, which is the stationarity measure for block coordinate descent.
pub(crate) fn residual_parts(
    inst: &ProblemInstance,
    x: &DVector<f64>,
    mu: &DVector<f64>,
    ignore_constraints: bool,
) -> Result<ResidualTriple> {
    if x.len() != inst.d() {
        return Err(Error::structural("x", format!("expected length {}", inst.d())));
    }
    let mut grad = &inst.h * x + &inst.g;
    let mut r_feas = 0.0;
    if !ignore_constraints {
        if mu.len() != inst.m() {
            return Err(Error::structural("mu", format!("expected length {}", inst.m())));
        }
        grad -= inst.a.transpose() * mu;
        r_feas = (&inst.a * x - &inst.b).norm();
    }
    let r_dual = inst
        .theta
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if !t.has_subdifferential() {
                return Ok(None);
            }
            let r = inst.blocks.range(i);
            let xi = x.rows(r.start, r.len()).into_owned();
            let si = grad.rows(r.start, r.len()).into_owned();
            prox::subdiff_distance(t, &xi, &si).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualTriple { r_dual, r_feas })
}

/// Minimum-norm KKT point of a quadratic instance, from the linear system
/// `[H + P, -Aᵀ; A, 0] [x; μ] = [-g - q; b]`.
pub fn solve_kkt_oracle(inst: &ProblemInstance) -> Result<KKTPoint> {
    let (d, m) = (inst.d(), inst.m());
    let mut hess = inst.h.clone();
    let mut lin = inst.g.clone();
    for (i, t) in inst.theta.iter().enumerate() {
        let (p, q) = t.quadratic_parts().ok_or_else(|| {
            Error::Unsupported(format!(
                "theta[{i}] is `{}`; the direct KKT solve needs zero or quadratic terms, use a solver",
                t.kind.name()
            ))
        })?;
        let r = inst.blocks.range(i);
        let mut hv = hess.view_mut((r.start, r.start), (r.len(), r.len()));
        hv += p;
        let mut lv = lin.rows_mut(r.start, r.len());
        lv += q;
    }
    let mut k = DMatrix::zeros(d + m, d + m);
    k.view_mut((0, 0), (d, d)).copy_from(&hess);
    k.view_mut((0, d), (d, m)).copy_from(&(-inst.a.transpose()));
    k.view_mut((d, 0), (m, d)).copy_from(&inst.a);
    let mut rhs = DVector::zeros(d + m);
    rhs.rows_mut(0, d).copy_from(&(-&lin));
    rhs.rows_mut(d, m).copy_from(&inst.b);
    let z = linalg::min_norm_solve(&k, &rhs);
    let resid = (&k * &z - &rhs).norm();
    let tol = 1e-10 * (1.0 + inst.g.norm() + inst.b.norm());
    if !(resid <= tol) {
        return Err(Error::Infeasible(format!(
            "KKT system is inconsistent (least-squares residual {resid:e})"
        )));
    }
    Ok(KKTPoint {
        x: z.rows(0, d).into_owned(),
        mu: z.rows(d, m).into_owned(),
    })
}

/// Uniqueness-test error helper for solvers.
pub(crate) fn require_condition(report: &ConditionReport) -> Result<()> {
    if report.satisfied {
        return Ok(());
    }
    let cond = match report.matrix_checked {
        ConditionMode::TwoBlockFull => condition::TWO_BLOCK_UNIQUENESS,
        ConditionMode::NblockQp => condition::NBLOCK_QP_UNIQUENESS,
    };
    Err(Error::Condition {
        condition: cond,
        detail: format!(
            "block-diagonal test matrix has minimum eigenvalue {:e}",
            report.min_eigenvalue
        ),
    })
}
