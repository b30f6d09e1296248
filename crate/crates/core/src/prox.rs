//! Separable terms with closed-form proximal maps.
//!
//! Each [`ProxFn`] carries a catalog kind plus a declared strong-monotonicity
//! matrix `sigma`, meaning `(x - x̂)ᵀ(w - ŵ) ≥ ‖x - x̂‖²_sigma` for all
//! subgradients `w ∈ ∂f(x)`, `ŵ ∈ ∂f(x̂)`. The matrix is data supplied by the
//! caller and defaults to zero.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance for treating a point as sitting on a box bound.
pub const BOUND_TOL: f64 = 1e-12;

/// A user-supplied term for which only the proximal map is available.
///
/// Solvers accept such terms; exact KKT residuals are not computable for them
/// and solvers fall back to the surrogate residual.
pub trait ProxOperator: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;

    /// Minimizer of `f(x) + (r/2)‖x - v‖²`.
    fn prox(&self, r: f64, v: &DVector<f64>) -> DVector<f64>;

    fn value(&self, _x: &DVector<f64>) -> Option<f64> {
        None
    }

    /// Catalog description used when serializing, if the operator has one.
    fn catalog(&self) -> Option<&ProxFn> {
        None
    }
}

/// Wraps a catalog term so that only its proximal map is visible.
#[derive(Debug, Clone)]
pub struct BlackBox(pub ProxFn);

impl ProxOperator for BlackBox {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn prox(&self, r: f64, v: &DVector<f64>) -> DVector<f64> {
        prox_eval(&self.0, r, v).expect("black-box prox with validated parameters")
    }

    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        self.0.value(x)
    }

    fn catalog(&self) -> Option<&ProxFn> {
        Some(&self.0)
    }
}

#[derive(Clone, Debug)]
pub enum ProxKind {
    Zero,
    /// `lambda · ‖x‖₁`
    L1 { lambda: f64 },
    /// Indicator of `{lower ≤ x ≤ upper}`; bounds may be infinite.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// `½ xᵀ P x + qᵀ x`
    Quadratic { p: DMatrix<f64>, q: DVector<f64> },
    Opaque(Arc<dyn ProxOperator>),
}

impl ProxKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProxKind::Zero => "zero",
            ProxKind::L1 { .. } => "l1",
            ProxKind::Box { .. } => "box",
            ProxKind::Quadratic { .. } => "quadratic",
            ProxKind::Opaque(_) => "opaque",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProxFn {
    pub kind: ProxKind,
    pub sigma: DMatrix<f64>,
}

impl ProxFn {
    pub fn zero(dim: usize) -> Self {
        Self {
            kind: ProxKind::Zero,
            sigma: DMatrix::zeros(dim, dim),
        }
    }

    pub fn l1(dim: usize, lambda: f64) -> Self {
        Self {
            kind: ProxKind::L1 { lambda },
            sigma: DMatrix::zeros(dim, dim),
        }
    }

    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        let dim = lower.len();
        Self {
            kind: ProxKind::Box { lower, upper },
            sigma: DMatrix::zeros(dim, dim),
        }
    }

    pub fn quadratic(p: DMatrix<f64>, q: DVector<f64>) -> Self {
        let dim = q.len();
        Self {
            kind: ProxKind::Quadratic { p, q },
            sigma: DMatrix::zeros(dim, dim),
        }
    }

    pub fn opaque(op: Arc<dyn ProxOperator>) -> Self {
        let dim = op.dim();
        Self {
            kind: ProxKind::Opaque(op),
            sigma: DMatrix::zeros(dim, dim),
        }
    }

    pub fn with_sigma(mut self, sigma: DMatrix<f64>) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, ProxKind::Zero)
    }

    /// Zero or quadratic: the term contributes an affine gradient.
    pub fn is_smooth_quadratic(&self) -> bool {
        matches!(self.kind, ProxKind::Zero | ProxKind::Quadratic { .. })
    }

    /// Whether the exact subdifferential distance is available.
    pub fn has_subdifferential(&self) -> bool {
        !matches!(self.kind, ProxKind::Opaque(_))
    }

    /// Hessian and linear part of a zero/quadratic term.
    pub fn quadratic_parts(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let d = self.dim();
        match &self.kind {
            ProxKind::Zero => Some((DMatrix::zeros(d, d), DVector::zeros(d))),
            ProxKind::Quadratic { p, q } => Some((p.clone(), q.clone())),
            _ => None,
        }
    }

    /// Function value; `+∞` outside the box, `None` for opaque terms
    /// that do not expose one.
    pub fn value(&self, x: &DVector<f64>) -> Option<f64> {
        match &self.kind {
            ProxKind::Zero => Some(0.0),
            ProxKind::L1 { lambda } => Some(lambda * x.iter().map(|v| v.abs()).sum::<f64>()),
            ProxKind::Box { lower, upper } => {
                let inside = x
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .all(|(v, (l, u))| *v >= l - BOUND_TOL && *v <= u + BOUND_TOL);
                Some(if inside { 0.0 } else { f64::INFINITY })
            }
            ProxKind::Quadratic { p, q } => Some(0.5 * linalg::wnorm_sq(x, p) + q.dot(x)),
            ProxKind::Opaque(op) => op.value(x),
        }
    }

    /// Checks parameter invariants against the block size `dim`.
    pub fn validate(&self, dim: usize, field: &str) -> Result<()> {
        let sym_tol = |m: &DMatrix<f64>| 1e-12 * linalg::max_abs(m).max(1.0);
        let psd_tol = |m: &DMatrix<f64>| 1e-10 * linalg::spectral_norm(m).max(1.0);
        if self.sigma.nrows() != dim || self.sigma.ncols() != dim {
            return Err(Error::structural(
                format!("{field}.sigma"),
                format!(
                    "expected {dim}x{dim}, got {}x{}",
                    self.sigma.nrows(),
                    self.sigma.ncols()
                ),
            ));
        }
        if linalg::symmetry_defect(&self.sigma) > sym_tol(&self.sigma) {
            return Err(Error::structural(format!("{field}.sigma"), "sigma not symmetric"));
        }
        if dim > 0 && linalg::sym_eigenvalues(&self.sigma)[0] < -psd_tol(&self.sigma) {
            return Err(Error::structural(
                format!("{field}.sigma"),
                "sigma not positive semidefinite",
            ));
        }
        match &self.kind {
            ProxKind::Zero => {}
            ProxKind::L1 { lambda } => {
                if !(lambda.is_finite() && *lambda >= 0.0) {
                    return Err(Error::structural(
                        format!("{field}.lambda"),
                        "l1 weight must be finite and nonnegative",
                    ));
                }
            }
            ProxKind::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::structural(
                        format!("{field}.bounds"),
                        format!("bounds must have length {dim}"),
                    ));
                }
                if lower
                    .iter()
                    .zip(upper.iter())
                    .any(|(l, u)| l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY)
                {
                    return Err(Error::structural(
                        format!("{field}.bounds"),
                        "box requires lower <= upper componentwise",
                    ));
                }
            }
            ProxKind::Quadratic { p, q } => {
                if p.nrows() != dim || p.ncols() != dim || q.len() != dim {
                    return Err(Error::structural(
                        format!("{field}.p"),
                        format!("quadratic term must be {dim}-dimensional"),
                    ));
                }
                if linalg::symmetry_defect(p) > sym_tol(p) {
                    return Err(Error::structural(format!("{field}.p"), "P not symmetric"));
                }
                if dim > 0 && linalg::sym_eigenvalues(p)[0] < -psd_tol(p) {
                    return Err(Error::structural(
                        format!("{field}.p"),
                        "P not positive semidefinite",
                    ));
                }
                let gap = p - &self.sigma;
                if dim > 0 && linalg::sym_eigenvalues(&gap)[0] < -psd_tol(p) {
                    return Err(Error::structural(
                        format!("{field}.sigma"),
                        "declared sigma exceeds the curvature P",
                    ));
                }
            }
            ProxKind::Opaque(op) => {
                if op.dim() != dim {
                    return Err(Error::structural(
                        field.to_string(),
                        format!("opaque term has dimension {}, expected {dim}", op.dim()),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Unique minimizer of `f(x) + (r/2)‖x - v‖²`.
pub fn prox_eval(f: &ProxFn, r: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "prox weight must be positive, got {r}"
        )));
    }
    if v.len() != f.dim() {
        return Err(Error::structural(
            "v",
            format!("expected length {}, got {}", f.dim(), v.len()),
        ));
    }
    Ok(match &f.kind {
        ProxKind::Zero => v.clone(),
        ProxKind::L1 { lambda } => {
            let t = lambda / r;
            v.map(|x| x.signum() * (x.abs() - t).max(0.0))
        }
        ProxKind::Box { lower, upper } => {
            DVector::from_fn(v.len(), |i, _| v[i].max(lower[i]).min(upper[i]))
        }
        ProxKind::Quadratic { p, q } => {
            // (P + rI) x = r v - q
            let n = v.len();
            let lhs = p + DMatrix::identity(n, n) * r;
            let rhs = v * r - q;
            lhs.cholesky()
                .ok_or_else(|| Error::Numerical("P + rI not positive definite".into()))?
                .solve(&rhs)
        }
        ProxKind::Opaque(op) => op.prox(r, v),
    })
}

/// Euclidean distance from `-s` to `∂f(x)`, i.e. `d(0, ∂f(x) + s)`.
pub fn subdiff_distance(f: &ProxFn, x: &DVector<f64>, s: &DVector<f64>) -> Result<f64> {
    if x.len() != f.dim() || s.len() != f.dim() {
        return Err(Error::structural(
            "x",
            format!("expected length {}", f.dim()),
        ));
    }
    match &f.kind {
        ProxKind::Zero => Ok(s.norm()),
        ProxKind::L1 { lambda } => {
            let sq: f64 = x
                .iter()
                .zip(s.iter())
                .map(|(&xi, &si)| {
                    let d = if xi == 0.0 {
                        (si.abs() - lambda).max(0.0)
                    } else {
                        (si + lambda * xi.signum()).abs()
                    };
                    d * d
                })
                .sum();
            Ok(sq.sqrt())
        }
        ProxKind::Box { lower, upper } => {
            let mut sq = 0.0;
            for i in 0..x.len() {
                let (xi, si, l, u) = (x[i], s[i], lower[i], upper[i]);
                let tol_l = BOUND_TOL * l.abs().max(1.0);
                let tol_u = BOUND_TOL * u.abs().max(1.0);
                if xi < l - tol_l || xi > u + tol_u {
                    return Err(Error::Domain(format!(
                        "component {i} = {xi} outside [{l}, {u}]"
                    )));
                }
                let at_lower = (xi - l).abs() <= tol_l;
                let at_upper = (xi - u).abs() <= tol_u;
                // normal cone: (-inf, 0] at lower, [0, inf) at upper, R when both
                let d = match (at_lower, at_upper) {
                    (true, true) => 0.0,
                    (true, false) => (-si).max(0.0),
                    (false, true) => si.max(0.0),
                    (false, false) => si.abs(),
                };
                sq += d * d;
            }
            Ok(sq.sqrt())
        }
        ProxKind::Quadratic { p, q } => Ok((p * x + q + s).norm()),
        ProxKind::Opaque(_) => Err(Error::Unsupported(
            "opaque term has no subdifferential oracle".into(),
        )),
    }
}
