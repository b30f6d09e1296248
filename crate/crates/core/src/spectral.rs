//! Iteration matrices of randomly permuted ADMM on quadratic instances and the
//! numerical certificates built on them.
//!
//! For a block order `σ`, `L_σ` keeps the blocks `S_ij` of `S = H + βAᵀA`
//! whose row block is updated no earlier than the column block, and
//!
//! ```text
//! L̄_σ = [L_σ 0; βA I],  R̄_σ = [L_σ - S  Aᵀ; 0 I],  M_σ = L̄_σ⁻¹ R̄_σ,
//! b̄ = [-g + βAᵀb; βb].
//! ```
//!
//! Averaging over all `n!` orders gives `Q = E[L_σ⁻¹]` and `M = E[M_σ]`.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{condition, Error, Result};
use crate::linalg;
use crate::model::{self, ProblemInstance, CONDITION_TOL};
use crate::solver::{IterateState, SolverConfig, Status, SubproblemPolicy, SweepEngine, Trace, Variant};

/// Largest block count for which all `n!` orders are enumerated.
pub const ENUMERATION_LIMIT: usize = 8;
/// Eigenvalues within this distance of `1 + 0i` count as equal to one.
pub const ONE_BAND: f64 = 1e-8;
/// Allowed excess of `|λ|` over one.
pub const UNIT_DISK_SLACK: f64 = 1e-10;
/// Admissible range of the eigenvalues of `QS`.
pub const QS_LOWER: f64 = -1e-10;
pub const QS_UPPER: f64 = 4.0 / 3.0 - 1e-12;
/// Tolerance for the equal-radii and ordering checks of the BCD rates.
pub const RATE_TOL: f64 = 1e-10;
/// Tolerance for the closed-form radius of the averaged BCD matrix.
pub const CLOSED_FORM_TOL: f64 = 1e-12;
/// Tolerance on every entry of a witness certificate.
pub const CERTIFICATE_TOL: f64 = 1e-10;

/// `S = H + βAᵀA`.
pub fn s_matrix(inst: &ProblemInstance, beta: f64) -> DMatrix<f64> {
    &inst.h + inst.a.transpose() * &inst.a * beta
}

/// `b̄ = [-g + βAᵀb; γβb]`.
pub fn bbar(inst: &ProblemInstance, beta: f64, gamma: f64) -> DVector<f64> {
    let (d, m) = (inst.d(), inst.m());
    let mut out = DVector::zeros(d + m);
    out.rows_mut(0, d)
        .copy_from(&(-&inst.g + inst.a.transpose() * &inst.b * beta));
    out.rows_mut(d, m).copy_from(&(&inst.b * (gamma * beta)));
    out
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")))
    }
}

/// Every `S_ii = H_ii + βA_iᵀA_i` must be positive definite.
fn require_definite_diagonal(inst: &ProblemInstance, beta: f64) -> Result<()> {
    let blocks = model::subproblem_blocks(inst, beta, false, &[]);
    let (min, _) = model::block_min_eig(inst, &blocks, CONDITION_TOL);
    if min > CONDITION_TOL {
        Ok(())
    } else {
        Err(Error::Condition {
            condition: condition::NBLOCK_QP_UNIQUENESS,
            detail: format!("a diagonal block of H + βAᵀA is singular (min eigenvalue {min:e})"),
        })
    }
}

fn check_order(sigma: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if sigma.len() != n || sigma.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::InvalidParameter(format!(
            "{sigma:?} is not a permutation of the {n} blocks"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PermMatrices {
    /// Block order, 0-based.
    pub sigma: Vec<usize>,
    pub l_sigma: DMatrix<f64>,
    pub r_sigma: DMatrix<f64>,
    pub lbar: DMatrix<f64>,
    pub rbar: DMatrix<f64>,
    pub m_sigma: DMatrix<f64>,
}

/// Builds `L_σ`, `R_σ`, `L̄_σ`, `R̄_σ` and `M_σ` for the 0-based order `sigma`.
pub fn build_perm_matrices(inst: &ProblemInstance, beta: f64, sigma: &[usize]) -> Result<PermMatrices> {
    check_beta(beta)?;
    require_definite_diagonal(inst, beta)?;
    assemble(inst, &s_matrix(inst, beta), beta, 1.0, sigma)
}

fn assemble(
    inst: &ProblemInstance,
    s: &DMatrix<f64>,
    beta: f64,
    gamma: f64,
    sigma: &[usize],
) -> Result<PermMatrices> {
    let n = inst.n();
    check_order(sigma, n)?;
    let (d, m) = (inst.d(), inst.m());
    let mut pos = vec![0; n];
    for (p, &i) in sigma.iter().enumerate() {
        pos[i] = p;
    }
    let mut l = DMatrix::zeros(d, d);
    for i in 0..n {
        for j in 0..n {
            if pos[i] >= pos[j] {
                let (ri, rj) = (inst.blocks.range(i), inst.blocks.range(j));
                l.view_mut((ri.start, rj.start), (ri.len(), rj.len()))
                    .copy_from(&s.view((ri.start, rj.start), (ri.len(), rj.len())));
            }
        }
    }
    let r = &l - s;
    let mut lbar = DMatrix::identity(d + m, d + m);
    lbar.view_mut((0, 0), (d, d)).copy_from(&l);
    lbar.view_mut((d, 0), (m, d)).copy_from(&(&inst.a * (gamma * beta)));
    let mut rbar = DMatrix::identity(d + m, d + m);
    rbar.view_mut((0, 0), (d, d)).copy_from(&r);
    rbar.view_mut((0, d), (d, m)).copy_from(&inst.a.transpose());
    let m_sigma = lbar
        .clone()
        .lu()
        .solve(&rbar)
        .ok_or_else(|| Error::Numerical(format!("L̄ singular for order {sigma:?}")))?;
    Ok(PermMatrices {
        sigma: sigma.to_vec(),
        l_sigma: l,
        r_sigma: r,
        lbar,
        rbar,
        m_sigma,
    })
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// All block orders in lexicographic order.
pub fn all_orders(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).permutations(n)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub lemma_3_1: bool,
    pub lemma_3_3: bool,
    pub lemma_3_4: bool,
    pub lemma_3_5: bool,
    /// Only defined for two blocks with positive definite diagonal blocks of `H`.
    pub prop_3_1: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub beta: f64,
    pub permutations: usize,
    /// Row-major matrices.
    #[serde(rename = "S")]
    pub s: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub m_matrix: Vec<Vec<f64>>,
    /// Largest entry of `|M - (1/n!) Σ M_σ|`.
    pub m_average_defect: f64,
    pub q_symmetry_defect: f64,
    pub q_min_eig: f64,
    /// Eigenvalues of `QS`, ascending.
    pub eig_qs: Vec<f64>,
    /// Eigenvalues of `M` as `[re, im]`, by descending modulus.
    pub eig_m: Vec<[f64; 2]>,
    pub rho_m: f64,
    pub rank_s: usize,
    pub rank_ata: usize,
    pub rank_kkt: usize,
    pub am_one: usize,
    pub gm_one: usize,
    /// Eigenvalues of `M` found within [`ONE_BAND`] of one.
    pub numeric_one_count: usize,
    pub bcd_rates: Option<BcdRadii>,
    pub verdicts: Verdicts,
}

impl SpectralReport {
    pub fn q_matrix(&self) -> DMatrix<f64> {
        linalg::from_rows(&self.q, self.d).expect("rectangular")
    }

    pub fn s_matrix(&self) -> DMatrix<f64> {
        linalg::from_rows(&self.s, self.d).expect("rectangular")
    }

    pub fn m_matrix(&self) -> DMatrix<f64> {
        linalg::from_rows(&self.m_matrix, self.d + self.m).expect("rectangular")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `M = [I - QS  QAᵀ; -βA + βAQS  I - βAQAᵀ]`.
pub fn closed_form_m(q: &DMatrix<f64>, s: &DMatrix<f64>, a: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    let (d, m) = (q.nrows(), a.nrows());
    let qs = q * s;
    let mut out = DMatrix::zeros(d + m, d + m);
    out.view_mut((0, 0), (d, d)).copy_from(&(DMatrix::identity(d, d) - &qs));
    out.view_mut((0, d), (d, m)).copy_from(&(q * a.transpose()));
    out.view_mut((d, 0), (m, d)).copy_from(&((-a + a * &qs) * beta));
    out.view_mut((d, d), (m, m))
        .copy_from(&(DMatrix::identity(m, m) - a * q * a.transpose() * beta));
    out
}

/// Averages `L_σ⁻¹` and `M_σ` over all orders and fills the spectral data of
/// the report. Verdicts are left unset; see [`analyze`].
pub fn build_q_m(inst: &ProblemInstance, beta: f64) -> Result<SpectralReport> {
    check_beta(beta)?;
    let n = inst.n();
    if n > ENUMERATION_LIMIT {
        return Err(Error::Unsupported(format!(
            "{n} blocks exceed the enumeration limit of {ENUMERATION_LIMIT}"
        )));
    }
    require_definite_diagonal(inst, beta)?;
    let (d, m) = (inst.d(), inst.m());
    let s = s_matrix(inst, beta);
    let mut q_sum = DMatrix::zeros(d, d);
    let mut m_sum = DMatrix::zeros(d + m, d + m);
    for sigma in all_orders(n) {
        let pm = assemble(inst, &s, beta, 1.0, &sigma)?;
        let linv = pm
            .l_sigma
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical(format!("L_σ singular for order {sigma:?}")))?;
        q_sum += linv;
        m_sum += pm.m_sigma;
    }
    let count = factorial(n) as f64;
    let q_raw = q_sum / count;
    let m_avg = m_sum / count;
    let q_symmetry_defect = linalg::symmetry_defect(&q_raw);
    let q = linalg::symmetrize(&q_raw);
    let m_mat = closed_form_m(&q, &s, &inst.a, beta);
    let m_average_defect = linalg::max_abs(&(&m_mat - &m_avg));

    let q_min_eig = linalg::sym_eigenvalues(&q)[0];
    let q_half = linalg::sym_sqrt(&q);
    let eig_qs = linalg::sym_eigenvalues(&(&q_half * &s * &q_half));
    let eig = linalg::eigenvalues(&m_mat)
        .ok_or_else(|| Error::Numerical("Schur decomposition of M did not converge".into()))?;
    let rho_m = eig.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    let numeric_one_count = eig
        .iter()
        .filter(|z| ((*z).clone() - nalgebra::Complex::new(1.0, 0.0)).norm() < ONE_BAND)
        .count();
    let ranks = rank_identity_check(inst, beta)?;
    let am_one = (m + d).saturating_sub(ranks.rank_ata + ranks.rank_s);
    let gm_one = (m + d).saturating_sub(ranks.lhs);

    Ok(SpectralReport {
        n,
        d,
        m,
        beta,
        permutations: factorial(n),
        s: linalg::to_rows(&s),
        q: linalg::to_rows(&q),
        m_matrix: linalg::to_rows(&m_mat),
        m_average_defect,
        q_symmetry_defect,
        q_min_eig,
        eig_qs,
        eig_m: eig.iter().map(|z| [z.re, z.im]).collect(),
        rho_m,
        rank_s: ranks.rank_s,
        rank_ata: ranks.rank_ata,
        rank_kkt: ranks.lhs,
        am_one,
        gm_one,
        numeric_one_count,
        bcd_rates: None,
        verdicts: Verdicts::default(),
    })
}

/// `Q ≻ 0` and every eigenvalue of `QS` lies in `[QS_LOWER, QS_UPPER]`.
pub fn check_eig_qs(report: &SpectralReport) -> bool {
    report.q_min_eig > 0.0
        && report
            .eig_qs
            .iter()
            .all(|&l| (QS_LOWER..=QS_UPPER).contains(&l))
}

/// `(lemma_3_4, lemma_3_5)`.
///
/// The first holds when every eigenvalue of `M` is either strictly inside the
/// unit disk (`|λ| < 1 - ONE_BAND`) or within `ONE_BAND` of one; anything in
/// between is treated as a failure. The second holds when the algebraic and
/// geometric multiplicities from the rank formulas agree and the number of
/// computed eigenvalues at one matches them.
pub fn check_m_spectrum(report: &SpectralReport) -> (bool, bool) {
    let lemma_3_4 = report.eig_m.iter().all(|&[re, im]| {
        let modulus = re.hypot(im);
        let near_one = (re - 1.0).hypot(im) < ONE_BAND;
        modulus <= 1.0 + UNIT_DISK_SLACK && (modulus < 1.0 - ONE_BAND || near_one)
    });
    let lemma_3_5 = report.am_one == report.gm_one && report.numeric_one_count == report.am_one;
    (lemma_3_4, lemma_3_5)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankIdentity {
    /// `rank [S -Aᵀ; βA 0]`.
    pub lhs: usize,
    pub rank_s: usize,
    /// `rank(βAᵀA)`.
    pub rank_ata: usize,
    pub holds: bool,
}

pub fn rank_identity_check(inst: &ProblemInstance, beta: f64) -> Result<RankIdentity> {
    check_beta(beta)?;
    let (d, m) = (inst.d(), inst.m());
    let s = s_matrix(inst, beta);
    let mut kkt = DMatrix::zeros(d + m, d + m);
    kkt.view_mut((0, 0), (d, d)).copy_from(&s);
    kkt.view_mut((0, d), (d, m)).copy_from(&(-inst.a.transpose()));
    kkt.view_mut((d, 0), (m, d)).copy_from(&(&inst.a * beta));
    let lhs = linalg::rank(&kkt);
    let rank_s = linalg::rank(&s);
    let rank_ata = linalg::rank(&(inst.a.transpose() * &inst.a * beta));
    Ok(RankIdentity {
        lhs,
        rank_s,
        rank_ata,
        holds: lhs == rank_s + rank_ata,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcdRadii {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    /// `λ_max(H₁₂ᵀH₁₂)` when both diagonal blocks are identities.
    pub sigma1: Option<f64>,
    /// `(σ₁ + √σ₁) / 2` when `sigma1` is defined.
    pub rho3_closed_form: Option<f64>,
}

impl BcdRadii {
    pub fn verdict(&self) -> bool {
        let closed = match (self.rho3_closed_form, self.sigma1) {
            (Some(c), Some(s1)) => {
                (self.rho3 - c).abs() <= CLOSED_FORM_TOL * c.max(1.0)
                    && (self.rho1 - s1).abs() <= RATE_TOL * s1.max(1.0)
            }
            _ => true,
        };
        (self.rho1 - self.rho2).abs() <= RATE_TOL && self.rho3 >= self.rho1 - RATE_TOL && closed
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BcdRates {
    /// Forward sweep `[H₁₁ 0; H₁₂ᵀ H₂₂]⁻¹ [0 -H₁₂; 0 0]`.
    pub m1: DMatrix<f64>,
    /// Backward sweep `[H₁₁ H₁₂; 0 H₂₂]⁻¹ [0 0; -H₁₂ᵀ 0]`.
    pub m2: DMatrix<f64>,
    /// `(M₁ + M₂) / 2`.
    pub m3: DMatrix<f64>,
    pub radii: BcdRadii,
}

/// Iteration matrices of two-block BCD in both orders and their average.
pub fn bcd_rate_matrices(h: &DMatrix<f64>, d1: usize) -> Result<BcdRates> {
    let d = h.nrows();
    if h.ncols() != d || d1 == 0 || d1 >= d {
        return Err(Error::structural(
            "H",
            format!("cannot split a {}x{} matrix at {d1}", h.nrows(), h.ncols()),
        ));
    }
    let d2 = d - d1;
    let h11 = h.view((0, 0), (d1, d1)).into_owned();
    let h22 = h.view((d1, d1), (d2, d2)).into_owned();
    let h12 = h.view((0, d1), (d1, d2)).into_owned();
    let scale = linalg::max_abs(h).max(1.0);
    for (name, blk) in [("H11", &h11), ("H22", &h22)] {
        let min = linalg::sym_eigenvalues(blk)[0];
        if min <= CONDITION_TOL * scale {
            return Err(Error::Condition {
                condition: condition::DIAGONAL_BLOCKS_DEFINITE,
                detail: format!("{name} has minimum eigenvalue {min:e}"),
            });
        }
    }
    let mut lower = h.clone();
    lower.view_mut((0, d1), (d1, d2)).fill(0.0);
    let mut upper = h.clone();
    upper.view_mut((d1, 0), (d2, d1)).fill(0.0);
    let mut rhs1 = DMatrix::zeros(d, d);
    rhs1.view_mut((0, d1), (d1, d2)).copy_from(&(-&h12));
    let mut rhs2 = DMatrix::zeros(d, d);
    rhs2.view_mut((d1, 0), (d2, d1)).copy_from(&(-h12.transpose()));
    let solve = |mat: DMatrix<f64>, rhs: &DMatrix<f64>| {
        mat.lu()
            .solve(rhs)
            .ok_or_else(|| Error::Numerical("triangular block matrix singular".into()))
    };
    let m1 = solve(lower, &rhs1)?;
    let m2 = solve(upper, &rhs2)?;
    let m3 = (&m1 + &m2) * 0.5;
    let radius = |mat: &DMatrix<f64>| {
        linalg::spectral_radius(mat)
            .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))
    };
    let normalized = linalg::max_abs(&(&h11 - DMatrix::identity(d1, d1))) <= 1e-12
        && linalg::max_abs(&(&h22 - DMatrix::identity(d2, d2))) <= 1e-12;
    let sigma1 = normalized.then(|| linalg::sym_max_eig(&(h12.transpose() * &h12)));
    let radii = BcdRadii {
        rho1: radius(&m1)?,
        rho2: radius(&m2)?,
        rho3: radius(&m3)?,
        sigma1,
        rho3_closed_form: sigma1.map(|s| (s + s.sqrt()) / 2.0),
    };
    Ok(BcdRates { m1, m2, m3, radii })
}

/// Full spectral analysis with every verdict filled in.
pub fn analyze(inst: &ProblemInstance, beta: f64) -> Result<SpectralReport> {
    let mut report = build_q_m(inst, beta)?;
    let (lemma_3_4, lemma_3_5) = check_m_spectrum(&report);
    if inst.n() == 2 {
        report.bcd_rates = bcd_rate_matrices(&inst.h, inst.blocks.dim(0)).ok().map(|r| r.radii);
    }
    report.verdicts = Verdicts {
        lemma_3_1: check_eig_qs(&report),
        lemma_3_3: report.rank_kkt == report.rank_s + report.rank_ata,
        lemma_3_4,
        lemma_3_5,
        prop_3_1: report.bcd_rates.map(|r| r.verdict()),
    };
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCertificate {
    /// `‖H_ii ȳ_i‖`.
    pub h_ii: f64,
    /// `‖A_i ȳ_i‖`.
    pub a_i: f64,
    /// `‖R_i ȳ_i‖`.
    pub r_i: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessCertificate {
    /// `‖Hȳ‖`.
    pub h: f64,
    /// `‖H₁₂ȳ₂‖`.
    pub h12_y2: f64,
    /// `‖H₁₂ᵀȳ₁‖`.
    pub h12t_y1: f64,
    pub blocks: Vec<BlockCertificate>,
}

impl WitnessCertificate {
    pub fn max_defect(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| [b.h_ii, b.a_i, b.r_i])
            .fold(self.h.max(self.h12_y2).max(self.h12t_y1), f64::max)
    }

    pub fn is_valid(&self) -> bool {
        self.max_defect() <= CERTIFICATE_TOL
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub ybar: Vec<f64>,
    /// Smallest eigenvalue of `blockdiag(H_ii + βA_iᵀA_i + R_i)`.
    pub min_eigenvalue: f64,
    pub certificate: WitnessCertificate,
}

/// Evaluates the null-direction certificate of `ybar` for a two-block instance.
pub fn witness_certificate(
    inst: &ProblemInstance,
    r: &[DMatrix<f64>],
    ybar: &DVector<f64>,
) -> Result<WitnessCertificate> {
    if inst.n() != 2 {
        return Err(Error::Usage(format!(
            "witness needs exactly 2 blocks, instance has {}",
            inst.n()
        )));
    }
    if ybar.len() != inst.d() {
        return Err(Error::structural("ybar", format!("expected length {}", inst.d())));
    }
    model::check_proximal_matrices(inst, r)?;
    let y1 = inst.block_of(ybar, 0);
    let y2 = inst.block_of(ybar, 1);
    let blocks = (0..2)
        .map(|i| {
            let yi = inst.block_of(ybar, i);
            BlockCertificate {
                h_ii: (inst.h_block(i, i) * &yi).norm(),
                a_i: (inst.a_block(i) * &yi).norm(),
                r_i: r.get(i).map_or(0.0, |ri| (ri * &yi).norm()),
            }
        })
        .collect();
    let h12 = inst.h_block(0, 1);
    Ok(WitnessCertificate {
        h: (&inst.h * ybar).norm(),
        h12_y2: (&h12 * y2).norm(),
        h12t_y1: (h12.transpose() * y1).norm(),
        blocks,
    })
}

/// Unit null direction of `blockdiag(H_ii + βA_iᵀA_i + R_i)` with its
/// certificate, or `None` when that matrix is positive definite.
pub fn divergence_witness(
    inst: &ProblemInstance,
    beta: f64,
    r: &[DMatrix<f64>],
) -> Result<Option<Witness>> {
    check_beta(beta)?;
    if inst.n() != 2 {
        return Err(Error::Usage(format!(
            "witness needs exactly 2 blocks, instance has {}",
            inst.n()
        )));
    }
    model::check_proximal_matrices(inst, r)?;
    let blocks = model::subproblem_blocks(inst, beta, false, r);
    let (min_eigenvalue, ybar) = model::block_min_eig(inst, &blocks, CONDITION_TOL);
    let Some(ybar) = ybar else {
        return Ok(None);
    };
    let certificate = witness_certificate(inst, r, &ybar)?;
    if !certificate.is_valid() {
        return Err(Error::Certificate(format!(
            "null direction fails the certificate by {:e}",
            certificate.max_defect()
        )));
    }
    Ok(Some(Witness {
        ybar: ybar.iter().copied().collect(),
        min_eigenvalue,
        certificate,
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OscillationDemo {
    pub baseline: Trace,
    /// Baseline trajectory with `ȳ` added to the primal iterate at every even step.
    pub perturbed: Trace,
    /// Largest subproblem optimality residual over all perturbed block updates.
    pub max_optimality_residual: f64,
    /// Smallest `‖x^{k+1} - x^k‖` of the perturbed trajectory over its second half.
    pub tail_gap: f64,
    pub ybar_norm: f64,
}

impl OscillationDemo {
    /// The perturbed trajectory keeps moving by at least half of `‖ȳ‖`.
    pub fn is_non_convergent(&self) -> bool {
        self.ybar_norm > 0.0 && self.tail_gap >= 0.5 * self.ybar_norm
    }
}

/// Two legitimate two-block proximal ADMM trajectories from the same start:
/// the minimum-norm baseline and one that adds `ȳ` at every even step.
pub fn oscillation_demo(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    ybar: &DVector<f64>,
    x0: &DVector<f64>,
    mu0: &DVector<f64>,
    k_max: usize,
) -> Result<OscillationDemo> {
    let cfg = SolverConfig {
        variant: Variant::Admm2,
        ..cfg.clone()
    };
    let certificate = witness_certificate(inst, &cfg.r, ybar)?;
    if !certificate.is_valid() {
        return Err(Error::Certificate(format!(
            "ybar is not a null direction (defect {:e})",
            certificate.max_defect()
        )));
    }
    let engine = SweepEngine::with_policy(inst, &cfg, SubproblemPolicy::MinNorm)?;
    let order = engine.identity_order();

    let run = |perturb: bool| -> Result<(Trace, f64, Vec<DVector<f64>>)> {
        let mut state = IterateState::new(x0.clone(), mu0.clone());
        let mut records = vec![engine.record(None, &state, &order, None)?];
        let mut worst = 0.0_f64;
        let mut xs = vec![state.x.clone()];
        for _ in 0..k_max {
            let k_next = state.k + 1;
            let shift = perturb && k_next % 2 == 0;
            let mut x = state.x.clone();
            for &i in &order {
                let mut xi = engine.solve_block(i, &x, &state.mu)?;
                if shift {
                    xi += inst.block_of(ybar, i);
                }
                worst = worst.max(engine.subproblem_residual(i, &x, &state.mu, &xi)?);
                x.rows_mut(inst.blocks.offsets()[i], xi.len()).copy_from(&xi);
            }
            let mu = engine.dual_update(&state.mu, &x);
            let next = IterateState {
                x_prev: state.x.clone(),
                x,
                mu,
                k: k_next,
            };
            records.push(engine.record(Some(&state), &next, &order, None)?);
            xs.push(next.x.clone());
            state = next;
        }
        let converged = records
            .last()
            .and_then(|r| r.max_residual())
            .is_some_and(|r| r <= cfg.tol);
        let trace = Trace {
            n_blocks: inst.n(),
            records,
            status: if converged { Status::Converged } else { Status::MaxIter },
            final_state: state,
            warnings: Vec::new(),
        };
        Ok((trace, worst, xs))
    };

    let (baseline, _, _) = run(false)?;
    let (perturbed, max_optimality_residual, xs) = run(true)?;
    let tail_gap = xs
        .windows(2)
        .skip(xs.len() / 2)
        .map(|w| (&w[1] - &w[0]).norm())
        .fold(f64::INFINITY, f64::min);
    Ok(OscillationDemo {
        baseline,
        perturbed,
        max_optimality_residual,
        tail_gap: if tail_gap.is_finite() { tail_gap } else { 0.0 },
        ybar_norm: ybar.norm(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CyclicUpdate {
    pub matrix: DMatrix<f64>,
    pub rho: f64,
}

/// `M_σ` for the identity order with the multiplier step `γβ`:
/// `[L 0; γβA I]⁻¹ [L - S  Aᵀ; 0 I]`.
pub fn cyclic_update_matrix(inst: &ProblemInstance, beta: f64, gamma: f64) -> Result<CyclicUpdate> {
    check_beta(beta)?;
    if !inst.all_theta_zero() {
        return Err(Error::Unsupported(
            "the cyclic update matrix needs every separable term to be zero".into(),
        ));
    }
    require_definite_diagonal(inst, beta)?;
    let order: Vec<usize> = (0..inst.n()).collect();
    let pm = assemble(inst, &s_matrix(inst, beta), beta, gamma, &order)?;
    let rho = linalg::spectral_radius(&pm.m_sigma)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    Ok(CyclicUpdate {
        matrix: pm.m_sigma,
        rho,
    })
}
