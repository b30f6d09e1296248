//! Random instance generators and independent linear-algebra oracles shared by
//! the integration tests. Nothing here calls into the solver internals.
#![allow(dead_code)]

use coupled_splitting::model::KKTPoint;
use coupled_splitting::prox::ProxFn;
use coupled_splitting::ProblemInstance;
use itertools::Itertools;
use nalgebra::{Complex, DMatrix, DVector, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// `CᵀC` with `C` drawn `rows × d`.
pub fn random_psd(rng: &mut impl Rng, d: usize, rows: usize) -> DMatrix<f64> {
    let c = uniform(rng, rows, d);
    c.transpose() * c
}

pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn eig_min(m: &DMatrix<f64>) -> f64 {
    sym(m).symmetric_eigenvalues().min()
}

pub fn eig_max(m: &DMatrix<f64>) -> f64 {
    sym(m).symmetric_eigenvalues().max()
}

pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * top).count()
}

/// Eigenvalues from the Schur form of `M + sI`, shifted back. The shift keeps
/// repeated zero eigenvalues from stalling the QR iteration.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = m.nrows();
    let s = 3.0 + m.amax() * n as f64;
    let schur = Schur::try_new(m + DMatrix::identity(n, n) * s, 1e-15, 100_000).expect("Schur converges");
    let (_, t) = schur.unpack();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            // 2×2 block: roots of λ² - tr λ + det.
            let tr = t[(i, i)] + t[(i + 1, i + 1)];
            let det = t[(i, i)] * t[(i + 1, i + 1)] - t[(i, i + 1)] * t[(i + 1, i)];
            let disc = tr * tr / 4.0 - det;
            let root = Complex::new(disc, 0.0).sqrt();
            out.push(Complex::new(tr / 2.0, 0.0) + root);
            out.push(Complex::new(tr / 2.0, 0.0) - root);
            i += 2;
        } else {
            out.push(Complex::new(t[(i, i)], 0.0));
            i += 1;
        }
    }
    out.into_iter().map(|z| z - Complex::new(s, 0.0)).collect()
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut off = vec![0];
    for d in dims {
        off.push(off.last().unwrap() + d);
    }
    off
}

pub fn block(m: &DMatrix<f64>, dims: &[usize], i: usize, j: usize) -> DMatrix<f64> {
    let off = offsets(dims);
    m.view((off[i], off[j]), (dims[i], dims[j])).into_owned()
}

pub fn a_cols(a: &DMatrix<f64>, dims: &[usize], i: usize) -> DMatrix<f64> {
    let off = offsets(dims);
    a.columns(off[i], dims[i]).into_owned()
}

/// An instance with a known KKT point and the proximal matrices used to solve it.
pub struct Planted {
    pub inst: ProblemInstance,
    pub kkt: KKTPoint,
    pub r: Vec<DMatrix<f64>>,
    pub kinds: Vec<&'static str>,
}

impl Planted {
    pub fn is_quadratic(&self) -> bool {
        self.kinds.iter().all(|k| matches!(*k, "zero" | "quadratic"))
    }
}

/// `r I - H_ii - βA_iᵀA_i` with `r` above the largest eigenvalue.
pub fn linearizing_r(h_ii: &DMatrix<f64>, a_i: &DMatrix<f64>, beta: f64) -> (f64, DMatrix<f64>) {
    let base = sym(&(h_ii + a_i.transpose() * a_i * beta));
    let r = 1.05 * eig_max(&base) + 0.05;
    let d = h_ii.nrows();
    (r, sym(&(DMatrix::identity(d, d) * r - base)))
}

/// Draws `θ_i`, a point `x̄_i` and a subgradient `w_i ∈ ∂θ_i(x̄_i)`.
fn planted_term(rng: &mut impl Rng, d: usize, kind: &'static str) -> (ProxFn, DVector<f64>, DVector<f64>) {
    match kind {
        "l1" => {
            let lambda = rng.random_range(0.1..1.0);
            let mut x = DVector::zeros(d);
            let mut w = DVector::zeros(d);
            for j in 0..d {
                if rng.random_bool(0.4) {
                    w[j] = lambda * rng.random_range(-0.8..0.8);
                } else {
                    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    x[j] = s * rng.random_range(0.2..1.0);
                    w[j] = s * lambda;
                }
            }
            (ProxFn::l1(d, lambda), x, w)
        }
        "box" => {
            let lo = DVector::from_fn(d, |_, _| rng.random_range(-1.5..-0.5));
            let hi = DVector::from_fn(d, |_, _| rng.random_range(0.5..1.5));
            let mut x = DVector::zeros(d);
            let mut w = DVector::zeros(d);
            for j in 0..d {
                match rng.random_range(0..3) {
                    0 => {
                        x[j] = lo[j];
                        w[j] = -rng.random_range(0.1..1.0);
                    }
                    1 => {
                        x[j] = hi[j];
                        w[j] = rng.random_range(0.1..1.0);
                    }
                    _ => x[j] = rng.random_range(0.8 * lo[j]..0.8 * hi[j]),
                }
            }
            (ProxFn::boxed(lo, hi), x, w)
        }
        "quadratic" => {
            let p = random_psd(rng, d, d) + DMatrix::identity(d, d) * 0.1;
            let q = uniform_vec(rng, d);
            let x = uniform_vec(rng, d);
            let w = &p * &x + &q;
            let sigma = DMatrix::identity(d, d) * (0.5 * eig_min(&p));
            (ProxFn::quadratic(p, q).with_sigma(sigma), x, w)
        }
        _ => (ProxFn::zero(d), uniform_vec(rng, d), DVector::zeros(d)),
    }
}

/// Builds `g = Aᵀμ̄ - Hx̄ - w` and `b = Ax̄` so that `(x̄, μ̄)` is a KKT point.
fn plant(
    dims: Vec<usize>,
    h: DMatrix<f64>,
    a: DMatrix<f64>,
    theta: Vec<ProxFn>,
    x: DVector<f64>,
    w: DVector<f64>,
    mu: DVector<f64>,
) -> (ProblemInstance, KKTPoint) {
    let g = a.transpose() * &mu - &h * &x - w;
    let b = &a * &x;
    let inst = ProblemInstance::new(dims, h, g, a, b, theta).expect("generated instance is valid");
    (inst, KKTPoint { x, mu })
}

/// Two blocks, `d_i ≤ 5`, `m ≤ 4`, mixed separable terms.
pub fn two_block_instance(rng: &mut impl Rng, beta: f64) -> Planted {
    mixed_instance(rng, 2, beta)
}

/// `n` blocks with mixed separable terms. Nonsmooth blocks get the proximal
/// matrix that turns their subproblem into a single prox step. Without a
/// nonsmooth block `H ≻ 0`, so the primal solution is unique.
pub fn mixed_instance(rng: &mut impl Rng, n: usize, beta: f64) -> Planted {
    const KINDS: [&str; 4] = ["zero", "l1", "box", "quadratic"];
    let dims: Vec<usize> = (0..n).map(|_| rng.random_range(1..=5)).collect();
    let d: usize = dims.iter().sum();
    let m = rng.random_range(1..=4);
    let kinds: Vec<&'static str> = (0..n).map(|_| KINDS[rng.random_range(0..4)]).collect();
    let singular_h = rng.random_bool(0.3) && kinds.iter().any(|k| matches!(*k, "l1" | "box"));
    let mut h = random_psd(rng, d, if singular_h { d - 1 } else { d + 1 }) / d as f64;
    if !singular_h {
        h += DMatrix::identity(d, d) * 0.05;
    }
    let a = uniform(rng, m, d);
    let mut theta = Vec::new();
    let mut x = DVector::zeros(d);
    let mut w = DVector::zeros(d);
    let off = offsets(&dims);
    for (i, &kind) in kinds.iter().enumerate() {
        let (t, xi, wi) = planted_term(rng, dims[i], kind);
        x.rows_mut(off[i], dims[i]).copy_from(&xi);
        w.rows_mut(off[i], dims[i]).copy_from(&wi);
        theta.push(t);
    }
    let r = (0..n)
        .map(|i| {
            if matches!(kinds[i], "l1" | "box") {
                linearizing_r(&block(&h, &dims, i, i), &a_cols(&a, &dims, i), beta).1
            } else {
                DMatrix::zeros(dims[i], dims[i])
            }
        })
        .collect();
    let mu = uniform_vec(rng, m);
    let (inst, kkt) = plant(dims, h, a, theta, x, w, mu);
    Planted { inst, kkt, r, kinds }
}

/// `n` blocks with `θ ≡ 0` and positive definite `H_ii + A_iᵀA_i`, planted KKT
/// point. `H` may be singular or zero.
pub fn nblock_qp_instance(rng: &mut impl Rng, n: usize, max_dim: usize) -> Planted {
    loop {
        let dims: Vec<usize> = (0..n).map(|_| rng.random_range(1..=max_dim)).collect();
        let d: usize = dims.iter().sum();
        let m = rng.random_range(1..=3);
        let h = match rng.random_range(0..4) {
            0 => DMatrix::zeros(d, d),
            1 => {
                let rows = rng.random_range(1..=d);
                random_psd(rng, d, rows)
            }
            _ => random_psd(rng, d, d + 1),
        };
        let a = uniform(rng, m, d);
        let ok = (0..n).all(|i| {
            let ai = a_cols(&a, &dims, i);
            eig_min(&(block(&h, &dims, i, i) + ai.transpose() * ai)) > 1e-3
        });
        if !ok {
            continue;
        }
        let theta = dims.iter().map(|&di| ProxFn::zero(di)).collect();
        let x = uniform_vec(rng, d);
        let mu = uniform_vec(rng, m);
        let (inst, kkt) = plant(dims.clone(), h, a, theta, x, DVector::zeros(d), mu);
        return Planted {
            inst,
            kkt,
            r: Vec::new(),
            kinds: vec!["zero"; n],
        };
    }
}

/// Two-block quadratic instance whose block `host` has a one-dimensional null
/// direction `ȳ` with `Hȳ = 0` and `Aȳ = 0`. Returns the instance and `ȳ`.
pub fn singular_two_block_instance(rng: &mut impl Rng) -> (ProblemInstance, DVector<f64>) {
    let host = rng.random_range(0..2);
    let mut dims = vec![rng.random_range(1..=3), rng.random_range(1..=3)];
    dims[host] += 1;
    let d = dims[0] + dims[1];
    let m = rng.random_range(1..=3);
    let off = offsets(&dims);
    let yh = uniform_vec(rng, dims[host]).normalize();
    let mut y = DVector::zeros(d);
    y.rows_mut(off[host], dims[host]).copy_from(&yh);
    let proj = DMatrix::identity(d, d) - &y * y.transpose();
    let c = uniform(rng, d + 2, d) * &proj;
    let h = sym(&(c.transpose() * c));
    let a = uniform(rng, m, d) * &proj;
    let x = &proj * uniform_vec(rng, d);
    let mu = uniform_vec(rng, m);
    let theta = dims.iter().map(|&di| ProxFn::zero(di)).collect();
    let (inst, _) = plant(dims, h, a, theta, x, DVector::zeros(d), mu);
    (inst, y)
}

/// Classic three-block example on which cyclic ADMM diverges.
pub fn cyclic_counterexample() -> ProblemInstance {
    let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 2.0, 2.0]);
    ProblemInstance::quadratic(
        vec![1, 1, 1],
        DMatrix::zeros(3, 3),
        DVector::zeros(3),
        a,
        DVector::zeros(3),
    )
    .unwrap()
}

/// `S = H + βAᵀA`.
pub fn s_oracle(inst: &ProblemInstance, beta: f64) -> DMatrix<f64> {
    &inst.h + inst.a.transpose() * &inst.a * beta
}

/// Block lower part of `S` in the update order `sigma`.
pub fn l_sigma_oracle(s: &DMatrix<f64>, dims: &[usize], sigma: &[usize]) -> DMatrix<f64> {
    let off = offsets(dims);
    let mut pos = vec![0; dims.len()];
    for (p, &b) in sigma.iter().enumerate() {
        pos[b] = p;
    }
    let mut l = DMatrix::zeros(s.nrows(), s.ncols());
    for i in 0..dims.len() {
        for j in 0..dims.len() {
            if pos[i] >= pos[j] {
                l.view_mut((off[i], off[j]), (dims[i], dims[j]))
                    .copy_from(&s.view((off[i], off[j]), (dims[i], dims[j])));
            }
        }
    }
    l
}

/// `(Q, M)` by direct averaging over every order.
pub fn q_m_oracle(inst: &ProblemInstance, beta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let dims = inst.blocks.dims().to_vec();
    let (d, m) = (inst.d(), inst.m());
    let s = s_oracle(inst, beta);
    let mut q = DMatrix::zeros(d, d);
    let mut mm = DMatrix::zeros(d + m, d + m);
    let mut count = 0.0;
    for sigma in (0..dims.len()).permutations(dims.len()) {
        let l = l_sigma_oracle(&s, &dims, &sigma);
        let linv = l.clone().try_inverse().expect("L nonsingular");
        q += &linv;
        let mut lbar = DMatrix::zeros(d + m, d + m);
        lbar.view_mut((0, 0), (d, d)).copy_from(&l);
        lbar.view_mut((d, 0), (m, d)).copy_from(&(&inst.a * beta));
        lbar.view_mut((d, d), (m, m)).fill_with_identity();
        let mut rbar = DMatrix::zeros(d + m, d + m);
        rbar.view_mut((0, 0), (d, d)).copy_from(&(&l - &s));
        rbar.view_mut((0, d), (d, m)).copy_from(&inst.a.transpose());
        rbar.view_mut((d, d), (m, m)).fill_with_identity();
        mm += lbar.try_inverse().expect("L̄ nonsingular") * rbar;
        count += 1.0;
    }
    (q / count, mm / count)
}

/// Eigenvalues of `QS` through the symmetric matrix `Q^{1/2} S Q^{1/2}`.
pub fn eig_qs_oracle(q: &DMatrix<f64>, s: &DMatrix<f64>) -> Vec<f64> {
    let e = sym(q).symmetric_eigen();
    let root = &e.eigenvectors
        * DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()))
        * e.eigenvectors.transpose();
    let mut v: Vec<f64> = sym(&(&root * s * &root)).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `‖Hx + g + ∇q - Aᵀμ‖` and `‖Ax - b‖` for `θ ≡ 0`.
pub fn qp_kkt_residual(inst: &ProblemInstance, x: &DVector<f64>, mu: &DVector<f64>) -> (f64, f64) {
    let stat = &inst.h * x + &inst.g - inst.a.transpose() * mu;
    let feas = &inst.a * x - &inst.b;
    (stat.norm(), feas.norm())
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
