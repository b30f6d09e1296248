//! Dense linear-algebra helpers shared by the solver and the spectral engine.
//!
//! Everything here works on small dense `nalgebra` matrices. Rank decisions use
//! singular values with a threshold relative to the largest singular value.

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen, SVD};

/// Relative singular-value threshold used for every rank decision.
pub const RANK_RTOL: f64 = 1e-10;

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest entry of `|m - mᵀ|`.
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    max_abs(&(m - m.transpose()))
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

/// Smallest eigenvalue of the symmetric part together with a unit eigenvector.
///
/// The eigenvector sign is fixed so that its first entry of largest magnitude
/// is positive, which keeps witnesses reproducible.
pub fn sym_min_eig(m: &DMatrix<f64>) -> Option<(f64, DVector<f64>)> {
    if m.nrows() == 0 {
        return None;
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))?;
    let mut v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
    canonical_sign(&mut v);
    Some((val, v))
}

pub fn sym_max_eig(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is positive.
pub fn canonical_sign(v: &mut DVector<f64>) {
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for x in v.iter() {
        if x.abs() > best * (1.0 + 1e-12) {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.neg_mut();
    }
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |a, &b| a.max(b))
}

/// Numerical rank with threshold `RANK_RTOL * sigma_max`.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * smax).count()
}

/// Minimum-norm least-squares solution of `m x = rhs` via the SVD.
pub fn min_norm_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if m.ncols() == 0 {
        return DVector::zeros(0);
    }
    if m.nrows() == 0 {
        return DVector::zeros(m.ncols());
    }
    let svd = SVD::new(m.clone(), true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    if smax == 0.0 {
        return DVector::zeros(m.ncols());
    }
    svd.solve(rhs, RANK_RTOL * smax)
        .expect("SVD computed with both factors")
}

/// Orthonormal basis of the numerical null space of `m` (columns).
pub fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    // pad to a square matrix so the SVD returns a full V
    let mut sq = DMatrix::zeros(m.nrows().max(n), n);
    sq.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = SVD::new(sq, false, true);
    let v_t = svd.v_t.expect("requested V");
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| smax == 0.0 || s <= RANK_RTOL * smax)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// All eigenvalues of a general real square matrix, via the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    if m.nrows() == 0 {
        return Some(Vec::new());
    }
    // nalgebra's deflation test is relative to the adjacent diagonal entries
    // and never fires between two zero eigenvalues. A shift moves the spectrum
    // off the origin; small shifts first, since the error grows with |shift|.
    let n = m.nrows();
    let (schur, shift) = [0.0, 2.0, -2.0, 2.0 * (1.0 + max_abs(m) * n as f64)]
        .into_iter()
        .find_map(|c| {
            let shifted = m + DMatrix::identity(n, n) * c;
            Schur::try_new(shifted, f64::EPSILON, 10_000).map(|s| (s, c))
        })?;
    let (_, t) = schur.unpack();
    let mut vals: Vec<Complex<f64>> = quasi_triangular_eigenvalues(&t)
        .into_iter()
        .map(|z| z - Complex::new(shift, 0.0))
        .collect();
    vals.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(a.re.total_cmp(&b.re)));
    Some(vals)
}

/// Eigenvalues of a real Schur factor. nalgebra's own extraction can return a
/// NaN imaginary part when a 2×2 block has a tiny negative discriminant.
fn quasi_triangular_eigenvalues(t: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = t.nrows();
    let mut vals = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let mid = 0.5 * (a + d);
            let half = 0.5 * (a - d);
            let disc = half * half + b * c;
            if disc >= 0.0 {
                let r = disc.sqrt();
                vals.push(Complex::new(mid + r, 0.0));
                vals.push(Complex::new(mid - r, 0.0));
            } else {
                let r = (-disc).sqrt();
                vals.push(Complex::new(mid, r));
                vals.push(Complex::new(mid, -r));
            }
            i += 2;
        } else {
            vals.push(Complex::new(t[(i, i)], 0.0));
            i += 1;
        }
    }
    vals
}

/// Spectral radius of a general real square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Option<f64> {
    Some(
        eigenvalues(m)?
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm())),
    )
}

/// Symmetric positive-definite square root.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// `‖v‖²_W = vᵀ W v`.
pub fn wnorm_sq(v: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    (v.transpose() * w * v)[(0, 0)]
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let d: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(d, d);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

/// Builds a row-major matrix from nested rows. Returns `None` on ragged input.
pub fn from_rows(rows: &[Vec<f64>], ncols_if_empty: usize) -> Option<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(ncols_if_empty, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_outer_product_is_one() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &u * u.transpose();
        assert_eq!(rank(&m), 1);
        assert_eq!(rank(&DMatrix::zeros(3, 3)), 0);
        assert_eq!(rank(&DMatrix::identity(4, 4)), 4);
    }

    #[test]
    fn min_norm_solution_of_underdetermined_row() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = min_norm_solve(&a, &DVector::from_vec(vec![1.0]));
        assert!((x[0] - 0.5).abs() < 1e-14 && (x[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn null_space_of_rank_one() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let ns = null_space(&a);
        assert_eq!(ns.ncols(), 1);
        assert!((a * ns).norm() < 1e-14);
    }

    #[test]
    fn rotation_has_complex_pair_of_unit_modulus() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let ev = eigenvalues(&m).unwrap();
        assert_eq!(ev.len(), 2);
        for z in ev {
            assert!((z.norm() - 1.0).abs() < 1e-14);
            assert!(z.re.abs() < 1e-14);
        }
    }

    #[test]
    fn repeated_zero_eigenvalues_converge() {
        // Block nilpotent plus a zero row: unshifted QR never deflates here.
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 1.0, 0.5, 0.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0],
        );
        let ev = eigenvalues(&m).unwrap();
        assert_eq!(ev.len(), 4);
        assert!(ev.iter().all(|z| z.norm() < 1e-3), "{ev:?}");
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.7]);
        let ev = eigenvalues(&m).unwrap();
        assert!((ev[0].re - 0.7).abs() < 1e-14 && ev[1].norm() < 1e-14);
    }

    #[test]
    fn near_degenerate_pair_is_finite() {
        let eps = 1e-17;
        let t = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -eps, 0.5]);
        let ev = quasi_triangular_eigenvalues(&t);
        assert!(ev.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        assert!((ev[0].re - 0.5).abs() < 1e-8 && (ev[0].im.abs() - eps.sqrt()).abs() < 1e-12);
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let mut re: Vec<f64> = quasi_triangular_eigenvalues(&t).iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        let r = 33f64.sqrt() / 2.0;
        assert!((re[0] - (2.5 - r)).abs() < 1e-14 && (re[1] - (2.5 + r)).abs() < 1e-14);
    }

    #[test]
    fn min_eig_vector_sign_is_canonical() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let (val, v) = sym_min_eig(&m).unwrap();
        assert_eq!(val, 0.0);
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1].abs() < 1e-15);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let s = sym_sqrt(&m);
        assert!((&s * &s - m).norm() < 1e-14);
    }
}
