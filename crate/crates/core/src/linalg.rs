//! Dense complex linear algebra helpers shared by every module.
//!
//! Matrices are `nalgebra::DMatrix<Complex<f64>>`, stored column-major, so
//! `vec(A)` is simply the backing slice.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Column-stacking vectorization.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols, "unvec length");
    CMat::from_column_slice(rows, cols, v.as_slice())
}

pub fn frob2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn vnorm2(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Real part of the trace.
pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn inv_hpd(m: &CMat) -> Option<CMat> {
    hermitian_part(m).cholesky().map(|ch| ch.inverse())
}

/// `log2 det` of a Hermitian positive definite matrix.
pub fn log2_det_hpd(m: &CMat) -> Option<f64> {
    let ch = hermitian_part(m).cholesky()?;
    let l = ch.l_dirty();
    let mut acc = 0.0;
    for k in 0..m.nrows() {
        acc += l[(k, k)].re.ln();
    }
    Some(2.0 * acc / std::f64::consts::LN_2)
}

/// Eigenvalues of the Hermitian part, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Real symmetric embedding `[[Re, -Im], [Im, Re]]` of a Hermitian matrix.
///
/// The embedding is PSD iff the original is, every eigenvalue appears twice,
/// and `log det` doubles.
pub fn real_embedding(m: &CMat) -> RMat {
    let n = m.nrows();
    let mut out = RMat::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// Orthonormal basis for the column space of `m`, dropping singular values
/// below `rel_tol * s_max`.
pub fn orthonormal_range(m: &CMat, rel_tol: f64) -> CMat {
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return zeros(rows, 0);
    }
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rel_tol * smax)
        .map(|(k, _)| k)
        .collect();
    let mut out = zeros(rows, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        out.set_column(col, &u.column(k));
    }
    out
}

/// Top-`d` right singular vectors of `h` as an `ncols x d` matrix.
pub fn top_right_singular_vectors(h: &CMat, d: usize) -> CMat {
    // Eigenvectors of H^H H avoid relying on the ordering of SVD output.
    let gram = h.adjoint() * h;
    let eig = hermitian_part(&gram).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = zeros(h.ncols(), d);
    for (col, &k) in order.iter().take(d).enumerate() {
        out.set_column(col, &eig.eigenvectors.column(k));
    }
    out
}

/// Lower-triangular Cholesky factor `L` with `L L^H = m`.
pub fn cholesky_factor(m: &CMat) -> Option<CMat> {
    hermitian_part(m).cholesky().map(|ch| ch.unpack())
}

/// Hermitian square root of a Hermitian PSD matrix.
pub fn hpd_sqrt(m: &CMat) -> CMat {
    let eig = hermitian_part(m).symmetric_eigen();
    let q = &eig.eigenvectors;
    let roots = CVec::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|w| c(w.max(0.0).sqrt(), 0.0)));
    q * CMat::from_diagonal(&roots) * q.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec_roundtrip_is_column_major() {
        let m = CMat::from_fn(2, 3, |i, j| c((i + 10 * j) as f64, 0.0));
        let v = vec_of(&m);
        assert_eq!(v[1], c(1.0, 0.0));
        assert_eq!(v[2], c(10.0, 0.0));
        assert_eq!(unvec(&v, 2, 3), m);
    }

    #[test]
    fn embedding_doubles_eigenvalues() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(3.0, 0.0)]);
        let ev = hermitian_eigenvalues(&m);
        let mut er: Vec<f64> = real_embedding(&m).symmetric_eigenvalues().iter().copied().collect();
        er.sort_by(|a, b| a.total_cmp(b));
        assert!((er[0] - ev[0]).abs() < 1e-12 && (er[1] - ev[0]).abs() < 1e-12);
        assert!((er[3] - ev[1]).abs() < 1e-12);
    }

    #[test]
    fn log2_det_matches_determinant() {
        let m = CMat::from_row_slice(2, 2, &[c(4.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)]);
        let direct = m.determinant().re.log2();
        assert!((log2_det_hpd(&m).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn range_basis_drops_null_directions() {
        let m = CMat::from_row_slice(3, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 1.0), c(0.0, 2.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let z = orthonormal_range(&m, 1e-12);
        assert_eq!(z.ncols(), 1);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, 1.0), c(0.5, -1.0), c(3.0, 0.0)]);
        let r = hpd_sqrt(&m);
        assert!((&r * &r - &m).norm() < 1e-12);
        assert!(hermitian_defect(&r) < 1e-12);
    }
}
