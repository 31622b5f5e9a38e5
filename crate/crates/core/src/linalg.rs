//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::C64;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// (M + M^H) / 2
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Largest entry magnitude of M - M^H.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut eig: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(f64::total_cmp);
    eig
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// True when every eigenvalue is at least `-rel_tol * trace / dim`.
pub fn is_psd(m: &CMatrix, rel_tol: f64) -> bool {
    let dim = m.nrows().max(1) as f64;
    let scale = (trace_re(m) / dim).abs();
    min_eigenvalue(m) >= -rel_tol * scale
}

/// Nearest Hermitian PSD matrix in Frobenius norm (negative eigenvalues clamped).
pub fn project_psd(m: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let clamped = eig.eigenvalues.map(|v| C64::new(v.max(0.0), 0.0));
    let v = &eig.eigenvectors;
    hermitian_part(&(v * CMatrix::from_diagonal(&clamped) * v.adjoint()))
}

/// A factor `G` with `G G^H = m` for Hermitian PSD `m`.
///
/// Returns `None` when an eigenvalue falls below `-rel_tol * max(|eig|)`.
pub fn psd_factor(m: &CMatrix, rel_tol: f64) -> Option<CMatrix> {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if eig.eigenvalues.iter().any(|&v| v < -rel_tol * top) {
        return None;
    }
    let roots = eig.eigenvalues.map(|v| C64::new(v.max(0.0).sqrt(), 0.0));
    Some(&eig.eigenvectors * CMatrix::from_diagonal(&roots))
}

/// Cholesky factor of a Hermitian positive definite matrix.
///
/// The complex factorization never fails on its own (a negative pivot just
/// gets an imaginary square root), so the pivots are checked here.
pub fn cholesky(m: &CMatrix) -> Option<Cholesky<C64, Dyn>> {
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    let ok = (0..m.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re.is_finite() && d.re > 0.0 && d.im.abs() < 1e-6 * d.re
    });
    ok.then_some(chol)
}

/// Solve `m x = b` for Hermitian positive definite `m`.
pub fn hermitian_solve(m: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    cholesky(m).map(|c| c.solve(b))
}

pub fn block_diag(blocks: &[CMatrix]) -> CMatrix {
    let dim: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(dim, dim);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols()))
            .copy_from(b);
        off += b.nrows();
    }
    out
}

/// Circular complex Gaussian vector with unit variance per entry.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_fn(dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

pub fn real(v: f64) -> C64 {
    C64::new(v, 0.0)
}
