//! Complex-exponential basis expansion of per-symbol tap trajectories.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::{hermitian_solve, CMatrix, CVector};
use crate::ofdm::unitary_idft;
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    /// DC plus the nearest discrete frequencies, `m - (Nc-1)/2`.
    Low,
    /// DC plus every second discrete frequency, `2m - (Nc-1)`.
    High,
    /// Deduplicated union of `Low` and `High` of the same order.
    Concat,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Low => "low",
            BasisKind::High => "high",
            BasisKind::Concat => "concat",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(BasisKind::Low),
            "high" => Ok(BasisKind::High),
            "concat" => Ok(BasisKind::Concat),
            other => Err(Error::Config(format!("unknown basis `{other}`"))),
        }
    }
}

/// An N x Nc Fourier basis. Column d is `exp(j 2 pi k f_d / N)`, k = 0..N.
#[derive(Clone, Debug)]
pub struct BemBasis {
    kind: BasisKind,
    freq_indices: Vec<i64>,
    matrix: CMatrix,
    // (B^H B)^{-1} B^H, cached
    pinv: CMatrix,
}

impl BemBasis {
    /// Basis from explicit integer frequency indices (multiples of 2 pi / N).
    pub fn from_frequencies(kind: BasisKind, n: usize, freq_indices: Vec<i64>) -> Result<Self> {
        if freq_indices.is_empty() {
            return Err(Error::Config("basis needs at least one column".into()));
        }
        if freq_indices.len() > n {
            return Err(Error::Config(format!(
                "{} basis columns exceed N = {n}",
                freq_indices.len()
            )));
        }
        let mut residues: Vec<i64> = freq_indices
            .iter()
            .map(|f| f.rem_euclid(n as i64))
            .collect();
        residues.sort_unstable();
        residues.dedup();
        if residues.len() != freq_indices.len() {
            return Err(Error::Config(format!(
                "frequency indices {freq_indices:?} alias modulo N = {n}"
            )));
        }
        let matrix = CMatrix::from_fn(n, freq_indices.len(), |k, d| {
            let r = (k as i64 * freq_indices[d]).rem_euclid(n as i64);
            C64::from_polar(1.0, 2.0 * PI * r as f64 / n as f64)
        });
        let gram = matrix.adjoint() * &matrix;
        let pinv = hermitian_solve(&gram, &matrix.adjoint())
            .ok_or_else(|| Error::Numerical("basis Gram matrix is singular".into()))?;
        Ok(Self {
            kind,
            freq_indices,
            matrix,
            pinv,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn freq_indices(&self) -> &[i64] {
        &self.freq_indices
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `(B^H B)^{-1} B^H`
    pub fn pseudo_inverse(&self) -> &CMatrix {
        &self.pinv
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_coeffs(&self) -> usize {
        self.matrix.ncols()
    }

    /// Concatenation of two bases on the same N, dropping repeated frequencies.
    /// Columns are ordered by ascending frequency index.
    pub fn concat(a: &BemBasis, b: &BemBasis) -> Result<Self> {
        if a.n_samples() != b.n_samples() {
            return Err(Error::Config(
                "cannot concatenate bases of different length".into(),
            ));
        }
        let mut freqs: Vec<i64> = a
            .freq_indices
            .iter()
            .chain(&b.freq_indices)
            .copied()
            .collect();
        freqs.sort_unstable();
        freqs.dedup();
        Self::from_frequencies(BasisKind::Concat, a.n_samples(), freqs)
    }
}

/// Build a basis of the given kind. For `Concat`, `nc` is the order of each
/// of the two component bases.
pub fn make_basis(kind: BasisKind, n: usize, nc: usize) -> Result<BemBasis> {
    if nc == 0 || nc.is_multiple_of(2) {
        return Err(Error::Config(format!("basis order Nc = {nc} must be odd")));
    }
    if nc > n {
        return Err(Error::Config(format!(
            "basis order Nc = {nc} exceeds N = {n}"
        )));
    }
    let half = (nc as i64 - 1) / 2;
    match kind {
        BasisKind::Low => {
            BemBasis::from_frequencies(kind, n, (0..nc as i64).map(|m| m - half).collect())
        }
        BasisKind::High => {
            BemBasis::from_frequencies(kind, n, (0..nc as i64).map(|m| 2 * m - 2 * half).collect())
        }
        BasisKind::Concat => {
            let low = make_basis(BasisKind::Low, n, nc)?;
            let high = make_basis(BasisKind::High, n, nc)?;
            BemBasis::concat(&low, &high)
        }
    }
}

/// Least-squares coefficients of `h` in the basis.
pub fn project_taps(basis: &BemBasis, h: &[C64]) -> CVector {
    basis.pseudo_inverse() * CVector::from_column_slice(h)
}

/// Coefficient correlation `P R_h P^H` with `P = (B^H B)^{-1} B^H`.
pub fn coeff_correlation(basis: &BemBasis, r_h: &CMatrix) -> Result<CMatrix> {
    let n = basis.n_samples();
    if r_h.shape() != (n, n) {
        return Err(Error::Input(format!(
            "tap correlation is {:?}, expected {n}x{n}",
            r_h.shape()
        )));
    }
    let p = basis.pseudo_inverse();
    Ok(p * r_h * p.adjoint())
}

/// `h = B c`
pub fn reconstruct_taps(basis: &BemBasis, c: &[C64]) -> Vec<C64> {
    (basis.matrix() * CVector::from_column_slice(c))
        .as_slice()
        .to_vec()
}

/// Stacked coefficients `[c_0; c_1; ...; c_{L-1}]`, `Nc` entries per tap.
#[derive(Clone, Debug, PartialEq)]
pub struct BemCoefficients {
    values: CVector,
    n_coeffs: usize,
}

impl BemCoefficients {
    pub fn new(values: CVector, n_coeffs: usize) -> Result<Self> {
        if n_coeffs == 0 || !values.len().is_multiple_of(n_coeffs) {
            return Err(Error::Input(format!(
                "{} coefficients do not split into taps of {n_coeffs}",
                values.len()
            )));
        }
        Ok(Self { values, n_coeffs })
    }

    pub fn stack(per_tap: &[CVector]) -> Result<Self> {
        let n_coeffs = per_tap.first().map_or(0, |c| c.len());
        if per_tap.iter().any(|c| c.len() != n_coeffs) {
            return Err(Error::Input(
                "taps have different coefficient counts".into(),
            ));
        }
        let values = CVector::from_iterator(
            per_tap.len() * n_coeffs,
            per_tap.iter().flat_map(|c| c.iter().copied()),
        );
        Self::new(values, n_coeffs)
    }

    pub fn n_taps(&self) -> usize {
        self.values.len() / self.n_coeffs
    }

    pub fn n_coeffs(&self) -> usize {
        self.n_coeffs
    }

    pub fn tap(&self, l: usize) -> &[C64] {
        &self.values.as_slice()[l * self.n_coeffs..(l + 1) * self.n_coeffs]
    }

    pub fn as_vector(&self) -> &CVector {
        &self.values
    }
}

/// Measurement matrix `S_n` with `S_n c = H_n x_n` for `x_n = F^H X_n`.
///
/// Column `l * Nc + d` is `b_d .* x((q - l) mod N)`. Written with the
/// unitary DFT this is `sqrt(N) * diag(b_d) F^H diag(X) f_l`, i.e. the
/// `[V_0 ... V_{L-1}]` block layout with a leading factor of `sqrt(N)`.
pub fn build_measurement_matrix(
    basis: &BemBasis,
    freq_symbols: &[C64],
    n_taps: usize,
) -> Result<CMatrix> {
    let n = basis.n_samples();
    if freq_symbols.len() != n {
        return Err(Error::Input(format!(
            "{} frequency symbols for a basis of length {n}",
            freq_symbols.len()
        )));
    }
    let x = unitary_idft(freq_symbols);
    Ok(measurement_matrix_from_time(basis, &x, n_taps))
}

/// As [`build_measurement_matrix`], from the CP-free time samples directly.
pub fn measurement_matrix_from_time(basis: &BemBasis, x: &[C64], n_taps: usize) -> CMatrix {
    let n = basis.n_samples();
    let nc = basis.n_coeffs();
    let b = basis.matrix();
    CMatrix::from_fn(n, n_taps * nc, |q, col| {
        let (l, d) = (col / nc, col % nc);
        b[(q, d)] * x[(q + n - l % n) % n]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_re;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }

    #[test]
    fn frequency_sets() {
        assert_eq!(
            make_basis(BasisKind::Low, 64, 3).unwrap().freq_indices(),
            &[-1, 0, 1]
        );
        assert_eq!(
            make_basis(BasisKind::High, 64, 3).unwrap().freq_indices(),
            &[-2, 0, 2]
        );
        let c = make_basis(BasisKind::Concat, 64, 3).unwrap();
        assert_eq!(c.freq_indices(), &[-2, -1, 0, 1, 2]);
        assert_eq!(c.n_coeffs(), 5);
        assert_eq!(c.kind(), BasisKind::Concat);
    }

    #[test]
    fn low_basis_entries() {
        let b = make_basis(BasisKind::Low, 64, 3).unwrap();
        for m in 0..3 {
            assert!((b.matrix()[(0, m)] - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let want = C64::from_polar(1.0, 2.0 * PI / 64.0);
        assert!((b.matrix()[(1, 2)] - want).norm() < 1e-15);
    }

    #[test]
    fn order_errors() {
        assert!(matches!(
            make_basis(BasisKind::Low, 4, 5),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            make_basis(BasisKind::Low, 64, 2),
            Err(Error::Config(_))
        ));
        // High with Nc = 5 on N = 8 hits frequencies -4 and +4, which alias.
        assert!(matches!(
            make_basis(BasisKind::High, 8, 5),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn columns_orthogonal() {
        for kind in [BasisKind::Low, BasisKind::High, BasisKind::Concat] {
            let b = make_basis(kind, 64, 3).unwrap();
            let g = b.matrix().adjoint() * b.matrix();
            let want = CMatrix::identity(b.n_coeffs(), b.n_coeffs()) * C64::new(64.0, 0.0);
            assert!((g - want).norm() < 1e-12 * 64.0);
        }
    }

    #[test]
    fn in_span_recovery_and_dc_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = make_basis(BasisKind::Low, 64, 3).unwrap();
        let c0: Vec<C64> = (0..3).map(|_| rand_c(&mut rng)).collect();
        let h = reconstruct_taps(&b, &c0);
        let c = project_taps(&b, &h);
        for (x, y) in c.iter().zip(&c0) {
            assert!((x - y).norm() < 1e-10);
        }
        let ones = vec![C64::new(1.0, 0.0); 64];
        let c = project_taps(&b, &ones);
        assert!((c[1] - C64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(c[0].norm() < 1e-14 && c[2].norm() < 1e-14);
    }

    #[test]
    fn projection_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = make_basis(BasisKind::Low, 8, 3).unwrap();
        let h: Vec<C64> = (0..8).map(|_| rand_c(&mut rng)).collect();
        // generic LU solve of (B^H B) c = B^H h
        let bh = b.matrix().adjoint();
        let oracle = (&bh * b.matrix())
            .lu()
            .solve(&(&bh * CVector::from_column_slice(&h)))
            .unwrap();
        let c = project_taps(&b, &h);
        assert!((c - &oracle).norm() < 1e-12);
        // residual orthogonal to the span
        let r = CVector::from_column_slice(&h) - b.matrix() * oracle;
        assert!((bh * r).norm() < 1e-10 * 8f64.sqrt());
    }

    #[test]
    fn reconstruct_edge_cases() {
        let b = make_basis(BasisKind::Low, 16, 3).unwrap();
        assert!(reconstruct_taps(&b, &[C64::new(0.0, 0.0); 3])
            .iter()
            .all(|z| z.norm() == 0.0));
        let dc = [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        assert!(reconstruct_taps(&b, &dc)
            .iter()
            .all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn coeff_correlation_of_white_taps() {
        let b = make_basis(BasisKind::High, 32, 3).unwrap();
        let r = CMatrix::identity(32, 32) * C64::new(0.7, 0.0);
        let rc = coeff_correlation(&b, &r).unwrap();
        let want = CMatrix::identity(3, 3) * C64::new(0.7 / 32.0, 0.0);
        assert!((rc - want).norm() < 1e-14);
    }

    #[test]
    fn coeff_correlation_of_static_taps() {
        let b = make_basis(BasisKind::Low, 32, 5).unwrap();
        let r = CMatrix::from_element(32, 32, C64::new(0.4, 0.0));
        let rc = coeff_correlation(&b, &r).unwrap();
        let dc = b.freq_indices().iter().position(|&f| f == 0).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == dc && j == dc { 0.4 } else { 0.0 };
                assert!((rc[(i, j)] - C64::new(want, 0.0)).norm() < 1e-14);
            }
        }
        assert!((trace_re(&rc) - 0.4).abs() < 1e-14);
    }

    #[test]
    fn measurement_matrix_flat_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = BemBasis::from_frequencies(BasisKind::Low, 8, vec![0]).unwrap();
        let x_freq: Vec<C64> = (0..8).map(|_| rand_c(&mut rng)).collect();
        let s = build_measurement_matrix(&b, &x_freq, 1).unwrap();
        let h = C64::new(0.3, -0.8);
        let x = unitary_idft(&x_freq);
        let y = &s * CVector::from_element(1, h);
        for q in 0..8 {
            assert!((y[q] - h * x[q]).norm() < 1e-14);
        }
    }

    #[test]
    fn measurement_matrix_of_silence() {
        let b = make_basis(BasisKind::Low, 8, 3).unwrap();
        let s = build_measurement_matrix(&b, &[C64::new(0.0, 0.0); 8], 2).unwrap();
        assert_eq!(s.shape(), (8, 6));
        assert!(s.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn coefficient_stacking() {
        let a = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0)]);
        let b = CVector::from_vec(vec![C64::new(3.0, 0.0), C64::new(4.0, 0.0)]);
        let s = BemCoefficients::stack(&[a, b]).unwrap();
        assert_eq!(s.n_taps(), 2);
        assert_eq!(s.tap(1)[0], C64::new(3.0, 0.0));
        assert!(BemCoefficients::new(CVector::zeros(5), 2).is_err());
    }
}
