#![allow(dead_code)]

use std::f64::consts::PI;

use ofdm_imm::bem::{make_basis, BasisKind, BemBasis};
use ofdm_imm::channel::ChannelProfile;
use ofdm_imm::kalman::{ar_model_from_profile, ArModel};
use ofdm_imm::linalg::{CMatrix, CVector};
use ofdm_imm::C64;
use rand::Rng;

pub const PDP_DB: [f64; 4] = [0.0, -1.0, -3.0, -9.0];

/// Profile with normalized Doppler `fd_norm` per symbol of `n + n / 4` samples.
pub fn profile(n: usize, fd_norm: f64, pdp_db: &[f64]) -> ChannelProfile {
    let ns = n + n / 4;
    let ts = 5e-8;
    ChannelProfile::new(pdp_db, fd_norm / (ns as f64 * ts), ts, ns).unwrap()
}

pub fn basis_and_ar(
    p: &ChannelProfile,
    kind: BasisKind,
    n: usize,
    nc: usize,
) -> (BemBasis, ArModel) {
    let b = make_basis(kind, n, nc).unwrap();
    let ar = ar_model_from_profile(p, &b).unwrap();
    (b, ar)
}

pub fn cn<R: Rng>(rng: &mut R) -> C64 {
    C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 2.0
}

pub fn rand_vec<R: Rng>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| cn(rng))
}

pub fn rand_mat<R: Rng>(rng: &mut R, r: usize, c: usize) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| cn(rng))
}

/// Random Hermitian positive definite matrix.
pub fn rand_pd<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let g = rand_mat(rng, n, n);
    &g * g.adjoint() + CMatrix::identity(n, n) * C64::new(0.1, 0.0)
}

/// Naive unitary inverse DFT.
pub fn idft(x: &[C64]) -> Vec<C64> {
    let n = x.len();
    (0..n)
        .map(|q| {
            x.iter()
                .enumerate()
                .map(|(k, v)| v * C64::from_polar(1.0, 2.0 * PI * (k * q) as f64 / n as f64))
                .sum::<C64>()
                / (n as f64).sqrt()
        })
        .collect()
}

/// `[H]_{q,m} = h_{(q-m) mod N}(q)`, built entry by entry.
pub fn brute_channel_matrix(taps: &[Vec<C64>]) -> CMatrix {
    let n = taps[0].len();
    let mut h = CMatrix::zeros(n, n);
    for q in 0..n {
        for m in 0..n {
            let l = (q + n - m) % n;
            if l < taps.len() {
                h[(q, m)] = taps[l][q];
            }
        }
    }
    h
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn min_eig(m: &CMatrix) -> f64 {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
