//! OFDM framing: constellation mapping, unitary DFT and cyclic prefix.
//!
//! The DFT is unitary, `[F]_{k,m} = exp(-j 2 pi k m / N) / sqrt(N)`, so the
//! time samples `x = F^H X` carry the same energy as the subcarrier symbols.

use std::cell::RefCell;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::linalg::CMatrix;
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Bpsk,
    Qpsk,
}

const BPSK_POINTS: [C64; 2] = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0)];
// Gray order: bits (b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)
const QPSK_POINTS: [C64; 4] = [
    C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    C64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    C64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    C64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

impl Constellation {
    /// Unit-energy alphabet, indexed by the integer value of the bit group (MSB first).
    pub fn points(self) -> &'static [C64] {
        match self {
            Constellation::Bpsk => &BPSK_POINTS,
            Constellation::Qpsk => &QPSK_POINTS,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Constellation::Bpsk => 1,
            Constellation::Qpsk => 2,
        }
    }

    /// Nearest alphabet point. Ties go to the first point in `points()`.
    pub fn slice(self, z: C64) -> C64 {
        self.points()[self.nearest_index(z)]
    }

    fn nearest_index(self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points().iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constellation::Bpsk => "bpsk",
            Constellation::Qpsk => "qpsk",
        })
    }
}

impl FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Constellation::Bpsk),
            "qpsk" => Ok(Constellation::Qpsk),
            other => Err(Error::Config(format!("unknown constellation `{other}`"))),
        }
    }
}

/// Map a bit sequence (each entry 0 or 1) to constellation points.
pub fn map_symbols(bits: &[u8], c: Constellation) -> Result<Vec<C64>> {
    let bps = c.bits_per_symbol();
    if !bits.len().is_multiple_of(bps) {
        return Err(Error::Input(format!(
            "{} bits is not a multiple of {bps} bits per symbol",
            bits.len()
        )));
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::Input(format!("bit value {b} is not 0 or 1")));
    }
    Ok(bits
        .chunks(bps)
        .map(|g| {
            let idx = g.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
            c.points()[idx]
        })
        .collect())
}

/// Hard-decision inverse of [`map_symbols`].
pub fn demap_symbols(symbols: &[C64], c: Constellation) -> Vec<u8> {
    let bps = c.bits_per_symbol();
    let mut bits = Vec::with_capacity(symbols.len() * bps);
    for &z in symbols {
        let idx = c.nearest_index(z);
        for k in (0..bps).rev() {
            bits.push(((idx >> k) & 1) as u8);
        }
    }
    bits
}

pub fn random_bits<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<u8> {
    (0..count).map(|_| rng.random_range(0..2u8)).collect()
}

/// `count` uniformly random constellation points.
pub fn random_symbols<R: Rng + ?Sized>(rng: &mut R, c: Constellation, count: usize) -> Vec<C64> {
    let bits = random_bits(rng, count * c.bits_per_symbol());
    map_symbols(&bits, c).expect("bit count is a multiple of bits per symbol")
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_in_place(buf: &mut [C64], inverse: bool) {
    let n = buf.len();
    if n == 0 {
        return;
    }
    let plan = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    });
    plan.process(buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|z| *z *= scale);
}

/// Unitary DFT: `X = F x`.
pub fn unitary_dft(x: &[C64]) -> Vec<C64> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf, false);
    buf
}

/// Unitary inverse DFT: `x = F^H X`.
pub fn unitary_idft(x: &[C64]) -> Vec<C64> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf, true);
    buf
}

/// The N x N unitary DFT matrix.
pub fn dft_matrix(n: usize) -> CMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |k, m| {
        let phase = -2.0 * PI * ((k * m) % n) as f64 / n as f64;
        C64::from_polar(scale, phase)
    })
}

/// IDFT of `freq` with the last `ng` samples prepended as cyclic prefix.
pub fn ofdm_modulate(freq: &[C64], ng: usize) -> Result<Vec<C64>> {
    let n = freq.len();
    if ng >= n {
        return Err(Error::Config(format!(
            "cyclic prefix {ng} must be shorter than N = {n}"
        )));
    }
    let time = unitary_idft(freq);
    let mut out = Vec::with_capacity(n + ng);
    out.extend_from_slice(&time[n - ng..]);
    out.extend_from_slice(&time);
    Ok(out)
}

/// DFT of one CP-stripped received symbol.
pub fn ofdm_demodulate(y: &[C64]) -> Result<Vec<C64>> {
    if y.is_empty() {
        return Err(Error::Input("empty OFDM symbol".into()));
    }
    Ok(unitary_dft(y))
}

/// One transmitted OFDM symbol in both domains.
#[derive(Clone, Debug)]
pub struct OfdmSymbol {
    pub index: usize,
    pub freq_symbols: Vec<C64>,
    /// CP-prefixed time samples, length N + Ng.
    pub time_samples: Vec<C64>,
    pub cp_len: usize,
}

impl OfdmSymbol {
    pub fn new(index: usize, freq_symbols: Vec<C64>, cp_len: usize) -> Result<Self> {
        let time_samples = ofdm_modulate(&freq_symbols, cp_len)?;
        Ok(Self {
            index,
            freq_symbols,
            time_samples,
            cp_len,
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.freq_symbols.len()
    }

    /// Time samples with the cyclic prefix removed.
    pub fn body(&self) -> &[C64] {
        &self.time_samples[self.cp_len..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[C64], b: &[C64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() < tol)
    }

    #[test]
    fn bpsk_convention() {
        assert_eq!(
            map_symbols(&[0], Constellation::Bpsk).unwrap(),
            vec![C64::new(1.0, 0.0)]
        );
        assert_eq!(
            map_symbols(&[1], Constellation::Bpsk).unwrap(),
            vec![C64::new(-1.0, 0.0)]
        );
    }

    #[test]
    fn qpsk_convention() {
        let s = map_symbols(&[0, 0], Constellation::Qpsk).unwrap();
        assert!((s[0] - C64::new(1.0, 1.0) / 2f64.sqrt()).norm() < 1e-15);
    }

    #[test]
    fn qpsk_is_gray_and_unit_energy() {
        let pts = Constellation::Qpsk.points();
        let energy: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / pts.len() as f64;
        assert!((energy - 1.0).abs() < 1e-15);
        // nearest neighbours differ in exactly one bit
        for i in 0..4usize {
            for j in 0..4usize {
                let d = (pts[i] - pts[j]).norm();
                if (d - 2f64.sqrt()).abs() < 1e-12 {
                    assert_eq!((i ^ j).count_ones(), 1);
                }
            }
        }
    }

    #[test]
    fn odd_bit_count_rejected_for_qpsk() {
        assert!(matches!(
            map_symbols(&[0, 1, 1], Constellation::Qpsk),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn slicer_tie_goes_to_first_point() {
        assert_eq!(
            Constellation::Qpsk.slice(C64::new(0.0, 0.0)),
            QPSK_POINTS[0]
        );
        assert_eq!(
            Constellation::Bpsk.slice(C64::new(0.0, 0.3)),
            BPSK_POINTS[0]
        );
    }

    #[test]
    fn modulate_delta_spectrum() {
        let x = vec![C64::new(1.0, 0.0); 4];
        let out = ofdm_modulate(&x, 1).unwrap();
        let want = [0.0, 2.0, 0.0, 0.0, 0.0].map(|v| C64::new(v, 0.0));
        assert!(close(&out, &want, 1e-14));
        let x = vec![C64::new(2.0, 0.0); 4];
        let out = ofdm_modulate(&x, 1).unwrap();
        let want = [0.0, 4.0, 0.0, 0.0, 0.0].map(|v| C64::new(v, 0.0));
        assert!(close(&out, &want, 1e-14));
    }

    #[test]
    fn modulate_zeros() {
        let out = ofdm_modulate(&[C64::new(0.0, 0.0); 8], 2).unwrap();
        assert!(out.iter().all(|z| z.norm() == 0.0));
        assert_eq!(out.len(), 10);
    }

    #[test]
    fn cp_too_long() {
        assert!(matches!(
            ofdm_modulate(&[C64::new(1.0, 0.0); 4], 4),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn demodulate_zeros() {
        let out = ofdm_demodulate(&[C64::new(0.0, 0.0); 4]).unwrap();
        assert!(out.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn demodulate_conjugate_dft_column() {
        // y_m = exp(+j 2 pi m k0 / N) / sqrt(N) is the k0-th column of F^H; its DFT is a delta at k0.
        let n = 4;
        for k0 in 0..n {
            let y: Vec<C64> = (0..n)
                .map(|m| C64::from_polar(0.5, 2.0 * PI * (m * k0) as f64 / n as f64))
                .collect();
            let out = ofdm_demodulate(&y).unwrap();
            for (k, z) in out.iter().enumerate() {
                let want = if k == k0 { 1.0 } else { 0.0 };
                assert!((z - C64::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn fft_matches_dft_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<C64> = (0..16)
            .map(|_| C64::new(rng.random(), rng.random()))
            .collect();
        let f = dft_matrix(16);
        let want = &f * crate::linalg::CVector::from_vec(x.clone());
        assert!(close(&unitary_dft(&x), want.as_slice(), 1e-12));
        assert!((&f * f.adjoint() - CMatrix::identity(16, 16)).norm() < 1e-12);
    }

    #[test]
    fn symbol_cp_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = OfdmSymbol::new(0, random_symbols(&mut rng, Constellation::Qpsk, 64), 16).unwrap();
        assert_eq!(&s.time_samples[..16], &s.time_samples[64..]);
        assert!(close(s.body(), &unitary_idft(&s.freq_symbols), 0.0 + 1e-15));
    }

    proptest! {
        #[test]
        fn round_trip(re in prop::collection::vec(-1.0f64..1.0, 64), im in prop::collection::vec(-1.0f64..1.0, 64), ng in 0usize..32) {
            let x: Vec<C64> = re.iter().zip(&im).map(|(&a, &b)| C64::new(a, b)).collect();
            let tx = ofdm_modulate(&x, ng).unwrap();
            prop_assert_eq!(&tx[..ng], &tx[64..]);
            let rx = ofdm_demodulate(&tx[ng..]).unwrap();
            prop_assert!(close(&rx, &x, 1e-12));
        }

        #[test]
        fn parseval(re in prop::collection::vec(-10.0f64..10.0, 1..100), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<C64> = re.iter().map(|&a| C64::new(a, rng.random::<f64>() - 0.5)).collect();
            let e_t: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            let e_f: f64 = unitary_dft(&x).iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((e_t - e_f).abs() <= 1e-10 * e_t.max(1e-300));
        }

        #[test]
        fn demap_inverts_map(bits in prop::collection::vec(0u8..2, 0..64)) {
            let bits: Vec<u8> = bits.into_iter().take(64 / 2 * 2).collect();
            let even = &bits[..bits.len() / 2 * 2];
            for c in [Constellation::Bpsk, Constellation::Qpsk] {
                let s = map_symbols(even, c).unwrap();
                prop_assert_eq!(demap_symbols(&s, c), even.to_vec());
                prop_assert!(s.iter().all(|z| c.points().contains(z)));
            }
        }
    }
}
