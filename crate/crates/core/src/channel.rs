//! Doubly-selective channel: Jakes statistics, BEM-driven ground truth,
//! time-domain channel matrices and additive noise.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;

use crate::bem::{BemBasis, BemCoefficients};
use crate::bessel::j0;
use crate::kalman::{ArModel, BasisMap};
use crate::linalg::{complex_normal, psd_factor, real, CMatrix, CVector};
use crate::ofdm::dft_matrix;
use crate::{Error, Result, C64};

/// Per-tap powers and Doppler parameters of a wide-sense stationary channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelProfile {
    pub pdp_db: Vec<f64>,
    /// Linear tap variances, normalized to unit sum.
    pub sigma2: Vec<f64>,
    pub doppler_hz: f64,
    pub sample_interval: f64,
    /// Samples per OFDM symbol including the cyclic prefix.
    pub samples_per_symbol: usize,
}

impl ChannelProfile {
    pub fn new(
        pdp_db: &[f64],
        doppler_hz: f64,
        sample_interval: f64,
        samples_per_symbol: usize,
    ) -> Result<Self> {
        if pdp_db.is_empty() {
            return Err(Error::Config("power delay profile is empty".into()));
        }
        if pdp_db.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config(
                "power delay profile has non-finite entries".into(),
            ));
        }
        if !(doppler_hz >= 0.0 && doppler_hz.is_finite()) {
            return Err(Error::Config(format!("Doppler {doppler_hz} Hz is invalid")));
        }
        if !(sample_interval > 0.0 && sample_interval.is_finite()) {
            return Err(Error::Config(format!(
                "sample interval {sample_interval} s is invalid"
            )));
        }
        let linear: Vec<f64> = pdp_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
        let total: f64 = linear.iter().sum();
        Ok(Self {
            pdp_db: pdp_db.to_vec(),
            sigma2: linear.iter().map(|p| p / total).collect(),
            doppler_hz,
            sample_interval,
            samples_per_symbol,
        })
    }

    pub fn n_taps(&self) -> usize {
        self.sigma2.len()
    }

    /// Index of the strongest tap (first one on ties).
    pub fn strongest_tap(&self) -> usize {
        let mut best = 0;
        for (l, &s) in self.sigma2.iter().enumerate() {
            if s > self.sigma2[best] {
                best = l;
            }
        }
        best
    }
}

/// `R[k, m] = sigma2_l * J0(2 pi fd Ts (k - m + lag * Ns))` for an `n`-sample block.
pub fn jakes_correlation_matrix(
    profile: &ChannelProfile,
    tap: usize,
    lag: i64,
    n: usize,
) -> Result<CMatrix> {
    let sigma2 = *profile.sigma2.get(tap).ok_or_else(|| {
        Error::Input(format!(
            "tap {tap} out of range for {} taps",
            profile.n_taps()
        ))
    })?;
    let w = 2.0 * PI * profile.doppler_hz * profile.sample_interval;
    let ns = profile.samples_per_symbol as i64;
    // Toeplitz: evaluate each diagonal once.
    let offset = n as i64 - 1;
    let diag: Vec<f64> = (-(offset)..=offset)
        .map(|d| sigma2 * j0(w * (d + lag * ns) as f64))
        .collect();
    Ok(CMatrix::from_fn(n, n, |k, m| {
        real(diag[(k as i64 - m as i64 + offset) as usize])
    }))
}

/// Tap gains `h_{l,n}(q)` for a whole frame, stored tap-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TapGrid {
    n_taps: usize,
    n_symbols: usize,
    n_samples: usize,
    data: Vec<C64>,
}

impl TapGrid {
    pub fn zeros(n_taps: usize, n_symbols: usize, n_samples: usize) -> Self {
        Self {
            n_taps,
            n_symbols,
            n_samples,
            data: vec![C64::new(0.0, 0.0); n_taps * n_symbols * n_samples],
        }
    }

    pub fn n_taps(&self) -> usize {
        self.n_taps
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_taps, self.n_symbols, self.n_samples)
    }

    fn offset(&self, l: usize, n: usize) -> usize {
        assert!(
            l < self.n_taps && n < self.n_symbols,
            "tap ({l}, {n}) out of range"
        );
        (l * self.n_symbols + n) * self.n_samples
    }

    pub fn tap(&self, l: usize, n: usize) -> &[C64] {
        let o = self.offset(l, n);
        &self.data[o..o + self.n_samples]
    }

    pub fn tap_mut(&mut self, l: usize, n: usize) -> &mut [C64] {
        let o = self.offset(l, n);
        &mut self.data[o..o + self.n_samples]
    }

    /// Whole-frame trajectory of tap `l`, length `n_symbols * n_samples`.
    pub fn trajectory(&self, l: usize) -> &[C64] {
        let o = self.offset(l, 0);
        &self.data[o..o + self.n_symbols * self.n_samples]
    }

    /// The L tap vectors of symbol `n`.
    pub fn symbol(&self, n: usize) -> Vec<&[C64]> {
        (0..self.n_taps).map(|l| self.tap(l, n)).collect()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }
}

/// Ground-truth channel for one frame.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub taps: TapGrid,
    /// Active model per symbol: 0 for the first basis, 1 for the second.
    pub schedule: Vec<usize>,
    /// Generating coefficients per symbol, in the active basis.
    pub true_coeffs: Vec<BemCoefficients>,
}

impl ChannelRealization {
    pub fn n_symbols(&self) -> usize {
        self.taps.n_symbols()
    }
}

/// Generate a frame whose taps follow `bases[0]` for the first half and
/// `bases[1]` for the second half.
///
/// Coefficients evolve as `c_n = A c_{n-1} + u_n`, starting from the first
/// model's stationary distribution. At `frame_len / 2` the first model takes
/// one more step, and the second model's state is drawn from its stationary
/// distribution conditioned on that step (see [`BasisMap`]), so the taps stay
/// close to continuous and every symbol remains marginally stationary. Without
/// a `handover` map the second half starts from a fresh stationary draw.
pub fn generate_bem_channel<R: Rng + ?Sized>(
    frame_len: usize,
    bases: [&BemBasis; 2],
    ar: [&ArModel; 2],
    handover: Option<&BasisMap>,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if frame_len == 0 || !frame_len.is_multiple_of(2) {
        return Err(Error::Input(format!(
            "frame length {frame_len} must be even and positive"
        )));
    }
    let n = bases[0].n_samples();
    let n_taps = ar[0].n_taps();
    for j in 0..2 {
        if bases[j].n_samples() != n
            || ar[j].n_taps() != n_taps
            || ar[j].n_coeffs() != bases[j].n_coeffs()
        {
            return Err(Error::Input(
                "bases and AR models have inconsistent dimensions".into(),
            ));
        }
    }
    let factors = [model_factors(ar[0])?, model_factors(ar[1])?];
    let handover = match handover {
        Some(map) => {
            let noise = psd_factor(map.conditional_covariance(), 1e-10).ok_or_else(|| {
                Error::Statistics("conditional handover covariance is not PSD".into())
            })?;
            if map.gain().shape() != (ar[1].dim(), ar[0].dim()) {
                return Err(Error::Input(
                    "handover map does not match the AR models".into(),
                ));
            }
            Some((map, noise))
        }
        None => None,
    };

    let mut taps = TapGrid::zeros(n_taps, frame_len, n);
    let mut schedule = Vec::with_capacity(frame_len);
    let mut true_coeffs = Vec::with_capacity(frame_len);
    let mut state = CVector::zeros(0);
    for sym in 0..frame_len {
        let model = usize::from(sym >= frame_len / 2);
        let (stat, noise) = &factors[model];
        state = if sym == 0 || (sym == frame_len / 2 && handover.is_none()) {
            stat * complex_normal(rng, stat.ncols())
        } else if sym == frame_len / 2 {
            let (map, cond) = handover.as_ref().expect("checked above");
            let (_, noise0) = &factors[0];
            let carried =
                ar[0].transition() * &state + noise0 * complex_normal(rng, noise0.ncols());
            map.map_mean(&carried) + cond * complex_normal(rng, cond.ncols())
        } else {
            ar[model].transition() * &state + noise * complex_normal(rng, noise.ncols())
        };
        let coeffs = BemCoefficients::new(state.clone(), bases[model].n_coeffs())?;
        let b = bases[model].matrix();
        for l in 0..n_taps {
            let h = b * CVector::from_column_slice(coeffs.tap(l));
            taps.tap_mut(l, sym).copy_from_slice(h.as_slice());
        }
        schedule.push(model);
        true_coeffs.push(coeffs);
    }
    Ok(ChannelRealization {
        taps,
        schedule,
        true_coeffs,
    })
}

fn model_factors(ar: &ArModel) -> Result<(CMatrix, CMatrix)> {
    let stat = psd_factor(ar.stationary_covariance(), 1e-10)
        .ok_or_else(|| Error::Statistics("stationary coefficient covariance is not PSD".into()))?;
    let noise = psd_factor(ar.process_noise(), 1e-10)
        .ok_or_else(|| Error::Statistics("process noise covariance is not PSD".into()))?;
    Ok((stat, noise))
}

/// Time-domain channel matrix of symbol `n`: `[H]_{q,m} = h_{(q-m) mod N}(q)` for lags below L.
pub fn build_channel_matrix(real: &ChannelRealization, n: usize) -> Result<CMatrix> {
    if n >= real.n_symbols() {
        return Err(Error::Input(format!(
            "symbol {n} outside a frame of {}",
            real.n_symbols()
        )));
    }
    Ok(channel_matrix(&real.taps.symbol(n)))
}

/// Channel matrix from the per-tap sample vectors of one symbol.
pub fn channel_matrix(taps: &[&[C64]]) -> CMatrix {
    let n = taps.first().map_or(0, |t| t.len());
    let mut h = CMatrix::zeros(n, n);
    for (l, tap) in taps.iter().enumerate().take(n) {
        for q in 0..n {
            h[(q, (q + n - l) % n)] += tap[q];
        }
    }
    h
}

/// `y(q) = sum_l h_l(q) x((q - l) mod N)` without forming H.
pub fn convolve_circular(taps: &[&[C64]], x: &[C64]) -> Vec<C64> {
    let n = x.len();
    (0..n)
        .map(|q| {
            taps.iter()
                .enumerate()
                .map(|(l, h)| h[q] * x[(q + n - l % n) % n])
                .sum()
        })
        .collect()
}

/// `y = H x + w`, `w ~ CN(0, sigma_w2 I)`.
pub fn apply_channel<R: Rng + ?Sized>(
    h: &CMatrix,
    x: &CVector,
    sigma_w2: f64,
    rng: &mut R,
) -> Result<CVector> {
    if !(sigma_w2 >= 0.0) {
        return Err(Error::Config(format!(
            "noise variance {sigma_w2} is negative"
        )));
    }
    if h.ncols() != x.len() {
        return Err(Error::Input(format!(
            "channel is {:?} but signal has {} samples",
            h.shape(),
            x.len()
        )));
    }
    let w = complex_normal(rng, h.nrows());
    Ok(h * x + w * C64::new(sigma_w2.sqrt(), 0.0))
}

/// Frequency-domain channel `G = F H F^H`.
pub fn freq_channel(h: &CMatrix) -> CMatrix {
    let f = dft_matrix(h.nrows());
    &f * h * f.adjoint()
}

const DUMP_MAGIC: &[u8; 4] = b"TAPS";

/// Write the tap grid as little-endian binary: `b"TAPS"`, then `N`, `L`,
/// `frame_len` as `u32`, then `(re, im)` `f32` pairs ordered by tap, symbol, sample.
pub fn write_taps<W: Write>(taps: &TapGrid, mut out: W) -> Result<()> {
    out.write_all(DUMP_MAGIC)?;
    for v in [taps.n_samples(), taps.n_taps(), taps.n_symbols()] {
        let v = u32::try_from(v).map_err(|_| Error::Input("dimension exceeds u32".into()))?;
        out.write_all(&v.to_le_bytes())?;
    }
    for z in taps.as_slice() {
        out.write_all(&(z.re as f32).to_le_bytes())?;
        out.write_all(&(z.im as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_taps<R: Read>(mut input: R) -> Result<TapGrid> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Input("not a tap dump".into()));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let [n, l, frame] = dims;
    let mut grid = TapGrid::zeros(l, frame, n);
    let mut b = [0u8; 8];
    for z in grid.data.iter_mut() {
        input.read_exact(&mut b)?;
        let re = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        let im = f32::from_le_bytes([b[4], b[5], b[6], b[7]]);
        *z = C64::new(re as f64, im as f64);
    }
    Ok(grid)
}
