//! Decision-directed frame processing.
//!
//! Symbols `0..K` are a known preamble used for acquisition (see
//! [`AcquisitionMode`]). Every later
//! symbol is equalized with taps derived from the previous symbol's estimate
//! (see [`EqualizerTaps`]), sliced to the constellation, and the detected
//! symbols rebuild the measurement matrices for one estimator step.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::bem::{make_basis, measurement_matrix_from_time, BasisKind, BemBasis};
use crate::channel::{convolve_circular, ChannelProfile, ChannelRealization, TapGrid};
use crate::harness::compute_mse;
use crate::imm::{
    imm_step_detailed, mode_maps, ImmState, MatchedModel, ModeMaps, TraceRecord, Transition, MODES,
};
use crate::kalman::{
    ar_model_from_profile, ls_acquire, predict, prior_acquire, update, KalmanState,
};
use crate::linalg::{cholesky, complex_normal, trace_re, CMatrix, CVector};
use crate::ofdm::{random_symbols, unitary_dft, unitary_idft, Constellation};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// IMM over the low- and high-frequency bases.
    Imm,
    /// One Kalman filter matched to a single basis.
    Single(BasisKind),
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Imm => f.write_str("imm"),
            Estimator::Single(kind) => write!(f, "{kind}"),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "imm" => Ok(Estimator::Imm),
            other => other
                .parse()
                .map(Estimator::Single)
                .map_err(|_| Error::Config(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Which taps the equalizer uses for symbol `n`.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum EqualizerTaps {
    /// The filtered estimates of symbol `n-1` pushed through their AR
    /// transitions (mode-weighted by the last IMM probabilities).
    #[default]
    Predicted,
    /// The filtered combined estimate of symbol `n-1`, as is. At a normalized
    /// Doppler of 0.1 this alone costs about 15% symbol errors.
    Previous,
}

impl fmt::Display for EqualizerTaps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EqualizerTaps::Predicted => "predicted",
            EqualizerTaps::Previous => "previous",
        })
    }
}

impl FromStr for EqualizerTaps {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "predicted" => Ok(EqualizerTaps::Predicted),
            "previous" => Ok(EqualizerTaps::Previous),
            other => Err(Error::Config(format!("unknown equalizer taps `{other}`"))),
        }
    }
}

/// How the preamble initializes the trackers.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionMode {
    /// Filter through the preamble starting from the stationary prior.
    #[default]
    Prior,
    /// Per-symbol least squares; the last symbol's estimate seeds tracking.
    Ls,
}

impl fmt::Display for AcquisitionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AcquisitionMode::Prior => "prior",
            AcquisitionMode::Ls => "ls",
        })
    }
}

impl FromStr for AcquisitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "prior" => Ok(AcquisitionMode::Prior),
            "ls" => Ok(AcquisitionMode::Ls),
            other => Err(Error::Config(format!("unknown acquisition mode `{other}`"))),
        }
    }
}

/// Bases and Jakes-derived coefficient dynamics for every estimator.
#[derive(Clone, Debug)]
pub struct ModelBank {
    pub n_taps: usize,
    pub imm: Arc<[MatchedModel; MODES]>,
    /// Basis maps used when mixing IMM states.
    pub imm_maps: Arc<ModeMaps>,
    pub concat: MatchedModel,
}

impl ModelBank {
    pub fn new(profile: &ChannelProfile, n: usize, nc: usize) -> Result<Self> {
        let matched = |basis: BemBasis| -> Result<MatchedModel> {
            let ar = ar_model_from_profile(profile, &basis)?;
            Ok(MatchedModel { basis, ar })
        };
        let low = matched(make_basis(BasisKind::Low, n, nc)?)?;
        let high = matched(make_basis(BasisKind::High, n, nc)?)?;
        let concat = matched(make_basis(BasisKind::Concat, n, nc)?)?;
        let imm = [low, high];
        let imm_maps = Arc::new(mode_maps(profile, &imm)?);
        Ok(Self {
            n_taps: profile.n_taps(),
            imm: Arc::new(imm),
            imm_maps,
            concat,
        })
    }

    pub fn model(&self, kind: BasisKind) -> &MatchedModel {
        match kind {
            BasisKind::Low => &self.imm[0],
            BasisKind::High => &self.imm[1],
            BasisKind::Concat => &self.concat,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.concat.basis.n_samples()
    }
}

/// Per-frame receiver settings.
#[derive(Clone, Debug)]
pub struct ReceiverConfig {
    pub preamble_len: usize,
    pub constellation: Constellation,
    pub preamble: Constellation,
    pub sigma_w2: f64,
    pub transition: Transition,
    pub mu0: [f64; MODES],
    /// Use the transmitted symbols instead of decisions when rebuilding `S_n`.
    pub genie: bool,
    pub equalizer: EqualizerTaps,
    pub acquisition: AcquisitionMode,
}

/// Transmitted symbols and the noiseless received signal of one frame, plus
/// a unit-variance noise draw that is scaled to the operating SNR.
#[derive(Clone, Debug)]
pub struct FrameSource {
    pub tx_freq: Vec<Vec<C64>>,
    pub tx_time: Vec<Vec<C64>>,
    pub clean_rx: Vec<CVector>,
    pub unit_noise: Vec<CVector>,
}

impl FrameSource {
    /// Draw payload symbols and noise for `realization`. Preamble symbols use
    /// `preamble`, the rest `constellation`.
    pub fn generate<R: Rng + ?Sized>(
        realization: &ChannelRealization,
        preamble_len: usize,
        preamble: Constellation,
        constellation: Constellation,
        rng: &mut R,
    ) -> Self {
        let (_, frame, n) = realization.taps.dims();
        let mut src = FrameSource {
            tx_freq: Vec::with_capacity(frame),
            tx_time: Vec::with_capacity(frame),
            clean_rx: Vec::with_capacity(frame),
            unit_noise: Vec::with_capacity(frame),
        };
        for sym in 0..frame {
            let c = if sym < preamble_len {
                preamble
            } else {
                constellation
            };
            let freq = random_symbols(rng, c, n);
            let time = unitary_idft(&freq);
            let clean = convolve_circular(&realization.taps.symbol(sym), &time);
            src.unit_noise.push(complex_normal(rng, n));
            src.clean_rx.push(CVector::from_vec(clean));
            src.tx_freq.push(freq);
            src.tx_time.push(time);
        }
        src
    }

    /// `y_n = H_n x_n + sigma_w w_n` for every symbol.
    pub fn received(&self, sigma_w2: f64) -> Vec<CVector> {
        let s = C64::new(sigma_w2.sqrt(), 0.0);
        self.clean_rx
            .iter()
            .zip(&self.unit_noise)
            .map(|(y, w)| y + w * s)
            .collect()
    }
}

/// Everything recorded while processing one frame.
#[derive(Clone, Debug)]
pub struct FrameResult {
    pub tap_estimates: TapGrid,
    /// IMM mode probabilities per symbol (empty for single-filter estimators).
    pub mode_trace: Vec<TraceRecord>,
    pub detected: Vec<Vec<C64>>,
    pub per_tap_mse: Vec<f64>,
    /// Trace of the innovation covariance per tracked symbol (mode-weighted for IMM).
    pub innovation_trace: Vec<f64>,
    pub symbol_errors: usize,
}

/// Regularized LS equalization `(H^H H + sigma_w2 I) x = H^H y` followed by a
/// hard decision per subcarrier. Returns the decisions and their time samples.
pub fn equalize_and_detect(
    taps_prev: &[Vec<C64>],
    y: &CVector,
    c: Constellation,
    sigma_w2: f64,
) -> (Vec<C64>, Vec<C64>) {
    let n = y.len();
    let mut gram = CMatrix::zeros(n, n);
    let mut rhs = CVector::zeros(n);
    // H has entry h_l(q) at (q, q - l), so H^H H is assembled sample by sample.
    for q in 0..n {
        for (l1, t1) in taps_prev.iter().enumerate() {
            let m1 = (q + n - l1 % n) % n;
            let a = t1[q].conj();
            rhs[m1] += a * y[q];
            for (l2, t2) in taps_prev.iter().enumerate() {
                gram[(m1, (q + n - l2 % n) % n)] += a * t2[q];
            }
        }
    }
    let scale = trace_re(&gram) / n as f64;
    let solve = |ridge: f64| {
        let mut g = gram.clone();
        for i in 0..n {
            g[(i, i)] += ridge;
        }
        cholesky(&g).map(|ch| ch.solve(&rhs))
    };
    let x = solve(sigma_w2)
        .or_else(|| solve(sigma_w2 + 1e-12 * scale.max(1.0)))
        .unwrap_or_else(|| CVector::zeros(n));
    let decided: Vec<C64> = unitary_dft(x.as_slice())
        .into_iter()
        .map(|z| c.slice(z))
        .collect();
    let time = unitary_idft(&decided);
    (decided, time)
}

#[derive(Clone)]
enum Tracker<'a> {
    Single {
        model: &'a MatchedModel,
        state: KalmanState,
    },
    Imm(ImmState),
}

impl Tracker<'_> {
    /// One-step prediction of the taps from the current filtered state(s).
    fn predicted_taps(&self, n_taps: usize) -> Vec<Vec<C64>> {
        match self {
            Tracker::Single { model, state } => basis_taps(
                &model.basis,
                &(model.ar.transition() * &state.c_hat),
                n_taps,
            ),
            Tracker::Imm(state) => {
                let n = state.models[0].basis.n_samples();
                let mut out = vec![vec![C64::new(0.0, 0.0); n]; n_taps];
                for (j, m) in state.models.iter().enumerate() {
                    if state.mu[j] == 0.0 {
                        continue;
                    }
                    let taps = basis_taps(
                        &m.basis,
                        &(m.ar.transition() * &state.filters[j].c_hat),
                        n_taps,
                    );
                    for (o, t) in out.iter_mut().zip(&taps) {
                        for (a, b) in o.iter_mut().zip(t) {
                            *a += b * state.mu[j];
                        }
                    }
                }
                out
            }
        }
    }
}

struct Step {
    taps: Vec<Vec<C64>>,
    innovation_trace: f64,
    record: Option<TraceRecord>,
}

fn advance(
    tracker: &mut Tracker<'_>,
    x_time: &[C64],
    y: &CVector,
    sigma_w2: f64,
    n_taps: usize,
    sym: usize,
) -> Result<Step> {
    match tracker {
        Tracker::Single { model, state } => {
            let s = measurement_matrix_from_time(&model.basis, x_time, n_taps);
            let up = update(&predict(state, &model.ar)?, &s, y, sigma_w2)?;
            *state = up.state;
            Ok(Step {
                taps: basis_taps(&model.basis, &state.c_hat, n_taps),
                innovation_trace: trace_re(&up.innovation_cov),
                record: None,
            })
        }
        Tracker::Imm(state) => {
            let s0 = measurement_matrix_from_time(&state.models[0].basis, x_time, n_taps);
            let s1 = measurement_matrix_from_time(&state.models[1].basis, x_time, n_taps);
            let (next, out, matched) = imm_step_detailed(state, [&s0, &s1], y, sigma_w2)?;
            *state = next;
            Ok(Step {
                innovation_trace: (0..MODES)
                    .map(|j| out.mu[j] * trace_re(&matched[j].update.innovation_cov))
                    .sum(),
                record: Some(TraceRecord {
                    n: sym,
                    mu: out.mu,
                    log_likelihoods: out.log_likelihoods,
                }),
                taps: out.taps_combined,
            })
        }
    }
}

fn basis_taps(basis: &BemBasis, c: &CVector, n_taps: usize) -> Vec<Vec<C64>> {
    let nc = basis.n_coeffs();
    (0..n_taps)
        .map(|l| (basis.matrix() * c.rows(l * nc, nc)).as_slice().to_vec())
        .collect()
}

/// Run one estimator over a frame generated from `realization`.
pub fn run_frame<R: Rng + ?Sized>(
    cfg: &ReceiverConfig,
    bank: &ModelBank,
    realization: &ChannelRealization,
    estimator: Estimator,
    rng: &mut R,
) -> Result<FrameResult> {
    let source = FrameSource::generate(
        realization,
        cfg.preamble_len,
        cfg.preamble,
        cfg.constellation,
        rng,
    );
    process_frame(cfg, bank, realization, &source, estimator)
}

/// [`run_frame`] on an already generated transmission.
pub fn process_frame(
    cfg: &ReceiverConfig,
    bank: &ModelBank,
    realization: &ChannelRealization,
    source: &FrameSource,
    estimator: Estimator,
) -> Result<FrameResult> {
    let (n_taps, frame, n) = realization.taps.dims();
    let k = cfg.preamble_len;
    if n_taps != bank.n_taps || n != bank.n_samples() || source.tx_freq.len() != frame {
        return Err(Error::Input(
            "realization does not match the receiver configuration".into(),
        ));
    }
    if k == 0 || k >= frame {
        return Err(Error::Config(format!(
            "preamble of {k} symbols in a frame of {frame}"
        )));
    }
    let rx = source.received(cfg.sigma_w2);

    let (models, weights): (Vec<&MatchedModel>, Vec<f64>) = match estimator {
        Estimator::Imm => (bank.imm.iter().collect(), cfg.mu0.to_vec()),
        Estimator::Single(kind) => (vec![bank.model(kind)], vec![1.0]),
    };

    let mut estimates = TapGrid::zeros(n_taps, frame, n);
    let mut acquired = Vec::with_capacity(models.len());
    for m in &models {
        let ss: Vec<CMatrix> = (0..k)
            .map(|sym| measurement_matrix_from_time(&m.basis, &source.tx_time[sym], n_taps))
            .collect();
        acquired.push(match cfg.acquisition {
            AcquisitionMode::Prior => prior_acquire(&rx[..k], &ss, &m.ar, cfg.sigma_w2)?,
            AcquisitionMode::Ls => ls_acquire(&rx[..k], &ss, cfg.sigma_w2)?,
        });
    }
    for sym in 0..k {
        for (j, m) in models.iter().enumerate() {
            let taps = basis_taps(&m.basis, &acquired[j].per_symbol[sym], n_taps);
            for (l, t) in taps.iter().enumerate() {
                for (e, v) in estimates.tap_mut(l, sym).iter_mut().zip(t) {
                    *e += v * weights[j];
                }
            }
        }
    }

    let mut tracker = match estimator {
        Estimator::Imm => {
            let filters = [acquired[0].state.clone(), acquired[1].state.clone()];
            Tracker::Imm(
                ImmState::new(filters, cfg.mu0, cfg.transition, Arc::clone(&bank.imm))?
                    .with_maps(Arc::clone(&bank.imm_maps)),
            )
        }
        Estimator::Single(_) => Tracker::Single {
            model: models[0],
            state: acquired[0].state.clone(),
        },
    };

    let mut detected: Vec<Vec<C64>> = source.tx_freq[..k].to_vec();
    let mut mode_trace = Vec::new();
    let mut innovation_trace = Vec::with_capacity(frame - k);
    let mut symbol_errors = 0;
    for sym in k..frame {
        let (x_freq, x_time) = if cfg.genie {
            (source.tx_freq[sym].clone(), source.tx_time[sym].clone())
        } else {
            let taps = match cfg.equalizer {
                EqualizerTaps::Predicted => tracker.predicted_taps(n_taps),
                EqualizerTaps::Previous => (0..n_taps)
                    .map(|l| estimates.tap(l, sym - 1).to_vec())
                    .collect(),
            };
            equalize_and_detect(&taps, &rx[sym], cfg.constellation, cfg.sigma_w2)
        };
        let step = advance(&mut tracker, &x_time, &rx[sym], cfg.sigma_w2, n_taps, sym)?;
        symbol_errors += x_freq
            .iter()
            .zip(&source.tx_freq[sym])
            .filter(|(a, b)| a != b)
            .count();
        innovation_trace.push(step.innovation_trace);
        mode_trace.extend(step.record);
        for (l, t) in step.taps.iter().enumerate() {
            estimates.tap_mut(l, sym).copy_from_slice(t);
        }
        detected.push(x_freq);
    }

    let per_tap_mse = compute_mse(&realization.taps, &estimates)?;
    Ok(FrameResult {
        tap_estimates: estimates,
        mode_trace,
        detected,
        per_tap_mse,
        innovation_trace,
        symbol_errors,
    })
}
