//! Two-model interacting multiple model (IMM) estimator over BEM coefficients.
//!
//! One cycle: mixing probabilities, mixed initial conditions (each state
//! re-expressed in the target filter's basis first), mode-matched
//! Kalman filtering with innovation likelihoods, mode-probability update, and
//! moment-matched combination.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, Dyn};

use crate::bem::BemBasis;
use crate::channel::ChannelProfile;
use crate::kalman::{predict, update, ArModel, BasisMap, KalmanState, MeasurementUpdate};
use crate::linalg::{cholesky, hermitian_part, real, CMatrix, CVector};
use crate::parallel;
use crate::{Error, Result, C64};

pub const MODES: usize = 2;

/// Row-stochastic Markov transition matrix, `p[i][j]` = P(model i -> model j).
pub type Transition = [[f64; MODES]; MODES];

/// A basis together with the coefficient dynamics of the filter matched to it.
#[derive(Clone, Debug)]
pub struct MatchedModel {
    pub basis: BemBasis,
    pub ar: ArModel,
}

/// `maps[i][j]` re-expresses mode `i`'s state in mode `j`'s basis; `None`
/// mixes the raw coefficient vectors.
pub type ModeMaps = [[Option<BasisMap>; MODES]; MODES];

/// Mode-conditioned filter states and mode probabilities at time `n - 1`.
#[derive(Clone, Debug)]
pub struct ImmState {
    pub filters: [KalmanState; MODES],
    pub mu: [f64; MODES],
    pub transition: Transition,
    pub models: Arc<[MatchedModel; MODES]>,
    pub maps: Arc<ModeMaps>,
}

impl ImmState {
    pub fn new(
        filters: [KalmanState; MODES],
        mu: [f64; MODES],
        transition: Transition,
        models: Arc<[MatchedModel; MODES]>,
    ) -> Result<Self> {
        validate_transition(&transition)?;
        validate_probabilities(&mu)?;
        let d = filters[0].dim();
        if filters.iter().any(|f| f.dim() != d) || models.iter().any(|m| m.ar.dim() != d) {
            return Err(Error::Input(
                "IMM filters and models must share one state dimension".into(),
            ));
        }
        Ok(Self {
            filters,
            mu,
            transition,
            models,
            maps: Arc::new(Default::default()),
        })
    }

    /// Mix through basis maps instead of mixing raw coefficient vectors.
    pub fn with_maps(mut self, maps: Arc<ModeMaps>) -> Self {
        self.maps = maps;
        self
    }
}

/// Maps between every pair of distinct model bases.
pub fn mode_maps(profile: &ChannelProfile, models: &[MatchedModel; MODES]) -> Result<ModeMaps> {
    let map = |i: usize, j: usize| -> Result<Option<BasisMap>> {
        if models[i].basis.freq_indices() == models[j].basis.freq_indices() {
            return Ok(None);
        }
        BasisMap::new(profile, &models[i].basis, &models[j].basis).map(Some)
    };
    Ok([[map(0, 0)?, map(0, 1)?], [map(1, 0)?, map(1, 1)?]])
}

pub fn validate_transition(p: &Transition) -> Result<()> {
    for row in p {
        if row.iter().any(|&v| !(0.0..=1.0).contains(&v))
            || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::Config(format!(
                "transition row {row:?} is not a probability vector"
            )));
        }
    }
    Ok(())
}

pub fn validate_probabilities(mu: &[f64; MODES]) -> Result<()> {
    if mu.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (mu.iter().sum::<f64>() - 1.0).abs() > 1e-12
    {
        return Err(Error::Config(format!(
            "mode probabilities {mu:?} are not normalized"
        )));
    }
    Ok(())
}

/// Output of [`calc_mixing_probs`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixingProbs {
    /// `cond[i][j]` = P(model i at n-1 | model j at n); each column sums to one.
    pub cond: [[f64; MODES]; MODES],
    /// Predicted mode probabilities `c_bar[j] = sum_i p[i][j] mu[i]`.
    pub c_bar: [f64; MODES],
}

/// Mixing probabilities `mu(i|j) = p(ij) mu(i) / c_bar(j)`.
///
/// A model with zero predicted probability (possible with a reducible chain,
/// e.g. `P = I`) cannot be reached from the current mode distribution; its
/// column falls back to the normalized transition column so the matched
/// filter still receives a well-defined input. Its weight in the following
/// mode update is exactly zero.
pub fn calc_mixing_probs(p: &Transition, mu_prev: &[f64; MODES]) -> Result<MixingProbs> {
    let mut cond = [[0.0; MODES]; MODES];
    let mut c_bar = [0.0; MODES];
    for j in 0..MODES {
        c_bar[j] = (0..MODES).map(|i| p[i][j] * mu_prev[i]).sum();
        if c_bar[j] > 0.0 {
            for i in 0..MODES {
                cond[i][j] = p[i][j] * mu_prev[i] / c_bar[j];
            }
        } else {
            let col: f64 = (0..MODES).map(|i| p[i][j]).sum();
            if col <= 0.0 {
                return Err(Error::Numerical(format!(
                    "transition column {j} is all zero"
                )));
            }
            for i in 0..MODES {
                cond[i][j] = p[i][j] / col;
            }
        }
    }
    Ok(MixingProbs { cond, c_bar })
}

/// Mixed initial condition for every filter, including the spread-of-means term.
pub fn mix_initial_conditions(
    filters: &[KalmanState; MODES],
    cond: &[[f64; MODES]; MODES],
) -> Result<[KalmanState; MODES]> {
    let d = filters[0].dim();
    if filters.iter().any(|f| f.dim() != d) {
        return Err(Error::Input("filters differ in dimension".into()));
    }
    let weights = |j: usize| [cond[0][j], cond[1][j]];
    Ok([
        moment_match(filters, weights(0)),
        moment_match(filters, weights(1)),
    ])
}

/// Like [`mix_initial_conditions`], but each source state is first
/// re-expressed in the target filter's basis.
pub fn mix_across_bases(
    filters: &[KalmanState; MODES],
    cond: &[[f64; MODES]; MODES],
    maps: &ModeMaps,
) -> Result<[KalmanState; MODES]> {
    let d = filters[0].dim();
    if filters.iter().any(|f| f.dim() != d) {
        return Err(Error::Input("filters differ in dimension".into()));
    }
    let target = |j: usize| {
        let view = |i: usize| match &maps[i][j] {
            Some(m) if cond[i][j] > 0.0 => m.map_state(&filters[i]),
            _ => filters[i].clone(),
        };
        moment_match(&[view(0), view(1)], [cond[0][j], cond[1][j]])
    };
    Ok([target(0), target(1)])
}

/// `c = sum w_i c_i`, `M = sum w_i (M_i + (c_i - c)(c_i - c)^H)`.
fn moment_match(states: &[KalmanState; MODES], w: [f64; MODES]) -> KalmanState {
    let d = states[0].dim();
    let mut c = CVector::zeros(d);
    for (s, &wi) in states.iter().zip(&w) {
        c += &s.c_hat * real(wi);
    }
    let mut m = CMatrix::zeros(d, d);
    for (s, &wi) in states.iter().zip(&w) {
        let diff = &s.c_hat - &c;
        m += (&s.cov + &diff * diff.adjoint()) * real(wi);
    }
    KalmanState::filtered(c, hermitian_part(&m))
}

/// `log CN(v; 0, Q) = -N log(pi) - log det Q - v^H Q^{-1} v`.
pub fn model_likelihood(innovation: &CVector, q: &CMatrix) -> Result<f64> {
    if q.shape() != (innovation.len(), innovation.len()) {
        return Err(Error::Input(
            "innovation and covariance sizes differ".into(),
        ));
    }
    let chol = cholesky(&hermitian_part(q))
        .ok_or_else(|| Error::Filter("innovation covariance is not positive definite".into()))?;
    Ok(log_likelihood_from_factor(&chol, innovation))
}

pub(crate) fn log_likelihood_from_factor(chol: &Cholesky<C64, Dyn>, v: &CVector) -> f64 {
    let l = chol.l_dirty();
    let n = v.len();
    let log_det: f64 = 2.0 * (0..n).map(|i| l[(i, i)].re.ln()).sum::<f64>();
    let w = l
        .view((0, 0), (n, n))
        .solve_lower_triangular(v)
        .expect("Cholesky diagonal is positive");
    -(n as f64) * PI.ln() - log_det - w.norm_squared()
}

/// `mu(j) ∝ Lambda(j) c_bar(j)`, evaluated with max-log subtraction.
pub fn update_mode_probs(
    log_likelihoods: &[f64; MODES],
    c_bar: &[f64; MODES],
) -> Result<[f64; MODES]> {
    let mut w = [0.0; MODES];
    for j in 0..MODES {
        if log_likelihoods[j].is_nan() || c_bar[j] < 0.0 {
            return Err(Error::Numerical(format!(
                "invalid likelihood {} or prior {}",
                log_likelihoods[j], c_bar[j]
            )));
        }
        w[j] = log_likelihoods[j] + c_bar[j].ln();
    }
    let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numerical(
            "every mode has zero posterior weight".into(),
        ));
    }
    let e = w.map(|v| (v - top).exp());
    let total: f64 = e.iter().sum();
    Ok(e.map(|v| v / total))
}

/// Combined estimate of one IMM cycle.
#[derive(Clone, Debug)]
pub struct ImmOutput {
    pub c_combined: CVector,
    pub m_combined: CMatrix,
    /// Per-tap mixture `sum_j mu(j) B_j c(j)_l`, L vectors of length N.
    pub taps_combined: Vec<Vec<C64>>,
    pub mu: [f64; MODES],
    pub log_likelihoods: [f64; MODES],
}

/// Tap-domain mixture of the mode-conditioned estimates.
pub fn mix_taps(
    filters: &[KalmanState; MODES],
    mu: &[f64; MODES],
    models: &[MatchedModel; MODES],
) -> Vec<Vec<C64>> {
    let n = models[0].basis.n_samples();
    let n_taps = models[0].ar.n_taps();
    let mut taps = vec![vec![C64::new(0.0, 0.0); n]; n_taps];
    for j in 0..MODES {
        if mu[j] == 0.0 {
            continue;
        }
        let nc = models[j].basis.n_coeffs();
        let b = models[j].basis.matrix();
        for (l, tap) in taps.iter_mut().enumerate() {
            let h = b * filters[j].c_hat.rows(l * nc, nc);
            for (t, v) in tap.iter_mut().zip(h.iter()) {
                *t += v * mu[j];
            }
        }
    }
    taps
}

/// Estimate and covariance combination.
pub fn combine(
    filters_post: &[KalmanState; MODES],
    mu: &[f64; MODES],
    models: &[MatchedModel; MODES],
) -> ImmOutput {
    let mixed = moment_match(filters_post, *mu);
    ImmOutput {
        c_combined: mixed.c_hat,
        m_combined: mixed.cov,
        taps_combined: mix_taps(filters_post, mu, models),
        mu: *mu,
        log_likelihoods: [f64::NAN; MODES],
    }
}

/// Per-filter diagnostics of one cycle.
#[derive(Clone, Debug)]
pub struct ModeMatched {
    pub update: MeasurementUpdate,
    pub log_likelihood: f64,
}

/// One IMM cycle for measurement `y` with one measurement matrix per model.
pub fn imm_step(
    state: &ImmState,
    s_pair: [&CMatrix; MODES],
    y: &CVector,
    sigma_w2: f64,
) -> Result<(ImmState, ImmOutput)> {
    let (next, out, _) = imm_step_detailed(state, s_pair, y, sigma_w2)?;
    Ok((next, out))
}

/// [`imm_step`] that also returns each filter's measurement update.
pub fn imm_step_detailed(
    state: &ImmState,
    s_pair: [&CMatrix; MODES],
    y: &CVector,
    sigma_w2: f64,
) -> Result<(ImmState, ImmOutput, [ModeMatched; MODES])> {
    let mix = calc_mixing_probs(&state.transition, &state.mu)?;
    let mixed = mix_across_bases(&state.filters, &mix.cond, &state.maps)?;
    let run = |j: usize| -> Result<ModeMatched> {
        let pred = predict(&mixed[j], &state.models[j].ar)?;
        let update = update(&pred, s_pair[j], y, sigma_w2)?;
        let log_likelihood = update.log_likelihood();
        Ok(ModeMatched {
            update,
            log_likelihood,
        })
    };
    let (a, b) = parallel::join(|| run(0), || run(1));
    let matched = [a?, b?];
    let log_likelihoods = [matched[0].log_likelihood, matched[1].log_likelihood];
    let mu = update_mode_probs(&log_likelihoods, &mix.c_bar)?;
    let filters = [
        matched[0].update.state.clone(),
        matched[1].update.state.clone(),
    ];
    let mut out = combine(&filters, &mu, &state.models);
    out.log_likelihoods = log_likelihoods;
    let next = ImmState {
        filters,
        mu,
        transition: state.transition,
        models: Arc::clone(&state.models),
        maps: Arc::clone(&state.maps),
    };
    Ok((next, out, matched))
}

/// One row of the per-symbol mode trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub n: usize,
    pub mu: [f64; MODES],
    pub log_likelihoods: [f64; MODES],
}
