//! AR(1) coefficient dynamics, preamble acquisition and the BEM-matched
//! Kalman recursion.

use nalgebra::{Cholesky, Dyn};

use crate::bem::{coeff_correlation, BemBasis};
use crate::channel::{jakes_correlation_matrix, ChannelProfile};
use crate::linalg::{
    block_diag, cholesky, hermitian_part, is_psd, min_eigenvalue, project_psd, real, trace_re,
    CMatrix, CVector,
};
use crate::{Error, Result, C64};

/// Block-diagonal first-order dynamics `c_n = A c_{n-1} + u_n`, `u_n ~ CN(0, U)`,
/// one `Nc x Nc` block per tap.
#[derive(Clone, Debug)]
pub struct ArModel {
    n_taps: usize,
    n_coeffs: usize,
    transition: CMatrix,
    process_noise: CMatrix,
    stationary: CMatrix,
}

impl ArModel {
    /// Assemble from per-tap `(A_l, U_l, R_l)` blocks, `R_l` the stationary covariance.
    pub fn from_blocks(
        transition: &[CMatrix],
        noise: &[CMatrix],
        stationary: &[CMatrix],
    ) -> Result<Self> {
        let n_taps = transition.len();
        let n_coeffs = transition.first().map_or(0, |a| a.nrows());
        if n_taps == 0 || noise.len() != n_taps || stationary.len() != n_taps {
            return Err(Error::Input(
                "AR model needs one A, U and R block per tap".into(),
            ));
        }
        let square = |m: &CMatrix| m.shape() == (n_coeffs, n_coeffs);
        if !transition.iter().chain(noise).chain(stationary).all(square) {
            return Err(Error::Input("AR blocks must all be Nc x Nc".into()));
        }
        Ok(Self {
            n_taps,
            n_coeffs,
            transition: block_diag(transition),
            process_noise: block_diag(noise),
            stationary: block_diag(stationary),
        })
    }

    /// From full stacked matrices. Off-block entries are kept as given.
    pub fn from_stacked(
        transition: CMatrix,
        process_noise: CMatrix,
        stationary: CMatrix,
        n_taps: usize,
        n_coeffs: usize,
    ) -> Result<Self> {
        let d = n_taps * n_coeffs;
        if [
            transition.shape(),
            process_noise.shape(),
            stationary.shape(),
        ]
        .iter()
        .any(|&s| s != (d, d))
        {
            return Err(Error::Input(format!("AR matrices must be {d}x{d}")));
        }
        Ok(Self {
            n_taps,
            n_coeffs,
            transition,
            process_noise,
            stationary,
        })
    }

    pub fn n_taps(&self) -> usize {
        self.n_taps
    }

    pub fn n_coeffs(&self) -> usize {
        self.n_coeffs
    }

    pub fn dim(&self) -> usize {
        self.n_taps * self.n_coeffs
    }

    pub fn transition(&self) -> &CMatrix {
        &self.transition
    }

    pub fn process_noise(&self) -> &CMatrix {
        &self.process_noise
    }

    pub fn stationary_covariance(&self) -> &CMatrix {
        &self.stationary
    }

    pub fn transition_block(&self, l: usize) -> CMatrix {
        let o = l * self.n_coeffs;
        self.transition
            .view((o, o), (self.n_coeffs, self.n_coeffs))
            .into_owned()
    }

    pub fn noise_block(&self, l: usize) -> CMatrix {
        let o = l * self.n_coeffs;
        self.process_noise
            .view((o, o), (self.n_coeffs, self.n_coeffs))
            .into_owned()
    }
}

// Relative ridge steps tried when R^(0) is not numerically positive definite.
const RIDGE_STEPS: [f64; 5] = [0.0, 1e-14, 1e-12, 1e-10, 1e-8];

/// Yule-Walker fit of one tap: `A = R1 R0^{-1}`, `U = R0 - A R(-1)`.
///
/// The minus sign is the one compatible with stationarity,
/// `R0 = A R0 A^H + U`. Small negative eigenvalues of `U` from round-off are
/// clamped.
pub fn yule_walker(r0: &CMatrix, r1: &CMatrix, rm1: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let nc = r0.nrows();
    if [r0.shape(), r1.shape(), rm1.shape()]
        .iter()
        .any(|&s| s != (nc, nc))
    {
        return Err(Error::Input(
            "correlation blocks must be square and equal-sized".into(),
        ));
    }
    let r0h = hermitian_part(r0);
    let scale = trace_re(&r0h) / nc.max(1) as f64;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Statistics(
            "lag-0 coefficient correlation has no power".into(),
        ));
    }
    let chol = RIDGE_STEPS
        .iter()
        .find_map(|&eps| cholesky(&(&r0h + CMatrix::identity(nc, nc) * real(eps * scale))))
        .ok_or_else(|| Error::Statistics("lag-0 coefficient correlation is singular".into()))?;
    // A^H = R0^{-1} R1^H
    let a = chol.solve(&r1.adjoint()).adjoint();
    let u = hermitian_part(&(&r0h - &a * rm1));
    let trace = trace_re(&u).abs().max(scale);
    let u = if min_eigenvalue(&u) < -1e-6 * trace {
        return Err(Error::Statistics(
            "Yule-Walker process noise is indefinite".into(),
        ));
    } else if min_eigenvalue(&u) < 0.0 {
        project_psd(&u)
    } else {
        u
    };
    Ok((a, u))
}

/// Per-tap Yule-Walker fit over lag-0, lag+1 and lag-1 coefficient correlations.
pub fn derive_ar_model(rc0: &[CMatrix], rc1: &[CMatrix], rcm1: &[CMatrix]) -> Result<ArModel> {
    if rc0.len() != rc1.len() || rc0.len() != rcm1.len() {
        return Err(Error::Input("correlation lists differ in tap count".into()));
    }
    let mut a = Vec::with_capacity(rc0.len());
    let mut u = Vec::with_capacity(rc0.len());
    for ((r0, r1), rm1) in rc0.iter().zip(rc1).zip(rcm1) {
        let (al, ul) = yule_walker(r0, r1, rm1)?;
        a.push(al);
        u.push(ul);
    }
    let stat: Vec<CMatrix> = rc0.iter().map(hermitian_part).collect();
    ArModel::from_blocks(&a, &u, &stat)
}

/// Coefficient correlations `(R^(0), R^(1), R^(-1))` of every tap under Jakes fading.
pub fn coefficient_correlations(
    profile: &ChannelProfile,
    basis: &BemBasis,
) -> Result<(Vec<CMatrix>, Vec<CMatrix>, Vec<CMatrix>)> {
    let n = basis.n_samples();
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for l in 0..profile.n_taps() {
        out.0.push(coeff_correlation(
            basis,
            &jakes_correlation_matrix(profile, l, 0, n)?,
        )?);
        out.1.push(coeff_correlation(
            basis,
            &jakes_correlation_matrix(profile, l, 1, n)?,
        )?);
        out.2.push(coeff_correlation(
            basis,
            &jakes_correlation_matrix(profile, l, -1, n)?,
        )?);
    }
    Ok(out)
}

/// AR model of the basis coefficients implied by the channel profile.
pub fn ar_model_from_profile(profile: &ChannelProfile, basis: &BemBasis) -> Result<ArModel> {
    let (r0, r1, rm1) = coefficient_correlations(profile, basis)?;
    derive_ar_model(&r0, &r1, &rm1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateKind {
    Predicted,
    Filtered,
}

/// Coefficient estimate and its error covariance.
#[derive(Clone, Debug)]
pub struct KalmanState {
    pub c_hat: CVector,
    pub cov: CMatrix,
    pub kind: StateKind,
}

impl KalmanState {
    pub fn filtered(c_hat: CVector, cov: CMatrix) -> Self {
        Self {
            c_hat,
            cov,
            kind: StateKind::Filtered,
        }
    }

    pub fn dim(&self) -> usize {
        self.c_hat.len()
    }
}

/// Result of [`ls_acquire`] or [`prior_acquire`].
#[derive(Clone, Debug)]
pub struct Acquisition {
    /// Coefficient estimate of every preamble symbol.
    pub per_symbol: Vec<CVector>,
    /// Filtered state of the last preamble symbol.
    pub state: KalmanState,
}

/// Per-symbol least squares over the preamble.
pub fn ls_acquire(ys: &[CVector], ss: &[CMatrix], sigma_w2: f64) -> Result<Acquisition> {
    if ys.is_empty() || ys.len() != ss.len() {
        return Err(Error::Acquisition(format!(
            "{} preamble symbols for {} measurement matrices",
            ys.len(),
            ss.len()
        )));
    }
    if !(sigma_w2 >= 0.0) {
        return Err(Error::Input(format!(
            "noise variance {sigma_w2} is negative"
        )));
    }
    let mut per_symbol = Vec::with_capacity(ys.len());
    let mut last_cov = CMatrix::zeros(0, 0);
    for (k, (y, s)) in ys.iter().zip(ss).enumerate() {
        if s.nrows() != y.len() {
            return Err(Error::Acquisition(format!(
                "preamble symbol {k}: S has {} rows, y has {}",
                s.nrows(),
                y.len()
            )));
        }
        if s.nrows() < s.ncols() {
            return Err(Error::Acquisition(format!(
                "preamble symbol {k}: {} measurements for {} unknowns",
                s.nrows(),
                s.ncols()
            )));
        }
        let gram = hermitian_part(&(s.adjoint() * s));
        let chol = full_rank_cholesky(&gram).ok_or_else(|| {
            Error::Acquisition(format!(
                "preamble symbol {k}: measurement matrix is rank deficient"
            ))
        })?;
        per_symbol.push(chol.solve(&(s.adjoint() * y)));
        if k + 1 == ys.len() {
            last_cov = hermitian_part(&(chol.inverse() * real(sigma_w2)));
        }
    }
    let c_hat = per_symbol
        .last()
        .cloned()
        .expect("at least one preamble symbol");
    Ok(Acquisition {
        per_symbol,
        state: KalmanState::filtered(c_hat, last_cov),
    })
}

fn full_rank_cholesky(gram: &CMatrix) -> Option<Cholesky<C64, Dyn>> {
    let chol = cholesky(gram)?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().map(|z| z.re).fold(0.0, f64::max);
    let min = diag.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    (max > 0.0 && min / max > 1e-7).then_some(chol)
}

/// Time update: `c <- A c`, `M <- A M A^H + U`.
pub fn predict(state: &KalmanState, ar: &ArModel) -> Result<KalmanState> {
    if state.kind != StateKind::Filtered {
        return Err(Error::Filter("time update expects a filtered state".into()));
    }
    if state.dim() != ar.dim() {
        return Err(Error::Filter(format!(
            "state has {} entries, AR model {}",
            state.dim(),
            ar.dim()
        )));
    }
    let a = ar.transition();
    let cov = hermitian_part(&(a * &state.cov * a.adjoint() + ar.process_noise()));
    Ok(KalmanState {
        c_hat: a * &state.c_hat,
        cov,
        kind: StateKind::Predicted,
    })
}

/// Output of [`update`].
#[derive(Clone, Debug)]
pub struct MeasurementUpdate {
    pub state: KalmanState,
    /// `y - S c_pred`
    pub innovation: CVector,
    /// `Q = sigma_w2 I + S M_pred S^H`
    pub innovation_cov: CMatrix,
    pub(crate) innovation_chol: Cholesky<C64, Dyn>,
}

impl MeasurementUpdate {
    /// Circular complex Gaussian log-density of the innovation.
    pub fn log_likelihood(&self) -> f64 {
        crate::imm::log_likelihood_from_factor(&self.innovation_chol, &self.innovation)
    }
}

/// Measurement update with gain `K = M S^H Q^{-1}`.
///
/// The posterior covariance is re-symmetrized; if it still fails a PSD
/// check, the Joseph form is used instead.
pub fn update(
    state: &KalmanState,
    s: &CMatrix,
    y: &CVector,
    sigma_w2: f64,
) -> Result<MeasurementUpdate> {
    if state.kind != StateKind::Predicted {
        return Err(Error::Filter(
            "measurement update expects a predicted state".into(),
        ));
    }
    if !(sigma_w2 >= 0.0) {
        return Err(Error::Input(format!(
            "noise variance {sigma_w2} is negative"
        )));
    }
    let (n, d) = s.shape();
    if d != state.dim() || y.len() != n {
        return Err(Error::Filter(format!(
            "S is {n}x{d}, state {} and y {}",
            state.dim(),
            y.len()
        )));
    }
    let sm = s * &state.cov;
    let mut q = &sm * s.adjoint();
    for i in 0..n {
        q[(i, i)] += sigma_w2;
    }
    let q = hermitian_part(&q);
    let chol =
        cholesky(&q).ok_or_else(|| Error::Filter("innovation covariance is singular".into()))?;
    let innovation = y - s * &state.c_hat;
    // Q^{-1} S M = K^H
    let gain_h = chol.solve(&sm);
    let c_hat = &state.c_hat + gain_h.adjoint() * &innovation;
    let mut cov = hermitian_part(&(&state.cov - gain_h.adjoint() * &sm));
    if !is_psd(&cov, 1e-10) {
        let ikh = CMatrix::identity(d, d) - gain_h.adjoint() * s;
        cov = hermitian_part(
            &(&ikh * &state.cov * ikh.adjoint() + gain_h.adjoint() * &gain_h * real(sigma_w2)),
        );
    }
    Ok(MeasurementUpdate {
        state: KalmanState {
            c_hat,
            cov,
            kind: StateKind::Filtered,
        },
        innovation,
        innovation_cov: q,
        innovation_chol: chol,
    })
}

/// Acquisition that starts from the stationary prior `(0, R_c^(0))` and runs
/// the filter through the known preamble. Unlike [`ls_acquire`] the handed-on
/// covariance stays inside the support of the coefficient process, which
/// matters when `A` is far from normal.
pub fn prior_acquire(
    ys: &[CVector],
    ss: &[CMatrix],
    ar: &ArModel,
    sigma_w2: f64,
) -> Result<Acquisition> {
    if ys.is_empty() || ys.len() != ss.len() {
        return Err(Error::Acquisition(format!(
            "{} preamble symbols for {} measurement matrices",
            ys.len(),
            ss.len()
        )));
    }
    let mut state = KalmanState {
        c_hat: CVector::zeros(ar.dim()),
        cov: ar.stationary_covariance().clone(),
        kind: StateKind::Predicted,
    };
    let mut per_symbol = Vec::with_capacity(ys.len());
    for (k, (y, s)) in ys.iter().zip(ss).enumerate() {
        if k > 0 {
            state = predict(&state, ar)?;
        }
        state = update(&state, s, y, sigma_w2)?.state;
        per_symbol.push(state.c_hat.clone());
    }
    Ok(Acquisition { per_symbol, state })
}

/// Re-expresses coefficient states of one basis in another.
///
/// Both coefficient sets are projections of the same Jakes tap process, so
/// their joint covariance is known. A state in the source basis maps to the
/// linear MMSE estimate of the target coefficients, and the target inherits
/// the conditional covariance on top of the mapped error covariance.
#[derive(Clone, Debug)]
pub struct BasisMap {
    /// `Cov(c_to, c_from) Cov(c_from)^{-1}`, block diagonal over taps.
    gain: CMatrix,
    /// `Cov(c_to) - gain Cov(c_from, c_to)`.
    cond_cov: CMatrix,
}

impl BasisMap {
    pub fn new(profile: &ChannelProfile, from: &BemBasis, to: &BemBasis) -> Result<Self> {
        let n = from.n_samples();
        if to.n_samples() != n {
            return Err(Error::Input("bases differ in sample count".into()));
        }
        let (pf, pt) = (from.pseudo_inverse(), to.pseudo_inverse());
        let mut gains = Vec::with_capacity(profile.n_taps());
        let mut conds = Vec::with_capacity(profile.n_taps());
        for l in 0..profile.n_taps() {
            let r_h = jakes_correlation_matrix(profile, l, 0, n)?;
            let r_from = hermitian_part(&(pf * &r_h * pf.adjoint()));
            let r_to = hermitian_part(&(pt * &r_h * pt.adjoint()));
            let cross = pt * &r_h * pf.adjoint();
            let nc = r_from.nrows();
            let scale = trace_re(&r_from) / nc as f64;
            let chol = RIDGE_STEPS
                .iter()
                .find_map(|&eps| {
                    cholesky(&(&r_from + CMatrix::identity(nc, nc) * real(eps * scale)))
                })
                .ok_or_else(|| {
                    Error::Statistics("source coefficient covariance is singular".into())
                })?;
            let gain = chol.solve(&cross.adjoint()).adjoint();
            let cond = hermitian_part(&(r_to - &gain * cross.adjoint()));
            conds.push(if min_eigenvalue(&cond) < 0.0 {
                project_psd(&cond)
            } else {
                cond
            });
            gains.push(gain);
        }
        Ok(Self {
            gain: block_diag_rect(&gains),
            cond_cov: block_diag(&conds),
        })
    }

    /// Conditional mean of the target coefficients.
    pub fn map_mean(&self, c: &CVector) -> CVector {
        &self.gain * c
    }

    pub fn gain(&self) -> &CMatrix {
        &self.gain
    }

    pub fn conditional_covariance(&self) -> &CMatrix {
        &self.cond_cov
    }

    /// Map an estimate and its error covariance.
    pub fn map_state(&self, s: &KalmanState) -> KalmanState {
        let cov = hermitian_part(&(&self.gain * &s.cov * self.gain.adjoint() + &self.cond_cov));
        KalmanState {
            c_hat: self.map_mean(&s.c_hat),
            cov,
            kind: s.kind,
        }
    }
}

fn block_diag_rect(blocks: &[CMatrix]) -> CMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_normal, psd_factor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> CMatrix {
        CMatrix::from_element(1, 1, real(v))
    }

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn rand_psd(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
        let g = rand_mat(rng, d, d);
        &g * g.adjoint() + CMatrix::identity(d, d) * real(0.05)
    }

    #[test]
    fn coherent_process_is_frozen() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r0 = rand_psd(&mut rng, 3);
        let (a, u) = yule_walker(&r0, &r0, &r0).unwrap();
        assert!((a - CMatrix::identity(3, 3)).norm() < 1e-10);
        assert!(u.norm() < 1e-10);
    }

    #[test]
    fn white_process_has_no_memory() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r0 = rand_psd(&mut rng, 3);
        let z = CMatrix::zeros(3, 3);
        let (a, u) = yule_walker(&r0, &z, &z).unwrap();
        assert!(a.norm() < 1e-15);
        assert!((u - &r0).norm() < 1e-12);
    }

    #[test]
    fn scalar_yule_walker() {
        let (a, u) = yule_walker(&scalar(1.0), &scalar(0.9), &scalar(0.9)).unwrap();
        assert!((a[(0, 0)].re - 0.9).abs() < 1e-15);
        assert!((u[(0, 0)].re - 0.19).abs() < 1e-15);
        let stationary = u[(0, 0)].re / (1.0 - 0.81);
        assert!((stationary - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_lag_zero_is_regularized_or_rejected() {
        // rank one, as for a static channel
        let r0 = CMatrix::from_diagonal(&CVector::from_vec(vec![real(0.0), real(1.0), real(0.0)]));
        let (a, u) = yule_walker(&r0, &r0, &r0).unwrap();
        assert!((a[(1, 1)].re - 1.0).abs() < 1e-6);
        assert!(min_eigenvalue(&u) >= 0.0);
        assert!(matches!(
            yule_walker(&scalar(0.0), &scalar(0.0), &scalar(0.0)),
            Err(Error::Statistics(_))
        ));
    }

    #[test]
    fn block_structure() {
        let (a, u) = yule_walker(&scalar(1.0), &scalar(0.5), &scalar(0.5)).unwrap();
        let ar = derive_ar_model(
            &[scalar(1.0), scalar(2.0)],
            &[scalar(0.5), scalar(1.0)],
            &[scalar(0.5), scalar(1.0)],
        )
        .unwrap();
        assert_eq!(ar.dim(), 2);
        assert_eq!(ar.transition_block(0), a);
        assert!((ar.noise_block(1)[(0, 0)].re - 2.0 * u[(0, 0)].re).abs() < 1e-15);
        assert_eq!(ar.transition()[(0, 1)], real(0.0));
    }

    #[test]
    fn acquisition_exact_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ss: Vec<CMatrix> = (0..2).map(|_| rand_mat(&mut rng, 16, 6)).collect();
        let cs: Vec<CVector> = (0..2).map(|_| complex_normal(&mut rng, 6)).collect();
        let ys: Vec<CVector> = ss.iter().zip(&cs).map(|(s, c)| s * c).collect();
        let acq = ls_acquire(&ys, &ss, 0.0).unwrap();
        for (est, c) in acq.per_symbol.iter().zip(&cs) {
            assert!((est - c).norm() < 1e-9 * c.norm());
        }
        assert_eq!(acq.state.c_hat, acq.per_symbol[1]);
        assert!(acq.state.cov.norm() == 0.0);

        let doubled: Vec<CVector> = ys.iter().map(|y| y * real(2.0)).collect();
        let acq2 = ls_acquire(&doubled, &ss, 0.0).unwrap();
        assert!((&acq2.state.c_hat - &acq.state.c_hat * real(2.0)).norm() < 1e-12);
    }

    #[test]
    fn acquisition_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, d) = (8, 4); // N = 8, L = 2, Nc = 2
        let ss: Vec<CMatrix> = (0..2).map(|_| rand_mat(&mut rng, n, d)).collect();
        let ys: Vec<CVector> = (0..2).map(|_| complex_normal(&mut rng, n)).collect();
        let sigma2 = 0.1;
        let acq = ls_acquire(&ys, &ss, sigma2).unwrap();
        for (k, (s, y)) in ss.iter().zip(&ys).enumerate() {
            let gram = s.adjoint() * s;
            let oracle = gram.clone().lu().solve(&(s.adjoint() * y)).unwrap();
            assert!((&acq.per_symbol[k] - oracle).norm() < 1e-10);
            if k == 1 {
                let cov = gram.try_inverse().unwrap() * real(sigma2);
                assert!((&acq.state.cov - cov).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn acquisition_rejects_rank_deficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = rand_mat(&mut rng, 8, 3);
        let col = s.column(0).into_owned();
        s.set_column(2, &col);
        let y = complex_normal(&mut rng, 8);
        assert!(matches!(
            ls_acquire(std::slice::from_ref(&y), &[s], 0.1),
            Err(Error::Acquisition(_))
        ));
        let wide = rand_mat(&mut rng, 2, 3);
        assert!(matches!(
            ls_acquire(&[complex_normal(&mut rng, 2)], &[wide], 0.1),
            Err(Error::Acquisition(_))
        ));
    }

    fn model(a: CMatrix, u: CMatrix) -> ArModel {
        let d = a.nrows();
        ArModel::from_stacked(a, u, CMatrix::identity(d, d), 1, d).unwrap()
    }

    #[test]
    fn predict_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let st = KalmanState::filtered(complex_normal(&mut rng, 3), rand_psd(&mut rng, 3));
        let p = predict(&st, &model(CMatrix::identity(3, 3), CMatrix::zeros(3, 3))).unwrap();
        assert!((&p.c_hat - &st.c_hat).norm() < 1e-15 && (&p.cov - &st.cov).norm() < 1e-15);
        let u = rand_psd(&mut rng, 3);
        let p = predict(&st, &model(CMatrix::zeros(3, 3), u.clone())).unwrap();
        assert!(p.c_hat.norm() == 0.0 && (&p.cov - &u).norm() < 1e-15);
        assert!(predict(&p, &model(CMatrix::zeros(3, 3), u)).is_err());
    }

    #[test]
    fn predicted_covariance_matches_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 2;
        let a = rand_mat(&mut rng, d, d);
        let u = rand_psd(&mut rng, d);
        let m = rand_psd(&mut rng, d);
        let st = KalmanState::filtered(CVector::zeros(d), m.clone());
        let p = predict(&st, &model(a.clone(), u.clone())).unwrap();
        let gm = psd_factor(&m, 1e-12).unwrap();
        let gu = psd_factor(&u, 1e-12).unwrap();
        let samples = 100_000;
        let mut emp = CMatrix::zeros(d, d);
        for _ in 0..samples {
            let e = &a * (&gm * complex_normal(&mut rng, d)) + &gu * complex_normal(&mut rng, d);
            emp += &e * e.adjoint();
        }
        emp /= real(samples as f64);
        for i in 0..d {
            for j in 0..d {
                let scale = (p.cov[(i, i)].re * p.cov[(j, j)].re).sqrt();
                assert!(
                    (emp[(i, j)] - p.cov[(i, j)]).norm() < 0.05 * scale,
                    "entry ({i},{j})"
                );
            }
        }
    }

    fn predicted(c: CVector, m: CMatrix) -> KalmanState {
        KalmanState {
            c_hat: c,
            cov: m,
            kind: StateKind::Predicted,
        }
    }

    #[test]
    fn perfect_prior_ignores_measurement() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = complex_normal(&mut rng, 3);
        let up = update(
            &predicted(c.clone(), CMatrix::zeros(3, 3)),
            &rand_mat(&mut rng, 6, 3),
            &complex_normal(&mut rng, 6),
            0.2,
        )
        .unwrap();
        assert!((up.state.c_hat - c).norm() < 1e-15);
        assert!(up.state.cov.norm() < 1e-15);
    }

    #[test]
    fn gain_vanishes_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = rand_mat(&mut rng, 4, 2);
        let m = rand_psd(&mut rng, 2);
        let y = complex_normal(&mut rng, 4);
        let c = CVector::zeros(2);
        let shift = |sigma2: f64| {
            update(&predicted(c.clone(), m.clone()), &s, &y, sigma2)
                .unwrap()
                .state
                .c_hat
                .norm()
        };
        let (a, b) = (shift(1e4), shift(1e5));
        assert!(a < 1e-3);
        assert!((a / b - 10.0).abs() < 0.05);
    }

    #[test]
    fn scalar_update() {
        let up = update(
            &predicted(CVector::from_element(1, real(0.4)), scalar(1.0)),
            &scalar(1.0),
            &CVector::from_element(1, real(2.0)),
            1.0,
        )
        .unwrap();
        assert!((up.state.c_hat[0].re - 1.2).abs() < 1e-15);
        assert!((up.state.cov[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((up.innovation[0].re - 1.6).abs() < 1e-15);
        assert!((up.innovation_cov[(0, 0)].re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn update_matches_information_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (n, d, sigma2) = (4, 2, 0.3);
        let s = rand_mat(&mut rng, n, d);
        let m = rand_psd(&mut rng, d);
        let c = complex_normal(&mut rng, d);
        let y = complex_normal(&mut rng, n);
        let up = update(&predicted(c.clone(), m.clone()), &s, &y, sigma2).unwrap();
        let m_inv = m.clone().try_inverse().unwrap();
        let post = (&m_inv + s.adjoint() * &s / real(sigma2))
            .try_inverse()
            .unwrap();
        let mean = &post * (&m_inv * &c + s.adjoint() * &y / real(sigma2));
        assert!((&up.state.c_hat - mean).norm() < 1e-10);
        assert!((&up.state.cov - post).norm() < 1e-10);
    }

    #[test]
    fn long_run_keeps_covariance_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 4;
        let ar = model(
            rand_mat(&mut rng, d, d) * real(0.9),
            rand_psd(&mut rng, d) * real(0.01),
        );
        let mut st = KalmanState::filtered(CVector::zeros(d), rand_psd(&mut rng, d));
        for _ in 0..200 {
            let p = predict(&st, &ar).unwrap();
            let up = update(
                &p,
                &rand_mat(&mut rng, 8, d),
                &complex_normal(&mut rng, 8),
                0.05,
            )
            .unwrap();
            assert!(trace_re(&up.state.cov) <= trace_re(&p.cov) + 1e-9);
            let tr = trace_re(&up.state.cov);
            assert!(min_eigenvalue(&up.state.cov) >= -1e-8 * tr / d as f64);
            assert!(crate::linalg::hermitian_defect(&up.state.cov) < 1e-10);
            st = up.state;
        }
    }

    #[test]
    fn tracking_beats_prior_variance() {
        // true model generates the data; per-coefficient error should fall below the stationary variance
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (a, u) = yule_walker(&scalar(1.0), &scalar(0.95), &scalar(0.95)).unwrap();
        let ar = ArModel::from_stacked(a.clone(), u.clone(), scalar(1.0), 1, 1).unwrap();
        let gu = u[(0, 0)].re.sqrt();
        let mut truth = complex_normal(&mut rng, 1);
        let mut st = KalmanState::filtered(CVector::zeros(1), scalar(1.0));
        let mut err = 0.0;
        let steps = 2000;
        for _ in 0..steps {
            truth = &a * &truth + complex_normal(&mut rng, 1) * real(gu);
            let s = rand_mat(&mut rng, 4, 1);
            let y = &s * &truth + complex_normal(&mut rng, 4) * real(0.5f64.sqrt());
            st = update(&predict(&st, &ar).unwrap(), &s, &y, 0.5)
                .unwrap()
                .state;
            err += (&st.c_hat - &truth).norm_squared();
        }
        assert!(err / (steps as f64) < 1.0);
    }
}
