use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{generate_bem_channel, TapGrid};
use crate::imm::MODES;
use crate::kalman::BasisMap;
use crate::parallel::{map_indexed, Execution};
use crate::receiver::{process_frame, Estimator, FrameSource, ModelBank};
use crate::{Error, Result};

use super::SimConfig;

/// `MSE_l = ||h_l - h_hat_l||^2 / (frame_len * N)` over the whole frame.
pub fn compute_mse(truth: &TapGrid, estimate: &TapGrid) -> Result<Vec<f64>> {
    if truth.dims() != estimate.dims() {
        return Err(Error::Input(format!(
            "tap grids differ: {:?} vs {:?}",
            truth.dims(),
            estimate.dims()
        )));
    }
    let count = (truth.n_symbols() * truth.n_samples()) as f64;
    Ok((0..truth.n_taps())
        .map(|l| {
            let err: f64 = truth
                .trajectory(l)
                .iter()
                .zip(estimate.trajectory(l))
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            err / count
        })
        .collect())
}

/// Mean that does not depend on the order of `values` (sorted summation).
pub fn order_free_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Independent random streams of one Monte Carlo run: `(channel, transmission)`.
///
/// Both depend only on `(seed, run)`, so every estimator and every Eb/N0
/// point sees the same channel, payload and (scaled) noise.
pub fn run_streams(seed: u64, run: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut chan = ChaCha8Rng::seed_from_u64(seed);
    chan.set_stream(2 * run as u64);
    let mut tx = ChaCha8Rng::seed_from_u64(seed);
    tx.set_stream(2 * run as u64 + 1);
    (chan, tx)
}

/// Per-run result of one estimator at one Eb/N0 point.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub per_tap_mse: Vec<f64>,
    /// Mode probabilities for every symbol index (IMM only).
    pub mode_trace: Option<Vec<[f64; MODES]>>,
    pub symbol_errors: usize,
}

#[derive(Clone, Debug)]
pub struct EstimatorReport {
    pub estimator: Estimator,
    /// Mean per-tap MSE over runs.
    pub per_tap_mse: Vec<f64>,
    /// Mean mode probabilities per symbol index (IMM only).
    pub mode_trace: Option<Vec<[f64; MODES]>>,
    pub symbol_error_rate: f64,
    /// Individual runs, in run order.
    pub runs: Vec<RunOutcome>,
}

#[derive(Clone, Debug)]
pub struct PointReport {
    pub ebn0_db: f64,
    pub estimators: Vec<EstimatorReport>,
}

impl PointReport {
    pub fn get(&self, e: Estimator) -> Option<&EstimatorReport> {
        self.estimators.iter().find(|r| r.estimator == e)
    }
}

#[derive(Clone, Debug)]
pub struct MseReport {
    pub seed: u64,
    pub mc_runs: usize,
    pub frame_len: usize,
    pub strongest_tap: usize,
    pub points: Vec<PointReport>,
}

/// Full sweep with the default scheduler and no per-point callback.
pub fn run_experiment(cfg: &SimConfig) -> Result<MseReport> {
    run_experiment_with(cfg, Execution::default(), |_| Ok(()))
}

/// Sweep the Eb/N0 grid. `on_point` sees each point as soon as it is
/// aggregated, so callers can persist partial results.
pub fn run_experiment_with<F>(
    cfg: &SimConfig,
    exec: Execution,
    mut on_point: F,
) -> Result<MseReport>
where
    F: FnMut(&PointReport) -> Result<()>,
{
    cfg.validate()?;
    let profile = cfg.profile()?;
    let bank = ModelBank::new(&profile, cfg.n, cfg.nc)?;
    let handover = BasisMap::new(&profile, &bank.imm[0].basis, &bank.imm[1].basis)?;
    let mut points = Vec::with_capacity(cfg.ebn0_grid_db.len());
    for &ebn0 in &cfg.ebn0_grid_db {
        let rcfg = cfg.receiver_config(ebn0);
        let per_run: Vec<Result<Vec<RunOutcome>>> = map_indexed(exec, cfg.mc_runs, |run| {
            let (mut chan_rng, mut tx_rng) = run_streams(cfg.seed, run);
            let real = generate_bem_channel(
                cfg.frame_len,
                [&bank.imm[0].basis, &bank.imm[1].basis],
                [&bank.imm[0].ar, &bank.imm[1].ar],
                Some(&handover),
                &mut chan_rng,
            )?;
            let source =
                FrameSource::generate(&real, cfg.k, cfg.preamble, cfg.constellation, &mut tx_rng);
            cfg.estimators
                .iter()
                .map(|&e| {
                    let fr = process_frame(&rcfg, &bank, &real, &source, e)?;
                    let mode_trace = (e == Estimator::Imm).then(|| {
                        let mut trace = vec![cfg.mu0; cfg.k];
                        trace.extend(fr.mode_trace.iter().map(|t| t.mu));
                        trace
                    });
                    Ok(RunOutcome {
                        per_tap_mse: fr.per_tap_mse,
                        mode_trace,
                        symbol_errors: fr.symbol_errors,
                    })
                })
                .collect()
        });
        let per_run: Vec<Vec<RunOutcome>> = per_run.into_iter().collect::<Result<_>>()?;
        let point = aggregate(cfg, ebn0, per_run);
        on_point(&point)?;
        points.push(point);
    }
    Ok(MseReport {
        seed: cfg.seed,
        mc_runs: cfg.mc_runs,
        frame_len: cfg.frame_len,
        strongest_tap: profile.strongest_tap(),
        points,
    })
}

fn aggregate(cfg: &SimConfig, ebn0_db: f64, per_run: Vec<Vec<RunOutcome>>) -> PointReport {
    let data_symbols = ((cfg.frame_len - cfg.k) * cfg.n * per_run.len()) as f64;
    let estimators = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(i, &estimator)| {
            let runs: Vec<RunOutcome> = per_run.iter().map(|r| r[i].clone()).collect();
            let per_tap_mse = (0..cfg.n_taps())
                .map(|l| {
                    order_free_mean(&runs.iter().map(|r| r.per_tap_mse[l]).collect::<Vec<_>>())
                })
                .collect();
            let mode_trace = runs[0].mode_trace.as_ref().map(|first| {
                (0..first.len())
                    .map(|n| {
                        let mut mean = [0.0; MODES];
                        for (j, m) in mean.iter_mut().enumerate() {
                            let vals: Vec<f64> = runs
                                .iter()
                                .map(|r| r.mode_trace.as_ref().expect("IMM run")[n][j])
                                .collect();
                            *m = order_free_mean(&vals);
                        }
                        mean
                    })
                    .collect()
            });
            let errors: usize = runs.iter().map(|r| r.symbol_errors).sum();
            EstimatorReport {
                estimator,
                per_tap_mse,
                mode_trace,
                symbol_error_rate: errors as f64 / data_symbols,
                runs,
            }
        })
        .collect();
    PointReport {
        ebn0_db,
        estimators,
    }
}
