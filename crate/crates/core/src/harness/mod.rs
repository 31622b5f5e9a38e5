//! Experiment orchestration: configuration, Monte Carlo sweeps, MSE
//! aggregation and CSV/SVG output.

mod config;
mod experiment;
mod output;
mod plot;

pub use config::{sigma_w2_from_ebn0, SimConfig};
pub use experiment::{
    compute_mse, order_free_mean, run_experiment, run_experiment_with, run_streams,
    EstimatorReport, MseReport, PointReport, RunOutcome,
};
pub use output::{
    write_mse_csv, write_mse_rows, write_trace_csv, write_trace_rows, MSE_HEADER, TRACE_HEADER,
};
pub use plot::{mode_trace_svg, mse_svg};
