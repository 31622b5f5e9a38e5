use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use ofdm_imm::harness::{
    mode_trace_svg, mse_svg, run_experiment_with, write_mse_rows, write_trace_rows, MseReport,
    SimConfig, MSE_HEADER, TRACE_HEADER,
};
use ofdm_imm::parallel::Execution;
use ofdm_imm::receiver::{AcquisitionMode, EqualizerTaps, Estimator};
use ofdm_imm::Result;

const FULL_RUNS: usize = 1000;

/// Monte Carlo comparison of IMM and single-model Kalman channel trackers
/// on a doubly-selective OFDM link.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// TOML config; omitted keys take their defaults.
    #[arg(long)]
    config: PathBuf,

    /// Eb/N0 grid in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ebn0: Option<Vec<f64>>,

    #[arg(long)]
    runs: Option<usize>,

    /// Use the full 1000-run protocol (overrides --runs).
    #[arg(long)]
    full: bool,

    #[arg(long)]
    seed: Option<u64>,

    /// Estimators to compare: imm, concat, low, high.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<Estimator>>,

    /// Detect with the true transmitted symbols instead of decisions.
    #[arg(long)]
    genie: bool,

    /// Equalizer taps: predicted or previous.
    #[arg(long)]
    equalizer: Option<EqualizerTaps>,

    /// Preamble acquisition: prior or ls.
    #[arg(long)]
    acquisition: Option<AcquisitionMode>,

    /// Run Monte Carlo iterations on one thread.
    #[arg(long)]
    sequential: bool,

    /// Also render SVG plots.
    #[arg(long)]
    plots: bool,

    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn load_config(cli: &Cli) -> Result<SimConfig> {
    let mut cfg = SimConfig::from_path(&cli.config)?;
    if let Some(grid) = &cli.ebn0 {
        cfg.ebn0_grid_db = grid.clone();
    }
    if let Some(runs) = cli.runs {
        cfg.mc_runs = runs;
    }
    if cli.full {
        cfg.mc_runs = FULL_RUNS;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(est) = &cli.estimators {
        cfg.estimators = est.clone();
    }
    cfg.genie |= cli.genie;
    if let Some(acq) = cli.acquisition {
        cfg.acquisition = acq;
    }
    if let Some(eq) = cli.equalizer {
        cfg.equalizer = eq;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_with_header(path: &Path, header: &str) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "{header}")?;
    Ok(())
}

fn append(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(OpenOptions::new().append(true).open(path)?))
}

fn write_plots(report: &MseReport, dir: &Path) -> Result<()> {
    fs::write(dir.join("mse.svg"), mse_svg(report, report.strongest_tap))?;
    for (i, p) in report.points.iter().enumerate() {
        if let Some(svg) = mode_trace_svg(report, i) {
            fs::write(dir.join(format!("mode_trace_{}dB.svg", p.ebn0_db)), svg)?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    fs::create_dir_all(&cli.out)?;
    let mse_path = cli.out.join("mse.csv");
    let trace_path = cli.out.join("mode_trace.csv");
    create_with_header(&mse_path, MSE_HEADER)?;
    create_with_header(&trace_path, TRACE_HEADER)?;

    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let started = Instant::now();
    let report = run_experiment_with(&cfg, exec, |point| {
        let mut mse = append(&mse_path)?;
        write_mse_rows(point, &mut mse)?;
        mse.flush()?;
        let mut trace = append(&trace_path)?;
        write_trace_rows(point, &mut trace)?;
        trace.flush()?;
        let summary: Vec<String> = point
            .estimators
            .iter()
            .map(|r| {
                format!(
                    "{}={:.3e}",
                    r.estimator,
                    r.per_tap_mse.iter().copied().fold(0.0, f64::max)
                )
            })
            .collect();
        eprintln!(
            "Eb/N0 {:>5} dB  max tap MSE  {}  ({:.1?})",
            point.ebn0_db,
            summary.join("  "),
            started.elapsed()
        );
        Ok(())
    })?;

    if cli.plots {
        write_plots(&report, &cli.out)?;
    }
    eprintln!("wrote {} and {}", mse_path.display(), trace_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
