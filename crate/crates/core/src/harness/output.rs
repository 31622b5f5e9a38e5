use std::io::Write;

use crate::Result;

use super::{MseReport, PointReport};

pub const MSE_HEADER: &str = "estimator,ebn0_db,tap,mse";
pub const TRACE_HEADER: &str = "estimator,ebn0_db,symbol_index,mu1,mu2";

/// One `estimator,ebn0_db,tap,mse` row per estimator and tap.
pub fn write_mse_rows<W: Write>(point: &PointReport, out: &mut W) -> Result<()> {
    for r in &point.estimators {
        for (tap, mse) in r.per_tap_mse.iter().enumerate() {
            writeln!(out, "{},{},{},{:e}", r.estimator, point.ebn0_db, tap, mse)?;
        }
    }
    Ok(())
}

/// Long-format mean mode trace of every IMM estimator at this point.
pub fn write_trace_rows<W: Write>(point: &PointReport, out: &mut W) -> Result<()> {
    for r in &point.estimators {
        if let Some(trace) = &r.mode_trace {
            for (n, mu) in trace.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{:e},{:e}",
                    r.estimator, point.ebn0_db, n, mu[0], mu[1]
                )?;
            }
        }
    }
    Ok(())
}

pub fn write_mse_csv<W: Write>(report: &MseReport, mut out: W) -> Result<()> {
    writeln!(out, "{MSE_HEADER}")?;
    for p in &report.points {
        write_mse_rows(p, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(report: &MseReport, mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for p in &report.points {
        write_trace_rows(p, &mut out)?;
    }
    out.flush()?;
    Ok(())
}
