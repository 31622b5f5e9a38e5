//! Minimal static SVG line charts.

use std::fmt::Write;

use super::MseReport;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        let (v, lo, hi) = if self.log {
            (v.max(1e-300).log10(), self.lo.log10(), self.hi.log10())
        } else {
            (v, self.lo, self.hi)
        };
        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        a + t * (b - a)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (
                self.lo.log10().floor() as i32,
                self.hi.log10().ceil() as i32,
            );
            (a..=b)
                .map(|e| 10f64.powi(e))
                .filter(|v| *v >= self.lo * 0.999 && *v <= self.hi * 1.001)
                .collect()
        } else {
            (0..=5)
                .map(|i| self.lo + (self.hi - self.lo) * i as f64 / 5.0)
                .collect()
        }
    }
}

fn chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series], x: Axis, y: Axis) -> String {
    let mut s = String::new();
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{title}</text>"#,
        (x0 + x1) / 2.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for t in x.ticks() {
        let px = x.map(t, x0, x1);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{y0}" x2="{px:.1}" y2="{}" stroke="black"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#,
            y0 + 18.0,
            fmt_tick(t, false)
        );
    }
    for t in y.ticks() {
        let py = y.map(t, y0, y1);
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{py:.1}" x2="{x1}" y2="{py:.1}" stroke="#ddd"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py + 4.0,
            fmt_tick(t, y.log)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
        (x0 + x1) / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(a, b)| format!("{:.1},{:.1}", x.map(a, x0, x1), y.map(b, y0, y1)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = y1 + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            x1 + 12.0,
            x1 + 36.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            x1 + 42.0,
            ly + 4.0,
            ser.label
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.log10().round() as i32)
    } else if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round())
    } else {
        format!("{v:.2}")
    }
}

/// MSE of `tap` versus Eb/N0, one line per estimator, log-scale y axis.
pub fn mse_svg(report: &MseReport, tap: usize) -> String {
    let mut series: Vec<Series> = Vec::new();
    for p in &report.points {
        for r in &p.estimators {
            let label = r.estimator.to_string();
            let idx = match series.iter().position(|s| s.label == label) {
                Some(i) => i,
                None => {
                    series.push(Series {
                        label,
                        points: Vec::new(),
                    });
                    series.len() - 1
                }
            };
            series[idx].points.push((p.ebn0_db, r.per_tap_mse[tap]));
        }
    }
    let xs = report.points.iter().map(|p| p.ebn0_db);
    let ys = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|v| *v > 0.0);
    let (xlo, xhi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let (ylo, yhi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let (ylo, yhi) = if ylo.is_finite() {
        (
            10f64.powf(ylo.log10().floor()),
            10f64.powf(yhi.log10().ceil()),
        )
    } else {
        (1e-6, 1.0)
    };
    chart(
        &format!("MSE of tap {tap} versus Eb/N0"),
        "Eb/N0 (dB)",
        "MSE",
        &series,
        Axis {
            lo: xlo,
            hi: xhi,
            log: false,
        },
        Axis {
            lo: ylo,
            hi: yhi,
            log: true,
        },
    )
}

/// Mean IMM mode probabilities versus symbol index at grid point `point`.
pub fn mode_trace_svg(report: &MseReport, point: usize) -> Option<String> {
    let p = report.points.get(point)?;
    let trace = p.estimators.iter().find_map(|r| r.mode_trace.as_ref())?;
    let series: Vec<Series> = (0..2)
        .map(|j| Series {
            label: format!("mu{}", j + 1),
            points: trace
                .iter()
                .enumerate()
                .map(|(n, mu)| (n as f64, mu[j]))
                .collect(),
        })
        .collect();
    Some(chart(
        &format!("Mode probability at Eb/N0 = {} dB", p.ebn0_db),
        "OFDM symbol index",
        "probability",
        &series,
        Axis {
            lo: 0.0,
            hi: trace.len().saturating_sub(1).max(1) as f64,
            log: false,
        },
        Axis {
            lo: 0.0,
            hi: 1.0,
            log: false,
        },
    ))
}
