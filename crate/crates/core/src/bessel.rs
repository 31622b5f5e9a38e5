//! Zeroth-order Bessel function of the first kind.

use std::f64::consts::PI;

const SERIES_LIMIT: f64 = 8.0;

/// J0(z) for real `z`.
///
/// Power series below |z| = 8. Beyond that, Bessel's integral
/// `J0(z) = (1/pi) * int_0^pi cos(z sin t) dt` is evaluated with the
/// trapezoidal rule, which converges geometrically for this periodic
/// integrand once the node count exceeds |z|.
pub fn j0(z: f64) -> f64 {
    let z = z.abs();
    if z < SERIES_LIMIT {
        series(z)
    } else {
        trapezoid(z)
    }
}

fn series(z: f64) -> f64 {
    // sum_k (-1)^k (z^2/4)^k / (k!)^2
    let q = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= -q / (kf * kf);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn trapezoid(z: f64) -> f64 {
    // cos(z sin t) is even about pi/2 and 2pi-periodic; sample [0, pi) uniformly.
    let nodes = (z.ceil() as usize) * 2 + 64;
    let h = PI / nodes as f64;
    let mut sum = 0.0;
    for i in 0..nodes {
        sum += (z * (i as f64 * h).sin()).cos();
    }
    sum / nodes as f64
}
