//! Baseband OFDM simulation and channel estimation for doubly-selective
//! fading links.
//!
//! The tap trajectories inside each OFDM symbol are represented with a
//! complex-exponential basis expansion model (BEM). Coefficients are acquired
//! on a short known preamble and then tracked symbol by symbol with
//! Kalman filters, either a single filter matched to one basis or an
//! interacting multiple model (IMM) bank that mixes a slow-variation and a
//! fast-variation basis.
//!
//! Module map:
//!
//! * [`ofdm`]: constellations, unitary DFT, cyclic prefix handling.
//! * [`channel`]: Jakes statistics, BEM-driven channel generation, channel
//!   matrices and noise.
//! * [`bem`]: Fourier bases, projection, coefficient statistics and the
//!   measurement matrix.
//! * [`kalman`]: Yule-Walker AR(1) dynamics, preamble acquisition, the
//!   predict/update recursion.
//! * [`imm`]: the two-model IMM cycle.
//! * [`receiver`]: decision-directed frame processing.
//! * [`harness`]: configuration, Monte Carlo experiments, CSV and SVG output.

pub mod bem;
pub mod bessel;
pub mod channel;
pub mod error;
pub mod harness;
pub mod imm;
pub mod kalman;
pub mod linalg;
pub mod ofdm;
pub mod parallel;
pub mod receiver;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
