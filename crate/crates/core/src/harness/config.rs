use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bem::{make_basis, BasisKind};
use crate::channel::ChannelProfile;
use crate::imm::{validate_probabilities, validate_transition, Transition, MODES};
use crate::ofdm::Constellation;
use crate::receiver::{AcquisitionMode, EqualizerTaps, Estimator, ReceiverConfig};
use crate::{Error, Result};

/// Scalar experiment parameters. Field names are the keys of the TOML
/// config file; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Subcarriers.
    pub n: usize,
    /// Cyclic prefix length.
    pub ng: usize,
    /// Preamble symbols.
    pub k: usize,
    pub frame_len: usize,
    pub mc_runs: usize,
    pub ebn0_grid_db: Vec<f64>,
    /// Maximum Doppler; defaults to a normalized Doppler of 0.1 per OFDM symbol.
    pub fd_hz: Option<f64>,
    /// Sample interval in seconds.
    pub ts: f64,
    pub constellation: Constellation,
    pub preamble: Constellation,
    /// Coefficients per tap in each IMM basis.
    pub nc: usize,
    pub pdp_db: Vec<f64>,
    /// Mode transition matrix, rows sum to one.
    pub p: Transition,
    pub mu0: [f64; MODES],
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub genie: bool,
    pub equalizer: EqualizerTaps,
    pub acquisition: AcquisitionMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 64,
            ng: 16,
            k: 2,
            frame_len: 200,
            mc_runs: 100,
            ebn0_grid_db: vec![5.0, 10.0, 15.0, 20.0, 25.0],
            fd_hz: None,
            ts: 50e-9,
            constellation: Constellation::Qpsk,
            preamble: Constellation::Bpsk,
            nc: 3,
            pdp_db: vec![0.0, -1.0, -3.0, -9.0],
            p: [[0.5, 0.5], [0.5, 0.5]],
            mu0: [0.5, 0.5],
            seed: 42,
            estimators: vec![Estimator::Imm, Estimator::Single(BasisKind::Concat)],
            genie: false,
            equalizer: EqualizerTaps::Predicted,
            acquisition: AcquisitionMode::Prior,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n_taps(&self) -> usize {
        self.pdp_db.len()
    }

    pub fn samples_per_symbol(&self) -> usize {
        self.n + self.ng
    }

    pub fn doppler_hz(&self) -> f64 {
        self.fd_hz
            .unwrap_or(0.1 / (self.samples_per_symbol() as f64 * self.ts))
    }

    pub fn profile(&self) -> Result<ChannelProfile> {
        ChannelProfile::new(
            &self.pdp_db,
            self.doppler_hz(),
            self.ts,
            self.samples_per_symbol(),
        )
    }

    pub fn receiver_config(&self, ebn0_db: f64) -> ReceiverConfig {
        ReceiverConfig {
            preamble_len: self.k,
            constellation: self.constellation,
            preamble: self.preamble,
            sigma_w2: sigma_w2_from_ebn0(ebn0_db, self.constellation),
            transition: self.p,
            mu0: self.mu0,
            genie: self.genie,
            equalizer: self.equalizer,
            acquisition: self.acquisition,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let l = self.n_taps();
        if self.n < 2 {
            return fail(format!("N = {} is too small", self.n));
        }
        if self.ng >= self.n {
            return fail(format!(
                "cyclic prefix {} must be shorter than N = {}",
                self.ng, self.n
            ));
        }
        if l == 0 || l >= self.ng {
            return fail(format!(
                "{l} taps require a cyclic prefix longer than the delay spread (Ng = {})",
                self.ng
            ));
        }
        if self.frame_len == 0 || !self.frame_len.is_multiple_of(2) {
            return fail(format!("frame length {} must be even", self.frame_len));
        }
        if self.k == 0 || self.k >= self.frame_len / 2 {
            return fail(format!(
                "preamble of {} symbols must fit in the first half-frame",
                self.k
            ));
        }
        if self.mc_runs == 0 {
            return fail("mc_runs must be positive".into());
        }
        if self.ebn0_grid_db.is_empty() || self.ebn0_grid_db.iter().any(|v| !v.is_finite()) {
            return fail("Eb/N0 grid must be a non-empty list of finite values".into());
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return fail(format!("sample interval {} is invalid", self.ts));
        }
        if let Some(fd) = self.fd_hz {
            if !(fd >= 0.0 && fd.is_finite()) {
                return fail(format!("Doppler {fd} Hz is invalid"));
            }
        }
        if self.estimators.is_empty() {
            return fail("no estimators selected".into());
        }
        validate_transition(&self.p)?;
        validate_probabilities(&self.mu0)?;
        for kind in [BasisKind::Low, BasisKind::High, BasisKind::Concat] {
            let cols = make_basis(kind, self.n, self.nc)?.n_coeffs();
            let used = match kind {
                BasisKind::Concat => self
                    .estimators
                    .contains(&Estimator::Single(BasisKind::Concat)),
                _ => {
                    self.estimators.contains(&Estimator::Single(kind))
                        || self.estimators.contains(&Estimator::Imm)
                }
            };
            if used && self.n < l * cols {
                return fail(format!(
                    "N = {} measurements cannot identify {} coefficients per symbol",
                    self.n,
                    l * cols
                ));
            }
        }
        Ok(())
    }
}

/// Noise variance for unit-energy symbols over a unit-power channel,
/// `1 / (bits_per_symbol * 10^(EbN0/10))`. Cyclic prefix overhead is not charged.
pub fn sigma_w2_from_ebn0(ebn0_db: f64, c: Constellation) -> f64 {
    1.0 / (c.bits_per_symbol() as f64 * 10f64.powf(ebn0_db / 10.0))
}

impl Serialize for Estimator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Estimator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
