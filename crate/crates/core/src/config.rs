//! Embedding parameters shared by embedder and extractor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patch::SelectionMode;
use crate::tf::{band_bins, TransformKind};

/// Key used for PN sequences and keyed selection when none is given.
pub const DEFAULT_KEY: u64 = 20_200_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Plain additive spread spectrum.
    Ss,
    /// Spread spectrum with host-interference removal.
    Iss,
}

impl Scheme {
    /// The binary interference indicator (0 for SS, 1 for ISS).
    pub fn indicator(self) -> f64 {
        match self {
            Scheme::Ss => 0.0,
            Scheme::Iss => 1.0,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ss => "ss",
            Scheme::Iss => "iss",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ss" => Ok(Scheme::Ss),
            "iss" => Ok(Scheme::Iss),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// How spreading sequences are assigned to payload bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PnMode {
    /// A distinct sequence per bit position, derived from `(key, position)`.
    PerBit,
    /// One sequence reused for every bit.
    Shared,
}

impl fmt::Display for PnMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PnMode::PerBit => "per-bit",
            PnMode::Shared => "shared",
        })
    }
}

impl FromStr for PnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "per-bit" | "perbit" => Ok(PnMode::PerBit),
            "shared" => Ok(PnMode::Shared),
            other => Err(Error::Config(format!("unknown PN mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    /// Samples per frame (M0); must be even.
    pub frame_length: usize,
    pub f1_hz: f64,
    pub f2_hz: f64,
    /// Patch side W; must divide the number of band bins.
    pub patch: usize,
    /// Payload length P.
    pub bits: usize,
    /// Embedding strength, strictly inside (0, 1).
    pub alpha: f64,
    pub scheme: Scheme,
    pub transform: TransformKind,
    pub selection: SelectionMode,
    pub select_key: u64,
    pub pn_key: u64,
    pub pn_mode: PnMode,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            frame_length: 1024,
            f1_hz: 60.0,
            f2_hz: 2800.0,
            patch: 16,
            bits: 32,
            alpha: 0.01,
            scheme: Scheme::Iss,
            transform: TransformKind::Stft,
            selection: SelectionMode::Energy,
            select_key: DEFAULT_KEY,
            pn_key: DEFAULT_KEY,
            pn_mode: PnMode::PerBit,
        }
    }
}

impl EmbedConfig {
    /// Checks every parameter constraint that does not depend on the clip
    /// length; `sample_rate` is needed to resolve the band.
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.frame_length < 2 || self.frame_length % 2 != 0 {
            return Err(Error::Config(format!(
                "frame length must be even, got {}",
                self.frame_length
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.bits == 0 {
            return Err(Error::Config("payload must carry at least one bit".into()));
        }
        if self.patch == 0 {
            return Err(Error::Config("patch size must be positive".into()));
        }
        let (lo, hi) = band_bins(self.f1_hz, self.f2_hz, sample_rate, self.frame_length)?;
        let rows = hi - lo + 1;
        if rows % self.patch != 0 {
            return Err(Error::Config(format!(
                "patch size {} does not divide the {rows} band bins {lo}..={hi}",
                self.patch
            )));
        }
        Ok(())
    }

    /// Number of patches available for a clip of `samples` samples.
    pub fn capacity(&self, samples: usize, sample_rate: u32) -> Result<usize> {
        self.validate(sample_rate)?;
        let (lo, hi) = band_bins(self.f1_hz, self.f2_hz, sample_rate, self.frame_length)?;
        let cols = samples.div_ceil(self.frame_length);
        Ok((hi - lo + 1) / self.patch * (cols / self.patch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = EmbedConfig::default();
        c.validate(44100).unwrap();
        assert_eq!(c.capacity(441_000, 44100).unwrap(), 104);
    }

    #[test]
    fn four_minute_capacity() {
        let c = EmbedConfig::default();
        // 10336 frames -> 646 patch columns, 4 patch rows
        assert_eq!(c.capacity(240 * 44100, 44100).unwrap(), 2584);
    }

    #[test]
    fn rejects_bad_parameters() {
        let base = EmbedConfig::default();
        for bad in [
            EmbedConfig { alpha: 0.0, ..base.clone() },
            EmbedConfig { alpha: 1.0, ..base.clone() },
            EmbedConfig { bits: 0, ..base.clone() },
            EmbedConfig { frame_length: 1023, ..base.clone() },
            EmbedConfig { patch: 15, ..base.clone() },
            EmbedConfig { f2_hz: 30000.0, ..base.clone() },
        ] {
            assert!(bad.validate(44100).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn enum_round_trips() {
        assert_eq!("ISS".parse::<Scheme>().unwrap(), Scheme::Iss);
        assert_eq!(Scheme::Ss.to_string(), "ss");
        assert_eq!("shared".parse::<PnMode>().unwrap(), PnMode::Shared);
        assert!("qim".parse::<Scheme>().is_err());
    }
}
