use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tfmark::patch::SelectionMode;
use tfmark::{EmbedConfig, Error, PnMode, Scheme, TransformKind, TunerConfig};

/// Config file layout: an `[embed]` table and an optional `[tuner]` table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub embed: EmbedConfig,
    pub tuner: TunerConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Flags shared by every command; each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Shared {
    /// TOML file with `[embed]` and `[tuner]` tables
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub transform: Option<TransformKind>,
    #[arg(long, global = true)]
    pub scheme: Option<Scheme>,
    /// Samples per frame
    #[arg(long, global = true)]
    pub frame: Option<usize>,
    /// Embedding band as LOW:HIGH in Hz
    #[arg(long, global = true, value_parser = parse_band)]
    pub band: Option<(f64, f64)>,
    /// Patch side length
    #[arg(long, global = true)]
    pub patch: Option<usize>,
    /// Payload length in bits
    #[arg(long, global = true)]
    pub bits: Option<usize>,
    /// Fixed embedding strength; skips the tuner
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub target_odg: Option<f64>,
    #[arg(long, global = true)]
    pub pn_key: Option<u64>,
    #[arg(long, global = true)]
    pub pn_mode: Option<PnMode>,
    #[arg(long, global = true)]
    pub select: Option<SelectionMode>,
    #[arg(long, global = true)]
    pub select_key: Option<u64>,
}

fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected LOW:HIGH")?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

impl Shared {
    /// Starts from `base` (file or record), then applies the flags.
    pub fn resolve_from(&self, base: FileConfig) -> FileConfig {
        let mut f = base;
        let e = &mut f.embed;
        if let Some(v) = self.transform {
            e.transform = v;
        }
        if let Some(v) = self.scheme {
            e.scheme = v;
        }
        if let Some(v) = self.frame {
            e.frame_length = v;
        }
        if let Some((lo, hi)) = self.band {
            e.f1_hz = lo;
            e.f2_hz = hi;
        }
        if let Some(v) = self.patch {
            e.patch = v;
        }
        if let Some(v) = self.bits {
            e.bits = v;
        }
        if let Some(v) = self.alpha {
            e.alpha = v;
        }
        if let Some(v) = self.pn_key {
            e.pn_key = v;
        }
        if let Some(v) = self.pn_mode {
            e.pn_mode = v;
        }
        if let Some(v) = self.select {
            e.selection = v;
        }
        if let Some(v) = self.select_key {
            e.select_key = v;
        }
        if let Some(v) = self.target_odg {
            f.tuner.target_grade = v;
        }
        f
    }

    pub fn resolve(&self) -> Result<FileConfig, Error> {
        let base = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Ok(self.resolve_from(base))
    }
}
