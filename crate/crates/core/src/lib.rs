//! Spread-spectrum audio watermarking in time-frequency patches.

pub mod attack;
pub mod audio_io;
pub mod bench;
pub mod config;
pub mod corpus;
pub mod error;
pub mod patch;
pub mod payload;
pub mod quality;
pub mod ss;
pub mod tf;

pub use attack::Attack;
pub use audio_io::{read_wav, write_wav, AudioClip};
pub use config::{EmbedConfig, PnMode, Scheme};
pub use error::{Error, Result};
pub use patch::SelectionMode;
pub use payload::Payload;
pub use quality::{tune_alpha, OdgProxy, QualityMetric, TunerConfig};
pub use ss::{embed, extract, Embedded, EmbeddingRecord, Extraction};
pub use tf::TransformKind;
