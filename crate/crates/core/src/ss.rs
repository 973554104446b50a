//! Spread-spectrum embedding into selected patches and blind extraction.
//!
//! Each selected patch is vectorized into `f` (length L = W²) and modified as
//! `f + (alpha * w - I * phi) * p`, where `phi = f^T p / |p|^2` uses the plain
//! transpose (no conjugate) and `I` is 0 for SS and 1 for ISS. Extraction
//! takes `sgn(<Re f_w, p>)`, with `sgn(0) = +1`.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::audio_io::{frame, AudioClip};
use crate::config::{EmbedConfig, PnMode, Scheme};
use crate::error::{Error, Result};
use crate::patch::{partition, select, verify_recovery, PatchGrid, PatchSelection};
use crate::payload::{Payload, PayloadOrigin};
use crate::quality::dwr;
use crate::tf::{forward_with, inverse_with, writeback_in_place, FrameTransform, TfImage};

/// Keyed ±1 spreading sequence. Sequences are exactly balanced (a keyed
/// shuffle of ⌈L/2⌉ +1 chips and ⌊L/2⌋ −1 chips); `index` selects an
/// independent stream of the generator.
pub fn pn_sequence(key: u64, index: u64, length: usize) -> Vec<f64> {
    let mut chips: Vec<f64> = (0..length).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(key);
    rng.set_stream(index);
    chips.shuffle(&mut rng);
    chips
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("feature length {a} != sequence length {b}")));
    }
    if a == 0 {
        return Err(Error::Shape("empty feature vector".into()));
    }
    Ok(())
}

/// Host interference `f^T p / |p|^2`.
pub fn host_correlation(f: &[Complex64], p: &[f64]) -> Result<Complex64> {
    check_len(f.len(), p.len())?;
    let dot: Complex64 = f.iter().zip(p).map(|(v, &c)| v * c).sum();
    let norm: f64 = p.iter().map(|c| c * c).sum();
    Ok(dot / norm)
}

/// Embeds one ±1 bit additively.
pub fn embed_bit(f: &[Complex64], bit: i8, p: &[f64], alpha: f64, scheme: Scheme) -> Result<Vec<Complex64>> {
    let phi = host_correlation(f, p)?;
    Ok(embed_bit_with_phi(f, bit, p, alpha, scheme, phi))
}

fn embed_bit_with_phi(f: &[Complex64], bit: i8, p: &[f64], alpha: f64, scheme: Scheme, phi: Complex64) -> Vec<Complex64> {
    let gain = alpha * f64::from(bit) - scheme.indicator() * phi;
    f.iter().zip(p).map(|(v, &c)| v + gain * c).collect()
}

/// `<Re f_w, p> / |p|^2`, the quantity whose sign is the decoded bit.
pub fn decision_statistic(f_w: &[Complex64], p: &[f64]) -> Result<f64> {
    Ok(host_correlation(f_w, p)?.re)
}

pub fn extract_bit(f_w: &[Complex64], p: &[f64]) -> Result<i8> {
    Ok(sign(decision_statistic(f_w, p)?))
}

fn sign(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

fn pn_for(config: &EmbedConfig, position: usize) -> Vec<f64> {
    let index = match config.pn_mode {
        PnMode::PerBit => position as u64,
        PnMode::Shared => 0,
    };
    pn_sequence(config.pn_key, index, config.patch * config.patch)
}

/// TF image, patch grid and selection of a clip under a configuration.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub image: TfImage,
    pub grid: PatchGrid,
    pub selection: PatchSelection,
}

/// Runs framing, transform, partition and selection for `config.bits` patches.
pub fn analyze(clip: &AudioClip, config: &EmbedConfig) -> Result<Analysis> {
    let transform = FrameTransform::new(config.transform, config.frame_length)?;
    analyze_with(&transform, clip, config)
}

fn analyze_with(transform: &FrameTransform, clip: &AudioClip, config: &EmbedConfig) -> Result<Analysis> {
    config.validate(clip.sample_rate_hz)?;
    let frames = frame(&clip.samples, config.frame_length)?;
    let image = forward_with(transform, &frames, config.f1_hz, config.f2_hz, clip.sample_rate_hz)?;
    let grid = partition(&image, config.patch)?;
    let selection = select(&grid, config.bits, config.selection, Some(config.select_key))?;
    Ok(Analysis { image, grid, selection })
}

/// Everything needed to audit an embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub config: EmbedConfig,
    pub sample_rate_hz: u32,
    pub samples: usize,
    pub bin_lo: usize,
    pub bin_hi: usize,
    pub block_rows: usize,
    pub block_cols: usize,
    pub dropped_cols: usize,
    pub selection: PatchSelection,
    /// Host interference of each feature before embedding, in embedding order.
    pub host_phi: Vec<Complex64>,
    pub dwr_db: f64,
}

impl EmbeddingRecord {
    /// Key-value text, one `key = value` per line.
    pub fn to_kv_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("frame_length", c.frame_length.to_string());
        kv("f1_hz", c.f1_hz.to_string());
        kv("f2_hz", c.f2_hz.to_string());
        kv("patch", c.patch.to_string());
        kv("bits", c.bits.to_string());
        kv("alpha", c.alpha.to_string());
        kv("scheme", c.scheme.to_string());
        kv("transform", c.transform.to_string());
        kv("selection", c.selection.to_string());
        kv("select_key", c.select_key.to_string());
        kv("pn_key", c.pn_key.to_string());
        kv("pn_mode", c.pn_mode.to_string());
        kv("sample_rate_hz", self.sample_rate_hz.to_string());
        kv("samples", self.samples.to_string());
        kv("bin_lo", self.bin_lo.to_string());
        kv("bin_hi", self.bin_hi.to_string());
        kv("block_rows", self.block_rows.to_string());
        kv("block_cols", self.block_cols.to_string());
        kv("dropped_cols", self.dropped_cols.to_string());
        kv("dwr_db", self.dwr_db.to_string());
        for (i, (p, phi)) in self.selection.coords.iter().zip(&self.host_phi).enumerate() {
            kv(
                &format!("patch.{i}"),
                format!("{} {} {} {} {}", p.row_block, p.col_block, p.linear_index, phi.re, phi.im),
            );
        }
        s
    }

    /// Recovers the embedding configuration from record text.
    pub fn parse_config(text: &str) -> Result<EmbedConfig> {
        let mut c = EmbedConfig::default();
        let bad = |k: &str, v: &str| Error::Format(format!("bad record value {k} = {v}"));
        for line in text.lines() {
            let Some((k, v)) = line.split_once('=') else { continue };
            let (k, v) = (k.trim(), v.trim());
            macro_rules! set {
                ($field:ident) => {
                    c.$field = v.parse().map_err(|_| bad(k, v))?
                };
            }
            match k {
                "frame_length" => set!(frame_length),
                "f1_hz" => set!(f1_hz),
                "f2_hz" => set!(f2_hz),
                "patch" => set!(patch),
                "bits" => set!(bits),
                "alpha" => set!(alpha),
                "scheme" => set!(scheme),
                "transform" => set!(transform),
                "selection" => set!(selection),
                "select_key" => set!(select_key),
                "pn_key" => set!(pn_key),
                "pn_mode" => set!(pn_mode),
                _ => {}
            }
        }
        Ok(c)
    }

    /// Parses the `patch.N` lines of a record back into `(row, col)` pairs.
    pub fn parse_patch_coords(text: &str) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::new();
        for line in text.lines() {
            let Some((k, v)) = line.split_once('=') else { continue };
            let Some(idx) = k.trim().strip_prefix("patch.") else { continue };
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Format(format!("bad record key '{}'", k.trim())))?;
            let mut it = v.split_whitespace().map(str::parse::<usize>);
            let (Some(Ok(r)), Some(Ok(c))) = (it.next(), it.next()) else {
                return Err(Error::Format(format!("bad record line '{line}'")));
            };
            if idx != out.len() {
                return Err(Error::Format(format!("record patch index {idx} out of sequence")));
            }
            out.push((r, c));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Embedded {
    pub watermarked: AudioClip,
    pub record: EmbeddingRecord,
    /// Band image after embedding, before the inverse transform.
    pub image: TfImage,
}

/// Embeds `payload` into `clip`. The payload length must equal `config.bits`.
pub fn embed(clip: &AudioClip, payload: &Payload, config: &EmbedConfig) -> Result<Embedded> {
    if payload.len() != config.bits {
        return Err(Error::Config(format!(
            "payload has {} bits but config.bits = {}",
            payload.len(),
            config.bits
        )));
    }
    let transform = FrameTransform::new(config.transform, config.frame_length)?;
    let Analysis { mut image, grid, selection } = analyze_with(&transform, clip, config)?;

    let mut band = image.band().to_owned();
    let mut host_phi = Vec::with_capacity(selection.len());
    for (i, (&coord, &bit)) in selection.coords.iter().zip(payload.bits()).enumerate() {
        let p = pn_for(config, i);
        let f = grid.vectorize(band.view(), coord)?;
        let phi = host_correlation(&f, &p)?;
        let f_w = embed_bit_with_phi(&f, bit, &p, config.alpha, config.scheme, phi);
        grid.devectorize(band.view_mut(), coord, &f_w)?;
        host_phi.push(phi);
    }
    writeback_in_place(&mut image, band.view())?;
    let samples = inverse_with(&transform, &image)?;
    let watermarked = clip.with_samples(samples);

    let record = EmbeddingRecord {
        config: config.clone(),
        sample_rate_hz: clip.sample_rate_hz,
        samples: clip.len(),
        bin_lo: image.bin_lo(),
        bin_hi: image.bin_hi(),
        block_rows: grid.block_rows,
        block_cols: grid.block_cols,
        dropped_cols: grid.dropped_cols,
        selection,
        host_phi,
        dwr_db: dwr(clip, &watermarked)?,
    };
    Ok(Embedded {
        watermarked,
        record,
        image,
    })
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub payload: Payload,
    /// Decision statistic per bit, in embedding order.
    pub statistics: Vec<f64>,
    pub selection: PatchSelection,
}

/// Blind extraction: re-selects patches from the clip itself and decodes
/// one bit per patch.
pub fn extract(clip: &AudioClip, config: &EmbedConfig) -> Result<Extraction> {
    let Analysis { image, grid, selection } = analyze(clip, config)?;
    let band = image.band();
    let mut statistics = Vec::with_capacity(selection.len());
    for (i, &coord) in selection.coords.iter().enumerate() {
        let p = pn_for(config, i);
        let f_w = grid.vectorize(band, coord)?;
        statistics.push(decision_statistic(&f_w, &p)?);
    }
    let payload = Payload::new(statistics.iter().map(|&v| sign(v)).collect())?;
    Ok(Extraction {
        payload,
        statistics,
        selection,
    })
}

/// Same as [`extract`] but re-labels the result with the reference payload's
/// logo dimensions, if any.
pub fn extract_like(clip: &AudioClip, config: &EmbedConfig, reference: &Payload) -> Result<Extraction> {
    let mut out = extract(clip, config)?;
    if let PayloadOrigin::Logo { rows, cols } = reference.origin() {
        out.payload = out.payload.with_logo_dims(rows, cols)?;
    }
    Ok(out)
}

/// Share of embedded patches the extractor re-finds in `watermarked`.
pub fn feature_recovery(record: &EmbeddingRecord, watermarked: &AudioClip) -> Result<f64> {
    let again = analyze(watermarked, &record.config)?;
    Ok(verify_recovery(&record.selection, &again.selection))
}
