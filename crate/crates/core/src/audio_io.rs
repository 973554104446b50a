//! WAV input/output and non-overlapping time-domain framing.
//!
//! Samples live as `f64` normalized to full scale; integer quantization only
//! happens at the file boundary.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// A mono PCM clip with samples normalized to `[-1.0, 1.0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub source_bit_depth: u16,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self {
            samples,
            sample_rate_hz,
            source_bit_depth: 16,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Same rate and bit depth, different samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            source_bit_depth: self.source_bit_depth,
        }
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }
}

/// Result of [`read_wav`]: the clip plus any non-fatal diagnostics.
#[derive(Debug, Clone)]
pub struct DecodedWav {
    pub clip: AudioClip,
    pub channels: u16,
    pub diagnostics: Vec<String>,
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::Unsupported => {
            Error::UnsupportedEncoding(format!("{}: not integer PCM", path.display()))
        }
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Reads an integer PCM WAV file (8, 16 or 24 bit, mono or stereo).
///
/// Multi-channel input is reduced to its first channel and a diagnostic is
/// recorded; it is not downmixed.
pub fn read_wav(path: impl AsRef<Path>) -> Result<DecodedWav> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int {
        return Err(Error::UnsupportedEncoding(format!(
            "{}: floating-point samples",
            path.display()
        )));
    }
    if !matches!(spec.bits_per_sample, 8 | 16 | 24) {
        return Err(Error::UnsupportedEncoding(format!(
            "{}: {}-bit PCM",
            path.display(),
            spec.bits_per_sample
        )));
    }
    if spec.sample_rate == 0 {
        return Err(Error::Format(format!("{}: zero sample rate", path.display())));
    }
    let channels = spec.channels.max(1) as usize;
    let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;

    let mut samples = Vec::with_capacity(reader.len() as usize / channels);
    for (i, s) in reader.samples::<i32>().enumerate() {
        let s = s.map_err(|e| map_hound(path, e))?;
        if i % channels == 0 {
            samples.push(s as f64 / scale);
        }
    }
    if samples.is_empty() {
        return Err(Error::Format(format!("{}: empty data chunk", path.display())));
    }

    let mut diagnostics = Vec::new();
    if channels > 1 {
        let msg = format!(
            "{}: {channels}-channel input reduced to channel 0",
            path.display()
        );
        log::warn!("{msg}");
        diagnostics.push(msg);
    }
    Ok(DecodedWav {
        clip: AudioClip {
            samples,
            sample_rate_hz: spec.sample_rate,
            source_bit_depth: spec.bits_per_sample,
        },
        channels: spec.channels,
        diagnostics,
    })
}

/// Outcome of [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteReport {
    /// Number of samples that were outside `[-1, 1]` and hard-clipped.
    pub clipped: usize,
}

/// Quantizes one normalized sample to a signed integer of `bit_depth` bits.
/// Returns the code and whether the input was out of range.
pub fn quantize_sample(s: f64, bit_depth: u16) -> (i32, bool) {
    let scale = (1i64 << (bit_depth - 1)) as f64;
    let out_of_range = !(-1.0..=1.0).contains(&s);
    let v = (s.clamp(-1.0, 1.0) * scale).round();
    let code = v.clamp(-scale, scale - 1.0) as i32;
    (code, out_of_range)
}

/// Writes a mono integer PCM WAV file.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>, bit_depth: u16) -> Result<WriteReport> {
    let path = path.as_ref();
    if !matches!(bit_depth, 8 | 16 | 24) {
        return Err(Error::Config(format!(
            "bit depth must be 8, 16 or 24, got {bit_depth}"
        )));
    }
    if let Some(i) = clip.samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::Domain(format!("non-finite sample at index {i}")));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: bit_depth,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    let mut clipped = 0;
    for &s in &clip.samples {
        let (code, out) = quantize_sample(s, bit_depth);
        clipped += usize::from(out);
        let res = match bit_depth {
            8 => writer.write_sample(code as i8),
            16 => writer.write_sample(code as i16),
            _ => writer.write_sample(code),
        };
        res.map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))?;
    if clipped > 0 {
        log::warn!("{}: {clipped} samples clipped", path.display());
    }
    Ok(WriteReport { clipped })
}

/// Non-overlapping frames of `frame_length` samples, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    data: Vec<f64>,
    frame_length: usize,
    tail_padding: usize,
}

impl FrameSet {
    pub fn frame_length(&self) -> usize {
        self.frame_length
    }

    pub fn frame_count(&self) -> usize {
        self.data.len() / self.frame_length
    }

    /// Zeros appended to the final frame.
    pub fn tail_padding(&self) -> usize {
        self.tail_padding
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.frame_length..(i + 1) * self.frame_length]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.frame_length)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Builds a frame set from already-framed contiguous data.
    pub fn from_flat(data: Vec<f64>, frame_length: usize, tail_padding: usize) -> Result<Self> {
        if frame_length == 0 || data.len() % frame_length != 0 || data.is_empty() {
            return Err(Error::Shape(format!(
                "{} samples cannot be split into frames of {frame_length}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            frame_length,
            tail_padding,
        })
    }
}

/// Splits samples into `ceil(N / frame_length)` frames, zero-padding the last.
pub fn frame(samples: &[f64], frame_length: usize) -> Result<FrameSet> {
    if frame_length == 0 {
        return Err(Error::Config("frame length must be positive".into()));
    }
    if samples.is_empty() {
        return Err(Error::TooShort("cannot frame an empty clip".into()));
    }
    let count = samples.len().div_ceil(frame_length);
    let mut data = samples.to_vec();
    data.resize(count * frame_length, 0.0);
    Ok(FrameSet {
        tail_padding: count * frame_length - samples.len(),
        data,
        frame_length,
    })
}

/// Concatenates frames and truncates to `n` samples.
pub fn deframe(frames: &FrameSet, n: usize) -> Result<Vec<f64>> {
    if n > frames.data.len() {
        return Err(Error::Length(format!(
            "requested {n} samples from {} framed samples",
            frames.data.len()
        )));
    }
    Ok(frames.data[..n].to_vec())
}
