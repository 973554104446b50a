//! Per-frame time-frequency analysis: analytic signal, orthonormal frame
//! transforms (Fourier or cosine), band extraction and write-back.
//!
//! The full image stores one column per frame, `frame_length` rows each.
//! The band view is flipped vertically: band row 0 is the highest retained
//! bin (`bin_hi`), the last band row is `bin_lo`. Patch ordering relies on
//! that orientation.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, ShapeBuilder};
use num_complex::Complex64;
use rustdct::{DctPlanner, TransformType2And3};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::FrameSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    /// Analytic signal followed by an orthonormal DFT.
    Stft,
    /// Orthonormal type-II DCT of the real frame.
    Stct,
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::Stft => "stft",
            TransformKind::Stct => "stct",
        })
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stft" => Ok(TransformKind::Stft),
            "stct" => Ok(TransformKind::Stct),
            other => Err(Error::Config(format!("unknown transform '{other}'"))),
        }
    }
}

enum Plan {
    Fourier {
        fft: Arc<dyn Fft<f64>>,
        ifft: Arc<dyn Fft<f64>>,
    },
    Cosine(Arc<dyn TransformType2And3<f64>>),
}

/// Planned forward/inverse transform for a fixed frame length.
pub struct FrameTransform {
    kind: TransformKind,
    len: usize,
    plan: Plan,
}

impl fmt::Debug for FrameTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameTransform")
            .field("kind", &self.kind)
            .field("len", &self.len)
            .finish()
    }
}

impl FrameTransform {
    pub fn new(kind: TransformKind, len: usize) -> Result<Self> {
        if len < 2 || len % 2 != 0 {
            return Err(Error::Config(format!(
                "frame length must be even and at least 2, got {len}"
            )));
        }
        let plan = match kind {
            TransformKind::Stft => {
                let mut planner = FftPlanner::new();
                Plan::Fourier {
                    fft: planner.plan_fft_forward(len),
                    ifft: planner.plan_fft_inverse(len),
                }
            }
            TransformKind::Stct => Plan::Cosine(DctPlanner::new().plan_dct2(len)),
        };
        Ok(Self { kind, len, plan })
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Transforms one real frame into one image column.
    pub fn forward_frame(&self, frame: &[f64], out: &mut [Complex64]) {
        debug_assert_eq!(frame.len(), self.len);
        debug_assert_eq!(out.len(), self.len);
        let n = self.len;
        let norm = 1.0 / (n as f64).sqrt();
        match &self.plan {
            Plan::Fourier { fft, .. } => {
                for (o, &x) in out.iter_mut().zip(frame) {
                    *o = Complex64::new(x, 0.0);
                }
                fft.process(out);
                // The orthonormal DFT of the analytic frame is the half-spectrum
                // weighting of the real frame's DFT.
                let half = n / 2;
                out[0] *= norm;
                out[half] *= norm;
                for v in &mut out[1..half] {
                    *v *= 2.0 * norm;
                }
                for v in &mut out[half + 1..] {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
            Plan::Cosine(dct) => {
                let mut buf = frame.to_vec();
                dct.process_dct2(&mut buf);
                let s0 = (1.0 / n as f64).sqrt();
                let sk = (2.0 / n as f64).sqrt();
                for (k, (o, v)) in out.iter_mut().zip(buf).enumerate() {
                    let scale = if k == 0 { s0 } else { sk };
                    *o = Complex64::new(v * scale, 0.0);
                }
            }
        }
    }

    /// Inverts one image column back to a real frame. For the Fourier path
    /// the imaginary part of the reconstructed analytic frame is discarded.
    pub fn inverse_frame(&self, column: &[Complex64], out: &mut [f64]) {
        debug_assert_eq!(column.len(), self.len);
        debug_assert_eq!(out.len(), self.len);
        let n = self.len;
        match &self.plan {
            Plan::Fourier { ifft, .. } => {
                let mut buf = column.to_vec();
                ifft.process(&mut buf);
                let norm = 1.0 / (n as f64).sqrt();
                for (o, v) in out.iter_mut().zip(buf) {
                    *o = v.re * norm;
                }
            }
            Plan::Cosine(dct) => {
                let s0 = (1.0 / n as f64).sqrt();
                let sk = (2.0 / n as f64).sqrt();
                for (k, (o, v)) in out.iter_mut().zip(column).enumerate() {
                    *o = if k == 0 { 2.0 * v.re * s0 } else { v.re * sk };
                }
                dct.process_dct3(out);
            }
        }
    }

    /// Time-domain analytic signal of a real frame.
    pub fn analytic(&self, frame: &[f64]) -> Vec<Complex64> {
        let Plan::Fourier { fft, ifft } = &self.plan else {
            // Any even-length frame can be analysed; plan on demand.
            return FrameTransform::new(TransformKind::Stft, self.len)
                .expect("length already validated")
                .analytic(frame);
        };
        let n = self.len;
        let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft.process(&mut buf);
        let half = n / 2;
        for v in &mut buf[1..half] {
            *v *= 2.0;
        }
        for v in &mut buf[half + 1..] {
            *v = Complex64::new(0.0, 0.0);
        }
        ifft.process(&mut buf);
        let inv = 1.0 / n as f64;
        buf.iter_mut().for_each(|v| *v *= inv);
        buf
    }
}

/// Analytic signal of one frame: DC and Nyquist bins kept, positive
/// frequencies doubled, negative frequencies zeroed.
pub fn analytic_frame(frame: &[f64]) -> Result<Vec<Complex64>> {
    Ok(FrameTransform::new(TransformKind::Stft, frame.len())?.analytic(frame))
}

/// Maps the `[f1, f2]` Hz band to inclusive bin indices
/// `(ceil(f1 M0 / fs), floor(f2 M0 / fs))`.
pub fn band_bins(f1: f64, f2: f64, sample_rate: u32, frame_length: usize) -> Result<(usize, usize)> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(f1 >= 0.0 && f1 < f2 && f2 <= nyquist) {
        return Err(Error::Config(format!(
            "band must satisfy 0 <= f1 < f2 <= {nyquist} Hz, got {f1}..{f2}"
        )));
    }
    let per_bin = frame_length as f64 / sample_rate as f64;
    let lo = (f1 * per_bin).ceil() as usize;
    let hi = (f2 * per_bin).floor() as usize;
    if lo > hi || hi >= frame_length {
        return Err(Error::Band { lo, hi });
    }
    Ok((lo, hi))
}

/// Time-frequency image of a framed clip.
#[derive(Debug, Clone, PartialEq)]
pub struct TfImage {
    full: Array2<Complex64>,
    kind: TransformKind,
    bin_lo: usize,
    bin_hi: usize,
    original_length: usize,
}

impl TfImage {
    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    /// Frequency bins × frames.
    pub fn full(&self) -> ArrayView2<'_, Complex64> {
        self.full.view()
    }

    pub fn frame_length(&self) -> usize {
        self.full.nrows()
    }

    pub fn columns(&self) -> usize {
        self.full.ncols()
    }

    pub fn bin_lo(&self) -> usize {
        self.bin_lo
    }

    pub fn bin_hi(&self) -> usize {
        self.bin_hi
    }

    /// Number of retained bins, `bin_hi - bin_lo + 1`.
    pub fn band_rows(&self) -> usize {
        self.bin_hi - self.bin_lo + 1
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    /// Band-limited view, row 0 = `bin_hi`.
    pub fn band(&self) -> ArrayView2<'_, Complex64> {
        self.full.slice(s![self.bin_lo..=self.bin_hi;-1, ..])
    }

    pub fn band_mut(&mut self) -> ArrayViewMut2<'_, Complex64> {
        self.full.slice_mut(s![self.bin_lo..=self.bin_hi;-1, ..])
    }

    /// Full-image bin index of a band row.
    pub fn bin_of_band_row(&self, row: usize) -> usize {
        self.bin_hi - row
    }
}

/// Transforms every frame and records the band limits.
pub fn forward(
    frames: &FrameSet,
    kind: TransformKind,
    f1: f64,
    f2: f64,
    sample_rate: u32,
) -> Result<TfImage> {
    let m0 = frames.frame_length();
    let transform = FrameTransform::new(kind, m0)?;
    forward_with(&transform, frames, f1, f2, sample_rate)
}

/// [`forward`] with a pre-planned transform.
pub fn forward_with(
    transform: &FrameTransform,
    frames: &FrameSet,
    f1: f64,
    f2: f64,
    sample_rate: u32,
) -> Result<TfImage> {
    let m0 = frames.frame_length();
    if transform.len() != m0 {
        return Err(Error::Shape(format!(
            "transform planned for {} samples, frames have {m0}",
            transform.len()
        )));
    }
    let (bin_lo, bin_hi) = band_bins(f1, f2, sample_rate, m0)?;
    let cols = frames.frame_count();
    let mut full = Array2::<Complex64>::zeros((m0, cols).f());
    {
        let data = full
            .as_slice_memory_order_mut()
            .expect("column-major array is contiguous");
        for (frame, col) in frames.frames().zip(data.chunks_exact_mut(m0)) {
            transform.forward_frame(frame, col);
        }
    }
    Ok(TfImage {
        full,
        kind: transform.kind(),
        bin_lo,
        bin_hi,
        original_length: frames.frame_count() * m0 - frames.tail_padding(),
    })
}

/// Inverts every column and truncates to the original clip length.
pub fn inverse(image: &TfImage) -> Result<Vec<f64>> {
    let transform = FrameTransform::new(image.kind, image.frame_length())?;
    inverse_with(&transform, image)
}

pub fn inverse_with(transform: &FrameTransform, image: &TfImage) -> Result<Vec<f64>> {
    let m0 = image.frame_length();
    if transform.len() != m0 || transform.kind() != image.kind {
        return Err(Error::Shape("transform does not match image".into()));
    }
    let mut out = vec![0.0; m0 * image.columns()];
    let mut column = vec![Complex64::new(0.0, 0.0); m0];
    for (c, chunk) in out.chunks_exact_mut(m0).enumerate() {
        column
            .iter_mut()
            .zip(image.full.column(c))
            .for_each(|(d, s)| *d = *s);
        transform.inverse_frame(&column, chunk);
    }
    out.truncate(image.original_length);
    Ok(out)
}

/// Returns a copy of `image` whose band rows are replaced by `band_new`.
pub fn writeback(image: &TfImage, band_new: ArrayView2<'_, Complex64>) -> Result<TfImage> {
    let mut out = image.clone();
    writeback_in_place(&mut out, band_new)?;
    Ok(out)
}

pub fn writeback_in_place(image: &mut TfImage, band_new: ArrayView2<'_, Complex64>) -> Result<()> {
    let want = (image.band_rows(), image.columns());
    if band_new.dim() != want {
        return Err(Error::Shape(format!(
            "band replacement is {:?}, image band is {want:?}",
            band_new.dim()
        )));
    }
    image.band_mut().assign(&band_new);
    Ok(())
}
