//! Seedable channel attacks on watermarked clips. Every attack preserves the
//! clip length.

use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustdct::DctPlanner;
use rustfft::FftPlanner;

use crate::audio_io::{read_wav, write_wav, AudioClip};
use crate::error::{Error, Result};
use crate::quality::{run_shell, shell_path};

#[derive(Debug, Clone, PartialEq)]
pub enum Attack {
    /// Control: the clip passes unchanged.
    None,
    Requantize { bits: u32 },
    Awgn { snr_db: f64, seed: u64 },
    /// `clip` hard-limits the scaled signal to [-1, 1].
    AmplitudeScale { factor: f64, clip: bool },
    CompressProxy { strength: f64 },
    /// `command` is a shell template with `{in}`, `{out}` and `{kbps}`.
    ExternalCodec { command: String, kbps: u32, max_lag: usize },
}

impl Attack {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Attack::None => "none",
            Attack::Requantize { .. } => "requantize",
            Attack::Awgn { .. } => "awgn",
            Attack::AmplitudeScale { .. } => "amplitude_scale",
            Attack::CompressProxy { .. } => "compress_proxy",
            Attack::ExternalCodec { .. } => "external_codec",
        }
    }

    /// The attack's numeric parameter (bits, dB, factor, strength, kbps).
    pub fn param(&self) -> f64 {
        match self {
            Attack::None => 0.0,
            Attack::Requantize { bits } => f64::from(*bits),
            Attack::Awgn { snr_db, .. } => *snr_db,
            Attack::AmplitudeScale { factor, .. } => *factor,
            Attack::CompressProxy { strength } => *strength,
            Attack::ExternalCodec { kbps, .. } => f64::from(*kbps),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Attack::Awgn { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Attack::None => true,
            Attack::Requantize { bits } => (4..=16).contains(bits),
            Attack::Awgn { snr_db, .. } => (0.0..=100.0).contains(snr_db),
            Attack::AmplitudeScale { factor, .. } => *factor > 0.0 && factor.is_finite(),
            Attack::CompressProxy { strength } => *strength > 0.0 && *strength <= 1.0,
            Attack::ExternalCodec { command, kbps, .. } => {
                *kbps > 0 && command.contains("{in}") && command.contains("{out}")
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid attack {self}")))
        }
    }

    pub fn apply(&self, clip: &AudioClip) -> Result<AudioClip> {
        self.validate()?;
        match self {
            Attack::None => Ok(clip.clone()),
            Attack::Requantize { bits } => Ok(requantize(clip, *bits)),
            Attack::Awgn { snr_db, seed } => awgn(clip, *snr_db, *seed),
            Attack::AmplitudeScale { factor, clip: limit } => {
                let mut out = amplitude_scale(clip, *factor);
                if *limit {
                    out.samples.iter_mut().for_each(|s| *s = s.clamp(-1.0, 1.0));
                }
                Ok(out)
            }
            Attack::CompressProxy { strength } => compress_proxy(clip, *strength),
            Attack::ExternalCodec { command, kbps, max_lag } => external_codec(clip, command, *kbps, *max_lag),
        }
    }
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attack::None => write!(f, "none"),
            Attack::Requantize { bits } => write!(f, "requantize {bits} bit"),
            Attack::Awgn { snr_db, seed } => write!(f, "awgn {snr_db} dB (seed {seed})"),
            Attack::AmplitudeScale { factor, .. } => write!(f, "amplitude_scale x{factor}"),
            Attack::CompressProxy { strength } => write!(f, "compress_proxy s={strength}"),
            Attack::ExternalCodec { kbps, .. } => write!(f, "external_codec {kbps} kbps"),
        }
    }
}

/// Uniform quantization to `2^bits` levels over `[-1, 1)`.
pub fn requantize(clip: &AudioClip, bits: u32) -> AudioClip {
    let levels = (1u64 << bits) as f64;
    let step = 2.0 / levels;
    let top = 1.0 - step;
    clip.with_samples(
        clip.samples
            .iter()
            .map(|&s| ((s / step).round() * step).clamp(-1.0, top))
            .collect(),
    )
}

/// Adds white Gaussian noise with variance `mean_power / 10^(snr/10)`.
pub fn awgn(clip: &AudioClip, target_snr_db: f64, seed: u64) -> Result<AudioClip> {
    let power = clip.mean_power();
    if !(power > 0.0) {
        return Err(Error::Domain("SNR is undefined for a silent clip".into()));
    }
    let sigma = (power / 10f64.powf(target_snr_db / 10.0)).sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(clip.with_samples(
        clip.samples
            .iter()
            .map(|&s| {
                let n: f64 = StandardNormal.sample(&mut rng);
                s + sigma * n
            })
            .collect(),
    ))
}

pub fn amplitude_scale(clip: &AudioClip, factor: f64) -> AudioClip {
    clip.with_samples(clip.samples.iter().map(|s| s * factor).collect())
}

/// Block length of the compression surrogate.
pub const PROXY_BLOCK: usize = 576;
/// Coefficients per quantization band.
pub const PROXY_BAND: usize = 16;

/// Bitrate (kbps) to surrogate strength, interpolated linearly.
pub const BITRATE_STRENGTH: [(f64, f64); 8] = [
    (32.0, 0.2),
    (64.0, 0.4),
    (96.0, 0.6),
    (128.0, 0.8),
    (160.0, 0.88),
    (192.0, 0.94),
    (256.0, 1.0),
    (320.0, 1.0),
];

pub fn bitrate_to_strength(kbps: f64) -> f64 {
    let first = BITRATE_STRENGTH[0];
    if kbps <= first.0 {
        return first.1;
    }
    for w in BITRATE_STRENGTH.windows(2) {
        let ((ka, sa), (kb, sb)) = (w[0], w[1]);
        if kbps <= kb {
            return sa + (sb - sa) * (kbps - ka) / (kb - ka);
        }
    }
    1.0
}

/// Low-pass cutoff of the surrogate for a given strength (Hz).
pub fn proxy_cutoff_hz(strength: f64, sample_rate: u32) -> f64 {
    let nyquist = sample_rate as f64 / 2.0;
    if strength >= 1.0 {
        nyquist
    } else {
        (3000.0 + 16_000.0 * strength).min(nyquist)
    }
}

/// Quantizer step as a multiple of each band's RMS.
pub fn proxy_step_factor(strength: f64) -> f64 {
    1.2 * (1.0 - strength).max(0.0)
}

/// Lossy-codec surrogate: orthonormal DCT blocks, band-limited above a
/// strength-dependent cutoff, each 16-coefficient band quantized with a step
/// proportional to its RMS. Strength 1 is transparent.
pub fn compress_proxy(clip: &AudioClip, strength: f64) -> Result<AudioClip> {
    if !(strength > 0.0 && strength <= 1.0) {
        return Err(Error::Config(format!("proxy strength must lie in (0, 1], got {strength}")));
    }
    if strength >= 1.0 {
        return Ok(clip.clone());
    }
    let n = PROXY_BLOCK;
    let dct = DctPlanner::new().plan_dct2(n);
    let s0 = (1.0 / n as f64).sqrt();
    let sk = (2.0 / n as f64).sqrt();
    let cutoff_bin = ((proxy_cutoff_hz(strength, clip.sample_rate_hz) * 2.0 * n as f64
        / clip.sample_rate_hz as f64)
        .floor() as usize)
        .min(n);
    let factor = proxy_step_factor(strength);

    let mut out = Vec::with_capacity(clip.len() + n);
    let mut buf = vec![0.0; n];
    for chunk in clip.samples.chunks(n) {
        buf.fill(0.0);
        buf[..chunk.len()].copy_from_slice(chunk);
        dct.process_dct2(&mut buf);
        for (k, v) in buf.iter_mut().enumerate() {
            *v *= if k == 0 { s0 } else { sk };
        }
        buf[cutoff_bin..].fill(0.0);
        for band in buf[..cutoff_bin].chunks_mut(PROXY_BAND) {
            let rms = (band.iter().map(|v| v * v).sum::<f64>() / band.len() as f64).sqrt();
            let step = factor * rms;
            if step > 0.0 {
                band.iter_mut().for_each(|v| *v = (*v / step).round() * step);
            }
        }
        for (k, v) in buf.iter_mut().enumerate() {
            *v = if k == 0 { 2.0 * *v * s0 } else { *v * sk };
        }
        dct.process_dct3(&mut buf);
        out.extend_from_slice(&buf[..chunk.len()]);
    }
    Ok(clip.with_samples(out))
}

/// Finds the lag `d` in `[-max_lag, max_lag]` maximizing the normalized
/// correlation of `reference[n]` with `candidate[n + d]`.
pub fn best_lag(reference: &[f64], candidate: &[f64], max_lag: usize) -> (isize, f64) {
    let (nx, ny) = (reference.len(), candidate.len());
    let ex: f64 = reference.iter().map(|v| v * v).sum();
    let ey: f64 = candidate.iter().map(|v| v * v).sum();
    let denom = (ex * ey).sqrt();
    if denom == 0.0 || nx == 0 || ny == 0 {
        return (0, 0.0);
    }
    let size = (nx + ny).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(size);
    let ifft = planner.plan_fft_inverse(size);
    let mut a: Vec<Complex64> = reference.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(size, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = candidate.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(size, Complex64::new(0.0, 0.0));
    fft.process(&mut a);
    fft.process(&mut b);
    // r[d] = sum_n x[n] y[n + d]  ->  IFFT(conj(X) Y)[d]
    let mut r: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x.conj() * y).collect();
    ifft.process(&mut r);
    let scale = 1.0 / (size as f64 * denom);
    let max_lag = max_lag as isize;
    let mut best = (0isize, f64::NEG_INFINITY);
    for d in -max_lag..=max_lag {
        let idx = d.rem_euclid(size as isize) as usize;
        let v = r[idx].re * scale;
        if v > best.1 {
            best = (d, v);
        }
    }
    best
}

/// Shifts `candidate` by the best lag and trims/pads it to `len` samples.
pub fn align(reference: &[f64], candidate: &[f64], max_lag: usize) -> Result<(Vec<f64>, isize)> {
    let (lag, peak) = best_lag(reference, candidate, max_lag);
    if peak < 0.5 {
        return Err(Error::Alignment { peak });
    }
    let aligned = (0..reference.len() as isize)
        .map(|n| {
            let j = n + lag;
            if j >= 0 && (j as usize) < candidate.len() {
                candidate[j as usize]
            } else {
                0.0
            }
        })
        .collect();
    Ok((aligned, lag))
}

/// Encode/decode round trip through an external command, then realignment.
pub fn external_codec(clip: &AudioClip, command: &str, kbps: u32, max_lag: usize) -> Result<AudioClip> {
    if !command.contains("{in}") || !command.contains("{out}") {
        return Err(Error::Config("codec command needs {in} and {out} placeholders".into()));
    }
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let input = dir.path().join("in.wav");
    let output = dir.path().join("out.wav");
    write_wav(clip, &input, 16)?;
    let cmd = command
        .replace("{in}", &shell_path(&input))
        .replace("{out}", &shell_path(&output))
        .replace("{kbps}", &kbps.to_string());
    run_shell(&cmd)?;
    if !output.exists() {
        return Err(Error::ExternalTool(format!("`{cmd}` produced no output file")));
    }
    let decoded = read_wav(&output)?.clip;
    let (samples, lag) = align(&clip.samples, &decoded.samples, max_lag)?;
    if lag != 0 {
        log::info!("codec output realigned by {lag} samples");
    }
    Ok(clip.with_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::{dwr, measured_snr_db};
    use rand::Rng;

    fn tone(n: usize) -> AudioClip {
        AudioClip::new(
            (0..n)
                .map(|i| 0.3 * (i as f64 * 0.031).sin() + 0.1 * (i as f64 * 0.17).sin())
                .collect(),
            44100,
        )
    }

    #[test]
    fn requantize_grid() {
        let c = AudioClip::new(vec![0.5, 0.004, 0.0039, -1.0, 0.9999], 44100);
        let q = requantize(&c, 8);
        assert_eq!(q.samples, vec![0.5, 0.0078125, 0.0, -1.0, 1.0 - 0.0078125]);
    }

    #[test]
    fn requantize_at_source_depth_is_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let c = AudioClip::new(
            (0..1000).map(|_| f64::from(rng.gen_range(-32768i32..32768)) / 32768.0).collect(),
            44100,
        );
        let q = requantize(&c, 16);
        for (a, b) in c.samples.iter().zip(&q.samples) {
            assert!((a - b).abs() <= 2f64.powi(-15));
        }
    }

    #[test]
    fn awgn_hits_target_and_is_deterministic() {
        let c = tone(44_100);
        for target in [30.0, 50.0] {
            let a = awgn(&c, target, 7).unwrap();
            assert_eq!(a, awgn(&c, target, 7).unwrap());
            assert_ne!(a, awgn(&c, target, 8).unwrap());
            let got = measured_snr_db(&c, &a).unwrap();
            assert!((got - target).abs() <= 0.2, "{got} vs {target}");
        }
        let silent = AudioClip::new(vec![0.0; 100], 44100);
        assert!(matches!(awgn(&silent, 30.0, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn scale_is_exact_and_unclipped() {
        let c = tone(100);
        assert_eq!(amplitude_scale(&c, 1.0), c);
        let s = Attack::AmplitudeScale { factor: 4.0, clip: false }.apply(&c).unwrap();
        assert!(s.samples.iter().any(|v| v.abs() > 1.0));
        let s = Attack::AmplitudeScale { factor: 4.0, clip: true }.apply(&c).unwrap();
        assert!(s.samples.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn proxy_transparent_at_full_strength() {
        let c = tone(5000);
        let out = compress_proxy(&c, 1.0).unwrap();
        for (a, b) in c.samples.iter().zip(&out.samples) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(compress_proxy(&c, 0.0).is_err());
    }

    #[test]
    fn proxy_round_trip_without_quantization_is_exact() {
        // At 32 kHz the cutoff lies above Nyquist, and the step is tiny.
        let c = AudioClip::new(tone(3000).samples, 32000);
        let out = compress_proxy(&c, 0.999_999).unwrap();
        assert_eq!(out.len(), c.len());
        let d = dwr(&c, &out).unwrap();
        assert!(d > 80.0, "{d}");
    }

    #[test]
    fn proxy_dwr_monotone_in_strength() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let c = AudioClip::new(
            (0..30_000)
                .map(|i| 0.3 * (i as f64 * 0.02).sin() + 0.05 * (i as f64 * 0.9).sin() + 0.01 * rng.gen_range(-1.0..1.0))
                .collect(),
            44100,
        );
        let mut prev = f64::INFINITY;
        for s in [1.0, 0.8, 0.6, 0.4, 0.2] {
            let d = dwr(&c, &compress_proxy(&c, s).unwrap()).unwrap();
            assert!(d <= prev, "strength {s}: {d} > {prev}");
            prev = d;
        }
    }

    #[test]
    fn transparent_external_command() {
        let c = requantize(&tone(5000), 16);
        let out = external_codec(&c, "cp {in} {out}", 128, 1024).unwrap();
        assert_eq!(out, c);
        assert!(matches!(external_codec(&c, "true {in} {out}", 128, 1024), Err(Error::ExternalTool(_))));
        assert!(matches!(external_codec(&c, "exit 3 # {in} {out}", 128, 1024), Err(Error::ExternalTool(_))));
    }

    #[test]
    fn bitrate_table() {
        assert_eq!(bitrate_to_strength(128.0), 0.8);
        assert_eq!(bitrate_to_strength(64.0), 0.4);
        assert!((bitrate_to_strength(112.0) - 0.7).abs() < 1e-12);
        assert_eq!(bitrate_to_strength(8.0), 0.2);
        assert_eq!(bitrate_to_strength(500.0), 1.0);
    }

    #[test]
    fn lag_recovery() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..20_000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        for d in [-1024isize, -37, 0, 5, 1024] {
            // candidate[n + d] = x[n]
            let y: Vec<f64> = (0..x.len() as isize)
                .map(|m| {
                    let n = m - d;
                    if n >= 0 && (n as usize) < x.len() { x[n as usize] } else { 0.0 }
                })
                .collect();
            let (lag, peak) = best_lag(&x, &y, 1024);
            assert_eq!(lag, d);
            assert!(peak > 0.9);
        }
        let unrelated: Vec<f64> = (0..20_000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        assert!(matches!(align(&x, &unrelated, 1024), Err(Error::Alignment { .. })));
    }

    #[test]
    fn validation_ranges() {
        assert!(Attack::Requantize { bits: 3 }.validate().is_err());
        assert!(Attack::Requantize { bits: 8 }.validate().is_ok());
        assert!(Attack::Awgn { snr_db: 120.0, seed: 0 }.validate().is_err());
        assert!(Attack::AmplitudeScale { factor: 0.0, clip: false }.validate().is_err());
        assert!(Attack::ExternalCodec { command: "cp {in} x".into(), kbps: 128, max_lag: 10 }.validate().is_err());
    }
}
