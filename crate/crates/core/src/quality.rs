//! Imperceptibility and detection metrics, the pluggable quality grade, and
//! the feedback tuner for the embedding strength.

use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::audio_io::{write_wav, AudioClip};
use crate::config::EmbedConfig;
use crate::error::{Error, Result};
use crate::payload::Payload;
use crate::ss::{embed, feature_recovery, Embedded};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("length {a} != {b}")));
    }
    Ok(())
}

/// Document-to-watermark ratio in dB. Identical signals give `+inf`.
pub fn dwr(x: &AudioClip, x_w: &AudioClip) -> Result<f64> {
    dwr_samples(&x.samples, &x_w.samples)
}

pub fn dwr_samples(x: &[f64], x_w: &[f64]) -> Result<f64> {
    same_len(x.len(), x_w.len())?;
    let host: f64 = x.iter().map(|v| v * v).sum();
    let diff: f64 = x.iter().zip(x_w).map(|(a, b)| (b - a) * (b - a)).sum();
    if diff == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (host / diff).log10())
}

/// Percentage of payload bits recovered correctly: 100 for a perfect match,
/// 0 when every bit is flipped.
pub fn detection_rate(w: &Payload, w_hat: &Payload) -> Result<f64> {
    detection_rate_bits(w.bits(), w_hat.bits())
}

pub fn detection_rate_bits(w: &[i8], w_hat: &[i8]) -> Result<f64> {
    same_len(w.len(), w_hat.len())?;
    if w.is_empty() {
        return Err(Error::Shape("empty payload".into()));
    }
    let dist: i64 = w.iter().zip(w_hat).map(|(&a, &b)| i64::from((a - b).abs())).sum();
    Ok((1.0 - dist as f64 / (2.0 * w.len() as f64)) * 100.0)
}

/// SNR of a signal against a noise variance, using per-sample mean power.
pub fn snr_db(x_w: &AudioClip, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
    }
    Ok(10.0 * (x_w.mean_power() / sigma2).log10())
}

/// Measured SNR of `noisy` relative to `clean` (noise = difference).
pub fn measured_snr_db(clean: &AudioClip, noisy: &AudioClip) -> Result<f64> {
    same_len(clean.len(), noisy.len())?;
    let n = clean.len() as f64;
    let noise: f64 = clean
        .samples
        .iter()
        .zip(&noisy.samples)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        / n;
    snr_db(clean, noise)
}

/// Analysis frame of the quality proxy.
pub const PROXY_FRAME: usize = 1024;
/// Per-frame reference power never drops below the clip's mean power
/// attenuated by this many dB, so quiet passages are judged against a level
/// tied to the material rather than against silence.
pub const PROXY_FLOOR_REL_DB: f64 = -20.0;
/// Absolute floor on per-sample reference power (about −120 dBFS), for
/// digitally silent clips.
pub const PROXY_FLOOR_POWER: f64 = 1e-12;
/// Distortion-index breakpoints (dB) and grades. Linear in between; beyond
/// the last point the grade saturates at −4; before the first it decays
/// towards zero as `g0 * 10^((d - d0) / 10)`.
pub const PROXY_CURVE: [(f64, f64); 7] = [
    (-60.0, -0.1),
    (-45.0, -0.4),
    (-30.0, -1.0),
    (-20.0, -2.0),
    (-10.0, -3.0),
    (0.0, -3.6),
    (10.0, -4.0),
];

/// Linear distortion index: the larger of the global distortion-to-signal
/// ratio and the mean of frame-wise ratios, each frame judged against its
/// own power or the floor, whichever is larger.
pub fn distortion_index(x: &[f64], x_w: &[f64]) -> Result<f64> {
    same_len(x.len(), x_w.len())?;
    if x.is_empty() {
        return Ok(0.0);
    }
    let total_sig: f64 = x.iter().map(|v| v * v).sum();
    let floor = (total_sig / x.len() as f64 * 10f64.powf(PROXY_FLOOR_REL_DB / 10.0)).max(PROXY_FLOOR_POWER);
    let mut total_dist = 0.0;
    let mut seg_sum = 0.0;
    let mut frames = 0usize;
    for (xs, ws) in x.chunks(PROXY_FRAME).zip(x_w.chunks(PROXY_FRAME)) {
        let sig: f64 = xs.iter().map(|v| v * v).sum();
        let dist: f64 = xs.iter().zip(ws).map(|(a, b)| (b - a) * (b - a)).sum();
        total_dist += dist;
        seg_sum += dist / sig.max(floor * xs.len() as f64);
        frames += 1;
    }
    let global = total_dist / total_sig.max(PROXY_FLOOR_POWER * x.len() as f64);
    Ok(global.max(seg_sum / frames as f64))
}

/// Maps a distortion index in dB onto the grade scale.
pub fn grade_from_index_db(d: f64) -> f64 {
    if d == f64::NEG_INFINITY {
        return 0.0;
    }
    let (d0, g0) = PROXY_CURVE[0];
    if d <= d0 {
        return g0 * 10f64.powf((d - d0) / 10.0);
    }
    for pair in PROXY_CURVE.windows(2) {
        let ((da, ga), (db, gb)) = (pair[0], pair[1]);
        if d <= db {
            return ga + (gb - ga) * (d - da) / (db - da);
        }
    }
    -4.0
}

/// Deterministic stand-in for an objective difference grade, in `[-4, 0]`;
/// 0 only for a distortion-free signal.
pub fn odg_proxy(x: &AudioClip, x_w: &AudioClip) -> Result<f64> {
    let index = distortion_index(&x.samples, &x_w.samples)?;
    let db = if index == 0.0 { f64::NEG_INFINITY } else { 10.0 * index.log10() };
    Ok(grade_from_index_db(db).clamp(-4.0, 0.0))
}

/// A perceptual grade in `[-4, 0]`, 0 meaning imperceptible.
pub trait QualityMetric: Send + Sync {
    fn name(&self) -> &str;
    fn grade(&self, x: &AudioClip, x_w: &AudioClip) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdgProxy;

impl QualityMetric for OdgProxy {
    fn name(&self) -> &str {
        "odg-proxy"
    }

    fn grade(&self, x: &AudioClip, x_w: &AudioClip) -> Result<f64> {
        odg_proxy(x, x_w)
    }
}

/// Runs an external grader. The template's `{ref}` and `{test}` are replaced
/// by paths of 24-bit WAV files; the last line of standard output must be the
/// grade.
#[derive(Debug, Clone)]
pub struct ExternalMetric {
    pub command: String,
}

impl QualityMetric for ExternalMetric {
    fn name(&self) -> &str {
        "external"
    }

    fn grade(&self, x: &AudioClip, x_w: &AudioClip) -> Result<f64> {
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let r = dir.path().join("ref.wav");
        let t = dir.path().join("test.wav");
        write_wav(x, &r, 24)?;
        write_wav(x_w, &t, 24)?;
        let cmd = self
            .command
            .replace("{ref}", &shell_path(&r))
            .replace("{test}", &shell_path(&t));
        let stdout = run_shell(&cmd)?;
        let value: f64 = stdout
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| Error::ExternalTool(format!("metric printed no number: {stdout:?}")))?;
        if !(-4.0..=0.0).contains(&value) {
            return Err(Error::ExternalTool(format!("metric grade {value} outside [-4, 0]")));
        }
        Ok(value)
    }
}

pub(crate) fn shell_path(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', "'\\''"))
}

/// Runs `sh -c cmd`, returning stdout or an error carrying stderr.
pub(crate) fn run_shell(cmd: &str) -> Result<String> {
    let out = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .output()
        .map_err(|e| Error::ExternalTool(format!("cannot spawn shell: {e}")))?;
    if !out.status.success() {
        return Err(Error::ExternalTool(format!(
            "`{cmd}` exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub dwr_db: f64,
    pub grade: f64,
    pub metric_name: String,
}

pub fn quality_report(x: &AudioClip, x_w: &AudioClip, metric: &dyn QualityMetric) -> Result<QualityReport> {
    Ok(QualityReport {
        dwr_db: dwr(x, x_w)?,
        grade: metric.grade(x, x_w)?,
        metric_name: metric.name().to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerConfig {
    pub target_grade: f64,
    pub tolerance: f64,
    pub alpha_init: f64,
    pub step_up: f64,
    pub step_down: f64,
    pub max_iterations: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            target_grade: -1.0,
            tolerance: 0.1,
            alpha_init: 0.1,
            step_up: 1.25,
            step_down: 0.7,
            max_iterations: 30,
            alpha_min: 1e-6,
            alpha_max: 0.99,
        }
    }
}

impl TunerConfig {
    fn validate(&self) -> Result<()> {
        let ok = (-4.0..=0.0).contains(&self.target_grade)
            && self.tolerance >= 0.0
            && self.step_up > 1.0
            && self.step_down > 0.0
            && self.step_down < 1.0
            && self.alpha_min > 0.0
            && self.alpha_min < self.alpha_max
            && self.alpha_max < 1.0
            && (self.alpha_min..=self.alpha_max).contains(&self.alpha_init)
            && self.max_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid tuner settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneAction {
    Increase,
    Decrease,
    Accept,
}

/// One embed-and-measure iteration of the tuner.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneStep {
    pub alpha: f64,
    pub grade: f64,
    pub dwr_db: f64,
    pub recovery: f64,
    pub action: TuneAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    WithinTolerance,
    AlphaBound,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct Tuned {
    pub config: EmbedConfig,
    pub report: QualityReport,
    pub recovery: f64,
    pub embedded: Embedded,
    pub trace: Vec<TuneStep>,
    pub stop: StopReason,
}

/// Searches for the strength whose grade lands within `tolerance` of the
/// target while every watermarked patch is still re-selected by the
/// extractor. Steps are multiplicative and shrink (square root) on every
/// change of direction.
pub fn tune_alpha(
    clip: &AudioClip,
    payload: &Payload,
    config: &EmbedConfig,
    tuner: &TunerConfig,
    metric: &dyn QualityMetric,
) -> Result<Tuned> {
    tuner.validate()?;
    let mut alpha = tuner.alpha_init;
    let (mut up, mut down) = (tuner.step_up, tuner.step_down);
    let mut last: Option<TuneAction> = None;
    let mut trace = Vec::new();
    // best feasible candidate so far: (alpha, embedding, report, recovery)
    let mut best: Option<(f64, Embedded, QualityReport, f64)> = None;
    let lower = tuner.target_grade - tuner.tolerance;
    let upper = tuner.target_grade + tuner.tolerance;
    let mut stop = StopReason::MaxIterations;

    for _ in 0..tuner.max_iterations {
        let cfg = EmbedConfig { alpha, ..config.clone() };
        let embedded = embed(clip, payload, &cfg)?;
        let report = quality_report(clip, &embedded.watermarked, metric)?;
        let recovery = feature_recovery(&embedded.record, &embedded.watermarked)?;

        let feasible = recovery >= 1.0 && report.grade >= lower;
        let action = if recovery < 1.0 || report.grade < lower {
            TuneAction::Decrease
        } else if report.grade > upper {
            TuneAction::Increase
        } else {
            TuneAction::Accept
        };
        trace.push(TuneStep {
            alpha,
            grade: report.grade,
            dwr_db: report.dwr_db,
            recovery,
            action,
        });
        if feasible && best.as_ref().map_or(true, |b| alpha > b.0) {
            best = Some((alpha, embedded, report, recovery));
        }
        if action == TuneAction::Accept {
            stop = StopReason::WithinTolerance;
            break;
        }
        if last.is_some_and(|l| l != action) {
            up = up.sqrt();
            down = down.sqrt();
        }
        last = Some(action);
        let next = match action {
            TuneAction::Increase => (alpha * up).min(tuner.alpha_max),
            _ => (alpha * down).max(tuner.alpha_min),
        };
        if next == alpha {
            stop = StopReason::AlphaBound;
            break;
        }
        alpha = next;
    }

    let Some((alpha, embedded, report, recovery)) = best else {
        return Err(Error::Tuning { trace });
    };
    Ok(Tuned {
        config: EmbedConfig { alpha, ..config.clone() },
        report,
        recovery,
        embedded,
        trace,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clip(v: Vec<f64>) -> AudioClip {
        AudioClip::new(v, 44100)
    }

    #[test]
    fn dwr_examples() {
        // |x|^2 = 100, |x_w - x|^2 = 0.01 -> 40 dB
        let x = clip(vec![10.0, 0.0]);
        let xw = clip(vec![10.0, 0.1]);
        assert!((dwr(&x, &xw).unwrap() - 40.0).abs() < 1e-9);
        assert_eq!(dwr(&x, &x).unwrap(), f64::INFINITY);
        assert!(dwr(&x, &clip(vec![1.0])).is_err());
    }

    #[test]
    fn dwr_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x: Vec<f64> = (0..500).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xw: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-0.01..0.01)).collect();
        let base = dwr_samples(&x, &xw).unwrap();
        for c in [-3.0, 0.2, 7.5] {
            let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
            let ws: Vec<f64> = xw.iter().map(|v| v * c).collect();
            assert!((dwr_samples(&xs, &ws).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn detection_rate_examples() {
        let w = Payload::random(32, 1).unwrap();
        assert_eq!(detection_rate(&w, &w).unwrap(), 100.0);
        assert_eq!(detection_rate(&w, &w.negated()).unwrap(), 0.0);
        let mut bits = w.bits().to_vec();
        bits[7] = -bits[7];
        let one_off = Payload::new(bits).unwrap();
        assert_eq!(detection_rate(&w, &one_off).unwrap(), 96.875);
        assert!(detection_rate(&w, &Payload::random(31, 1).unwrap()).is_err());
    }

    #[test]
    fn snr_examples() {
        let c = clip(vec![1.0, -1.0, 1.0, -1.0]);
        assert!((snr_db(&c, 0.001).unwrap() - 30.0).abs() < 1e-9);
        assert!(snr_db(&c, 1.0).unwrap().abs() < 1e-12);
        assert!(matches!(snr_db(&c, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn proxy_zero_iff_identical_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..8192).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let a = clip(x.clone());
        assert_eq!(odg_proxy(&a, &a).unwrap(), 0.0);
        let mut tiny = x.clone();
        tiny[100] += 1e-12;
        let g = odg_proxy(&a, &clip(tiny)).unwrap();
        assert!(g < 0.0 && g > -1e-6);
        let wrecked: Vec<f64> = x.iter().map(|v| -v * 3.0).collect();
        assert_eq!(odg_proxy(&a, &clip(wrecked)).unwrap(), -4.0);
    }

    #[test]
    fn proxy_monotone_along_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..20_000).map(|i| 0.3 * (i as f64 * 0.05).sin()).collect();
        let d: Vec<f64> = (0..20_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = clip(x.clone());
        let mut prev = 0.0;
        for k in 0..60 {
            let t = 1e-6 * 1.3f64.powi(k);
            let xw: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let g = odg_proxy(&a, &clip(xw)).unwrap();
            assert!(g <= prev, "step {k}: {g} > {prev}");
            assert!((-4.0..=0.0).contains(&g));
            prev = g;
        }
    }

    #[test]
    fn proxy_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..10_000).map(|i| 0.2 * (i as f64 * 0.01).sin() * (i as f64 * 3e-4).sin()).collect();
        let xw: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-1e-3..1e-3)).collect();
        let base = odg_proxy(&clip(x.clone()), &clip(xw.clone())).unwrap();
        for c in [0.5, 1.8] {
            let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
            let ws: Vec<f64> = xw.iter().map(|v| v * c).collect();
            assert!((odg_proxy(&clip(xs), &clip(ws)).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn gross_distortion_grades_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..20_000).map(|i| 0.3 * (i as f64 * 0.02).sin()).collect();
        // white noise at 9 dB below the signal
        let sigma = (0.045f64 / 10f64.powf(0.9)).sqrt() * 3f64.sqrt();
        let xw: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-sigma..sigma)).collect();
        let (a, b) = (clip(x), clip(xw));
        assert!(dwr(&a, &b).unwrap() < 10.0);
        assert!(odg_proxy(&a, &b).unwrap() <= -3.0);
    }

    #[test]
    fn curve_is_monotone() {
        let mut prev = 0.0;
        for i in 0..2000 {
            let d = -150.0 + i as f64 * 0.1;
            let g = grade_from_index_db(d);
            assert!(g <= prev + 1e-15);
            prev = g;
        }
    }

    #[test]
    fn external_metric_contract() {
        let x = clip(vec![0.1; 100]);
        let m = ExternalMetric { command: "test -f {ref} && test -f {test} && echo -0.25".into() };
        assert_eq!(m.grade(&x, &x).unwrap(), -0.25);
        let bad = ExternalMetric { command: "echo 3".into() };
        assert!(matches!(bad.grade(&x, &x), Err(Error::ExternalTool(_))));
        let fails = ExternalMetric { command: "exit 1".into() };
        assert!(matches!(fails.grade(&x, &x), Err(Error::ExternalTool(_))));
    }
}
