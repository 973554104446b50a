//! Deterministic music-like test material and a demo logo.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio_io::AudioClip;
use crate::payload::Payload;

pub const SAMPLE_RATE: u32 = 44_100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    /// Plucked melody over a bass line, with rests.
    Piano,
    /// Slow chords with vibrato.
    Strings,
    /// Drum pattern and bass.
    Beat,
    /// Melody, pad and light percussion.
    Ensemble,
}

impl Style {
    pub const ALL: [Style; 4] = [Style::Piano, Style::Strings, Style::Beat, Style::Ensemble];

    pub fn name(self) -> &'static str {
        match self {
            Style::Piano => "piano",
            Style::Strings => "strings",
            Style::Beat => "beat",
            Style::Ensemble => "ensemble",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusClip {
    pub id: String,
    pub clip: AudioClip,
}

/// A-minor pentatonic degrees in semitones above A.
const SCALE: [i32; 5] = [0, 3, 5, 7, 10];

fn midi_hz(note: i32) -> f64 {
    440.0 * 2f64.powf(f64::from(note - 69) / 12.0)
}

fn scale_note(rng: &mut ChaCha20Rng, base: i32, octaves: i32) -> i32 {
    let deg = SCALE[rng.gen_range(0..SCALE.len())];
    base + deg + 12 * rng.gen_range(0..octaves)
}

struct Track {
    buf: Vec<f64>,
    rate: f64,
}

impl Track {
    fn new(samples: usize) -> Self {
        Self {
            buf: vec![0.0; samples],
            rate: f64::from(SAMPLE_RATE),
        }
    }

    fn span(&self, start: f64, dur: f64) -> (usize, usize) {
        let a = (start * self.rate) as usize;
        let b = ((start + dur) * self.rate) as usize;
        (a.min(self.buf.len()), b.min(self.buf.len()))
    }

    /// Harmonic note with exponential decay (`decay` in 1/s) or a sustained
    /// envelope with attack/release when `decay` is zero.
    #[allow(clippy::too_many_arguments)]
    fn note(&mut self, hz: f64, start: f64, dur: f64, amp: f64, harmonics: usize, rolloff: f64, decay: f64, vibrato: f64) {
        let (a, b) = self.span(start, dur);
        let attack = if decay > 0.0 { 0.005 } else { 0.15 };
        let release = if decay > 0.0 { 0.03 } else { 0.3 };
        let nyq = self.rate / 2.0;
        for (k, n) in (a..b).enumerate() {
            let t = k as f64 / self.rate;
            let mut env = (t / attack).min(1.0) * ((dur - t) / release).clamp(0.0, 1.0);
            if decay > 0.0 {
                env *= (-decay * t).exp();
            }
            let f0 = hz * (1.0 + vibrato * (TAU * 5.0 * t).sin());
            let mut v = 0.0;
            for h in 1..=harmonics {
                let f = f0 * h as f64;
                if f >= nyq {
                    break;
                }
                // Higher partials die faster.
                let hd = if decay > 0.0 { (-(h as f64 - 1.0) * decay * 0.5 * t).exp() } else { 1.0 };
                v += rolloff.powi(h as i32 - 1) * hd * (TAU * f * t).sin();
            }
            self.buf[n] += amp * env * v;
        }
    }

    fn kick(&mut self, start: f64, amp: f64) {
        let (a, b) = self.span(start, 0.35);
        let mut phase = 0.0;
        for (k, n) in (a..b).enumerate() {
            let t = k as f64 / self.rate;
            let f = 50.0 + 90.0 * (-t * 30.0).exp();
            phase += TAU * f / self.rate;
            self.buf[n] += amp * (-t * 12.0).exp() * phase.sin();
        }
    }

    /// Noise burst; `bright` in (0, 1) emphasises high frequencies.
    fn burst(&mut self, rng: &mut ChaCha20Rng, start: f64, dur: f64, amp: f64, decay: f64, bright: f64) {
        let (a, b) = self.span(start, dur);
        let mut prev = 0.0;
        for (k, n) in (a..b).enumerate() {
            let t = k as f64 / self.rate;
            let w: f64 = StandardNormal.sample(rng);
            let v = w - bright * prev;
            prev = w;
            self.buf[n] += amp * (-decay * t).exp() * v;
        }
    }
}

fn piano(tr: &mut Track, rng: &mut ChaCha20Rng, secs: f64, level: f64) {
    let beat = 60.0 / rng.gen_range(84.0..112.0);
    let mut t = 0.0;
    while t < secs {
        // phrase of 4..8 notes then a rest
        let len = rng.gen_range(4..9);
        for _ in 0..len {
            let dur = beat * [0.5, 1.0, 1.0, 2.0][rng.gen_range(0..4)];
            let note = scale_note(rng, 69, 2);
            let amp = level * rng.gen_range(0.5..1.0);
            tr.note(midi_hz(note), t, dur * 1.6, amp, 8, 0.55, 3.0, 0.0);
            t += dur;
        }
        let bass = scale_note(rng, 45, 1);
        tr.note(midi_hz(bass), t - beat * 4.0, beat * 4.0, level * 0.7, 4, 0.5, 1.0, 0.0);
        t += beat * rng.gen_range(1.0..3.0);
    }
}

fn strings(tr: &mut Track, rng: &mut ChaCha20Rng, secs: f64, level: f64) {
    let mut t = 0.0;
    while t < secs {
        let dur = rng.gen_range(1.5..3.0);
        let root = scale_note(rng, 52, 1);
        for (i, iv) in [0, 7, 12, 15].iter().enumerate() {
            if i == 3 && rng.gen::<bool>() {
                continue;
            }
            let amp = level * 0.5 * 0.8f64.powi(i as i32);
            tr.note(midi_hz(root + iv), t, dur + 0.2, amp, 6, 0.6, 0.0, 0.004);
        }
        t += dur;
        if rng.gen_range(0.0..1.0) < 0.3 {
            t += rng.gen_range(0.3..0.9);
        }
    }
}

fn beat(tr: &mut Track, rng: &mut ChaCha20Rng, secs: f64, level: f64) {
    let step = 60.0 / rng.gen_range(90.0..126.0) / 2.0;
    let mut i = 0usize;
    let mut t = 0.0;
    // 0 full kit, 1 kick and bass only, 2 hats and bass
    let mut section = 0;
    while t < secs {
        if i % 16 == 0 {
            section = [0, 0, 1, 2][rng.gen_range(0..4)];
        }
        let accent = if i % 4 == 0 { 1.0 } else { rng.gen_range(0.4..0.8) };
        match (i % 8, section) {
            (0 | 5, 0 | 1) => tr.kick(t, level * 1.2),
            (2 | 6, 0) => tr.burst(rng, t, 0.15, level * 0.25, 25.0, 0.2),
            _ => {}
        }
        if section != 1 && rng.gen_range(0.0..1.0) < 0.7 {
            tr.burst(rng, t, 0.05, level * 0.06 * accent, 80.0, 0.95);
        }
        if i % 4 == 0 {
            let n = scale_note(rng, 33, 2);
            tr.note(midi_hz(n), t, step * 3.0, level * 0.6 * accent, 5, 0.45, 2.5, 0.0);
        }
        t += step;
        i += 1;
    }
}

fn ensemble(tr: &mut Track, rng: &mut ChaCha20Rng, secs: f64, level: f64) {
    piano(tr, rng, secs, level * 0.8);
    strings(tr, rng, secs, level * 0.35);
    let step = 60.0 / 100.0;
    let mut t = 0.0;
    while t < secs {
        tr.burst(rng, t, 0.04, level * 0.05, 90.0, 0.9);
        t += step;
    }
}

/// Renders `secs` seconds of `style`, normalized to `rms` (peaks held below
/// 0.95) over a faint noise floor.
pub fn synth(style: Style, secs: f64, seed: u64, rms: f64) -> AudioClip {
    let n = (secs * f64::from(SAMPLE_RATE)).round() as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut tr = Track::new(n);
    match style {
        Style::Piano => piano(&mut tr, &mut rng, secs, 0.3),
        Style::Strings => strings(&mut tr, &mut rng, secs, 0.3),
        Style::Beat => beat(&mut tr, &mut rng, secs, 0.3),
        Style::Ensemble => ensemble(&mut tr, &mut rng, secs, 0.3),
    }
    let mut samples = reverb(&tr.buf, 0.3);
    normalize(&mut samples, rms);
    for s in samples.iter_mut() {
        let w: f64 = StandardNormal.sample(&mut rng);
        *s += NOISE_FLOOR * w;
    }
    AudioClip::new(samples, SAMPLE_RATE)
}

/// Standard deviation of the added noise floor (about −60 dBFS).
pub const NOISE_FLOOR: f64 = 1e-3;

/// Schroeder reverberator: four parallel feedback combs into two allpasses,
/// mixed with the dry signal.
fn reverb(dry: &[f64], wet: f64) -> Vec<f64> {
    let mut acc = vec![0.0; dry.len()];
    for (delay, gain) in [(1557, 0.84), (1617, 0.83), (1491, 0.85), (1422, 0.86)] {
        let mut y = vec![0.0; dry.len()];
        for n in 0..dry.len() {
            let fb = if n >= delay { y[n - delay] } else { 0.0 };
            y[n] = dry[n] + gain * fb;
        }
        acc.iter_mut().zip(&y).for_each(|(a, v)| *a += v / 4.0);
    }
    for (delay, g) in [(225, 0.5), (556, 0.5)] {
        let mut y = vec![0.0; acc.len()];
        for n in 0..acc.len() {
            let xd = if n >= delay { acc[n - delay] } else { 0.0 };
            let yd = if n >= delay { y[n - delay] } else { 0.0 };
            y[n] = -g * acc[n] + xd + g * yd;
        }
        acc = y;
    }
    dry.iter().zip(&acc).map(|(d, r)| (1.0 - wet) * d + wet * r).collect()
}

fn normalize(samples: &mut [f64], rms: f64) {
    let power = samples.iter().map(|v| v * v).sum::<f64>() / samples.len().max(1) as f64;
    if power == 0.0 {
        return;
    }
    let mut g = rms / power.sqrt();
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak * g > 0.95 {
        g = 0.95 / peak;
    }
    samples.iter_mut().for_each(|v| *v *= g);
}

/// Four 10 s clips, one per style.
pub fn desk_corpus() -> Vec<CorpusClip> {
    Style::ALL
        .iter()
        .enumerate()
        .map(|(i, &style)| CorpusClip {
            id: style.name().to_string(),
            clip: synth(style, 10.0, 1000 + i as u64, 0.18),
        })
        .collect()
}

/// A long clip built from 20 s sections cycling through the styles.
pub fn long_clip(secs: f64, seed: u64) -> AudioClip {
    let section = 20.0;
    let total = (secs * f64::from(SAMPLE_RATE)).round() as usize;
    let mut samples = Vec::with_capacity(total);
    let mut k = 0u64;
    while samples.len() < total {
        let style = Style::ALL[(k % 4) as usize];
        let part = synth(style, section, seed.wrapping_add(k), 0.18);
        samples.extend_from_slice(&part.samples);
        k += 1;
    }
    samples.truncate(total);
    AudioClip::new(samples, SAMPLE_RATE)
}

/// 32x32 demo logo: a ring around a plus sign.
pub fn demo_logo() -> Payload {
    let n = 32usize;
    let c = (n as f64 - 1.0) / 2.0;
    let bits = (0..n * n)
        .map(|i| {
            let (r, col) = ((i / n) as f64, (i % n) as f64);
            let d = ((r - c).powi(2) + (col - c).powi(2)).sqrt();
            let ring = (11.0..=14.5).contains(&d);
            let plus = ((r - c).abs() < 2.0 || (col - c).abs() < 2.0) && d < 8.5;
            if ring || plus {
                1
            } else {
                -1
            }
        })
        .collect();
    Payload::logo(bits, n, n).expect("logo dimensions are consistent")
}
