//! Robustness matrix: every clip and scheme variant is embedded once (tuned
//! or fixed strength), then run through each attack and scored.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{bitrate_to_strength, Attack};
use crate::audio_io::AudioClip;
use crate::config::{EmbedConfig, Scheme};
use crate::corpus::CorpusClip;
use crate::error::{Error, Result};
use crate::payload::{render_pbm, Payload};
use crate::quality::{detection_rate, quality_report, tune_alpha, QualityMetric, TunerConfig};
use crate::ss::{embed, extract, feature_recovery, Embedded};
use crate::tf::TransformKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub scheme: Scheme,
    pub transform: TransformKind,
}

impl Variant {
    pub fn label(&self) -> String {
        format!("{}-{}", self.transform, self.scheme).to_uppercase()
    }
}

/// STFT-SS, STFT-ISS and STCT-ISS.
pub const STANDARD_VARIANTS: [Variant; 3] = [
    Variant { scheme: Scheme::Ss, transform: TransformKind::Stft },
    Variant { scheme: Scheme::Iss, transform: TransformKind::Stft },
    Variant { scheme: Scheme::Iss, transform: TransformKind::Stct },
];

/// Control plus the eight table attacks; compression through the built-in
/// surrogate at the 128, 96 and 64 kbps strengths.
pub fn standard_attacks(noise_seed: u64) -> Vec<Attack> {
    vec![
        Attack::None,
        Attack::Requantize { bits: 8 },
        Attack::Awgn { snr_db: 50.0, seed: noise_seed },
        Attack::Awgn { snr_db: 30.0, seed: noise_seed },
        Attack::AmplitudeScale { factor: 1.2, clip: false },
        Attack::AmplitudeScale { factor: 1.8, clip: false },
        Attack::CompressProxy { strength: bitrate_to_strength(128.0) },
        Attack::CompressProxy { strength: bitrate_to_strength(96.0) },
        Attack::CompressProxy { strength: bitrate_to_strength(64.0) },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaPolicy {
    Fixed(f64),
    Tuned(TunerConfig),
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub base: EmbedConfig,
    pub variants: Vec<Variant>,
    pub attacks: Vec<Attack>,
    pub alpha: AlphaPolicy,
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            base: EmbedConfig::default(),
            variants: STANDARD_VARIANTS.to_vec(),
            attacks: standard_attacks(1),
            alpha: AlphaPolicy::Tuned(TunerConfig::default()),
            parallel: true,
        }
    }
}

/// One (clip, variant) embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedSummary {
    pub clip_id: String,
    pub variant: Variant,
    pub alpha: f64,
    pub dwr_db: f64,
    pub quality_grade: f64,
    pub recovery: f64,
    pub error: Option<String>,
}

/// One CSV line: a (clip, variant, attack) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub transform: TransformKind,
    pub attack: String,
    pub param: f64,
    pub clip_id: String,
    pub dr_percent: Option<f64>,
    pub dwr_db: Option<f64>,
    pub quality_grade: Option<f64>,
    pub seed: Option<u64>,
    #[serde(skip)]
    pub error: Option<String>,
    /// Extracted bits, kept for logo rendering.
    #[serde(skip)]
    pub recovered: Option<Vec<i8>>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub config: EmbedConfig,
    pub metric_name: String,
    pub embeddings: Vec<EmbedSummary>,
    pub rows: Vec<BenchRow>,
}

fn embed_for(
    clip: &AudioClip,
    payload: &Payload,
    config: &EmbedConfig,
    policy: &AlphaPolicy,
    metric: &dyn QualityMetric,
) -> Result<(Embedded, f64, f64)> {
    match policy {
        AlphaPolicy::Fixed(alpha) => {
            let cfg = EmbedConfig { alpha: *alpha, ..config.clone() };
            let embedded = embed(clip, payload, &cfg)?;
            let grade = quality_report(clip, &embedded.watermarked, metric)?.grade;
            let recovery = feature_recovery(&embedded.record, &embedded.watermarked)?;
            Ok((embedded, grade, recovery))
        }
        AlphaPolicy::Tuned(tuner) => {
            let t = tune_alpha(clip, payload, config, tuner, metric)?;
            Ok((t.embedded, t.report.grade, t.recovery))
        }
    }
}

fn run_job(
    item: &CorpusClip,
    payload: &Payload,
    variant: Variant,
    cfg: &BenchConfig,
    metric: &dyn QualityMetric,
) -> (EmbedSummary, Vec<BenchRow>) {
    let config = EmbedConfig {
        scheme: variant.scheme,
        transform: variant.transform,
        bits: payload.len(),
        ..cfg.base.clone()
    };
    let row = |attack: &Attack, dr: Option<f64>, dwr: Option<f64>, grade: Option<f64>, error: Option<String>| BenchRow {
        scheme: variant.scheme,
        transform: variant.transform,
        attack: attack.kind_name().to_string(),
        param: attack.param(),
        clip_id: item.id.clone(),
        dr_percent: dr,
        dwr_db: dwr,
        quality_grade: grade,
        seed: attack.seed(),
        error,
        recovered: None,
    };
    let (embedded, grade, recovery) = match embed_for(&item.clip, payload, &config, &cfg.alpha, metric) {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            let summary = EmbedSummary {
                clip_id: item.id.clone(),
                variant,
                alpha: f64::NAN,
                dwr_db: f64::NAN,
                quality_grade: f64::NAN,
                recovery: f64::NAN,
                error: Some(msg.clone()),
            };
            let rows = cfg.attacks.iter().map(|a| row(a, None, None, None, Some(msg.clone()))).collect();
            return (summary, rows);
        }
    };
    let used = &embedded.record.config;
    let dwr = embedded.record.dwr_db;
    let rows = cfg
        .attacks
        .iter()
        .map(|attack| {
            let scored = attack
                .apply(&embedded.watermarked)
                .and_then(|attacked| extract(&attacked, used))
                .and_then(|x| Ok((detection_rate(payload, &x.payload)?, x.payload)));
            match scored {
                Ok((dr, got)) => BenchRow {
                    recovered: Some(got.bits().to_vec()),
                    ..row(attack, Some(dr), Some(dwr), Some(grade), None)
                },
                Err(e) => row(attack, None, Some(dwr), Some(grade), Some(e.to_string())),
            }
        })
        .collect();
    let summary = EmbedSummary {
        clip_id: item.id.clone(),
        variant,
        alpha: used.alpha,
        dwr_db: dwr,
        quality_grade: grade,
        recovery,
        error: None,
    };
    (summary, rows)
}

/// Runs the matrix. `payloads` holds one payload per clip, or a single
/// payload shared by all clips. Failures are recorded per cell.
pub fn run_matrix(
    corpus: &[CorpusClip],
    payloads: &[Payload],
    cfg: &BenchConfig,
    metric: &dyn QualityMetric,
) -> Result<BenchReport> {
    if payloads.len() != 1 && payloads.len() != corpus.len() {
        return Err(Error::Config(format!(
            "expected 1 or {} payloads, got {}",
            corpus.len(),
            payloads.len()
        )));
    }
    for a in &cfg.attacks {
        a.validate()?;
    }
    let jobs: Vec<(usize, Variant)> = cfg
        .variants
        .iter()
        .flat_map(|&v| (0..corpus.len()).map(move |i| (i, v)))
        .collect();
    let work = |&(i, v): &(usize, Variant)| {
        let payload = &payloads[if payloads.len() == 1 { 0 } else { i }];
        run_job(&corpus[i], payload, v, cfg, metric)
    };
    // Collection keeps job order regardless of completion order.
    let results: Vec<(EmbedSummary, Vec<BenchRow>)> = if cfg.parallel {
        jobs.par_iter().map(work).collect()
    } else {
        jobs.iter().map(work).collect()
    };
    let mut embeddings = Vec::with_capacity(results.len());
    let mut rows = Vec::new();
    for (summary, r) in results {
        embeddings.push(summary);
        rows.extend(r);
    }
    Ok(BenchReport {
        config: cfg.base.clone(),
        metric_name: metric.name().to_string(),
        embeddings,
        rows,
    })
}

fn attack_label(row: &BenchRow) -> String {
    match row.seed {
        Some(seed) => format!("{} {} (seed {seed})", row.attack, row.param),
        None => format!("{} {}", row.attack, row.param),
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

impl BenchReport {
    /// Rows of one variant, in report order.
    pub fn rows_for(&self, variant: Variant) -> impl Iterator<Item = &BenchRow> {
        self.rows
            .iter()
            .filter(move |r| r.scheme == variant.scheme && r.transform == variant.transform)
    }

    /// Mean DR over clips for one variant and attack cell; `None` if any
    /// clip failed.
    pub fn average_dr(&self, variant: Variant, attack: &Attack) -> Option<f64> {
        let drs: Option<Vec<f64>> = self
            .rows_for(variant)
            .filter(|r| r.attack == attack.kind_name() && r.param == attack.param() && r.seed == attack.seed())
            .map(|r| r.dr_percent)
            .collect();
        let drs = drs?;
        if drs.is_empty() {
            return None;
        }
        Some(drs.iter().sum::<f64>() / drs.len() as f64)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record([
            "scheme",
            "transform",
            "attack",
            "param",
            "clip_id",
            "dr_percent",
            "dwr_db",
            "quality_grade",
            "seed",
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn parse_csv(text: &str) -> Result<Vec<BenchRow>> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        r.deserialize()
            .map(|row| row.map_err(|e| Error::Format(e.to_string())))
            .collect()
    }

    /// Per-variant tables: attacks as rows, clips as columns plus the
    /// average; then strength, DWR and grade per clip.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Robustness report\n");
        let c = &self.config;
        let _ = writeln!(
            s,
            "Frame {}, band {}-{} Hz, patch {}, quality metric `{}`.\n",
            c.frame_length, c.f1_hz, c.f2_hz, c.patch, self.metric_name
        );
        let mut clips: Vec<&str> = Vec::new();
        for e in &self.embeddings {
            if !clips.contains(&e.clip_id.as_str()) {
                clips.push(&e.clip_id);
            }
        }
        let mut variants: Vec<Variant> = Vec::new();
        for e in &self.embeddings {
            if !variants.contains(&e.variant) {
                variants.push(e.variant);
            }
        }
        for v in variants {
            let _ = writeln!(s, "## {}\n", v.label());
            let _ = writeln!(s, "| Attack | {} | Average |", clips.join(" | "));
            let _ = writeln!(s, "|---|{}---|", "---|".repeat(clips.len()));
            let rows: Vec<&BenchRow> = self.rows_for(v).collect();
            let mut labels: Vec<String> = Vec::new();
            for r in &rows {
                let l = attack_label(r);
                if !labels.contains(&l) {
                    labels.push(l);
                }
            }
            for label in &labels {
                let cells: Vec<Option<f64>> = clips
                    .iter()
                    .map(|id| {
                        rows.iter()
                            .find(|r| r.clip_id == *id && attack_label(r) == *label)
                            .and_then(|r| r.dr_percent)
                    })
                    .collect();
                let avg = cells
                    .iter()
                    .copied()
                    .collect::<Option<Vec<f64>>>()
                    .map(|v| v.iter().sum::<f64>() / v.len() as f64);
                let body: Vec<String> = cells.iter().map(|c| fmt_opt(*c, 2)).collect();
                let _ = writeln!(s, "| {label} | {} | {} |", body.join(" | "), fmt_opt(avg, 2));
            }
            let _ = writeln!(s);
            let _ = writeln!(s, "| Embedding | {} |", clips.join(" | "));
            let _ = writeln!(s, "|---|{}", "---|".repeat(clips.len()));
            let pick = |f: &dyn Fn(&EmbedSummary) -> String| -> String {
                clips
                    .iter()
                    .map(|id| {
                        self.embeddings
                            .iter()
                            .find(|e| e.variant == v && e.clip_id == *id)
                            .map_or_else(|| "-".to_string(), f)
                    })
                    .collect::<Vec<_>>()
                    .join(" | ")
            };
            let _ = writeln!(s, "| alpha | {} |", pick(&|e| format!("{:.5}", e.alpha)));
            let _ = writeln!(s, "| DWR (dB) | {} |", pick(&|e| format!("{:.2}", e.dwr_db)));
            let _ = writeln!(s, "| Grade | {} |", pick(&|e| format!("{:.3}", e.quality_grade)));
            let _ = writeln!(s, "| Recovery | {} |", pick(&|e| format!("{:.3}", e.recovery)));
            let _ = writeln!(s);
            for e in self.embeddings.iter().filter(|e| e.variant == v) {
                if let Some(err) = &e.error {
                    let _ = writeln!(s, "- `{}` failed: {err}", e.clip_id);
                }
            }
            for r in rows.iter().filter(|r| r.error.is_some()) {
                if self.embeddings.iter().any(|e| e.variant == v && e.clip_id == r.clip_id && e.error.is_none()) {
                    let _ = writeln!(s, "- `{}` {}: {}", r.clip_id, attack_label(r), r.error.as_deref().unwrap_or(""));
                }
            }
        }
        s
    }

    /// Writes `report.csv` and `report.md` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("report.csv");
        std::fs::write(&csv, self.to_csv()?).map_err(|e| Error::io(&csv, e))?;
        let md = dir.join("report.md");
        std::fs::write(&md, self.to_markdown()).map_err(|e| Error::io(&md, e))
    }
}

/// Writes a ±1 bitmap as plain PBM (+1 → black, row-major).
pub fn render_logo(bits: &[i8], rows: usize, cols: usize, path: impl AsRef<Path>) -> Result<()> {
    if rows * cols != bits.len() {
        return Err(Error::Shape(format!(
            "{rows}x{cols} bitmap needs {} bits, got {}",
            rows * cols,
            bits.len()
        )));
    }
    let path = path.as_ref();
    std::fs::write(path, render_pbm(bits, rows, cols)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::OdgProxy;

    fn tiny_corpus() -> Vec<CorpusClip> {
        (0..2)
            .map(|k| CorpusClip {
                id: format!("c{k}"),
                clip: AudioClip::new(
                    (0..44_100 * 2)
                        .map(|i| {
                            let t = i as f64 / 44_100.0;
                            0.2 * (t * 330.0 * (k + 1) as f64 * std::f64::consts::TAU).sin() * (t * 1.3).sin()
                                + 1e-3 * ((i * 7919 % 1000) as f64 / 500.0 - 1.0)
                        })
                        .collect(),
                    44_100,
                ),
            })
            .collect()
    }

    fn config() -> BenchConfig {
        BenchConfig {
            base: EmbedConfig { bits: 8, ..EmbedConfig::default() },
            attacks: standard_attacks(3),
            alpha: AlphaPolicy::Fixed(0.01),
            ..BenchConfig::default()
        }
    }

    #[test]
    fn cardinality_and_control() {
        let corpus = tiny_corpus();
        let payload = Payload::random(8, 1).unwrap();
        let cfg = BenchConfig { variants: vec![STANDARD_VARIANTS[1]], ..config() };
        let report = run_matrix(&corpus, &[payload], &cfg, &OdgProxy).unwrap();
        assert_eq!(report.rows.len(), 2 * 9);
        for r in &report.rows {
            let dr = r.dr_percent.unwrap();
            assert!((0.0..=100.0).contains(&dr));
        }
        let control = report.average_dr(STANDARD_VARIANTS[1], &Attack::None).unwrap();
        assert_eq!(control, 100.0);
    }

    #[test]
    fn csv_round_trip_and_determinism() {
        let corpus = tiny_corpus();
        let payload = Payload::random(8, 1).unwrap();
        let a = run_matrix(&corpus, &[payload.clone()], &config(), &OdgProxy).unwrap();
        let b = run_matrix(&corpus, &[payload], &BenchConfig { parallel: false, ..config() }, &OdgProxy).unwrap();
        let csv = a.to_csv().unwrap();
        assert_eq!(csv, b.to_csv().unwrap());
        assert_eq!(a.to_markdown(), b.to_markdown());
        let parsed = BenchReport::parse_csv(&csv).unwrap();
        assert_eq!(parsed.len(), a.rows.len());
        for (p, r) in parsed.iter().zip(&a.rows) {
            assert_eq!(p.dr_percent, r.dr_percent);
            assert_eq!(p.dwr_db, r.dwr_db);
            assert_eq!(p.quality_grade, r.quality_grade);
            assert_eq!(p.param, r.param);
            assert_eq!(p.seed, r.seed);
        }
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let payload = Payload::random(8, 1).unwrap();
        let report = run_matrix(&[], &[payload], &config(), &OdgProxy).unwrap();
        assert_eq!(
            report.to_csv().unwrap(),
            "scheme,transform,attack,param,clip_id,dr_percent,dwr_db,quality_grade,seed\n"
        );
    }

    #[test]
    fn failures_stay_in_cells() {
        let mut corpus = tiny_corpus();
        corpus.push(CorpusClip { id: "short".into(), clip: AudioClip::new(vec![0.1; 2048], 44_100) });
        let payload = Payload::random(8, 1).unwrap();
        let report = run_matrix(&corpus, &[payload], &config(), &OdgProxy).unwrap();
        let short: Vec<_> = report.rows.iter().filter(|r| r.clip_id == "short").collect();
        assert!(!short.is_empty());
        assert!(short.iter().all(|r| r.dr_percent.is_none() && r.error.is_some()));
        assert!(report.to_markdown().contains("`short` failed"));
    }

    #[test]
    fn logo_rendering() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("logo.pbm");
        render_logo(&[1; 1024], 32, 32, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let p = Payload::parse_pbm(&text).unwrap();
        assert!(p.bits().iter().all(|&b| b == 1));
        assert!(matches!(render_logo(&[1; 10], 3, 3, &path), Err(Error::Shape(_))));
    }
}
