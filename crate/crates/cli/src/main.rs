mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tfmark::attack::{bitrate_to_strength, Attack};
use tfmark::bench::{render_logo, run_matrix, standard_attacks, AlphaPolicy, BenchConfig, STANDARD_VARIANTS};
use tfmark::corpus::{demo_logo, desk_corpus, long_clip, CorpusClip};
use tfmark::payload::PayloadOrigin;
use tfmark::quality::{detection_rate, quality_report, ExternalMetric, QualityMetric, TuneAction};
use tfmark::ss::{analyze, embed, extract};
use tfmark::{read_wav, tune_alpha, write_wav, EmbedConfig, EmbeddingRecord, Error, OdgProxy, Payload};

use settings::{FileConfig, Shared};

#[derive(Parser, Debug)]
#[command(name = "tfmark", version, about = "Time-frequency patch spread-spectrum audio watermarking")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embed a payload into a WAV file
    Embed {
        #[arg(long = "in")]
        input: PathBuf,
        /// Bit text or plain PBM logo
        #[arg(long)]
        payload: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Record file (default: OUT with `.record` appended)
        #[arg(long)]
        record: Option<PathBuf>,
        /// External quality command with {ref} and {test} placeholders
        #[arg(long)]
        quality_cmd: Option<String>,
        /// Output bit depth (default: that of the input)
        #[arg(long)]
        bit_depth: Option<u16>,
    },
    /// Blindly extract a payload from a WAV file
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Take the embedding parameters from a record file
        #[arg(long)]
        record: Option<PathBuf>,
        /// Reference payload; prints the detection rate
        #[arg(long)]
        expected: Option<PathBuf>,
        /// Write the result as a ROWSxCOLS PBM logo
        #[arg(long, value_parser = parse_dims)]
        logo: Option<(usize, usize)>,
    },
    /// Apply one channel attack
    Attack {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        kind: AttackKind,
        /// Requantization depth
        #[arg(long)]
        depth: Option<u32>,
        /// Target SNR in dB
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Amplitude factor
        #[arg(long)]
        factor: Option<f64>,
        /// Hard-limit scaled samples to [-1, 1]
        #[arg(long)]
        clip: bool,
        /// Compression proxy strength in (0, 1]
        #[arg(long)]
        strength: Option<f64>,
        /// Bitrate; maps to a proxy strength unless --codec-cmd is given
        #[arg(long)]
        kbps: Option<u32>,
        /// Encode/decode command with {in}, {out} and {kbps}
        #[arg(long)]
        codec_cmd: Option<String>,
    },
    /// Search for the embedding strength that meets the quality target
    Tune {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        payload: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quality_cmd: Option<String>,
    },
    /// Run the robustness matrix over a directory of WAV files
    Bench {
        /// Directory of WAV files (omit with --synthetic)
        corpus: Option<PathBuf>,
        /// Use the built-in synthetic clips
        #[arg(long)]
        synthetic: bool,
        #[arg(long)]
        out: PathBuf,
        /// Payload shared by all clips (default: random bits)
        #[arg(long)]
        payload: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        payload_seed: u64,
        #[arg(long, default_value_t = 1)]
        noise_seed: u64,
        /// Adds real-codec rows at 128 and 64 kbps
        #[arg(long)]
        codec_cmd: Option<String>,
        #[arg(long)]
        quality_cmd: Option<String>,
        /// Run cells one after another
        #[arg(long)]
        serial: bool,
    },
    /// Dump the patch-energy grid and the selected patches as CSV
    Inspect {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output CSV (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cross-check the selection against a record file
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Write the synthetic test clips and the demo logo
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Also write a long clip of this many seconds
        #[arg(long)]
        long: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AttackKind {
    Requantize,
    Awgn,
    AmplitudeScale,
    CompressProxy,
    ExternalCodec,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or("expected ROWSxCOLS")?;
    Ok((r.parse().map_err(|_| "bad rows")?, c.parse().map_err(|_| "bad cols")?))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Format(_) | Error::UnsupportedEncoding(_) | Error::Payload(_) | Error::Io { .. } => 3,
        Error::Capacity { .. } | Error::TooShort(_) => 4,
        Error::ExternalTool(_) | Error::Alignment { .. } => 5,
        Error::Tuning { .. } => 6,
        _ => 2,
    }
}

fn error_class(e: &Error) -> &'static str {
    match exit_code(e) {
        3 => "format",
        4 => "capacity",
        5 => "external-tool",
        6 => "tuning",
        _ => "usage",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", error_class(&e));
            if let Error::Tuning { trace } = &e {
                for s in trace {
                    eprintln!("  alpha={:.6} grade={:.3} dwr={:.2} recovery={:.3}", s.alpha, s.grade, s.dwr_db, s.recovery);
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn metric_for(cmd: &Option<String>) -> Box<dyn QualityMetric> {
    match cmd {
        Some(command) => Box::new(ExternalMetric { command: command.clone() }),
        None => Box::new(OdgProxy),
    }
}

fn default_record(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".record");
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Matches the configured payload length to the payload, unless `--bits`
/// was given and disagrees.
fn fit_bits(shared: &Shared, config: &mut EmbedConfig, payload: &Payload) -> Result<(), Error> {
    match shared.bits {
        Some(b) if b != payload.len() => Err(Error::Config(format!(
            "--bits {b} does not match the {}-bit payload",
            payload.len()
        ))),
        _ => {
            config.bits = payload.len();
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let shared = cli.shared;
    match cli.command {
        Command::Embed { input, payload, out, record, quality_cmd, bit_depth } => {
            let FileConfig { embed: mut config, tuner } = shared.resolve()?;
            let host = read_wav(&input)?.clip;
            let payload = Payload::read(&payload)?;
            fit_bits(&shared, &mut config, &payload)?;
            let capacity = config.capacity(host.len(), host.sample_rate_hz)?;
            if payload.len() > capacity {
                return Err(Error::Capacity { requested: payload.len(), max: capacity });
            }
            let metric = metric_for(&quality_cmd);
            let embedded = if shared.alpha.is_some() {
                embed(&host, &payload, &config)?
            } else {
                tune_alpha(&host, &payload, &config, &tuner, metric.as_ref())?.embedded
            };
            let report = quality_report(&host, &embedded.watermarked, metric.as_ref())?;
            let depth = bit_depth.unwrap_or(host.source_bit_depth);
            let written = write_wav(&embedded.watermarked, &out, depth)?;
            if written.clipped > 0 {
                log::warn!("{} samples clipped on write", written.clipped);
            }
            let record_path = record.unwrap_or_else(|| default_record(&out));
            let mut text = embedded.record.to_kv_text();
            text.push_str(&format!("quality_grade = {}\nquality_metric = {}\n", report.grade, report.metric_name));
            write_text(&record_path, &text)?;
            println!(
                "embedded {} bits (capacity {capacity}) alpha={} DWR={:.2} dB grade={:.3}",
                payload.len(),
                embedded.record.config.alpha,
                report.dwr_db,
                report.grade
            );
        }
        Command::Extract { input, out, record, expected, logo } => {
            let base = match &record {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    FileConfig { embed: EmbeddingRecord::parse_config(&text)?, ..Default::default() }
                }
                None => match &shared.config {
                    Some(path) => FileConfig::load(path)?,
                    None => FileConfig::default(),
                },
            };
            let config = shared.resolve_from(base).embed;
            let clip = read_wav(&input)?.clip;
            let reference = expected.as_deref().map(Payload::read).transpose()?;
            let mut got = extract(&clip, &config)?.payload;
            let dims = logo.or(match reference.as_ref().map(Payload::origin) {
                Some(PayloadOrigin::Logo { rows, cols }) => Some((rows, cols)),
                _ => None,
            });
            if let Some((rows, cols)) = dims {
                got = got.with_logo_dims(rows, cols)?;
            }
            got.write(&out)?;
            if let Some(reference) = reference {
                println!("DR={:.1}", detection_rate(&reference, &got)?);
            }
        }
        Command::Attack { input, out, kind, depth, snr, seed, factor, clip, strength, kbps, codec_cmd } => {
            let config = shared.resolve()?.embed;
            let host = read_wav(&input)?;
            let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| Error::Config(format!("--{flag} is required")));
            let attack = match kind {
                AttackKind::Requantize => Attack::Requantize { bits: need(depth.map(f64::from), "depth")? as u32 },
                AttackKind::Awgn => Attack::Awgn {
                    snr_db: need(snr, "snr")?,
                    seed: seed.ok_or_else(|| Error::Config("--seed is required for awgn".into()))?,
                },
                AttackKind::AmplitudeScale => Attack::AmplitudeScale { factor: need(factor, "factor")?, clip },
                AttackKind::CompressProxy => Attack::CompressProxy {
                    strength: match (strength, kbps) {
                        (Some(s), _) => s,
                        (None, Some(k)) => bitrate_to_strength(f64::from(k)),
                        (None, None) => return Err(Error::Config("--strength or --kbps is required".into())),
                    },
                },
                AttackKind::ExternalCodec => Attack::ExternalCodec {
                    command: codec_cmd.ok_or_else(|| Error::Config("--codec-cmd is required".into()))?,
                    kbps: kbps.ok_or_else(|| Error::Config("--kbps is required".into()))?,
                    max_lag: config.frame_length,
                },
            };
            let attacked = attack.apply(&host.clip)?;
            write_wav(&attacked, &out, host.clip.source_bit_depth)?;
            println!("applied {attack}");
        }
        Command::Tune { input, payload, out, quality_cmd } => {
            let FileConfig { embed: mut config, tuner } = shared.resolve()?;
            let host = read_wav(&input)?.clip;
            let payload = Payload::read(&payload)?;
            fit_bits(&shared, &mut config, &payload)?;
            let metric = metric_for(&quality_cmd);
            let tuned = tune_alpha(&host, &payload, &config, &tuner, metric.as_ref())?;
            println!("iter,alpha,grade,dwr_db,recovery,action");
            for (i, s) in tuned.trace.iter().enumerate() {
                let action = match s.action {
                    TuneAction::Increase => "increase",
                    TuneAction::Decrease => "decrease",
                    TuneAction::Accept => "accept",
                };
                println!("{i},{},{},{},{},{action}", s.alpha, s.grade, s.dwr_db, s.recovery);
            }
            println!(
                "alpha={} grade={:.3} DWR={:.2} dB stop={:?}",
                tuned.config.alpha, tuned.report.grade, tuned.report.dwr_db, tuned.stop
            );
            if let Some(out) = out {
                write_wav(&tuned.embedded.watermarked, &out, host.source_bit_depth)?;
                write_text(&default_record(&out), &tuned.embedded.record.to_kv_text())?;
            }
        }
        Command::Bench { corpus, synthetic, out, payload, payload_seed, noise_seed, codec_cmd, quality_cmd, serial } => {
            let FileConfig { embed: base, tuner } = shared.resolve()?;
            let clips = match (corpus, synthetic) {
                (_, true) => desk_corpus(),
                (Some(dir), false) => load_corpus(&dir)?,
                (None, false) => return Err(Error::Config("give a corpus directory or --synthetic".into())),
            };
            let payload = match payload {
                Some(p) => Payload::read(&p)?,
                None => Payload::random(base.bits, payload_seed)?,
            };
            let mut attacks = standard_attacks(noise_seed);
            if let Some(cmd) = codec_cmd {
                for kbps in [128, 64] {
                    attacks.push(Attack::ExternalCodec { command: cmd.clone(), kbps, max_lag: base.frame_length });
                }
            }
            let cfg = BenchConfig {
                base,
                variants: STANDARD_VARIANTS.to_vec(),
                attacks,
                alpha: match shared.alpha {
                    Some(a) => AlphaPolicy::Fixed(a),
                    None => AlphaPolicy::Tuned(tuner),
                },
                parallel: !serial,
            };
            let metric = metric_for(&quality_cmd);
            let report = run_matrix(&clips, std::slice::from_ref(&payload), &cfg, metric.as_ref())?;
            report.write(&out)?;
            if let PayloadOrigin::Logo { rows, cols } = payload.origin() {
                let dir = out.join("logos");
                std::fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
                for r in &report.rows {
                    if let Some(bits) = &r.recovered {
                        let name = format!("{}_{}_{}_{}_{}.pbm", r.transform, r.scheme, r.clip_id, r.attack, r.param);
                        render_logo(bits, rows, cols, dir.join(name))?;
                    }
                }
            }
            println!("wrote {} cells to {}", report.rows.len(), out.display());
        }
        Command::Inspect { input, out, record } => {
            let base = match &record {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    FileConfig { embed: EmbeddingRecord::parse_config(&text)?, ..Default::default() }
                }
                None => shared.resolve()?,
            };
            let config = shared.resolve_from(base).embed;
            let clip = read_wav(&input)?.clip;
            let analysis = analyze(&clip, &config)?;
            let mut position = vec![None; analysis.grid.patch_count()];
            for (i, c) in analysis.selection.coords.iter().enumerate() {
                position[c.linear_index] = Some(i);
            }
            let mut csv = String::from("row_block,col_block,linear_index,energy,selected,order\n");
            for (j, e) in analysis.grid.energies.iter().enumerate() {
                let c = analysis.grid.coord(j);
                let (sel, ord) = match position[j] {
                    Some(i) => ("1", i.to_string()),
                    None => ("0", String::new()),
                };
                csv.push_str(&format!("{},{},{},{e},{sel},{ord}\n", c.row_block, c.col_block, c.linear_index));
            }
            match out {
                Some(path) => write_text(&path, &csv)?,
                None => print!("{csv}"),
            }
            let picked: Vec<(usize, usize)> =
                analysis.selection.coords.iter().map(|c| (c.row_block, c.col_block)).collect();
            eprintln!("selected {} of {} patches", picked.len(), analysis.grid.patch_count());
            if let Some(path) = record {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let want = EmbeddingRecord::parse_patch_coords(&text)?;
                let same = want.iter().filter(|c| picked.contains(c)).count();
                eprintln!("record match: {same}/{}", want.len());
            }
        }
        Command::Synth { out, long } => {
            std::fs::create_dir_all(&out).map_err(|e| Error::Config(format!("{}: {e}", out.display())))?;
            for c in desk_corpus() {
                write_wav(&c.clip, out.join(format!("{}.wav", c.id)), 16)?;
            }
            if let Some(secs) = long {
                write_wav(&long_clip(secs, 77), out.join("long.wav"), 16)?;
            }
            demo_logo().write(out.join("logo.pbm"))?;
            println!("wrote synthetic clips to {}", out.display());
        }
    }
    Ok(())
}

fn load_corpus(dir: &Path) -> Result<Vec<CorpusClip>, Error> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no WAV files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            Ok(CorpusClip {
                id: p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                clip: read_wav(p)?.clip,
            })
        })
        .collect()
}
