use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use tfmark::corpus::{synth, Style};
use tfmark::{read_wav, write_wav, Payload};

fn tfmark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfmark")).args(args).output().expect("run tfmark")
}

fn ok(args: &[&str]) -> String {
    let out = tfmark(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 6 s host and a 32-bit payload in a fresh directory.
fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_wav(&synth(Style::Ensemble, 6.0, 3, 0.18), dir.path().join("host.wav"), 16).unwrap();
    Payload::random(32, 5).unwrap().write(dir.path().join("bits.txt")).unwrap();
    dir
}

fn embed_fixed(dir: &Path) {
    ok(&[
        "embed",
        "--in", s(&dir.join("host.wav")),
        "--payload", s(&dir.join("bits.txt")),
        "--out", s(&dir.join("wm.wav")),
        "--alpha", "0.01",
    ]);
}

#[test]
fn embed_then_extract_recovers_payload() {
    let dir = setup();
    let d = dir.path();
    let text = ok(&[
        "embed",
        "--in", s(&d.join("host.wav")),
        "--payload", s(&d.join("bits.txt")),
        "--out", s(&d.join("wm.wav")),
    ]);
    assert!(text.contains("embedded 32 bits"), "{text}");
    assert!(d.join("wm.wav.record").exists());
    let text = ok(&[
        "extract",
        "--in", s(&d.join("wm.wav")),
        "--out", s(&d.join("got.txt")),
        "--record", s(&d.join("wm.wav.record")),
        "--expected", s(&d.join("bits.txt")),
    ]);
    assert_eq!(text.trim(), "DR=100.0");
    assert_eq!(
        Payload::read(d.join("got.txt")).unwrap(),
        Payload::read(d.join("bits.txt")).unwrap()
    );
}

#[test]
fn wrong_key_does_not_decode() {
    let dir = setup();
    let d = dir.path();
    embed_fixed(d);
    let text = ok(&[
        "extract",
        "--in", s(&d.join("wm.wav")),
        "--out", s(&d.join("got.txt")),
        "--pn-key", "1",
        "--expected", s(&d.join("bits.txt")),
    ]);
    let dr: f64 = text.trim().trim_start_matches("DR=").parse().unwrap();
    assert!(dr < 90.0, "wrong key decoded at {dr}");
}

#[test]
fn capacity_overflow_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_wav(&synth(Style::Piano, 1.0, 1, 0.18), d.join("short.wav"), 16).unwrap();
    Payload::random(400, 1).unwrap().write(d.join("big.txt")).unwrap();
    let out = tfmark(&[
        "embed",
        "--in", s(&d.join("short.wav")),
        "--payload", s(&d.join("big.txt")),
        "--out", s(&d.join("wm.wav")),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[capacity]"));
}

#[test]
fn bad_input_and_usage_codes() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(d.join("junk.wav"), b"not a wav").unwrap();
    let out = tfmark(&["extract", "--in", s(&d.join("junk.wav")), "--out", s(&d.join("x.txt"))]);
    assert_eq!(out.status.code(), Some(3));
    let out = tfmark(&[
        "embed",
        "--in", s(&d.join("host.wav")),
        "--payload", s(&d.join("bits.txt")),
        "--out", s(&d.join("wm.wav")),
        "--bits", "16",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn awgn_attack_is_seeded() {
    let dir = setup();
    let d = dir.path();
    for name in ["a.wav", "b.wav"] {
        ok(&[
            "attack", "--in", s(&d.join("host.wav")), "--out", s(&d.join(name)),
            "--kind", "awgn", "--snr", "30", "--seed", "7",
        ]);
    }
    assert_eq!(std::fs::read(d.join("a.wav")).unwrap(), std::fs::read(d.join("b.wav")).unwrap());
    let out = tfmark(&["attack", "--in", s(&d.join("host.wav")), "--out", s(&d.join("c.wav")), "--kind", "awgn", "--snr", "30"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn attacked_watermark_still_decodes() {
    let dir = setup();
    let d = dir.path();
    embed_fixed(d);
    ok(&[
        "attack", "--in", s(&d.join("wm.wav")), "--out", s(&d.join("att.wav")),
        "--kind", "amplitude-scale", "--factor", "0.5",
    ]);
    let text = ok(&[
        "extract",
        "--in", s(&d.join("att.wav")),
        "--out", s(&d.join("got.txt")),
        "--record", s(&d.join("wm.wav.record")),
        "--expected", s(&d.join("bits.txt")),
    ]);
    assert_eq!(text.trim(), "DR=100.0");
    let clip = read_wav(d.join("att.wav")).unwrap().clip;
    assert_eq!(clip.sample_rate_hz, 44_100);
}

#[test]
fn inspect_matches_the_record() {
    let dir = setup();
    let d = dir.path();
    embed_fixed(d);
    let out = tfmark(&[
        "inspect",
        "--in", s(&d.join("wm.wav")),
        "--record", s(&d.join("wm.wav.record")),
        "--out", s(&d.join("grid.csv")),
    ]);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("record match: 32/32"), "{err}");
    let csv = std::fs::read_to_string(d.join("grid.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("row_block,col_block,linear_index,energy,selected,order"));
    assert_eq!(lines.filter(|l| l.split(',').nth(4) == Some("1")).count(), 32);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(d.join("cfg.toml"), "[embed]\npn_key = 99\nalpha = 0.01\n").unwrap();
    ok(&[
        "embed", "--config", s(&d.join("cfg.toml")),
        "--in", s(&d.join("host.wav")),
        "--payload", s(&d.join("bits.txt")),
        "--out", s(&d.join("wm.wav")),
        "--alpha", "0.02",
    ]);
    let record = std::fs::read_to_string(d.join("wm.wav.record")).unwrap();
    assert!(record.contains("pn_key = 99"), "{record}");
    assert!(record.contains("alpha = 0.02"), "{record}");
    std::fs::write(d.join("bad.toml"), "[embed]\nnope = 1\n").unwrap();
    let out = tfmark(&["inspect", "--config", s(&d.join("bad.toml")), "--in", s(&d.join("host.wav"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_writes_csv_and_markdown() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    write_wav(&synth(Style::Beat, 4.0, 2, 0.18), corpus.join("beat.wav"), 16).unwrap();
    let out = d.join("report");
    let text = ok(&["bench", s(&corpus), "--out", s(&out), "--alpha", "0.01"]);
    assert!(text.contains("wrote 27 cells"), "{text}");
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("scheme,transform,attack,param,clip_id,dr_percent,dwr_db,quality_grade,seed"));
    assert_eq!(csv.lines().count(), 28);
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("STCT-ISS"));
}

#[test]
fn synth_writes_corpus_and_logo() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", s(dir.path())]);
    for name in ["piano.wav", "strings.wav", "beat.wav", "ensemble.wav", "logo.pbm"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}
