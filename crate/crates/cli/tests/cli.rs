use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vnjp_cli::PipelineConfig;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/zipf_1000.tsv")
}

fn vnjp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vnjp"))
        .args(args)
        .env_remove("VNJP_API_KEY")
        .output()
        .unwrap()
}

fn vnjp_env(args: &[&str], key: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vnjp"))
        .args(args)
        .env("VNJP_API_KEY", key)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_corpus(dir: &Path) -> PathBuf {
    let path = dir.join("small.tsv");
    let text: String = std::fs::read_to_string(fixture())
        .unwrap()
        .lines()
        .take(120)
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(vnjp(&["--help"]).status.code(), Some(0));
    assert_eq!(vnjp(&["--version"]).status.code(), Some(0));
    assert_eq!(vnjp(&["pipeline", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(vnjp(&[]).status.code(), Some(1));
    assert_eq!(vnjp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(vnjp(&["flag", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(vnjp(&["bleu", "-o", "/tmp/never"]).status.code(), Some(1));
}

#[test]
fn missing_config_exits_one_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = vnjp(&[
        "flag",
        "--config",
        s(&dir.path().join("nope.toml")),
        "-i",
        s(&fixture()),
        "-o",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
}

#[test]
fn bad_override_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = vnjp(&[
        "flag",
        "--set",
        "analyze.target_fraction=2",
        "-i",
        s(&fixture()),
        "-o",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = vnjp(&[
        "flag",
        "--set",
        "analyze.nonsense=2",
        "-i",
        s(&fixture()),
        "-o",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vnjp(&["flag", "-o", s(dir.path())]).status.code(), Some(1));
    assert_eq!(
        vnjp(&["flag", "-i", "/no/such.tsv", "-o", s(dir.path())]).status.code(),
        Some(1)
    );
}

#[test]
fn malformed_corpus_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "1\tmột\t一\nnot-a-number\thai\t二\n").unwrap();
    let o = vnjp(&["flag", "-i", s(&bad), "-o", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn flag_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    let out = dir.path().join("out");
    let mut cfg = PipelineConfig::default();
    cfg.paths.input = Some(fixture());
    cfg.paths.out_dir = out.clone();
    std::fs::write(&config, cfg.to_toml()).unwrap();

    let o = vnjp(&["flag", "--config", s(&config)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("threshold_report.json")).unwrap()).unwrap();
    assert_eq!(report["target_fraction"], 0.15);
    let flagged = std::fs::read_to_string(out.join("flagged.jsonl")).unwrap();
    assert_eq!(flagged.lines().count(), 1000);
    let n_flagged = flagged.lines().filter(|l| l.contains("\"flagged\":true")).count();
    assert_eq!(report["flagged_count"], n_flagged);

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("flag.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "flag");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["timestamp"].is_u64());
    assert_eq!(manifest["config"]["analyze"]["target_fraction"], 0.15);
    assert!(manifest["inputs"][s(&config)]["sha256"].is_string());
    assert!(manifest["inputs"][s(&fixture())]["sha256"].as_str().unwrap().len() == 64);
    assert!(manifest["outputs"]["flagged.jsonl"]["bytes"].as_u64().unwrap() > 0);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = vnjp(&["flag", "-i", s(&fixture()), "-o", s(&out), "--threshold", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("flag.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["analyze"]["threshold"], 3);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("threshold_report.json")).unwrap()).unwrap();
    assert_eq!(report["threshold"], 3);
}

#[test]
fn http_backend_without_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_corpus(dir.path());
    let o = vnjp(&["pipeline", "-i", s(&input), "-o", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("VNJP_API_KEY"));
}

/// Answers every request with HTTP 400.
fn rejecting_server() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line.trim().is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            let msg = r#"{"error":"bad request"}"#;
            let _ = write!(
                stream,
                "HTTP/1.1 400 Bad Request\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{msg}",
                msg.len()
            );
        }
    });
    url
}

#[test]
fn backend_failure_exits_three_with_failures_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_corpus(dir.path());
    let out = dir.path().join("out");
    let url = rejecting_server();
    let set = format!("backend.base_url={url}");
    let o = vnjp_env(
        &[
            "pipeline",
            "-i",
            s(&input),
            "-o",
            s(&out),
            "--set",
            &set,
            "--threshold",
            "2",
        ],
        "k",
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let flagged = std::fs::read_to_string(out.join("flagged.jsonl")).unwrap();
    let n_flagged = flagged.lines().filter(|l| l.contains("\"flagged\":true")).count();
    assert!(n_flagged > 0);
    let failures = std::fs::read_to_string(out.join("failures.jsonl")).unwrap();
    assert_eq!(failures.lines().count(), n_flagged);
    for line in failures.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["error_kind"], "rejected");
    }
    assert_eq!(std::fs::read(out.join("synthetic.jsonl")).unwrap(), b"");
    assert!(out.join("pipeline.manifest.json").exists());
}

#[test]
fn stage_by_stage_matches_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_corpus(dir.path());
    let whole = dir.path().join("whole");
    let staged = dir.path().join("staged");
    assert_eq!(
        vnjp(&["pipeline", "--mock-backend", "-i", s(&input), "-o", s(&whole)])
            .status
            .code(),
        Some(0)
    );

    let run = |args: &[&str]| {
        let o = vnjp(args);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    };
    run(&["flag", "-i", s(&input), "-o", s(&staged)]);
    let flagged = staged.join("flagged.jsonl");
    run(&["retrieve", "-i", s(&flagged), "-o", s(&staged)]);
    run(&["generate", "--mock-backend", "-i", s(&flagged), "-o", s(&staged)]);
    run(&["merge", "-i", s(&flagged), "-o", s(&staged)]);
    run(&["split", "-i", s(&staged.join("merged.jsonl")), "-o", s(&staged)]);
    run(&["export", "-i", s(&staged.join("train.jsonl")), "-o", s(&staged)]);

    for name in [
        "flagged.jsonl",
        "retrievals.jsonl",
        "bm25_index.json",
        "synthetic.jsonl",
        "merged.jsonl",
        "train.jsonl",
        "val.jsonl",
        "test.jsonl",
        "train_chat.jsonl",
    ] {
        assert_eq!(
            std::fs::read(whole.join(name)).unwrap(),
            std::fs::read(staged.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn outputs_never_overwrite_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_corpus(dir.path());
    let out = dir.path().join("out");
    assert_eq!(vnjp(&["flag", "-i", s(&input), "-o", s(&out)]).status.code(), Some(0));
    let flagged = out.join("flagged.jsonl");
    let before = std::fs::read(&flagged).unwrap();
    let o = vnjp(&["flag", "-i", s(&flagged), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(std::fs::read(&flagged).unwrap(), before);
}

#[test]
fn bleu_from_files_and_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let hyp = dir.path().join("hyp.txt");
    let reference = dir.path().join("ref.txt");
    std::fs::write(&hyp, "私は学生です。\n今日は暑いですね。\n").unwrap();
    std::fs::write(&reference, "私は学生です。\n今日は暑いですね。\n").unwrap();
    let o = vnjp(&["bleu", "--hyp", s(&hyp), "--ref", s(&reference), "-o", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        stdout.starts_with("BLEU = 100.00 (100.0/100.0/100.0/100.0, BP=1.000,"),
        "{stdout}"
    );
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("bleu.json")).unwrap()).unwrap();
    assert_eq!(report["bleu"], 1.0);

    let tsv = dir.path().join("pairs.tsv");
    std::fs::write(&tsv, "1\tthe the the the the the the\tthe cat is on the mat\n").unwrap();
    let o = vnjp(&[
        "bleu",
        "--tsv",
        s(&tsv),
        "--set",
        "bleu.language=vi",
        "-o",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("bleu.json")).unwrap()).unwrap();
    assert_eq!(report["precisions"][0], 2.0 / 7.0);
    assert_eq!(report["bleu"], 0.0);

    std::fs::write(&reference, "một\n").unwrap();
    let o = vnjp(&["bleu", "--hyp", s(&hyp), "--ref", s(&reference), "-o", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = small_corpus(dir.path());
    let o = vnjp(&["stats", "-i", s(&input), "-o", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("pairs=120"));
    let stats: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["provenance"]["baseline"], 120);
    assert!(dir.path().join("histogram_ja.csv").exists());
}

#[test]
fn pipeline_fills_missing_targets_with_mock() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("partial.tsv");
    let mut text = std::fs::read_to_string(fixture()).unwrap();
    text.push_str("1001\txin chào\t\n");
    std::fs::write(&input, text).unwrap();
    let out = dir.path().join("out");
    let o = vnjp(&["pipeline", "--mock-backend", "-i", s(&input), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let baseline = std::fs::read_to_string(out.join("baseline.jsonl")).unwrap();
    assert!(baseline.contains(r#""vi":"xin chào","ja":"oàhc nix [t=0.00]""#));
}
