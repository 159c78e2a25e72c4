use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_speechsieve");

fn sieve(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("spawn speechsieve")
}

fn ok(args: &[&str]) -> String {
    let out = sieve(args);
    assert!(
        out.status.success(),
        "speechsieve {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, records: usize) {
    ok(&[
        "synth",
        "--output",
        p(dir),
        "--records",
        &records.to_string(),
        "--seed",
        "11",
        "--region-mix",
        "2:1:1",
        "--untranscribed",
        "0.4",
        "--digits",
        "0.3",
        "--sample-rates",
        "8000,16000",
        "--substitute-up-to",
        "2",
        "--min-duration-s",
        "1",
        "--max-duration-s",
        "3",
    ]);
}

/// Mock ASR reading the hidden references; punctuation served by a child process.
fn write_config(dir: &Path) -> std::path::PathBuf {
    let serve = serde_json::to_string(&[
        BIN,
        "serve-mock",
        "--role",
        "punctuate",
        "--spec",
        r#"{"kind":"mock_punctuator"}"#,
    ])
    .unwrap();
    let text = format!(
        r#"seed = 11
batch_size = 4

[adapters.asr_primary]
kind = "mock_asr"
references = "references.jsonl"

[adapters.asr_secondary]
kind = "mock_asr"
references = "references.jsonl"

[adapters.asr_filter]
kind = "mock_asr"
references = "references.jsonl"

[adapters.punctuate]
kind = "process"
command = {serve}

[adapters.align]
kind = "mock_aligner"
"#
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn synth_run_report_score_merge_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    synth(&corpus, 40);
    let cfg = write_config(&corpus);
    let manifest = corpus.join("manifest.jsonl");
    let run = tmp.path().join("run");

    let report = ok(&[
        "run",
        "--config",
        p(&cfg),
        "--input",
        p(&manifest),
        "--output",
        p(&run),
        "--workers",
        "3",
    ]);
    assert!(report.starts_with("# seed=11 "), "{report}");
    assert!(report.contains("Retained%"));

    let again = ok(&["report", p(&run)]);
    assert_eq!(again, report);
    let by_region = ok(&["report", p(&run), "--by-region"]);
    assert!(by_region.contains("north") && by_region.contains("south"));

    let finals = run.join("final.jsonl");
    let score = ok(&[
        "score",
        "--reference",
        p(&finals),
        "--hypothesis",
        p(&finals),
        "--seed",
        "11",
    ]);
    assert!(score.starts_with("# seed=11\n"), "{score}");
    let f1 = score.lines().find(|l| l.starts_with("F1")).unwrap();
    assert!(f1.trim_end().ends_with("100.00"), "{f1}");

    let rows = ok(&[
        "score",
        "--reference",
        p(&finals),
        "--hypothesis",
        p(&finals),
        "--layout",
        "dataset-rows",
    ]);
    assert!(rows.lines().any(|l| l.starts_with("Dataset")));

    let merged = tmp.path().join("merged.jsonl");
    let summary = ok(&[
        "merge",
        "--full",
        p(&manifest),
        "--refined",
        p(&finals),
        "--output",
        p(&merged),
        "--target-sample-rate-hz",
        "16000",
    ]);
    assert!(summary.starts_with("40 records"), "{summary}");
    let merged_text = fs::read_to_string(&merged).unwrap();
    assert_eq!(merged_text.lines().count(), 40);
    assert!(!merged_text.contains("\"sample_rate_hz\":8000"));

    let v = ok(&["validate-manifest", p(&merged), p(&finals), p(&manifest)]);
    assert_eq!(v.lines().filter(|l| l.contains(": ok,")).count(), 3);
}

#[test]
fn interrupted_run_resumes_from_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    synth(&corpus, 30);
    let cfg = write_config(&corpus);
    let manifest = corpus.join("manifest.jsonl");
    let run = tmp.path().join("run");
    let args = [
        "run",
        "--config",
        p(&cfg),
        "--input",
        p(&manifest),
        "--output",
        p(&run),
    ];

    ok(&args);
    let reference = fs::read(run.join("final.jsonl")).unwrap();
    fs::remove_dir_all(&run).unwrap();

    let mut stopped = args.to_vec();
    stopped.extend(["--stop-after", "9"]);
    let out = sieve(&stopped);
    assert_eq!(out.status.code(), Some(3));
    assert!(!run.join("final.jsonl").exists());

    ok(&args);
    assert_eq!(fs::read(run.join("final.jsonl")).unwrap(), reference);
}

#[test]
fn overridden_setting_refuses_to_resume_old_run() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    synth(&corpus, 6);
    let cfg = write_config(&corpus);
    let manifest = corpus.join("manifest.jsonl");
    let run = tmp.path().join("run");
    let args = [
        "run",
        "--config",
        p(&cfg),
        "--input",
        p(&manifest),
        "--output",
        p(&run),
    ];
    ok(&args);

    let mut changed = args.to_vec();
    changed.extend(["--wer-threshold", "0.1"]);
    let out = sieve(&changed);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));

    let snapshot = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(snapshot.contains("wer_threshold = 0.05"));
}

#[test]
fn flags_override_defaults() {
    let toml = ok(&["default-config"]);
    assert!(toml.contains("collar_s = 0.2"));
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let score = ok(&[
        "score",
        "--reference",
        p(&empty),
        "--hypothesis",
        p(&empty),
        "--collar-s",
        "0.05",
        "--miou",
        "matched-only",
        "--seed",
        "99",
    ]);
    assert!(score.contains("# seed=99"));
    assert!(score.contains("collar_s=0.050"));
    assert!(score.contains("matched_only"), "{score}");
}

#[test]
fn invalid_inputs_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.jsonl");
    fs::write(&bad, "{\"utterance_id\":1}\n").unwrap();
    let out = sieve(&["validate-manifest", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("line 1"));

    let out = sieve(&["synth", "--output", p(tmp.path()), "--region-mix", "2:1"]);
    assert!(!out.status.success());

    let out = sieve(&[
        "run",
        "--input",
        p(&bad),
        "--output",
        p(&tmp.path().join("r")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn serve_mock_speaks_the_line_protocol() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 1);
    let wav = tmp.path().join("audio/syn000000.wav");
    let request = serde_json::json!({
        "id": "u1", "task": "align", "audio_path": p(&wav), "text": "xin chào"
    });
    let mut child = Command::new(BIN)
        .args([
            "serve-mock",
            "--role",
            "align",
            "--spec",
            r#"{"kind":"mock_aligner"}"#,
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        writeln!(stdin, "{request}").unwrap();
        writeln!(stdin, "not json").unwrap();
    }
    drop(child.stdin.take());
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["role"], "align");
    assert_eq!(lines[0]["version"], 1);
    assert_eq!(lines[1]["id"], "u1");
    assert_eq!(lines[1]["words"].as_array().unwrap().len(), 2);
    assert!(lines[2]["error"].as_str().unwrap().contains("malformed"));
}
