use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use speechsieve::adapters::mock::{FaultInjector, MockAsr, NoiseSpec};
use speechsieve::align::parse_timestamp_tokens;
use speechsieve::manifest::{read_manifest, StageStatus, UtteranceRecord};
use speechsieve::pipeline::{
    generate_synthetic_corpus, run_pipeline, stage_table_from_dir, AdapterSpec, Adapters,
    DurationDist, PipelineConfig, PipelineError, RegionMix, RunOptions, Step, SynthCorpus,
    SynthSpec,
};
use speechsieve::sampler::{GroupField, SamplingPolicy};

fn corpus(dir: &Path, n: usize, seed: u64) -> SynthCorpus {
    let spec = SynthSpec {
        n_records: n,
        duration: DurationDist::Uniform {
            min_s: 0.4,
            max_s: 1.2,
        },
        noise: NoiseSpec::substitutions(0.05, seed),
        region_mix: RegionMix {
            north: 2,
            central: 1,
            south: 1,
        },
        seed,
        sources: vec!["alpha".into(), "beta".into()],
        sample_rates: vec![8000, 16_000, 22_050],
        words: (3, 12),
        untranscribed_fraction: 0.3,
        manual_fraction: 0.1,
        digit_fraction: 0.4,
        ..Default::default()
    };
    generate_synthetic_corpus(&spec, dir).unwrap()
}

fn config(c: &SynthCorpus) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        worker_pool_size: 3,
        batch_size: 4,
        ..Default::default()
    };
    let asr = |noise| AdapterSpec::MockAsr {
        noise,
        references: Some(c.references_path.clone()),
        canned: String::new(),
    };
    cfg.adapters.asr_primary = asr(NoiseSpec::clean(0));
    cfg.adapters.asr_secondary = asr(NoiseSpec::substitutions(0.03, 11));
    cfg.adapters.asr_filter = asr(NoiseSpec::clean(0));
    cfg
}

fn terminal_stages(rec: &UtteranceRecord) -> Vec<&StageStatus> {
    rec.stage_status
        .values()
        .filter(|s| s.is_terminal())
        .collect()
}

#[test]
fn end_to_end_run_produces_consistent_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let c = corpus(&tmp.path().join("corpus"), 60, 1);
    let cfg = config(&c);
    let adapters = Adapters::from_config(&cfg).unwrap();
    let out = tmp.path().join("run");
    let summary = run_pipeline(&cfg, &adapters, &c.records, &out, &RunOptions::default()).unwrap();

    assert_eq!(summary.input_records, 60);
    assert!(summary.final_records > 0 && summary.final_records < 60);
    assert!(summary.resumed.is_empty());
    for step in Step::ALL {
        assert!(out.join("stages").join(format!("{step}.jsonl")).exists());
        assert!(out.join("audit").join(format!("{step}.jsonl")).exists());
    }
    let run_info: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("audit/run.json")).unwrap()).unwrap();
    assert_eq!(run_info["wer_basis"], "normalized");
    assert_eq!(run_info["seed"], cfg.seed);
    assert_eq!(
        fs::read_to_string(out.join("report.txt")).unwrap(),
        summary.report
    );

    let finals = read_manifest(&summary.final_path).unwrap();
    assert_eq!(finals.len(), summary.final_records);
    for r in &finals {
        assert_eq!(r.sample_rate_hz, 16_000);
        let words = r.words.as_ref().unwrap();
        let tokens =
            parse_timestamp_tokens(r.ts_text.as_ref().unwrap(), cfg.quantization_step_s).unwrap();
        assert_eq!(tokens.len(), words.len());
        let text = r.transcript.as_ref().unwrap();
        assert_eq!(text.split_whitespace().count(), words.len());
        assert!(words.last().unwrap().end_s <= r.duration_s + 1e-9);
    }
    assert!(finals.iter().any(|r| r.numeric_mappings.is_some()));

    // Every input ends in exactly one place: rejected once, or final.
    let last = read_manifest(out.join("stages/numrevert.jsonl")).unwrap();
    let final_ids: HashSet<_> = finals.iter().map(|r| r.utterance_id.clone()).collect();
    for r in &last {
        let rejected = r
            .stage_status
            .values()
            .filter(|s| matches!(s, StageStatus::Rejected(_)))
            .count();
        assert!(rejected <= 1);
        assert_eq!(
            rejected == 0,
            final_ids.contains(&r.utterance_id),
            "{}",
            r.utterance_id
        );
        assert!(!terminal_stages(r).is_empty());
    }

    let table = stage_table_from_dir(&out).unwrap();
    let mut prev = table.total.original_h;
    for step in Step::ALL {
        let h = table.total.step(step).unwrap();
        assert!(h <= prev + 1e-12, "{step}: {h} > {prev}");
        prev = h;
    }
}

#[test]
fn interrupted_run_resumes_to_identical_output() {
    let tmp = tempfile::tempdir().unwrap();
    let c = corpus(&tmp.path().join("corpus"), 50, 2);
    let cfg = config(&c);
    let adapters = Adapters::from_config(&cfg).unwrap();
    let out = tmp.path().join("run");

    run_pipeline(&cfg, &adapters, &c.records, &out, &RunOptions::default()).unwrap();
    let clean_final = fs::read(out.join("final.jsonl")).unwrap();
    let clean_report = fs::read(out.join("report.txt")).unwrap();
    fs::remove_dir_all(&out).unwrap();

    let mut interruptions = 0;
    loop {
        let opts = RunOptions {
            stop_after: Some(17),
            ..Default::default()
        };
        match run_pipeline(&cfg, &adapters, &c.records, &out, &opts) {
            Ok(s) => {
                assert!(!s.resumed.is_empty());
                break;
            }
            Err(PipelineError::Interrupted { .. }) => interruptions += 1,
            Err(e) => panic!("{e}"),
        }
        assert!(interruptions < 100);
    }
    assert!(interruptions > 3);
    assert_eq!(fs::read(out.join("final.jsonl")).unwrap(), clean_final);
    assert_eq!(fs::read(out.join("report.txt")).unwrap(), clean_report);
}

#[test]
fn transport_failure_checkpoints_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let c = corpus(&tmp.path().join("corpus"), 40, 3);
    let cfg = config(&c);
    let good = Adapters::from_config(&cfg).unwrap();

    let reference = tmp.path().join("reference");
    run_pipeline(&cfg, &good, &c.records, &reference, &RunOptions::default()).unwrap();

    let victim = c.records[25].utterance_id.clone();
    let mut flaky = good.clone();
    flaky.punctuate =
        Arc::new(FaultInjector::new(good.punctuate.clone()).fail_transport([victim.clone()]));
    let out = tmp.path().join("run");
    match run_pipeline(&cfg, &flaky, &c.records, &out, &RunOptions::default()) {
        Err(PipelineError::Adapter { step, id, source }) => {
            assert_eq!(step, Step::Punct);
            assert_eq!(id, victim);
            assert!(source.is_retryable());
        }
        other => panic!("expected an adapter error, got {other:?}"),
    }
    assert!(out.join("checkpoints/punct.partial.jsonl").exists());
    assert!(!out.join("stages/punct.jsonl").exists());

    // Once the backend is back, nothing already decided is resent.
    let mut recovering = good.clone();
    let down = Arc::new(FaultInjector::new(MockAsr::new(NoiseSpec::clean(0))).unreachable());
    recovering.asr_primary = down.clone();
    recovering.asr_secondary = down.clone();
    recovering.asr_filter = down;
    let s = run_pipeline(&cfg, &recovering, &c.records, &out, &RunOptions::default()).unwrap();
    assert_eq!(s.resumed, [Step::Sample, Step::Clean, Step::Transcript]);
    assert!(!out.join("checkpoints/punct.partial.jsonl").exists());
    let expected = fs::read_to_string(reference.join("final.jsonl"))
        .unwrap()
        .replace(reference.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(
        fs::read_to_string(out.join("final.jsonl")).unwrap(),
        expected
    );
}

#[test]
fn model_errors_reject_only_the_affected_record() {
    let tmp = tempfile::tempdir().unwrap();
    let c = corpus(&tmp.path().join("corpus"), 20, 4);
    let cfg = config(&c);
    let mut adapters = Adapters::from_config(&cfg).unwrap();
    let victim = c.records[3].utterance_id.clone();
    adapters.align =
        Arc::new(FaultInjector::new(adapters.align.clone()).fail_model([victim.clone()]));
    let out = tmp.path().join("run");
    run_pipeline(&cfg, &adapters, &c.records, &out, &RunOptions::default()).unwrap();
    let aligned = read_manifest(out.join("stages/align.jsonl")).unwrap();
    let rec = aligned.iter().find(|r| r.utterance_id == victim).unwrap();
    if Step::NumExpand.passed(rec) {
        match Step::Align.status(rec) {
            Some(StageStatus::Rejected(reason)) => {
                assert!(reason.contains("injected failure"), "{reason}")
            }
            other => panic!("{other:?}"),
        }
    }
    assert!(aligned
        .iter()
        .filter(|r| r.utterance_id != victim)
        .any(|r| Step::Align.passed(r)));
}

#[test]
fn changed_config_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let c = corpus(&tmp.path().join("corpus"), 5, 5);
    let cfg = config(&c);
    let adapters = Adapters::from_config(&cfg).unwrap();
    let out = tmp.path().join("run");
    run_pipeline(&cfg, &adapters, &c.records, &out, &RunOptions::default()).unwrap();
    let other = PipelineConfig {
        wer_threshold: 0.1,
        ..cfg.clone()
    };
    assert!(matches!(
        run_pipeline(&other, &adapters, &c.records, &out, &RunOptions::default()),
        Err(PipelineError::Inconsistent(_))
    ));
    let rerun = run_pipeline(&cfg, &adapters, &c.records, &out, &RunOptions::default()).unwrap();
    assert_eq!(rerun.resumed, Step::ALL);
}

#[test]
fn duplicate_ids_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let c = corpus(&tmp.path().join("corpus"), 3, 6);
    let cfg = config(&c);
    let adapters = Adapters::from_config(&cfg).unwrap();
    let mut recs = c.records.clone();
    recs.push(recs[0].clone());
    assert!(matches!(
        run_pipeline(
            &cfg,
            &adapters,
            &recs,
            tmp.path().join("run"),
            &RunOptions::default()
        ),
        Err(PipelineError::Inconsistent(_))
    ));
}

#[test]
fn sampling_caps_each_speaker() {
    let tmp = tempfile::tempdir().unwrap();
    let c = corpus(&tmp.path().join("corpus"), 80, 7);
    let mut cfg = config(&c);
    let policy = SamplingPolicy::new(GroupField::SpeakerId, 2.0);
    cfg.sampling = BTreeMap::from([("alpha".to_string(), policy)]);
    let adapters = Adapters::from_config(&cfg).unwrap();
    let out = tmp.path().join("run");
    run_pipeline(&cfg, &adapters, &c.records, &out, &RunOptions::default()).unwrap();
    let sampled = read_manifest(out.join("stages/sample.jsonl")).unwrap();
    let mut per_speaker: BTreeMap<String, f64> = BTreeMap::new();
    for r in sampled.iter().filter(|r| Step::Sample.passed(r)) {
        if r.source_dataset == "alpha" {
            *per_speaker
                .entry(r.speaker_id.clone().unwrap())
                .or_default() += r.duration_s;
        }
    }
    assert!(
        per_speaker.values().all(|&s| s <= 2.0 + 1e-9),
        "{per_speaker:?}"
    );
    assert!(sampled.iter().any(|r| !Step::Sample.passed(r)));
    assert!(sampled
        .iter()
        .filter(|r| r.source_dataset == "beta")
        .all(|r| Step::Sample.passed(r)));
}

#[test]
fn relative_audio_paths_resolve_against_input_base() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path().join("corpus");
    let c = corpus(&base, 6, 8);
    let cfg = config(&c);
    let adapters = Adapters::from_config(&cfg).unwrap();
    let recs: Vec<UtteranceRecord> = c
        .records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.audio_path = r.audio_path.strip_prefix(&base).unwrap().to_path_buf();
            r
        })
        .collect();
    let opts = RunOptions {
        input_base: Some(base.clone()),
        ..Default::default()
    };
    let out = tmp.path().join("run");
    run_pipeline(&cfg, &adapters, &recs, &out, &opts).unwrap();
    let cleaned = read_manifest(out.join("stages/clean.jsonl")).unwrap();
    assert!(cleaned.iter().all(|r| Step::Clean.passed(r)));
}
