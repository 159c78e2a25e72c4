use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{Adapters, ConfigError, PipelineConfig};
use super::report::{render_stage_table, stage_table_from_dir};
use super::Step;
use crate::adapters::{invoke, AdapterError, AdapterRequest, Outcome, Task};
use crate::align::{align_request, apply_alignment, serialize_timestamp_tokens};
use crate::audio::{load_wav, peak_normalize, resample, write_wav, AudioError};
use crate::gates::{
    clean_filter, consensus_filter, provided_transcript_filter, punct_fidelity_gate, GateDecision,
};
use crate::manifest::{
    from_line, read_manifest, to_line, write_manifest, ManifestError, Stage, TranscriptOrigin,
    UtteranceRecord,
};
use crate::par::Executor;
use crate::sampler::{select_by_group, GroupField};
use crate::textnorm::{
    check_char_whitelist, expand_numbers, extract_mapping, revert_numbers, revert_text,
    tokenize_words, CharProfile, NumberLexicon,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{step} stage aborted at {id:?}: {source}; finished records are checkpointed, rerun to resume")]
    Adapter {
        step: Step,
        id: String,
        #[source]
        source: AdapterError,
    },
    #[error("stopped during {step} after {records} records; rerun to resume")]
    Interrupted { step: Step, records: usize },
    #[error("{0}")]
    Inconsistent(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Relative input audio paths are resolved against this directory.
    pub input_base: Option<PathBuf>,
    /// Stop with a checkpoint once this many records have been processed.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub input_records: usize,
    pub final_records: usize,
    /// Steps whose output already existed and were skipped.
    pub resumed: Vec<Step>,
    pub final_path: PathBuf,
    pub report: String,
}

#[derive(Serialize, Deserialize)]
struct PartialEntry {
    record: UtteranceRecord,
    decisions: Vec<GateDecision>,
}

type Done = (UtteranceRecord, Vec<GateDecision>);

fn canonical(rec: &UtteranceRecord) -> Result<UtteranceRecord, ManifestError> {
    from_line(&to_line(rec)?, 0)
}

fn settle(mut rec: UtteranceRecord, d: GateDecision) -> Done {
    rec.set_status(d.stage, d.status())
        .expect("only pending records are processed");
    (rec, vec![d])
}

fn write_atomic(path: &Path, body: &[u8]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, body).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub(super) fn file_stem_for(id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if clean == id && !id.starts_with('.') {
        clean
    } else {
        format!("{clean}-{:016x}", crate::adapters::mock::stable_hash(id))
    }
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    adapters: &'a Adapters,
    profile: CharProfile,
    lexicon: NumberLexicon,
    exec: Executor,
    out: PathBuf,
    opts: &'a RunOptions,
    processed: usize,
}

/// Runs every step in order, writing `stages/<step>.jsonl`, per-step audit
/// logs, `final.jsonl` and `report.txt` under `output_dir`.
///
/// Rerunning with the same output directory resumes: finished steps are read
/// back, and records already decided in an unfinished step are restored from
/// its checkpoint instead of being sent to the adapters again.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    adapters: &Adapters,
    input: &[UtteranceRecord],
    output_dir: impl AsRef<Path>,
    opts: &RunOptions,
) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let out = output_dir.as_ref().to_path_buf();
    for sub in ["stages", "checkpoints", "audit", "audio"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    check_config_snapshot(cfg, &out)?;
    let run_info = serde_json::json!({
        "seed": cfg.seed,
        "wer_basis": "normalized",
        "wer_direction": "max_of_both",
        "wer_threshold": cfg.wer_threshold,
        "wer_accept": "strictly_below",
        "miou_denominator": cfg.miou,
        "collar_s": cfg.collar_s,
        "quantization_step_s": cfg.quantization_step_s,
    });
    write_atomic(
        &out.join("audit").join("run.json"),
        format!("{run_info:#}\n").as_bytes(),
    )?;

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(input.len());
    for r in input {
        if !seen.insert(r.utterance_id.as_str()) {
            return Err(PipelineError::Inconsistent(format!(
                "duplicate utterance_id {:?}",
                r.utterance_id
            )));
        }
        r.validate()?;
        records.push(canonical(r)?);
    }
    let ids: Vec<String> = records.iter().map(|r| r.utterance_id.clone()).collect();

    let mut runner = Runner {
        cfg,
        adapters,
        profile: cfg.profile()?,
        lexicon: cfg.number_lexicon()?,
        exec: Executor::new(cfg.worker_pool_size),
        out: out.clone(),
        opts,
        processed: 0,
    };
    let mut resumed = Vec::new();
    for step in Step::ALL {
        let stage_path = out.join("stages").join(format!("{step}.jsonl"));
        if stage_path.exists() {
            let loaded = read_manifest(&stage_path)?;
            if loaded.len() != ids.len()
                || loaded.iter().zip(&ids).any(|(r, id)| &r.utterance_id != id)
            {
                return Err(PipelineError::Inconsistent(format!(
                    "{} does not match the input manifest",
                    stage_path.display()
                )));
            }
            log::info!("{step}: reusing {}", stage_path.display());
            records = loaded;
            resumed.push(step);
            continue;
        }
        let decisions = match step {
            Step::Sample => runner.sample(&mut records),
            _ => runner.run_waves(step, &mut records)?,
        };
        let mut audit = Vec::new();
        for d in &decisions {
            audit.extend(
                serde_json::to_string(d)
                    .expect("decisions serialize")
                    .bytes(),
            );
            audit.push(b'\n');
        }
        write_atomic(&out.join("audit").join(format!("{step}.jsonl")), &audit)?;
        write_manifest(&records, &stage_path)?;
        let partial = runner.partial_path(step);
        if partial.exists() {
            fs::remove_file(&partial).map_err(io_err(&partial))?;
        }
        let passed = decisions.iter().filter(|d| d.passed()).count();
        log::info!(
            "{step}: {passed} passed, {} rejected",
            decisions.len() - passed
        );
    }

    let finals: Vec<UtteranceRecord> = records
        .iter()
        .filter(|r| !r.is_rejected() && Step::NumRevert.passed(r))
        .cloned()
        .collect();
    let final_path = out.join("final.jsonl");
    write_manifest(&finals, &final_path)?;
    let table = stage_table_from_dir(&out)?;
    let report = render_stage_table(&table, &report_header(cfg));
    write_atomic(&out.join("report.txt"), report.as_bytes())?;
    Ok(RunSummary {
        input_records: records.len(),
        final_records: finals.len(),
        resumed,
        final_path,
        report,
    })
}

pub fn report_header(cfg: &PipelineConfig) -> Vec<String> {
    vec![format!(
        "seed={} wer_threshold={} max_duration_s={} quantization_step_s={} collar_s={}",
        cfg.seed, cfg.wer_threshold, cfg.max_duration_s, cfg.quantization_step_s, cfg.collar_s
    )]
}

fn check_config_snapshot(cfg: &PipelineConfig, out: &Path) -> Result<(), PipelineError> {
    let path = out.join("config.toml");
    let text = cfg.to_toml();
    if path.exists() {
        let old = fs::read_to_string(&path).map_err(io_err(&path))?;
        if old != text {
            return Err(PipelineError::Inconsistent(format!(
                "{} was produced with a different configuration; use a fresh output directory",
                out.display()
            )));
        }
        Ok(())
    } else {
        write_atomic(&path, text.as_bytes())
    }
}

impl Runner<'_> {
    fn partial_path(&self, step: Step) -> PathBuf {
        self.out
            .join("checkpoints")
            .join(format!("{step}.partial.jsonl"))
    }

    fn sample(&self, records: &mut [UtteranceRecord]) -> Vec<GateDecision> {
        let mut decided: Vec<Option<GateDecision>> = vec![None; records.len()];
        for (source, policy) in &self.cfg.sampling {
            let idx: Vec<usize> = (0..records.len())
                .filter(|&i| {
                    &records[i].source_dataset == source && Step::Sample.pending(&records[i])
                })
                .collect();
            let subset: Vec<UtteranceRecord> = idx.iter().map(|&i| records[i].clone()).collect();
            let field = match policy.group_field {
                GroupField::SpeakerId => "speaker_id",
                GroupField::GroupKey => "group_key",
                GroupField::Region => "region",
            };
            for (&i, keep) in idx.iter().zip(select_by_group(&subset, policy)) {
                let id = &records[i].utterance_id;
                decided[i] = Some(if keep {
                    GateDecision::pass(id, Stage::Sample)
                } else {
                    GateDecision::reject(
                        id,
                        Stage::Sample,
                        format!("{field} cap {}s reached", policy.cap_seconds),
                    )
                });
            }
        }
        let mut out = Vec::new();
        for (i, rec) in records.iter_mut().enumerate() {
            if !Step::Sample.pending(rec) {
                continue;
            }
            let d = decided[i]
                .take()
                .unwrap_or_else(|| GateDecision::pass(&rec.utterance_id, Stage::Sample));
            rec.set_status(Stage::Sample, d.status())
                .expect("pending record");
            out.push(d);
        }
        out
    }

    fn load_partial(&self, step: Step) -> Result<HashMap<String, PartialEntry>, PipelineError> {
        let path = self.partial_path(step);
        let mut done = HashMap::new();
        if !path.exists() {
            return Ok(done);
        }
        let lines: Vec<String> = BufReader::new(File::open(&path).map_err(io_err(&path))?)
            .lines()
            .collect::<Result<_, _>>()
            .map_err(io_err(&path))?;
        let n = lines.len();
        for (i, line) in lines.into_iter().enumerate() {
            match serde_json::from_str::<PartialEntry>(&line) {
                Ok(e) => {
                    done.insert(e.record.utterance_id.clone(), e);
                }
                // A torn final line from a crash mid-write is dropped.
                Err(_) if i + 1 == n => {
                    log::warn!("{}: ignoring incomplete last line", path.display())
                }
                Err(e) => {
                    return Err(PipelineError::Inconsistent(format!(
                        "{} line {}: {e}",
                        path.display(),
                        i + 1
                    )));
                }
            }
        }
        Ok(done)
    }

    fn run_waves(
        &mut self,
        step: Step,
        records: &mut [UtteranceRecord],
    ) -> Result<Vec<GateDecision>, PipelineError> {
        let mut restored = self.load_partial(step)?;
        let mut decisions: Vec<Vec<GateDecision>> = vec![Vec::new(); records.len()];
        let mut todo = Vec::new();
        for (i, rec) in records.iter_mut().enumerate() {
            if !step.pending(rec) {
                continue;
            }
            match restored.remove(&rec.utterance_id) {
                Some(e) => {
                    *rec = e.record;
                    decisions[i] = e.decisions;
                }
                None => todo.push(i),
            }
        }
        if !restored.is_empty() {
            log::warn!(
                "{step}: {} checkpointed ids are not pending and were ignored",
                restored.len()
            );
        }

        let path = self.partial_path(step);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut partial = BufWriter::new(file);
        let wave = self.cfg.worker_pool_size * self.cfg.batch_size;
        for chunk in todo.chunks(wave) {
            let inputs: Vec<UtteranceRecord> = chunk.iter().map(|&i| records[i].clone()).collect();
            let results = self.exec.map_chunks(&inputs, self.cfg.batch_size, |batch| {
                self.process(step, batch)
            });
            let mut failure = None;
            for (&i, result) in chunk.iter().zip(results) {
                match result {
                    Ok((rec, ds)) => {
                        let rec = canonical(&rec)?;
                        let entry = PartialEntry {
                            record: rec,
                            decisions: ds,
                        };
                        let line =
                            serde_json::to_string(&entry).expect("checkpoint entries serialize");
                        writeln!(partial, "{line}").map_err(io_err(&path))?;
                        records[i] = entry.record;
                        decisions[i] = entry.decisions;
                        self.processed += 1;
                    }
                    Err(e) => {
                        failure.get_or_insert((records[i].utterance_id.clone(), e));
                    }
                }
            }
            partial.flush().map_err(io_err(&path))?;
            if let Some((id, source)) = failure {
                return Err(PipelineError::Adapter { step, id, source });
            }
            if self.opts.stop_after.is_some_and(|n| self.processed >= n) {
                return Err(PipelineError::Interrupted {
                    step,
                    records: self.processed,
                });
            }
        }
        Ok(decisions.into_iter().flatten().collect())
    }

    fn process(&self, step: Step, batch: &[UtteranceRecord]) -> Vec<Result<Done, AdapterError>> {
        match step {
            Step::Sample => unreachable!("sampling runs over the whole corpus"),
            Step::Clean => batch.iter().map(|r| Ok(self.clean(r.clone()))).collect(),
            Step::Transcript => self.transcript(batch),
            Step::Punct => self.punct(batch),
            Step::NumExpand => self.num_expand(batch),
            Step::Align => self.align(batch),
            Step::NumRevert => batch
                .iter()
                .map(|r| Ok(self.num_revert(r.clone())))
                .collect(),
        }
    }

    fn clean(&self, mut rec: UtteranceRecord) -> Done {
        let d = clean_filter(&rec, &self.profile, self.cfg.max_duration_s);
        if !d.passed() {
            return settle(rec, d);
        }
        match self.prepare_audio(&rec) {
            Ok(path) => {
                rec.audio_path = path;
                rec.sample_rate_hz = self.cfg.target_sample_rate_hz;
                settle(rec, d)
            }
            Err(e) => {
                let id = rec.utterance_id.clone();
                settle(
                    rec,
                    GateDecision::reject(&id, Stage::Clean, format!("audio: {e}")),
                )
            }
        }
    }

    fn prepare_audio(&self, rec: &UtteranceRecord) -> Result<PathBuf, AudioError> {
        let src = match &self.opts.input_base {
            Some(base) if rec.audio_path.is_relative() => base.join(&rec.audio_path),
            _ => rec.audio_path.clone(),
        };
        let buf = load_wav(&src)?;
        let buf = peak_normalize(&buf, self.cfg.target_peak);
        let buf = resample(&buf, self.cfg.target_sample_rate_hz, self.cfg.resample_mode);
        let dst = self
            .out
            .join("audio")
            .join(format!("{}.wav", file_stem_for(&rec.utterance_id)));
        write_wav(&buf, &dst)?;
        Ok(dst)
    }

    fn transcript(&self, batch: &[UtteranceRecord]) -> Vec<Result<Done, AdapterError>> {
        enum Route {
            Manual,
            Provided(usize),
            Consensus(usize),
        }
        let mut filter_reqs = Vec::new();
        let mut consensus_reqs = Vec::new();
        let routes: Vec<Route> = batch
            .iter()
            .map(|r| {
                let req =
                    AdapterRequest::transcribe(&r.utterance_id, &r.audio_path.to_string_lossy());
                match (&r.transcript, r.transcript_origin) {
                    (Some(_), TranscriptOrigin::Manual) => Route::Manual,
                    (Some(_), _) => {
                        filter_reqs.push(req);
                        Route::Provided(filter_reqs.len() - 1)
                    }
                    (None, _) => {
                        consensus_reqs.push(req);
                        Route::Consensus(consensus_reqs.len() - 1)
                    }
                }
            })
            .collect();
        let call =
            |backend: &dyn crate::adapters::Backend, reqs: &[AdapterRequest]| -> Vec<Outcome> {
                if reqs.is_empty() {
                    Vec::new()
                } else {
                    invoke(backend, reqs)
                }
            };
        let filtered = call(self.adapters.asr_filter.as_ref(), &filter_reqs);
        let primary = call(self.adapters.asr_primary.as_ref(), &consensus_reqs);
        let secondary = call(self.adapters.asr_secondary.as_ref(), &consensus_reqs);
        let thr = self.cfg.wer_threshold;

        batch
            .iter()
            .zip(routes)
            .map(|(rec, route)| {
                let mut rec = rec.clone();
                let id = rec.utterance_id.clone();
                match route {
                    Route::Manual => {
                        let provided = rec.transcript.clone().unwrap_or_default();
                        Ok(settle(
                            rec,
                            provided_transcript_filter(
                                &id,
                                &provided,
                                None,
                                thr,
                                TranscriptOrigin::Manual,
                            ),
                        ))
                    }
                    Route::Provided(k) => {
                        let hyp = match text_of(&filtered[k], "asr_filter")? {
                            Ok(t) => t,
                            Err(reason) => {
                                return Ok(settle(
                                    rec,
                                    GateDecision::reject(&id, Stage::Filter, reason),
                                ))
                            }
                        };
                        let provided = rec.transcript.clone().unwrap_or_default();
                        let d = provided_transcript_filter(
                            &id,
                            &provided,
                            Some(&hyp),
                            thr,
                            rec.transcript_origin,
                        );
                        Ok(settle(rec, d))
                    }
                    Route::Consensus(k) => {
                        let a = text_of(&primary[k], "asr_primary")?;
                        let b = text_of(&secondary[k], "asr_secondary")?;
                        let (a, b) = match (a, b) {
                            (Ok(a), Ok(b)) => (a, b),
                            (Err(reason), _) | (_, Err(reason)) => {
                                return Ok(settle(
                                    rec,
                                    GateDecision::reject(&id, Stage::Transcribe, reason),
                                ));
                            }
                        };
                        let d = consensus_filter(&id, Some(&a), Some(&b), thr);
                        if !d.passed() {
                            return Ok(settle(rec, d));
                        }
                        if let Err(v) = check_char_whitelist(&a, &self.profile) {
                            let reason = format!("generated transcript: {v}");
                            return Ok(settle(
                                rec,
                                GateDecision::reject(&id, Stage::Transcribe, reason),
                            ));
                        }
                        rec.transcript = Some(a);
                        rec.transcript_origin = TranscriptOrigin::Generated;
                        Ok(settle(rec, d))
                    }
                }
            })
            .collect()
    }

    fn punct(&self, batch: &[UtteranceRecord]) -> Vec<Result<Done, AdapterError>> {
        let reqs: Vec<AdapterRequest> = batch
            .iter()
            .map(|r| AdapterRequest::with_text(&r.utterance_id, Task::Punctuate, transcript(r)))
            .collect();
        let outs = invoke(self.adapters.punctuate.as_ref(), &reqs);
        batch
            .iter()
            .zip(outs)
            .map(|(rec, out)| {
                let mut rec = rec.clone();
                let id = rec.utterance_id.clone();
                let restored = match text_of(&out, "punctuate")? {
                    Ok(t) => t,
                    Err(reason) => {
                        return Ok(settle(rec, GateDecision::reject(&id, Stage::Punct, reason)))
                    }
                };
                let d = punct_fidelity_gate(&id, transcript(&rec), &restored);
                if d.passed() {
                    rec.transcript = Some(restored);
                }
                Ok(settle(rec, d))
            })
            .collect()
    }

    fn num_expand(&self, batch: &[UtteranceRecord]) -> Vec<Result<Done, AdapterError>> {
        let has_digits = |r: &UtteranceRecord| transcript(r).bytes().any(|b| b.is_ascii_digit());
        let remote = self.adapters.normalize_numbers.as_ref();
        let reqs: Vec<AdapterRequest> = batch
            .iter()
            .filter(|r| remote.is_some() && has_digits(r))
            .map(|r| {
                AdapterRequest::with_text(&r.utterance_id, Task::NormalizeNumbers, transcript(r))
            })
            .collect();
        let mut outs = match remote {
            Some(b) if !reqs.is_empty() => invoke(b.as_ref(), &reqs).into_iter(),
            _ => Vec::new().into_iter(),
        };
        batch
            .iter()
            .map(|rec| {
                let mut rec = rec.clone();
                let id = rec.utterance_id.clone();
                let reject = |rec, reason: String| {
                    settle(rec, GateDecision::reject(&id, Stage::NumExpand, reason))
                };
                if !has_digits(&rec) {
                    return Ok(settle(rec, GateDecision::pass(&id, Stage::NumExpand)));
                }
                let raw = transcript(&rec).to_string();
                let expanded = if remote.is_some() {
                    let out = outs.next().expect("one outcome per request");
                    match text_of(&out, "normalize_numbers")? {
                        Ok(spoken) => {
                            extract_mapping(&raw, &spoken, Some(&self.lexicon)).map(|m| (spoken, m))
                        }
                        Err(reason) => return Ok(reject(rec, reason)),
                    }
                } else {
                    expand_numbers(&raw, &self.lexicon).map(|e| (e.text, e.mappings))
                };
                match expanded {
                    Ok((spoken, _)) if spoken.bytes().any(|b| b.is_ascii_digit()) => {
                        Ok(reject(rec, "digits remain after normalization".into()))
                    }
                    Ok((spoken, mappings)) => {
                        rec.transcript = Some(spoken);
                        rec.numeric_mappings = (!mappings.is_empty()).then_some(mappings);
                        Ok(settle(rec, GateDecision::pass(&id, Stage::NumExpand)))
                    }
                    Err(e) => Ok(reject(rec, e.to_string())),
                }
            })
            .collect()
    }

    fn align(&self, batch: &[UtteranceRecord]) -> Vec<Result<Done, AdapterError>> {
        let reqs: Vec<AdapterRequest> = batch.iter().map(align_request).collect();
        let outs = invoke(self.adapters.align.as_ref(), &reqs);
        batch
            .iter()
            .zip(outs)
            .map(|(rec, out)| {
                let mut rec = rec.clone();
                let d = apply_alignment(&mut rec, out)?;
                Ok(settle(rec, d))
            })
            .collect()
    }

    fn num_revert(&self, mut rec: UtteranceRecord) -> Done {
        let id = rec.utterance_id.clone();
        let reject =
            |rec, reason: String| settle(rec, GateDecision::reject(&id, Stage::NumRevert, reason));
        let maps = rec.numeric_mappings.clone().unwrap_or_default();
        let Some(words) = rec.words.as_deref() else {
            return reject(rec, "no word timestamps".into());
        };
        let reverted = match revert_numbers(words, &maps)
            .and_then(|w| Ok((w, revert_text(transcript(&rec), &maps)?)))
        {
            Ok(v) => v,
            Err(e) => return reject(rec, e.to_string()),
        };
        let (words, text) = reverted;
        if tokenize_words(&text)
            .into_iter()
            .ne(words.iter().map(|w| w.text.as_str()))
        {
            return reject(
                rec,
                "reverted words do not match reverted transcript".into(),
            );
        }
        match serialize_timestamp_tokens(&words, self.cfg.quantization_step_s) {
            Ok(ts) => {
                rec.words = Some(words);
                rec.transcript = Some(text);
                rec.ts_text = Some(ts);
                settle(rec, GateDecision::pass(&id, Stage::NumRevert))
            }
            Err(e) => reject(rec, e.to_string()),
        }
    }
}

fn transcript(rec: &UtteranceRecord) -> &str {
    rec.transcript.as_deref().unwrap_or_default()
}

/// Text payload of an outcome. Retryable failures propagate as `Err`;
/// permanent ones become a rejection reason.
fn text_of(out: &Outcome, role: &str) -> Result<Result<String, String>, AdapterError> {
    match out {
        Ok(r) => Ok(Ok(r.text.clone().unwrap_or_default())),
        Err(e) if e.is_retryable() => Err(e.clone()),
        Err(e) => Ok(Err(format!("{role}: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_stems_are_safe_and_distinct() {
        assert_eq!(file_stem_for("abc-1.2_x"), "abc-1.2_x");
        let a = file_stem_for("a/b");
        let b = file_stem_for("a_b");
        assert!(a.starts_with("a_b-") && a != b);
        assert!(file_stem_for("..").starts_with("..-"));
        assert_ne!(file_stem_for("ü"), file_stem_for("ö"));
    }
}
