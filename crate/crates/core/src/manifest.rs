//! Corpus data model and the newline-delimited manifest format.
//!
//! One JSON object per line, UTF-8, each carrying `"schema": 1`. Times are
//! decimal seconds rounded to the millisecond on write.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unsupported schema version {found}")]
    Schema { line: usize, found: u32 },
    #[error("line {line}: duplicate utterance_id {id:?} (first seen on line {first})")]
    Duplicate {
        line: usize,
        first: usize,
        id: String,
    },
    #[error("serialization failed for {id:?}: {source}")]
    Serialize {
        id: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("record {id:?}: {message}")]
    Invalid { id: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Canonical pipeline stage names, declared in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Sample,
    Clean,
    Transcribe,
    Filter,
    Punct,
    #[serde(rename = "numexpand")]
    NumExpand,
    Align,
    #[serde(rename = "numrevert")]
    NumRevert,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Sample,
        Stage::Clean,
        Stage::Transcribe,
        Stage::Filter,
        Stage::Punct,
        Stage::NumExpand,
        Stage::Align,
        Stage::NumRevert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Sample => "sample",
            Stage::Clean => "clean",
            Stage::Transcribe => "transcribe",
            Stage::Filter => "filter",
            Stage::Punct => "punct",
            Stage::NumExpand => "numexpand",
            Stage::Align => "align",
            Stage::NumRevert => "numrevert",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Pending,
    Passed,
    Rejected(String),
}

impl StageStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, StageStatus::Pending)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TranscriptOrigin {
    Manual,
    #[default]
    Provided,
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    North,
    Central,
    South,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::North => "north",
            Region::Central => "central",
            Region::South => "south",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One word with its time span in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedWord {
    pub text: String,
    #[serde(with = "millis")]
    pub start_s: f64,
    #[serde(with = "millis")]
    pub end_s: f64,
}

impl AlignedWord {
    pub fn new(text: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        AlignedWord {
            text: text.into(),
            start_s,
            end_s,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.text.is_empty() {
            return Err("empty word text".into());
        }
        if self.text.chars().any(char::is_whitespace) {
            return Err(format!("word {:?} contains whitespace", self.text));
        }
        if !(self.start_s >= 0.0 && self.start_s <= self.end_s) {
            return Err(format!(
                "word {:?} has invalid interval ({}, {})",
                self.text, self.start_s, self.end_s
            ));
        }
        Ok(())
    }
}

/// Checks that `words` are individually valid, sorted, non-overlapping, and
/// end no later than `duration_s` (when given).
pub fn check_word_sequence(words: &[AlignedWord], duration_s: Option<f64>) -> Result<(), String> {
    let mut prev_end = 0.0;
    for (i, w) in words.iter().enumerate() {
        w.check().map_err(|e| format!("word {i}: {e}"))?;
        if i > 0 && w.start_s < prev_end {
            return Err(format!(
                "word {i} {:?} starts at {} before previous end {}",
                w.text, w.start_s, prev_end
            ));
        }
        if let Some(d) = duration_s {
            if w.end_s > d {
                return Err(format!(
                    "word {i} {:?} ends at {} past duration {d}",
                    w.text, w.end_s
                ));
            }
        }
        prev_end = w.end_s;
    }
    Ok(())
}

/// Digit-form to spoken-form correspondence for one number in a transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericSpanMapping {
    pub digit_form: String,
    pub spoken_form: String,
    pub word_index_start: usize,
    pub word_index_count: usize,
}

impl NumericSpanMapping {
    pub fn check(&self) -> Result<(), String> {
        if self.word_index_count == 0 {
            return Err(format!("mapping for {:?} covers no words", self.digit_form));
        }
        if self.digit_form.is_empty() || !self.digit_form.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!(
                "digit_form {:?} is not a digit string",
                self.digit_form
            ));
        }
        let n = self.spoken_form.split_whitespace().count();
        if n != self.word_index_count {
            return Err(format!(
                "spoken_form {:?} has {n} words, mapping says {}",
                self.spoken_form, self.word_index_count
            ));
        }
        Ok(())
    }

    pub fn word_range(&self) -> std::ops::Range<usize> {
        self.word_index_start..self.word_index_start + self.word_index_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub source_dataset: String,
    pub audio_path: PathBuf,
    pub sample_rate_hz: u32,
    #[serde(with = "millis")]
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    #[serde(default)]
    pub transcript_origin: TranscriptOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<AlignedWord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_mappings: Option<Vec<NumericSpanMapping>>,
    /// Timestamp-token rendering of `words` for training export.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts_text: Option<String>,
    #[serde(default)]
    pub stage_status: BTreeMap<Stage, StageStatus>,
}

impl UtteranceRecord {
    pub fn new(
        utterance_id: impl Into<String>,
        source_dataset: impl Into<String>,
        audio_path: impl Into<PathBuf>,
        sample_rate_hz: u32,
        duration_s: f64,
    ) -> Self {
        UtteranceRecord {
            utterance_id: utterance_id.into(),
            source_dataset: source_dataset.into(),
            audio_path: audio_path.into(),
            sample_rate_hz,
            duration_s,
            transcript: None,
            transcript_origin: TranscriptOrigin::default(),
            speaker_id: None,
            group_key: None,
            region: None,
            words: None,
            numeric_mappings: None,
            ts_text: None,
            stage_status: BTreeMap::new(),
        }
    }

    pub fn with_transcript(mut self, text: impl Into<String>, origin: TranscriptOrigin) -> Self {
        self.transcript = Some(text.into());
        self.transcript_origin = origin;
        self
    }

    pub fn status(&self, stage: Stage) -> Option<&StageStatus> {
        self.stage_status.get(&stage)
    }

    /// Records a stage outcome. A rejected stage stays rejected.
    pub fn set_status(&mut self, stage: Stage, status: StageStatus) -> Result<(), ManifestError> {
        if let Some(StageStatus::Rejected(reason)) = self.stage_status.get(&stage) {
            if !matches!(status, StageStatus::Rejected(_)) {
                return Err(ManifestError::Invalid {
                    id: self.utterance_id.clone(),
                    message: format!("stage {stage} already rejected ({reason})"),
                });
            }
        }
        self.stage_status.insert(stage, status);
        Ok(())
    }

    pub fn is_rejected(&self) -> bool {
        self.stage_status
            .values()
            .any(|s| matches!(s, StageStatus::Rejected(_)))
    }

    pub fn rejection(&self) -> Option<(Stage, &str)> {
        self.stage_status.iter().find_map(|(stage, s)| match s {
            StageStatus::Rejected(r) => Some((*stage, r.as_str())),
            _ => None,
        })
    }

    /// Validates the record-level invariants.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let invalid = |message: String| ManifestError::Invalid {
            id: self.utterance_id.clone(),
            message,
        };
        if self.utterance_id.is_empty() {
            return Err(invalid("empty utterance_id".into()));
        }
        if self.sample_rate_hz == 0 {
            return Err(invalid("sample_rate_hz must be positive".into()));
        }
        if !(self.duration_s >= 0.0) || !self.duration_s.is_finite() {
            return Err(invalid(format!("invalid duration {}", self.duration_s)));
        }
        if self.status(Stage::Clean) == Some(&StageStatus::Passed) && self.duration_s <= 0.0 {
            return Err(invalid("clean stage passed with zero duration".into()));
        }
        if let Some(words) = &self.words {
            check_word_sequence(words, Some(self.duration_s)).map_err(invalid)?;
        }
        if let Some(maps) = &self.numeric_mappings {
            for m in maps {
                m.check().map_err(invalid)?;
            }
        }
        Ok(())
    }
}

/// Serde helpers that write seconds rounded to the millisecond.
pub mod millis {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn round(x: f64) -> f64 {
        (x * 1000.0).round() / 1000.0
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(round(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d)
    }
}

#[derive(Serialize)]
struct LineOut<'a> {
    schema: u32,
    #[serde(flatten)]
    record: &'a UtteranceRecord,
}

#[derive(Deserialize)]
struct LineIn {
    #[serde(default = "default_schema")]
    schema: u32,
    #[serde(flatten)]
    record: UtteranceRecord,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

/// Serializes one record to its manifest line (without the trailing newline).
pub fn to_line(record: &UtteranceRecord) -> Result<String, ManifestError> {
    serde_json::to_string(&LineOut {
        schema: SCHEMA_VERSION,
        record,
    })
    .map_err(|source| ManifestError::Serialize {
        id: record.utterance_id.clone(),
        source,
    })
}

/// Parses one manifest line; `line_no` is only used for error reporting.
pub fn from_line(line: &str, line_no: usize) -> Result<UtteranceRecord, ManifestError> {
    let parsed: LineIn = serde_json::from_str(line).map_err(|source| ManifestError::Parse {
        line: line_no,
        source,
    })?;
    if parsed.schema != SCHEMA_VERSION {
        return Err(ManifestError::Schema {
            line: line_no,
            found: parsed.schema,
        });
    }
    Ok(parsed.record)
}

pub fn parse_manifest<R: BufRead>(reader: R) -> Result<Vec<UtteranceRecord>, ManifestError> {
    let mut out = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec = from_line(&line, line_no)?;
        if let Some(&first) = seen.get(&rec.utterance_id) {
            return Err(ManifestError::Duplicate {
                line: line_no,
                first,
                id: rec.utterance_id,
            });
        }
        seen.insert(rec.utterance_id.clone(), line_no);
        out.push(rec);
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<UtteranceRecord>, ManifestError> {
    let file = File::open(path)?;
    parse_manifest(BufReader::new(file))
}

pub fn write_records<W: Write>(records: &[UtteranceRecord], mut w: W) -> Result<(), ManifestError> {
    for rec in records {
        let line = to_line(rec)?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the manifest via a temporary sibling file and a rename, so readers
/// never observe a half-written manifest.
pub fn write_manifest(
    records: &[UtteranceRecord],
    path: impl AsRef<Path>,
) -> Result<(), ManifestError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let file = File::create(&tmp)?;
        write_records(records, BufWriter::new(file))?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    SourceDataset,
    Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub group: String,
    pub hours_passed: f64,
    pub hours_rejected: f64,
}

fn group_name(rec: &UtteranceRecord, by: GroupBy) -> String {
    match by {
        GroupBy::SourceDataset => rec.source_dataset.clone(),
        GroupBy::Region => rec
            .region
            .map_or("unknown".to_string(), |r| r.name().to_string()),
    }
}

/// Passed/rejected hours per group. A record counts as rejected when any of
/// its stages was rejected. Rows are sorted by passed hours, descending, then
/// by group name.
pub fn stage_report(records: &[UtteranceRecord], group_by: GroupBy) -> Vec<ReportRow> {
    report_with(records, group_by, |r| Some(!r.is_rejected()))
}

/// Same as [`stage_report`] but judged on a single stage; records that never
/// reached `stage` are left out.
pub fn stage_report_at(
    records: &[UtteranceRecord],
    group_by: GroupBy,
    stage: Stage,
) -> Vec<ReportRow> {
    report_with(records, group_by, |r| match r.status(stage) {
        Some(StageStatus::Passed) => Some(true),
        Some(StageStatus::Rejected(_)) => Some(false),
        _ => None,
    })
}

fn report_with(
    records: &[UtteranceRecord],
    group_by: GroupBy,
    verdict: impl Fn(&UtteranceRecord) -> Option<bool>,
) -> Vec<ReportRow> {
    let mut secs: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for rec in records {
        let Some(passed) = verdict(rec) else { continue };
        let entry = secs.entry(group_name(rec, group_by)).or_default();
        if passed {
            entry.0 += rec.duration_s;
        } else {
            entry.1 += rec.duration_s;
        }
    }
    let mut rows: Vec<ReportRow> = secs
        .into_iter()
        .map(|(group, (p, r))| ReportRow {
            group,
            hours_passed: p / 3600.0,
            hours_rejected: r / 3600.0,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.hours_passed
            .total_cmp(&a.hours_passed)
            .then_with(|| a.group.cmp(&b.group))
    });
    rows
}

/// Renders report rows as a fixed-width table with hours to two decimals.
pub fn render_report(rows: &[ReportRow], group_header: &str) -> String {
    let width = rows
        .iter()
        .map(|r| r.group.chars().count())
        .chain([group_header.len(), 5])
        .max()
        .unwrap_or(5);
    let mut out = format!(
        "{group_header:<width$}  {:>10}  {:>10}\n",
        "passed_h", "rejected_h"
    );
    let (mut tp, mut tr) = (0.0, 0.0);
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>10.2}  {:>10.2}\n",
            r.group, r.hours_passed, r.hours_rejected
        ));
        tp += r.hours_passed;
        tr += r.hours_rejected;
    }
    out.push_str(&format!("{:<width$}  {tp:>10.2}  {tr:>10.2}\n", "Total"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, src: &str, dur: f64) -> UtteranceRecord {
        UtteranceRecord::new(id, src, format!("audio/{id}.wav"), 16000, dur)
    }

    #[test]
    fn empty_input_is_empty_list() {
        assert!(parse_manifest("".as_bytes()).unwrap().is_empty());
        assert!(parse_manifest("\n\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_names_its_line() {
        let lines: Vec<String> = ["a", "b", "a"]
            .iter()
            .map(|id| to_line(&rec(id, "s", 1.0)).unwrap())
            .collect();
        let err = parse_manifest(lines.join("\n").as_bytes()).unwrap_err();
        match err {
            ManifestError::Duplicate { line, first, id } => {
                assert_eq!((line, first, id.as_str()), (3, 1, "a"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let good = to_line(&rec("a", "s", 1.0)).unwrap();
        let text = format!("{good}\n{{not json\n");
        let err = parse_manifest(text.as_bytes()).unwrap_err();
        assert!(matches!(err, ManifestError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let line = to_line(&rec("a", "s", 1.0))
            .unwrap()
            .replace("\"schema\":1", "\"schema\":2");
        assert!(matches!(
            parse_manifest(line.as_bytes()),
            Err(ManifestError::Schema { found: 2, .. })
        ));
    }

    #[test]
    fn line_carries_schema_and_field_names() {
        let mut r = rec("u1", "VIVOS", 2.5).with_transcript("xin chào", TranscriptOrigin::Manual);
        r.words = Some(vec![AlignedWord::new("xin", 0.0, 0.5)]);
        r.stage_status.insert(Stage::Clean, StageStatus::Passed);
        r.stage_status.insert(
            Stage::Filter,
            StageStatus::Rejected("wer 0.100 >= 0.050".into()),
        );
        let line = to_line(&r).unwrap();
        assert!(
            line.starts_with("{\"schema\":1,\"utterance_id\":\"u1\""),
            "{line}"
        );
        for key in [
            "\"transcript_origin\":\"manual\"",
            "\"start_s\":0.0",
            "\"clean\":\"passed\"",
            "\"filter\":{\"rejected\"",
        ] {
            assert!(line.contains(key), "{key} missing from {line}");
        }
        assert_eq!(from_line(&line, 1).unwrap(), r);
    }

    #[test]
    fn times_are_written_to_the_millisecond() {
        let mut r = rec("u", "s", 1.23456);
        r.words = Some(vec![AlignedWord::new("a", 0.0004, 0.1236)]);
        let back = from_line(&to_line(&r).unwrap(), 1).unwrap();
        assert_eq!(back.duration_s, 1.235);
        assert_eq!(back.words.unwrap()[0], AlignedWord::new("a", 0.0, 0.124));
    }

    #[test]
    fn rejected_stage_cannot_become_passed() {
        let mut r = rec("u", "s", 1.0);
        r.set_status(Stage::Clean, StageStatus::Rejected("x".into()))
            .unwrap();
        assert!(r.set_status(Stage::Clean, StageStatus::Passed).is_err());
        r.set_status(Stage::Punct, StageStatus::Passed).unwrap();
    }

    #[test]
    fn validate_catches_overlapping_words() {
        let mut r = rec("u", "s", 2.0);
        r.words = Some(vec![
            AlignedWord::new("a", 0.0, 1.0),
            AlignedWord::new("b", 0.9, 1.5),
        ]);
        assert!(r.validate().is_err());
        r.words = Some(vec![
            AlignedWord::new("a", 0.0, 1.0),
            AlignedWord::new("b", 1.0, 2.5),
        ]);
        assert!(r.validate().is_err());
        r.words = Some(vec![
            AlignedWord::new("a", 0.0, 1.0),
            AlignedWord::new("b", 1.0, 2.0),
        ]);
        r.validate().unwrap();
    }

    #[test]
    fn validate_requires_duration_after_clean() {
        let mut r = rec("u", "s", 0.0);
        r.validate().unwrap();
        r.stage_status.insert(Stage::Clean, StageStatus::Passed);
        assert!(r.validate().is_err());
    }

    #[test]
    fn report_two_half_hour_records() {
        let rows = stage_report(
            &[rec("a", "src", 1800.0), rec("b", "src", 1800.0)],
            GroupBy::SourceDataset,
        );
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].group, "src");
        assert!((rows[0].hours_passed - 1.0).abs() < 1e-12);
        assert_eq!(rows[0].hours_rejected, 0.0);
    }

    #[test]
    fn report_by_region_sorted_descending() {
        let mut rs = vec![
            rec("a", "s", 3600.0),
            rec("b", "s", 3600.0),
            rec("c", "s", 3600.0),
            rec("d", "s", 60.0),
        ];
        rs[0].region = Some(Region::North);
        rs[1].region = Some(Region::North);
        rs[2].region = Some(Region::South);
        let rows = stage_report(&rs, GroupBy::Region);
        let got: Vec<(&str, String)> = rows
            .iter()
            .map(|r| (r.group.as_str(), format!("{:.2}", r.hours_passed)))
            .collect();
        assert_eq!(
            got,
            vec![
                ("north", "2.00".into()),
                ("south", "1.00".into()),
                ("unknown", "0.02".into())
            ]
        );
    }

    #[test]
    fn report_at_stage_skips_records_that_never_arrived() {
        let mut a = rec("a", "s", 3600.0);
        a.stage_status.insert(Stage::Clean, StageStatus::Passed);
        let mut b = rec("b", "s", 7200.0);
        b.stage_status
            .insert(Stage::Clean, StageStatus::Rejected("long".into()));
        let c = rec("c", "s", 3600.0);
        let rows = stage_report_at(&[a, b, c], GroupBy::SourceDataset, Stage::Clean);
        assert_eq!(rows[0].hours_passed, 1.0);
        assert_eq!(rows[0].hours_rejected, 2.0);
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(Stage::from_name(s.name()), Some(s));
            assert_eq!(
                serde_json::to_string(&s).unwrap(),
                format!("\"{}\"", s.name())
            );
        }
    }
}
