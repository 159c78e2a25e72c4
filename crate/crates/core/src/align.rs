//! Word alignment through an adapter, timestamp quantization and
//! timestamp-token serialization.

use std::fmt;

use thiserror::Error;

use crate::adapters::{invoke, AdapterError, AdapterRequest, Backend, Outcome};
use crate::gates::GateDecision;
use crate::manifest::{check_word_sequence, millis, AlignedWord, Stage, UtteranceRecord};
use crate::textnorm::tokenize_words;

pub const MAX_SECONDS_MS: u32 = 30_000;
pub const DEFAULT_STEP_S: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("timestamp {0} outside [0, 30 s + step/2]")]
    Range(f64),
    #[error(
        "invalid quantization step {0} s: must be a positive multiple of 0.01 s dividing 30 s"
    )]
    Step(f64),
    #[error("word {0:?} cannot be written as a timestamp token")]
    Word(String),
    #[error("token stream, byte {pos}: {message}")]
    Parse { pos: usize, message: String },
}

/// Converts a step in seconds to whole milliseconds, checking that it lies on
/// the centisecond grid and divides 30 s.
pub fn step_ms(step_s: f64) -> Result<u32, AlignError> {
    let ms = (step_s * 1000.0).round();
    if !(step_s > 0.0)
        || (ms - step_s * 1000.0).abs() > 1e-6
        || ms < 10.0
        || ms > MAX_SECONDS_MS as f64
    {
        return Err(AlignError::Step(step_s));
    }
    let ms = ms as u32;
    if !ms.is_multiple_of(10) || !MAX_SECONDS_MS.is_multiple_of(ms) {
        return Err(AlignError::Step(step_s));
    }
    Ok(ms)
}

/// A time on the quantization grid, as a whole number of steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuantizedTimestamp {
    pub ticks: u32,
    pub step_ms: u32,
}

impl QuantizedTimestamp {
    pub fn max_ticks(step_ms: u32) -> u32 {
        MAX_SECONDS_MS / step_ms
    }

    pub fn millis(self) -> u32 {
        self.ticks * self.step_ms
    }

    pub fn seconds(self) -> f64 {
        self.millis() as f64 / 1000.0
    }

    fn centis(self) -> u32 {
        self.millis() / 10
    }
}

impl fmt::Display for QuantizedTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.centis();
        write!(f, "<|{}.{:02}|>", c / 100, c % 100)
    }
}

/// Snaps `t` to the nearest grid point; exact halves go up.
pub fn quantize(t: f64, step_s: f64) -> Result<QuantizedTimestamp, AlignError> {
    let step_ms = step_ms(step_s)?;
    let step = step_ms as f64 / 1000.0;
    if !(t >= 0.0 && t <= MAX_SECONDS_MS as f64 / 1000.0 + step / 2.0 + 1e-9) {
        return Err(AlignError::Range(t));
    }
    let max = QuantizedTimestamp::max_ticks(step_ms) as i64;
    let k = (t / step).floor() as i64;
    // Pick among neighbours by distance so that decimal ties such as 0.03
    // with a 0.02 step round up regardless of binary representation.
    let mut best = k.clamp(0, max);
    let mut best_d = f64::INFINITY;
    for cand in (k - 1).max(0)..=(k + 2).min(max) {
        let d = (cand as f64 * step - t).abs();
        if d < best_d - 1e-9 || (d - best_d).abs() <= 1e-9 {
            best = cand;
            best_d = d;
        }
    }
    Ok(QuantizedTimestamp {
        ticks: best as u32,
        step_ms,
    })
}

/// A word with quantized start and end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampedToken {
    pub text: String,
    pub start: QuantizedTimestamp,
    pub end: QuantizedTimestamp,
}

pub fn quantize_words(
    words: &[AlignedWord],
    step_s: f64,
) -> Result<Vec<TimestampedToken>, AlignError> {
    words
        .iter()
        .map(|w| {
            if w.text.is_empty()
                || w.text.contains("<|")
                || w.text.contains("|>")
                || w.text.contains(char::is_whitespace)
            {
                return Err(AlignError::Word(w.text.clone()));
            }
            Ok(TimestampedToken {
                text: w.text.clone(),
                start: quantize(w.start_s, step_s)?,
                end: quantize(w.end_s, step_s)?,
            })
        })
        .collect()
}

pub fn render_tokens(tokens: &[TimestampedToken]) -> String {
    tokens
        .iter()
        .map(|t| format!("{}{}{}", t.start, t.text, t.end))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `"<|s|>word<|e|> ..."` with two-decimal seconds.
pub fn serialize_timestamp_tokens(
    words: &[AlignedWord],
    step_s: f64,
) -> Result<String, AlignError> {
    Ok(render_tokens(&quantize_words(words, step_s)?))
}

fn parse_token(s: &str, pos: usize, step_ms: u32) -> Result<QuantizedTimestamp, AlignError> {
    let err = |message: String| AlignError::Parse { pos, message };
    let body = s
        .strip_prefix("<|")
        .and_then(|r| r.strip_suffix("|>"))
        .ok_or_else(|| err(format!("expected <|SS.ss|>, found {s:?}")))?;
    let (secs, frac) = body
        .split_once('.')
        .ok_or_else(|| err(format!("no decimal point in {s:?}")))?;
    let digits = |x: &str| !x.is_empty() && x.bytes().all(|b| b.is_ascii_digit());
    if !digits(secs)
        || frac.len() != 2
        || !digits(frac)
        || (secs.len() > 1 && secs.starts_with('0'))
    {
        return Err(err(format!("malformed timestamp {s:?}")));
    }
    let ms = secs
        .parse::<u32>()
        .ok()
        .and_then(|v| v.checked_mul(1000))
        .and_then(|v| v.checked_add(frac.parse::<u32>().ok()? * 10))
        .ok_or_else(|| err(format!("timestamp {s:?} out of range")))?;
    if ms % step_ms != 0 || ms > MAX_SECONDS_MS {
        return Err(err(format!(
            "timestamp {s:?} is not on the {step_ms} ms grid"
        )));
    }
    Ok(QuantizedTimestamp {
        ticks: ms / step_ms,
        step_ms,
    })
}

/// Inverse of [`serialize_timestamp_tokens`]. Accepts only text that the
/// serializer could have produced.
pub fn parse_timestamp_tokens(s: &str, step_s: f64) -> Result<Vec<TimestampedToken>, AlignError> {
    let step_ms = step_ms(step_s)?;
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut pos = 0;
    for piece in s.split(' ') {
        let perr = |message: &str| AlignError::Parse {
            pos,
            message: message.to_string(),
        };
        let close = piece
            .find("|>")
            .ok_or_else(|| perr("missing start token"))?
            + 2;
        let open = piece.rfind("<|").ok_or_else(|| perr("missing end token"))?;
        if open < close {
            return Err(perr("missing word between tokens"));
        }
        let start = parse_token(&piece[..close], pos, step_ms)?;
        let end = parse_token(&piece[open..], pos + open, step_ms)?;
        let text = &piece[close..open];
        if text.is_empty() || text.contains("<|") || text.contains("|>") {
            return Err(perr("malformed word"));
        }
        out.push(TimestampedToken {
            text: text.to_string(),
            start,
            end,
        });
        pos += piece.len() + 1;
    }
    Ok(out)
}

pub fn align_request(rec: &UtteranceRecord) -> AdapterRequest {
    AdapterRequest::align(
        &rec.utterance_id,
        &rec.audio_path.to_string_lossy(),
        rec.transcript.as_deref().unwrap_or_default(),
    )
}

/// Applies an aligner outcome to `rec`. Retryable adapter failures are
/// returned as errors; everything else ends in a decision, and invalid
/// alignments reject the record without being repaired.
pub fn apply_alignment(
    rec: &mut UtteranceRecord,
    outcome: Outcome,
) -> Result<GateDecision, AdapterError> {
    let id = rec.utterance_id.clone();
    let reject = |reason: String| Ok(GateDecision::reject(&id, Stage::Align, reason));
    let resp = match outcome {
        Ok(r) => r,
        Err(e) if e.is_retryable() => return Err(e),
        Err(e) => return reject(e.to_string()),
    };
    let Some(mut words) = resp.aligned_words() else {
        return reject("aligner returned no words".into());
    };
    let transcript = rec.transcript.as_deref().unwrap_or_default();
    let expected = tokenize_words(transcript);
    if expected.len() != words.len() {
        return reject(format!(
            "word count mismatch {}≠{}",
            expected.len(),
            words.len()
        ));
    }
    if let Some(i) = expected.iter().zip(&words).position(|(e, w)| *e != w.text) {
        return reject(format!(
            "word {i} text mismatch {:?}≠{:?}",
            expected[i], words[i].text
        ));
    }
    if !words
        .iter()
        .all(|w| w.start_s.is_finite() && w.end_s.is_finite())
    {
        return reject("non-finite timestamp".into());
    }
    // Times are stored at millisecond precision; invariants are checked on
    // what will be stored.
    for w in &mut words {
        w.start_s = millis::round(w.start_s);
        w.end_s = millis::round(w.end_s);
    }
    if let Err(e) = check_word_sequence(&words, Some(rec.duration_s)) {
        return reject(e);
    }
    rec.words = Some(words);
    Ok(GateDecision::pass(&id, Stage::Align))
}

pub fn align_record(
    rec: &mut UtteranceRecord,
    aligner: &dyn Backend,
) -> Result<GateDecision, AdapterError> {
    let outcome = invoke(aligner, &[align_request(rec)])
        .pop()
        .expect("one outcome");
    apply_alignment(rec, outcome)
}
