//! O-WER / N-WER and word-timestamp scoring (collar F1, mIoU).
//!
//! Corpus figures are computed from pooled counts: per-utterance results are
//! merged through the accumulators, never averaged as ratios.

use serde::{Deserialize, Serialize};

use crate::manifest::AlignedWord;
use crate::textnorm::{normalize_for_wer, tokenize_words};

/// Tolerance used when comparing timestamp deviations against the collar.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
    pub wer: f64,
    /// Empty reference with a non-empty hypothesis; `wer` is then the
    /// insertion count.
    #[serde(default)]
    pub degenerate: bool,
}

impl WerBreakdown {
    pub fn from_counts(
        substitutions: usize,
        deletions: usize,
        insertions: usize,
        ref_len: usize,
    ) -> Self {
        let errors = substitutions + deletions + insertions;
        let (wer, degenerate) = if ref_len == 0 {
            (insertions as f64, insertions > 0)
        } else {
            (errors as f64 / ref_len as f64, false)
        };
        WerBreakdown {
            substitutions,
            deletions,
            insertions,
            ref_len,
            wer,
            degenerate,
        }
    }

    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match,
    Substitute,
    Delete,
    Insert,
}

/// Minimal edit script turning `reference` into `hypothesis`. On ties the
/// backtrace prefers substitution (or match), then deletion, then insertion.
pub fn edit_script<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<EditOp> {
    let (n, m) = (reference.len(), hypothesis.len());
    let cols = m + 1;
    let mut dp = vec![0u32; (n + 1) * cols];
    for j in 0..=m {
        dp[j] = j as u32;
    }
    for i in 1..=n {
        dp[i * cols] = i as u32;
        for j in 1..=m {
            let sub = dp[(i - 1) * cols + j - 1] + u32::from(reference[i - 1] != hypothesis[j - 1]);
            let del = dp[(i - 1) * cols + j] + 1;
            let ins = dp[i * cols + j - 1] + 1;
            dp[i * cols + j] = sub.min(del).min(ins);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * cols + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if here == dp[(i - 1) * cols + j - 1] + u32::from(!same) {
                ops.push(if same {
                    EditOp::Match
                } else {
                    EditOp::Substitute
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dp[(i - 1) * cols + j] + 1 {
            ops.push(EditOp::Delete);
            i -= 1;
        } else {
            ops.push(EditOp::Insert);
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

pub fn wer_tokens<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> WerBreakdown {
    let (mut s, mut d, mut i) = (0, 0, 0);
    for op in edit_script(reference, hypothesis) {
        match op {
            EditOp::Match => {}
            EditOp::Substitute => s += 1,
            EditOp::Delete => d += 1,
            EditOp::Insert => i += 1,
        }
    }
    WerBreakdown::from_counts(s, d, i, reference.len())
}

/// Word error rate over whitespace tokens, as given.
pub fn wer(reference: &str, hypothesis: &str) -> WerBreakdown {
    wer_tokens(&tokenize_words(reference), &tokenize_words(hypothesis))
}

/// Orthographic WER: raw text, casing and punctuation kept.
pub fn o_wer(reference: &str, hypothesis: &str) -> WerBreakdown {
    wer(reference, hypothesis)
}

/// Normalized WER: lowercased, `,.!?` removed.
pub fn n_wer(reference: &str, hypothesis: &str) -> WerBreakdown {
    wer(
        &normalize_for_wer(reference),
        &normalize_for_wer(hypothesis),
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WerAccumulator {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
    pub utterances: usize,
}

impl WerAccumulator {
    pub fn add(&mut self, b: &WerBreakdown) {
        self.substitutions += b.substitutions;
        self.deletions += b.deletions;
        self.insertions += b.insertions;
        self.ref_len += b.ref_len;
        self.utterances += 1;
    }

    pub fn merge(mut self, other: WerAccumulator) -> Self {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.ref_len += other.ref_len;
        self.utterances += other.utterances;
        self
    }

    pub fn breakdown(&self) -> WerBreakdown {
        WerBreakdown::from_counts(
            self.substitutions,
            self.deletions,
            self.insertions,
            self.ref_len,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiouDenominator {
    /// Mean over every reference word, unmatched ones scoring 0.
    #[default]
    AllReferences,
    /// Mean over matched words only.
    MatchedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimestampEvalResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f1: f64,
    pub miou: f64,
    pub collar_s: f64,
}

pub fn iou(a: &AlignedWord, b: &AlignedWord) -> f64 {
    let inter = (a.end_s.min(b.end_s) - a.start_s.max(b.start_s)).max(0.0);
    let union = (a.end_s - a.start_s) + (b.end_s - b.start_s) - inter;
    if union <= 0.0 {
        // Two zero-length intervals: identical points score 1.
        if a.start_s == b.start_s {
            1.0
        } else {
            0.0
        }
    } else {
        inter / union
    }
}

/// Pairs of (reference index, predicted index) chosen by one-to-one greedy
/// matching in temporal order. Both inputs must be sorted and
/// non-overlapping; each prediction takes the earliest unmatched reference
/// with equal normalized text whose start and end both lie within the collar.
pub fn match_words(
    reference: &[AlignedWord],
    predicted: &[AlignedWord],
    collar_s: f64,
) -> Vec<(usize, usize)> {
    let norm_ref: Vec<String> = reference
        .iter()
        .map(|w| normalize_for_wer(&w.text))
        .collect();
    let mut used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    let mut lo = 0;
    let within = |a: f64, b: f64| (a - b).abs() <= collar_s + TIME_EPS;
    for (pi, p) in predicted.iter().enumerate() {
        while lo < reference.len() && reference[lo].start_s < p.start_s - collar_s - TIME_EPS {
            lo += 1;
        }
        let text = normalize_for_wer(&p.text);
        for ri in lo..reference.len() {
            let r = &reference[ri];
            if r.start_s > p.start_s + collar_s + TIME_EPS {
                break;
            }
            if !used[ri]
                && norm_ref[ri] == text
                && within(r.start_s, p.start_s)
                && within(r.end_s, p.end_s)
            {
                used[ri] = true;
                pairs.push((ri, pi));
                break;
            }
        }
    }
    pairs
}

pub fn timestamp_eval(
    reference: &[AlignedWord],
    predicted: &[AlignedWord],
    collar_s: f64,
) -> TimestampEvalResult {
    timestamp_eval_with(
        reference,
        predicted,
        collar_s,
        MiouDenominator::AllReferences,
    )
}

pub fn timestamp_eval_with(
    reference: &[AlignedWord],
    predicted: &[AlignedWord],
    collar_s: f64,
    mode: MiouDenominator,
) -> TimestampEvalResult {
    let mut acc = TimestampAccumulator::new(collar_s, mode);
    acc.add(reference, predicted);
    acc.result()
}

/// Pooled timestamp counts across utterances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimestampAccumulator {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub iou_sum: f64,
    pub collar_s: f64,
    pub mode: MiouDenominator,
}

impl TimestampAccumulator {
    pub fn new(collar_s: f64, mode: MiouDenominator) -> Self {
        TimestampAccumulator {
            tp: 0,
            fp: 0,
            fn_: 0,
            iou_sum: 0.0,
            collar_s,
            mode,
        }
    }

    pub fn add(&mut self, reference: &[AlignedWord], predicted: &[AlignedWord]) {
        let pairs = match_words(reference, predicted, self.collar_s);
        self.tp += pairs.len();
        self.fp += predicted.len() - pairs.len();
        self.fn_ += reference.len() - pairs.len();
        self.iou_sum += pairs
            .iter()
            .map(|&(r, p)| iou(&reference[r], &predicted[p]))
            .sum::<f64>();
    }

    pub fn merge(mut self, other: TimestampAccumulator) -> Self {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.iou_sum += other.iou_sum;
        self
    }

    pub fn result(&self) -> TimestampEvalResult {
        let denom = 2 * self.tp + self.fp + self.fn_;
        let f1 = if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        };
        let miou_denom = match self.mode {
            MiouDenominator::AllReferences => self.tp + self.fn_,
            MiouDenominator::MatchedOnly => self.tp,
        };
        let miou = if miou_denom > 0 {
            (self.iou_sum / miou_denom as f64).clamp(0.0, 1.0)
        } else if denom == 0 {
            1.0
        } else {
            0.0
        };
        TimestampEvalResult {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            f1,
            miou,
            collar_s: self.collar_s,
        }
    }
}
