//! Accept/reject decisions for cleaning, transcript consensus, provided
//! transcript filtering and punctuation fidelity.

use serde::{Deserialize, Serialize};

use crate::manifest::{Stage, StageStatus, TranscriptOrigin, UtteranceRecord};
use crate::metrics::{wer, WerBreakdown};
use crate::textnorm::{check_char_whitelist, normalize_for_wer, tokenize_words, CharProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Passed,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub utterance_id: String,
    pub stage: Stage,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<WerBreakdown>,
}

impl GateDecision {
    pub fn pass(id: &str, stage: Stage) -> Self {
        GateDecision {
            utterance_id: id.to_string(),
            stage,
            verdict: Verdict::Passed,
            reason: None,
            evidence: None,
        }
    }

    pub fn reject(id: &str, stage: Stage, reason: impl Into<String>) -> Self {
        let reason = reason.into();
        debug_assert!(!reason.is_empty());
        GateDecision {
            utterance_id: id.to_string(),
            stage,
            verdict: Verdict::Rejected,
            reason: Some(reason),
            evidence: None,
        }
    }

    fn with_evidence(mut self, b: WerBreakdown) -> Self {
        self.evidence = Some(b);
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Passed
    }

    pub fn status(&self) -> StageStatus {
        match self.verdict {
            Verdict::Passed => StageStatus::Passed,
            Verdict::Rejected => StageStatus::Rejected(self.reason.clone().unwrap_or_default()),
        }
    }
}

/// Rejects over-long samples and transcripts with characters outside the
/// profile. Records without a transcript are only checked for duration.
pub fn clean_filter(
    rec: &UtteranceRecord,
    profile: &CharProfile,
    max_duration_s: f64,
) -> GateDecision {
    let id = &rec.utterance_id;
    if rec.duration_s > max_duration_s {
        return GateDecision::reject(
            id,
            Stage::Clean,
            format!("duration {:.1} > {:.1}", rec.duration_s, max_duration_s),
        );
    }
    if rec.duration_s <= 0.0 {
        return GateDecision::reject(id, Stage::Clean, "zero duration");
    }
    if let Some(text) = &rec.transcript {
        if let Err(v) = check_char_whitelist(text, profile) {
            return GateDecision::reject(id, Stage::Clean, v.to_string());
        }
    }
    GateDecision::pass(id, Stage::Clean)
}

fn threshold_verdict(id: &str, stage: Stage, b: WerBreakdown, threshold: f64) -> GateDecision {
    let d = if b.wer < threshold {
        GateDecision::pass(id, stage)
    } else {
        GateDecision::reject(
            id,
            stage,
            format!("wer {:.4} >= threshold {:.4}", b.wer, threshold),
        )
    };
    d.with_evidence(b)
}

/// Two-system agreement on normalized text. WER is taken in both directions
/// and the larger value decides, so the verdict does not depend on which
/// hypothesis is passed first.
pub fn consensus_filter(
    id: &str,
    hyp_a: Option<&str>,
    hyp_b: Option<&str>,
    threshold: f64,
) -> GateDecision {
    let stage = Stage::Transcribe;
    let (Some(a), Some(b)) = (hyp_a, hyp_b) else {
        return GateDecision::reject(id, stage, "no transcript");
    };
    let (a, b) = (normalize_for_wer(a), normalize_for_wer(b));
    if a.is_empty() && b.is_empty() {
        return GateDecision::reject(id, stage, "empty transcripts");
    }
    let ab = wer(&a, &b);
    let ba = wer(&b, &a);
    let worst = if ba.wer > ab.wer { ba } else { ab };
    threshold_verdict(id, stage, worst, threshold)
}

/// Checks a dataset-provided transcript against one ASR hypothesis. Manual
/// transcripts pass untouched.
pub fn provided_transcript_filter(
    id: &str,
    provided: &str,
    hyp: Option<&str>,
    threshold: f64,
    origin: TranscriptOrigin,
) -> GateDecision {
    let stage = Stage::Filter;
    if origin == TranscriptOrigin::Manual {
        return GateDecision::pass(id, stage);
    }
    let Some(hyp) = hyp else {
        return GateDecision::reject(id, stage, "no hypothesis");
    };
    let reference = normalize_for_wer(provided);
    if reference.is_empty() {
        return GateDecision::reject(id, stage, "empty transcript");
    }
    threshold_verdict(
        id,
        stage,
        wer(&reference, &normalize_for_wer(hyp)),
        threshold,
    )
}

/// Accepts a restored transcript only if it differs from its input in casing
/// and `,.!?` alone.
pub fn punct_fidelity_gate(id: &str, raw_input: &str, restored_output: &str) -> GateDecision {
    let stage = Stage::Punct;
    let a = normalize_for_wer(raw_input);
    let b = normalize_for_wer(restored_output);
    if a == b {
        return GateDecision::pass(id, stage);
    }
    let (ta, tb) = (tokenize_words(&a), tokenize_words(&b));
    let reason = if ta.len() != tb.len() {
        format!("word count {}→{}", ta.len(), tb.len())
    } else {
        let (i, (x, y)) = ta
            .iter()
            .zip(&tb)
            .enumerate()
            .find(|(_, (x, y))| x != y)
            .expect("normalized texts differ");
        format!("word {i} changed: {x:?}→{y:?}")
    };
    GateDecision::reject(id, stage, reason)
}
