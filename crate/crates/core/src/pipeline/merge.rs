use std::collections::{HashMap, HashSet};
use std::path::Path;

use thiserror::Error;

use super::Step;
use crate::audio::{load_wav, resample, write_wav, AudioError, ResampleMode};
use crate::manifest::UtteranceRecord;

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("duplicate utterance id {id:?} in {side} manifest")]
    Duplicate { id: String, side: &'static str },
    #[error("resampling {id}")]
    Audio {
        id: String,
        #[source]
        source: AudioError,
    },
}

/// True when a record made it through the cleaning and punctuation steps,
/// which is all the processing a "minimal" manifest receives.
pub fn minimal_stage_passed(rec: &UtteranceRecord) -> bool {
    !rec.is_rejected() && Step::Clean.passed(rec) && Step::Punct.passed(rec)
}

fn check_unique(records: &[UtteranceRecord], side: &'static str) -> Result<(), MergeError> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.utterance_id.as_str()) {
            return Err(MergeError::Duplicate {
                id: r.utterance_id.clone(),
                side,
            });
        }
    }
    Ok(())
}

/// Union of `full` and `refined` by id. A refined record replaces the full
/// record with the same id in place; refined-only records follow in their
/// own order.
pub fn merge_minimal(
    full: &[UtteranceRecord],
    refined: &[UtteranceRecord],
) -> Result<Vec<UtteranceRecord>, MergeError> {
    check_unique(full, "full")?;
    check_unique(refined, "refined")?;
    let by_id: HashMap<&str, &UtteranceRecord> = refined
        .iter()
        .map(|r| (r.utterance_id.as_str(), r))
        .collect();
    let mut used = HashSet::new();
    let mut out: Vec<UtteranceRecord> = full
        .iter()
        .map(|r| match by_id.get(r.utterance_id.as_str()) {
            Some(winner) => {
                used.insert(r.utterance_id.as_str());
                (*winner).clone()
            }
            None => r.clone(),
        })
        .collect();
    out.extend(
        refined
            .iter()
            .filter(|r| !used.contains(r.utterance_id.as_str()))
            .cloned(),
    );
    Ok(out)
}

/// Resamples the audio of every record not already at `target_hz`, writing
/// the result under `audio_dir` and updating the record. Returns how many
/// records were touched.
pub fn reconcile_sample_rates(
    records: &mut [UtteranceRecord],
    target_hz: u32,
    mode: ResampleMode,
    audio_dir: &Path,
) -> Result<usize, MergeError> {
    let mut touched = 0;
    for rec in records.iter_mut().filter(|r| r.sample_rate_hz != target_hz) {
        let wrap = |source| MergeError::Audio {
            id: rec.utterance_id.clone(),
            source,
        };
        let buf = load_wav(&rec.audio_path).map_err(wrap)?;
        let out = resample(&buf, target_hz, mode);
        std::fs::create_dir_all(audio_dir).map_err(|e| wrap(AudioError::from(e)))?;
        let dst = audio_dir.join(format!(
            "{}.wav",
            super::run::file_stem_for(&rec.utterance_id)
        ));
        write_wav(&out, &dst).map_err(wrap)?;
        rec.audio_path = dst;
        rec.sample_rate_hz = target_hz;
        touched += 1;
    }
    Ok(touched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioBuffer;
    use crate::manifest::{AlignedWord, Stage, StageStatus};
    use proptest::prelude::*;

    fn rec(id: &str) -> UtteranceRecord {
        UtteranceRecord::new(id, "ds", format!("{id}.wav"), 16_000, 1.0)
    }

    #[test]
    fn disjoint_sets_union() {
        let full: Vec<_> = ["a", "b", "c"].iter().map(|i| rec(i)).collect();
        let refined: Vec<_> = ["d", "e"].iter().map(|i| rec(i)).collect();
        let m = merge_minimal(&full, &refined).unwrap();
        let ids: Vec<_> = m.iter().map(|r| r.utterance_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c", "d", "e"]);
    }

    #[test]
    fn refined_record_carries_timestamps() {
        let full = vec![rec("x").with_transcript("Xin chào.", Default::default())];
        let mut r = rec("x").with_transcript("xin chào", Default::default());
        r.words = Some(vec![
            AlignedWord::new("xin", 0.0, 0.4),
            AlignedWord::new("chào", 0.4, 0.9),
        ]);
        let m = merge_minimal(&full, &[r.clone()]).unwrap();
        assert_eq!(m, vec![r]);
    }

    #[test]
    fn duplicates_rejected() {
        assert!(matches!(
            merge_minimal(&[rec("a"), rec("a")], &[]),
            Err(MergeError::Duplicate { side: "full", .. })
        ));
        assert!(matches!(
            merge_minimal(&[], &[rec("b"), rec("b")]),
            Err(MergeError::Duplicate {
                side: "refined",
                ..
            })
        ));
    }

    #[test]
    fn minimal_requires_clean_and_punct() {
        let mut r = rec("a");
        assert!(!minimal_stage_passed(&r));
        r.set_status(Stage::Clean, StageStatus::Passed).unwrap();
        assert!(!minimal_stage_passed(&r));
        r.set_status(Stage::Punct, StageStatus::Passed).unwrap();
        assert!(minimal_stage_passed(&r));
    }

    #[test]
    fn reconcile_resamples_only_mismatched() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("a.wav");
        write_wav(&AudioBuffer::new(vec![0.1; 8000], 8000), &src).unwrap();
        let mut a = rec("a");
        a.audio_path = src;
        a.sample_rate_hz = 8000;
        let b = rec("b");
        let mut recs = vec![a, b.clone()];
        let out = dir.path().join("out");
        assert_eq!(
            reconcile_sample_rates(&mut recs, 16_000, ResampleMode::Linear, &out).unwrap(),
            1
        );
        assert_eq!(recs[1], b);
        assert_eq!(recs[0].sample_rate_hz, 16_000);
        let buf = load_wav(&recs[0].audio_path).unwrap();
        assert_eq!((buf.sample_rate_hz, buf.samples.len()), (16_000, 16_000));
    }

    proptest! {
        #[test]
        fn refined_always_wins(
            full_ids in proptest::collection::btree_set(0u8..40, 0..20),
            refined_ids in proptest::collection::btree_set(0u8..40, 0..20),
        ) {
            let full: Vec<_> = full_ids.iter().map(|i| rec(&format!("u{i}"))).collect();
            let refined: Vec<_> = refined_ids
                .iter()
                .map(|i| rec(&format!("u{i}")).with_transcript(format!("refined {i}"), Default::default()))
                .collect();
            let m = merge_minimal(&full, &refined).unwrap();
            let union: HashSet<_> = full_ids.union(&refined_ids).collect();
            prop_assert_eq!(m.len(), union.len());
            for r in &m {
                let i: u8 = r.utterance_id[1..].parse().unwrap();
                if refined_ids.contains(&i) {
                    prop_assert_eq!(r, &refined.iter().find(|x| x.utterance_id == r.utterance_id).unwrap().clone());
                } else {
                    prop_assert_eq!(r.transcript.as_ref(), None);
                }
            }
        }
    }
}
