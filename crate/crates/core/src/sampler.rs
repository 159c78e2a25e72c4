//! Per-group duration caps for diversity sampling.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::manifest::UtteranceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupField {
    SpeakerId,
    GroupKey,
    Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOrder {
    #[default]
    ManifestOrder,
    Shuffled {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPolicy {
    pub group_field: GroupField,
    pub cap_seconds: f64,
    #[serde(default)]
    pub order: SampleOrder,
}

impl SamplingPolicy {
    pub fn new(group_field: GroupField, cap_seconds: f64) -> Self {
        SamplingPolicy {
            group_field,
            cap_seconds,
            order: SampleOrder::ManifestOrder,
        }
    }

    pub fn shuffled(mut self, seed: u64) -> Self {
        self.order = SampleOrder::Shuffled { seed };
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.cap_seconds > 0.0 && self.cap_seconds.is_finite() {
            Ok(())
        } else {
            Err(format!(
                "cap_seconds must be positive, got {}",
                self.cap_seconds
            ))
        }
    }

    fn key<'a>(&self, rec: &'a UtteranceRecord) -> Option<&'a str> {
        match self.group_field {
            GroupField::SpeakerId => rec.speaker_id.as_deref(),
            GroupField::GroupKey => rec.group_key.as_deref(),
            GroupField::Region => rec.region.map(|r| r.name()),
        }
    }
}

/// Per-record selection mask. A record is taken only if its group's running
/// total stays within the cap; records without a group value are always taken.
pub fn select_by_group(records: &[UtteranceRecord], policy: &SamplingPolicy) -> Vec<bool> {
    let mut visit: Vec<usize> = (0..records.len()).collect();
    if let SampleOrder::Shuffled { seed } = policy.order {
        visit.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut used: HashMap<&str, f64> = HashMap::new();
    let mut keep = vec![false; records.len()];
    for i in visit {
        let rec = &records[i];
        match policy.key(rec) {
            None => keep[i] = true,
            Some(k) => {
                let total = used.entry(k).or_insert(0.0);
                if *total + rec.duration_s <= policy.cap_seconds {
                    *total += rec.duration_s;
                    keep[i] = true;
                }
            }
        }
    }
    keep
}

/// Selected records, in input order.
pub fn sample_by_group(
    records: &[UtteranceRecord],
    policy: &SamplingPolicy,
) -> Vec<UtteranceRecord> {
    select_by_group(records, policy)
        .into_iter()
        .zip(records)
        .filter_map(|(k, r)| k.then(|| r.clone()))
        .collect()
}
