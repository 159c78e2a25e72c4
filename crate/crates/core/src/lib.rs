//! Refinement of noisy speech corpora into filtered, normalized,
//! word-timestamped training manifests.

pub mod adapters;
pub mod align;
pub mod audio;
pub mod gates;
pub mod manifest;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod sampler;
pub mod textnorm;
