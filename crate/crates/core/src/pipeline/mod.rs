//! Stage orchestration: configuration, the resumable stage runner,
//! reporting, synthetic corpora, and merging.

mod config;
mod merge;
mod report;
mod run;
mod synth;

pub use config::{
    build_backend, AdapterConfig, AdapterSpec, Adapters, ConfigError, Named, PipelineConfig,
};
pub use merge::{merge_minimal, minimal_stage_passed, reconcile_sample_rates, MergeError};
pub use report::{
    render_score_table, render_stage_table, score_manifests, stage_table, stage_table_from_dir,
    ScoreLayout, ScoreRow, StageRow, StageTable,
};
pub use run::{report_header, run_pipeline, PipelineError, RunOptions, RunSummary};
pub use synth::{
    generate_synthetic_corpus, DurationDist, RegionMix, SynthCorpus, SynthError, SynthSpec,
};

use std::fmt;

use crate::manifest::{Stage, StageStatus, UtteranceRecord};

/// One pass over the corpus. The transcript step covers both the consensus
/// route and the provided-transcript route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Step {
    Sample,
    Clean,
    Transcript,
    Punct,
    NumExpand,
    Align,
    NumRevert,
}

impl Step {
    pub const ALL: [Step; 7] = [
        Step::Sample,
        Step::Clean,
        Step::Transcript,
        Step::Punct,
        Step::NumExpand,
        Step::Align,
        Step::NumRevert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Step::Sample => "sample",
            Step::Clean => "clean",
            Step::Transcript => "transcript",
            Step::Punct => "punct",
            Step::NumExpand => "numexpand",
            Step::Align => "align",
            Step::NumRevert => "numrevert",
        }
    }

    pub fn stages(self) -> &'static [Stage] {
        match self {
            Step::Sample => &[Stage::Sample],
            Step::Clean => &[Stage::Clean],
            Step::Transcript => &[Stage::Transcribe, Stage::Filter],
            Step::Punct => &[Stage::Punct],
            Step::NumExpand => &[Stage::NumExpand],
            Step::Align => &[Stage::Align],
            Step::NumRevert => &[Stage::NumRevert],
        }
    }

    pub fn status(self, rec: &UtteranceRecord) -> Option<&StageStatus> {
        self.stages()
            .iter()
            .find_map(|s| rec.status(*s).filter(|st| st.is_terminal()))
    }

    pub fn passed(self, rec: &UtteranceRecord) -> bool {
        self.status(rec) == Some(&StageStatus::Passed)
    }

    /// Whether `rec` still has to go through this step.
    pub fn pending(self, rec: &UtteranceRecord) -> bool {
        !rec.is_rejected() && self.status(rec).is_none()
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
