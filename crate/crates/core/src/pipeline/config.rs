use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::mock::{
    read_references, AlignMode, MockAligner, MockAsr, MockNormalizer, MockPunctuator, NoiseSpec,
};
use crate::adapters::{HttpBackend, ProcessBackend, SharedBackend};
use crate::align::step_ms;
use crate::audio::ResampleMode;
use crate::metrics::MiouDenominator;
use crate::sampler::SamplingPolicy;
use crate::textnorm::{CharProfile, NumberLexicon};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A built-in name or an inline definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Named<T> {
    Name(String),
    Inline(T),
}

/// How to reach the model behind one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdapterSpec {
    MockAsr {
        #[serde(default = "clean_noise")]
        noise: NoiseSpec,
        /// JSONL file of `{"id", "text"}` hidden references.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        references: Option<PathBuf>,
        #[serde(default)]
        canned: String,
    },
    MockAligner {
        #[serde(default = "uniform")]
        mode: AlignMode,
    },
    MockPunctuator {
        #[serde(default)]
        drop_word_rate: f64,
        #[serde(default)]
        seed: u64,
    },
    MockNormalizer,
    /// A long-running child process speaking the line protocol.
    Process {
        command: Vec<String>,
    },
    Http {
        url: String,
    },
}

fn clean_noise() -> NoiseSpec {
    NoiseSpec::clean(0)
}

fn uniform() -> AlignMode {
    AlignMode::Uniform
}

impl AdapterSpec {
    pub fn mock_asr() -> Self {
        AdapterSpec::MockAsr {
            noise: clean_noise(),
            references: None,
            canned: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterConfig {
    /// Steps without transcripts: the two systems compared for consensus.
    pub asr_primary: AdapterSpec,
    pub asr_secondary: AdapterSpec,
    /// Steps with provided transcripts: the system checked against them.
    pub asr_filter: AdapterSpec,
    pub punctuate: AdapterSpec,
    /// Unset means the configured lexicon expands numbers in-process.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize_numbers: Option<AdapterSpec>,
    pub align: AdapterSpec,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            asr_primary: AdapterSpec::mock_asr(),
            asr_secondary: AdapterSpec::mock_asr(),
            asr_filter: AdapterSpec::mock_asr(),
            punctuate: AdapterSpec::MockPunctuator {
                drop_word_rate: 0.0,
                seed: 0,
            },
            normalize_numbers: None,
            align: AdapterSpec::MockAligner { mode: uniform() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub char_profile: Named<CharProfile>,
    pub lexicon: Named<NumberLexicon>,
    pub max_duration_s: f64,
    pub target_sample_rate_hz: u32,
    pub target_peak: f32,
    pub resample_mode: ResampleMode,
    pub wer_threshold: f64,
    pub quantization_step_s: f64,
    pub collar_s: f64,
    pub miou: MiouDenominator,
    pub worker_pool_size: usize,
    pub batch_size: usize,
    pub adapter_timeout_s: f64,
    pub seed: u64,
    /// Group duration caps, keyed by source dataset.
    pub sampling: BTreeMap<String, SamplingPolicy>,
    pub adapters: AdapterConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            char_profile: Named::Name("vi".into()),
            lexicon: Named::Name("vi".into()),
            max_duration_s: 30.0,
            target_sample_rate_hz: 16_000,
            target_peak: 0.95,
            resample_mode: ResampleMode::Linear,
            wer_threshold: 0.05,
            quantization_step_s: 0.02,
            collar_s: 0.2,
            miou: MiouDenominator::AllReferences,
            worker_pool_size: 4,
            batch_size: 16,
            adapter_timeout_s: 120.0,
            seed: 0,
            sampling: BTreeMap::new(),
            adapters: AdapterConfig::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn profile(&self) -> Result<CharProfile, ConfigError> {
        match &self.char_profile {
            Named::Name(n) => CharProfile::by_name(n)
                .ok_or_else(|| invalid(format!("unknown char_profile {n:?}"))),
            Named::Inline(p) => Ok(p.clone()),
        }
    }

    pub fn number_lexicon(&self) -> Result<NumberLexicon, ConfigError> {
        let lex = match &self.lexicon {
            Named::Name(n) => NumberLexicon::by_name(n)
                .ok_or_else(|| invalid(format!("unknown lexicon {n:?}")))?,
            Named::Inline(l) => l.clone(),
        };
        lex.validate()
            .map_err(|e| invalid(format!("lexicon: {e}")))?;
        Ok(lex)
    }

    pub fn adapter_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.adapter_timeout_s)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.wer_threshold > 0.0 && self.wer_threshold <= 1.0) {
            return Err(invalid(format!(
                "wer_threshold must lie in (0, 1], got {}",
                self.wer_threshold
            )));
        }
        if !(self.max_duration_s > 0.0 && self.max_duration_s.is_finite()) {
            return Err(invalid(format!(
                "max_duration_s must be positive, got {}",
                self.max_duration_s
            )));
        }
        if self.target_sample_rate_hz == 0 {
            return Err(invalid("target_sample_rate_hz must be positive"));
        }
        if !(self.target_peak > 0.0 && self.target_peak <= 1.0) {
            return Err(invalid(format!(
                "target_peak must lie in (0, 1], got {}",
                self.target_peak
            )));
        }
        step_ms(self.quantization_step_s).map_err(|e| invalid(e.to_string()))?;
        if !(self.collar_s >= 0.0 && self.collar_s.is_finite()) {
            return Err(invalid(format!(
                "collar_s must be non-negative, got {}",
                self.collar_s
            )));
        }
        if self.worker_pool_size == 0 || self.batch_size == 0 {
            return Err(invalid("worker_pool_size and batch_size must be positive"));
        }
        if !(self.adapter_timeout_s > 0.0 && self.adapter_timeout_s.is_finite()) {
            return Err(invalid(format!(
                "adapter_timeout_s must be positive, got {}",
                self.adapter_timeout_s
            )));
        }
        for (source, policy) in &self.sampling {
            policy
                .validate()
                .map_err(|e| invalid(format!("sampling.{source}: {e}")))?;
        }
        self.profile()?;
        self.number_lexicon()?;
        let a = &self.adapters;
        let roles = [
            ("asr_primary", Some(&a.asr_primary)),
            ("asr_secondary", Some(&a.asr_secondary)),
            ("asr_filter", Some(&a.asr_filter)),
            ("punctuate", Some(&a.punctuate)),
            ("normalize_numbers", a.normalize_numbers.as_ref()),
            ("align", Some(&a.align)),
        ];
        for (role, spec) in roles {
            match spec {
                Some(AdapterSpec::MockAsr { noise, .. }) => noise
                    .validate()
                    .map_err(|e| invalid(format!("adapters.{role}: {e}")))?,
                Some(AdapterSpec::MockPunctuator { drop_word_rate, .. })
                    if !(0.0..=1.0).contains(drop_word_rate) =>
                {
                    return Err(invalid(format!(
                        "adapters.{role}: drop_word_rate outside [0, 1]"
                    )));
                }
                Some(AdapterSpec::Process { command }) if command.is_empty() => {
                    return Err(invalid(format!("adapters.{role}: empty command")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Live handles for every model role.
#[derive(Clone)]
pub struct Adapters {
    pub asr_primary: SharedBackend,
    pub asr_secondary: SharedBackend,
    pub asr_filter: SharedBackend,
    pub punctuate: SharedBackend,
    pub normalize_numbers: Option<SharedBackend>,
    pub align: SharedBackend,
}

impl Adapters {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, ConfigError> {
        let build = |spec: &AdapterSpec| build_backend(spec, cfg);
        let a = &cfg.adapters;
        Ok(Adapters {
            asr_primary: build(&a.asr_primary)?,
            asr_secondary: build(&a.asr_secondary)?,
            asr_filter: build(&a.asr_filter)?,
            punctuate: build(&a.punctuate)?,
            normalize_numbers: a.normalize_numbers.as_ref().map(build).transpose()?,
            align: build(&a.align)?,
        })
    }
}

pub fn build_backend(
    spec: &AdapterSpec,
    cfg: &PipelineConfig,
) -> Result<SharedBackend, ConfigError> {
    Ok(match spec {
        AdapterSpec::MockAsr {
            noise,
            references,
            canned,
        } => {
            let refs = match references {
                Some(p) => read_references(p).map_err(|source| ConfigError::Io {
                    path: p.clone(),
                    source,
                })?,
                None => Default::default(),
            };
            Arc::new(
                MockAsr::new(*noise)
                    .with_references(refs)
                    .with_canned(canned.clone()),
            )
        }
        AdapterSpec::MockAligner { mode } => Arc::new(MockAligner::new(*mode)),
        AdapterSpec::MockPunctuator {
            drop_word_rate,
            seed,
        } => Arc::new(MockPunctuator {
            drop_word_rate: *drop_word_rate,
            seed: *seed,
        }),
        AdapterSpec::MockNormalizer => Arc::new(MockNormalizer {
            lexicon: cfg.number_lexicon()?,
        }),
        AdapterSpec::Process { command } => Arc::new(ProcessBackend::new(
            command.clone(),
            cfg.worker_pool_size,
            cfg.adapter_timeout(),
        )),
        AdapterSpec::Http { url } => Arc::new(HttpBackend::new(url.clone(), cfg.adapter_timeout())),
    })
}
