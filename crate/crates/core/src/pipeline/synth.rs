use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::adapters::mock::{corrupt, rng_for, NoiseSpec};
use crate::audio::{write_wav, AudioBuffer, AudioError};
use crate::manifest::{write_manifest, ManifestError, Region, TranscriptOrigin, UtteranceRecord};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic corpus spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DurationDist {
    Fixed(f64),
    /// Uniform over whole milliseconds in `[min_s, max_s]`.
    Uniform {
        min_s: f64,
        max_s: f64,
    },
}

/// Relative weights for region labels; all zero leaves regions unset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionMix {
    pub north: u32,
    pub central: u32,
    pub south: u32,
}

impl RegionMix {
    pub const NONE: RegionMix = RegionMix {
        north: 0,
        central: 0,
        south: 0,
    };

    /// Exact label counts for `n` records by largest remainder; ties go to
    /// north, then central, then south.
    pub fn allocate(&self, n: usize) -> [usize; 3] {
        let w = [self.north as u64, self.central as u64, self.south as u64];
        let total: u64 = w.iter().sum();
        if total == 0 {
            return [0; 3];
        }
        let n64 = n as u64;
        let mut counts = w.map(|wi| (n64 * wi / total) as usize);
        let mut rem: Vec<(u64, usize)> = (0..3).map(|i| ((n64 * w[i]) % total, i)).collect();
        rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let short = n - counts.iter().sum::<usize>();
        for &(_, i) in rem.iter().take(short) {
            counts[i] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_records: usize,
    pub duration: DurationDist,
    /// Corruption applied to provided transcripts relative to the hidden
    /// reference that the mock transcribers replay.
    pub noise: NoiseSpec,
    pub region_mix: RegionMix,
    pub seed: u64,
    /// Source dataset names, assigned round-robin.
    pub sources: Vec<String>,
    /// Sample rates, assigned round-robin.
    pub sample_rates: Vec<u32>,
    /// Inclusive word-count range per transcript.
    pub words: (usize, usize),
    pub speakers: usize,
    pub untranscribed_fraction: f64,
    pub manual_fraction: f64,
    /// Fraction of transcripts that contain one number written in digits.
    pub digit_fraction: f64,
    pub silence_fraction: f64,
    pub id_prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_records: 10,
            duration: DurationDist::Uniform {
                min_s: 2.0,
                max_s: 8.0,
            },
            noise: NoiseSpec::clean(0),
            region_mix: RegionMix {
                north: 1,
                central: 1,
                south: 1,
            },
            seed: 0,
            sources: vec!["synth".into()],
            sample_rates: vec![16_000],
            words: (4, 16),
            speakers: 8,
            untranscribed_fraction: 0.0,
            manual_fraction: 0.0,
            digit_fraction: 0.0,
            silence_fraction: 0.0,
            id_prefix: "syn".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), String> {
        match self.duration {
            DurationDist::Fixed(d) if !(d > 0.0) => {
                return Err(format!("duration must be positive, got {d}"))
            }
            DurationDist::Uniform { min_s, max_s } if !(min_s > 0.0 && min_s <= max_s) => {
                return Err(format!("bad duration range [{min_s}, {max_s}]"));
            }
            _ => {}
        }
        if self.sources.is_empty() || self.sample_rates.is_empty() || self.sample_rates.contains(&0)
        {
            return Err("sources and sample_rates must be non-empty and rates positive".into());
        }
        if self.words.0 == 0 || self.words.0 > self.words.1 {
            return Err(format!("bad word range {:?}", self.words));
        }
        let fr = [
            self.untranscribed_fraction,
            self.manual_fraction,
            self.digit_fraction,
            self.silence_fraction,
        ];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f))
            || self.untranscribed_fraction + self.manual_fraction > 1.0
        {
            return Err("fractions must lie in [0, 1]".into());
        }
        self.noise.validate()
    }
}

/// Everything generated, in memory as well as on disk.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub records: Vec<UtteranceRecord>,
    /// Hidden reference transcript per id, in record order.
    pub references: Vec<(String, String)>,
    pub manifest_path: PathBuf,
    pub references_path: PathBuf,
}

const VOCAB: [&str; 48] = [
    "xin",
    "chào",
    "các",
    "bạn",
    "hôm",
    "nay",
    "trời",
    "đẹp",
    "quá",
    "chúng",
    "ta",
    "cùng",
    "đi",
    "học",
    "tiếng",
    "việt",
    "nam",
    "người",
    "thành",
    "phố",
    "sông",
    "núi",
    "nhà",
    "cửa",
    "mẹ",
    "cha",
    "anh",
    "chị",
    "em",
    "bé",
    "ăn",
    "cơm",
    "uống",
    "nước",
    "trà",
    "xanh",
    "mưa",
    "nắng",
    "gió",
    "biển",
    "làng",
    "quê",
    "sách",
    "vở",
    "bàn",
    "ghế",
    "đường",
    "xa",
];

#[derive(Serialize)]
struct ReferenceLine<'a> {
    id: &'a str,
    text: &'a str,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `manifest.jsonl`, `references.jsonl` and `audio/*.wav` under
/// `out_dir`, with absolute audio paths. Output depends only on `spec`
/// and the canonical location of `out_dir`.
pub fn generate_synthetic_corpus(
    spec: &SynthSpec,
    out_dir: impl AsRef<Path>,
) -> Result<SynthCorpus, SynthError> {
    spec.validate().map_err(SynthError::Spec)?;
    let audio_dir = out_dir.as_ref().join("audio");
    fs::create_dir_all(&audio_dir).map_err(io_err(&audio_dir))?;
    let out = &fs::canonicalize(out_dir.as_ref()).map_err(io_err(out_dir.as_ref()))?;
    let audio_dir = out.join("audio");

    let mut regions: Vec<Option<Region>> = Vec::with_capacity(spec.n_records);
    let counts = spec.region_mix.allocate(spec.n_records);
    for (region, c) in [Region::North, Region::Central, Region::South]
        .into_iter()
        .zip(counts)
    {
        regions.extend(std::iter::repeat_n(Some(region), c));
    }
    regions.resize(spec.n_records, None);
    regions.shuffle(&mut rng_for(spec.seed, "regions"));

    let mut records = Vec::with_capacity(spec.n_records);
    let mut references = Vec::with_capacity(spec.n_records);
    for (i, region) in regions.into_iter().enumerate() {
        let id = format!("{}{:06}", spec.id_prefix, i);
        let mut rng = rng_for(spec.seed, &id);
        let duration_s = match spec.duration {
            DurationDist::Fixed(d) => (d * 1000.0).round() / 1000.0,
            DurationDist::Uniform { min_s, max_s } => {
                let (lo, hi) = (
                    (min_s * 1000.0).round() as u64,
                    (max_s * 1000.0).round() as u64,
                );
                rng.gen_range(lo..=hi) as f64 / 1000.0
            }
        };
        let rate = spec.sample_rates[i % spec.sample_rates.len()];
        let source = &spec.sources[i % spec.sources.len()];

        let n_words = rng.gen_range(spec.words.0..=spec.words.1);
        let mut words: Vec<String> = (0..n_words)
            .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())].to_string())
            .collect();
        if rng.gen::<f64>() < spec.digit_fraction {
            let at = rng.gen_range(0..words.len());
            words[at] = rng.gen_range(0u64..=999_999).to_string();
        }
        let reference = words.join(" ");

        let route: f64 = rng.gen();
        let (transcript, origin) = if route < spec.untranscribed_fraction {
            (None, TranscriptOrigin::Provided)
        } else if route < spec.untranscribed_fraction + spec.manual_fraction {
            (Some(reference.clone()), TranscriptOrigin::Manual)
        } else {
            (
                Some(corrupt(&reference, &spec.noise, &id).0),
                TranscriptOrigin::Provided,
            )
        };

        let n_samples = (duration_s * rate as f64).round() as usize;
        let silent = rng.gen::<f64>() < spec.silence_fraction;
        let freq = 110.0 + rng.gen_range(0..400) as f64;
        let samples: Vec<f32> = (0..n_samples)
            .map(|k| {
                if silent {
                    0.0
                } else {
                    (0.4 * (std::f64::consts::TAU * freq * k as f64 / rate as f64).sin()) as f32
                }
            })
            .collect();
        let audio_path = audio_dir.join(format!("{id}.wav"));
        write_wav(&AudioBuffer::new(samples, rate), &audio_path)?;

        let mut rec = UtteranceRecord::new(&id, source.as_str(), audio_path, rate, duration_s);
        rec.transcript = transcript;
        rec.transcript_origin = origin;
        if spec.speakers > 0 {
            let spk = format!("{source}-spk{:03}", rng.gen_range(0..spec.speakers));
            rec.group_key = Some(spk.clone());
            rec.speaker_id = Some(spk);
        }
        rec.region = region;
        records.push(rec);
        references.push((id, reference));
    }

    let manifest_path = out.join("manifest.jsonl");
    write_manifest(&records, &manifest_path)?;
    let references_path = out.join("references.jsonl");
    let mut body = String::new();
    for (id, text) in &references {
        body.push_str(
            &serde_json::to_string(&ReferenceLine { id, text }).expect("references serialize"),
        );
        body.push('\n');
    }
    fs::write(&references_path, body).map_err(io_err(&references_path))?;
    Ok(SynthCorpus {
        records,
        references,
        manifest_path,
        references_path,
    })
}
