//! Deterministic stand-ins for the model roles, for offline runs and tests.
//!
//! Every random choice is drawn from a ChaCha stream seeded with the
//! configured seed mixed with the request id, so results do not depend on
//! batch composition, worker count, or call order.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdapterError, AdapterRequest, AdapterResponse, Backend, Outcome, Task};
use crate::audio::wav_duration_s;
use crate::manifest::AlignedWord;
use crate::textnorm::{expand_numbers, tokenize_words, NumberLexicon, DEFAULT_PUNCT};

/// FNV-1a, used to derive per-id RNG streams.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

pub fn rng_for(seed: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stable_hash(key))
}

fn unsupported(req: &AdapterRequest) -> Outcome {
    Err(AdapterError::Model(format!(
        "task {} not supported by this backend",
        req.task.name()
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub substitution_rate: f64,
    #[serde(default)]
    pub deletion_rate: f64,
    #[serde(default)]
    pub insertion_rate: f64,
    /// When set, the rates are ignored: a count k is drawn uniformly from
    /// `0..=n` and exactly k distinct words are substituted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substitute_up_to: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn clean(seed: u64) -> Self {
        NoiseSpec {
            substitution_rate: 0.0,
            deletion_rate: 0.0,
            insertion_rate: 0.0,
            substitute_up_to: None,
            seed,
        }
    }

    pub fn exact_substitutions(up_to: usize, seed: u64) -> Self {
        NoiseSpec {
            substitute_up_to: Some(up_to),
            ..Self::clean(seed)
        }
    }

    pub fn substitutions(rate: f64, seed: u64) -> Self {
        NoiseSpec {
            substitution_rate: rate,
            ..Self::clean(seed)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let rates = [
            self.substitution_rate,
            self.deletion_rate,
            self.insertion_rate,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(format!("noise rates must lie in [0, 1]: {rates:?}"));
        }
        if rates.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(format!("noise rates sum above 1: {rates:?}"));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.substitution_rate + self.deletion_rate + self.insertion_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InjectedEdits {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

fn oov_token(rng: &mut ChaCha8Rng) -> String {
    // "zx" never begins a word in the supported alphabets.
    let tail: String = (0..3).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
    format!("zx{tail}")
}

/// Corrupts `reference` word by word: each word is independently substituted,
/// deleted, or followed by an inserted word with the configured rates.
/// Substituted and inserted words are out-of-vocabulary tokens.
pub fn corrupt(reference: &str, noise: &NoiseSpec, key: &str) -> (String, InjectedEdits) {
    let mut rng = rng_for(noise.seed, key);
    let mut edits = InjectedEdits::default();
    let mut out: Vec<String> = Vec::new();
    let words = tokenize_words(reference);
    if let Some(up_to) = noise.substitute_up_to {
        let k = rng.gen_range(0..=up_to).min(words.len());
        let mut hit = vec![false; words.len()];
        for p in rand::seq::index::sample(&mut rng, words.len(), k) {
            hit[p] = true;
        }
        for (w, h) in words.iter().zip(hit) {
            out.push(if h {
                oov_token(&mut rng)
            } else {
                w.to_string()
            });
        }
        edits.substitutions = k;
        return (out.join(" "), edits);
    }
    let (s, d, i) = (
        noise.substitution_rate,
        noise.deletion_rate,
        noise.insertion_rate,
    );
    for word in words {
        let u: f64 = rng.gen();
        if u < s {
            out.push(oov_token(&mut rng));
            edits.substitutions += 1;
        } else if u < s + d {
            edits.deletions += 1;
        } else if u < s + d + i {
            out.push(word.to_string());
            out.push(oov_token(&mut rng));
            edits.insertions += 1;
        } else {
            out.push(word.to_string());
        }
    }
    (out.join(" "), edits)
}

#[derive(Deserialize)]
struct ReferenceLine {
    id: String,
    text: String,
}

/// Reads `{"id": .., "text": ..}` lines.
pub fn read_references(path: impl AsRef<Path>) -> std::io::Result<HashMap<String, String>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = HashMap::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ReferenceLine = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        out.insert(r.id, r.text);
    }
    Ok(out)
}

/// Transcriber that replays a hidden reference transcript with injected noise.
#[derive(Debug, Clone)]
pub struct MockAsr {
    pub noise: NoiseSpec,
    references: HashMap<String, String>,
    canned: String,
}

impl MockAsr {
    pub fn new(noise: NoiseSpec) -> Self {
        MockAsr {
            noise,
            references: HashMap::new(),
            canned: String::new(),
        }
    }

    pub fn with_references<K: Into<String>, V: Into<String>>(
        mut self,
        refs: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        self.references
            .extend(refs.into_iter().map(|(k, v)| (k.into(), v.into())));
        self
    }

    /// Returned for ids without a reference (silence fixtures).
    pub fn with_canned(mut self, text: impl Into<String>) -> Self {
        self.canned = text.into();
        self
    }

    pub fn transcript_for(&self, id: &str) -> (String, InjectedEdits) {
        match self.references.get(id) {
            Some(r) => corrupt(r, &self.noise, id),
            None => (self.canned.clone(), InjectedEdits::default()),
        }
    }
}

impl Backend for MockAsr {
    fn call(&self, requests: &[AdapterRequest]) -> Vec<Outcome> {
        requests
            .iter()
            .map(|req| match req.task {
                Task::Transcribe => Ok(AdapterResponse::text(
                    &req.id,
                    self.transcript_for(&req.id).0,
                )),
                _ => unsupported(req),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    Uniform,
    Jittered { seed: u64, max_jitter_s: f64 },
}

/// Aligner that spreads the words evenly over the audio, optionally
/// perturbing the interior boundaries.
#[derive(Debug, Clone)]
pub struct MockAligner {
    pub mode: AlignMode,
    durations: HashMap<String, f64>,
}

impl MockAligner {
    pub fn new(mode: AlignMode) -> Self {
        MockAligner {
            mode,
            durations: HashMap::new(),
        }
    }

    pub fn uniform() -> Self {
        Self::new(AlignMode::Uniform)
    }

    pub fn jittered(seed: u64, max_jitter_s: f64) -> Self {
        Self::new(AlignMode::Jittered { seed, max_jitter_s })
    }

    /// Known durations by request id; other requests read the WAV header.
    pub fn with_durations<K: Into<String>>(
        mut self,
        d: impl IntoIterator<Item = (K, f64)>,
    ) -> Self {
        self.durations
            .extend(d.into_iter().map(|(k, v)| (k.into(), v)));
        self
    }

    pub fn align_words(&self, id: &str, text: &str, duration_s: f64) -> Vec<AlignedWord> {
        let words = tokenize_words(text);
        let n = words.len();
        if n == 0 {
            return Vec::new();
        }
        let mut bounds: Vec<f64> = (0..=n).map(|i| duration_s * i as f64 / n as f64).collect();
        bounds[n] = duration_s;
        if let AlignMode::Jittered { seed, max_jitter_s } = self.mode {
            let mut rng = rng_for(seed, id);
            for i in 1..n {
                let delta = (2.0 * rng.gen::<f64>() - 1.0) * max_jitter_s;
                bounds[i] = (bounds[i] + delta).clamp(bounds[i - 1], bounds[i + 1]);
            }
        }
        words
            .iter()
            .enumerate()
            .map(|(i, w)| AlignedWord::new(*w, bounds[i], bounds[i + 1]))
            .collect()
    }

    fn duration(&self, req: &AdapterRequest) -> Result<f64, AdapterError> {
        if let Some(&d) = self.durations.get(&req.id) {
            return Ok(d);
        }
        let path = req.audio_path.as_deref().unwrap_or_default();
        wav_duration_s(path).map_err(|e| AdapterError::Model(format!("{path}: {e}")))
    }
}

impl Backend for MockAligner {
    fn call(&self, requests: &[AdapterRequest]) -> Vec<Outcome> {
        requests
            .iter()
            .map(|req| match req.task {
                Task::Align => {
                    let d = self.duration(req)?;
                    let words =
                        self.align_words(&req.id, req.text.as_deref().unwrap_or_default(), d);
                    Ok(AdapterResponse::words(&req.id, &words))
                }
                _ => unsupported(req),
            })
            .collect()
    }
}

/// Restorer that capitalizes the first word, puts a comma after every sixth
/// word and a full stop at the end. With `drop_word_rate > 0` it sometimes
/// loses a word, which the fidelity gate must catch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MockPunctuator {
    #[serde(default)]
    pub drop_word_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => {
            let mut up = c.to_uppercase();
            match (up.next(), up.next()) {
                (Some(u), None) => std::iter::once(u).chain(chars).collect(),
                _ => word.to_string(),
            }
        }
        None => String::new(),
    }
}

impl MockPunctuator {
    pub fn restore(&self, id: &str, text: &str) -> String {
        let mut words: Vec<String> = tokenize_words(text)
            .into_iter()
            .map(str::to_string)
            .collect();
        if self.drop_word_rate > 0.0 && words.len() > 1 {
            let mut rng = rng_for(self.seed, id);
            if rng.gen::<f64>() < self.drop_word_rate {
                let at = rng.gen_range(0..words.len());
                words.remove(at);
            }
        }
        let last = words.len().saturating_sub(1);
        let ends_punct = |w: &str| w.chars().last().is_some_and(|c| DEFAULT_PUNCT.contains(&c));
        for (i, w) in words.iter_mut().enumerate() {
            if i == 0 {
                *w = capitalize(w);
            }
            if i == last {
                if !ends_punct(w) {
                    w.push('.');
                }
            } else if i % 6 == 5 && !ends_punct(w) {
                w.push(',');
            }
        }
        words.join(" ")
    }
}

impl Backend for MockPunctuator {
    fn call(&self, requests: &[AdapterRequest]) -> Vec<Outcome> {
        requests
            .iter()
            .map(|req| match req.task {
                Task::Punctuate => Ok(AdapterResponse::text(
                    &req.id,
                    self.restore(&req.id, req.text.as_deref().unwrap_or_default()),
                )),
                _ => unsupported(req),
            })
            .collect()
    }
}

/// Number normalizer backed by a rule-based lexicon.
#[derive(Debug, Clone)]
pub struct MockNormalizer {
    pub lexicon: NumberLexicon,
}

impl Backend for MockNormalizer {
    fn call(&self, requests: &[AdapterRequest]) -> Vec<Outcome> {
        requests
            .iter()
            .map(|req| match req.task {
                Task::NormalizeNumbers => {
                    expand_numbers(req.text.as_deref().unwrap_or_default(), &self.lexicon)
                        .map(|e| AdapterResponse::text(&req.id, e.text))
                        .map_err(|e| AdapterError::Model(e.to_string()))
                }
                _ => unsupported(req),
            })
            .collect()
    }
}

/// Wraps a backend and fails chosen ids, for fault-injection tests.
pub struct FaultInjector<B> {
    inner: B,
    model: HashSet<String>,
    transport: HashSet<String>,
    down: bool,
}

impl<B: Backend> FaultInjector<B> {
    pub fn new(inner: B) -> Self {
        FaultInjector {
            inner,
            model: HashSet::new(),
            transport: HashSet::new(),
            down: false,
        }
    }

    pub fn fail_model<S: Into<String>>(mut self, ids: impl IntoIterator<Item = S>) -> Self {
        self.model.extend(ids.into_iter().map(Into::into));
        self
    }

    pub fn fail_transport<S: Into<String>>(mut self, ids: impl IntoIterator<Item = S>) -> Self {
        self.transport.extend(ids.into_iter().map(Into::into));
        self
    }

    /// Every call fails as if the backend were unreachable.
    pub fn unreachable(mut self) -> Self {
        self.down = true;
        self
    }
}

impl<B: Backend> Backend for FaultInjector<B> {
    fn call(&self, requests: &[AdapterRequest]) -> Vec<Outcome> {
        if self.down {
            return requests
                .iter()
                .map(|_| Err(AdapterError::Transport("backend unreachable".into())))
                .collect();
        }
        let pass: Vec<AdapterRequest> = requests
            .iter()
            .filter(|r| !self.model.contains(&r.id) && !self.transport.contains(&r.id))
            .cloned()
            .collect();
        let mut inner = self.inner.call(&pass).into_iter();
        requests
            .iter()
            .map(|r| {
                if self.model.contains(&r.id) {
                    Ok(AdapterResponse::error(&r.id, "injected failure"))
                } else if self.transport.contains(&r.id) {
                    Err(AdapterError::Transport("injected transport failure".into()))
                } else {
                    inner.next().expect("one outcome per forwarded request")
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::invoke;
    use crate::manifest::check_word_sequence;
    use crate::metrics::wer;

    #[test]
    fn zero_rates_emit_reference() {
        let (out, edits) = corrupt("xin chào Việt Nam.", &NoiseSpec::clean(3), "u");
        assert_eq!(out, "xin chào Việt Nam.");
        assert_eq!(edits, InjectedEdits::default());
    }

    #[test]
    fn full_substitution() {
        let reference = "một hai ba bốn";
        let (out, edits) = corrupt(reference, &NoiseSpec::substitutions(1.0, 3), "u");
        assert_eq!(edits.substitutions, 4);
        let b = wer(reference, &out);
        assert_eq!((b.substitutions, b.wer), (4, 1.0));
    }

    #[test]
    fn five_percent_noise_over_ten_thousand_words() {
        let vocab = ["một", "hai", "ba", "bốn", "năm", "sáu", "bảy", "tám"];
        for (s, d, i) in [(0.05, 0.0, 0.0), (0.02, 0.02, 0.01)] {
            let noise = NoiseSpec {
                substitution_rate: s,
                deletion_rate: d,
                insertion_rate: i,
                substitute_up_to: None,
                seed: 11,
            };
            let mut errors = 0;
            let mut total = 0;
            for u in 0..500 {
                let reference: Vec<&str> = (0..20)
                    .map(|k| vocab[(u * 7 + k * 3) % vocab.len()])
                    .collect();
                let reference = reference.join(" ");
                let (hyp, _) = corrupt(&reference, &noise, &format!("utt{u}"));
                let b = wer(&reference, &hyp);
                errors += b.errors();
                total += b.ref_len;
            }
            let measured = errors as f64 / total as f64;
            assert_eq!(total, 10_000);
            assert!((0.04..=0.06).contains(&measured), "{measured}");
        }
    }

    #[test]
    fn noise_is_seeded_per_id() {
        let noise = NoiseSpec::substitutions(0.3, 5);
        let text = "a b c d e f g h i j";
        assert_eq!(corrupt(text, &noise, "x"), corrupt(text, &noise, "x"));
        assert_ne!(corrupt(text, &noise, "x").0, corrupt(text, &noise, "y").0);
        assert!(NoiseSpec {
            deletion_rate: 0.6,
            ..NoiseSpec::substitutions(0.5, 0)
        }
        .validate()
        .is_err());
        assert!(NoiseSpec::substitutions(1.5, 0).validate().is_err());
    }

    #[test]
    fn exact_substitution_counts() {
        let reference: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let reference = reference.join(" ");
        let noise = NoiseSpec::exact_substitutions(10, 4);
        let mut seen = [0usize; 11];
        for u in 0..2000 {
            let (hyp, edits) = corrupt(&reference, &noise, &format!("u{u}"));
            let b = wer(&reference, &hyp);
            assert_eq!(
                (b.substitutions, b.deletions, b.insertions),
                (edits.substitutions, 0, 0)
            );
            seen[edits.substitutions] += 1;
        }
        assert!(seen.iter().all(|&c| c > 100), "{seen:?}");
    }

    #[test]
    fn uniform_alignment_arithmetic() {
        let words = MockAligner::uniform().align_words("u", "a b c d", 2.0);
        let spans: Vec<(f64, f64)> = words.iter().map(|w| (w.start_s, w.end_s)).collect();
        assert_eq!(spans, [(0.0, 0.5), (0.5, 1.0), (1.0, 1.5), (1.5, 2.0)]);
        assert_eq!(
            MockAligner::jittered(9, 0.0).align_words("u", "a b c d", 2.0),
            words
        );
    }

    #[test]
    fn aligner_reads_wav_duration() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        crate::audio::write_wav(&crate::audio::AudioBuffer::new(vec![0.0; 24000], 8000), &p)
            .unwrap();
        let out = invoke(
            &MockAligner::uniform(),
            &[AdapterRequest::align("u", p.to_str().unwrap(), "a b c")],
        );
        let words = out[0].as_ref().unwrap().aligned_words().unwrap();
        assert_eq!(words.last().unwrap().end_s, 3.0);
        let out = invoke(
            &MockAligner::uniform(),
            &[AdapterRequest::align("u", "/missing.wav", "a")],
        );
        assert!(matches!(out[0], Err(AdapterError::Model(_))));
    }

    #[test]
    fn punctuator_output_passes_fidelity() {
        let p = MockPunctuator::default();
        let out = p.restore("u", "xin chào các bạn đến với việt nam hôm nay");
        assert_eq!(out, "Xin chào các bạn đến với, việt nam hôm nay.");
        let always_drop = MockPunctuator {
            drop_word_rate: 1.0,
            seed: 1,
        };
        let out = always_drop.restore("u", "a b c");
        assert_eq!(tokenize_words(&out).len(), 2);
    }

    #[test]
    fn normalizer_verbalizes_digits() {
        let n = MockNormalizer {
            lexicon: NumberLexicon::vietnamese(),
        };
        let out = invoke(
            &n,
            &[AdapterRequest::with_text(
                "u",
                Task::NormalizeNumbers,
                "tốn 45 đồng",
            )],
        );
        assert_eq!(
            out[0].as_ref().unwrap().text.as_deref(),
            Some("tốn bốn mươi lăm đồng")
        );
        let out = invoke(
            &n,
            &[AdapterRequest::with_text(
                "u",
                Task::NormalizeNumbers,
                "số 007",
            )],
        );
        assert!(matches!(out[0], Err(AdapterError::Model(_))));
    }

    #[test]
    fn unreachable_backend_fails_every_id() {
        let b = FaultInjector::new(MockAsr::new(NoiseSpec::clean(0))).unreachable();
        let out = invoke(
            &b,
            &[
                AdapterRequest::transcribe("a", "x"),
                AdapterRequest::transcribe("b", "x"),
            ],
        );
        assert!(out.iter().all(|o| matches!(o, Err(e) if e.is_retryable())));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn jittered_alignment_keeps_invariants(
                n in 1usize..40,
                dur_ms in 100u32..30_000,
                seed in any::<u64>(),
                jitter in 0.0f64..0.05,
            ) {
                let text = vec!["w"; n].join(" ");
                let d = dur_ms as f64 / 1000.0;
                let uniform = MockAligner::uniform().align_words("id", &text, d);
                let words = MockAligner::jittered(seed, jitter).align_words("id", &text, d);
                prop_assert_eq!(words.len(), n);
                prop_assert!(check_word_sequence(&words, Some(d)).is_ok());
                prop_assert_eq!(words[0].start_s, 0.0);
                prop_assert_eq!(words[n - 1].end_s, d);
                for (a, b) in words.iter().zip(&uniform) {
                    prop_assert!((a.start_s - b.start_s).abs() <= jitter + 1e-12);
                }
            }
        }
    }
}
