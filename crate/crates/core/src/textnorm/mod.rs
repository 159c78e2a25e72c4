//! Text primitives shared by the gates and the metrics: WER normalization,
//! tokenization, character whitelisting, and digit/spoken-form conversion.

mod lexicon;

pub use lexicon::{NumberLexicon, TensRule};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{AlignedWord, NumericSpanMapping};

/// The punctuation kept by the cleaning whitelist and stripped for N-WER.
pub const DEFAULT_PUNCT: [char; 4] = [',', '.', '!', '?'];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("cannot expand number token {0:?}")]
    Unexpandable(String),
    #[error("mapping {index} ({digit:?}) out of range for {len} words")]
    MappingRange {
        index: usize,
        digit: String,
        len: usize,
    },
    #[error("mappings {0} and {1} overlap")]
    MappingOverlap(usize, usize),
    #[error("mapping {index}: words {found:?} do not spell {expected:?}")]
    MappingMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("normalizer altered text: {0}")]
    NormalizerAltered(String),
    #[error("ambiguous number alignment between {raw:?} and {normalized:?}")]
    Ambiguous { raw: String, normalized: String },
}

/// Characters a transcript may contain. Whitespace and ASCII digits are
/// always allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharProfile {
    pub name: String,
    #[serde(with = "char_set")]
    pub allowed_letters: BTreeSet<char>,
    #[serde(with = "char_set", default = "default_punct")]
    pub allowed_punct: BTreeSet<char>,
}

fn default_punct() -> BTreeSet<char> {
    DEFAULT_PUNCT.into_iter().collect()
}

const VI_LOWER: &str =
    "aàáảãạăằắẳẵặâầấẩẫậbcdđeèéẻẽẹêềếểễệghiìíỉĩịklmnoòóỏõọôồốổỗộơờớởỡợpqrstuùúủũụưừứửữựvxyỳýỷỹỵ";

impl CharProfile {
    pub fn from_letters(name: &str, lower: &str) -> Self {
        let allowed_letters = lower
            .chars()
            .flat_map(|c| std::iter::once(c).chain(c.to_uppercase()))
            .collect();
        CharProfile {
            name: name.to_string(),
            allowed_letters,
            allowed_punct: default_punct(),
        }
    }

    /// Vietnamese alphabet with tone marks, plus the ASCII letters f, j, w, z
    /// that occur in loanwords and names.
    pub fn vietnamese() -> Self {
        let mut letters = String::from(VI_LOWER);
        letters.push_str("abcdefghijklmnopqrstuvwxyz");
        Self::from_letters("vi", &letters)
    }

    pub fn english() -> Self {
        Self::from_letters("en", "abcdefghijklmnopqrstuvwxyz")
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "vi" | "vietnamese" => Some(Self::vietnamese()),
            "en" | "english" => Some(Self::english()),
            _ => None,
        }
    }

    pub fn allows(&self, c: char) -> bool {
        c.is_whitespace()
            || c.is_ascii_digit()
            || self.allowed_letters.contains(&c)
            || self.allowed_punct.contains(&c)
    }
}

mod char_set {
    use std::collections::BTreeSet;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(set: &BTreeSet<char>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&set.iter().collect::<String>())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeSet<char>, D::Error> {
        Ok(String::deserialize(d)?.chars().collect())
    }
}

/// Lowercases, deletes `,.!?`, and collapses whitespace.
pub fn normalize_for_wer(text: &str) -> String {
    normalize_with(text, &DEFAULT_PUNCT)
}

/// [`normalize_for_wer`] with a caller-chosen punctuation set.
pub fn normalize_with(text: &str, punct: &[char]) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered.chars().filter(|c| !punct.contains(c)).collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits on Unicode whitespace; punctuation stays attached to its word.
pub fn tokenize_words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharViolation {
    pub ch: char,
    /// Character (not byte) offset.
    pub position: usize,
}

impl fmt::Display for CharViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "disallowed character {:?} at {}", self.ch, self.position)
    }
}

pub fn check_char_whitelist(text: &str, profile: &CharProfile) -> Result<(), CharViolation> {
    match text.chars().enumerate().find(|(_, c)| !profile.allows(*c)) {
        Some((position, ch)) => Err(CharViolation { ch, position }),
        None => Ok(()),
    }
}

/// Splits a token into leading punctuation, core, and trailing punctuation.
fn split_affixes(token: &str) -> (&str, &str, &str) {
    let start = token
        .char_indices()
        .find(|(_, c)| c.is_alphanumeric())
        .map_or(token.len(), |(i, _)| i);
    let end = token
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_alphanumeric())
        .map_or(start, |(i, c)| i + c.len_utf8());
    (&token[..start], &token[start..end], &token[end..])
}

fn digit_core(token: &str) -> Option<(&str, &str, &str)> {
    let (pre, core, post) = split_affixes(token);
    (!core.is_empty() && core.bytes().all(|b| b.is_ascii_digit())).then_some((pre, core, post))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expansion {
    pub text: String,
    pub mappings: Vec<NumericSpanMapping>,
}

/// Replaces every digit token with its spoken form. Punctuation attached to a
/// digit token moves to the first/last spoken word.
pub fn expand_numbers(text: &str, lexicon: &NumberLexicon) -> Result<Expansion, TextError> {
    let mut words: Vec<String> = Vec::new();
    let mut mappings = Vec::new();
    for token in tokenize_words(text) {
        let Some((pre, core, post)) = digit_core(token) else {
            words.push(token.to_string());
            continue;
        };
        let spoken = lexicon
            .expand_digits(core)
            .ok_or_else(|| TextError::Unexpandable(token.to_string()))?;
        mappings.push(NumericSpanMapping {
            digit_form: core.to_string(),
            spoken_form: spoken.join(" "),
            word_index_start: words.len(),
            word_index_count: spoken.len(),
        });
        let last = spoken.len() - 1;
        for (i, w) in spoken.into_iter().enumerate() {
            let mut s = String::new();
            if i == 0 {
                s.push_str(pre);
            }
            s.push_str(&w);
            if i == last {
                s.push_str(post);
            }
            words.push(s);
        }
    }
    Ok(Expansion {
        text: words.join(" "),
        mappings,
    })
}

fn check_mappings(mappings: &[NumericSpanMapping], len: usize) -> Result<Vec<usize>, TextError> {
    let mut order: Vec<usize> = (0..mappings.len()).collect();
    order.sort_by_key(|&i| mappings[i].word_index_start);
    let mut prev: Option<usize> = None;
    for &i in &order {
        let m = &mappings[i];
        if m.word_index_count == 0 || m.word_range().end > len {
            return Err(TextError::MappingRange {
                index: i,
                digit: m.digit_form.clone(),
                len,
            });
        }
        if let Some(p) = prev {
            if mappings[p].word_range().end > m.word_index_start {
                return Err(TextError::MappingOverlap(p, i));
            }
        }
        prev = Some(i);
    }
    Ok(order)
}

/// One output unit of a reversion: the merged text and the input word range.
struct Merged {
    text: String,
    range: std::ops::Range<usize>,
}

fn merge_spans<S: AsRef<str>>(
    texts: &[S],
    mappings: &[NumericSpanMapping],
) -> Result<Vec<Merged>, TextError> {
    let order = check_mappings(mappings, texts.len())?;
    let mut out = Vec::with_capacity(texts.len());
    let mut next = 0;
    for i in order {
        let m = &mappings[i];
        let range = m.word_range();
        for j in next..range.start {
            out.push(Merged {
                text: texts[j].as_ref().to_string(),
                range: j..j + 1,
            });
        }
        let joined = texts[range.clone()]
            .iter()
            .map(AsRef::as_ref)
            .collect::<Vec<_>>()
            .join(" ");
        let (pre, inner, post) = split_affixes(&joined);
        if inner.to_lowercase() != m.spoken_form.to_lowercase() {
            return Err(TextError::MappingMismatch {
                index: i,
                expected: m.spoken_form.clone(),
                found: joined,
            });
        }
        out.push(Merged {
            text: format!("{pre}{}{post}", m.digit_form),
            range: range.clone(),
        });
        next = range.end;
    }
    for j in next..texts.len() {
        out.push(Merged {
            text: texts[j].as_ref().to_string(),
            range: j..j + 1,
        });
    }
    Ok(out)
}

/// Collapses each mapped span back to its digit form, spanning from the
/// first word's start to the last word's end.
pub fn revert_numbers(
    words: &[AlignedWord],
    mappings: &[NumericSpanMapping],
) -> Result<Vec<AlignedWord>, TextError> {
    let texts: Vec<&str> = words.iter().map(|w| w.text.as_str()).collect();
    Ok(merge_spans(&texts, mappings)?
        .into_iter()
        .map(|m| AlignedWord {
            text: m.text,
            start_s: words[m.range.start].start_s,
            end_s: words[m.range.end - 1].end_s,
        })
        .collect())
}

/// Text-only counterpart of [`revert_numbers`].
pub fn revert_text(text: &str, mappings: &[NumericSpanMapping]) -> Result<String, TextError> {
    let tokens = tokenize_words(text);
    Ok(merge_spans(&tokens, mappings)?
        .into_iter()
        .map(|m| m.text)
        .collect::<Vec<_>>()
        .join(" "))
}

/// Recovers the number mappings by aligning a normalizer's input and output
/// word by word. Non-digit tokens must match exactly.
pub fn extract_mapping_from_pair(
    raw: &str,
    normalized: &str,
) -> Result<Vec<NumericSpanMapping>, TextError> {
    extract_mapping(raw, normalized, None)
}

/// As [`extract_mapping_from_pair`]; when a lexicon is given, a span is only
/// accepted if it parses to the digit token's value, which resolves
/// segmentations like "21 2" -> "twenty one two".
pub fn extract_mapping(
    raw: &str,
    normalized: &str,
    lexicon: Option<&NumberLexicon>,
) -> Result<Vec<NumericSpanMapping>, TextError> {
    let r = tokenize_words(raw);
    let n = tokenize_words(normalized);

    // Spoken words for a digit token consuming n[j..j+k], if admissible.
    let span = |i: usize, j: usize, k: usize| -> Option<Vec<String>> {
        let (pre, core, post) = digit_core(r[i])?;
        let run = &n[j..j + k];
        let first = run[0].strip_prefix(pre)?;
        let mut words: Vec<String> = run.iter().map(|w| w.to_string()).collect();
        words[0] = first.to_string();
        let last = words[k - 1].strip_suffix(post)?.to_string();
        words[k - 1] = last;
        if words
            .iter()
            .any(|w| w.is_empty() || w.bytes().any(|b| b.is_ascii_digit()))
        {
            return None;
        }
        if let Some(lex) = lexicon {
            if lex.parse(&words)? != core.parse::<u64>().ok()? {
                return None;
            }
        }
        Some(words)
    };

    // ways[i][j]: number of alignments of r[i..] onto n[j..], capped at 2.
    let mut ways = vec![vec![0u8; n.len() + 1]; r.len() + 1];
    ways[r.len()][n.len()] = 1;
    for i in (0..r.len()).rev() {
        let is_digit = digit_core(r[i]).is_some();
        for j in (0..=n.len()).rev() {
            ways[i][j] = if !is_digit {
                if j < n.len() && n[j] == r[i] {
                    ways[i + 1][j + 1]
                } else {
                    0
                }
            } else {
                let mut total = 0u8;
                for k in 1..=n.len() - j {
                    if ways[i + 1][j + k] > 0 && span(i, j, k).is_some() {
                        total = total.saturating_add(ways[i + 1][j + k]).min(2);
                    }
                }
                total
            };
        }
    }
    match ways[0][0] {
        0 => {
            return Err(TextError::NormalizerAltered(first_divergence(&r, &n)));
        }
        1 => {}
        _ => {
            return Err(TextError::Ambiguous {
                raw: raw.to_string(),
                normalized: normalized.to_string(),
            })
        }
    }
    let mut mappings = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < r.len() {
        match digit_core(r[i]) {
            None => j += 1,
            Some((_, core, _)) => {
                let (k, words) = (1..=n.len() - j)
                    .filter(|&k| ways[i + 1][j + k] > 0)
                    .find_map(|k| span(i, j, k).map(|w| (k, w)))
                    .expect("unique alignment");
                mappings.push(NumericSpanMapping {
                    digit_form: core.to_string(),
                    spoken_form: words.join(" "),
                    word_index_start: j,
                    word_index_count: k,
                });
                j += k;
            }
        }
        i += 1;
    }
    Ok(mappings)
}

fn first_divergence(r: &[&str], n: &[&str]) -> String {
    let common = r.iter().zip(n).take_while(|(a, b)| a == b).count();
    match (r.get(common), n.get(common)) {
        (Some(a), Some(b)) => format!("token {common}: {a:?} became {b:?}"),
        (Some(a), None) => format!("token {common} {a:?} missing from output"),
        (None, Some(b)) => format!("extra output token {b:?} at {common}"),
        (None, None) => "digit tokens could not be matched".to_string(),
    }
}
