//! Rule-based cardinal number verbalization.
//!
//! A lexicon is plain data (word lists plus a handful of combination flags),
//! so new languages can be loaded from a config file. Numbers are spoken in
//! groups of three digits joined by scale words.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// How multiples of ten from 20 to 90 are spoken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensRule {
    /// One word per multiple, 20 through 90 ("twenty", ..., "ninety").
    Words(Vec<String>),
    /// The unit word followed by a fixed word ("hai mươi").
    Suffix(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumberLexicon {
    pub name: String,
    pub zero: String,
    /// Words for 1 through 9.
    pub units: Vec<String>,
    /// Words for 10 through 19, when the language has dedicated forms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teens: Option<Vec<String>>,
    /// Word for ten in composed teens ("mười lăm"); unused when `teens` is set.
    #[serde(default)]
    pub ten: String,
    pub tens: TensRule,
    /// Unit replacements directly after the ten word (5 -> "lăm").
    #[serde(default)]
    pub unit_after_ten: BTreeMap<u8, String>,
    /// Unit replacements after a multiple of ten >= 20 (1 -> "mốt").
    #[serde(default)]
    pub unit_after_tens: BTreeMap<u8, String>,
    pub hundred: String,
    /// Spoken between the hundreds and a lone unit ("một trăm lẻ năm").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_tens_connector: Option<String>,
    /// Non-leading groups below 100 say "zero hundred" explicitly.
    #[serde(default)]
    pub spell_zero_hundreds: bool,
    /// Thousand, million, billion, ...
    pub scales: Vec<String>,
    #[serde(default = "default_max")]
    pub max_value: u64,
    /// Accepted alternative spellings, mapped to their canonical word.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    #[serde(skip)]
    tables: OnceLock<Tables>,
}

fn default_max() -> u64 {
    1_000_000_000
}

#[derive(Debug, Clone)]
struct Tables {
    leading: HashMap<String, u64>,
    inner: HashMap<String, u64>,
    scale_of: HashMap<String, usize>,
}

fn strs(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl NumberLexicon {
    pub fn english() -> Self {
        NumberLexicon {
            name: "en".into(),
            zero: "zero".into(),
            units: strs(&[
                "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
            ]),
            teens: Some(strs(&[
                "ten",
                "eleven",
                "twelve",
                "thirteen",
                "fourteen",
                "fifteen",
                "sixteen",
                "seventeen",
                "eighteen",
                "nineteen",
            ])),
            ten: "ten".into(),
            tens: TensRule::Words(strs(&[
                "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
            ])),
            unit_after_ten: BTreeMap::new(),
            unit_after_tens: BTreeMap::new(),
            hundred: "hundred".into(),
            zero_tens_connector: None,
            spell_zero_hundreds: false,
            scales: strs(&["thousand", "million", "billion"]),
            max_value: default_max(),
            aliases: BTreeMap::new(),
            tables: OnceLock::new(),
        }
    }

    pub fn vietnamese() -> Self {
        let map = |pairs: &[(&str, &str)]| -> BTreeMap<String, String> {
            pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect()
        };
        NumberLexicon {
            name: "vi".into(),
            zero: "không".into(),
            units: strs(&[
                "một", "hai", "ba", "bốn", "năm", "sáu", "bảy", "tám", "chín",
            ]),
            teens: None,
            ten: "mười".into(),
            tens: TensRule::Suffix("mươi".into()),
            unit_after_ten: [(5u8, "lăm".to_string())].into_iter().collect(),
            unit_after_tens: [(1u8, "mốt".to_string()), (5, "lăm".to_string())]
                .into_iter()
                .collect(),
            hundred: "trăm".into(),
            zero_tens_connector: Some("lẻ".into()),
            spell_zero_hundreds: true,
            scales: strs(&["nghìn", "triệu", "tỷ"]),
            max_value: default_max(),
            aliases: map(&[
                ("tư", "bốn"),
                ("linh", "lẻ"),
                ("ngàn", "nghìn"),
                ("tỉ", "tỷ"),
                ("nhăm", "lăm"),
            ]),
            tables: OnceLock::new(),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "en" | "english" => Some(Self::english()),
            "vi" | "vietnamese" => Some(Self::vietnamese()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.units.len() != 9 {
            return Err(format!("units must list 9 words, got {}", self.units.len()));
        }
        match &self.teens {
            Some(t) if t.len() != 10 => {
                return Err(format!("teens must list 10 words, got {}", t.len()))
            }
            None if self.ten.is_empty() => return Err("either teens or ten is required".into()),
            _ => {}
        }
        if let TensRule::Words(w) = &self.tens {
            if w.len() != 8 {
                return Err(format!("tens must list 8 words (20..90), got {}", w.len()));
            }
        }
        let needed = (self.max_value.max(1) as f64).log10().floor() as usize / 3;
        if self.scales.len() < needed {
            return Err(format!(
                "max_value {} needs {needed} scale words",
                self.max_value
            ));
        }
        let all = self.vocabulary();
        if let Some(w) = all
            .iter()
            .find(|w| w.is_empty() || w.chars().any(char::is_whitespace))
        {
            return Err(format!(
                "lexicon word {w:?} must be a single non-empty word"
            ));
        }
        Ok(())
    }

    fn vocabulary(&self) -> Vec<&String> {
        let mut v: Vec<&String> = vec![&self.zero, &self.hundred];
        v.extend(&self.units);
        v.extend(self.teens.iter().flatten());
        if self.teens.is_none() {
            v.push(&self.ten);
        }
        match &self.tens {
            TensRule::Words(w) => v.extend(w),
            TensRule::Suffix(s) => v.push(s),
        }
        v.extend(self.unit_after_ten.values());
        v.extend(self.unit_after_tens.values());
        v.extend(self.zero_tens_connector.iter());
        v.extend(&self.scales);
        v
    }

    fn unit(&self, d: u64) -> &str {
        &self.units[d as usize - 1]
    }

    fn push_group(&self, n: u64, leading: bool, out: &mut Vec<String>) {
        let (h, t, u) = (n / 100, (n / 10) % 10, n % 10);
        let mut said_hundreds = false;
        if h > 0 || (!leading && self.spell_zero_hundreds) {
            out.push(if h > 0 {
                self.unit(h).to_string()
            } else {
                self.zero.clone()
            });
            out.push(self.hundred.clone());
            said_hundreds = true;
        }
        match (t, u) {
            (0, 0) => {}
            (0, u) => {
                if said_hundreds {
                    if let Some(c) = &self.zero_tens_connector {
                        out.push(c.clone());
                    }
                }
                out.push(self.unit(u).to_string());
            }
            (1, u) => match &self.teens {
                Some(teens) => out.push(teens[u as usize].clone()),
                None => {
                    out.push(self.ten.clone());
                    if u > 0 {
                        let w = self
                            .unit_after_ten
                            .get(&(u as u8))
                            .map_or(self.unit(u), String::as_str);
                        out.push(w.to_string());
                    }
                }
            },
            (t, u) => {
                match &self.tens {
                    TensRule::Words(w) => out.push(w[t as usize - 2].clone()),
                    TensRule::Suffix(s) => {
                        out.push(self.unit(t).to_string());
                        out.push(s.clone());
                    }
                }
                if u > 0 {
                    let w = self
                        .unit_after_tens
                        .get(&(u as u8))
                        .map_or(self.unit(u), String::as_str);
                    out.push(w.to_string());
                }
            }
        }
    }

    /// Spoken words for `n`, or `None` above `max_value`.
    pub fn expand(&self, n: u64) -> Option<Vec<String>> {
        if n > self.max_value {
            return None;
        }
        if n == 0 {
            return Some(vec![self.zero.clone()]);
        }
        let mut groups = Vec::new();
        let mut rest = n;
        while rest > 0 {
            groups.push(rest % 1000);
            rest /= 1000;
        }
        if groups.len() > self.scales.len() + 1 {
            return None;
        }
        let mut out = Vec::new();
        let mut leading = true;
        for (power, &g) in groups.iter().enumerate().rev() {
            if g == 0 {
                continue;
            }
            self.push_group(g, leading, &mut out);
            if power > 0 {
                out.push(self.scales[power - 1].clone());
            }
            leading = false;
        }
        Some(out)
    }

    /// Expands a digit string. Leading zeros ("007") and values beyond
    /// `max_value` are not covered.
    pub fn expand_digits(&self, digits: &str) -> Option<Vec<String>> {
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return None;
        }
        if digits.len() > 19 {
            return None;
        }
        self.expand(digits.parse().ok()?)
    }

    fn tables(&self) -> &Tables {
        self.tables.get_or_init(|| {
            let mut leading = HashMap::new();
            let mut inner = HashMap::new();
            for g in 1..1000u64 {
                let mut w = Vec::new();
                self.push_group(g, true, &mut w);
                leading.insert(w.join(" "), g);
                let mut w = Vec::new();
                self.push_group(g, false, &mut w);
                inner.insert(w.join(" "), g);
            }
            let scale_of = self
                .scales
                .iter()
                .enumerate()
                .map(|(i, s)| (s.clone(), i + 1))
                .collect();
            Tables {
                leading,
                inner,
                scale_of,
            }
        })
    }

    /// Inverse of [`expand`](Self::expand). Accepts the canonical spelling
    /// plus configured aliases; returns `None` for anything else.
    pub fn parse<S: AsRef<str>>(&self, words: &[S]) -> Option<u64> {
        let words: Vec<String> = words
            .iter()
            .map(|w| {
                let w = w.as_ref().to_lowercase();
                self.aliases.get(&w).cloned().unwrap_or(w)
            })
            .collect();
        if words.is_empty() {
            return None;
        }
        if words.len() == 1 && words[0] == self.zero {
            return Some(0);
        }
        let tables = self.tables();
        let mut total: u64 = 0;
        let mut last_scale = usize::MAX;
        let mut segment: Vec<&str> = Vec::new();
        let mut first = true;
        let group_value = |seg: &[&str], first: bool| -> Option<u64> {
            let key = seg.join(" ");
            if first {
                tables.leading.get(&key).copied()
            } else {
                tables
                    .inner
                    .get(&key)
                    .or_else(|| tables.leading.get(&key))
                    .copied()
            }
        };
        for w in &words {
            if let Some(&scale) = tables.scale_of.get(w) {
                if scale >= last_scale {
                    return None;
                }
                let g = group_value(&segment, first)?;
                total += g * 1000u64.pow(scale as u32);
                last_scale = scale;
                segment.clear();
                first = false;
            } else {
                segment.push(w);
            }
        }
        if !segment.is_empty() {
            total += group_value(&segment, first)?;
        }
        (total <= self.max_value).then_some(total)
    }
}

impl PartialEq for NumberLexicon {
    fn eq(&self, other: &Self) -> bool {
        serde_json::to_value(self).ok() == serde_json::to_value(other).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn say(lex: &NumberLexicon, n: u64) -> String {
        lex.expand(n).unwrap().join(" ")
    }

    #[test]
    fn english_examples() {
        let en = NumberLexicon::english();
        assert_eq!(say(&en, 45), "forty five");
        assert_eq!(say(&en, 30), "thirty");
        assert_eq!(say(&en, 0), "zero");
        assert_eq!(say(&en, 13), "thirteen");
        assert_eq!(say(&en, 105), "one hundred five");
        assert_eq!(say(&en, 123), "one hundred twenty three");
        assert_eq!(say(&en, 1_005), "one thousand five");
        assert_eq!(say(&en, 2_000_019), "two million nineteen");
        assert_eq!(say(&en, 1_000_000_000), "one billion");
        assert_eq!(en.expand(1_000_000_001), None);
    }

    #[test]
    fn vietnamese_examples() {
        let vi = NumberLexicon::vietnamese();
        assert_eq!(say(&vi, 45), "bốn mươi lăm");
        assert_eq!(say(&vi, 10), "mười");
        assert_eq!(say(&vi, 15), "mười lăm");
        assert_eq!(say(&vi, 11), "mười một");
        assert_eq!(say(&vi, 21), "hai mươi mốt");
        assert_eq!(say(&vi, 30), "ba mươi");
        assert_eq!(say(&vi, 105), "một trăm lẻ năm");
        assert_eq!(say(&vi, 115), "một trăm mười lăm");
        assert_eq!(say(&vi, 1_005), "một nghìn không trăm lẻ năm");
        assert_eq!(say(&vi, 2_000_050), "hai triệu không trăm năm mươi");
        assert_eq!(say(&vi, 1_000_000_000), "một tỷ");
    }

    #[test]
    fn aliases_parse() {
        let vi = NumberLexicon::vietnamese();
        assert_eq!(vi.parse(&["hai", "mươi", "tư"]), Some(24));
        assert_eq!(vi.parse(&["một", "trăm", "linh", "năm"]), Some(105));
        assert_eq!(vi.parse(&["ba", "ngàn"]), Some(3000));
    }

    #[test]
    fn rejects_non_numbers() {
        let en = NumberLexicon::english();
        assert_eq!(en.parse(&["two", "two"]), None);
        assert_eq!(en.parse(&["thousand", "million"]), None);
        assert_eq!(en.parse(&["one", "thousand", "one", "million"]), None);
        assert_eq!(en.parse::<&str>(&[]), None);
        assert_eq!(en.expand_digits("007"), None);
        assert_eq!(en.expand_digits("12a"), None);
    }

    #[test]
    fn every_number_below_one_hundred_thousand_round_trips() {
        for lex in [NumberLexicon::english(), NumberLexicon::vietnamese()] {
            for n in 0..100_000u64 {
                let words = lex.expand(n).unwrap();
                assert_eq!(lex.parse(&words), Some(n), "{} {n}: {words:?}", lex.name);
            }
        }
    }

    #[test]
    fn builtins_validate_and_serialize() {
        for lex in [NumberLexicon::english(), NumberLexicon::vietnamese()] {
            lex.validate().unwrap();
            let json = serde_json::to_string(&lex).unwrap();
            let back: NumberLexicon = serde_json::from_str(&json).unwrap();
            assert_eq!(back, lex);
            assert_eq!(back.expand(987_654_321), lex.expand(987_654_321));
        }
    }

    #[test]
    fn malformed_lexicon_is_rejected() {
        let mut lex = NumberLexicon::english();
        lex.units.pop();
        assert!(lex.validate().is_err());
        let mut lex = NumberLexicon::english();
        lex.scales.truncate(2);
        assert!(lex.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn expansion_then_parse_is_identity(n in 0u64..=1_000_000_000) {
                for lex in [NumberLexicon::english(), NumberLexicon::vietnamese()] {
                    let words = lex.expand(n).unwrap();
                    prop_assert_eq!(lex.parse(&words), Some(n));
                    prop_assert_eq!(lex.expand_digits(&n.to_string()), Some(words));
                }
            }
        }
    }
}
