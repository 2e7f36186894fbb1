//! Tokenization, truecasing, corpus cleaning and vocabulary counting.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use unicode_general_category::{get_general_category, GeneralCategory as Gc};

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Lang {
    Sinhala,
    Tamil,
    English,
}

impl Lang {
    pub fn code(self) -> &'static str {
        match self {
            Lang::Sinhala => "si",
            Lang::Tamil => "ta",
            Lang::English => "en",
        }
    }

    /// Only English is truecased; the other scripts have no case.
    pub fn is_cased(self) -> bool {
        matches!(self, Lang::English)
    }
}

impl FromStr for Lang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "si" => Ok(Lang::Sinhala),
            "ta" => Ok(Lang::Tamil),
            "en" => Ok(Lang::English),
            other => Err(Error::InvalidArgument(format!("unknown language `{other}`"))),
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Corpus,
    List,
    AugmentedList,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub origin: Origin,
}

impl SentencePair {
    pub fn new(source: Vec<String>, target: Vec<String>, origin: Origin) -> Self {
        SentencePair { source, target, origin }
    }

    /// Builds a corpus pair from two already tokenized, space separated lines.
    pub fn from_lines(source: &str, target: &str) -> Self {
        SentencePair::new(split(source), split(target), Origin::Corpus)
    }

    pub fn swapped(&self) -> Self {
        SentencePair::new(self.target.clone(), self.source.clone(), self.origin)
    }
}

/// Splits on whitespace without any further tokenization.
pub fn split(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

fn is_split_char(c: char) -> bool {
    matches!(
        get_general_category(c),
        Gc::ConnectorPunctuation
            | Gc::DashPunctuation
            | Gc::OpenPunctuation
            | Gc::ClosePunctuation
            | Gc::InitialPunctuation
            | Gc::FinalPunctuation
            | Gc::OtherPunctuation
            | Gc::MathSymbol
            | Gc::CurrencySymbol
            | Gc::ModifierSymbol
            | Gc::OtherSymbol
    )
}

/// Splits a raw line into tokens.
///
/// Whitespace separates tokens and every punctuation or symbol character
/// becomes a token of its own. Joiners and combining marks (category C*/M*)
/// stay inside the word, so Sinhala conjuncts such as `ප්‍ර` survive intact.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if is_split_char(c) {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            } else {
                word.push(c);
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// Surface-form frequencies per lowercased token.
#[derive(Clone, Debug, Default)]
pub struct TruecaseModel {
    forms: HashMap<String, BTreeMap<String, u64>>,
}

impl TruecaseModel {
    /// Counts surface forms outside sentence-initial position, where casing is
    /// informative. Initial tokens are registered with a zero count so a word
    /// only ever seen sentence-initially keeps its observed form.
    pub fn train<'a, I>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut model = TruecaseModel::default();
        for sent in sentences {
            for (i, tok) in sent.iter().enumerate() {
                model.add(tok, u64::from(i > 0));
            }
        }
        model
    }

    pub fn add(&mut self, surface: &str, count: u64) {
        *self
            .forms
            .entry(surface.to_lowercase())
            .or_default()
            .entry(surface.to_string())
            .or_insert(0) += count;
    }

    /// Most frequent surface form; ties go to the lexicographically smallest.
    pub fn best(&self, token: &str) -> Option<&str> {
        let forms = self.forms.get(&token.to_lowercase())?;
        let mut best: Option<(&str, u64)> = None;
        for (form, &n) in forms {
            if best.is_none_or(|(_, m)| n > m) {
                best = Some((form, n));
            }
        }
        best.map(|(f, _)| f)
    }

    /// Recases the sentence-initial token; the rest pass through unchanged.
    pub fn apply(&self, tokens: &[String]) -> Vec<String> {
        let mut out = tokens.to_vec();
        if let Some(first) = out.first_mut() {
            *first = match self.best(first) {
                Some(form) => form.to_string(),
                None => first.to_lowercase(),
            };
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CleanParams {
    pub max_len: usize,
    pub max_ratio: f64,
}

impl Default for CleanParams {
    fn default() -> Self {
        CleanParams {
            max_len: 80,
            max_ratio: 9.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CleanReason {
    Empty,
    TooLong,
    Ratio,
}

/// Why `pair` would be dropped by [`clean`], if at all.
pub fn clean_reason(pair: &SentencePair, params: &CleanParams) -> Option<CleanReason> {
    let (s, t) = (pair.source.len(), pair.target.len());
    if s == 0 || t == 0 {
        return Some(CleanReason::Empty);
    }
    if s > params.max_len || t > params.max_len {
        return Some(CleanReason::TooLong);
    }
    let ratio = s.max(t) as f64 / s.min(t) as f64;
    // a ratio equal to the threshold is kept
    if ratio > params.max_ratio {
        return Some(CleanReason::Ratio);
    }
    None
}

pub fn clean(pairs: &[SentencePair], params: &CleanParams) -> Vec<SentencePair> {
    pairs
        .iter()
        .filter(|p| clean_reason(p, params).is_none())
        .cloned()
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pub side: Side,
    counts: BTreeMap<String, u64>,
}

impl Vocabulary {
    pub fn new(side: Side) -> Self {
        Vocabulary {
            side,
            counts: BTreeMap::new(),
        }
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.counts.contains_key(token)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// `token<TAB>count`, by descending count then token.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<_> = self.iter().collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut out = String::new();
        for (tok, n) in rows {
            out.push_str(tok);
            out.push('\t');
            out.push_str(&n.to_string());
            out.push('\n');
        }
        out
    }
}

pub fn build_vocab(pairs: &[SentencePair], side: Side) -> Vocabulary {
    let mut vocab = Vocabulary::new(side);
    for p in pairs {
        let toks = match side {
            Side::Source => &p.source,
            Side::Target => &p.target,
        };
        for t in toks {
            *vocab.counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    vocab
}
