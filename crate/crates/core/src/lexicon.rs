//! Filtering bilingual lists against the training corpus and appending them
//! to it as extra sentence pairs.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::morphgen::LexiconEntry;
use crate::par::{self, Exec};
use crate::textprep::{build_vocab, Origin, SentencePair, Side, Vocabulary};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FilterMode {
    /// Drop an entry when every source token occurs in the training corpus.
    #[default]
    Token,
    /// Drop an entry when its whole source term occurs as a contiguous run of
    /// tokens in some training sentence.
    Phrase,
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "token" => Ok(FilterMode::Token),
            "phrase" => Ok(FilterMode::Phrase),
            other => Err(Error::InvalidArgument(format!("unknown filter mode `{other}`"))),
        }
    }
}

/// Source side of the training corpus, indexed for filtering.
pub struct CorpusIndex<'a> {
    vocab: Vocabulary,
    sentences: Vec<&'a [String]>,
}

impl<'a> CorpusIndex<'a> {
    pub fn new(train: &'a [SentencePair]) -> Self {
        CorpusIndex {
            vocab: build_vocab(train, Side::Source),
            sentences: train.iter().map(|p| p.source.as_slice()).collect(),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn ngrams(&self, lengths: &HashSet<usize>) -> HashSet<&'a [String]> {
        let mut grams = HashSet::new();
        for s in &self.sentences {
            for &n in lengths {
                if n > 0 && n <= s.len() {
                    grams.extend(s.windows(n));
                }
            }
        }
        grams
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FilterDecision {
    Kept(String),
    Removed(String),
}

impl FilterDecision {
    pub fn is_kept(&self) -> bool {
        matches!(self, FilterDecision::Kept(_))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub rows: Vec<(String, FilterDecision)>,
}

impl FilterReport {
    pub fn kept(&self) -> usize {
        self.rows.iter().filter(|(_, d)| d.is_kept()).count()
    }

    pub fn removed(&self) -> usize {
        self.rows.len() - self.kept()
    }

    /// `entry<TAB>kept|removed<TAB>reason`, one row per input entry.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (entry, d) in &self.rows {
            let (status, reason) = match d {
                FilterDecision::Kept(r) => ("kept", r),
                FilterDecision::Removed(r) => ("removed", r),
            };
            out.push_str(&format!("{entry}\t{status}\t{reason}\n"));
        }
        out
    }
}

impl fmt::Display for FilterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kept\t{}\nremoved\t{}", self.kept(), self.removed())
    }
}

fn decide(entry: &LexiconEntry, index: &CorpusIndex, grams: &HashSet<&[String]>, mode: FilterMode) -> FilterDecision {
    match mode {
        FilterMode::Token => match entry.source.iter().find(|t| !index.vocab.contains(t)) {
            Some(unknown) => FilterDecision::Kept(format!("unseen token {unknown}")),
            None => FilterDecision::Removed("all source tokens in training corpus".into()),
        },
        FilterMode::Phrase => {
            if grams.contains(entry.source.as_slice()) {
                FilterDecision::Removed("source term in training corpus".into())
            } else {
                FilterDecision::Kept("source term not in training corpus".into())
            }
        }
    }
}

pub fn filter_list(
    entries: &[LexiconEntry],
    index: &CorpusIndex,
    mode: FilterMode,
    exec: Exec,
) -> (Vec<LexiconEntry>, FilterReport) {
    let grams = match mode {
        FilterMode::Phrase => index.ngrams(&entries.iter().map(|e| e.source.len()).collect()),
        FilterMode::Token => HashSet::new(),
    };
    let decisions = par::map(exec, entries, |e| decide(e, index, &grams, mode));
    let mut kept = Vec::new();
    let mut report = FilterReport::default();
    for (e, d) in entries.iter().zip(decisions) {
        if d.is_kept() {
            kept.push(e.clone());
        }
        report
            .rows
            .push((format!("{} ||| {}", e.source_text(), e.target_text()), d));
    }
    (kept, report)
}

/// Appends each list entry once, after the corpus pairs.
pub fn integrate(train: &[SentencePair], lists: &[LexiconEntry]) -> Vec<SentencePair> {
    let mut out = train.to_vec();
    out.extend(lists.iter().map(|e| {
        let origin = if e.flags.augmented {
            Origin::AugmentedList
        } else {
            Origin::List
        };
        SentencePair::new(e.source.clone(), e.target.clone(), origin)
    }));
    out
}
