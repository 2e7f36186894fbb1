//! Phrase pair extraction from symmetrized alignments and phrase table
//! scoring with Good-Turing discounted relative frequencies and lexical
//! weights.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::align::{AlignedCorpus, AlignmentMatrix, TranslationTable};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::textprep::SentencePair;

pub const DEFAULT_MAX_PHRASE_LEN: usize = 7;
pub const GOOD_TURING_CUTOFF: u64 = 5;
const SCORE_FLOOR: f64 = 1e-12;

/// Half-open source and target spans of a phrase pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhraseSpan {
    pub src: (usize, usize),
    pub tgt: (usize, usize),
}

/// Every span pair consistent with the alignment: at least one link inside
/// the box and no link connecting the inside to the outside. Unaligned
/// target words at the edges are absorbed in all combinations.
pub fn extract_spans(align: &AlignmentMatrix, max_len: usize) -> Vec<PhraseSpan> {
    let (n, m) = (align.src_len, align.tgt_len);
    let mut tgt_aligned = vec![false; m];
    let mut by_tgt: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut by_src: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in &align.links {
        tgt_aligned[j] = true;
        by_tgt[j].push(i);
        by_src[i].push(j);
    }

    let mut out = Vec::new();
    for s1 in 0..n {
        let mut t_lo = usize::MAX;
        let mut t_hi = 0;
        for (s2, links) in by_src.iter().enumerate().take(n.min(s1 + max_len)).skip(s1) {
            for &j in links {
                t_lo = t_lo.min(j);
                t_hi = t_hi.max(j);
            }
            if t_lo == usize::MAX || t_hi - t_lo + 1 > max_len {
                continue;
            }
            let consistent = (t_lo..=t_hi).all(|j| by_tgt[j].iter().all(|&i| i >= s1 && i <= s2));
            if !consistent {
                continue;
            }
            let mut ts = t_lo;
            loop {
                let mut te = t_hi;
                while te - ts < max_len {
                    out.push(PhraseSpan {
                        src: (s1, s2 + 1),
                        tgt: (ts, te + 1),
                    });
                    te += 1;
                    if te >= m || tgt_aligned[te] {
                        break;
                    }
                }
                if ts == 0 || tgt_aligned[ts - 1] || t_hi + 1 - (ts - 1) > max_len {
                    break;
                }
                ts -= 1;
            }
        }
    }
    out.sort();
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExtractedPhrase {
    pub source: Vec<String>,
    pub target: Vec<String>,
    /// Links relative to the phrase boxes.
    pub links: Vec<(usize, usize)>,
}

pub fn extract_phrases(pair: &SentencePair, align: &AlignmentMatrix, max_len: usize) -> Vec<ExtractedPhrase> {
    extract_spans(align, max_len)
        .into_iter()
        .map(|sp| ExtractedPhrase {
            source: pair.source[sp.src.0..sp.src.1].to_vec(),
            target: pair.target[sp.tgt.0..sp.tgt.1].to_vec(),
            links: align
                .links
                .iter()
                .filter(|&&(i, j)| i >= sp.src.0 && i < sp.src.1 && j >= sp.tgt.0 && j < sp.tgt.1)
                .map(|&(i, j)| (i - sp.src.0, j - sp.tgt.0))
                .collect(),
        })
        .collect()
}

/// Good-Turing adjusted counts from a count-of-counts histogram.
#[derive(Clone, Debug, Default)]
pub struct GoodTuring {
    n: BTreeMap<u64, u64>,
    cutoff: u64,
}

/// Builds r ↦ r* from N_r; an empty histogram gives the identity.
pub fn good_turing_discount(histogram: &BTreeMap<u64, u64>) -> GoodTuring {
    GoodTuring {
        n: histogram.clone(),
        cutoff: GOOD_TURING_CUTOFF,
    }
}

impl GoodTuring {
    pub fn from_counts(counts: impl IntoIterator<Item = u64>) -> Self {
        let mut hist = BTreeMap::new();
        for c in counts {
            if c > 0 {
                *hist.entry(c).or_insert(0) += 1;
            }
        }
        good_turing_discount(&hist)
    }

    pub fn histogram(&self) -> &BTreeMap<u64, u64> {
        &self.n
    }

    /// r* = (r+1) N_{r+1} / N_r for r < k with N_r, N_{r+1} > 0; r otherwise.
    pub fn adjusted(&self, r: u64) -> f64 {
        let nr = self.n.get(&r).copied().unwrap_or(0);
        let nr1 = self.n.get(&(r + 1)).copied().unwrap_or(0);
        if r == 0 || r >= self.cutoff || nr == 0 || nr1 == 0 {
            r as f64
        } else {
            (r + 1) as f64 * nr1 as f64 / nr as f64
        }
    }

    /// Adjusted count capped at r, the value used for probabilities.
    pub fn discounted(&self, r: u64) -> f64 {
        self.adjusted(r).min(r as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhraseEntry {
    pub target: Vec<String>,
    /// φ(t|s), φ(s|t), lex(t|s), lex(s|t)
    pub scores: [f64; 4],
    pub alignment: Vec<(usize, usize)>,
    /// count(s,t), count(s), count(t)
    pub counts: [u64; 3],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhraseTable {
    entries: BTreeMap<Vec<String>, Vec<PhraseEntry>>,
    vocab: HashSet<String>,
    max_source_len: usize,
}

impl PhraseTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, source: Vec<String>, entry: PhraseEntry) {
        for tok in &source {
            if !self.vocab.contains(tok) {
                self.vocab.insert(tok.clone());
            }
        }
        self.max_source_len = self.max_source_len.max(source.len());
        let list = self.entries.entry(source).or_default();
        match list.iter_mut().find(|e| e.target == entry.target) {
            Some(e) => *e = entry,
            None => list.push(entry),
        }
    }

    pub fn get(&self, source: &[String]) -> Option<&[PhraseEntry]> {
        self.entries.get(source).map(Vec::as_slice)
    }

    /// Whether the token occurs in any source phrase.
    pub fn knows(&self, token: &str) -> bool {
        self.vocab.contains(token)
    }

    pub fn max_source_len(&self) -> usize {
        self.max_source_len
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[String], &PhraseEntry)> {
        self.entries
            .iter()
            .flat_map(|(s, es)| es.iter().map(move |e| (s.as_slice(), e)))
    }

    /// `src ||| tgt ||| scores ||| alignment ||| counts`, one entry per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (src, e) in self.iter() {
            let scores: Vec<String> = e.scores.iter().map(|&x| format_sig6(x)).collect();
            let align: Vec<String> = e.alignment.iter().map(|(i, j)| format!("{i}-{j}")).collect();
            out.push_str(&format!(
                "{} ||| {} ||| {} ||| {} ||| {} {} {}\n",
                src.join(" "),
                e.target.join(" "),
                scores.join(" "),
                align.join(" "),
                e.counts[0],
                e.counts[1],
                e.counts[2]
            ));
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut table = PhraseTable::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |m: &str| Error::parse(origin, i + 1, m);
            let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
            if fields.len() != 5 {
                return Err(err("expected 5 `|||`-separated fields"));
            }
            let source = crate::textprep::split(fields[0]);
            let target = crate::textprep::split(fields[1]);
            if source.is_empty() || target.is_empty() {
                return Err(err("empty phrase"));
            }
            let scores: Vec<f64> = fields[2]
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err("malformed score"))?;
            if scores.len() != 4 || scores.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
                return Err(err("expected 4 scores in (0, 1]"));
            }
            let align = AlignmentMatrix::parse(fields[3], source.len(), target.len())
                .map_err(|m| Error::parse(origin, i + 1, m))?;
            let counts: Vec<u64> = fields[4]
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err("malformed counts"))?;
            if counts.len() != 3 {
                return Err(err("expected 3 counts"));
            }
            table.insert(
                source,
                PhraseEntry {
                    target,
                    scores: [scores[0], scores[1], scores[2], scores[3]],
                    alignment: align.links.into_iter().collect(),
                    counts: [counts[0], counts[1], counts[2]],
                },
            );
        }
        Ok(table)
    }
}

/// Formats with 6 significant digits, `%g` style.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if !(-5..6).contains(&exp) {
        format!("{x:.5e}")
    } else {
        let decimals = (5 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    };
    // rounding may bump the exponent (e.g. 9.999999 -> 10.00000)
    let s = if s.contains('e') {
        let (mant, e) = s.split_once('e').unwrap();
        let mant = trim_zeros(mant);
        format!("{mant}e{e}")
    } else {
        trim_zeros(&s).to_string()
    };
    s
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Π over `out` words of the mean t(out|in) across their links; unlinked
/// words use the empty word. `links` are (in index, out index).
pub fn lexical_weight(input: &[String], output: &[String], links: &[(usize, usize)], table: &TranslationTable) -> f64 {
    let mut w = 1.0;
    for (j, word) in output.iter().enumerate() {
        let linked: Vec<usize> = links.iter().filter(|l| l.1 == j).map(|l| l.0).collect();
        let p = if linked.is_empty() {
            table.prob(word, None)
        } else {
            linked.iter().map(|&i| table.prob(word, Some(&input[i]))).sum::<f64>() / linked.len() as f64
        };
        w *= p;
    }
    w.clamp(SCORE_FLOOR, 1.0)
}

#[derive(Default)]
struct PairStats {
    count: u64,
    alignments: BTreeMap<Vec<(usize, usize)>, u64>,
}

/// Scores extracted phrase pairs. `fwd` holds t(source|target), `rev`
/// t(target|source). Each pair's lexical weights use its most frequent
/// internal alignment (smallest on ties).
pub fn score_phrases(extracted: &[ExtractedPhrase], fwd: &TranslationTable, rev: &TranslationTable) -> PhraseTable {
    let mut stats: HashMap<(&[String], &[String]), PairStats> = HashMap::new();
    let mut src_totals: HashMap<&[String], u64> = HashMap::new();
    let mut tgt_totals: HashMap<&[String], u64> = HashMap::new();
    for p in extracted {
        let s = stats.entry((&p.source, &p.target)).or_default();
        s.count += 1;
        *s.alignments.entry(p.links.clone()).or_insert(0) += 1;
        *src_totals.entry(&p.source).or_insert(0) += 1;
        *tgt_totals.entry(&p.target).or_insert(0) += 1;
    }
    let gt = GoodTuring::from_counts(stats.values().map(|s| s.count));

    let mut keys: Vec<_> = stats.keys().copied().collect();
    keys.sort();
    let mut table = PhraseTable::new();
    for key in keys {
        let (src, tgt) = key;
        let s = &stats[&key];
        let links = s
            .alignments
            .iter()
            .fold(None::<(&Vec<(usize, usize)>, u64)>, |best, (a, &n)| match best {
                Some((_, m)) if m >= n => best,
                _ => Some((a, n)),
            })
            .map(|(a, _)| a.clone())
            .unwrap_or_default();
        let c = gt.discounted(s.count);
        let cs = src_totals[src];
        let ct = tgt_totals[tgt];
        let flipped: Vec<(usize, usize)> = links.iter().map(|&(i, j)| (j, i)).collect();
        let scores = [
            (c / cs as f64).clamp(SCORE_FLOOR, 1.0),
            (c / ct as f64).clamp(SCORE_FLOOR, 1.0),
            lexical_weight(src, tgt, &links, rev),
            lexical_weight(tgt, src, &flipped, fwd),
        ];
        table.insert(
            src.to_vec(),
            PhraseEntry {
                target: tgt.to_vec(),
                scores,
                alignment: links,
                counts: [s.count, cs, ct],
            },
        );
    }
    table
}

/// Extracts from every aligned pair and scores the result.
pub fn build_phrase_table(pairs: &[SentencePair], aligned: &AlignedCorpus, max_len: usize, exec: Exec) -> PhraseTable {
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let extracted: Vec<ExtractedPhrase> = par::map(exec, &idx, |&k| {
        extract_phrases(&pairs[k], &aligned.alignments[k], max_len)
    })
    .into_iter()
    .flatten()
    .collect();
    score_phrases(&extracted, &aligned.fwd.table, &aligned.rev.table)
}
