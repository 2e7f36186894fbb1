//! Corpus BLEU and OOV counting.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::phrase::PhraseTable;

pub const BLEU_MAX_N: usize = 4;

/// Sufficient statistics for corpus BLEU. Sums over sentences, so the
/// order in which they are accumulated does not matter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; BLEU_MAX_N],
    pub totals: [u64; BLEU_MAX_N],
    pub cand_len: u64,
    pub ref_len: u64,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

impl BleuStats {
    pub fn sentence(cand: &[String], reference: &[String]) -> Self {
        let mut s = BleuStats {
            cand_len: cand.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=BLEU_MAX_N {
            let c = ngram_counts(cand, n);
            let r = ngram_counts(reference, n);
            s.totals[n - 1] = cand.len().saturating_sub(n - 1) as u64;
            s.matches[n - 1] = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
        }
        s
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.cand_len == 0 {
            0.0
        } else if self.cand_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        }
    }

    /// Unsmoothed BLEU; any order with no matches gives 0.
    pub fn score(&self) -> BleuScore {
        let mut precisions = [0.0; BLEU_MAX_N];
        for (p, (&m, &t)) in precisions.iter_mut().zip(self.matches.iter().zip(&self.totals)) {
            if t > 0 {
                *p = m as f64 / t as f64;
            }
        }
        let bp = self.brevity_penalty();
        let score = if precisions.contains(&0.0) {
            0.0
        } else {
            bp * (precisions.iter().map(|p| p.ln()).sum::<f64>() / BLEU_MAX_N as f64).exp()
        };
        BleuScore {
            score,
            precisions,
            brevity_penalty: bp,
            cand_len: self.cand_len,
            ref_len: self.ref_len,
        }
    }

    /// BLEU with add-one smoothing on orders that have zero matches.
    pub fn smoothed(&self) -> f64 {
        let bp = self.brevity_penalty();
        if bp == 0.0 {
            return 0.0;
        }
        let log_sum: f64 = (0..BLEU_MAX_N)
            .map(|n| {
                let (m, t) = (self.matches[n] as f64, self.totals[n] as f64);
                if m == 0.0 {
                    (1.0 / (t + 1.0)).ln()
                } else {
                    (m / t).ln()
                }
            })
            .sum();
        bp * (log_sum / BLEU_MAX_N as f64).exp()
    }
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..BLEU_MAX_N {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.cand_len += o.cand_len;
        self.ref_len += o.ref_len;
    }
}

impl std::iter::Sum for BleuStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        let mut acc = BleuStats::default();
        for s in iter {
            acc += s;
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BleuScore {
    pub score: f64,
    pub precisions: [f64; BLEU_MAX_N],
    pub brevity_penalty: f64,
    pub cand_len: u64,
    pub ref_len: u64,
}

impl fmt::Display for BleuScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p: Vec<String> = self.precisions.iter().map(|p| format!("{:.1}", p * 100.0)).collect();
        write!(
            f,
            "BLEU = {:.2}, {} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
            self.score * 100.0,
            p.join("/"),
            self.brevity_penalty,
            if self.ref_len == 0 {
                0.0
            } else {
                self.cand_len as f64 / self.ref_len as f64
            },
            self.cand_len,
            self.ref_len
        )
    }
}

pub fn corpus_stats(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<BleuStats> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("BLEU needs at least one candidate".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    Ok(candidates
        .iter()
        .zip(references)
        .map(|(c, r)| BleuStats::sentence(c, r))
        .sum())
}

/// Unsmoothed corpus BLEU against a single reference per candidate.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<BleuScore> {
    Ok(corpus_stats(candidates, references)?.score())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OovMode {
    #[default]
    Tokens,
    Types,
}

impl FromStr for OovMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tokens" => Ok(OovMode::Tokens),
            "types" => Ok(OovMode::Types),
            _ => Err(Error::InvalidArgument(format!("unknown OOV mode `{s}` (tokens|types)"))),
        }
    }
}

/// Source tokens with no single-word phrase table entry.
pub fn oov_count(test: &[Vec<String>], table: &PhraseTable, mode: OovMode) -> usize {
    let oov = test.iter().flatten().filter(|t| !table.knows(t));
    match mode {
        OovMode::Tokens => oov.count(),
        OovMode::Types => oov.collect::<BTreeSet<_>>().len(),
    }
}

/// One line of the score report.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub config_id: String,
    pub direction: String,
    pub bleu: f64,
    pub oov_tokens: usize,
    pub oov_types: usize,
}

impl ScoreRow {
    pub const HEADER: &'static str = "config_id\tdirection\tbleu_x100\toov_tokens\toov_types";
}

impl fmt::Display for ScoreRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{:.2}\t{}\t{}",
            self.config_id,
            self.direction,
            self.bleu * 100.0,
            self.oov_tokens,
            self.oov_types
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phrase::PhraseEntry;
    use crate::textprep::split;
    use proptest::prelude::*;

    fn sents(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| split(l)).collect()
    }

    #[test]
    fn identity_is_one() {
        let x = sents(&["the man came home", "a woman"]);
        let b = bleu(&x, &x).unwrap();
        assert_eq!(b.score, 1.0);
        assert_eq!(b.brevity_penalty, 1.0);
        assert_eq!(b.precisions, [1.0; 4]);
    }

    #[test]
    fn clipping() {
        let b = bleu(&sents(&["the the the the"]), &sents(&["the cat"])).unwrap();
        // "the" occurs once in the reference, so only one of four matches counts
        assert_eq!(b.precisions, [0.25, 0.0, 0.0, 0.0]);
        assert_eq!(b.score, 0.0);
    }

    #[test]
    fn errors() {
        assert!(bleu(&[], &[]).is_err());
        assert!(bleu(&sents(&["a"]), &sents(&["a", "b"])).is_err());
    }

    #[test]
    fn brevity() {
        let b = bleu(&sents(&["a b c d"]), &sents(&["a b c d e f g h"])).unwrap();
        assert!((b.brevity_penalty - (-1f64).exp()).abs() < 1e-15);
        assert!((b.score - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn smoothing_only_touches_zero_orders() {
        let s = corpus_stats(&sents(&["a b c d"]), &sents(&["a b c d"])).unwrap();
        assert_eq!(s.smoothed(), 1.0);
        let s = corpus_stats(&sents(&["the the the the"]), &sents(&["the cat"])).unwrap();
        // p = 1/4, 1/4, 1/3, 1/2
        let expect = ((0.25f64 * 0.25 * (1.0 / 3.0) * 0.5).ln() / 4.0).exp();
        assert!((s.smoothed() - expect).abs() < 1e-15);
    }

    #[test]
    fn oov_modes() {
        let mut table = PhraseTable::new();
        let entry = |t: &str| PhraseEntry {
            target: split(t),
            scores: [1.0; 4],
            alignment: vec![(0, 0)],
            counts: [1, 1, 1],
        };
        table.insert(split("සභාව"), entry("Commission"));
        table.insert(split("කොමිෂන්"), entry("Commission"));
        let test = sents(&["කොමිෂන් සභාවෙන්", "සභාවෙන් සභාව"]);
        assert_eq!(oov_count(&test, &table, OovMode::Tokens), 2);
        assert_eq!(oov_count(&test, &table, OovMode::Types), 1);
        assert_eq!(oov_count(&sents(&["සභාව"]), &table, OovMode::Tokens), 0);
        table.insert(split("සභාවෙන්"), entry("from the Commission"));
        assert_eq!(oov_count(&test, &table, OovMode::Tokens), 0);
    }

    #[test]
    fn row_format() {
        let r = ScoreRow {
            config_id: "A1".into(),
            direction: "si-en".into(),
            bleu: 0.123456,
            oov_tokens: 3,
            oov_types: 2,
        };
        assert_eq!(r.to_string(), "A1\tsi-en\t12.35\t3\t2");
    }

    fn corpus() -> impl Strategy<Value = Vec<(Vec<String>, Vec<String>)>> {
        let sent = || {
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 0..8)
                .prop_map(|v| v.into_iter().map(String::from).collect::<Vec<_>>())
        };
        prop::collection::vec((sent(), sent()), 1..8)
    }

    proptest! {
        #[test]
        fn bounded_and_order_invariant(mut c in corpus()) {
            let (cand, refs): (Vec<_>, Vec<_>) = c.iter().cloned().unzip();
            let a = bleu(&cand, &refs).unwrap().score;
            prop_assert!((0.0..=1.0).contains(&a));
            c.reverse();
            let (cand, refs): (Vec<_>, Vec<_>) = c.into_iter().unzip();
            prop_assert_eq!(a, bleu(&cand, &refs).unwrap().score);
        }

        #[test]
        fn self_bleu_is_one(c in corpus()) {
            let x: Vec<Vec<String>> = c.into_iter().map(|p| p.0).collect();
            // a corpus without any 4-gram has an undefined 4-gram precision
            prop_assume!(x.iter().any(|s| s.len() >= BLEU_MAX_N));
            prop_assert_eq!(bleu(&x, &x).unwrap().score, 1.0);
        }
    }
}
