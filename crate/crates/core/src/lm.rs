//! Katz backoff n-gram language model with Good-Turing discounting and ARPA
//! text I/O. Probabilities are stored as log10 values; log10(0) is written
//! as -99, the usual ARPA convention.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::intern::Interner;
use crate::par::{self, Exec, REDUCE_CHUNK};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const MAX_ORDER: usize = 3;
/// Counts at or above this are not discounted.
pub const DISCOUNT_CUTOFF: u64 = 5;
pub const LOG_ZERO: f64 = -99.0;

const PAD: u32 = u32::MAX;
type Key = [u32; MAX_ORDER];

fn key(ids: &[u32]) -> Key {
    let mut k = [PAD; MAX_ORDER];
    k[..ids.len()].copy_from_slice(ids);
    k
}

fn log10_or_zero(p: f64) -> f64 {
    if p > 0.0 {
        p.log10().max(LOG_ZERO)
    } else {
        LOG_ZERO
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NGramEntry {
    pub logprob: f64,
    pub backoff: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct NGramModel {
    order: usize,
    vocab: Interner,
    bos: u32,
    eos: u32,
    unk: u32,
    /// `grams[n - 1]` holds the n-grams.
    grams: Vec<HashMap<Key, NGramEntry>>,
}

/// Per-order discount multipliers d_r for counts r below the cutoff.
#[derive(Clone, Debug)]
struct Discounts {
    d: [f64; DISCOUNT_CUTOFF as usize],
    /// D = N1 / (N1 + 2 N2), clamped to [0.1, 0.9].
    absolute: f64,
}

impl Discounts {
    /// Katz's renormalized Good-Turing coefficients when they are all in
    /// (0, 1]; otherwise absolute discounting with D = N1 / (N1 + 2 N2).
    fn estimate(hist: &HashMap<u64, u64>) -> Self {
        let n = |r: u64| hist.get(&r).copied().unwrap_or(0) as f64;
        let k = DISCOUNT_CUTOFF - 1;
        let mut d = [1.0; DISCOUNT_CUTOFF as usize];
        let (n1, n2) = (n(1), n(2));
        let absolute = if n1 + 2.0 * n2 > 0.0 {
            (n1 / (n1 + 2.0 * n2)).clamp(0.1, 0.9)
        } else {
            0.5
        };
        let mut valid = n(1) > 0.0;
        if valid {
            let a = (k + 1) as f64 * n(k + 1) / n(1);
            for r in 1..=k {
                let ratio = if n(r) > 0.0 {
                    (r + 1) as f64 * n(r + 1) / (r as f64 * n(r))
                } else {
                    1.0
                };
                let dr = (ratio - a) / (1.0 - a);
                if !(dr > 0.0 && dr <= 1.0) || a >= 1.0 {
                    valid = false;
                    break;
                }
                d[r as usize] = dr;
            }
        }
        if !valid {
            for r in 1..=k {
                d[r as usize] = (r as f64 - absolute) / r as f64;
            }
        }
        Discounts { d, absolute }
    }

    /// Discounted counts for one distribution. When every count is at or
    /// above the cutoff nothing would be freed, so D is subtracted instead.
    fn apply_all(&self, counts: impl Iterator<Item = u64> + Clone) -> Vec<f64> {
        if counts.clone().all(|r| r >= DISCOUNT_CUTOFF) {
            counts.map(|r| r as f64 - self.absolute).collect()
        } else {
            counts.map(|r| self.apply(r)).collect()
        }
    }

    fn apply(&self, r: u64) -> f64 {
        if r < DISCOUNT_CUTOFF {
            self.d[r as usize] * r as f64
        } else {
            r as f64
        }
    }
}

fn count_chunk(chunk: &[Vec<u32>], order: usize) -> Vec<HashMap<Key, u64>> {
    let mut counts = vec![HashMap::new(); order];
    for s in chunk {
        for n in 1..=order {
            // n-grams never end in <s>, which only appears at position 0
            for end in 1..s.len() {
                if end + 1 < n {
                    continue;
                }
                let start = end + 1 - n;
                *counts[n - 1].entry(key(&s[start..=end])).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Trains a Katz backoff model of the given order (1 to 3).
pub fn train_lm(corpus: &[Vec<String>], order: usize, exec: Exec) -> Result<NGramModel> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::InvalidArgument(format!("LM order must be 1..={MAX_ORDER}")));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut vocab = Interner::new();
    let bos = vocab.intern(BOS);
    let eos = vocab.intern(EOS);
    let unk = vocab.intern(UNK);
    let sents: Vec<Vec<u32>> = corpus
        .iter()
        .map(|s| {
            std::iter::once(bos)
                .chain(s.iter().map(|w| vocab.intern(w)))
                .chain(std::iter::once(eos))
                .collect()
        })
        .collect();

    let mut counts: Vec<HashMap<Key, u64>> = vec![HashMap::new(); order];
    for part in par::map_chunks(exec, &sents, REDUCE_CHUNK, |c| count_chunk(c, order)) {
        for (n, map) in part.into_iter().enumerate() {
            for (k, c) in map {
                *counts[n].entry(k).or_insert(0) += c;
            }
        }
    }

    let mut model = NGramModel {
        order,
        vocab,
        bos,
        eos,
        unk,
        grams: vec![HashMap::new(); order],
    };

    // unigrams: discounted relative frequencies, freed mass to <unk>
    let uni = &counts[0];
    let total: u64 = uni.values().sum();
    let disc = Discounts::estimate(&histogram(uni));
    let mut seen_mass = 0.0;
    let mut uni_keys: Vec<&Key> = uni.keys().collect();
    uni_keys.sort();
    let discounted = disc.apply_all(uni_keys.iter().map(|k| uni[*k]));
    for (k, c) in uni_keys.into_iter().zip(discounted) {
        let p = c / total as f64;
        seen_mass += p;
        model.grams[0].insert(
            *k,
            NGramEntry {
                logprob: p.log10(),
                backoff: None,
            },
        );
    }
    let unk_mass = (1.0 - seen_mass).max(0.0);
    model.grams[0].insert(
        key(&[unk]),
        NGramEntry {
            logprob: log10_or_zero(unk_mass),
            backoff: None,
        },
    );
    model.grams[0].insert(
        key(&[bos]),
        NGramEntry {
            logprob: LOG_ZERO,
            backoff: None,
        },
    );

    for n in 2..=order {
        let grams = &counts[n - 1];
        let disc = Discounts::estimate(&histogram(grams));
        let mut by_context: HashMap<Key, Vec<(u32, u64)>> = HashMap::new();
        for (k, &c) in grams {
            by_context.entry(key(&k[..n - 1])).or_default().push((k[n - 1], c));
        }
        let mut contexts: Vec<Key> = by_context.keys().copied().collect();
        contexts.sort();
        for ctx in contexts {
            let mut conts = by_context.remove(&ctx).unwrap();
            conts.sort();
            let ctx_ids = &ctx[..n - 1];
            let ctx_total: u64 = conts.iter().map(|c| c.1).sum();
            let mut probs: Vec<f64> = disc
                .apply_all(conts.iter().map(|c| c.1))
                .into_iter()
                .map(|c| c / ctx_total as f64)
                .collect();
            let seen: f64 = probs.iter().sum();
            let lower_seen: f64 = conts
                .iter()
                .map(|&(w, _)| 10f64.powf(model.logprob_ids(&ctx_ids[1..], w)))
                .sum();
            let left = 1.0 - seen;
            let denom = 1.0 - lower_seen;
            let alpha = if left <= 1e-12 {
                0.0
            } else if denom <= 1e-12 {
                // nothing left to back off to: spread the freed mass over the seen words
                for p in probs.iter_mut() {
                    *p /= seen;
                }
                0.0
            } else {
                left / denom
            };
            for (&(w, _), &p) in conts.iter().zip(&probs) {
                let mut ids = ctx_ids.to_vec();
                ids.push(w);
                model.grams[n - 1].insert(
                    key(&ids),
                    NGramEntry {
                        logprob: p.log10(),
                        backoff: None,
                    },
                );
            }
            model.grams[n - 2]
                .get_mut(&ctx)
                .expect("every context is a lower-order n-gram")
                .backoff = Some(log10_or_zero(alpha));
        }
    }
    Ok(model)
}

fn histogram(counts: &HashMap<Key, u64>) -> HashMap<u64, u64> {
    let mut h = HashMap::new();
    for &c in counts.values() {
        *h.entry(c).or_insert(0) += 1;
    }
    h
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bos(&self) -> u32 {
        self.bos
    }

    pub fn eos(&self) -> u32 {
        self.eos
    }

    pub fn unk(&self) -> u32 {
        self.unk
    }

    /// Vocabulary id, with out-of-vocabulary words mapped to `<unk>`.
    pub fn id(&self, word: &str) -> u32 {
        match self.vocab.get(word) {
            Some(id) if self.grams[0].contains_key(&key(&[id])) => id,
            _ => self.unk,
        }
    }

    pub fn word(&self, id: u32) -> &str {
        self.vocab.word(id)
    }

    /// Words that can be predicted: the vocabulary without `<s>`.
    pub fn predictable(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.grams[0]
            .keys()
            .map(|k| k[0])
            .filter(|&id| id != self.bos)
            .collect();
        ids.sort();
        ids
    }

    pub fn entry(&self, ids: &[u32]) -> Option<&NGramEntry> {
        self.grams.get(ids.len().checked_sub(1)?)?.get(&key(ids))
    }

    /// log10 p(w | context); only the last `order - 1` context words count.
    pub fn logprob_ids(&self, context: &[u32], w: u32) -> f64 {
        let context = &context[context.len().saturating_sub(self.order - 1)..];
        let mut ids = context.to_vec();
        ids.push(w);
        if let Some(e) = self.entry(&ids) {
            return e.logprob;
        }
        if context.is_empty() {
            return self.grams[0][&key(&[self.unk])].logprob;
        }
        let bow = self.entry(context).and_then(|e| e.backoff).unwrap_or(0.0);
        bow + self.logprob_ids(&context[1..], w)
    }

    /// Sum of conditional log10 probabilities of the tokens and `</s>`.
    pub fn score_sequence(&self, tokens: &[String]) -> f64 {
        let mut ctx = vec![self.bos];
        let mut total = 0.0;
        for w in tokens.iter().map(|t| self.id(t)).chain(std::iter::once(self.eos)) {
            total += self.logprob_ids(&ctx, w);
            ctx.push(w);
        }
        total
    }

    /// Contexts that carry a backoff weight, i.e. have seen continuations.
    pub fn contexts(&self) -> Vec<Vec<u32>> {
        let mut out: Vec<Vec<u32>> = Vec::new();
        for (n, map) in self.grams.iter().enumerate().take(self.order - 1) {
            for (k, e) in map {
                if e.backoff.is_some() {
                    out.push(k[..=n].to_vec());
                }
            }
        }
        out.sort();
        out
    }

    fn words_of(&self, k: &Key, n: usize) -> String {
        k[..n]
            .iter()
            .map(|&id| self.vocab.word(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_arpa(&self) -> String {
        let mut out = String::from("\n\\data\\\n");
        for (n, map) in self.grams.iter().enumerate() {
            let _ = writeln!(out, "ngram {}={}", n + 1, map.len());
        }
        for (n, map) in self.grams.iter().enumerate() {
            let _ = write!(out, "\n\\{}-grams:\n", n + 1);
            let mut rows: Vec<(String, &NGramEntry)> = map.iter().map(|(k, e)| (self.words_of(k, n + 1), e)).collect();
            rows.sort_by(|a, b| a.0.cmp(&b.0));
            for (words, e) in rows {
                match e.backoff {
                    Some(b) => {
                        let _ = writeln!(out, "{:.6}\t{}\t{:.6}", e.logprob, words, b);
                    }
                    None => {
                        let _ = writeln!(out, "{:.6}\t{}", e.logprob, words);
                    }
                }
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }

    pub fn from_arpa(text: &str, origin: &str) -> Result<Self> {
        let mut vocab = Interner::new();
        let bos = vocab.intern(BOS);
        let eos = vocab.intern(EOS);
        let unk = vocab.intern(UNK);
        let mut declared: Vec<usize> = Vec::new();
        let mut grams: Vec<HashMap<Key, NGramEntry>> = Vec::new();
        let mut section: Option<usize> = None;
        let mut in_data = false;
        let mut ended = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |m: String| Error::parse(origin, i + 1, m);
            if line.is_empty() {
                continue;
            }
            if line == "\\data\\" {
                in_data = true;
                continue;
            }
            if line == "\\end\\" {
                ended = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("ngram ") {
                let (n, c) = rest
                    .split_once('=')
                    .ok_or_else(|| err("malformed ngram count".into()))?;
                let n: usize = n.trim().parse().map_err(|_| err("malformed ngram order".into()))?;
                let c: usize = c.trim().parse().map_err(|_| err("malformed ngram count".into()))?;
                if n != declared.len() + 1 || n > MAX_ORDER {
                    return Err(err(format!("unsupported or out-of-sequence order {n}")));
                }
                declared.push(c);
                grams.push(HashMap::new());
                continue;
            }
            if let Some(n) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams:")) {
                let n: usize = n.parse().map_err(|_| err("malformed section header".into()))?;
                if n == 0 || n > declared.len() {
                    return Err(err(format!("section {n} not declared in header")));
                }
                section = Some(n);
                continue;
            }
            if !in_data {
                continue;
            }
            let n = section.ok_or_else(|| err("n-gram outside a section".into()))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != n + 1 && fields.len() != n + 2 {
                return Err(err(format!("expected {} or {} fields", n + 1, n + 2)));
            }
            let logprob: f64 = fields[0].parse().map_err(|_| err("malformed log probability".into()))?;
            let ids: Vec<u32> = fields[1..=n].iter().map(|w| vocab.intern(w)).collect();
            let backoff = match fields.get(n + 1) {
                Some(b) => Some(b.parse().map_err(|_| err("malformed backoff".into()))?),
                None => None,
            };
            grams[n - 1].insert(key(&ids), NGramEntry { logprob, backoff });
        }
        if !ended {
            return Err(Error::parse(origin, text.lines().count(), "missing \\end\\"));
        }
        if grams.is_empty() {
            return Err(Error::parse(origin, 1, "no n-gram sections"));
        }
        for (n, (&want, map)) in declared.iter().zip(&grams).enumerate() {
            if want != map.len() {
                return Err(Error::parse(
                    origin,
                    1,
                    format!("header declares {want} {}-grams, found {}", n + 1, map.len()),
                ));
            }
        }
        grams[0].entry(key(&[unk])).or_insert(NGramEntry {
            logprob: LOG_ZERO,
            backoff: None,
        });
        Ok(NGramModel {
            order: grams.len(),
            vocab,
            bos,
            eos,
            unk,
            grams,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::split;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| split(l)).collect()
    }

    fn check_normalization(m: &NGramModel) {
        let vocab = m.predictable();
        for ctx in m.contexts().into_iter().chain(std::iter::once(Vec::new())) {
            let total: f64 = vocab.iter().map(|&w| 10f64.powf(m.logprob_ids(&ctx, w))).sum();
            assert!((total - 1.0).abs() < 1e-6, "context {ctx:?} sums to {total}");
        }
    }

    #[test]
    fn single_continuation() {
        let m = train_lm(&corpus(&["a a"; 10]), 3, Exec::Sequential).unwrap();
        let a = m.id("a");
        // the only continuation has count 10, above the cutoff, so D = 0.5 is
        // taken off it to leave mass for unseen words
        assert!((m.logprob_ids(&[m.bos()], a) - 0.95f64.log10()).abs() < 1e-12);
        assert!(m.entry(&[m.bos()]).unwrap().backoff.unwrap() > LOG_ZERO);
        check_normalization(&m);
    }

    #[test]
    fn unseen_backs_off_to_unk() {
        let m = train_lm(
            &corpus(&["the man came", "the woman went", "a man went"]),
            3,
            Exec::Sequential,
        )
        .unwrap();
        let unk = m.entry(&[m.unk()]).unwrap().logprob;
        assert!(unk > LOG_ZERO);
        let ctx = [m.id("the"), m.id("man")];
        let expected =
            m.entry(&ctx).unwrap().backoff.unwrap() + m.entry(&[m.id("man")]).unwrap().backoff.unwrap() + unk;
        assert!((m.logprob_ids(&ctx, m.id("zebra")) - expected).abs() < 1e-12);
        check_normalization(&m);
    }

    #[test]
    fn fixture_normalization() {
        let lines = [
            "the man came to the house",
            "the woman went to the market",
            "a man gave the book to the woman",
            "the farmer sold a cow",
            "the farmer bought the cow from a man",
            "a woman came",
            "the man went to the market",
        ];
        let m = train_lm(&corpus(&lines), 3, Exec::Sequential).unwrap();
        check_normalization(&m);
        let m2 = train_lm(&corpus(&lines), 2, Exec::Parallel).unwrap();
        check_normalization(&m2);
    }

    #[test]
    fn empty_sequence_scores_boundary_bigram() {
        let m = train_lm(&corpus(&["a b", "b a", ""]), 3, Exec::Sequential).unwrap();
        assert_eq!(m.score_sequence(&[]), m.logprob_ids(&[m.bos()], m.eos()));
    }

    #[test]
    fn training_sentence_beats_permutations() {
        let m = train_lm(&corpus(&["a b c d"]), 3, Exec::Sequential).unwrap();
        let best = m.score_sequence(&split("a b c d"));
        let words = ["a", "b", "c", "d"];
        let mut idx = [0usize, 1, 2, 3];
        // Heap's algorithm over all 24 orders
        fn permute(k: usize, idx: &mut [usize; 4], out: &mut Vec<[usize; 4]>) {
            if k == 1 {
                out.push(*idx);
                return;
            }
            for i in 0..k {
                permute(k - 1, idx, out);
                if k.is_multiple_of(2) {
                    idx.swap(i, k - 1);
                } else {
                    idx.swap(0, k - 1);
                }
            }
        }
        let mut perms = Vec::new();
        permute(4, &mut idx, &mut perms);
        assert_eq!(perms.len(), 24);
        for p in perms {
            let toks: Vec<String> = p.iter().map(|&i| words[i].to_string()).collect();
            if toks.join(" ") != "a b c d" {
                assert!(m.score_sequence(&toks) < best);
            }
        }
    }

    #[test]
    fn order_sensitive() {
        let m = train_lm(&corpus(&["a b", "a b", "a c"]), 3, Exec::Sequential).unwrap();
        assert_ne!(m.score_sequence(&split("a b")), m.score_sequence(&split("b a")));
    }

    #[test]
    fn arpa_roundtrip() {
        let lines = ["the man came", "the woman went", "a man went home", "the man went home"];
        let m = train_lm(&corpus(&lines), 3, Exec::Sequential).unwrap();
        let text = m.to_arpa();
        assert!(text.contains("\\data\\\nngram 1="));
        let back = NGramModel::from_arpa(&text, "lm").unwrap();
        assert_eq!(back.to_arpa(), text);
        for s in ["the man went", "home a the", "zebra man"] {
            let a = m.score_sequence(&split(s));
            let b = back.score_sequence(&split(s));
            assert!((a - b).abs() < 1e-5, "{s}: {a} vs {b}");
        }
    }

    #[test]
    fn arpa_errors() {
        assert!(matches!(train_lm(&[], 3, Exec::Sequential), Err(Error::EmptyCorpus)));
        let bad = "\\data\\\nngram 1=2\n\n\\1-grams:\n-1.0\ta\n\\end\\\n";
        assert!(NGramModel::from_arpa(bad, "lm").is_err());
        let bad = "\\data\\\nngram 1=1\n\n\\1-grams:\nx\ta\n\\end\\\n";
        assert!(matches!(
            NGramModel::from_arpa(bad, "lm"),
            Err(Error::Parse { line: 5, .. })
        ));
        let truncated = "\\data\\\nngram 1=1\n\n\\1-grams:\n-1.0\ta\n";
        assert!(NGramModel::from_arpa(truncated, "lm").is_err());
    }
}
