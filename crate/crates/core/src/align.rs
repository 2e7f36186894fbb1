//! IBM Model 1 word alignment and grow-diag-final-and symmetrization.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::intern::Interner;
use crate::par::{self, Exec, REDUCE_CHUNK};
use crate::textprep::SentencePair;

/// Spelling of the empty word in the conditioning vocabulary.
pub const NULL_WORD: &str = "<NULL>";
const NULL_ID: u32 = 0;
const PROB_FLOOR: f64 = 1e-12;

/// Lexical translation probabilities t(f|e), where `f` is a source word and
/// `e` a target word or the empty word.
#[derive(Clone, Debug)]
pub struct TranslationTable {
    src: Interner,
    tgt: Interner,
    index: HashMap<(u32, u32), usize>,
    pairs: Vec<(u32, u32)>,
    probs: Vec<f64>,
}

impl TranslationTable {
    /// t(f|e); `None` for `e` is the empty word. Unknown pairs give 0.
    pub fn prob(&self, f: &str, e: Option<&str>) -> f64 {
        let e_id = match e {
            None => Some(NULL_ID),
            Some(w) => self.tgt.get(w).filter(|&id| id != NULL_ID),
        };
        match (e_id, self.src.get(f)) {
            (Some(e), Some(f)) => self.index.get(&(e, f)).map_or(0.0, |&i| self.probs[i]),
            _ => 0.0,
        }
    }

    /// Σ_f t(f|e) for every conditioning word, the empty word included.
    pub fn row_sums(&self) -> HashMap<String, f64> {
        let mut sums: HashMap<String, f64> = HashMap::new();
        for (&(e, _), &p) in self.pairs.iter().zip(&self.probs) {
            *sums.entry(self.tgt.word(e).to_string()).or_insert(0.0) += p;
        }
        sums
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Builds a table from (f, e, t(f|e)) triples; `e` may be the empty word.
    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str, f64)>) -> Self {
        let mut src = Interner::new();
        let mut tgt = Interner::new();
        tgt.intern(NULL_WORD);
        let mut index = HashMap::new();
        let mut pairs = Vec::new();
        let mut probs = Vec::new();
        for (f, e, p) in entries {
            let key = (tgt.intern(e), src.intern(f));
            match index.get(&key) {
                Some(&i) => probs[i] = p,
                None => {
                    index.insert(key, pairs.len());
                    pairs.push(key);
                    probs.push(p);
                }
            }
        }
        TranslationTable {
            src,
            tgt,
            index,
            pairs,
            probs,
        }
    }

    /// `f<TAB>e<TAB>t(f|e)` lines; values round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (f, e, p) in self.entries() {
            out.push_str(&format!("{f}\t{e}\t{p}\n"));
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(origin, i + 1, "expected `f<TAB>e<TAB>prob`"));
            }
            let p: f64 = cols[2]
                .parse()
                .map_err(|_| Error::parse(origin, i + 1, format!("bad probability `{}`", cols[2])))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::parse(origin, i + 1, "probability outside [0, 1]"));
            }
            rows.push((cols[0], cols[1], p));
        }
        Ok(Self::from_entries(rows))
    }

    /// All entries as (f, e, t(f|e)) in a stable order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.pairs
            .iter()
            .zip(&self.probs)
            .map(|(&(e, f), &p)| (self.src.word(f), self.tgt.word(e), p))
    }
}

/// A trained table plus the corpus log-likelihood before every iteration and
/// after the last one (`iterations + 1` values).
#[derive(Clone, Debug)]
pub struct Model1 {
    pub table: TranslationTable,
    pub log_likelihood: Vec<f64>,
}

struct Encoded {
    f: Vec<u32>,
    // position 0 is the empty word
    e: Vec<u32>,
}

fn encode(pairs: &[SentencePair]) -> (Interner, Interner, Vec<Encoded>) {
    let mut src = Interner::new();
    let mut tgt = Interner::new();
    tgt.intern(NULL_WORD);
    let sents = pairs
        .iter()
        .map(|p| Encoded {
            f: p.source.iter().map(|w| src.intern(w)).collect(),
            e: std::iter::once(NULL_ID)
                .chain(p.target.iter().map(|w| tgt.intern(w)))
                .collect(),
        })
        .collect();
    (src, tgt, sents)
}

/// Expected counts and log-likelihood contribution of one chunk.
fn e_step(chunk: &[Encoded], index: &HashMap<(u32, u32), usize>, probs: &[f64]) -> (HashMap<usize, f64>, f64) {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    let mut ll = 0.0;
    let mut slots = Vec::new();
    for s in chunk {
        let norm = (s.e.len() as f64).ln();
        for &f in &s.f {
            slots.clear();
            slots.extend(s.e.iter().map(|&e| index[&(e, f)]));
            let denom = slots.iter().map(|&k| probs[k]).sum::<f64>().max(PROB_FLOOR);
            ll += denom.ln() - norm;
            for &k in &slots {
                *counts.entry(k).or_insert(0.0) += probs[k] / denom;
            }
        }
    }
    (counts, ll)
}

/// Trains t(f|e) with EM from a uniform start over co-occurring pairs.
pub fn train_model1(pairs: &[SentencePair], iterations: usize, exec: Exec) -> Result<Model1> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("Model 1 needs at least one iteration".into()));
    }
    if pairs.iter().all(|p| p.source.is_empty() || p.target.is_empty()) {
        return Err(Error::EmptyCorpus);
    }
    let (src, tgt, sents) = encode(pairs);

    let mut index = HashMap::new();
    let mut keys = Vec::new();
    for s in &sents {
        for &e in &s.e {
            for &f in &s.f {
                index.entry((e, f)).or_insert_with(|| {
                    keys.push((e, f));
                    keys.len() - 1
                });
            }
        }
    }
    let mut fanout = vec![0usize; tgt.len()];
    for &(e, _) in &keys {
        fanout[e as usize] += 1;
    }
    let mut probs: Vec<f64> = keys.iter().map(|&(e, _)| 1.0 / fanout[e as usize] as f64).collect();

    let mut log_likelihood = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        let partials = par::map_chunks(exec, &sents, REDUCE_CHUNK, |c| e_step(c, &index, &probs));
        let mut counts = vec![0.0; keys.len()];
        let mut ll = 0.0;
        for (chunk_counts, chunk_ll) in partials {
            ll += chunk_ll;
            for (k, c) in chunk_counts {
                counts[k] += c;
            }
        }
        log_likelihood.push(ll);

        let mut totals = vec![0.0; tgt.len()];
        for (&(e, _), &c) in keys.iter().zip(&counts) {
            totals[e as usize] += c;
        }
        for ((p, &(e, _)), &c) in probs.iter_mut().zip(&keys).zip(&counts) {
            let t = totals[e as usize];
            *p = if t > 0.0 { c / t } else { 0.0 };
        }
    }
    let final_ll: f64 = par::map_chunks(exec, &sents, REDUCE_CHUNK, |c| e_step(c, &index, &probs).1)
        .into_iter()
        .sum();
    log_likelihood.push(final_ll);

    Ok(Model1 {
        table: TranslationTable {
            src,
            tgt,
            index,
            pairs: keys,
            probs,
        },
        log_likelihood,
    })
}

/// Set of (source index, target index) links for one sentence pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentMatrix {
    pub src_len: usize,
    pub tgt_len: usize,
    pub links: BTreeSet<(usize, usize)>,
}

impl AlignmentMatrix {
    pub fn new(src_len: usize, tgt_len: usize) -> Self {
        AlignmentMatrix {
            src_len,
            tgt_len,
            links: BTreeSet::new(),
        }
    }

    pub fn from_links(src_len: usize, tgt_len: usize, links: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let links: BTreeSet<_> = links.into_iter().collect();
        debug_assert!(links.iter().all(|&(i, j)| i < src_len && j < tgt_len));
        AlignmentMatrix {
            src_len,
            tgt_len,
            links,
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.links.contains(&(i, j))
    }

    pub fn transpose(&self) -> Self {
        AlignmentMatrix::from_links(self.tgt_len, self.src_len, self.links.iter().map(|&(i, j)| (j, i)))
    }

    /// Parses `i-j i-j ...` for a pair of the given dimensions.
    pub fn parse(line: &str, src_len: usize, tgt_len: usize) -> std::result::Result<Self, String> {
        let mut links = BTreeSet::new();
        for tok in line.split_whitespace() {
            let (a, b) = tok.split_once('-').ok_or_else(|| format!("malformed link `{tok}`"))?;
            let i: usize = a.parse().map_err(|_| format!("malformed link `{tok}`"))?;
            let j: usize = b.parse().map_err(|_| format!("malformed link `{tok}`"))?;
            if i >= src_len || j >= tgt_len {
                return Err(format!("link `{tok}` outside a {src_len}x{tgt_len} pair"));
            }
            links.insert((i, j));
        }
        Ok(AlignmentMatrix {
            src_len,
            tgt_len,
            links,
        })
    }
}

impl fmt::Display for AlignmentMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, j) in &self.links {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{i}-{j}")?;
            first = false;
        }
        Ok(())
    }
}

/// Links each source word to its most probable target word. Ties go to the
/// lowest target index; the empty word only wins when strictly more probable
/// than every real target word, and its links are left out.
pub fn viterbi_align(pair: &SentencePair, table: &TranslationTable) -> AlignmentMatrix {
    let mut m = AlignmentMatrix::new(pair.source.len(), pair.target.len());
    for (j, f) in pair.source.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in pair.target.iter().enumerate() {
            let p = table.prob(f, Some(e));
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((i, p));
            }
        }
        if let Some((i, p)) = best {
            if p > 0.0 && p >= table.prob(f, None) {
                m.links.insert((j, i));
            }
        }
    }
    m
}

const NEIGHBORS: [(isize, isize); 8] = [(-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)];

/// Symmetrizes a source→target and a target→source alignment, both given in
/// (source, target) coordinates.
pub fn grow_diag_final_and(fwd: &AlignmentMatrix, rev: &AlignmentMatrix) -> Result<AlignmentMatrix> {
    if (fwd.src_len, fwd.tgt_len) != (rev.src_len, rev.tgt_len) {
        return Err(Error::DimensionMismatch {
            fwd: (fwd.src_len, fwd.tgt_len),
            rev: (rev.src_len, rev.tgt_len),
        });
    }
    let (n, m) = (fwd.src_len, fwd.tgt_len);
    let union: BTreeSet<(usize, usize)> = fwd.links.union(&rev.links).copied().collect();
    let mut out = AlignmentMatrix::from_links(n, m, fwd.links.intersection(&rev.links).copied());
    let mut row = vec![false; n];
    let mut col = vec![false; m];
    for &(i, j) in &out.links {
        row[i] = true;
        col[j] = true;
    }

    // Each pass judges candidates against the alignment as it stood at the
    // start of the pass, so the result does not depend on scan order.
    loop {
        let grown: Vec<(usize, usize)> = union
            .iter()
            .copied()
            .filter(|&(i, j)| {
                !out.links.contains(&(i, j))
                    && !(row[i] && col[j])
                    && NEIGHBORS.iter().any(|&(di, dj)| {
                        let (a, b) = (i as isize + di, j as isize + dj);
                        a >= 0 && b >= 0 && out.links.contains(&(a as usize, b as usize))
                    })
            })
            .collect();
        if grown.is_empty() {
            break;
        }
        for (i, j) in grown {
            out.links.insert((i, j));
            row[i] = true;
            col[j] = true;
        }
    }

    for &(i, j) in &union {
        if !row[i] && !col[j] {
            out.links.insert((i, j));
            row[i] = true;
            col[j] = true;
        }
    }
    Ok(out)
}

/// Both directional models and the symmetrized alignment of every pair.
#[derive(Clone, Debug)]
pub struct AlignedCorpus {
    /// t(source | target)
    pub fwd: Model1,
    /// t(target | source)
    pub rev: Model1,
    pub alignments: Vec<AlignmentMatrix>,
}

pub fn align_corpus(pairs: &[SentencePair], iterations: usize, exec: Exec) -> Result<AlignedCorpus> {
    let fwd = train_model1(pairs, iterations, exec)?;
    let swapped: Vec<SentencePair> = pairs.iter().map(SentencePair::swapped).collect();
    let rev = train_model1(&swapped, iterations, exec)?;
    let alignments = par::map(exec, pairs, |p| {
        let a = viterbi_align(p, &fwd.table);
        let b = viterbi_align(&p.swapped(), &rev.table).transpose();
        grow_diag_final_and(&a, &b).expect("dimensions agree")
    });
    Ok(AlignedCorpus { fwd, rev, alignments })
}
