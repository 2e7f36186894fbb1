//! Stack decoder for the log-linear phrase model.
//!
//! Hypotheses are grouped by the number of covered source words and
//! recombined on (coverage, LM context, end of the last phrase). Recombined
//! arcs are kept on the surviving node so that n-best lists can be read off
//! the search graph afterwards.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lm::{NGramModel, MAX_ORDER};
use crate::par::{self, Exec};
use crate::phrase::PhraseTable;

pub const NUM_FEATURES: usize = 8;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "phrase_fwd",
    "phrase_rev",
    "lex_fwd",
    "lex_rev",
    "lm",
    "distortion",
    "word_penalty",
    "phrase_penalty",
];
pub const F_LM: usize = 4;
pub const F_DISTORTION: usize = 5;
pub const F_WORD_PENALTY: usize = 6;
pub const F_PHRASE_PENALTY: usize = 7;

pub type Features = [f64; NUM_FEATURES];

fn add(a: &Features, b: &Features) -> Features {
    let mut out = *a;
    for (o, x) in out.iter_mut().zip(b) {
        *o += x;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureWeights {
    pub values: Features,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        let mut values = [1.0; NUM_FEATURES];
        values[F_WORD_PENALTY] = -1.0;
        FeatureWeights { values }
    }
}

impl FeatureWeights {
    pub fn new(values: Features) -> Self {
        FeatureWeights { values }
    }

    pub fn dot(&self, f: &Features) -> f64 {
        self.values.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        FeatureWeights {
            values: self.values.map(|w| w * c),
        }
    }

    pub fn index(name: &str) -> Option<usize> {
        FEATURE_NAMES.iter().position(|&n| n == name)
    }

    /// `name = value` lines in feature order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, w) in FEATURE_NAMES.iter().zip(&self.values) {
            let _ = writeln!(out, "{name} = {w}");
        }
        out
    }

    /// Reads a weights file. Every feature must be given exactly once.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = [f64::NAN; NUM_FEATURES];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::parse(origin, i + 1, m);
            let (name, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `name = value`".into()))?;
            let idx = Self::index(name.trim()).ok_or_else(|| err(format!("unknown feature `{}`", name.trim())))?;
            if !values[idx].is_nan() {
                return Err(err(format!("feature `{}` given twice", name.trim())));
            }
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| err(format!("bad weight `{}`", value.trim())))?;
            if !v.is_finite() {
                return Err(err("weights must be finite".into()));
            }
            values[idx] = v;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::parse(
                origin,
                text.lines().count().max(1),
                format!("missing feature `{}`", FEATURE_NAMES[i]),
            ));
        }
        Ok(FeatureWeights { values })
    }
}

impl FromStr for FeatureWeights {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, "weights")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodeParams {
    /// Maximum hypotheses kept per stack.
    pub stack_size: usize,
    /// Maximum jump between consecutive phrases; `None` means unlimited.
    pub distortion_limit: Option<usize>,
    /// Translation options kept per source span, best estimate first.
    pub max_options: usize,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            stack_size: 100,
            distortion_limit: Some(6),
            max_options: 20,
        }
    }
}

impl DecodeParams {
    /// No pruning of any kind; search is exact.
    pub fn unlimited() -> Self {
        DecodeParams {
            stack_size: usize::MAX,
            distortion_limit: None,
            max_options: usize::MAX,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Translation {
    pub tokens: Vec<String>,
    /// Parallel to `tokens`: true for copied out-of-vocabulary words.
    pub oov: Vec<bool>,
    pub features: Features,
    pub total: f64,
}

impl Translation {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn oov_count(&self) -> usize {
        self.oov.iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Debug)]
struct TransOpt {
    start: usize,
    end: usize,
    target: Vec<String>,
    ids: Vec<u32>,
    /// Context-independent features: phrase scores and penalties.
    fixed: Features,
    oov: bool,
    estimate: f64,
}

const NO_WORD: u32 = u32::MAX;
type Ctx = [u32; MAX_ORDER - 1];

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct State {
    coverage: Vec<u64>,
    ctx: Ctx,
    last_end: usize,
}

fn covered(cov: &[u64], i: usize) -> bool {
    cov[i / 64] >> (i % 64) & 1 == 1
}

fn cover(cov: &mut [u64], start: usize, end: usize) {
    for i in start..end {
        cov[i / 64] |= 1 << (i % 64);
    }
}

struct Arc {
    prev: usize,
    opt: usize,
    delta: Features,
}

struct Node {
    state: State,
    words: usize,
    features: Features,
    score: f64,
    text: String,
    future: f64,
    arcs: Vec<Arc>,
}

#[derive(Clone)]
struct Deriv {
    features: Features,
    score: f64,
    text: String,
    opts: Vec<usize>,
}

fn better(a_score: f64, a_text: &str, b_score: f64, b_text: &str) -> bool {
    a_score > b_score || (a_score == b_score && a_text < b_text)
}

fn rank(a_score: f64, a_text: &str, b_score: f64, b_text: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_text.cmp(b_text))
}

fn join(prefix: &str, words: &[String]) -> String {
    let mut s = prefix.to_string();
    for w in words {
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(w);
    }
    s
}

pub struct Decoder<'a> {
    pub table: &'a PhraseTable,
    pub lm: &'a NGramModel,
    pub weights: FeatureWeights,
    pub params: DecodeParams,
}

struct Sentence {
    len: usize,
    opts: Vec<TransOpt>,
    by_start: Vec<Vec<usize>>,
    oov_pos: Vec<bool>,
    future: Vec<Vec<f64>>,
}

impl<'a> Decoder<'a> {
    pub fn new(table: &'a PhraseTable, lm: &'a NGramModel, weights: FeatureWeights, params: DecodeParams) -> Self {
        Decoder {
            table,
            lm,
            weights,
            params,
        }
    }

    /// LM log probability (natural log) of `ids` after `ctx`, and the new context.
    fn lm_extend(&self, ctx: &Ctx, ids: &[u32]) -> (f64, Ctx) {
        let keep = self.lm.order() - 1;
        let mut hist: Vec<u32> = ctx.iter().copied().filter(|&w| w != NO_WORD).collect();
        let mut lp = 0.0;
        for &w in ids {
            lp += self.lm.logprob_ids(&hist, w);
            hist.push(w);
        }
        let mut out = [NO_WORD; MAX_ORDER - 1];
        let tail = &hist[hist.len().saturating_sub(keep)..];
        out[..tail.len()].copy_from_slice(tail);
        (lp * std::f64::consts::LN_10, out)
    }

    fn prepare(&self, source: &[String]) -> Sentence {
        let n = source.len();
        let oov_pos: Vec<bool> = source.iter().map(|t| !self.table.knows(t)).collect();
        let mut opts = Vec::new();
        for start in 0..n {
            let mut here = Vec::new();
            // known tokens seen only inside longer phrases may still need a copy
            let copy = oov_pos[start] || self.table.get(&source[start..=start]).is_none();
            if copy {
                let ids = vec![self.lm.id(&source[start])];
                let mut fixed = [0.0; NUM_FEATURES];
                fixed[F_WORD_PENALTY] = 1.0;
                fixed[F_PHRASE_PENALTY] = 1.0;
                here.push(self.option(
                    start,
                    start + 1,
                    vec![source[start].clone()],
                    ids,
                    fixed,
                    oov_pos[start],
                ));
            }
            let max_end = (start + self.table.max_source_len()).min(n);
            for end in start + 1..=max_end {
                if oov_pos[start..end].iter().any(|&b| b) {
                    break;
                }
                let Some(entries) = self.table.get(&source[start..end]) else {
                    continue;
                };
                let mut span: Vec<TransOpt> = entries
                    .iter()
                    .map(|e| {
                        let mut fixed = [0.0; NUM_FEATURES];
                        for (f, s) in fixed.iter_mut().zip(&e.scores) {
                            *f = s.ln();
                        }
                        fixed[F_WORD_PENALTY] = e.target.len() as f64;
                        fixed[F_PHRASE_PENALTY] = 1.0;
                        let ids = e.target.iter().map(|t| self.lm.id(t)).collect();
                        self.option(start, end, e.target.clone(), ids, fixed, false)
                    })
                    .collect();
                span.sort_by(|a, b| rank(a.estimate, &a.target.join(" "), b.estimate, &b.target.join(" ")));
                span.truncate(self.params.max_options);
                here.extend(span);
            }
            opts.extend(here);
        }
        let mut by_start = vec![Vec::new(); n];
        for (i, o) in opts.iter().enumerate() {
            by_start[o.start].push(i);
        }

        // best estimate per span, then combined over split points
        let mut future = vec![vec![f64::NEG_INFINITY; n + 1]; n + 1];
        for o in &opts {
            let f = &mut future[o.start][o.end];
            *f = f.max(o.estimate);
        }
        for len in 2..=n {
            for s in 0..=n - len {
                let e = s + len;
                for k in s + 1..e {
                    let v = future[s][k] + future[k][e];
                    if v > future[s][e] {
                        future[s][e] = v;
                    }
                }
            }
        }
        Sentence {
            len: n,
            opts,
            by_start,
            oov_pos,
            future,
        }
    }

    fn option(
        &self,
        start: usize,
        end: usize,
        target: Vec<String>,
        ids: Vec<u32>,
        fixed: Features,
        oov: bool,
    ) -> TransOpt {
        let (lm, _) = self.lm_extend(&[NO_WORD; MAX_ORDER - 1], &ids);
        let estimate = self.weights.dot(&fixed) + self.weights.values[F_LM] * lm;
        TransOpt {
            start,
            end,
            target,
            ids,
            fixed,
            oov,
            estimate,
        }
    }

    fn future_cost(&self, s: &Sentence, cov: &[u64]) -> f64 {
        let mut total = 0.0;
        let mut i = 0;
        while i < s.len {
            if covered(cov, i) {
                i += 1;
                continue;
            }
            let start = i;
            while i < s.len && !covered(cov, i) {
                i += 1;
            }
            total += s.future[start][i];
        }
        total
    }

    /// Best translation.
    pub fn decode(&self, source: &[String]) -> Translation {
        self.nbest(source, 1)
            .into_iter()
            .next()
            .expect("search always completes")
    }

    /// Up to `n` distinct translations, best first.
    pub fn nbest(&self, source: &[String], n: usize) -> Vec<Translation> {
        let n = n.max(1);
        let sent = self.prepare(source);
        match self.search(&sent, self.params.distortion_limit, n) {
            Some(list) => list,
            None => self
                .search(&sent, Some(0), n)
                .expect("monotone search always completes"),
        }
    }

    fn search(&self, s: &Sentence, limit: Option<usize>, k: usize) -> Option<Vec<Translation>> {
        let len = s.len;
        let words = len.div_ceil(64).max(1);
        let mut root_ctx = [NO_WORD; MAX_ORDER - 1];
        if self.lm.order() > 1 {
            root_ctx[0] = self.lm.bos();
        }
        let root = Node {
            state: State {
                coverage: vec![0; words],
                ctx: root_ctx,
                last_end: 0,
            },
            words: 0,
            features: [0.0; NUM_FEATURES],
            score: 0.0,
            text: String::new(),
            future: 0.0,
            arcs: Vec::new(),
        };
        let mut nodes = vec![root];
        let mut stacks: Vec<Vec<usize>> = vec![Vec::new(); len + 1];
        let mut index: Vec<HashMap<State, usize>> = vec![HashMap::new(); len + 1];
        stacks[0].push(0);

        for size in 0..=len {
            let mut stack = std::mem::take(&mut stacks[size]);
            stack.sort_by(|&a, &b| {
                let (x, y) = (&nodes[a], &nodes[b]);
                rank(x.score + x.future, &x.text, y.score + y.future, &y.text)
            });
            stack.truncate(self.params.stack_size);
            stacks[size] = stack.clone();
            if size == len {
                break;
            }
            for &id in &stack {
                let state = nodes[id].state.clone();
                let first_gap = (0..len).find(|&i| !covered(&state.coverage, i)).unwrap_or(len);
                let wall = (0..len)
                    .find(|&i| s.oov_pos[i] && !covered(&state.coverage, i))
                    .unwrap_or(len);
                for start in first_gap..len {
                    if covered(&state.coverage, start) {
                        continue;
                    }
                    let jump = start.abs_diff(state.last_end);
                    if limit.is_some_and(|d| jump > d) {
                        continue;
                    }
                    for &oi in &s.by_start[start] {
                        let o = &s.opts[oi];
                        if o.oov {
                            if start != first_gap {
                                continue;
                            }
                        } else if o.end > wall {
                            continue;
                        }
                        if (o.start..o.end).any(|i| covered(&state.coverage, i)) {
                            continue;
                        }
                        let mut coverage = state.coverage.clone();
                        cover(&mut coverage, o.start, o.end);
                        if let Some(d) = limit {
                            let gap = (0..len).find(|&i| !covered(&coverage, i));
                            if gap.is_some_and(|g| g < o.end && o.end - g > d) {
                                continue;
                            }
                        }
                        let (lm, ctx) = self.lm_extend(&state.ctx, &o.ids);
                        let mut delta = o.fixed;
                        delta[F_LM] = lm;
                        delta[F_DISTORTION] = -(jump as f64);
                        let features = add(&nodes[id].features, &delta);
                        let score = self.weights.dot(&features);
                        let text = join(&nodes[id].text, &o.target);
                        let next = State {
                            coverage,
                            ctx,
                            last_end: o.end,
                        };
                        let covered_words = nodes[id].words + (o.end - o.start);
                        let arc = Arc {
                            prev: id,
                            opt: oi,
                            delta,
                        };
                        match index[covered_words].get(&next) {
                            Some(&target) => {
                                let node = &mut nodes[target];
                                if better(score, &text, node.score, &node.text) {
                                    node.score = score;
                                    node.features = features;
                                    node.text = text;
                                }
                                node.arcs.push(arc);
                            }
                            None => {
                                let future = self.future_cost(s, &next.coverage);
                                let new_id = nodes.len();
                                index[covered_words].insert(next.clone(), new_id);
                                stacks[covered_words].push(new_id);
                                nodes.push(Node {
                                    state: next,
                                    words: covered_words,
                                    features,
                                    score,
                                    text,
                                    future,
                                    arcs: vec![arc],
                                });
                            }
                        }
                    }
                }
            }
        }
        if stacks[len].is_empty() {
            return None;
        }
        Some(self.extract(s, &nodes, &stacks, k))
    }

    fn extract(&self, s: &Sentence, nodes: &[Node], stacks: &[Vec<usize>], k: usize) -> Vec<Translation> {
        let mut kbest: HashMap<usize, Vec<Deriv>> = HashMap::new();
        kbest.insert(
            0,
            vec![Deriv {
                features: [0.0; NUM_FEATURES],
                score: 0.0,
                text: String::new(),
                opts: Vec::new(),
            }],
        );
        for stack in stacks.iter().skip(1) {
            for &id in stack {
                let mut cands: Vec<Deriv> = Vec::new();
                for arc in &nodes[id].arcs {
                    let Some(prev) = kbest.get(&arc.prev) else { continue };
                    let o = &s.opts[arc.opt];
                    for d in prev {
                        let features = add(&d.features, &arc.delta);
                        let mut opts = d.opts.clone();
                        opts.push(arc.opt);
                        cands.push(Deriv {
                            score: self.weights.dot(&features),
                            features,
                            text: join(&d.text, &o.target),
                            opts,
                        });
                    }
                }
                kbest.insert(id, top_k(cands, k));
            }
        }
        let mut finals = Vec::new();
        for &id in &stacks[s.len] {
            let (lm, _) = self.lm_extend(&nodes[id].state.ctx, &[self.lm.eos()]);
            for d in &kbest[&id] {
                let mut features = d.features;
                features[F_LM] += lm;
                finals.push(Deriv {
                    score: self.weights.dot(&features),
                    features,
                    text: d.text.clone(),
                    opts: d.opts.clone(),
                });
            }
        }
        top_k(finals, k)
            .into_iter()
            .map(|d| {
                let mut tokens = Vec::new();
                let mut oov = Vec::new();
                for &oi in &d.opts {
                    let o = &s.opts[oi];
                    tokens.extend(o.target.iter().cloned());
                    oov.extend(std::iter::repeat_n(o.oov, o.target.len()));
                }
                Translation {
                    tokens,
                    oov,
                    features: d.features,
                    total: d.score,
                }
            })
            .collect()
    }
}

/// Best `k` derivations with distinct strings, ranked by score then text.
fn top_k(mut cands: Vec<Deriv>, k: usize) -> Vec<Deriv> {
    cands.sort_by(|a, b| rank(a.score, &a.text, b.score, &b.text));
    let mut seen = HashSet::new();
    let mut out: Vec<Deriv> = Vec::new();
    for c in cands {
        if out.len() == k {
            break;
        }
        if seen.insert(c.text.clone()) {
            out.push(c);
        }
    }
    out
}

/// Decodes every sentence; one n-best list per input, in input order.
pub fn decode_corpus(decoder: &Decoder<'_>, sources: &[Vec<String>], n: usize, exec: Exec) -> Vec<Vec<Translation>> {
    par::map(exec, sources, |s| decoder.nbest(s, n))
}

/// `sent_id ||| target ||| name= value ... ||| total` lines.
pub fn format_nbest(sent_id: usize, list: &[Translation]) -> String {
    let mut out = String::new();
    for t in list {
        let feats: Vec<String> = FEATURE_NAMES
            .iter()
            .zip(&t.features)
            .map(|(n, v)| format!("{n}= {v}"))
            .collect();
        let _ = writeln!(
            out,
            "{sent_id} ||| {} ||| {} ||| {}",
            t.text(),
            feats.join(" "),
            t.total
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct NBestEntry {
    pub sent_id: usize,
    pub tokens: Vec<String>,
    pub features: Features,
    pub total: f64,
}

pub fn parse_nbest(text: &str, origin: &str) -> Result<Vec<NBestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: &str| Error::parse(origin, i + 1, m);
        let fields: Vec<&str> = line.split(" ||| ").collect();
        if fields.len() != 4 {
            return Err(err("expected 4 `|||`-separated fields"));
        }
        let sent_id = fields[0].trim().parse().map_err(|_| err("bad sentence id"))?;
        let toks: Vec<&str> = fields[2].split_whitespace().collect();
        if toks.len() != 2 * NUM_FEATURES {
            return Err(err("wrong number of feature values"));
        }
        let mut features = [0.0; NUM_FEATURES];
        for (j, pair) in toks.chunks(2).enumerate() {
            if pair[0].strip_suffix('=') != Some(FEATURE_NAMES[j]) {
                return Err(err("unexpected feature name"));
            }
            features[j] = pair[1].parse().map_err(|_| err("bad feature value"))?;
        }
        out.push(NBestEntry {
            sent_id,
            tokens: fields[1].split_whitespace().map(String::from).collect(),
            features,
            total: fields[3].trim().parse().map_err(|_| err("bad total"))?,
        });
    }
    Ok(out)
}

impl fmt::Display for FeatureWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
