//! Minimum error rate training over accumulated n-best lists, using an
//! exact per-dimension line search on the upper envelope of hypothesis
//! scores.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decoder::{decode_corpus, DecodeParams, Decoder, FeatureWeights, Features, F_LM, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::eval::BleuStats;
use crate::lm::NGramModel;
use crate::par::Exec;
use crate::phrase::PhraseTable;

/// Produces n-best lists for a fixed dev set under given weights.
pub trait NBestDecoder {
    fn nbest(&self, weights: &FeatureWeights, n: usize) -> Vec<Vec<(Vec<String>, Features)>>;
}

/// The phrase decoder over a dev source side.
pub struct DevDecoder<'a> {
    pub table: &'a PhraseTable,
    pub lm: &'a NGramModel,
    pub params: DecodeParams,
    pub sources: &'a [Vec<String>],
    pub exec: Exec,
}

impl NBestDecoder for DevDecoder<'_> {
    fn nbest(&self, weights: &FeatureWeights, n: usize) -> Vec<Vec<(Vec<String>, Features)>> {
        let dec = Decoder::new(self.table, self.lm, *weights, self.params);
        decode_corpus(&dec, self.sources, n, self.exec)
            .into_iter()
            .map(|list| list.into_iter().map(|t| (t.tokens, t.features)).collect())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub text: String,
    pub features: Features,
    pub stats: BleuStats,
}

/// Distinct hypotheses seen so far, per dev sentence.
#[derive(Clone, Debug)]
pub struct Pool {
    refs: Vec<Vec<String>>,
    sentences: Vec<Vec<Candidate>>,
    seen: Vec<HashSet<String>>,
}

impl Pool {
    pub fn new(refs: &[Vec<String>]) -> Self {
        Pool {
            refs: refs.to_vec(),
            sentences: vec![Vec::new(); refs.len()],
            seen: vec![HashSet::new(); refs.len()],
        }
    }

    /// Adds unseen hypotheses; returns how many were new.
    pub fn add(&mut self, lists: Vec<Vec<(Vec<String>, Features)>>) -> usize {
        let mut added = 0;
        for (i, list) in lists.into_iter().enumerate().take(self.refs.len()) {
            for (tokens, features) in list {
                let text = tokens.join(" ");
                if self.seen[i].insert(text.clone()) {
                    let stats = BleuStats::sentence(&tokens, &self.refs[i]);
                    self.sentences[i].push(Candidate { text, features, stats });
                    added += 1;
                }
            }
        }
        added
    }

    pub fn len(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sentences(&self) -> &[Vec<Candidate>] {
        &self.sentences
    }

    fn select(&self, w: &FeatureWeights) -> BleuStats {
        let mut total = BleuStats::default();
        for cands in &self.sentences {
            let mut best: Option<(f64, &Candidate)> = None;
            for c in cands {
                let s = w.dot(&c.features);
                let wins = match best {
                    None => true,
                    Some((bs, bc)) => s > bs || (s == bs && c.text < bc.text),
                };
                if wins {
                    best = Some((s, c));
                }
            }
            if let Some((_, c)) = best {
                total += c.stats;
            }
        }
        total
    }

    /// Smoothed corpus BLEU of the pool's argmax hypotheses under `w`.
    pub fn bleu(&self, w: &FeatureWeights) -> f64 {
        self.select(w).smoothed()
    }

    /// Best value for weight `dim` with the others fixed, and its BLEU.
    /// BLEU is piecewise constant in that weight; each interval of the
    /// merged envelopes is probed at its midpoint.
    pub fn line_search(&self, w: &FeatureWeights, dim: usize) -> (f64, f64) {
        struct Event {
            x: f64,
            sent: usize,
            cand: usize,
        }
        let mut events = Vec::new();
        let mut current: Vec<Option<usize>> = vec![None; self.sentences.len()];
        let mut stats = BleuStats::default();
        for (si, cands) in self.sentences.iter().enumerate() {
            if cands.is_empty() {
                continue;
            }
            let hull = envelope(cands, w, dim);
            current[si] = Some(hull[0].0);
            stats += cands[hull[0].0].stats;
            for &(ci, x) in &hull[1..] {
                events.push(Event { x, sent: si, cand: ci });
            }
        }
        events.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.sent.cmp(&b.sent)));

        let probe = |lo: Option<f64>, hi: Option<f64>| match (lo, hi) {
            (Some(a), Some(b)) => 0.5 * (a + b),
            (None, Some(b)) => b - 1.0,
            (Some(a), None) => a + 1.0,
            (None, None) => w.values[dim],
        };
        let first = events.first().map(|e| e.x);
        let mut best = (probe(None, first), stats.smoothed());
        let mut i = 0;
        while i < events.len() {
            let x = events[i].x;
            while i < events.len() && events[i].x == x {
                let e = &events[i];
                let old = current[e.sent].replace(e.cand).expect("sentence has a hull");
                stats += self.sentences[e.sent][e.cand].stats;
                stats = sub(stats, self.sentences[e.sent][old].stats);
                i += 1;
            }
            let bleu = stats.smoothed();
            if bleu > best.1 {
                best = (probe(Some(x), events.get(i).map(|e| e.x)), bleu);
            }
        }
        best
    }
}

fn sub(mut a: BleuStats, b: BleuStats) -> BleuStats {
    for n in 0..a.matches.len() {
        a.matches[n] -= b.matches[n];
        a.totals[n] -= b.totals[n];
    }
    a.cand_len -= b.cand_len;
    a.ref_len -= b.ref_len;
    a
}

/// Upper envelope of score(x) = a + b x over candidates, where x is weight
/// `dim`. Returns (candidate, x from which it is on top), left to right.
fn envelope(cands: &[Candidate], w: &FeatureWeights, dim: usize) -> Vec<(usize, f64)> {
    let mut lines: Vec<(f64, f64, usize)> = cands
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut rest = w.values;
            rest[dim] = 0.0;
            (c.features[dim], FeatureWeights::new(rest).dot(&c.features), i)
        })
        .collect();
    lines.sort_by(|p, q| {
        p.0.total_cmp(&q.0)
            .then(q.1.total_cmp(&p.1))
            .then_with(|| cands[p.2].text.cmp(&cands[q.2].text))
    });
    lines.dedup_by(|later, kept| later.0 == kept.0);
    let mut hull: Vec<(f64, f64, usize, f64)> = Vec::new();
    for (b, a, i) in lines {
        loop {
            match hull.last() {
                None => {
                    hull.push((b, a, i, f64::NEG_INFINITY));
                    break;
                }
                Some(&(tb, ta, _, start)) => {
                    let x = (ta - a) / (b - tb);
                    if x <= start {
                        hull.pop();
                    } else {
                        hull.push((b, a, i, x));
                        break;
                    }
                }
            }
        }
    }
    hull.into_iter().map(|(_, _, i, x)| (i, x)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MertParams {
    pub nbest: usize,
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    pub min_gain: f64,
}

impl Default for MertParams {
    fn default() -> Self {
        MertParams {
            nbest: 100,
            max_iterations: 10,
            restarts: 8,
            seed: 1,
            min_gain: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MertIteration {
    pub iteration: usize,
    pub pool_size: usize,
    /// Pool BLEU of the incoming weights, after this round's n-best lists were added.
    pub bleu_before: f64,
    /// Pool BLEU of the optimized weights on the same pool.
    pub bleu_after: f64,
    pub weights: FeatureWeights,
}

#[derive(Clone, Debug)]
pub struct MertResult {
    pub weights: FeatureWeights,
    pub trace: Vec<MertIteration>,
    pub pool: Pool,
}

/// Improvements smaller than this are treated as ties.
const EPS: f64 = 1e-10;

/// Coordinate ascent: repeatedly applies the single best one-weight move.
pub fn optimize(pool: &Pool, start: FeatureWeights) -> (FeatureWeights, f64) {
    let mut w = start;
    let mut bleu = pool.bleu(&w);
    loop {
        let mut best: Option<(usize, f64, f64)> = None;
        for d in 0..NUM_FEATURES {
            let (x, b) = pool.line_search(&w, d);
            if b > bleu + EPS && best.is_none_or(|(_, _, bb)| b > bb) {
                best = Some((d, x, b));
            }
        }
        match best {
            Some((d, x, b)) => {
                w.values[d] = x;
                bleu = b;
            }
            None => return (w, bleu),
        }
    }
}

/// Scales weights so |λ_lm| = 1, or to unit L1 norm when λ_lm is zero.
/// Positive scaling leaves every argmax unchanged.
pub fn normalize(w: &FeatureWeights) -> FeatureWeights {
    let lm = w.values[F_LM].abs();
    if lm > 0.0 {
        return w.scaled(1.0 / lm);
    }
    let l1: f64 = w.values.iter().map(|x| x.abs()).sum();
    if l1 > 0.0 {
        w.scaled(1.0 / l1)
    } else {
        *w
    }
}

pub fn mert(
    refs: &[Vec<String>],
    initial: FeatureWeights,
    decoder: &impl NBestDecoder,
    params: &MertParams,
) -> Result<MertResult> {
    if refs.is_empty() || refs.iter().all(Vec::is_empty) {
        return Err(Error::DegenerateDevSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pool = Pool::new(refs);
    let mut w = initial;
    let mut trace = Vec::new();
    for iteration in 1..=params.max_iterations {
        let added = pool.add(decoder.nbest(&w, params.nbest));
        if added == 0 && iteration > 1 {
            break;
        }
        let before = pool.bleu(&w);
        let mut starts = vec![w];
        for _ in 0..params.restarts {
            starts.push(FeatureWeights::new(
                [0.0; NUM_FEATURES].map(|_| rng.random_range(-1.0..=1.0)),
            ));
        }
        let mut best = (w, before);
        for s in starts {
            let (cand, bleu) = optimize(&pool, s);
            if bleu > best.1 + EPS {
                best = (cand, bleu);
            }
        }
        w = normalize(&best.0);
        trace.push(MertIteration {
            iteration,
            pool_size: pool.len(),
            bleu_before: before,
            bleu_after: best.1,
            weights: w,
        });
        if best.1 - before < params.min_gain {
            break;
        }
    }
    Ok(MertResult {
        weights: w,
        trace,
        pool,
    })
}

/// Tab-separated trace with one row per iteration.
pub fn format_trace(trace: &[MertIteration]) -> String {
    let mut out = String::from("iteration\tpool_size\tbleu_before\tbleu_after\n");
    for t in trace {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}",
            t.iteration, t.pool_size, t.bleu_before, t.bleu_after
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::split;

    fn feats(pairs: &[(usize, f64)]) -> Features {
        let mut f = [0.0; NUM_FEATURES];
        for &(i, v) in pairs {
            f[i] = v;
        }
        f
    }

    struct Fixed(Vec<Vec<(Vec<String>, Features)>>);

    impl NBestDecoder for Fixed {
        fn nbest(&self, _: &FeatureWeights, _: usize) -> Vec<Vec<(Vec<String>, Features)>> {
            self.0.clone()
        }
    }

    #[test]
    fn single_breakpoint() {
        // A scores 2 regardless of w5; B scores w5. They cross at w5 = 2.
        let refs = vec![split("a b c d e")];
        let mut pool = Pool::new(&refs);
        pool.add(vec![vec![
            (split("x y z w v"), feats(&[(0, 2.0)])),
            (split("a b c d e"), feats(&[(5, 1.0)])),
        ]]);
        let mut w = FeatureWeights::new([0.0; NUM_FEATURES]);
        w.values[0] = 1.0;
        let (x, b) = pool.line_search(&w, 5);
        assert!(x > 2.0);
        assert_eq!(b, 1.0);
        w.values[5] = 1.0;
        assert!(pool.bleu(&w) < 1.0);
        let (opt, bleu) = optimize(&pool, w);
        assert_eq!(bleu, 1.0);
        assert!(opt.dot(&feats(&[(5, 1.0)])) > opt.dot(&feats(&[(0, 2.0)])));
    }

    #[test]
    fn envelope_drops_dominated_lines() {
        let c = |t: &str, b: f64, a: f64| Candidate {
            text: t.into(),
            features: feats(&[(0, a), (1, b)]),
            stats: BleuStats::default(),
        };
        // lines -x, -5 and x: the constant one is never on top
        let cands = vec![c("p", -1.0, 0.0), c("q", 0.0, -5.0), c("r", 1.0, 0.0)];
        let w = FeatureWeights::new(feats(&[(0, 1.0)]));
        let hull = envelope(&cands, &w, 1);
        assert_eq!(hull.iter().map(|h| h.0).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(hull[1].1, 0.0);
    }

    #[test]
    fn optimal_start_does_not_regress() {
        let refs = vec![split("a b c d"), split("e f g h")];
        let lists = vec![
            vec![
                (split("a b c d"), feats(&[(0, 1.0)])),
                (split("a b"), feats(&[(1, 1.0)])),
            ],
            vec![(split("e f g h"), feats(&[(0, 1.0)])), (split("q"), feats(&[(1, 1.0)]))],
        ];
        let w = FeatureWeights::new(feats(&[(0, 1.0), (4, 1.0)]));
        let res = mert(&refs, w, &Fixed(lists), &MertParams::default()).unwrap();
        assert_eq!(res.pool.bleu(&res.weights), res.pool.bleu(&w));
        assert_eq!(res.trace[0].bleu_after, 1.0);
    }

    #[test]
    fn degenerate_dev() {
        let r = mert(
            &[Vec::new()],
            FeatureWeights::default(),
            &Fixed(vec![]),
            &MertParams::default(),
        );
        assert!(matches!(r, Err(Error::DegenerateDevSet)));
        assert!(mert(&[], FeatureWeights::default(), &Fixed(vec![]), &MertParams::default()).is_err());
    }

    #[test]
    fn normalization() {
        let w = FeatureWeights::new(feats(&[(F_LM, -2.0), (0, 1.0)]));
        assert_eq!(normalize(&w).values[F_LM], -1.0);
        let w = FeatureWeights::new(feats(&[(0, 3.0), (1, -1.0)]));
        assert_eq!(normalize(&w).values[..2], [0.75, -0.25]);
    }
}
