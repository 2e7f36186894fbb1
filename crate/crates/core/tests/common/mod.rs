//! Independent reference implementations and random instance generators
//! shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use lexaug::align::AlignmentMatrix;
use lexaug::decoder::{FeatureWeights, Features, F_DISTORTION, F_LM, F_PHRASE_PENALTY, F_WORD_PENALTY};
use lexaug::lm::{train_lm, NGramModel};
use lexaug::par::Exec;
use lexaug::phrase::{PhraseEntry, PhraseSpan, PhraseTable};
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Papineni BLEU computed with plain lists instead of hash maps.
pub fn reference_bleu(cands: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in cands.iter().zip(refs) {
        c_len += c.len();
        r_len += r.len();
        for n in 1..=4 {
            if c.len() < n {
                continue;
            }
            let cg: Vec<&[String]> = c.windows(n).collect();
            let rg: Vec<&[String]> = if r.len() >= n {
                r.windows(n).collect()
            } else {
                Vec::new()
            };
            totals[n - 1] += cg.len();
            let mut used = vec![false; rg.len()];
            for g in &cg {
                if let Some(k) = (0..rg.len()).find(|&k| !used[k] && rg[k] == *g) {
                    used[k] = true;
                    matches[n - 1] += 1;
                }
            }
        }
    }
    if (0..4).any(|n| matches[n] == 0) {
        return 0.0;
    }
    let log_p: f64 = (0..4).map(|n| (matches[n] as f64 / totals[n] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if c_len >= r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    bp * log_p.exp()
}

/// All consistent span pairs, checked box by box.
pub fn brute_force_spans(a: &AlignmentMatrix, max_len: usize) -> BTreeSet<PhraseSpan> {
    let mut out = BTreeSet::new();
    for s1 in 0..a.src_len {
        for s2 in s1 + 1..=a.src_len.min(s1 + max_len) {
            for t1 in 0..a.tgt_len {
                for t2 in t1 + 1..=a.tgt_len.min(t1 + max_len) {
                    let inside = |i: usize, j: usize| (s1..s2).contains(&i) && (t1..t2).contains(&j);
                    let mut any = false;
                    let mut ok = true;
                    for &(i, j) in &a.links {
                        let si = (s1..s2).contains(&i);
                        let tj = (t1..t2).contains(&j);
                        if inside(i, j) {
                            any = true;
                        } else if si || tj {
                            ok = false;
                        }
                    }
                    if any && ok {
                        out.insert(PhraseSpan {
                            src: (s1, s2),
                            tgt: (t1, t2),
                        });
                    }
                }
            }
        }
    }
    out
}

pub fn random_alignment(rng: &mut impl Rng, max_len: usize) -> AlignmentMatrix {
    let n = rng.random_range(1..=max_len);
    let m = rng.random_range(1..=max_len);
    let density = rng.random_range(0.1..0.6);
    let mut links = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if rng.random_bool(density) {
                links.push((i, j));
            }
        }
    }
    AlignmentMatrix::from_links(n, m, links)
}

/// A phrase table, LM, weights and source sentence with some OOV tokens.
pub struct DecodeInstance {
    pub source: Vec<String>,
    pub table: PhraseTable,
    pub lm: NGramModel,
    pub weights: FeatureWeights,
}

pub fn random_instance(rng: &mut impl RngCore, max_len: usize) -> DecodeInstance {
    let src_vocab = ["s0", "s1", "s2", "s3", "s4", "s5", "s6"];
    let tgt_vocab = ["t0", "t1", "t2", "t3", "t4", "t5", "t6"];
    let len = rng.random_range(1..=max_len);
    let source: Vec<String> = (0..len).map(|_| src_vocab.choose(rng).unwrap().to_string()).collect();
    let mut table = PhraseTable::new();
    let entry = |rng: &mut dyn RngCore, tlen: usize| PhraseEntry {
        target: (0..tlen).map(|_| tgt_vocab.choose(rng).unwrap().to_string()).collect(),
        scores: [0; 4].map(|_| rng.random_range(0.05..1.0)),
        alignment: Vec::new(),
        counts: [1, 1, 1],
    };
    // s5 never enters the table, so it is always passed through; s6 only
    // appears inside multiword entries and needs the copy fallback alone
    for w in &src_vocab[..5] {
        for _ in 0..rng.random_range(1..=2) {
            let tlen = rng.random_range(1..=2);
            table.insert(vec![w.to_string()], entry(rng, tlen));
        }
    }
    for _ in 0..3 {
        if len < 2 {
            break;
        }
        let s = rng.random_range(0..len - 1);
        let e = rng.random_range(s + 2..=len.min(s + 3));
        if source[s..e].iter().any(|t| t == "s5") {
            continue;
        }
        let tlen = rng.random_range(1..=3);
        table.insert(source[s..e].to_vec(), entry(rng, tlen));
    }
    let lm_corpus: Vec<Vec<String>> = (0..12)
        .map(|_| {
            let n = rng.random_range(1..=5);
            (0..n)
                .map(|_| tgt_vocab[..5].choose(rng).unwrap().to_string())
                .collect()
        })
        .collect();
    let lm = train_lm(&lm_corpus, 3, Exec::Sequential).unwrap();
    let weights = FeatureWeights::new([0; 8].map(|_| rng.random_range(-1.0..1.0)));
    DecodeInstance {
        source,
        table,
        lm,
        weights,
    }
}

#[derive(Clone, Debug)]
struct Opt {
    start: usize,
    end: usize,
    target: Vec<String>,
    scores: [f64; 4],
    oov: bool,
}

/// Exhaustive search over every segmentation, order and option choice.
/// Returns the best total and every string reaching it (within 1e-9).
pub fn exhaustive(inst: &DecodeInstance) -> (f64, BTreeSet<String>) {
    let src = &inst.source;
    let n = src.len();
    let oov: Vec<bool> = src.iter().map(|t| !inst.table.knows(t)).collect();
    let mut opts = Vec::new();
    for s in 0..n {
        if oov[s] || inst.table.get(&src[s..=s]).is_none() {
            opts.push(Opt {
                start: s,
                end: s + 1,
                target: vec![src[s].clone()],
                scores: [1.0; 4],
                oov: oov[s],
            });
        }
        if oov[s] {
            continue;
        }
        for e in s + 1..=n {
            if oov[s..e].iter().any(|&b| b) {
                break;
            }
            for entry in inst.table.get(&src[s..e]).unwrap_or(&[]) {
                opts.push(Opt {
                    start: s,
                    end: e,
                    target: entry.target.clone(),
                    scores: entry.scores,
                    oov: false,
                });
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, BTreeSet::new());
    let mut chosen = Vec::new();
    dfs(inst, &opts, &oov, &mut vec![false; n], &mut chosen, &mut best);
    best
}

fn dfs(
    inst: &DecodeInstance,
    opts: &[Opt],
    oov: &[bool],
    covered: &mut Vec<bool>,
    chosen: &mut Vec<usize>,
    best: &mut (f64, BTreeSet<String>),
) {
    if covered.iter().all(|&c| c) {
        let f = features(inst, opts, chosen);
        let total = inst.weights.dot(&f);
        let text = chosen
            .iter()
            .flat_map(|&i| opts[i].target.iter().cloned())
            .collect::<Vec<_>>()
            .join(" ");
        if total > best.0 + 1e-9 {
            *best = (total, BTreeSet::from([text]));
        } else if (total - best.0).abs() <= 1e-9 {
            best.1.insert(text);
        }
        return;
    }
    let first_gap = covered.iter().position(|&c| !c).unwrap();
    let wall = (0..covered.len())
        .find(|&i| oov[i] && !covered[i])
        .unwrap_or(covered.len());
    for (i, o) in opts.iter().enumerate() {
        if covered[o.start..o.end].iter().any(|&c| c) {
            continue;
        }
        if o.oov && o.start != first_gap {
            continue;
        }
        if !o.oov && o.end > wall {
            continue;
        }
        covered[o.start..o.end].iter_mut().for_each(|c| *c = true);
        chosen.push(i);
        dfs(inst, opts, oov, covered, chosen, best);
        chosen.pop();
        covered[o.start..o.end].iter_mut().for_each(|c| *c = false);
    }
}

fn features(inst: &DecodeInstance, opts: &[Opt], chosen: &[usize]) -> Features {
    let mut f = [0.0; 8];
    let mut prev_end = 0usize;
    let mut words = Vec::new();
    for &i in chosen {
        let o = &opts[i];
        if !o.oov {
            for (acc, s) in f.iter_mut().zip(&o.scores) {
                *acc += s.ln();
            }
        }
        f[F_DISTORTION] -= o.start.abs_diff(prev_end) as f64;
        f[F_WORD_PENALTY] += o.target.len() as f64;
        f[F_PHRASE_PENALTY] += 1.0;
        prev_end = o.end;
        words.extend(o.target.iter().cloned());
    }
    f[F_LM] = inst.lm.score_sequence(&words) * std::f64::consts::LN_10;
    f
}
