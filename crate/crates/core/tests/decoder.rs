mod common;

use common::{exhaustive, random_instance, toks};
use lexaug::decoder::{DecodeParams, Decoder, FeatureWeights};
use lexaug::eval::{oov_count, OovMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..60 {
        let inst = random_instance(&mut rng, 5);
        let dec = Decoder::new(&inst.table, &inst.lm, inst.weights, DecodeParams::unlimited());
        let t = dec.decode(&inst.source);
        let (best, strings) = exhaustive(&inst);
        assert!(
            (t.total - best).abs() < 1e-9,
            "{:?}: {} vs {}",
            inst.source,
            t.total,
            best
        );
        assert!(strings.contains(&t.text()));
        assert!((t.total - inst.weights.dot(&t.features)).abs() < 1e-9);
    }
}

#[test]
fn nbest_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let inst = random_instance(&mut rng, 5);
        let dec = Decoder::new(&inst.table, &inst.lm, inst.weights, DecodeParams::default());
        let list = dec.nbest(&inst.source, 20);
        assert!(!list.is_empty() && list.len() <= 20);
        assert_eq!(list[0], dec.decode(&inst.source));
        let mut texts: Vec<String> = list.iter().map(|t| t.text()).collect();
        for w in list.windows(2) {
            assert!(w[0].total >= w[1].total);
        }
        for t in &list {
            assert!((t.total - inst.weights.dot(&t.features)).abs() < 1e-9);
            assert_eq!(
                t.oov_count(),
                oov_count(std::slice::from_ref(&inst.source), &inst.table, OovMode::Tokens)
            );
        }
        texts.sort();
        texts.dedup();
        assert_eq!(texts.len(), list.len());
    }
}

#[test]
fn scaling_keeps_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let inst = random_instance(&mut rng, 6);
        let base = Decoder::new(&inst.table, &inst.lm, inst.weights, DecodeParams::default()).decode(&inst.source);
        for c in [0.25, 3.0] {
            let scaled = Decoder::new(&inst.table, &inst.lm, inst.weights.scaled(c), DecodeParams::default());
            assert_eq!(scaled.decode(&inst.source).text(), base.text());
        }
    }
}

#[test]
fn distortion_limit_still_completes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut inst = random_instance(&mut rng, 5);
        inst.source = toks("s0 s1 s2 s3 s4 s0 s1 s2 s3 s4 s0 s1");
        inst.weights = FeatureWeights::default();
        let params = DecodeParams {
            stack_size: 5,
            distortion_limit: Some(2),
            max_options: 3,
        };
        let t = Decoder::new(&inst.table, &inst.lm, inst.weights, params).decode(&inst.source);
        assert!(!t.tokens.is_empty());
    }
}
