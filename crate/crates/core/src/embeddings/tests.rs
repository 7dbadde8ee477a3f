use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn docs(raw: &[&str]) -> Vec<Vec<String>> {
    raw.iter()
        .map(|d| d.split_whitespace().map(str::to_string).collect())
        .collect()
}

fn naive_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two disjoint vocabularies, 200 sentences each.
pub(crate) fn planted_corpus(seed: u64) -> (Vec<Vec<String>>, Vec<String>, Vec<String>) {
    let a: Vec<String> = (0..12).map(|i| format!("wald{i}")).collect();
    let b: Vec<String> = (0..12).map(|i| format!("zins{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for vocab in [&a, &b] {
        for _ in 0..200 {
            let len = rng.random_range(8..14);
            out.push((0..len).map(|_| vocab[rng.random_range(0..vocab.len())].clone()).collect());
        }
    }
    (out, a, b)
}

pub(crate) fn cluster_gap(m: &EmbeddingMatrix, a: &[String], b: &[String]) -> f64 {
    let mean = |pairs: Vec<(&String, &String)>| {
        let n = pairs.len() as f64;
        pairs
            .into_iter()
            .map(|(x, y)| cosine(m.vector(x).unwrap(), m.vector(y).unwrap()))
            .sum::<f64>()
            / n
    };
    let mut intra = Vec::new();
    for group in [a, b] {
        for i in 0..group.len() {
            for j in i + 1..group.len() {
                intra.push((&group[i], &group[j]));
            }
        }
    }
    let inter = a.iter().flat_map(|x| b.iter().map(move |y| (x, y))).collect();
    mean(intra) - mean(inter)
}

fn planted_config() -> EmbeddingConfig {
    EmbeddingConfig {
        dim: 20,
        window: 3,
        negatives: 5,
        min_count: 1,
        seed: 11,
        subsample_threshold: 0.0,
        epochs: 5,
        initial_lr: 0.01,
        ..EmbeddingConfig::default()
    }
}

#[test]
fn vocab_threshold_and_order() {
    let corpus = docs(&["a a a b"]);
    let v = build_vocab(&corpus, 2).unwrap();
    assert_eq!(v.tokens(), ["a"]);
    let v = build_vocab(&corpus, 1).unwrap();
    assert_eq!(v.tokens(), ["a", "b"]);
    assert_eq!(v.index_of("a"), Some(0));
    assert_eq!(v.counts(), [3, 1]);

    let tie = build_vocab(&docs(&["z y x z y x"]), 1).unwrap();
    assert_eq!(tie.tokens(), ["x", "y", "z"]);
}

#[test]
fn vocab_errors() {
    assert!(matches!(build_vocab(&docs(&[""]), 1), Err(Error::Config(_))));
    assert!(matches!(build_vocab(&docs(&["a b"]), 2), Err(Error::Config(_))));
}

#[test]
fn vocab_counts_match_histogram() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let corpus: Vec<Vec<String>> = (0..100)
        .map(|_| {
            let len = rng.random_range(0..30);
            (0..len).map(|_| format!("t{}", rng.random_range(0..40))).collect()
        })
        .collect();
    let mut hist: BTreeMap<&str, u64> = BTreeMap::new();
    for d in &corpus {
        for t in d {
            *hist.entry(t).or_default() += 1;
        }
    }
    let v = build_vocab(&corpus, 1).unwrap();
    assert_eq!(v.len(), hist.len());
    for (t, c) in &hist {
        assert_eq!(v.count(t), Some(*c), "{t}");
    }
    let v3 = build_vocab(&corpus, 3).unwrap();
    assert_eq!(v3.len(), hist.values().filter(|&&c| c >= 3).count());
}

#[test]
fn single_step_matches_hand_computation() {
    let cfg = EmbeddingConfig {
        dim: 2,
        min_count: 1,
        seed: 5,
        ..EmbeddingConfig::default()
    };
    let vocab = build_vocab(&docs(&["a b"]), 1).unwrap();
    let mut m = EmbeddingMatrix::initialize(vocab, &cfg);
    m.input_vectors = vec![0.3, -0.2, 0.1, 0.4];
    m.output_vectors = vec![0.5, 0.25, -0.6, 0.2];
    let lr = 0.1;
    // center a (0), context b (1), negative a (0)
    let (v, u_pos, u_neg) = ([0.3, -0.2], [-0.6, 0.2], [0.5, 0.25]);
    let s_pos = v[0] * u_pos[0] + v[1] * u_pos[1];
    let s_neg = v[0] * u_neg[0] + v[1] * u_neg[1];
    let g_pos = (1.0 - naive_sigmoid(s_pos)) * lr;
    let g_neg = -naive_sigmoid(s_neg) * lr;
    let want_in0 = [v[0] + g_pos * u_pos[0] + g_neg * u_neg[0], v[1] + g_pos * u_pos[1] + g_neg * u_neg[1]];
    let want_out1 = [u_pos[0] + g_pos * v[0], u_pos[1] + g_pos * v[1]];
    let want_out0 = [u_neg[0] + g_neg * v[0], u_neg[1] + g_neg * v[1]];
    let want_loss = -naive_sigmoid(s_pos).ln() - naive_sigmoid(-s_neg).ln();

    let loss = m.apply_pair_update(0, 1, &[0], lr);
    assert!((loss - want_loss).abs() < 1e-15);
    for (got, want) in m.input_row(0).iter().zip(want_in0) {
        assert!((got - want).abs() < 1e-15);
    }
    assert_eq!(m.input_row(1), [0.1, 0.4]);
    for (got, want) in m.output_row(1).iter().zip(want_out1) {
        assert!((got - want).abs() < 1e-15);
    }
    for (got, want) in m.output_row(0).iter().zip(want_out0) {
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn seeded_two_token_run_matches_hand_replay() {
    // "a b" with window 1 yields exactly the pairs (a→b) then (b→a); with two
    // tokens the only admissible negative is the center itself.
    let cfg = EmbeddingConfig {
        dim: 2,
        window: 1,
        negatives: 1,
        epochs: 1,
        min_count: 1,
        subsample_threshold: 0.0,
        seed: 42,
        initial_lr: 0.025,
        workers: 1,
    };
    let corpus = docs(&["a b"]);
    let (m, stats) = train_skipgram_with_stats(&corpus, &cfg).unwrap();
    assert_eq!(stats.total_pairs, 2);

    let init = EmbeddingMatrix::initialize(build_vocab(&corpus, 1).unwrap(), &cfg);
    let mut vin = [init.input_row(0).to_vec(), init.input_row(1).to_vec()];
    let mut vout = [vec![0.0; 2], vec![0.0; 2]];
    for (k, (c, ctx)) in [(0usize, 1usize), (1, 0)].into_iter().enumerate() {
        let lr = 0.025 * (1.0 - k as f64 / 2.0);
        let v = vin[c].clone();
        let (up, un) = (vout[ctx].clone(), vout[c].clone());
        let gp = (1.0 - naive_sigmoid(dot(&v, &up))) * lr;
        let gn = -naive_sigmoid(dot(&v, &un)) * lr;
        for j in 0..2 {
            vout[ctx][j] = up[j] + gp * v[j];
            vout[c][j] = un[j] + gn * v[j];
            vin[c][j] = v[j] + (gp * up[j] + gn * un[j]);
        }
    }
    for (got, want) in m.input_vectors.iter().chain(&m.output_vectors).zip(vin.concat().iter().chain(&vout.concat())) {
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dim = 3;
    for _ in 0..20 {
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let (input, positive) = (rows[0].clone(), rows[1].clone());
        let negs: Vec<Vec<f64>> = rows[2..].to_vec();
        let loss = |i: &[f64], p: &[f64], n: &[Vec<f64>]| {
            -naive_sigmoid(dot(p, i)).ln() - n.iter().map(|u| naive_sigmoid(-dot(u, i)).ln()).sum::<f64>()
        };
        let neg_refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
        let g = sgns_loss_and_gradients(&input, &positive, &neg_refs);
        assert!((g.loss - loss(&input, &positive, &negs)).abs() < 1e-12);
        let h = 1e-6;
        let check = |analytic: f64, plus: f64, minus: f64| {
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-5, "analytic {analytic} numeric {numeric}");
        };
        for j in 0..dim {
            let (mut ip, mut im) = (input.clone(), input.clone());
            ip[j] += h;
            im[j] -= h;
            check(g.d_input[j], loss(&ip, &positive, &negs), loss(&im, &positive, &negs));
            let (mut pp, mut pm) = (positive.clone(), positive.clone());
            pp[j] += h;
            pm[j] -= h;
            check(g.d_positive[j], loss(&input, &pp, &negs), loss(&input, &pm, &negs));
            for k in 0..negs.len() {
                let (mut np, mut nm) = (negs.clone(), negs.clone());
                np[k][j] += h;
                nm[k][j] -= h;
                check(g.d_negatives[k][j], loss(&input, &positive, &np), loss(&input, &positive, &nm));
            }
        }
    }
}

#[test]
fn update_is_a_gradient_step() {
    let cfg = EmbeddingConfig {
        dim: 3,
        min_count: 1,
        ..EmbeddingConfig::default()
    };
    let vocab = build_vocab(&docs(&["a b c d e"]), 1).unwrap();
    let mut m = EmbeddingMatrix::initialize(vocab, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    m.output_vectors.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    let before = m.clone();
    let lr = 0.05;
    let negs = [2usize, 3, 4];
    let refs: Vec<&[f64]> = negs.iter().map(|&k| before.output_row(k)).collect();
    let g = sgns_loss_and_gradients(before.input_row(0), before.output_row(1), &refs);
    m.apply_pair_update(0, 1, &negs, lr);
    for j in 0..3 {
        assert!((m.input_row(0)[j] - (before.input_row(0)[j] - lr * g.d_input[j])).abs() < 1e-15);
        assert!((m.output_row(1)[j] - (before.output_row(1)[j] - lr * g.d_positive[j])).abs() < 1e-15);
        for (k, &n) in negs.iter().enumerate() {
            assert!((m.output_row(n)[j] - (before.output_row(n)[j] - lr * g.d_negatives[k][j])).abs() < 1e-15);
        }
    }
}

#[test]
fn zero_epochs_is_initialization() {
    let (corpus, _, _) = planted_corpus(1);
    let cfg = EmbeddingConfig {
        epochs: 0,
        ..planted_config()
    };
    let m = train_skipgram(&corpus, &cfg).unwrap();
    let init = EmbeddingMatrix::initialize(build_vocab(&corpus, 1).unwrap(), &cfg);
    assert_eq!(m, init);
    let half = 0.5 / cfg.dim as f64;
    assert!(m.input_vectors.iter().all(|x| x.abs() <= half));
    assert!(m.output_vectors.iter().all(|&x| x == 0.0));
}

#[test]
fn planted_clusters_separate_and_loss_falls() {
    let (corpus, a, b) = planted_corpus(7);
    let (m, stats) = train_skipgram_with_stats(&corpus, &planted_config()).unwrap();
    let gap = cluster_gap(&m, &a, &b);
    assert!(gap >= 0.2, "gap {gap}");
    let upticks = stats
        .epoch_losses
        .windows(2)
        .filter(|w| w[1] > w[0])
        .collect::<Vec<_>>();
    assert!(upticks.len() <= 1, "{:?}", stats.epoch_losses);
    assert!(upticks.iter().all(|w| w[1] <= w[0] * 1.01), "{:?}", stats.epoch_losses);
}

#[test]
fn same_seed_bit_identical() {
    let (corpus, _, _) = planted_corpus(2);
    let cfg = EmbeddingConfig {
        epochs: 2,
        ..planted_config()
    };
    let m1 = train_skipgram(&corpus, &cfg).unwrap();
    let m2 = train_skipgram(&corpus, &cfg).unwrap();
    assert_eq!(m1.digest(), m2.digest());
    assert!(m1.input_vectors.iter().zip(&m2.input_vectors).all(|(x, y)| x.to_bits() == y.to_bits()));
    let m3 = train_skipgram(&corpus, &EmbeddingConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(m1.digest(), m3.digest());
}

#[test]
fn parallel_workers_train_finite_vectors() {
    let (corpus, a, b) = planted_corpus(3);
    let cfg = EmbeddingConfig {
        workers: 4,
        ..planted_config()
    };
    let m = train_skipgram(&corpus, &cfg).unwrap();
    assert!(m.is_finite());
    assert!(cluster_gap(&m, &a, &b) > 0.1);
}

#[test]
fn diverging_lr_is_reported() {
    let (corpus, _, _) = planted_corpus(4);
    let cfg = EmbeddingConfig {
        initial_lr: 1e200,
        ..planted_config()
    };
    assert!(matches!(train_skipgram(&corpus, &cfg), Err(Error::Numerical(_))));
}

#[test]
fn invalid_config_rejected() {
    let corpus = docs(&["a b"]);
    for cfg in [
        EmbeddingConfig { dim: 1, ..EmbeddingConfig::default() },
        EmbeddingConfig { window: 0, ..EmbeddingConfig::default() },
        EmbeddingConfig { negatives: 0, ..EmbeddingConfig::default() },
    ] {
        assert!(matches!(train_skipgram(&corpus, &cfg), Err(Error::Config(_))));
    }
}

#[test]
fn document_vectors() {
    let cfg = EmbeddingConfig {
        dim: 2,
        min_count: 1,
        ..EmbeddingConfig::default()
    };
    let vocab = build_vocab(&docs(&["a b"]), 1).unwrap();
    let mut m = EmbeddingMatrix::initialize(vocab, &cfg);
    m.input_vectors = vec![1.0, 2.0, 3.0, -4.0];
    let one = embed_document(&["a".to_string()], &m);
    assert_eq!(one.values, [1.0, 2.0]);
    assert!(!one.oov);
    let two = embed_document(&["a".to_string(), "b".to_string(), "zzz".to_string()], &m);
    assert_eq!(two.values, [2.0, -1.0]);
    let none = embed_document(&["zzz".to_string()], &m);
    assert_eq!(none.values, [0.0, 0.0]);
    assert!(none.oov);
    let weighted = embed_document_weighted(&["a".to_string(), "b".to_string()], &m, |t| if t == "a" { 3.0 } else { 1.0 });
    assert_eq!(weighted.values, [1.5, 0.5]);
}

#[test]
fn model_file_roundtrip_and_version_check() {
    let (corpus, _, _) = planted_corpus(5);
    let cfg = EmbeddingConfig {
        epochs: 1,
        ..planted_config()
    };
    let m = train_skipgram(&corpus, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.model");
    m.save(&path).unwrap();
    let back = EmbeddingMatrix::load(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.digest(), m.digest());

    let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
    v["format_version"] = 99.into();
    assert!(matches!(
        EmbeddingMatrix::from_json(&v.to_string()),
        Err(Error::FormatVersion { found: 99, .. })
    ));
}
