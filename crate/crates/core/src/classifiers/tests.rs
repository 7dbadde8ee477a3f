use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tree::{Node, Tree};
use super::*;
use crate::tfidf::SparseVector;

fn names(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("c{c}")).collect()
}

/// `per_class` points around each of `k` centers spaced far apart.
fn blobs(k: usize, per_class: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..k {
        for _ in 0..per_class {
            let row = (0..d)
                .map(|j| {
                    let center = if j == c % d { 6.0 } else { 0.0 } * if c >= d { -1.0 } else { 1.0 };
                    center + noise.sample(&mut rng)
                })
                .collect();
            rows.push(row);
            labels.push(c);
        }
    }
    Dataset::new(FeatureMatrix::dense(rows).unwrap(), labels, names(k)).unwrap()
}

fn xor() -> Dataset {
    let pts = [([0.0, 0.0], 0), ([0.0, 1.0], 1), ([1.0, 0.0], 1), ([1.0, 1.0], 0)];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..25 {
        for (p, l) in pts {
            rows.push(p.to_vec());
            labels.push(l);
        }
    }
    Dataset::new(FeatureMatrix::dense(rows).unwrap(), labels, names(2)).unwrap()
}

fn accuracy(m: &TrainedModel, d: &Dataset) -> f64 {
    let hits = (0..d.len())
        .filter(|&i| m.predict(d.features.row(i)).unwrap() == d.labels[i])
        .count();
    hits as f64 / d.len() as f64
}

fn small_spec(family: Family, seed: u64) -> ModelSpec {
    let mut s = ModelSpec::new(family, seed);
    match &mut s.hyper {
        Hyperparameters::RandomForest(p) => p.n_trees = 25,
        Hyperparameters::Gbt(p) => p.n_rounds = 30,
        Hyperparameters::BaggingSvm(p) => p.n_bags = 5,
        Hyperparameters::Logreg(_) => {}
    }
    s
}

#[test]
fn separable_blobs_all_families() {
    let data = blobs(2, 100, 2, 1);
    for family in Family::ALL {
        let m = train(&data, &ModelSpec::new(family, 7)).unwrap();
        let acc = accuracy(&m, &data);
        assert!(acc >= 0.99, "{family}: {acc}");
        let inside = FeatureMatrix::dense(vec![vec![6.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(m.predict(inside.row(0)).unwrap(), 0, "{family}");
    }
}

#[test]
fn multiclass_blobs_all_families() {
    let data = blobs(4, 40, 3, 2);
    for family in Family::ALL {
        let m = train(&data, &small_spec(family, 3)).unwrap();
        assert!(accuracy(&m, &data) >= 0.95, "{family}");
        let s = m.predict_scores(data.features.row(0)).unwrap();
        assert_eq!(s.len(), 4);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{family}");
    }
}

#[test]
fn xor_forest_solves_logreg_cannot() {
    let data = xor();
    let mut spec = ModelSpec::new(Family::RandomForest, 5);
    if let Hyperparameters::RandomForest(p) = &mut spec.hyper {
        p.max_depth = Some(2);
    }
    let forest = train(&data, &spec).unwrap();
    assert_eq!(accuracy(&forest, &data), 1.0);
    let lr = train(&data, &ModelSpec::new(Family::Logreg, 5)).unwrap();
    assert!(accuracy(&lr, &data) <= 0.6);
}

#[test]
fn single_class_gives_constant_model() {
    let data = Dataset::new(
        FeatureMatrix::dense(vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap(),
        vec![2, 2, 2],
        names(3),
    )
    .unwrap();
    for family in Family::ALL {
        let m = train(&data, &ModelSpec::new(family, 0)).unwrap();
        assert_eq!(m.parameters, Parameters::Constant { class: 2 });
        assert_eq!(accuracy(&m, &data), 1.0);
    }
}

#[test]
fn invalid_data_rejected() {
    let bad = Dataset {
        features: FeatureMatrix::dense(vec![vec![f64::NAN], vec![1.0]]).unwrap(),
        labels: vec![0, 1],
        label_names: names(2),
    };
    assert!(matches!(train(&bad, &ModelSpec::new(Family::Logreg, 0)), Err(Error::Validation(_))));
    let out_of_range = Dataset::new(FeatureMatrix::dense(vec![vec![0.0]]).unwrap(), vec![3], names(2));
    assert!(matches!(out_of_range, Err(Error::Validation(_))));
    let m = train(&blobs(2, 10, 2, 0), &ModelSpec::new(Family::Logreg, 0)).unwrap();
    let wrong_dim = FeatureMatrix::dense(vec![vec![1.0, 2.0, 3.0]]).unwrap();
    assert!(matches!(m.predict_scores(wrong_dim.row(0)), Err(Error::Validation(_))));
    let mut spec = ModelSpec::new(Family::Gbt, 0);
    if let Hyperparameters::Gbt(p) = &mut spec.hyper {
        p.shrinkage = 0.0;
    }
    assert!(matches!(train(&blobs(2, 10, 2, 0), &spec), Err(Error::Config(_))));
}

#[test]
fn score_contracts() {
    let zero = LogregModel::zeros(3, 2);
    let x = FeatureMatrix::dense(vec![vec![0.4, -1.0]]).unwrap();
    assert_eq!(zero.scores(x.row(0)), vec![1.0 / 3.0; 3]);

    let leaf = |c: f64| Tree {
        nodes: vec![Node::Leaf { value: c }],
    };
    let forest = ForestModel {
        trees: vec![leaf(0.0), leaf(0.0), leaf(1.0)],
    };
    assert_eq!(forest.scores(x.row(0), 2), vec![2.0 / 3.0, 1.0 / 3.0]);
    assert_eq!(forest.vote_counts(x.row(0), 2), vec![2, 1]);

    let svm = SvmModel {
        heads: vec![vec![svm::LinearSvm {
            weights: vec![0.0, 0.0],
            bias: 0.0,
        }]],
    };
    assert_eq!(svm.head_scores(x.row(0)), vec![0.5]);

    assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
    assert_eq!(argmax(&[0.5, 0.5]), 0);
}

#[test]
fn logreg_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let x = FeatureMatrix::dense(rows).unwrap();
        let y: Vec<usize> = (0..20).map(|_| rng.random_range(0..3)).collect();
        let mut m = LogregModel::zeros(3, 5);
        m.weights.iter_mut().flatten().for_each(|w| *w = rng.random_range(-1.0..1.0));
        m.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let l2 = 0.1;
        let (_, g) = logreg::loss_and_gradient(&m, &x, &y, l2);
        let h = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        for c in 0..3 {
            for j in 0..5 {
                let (mut p, mut q) = (m.clone(), m.clone());
                p.weights[c][j] += h;
                q.weights[c][j] -= h;
                let num = (logreg::loss(&p, &x, &y, l2) - logreg::loss(&q, &x, &y, l2)) / (2.0 * h);
                assert!(rel(g.weights[c][j], num) < 1e-5);
            }
            let (mut p, mut q) = (m.clone(), m.clone());
            p.bias[c] += h;
            q.bias[c] -= h;
            let num = (logreg::loss(&p, &x, &y, l2) - logreg::loss(&q, &x, &y, l2)) / (2.0 * h);
            assert!(rel(g.bias[c], num) < 1e-5);
        }
    }
}

#[test]
fn logreg_loss_never_increases() {
    let data = blobs(3, 30, 2, 9);
    let mut spec = ModelSpec::new(Family::Logreg, 0);
    if let Hyperparameters::Logreg(p) = &mut spec.hyper {
        p.learning_rate = 5.0;
        p.max_iter = 200;
    }
    let (_, history) = train_with_history(&data, &spec).unwrap();
    assert!(history.len() > 2);
    assert!(history.windows(2).all(|w| w[1] <= w[0]), "{history:?}");
}

#[test]
fn gbt_loss_never_increases() {
    for k in [2, 3] {
        let data = blobs(k, 30, 2, 10 + k as u64);
        let (_, history) = train_with_history(&data, &small_spec(Family::Gbt, 0)).unwrap();
        assert_eq!(history.len(), 31);
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0], "{history:?}");
        }
        assert!(history.last() < history.first());
    }
}

#[test]
fn deterministic_and_seed_sensitive() {
    let data = blobs(3, 20, 2, 3);
    for family in [Family::RandomForest, Family::BaggingSvm] {
        let a = train(&data, &small_spec(family, 1)).unwrap();
        let b = train(&data, &small_spec(family, 1)).unwrap();
        assert_eq!(a, b, "{family}");
        let c = train(&data, &small_spec(family, 2)).unwrap();
        assert_ne!(a.parameters, c.parameters, "{family}");
    }
}

#[test]
fn serialization_roundtrip_is_bit_exact() {
    let data = blobs(3, 20, 2, 6);
    let dir = tempfile::tempdir().unwrap();
    for family in Family::ALL {
        let m = train(&data, &small_spec(family, 4)).unwrap();
        let path = dir.path().join(format!("{family}.json"));
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back, m);
        for row in data.features.rows() {
            let (a, b) = (m.predict_scores(row).unwrap(), back.predict_scores(row).unwrap());
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
    let mut v: serde_json::Value = serde_json::from_str(&train(&data, &small_spec(Family::Logreg, 0)).unwrap().to_json()).unwrap();
    v["format_version"] = 7.into();
    assert!(matches!(TrainedModel::from_json(&v.to_string()), Err(Error::FormatVersion { found: 7, .. })));
}

#[test]
fn predict_is_argmax_of_scores() {
    let data = blobs(3, 20, 3, 12);
    let probe = blobs(3, 10, 3, 13);
    for family in Family::ALL {
        let m = train(&data, &small_spec(family, 8)).unwrap();
        for row in probe.features.rows() {
            assert_eq!(m.predict(row).unwrap(), argmax(&m.predict_scores(row).unwrap()));
        }
    }
}

#[test]
fn sparse_features_train() {
    let dense = blobs(2, 40, 4, 21);
    let rows: Vec<SparseVector> = dense
        .features
        .rows()
        .map(|r| {
            let (indices, values) = r.nonzeros().filter(|(_, v)| *v > 0.5).map(|(j, v)| (j as u32, v)).unzip();
            SparseVector { dim: 4, indices, values }
        })
        .collect();
    let data = Dataset::new(FeatureMatrix::sparse(4, rows).unwrap(), dense.labels.clone(), names(2)).unwrap();
    for family in Family::ALL {
        let m = train(&data, &small_spec(family, 2)).unwrap();
        assert!(accuracy(&m, &data) >= 0.9, "{family}");
    }
}

#[test]
fn spec_json_shape() {
    let s = ModelSpec::new(Family::BaggingSvm, 3);
    let v = serde_json::to_value(&s).unwrap();
    assert_eq!(v["family"], "bagging_svm");
    assert_eq!(v["params"]["n_bags"], 15);
    assert_eq!(v["seed"], 3);
    let back: ModelSpec = serde_json::from_value(v).unwrap();
    assert_eq!(back, s);
    assert_eq!("gbt".parse::<Family>().unwrap(), Family::Gbt);
    assert!("xgboost".parse::<Family>().is_err());
}
