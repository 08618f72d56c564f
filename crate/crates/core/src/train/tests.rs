use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::attention::AttentionKind;
use crate::graph::SplitMasks;
use crate::model::build_network;

#[test]
fn glorot_limits_and_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = glorot_init(&[3, 3], &mut rng);
    assert!(t.data().iter().all(|v| v.abs() <= 1.0));

    let n = 1_000_000;
    let big = glorot_init(&[n], &mut rng);
    let limit = (6.0 / (n + 1) as f64).sqrt();
    let var = big.data().iter().map(|x| x * x).sum::<f64>() / n as f64;
    assert!((var / (limit * limit / 3.0) - 1.0).abs() <= 0.02);

    let a = glorot_init(&[4, 5], &mut ChaCha8Rng::seed_from_u64(9));
    let b = glorot_init(&[4, 5], &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(a, b);
}

#[test]
fn adam_examples() {
    let mut p = Tensor::vector(vec![0.3, -0.2]);
    let mut st = AdamState::new(&[2]);
    adam_step(&mut [&mut p], &[vec![0.0, 0.0]], &mut st, 0.01).unwrap();
    assert_eq!(p.data(), &[0.3, -0.2]);
    assert_eq!(st.t, 1);

    let mut p = Tensor::vector(vec![1.0]);
    let mut st = AdamState::new(&[1]);
    adam_step(&mut [&mut p], &[vec![1.0]], &mut st, 0.01).unwrap();
    assert!((p.data()[0] - (1.0 - 0.01 / (1.0 + 1e-8))).abs() < 1e-15);

    // descent on θ²
    let mut p = Tensor::vector(vec![1.0]);
    let mut st = AdamState::new(&[1]);
    let mut prev = 1.0;
    for _ in 0..50 {
        let g = 2.0 * p.data()[0];
        adam_step(&mut [&mut p], &[vec![g]], &mut st, 0.01).unwrap();
        let f = p.data()[0].powi(2);
        assert!(f < prev);
        prev = f;
    }
    assert_eq!(st.t, 50);
    assert!(adam_step(&mut [&mut p], &[vec![1.0, 2.0]], &mut st, 0.01).is_err());
}

#[test]
fn auc_examples_and_pairwise_oracle() {
    assert_eq!(
        auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
        1.0
    );
    assert_eq!(
        auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(),
        0.5
    );
    assert!(auc(&[0.1, 0.2], &[true, true]).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        // coarse scores force ties
        let scores: Vec<f64> = (0..200)
            .map(|_| (rng.random_range(0..30) as f64) / 10.0)
            .collect();
        let labels: Vec<bool> = (0..200).map(|_| rng.random()).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..200 {
            for j in 0..200 {
                if labels[i] && !labels[j] {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        assert!((auc(&scores, &labels).unwrap() - num / den).abs() <= 1e-12);
    }
    let scores: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<bool> = (0..50).map(|_| rng.random()).collect();
    let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
    assert!((auc(&scores, &labels).unwrap() + auc(&neg, &labels).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn accuracy_and_micro_f1() {
    let logits = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 1.0]).unwrap();
    let labels = Labels::single(vec![0, 1, 1]);
    assert!((accuracy(&logits, &labels, &[0, 1, 2]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!(accuracy(&logits, &labels, &[]).is_err());

    let probs = Tensor::matrix(2, 3, vec![0.9, 0.2, 0.6, 0.1, 0.7, 0.4]).unwrap();
    let labels = Labels::multi(vec![vec![0, 1], vec![1]], 3);
    // tp = 2, fp = 1, fn = 1
    assert!((micro_f1(&probs, &labels, &[0, 1], 0.5).unwrap() - 4.0 / 6.0).abs() < 1e-15);
}

fn toy_graph() -> Graph {
    // two well separated classes, each a path, joined by one edge
    let n = 40;
    let mut edges = Vec::new();
    for i in 0..n - 1 {
        if i != 19 {
            edges.push((i, i + 1));
        }
    }
    edges.push((19, 20));
    let classes: Vec<usize> = (0..n).map(|i| usize::from(i >= 20)).collect();
    let feats: Vec<f64> = (0..n)
        .flat_map(|i| {
            let s = if i >= 20 { 1.0 } else { -1.0 };
            [
                s + 0.1 * ((i * 7 % 5) as f64 - 2.0),
                0.3 * ((i * 3 % 4) as f64 - 1.5),
            ]
        })
        .collect();
    let train: Vec<usize> = vec![0, 5, 10, 25, 30, 35];
    let val: Vec<usize> = vec![2, 7, 12, 22, 27, 32];
    let test: Vec<usize> = vec![3, 8, 13, 23, 28, 33];
    Graph::from_edge_list(
        n,
        &edges,
        Tensor::matrix(n, 2, feats).unwrap(),
        Labels::single(classes),
    )
    .unwrap()
    .with_split(SplitMasks::from_indices(n, &train, &val, &test).unwrap())
    .unwrap()
}

#[test]
fn training_is_deterministic_and_learns() {
    let g = toy_graph();
    let mut net = build_network(AttentionKind::Mx, 2, 4, 2, 2, Task::SingleLabel).unwrap();
    net.initialize(&mut ChaCha8Rng::seed_from_u64(0));
    let cfg = TrainConfig {
        max_epochs: 60,
        patience: 60,
        dropout: 0.0,
        ..TrainConfig::default()
    };
    let (a, ha) = train(&net, &g, &cfg).unwrap();
    let (b, hb) = train(&net, &g, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        serde_json::to_string(&ha).unwrap(),
        serde_json::to_string(&hb).unwrap()
    );
    let (_, acc) = evaluate(&a, &g, &g.split().test_indices()).unwrap();
    assert!(acc >= 5.0 / 6.0, "test accuracy {acc}");

    // node-loss-only run: no resampled edge term
    let plain = TrainConfig {
        lambda_e: 0.0,
        max_epochs: 11,
        ..cfg.clone()
    };
    let (_, hp) = train(&net, &g, &plain).unwrap();
    let losses: Vec<f64> = hp.epochs.iter().map(|e| e.train_loss).collect();
    let down = losses.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(down >= 8, "{losses:?}");

    // best snapshot has the highest val accuracy seen
    let max_acc = ha.epochs.iter().map(|e| e.val_acc).fold(0.0, f64::max);
    assert_eq!(ha.best_val_acc, max_acc);
}

#[test]
fn frozen_model_stops_after_patience() {
    let g = toy_graph();
    let mut net = build_network(AttentionKind::Go, 2, 4, 2, 2, Task::SingleLabel).unwrap();
    net.initialize(&mut ChaCha8Rng::seed_from_u64(0));
    let cfg = TrainConfig {
        lr: 1e-300,
        patience: 1,
        ..TrainConfig::default()
    };
    let (_, h) = train(&net, &g, &cfg).unwrap();
    assert_eq!(h.epochs.len(), 2);
    assert_eq!(h.best_epoch, 1);
}

#[test]
fn config_validation() {
    let ok = TrainConfig::default();
    assert!(ok.validate().is_ok());
    for bad in [
        TrainConfig {
            lr: 0.0,
            ..ok.clone()
        },
        TrainConfig {
            p_e: 0.0,
            ..ok.clone()
        },
        TrainConfig {
            p_n: -1.0,
            ..ok.clone()
        },
        TrainConfig {
            patience: 0,
            ..ok.clone()
        },
        TrainConfig {
            dropout: 1.0,
            ..ok.clone()
        },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
