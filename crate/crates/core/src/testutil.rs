use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::graph::{Graph, Labels};

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Erdős–Rényi graph with random features and `classes` random labels.
pub fn random_graph(
    n: usize,
    p: f64,
    feat_dim: usize,
    classes: usize,
    rng: &mut ChaCha8Rng,
) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let features = random_tensor(&[n, feat_dim], rng);
    Graph::from_edge_list(
        n,
        &edges,
        features,
        Labels::Single {
            classes: labels,
            num_classes: classes,
        },
    )
    .unwrap()
}
