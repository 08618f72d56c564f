//! Random partition graphs with controlled degree and homophily, Gaussian
//! class-conditional features, and fixed semi-supervised splits.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{Graph, Labels, SplitMasks};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Nodes per class.
    pub n: usize,
    /// Number of classes.
    pub c: usize,
    pub d_avg: f64,
    pub h_target: f64,
    pub feature_dim: usize,
    /// Standard deviation of the class centers; noise has unit variance.
    pub center_spread: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 500,
            c: 10,
            d_avg: 20.0,
            h_target: 0.5,
            feature_dim: 4,
            center_spread: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn num_nodes(&self) -> usize {
        self.n * self.c
    }

    /// `δ = d_avg / n`.
    pub fn delta(&self) -> f64 {
        self.d_avg / self.n as f64
    }
}

/// `p_in = h·δ`, `p_out = (δ − p_in)/(c − 1)`.
pub fn solve_probs(spec: &SyntheticSpec) -> Result<(f64, f64)> {
    if spec.n == 0 || spec.c < 2 {
        return Err(Error::Config(format!(
            "need n >= 1 and c >= 2 (got n = {}, c = {})",
            spec.n, spec.c
        )));
    }
    let delta = spec.delta();
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Config(format!(
            "degree ratio d_avg/n = {delta} not in [0, 1]"
        )));
    }
    if !(0.0..=1.0).contains(&spec.h_target) {
        return Err(Error::Config(format!(
            "homophily {} not in [0, 1]",
            spec.h_target
        )));
    }
    let p_in = spec.h_target * delta;
    let p_out = (delta - p_in) / (spec.c - 1) as f64;
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err(Error::Config(format!(
            "infeasible probabilities p_in = {p_in}, p_out = {p_out}"
        )));
    }
    Ok((p_in, p_out))
}

/// Indices in `0..m` kept independently with probability `p`, by geometric
/// skips between successes.
fn bernoulli_indices<R: Rng + ?Sized>(m: u64, p: f64, rng: &mut R) -> Vec<u64> {
    if p <= 0.0 || m == 0 {
        return Vec::new();
    }
    if p >= 1.0 {
        return (0..m).collect();
    }
    let log_q = (-p).ln_1p();
    let mut out = Vec::with_capacity((m as f64 * p * 1.1) as usize + 8);
    let mut k: u64 = 0;
    loop {
        // 1 − U lies in (0, 1], so the log is finite
        let u: f64 = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / log_q).floor();
        if !skip.is_finite() || skip >= (m - k) as f64 {
            break;
        }
        k += skip as u64;
        out.push(k);
        k += 1;
        if k >= m {
            break;
        }
    }
    out
}

/// Class blocks of `n` consecutive nodes; same-class pairs link with `p_in`,
/// cross-class pairs with `p_out`. Features are an empty `N × 0` matrix.
pub fn random_partition_graph<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<Graph> {
    let (p_in, p_out) = solve_probs(spec)?;
    let (n, c) = (spec.n, spec.c);
    let mut edges = Vec::new();
    for a in 0..c {
        // within block a: row-major over i < j
        let base = a * n;
        let m = (n * (n - 1) / 2) as u64;
        let mut row = 0usize;
        let mut row_start = 0u64;
        for k in bernoulli_indices(m, p_in, rng) {
            while k >= row_start + (n - 1 - row) as u64 {
                row_start += (n - 1 - row) as u64;
                row += 1;
            }
            let j = row + 1 + (k - row_start) as usize;
            edges.push((base + row, base + j));
        }
        for b in a + 1..c {
            for k in bernoulli_indices((n * n) as u64, p_out, rng) {
                let (i, j) = ((k / n as u64) as usize, (k % n as u64) as usize);
                edges.push((a * n + i, b * n + j));
            }
        }
    }
    let classes: Vec<usize> = (0..n * c).map(|v| v / n).collect();
    Graph::from_edge_list(
        n * c,
        &edges,
        Tensor::zeros(&[n * c, 0]),
        Labels::Single {
            classes,
            num_classes: c,
        },
    )
}

/// Column-wise standard score with population standard deviation.
fn standardize(x: &mut [f64], rows: usize, cols: usize) -> bool {
    for c in 0..cols {
        let mean = (0..rows).map(|r| x[r * cols + c]).sum::<f64>() / rows as f64;
        let var = (0..rows)
            .map(|r| (x[r * cols + c] - mean).powi(2))
            .sum::<f64>()
            / rows as f64;
        if var.is_nan() || var <= 0.0 {
            return false;
        }
        let sd = var.sqrt();
        for r in 0..rows {
            x[r * cols + c] = (x[r * cols + c] - mean) / sd;
        }
    }
    true
}

/// Class center `~ N(0, spread²·I)` plus unit Gaussian noise, then per-column
/// standardization.
pub fn gaussian_features<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    labels: &[usize],
    rng: &mut R,
) -> Result<Tensor> {
    let d = spec.feature_dim;
    if d == 0 {
        return Err(Error::Config("feature_dim must be at least 1".into()));
    }
    if !(spec.center_spread >= 0.0 && spec.center_spread.is_finite()) {
        return Err(Error::Config(format!(
            "center_spread {} must be >= 0",
            spec.center_spread
        )));
    }
    if labels.len() < 2 {
        return Err(Error::Config(
            "need at least two nodes to standardize features".into(),
        ));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut x = draw_features(spec, classes, labels, rng);
    for attempt in 1..=8u64 {
        if standardize(&mut x, labels.len(), d) {
            return Tensor::matrix(labels.len(), d, x);
        }
        log::warn!("degenerate feature column; regenerating (attempt {attempt})");
        let mut local = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x9e37_79b9 * attempt));
        x = draw_features(spec, classes, labels, &mut local);
    }
    Err(Error::Structural(
        "feature generation kept producing constant columns".into(),
    ))
}

fn draw_features<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    classes: usize,
    labels: &[usize],
    rng: &mut R,
) -> Vec<f64> {
    let d = spec.feature_dim;
    let centers: Vec<f64> = (0..classes * d)
        .map(|_| spec.center_spread * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect::<Vec<f64>>();
    let mut x = Vec::with_capacity(labels.len() * d);
    for &y in labels {
        for k in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            x.push(centers[y * d + k] + z);
        }
    }
    x
}

/// `train_per_class` stratified training nodes, then `val` and `test` nodes
/// drawn uniformly from the rest.
pub fn make_splits<R: Rng + ?Sized>(
    labels: &[usize],
    train_per_class: usize,
    val: usize,
    test: usize,
    rng: &mut R,
) -> Result<SplitMasks> {
    let n = labels.len();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut train = Vec::with_capacity(train_per_class * classes);
    let mut taken = vec![false; n];
    for c in 0..classes {
        let mut members: Vec<usize> = (0..n).filter(|&v| labels[v] == c).collect();
        if members.len() < train_per_class {
            return Err(Error::Split(format!(
                "class {c} has {} nodes, fewer than {train_per_class} training nodes",
                members.len()
            )));
        }
        members.shuffle(rng);
        for &v in &members[..train_per_class] {
            train.push(v);
            taken[v] = true;
        }
    }
    let mut rest: Vec<usize> = (0..n).filter(|&v| !taken[v]).collect();
    if rest.len() < val + test {
        return Err(Error::Split(format!(
            "{} nodes remain after training selection, need {val} + {test}",
            rest.len()
        )));
    }
    rest.shuffle(rng);
    let (v, rest) = rest.split_at(val);
    SplitMasks::from_indices(n, &train, v, &rest[..test])
}

/// Sizes of the semi-supervised split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSizes {
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train_per_class: 20,
            val: 500,
            test: 1000,
        }
    }
}

/// Graph, features and the 20-per-class / 500 / 1000 split from `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<Graph> {
    generate_with_split(spec, 20, 500, 1000)
}

pub fn generate_with_split(
    spec: &SyntheticSpec,
    train_per_class: usize,
    val: usize,
    test: usize,
) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = random_partition_graph(spec, &mut rng)?;
    let classes = g.labels().single_classes()?.to_vec();
    let x = gaussian_features(spec, &classes, &mut rng)?;
    let split = make_splits(&classes, train_per_class, val, test, &mut rng)?;
    g.with_features(x)?.with_split(split)
}
