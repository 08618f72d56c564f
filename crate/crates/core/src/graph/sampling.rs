use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeTag {
    Positive,
    Negative,
}

/// Undirected node pairs in canonical `i < j` form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSet {
    pub pairs: Vec<(usize, usize)>,
    pub tag: EdgeTag,
}

impl EdgeSet {
    pub fn new(pairs: Vec<(usize, usize)>, tag: EdgeTag) -> Self {
        Self { pairs, tag }
    }

    pub fn positive_from(g: &Graph) -> Self {
        Self::new(g.to_edge_list(), EdgeTag::Positive)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// True when pairs are canonical, loop-free and duplicate-free.
    pub fn is_canonical(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.pairs.len());
        self.pairs
            .iter()
            .all(|&(i, j)| i < j && seen.insert((i, j)))
    }
}

fn canonical(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Draws `count` distinct canonical non-edges of `g`, avoiding `exclude`.
fn sample_non_edges<R: Rng + ?Sized>(
    g: &Graph,
    count: usize,
    exclude: &HashSet<(usize, usize)>,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let n = g.num_nodes();
    let all_pairs = n * n.saturating_sub(1) / 2;
    let available = all_pairs - g.num_edges() - exclude.len();
    if count > available {
        return Err(Error::Sampling(format!(
            "requested {count} negative pairs but only {available} non-edges exist"
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    if count <= available / 2 {
        let mut chosen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j {
                continue;
            }
            let pair = canonical(i, j);
            if g.has_edge(pair.0, pair.1) || exclude.contains(&pair) || !chosen.insert(pair) {
                continue;
            }
            out.push(pair);
        }
        Ok(out)
    } else {
        // dense complement: enumerate, then partial shuffle
        let mut pool = Vec::with_capacity(available);
        for i in 0..n {
            for j in i + 1..n {
                if !g.has_edge(i, j) && !exclude.contains(&(i, j)) {
                    pool.push((i, j));
                }
            }
        }
        let (picked, _) = pool.partial_shuffle(rng, count);
        Ok(picked.to_vec())
    }
}

/// Uniformly samples `round(p_n · |E|)` distinct non-edges.
pub fn negative_sample<R: Rng + ?Sized>(g: &Graph, p_n: f64, rng: &mut R) -> Result<EdgeSet> {
    if !(p_n >= 0.0 && p_n.is_finite()) {
        return Err(Error::Config(format!(
            "negative sampling ratio {p_n} must be >= 0"
        )));
    }
    let count = (p_n * g.num_edges() as f64).round() as usize;
    let pairs = sample_non_edges(g, count, &HashSet::new(), rng)?;
    Ok(EdgeSet::new(pairs, EdgeTag::Negative))
}

/// Keeps each pair of `pos` and `neg` independently with probability `p_e`.
pub fn sample_supervision_edges<R: Rng + ?Sized>(
    pos: &EdgeSet,
    neg: &EdgeSet,
    p_e: f64,
    rng: &mut R,
) -> Result<(EdgeSet, EdgeSet)> {
    if !(p_e > 0.0 && p_e <= 1.0) {
        return Err(Error::Config(format!(
            "edge sampling probability {p_e} not in (0, 1]"
        )));
    }
    if p_e == 1.0 {
        return Ok((pos.clone(), neg.clone()));
    }
    let mut keep = |s: &EdgeSet| EdgeSet {
        pairs: s
            .pairs
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() < p_e)
            .collect(),
        tag: s.tag,
    };
    let p = keep(pos);
    let n = keep(neg);
    Ok((p, n))
}

/// Held-out edge split for link prediction.
#[derive(Debug, Clone)]
pub struct LinkSplit {
    /// Original graph minus the validation and test edges.
    pub train_graph: Graph,
    pub val: EdgeSet,
    pub test: EdgeSet,
    pub val_negatives: EdgeSet,
    /// Fixed negatives, drawn once, the same size as `test`.
    pub test_negatives: EdgeSet,
}

pub const LINK_VAL_FRACTION: f64 = 0.05;
pub const LINK_TEST_FRACTION: f64 = 0.10;

/// Holds out 5% of edges for validation and 10% for testing, with
/// equal-sized negative sets drawn from the non-edges of the full graph.
pub fn link_prediction_split<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Result<LinkSplit> {
    let mut edges = g.to_edge_list();
    let m = edges.len();
    let n_val = (LINK_VAL_FRACTION * m as f64).round() as usize;
    let n_test = (LINK_TEST_FRACTION * m as f64).round() as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= m {
        return Err(Error::Split(format!(
            "{m} edges are too few for a 5%/10% validation/test split"
        )));
    }
    edges.shuffle(rng);
    let test: Vec<_> = edges[..n_test].to_vec();
    let val: Vec<_> = edges[n_test..n_test + n_val].to_vec();
    let train: Vec<_> = edges[n_test + n_val..].to_vec();
    let negatives = sample_non_edges(g, n_test + n_val, &HashSet::new(), rng)?;
    let train_graph = g.with_edges(&train)?;
    let isolated = (0..g.num_nodes())
        .filter(|&i| g.degree(i) > 0 && train_graph.degree(i) == 0)
        .count();
    if isolated > 0 {
        log::warn!("link split isolated {isolated} previously connected nodes");
    }
    Ok(LinkSplit {
        train_graph,
        val: EdgeSet::new(val, EdgeTag::Positive),
        test: EdgeSet::new(test, EdgeTag::Positive),
        val_negatives: EdgeSet::new(negatives[n_test..].to_vec(), EdgeTag::Negative),
        test_negatives: EdgeSet::new(negatives[..n_test].to_vec(), EdgeTag::Negative),
    })
}
