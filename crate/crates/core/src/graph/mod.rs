//! Undirected graphs stored as sorted, symmetric CSR adjacency, plus the
//! structural statistics used throughout the experiments.

mod sampling;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use sampling::{
    link_prediction_split, negative_sample, sample_supervision_edges, EdgeSet, EdgeTag, LinkSplit,
};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Node labels: one class per node, or a set of classes per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Single {
        classes: Vec<usize>,
        num_classes: usize,
    },
    Multi {
        /// Sorted, duplicate-free class ids per node.
        sets: Vec<Vec<usize>>,
        num_classes: usize,
    },
}

impl Labels {
    /// Single-label table; the class count is `max + 1`.
    pub fn single(classes: Vec<usize>) -> Self {
        let num_classes = classes.iter().max().map_or(0, |m| m + 1);
        Labels::Single {
            classes,
            num_classes,
        }
    }

    pub fn multi(mut sets: Vec<Vec<usize>>, num_classes: usize) -> Self {
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        Labels::Multi { sets, num_classes }
    }

    pub fn len(&self) -> usize {
        match self {
            Labels::Single { classes, .. } => classes.len(),
            Labels::Multi { sets, .. } => sets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Labels::Single { num_classes, .. } | Labels::Multi { num_classes, .. } => *num_classes,
        }
    }

    pub fn is_multi(&self) -> bool {
        matches!(self, Labels::Multi { .. })
    }

    pub fn single_classes(&self) -> Result<&[usize]> {
        match self {
            Labels::Single { classes, .. } => Ok(classes),
            Labels::Multi { .. } => Err(Error::LabelKind(
                "operation needs single-label nodes".into(),
            )),
        }
    }

    pub fn multi_sets(&self) -> Result<&[Vec<usize>]> {
        match self {
            Labels::Multi { sets, .. } => Ok(sets),
            Labels::Single { .. } => {
                Err(Error::LabelKind("operation needs multi-label nodes".into()))
            }
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::Structural(format!(
                "{} label rows for {n} nodes",
                self.len()
            )));
        }
        let c = self.num_classes();
        let bad = match self {
            Labels::Single { classes, .. } => classes.iter().find(|&&l| l >= c).copied(),
            Labels::Multi { sets, .. } => sets.iter().flatten().find(|&&l| l >= c).copied(),
        };
        if let Some(l) = bad {
            return Err(Error::Structural(format!("label {l} >= class count {c}")));
        }
        Ok(())
    }
}

/// Disjoint train/validation/test node masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl SplitMasks {
    pub fn empty(n: usize) -> Self {
        Self {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    pub fn from_indices(n: usize, train: &[usize], val: &[usize], test: &[usize]) -> Result<Self> {
        let mut s = Self::empty(n);
        for (mask, idx) in [
            (&mut s.train, train),
            (&mut s.val, val),
            (&mut s.test, test),
        ] {
            for &i in idx {
                if i >= n {
                    return Err(Error::Index {
                        op: "SplitMasks::from_indices",
                        index: i,
                        bound: n,
                    });
                }
                mask[i] = true;
            }
        }
        s.validate(n)?;
        Ok(s)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.len() != n || self.val.len() != n || self.test.len() != n {
            return Err(Error::Structural(
                "split mask length differs from node count".into(),
            ));
        }
        for i in 0..n {
            let hits = self.train[i] as u8 + self.val[i] as u8 + self.test[i] as u8;
            if hits > 1 {
                return Err(Error::Split(format!("node {i} is in more than one split")));
            }
        }
        Ok(())
    }

    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        Self::indices(&self.train)
    }

    pub fn val_indices(&self) -> Vec<usize> {
        Self::indices(&self.val)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        Self::indices(&self.test)
    }
}

/// Directed edge arrays for message passing: edge `e` carries
/// `neighbor[e] → center[e]`, grouped by center in ascending order.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    pub center: Arc<[usize]>,
    pub neighbor: Arc<[usize]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    num_nodes: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    features: Tensor,
    labels: Labels,
    split: SplitMasks,
}

impl Graph {
    /// Builds a deduplicated, symmetrized, sorted CSR graph. Self-pairs in
    /// `edges` are kept as self-loops.
    pub fn from_edge_list(
        n: usize,
        edges: &[(usize, usize)],
        features: Tensor,
        labels: Labels,
    ) -> Result<Self> {
        if features.rows() != n || (n > 0 && features.shape().len() != 2) {
            return Err(Error::Structural(format!(
                "feature matrix has {} rows for {n} nodes",
                features.rows()
            )));
        }
        labels.validate(n)?;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(i, j) in edges {
            for v in [i, j] {
                if v >= n {
                    return Err(Error::Index {
                        op: "Graph::from_edge_list",
                        index: v,
                        bound: n,
                    });
                }
            }
            adj[i].push(j);
            if i != j {
                adj[j].push(i);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Ok(Self {
            num_nodes: n,
            offsets,
            targets,
            features,
            labels,
            split: SplitMasks::empty(n),
        })
    }

    pub fn with_split(mut self, split: SplitMasks) -> Result<Self> {
        split.validate(self.num_nodes)?;
        self.split = split;
        Ok(self)
    }

    pub fn with_features(mut self, features: Tensor) -> Result<Self> {
        if features.rows() != self.num_nodes {
            return Err(Error::Structural(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                self.num_nodes
            )));
        }
        self.features = features;
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn split(&self) -> &SplitMasks {
        &self.split
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    /// Adjacency list of `i`, sorted, possibly containing `i` itself.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    pub fn num_directed_edges(&self) -> usize {
        self.targets.len()
    }

    /// Number of undirected non-loop edges.
    pub fn num_edges(&self) -> usize {
        (0..self.num_nodes)
            .map(|i| self.neighbors(i).iter().filter(|&&j| j > i).count())
            .sum()
    }

    /// Degree of `i`, self-loop excluded.
    pub fn degree(&self, i: usize) -> usize {
        let nb = self.neighbors(i);
        nb.len() - usize::from(nb.binary_search(&i).is_ok())
    }

    /// Canonical `(i, j)` pairs with `i < j`, ascending.
    pub fn to_edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for i in 0..self.num_nodes {
            out.extend(
                self.neighbors(i)
                    .iter()
                    .filter(|&&j| j > i)
                    .map(|&j| (i, j)),
            );
        }
        out
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.num_nodes).all(|i| self.has_edge(i, i))
    }

    /// Copy of the graph with a self-loop on every node. Idempotent.
    pub fn add_self_loops(&self) -> Graph {
        let mut offsets = Vec::with_capacity(self.num_nodes + 1);
        let mut targets = Vec::with_capacity(self.targets.len() + self.num_nodes);
        offsets.push(0);
        for i in 0..self.num_nodes {
            let nb = self.neighbors(i);
            match nb.binary_search(&i) {
                Ok(_) => targets.extend_from_slice(nb),
                Err(pos) => {
                    targets.extend_from_slice(&nb[..pos]);
                    targets.push(i);
                    targets.extend_from_slice(&nb[pos..]);
                }
            }
            offsets.push(targets.len());
        }
        Graph {
            num_nodes: self.num_nodes,
            offsets,
            targets,
            features: self.features.clone(),
            labels: self.labels.clone(),
            split: self.split.clone(),
        }
    }

    /// Same nodes, features, labels and split, different edges.
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Graph> {
        Graph::from_edge_list(
            self.num_nodes,
            edges,
            self.features.clone(),
            self.labels.clone(),
        )?
        .with_split(self.split.clone())
    }

    pub fn edge_index(&self) -> EdgeIndex {
        let mut center = Vec::with_capacity(self.targets.len());
        for i in 0..self.num_nodes {
            center.extend(std::iter::repeat_n(
                i,
                self.offsets[i + 1] - self.offsets[i],
            ));
        }
        EdgeIndex {
            center: Arc::from(center),
            neighbor: Arc::from(self.targets.clone()),
        }
    }

    /// Population mean and standard deviation of node degree (self-loops excluded).
    pub fn degree_stats(&self) -> (f64, f64) {
        if self.num_nodes == 0 {
            return (0.0, 0.0);
        }
        let n = self.num_nodes as f64;
        let degrees: Vec<f64> = (0..self.num_nodes).map(|i| self.degree(i) as f64).collect();
        let mean = degrees.iter().sum::<f64>() / n;
        let var = degrees.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    /// Fraction of same-label neighbors per node; `None` for isolated nodes.
    pub fn per_node_homophily(&self) -> Result<Vec<Option<f64>>> {
        let classes = self.labels.single_classes()?;
        Ok((0..self.num_nodes)
            .map(|i| {
                let mut deg = 0usize;
                let mut same = 0usize;
                for &j in self.neighbors(i) {
                    if j == i {
                        continue;
                    }
                    deg += 1;
                    same += usize::from(classes[i] == classes[j]);
                }
                (deg > 0).then(|| same as f64 / deg as f64)
            })
            .collect())
    }

    /// Mean of [`Graph::per_node_homophily`] over non-isolated nodes.
    pub fn homophily(&self) -> Result<f64> {
        let per = self.per_node_homophily()?;
        let defined: Vec<f64> = per.into_iter().flatten().collect();
        if defined.is_empty() {
            return Err(Error::Evaluation(
                "homophily undefined: every node is isolated".into(),
            ));
        }
        Ok(defined.iter().sum::<f64>() / defined.len() as f64)
    }

    /// Shared-label ratio for multi-label graphs, normalised by the total
    /// class count and averaged over all nodes (isolated nodes contribute 0).
    pub fn multilabel_homophily(&self) -> Result<f64> {
        let sets = self.labels.multi_sets()?;
        let c = self.labels.num_classes() as f64;
        if self.num_nodes == 0 || c == 0.0 {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for i in 0..self.num_nodes {
            let deg = self.degree(i);
            if deg == 0 {
                continue;
            }
            let shared: usize = self
                .neighbors(i)
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| sorted_intersection(&sets[i], &sets[j]))
                .sum();
            total += shared as f64 / (deg as f64 * c);
        }
        Ok(total / self.num_nodes as f64)
    }
}

fn sorted_intersection(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn bare(n: usize, edges: &[(usize, usize)], labels: Vec<usize>) -> Graph {
        Graph::from_edge_list(n, edges, Tensor::zeros(&[n, 1]), Labels::single(labels)).unwrap()
    }

    fn random_graph(n: usize, p: f64, classes: usize, rng: &mut ChaCha8Rng) -> Graph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
        Graph::from_edge_list(
            n,
            &edges,
            Tensor::zeros(&[n, 1]),
            Labels::Single {
                classes: labels,
                num_classes: classes,
            },
        )
        .unwrap()
    }

    #[test]
    fn construction_symmetrizes_and_dedups() {
        let g = bare(2, &[(0, 1)], vec![0, 0]);
        assert_eq!(g.offsets(), &[0, 1, 2]);
        assert_eq!(g.targets(), &[1, 0]);
        let dup = bare(2, &[(0, 1), (1, 0), (0, 1)], vec![0, 0]);
        assert_eq!(dup, g);
        let empty = bare(3, &[], vec![0, 0, 0]);
        assert_eq!(empty.offsets(), &[0, 0, 0, 0]);
    }

    #[test]
    fn construction_errors() {
        let r = Graph::from_edge_list(
            2,
            &[(0, 2)],
            Tensor::zeros(&[2, 1]),
            Labels::single(vec![0, 0]),
        );
        assert!(matches!(r, Err(Error::Index { .. })));
        let r = Graph::from_edge_list(
            3,
            &[],
            Tensor::zeros(&[2, 1]),
            Labels::single(vec![0, 0, 0]),
        );
        assert!(matches!(r, Err(Error::Structural(_))));
        let labels = Labels::Single {
            classes: vec![0, 3],
            num_classes: 2,
        };
        let r = Graph::from_edge_list(2, &[], Tensor::zeros(&[2, 1]), labels);
        assert!(matches!(r, Err(Error::Structural(_))));
    }

    #[test]
    fn self_loops() {
        let g = bare(3, &[], vec![0, 0, 0]).add_self_loops();
        assert_eq!(g.num_directed_edges(), 3);
        assert!(g.has_self_loops());
        assert_eq!(g.add_self_loops(), g);
        let g = bare(2, &[(0, 1)], vec![0, 1]).add_self_loops();
        assert_eq!(g.num_directed_edges(), 4);
        assert_eq!(g.degree(0), 1);
    }

    #[test]
    fn degree_stats_small_graphs() {
        let cycle = bare(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], vec![0; 4]);
        assert_eq!(cycle.degree_stats(), (2.0, 0.0));
        let star = bare(5, &[(0, 1), (0, 2), (0, 3), (0, 4)], vec![0; 5]);
        assert!((star.degree_stats().0 - 1.6).abs() < 1e-15);
        // loops do not count
        assert_eq!(cycle.add_self_loops().degree_stats(), (2.0, 0.0));
    }

    #[test]
    fn homophily_cases() {
        let g = bare(3, &[(0, 1), (1, 2)], vec![4, 4, 4]);
        assert_eq!(g.homophily().unwrap(), 1.0);
        let g = bare(2, &[(0, 1)], vec![0, 1]);
        assert_eq!(g.homophily().unwrap(), 0.0);
        let tri = bare(3, &[(0, 1), (1, 2), (0, 2)], vec![0, 0, 1]);
        assert_eq!(
            tri.per_node_homophily().unwrap(),
            vec![Some(0.5), Some(0.5), Some(0.0)]
        );
        let iso = bare(3, &[(0, 1)], vec![0, 0, 1]);
        assert_eq!(iso.per_node_homophily().unwrap()[2], None);
        assert_eq!(iso.add_self_loops().homophily().unwrap(), 1.0);
    }

    #[test]
    fn homophily_rejects_multilabel() {
        let g = Graph::from_edge_list(
            2,
            &[(0, 1)],
            Tensor::zeros(&[2, 1]),
            Labels::multi(vec![vec![0], vec![0, 1]], 2),
        )
        .unwrap();
        assert!(matches!(g.homophily(), Err(Error::LabelKind(_))));
        let single = bare(2, &[(0, 1)], vec![0, 1]);
        assert!(matches!(
            single.multilabel_homophily(),
            Err(Error::LabelKind(_))
        ));
    }

    #[test]
    fn per_node_mean_equals_homophily_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..30 {
            let g = random_graph(25, 0.15, 3, &mut rng);
            let per = g.per_node_homophily().unwrap();
            let defined: Vec<f64> = per.into_iter().flatten().collect();
            let mean = defined.iter().sum::<f64>() / defined.len() as f64;
            assert!((mean - g.homophily().unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn multilabel_homophily_cases() {
        let full = Labels::multi(vec![vec![0, 1, 2], vec![0, 1, 2]], 3);
        let g = Graph::from_edge_list(2, &[(0, 1)], Tensor::zeros(&[2, 1]), full).unwrap();
        assert!((g.multilabel_homophily().unwrap() - 1.0).abs() < 1e-15);
        let disjoint = Labels::multi(vec![vec![0], vec![1, 2]], 3);
        let g = Graph::from_edge_list(2, &[(0, 1)], Tensor::zeros(&[2, 1]), disjoint).unwrap();
        assert_eq!(g.multilabel_homophily().unwrap(), 0.0);
    }

    #[test]
    fn multilabel_homophily_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 20;
        let c = 5;
        let sets: Vec<Vec<usize>> = (0..n)
            .map(|_| (0..c).filter(|_| rng.random::<f64>() < 0.4).collect())
            .collect();
        let mut adj = vec![vec![false; n]; n];
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < 0.2 {
                    adj[i][j] = true;
                    adj[j][i] = true;
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_edge_list(
            n,
            &edges,
            Tensor::zeros(&[n, 1]),
            Labels::multi(sets.clone(), c),
        )
        .unwrap();
        let mut total = 0.0;
        for i in 0..n {
            let deg = (0..n).filter(|&j| adj[i][j]).count();
            if deg == 0 {
                continue;
            }
            let mut inner = 0.0;
            for j in 0..n {
                if adj[i][j] {
                    let shared = (0..c)
                        .filter(|k| sets[i].contains(k) && sets[j].contains(k))
                        .count();
                    inner += shared as f64 / (deg * c) as f64;
                }
            }
            total += inner;
        }
        let oracle = total / n as f64;
        assert!((g.multilabel_homophily().unwrap() - oracle).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn edge_list_round_trip(n in 1usize..15, raw in proptest::collection::vec((0usize..15, 0usize..15), 0..40)) {
            let edges: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % n, b % n)).filter(|(a, b)| a != b).collect();
            let g = bare(n, &edges, vec![0; n]);
            let canon = g.to_edge_list();
            prop_assert!(canon.iter().all(|(i, j)| i < j));
            let again = bare(n, &canon, vec![0; n]);
            prop_assert_eq!(again.to_edge_list(), canon);
            prop_assert_eq!(again, g.clone());
            // CSR invariants
            prop_assert_eq!(g.offsets().len(), n + 1);
            prop_assert!(g.offsets().windows(2).all(|w| w[0] <= w[1]));
            for i in 0..n {
                prop_assert!(g.neighbors(i).windows(2).all(|w| w[0] < w[1]));
                for &j in g.neighbors(i) {
                    prop_assert!(g.has_edge(j, i));
                }
            }
        }

        #[test]
        fn homophily_in_unit_interval(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(12, 0.3, 3, &mut rng);
            if let Ok(h) = g.homophily() {
                prop_assert!((0.0..=1.0).contains(&h));
            }
        }
    }
}
