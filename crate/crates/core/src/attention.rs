//! Attention scoring (GO, DP, SD, MX), neighborhood normalization and the
//! edge-probability logits derived from the same scores.
//!
//! Projected features are `N × (K·F)` matrices with head `k` occupying
//! columns `k·F..(k+1)·F`. Attention vectors are stored as a `K × 2F`
//! matrix whose row `k` is `[a_left ‖ a_right]` for head `k`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{segment_softmax_values, Tape, Tensor, Var, DEFAULT_LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AttentionKind {
    Go,
    Dp,
    Sd,
    Mx,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 4] = [Self::Go, Self::Dp, Self::Sd, Self::Mx];

    /// Whether the kind carries a learned attention vector.
    pub fn has_attention_vector(self) -> bool {
        matches!(self, Self::Go | Self::Mx)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Go => "GO",
            Self::Dp => "DP",
            Self::Sd => "SD",
            Self::Mx => "MX",
        }
    }
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GO" => Ok(Self::Go),
            "DP" => Ok(Self::Dp),
            "SD" => Ok(Self::Sd),
            "MX" => Ok(Self::Mx),
            _ => Err(Error::Config(format!("unknown attention kind {s:?}"))),
        }
    }
}

/// Parameters of a single attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `F_in × F_out` projection.
    pub w: Tensor,
    /// `2·F_out` attention vector, present only for GO and MX.
    pub a: Option<Vec<f64>>,
}

impl HeadParams {
    pub fn new(kind: AttentionKind, w: Tensor, a: Option<Vec<f64>>) -> Result<Self> {
        if w.shape().len() != 2 || w.cols() == 0 {
            return Err(Error::shape(
                "HeadParams",
                format!("projection shape {:?}", w.shape()),
            ));
        }
        match (&a, kind.has_attention_vector()) {
            (Some(v), true) if v.len() == 2 * w.cols() => {}
            (Some(v), true) => {
                return Err(Error::shape(
                    "HeadParams",
                    format!("attention vector of {} for F_out = {}", v.len(), w.cols()),
                ))
            }
            (None, false) => {}
            (Some(_), false) => {
                return Err(Error::Config(format!(
                    "{kind} attention has no attention vector"
                )))
            }
            (None, true) => {
                return Err(Error::Config(format!(
                    "{kind} attention needs an attention vector"
                )))
            }
        }
        Ok(Self { w, a })
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }
}

fn check_pair(op: &'static str, hi: &[f64], hj: &[f64]) -> Result<()> {
    if hi.len() != hj.len() || hi.is_empty() {
        return Err(Error::shape(
            op,
            format!("vectors of length {} and {}", hi.len(), hj.len()),
        ));
    }
    Ok(())
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| p * q).sum()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

/// `aᵀ[hi ‖ hj]`.
pub fn score_go(hi: &[f64], hj: &[f64], a: &[f64]) -> Result<f64> {
    check_pair("score_go", hi, hj)?;
    let f = hi.len();
    if a.len() != 2 * f {
        return Err(Error::shape(
            "score_go",
            format!("attention vector {} for F = {f}", a.len()),
        ));
    }
    Ok(dot(&a[..f], hi) + dot(&a[f..], hj))
}

pub fn score_dp(hi: &[f64], hj: &[f64]) -> Result<f64> {
    check_pair("score_dp", hi, hj)?;
    Ok(dot(hi, hj))
}

pub fn score_sd(hi: &[f64], hj: &[f64]) -> Result<f64> {
    Ok(score_dp(hi, hj)? / (hi.len() as f64).sqrt())
}

/// GO score gated by the sigmoid of the DP score.
pub fn score_mx(hi: &[f64], hj: &[f64], a: &[f64]) -> Result<f64> {
    Ok(score_go(hi, hj, a)? * sigmoid(score_dp(hi, hj)?))
}

/// Score of one head for any kind; `a` is required for GO and MX.
pub fn score(kind: AttentionKind, hi: &[f64], hj: &[f64], a: Option<&[f64]>) -> Result<f64> {
    let missing = || Error::Config(format!("{kind} attention needs an attention vector"));
    match kind {
        AttentionKind::Go => score_go(hi, hj, a.ok_or_else(missing)?),
        AttentionKind::Dp => score_dp(hi, hj),
        AttentionKind::Sd => score_sd(hi, hj),
        AttentionKind::Mx => score_mx(hi, hj, a.ok_or_else(missing)?),
    }
}

/// Score used for the edge probability: MX falls back to its DP part.
pub fn phi_score(kind: AttentionKind, hi: &[f64], hj: &[f64], a: Option<&[f64]>) -> Result<f64> {
    match kind {
        AttentionKind::Mx => score_dp(hi, hj),
        _ => score(kind, hi, hj, a),
    }
}

/// `softmax(LeakyReLU(e))` within each destination segment, per column of
/// the `E × K` score matrix.
pub fn normalize(e: &Tensor, targets: &[usize], num_nodes: usize, slope: f64) -> Result<Tensor> {
    let (rows, cols) = (e.rows(), e.cols());
    if targets.len() != rows {
        return Err(Error::shape(
            "normalize",
            format!("{} targets for {rows} scores", targets.len()),
        ));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= num_nodes) {
        return Err(Error::Index {
            op: "normalize",
            index: bad,
            bound: num_nodes,
        });
    }
    let activated: Vec<f64> = e
        .data()
        .iter()
        .map(|&x| if x >= 0.0 { x } else { slope * x })
        .collect();
    Tensor::new(
        e.shape().to_vec(),
        segment_softmax_values(&activated, rows, cols, targets, num_nodes),
    )
}

/// Mean over heads of a `P × K` score matrix.
pub fn phi_logits(scores: &Tensor) -> Result<Vec<f64>> {
    let k = scores.cols();
    if k == 0 || scores.shape().len() != 2 {
        return Err(Error::Config(
            "edge probability needs at least one head".into(),
        ));
    }
    Ok((0..scores.rows())
        .map(|r| scores.row(r).iter().sum::<f64>() / k as f64)
        .collect())
}

pub fn phi(logits: &[f64]) -> Vec<f64> {
    logits.iter().map(|&x| sigmoid(x)).collect()
}

/// Raw scores, normalized coefficients and edge-probability logits of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// `E × K` unnormalized scores over directed edges (center, neighbor).
    pub e: Tensor,
    /// `E × K` coefficients, each column summing to 1 per center node.
    pub alpha: Tensor,
    /// Head-mean pre-sigmoid score for each requested pair.
    pub phi_logit: Vec<f64>,
}

/// Per-head scores on the tape for pairs `(left[p], right[p])`.
///
/// `proj` is `N × (K·F)`; `att` is `K × 2F` and required for GO and MX.
pub fn tape_scores(
    tape: &mut Tape,
    kind: AttentionKind,
    proj: Var,
    att: Option<Var>,
    left: &Arc<[usize]>,
    right: &Arc<[usize]>,
    heads: usize,
) -> Result<Var> {
    let width = tape.value(proj).cols();
    if heads == 0 || !width.is_multiple_of(heads) {
        return Err(Error::shape(
            "tape_scores",
            format!("{width} columns for {heads} heads"),
        ));
    }
    let f = width / heads;
    let go = |tape: &mut Tape| -> Result<Var> {
        let att = att
            .ok_or_else(|| Error::Config(format!("{kind} attention needs an attention vector")))?;
        let a_left = tape.slice_cols(att, 0, f)?;
        let a_right = tape.slice_cols(att, f, 2 * f)?;
        let s_left = tape.block_dot(proj, a_left, heads)?;
        let s_right = tape.block_dot(proj, a_right, heads)?;
        tape.pair_add(s_left, s_right, left.clone(), right.clone())
    };
    match kind {
        AttentionKind::Go => go(tape),
        AttentionKind::Dp => tape.edge_dot(proj, left.clone(), right.clone(), heads),
        AttentionKind::Sd => {
            tape.scaled_edge_dot(proj, left.clone(), right.clone(), heads, 1.0 / (f as f64).sqrt())
        }
        AttentionKind::Mx => {
            let g = go(tape)?;
            let dp = tape.edge_dot(proj, left.clone(), right.clone(), heads)?;
            let gate = tape.sigmoid(dp)?;
            tape.mul(g, gate)
        }
    }
}

/// Per-head scores that feed the edge probability.
pub fn tape_phi_scores(
    tape: &mut Tape,
    kind: AttentionKind,
    proj: Var,
    att: Option<Var>,
    left: &Arc<[usize]>,
    right: &Arc<[usize]>,
    heads: usize,
) -> Result<Var> {
    let kind = if kind == AttentionKind::Mx {
        AttentionKind::Dp
    } else {
        kind
    };
    tape_scores(tape, kind, proj, att, left, right, heads)
}

/// `segment_softmax(LeakyReLU(e))` on the tape.
pub fn tape_normalize(
    tape: &mut Tape,
    e: Var,
    segments: &Arc<[usize]>,
    num_nodes: usize,
    slope: f64,
) -> Result<Var> {
    tape.leaky_segment_softmax(e, segments.clone(), num_nodes, slope)
}

/// Splits canonical pairs into `(min, max)` index arrays.
pub fn pair_index(pairs: &[(usize, usize)]) -> (Arc<[usize]>, Arc<[usize]>) {
    let left: Vec<usize> = pairs.iter().map(|&(i, j)| i.min(j)).collect();
    let right: Vec<usize> = pairs.iter().map(|&(i, j)| i.max(j)).collect();
    (Arc::from(left), Arc::from(right))
}

/// Evaluates attention for already-projected features `proj` (`N × K·F`)
/// over the edges of `g` and the given supervision pairs.
pub fn evaluate_attention(
    kind: AttentionKind,
    proj: &Tensor,
    att: Option<&Tensor>,
    heads: usize,
    g: &Graph,
    pairs: &[(usize, usize)],
) -> Result<AttentionOutput> {
    let mut tape = Tape::new();
    let p = tape.constant(proj.clone())?;
    let a = att.map(|t| tape.constant(t.clone())).transpose()?;
    let idx = g.edge_index();
    let e = tape_scores(&mut tape, kind, p, a, &idx.center, &idx.neighbor, heads)?;
    let alpha = tape_normalize(
        &mut tape,
        e,
        &idx.center,
        g.num_nodes(),
        DEFAULT_LEAKY_SLOPE,
    )?;
    let (left, right) = pair_index(pairs);
    let ps = tape_phi_scores(&mut tape, kind, p, a, &left, &right, heads)?;
    Ok(AttentionOutput {
        e: tape.value(e).clone(),
        alpha: tape.value(alpha).clone(),
        phi_logit: phi_logits(tape.value(ps))?,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::grad_check;
    use crate::testutil::{random_graph, random_tensor};

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn go_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (hi, hj) = (rand_vec(8, &mut rng), rand_vec(8, &mut rng));
        assert_eq!(score_go(&hi, &hj, &[0.0; 16]).unwrap(), 0.0);
        let mut sel = vec![0.0; 16];
        sel[0] = 1.0;
        assert_eq!(score_go(&hi, &hj, &sel).unwrap(), hi[0]);

        let a = rand_vec(16, &mut rng);
        let concat: Vec<f64> = hi.iter().chain(&hj).copied().collect();
        let mut oracle = 0.0;
        for t in 0..16 {
            oracle += a[t] * concat[t];
        }
        assert!((score_go(&hi, &hj, &a).unwrap() - oracle).abs() <= 1e-12);
        assert!(score_go(&hi, &hj, &a[..15]).is_err());
        assert!(score_go(&hi, &hj[..7], &a).is_err());
    }

    #[test]
    fn dp_and_sd_examples() {
        assert_eq!(score_dp(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(score_dp(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (x, y) = (rand_vec(5, &mut rng), rand_vec(5, &mut rng));
            assert_eq!(score_dp(&x, &y).unwrap(), score_dp(&y, &x).unwrap());
            assert_eq!(
                score_sd(&x, &y).unwrap(),
                score_dp(&x, &y).unwrap() / 5f64.sqrt()
            );
        }
        // dp = 6 with F = 4
        assert_eq!(
            score_sd(&[1.0, 1.0, 2.0, 0.0], &[2.0, 2.0, 1.0, 0.0]).unwrap(),
            3.0
        );
        assert_eq!(
            score_sd(&[3.0], &[-2.0]).unwrap(),
            score_dp(&[3.0], &[-2.0]).unwrap()
        );
        assert_eq!(score_sd(&[0.0; 4], &[0.0; 4]).unwrap(), 0.0);
        assert!(score_dp(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mx_examples() {
        // GO part zero
        assert_eq!(score_mx(&[1.0, 2.0], &[3.0, 4.0], &[0.0; 4]).unwrap(), 0.0);
        // GO = 2, DP = 0
        let v = score_mx(&[1.0, 0.0], &[0.0, 1.0], &[2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        // DP = 30 saturates the gate
        let hi = [30f64.sqrt(), 0.0];
        let hj = [30f64.sqrt(), 0.0];
        let a = [0.1, 0.2, -0.3, 0.4];
        let go = score_go(&hi, &hj, &a).unwrap();
        assert!((score_mx(&hi, &hj, &a).unwrap() - go).abs() <= 1e-9);
        assert!(score(AttentionKind::Mx, &hi, &hj, None).is_err());
    }

    #[test]
    fn mx_is_linear_in_go_for_fixed_dp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (hi, hj) = (rand_vec(4, &mut rng), rand_vec(4, &mut rng));
        let a = rand_vec(8, &mut rng);
        let a2: Vec<f64> = a.iter().map(|x| 2.5 * x).collect();
        let m1 = score_mx(&hi, &hj, &a).unwrap();
        let m2 = score_mx(&hi, &hj, &a2).unwrap();
        assert!((m2 - 2.5 * m1).abs() <= 1e-12);
    }

    #[test]
    fn normalize_examples() {
        let e = Tensor::matrix(3, 1, vec![0.7, 0.7, 0.7]).unwrap();
        let alpha = normalize(&e, &[0, 0, 0], 1, 0.2).unwrap();
        for &v in alpha.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let e = Tensor::matrix(2, 1, vec![0.0, -5.0]).unwrap();
        let alpha = normalize(&e, &[0, 0], 1, 0.2).unwrap();
        let z = 1.0 + (-1f64).exp();
        assert!((alpha.data()[0] - 1.0 / z).abs() < 1e-12);
        assert!((alpha.data()[1] - (-1f64).exp() / z).abs() < 1e-12);
        assert!((alpha.data()[0] - 0.7311).abs() < 1e-4);
        assert!(normalize(&e, &[0, 3], 2, 0.2).is_err());
    }

    #[test]
    fn normalize_matches_per_node_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let g = random_graph(12, 0.3, 1, 2, &mut rng).add_self_loops();
            let idx = g.edge_index();
            let e = random_tensor(&[idx.center.len(), 3], &mut rng);
            let alpha = normalize(&e, &idx.center, g.num_nodes(), 0.2).unwrap();
            for k in 0..3 {
                for i in 0..g.num_nodes() {
                    let rows: Vec<usize> = (0..idx.center.len())
                        .filter(|&r| idx.center[r] == i)
                        .collect();
                    let lrelu = |x: f64| if x > 0.0 { x } else { 0.2 * x };
                    let z: f64 = rows.iter().map(|&r| lrelu(e.get(r, k)).exp()).sum();
                    for &r in &rows {
                        let want = lrelu(e.get(r, k)).exp() / z;
                        assert!((alpha.get(r, k) - want).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn phi_logit_examples() {
        let one = Tensor::matrix(2, 1, vec![0.3, -2.0]).unwrap();
        assert_eq!(phi_logits(&one).unwrap(), vec![0.3, -2.0]);
        let two = Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap();
        let l = phi_logits(&two).unwrap();
        assert_eq!(l, vec![0.0]);
        assert_eq!(phi(&l), vec![0.5]);
        let none = Tensor::new(vec![3, 0], vec![]).unwrap();
        assert!(matches!(phi_logits(&none), Err(Error::Config(_))));
    }

    fn setup(seed: u64, heads: usize, f: usize) -> (Graph, Tensor, Tensor, Vec<(usize, usize)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(10, 0.3, 1, 2, &mut rng).add_self_loops();
        let proj = random_tensor(&[10, heads * f], &mut rng);
        let att = random_tensor(&[heads, 2 * f], &mut rng);
        let pairs = vec![(0, 1), (2, 7), (3, 9), (4, 5)];
        (g, proj, att, pairs)
    }

    #[test]
    fn tape_scores_match_slice_scores() {
        let (heads, f) = (3, 4);
        let (g, proj, att, pairs) = setup(5, heads, f);
        for kind in AttentionKind::ALL {
            let a = kind.has_attention_vector().then_some(&att);
            let out = evaluate_attention(kind, &proj, a, heads, &g, &pairs).unwrap();
            let idx = g.edge_index();
            for (r, (&i, &j)) in idx.center.iter().zip(idx.neighbor.iter()).enumerate() {
                for k in 0..heads {
                    let hi = &proj.row(i)[k * f..(k + 1) * f];
                    let hj = &proj.row(j)[k * f..(k + 1) * f];
                    let want = score(kind, hi, hj, a.map(|t| t.row(k))).unwrap();
                    assert!((out.e.get(r, k) - want).abs() <= 1e-12, "{kind}");
                }
            }
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let mean: f64 = (0..heads)
                    .map(|k| {
                        let hi = &proj.row(i)[k * f..(k + 1) * f];
                        let hj = &proj.row(j)[k * f..(k + 1) * f];
                        phi_score(kind, hi, hj, a.map(|t| t.row(k))).unwrap()
                    })
                    .sum::<f64>()
                    / heads as f64;
                assert!((out.phi_logit[p] - mean).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn go_pairs_use_min_max_orientation() {
        let (heads, f) = (2, 3);
        let (g, proj, att, _) = setup(6, heads, f);
        let fwd =
            evaluate_attention(AttentionKind::Go, &proj, Some(&att), heads, &g, &[(2, 7)]).unwrap();
        let rev =
            evaluate_attention(AttentionKind::Go, &proj, Some(&att), heads, &g, &[(7, 2)]).unwrap();
        assert_eq!(fwd.phi_logit, rev.phi_logit);
    }

    #[test]
    fn alpha_is_a_distribution_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(2..20);
            let g = random_graph(n, 0.25, 1, 2, &mut rng).add_self_loops();
            let proj = random_tensor(&[n, 2 * 3], &mut rng);
            let att = random_tensor(&[2, 6], &mut rng);
            for kind in AttentionKind::ALL {
                let out = evaluate_attention(
                    kind,
                    &proj,
                    Some(&att).filter(|_| kind.has_attention_vector()),
                    2,
                    &g,
                    &[],
                )
                .unwrap();
                for k in 0..2 {
                    let mut sums = vec![0.0; n];
                    let idx = g.edge_index();
                    for (r, &c) in idx.center.iter().enumerate() {
                        let v = out.alpha.get(r, k);
                        assert!(v > 0.0 && v <= 1.0);
                        sums[c] += v;
                    }
                    for s in sums {
                        assert!((s - 1.0).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn mx_phi_ignores_attention_vector_and_matches_dp() {
        let (heads, f) = (2, 4);
        let (g, proj, att, pairs) = setup(8, heads, f);
        let mut other = att.clone();
        for v in other.data_mut() {
            *v = -3.0 * *v + 1.0;
        }
        let a =
            evaluate_attention(AttentionKind::Mx, &proj, Some(&att), heads, &g, &pairs).unwrap();
        let b =
            evaluate_attention(AttentionKind::Mx, &proj, Some(&other), heads, &g, &pairs).unwrap();
        let dp = evaluate_attention(AttentionKind::Dp, &proj, None, heads, &g, &pairs).unwrap();
        assert_eq!(a.phi_logit, b.phi_logit);
        assert_eq!(a.phi_logit, dp.phi_logit);
    }

    #[test]
    fn attention_gradients() {
        let (heads, f) = (2, 3);
        let (g, proj, att, pairs) = setup(9, heads, f);
        let idx = g.edge_index();
        let (left, right) = pair_index(&pairs);
        for kind in AttentionKind::ALL {
            let mut params = vec![proj.clone()];
            if kind.has_attention_vector() {
                params.push(att.clone());
            }
            let err = grad_check(
                |tape, v| {
                    let a = v.get(1).copied();
                    let e = tape_scores(tape, kind, v[0], a, &idx.center, &idx.neighbor, heads)?;
                    let alpha = tape_normalize(tape, e, &idx.center, g.num_nodes(), 0.2)?;
                    let agg = tape.aggregate(
                        alpha,
                        v[0],
                        idx.center.clone(),
                        idx.neighbor.clone(),
                        g.num_nodes(),
                        heads,
                    )?;
                    let s1 = tape.sum_squares(agg)?;
                    let ps = tape_phi_scores(tape, kind, v[0], a, &left, &right, heads)?;
                    let m = tape.block_mean(ps, heads)?;
                    let p = tape.sigmoid(m)?;
                    let s2 = tape.sum(p)?;
                    tape.add(s1, s2)
                },
                &params,
                1e-6,
            )
            .unwrap();
            assert!(err <= 1e-6, "{kind}: {err}");
        }
    }

    #[test]
    fn head_params_validation() {
        let w = Tensor::zeros(&[3, 2]);
        assert!(HeadParams::new(AttentionKind::Go, w.clone(), Some(vec![0.0; 4])).is_ok());
        assert!(HeadParams::new(AttentionKind::Go, w.clone(), None).is_err());
        assert!(HeadParams::new(AttentionKind::Dp, w.clone(), Some(vec![0.0; 4])).is_err());
        assert!(HeadParams::new(AttentionKind::Sd, w.clone(), None).is_ok());
        assert!(HeadParams::new(AttentionKind::Mx, w, Some(vec![0.0; 3])).is_err());
        assert_eq!("mx".parse::<AttentionKind>().unwrap(), AttentionKind::Mx);
        assert!("XX".parse::<AttentionKind>().is_err());
    }
}
