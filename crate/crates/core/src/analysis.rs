//! Post-hoc diagnostics of trained attention: agreement between attention
//! and neighbor labels, the variance argument for dot-product scores, and
//! edge-probability link prediction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{link_prediction_split, EdgeSet, Graph};
use crate::model::{GraphContext, Network};
use crate::train::{auc, train, TrainConfig};

/// Mass given to zero label-agreement entries before renormalising.
pub const KLD_EPSILON: f64 = 1e-12;

/// Label-agreement distribution of node `k` over its closed neighborhood.
///
/// Returns the sorted support `N(k) ∪ {k}` and the normalized indicator of
/// sharing `k`'s label. The support order matches the attention rows of `k`
/// in a self-looped graph.
pub fn label_agreement(g: &Graph, k: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    if k >= g.num_nodes() {
        return Err(Error::Index {
            op: "label_agreement",
            index: k,
            bound: g.num_nodes(),
        });
    }
    let classes = g.labels().single_classes()?;
    let mut support = g.neighbors(k).to_vec();
    if let Err(pos) = support.binary_search(&k) {
        support.insert(pos, k);
    }
    let hits: Vec<f64> = support
        .iter()
        .map(|&j| f64::from(u8::from(classes[j] == classes[k])))
        .collect();
    let total: f64 = hits.iter().sum();
    Ok((support, hits.into_iter().map(|h| h / total).collect()))
}

/// `Σ α log(α/ℓ)` with zero entries of `ℓ` raised to `epsilon` and `ℓ`
/// renormalized. Identical inputs return exactly 0.
pub fn attention_label_kld(alpha: &[f64], ell: &[f64], epsilon: f64) -> Result<f64> {
    if alpha.len() != ell.len() || alpha.is_empty() {
        return Err(Error::Structural(format!(
            "attention over {} entries vs label agreement over {}",
            alpha.len(),
            ell.len()
        )));
    }
    if alpha.iter().chain(ell).any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::Domain {
            op: "attention_label_kld",
            detail: "distributions must be finite and non-negative".into(),
        });
    }
    if alpha == ell {
        return Ok(0.0);
    }
    let smoothed: Vec<f64> = ell
        .iter()
        .map(|&v| if v == 0.0 { epsilon } else { v })
        .collect();
    let z: f64 = smoothed.iter().sum();
    let kld: f64 = alpha
        .iter()
        .zip(&smoothed)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, l)| a * (a / (l / z)).ln())
        .sum();
    // Gibbs' inequality; only rounding can push it below zero
    Ok(kld.max(0.0))
}

/// Five-number box-plot summary with Tukey whiskers at 1.5 IQR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lo_whisker: f64,
    pub hi_whisker: f64,
    /// Values outside the whiskers on each side.
    pub low_tail: usize,
    pub high_tail: usize,
}

/// Percentile with linear interpolation between order statistics.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Evaluation("box plot of no values".into()));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (q1, median, q3) = (
            percentile(&v, 0.25),
            percentile(&v, 0.5),
            percentile(&v, 0.75),
        );
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = v
            .iter()
            .copied()
            .filter(|x| (lo_fence..=hi_fence).contains(x))
            .collect();
        Ok(Self {
            count: v.len(),
            q1,
            median,
            q3,
            lo_whisker: inside.first().copied().unwrap_or(q1),
            hi_whisker: inside.last().copied().unwrap_or(q3),
            low_tail: v.iter().filter(|&&x| x < lo_fence).count(),
            high_tail: v.iter().filter(|&&x| x > hi_fence).count(),
        })
    }
}

/// KLD values of one attention layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerKld {
    pub layer: usize,
    /// `values[head][node]`.
    pub values: Vec<Vec<f64>>,
    pub per_head: Vec<BoxStats>,
    /// All heads and nodes of the layer together.
    pub pooled: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KldReport {
    pub layers: Vec<LayerKld>,
    /// KLD of uniform attention over each closed neighborhood.
    pub uniform: Vec<f64>,
    pub uniform_stats: BoxStats,
    /// Heads are reported one by one and also pooled per layer.
    pub heads_pooled: bool,
    pub epsilon: f64,
}

impl KldReport {
    /// Box-plot table: `layer,head,q1,median,q3,lo_whisker,hi_whisker`.
    /// Pooled rows use head `all`; the uniform baseline uses layer `uniform`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,head,q1,median,q3,lo_whisker,hi_whisker\n");
        let mut row = |layer: &str, head: &str, s: &BoxStats| {
            out.push_str(&format!(
                "{layer},{head},{},{},{},{},{}\n",
                s.q1, s.median, s.q3, s.lo_whisker, s.hi_whisker
            ));
        };
        for l in &self.layers {
            for (k, s) in l.per_head.iter().enumerate() {
                row(&l.layer.to_string(), &k.to_string(), s);
            }
            row(&l.layer.to_string(), "all", &l.pooled);
        }
        row("uniform", "all", &self.uniform_stats);
        out
    }

    pub fn layer(&self, layer: usize) -> Option<&LayerKld> {
        self.layers.iter().find(|l| l.layer == layer)
    }
}

/// Per-head, per-node KLD between `E × K` coefficients on the self-looped
/// graph `looped` and the label-agreement distributions.
pub fn kld_from_alpha(looped: &Graph, alpha: &Tensor, epsilon: f64) -> Result<Vec<Vec<f64>>> {
    if !looped.has_self_loops() {
        return Err(Error::Structural(
            "attention KLD needs a self-looped graph".into(),
        ));
    }
    if alpha.rows() != looped.num_directed_edges() {
        return Err(Error::shape(
            "kld_from_alpha",
            format!(
                "{} coefficient rows for {} directed edges",
                alpha.rows(),
                looped.num_directed_edges()
            ),
        ));
    }
    let heads = alpha.cols();
    let offsets = looped.offsets();
    let mut out = vec![Vec::with_capacity(looped.num_nodes()); heads];
    let mut column = Vec::new();
    for k in 0..looped.num_nodes() {
        let (_, ell) = label_agreement(looped, k)?;
        for (h, values) in out.iter_mut().enumerate() {
            column.clear();
            column.extend((offsets[k]..offsets[k + 1]).map(|e| alpha.get(e, h)));
            values.push(attention_label_kld(&column, &ell, epsilon)?);
        }
    }
    Ok(out)
}

/// KLD of uniform attention over every closed neighborhood.
pub fn uniform_kld(g: &Graph, epsilon: f64) -> Result<Vec<f64>> {
    (0..g.num_nodes())
        .map(|k| {
            let (_, ell) = label_agreement(g, k)?;
            let u = vec![1.0 / ell.len() as f64; ell.len()];
            attention_label_kld(&u, &ell, epsilon)
        })
        .collect()
}

/// KLD study of a trained network in evaluation mode. `layers` selects
/// layer indices; empty means every layer.
pub fn kld_study(net: &Network, g: &Graph, layers: &[usize]) -> Result<KldReport> {
    let looped = g.add_self_loops();
    let (_, alphas) = net.predict(&looped)?;
    let chosen: Vec<usize> = if layers.is_empty() {
        (0..alphas.len()).collect()
    } else {
        layers.to_vec()
    };
    let mut reports = Vec::with_capacity(chosen.len());
    for l in chosen {
        let alpha = alphas
            .get(l)
            .ok_or_else(|| Error::Config(format!("layer {l} out of {}", alphas.len())))?
            .as_ref()
            .ok_or_else(|| Error::Config(format!("layer {l} has no attention")))?;
        let values = kld_from_alpha(&looped, alpha, KLD_EPSILON)?;
        let per_head = values
            .iter()
            .map(|v| BoxStats::from_values(v))
            .collect::<Result<Vec<_>>>()?;
        let pooled = BoxStats::from_values(&values.concat())?;
        reports.push(LayerKld {
            layer: l,
            values,
            per_head,
            pooled,
        });
    }
    let uniform = uniform_kld(&looped, KLD_EPSILON)?;
    Ok(KldReport {
        layers: reports,
        uniform_stats: BoxStats::from_values(&uniform)?,
        uniform,
        heads_pooled: true,
        epsilon: KLD_EPSILON,
    })
}

/// Setup of the score-variance Monte Carlo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionConfig {
    /// Output width of the projection.
    pub f: usize,
    pub sigma_w2: f64,
    pub sigma_a2: f64,
    pub h_i: Vec<f64>,
    pub h_j: Vec<f64>,
    pub samples: usize,
}

pub const MIN_PROPOSITION_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub config: PropositionConfig,
    pub empirical_var_go: f64,
    /// `2F σ_w² σ_a² E‖h‖²` with the expectation taken over the two fixed inputs.
    pub analytic_var_go: f64,
    pub empirical_var_dp: f64,
    /// `F σ_w⁴ · 4/5 (h_iᵀh_j)²`; the input variance term vanishes for fixed inputs.
    pub analytic_lower_bound_dp: f64,
    pub empirical_w4: f64,
    /// `9/5 σ_w⁴` for the uniform law.
    pub analytic_w4: f64,
}

/// Running mean and variance (Welford).
#[derive(Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        self.m2 / (self.n - 1.0)
    }
}

/// Draws `W` (`F × len(h)`) and `a` (`2F`) i.i.d. zero-mean uniform and
/// records the spread of the GO and DP scores of the fixed pair.
pub fn verify_proposition<R: Rng + ?Sized>(
    cfg: &PropositionConfig,
    rng: &mut R,
) -> Result<VarianceReport> {
    if cfg.samples < MIN_PROPOSITION_SAMPLES {
        return Err(Error::Config(format!(
            "{} samples; at least {MIN_PROPOSITION_SAMPLES} required",
            cfg.samples
        )));
    }
    if cfg.f == 0 || cfg.h_i.len() != cfg.h_j.len() || cfg.h_i.is_empty() {
        return Err(Error::Config(
            "need F ≥ 1 and two inputs of equal, non-zero length".into(),
        ));
    }
    if !(cfg.sigma_w2 > 0.0 && cfg.sigma_a2 > 0.0) {
        return Err(Error::Config("variances must be positive".into()));
    }
    let (f, d) = (cfg.f, cfg.h_i.len());
    let uw = (3.0 * cfg.sigma_w2).sqrt();
    let ua = (3.0 * cfg.sigma_a2).sqrt();
    let (mut go, mut dp) = (Moments::default(), Moments::default());
    let mut w4 = 0.0;
    let (mut pi, mut pj) = (vec![0.0; f], vec![0.0; f]);
    for _ in 0..cfg.samples {
        for r in 0..f {
            let (mut si, mut sj) = (0.0, 0.0);
            for c in 0..d {
                let w = rng.random_range(-uw..uw);
                w4 += w.powi(4);
                si += w * cfg.h_i[c];
                sj += w * cfg.h_j[c];
            }
            pi[r] = si;
            pj[r] = sj;
        }
        let mut e_go = 0.0;
        for p in pi.iter().chain(&pj) {
            e_go += rng.random_range(-ua..ua) * p;
        }
        go.push(e_go);
        dp.push(pi.iter().zip(&pj).map(|(a, b)| a * b).sum());
    }
    let norm2 = |h: &[f64]| h.iter().map(|v| v * v).sum::<f64>();
    let mean_norm2 = (norm2(&cfg.h_i) + norm2(&cfg.h_j)) / 2.0;
    let dot: f64 = cfg.h_i.iter().zip(&cfg.h_j).map(|(a, b)| a * b).sum();
    let ff = f as f64;
    Ok(VarianceReport {
        config: cfg.clone(),
        empirical_var_go: go.variance(),
        analytic_var_go: 2.0 * ff * cfg.sigma_w2 * cfg.sigma_a2 * mean_norm2,
        empirical_var_dp: dp.variance(),
        analytic_lower_bound_dp: ff * cfg.sigma_w2.powi(2) * 0.8 * dot * dot,
        empirical_w4: w4 / (cfg.samples * f * d) as f64,
        analytic_w4: 1.8 * cfg.sigma_w2.powi(2),
    })
}

/// AUC of the last attention layer's edge probability, scoring held-out
/// edges against fixed non-edges on the training graph `g`.
pub fn link_prediction_eval(
    net: &Network,
    g: &Graph,
    held_out: &EdgeSet,
    negatives: &EdgeSet,
) -> Result<f64> {
    if held_out.is_empty() || negatives.is_empty() {
        return Err(Error::Evaluation(
            "link prediction needs positive and negative pairs".into(),
        ));
    }
    let pairs: Vec<(usize, usize)> = held_out
        .pairs
        .iter()
        .chain(&negatives.pairs)
        .copied()
        .collect();
    let ctx = GraphContext::new(&g.add_self_loops())?;
    let logits = net
        .pair_logits(&ctx, g.features(), &pairs)?
        .into_iter()
        .rev()
        .flatten()
        .next()
        .ok_or_else(|| Error::Config("network has no attention layer".into()))?;
    let labels: Vec<bool> = (0..pairs.len()).map(|i| i < held_out.len()).collect();
    // ranking logits equals ranking φ, without ties from saturated sigmoids
    auc(&logits, &labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPredOutcome {
    pub val_auc: f64,
    pub test_auc: f64,
    pub epochs: usize,
}

/// Holds out edges of `g` (split drawn from `split_seed`), trains `net` on
/// the remaining graph with `cfg` and scores the held-out pairs.
pub fn link_prediction_run(
    net: &Network,
    g: &Graph,
    cfg: &TrainConfig,
    split_seed: u64,
) -> Result<LinkPredOutcome> {
    let split = link_prediction_split(g, &mut ChaCha8Rng::seed_from_u64(split_seed))?;
    let (best, history) = train(net, &split.train_graph, cfg)?;
    Ok(LinkPredOutcome {
        val_auc: link_prediction_eval(&best, &split.train_graph, &split.val, &split.val_negatives)?,
        test_auc: link_prediction_eval(&best, &split.train_graph, &split.test, &split.test_negatives)?,
        epochs: history.epochs.len(),
    })
}
