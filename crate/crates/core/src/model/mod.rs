//! SuperGAT and GCN layers, network assembly and the forward pass.

mod checkpoint;
mod loss;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use loss::{
    edge_loss, edge_loss_values, node_loss, node_loss_values, total_loss, LossBreakdown, PHI_CLAMP,
};

use crate::attention::{tape_normalize, tape_phi_scores, tape_scores, AttentionKind, HeadParams};
use crate::autodiff::{Tape, Tensor, Var, DEFAULT_LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::graph::{EdgeIndex, EdgeSet, EdgeTag, Graph};
use crate::train::glorot_init;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMerge {
    Concat,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    SingleLabel,
    MultiLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperGatLayer {
    pub kind: AttentionKind,
    pub heads: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub merge: HeadMerge,
    pub dropout: f64,
    /// `in_dim × (heads·out_dim)`, head `k` in column block `k`.
    pub weight: Tensor,
    /// `heads × 2·out_dim`, present for GO and MX.
    pub att: Option<Tensor>,
}

impl SuperGatLayer {
    pub fn new(
        kind: AttentionKind,
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        activation: Activation,
        merge: HeadMerge,
        dropout: f64,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 || heads == 0 {
            return Err(Error::Config(format!(
                "layer dims must be positive (in {in_dim}, out {out_dim}, heads {heads})"
            )));
        }
        Ok(Self {
            kind,
            heads,
            in_dim,
            out_dim,
            activation,
            merge,
            dropout,
            weight: Tensor::zeros(&[in_dim, heads * out_dim]),
            att: kind
                .has_attention_vector()
                .then(|| Tensor::zeros(&[heads, 2 * out_dim])),
        })
    }

    pub fn output_width(&self) -> usize {
        match self.merge {
            HeadMerge::Concat => self.heads * self.out_dim,
            HeadMerge::Mean => self.out_dim,
        }
    }

    /// Parameters of head `k` as a standalone projection and vector.
    pub fn head(&self, k: usize) -> Result<HeadParams> {
        if k >= self.heads {
            return Err(Error::Index {
                op: "SuperGatLayer::head",
                index: k,
                bound: self.heads,
            });
        }
        let f = self.out_dim;
        let mut w = Vec::with_capacity(self.in_dim * f);
        for r in 0..self.in_dim {
            w.extend_from_slice(&self.weight.row(r)[k * f..(k + 1) * f]);
        }
        HeadParams::new(
            self.kind,
            Tensor::matrix(self.in_dim, f, w)?,
            self.att.as_ref().map(|a| a.row(k).to_vec()),
        )
    }

    fn initialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (n, f) = (self.in_dim, self.out_dim);
        let mut w = vec![0.0; n * self.heads * f];
        for k in 0..self.heads {
            let block = glorot_init(&[n, f], rng);
            for r in 0..n {
                w[r * self.heads * f + k * f..r * self.heads * f + (k + 1) * f]
                    .copy_from_slice(block.row(r));
            }
        }
        self.weight = Tensor::matrix(n, self.heads * f, w).expect("shape fixed above");
        if let Some(att) = &mut self.att {
            let mut a = Vec::with_capacity(self.heads * 2 * f);
            for _ in 0..self.heads {
                a.extend(glorot_init(&[2 * f], rng).into_data());
            }
            *att = Tensor::matrix(self.heads, 2 * f, a).expect("shape fixed above");
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub dropout: f64,
    pub weight: Tensor,
}

impl GcnLayer {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, dropout: f64) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            dropout,
            weight: Tensor::zeros(&[in_dim, out_dim]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    SuperGat(SuperGatLayer),
    Gcn(GcnLayer),
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        match self {
            Layer::SuperGat(l) => l.in_dim,
            Layer::Gcn(l) => l.in_dim,
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            Layer::SuperGat(l) => l.output_width(),
            Layer::Gcn(l) => l.out_dim,
        }
    }

    pub fn weight(&self) -> &Tensor {
        match self {
            Layer::SuperGat(l) => &l.weight,
            Layer::Gcn(l) => &l.weight,
        }
    }

    pub fn att(&self) -> Option<&Tensor> {
        match self {
            Layer::SuperGat(l) => l.att.as_ref(),
            Layer::Gcn(_) => None,
        }
    }

    fn tensors_mut(&mut self) -> (&mut Tensor, Option<&mut Tensor>) {
        match self {
            Layer::SuperGat(l) => (&mut l.weight, l.att.as_mut()),
            Layer::Gcn(l) => (&mut l.weight, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub task: Task,
}

/// Tape handles for one layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub weight: Var,
    pub att: Option<Var>,
}

impl Network {
    pub fn new(layers: Vec<Layer>, task: Task) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_width() != pair[1].in_dim() {
                return Err(Error::Config(format!(
                    "layer output width {} does not match next input {}",
                    pair[0].output_width(),
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers, task })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    pub fn kind(&self) -> Option<AttentionKind> {
        self.layers.iter().find_map(|l| match l {
            Layer::SuperGat(s) => Some(s.kind),
            Layer::Gcn(_) => None,
        })
    }

    /// Weight matrices then attention vectors, layer by layer.
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight());
            if let Some(a) = l.att() {
                out.push(a);
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            let (w, a) = l.tensors_mut();
            out.push(w);
            if let Some(a) = a {
                out.push(a);
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Glorot-uniform initialization; SuperGAT projections use the per-head
    /// shape and attention vectors use fan-in `2F`, fan-out 1.
    pub fn initialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for l in &mut self.layers {
            match l {
                Layer::SuperGat(s) => s.initialize(rng),
                Layer::Gcn(g) => g.weight = glorot_init(&[g.in_dim, g.out_dim], rng),
            }
        }
    }

    /// Registers all parameters on the tape as trainable leaves.
    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<LayerVars>> {
        self.layers
            .iter()
            .map(|l| {
                Ok(LayerVars {
                    weight: tape.param(l.weight().clone())?,
                    att: l.att().map(|a| tape.param(a.clone())).transpose()?,
                })
            })
            .collect()
    }

    /// Writes values back from a flat list in `parameters()` order.
    pub fn set_parameters(&mut self, values: Vec<Tensor>) -> Result<()> {
        let mut slots = self.parameters_mut();
        if slots.len() != values.len() {
            return Err(Error::shape(
                "Network::set_parameters",
                format!("{} tensors for {} parameters", values.len(), slots.len()),
            ));
        }
        for (slot, v) in slots.iter_mut().zip(values) {
            if slot.shape() != v.shape() {
                return Err(Error::shape(
                    "Network::set_parameters",
                    format!("{:?} into {:?}", v.shape(), slot.shape()),
                ));
            }
            **slot = v;
        }
        Ok(())
    }
}

/// Two SuperGAT layers: `F_in → K·F` (concatenated heads, ELU) then
/// `K·F → C` (averaged heads, logits).
pub fn build_network(
    kind: AttentionKind,
    in_dim: usize,
    hidden: usize,
    heads: usize,
    classes: usize,
    task: Task,
) -> Result<Network> {
    build_deep_network(kind, in_dim, hidden, heads, classes, 2, task)
}

/// SuperGAT stack with `depth − 1` concatenating ELU layers and a final
/// averaging layer.
pub fn build_deep_network(
    kind: AttentionKind,
    in_dim: usize,
    hidden: usize,
    heads: usize,
    classes: usize,
    depth: usize,
    task: Task,
) -> Result<Network> {
    if depth == 0 {
        return Err(Error::Config("network depth must be at least 1".into()));
    }
    let mut layers = Vec::with_capacity(depth);
    let mut width = in_dim;
    for _ in 0..depth - 1 {
        let l = SuperGatLayer::new(
            kind,
            width,
            hidden,
            heads,
            Activation::Elu,
            HeadMerge::Concat,
            0.0,
        )?;
        width = l.output_width();
        layers.push(Layer::SuperGat(l));
    }
    layers.push(Layer::SuperGat(SuperGatLayer::new(
        kind,
        width,
        classes,
        heads,
        Activation::Identity,
        HeadMerge::Mean,
        0.0,
    )?));
    Network::new(layers, task)
}

/// Two-layer GCN baseline `F_in → hidden → C` with ReLU.
pub fn build_gcn(in_dim: usize, hidden: usize, classes: usize, task: Task) -> Result<Network> {
    if in_dim == 0 || hidden == 0 || classes == 0 {
        return Err(Error::Config("GCN dims must be positive".into()));
    }
    Network::new(
        vec![
            Layer::Gcn(GcnLayer::new(in_dim, hidden, Activation::Relu, 0.0)),
            Layer::Gcn(GcnLayer::new(hidden, classes, Activation::Identity, 0.0)),
        ],
        task,
    )
}

impl Network {
    pub fn set_dropout(&mut self, p: f64) {
        for l in &mut self.layers {
            match l {
                Layer::SuperGat(s) => s.dropout = p,
                Layer::Gcn(g) => g.dropout = p,
            }
        }
    }
}

/// Graph-derived index arrays shared by every forward pass.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub num_nodes: usize,
    pub index: EdgeIndex,
    /// Symmetric GCN normalization `1/√(d̂_i d̂_j)` per directed edge, as `E × 1`.
    pub gcn_coef: Tensor,
}

impl GraphContext {
    /// Requires a self-loop on every node.
    pub fn new(g: &Graph) -> Result<Self> {
        if !g.has_self_loops() {
            return Err(Error::Structural(
                "message passing needs a self-loop on every node".into(),
            ));
        }
        let index = g.edge_index();
        let deg: Vec<f64> = (0..g.num_nodes())
            .map(|i| g.neighbors(i).len() as f64)
            .collect();
        let coef: Vec<f64> = index
            .center
            .iter()
            .zip(index.neighbor.iter())
            .map(|(&i, &j)| 1.0 / (deg[i] * deg[j]).sqrt())
            .collect();
        Ok(Self {
            num_nodes: g.num_nodes(),
            gcn_coef: Tensor::matrix(coef.len(), 1, coef)?,
            index,
        })
    }
}

/// Pairs scored for the edge loss of one layer.
#[derive(Debug, Clone)]
pub struct Supervision {
    pub left: Arc<[usize]>,
    pub right: Arc<[usize]>,
    /// 1 for edges, 0 for non-edges.
    pub targets: Arc<[f64]>,
}

impl Supervision {
    pub fn from_sets(pos: &EdgeSet, neg: &EdgeSet) -> Self {
        let mut left = Vec::with_capacity(pos.len() + neg.len());
        let mut right = Vec::with_capacity(left.capacity());
        let mut targets = Vec::with_capacity(left.capacity());
        for set in [pos, neg] {
            let y = if set.tag == EdgeTag::Positive {
                1.0
            } else {
                0.0
            };
            for &(i, j) in &set.pairs {
                left.push(i.min(j));
                right.push(i.max(j));
                targets.push(y);
            }
        }
        Self {
            left: left.into(),
            right: right.into(),
            targets: targets.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Output of one layer on the tape.
#[derive(Debug, Clone, Copy)]
pub struct LayerOutput {
    pub h: Var,
    /// `E × K` attention coefficients before dropout (SuperGAT only).
    pub alpha: Option<Var>,
    /// `P × 1` head-mean scores for the supervision pairs, when requested.
    pub phi_logit: Option<Var>,
}

fn activate(tape: &mut Tape, x: Var, act: Activation) -> Result<Var> {
    match act {
        Activation::Elu => tape.elu(x),
        Activation::Relu => tape.leaky_relu(x, 0.0),
        Activation::Identity => Ok(x),
    }
}

/// One layer: input dropout, projection, attention (or GCN normalization),
/// coefficient dropout, aggregation, head merge and activation.
#[allow(clippy::too_many_arguments)]
pub fn layer_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    layer: &Layer,
    vars: LayerVars,
    ctx: &GraphContext,
    h: Var,
    training: bool,
    supervision: Option<&Supervision>,
    rng: &mut R,
) -> Result<LayerOutput> {
    let width = tape.value(h).cols();
    if width != layer.in_dim() || tape.value(h).rows() != ctx.num_nodes {
        return Err(Error::shape(
            "layer_forward",
            format!(
                "input {:?} for layer expecting {} x {}",
                tape.value(h).shape(),
                ctx.num_nodes,
                layer.in_dim()
            ),
        ));
    }
    match layer {
        Layer::Gcn(l) => {
            let out = gcn_forward(tape, l, vars.weight, ctx, h, training, rng)?;
            Ok(LayerOutput {
                h: out,
                alpha: None,
                phi_logit: None,
            })
        }
        Layer::SuperGat(l) => {
            let idx = &ctx.index;
            let x = tape.dropout(h, l.dropout, training, rng)?;
            let proj = tape.matmul(x, vars.weight)?;
            let e = tape_scores(
                tape,
                l.kind,
                proj,
                vars.att,
                &idx.center,
                &idx.neighbor,
                l.heads,
            )?;
            let alpha = tape_normalize(tape, e, &idx.center, ctx.num_nodes, DEFAULT_LEAKY_SLOPE)?;
            let alpha_d = tape.dropout(alpha, l.dropout, training, rng)?;
            let agg = tape.aggregate(
                alpha_d,
                proj,
                idx.center.clone(),
                idx.neighbor.clone(),
                ctx.num_nodes,
                l.heads,
            )?;
            let merged = match l.merge {
                HeadMerge::Concat => agg,
                HeadMerge::Mean => tape.block_mean(agg, l.heads)?,
            };
            let out = activate(tape, merged, l.activation)?;
            let phi_logit = match supervision {
                Some(s) if !s.is_empty() => {
                    let ps =
                        tape_phi_scores(tape, l.kind, proj, vars.att, &s.left, &s.right, l.heads)?;
                    Some(tape.block_mean(ps, l.heads)?)
                }
                _ => None,
            };
            Ok(LayerOutput {
                h: out,
                alpha: Some(alpha),
                phi_logit,
            })
        }
    }
}

/// `ρ(D̂^{-1/2}(A+I)D̂^{-1/2} · dropout(H) · W)`.
pub fn gcn_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    layer: &GcnLayer,
    weight: Var,
    ctx: &GraphContext,
    h: Var,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let x = tape.dropout(h, layer.dropout, training, rng)?;
    let xw = tape.matmul(x, weight)?;
    let coef = tape.constant(ctx.gcn_coef.clone())?;
    let agg = tape.aggregate(
        coef,
        xw,
        ctx.index.center.clone(),
        ctx.index.neighbor.clone(),
        ctx.num_nodes,
        1,
    )?;
    activate(tape, agg, layer.activation)
}

/// Whole-network forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Var,
    pub layers: Vec<LayerOutput>,
}

impl Network {
    /// `supervision`, when given, must hold one entry per layer.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[LayerVars],
        ctx: &GraphContext,
        features: Var,
        training: bool,
        supervision: Option<&[Supervision]>,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        if vars.len() != self.layers.len() {
            return Err(Error::shape(
                "Network::forward",
                format!("{} bound layers for {}", vars.len(), self.layers.len()),
            ));
        }
        if let Some(s) = supervision {
            if s.len() != self.layers.len() {
                return Err(Error::shape(
                    "Network::forward",
                    format!(
                        "{} supervision sets for {} layers",
                        s.len(),
                        self.layers.len()
                    ),
                ));
            }
        }
        let mut h = features;
        let mut outs = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let sup = supervision.map(|s| &s[l]);
            let out = layer_forward(tape, layer, vars[l], ctx, h, training, sup, rng)?;
            h = out.h;
            outs.push(out);
        }
        Ok(ForwardOutput {
            logits: h,
            layers: outs,
        })
    }

    /// Evaluation-mode logits and per-layer attention coefficients. Self-loops
    /// must already be present.
    pub fn predict(&self, g: &Graph) -> Result<(Tensor, Vec<Option<Tensor>>)> {
        self.predict_with(&GraphContext::new(g)?, g.features())
    }

    pub fn predict_with(
        &self,
        ctx: &GraphContext,
        features: &Tensor,
    ) -> Result<(Tensor, Vec<Option<Tensor>>)> {
        let (tape, out) = self.eval_forward(ctx, features, None)?;
        let alphas = out
            .layers
            .iter()
            .map(|l| l.alpha.map(|a| tape.value(a).clone()))
            .collect();
        Ok((tape.value(out.logits).clone(), alphas))
    }

    /// Evaluation-mode head-mean φ logits of `pairs` at every layer
    /// (`None` for layers without attention).
    pub fn pair_logits(
        &self,
        ctx: &GraphContext,
        features: &Tensor,
        pairs: &[(usize, usize)],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let (left, right) = crate::attention::pair_index(pairs);
        let sup = Supervision {
            left,
            right,
            targets: vec![0.0; pairs.len()].into(),
        };
        let sups = vec![sup; self.layers.len()];
        let (tape, out) = self.eval_forward(ctx, features, Some(&sups))?;
        Ok(out
            .layers
            .iter()
            .map(|l| l.phi_logit.map(|p| tape.value(p).data().to_vec()))
            .collect())
    }

    fn eval_forward(
        &self,
        ctx: &GraphContext,
        features: &Tensor,
        supervision: Option<&[Supervision]>,
    ) -> Result<(Tape, ForwardOutput)> {
        let mut tape = Tape::new();
        let vars = self
            .layers
            .iter()
            .map(|l| {
                Ok(LayerVars {
                    weight: tape.constant(l.weight().clone())?,
                    att: l.att().map(|a| tape.constant(a.clone())).transpose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let x = tape.constant(features.clone())?;
        // evaluation mode draws nothing from the rng
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, &vars, ctx, x, false, supervision, &mut rng)?;
        Ok((tape, out))
    }
}

/// Tape handles of one evaluation of the combined objective.
#[derive(Debug, Clone)]
pub struct ObjectiveVars {
    pub total: Var,
    pub node_loss: Var,
    pub edge_losses: Vec<Var>,
    pub l2: Option<Var>,
    pub forward: ForwardOutput,
}

/// Inputs of the combined objective besides the network and its parameters.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveInputs<'a> {
    pub ctx: &'a GraphContext,
    pub features: &'a Tensor,
    pub labels: &'a crate::graph::Labels,
    pub rows: &'a [usize],
    /// One entry per layer; `None` drops the edge term.
    pub supervision: Option<&'a [Supervision]>,
    pub lambda_e: f64,
    pub lambda_2: f64,
    pub training: bool,
}

/// Builds `L_V + λ_E·Σ_l L_E^l + λ₂·Σ‖W‖²_F` on the tape.
pub fn objective<R: Rng + ?Sized>(
    tape: &mut Tape,
    net: &Network,
    vars: &[LayerVars],
    inp: ObjectiveInputs<'_>,
    rng: &mut R,
) -> Result<ObjectiveVars> {
    if !(inp.lambda_e >= 0.0 && inp.lambda_2 >= 0.0) {
        return Err(Error::Config("loss weights must be non-negative".into()));
    }
    let x = tape.constant(inp.features.clone())?;
    let out = net.forward(tape, vars, inp.ctx, x, inp.training, inp.supervision, rng)?;
    let lv = node_loss(tape, out.logits, inp.labels, inp.rows)?;
    let mut total = lv;
    let mut edge_losses = Vec::new();
    if let Some(sup) = inp.supervision {
        for (l, s) in out.layers.iter().zip(sup) {
            edge_losses.push(edge_loss(tape, l.phi_logit, &s.targets)?);
        }
        if let Some((&first, rest)) = edge_losses.split_first() {
            let mut sum = first;
            for &le in rest {
                sum = tape.add(sum, le)?;
            }
            let scaled = tape.scale(sum, inp.lambda_e)?;
            total = tape.add(total, scaled)?;
        }
    }
    let mut l2 = None;
    if inp.lambda_2 > 0.0 {
        for v in vars {
            let s = tape.sum_squares(v.weight)?;
            l2 = Some(match l2 {
                None => s,
                Some(acc) => tape.add(acc, s)?,
            });
        }
        if let Some(l2) = l2 {
            let scaled = tape.scale(l2, inp.lambda_2)?;
            total = tape.add(total, scaled)?;
        }
    }
    Ok(ObjectiveVars {
        total,
        node_loss: lv,
        edge_losses,
        l2,
        forward: out,
    })
}
