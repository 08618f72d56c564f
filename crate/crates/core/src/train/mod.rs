//! Initialization, Adam, the full-batch training loop with early stopping,
//! and evaluation metrics.

mod metrics;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{accuracy, argmax_predictions, auc, micro_f1};

use crate::attention::sigmoid;
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{negative_sample, sample_supervision_edges, EdgeSet, Graph, Labels};
use crate::model::{
    node_loss_values, objective, total_loss, GraphContext, LossBreakdown, Network, ObjectiveInputs,
    Supervision, Task,
};

/// Uniform on `[−L, L]` with `L = √(6 / (fan_in + fan_out))`. A 1-D shape
/// `[n]` uses `fan_in = n`, `fan_out = 1`.
pub fn glorot_init<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let (fan_in, fan_out) = match shape {
        [n] => (*n, 1),
        [r, c] => (*r, *c),
        _ => panic!("glorot_init expects a 1-D or 2-D shape, got {shape:?}"),
    };
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_params(params: &[&Tensor]) -> Self {
        Self::new(&params.iter().map(|p| p.len()).collect::<Vec<_>>())
    }
}

/// Bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment buffers",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::shape(
                "adam_step",
                format!("parameter of {} values, gradient of {}", p.len(), g.len()),
            ));
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (k, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, x) in p.data_mut().iter_mut().enumerate() {
            let g = grads[k][i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            *x -= lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub dropout: f64,
    pub lambda_2: f64,
    pub lambda_e: f64,
    /// Negative pairs per positive edge.
    pub p_n: f64,
    /// Per-epoch retention probability of each supervision pair.
    pub p_e: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            dropout: 0.6,
            lambda_2: 5e-4,
            lambda_e: 4.0,
            p_n: 0.5,
            p_e: 1.0,
            max_epochs: 500,
            patience: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.p_e > 0.0 && self.p_e <= 1.0) {
            return bad(format!("p_e must be in (0, 1], got {}", self.p_e));
        }
        if !(self.p_n >= 0.0 && self.p_n.is_finite()) {
            return bad(format!("p_n must be >= 0, got {}", self.p_n));
        }
        if !(self.lambda_e >= 0.0 && self.lambda_2 >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return bad("patience and max_epochs must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub node_loss: f64,
    pub edge_losses: Vec<f64>,
    pub val_loss: f64,
    pub val_acc: f64,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_val_loss: f64,
}

impl History {
    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epochs.is_empty() {
            0.0
        } else {
            self.total_seconds() / self.epochs.len() as f64
        }
    }
}

/// Node loss and score (accuracy, or micro-F1 for multi-label tasks) over `rows`.
pub fn score_rows(
    logits: &Tensor,
    labels: &Labels,
    rows: &[usize],
    task: Task,
) -> Result<(f64, f64)> {
    let loss = node_loss_values(logits, labels, rows)?;
    let score = match task {
        Task::SingleLabel => accuracy(logits, labels, rows)?,
        Task::MultiLabel => {
            let probs = Tensor::new(
                logits.shape().to_vec(),
                logits.data().iter().map(|&z| sigmoid(z)).collect(),
            )?;
            micro_f1(&probs, labels, rows, 0.5)?
        }
    };
    Ok((loss, score))
}

fn divergence(epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { op } => Error::Divergence {
            epoch,
            detail: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

/// Full-batch training with per-epoch negative sampling and early stopping.
///
/// Returns the network restored to the epoch with the best validation
/// score (ties broken by lower validation loss).
pub fn train(net: &Network, g: &Graph, cfg: &TrainConfig) -> Result<(Network, History)> {
    cfg.validate()?;
    let train_rows = g.split().train_indices();
    let val_rows = g.split().val_indices();
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(Error::Split(
            "training needs non-empty train and val masks".into(),
        ));
    }
    if g.features().cols() != net.input_dim() {
        return Err(Error::Config(format!(
            "features have {} columns, network expects {}",
            g.features().cols(),
            net.input_dim()
        )));
    }
    let looped = g.add_self_loops();
    let ctx = GraphContext::new(&looped)?;
    let positives = EdgeSet::positive_from(g);
    let use_edge_loss = cfg.lambda_e > 0.0 && net.kind().is_some();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = net.clone();
    net.set_dropout(cfg.dropout);
    let mut adam = AdamState::for_params(&net.parameters());
    let mut history = History {
        best_val_acc: f64::NEG_INFINITY,
        best_val_loss: f64::INFINITY,
        ..History::default()
    };
    let mut best = net.clone();
    let (mut min_loss, mut max_acc) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let supervision = if use_edge_loss {
            let mut sets = Vec::with_capacity(net.layers.len());
            for _ in &net.layers {
                let neg = negative_sample(&looped, cfg.p_n, &mut rng)?;
                let (p, n) = sample_supervision_edges(&positives, &neg, cfg.p_e, &mut rng)?;
                sets.push(Supervision::from_sets(&p, &n));
            }
            Some(sets)
        } else {
            None
        };

        let mut tape = Tape::new();
        let vars = net.bind(&mut tape)?;
        let step = (|| -> Result<LossBreakdown> {
            let inputs = ObjectiveInputs {
                ctx: &ctx,
                features: g.features(),
                labels: g.labels(),
                rows: &train_rows,
                supervision: supervision.as_deref(),
                lambda_e: cfg.lambda_e,
                lambda_2: cfg.lambda_2,
                training: true,
            };
            let obj = objective(&mut tape, &net, &vars, inputs, &mut rng)?;
            tape.backward(obj.total)?;
            let edge_vals = obj
                .edge_losses
                .iter()
                .map(|&v| tape.value(v).item())
                .collect::<Result<Vec<_>>>()?;
            let l2 = obj
                .l2
                .map(|v| tape.value(v).item())
                .transpose()?
                .unwrap_or(0.0);
            let mut b = total_loss(
                tape.value(obj.node_loss).item()?,
                &edge_vals,
                l2,
                cfg.lambda_e,
                cfg.lambda_2,
            )?;
            b.total = tape.value(obj.total).item()?;
            Ok(b)
        })()
        .map_err(|e| divergence(epoch, e))?;
        if !step.total.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: "non-finite training loss".into(),
            });
        }

        let grads: Vec<Vec<f64>> = vars
            .iter()
            .flat_map(|v| std::iter::once(v.weight).chain(v.att))
            .zip(net.parameters())
            .map(|(var, p)| {
                tape.grad(var)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; p.len()])
            })
            .collect();
        drop(tape);
        adam_step(&mut net.parameters_mut(), &grads, &mut adam, cfg.lr)?;

        let (logits, _) = net
            .predict_with(&ctx, g.features())
            .map_err(|e| divergence(epoch, e))?;
        let (val_loss, val_acc) = score_rows(&logits, g.labels(), &val_rows, net.task)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: step.total,
            node_loss: step.node_loss,
            edge_losses: step.edge_losses,
            val_loss,
            val_acc,
            seconds: start.elapsed().as_secs_f64(),
        });
        log::debug!(
            "epoch {epoch}: train {:.4} val loss {val_loss:.4} acc {val_acc:.4}",
            step.total
        );

        if val_acc > history.best_val_acc
            || (val_acc == history.best_val_acc && val_loss < history.best_val_loss)
        {
            history.best_epoch = epoch;
            history.best_val_acc = val_acc;
            history.best_val_loss = val_loss;
            best = net.clone();
        }
        let improved = val_loss < min_loss || val_acc > max_acc;
        min_loss = min_loss.min(val_loss);
        max_acc = max_acc.max(val_acc);
        if improved {
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, history))
}

/// Test-set node loss and score for a trained network.
pub fn evaluate(net: &Network, g: &Graph, rows: &[usize]) -> Result<(f64, f64)> {
    let (logits, _) = net.predict(&g.add_self_loops())?;
    score_rows(&logits, g.labels(), rows, net.task)
}

#[cfg(test)]
mod tests;
