use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Labels;

/// Probability clamp used by the edge loss.
pub const PHI_CLAMP: f64 = 1e-12;

/// Mean node loss over `rows`: softmax cross-entropy for single-label
/// tasks, per-class sigmoid cross-entropy for multi-label tasks.
pub fn node_loss(tape: &mut Tape, logits: Var, labels: &Labels, rows: &[usize]) -> Result<Var> {
    if rows.is_empty() {
        return Err(Error::Config("node loss over an empty mask".into()));
    }
    let rows: Arc<[usize]> = Arc::from(rows);
    match labels {
        Labels::Single { classes, .. } => {
            let y: Arc<[usize]> = rows.iter().map(|&r| classes[r]).collect();
            tape.softmax_cross_entropy(logits, rows, y)
        }
        Labels::Multi { sets, num_classes } => {
            let mut y = vec![0.0; rows.len() * num_classes];
            for (t, &r) in rows.iter().enumerate() {
                for &c in &sets[r] {
                    y[t * num_classes + c] = 1.0;
                }
            }
            tape.sigmoid_bce(logits, rows, y.into())
        }
    }
}

/// Value-only node loss, computed node by node.
pub fn node_loss_values(
    logits: &crate::autodiff::Tensor,
    labels: &Labels,
    rows: &[usize],
) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Config("node loss over an empty mask".into()));
    }
    let mut total = 0.0;
    for &r in rows {
        let z = logits.row(r);
        total += match labels {
            Labels::Single { classes, .. } => {
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                lse - z[classes[r]]
            }
            Labels::Multi { sets, .. } => {
                let sp = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
                z.iter()
                    .enumerate()
                    .map(|(c, &v)| if sets[r].contains(&c) { sp(-v) } else { sp(v) })
                    .sum::<f64>()
                    / z.len() as f64
            }
        };
    }
    Ok(total / rows.len() as f64)
}

/// Binary cross-entropy of `σ(phi_logit)` against edge presence, with
/// probabilities clamped to `[ε, 1−ε]`. `None` (no pairs) yields 0.
pub fn edge_loss(tape: &mut Tape, phi_logit: Option<Var>, targets: &Arc<[f64]>) -> Result<Var> {
    match phi_logit {
        Some(z) if !targets.is_empty() => {
            let p = tape.sigmoid(z)?;
            tape.binary_cross_entropy(p, targets.clone(), PHI_CLAMP)
        }
        _ => {
            log::warn!("edge loss over an empty pair set; using 0");
            tape.constant(crate::autodiff::Tensor::scalar(0.0))
        }
    }
}

/// Value-only edge loss over probabilities `phi` and presence flags.
pub fn edge_loss_values(phi: &[f64], positive: &[bool]) -> Result<f64> {
    if phi.len() != positive.len() {
        return Err(Error::shape(
            "edge_loss_values",
            format!("{} probabilities, {} flags", phi.len(), positive.len()),
        ));
    }
    if phi.is_empty() {
        log::warn!("edge loss over an empty pair set; using 0");
        return Ok(0.0);
    }
    let sum: f64 = phi
        .iter()
        .zip(positive)
        .map(|(&p, &pos)| {
            let p = p.clamp(PHI_CLAMP, 1.0 - PHI_CLAMP);
            if pos {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / phi.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub node_loss: f64,
    pub edge_losses: Vec<f64>,
    pub l2: f64,
    pub lambda_e: f64,
    pub lambda_2: f64,
    pub total: f64,
}

/// `L_V + λ_E·Σ L_E + λ₂·l2`.
pub fn total_loss(
    node_loss: f64,
    edge_losses: &[f64],
    l2: f64,
    lambda_e: f64,
    lambda_2: f64,
) -> Result<LossBreakdown> {
    if !(lambda_e >= 0.0 && lambda_2 >= 0.0) {
        return Err(Error::Config(format!(
            "loss weights must be non-negative (lambda_e {lambda_e}, lambda_2 {lambda_2})"
        )));
    }
    let total = node_loss + lambda_e * edge_losses.iter().sum::<f64>() + lambda_2 * l2;
    Ok(LossBreakdown {
        node_loss,
        edge_losses: edge_losses.to_vec(),
        l2,
        lambda_e,
        lambda_2,
        total,
    })
}
