use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::Labels;

/// Row-wise argmax; the first maximum wins.
pub fn argmax_predictions(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(logits: &Tensor, labels: &Labels, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Evaluation("accuracy over an empty mask".into()));
    }
    let classes = labels.single_classes()?;
    let pred = argmax_predictions(logits);
    let hits = rows.iter().filter(|&&r| pred[r] == classes[r]).count();
    Ok(hits as f64 / rows.len() as f64)
}

/// Micro-averaged F1 with predictions `probs ≥ threshold`.
pub fn micro_f1(probs: &Tensor, labels: &Labels, rows: &[usize], threshold: f64) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Evaluation("micro-F1 over an empty mask".into()));
    }
    let sets = labels.multi_sets()?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for &r in rows {
        for (c, &p) in probs.row(r).iter().enumerate() {
            let truth = sets[r].binary_search(&c).is_ok();
            match (p >= threshold, truth) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
    }
    let denom = 2 * tp + fp + fneg;
    Ok(if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    })
}

/// Area under the ROC curve via the rank-sum statistic, ties sharing the
/// average rank.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::shape(
            "auc",
            format!("{} scores, {} labels", scores.len(), positive.len()),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Evaluation("AUC over non-finite scores".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Evaluation(
            "AUC is undefined unless both classes are present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * avg;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}
