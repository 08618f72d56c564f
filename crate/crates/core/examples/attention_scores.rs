//! Scores one neighborhood with each attention form and prints the
//! normalized coefficients and the edge probabilities.

use attnforge::attention::{normalize, phi, phi_score, score, AttentionKind};
use attnforge::autodiff::Tensor;

fn main() -> attnforge::Result<()> {
    // projected features of a center node 0 and its neighbors 1..=3
    let h = [
        vec![0.9, -0.2, 0.4],
        vec![1.0, -0.1, 0.5],
        vec![-0.8, 0.6, 0.0],
        vec![0.2, 0.2, 0.2],
    ];
    let a = [0.3, -0.5, 0.8, 0.1, 0.4, -0.2];
    for kind in AttentionKind::ALL {
        let att = kind.has_attention_vector().then_some(&a[..]);
        let e: Vec<f64> = (0..4).map(|j| score(kind, &h[0], &h[j], att)).collect::<Result<_, _>>()?;
        let alpha = normalize(&Tensor::matrix(4, 1, e.clone())?, &[0; 4], 1, 0.2)?;
        let logits: Vec<f64> = (0..4)
            .map(|j| phi_score(kind, &h[0], &h[j], att))
            .collect::<Result<_, _>>()?;
        println!("{kind}");
        println!("  e     {:.3?}", e);
        println!("  alpha {:.3?}", alpha.data());
        println!("  phi   {:.3?}", phi(&logits));
    }
    Ok(())
}
