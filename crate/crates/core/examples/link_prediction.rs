//! Held-out edge AUC of the edge probability for GO and DP attention.

use attnforge::analysis::link_prediction_run;
use attnforge::attention::AttentionKind;
use attnforge::model::{build_network, Task};
use attnforge::synthetic::{generate_with_split, SyntheticSpec};
use attnforge::train::TrainConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> attnforge::Result<()> {
    let spec = SyntheticSpec {
        n: 100,
        d_avg: 20.0,
        h_target: 0.8,
        ..SyntheticSpec::default()
    };
    let g = generate_with_split(&spec, 20, 200, 400)?;
    let cfg = TrainConfig {
        lambda_e: 1.0,
        max_epochs: 100,
        ..TrainConfig::default()
    };
    for kind in [AttentionKind::Go, AttentionKind::Dp] {
        let mut net = build_network(kind, 4, 8, 8, 10, Task::SingleLabel)?;
        net.initialize(&mut ChaCha8Rng::seed_from_u64(1));
        let r = link_prediction_run(&net, &g, &cfg, 1)?;
        println!("{kind}: val AUC {:.3}  test AUC {:.3}", r.val_auc, r.test_auc);
    }
    Ok(())
}
