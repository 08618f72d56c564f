//! Trains a 4-layer DP network and prints how far each layer's attention
//! sits from the label-agreement distribution.

use attnforge::analysis::kld_study;
use attnforge::attention::AttentionKind;
use attnforge::model::{build_deep_network, Task};
use attnforge::synthetic::{generate_with_split, SyntheticSpec};
use attnforge::train::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> attnforge::Result<()> {
    let spec = SyntheticSpec {
        n: 100,
        d_avg: 10.0,
        h_target: 0.5,
        ..SyntheticSpec::default()
    };
    let g = generate_with_split(&spec, 20, 200, 400)?;
    let mut net = build_deep_network(AttentionKind::Dp, 4, 8, 4, 10, 4, Task::SingleLabel)?;
    net.initialize(&mut ChaCha8Rng::seed_from_u64(0));
    let cfg = TrainConfig {
        max_epochs: 100,
        ..TrainConfig::default()
    };
    let (net, _) = train(&net, &g, &cfg)?;
    let report = kld_study(&net, &g, &[])?;
    print!("{}", report.to_csv());
    Ok(())
}
