//! Trains SuperGAT-MX and GAT-GO on one synthetic graph and compares test
//! accuracy.
//!
//!     cargo run --release --example node_classification -- 0.8 5

use attnforge::recipe::{synthetic_train_config, train_synthetic, ModelKind};
use attnforge::synthetic::{SplitSizes, SyntheticSpec};

fn main() -> attnforge::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let h = args.first().copied().unwrap_or(0.8);
    let d = args.get(1).copied().unwrap_or(5.0);
    let spec = SyntheticSpec {
        d_avg: d,
        h_target: h,
        n: 200,
        ..SyntheticSpec::default()
    };
    let split = SplitSizes {
        train_per_class: 20,
        val: 300,
        test: 600,
    };
    let cfg = attnforge::train::TrainConfig {
        max_epochs: 150,
        ..synthetic_train_config()
    };
    for model in [ModelKind::GatGo, ModelKind::SuperGatMx, ModelKind::SuperGatSd, ModelKind::Gcn] {
        let r = train_synthetic(model, &spec, split, &cfg)?;
        println!(
            "{:<12} test acc {:.3}  val acc {:.3}  epochs {}",
            model.name(),
            r.test_acc,
            r.val_acc,
            r.epochs
        );
    }
    Ok(())
}
