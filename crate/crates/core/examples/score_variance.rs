//! Monte Carlo spread of GO and DP scores under random uniform weights.

use attnforge::analysis::{verify_proposition, PropositionConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> attnforge::Result<()> {
    let cfg = PropositionConfig {
        f: 8,
        sigma_w2: 1.0 / 3.0,
        sigma_a2: 1.0 / 3.0,
        h_i: vec![0.5, -0.3, 0.9, 0.1],
        h_j: vec![0.4, 0.2, 0.7, -0.6],
        samples: 200_000,
    };
    let r = verify_proposition(&cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("Var[e_GO]  empirical {:.4}  analytic {:.4}", r.empirical_var_go, r.analytic_var_go);
    println!("Var[e_DP]  empirical {:.4}  lower bound {:.4}", r.empirical_var_dp, r.analytic_lower_bound_dp);
    println!("E[w^4]     empirical {:.5}  analytic {:.5}", r.empirical_w4, r.analytic_w4);
    Ok(())
}
