//! Acceptance run: each criterion prints one PASS/FAIL line with its
//! measurement. Pass criterion numbers to run a subset:
//!
//!     cargo test --release --test acceptance -- 4 9
//!
//! The Cora check reads `ATTNFORGE_CORA_DIR` (default `data/cora` under the
//! workspace root) and is skipped when the directory is absent.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use attnforge::analysis::{
    kld_study, link_prediction_run, uniform_kld, verify_proposition, PropositionConfig,
};
use attnforge::attention::AttentionKind;
use attnforge::autodiff::{grad_check, Tensor};
use attnforge::cli::{main_with_args, RESULT_FILE};
use attnforge::graph::{negative_sample, EdgeSet, Graph, Labels};
use attnforge::io::{ingest_dataset, IngestOptions};
use attnforge::model::{
    build_deep_network, build_gcn, build_network, objective, Activation, GraphContext, HeadMerge,
    Layer, LayerVars, Network, ObjectiveInputs, Supervision, Task,
};
use attnforge::recipe::{
    synthetic_train_config, train_synthetic, welch_t_test, ModelKind, RunOutcome,
};
use attnforge::synthetic::{generate_with_split, SplitSizes, SyntheticSpec};
use attnforge::train::{auc, evaluate, train, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

struct Verdict {
    pass: bool,
    skipped: bool,
    detail: String,
}

impl Verdict {
    fn check(pass: bool, detail: String) -> Self {
        Self {
            pass,
            skipped: false,
            detail,
        }
    }
}

fn random_graph(n: usize, p: f64, feat: usize, classes: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let x = (0..n * feat).map(|_| rng.random_range(-1.0..1.0)).collect();
    Graph::from_edge_list(n, &edges, Tensor::matrix(n, feat, x).unwrap(), Labels::single(labels))
        .unwrap()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

// 1. Finite differences of the full objective.

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for kind in AttentionKind::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_graph(12, 0.3, 3, 2, &mut rng);
        let mut net = build_network(kind, 3, 2, 2, 2, Task::SingleLabel).unwrap();
        net.initialize(&mut rng);
        net.set_dropout(0.3);
        let pos = EdgeSet::positive_from(&g);
        let neg = negative_sample(&g, 1.0, &mut rng).unwrap();
        let sup = Supervision::from_sets(&pos, &neg);
        let sup = vec![sup.clone(), sup];
        let g = g.add_self_loops();
        let ctx = GraphContext::new(&g).unwrap();
        let rows: Vec<usize> = (0..6).collect();
        let params: Vec<Tensor> = net.parameters().into_iter().cloned().collect();
        let err = grad_check(
            |tape, vars| {
                let mut it = vars.iter().copied();
                let lv: Vec<LayerVars> = net
                    .layers
                    .iter()
                    .map(|l| LayerVars {
                        weight: it.next().unwrap(),
                        att: l.att().map(|_| it.next().unwrap()),
                    })
                    .collect();
                // same dropout masks and edge draws at every evaluation
                let mut rng = ChaCha8Rng::seed_from_u64(99);
                let inputs = ObjectiveInputs {
                    ctx: &ctx,
                    features: g.features(),
                    labels: g.labels(),
                    rows: &rows,
                    supervision: Some(&sup),
                    lambda_e: 2.0,
                    lambda_2: 0.01,
                    training: true,
                };
                Ok(objective(tape, &net, &lv, inputs, &mut rng)?.total)
            },
            &params,
            1e-6,
        )
        .unwrap();
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict::check(
        worst <= 1e-4 && secs < 30.0,
        format!("max relative error {worst:.2e} over GO/DP/SD/MX in {secs:.1} s"),
    )
}

// 2. Coefficients of every closed neighborhood sum to one.

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..40);
        let p = rng.random_range(0.05..0.5);
        let g = random_graph(n, p, 4, 3, &mut rng).add_self_loops();
        for kind in AttentionKind::ALL {
            let mut net = build_deep_network(kind, 4, 3, 2, 3, 3, Task::SingleLabel).unwrap();
            net.initialize(&mut rng);
            let (_, alphas) = net.predict(&g).unwrap();
            for alpha in alphas.iter().flatten() {
                for i in 0..n {
                    for k in 0..alpha.cols() {
                        let s: f64 = (g.offsets()[i]..g.offsets()[i + 1])
                            .map(|e| alpha.get(e, k))
                            .sum();
                        worst = worst.max((s - 1.0).abs());
                    }
                }
            }
        }
    }
    Verdict::check(
        worst <= 1e-12,
        format!("max |sum alpha - 1| = {worst:.1e} over 50 graphs, 3 layers, 4 kinds"),
    )
}

// 3. Sparse layers against explicit N × N matrices.

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn activate(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Elu => elu(x),
        Activation::Relu => x.max(0.0),
        Activation::Identity => x,
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dense_score(kind: AttentionKind, hi: &[f64], hj: &[f64], a: Option<&[f64]>) -> f64 {
    let f = hi.len();
    let dot: f64 = hi.iter().zip(hj).map(|(x, y)| x * y).sum();
    let go = || {
        let a = a.unwrap();
        (0..f).map(|c| a[c] * hi[c] + a[f + c] * hj[c]).sum::<f64>()
    };
    match kind {
        AttentionKind::Go => go(),
        AttentionKind::Dp => dot,
        AttentionKind::Sd => dot / (f as f64).sqrt(),
        AttentionKind::Mx => go() * sigmoid(dot),
    }
}

fn dense_matmul(h: &[Vec<f64>], w: &Tensor) -> Vec<Vec<f64>> {
    h.iter()
        .map(|row| {
            (0..w.cols())
                .map(|c| row.iter().enumerate().map(|(t, v)| v * w.get(t, c)).sum())
                .collect()
        })
        .collect()
}

fn dense_network(net: &Network, g: &Graph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| g.has_edge(i, j)).collect())
        .collect();
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| g.features().row(i).to_vec()).collect();
    for layer in &net.layers {
        h = match layer {
            Layer::Gcn(l) => {
                let deg: Vec<f64> = adj
                    .iter()
                    .map(|r| r.iter().filter(|&&b| b).count() as f64)
                    .collect();
                let hw = dense_matmul(&h, &l.weight);
                (0..n)
                    .map(|i| {
                        (0..l.out_dim)
                            .map(|c| {
                                let v: f64 = (0..n)
                                    .filter(|&j| adj[i][j])
                                    .map(|j| hw[j][c] / (deg[i] * deg[j]).sqrt())
                                    .sum();
                                activate(l.activation, v)
                            })
                            .collect()
                    })
                    .collect()
            }
            Layer::SuperGat(l) => {
                let f = l.out_dim;
                let mut out = vec![vec![0.0; l.output_width()]; n];
                for k in 0..l.heads {
                    let hp = l.head(k).unwrap();
                    let proj = dense_matmul(&h, &hp.w);
                    for i in 0..n {
                        let mut w = vec![0.0; n];
                        for j in (0..n).filter(|&j| adj[i][j]) {
                            let e = dense_score(l.kind, &proj[i], &proj[j], hp.a.as_deref());
                            w[j] = if e > 0.0 { e } else { 0.2 * e }.exp();
                        }
                        let z: f64 = w.iter().sum();
                        for c in 0..f {
                            let v: f64 = (0..n).map(|j| w[j] / z * proj[j][c]).sum();
                            match l.merge {
                                HeadMerge::Concat => out[i][k * f + c] = v,
                                HeadMerge::Mean => out[i][c] += v / l.heads as f64,
                            }
                        }
                    }
                }
                for row in &mut out {
                    for v in row.iter_mut() {
                        *v = activate(l.activation, *v);
                    }
                }
                out
            }
        };
    }
    h
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for trial in 0..40 {
        let n = rng.random_range(2..=15);
        let g = random_graph(n, 0.3, 5, 3, &mut rng).add_self_loops();
        let kind = AttentionKind::ALL[trial % 4];
        let mut nets = vec![build_network(kind, 5, 4, 3, 3, Task::SingleLabel).unwrap()];
        if trial % 4 == 0 {
            nets.push(build_gcn(5, 6, 3, Task::SingleLabel).unwrap());
        }
        for mut net in nets {
            net.initialize(&mut rng);
            let (logits, _) = net.predict(&g).unwrap();
            let want = dense_network(&net, &g);
            for (i, row) in want.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    worst = worst.max((logits.get(i, c) - v).abs());
                }
            }
        }
    }
    Verdict::check(
        worst <= 1e-10,
        format!("max |sparse - dense| = {worst:.1e} on 40 graphs with N <= 15, SuperGAT and GCN"),
    )
}

// 4. Monte Carlo spread of GO and DP scores.

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = 8;
    let cfg = PropositionConfig {
        f: 8,
        sigma_w2: 1.0 / 3.0,
        sigma_a2: 1.0 / 3.0,
        h_i: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        h_j: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        samples: 1_000_000,
    };
    let r = verify_proposition(&cfg, &mut rng).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let go_err = (r.empirical_var_go - r.analytic_var_go).abs() / r.analytic_var_go;
    let dp_ok = r.empirical_var_dp >= 0.99 * r.analytic_lower_bound_dp;
    let w4_err = (r.empirical_w4 - r.analytic_w4).abs() / r.analytic_w4;
    Verdict::check(
        go_err <= 0.03 && dp_ok && w4_err <= 0.02 && secs < 60.0,
        format!(
            "GO var rel err {:.2}%, DP var {:.3} vs bound {:.3}, w^4 rel err {:.2}%, {secs:.1} s",
            100.0 * go_err,
            r.empirical_var_dp,
            r.analytic_lower_bound_dp,
            100.0 * w4_err
        ),
    )
}

// 5. Generator degree and homophily.

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let (mut h_range, mut d_range) = ((f64::MAX, f64::MIN), (f64::MAX, f64::MIN));
    for seed in 0..20 {
        let spec = SyntheticSpec {
            n: 500,
            c: 10,
            d_avg: 20.0,
            h_target: 0.7,
            seed,
            ..SyntheticSpec::default()
        };
        let g = generate_with_split(&spec, 20, 500, 1000).unwrap();
        let h = g.homophily().unwrap();
        let (d, _) = g.degree_stats();
        h_range = (h_range.0.min(h), h_range.1.max(h));
        d_range = (d_range.0.min(d), d_range.1.max(d));
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = h_range.0 >= 0.67
        && h_range.1 <= 0.73
        && d_range.0 >= 18.5
        && d_range.1 <= 21.5
        && secs < 60.0;
    Verdict::check(
        ok,
        format!(
            "homophily in [{:.4}, {:.4}], mean degree in [{:.3}, {:.3}] over 20 seeds, {secs:.1} s",
            h_range.0, h_range.1, d_range.0, d_range.1
        ),
    )
}

// 6. Synthetic accuracy.

const RUN_LIMIT: Duration = Duration::from_secs(120);

fn timed_run(model: ModelKind, spec: &SyntheticSpec, cfg: &TrainConfig) -> (RunOutcome, Duration) {
    let start = Instant::now();
    let r = train_synthetic(model, spec, SplitSizes::default(), cfg).unwrap();
    (r, start.elapsed())
}

fn synthetic(h: f64, d: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n: 500,
        c: 10,
        d_avg: d,
        h_target: h,
        seed,
        ..SyntheticSpec::default()
    }
}

/// λ_E for a self-supervised model, picked by validation accuracy on a
/// graph seed that is not used for scoring.
fn select_lambda_e(model: ModelKind, h: f64, d: f64, base: &TrainConfig, grid: &[f64]) -> (f64, Duration) {
    let tune_seed = 1000;
    let mut best = (f64::MIN, grid[0]);
    let mut slowest = Duration::ZERO;
    for &lambda_e in grid {
        let cfg = TrainConfig {
            lambda_e,
            seed: tune_seed,
            ..base.clone()
        };
        let (r, t) = timed_run(model, &synthetic(h, d, tune_seed), &cfg);
        slowest = slowest.max(t);
        if r.val_acc > best.0 {
            best = (r.val_acc, lambda_e);
        }
    }
    (best.1, slowest)
}

fn seed_means(
    pairs: &[(ModelKind, &TrainConfig)],
    h: f64,
    d: f64,
    seeds: u64,
) -> (Vec<Vec<f64>>, Duration) {
    let mut slowest = Duration::ZERO;
    let mut accs = vec![Vec::new(); pairs.len()];
    for seed in 0..seeds {
        for (m, (model, cfg)) in pairs.iter().enumerate() {
            let cfg = TrainConfig {
                seed,
                ..(*cfg).clone()
            };
            let (r, t) = timed_run(*model, &synthetic(h, d, seed), &cfg);
            slowest = slowest.max(t);
            accs[m].push(r.test_acc);
        }
    }
    (accs, slowest)
}

fn criterion_6() -> Verdict {
    let base = synthetic_train_config();

    // (a)
    let (a, ta) = timed_run(ModelKind::GatGo, &synthetic(0.9, 20.0, 0), &base);
    let pass_a = a.test_acc >= 0.97 && ta < RUN_LIMIT;

    // (b)
    let (le_b, tune_b) = select_lambda_e(ModelKind::SuperGatMx, 0.8, 5.0, &base, &LAMBDA_E_GRID);
    let mx_cfg = TrainConfig {
        lambda_e: le_b,
        ..base.clone()
    };
    let (b, tb) = seed_means(
        &[(ModelKind::GatGo, &base), (ModelKind::SuperGatMx, &mx_cfg)],
        0.8,
        5.0,
        10,
    );
    let (go_b, mx_b) = (mean(&b[0]), mean(&b[1]));
    let pass_b = mx_b >= go_b && tb.max(tune_b) < RUN_LIMIT;

    // (c) epochs capped so that one run fits the time limit at degree 50
    let capped = TrainConfig {
        max_epochs: DENSE_EPOCH_CAP,
        ..base.clone()
    };
    let (le_c, tune_c) =
        select_lambda_e(ModelKind::SuperGatSd, 0.1, 50.0, &capped, &DENSE_LAMBDA_E_GRID);
    let sd_cfg = TrainConfig {
        lambda_e: le_c,
        ..capped.clone()
    };
    let (c, tc) = seed_means(
        &[(ModelKind::GatGo, &capped), (ModelKind::SuperGatSd, &sd_cfg)],
        0.1,
        50.0,
        10,
    );
    let (go_c, sd_c) = (mean(&c[0]), mean(&c[1]));
    let pass_c = sd_c - go_c >= 0.02 && tc.max(tune_c) < RUN_LIMIT;

    Verdict::check(
        pass_a && pass_b && pass_c,
        format!(
            "(a) GAT-GO {:.3} [{}] ({:.0} s); (b) MX {mx_b:.4} vs GO {go_b:.4}, lambda_E {le_b} [{}]; \
             (c) SD {sd_c:.4} vs GO {go_c:.4}, gap {:+.2} pts, lambda_E {le_c}, {DENSE_EPOCH_CAP} epochs [{}]; \
             slowest run {:.0} s",
            a.test_acc,
            pf(pass_a),
            ta.as_secs_f64(),
            pf(pass_b),
            100.0 * (sd_c - go_c),
            pf(pass_c),
            ta.max(tb).max(tc).max(tune_b).max(tune_c).as_secs_f64()
        ),
    )
}

const LAMBDA_E_GRID: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];
const DENSE_LAMBDA_E_GRID: [f64; 2] = [1e-1, 1.0];
const DENSE_EPOCH_CAP: usize = 120;

fn pf(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "fail"
    }
}

// 7. Link prediction, DP against GO.

const LINK_EPOCHS: usize = 100;

fn criterion_7() -> Verdict {
    let cfg = TrainConfig {
        lambda_e: 1.0,
        max_epochs: LINK_EPOCHS,
        ..synthetic_train_config()
    };
    let mut aucs = [Vec::new(), Vec::new()];
    for seed in 0..5 {
        let g = generate_with_split(&synthetic(0.8, 20.0, seed), 20, 500, 1000).unwrap();
        for (slot, kind) in [AttentionKind::Dp, AttentionKind::Go].into_iter().enumerate() {
            let mut net = build_network(kind, g.features().cols(), 8, 8, 10, Task::SingleLabel).unwrap();
            net.initialize(&mut ChaCha8Rng::seed_from_u64(seed));
            let cfg = TrainConfig { seed, ..cfg.clone() };
            aucs[slot].push(link_prediction_run(&net, &g, &cfg, seed).unwrap().test_auc);
        }
    }
    let (dp, go) = (mean(&aucs[0]), mean(&aucs[1]));
    Verdict::check(
        dp >= 0.75 && dp >= go,
        format!("mean test AUC over 5 seeds: DP {dp:.4}, GO {go:.4}"),
    )
}

// 8. KLD sanity and the depth trend.

const KLD_DEGREE: f64 = 10.0;

fn criterion_8() -> Verdict {
    // fully homophilous: a single class
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = random_graph(40, 0.2, 3, 1, &mut rng).add_self_loops();
    let uniform_max = uniform_kld(&g, 0.0)
        .unwrap()
        .into_iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));

    // plain attention, no edge supervision
    let cfg = TrainConfig {
        max_epochs: 200,
        lambda_e: 0.0,
        ..TrainConfig::default()
    };
    let mut agree = 0;
    let mut all_valid = true;
    let mut medians = Vec::new();
    for seed in 0..5 {
        let spec = SyntheticSpec {
            d_avg: KLD_DEGREE,
            h_target: 0.5,
            seed,
            ..SyntheticSpec::default()
        };
        let g = generate_with_split(&spec, 20, 500, 1000).unwrap();
        let mut net = build_deep_network(AttentionKind::Dp, 4, 8, 8, 10, 4, Task::SingleLabel).unwrap();
        net.initialize(&mut ChaCha8Rng::seed_from_u64(seed));
        let (net, _) = train(&net, &g, &TrainConfig { seed, ..cfg.clone() }).unwrap();
        let report = kld_study(&net, &g, &[]).unwrap();
        for l in &report.layers {
            all_valid &= l.values.iter().flatten().all(|v| v.is_finite() && *v >= 0.0);
        }
        let first = median(&report.layers[0].values.concat());
        let last = median(&report.layers[3].values.concat());
        medians.push((first, last));
        if last >= first {
            agree += 1;
        }
    }
    let text: Vec<String> = medians
        .iter()
        .map(|(a, b)| format!("{a:.3}->{b:.3}"))
        .collect();
    Verdict::check(
        uniform_max == 0.0 && all_valid && agree >= 4,
        format!(
            "uniform KLD on one-class graph max {uniform_max:e}; values finite and >= 0: {all_valid}; \
             last >= first layer median in {agree}/5 seeds ({})",
            text.join(", ")
        ),
    )
}

// 9. Statistics oracles.

fn auc_oracle(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

/// Two-sided Student-t tail by Simpson quadrature of the unnormalized
/// density after `x = tan θ`; the normalizer is the same integral from 0.
fn t_two_sided_oracle(t: f64, nu: f64) -> f64 {
    let g = |theta: f64| {
        let x = theta.tan();
        let c = theta.cos();
        (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0) / (c * c)
    };
    let simpson = |a: f64, b: f64| {
        let n = 200_000;
        let step = (b - a) / n as f64;
        let mut s = g(a) + g(b - 1e-12);
        for k in 1..n {
            s += g(a + k as f64 * step) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * step / 3.0
    };
    let top = std::f64::consts::FRAC_PI_2;
    simpson(t.abs().atan(), top) / simpson(0.0, top)
}

fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut auc_err = 0.0f64;
    for _ in 0..20 {
        // coarse scores force ties
        let scores: Vec<f64> = (0..200).map(|_| f64::from(rng.random_range(0..30u8)) / 7.0).collect();
        let mut positive: Vec<bool> = (0..200).map(|_| rng.random_bool(0.4)).collect();
        positive[0] = true;
        positive[1] = false;
        auc_err = auc_err.max((auc(&scores, &positive).unwrap() - auc_oracle(&scores, &positive)).abs());
    }
    let mut p_err = 0.0f64;
    for _ in 0..50 {
        let na = rng.random_range(3..12);
        let nb = rng.random_range(3..12);
        let shift = rng.random_range(-1.5..1.5);
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| shift + rng.random_range(-2.0..2.0)).collect();
        let r = welch_t_test(&a, &b).unwrap();
        p_err = p_err.max((r.p - t_two_sided_oracle(r.t, r.df)).abs());
    }
    Verdict::check(
        auc_err <= 1e-12 && p_err <= 1e-6,
        format!("AUC max err {auc_err:.1e} on 200-point inputs; Welch p max err {p_err:.1e} on 50 cases"),
    )
}

// 10. Cora, when the files are present.

fn cora_dir() -> PathBuf {
    std::env::var_os("ATTNFORGE_CORA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/cora"))
}

fn criterion_10() -> Verdict {
    let dir = cora_dir();
    if !dir.is_dir() {
        return Verdict {
            pass: true,
            skipped: true,
            detail: format!("skipped, no dataset at {}", dir.display()),
        };
    }
    let mut accs = Vec::new();
    for seed in 0..10 {
        let g = ingest_dataset(
            &dir,
            &IngestOptions {
                split_seed: seed,
                ..IngestOptions::default()
            },
        )
        .unwrap();
        let cfg = TrainConfig {
            lr: 0.005,
            dropout: 0.6,
            lambda_2: 0.008228864973,
            lambda_e: 11.34657453,
            p_e: 0.8,
            p_n: 0.5,
            seed,
            ..TrainConfig::default()
        };
        let mut net =
            build_network(AttentionKind::Mx, g.features().cols(), 8, 8, g.num_classes(), Task::SingleLabel)
                .unwrap();
        net.initialize(&mut ChaCha8Rng::seed_from_u64(seed));
        let (best, _) = train(&net, &g, &cfg).unwrap();
        accs.push(evaluate(&best, &g, &g.split().test_indices()).unwrap().1);
    }
    let m = 100.0 * mean(&accs);
    Verdict::check(
        (82.0..=86.0).contains(&m),
        format!("SuperGAT-MX mean test accuracy {m:.2} over 10 seeds"),
    )
}

// 11. Byte-identical train output.

fn criterion_11() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "seed = 5\n[data.synthetic]\nn = 60\nc = 4\nd_avg = 6.0\n\
         [data.split]\ntrain_per_class = 10\nval = 60\ntest = 120\n[train]\nmax_epochs = 30\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let args = [
        "attnforge",
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--attention",
        "mx",
    ];
    let mut bytes = Vec::new();
    for _ in 0..2 {
        assert_eq!(main_with_args(args), 0);
        bytes.push(std::fs::read(out.join(RESULT_FILE)).unwrap());
    }
    Verdict::check(
        bytes[0] == bytes[1],
        format!("two train runs, {} bytes of result JSON each, identical: {}", bytes[0].len(), bytes[0] == bytes[1]),
    )
}

type Criterion = (u32, &'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "gradient correctness", criterion_1),
        (2, "attention normalization", criterion_2),
        (3, "dense-oracle equivalence", criterion_3),
        (4, "score variance Monte Carlo", criterion_4),
        (5, "synthetic generator statistics", criterion_5),
        (6, "synthetic accuracy", criterion_6),
        (7, "link-prediction direction", criterion_7),
        (8, "KLD analysis", criterion_8),
        (9, "statistics oracles", criterion_9),
        (10, "real-data reproduction", criterion_10),
        (11, "determinism", criterion_11),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let status = match (v.skipped, v.pass) {
            (true, _) => "SKIP",
            (false, true) => "PASS",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {id:>2} {status} {name}: {} [{:.1} s]",
            v.detail,
            start.elapsed().as_secs_f64()
        );
        if !v.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
