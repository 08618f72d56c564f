//! The (degree × homophily) grid of synthetic experiments, the significance
//! rules that label each cell, and nearest-cell lookup for new graphs.

use std::fmt;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::model::{build_gcn, build_network, Network, Task};
use crate::parallel::par_map;
use crate::synthetic::{generate_with_split, SplitSizes, SyntheticSpec};
use crate::train::{evaluate, train, TrainConfig};

/// Models compared on every grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "GCN")]
    Gcn,
    #[serde(rename = "GAT-GO")]
    GatGo,
    #[serde(rename = "SuperGAT-SD")]
    SuperGatSd,
    #[serde(rename = "SuperGAT-MX")]
    SuperGatMx,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Gcn,
        ModelKind::GatGo,
        ModelKind::SuperGatSd,
        ModelKind::SuperGatMx,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gcn => "GCN",
            ModelKind::GatGo => "GAT-GO",
            ModelKind::SuperGatSd => "SuperGAT-SD",
            ModelKind::SuperGatMx => "SuperGAT-MX",
        }
    }

    pub fn attention(self) -> Option<AttentionKind> {
        match self {
            ModelKind::Gcn => None,
            ModelKind::GatGo => Some(AttentionKind::Go),
            ModelKind::SuperGatSd => Some(AttentionKind::Sd),
            ModelKind::SuperGatMx => Some(AttentionKind::Mx),
        }
    }

    /// Only the SuperGAT variants train with the edge loss.
    pub fn self_supervised(self) -> bool {
        matches!(self, ModelKind::SuperGatSd | ModelKind::SuperGatMx)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Two-layer model for single-label node classification, Glorot-initialized
/// from `seed`.
pub fn build_model(model: ModelKind, in_dim: usize, classes: usize, seed: u64) -> Result<Network> {
    let mut net = match model.attention() {
        None => build_gcn(in_dim, 64, classes, Task::SingleLabel)?,
        Some(kind) => build_network(kind, in_dim, 8, 8, classes, Task::SingleLabel)?,
    };
    net.initialize(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x0005_EED0_F1A1));
    Ok(net)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub test_acc: f64,
    pub val_acc: f64,
    pub epochs: usize,
    pub seconds: f64,
}

/// Generates the graph of `spec`, trains `model` on it and scores the test mask.
/// The edge loss is switched off for models without self-supervision.
pub fn train_synthetic(
    model: ModelKind,
    spec: &SyntheticSpec,
    split: SplitSizes,
    cfg: &TrainConfig,
) -> Result<RunOutcome> {
    let g = generate_with_split(spec, split.train_per_class, split.val, split.test)?;
    let net = build_model(model, spec.feature_dim, spec.c, cfg.seed)?;
    let cfg = TrainConfig {
        lambda_e: if model.self_supervised() {
            cfg.lambda_e
        } else {
            0.0
        },
        ..cfg.clone()
    };
    let (best, history) = train(&net, &g, &cfg)?;
    let (_, test_acc) = evaluate(&best, &g, &g.split().test_indices())?;
    Ok(RunOutcome {
        test_acc,
        val_acc: history.best_val_acc,
        epochs: history.epochs.len(),
        seconds: history.total_seconds(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub degrees: Vec<f64>,
    pub homophilies: Vec<f64>,
    pub seeds: usize,
    /// Nodes per class.
    pub n: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub split: SplitSizes,
    pub models: Vec<ModelKind>,
    pub train: TrainConfig,
    /// Pick λ_E and λ₂ per cell and model by validation accuracy of the
    /// first seed; otherwise `train` is used as is.
    pub select_lambdas: bool,
    pub lambda_e_grid: Vec<f64>,
    pub lambda_2_grid: Vec<f64>,
}

/// λ_E candidates `10^-5 … 10^2`.
pub fn lambda_e_candidates() -> Vec<f64> {
    (-5..=2).map(|p| 10f64.powi(p)).collect()
}

pub fn lambda_2_candidates() -> Vec<f64> {
    vec![1e-7, 1e-5, 1e-3]
}

/// Training defaults used on synthetic graphs.
pub fn synthetic_train_config() -> TrainConfig {
    TrainConfig {
        lr: 0.01,
        dropout: 0.2,
        lambda_2: 1e-3,
        lambda_e: 1.0,
        p_n: 0.5,
        p_e: 0.8,
        max_epochs: 300,
        patience: 50,
        seed: 0,
    }
}

impl Default for GridSpec {
    /// Desk-scale grid: 4 homophily × 4 degree values, 3 seeds, 250 nodes per class.
    fn default() -> Self {
        Self {
            degrees: vec![2.5, 5.0, 10.0, 25.0],
            homophilies: vec![0.1, 0.3, 0.6, 0.9],
            seeds: 3,
            n: 250,
            classes: 10,
            feature_dim: SyntheticSpec::default().feature_dim,
            split: SplitSizes::default(),
            models: ModelKind::ALL.to_vec(),
            train: synthetic_train_config(),
            select_lambdas: false,
            lambda_e_grid: lambda_e_candidates(),
            lambda_2_grid: lambda_2_candidates(),
        }
    }
}

impl GridSpec {
    /// 9 homophily × 16 degree values, 5 seeds, 500 nodes per class, with
    /// per-cell λ selection.
    pub fn full() -> Self {
        Self {
            degrees: vec![
                1.0, 1.5, 2.5, 3.5, 5.0, 7.5, 10.0, 12.5, 15.0, 20.0, 25.0, 32.5, 40.0, 50.0,
                75.0, 100.0,
            ],
            homophilies: (1..=9).map(|k| k as f64 / 10.0).collect(),
            seeds: 5,
            n: 500,
            select_lambdas: true,
            ..Self::default()
        }
    }

    fn cell_spec(&self, d_avg: f64, h: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n: self.n,
            c: self.classes,
            d_avg,
            h_target: h,
            feature_dim: self.feature_dim,
            seed,
            ..SyntheticSpec::default()
        }
    }
}

/// Accuracy summary of one model on one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub model: ModelKind,
    /// Test accuracy per successful seed, in seed order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for fewer than two seeds).
    pub std: f64,
    pub seeds: usize,
    pub lambda_e: f64,
    pub lambda_2: f64,
    /// Seeds whose training diverged and were left out.
    pub diverged: Vec<u64>,
}

impl ModelStats {
    pub fn from_accuracies(model: ModelKind, accuracies: Vec<f64>) -> Self {
        let n = accuracies.len();
        // an all-diverged model reports 0 with `seeds == 0`
        let mean = if n == 0 {
            0.0
        } else {
            accuracies.iter().sum::<f64>() / n as f64
        };
        let std = if n < 2 {
            0.0
        } else {
            (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self {
            model,
            accuracies,
            mean,
            std,
            seeds: n,
            lambda_e: 0.0,
            lambda_2: 0.0,
            diverged: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Winner {
    #[serde(rename = "GAT-Any")]
    GatAny,
    #[serde(rename = "SuperGAT-Any")]
    SuperGatAny,
    #[serde(rename = "SD")]
    Sd,
    #[serde(rename = "MX")]
    Mx,
    /// Too few seeds for a test.
    #[serde(rename = "undecided")]
    Undecided,
}

impl Winner {
    pub fn label(self) -> &'static str {
        match self {
            Winner::GatAny => "GAT-Any",
            Winner::SuperGatAny => "SuperGAT-Any",
            Winner::Sd => "SD",
            Winner::Mx => "MX",
            Winner::Undecided => "undecided",
        }
    }
}

impl fmt::Display for Winner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub d_avg: f64,
    pub h: f64,
    pub models: Vec<ModelStats>,
    pub winner: Winner,
    pub p_gat_vs_super: Option<f64>,
    pub p_sd_vs_mx: Option<f64>,
    /// Best SuperGAT mean minus GAT-GO mean.
    pub gain: f64,
}

impl GridCell {
    pub fn stats(&self, model: ModelKind) -> Option<&ModelStats> {
        self.models.iter().find(|m| m.model == model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub d_avg: f64,
    pub h: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecipeMap {
    pub cells: Vec<GridCell>,
    pub skipped: Vec<SkippedCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Two-sided Welch t-test. When both samples have zero variance, p is 1 for
/// equal means and 0 otherwise.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Decision(format!(
            "t-test needs two samples of size ≥ 2 (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let df = (a.len() + b.len() - 2) as f64;
        warn!("t-test on two constant samples ({ma} vs {mb})");
        return Ok(if ma == mb {
            TTest { t: 0.0, df, p: 1.0 }
        } else {
            TTest {
                t: (ma - mb).signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(TTest { t, df, p })
}

/// Labels a cell: GAT-Any when GAT-GO and the better SuperGAT (by mean) are
/// not significantly apart, SuperGAT-Any when SD and MX are not, otherwise
/// the better of SD and MX. A GAT-GO that significantly beats both
/// SuperGATs is also reported as GAT-Any.
pub fn decide_cell(models: &[ModelStats], alpha: f64) -> Result<(Winner, Option<f64>, Option<f64>)> {
    let get = |m: ModelKind| {
        models
            .iter()
            .find(|s| s.model == m)
            .ok_or_else(|| Error::Decision(format!("no results for {m}")))
    };
    get(ModelKind::Gcn)?;
    let go = get(ModelKind::GatGo)?;
    let sd = get(ModelKind::SuperGatSd)?;
    let mx = get(ModelKind::SuperGatMx)?;
    if [go, sd, mx].iter().any(|s| s.accuracies.len() < 2) {
        return Ok((Winner::Undecided, None, None));
    }
    let best = if mx.mean > sd.mean { mx } else { sd };
    let p_gat = welch_t_test(&go.accuracies, &best.accuracies)?.p;
    if p_gat >= alpha || go.mean >= best.mean {
        return Ok((Winner::GatAny, Some(p_gat), None));
    }
    let p_sd = welch_t_test(&sd.accuracies, &mx.accuracies)?.p;
    let winner = if p_sd >= alpha {
        Winner::SuperGatAny
    } else if best.model == ModelKind::SuperGatMx {
        Winner::Mx
    } else {
        Winner::Sd
    };
    Ok((winner, Some(p_gat), Some(p_sd)))
}

/// Builds a cell from per-model statistics.
pub fn summarize_cell(d_avg: f64, h: f64, models: Vec<ModelStats>, alpha: f64) -> Result<GridCell> {
    let (winner, p_gat_vs_super, p_sd_vs_mx) = decide_cell(&models, alpha)?;
    let mean_of = |m| {
        models
            .iter()
            .find(|s| s.model == m)
            .map_or(f64::NAN, |s| s.mean)
    };
    let gain = mean_of(ModelKind::SuperGatSd).max(mean_of(ModelKind::SuperGatMx))
        - mean_of(ModelKind::GatGo);
    Ok(GridCell {
        d_avg,
        h,
        models,
        winner,
        p_gat_vs_super,
        p_sd_vs_mx,
        gain,
    })
}

pub const SIGNIFICANCE: f64 = 0.05;

struct Job {
    cell: usize,
    model: ModelKind,
    seed: u64,
    spec: SyntheticSpec,
    cfg: TrainConfig,
}

/// λ pair with the best first-seed validation accuracy (ties keep the earlier pair).
fn select_lambdas(grid: &GridSpec, cells: &[(f64, f64)]) -> Result<Vec<Vec<(f64, f64)>>> {
    let mut jobs = Vec::new();
    for (c, &(d, h)) in cells.iter().enumerate() {
        for &model in &grid.models {
            let les: Vec<f64> = if model.self_supervised() {
                grid.lambda_e_grid.clone()
            } else {
                vec![0.0]
            };
            for &le in &les {
                for &l2 in &grid.lambda_2_grid {
                    jobs.push((c, model, le, l2, grid.cell_spec(d, h, 0)));
                }
            }
        }
    }
    let scores = par_map(jobs, |(c, model, le, l2, spec)| {
        let cfg = TrainConfig {
            lambda_e: le,
            lambda_2: l2,
            seed: 0,
            ..grid.train.clone()
        };
        let acc = train_synthetic(model, &spec, grid.split, &cfg).map_or(f64::NEG_INFINITY, |r| r.val_acc);
        (c, model, le, l2, acc)
    })?;
    let mut chosen = vec![vec![(grid.train.lambda_e, grid.train.lambda_2); grid.models.len()]; cells.len()];
    let mut best = vec![vec![f64::NEG_INFINITY; grid.models.len()]; cells.len()];
    for (c, model, le, l2, acc) in scores {
        let m = grid.models.iter().position(|&x| x == model).expect("model in grid");
        if acc > best[c][m] {
            best[c][m] = acc;
            chosen[c][m] = (le, l2);
        }
    }
    Ok(chosen)
}

/// Trains every model on every feasible cell and seed and labels each cell.
/// Infeasible cells are listed in `skipped`; diverged runs are dropped from
/// their cell's statistics and recorded.
pub fn run_grid(grid: &GridSpec) -> Result<RecipeMap> {
    if grid.seeds == 0 || grid.models.is_empty() {
        return Err(Error::Config("grid needs at least one seed and one model".into()));
    }
    let mut map = RecipeMap::default();
    let mut cells = Vec::new();
    for &d in &grid.degrees {
        for &h in &grid.homophilies {
            match crate::synthetic::solve_probs(&grid.cell_spec(d, h, 0)) {
                Ok(_) => cells.push((d, h)),
                Err(e) => map.skipped.push(SkippedCell {
                    d_avg: d,
                    h,
                    reason: e.to_string(),
                }),
            }
        }
    }
    let lambdas = if grid.select_lambdas {
        select_lambdas(grid, &cells)?
    } else {
        vec![vec![(grid.train.lambda_e, grid.train.lambda_2); grid.models.len()]; cells.len()]
    };
    let mut jobs = Vec::new();
    for (c, &(d, h)) in cells.iter().enumerate() {
        for (m, &model) in grid.models.iter().enumerate() {
            let (lambda_e, lambda_2) = lambdas[c][m];
            for seed in 0..grid.seeds as u64 {
                jobs.push(Job {
                    cell: c,
                    model,
                    seed,
                    spec: grid.cell_spec(d, h, seed),
                    cfg: TrainConfig {
                        lambda_e,
                        lambda_2,
                        seed,
                        ..grid.train.clone()
                    },
                });
            }
        }
    }
    let results = par_map(jobs, |job| {
        let out = train_synthetic(job.model, &job.spec, grid.split, &job.cfg);
        (job.cell, job.model, job.seed, job.cfg, out)
    })?;

    let mut per_cell: Vec<Vec<ModelStats>> = cells
        .iter()
        .map(|_| {
            grid.models
                .iter()
                .map(|&m| ModelStats::from_accuracies(m, Vec::new()))
                .collect()
        })
        .collect();
    for (c, model, seed, cfg, out) in results {
        let m = grid.models.iter().position(|&x| x == model).expect("model in grid");
        let stats = &mut per_cell[c][m];
        stats.lambda_e = if model.self_supervised() { cfg.lambda_e } else { 0.0 };
        stats.lambda_2 = cfg.lambda_2;
        match out {
            Ok(r) => stats.accuracies.push(r.test_acc),
            Err(Error::Divergence { epoch, detail }) => {
                warn!("{model} diverged at epoch {epoch} on cell {:?}: {detail}", cells[c]);
                stats.diverged.push(seed);
            }
            Err(e) => return Err(e),
        }
    }
    for ((d, h), models) in cells.into_iter().zip(per_cell) {
        let models = models
            .into_iter()
            .map(|s| {
                let mut fresh = ModelStats::from_accuracies(s.model, s.accuracies);
                fresh.lambda_e = s.lambda_e;
                fresh.lambda_2 = s.lambda_2;
                fresh.diverged = s.diverged;
                fresh
            })
            .collect();
        map.cells.push(summarize_cell(d, h, models, SIGNIFICANCE)?);
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub winner: Winner,
    pub d_avg: f64,
    pub h: f64,
    /// Distance in (log₁₀ degree, homophily) coordinates.
    pub distance: f64,
}

/// Winner of the nearest cell in (log₁₀ degree, homophily) space; the first
/// cell wins ties.
pub fn recommend(d_avg: f64, h: f64, map: &RecipeMap) -> Result<Recommendation> {
    if !(d_avg > 0.0 && d_avg.is_finite() && (0.0..=1.0).contains(&h)) {
        return Err(Error::Config(format!(
            "need a positive degree and homophily in [0, 1] (got {d_avg}, {h})"
        )));
    }
    let mut best: Option<(&GridCell, f64)> = None;
    for cell in &map.cells {
        let dist = ((d_avg.log10() - cell.d_avg.log10()).powi(2) + (h - cell.h).powi(2)).sqrt();
        if best.is_none_or(|(_, b)| dist < b) {
            best = Some((cell, dist));
        }
    }
    let (cell, distance) =
        best.ok_or_else(|| Error::Decision("recipe map has no cells".into()))?;
    Ok(Recommendation {
        winner: cell.winner,
        d_avg: cell.d_avg,
        h: cell.h,
        distance,
    })
}

impl RecipeMap {
    /// Per-run table: `d_avg,h,model,seed,test_acc`. Seeds count up over the
    /// successful runs of each model.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("d_avg,h,model,seed,test_acc\n");
        for cell in &self.cells {
            for m in &cell.models {
                let seeds = (0u64..).filter(|s| !m.diverged.contains(s));
                for (seed, acc) in seeds.zip(&m.accuracies) {
                    out.push_str(&format!("{},{},{},{seed},{acc}\n", cell.d_avg, cell.h, m.model));
                }
            }
        }
        out
    }

    /// Winners laid out with homophily descending by row and degree ascending by column.
    pub fn text_grid(&self) -> String {
        let mut degrees: Vec<f64> = self.cells.iter().map(|c| c.d_avg).collect();
        let mut hs: Vec<f64> = self.cells.iter().map(|c| c.h).collect();
        degrees.sort_by(f64::total_cmp);
        degrees.dedup();
        hs.sort_by(|a, b| b.total_cmp(a));
        hs.dedup();
        let mut out = format!("{:>6}", "h\\d");
        for d in &degrees {
            out.push_str(&format!(" {d:>12}"));
        }
        out.push('\n');
        for h in &hs {
            out.push_str(&format!("{h:>6}"));
            for d in &degrees {
                let label = self
                    .cells
                    .iter()
                    .find(|c| c.h == *h && c.d_avg == *d)
                    .map_or("-", |c| c.winner.label());
                out.push_str(&format!(" {label:>12}"));
            }
            out.push('\n');
        }
        out
    }
}
