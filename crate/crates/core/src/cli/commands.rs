use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::config::{RunConfig, SweepMetric};
use super::{write_file, ResultEnvelope};
use crate::analysis::{kld_study, link_prediction_run, verify_proposition};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::{export_dataset, ingest_dataset};
use crate::model::{load_checkpoint, save_checkpoint, Network, Task};
use crate::parallel::par_map;
use crate::recipe::{recommend, run_grid, RecipeMap};
use crate::synthetic::generate_with_split;
use crate::train::{evaluate, train, History};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const KLD_FILE: &str = "kld.csv";
pub const RECIPE_FILE: &str = "recipe.json";
pub const RUNS_FILE: &str = "runs.csv";
pub const GRID_FILE: &str = "grid.txt";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const DATASET_DIR: &str = "dataset";

/// The dataset directory when configured, otherwise the synthetic graph.
pub fn load_graph(cfg: &RunConfig) -> Result<Graph> {
    match &cfg.data.dataset {
        Some(dir) => ingest_dataset(dir, &cfg.data.ingest),
        None => {
            let s = &cfg.data.split;
            generate_with_split(&cfg.data.synthetic, s.train_per_class, s.val, s.test)
        }
    }
}

fn task_of(g: &Graph) -> Task {
    if g.labels().is_multi() {
        Task::MultiLabel
    } else {
        Task::SingleLabel
    }
}

fn fresh_network(cfg: &RunConfig, g: &Graph) -> Result<Network> {
    cfg.model
        .build(g.features().cols(), g.num_classes(), task_of(g), cfg.seed)
}

fn history_csv(h: &History) -> String {
    let mut out = String::from("epoch,train_loss,node_loss,edge_loss,val_loss,val_score\n");
    for e in &h.epochs {
        let edge: f64 = e.edge_losses.iter().sum();
        out.push_str(&format!(
            "{},{},{},{edge},{},{}\n",
            e.epoch, e.train_loss, e.node_loss, e.val_loss, e.val_acc
        ));
    }
    out
}

fn checkpoint_path(cfg: &RunConfig) -> Result<&PathBuf> {
    cfg.checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("no checkpoint given (--checkpoint)".into()))
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<ResultEnvelope> {
    if cfg.data.dataset.is_some() {
        return Err(Error::Config(
            "generate builds a synthetic graph; drop --dataset".into(),
        ));
    }
    let g = load_graph(cfg)?;
    let dir = cfg.out_dir.join(DATASET_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    export_dataset(&g, &dir)?;
    let (mean_degree, _) = g.degree_stats();
    let metrics = json!({
        "nodes": g.num_nodes(),
        "edges": g.num_edges(),
        "classes": g.num_classes(),
        "features": g.features().cols(),
        "mean_degree": mean_degree,
        "homophily": g.homophily()?,
    });
    let mut env = ResultEnvelope::new("generate", cfg, metrics);
    env.files.push(DATASET_DIR.into());
    Ok(env)
}

/// Returns the envelope and the mean epoch time for the timing sidecar.
pub fn cmd_train(cfg: &RunConfig) -> Result<(ResultEnvelope, Option<f64>)> {
    let g = load_graph(cfg)?;
    let net = fresh_network(cfg, &g)?;
    let (best, history) = train(&net, &g, &cfg.train)?;
    let (test_loss, test_score) = evaluate(&best, &g, &g.split().test_indices())?;
    save_checkpoint(&best, &cfg.out_dir.join(CHECKPOINT_FILE))?;
    write_file(&cfg.out_dir, HISTORY_FILE, &history_csv(&history))?;
    let metrics = json!({
        "test_loss": test_loss,
        "test_score": test_score,
        "best_epoch": history.best_epoch,
        "best_val_score": history.best_val_acc,
        "best_val_loss": history.best_val_loss,
        "epochs": history.epochs.len(),
        "parameters": best.num_parameters(),
    });
    let mut env = ResultEnvelope::new("train", cfg, metrics);
    env.files = vec![CHECKPOINT_FILE.into(), HISTORY_FILE.into()];
    env.history = Some(HISTORY_FILE.into());
    Ok((env, Some(history.mean_epoch_seconds())))
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<ResultEnvelope> {
    let net = load_checkpoint(checkpoint_path(cfg)?)?;
    let g = load_graph(cfg)?;
    let (val_loss, val_score) = evaluate(&net, &g, &g.split().val_indices())?;
    let (test_loss, test_score) = evaluate(&net, &g, &g.split().test_indices())?;
    let metrics = json!({
        "val_loss": val_loss,
        "val_score": val_score,
        "test_loss": test_loss,
        "test_score": test_score,
    });
    Ok(ResultEnvelope::new("eval", cfg, metrics))
}

pub fn cmd_kld(cfg: &RunConfig) -> Result<ResultEnvelope> {
    let g = load_graph(cfg)?;
    let net = match &cfg.checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => train(&fresh_network(cfg, &g)?, &g, &cfg.train)?.0,
    };
    let report = kld_study(&net, &g, &cfg.kld.layers)?;
    write_file(&cfg.out_dir, KLD_FILE, &report.to_csv())?;
    let layers: Vec<_> = report
        .layers
        .iter()
        .map(|l| json!({"layer": l.layer, "median": l.pooled.median}))
        .collect();
    let metrics = json!({
        "layers": layers,
        "uniform_median": report.uniform_stats.median,
    });
    let mut env = ResultEnvelope::new("kld", cfg, metrics);
    env.files.push(KLD_FILE.into());
    Ok(env)
}

pub fn cmd_verify_prop(cfg: &RunConfig) -> Result<ResultEnvelope> {
    let settings = cfg.proposition.resolve(cfg.seed)?;
    // the inputs take the seed stream, the parameter draws a separate one
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let r = verify_proposition(&settings, &mut rng)?;
    let rel = |emp: f64, ana: f64| (emp - ana).abs() / ana;
    let metrics = json!({
        "h_i": r.config.h_i,
        "h_j": r.config.h_j,
        "empirical_var_go": r.empirical_var_go,
        "analytic_var_go": r.analytic_var_go,
        "go_relative_error": rel(r.empirical_var_go, r.analytic_var_go),
        "empirical_var_dp": r.empirical_var_dp,
        "analytic_lower_bound_dp": r.analytic_lower_bound_dp,
        "empirical_w4": r.empirical_w4,
        "analytic_w4": r.analytic_w4,
        "w4_relative_error": rel(r.empirical_w4, r.analytic_w4),
    });
    Ok(ResultEnvelope::new("verify-prop", cfg, metrics))
}

pub fn cmd_linkpred(cfg: &RunConfig) -> Result<ResultEnvelope> {
    let g = load_graph(cfg)?;
    let net = fresh_network(cfg, &g)?;
    let out = link_prediction_run(&net, &g, &cfg.train, cfg.seed)?;
    let metrics = json!({
        "val_auc": out.val_auc,
        "test_auc": out.test_auc,
        "epochs": out.epochs,
    });
    Ok(ResultEnvelope::new("linkpred", cfg, metrics))
}

pub fn cmd_recipe(cfg: &RunConfig) -> Result<ResultEnvelope> {
    let map = run_grid(&cfg.grid)?;
    write_file(&cfg.out_dir, RECIPE_FILE, &serde_json::to_string_pretty(&map)?)?;
    write_file(&cfg.out_dir, RUNS_FILE, &map.runs_csv())?;
    write_file(&cfg.out_dir, GRID_FILE, &map.text_grid())?;
    let winners: Vec<_> = map
        .cells
        .iter()
        .map(|c| json!({"d_avg": c.d_avg, "h": c.h, "winner": c.winner.label()}))
        .collect();
    let metrics = json!({
        "cells": map.cells.len(),
        "skipped": map.skipped.len(),
        "winners": winners,
    });
    let mut env = ResultEnvelope::new("recipe", cfg, metrics);
    env.files = vec![RECIPE_FILE.into(), RUNS_FILE.into(), GRID_FILE.into()];
    Ok(env)
}

pub fn cmd_recommend(cfg: &RunConfig) -> Result<ResultEnvelope> {
    let r = &cfg.recommend;
    let (Some(d), Some(h)) = (r.degree, r.homophily) else {
        return Err(Error::Config(
            "recommend needs --degree and --homophily".into(),
        ));
    };
    let path = r
        .map
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join(RECIPE_FILE));
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let map: RecipeMap = serde_json::from_str(&text)?;
    let rec = recommend(d, h, &map)?;
    let metrics = json!({
        "winner": rec.winner.label(),
        "cell_d_avg": rec.d_avg,
        "cell_h": rec.h,
        "distance": rec.distance,
    });
    Ok(ResultEnvelope::new("recommend", cfg, metrics))
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<ResultEnvelope> {
    let s = &cfg.sweep;
    if s.values.is_empty() || s.seeds == 0 {
        return Err(Error::Config("sweep needs values and at least one seed".into()));
    }
    let jobs: Vec<(f64, u64)> = s
        .values
        .iter()
        .flat_map(|&v| (0..s.seeds as u64).map(move |k| (v, k)))
        .collect();
    let scores = par_map(jobs.clone(), |(v, k)| -> Result<f64> {
        let mut run = cfg.clone();
        run.seed = cfg.seed.wrapping_add(k);
        run.train.seed = run.seed;
        run.data.synthetic.seed = run.seed;
        run.data.ingest.split_seed = run.seed;
        s.param.apply(&mut run.train, v);
        let g = load_graph(&run)?;
        let net = fresh_network(&run, &g)?;
        match s.metric {
            SweepMetric::Accuracy => {
                let (best, _) = train(&net, &g, &run.train)?;
                Ok(evaluate(&best, &g, &g.split().test_indices())?.1)
            }
            SweepMetric::Auc => Ok(link_prediction_run(&net, &g, &run.train, run.seed)?.test_auc),
        }
    })?;
    let metric = match s.metric {
        SweepMetric::Accuracy => "test_score",
        SweepMetric::Auc => "test_auc",
    };
    let mut csv = format!("param,value,seed,{metric}\n");
    let mut rows = Vec::with_capacity(jobs.len());
    for (&(v, k), score) in jobs.iter().zip(scores) {
        let score = score?;
        csv.push_str(&format!("{},{v},{},{score}\n", s.param.name(), cfg.seed.wrapping_add(k)));
        rows.push((v, score));
    }
    write_file(&cfg.out_dir, SWEEP_FILE, &csv)?;
    let means: Vec<_> = s
        .values
        .iter()
        .map(|&v| {
            let xs: Vec<f64> = rows.iter().filter(|r| r.0 == v).map(|r| r.1).collect();
            json!({"value": v, "mean": xs.iter().sum::<f64>() / xs.len() as f64})
        })
        .collect();
    let metrics = json!({"param": s.param.name(), "metric": metric, "means": means});
    let mut env = ResultEnvelope::new("sweep", cfg, metrics);
    env.files.push(SWEEP_FILE.into());
    Ok(env)
}
