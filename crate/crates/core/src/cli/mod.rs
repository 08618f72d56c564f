//! Command-line surface: flag parsing, config resolution, the result
//! envelope and machine-readable error records.

mod commands;
mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use commands::{
    cmd_eval, cmd_generate, cmd_kld, cmd_linkpred, cmd_recipe, cmd_recommend, cmd_sweep,
    cmd_train, cmd_verify_prop, load_graph,
};
pub use config::{
    Architecture, DataConfig, KldConfig, ModelConfig, PropositionSettings, RecommendConfig,
    RunConfig, SweepConfig, SweepMetric, SweepParam,
};

use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::recipe::GridSpec;

pub const RESULT_FILE: &str = "result.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Parser)]
#[command(name = "attnforge", version, about = "Self-supervised graph attention experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic random partition graph and export it as a dataset directory.
    Generate(GenerateArgs),
    /// Train a network and write its checkpoint and history.
    Train(TrainArgs),
    /// Score a checkpoint on the test split.
    Eval(EvalArgs),
    /// Attention versus label-agreement divergence per layer.
    Kld(KldArgs),
    /// Monte Carlo check of the score variance argument.
    VerifyProp(PropArgs),
    /// Held-out edge AUC of the edge probability.
    Linkpred(TrainArgs),
    /// Run the synthetic degree × homophily grid.
    Recipe(RecipeArgs),
    /// Look up the best attention design for a degree and homophily.
    Recommend(RecommendArgs),
    /// Sweep one training parameter over a list of values.
    Sweep(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Kld(_) => "kld",
            Command::VerifyProp(_) => "verify-prop",
            Command::Linkpred(_) => "linkpred",
            Command::Recipe(_) => "recipe",
            Command::Recommend(_) => "recommend",
            Command::Sweep(_) => "sweep",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML or JSON file with the full config tree; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Dataset directory (edges.tsv, features.csv, labels.tsv, optional split.tsv).
    #[arg(long, conflicts_with_all = ["nodes_per_class", "classes", "avg_degree", "graph_homophily", "feature_dim"])]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub nodes_per_class: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Target average degree of the synthetic graph.
    #[arg(long = "avg-degree")]
    pub avg_degree: Option<f64>,
    /// Target homophily of the synthetic graph.
    #[arg(long = "graph-homophily")]
    pub graph_homophily: Option<f64>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// go, dp, sd or mx.
    #[arg(long, value_parser = parse_attention)]
    pub attention: Option<AttentionKind>,
    /// Use the GCN baseline instead of SuperGAT layers.
    #[arg(long, conflicts_with = "attention")]
    pub gcn: bool,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long = "lambda-e")]
    pub lambda_e: Option<f64>,
    #[arg(long = "lambda-2")]
    pub lambda_2: Option<f64>,
    #[arg(long = "p-n")]
    pub p_n: Option<f64>,
    #[arg(long = "p-e")]
    pub p_e: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct KldArgs {
    #[command(flatten)]
    pub run: TrainArgs,
    /// Trained network; without it a network is trained first.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Comma-separated layer indices; all layers by default.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PropArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Projection width.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long = "sigma-w2")]
    pub sigma_w2: Option<f64>,
    #[arg(long = "sigma-a2")]
    pub sigma_a2: Option<f64>,
    #[arg(long)]
    pub input_dim: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RecipeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Start from the full 16 × 9 grid instead of the desk grid.
    #[arg(long)]
    pub full: bool,
    #[arg(long, value_delimiter = ',')]
    pub degrees: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub homophilies: Option<Vec<f64>>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub nodes_per_class: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub degree: Option<f64>,
    #[arg(long)]
    pub homophily: Option<f64>,
    /// recipe.json written by the recipe command.
    #[arg(long)]
    pub map: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: TrainArgs,
    /// lambda_e, p_n or p_e.
    #[arg(long, value_parser = parse_sweep_param)]
    pub param: Option<SweepParam>,
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// accuracy or auc.
    #[arg(long, value_parser = parse_sweep_metric)]
    pub metric: Option<SweepMetric>,
    #[arg(long)]
    pub seeds: Option<usize>,
}

fn parse_attention(s: &str) -> Result<AttentionKind> {
    s.parse()
}

fn parse_sweep_param(s: &str) -> Result<SweepParam> {
    match s {
        "lambda_e" | "lambda-e" => Ok(SweepParam::LambdaE),
        "p_n" | "p-n" => Ok(SweepParam::PN),
        "p_e" | "p-e" => Ok(SweepParam::PE),
        _ => Err(Error::Config(format!(
            "unknown sweep parameter {s:?} (lambda_e, p_n or p_e)"
        ))),
    }
}

fn parse_sweep_metric(s: &str) -> Result<SweepMetric> {
    match s {
        "accuracy" => Ok(SweepMetric::Accuracy),
        "auc" => Ok(SweepMetric::Auc),
        _ => Err(Error::Config(format!("unknown metric {s:?} (accuracy or auc)"))),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl CommonArgs {
    fn base(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.out_dir, self.out.clone());
        set(&mut cfg.seed, self.seed);
        Ok(cfg)
    }
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.data;
        if self.dataset.is_some() {
            d.dataset = self.dataset.clone();
        }
        set(&mut d.synthetic.n, self.nodes_per_class);
        set(&mut d.synthetic.c, self.classes);
        set(&mut d.synthetic.d_avg, self.avg_degree);
        set(&mut d.synthetic.h_target, self.graph_homophily);
        set(&mut d.synthetic.feature_dim, self.feature_dim);
    }
}

impl TrainArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = self.common.base()?;
        self.data.apply(&mut cfg);
        let m = &mut cfg.model;
        if self.model.gcn {
            m.architecture = Architecture::Gcn;
        }
        if let Some(a) = self.model.attention {
            m.architecture = Architecture::Supergat;
            m.attention = a;
        }
        set(&mut m.hidden, self.model.hidden);
        set(&mut m.heads, self.model.heads);
        set(&mut m.depth, self.model.depth);
        let t = &mut cfg.train;
        let f = &self.train;
        set(&mut t.lr, f.lr);
        set(&mut t.dropout, f.dropout);
        set(&mut t.lambda_e, f.lambda_e);
        set(&mut t.lambda_2, f.lambda_2);
        set(&mut t.p_n, f.p_n);
        set(&mut t.p_e, f.p_e);
        set(&mut t.max_epochs, f.max_epochs);
        set(&mut t.patience, f.patience);
        Ok(cfg)
    }
}

impl Command {
    /// Config file, then flags, then seed propagation.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match self {
            Command::Generate(a) => {
                let mut cfg = a.common.base()?;
                a.data.apply(&mut cfg);
                cfg
            }
            Command::Train(a) | Command::Linkpred(a) => a.resolve()?,
            Command::Eval(a) => {
                let mut cfg = a.common.base()?;
                a.data.apply(&mut cfg);
                if a.checkpoint.is_some() {
                    cfg.checkpoint = a.checkpoint.clone();
                }
                cfg
            }
            Command::Kld(a) => {
                let mut cfg = a.run.resolve()?;
                if a.checkpoint.is_some() {
                    cfg.checkpoint = a.checkpoint.clone();
                }
                set(&mut cfg.kld.layers, a.layers.clone());
                cfg
            }
            Command::VerifyProp(a) => {
                let mut cfg = a.common.base()?;
                let p = &mut cfg.proposition;
                set(&mut p.samples, a.samples);
                set(&mut p.f, a.width);
                set(&mut p.sigma_w2, a.sigma_w2);
                set(&mut p.sigma_a2, a.sigma_a2);
                set(&mut p.input_dim, a.input_dim);
                cfg
            }
            Command::Recipe(a) => {
                let mut cfg = a.common.base()?;
                if a.full {
                    cfg.grid = GridSpec::full();
                }
                let g = &mut cfg.grid;
                set(&mut g.degrees, a.degrees.clone());
                set(&mut g.homophilies, a.homophilies.clone());
                set(&mut g.seeds, a.seeds);
                set(&mut g.n, a.nodes_per_class);
                set(&mut g.train.max_epochs, a.max_epochs);
                cfg
            }
            Command::Recommend(a) => {
                let mut cfg = a.common.base()?;
                let r = &mut cfg.recommend;
                if a.degree.is_some() {
                    r.degree = a.degree;
                }
                if a.homophily.is_some() {
                    r.homophily = a.homophily;
                }
                if a.map.is_some() {
                    r.map = a.map.clone();
                }
                cfg
            }
            Command::Sweep(a) => {
                let mut cfg = a.run.resolve()?;
                let s = &mut cfg.sweep;
                set(&mut s.param, a.param);
                set(&mut s.values, a.values.clone());
                set(&mut s.metric, a.metric);
                set(&mut s.seeds, a.seeds);
                cfg
            }
        };
        cfg.sync_seeds()?;
        Ok(cfg)
    }
}

/// Deterministic record of one command: everything in it follows from the
/// config echo and the seed. Wall-clock time goes to a separate file so that
/// reruns reproduce this one byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEnvelope {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub metrics: serde_json::Value,
    /// Artifacts written next to this file.
    pub files: Vec<String>,
    /// Per-epoch history table, when the command trains.
    pub history: Option<String>,
    /// File holding the wall-clock seconds of the run.
    pub timing: String,
}

impl ResultEnvelope {
    pub fn new(command: &str, cfg: &RunConfig, metrics: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: version(),
            seed: cfg.seed,
            config: cfg.clone(),
            metrics,
            files: Vec::new(),
            history: None,
            timing: TIMING_FILE.to_string(),
        }
    }
}

pub fn version() -> String {
    format!("attnforge-{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
    /// Mean seconds per training epoch, for commands that train.
    pub epoch_seconds: Option<f64>,
}

pub(crate) fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Resolves the config, runs the command and writes `result.json` and
/// `timing.json` under the output directory.
pub fn run(cli: &Cli) -> Result<ResultEnvelope> {
    let cfg = cli.command.resolve()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let start = Instant::now();
    let (env, epoch_seconds) = match &cli.command {
        Command::Generate(_) => (cmd_generate(&cfg)?, None),
        Command::Train(_) => cmd_train(&cfg)?,
        Command::Eval(_) => (cmd_eval(&cfg)?, None),
        Command::Kld(_) => (cmd_kld(&cfg)?, None),
        Command::VerifyProp(_) => (cmd_verify_prop(&cfg)?, None),
        Command::Linkpred(_) => (cmd_linkpred(&cfg)?, None),
        Command::Recipe(_) => (cmd_recipe(&cfg)?, None),
        Command::Recommend(_) => (cmd_recommend(&cfg)?, None),
        Command::Sweep(_) => (cmd_sweep(&cfg)?, None),
    };
    let timing = Timing {
        seconds: start.elapsed().as_secs_f64(),
        epoch_seconds,
    };
    write_file(&cfg.out_dir, TIMING_FILE, &serde_json::to_string_pretty(&timing)?)?;
    write_file(&cfg.out_dir, RESULT_FILE, &serde_json::to_string_pretty(&env)?)?;
    Ok(env)
}

/// Printed to stderr on failure as `{"error": {"kind": .., "message": ..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error: ErrorBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
}

impl ErrorRecord {
    pub fn new(kind: &str, message: String) -> Self {
        Self {
            error: ErrorBody {
                kind: kind.into(),
                message,
            },
        }
    }

    pub fn from_error(e: &Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Results and errors are printed as single JSON lines.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let rec = ErrorRecord::new("usage", e.to_string().trim().to_string());
            eprintln!("{}", serde_json::to_string(&rec).expect("plain record"));
            return 2;
        }
    };
    match run(&cli) {
        Ok(env) => {
            let summary = serde_json::json!({
                "command": env.command,
                "metrics": env.metrics,
            });
            println!("{summary}");
            0
        }
        Err(e) => {
            let rec = ErrorRecord::from_error(&e);
            let line = serde_json::to_string(&rec).expect("plain record");
            eprintln!("{line}");
            1
        }
    }
}
