use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::PropositionConfig;
use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::io::IngestOptions;
use crate::model::{build_deep_network, build_gcn, Network, Task};
use crate::recipe::GridSpec;
use crate::synthetic::{SplitSizes, SyntheticSpec};
use crate::train::TrainConfig;

/// Where the graph of a run comes from: a dataset directory when given,
/// otherwise the synthetic generator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: Option<PathBuf>,
    pub ingest: IngestOptions,
    pub synthetic: SyntheticSpec,
    /// Split of generated graphs.
    pub split: SplitSizes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Supergat,
    Gcn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub attention: AttentionKind,
    /// Per-head width of hidden SuperGAT layers, or the GCN hidden width.
    pub hidden: usize,
    pub heads: usize,
    pub depth: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Supergat,
            attention: AttentionKind::Mx,
            hidden: 8,
            heads: 8,
            depth: 2,
        }
    }
}

impl ModelConfig {
    /// Untrained network for `in_dim` features and `classes` outputs,
    /// Glorot-initialized from `seed`.
    pub fn build(&self, in_dim: usize, classes: usize, task: Task, seed: u64) -> Result<Network> {
        let mut net = match self.architecture {
            Architecture::Supergat => build_deep_network(
                self.attention,
                in_dim,
                self.hidden,
                self.heads,
                classes,
                self.depth,
                task,
            )?,
            Architecture::Gcn => {
                if self.depth != 2 {
                    return Err(Error::Config("the GCN baseline has exactly two layers".into()));
                }
                build_gcn(in_dim, self.hidden, classes, task)?
            }
        };
        net.initialize(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(net)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KldConfig {
    /// Layers to report; empty means all.
    pub layers: Vec<usize>,
}

/// Monte Carlo setup; the two inputs are drawn from the run seed unless given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropositionSettings {
    pub f: usize,
    pub sigma_w2: f64,
    pub sigma_a2: f64,
    pub input_dim: usize,
    pub h_i: Option<Vec<f64>>,
    pub h_j: Option<Vec<f64>>,
    pub samples: usize,
}

impl Default for PropositionSettings {
    fn default() -> Self {
        Self {
            f: 8,
            sigma_w2: 1.0 / 3.0,
            sigma_a2: 1.0 / 3.0,
            input_dim: 8,
            h_i: None,
            h_j: None,
            samples: 1_000_000,
        }
    }
}

impl PropositionSettings {
    pub fn resolve(&self, seed: u64) -> Result<PropositionConfig> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |given: &Option<Vec<f64>>| -> Vec<f64> {
            given.clone().unwrap_or_else(|| {
                (0..self.input_dim)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect()
            })
        };
        let (h_i, h_j) = (draw(&self.h_i), draw(&self.h_j));
        if h_i.len() != h_j.len() || h_i.is_empty() {
            return Err(Error::Config(format!(
                "inputs need equal, non-zero lengths (got {} and {})",
                h_i.len(),
                h_j.len()
            )));
        }
        Ok(PropositionConfig {
            f: self.f,
            sigma_w2: self.sigma_w2,
            sigma_a2: self.sigma_a2,
            h_i,
            h_j,
            samples: self.samples,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    LambdaE,
    PN,
    PE,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::LambdaE => "lambda_e",
            SweepParam::PN => "p_n",
            SweepParam::PE => "p_e",
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig, v: f64) {
        match self {
            SweepParam::LambdaE => cfg.lambda_e = v,
            SweepParam::PN => cfg.p_n = v,
            SweepParam::PE => cfg.p_e = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    /// Node classification test score.
    Accuracy,
    /// Held-out link prediction AUC.
    Auc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub metric: SweepMetric,
    /// Seeds per value, counting up from the run seed.
    pub seeds: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            param: SweepParam::LambdaE,
            values: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0],
            metric: SweepMetric::Accuracy,
            seeds: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendConfig {
    pub degree: Option<f64>,
    pub homophily: Option<f64>,
    /// Recipe map written by the `recipe` command; defaults to `<out_dir>/recipe.json`.
    pub map: Option<PathBuf>,
}

/// Every parameter of every command. The top-level seed drives the model
/// initialization, training, graph generation and split draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Trained network for `eval` and `kld`.
    pub checkpoint: Option<PathBuf>,
    pub kld: KldConfig,
    pub proposition: PropositionSettings,
    pub grid: GridSpec,
    pub sweep: SweepConfig,
    pub recommend: RecommendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            checkpoint: None,
            kld: KldConfig::default(),
            proposition: PropositionSettings::default(),
            grid: GridSpec::default(),
            sweep: SweepConfig::default(),
            recommend: RecommendConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a `.toml` or `.json` file; unknown keys are errors.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(serde_json::from_str(&text)?),
            Some("toml") => toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message()))),
            _ => Err(Error::Config(format!(
                "{}: config files must end in .toml or .json",
                path.display()
            ))),
        }
    }

    /// Copies the top-level seed into the nested seeds. A nested seed that
    /// was set to something else is a conflict.
    pub fn sync_seeds(&mut self) -> Result<()> {
        let seed = self.seed;
        for (name, slot) in [
            ("train.seed", &mut self.train.seed),
            ("data.synthetic.seed", &mut self.data.synthetic.seed),
            ("data.ingest.split_seed", &mut self.data.ingest.split_seed),
        ] {
            if *slot != 0 && *slot != seed {
                return Err(Error::Config(format!(
                    "{name} = {} conflicts with seed = {seed}; set only the top-level seed",
                    *slot
                )));
            }
            *slot = seed;
        }
        Ok(())
    }
}
