use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::DatasetPaths;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::graphbuild::GraphConfig;
use crate::hyperlayer::AggregationBase;
use crate::manifold::{Curvature, Model};
use crate::typer::ScoreConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldConfig {
    pub model: Model,
    pub curvature: f64,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        ManifoldConfig { model: Model::Hyperboloid, curvature: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Config {
    /// Number of refinement layers; 0 scores the lifted stage-I encoding.
    pub layers: usize,
    /// Hidden and output dimension; defaults to the stage-I dimension.
    pub dim: Option<usize>,
    pub base: AggregationBase,
    pub init_scale: f64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config { layers: 2, dim: None, base: AggregationBase::Origin, init_scale: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Neighbours kept per node and layer while training; all when absent.
    pub neighbor_sample: Option<usize>,
    /// Stop after this many epochs without a better dev strict accuracy.
    pub patience: Option<usize>,
    pub label_init_scale: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 20,
            batch_size: 256,
            seed: 0,
            neighbor_sample: None,
            patience: Some(5),
            label_init_scale: 0.1,
        }
    }
}

/// Everything a run needs besides the data itself.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: DatasetPaths,
    pub manifold: ManifoldConfig,
    pub encoder: EncoderConfig,
    pub graph: GraphConfig,
    pub stage2: Stage2Config,
    pub score: ScoreConfig,
    pub trainer: TrainerConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML config; relative corpus paths resolve against its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.corpus = c.corpus.resolved(base);
        if let Some(p) = &c.graph.path {
            if p.is_relative() {
                c.graph.path = Some(base.join(p));
            }
        }
        if let Some(p) = &c.encoder.pretrained {
            if p.is_relative() {
                c.encoder.pretrained = Some(base.join(p));
            }
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn curvature(&self) -> Result<Curvature> {
        Curvature::new(self.manifold.curvature)
            .map_err(|_| Error::Config(format!("manifold.curvature must be positive, got {}", self.manifold.curvature)))
    }

    pub fn validate(&self) -> Result<()> {
        self.curvature()?;
        self.encoder.validate()?;
        self.graph.validate()?;
        self.score.validate(self.manifold.model)?;
        let t = &self.trainer;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(Error::Config("trainer.learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) || !(t.epsilon > 0.0) {
            return Err(Error::Config("trainer: betas must lie in [0, 1) and epsilon be positive".into()));
        }
        if t.batch_size == 0 {
            return Err(Error::Config("trainer.batch_size must be positive".into()));
        }
        if t.neighbor_sample == Some(0) {
            return Err(Error::Config("trainer.neighbor_sample must be positive when set".into()));
        }
        if self.stage2.dim == Some(0) || !(self.stage2.init_scale >= 0.0) {
            return Err(Error::Config("stage2.dim must be positive and init_scale nonnegative".into()));
        }
        if !(t.label_init_scale > 0.0) {
            return Err(Error::Config("trainer.label_init_scale must be positive".into()));
        }
        Ok(())
    }
}
