use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Config, Pipeline, Progress};
use crate::autodiff::{ParamStore, Tensor};
use crate::corpus::TypeHierarchy;
use crate::encoder::Vocab;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "hypertype-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Complete training state: parameters with optimizer moments, vocabularies,
/// configuration and progress. Floats are written so that they read back
/// bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: Config,
    pub types: Vec<String>,
    pub chars: Vocab,
    pub words: Vocab,
    pub extra: usize,
    pub progress: Progress,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(
        config: &Config,
        hierarchy: &TypeHierarchy,
        chars: Vocab,
        words: Vocab,
        extra: usize,
        store: &ParamStore,
        progress: Progress,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            types: hierarchy.paths().to_vec(),
            chars,
            words,
            extra,
            progress,
            tensors: store.tensors().to_vec(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            let mut w = BufWriter::new(f);
            serde_json::to_writer(&mut w, self).map_err(|e| Error::Checkpoint(e.to_string()))?;
            w.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let c: Checkpoint = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}, found {} v{}",
                path.display(),
                c.format,
                c.version
            )));
        }
        Ok(c)
    }

    pub fn hierarchy(&self) -> Result<TypeHierarchy> {
        TypeHierarchy::from_paths(&self.types)
    }

    /// Rebuilds the parameter store and the model bound to it.
    pub fn bind(&self) -> Result<(ParamStore, Pipeline)> {
        let store = ParamStore::from_tensors(self.tensors.clone())?;
        let pipeline = Pipeline::bind(
            &self.config,
            self.chars.clone(),
            self.words.clone(),
            self.extra,
            self.types.len(),
            &store,
        )?;
        Ok((store, pipeline))
    }
}
