//! Versioned JSON checkpoints holding the full trainer state and both
//! vocabularies.

use std::path::Path;

use gloctm_core::corpus::Vocabulary;
use gloctm_core::model::{ModelConfig, ModelParams};
use gloctm_core::training::Trainer;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};

pub const FORMAT: &str = "gloctm-checkpoint/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub vocab_hashes: [String; 2],
    pub vocabularies: [Vocabulary; 2],
    pub trainer: Trainer,
}

/// SHA-256 over the language id and the newline-joined tokens.
pub fn vocab_hash(v: &Vocabulary) -> String {
    let mut h = Sha256::new();
    h.update([v.language().id()]);
    for t in v.tokens() {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn new(trainer: Trainer, vocabularies: [Vocabulary; 2]) -> Self {
        let vocab_hashes = [vocab_hash(&vocabularies[0]), vocab_hash(&vocabularies[1])];
        Checkpoint { format: FORMAT.into(), vocab_hashes, vocabularies, trainer }
    }

    pub fn params(&self) -> &ModelParams {
        self.trainer.params()
    }

    pub fn model_config(&self) -> &ModelConfig {
        self.trainer.model_config()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = read_json(path)?;
        let fail = |message: String| Error::Checkpoint { path: path.into(), message };
        if c.format != FORMAT {
            return Err(fail(format!("unsupported format {:?}", c.format)));
        }
        for (v, h) in c.vocabularies.iter().zip(&c.vocab_hashes) {
            if vocab_hash(v) != *h {
                return Err(fail(format!("{} vocabulary hash mismatch", v.language())));
            }
        }
        if c.params().vocab_sizes() != (c.vocabularies[0].len(), c.vocabularies[1].len()) {
            return Err(fail("parameter shapes differ from the vocabularies".into()));
        }
        Ok(c)
    }

    /// Errors unless `vocabs` hash to the stored vocabularies.
    pub fn check_vocabularies(&self, path: &Path, vocabs: [&Vocabulary; 2]) -> Result<()> {
        for (v, h) in vocabs.iter().zip(&self.vocab_hashes) {
            if vocab_hash(v) != *h {
                return Err(Error::Checkpoint {
                    path: path.into(),
                    message: format!("{} vocabulary hash mismatch with the corpus", v.language()),
                });
            }
        }
        Ok(())
    }
}
