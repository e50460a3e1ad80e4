//! TOML run configuration with command-line overrides.

use std::path::{Path, PathBuf};

use gloctm_core::model::{Ablation, ModelConfig};
use gloctm_core::pipeline::{EvalConfig, PreprocessConfig};
use gloctm_core::synthgen::PlantedSpec;
use gloctm_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input files, two per kind (language 1 then language 2).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus1: Option<PathBuf>,
    pub corpus2: Option<PathBuf>,
    pub labels1: Option<PathBuf>,
    pub labels2: Option<PathBuf>,
    pub embeddings1: Option<PathBuf>,
    pub embeddings2: Option<PathBuf>,
    pub doc_embeddings1: Option<PathBuf>,
    pub doc_embeddings2: Option<PathBuf>,
    pub reference1: Option<PathBuf>,
    pub reference2: Option<PathBuf>,
    /// Planted truth written by `synth`, enabling alignment scoring.
    pub truth: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.corpus1,
            &mut self.corpus2,
            &mut self.labels1,
            &mut self.labels2,
            &mut self.embeddings1,
            &mut self.embeddings2,
            &mut self.doc_embeddings1,
            &mut self.doc_embeddings2,
            &mut self.reference1,
            &mut self.reference2,
            &mut self.truth,
            &mut self.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
    pub eval: EvalConfig,
    pub synth: PlantedSpec,
    pub ablation: Option<Ablation>,
    /// Number of consecutive seeds starting at `train.seed`.
    pub seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            preprocess: PreprocessConfig::default(),
            eval: EvalConfig::default(),
            synth: PlantedSpec::default(),
            ablation: None,
            seeds: 1,
        }
    }
}

/// Named flags that take precedence over the file and over `--set`.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub out: Option<PathBuf>,
    pub ablation: Option<Ablation>,
    pub topk_intra: Option<usize>,
    pub topk_cross: Option<usize>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    /// `section.key=value` assignments, values in TOML syntax.
    pub set: Vec<String>,
}

fn assign(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| Error::Config(format!("--set {spec:?}: expected key=value")))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_owned()),
    };
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("--set {spec:?}: empty key")))?;
    let mut node = table;
    for p in parts {
        node = node
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("--set {spec:?}: {p} is not a section")))?;
    }
    node.insert(last.to_owned(), value);
    Ok(())
}

impl RunConfig {
    /// Reads the file (if any), applies overrides and validates. Relative
    /// paths in the file are taken relative to the file's directory.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| Error::Toml { path: p.into(), source: e })?
            }
            None => toml::Table::new(),
        };
        for s in &overrides.set {
            assign(&mut table, s)?;
        }
        let source = path.map_or_else(|| PathBuf::from("<command line>"), Path::to_path_buf);
        let mut config: RunConfig =
            toml::Table::try_into(table).map_err(|e| Error::Toml { path: source, source: e })?;
        if let Some(dir) = path.and_then(Path::parent) {
            config.paths.resolve(dir);
        }
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.train.seed = s;
        }
        if let Some(n) = o.seeds {
            self.seeds = n;
        }
        if let Some(out) = &o.out {
            self.paths.out = Some(out.clone());
        }
        if let Some(a) = o.ablation {
            self.ablation = Some(a);
        }
        if let Some(a) = self.ablation {
            self.model = self.model.clone().with_ablation(a);
        }
        if let Some(k) = o.topk_intra {
            self.model.neighbors.k_intra = k;
        }
        if let Some(k) = o.topk_cross {
            self.model.neighbors.k_cross = k;
        }
        if let Some(l) = o.lambda1 {
            self.model.lambda_align = l;
        }
        if let Some(l) = o.lambda2 {
            self.model.lambda_cka = l;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if self.eval.top_n == 0 {
            return Err(Error::Config("eval.top_n must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.eval.test_fraction) {
            return Err(Error::Config("eval.test_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Seeds of a multi-seed run.
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.train.seed + i).collect()
    }
}
