//! Optional TOML configuration. Every value can also be given as a flag;
//! flags win. Relative paths are resolved against the config file's
//! directory.
//!
//! ```toml
//! seed = 13
//! k = 64
//!
//! [paths]
//! concepts = "data/concepts.jsonl"
//! entities = "data/entities.jsonl"
//! index = "out/index.bin"
//!
//! [bm25]
//! k1 = 1.2
//! b = 0.75
//!
//! [train]
//! epochs = 500
//! learning_rate = 0.5
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub fields: Option<Vec<String>>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub bm25: Bm25Section,
    #[serde(default)]
    pub ngram: NgramSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub serve: ServeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub dump: Option<PathBuf>,
    pub concepts: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub dataset_dir: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub reranked: Option<PathBuf>,
    pub metrics_dir: Option<PathBuf>,
    pub align_all: Option<PathBuf>,
    pub decisions: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Section {
    pub k1: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NgramSection {
    pub min: Option<usize>,
    pub max: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub negatives_per_group: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub ratios: Option<[f64; 3]>,
    pub restrict_to: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub host: Option<String>,
    pub port: Option<u16>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [
            &mut p.dump,
            &mut p.concepts,
            &mut p.entities,
            &mut p.dataset_dir,
            &mut p.split,
            &mut p.gold,
            &mut p.index,
            &mut p.candidates,
            &mut p.pairs,
            &mut p.model,
            &mut p.scores,
            &mut p.reranked,
            &mut p.metrics_dir,
            &mut p.align_all,
            &mut p.decisions,
            &mut p.static_dir,
            &mut self.dataset.restrict_to,
        ]
        .into_iter()
        .flatten()
        {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}
