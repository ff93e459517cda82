//! Run configuration file, `key=value` overrides and resource loading.
//!
//! Relative paths in the file resolve against the file's directory;
//! override values are taken as given.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embeddings::{load_embeddings, EmbeddingStore};
use crate::error::{Error, Result};
use crate::evaluation::{AblationAxes, RelevanceProfile};
use crate::model::{parse_tsv, Dataset, Schema};
use crate::pipeline::{PipelineConfig, Resources, Variant};
use crate::rewriter::{load_lexicon, IdiomLexicon};
use crate::similarity::StoreSet;
use crate::typer::cache::TextCache;
use crate::typer::client::ProcessClient;
use crate::typer::lr::{LrModel, TrainParams};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    /// Labelled data for `train-typer`; falls back to `dataset`.
    pub train: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub lr_model: Option<PathBuf>,
    pub image_embeddings: Option<PathBuf>,
    pub vl_text_embeddings: Option<PathBuf>,
    pub m3_embeddings: Option<PathBuf>,
    pub example_cache: Option<PathBuf>,
    pub translation_cache: Option<PathBuf>,
    /// Idiomatic compounds without a lexicon entry are appended here.
    pub miss_log: Option<PathBuf>,
}

impl PathsConfig {
    fn all_mut(&mut self) -> [&mut Option<PathBuf>; 10] {
        [
            &mut self.dataset,
            &mut self.train,
            &mut self.lexicon,
            &mut self.lr_model,
            &mut self.image_embeddings,
            &mut self.vl_text_embeddings,
            &mut self.m3_embeddings,
            &mut self.example_cache,
            &mut self.translation_cache,
            &mut self.miss_log,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub paths: PathsConfig,
    pub schema: Schema,
    pub evaluation: RelevanceProfile,
    pub ablation: AblationAxes,
    pub training: TrainParams,
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_error)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in config.paths.all_mut().into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(root) = &mut config.schema.image_root {
            if root.is_relative() {
                *root = base.join(&*root);
            }
        }
        // a relative program path (not a bare name looked up on PATH)
        if let Some(program) = config.pipeline.llm.command.as_mut().and_then(|c| c.first_mut()) {
            if program.contains('/') && Path::new(program).is_relative() {
                *program = base.join(&*program).to_string_lossy().into_owned();
            }
        }
        Ok(config)
    }

    /// Applies `a.b.c=value` overrides. Values parse as TOML and fall back to
    /// bare strings. Unknown keys are rejected.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut root = toml::Value::try_from(&*self).map_err(config_error)?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            let parts: Vec<&str> = key.trim().split('.').collect();
            if parts.iter().any(|p| p.is_empty()) {
                return Err(Error::Config(format!("bad override key `{key}`")));
            }
            let mut node = &mut root;
            for part in &parts[..parts.len() - 1] {
                let table = node
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
                node = table
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            }
            node.as_table_mut()
                .ok_or_else(|| Error::Config(format!("override `{key}` does not name a table field")))?
                .insert(parts[parts.len() - 1].to_string(), value);
            // re-validate after each override so the error names the culprit
            RunConfig::deserialize(root.clone()).map_err(|e| Error::Config(format!("override `{item}`: {e}")))?;
        }
        *self = RunConfig::deserialize(root).map_err(config_error)?;
        Ok(())
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        self.paths
            .dataset
            .as_deref()
            .ok_or_else(|| Error::Config("paths.dataset is not set".into()))
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        parse_tsv(self.dataset_path()?, &self.schema)
    }
}

/// First 16 hex digits of the SHA-256 of the serialized pipeline section.
/// The worker count does not affect results and is excluded.
pub fn config_hash(pipeline: &PipelineConfig) -> String {
    let canonical = PipelineConfig {
        workers: 1,
        ..pipeline.clone()
    };
    let text = toml::to_string(&canonical).unwrap_or_else(|e| format!("unserializable: {e}"));
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

fn required(path: &Option<PathBuf>, field: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::Config(format!("paths.{field} is required for this variant")))
}

/// Stores required by the configured variant. The image store is skipped in
/// text-only mode even when configured.
pub fn load_stores(config: &RunConfig) -> Result<StoreSet> {
    let variant = config.pipeline.variant;
    let vl_text = load_embeddings(&required(&config.paths.vl_text_embeddings, "vl_text_embeddings")?)?;
    let image = match (variant, &config.paths.image_embeddings) {
        (Variant::TextOnly, _) => None,
        (_, Some(p)) => Some(load_embeddings(p)?),
        (_, None) => {
            return Err(Error::Config(
                "paths.image_embeddings is required for this variant".into(),
            ))
        }
    };
    let m3 = match (&config.paths.m3_embeddings, variant) {
        (Some(p), _) => load_embeddings(p)?,
        (None, Variant::Baseline) => EmbeddingStore::new(1)?,
        (None, _) => return Err(Error::Config("paths.m3_embeddings is required for this variant".into())),
    };
    Ok(StoreSet { image, vl_text, m3 })
}

pub fn load_resources(config: &RunConfig) -> Result<Resources> {
    let lexicon = match &config.paths.lexicon {
        Some(p) => load_lexicon(p)?,
        None => IdiomLexicon::new(),
    };
    let mut resources = Resources::new(lexicon, load_stores(config)?);
    if let Some(p) = &config.paths.lr_model {
        resources.lr_model = Some(LrModel::load(p)?);
    }
    if let Some(cmd) = &config.pipeline.llm.command {
        resources.client = Some(Arc::new(ProcessClient::spawn(cmd)?));
    }
    if let Some(p) = &config.paths.example_cache {
        resources.example_cache = TextCache::open(p)?;
    }
    if let Some(p) = &config.paths.translation_cache {
        resources.translation_cache = TextCache::open(p)?;
    }
    Ok(resources)
}
