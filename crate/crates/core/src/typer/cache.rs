//! Append-only `<language>\t<key>\t<text>` caches for classifier outputs.
//!
//! Used for literal example sentences (keyed by compound) and for English
//! translations (keyed by sentence). Reads run concurrently; a miss takes the
//! single writer lock, re-checks, generates and appends. Once a key is
//! present it is never rewritten, so hits are byte-stable across runs.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use crate::error::{Error, Result};

type Key = (String, String);

#[derive(Debug, Default)]
pub struct TextCache {
    path: Option<PathBuf>,
    entries: RwLock<BTreeMap<Key, Vec<String>>>,
    writer: Mutex<()>,
}

/// Literal example sentences per (compound, language).
pub type LiteralExampleCache = TextCache;

fn sanitize(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}

impl TextCache {
    /// A cache that lives only in memory.
    pub fn in_memory() -> Self {
        TextCache::default()
    }

    /// Opens (or lazily creates) a cache file.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries: BTreeMap<Key, Vec<String>> = BTreeMap::new();
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in text.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let mut parts = line.splitn(3, '\t');
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(lang), Some(key), Some(value)) => entries
                        .entry((lang.to_string(), key.to_string()))
                        .or_default()
                        .push(value.to_string()),
                    _ => return Err(Error::format(i + 1, "cache line needs three tab-separated fields")),
                }
            }
        }
        Ok(TextCache {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, language: &str, key: &str) -> Option<Vec<String>> {
        let entries = self.entries.read().expect("cache lock poisoned");
        entries.get(&(sanitize(language), sanitize(key))).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores `values` unless the key already exists. Returns the values now
    /// cached under the key.
    pub fn insert(&self, language: &str, key: &str, values: Vec<String>) -> Result<Vec<String>> {
        let _guard = self.writer.lock().expect("cache writer poisoned");
        self.insert_locked(language, key, values)
    }

    fn insert_locked(&self, language: &str, key: &str, values: Vec<String>) -> Result<Vec<String>> {
        if let Some(existing) = self.get(language, key) {
            return Ok(existing);
        }
        let values: Vec<String> = values.iter().map(|v| sanitize(v)).collect();
        if let Some(path) = &self.path {
            let mut out = String::new();
            for v in &values {
                out.push_str(&format!("{}\t{}\t{}\n", sanitize(language), sanitize(key), v));
            }
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert((sanitize(language), sanitize(key)), values.clone());
        Ok(values)
    }

    /// Returns cached values, or runs `generate` under the writer lock and
    /// caches its output. `generate` runs at most once per key.
    pub fn get_or_insert_with<F>(&self, language: &str, key: &str, generate: F) -> Result<Vec<String>>
    where
        F: FnOnce() -> Result<Vec<String>>,
    {
        if let Some(hit) = self.get(language, key) {
            return Ok(hit);
        }
        let _guard = self.writer.lock().expect("cache writer poisoned");
        if let Some(hit) = self.get(language, key) {
            return Ok(hit);
        }
        let values = generate()?;
        self.insert_locked(language, key, values)
    }
}
