//! In-memory embedding stores and the PFEMB text format.
//!
//! ```text
//! PFEMB 1 <d> <count>
//! <key>\t<f_1> <f_2> ... <f_d>
//! ```
//!
//! Floats are written with the shortest decimal representation that parses
//! back to the same `f32`. Keys are emitted in byte order, so two stores that
//! are equal as maps always serialize to identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &str = "PFEMB";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    entries: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingStore {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingStore {
            dimension,
            entries: BTreeMap::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts or replaces a vector.
    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let key = key.into();
        validate_key(&key).map_err(|r| Error::Config(format!("invalid key `{key}`: {r}")))?;
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite component in `{key}`")));
        }
        self.entries.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<Vec<f32>> {
        self.entries.remove(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Canonical PFEMB encoding.
    pub fn to_pfemb(&self) -> String {
        let mut out = format!("{MAGIC} {FORMAT_VERSION} {} {}\n", self.dimension, self.entries.len());
        for (key, vector) in &self.entries {
            out.push_str(key);
            out.push('\t');
            for (i, v) in vector.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_pfemb(text: &str) -> Result<Self> {
        let mut lines = text.split('\n').enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::format(1, "empty file"))?;
        let header = header.strip_suffix('\r').unwrap_or(header);
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 4 || fields[0] != MAGIC {
            return Err(Error::format(1, "bad magic"));
        }
        let version: u32 = fields[1].parse().map_err(|_| Error::format(1, "bad version"))?;
        if version != FORMAT_VERSION {
            return Err(Error::format(1, format!("unsupported version {version}")));
        }
        let dimension: usize = fields[2].parse().map_err(|_| Error::format(1, "bad dimension"))?;
        let count: usize = fields[3].parse().map_err(|_| Error::format(1, "bad count"))?;
        let mut store = EmbeddingStore::new(dimension).map_err(|_| Error::format(1, "zero dimension"))?;

        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() {
                continue;
            }
            let (key, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(line_no, "missing tab separator"))?;
            let vector = values
                .split(' ')
                .map(|tok| {
                    let v: f32 = tok
                        .parse()
                        .map_err(|_| Error::format(line_no, format!("bad float `{tok}`")))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::format(line_no, format!("non-finite value `{tok}`")))
                    }
                })
                .collect::<Result<Vec<f32>>>()?;
            if vector.len() != dimension {
                return Err(Error::format(
                    line_no,
                    format!("record `{key}` has {} values, header says {dimension}", vector.len()),
                ));
            }
            if store.entries.insert(key.to_string(), vector).is_some() {
                return Err(Error::format(line_no, format!("duplicate key `{key}`")));
            }
        }
        if store.len() != count {
            return Err(Error::format(
                1,
                format!("header declares {count} records, found {}", store.len()),
            ));
        }
        Ok(store)
    }
}

fn validate_key(key: &str) -> std::result::Result<(), &'static str> {
    if key.is_empty() {
        Err("empty")
    } else if key.contains(['\t', '\n', '\r']) {
        Err("contains tab or newline")
    } else {
        Ok(())
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_pfemb(&text)
}

pub fn write_embeddings(store: &EmbeddingStore, path: &Path) -> Result<()> {
    fs::write(path, store.to_pfemb()).map_err(|e| Error::io(path, e))
}
