//! Task instances and TSV ingestion.
//!
//! Columns are mapped by name through a [`Schema`], so files with extra or
//! reordered columns load without changes. Rows that violate an instance
//! invariant are collected in [`Dataset::rejected`] rather than aborting the
//! whole file.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of candidates in every task instance.
pub const NUM_CANDIDATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentenceType {
    Literal,
    Idiomatic,
}

impl SentenceType {
    pub fn as_str(self) -> &'static str {
        match self {
            SentenceType::Literal => "literal",
            SentenceType::Idiomatic => "idiomatic",
        }
    }
}

impl fmt::Display for SentenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentenceType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "literal" => Ok(SentenceType::Literal),
            "idiomatic" => Ok(SentenceType::Idiomatic),
            other => Err(format!("unknown sentence type `{other}`")),
        }
    }
}

/// One task row: a context sentence, its target compound and five candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub language: String,
    pub sentence: String,
    pub compound: String,
    pub candidates: Vec<String>,
    pub captions: Option<Vec<String>>,
    pub gold_sentence_type: Option<SentenceType>,
    pub gold_order: Option<Vec<String>>,
    /// Candidate image locations under the configured image root; empty when
    /// no root is configured. Never opened by this crate.
    pub image_paths: Vec<PathBuf>,
}

impl Instance {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.sentence.trim().is_empty() {
            return Err("empty sentence".into());
        }
        if self.compound.trim().is_empty() {
            return Err("empty compound".into());
        }
        if self.candidates.len() != NUM_CANDIDATES {
            return Err(format!(
                "expected {NUM_CANDIDATES} candidates, found {}",
                self.candidates.len()
            ));
        }
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if c.is_empty() {
                return Err("empty candidate id".into());
            }
            if !seen.insert(c.as_str()) {
                return Err(format!("duplicate candidate `{c}`"));
            }
        }
        if let Some(captions) = &self.captions {
            if captions.len() != NUM_CANDIDATES {
                return Err(format!("expected {NUM_CANDIDATES} captions, found {}", captions.len()));
            }
        }
        if let Some(gold) = &self.gold_order {
            let gold_set: HashSet<&str> = gold.iter().map(String::as_str).collect();
            if gold.len() != NUM_CANDIDATES || gold_set.len() != NUM_CANDIDATES || gold_set != seen {
                return Err("gold order is not a permutation of the candidates".into());
            }
        }
        Ok(())
    }

    /// Position of each candidate in the gold order, aligned with `candidates`.
    pub fn gold_positions(&self) -> Option<Vec<usize>> {
        let gold = self.gold_order.as_ref()?;
        self.candidates
            .iter()
            .map(|c| gold.iter().position(|g| g == c))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRow {
    /// 1-based line number in the source file (the header is line 1).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub language_counts: BTreeMap<String, usize>,
    pub rejected: Vec<RejectedRow>,
}

impl Dataset {
    pub fn from_instances(instances: Vec<Instance>) -> Self {
        let mut language_counts = BTreeMap::new();
        for inst in &instances {
            *language_counts.entry(inst.language.clone()).or_insert(0) += 1;
        }
        Dataset {
            instances,
            language_counts,
            rejected: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Maps logical instance fields onto TSV column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub id: Option<String>,
    pub language: Option<String>,
    /// Used when `language` is unset or the cell is empty.
    pub default_language: String,
    pub sentence: String,
    pub compound: String,
    pub candidates: Vec<String>,
    pub captions: Vec<String>,
    pub sentence_type: String,
    pub gold_order: String,
    pub image_root: Option<PathBuf>,
    /// Relative path below `image_root`, with `{language}`, `{compound}` and
    /// `{candidate}` slots.
    pub image_path_template: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            id: Some("id".into()),
            language: Some("language".into()),
            default_language: "en".into(),
            sentence: "sentence".into(),
            compound: "compound".into(),
            candidates: (1..=NUM_CANDIDATES).map(|i| format!("image{i}_name")).collect(),
            captions: (1..=NUM_CANDIDATES).map(|i| format!("image{i}_caption")).collect(),
            sentence_type: "sentence_type".into(),
            gold_order: "expected_order".into(),
            image_root: None,
            image_path_template: "{language}/{compound}/{candidate}".into(),
        }
    }
}

impl Schema {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn resolve_image(&self, language: &str, compound: &str, candidate: &str) -> Option<PathBuf> {
        let root = self.image_root.as_ref()?;
        let rel = self
            .image_path_template
            .replace("{language}", language)
            .replace("{compound}", compound)
            .replace("{candidate}", candidate);
        Some(root.join(rel))
    }
}

/// Parses a gold ordering cell. Accepts `a,b,c` as well as list literals such
/// as `['a', 'b', 'c']`.
pub fn parse_order_cell(cell: &str) -> Vec<String> {
    let inner = cell.trim().trim_start_matches('[').trim_end_matches(']');
    inner
        .split(',')
        .map(|s| s.trim().trim_matches(|c| c == '\'' || c == '"').trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

struct ColumnIndex {
    id: Option<usize>,
    language: Option<usize>,
    sentence: usize,
    compound: usize,
    candidates: Vec<usize>,
    captions: Option<Vec<usize>>,
    sentence_type: Option<usize>,
    gold_order: Option<usize>,
}

impl ColumnIndex {
    fn build(header: &csv::StringRecord, schema: &Schema) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let require = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));

        let optional = |name: &Option<String>| -> Result<Option<usize>> {
            match name {
                Some(n) => Ok(Some(require(n)?)),
                None => Ok(None),
            }
        };

        let caption_cols: Vec<Option<usize>> = schema.captions.iter().map(|c| find(c)).collect();
        let captions = if !caption_cols.is_empty() && caption_cols.iter().all(Option::is_some) {
            Some(caption_cols.into_iter().flatten().collect())
        } else {
            None
        };

        Ok(ColumnIndex {
            id: optional(&schema.id)?,
            language: optional(&schema.language)?,
            sentence: require(&schema.sentence)?,
            compound: require(&schema.compound)?,
            candidates: schema.candidates.iter().map(|c| require(c)).collect::<Result<_>>()?,
            captions,
            sentence_type: find(&schema.sentence_type),
            gold_order: find(&schema.gold_order),
        })
    }
}

fn cell(record: &csv::StringRecord, idx: usize) -> &str {
    record.get(idx).unwrap_or("")
}

fn parse_row(
    record: &csv::StringRecord,
    cols: &ColumnIndex,
    schema: &Schema,
    line: usize,
) -> std::result::Result<Instance, String> {
    let language = cols
        .language
        .map(|i| cell(record, i).trim())
        .filter(|s| !s.is_empty())
        .unwrap_or(&schema.default_language)
        .to_string();
    let id = cols
        .id
        .map(|i| cell(record, i).trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| format!("{language}-{line}"));
    let sentence = cell(record, cols.sentence).to_string();
    let compound = cell(record, cols.compound).to_string();
    if sentence.trim().is_empty() {
        return Err("missing sentence".into());
    }
    if compound.trim().is_empty() {
        return Err("missing compound".into());
    }
    let candidates: Vec<String> = cols
        .candidates
        .iter()
        .map(|&i| cell(record, i).trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let captions = cols
        .captions
        .as_ref()
        .map(|idx| idx.iter().map(|&i| cell(record, i).to_string()).collect::<Vec<_>>())
        .filter(|caps| caps.iter().any(|c| !c.trim().is_empty()));
    let gold_sentence_type = match cols.sentence_type.map(|i| cell(record, i).trim()) {
        Some(s) if !s.is_empty() => Some(s.parse::<SentenceType>()?),
        _ => None,
    };
    let gold_order = cols
        .gold_order
        .map(|i| parse_order_cell(cell(record, i)))
        .filter(|v| !v.is_empty());

    let image_paths = candidates
        .iter()
        .filter_map(|c| schema.resolve_image(&language, &compound, c))
        .collect();

    let inst = Instance {
        id,
        language,
        sentence,
        compound,
        candidates,
        captions,
        gold_sentence_type,
        gold_order,
        image_paths,
    };
    inst.validate()?;
    Ok(inst)
}

/// Reads a tab-separated file with a header row.
pub fn parse_tsv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tsv_reader(file, schema).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_tsv_reader<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::format(1, e.to_string()))?.clone();
    let cols = ColumnIndex::build(&header, schema)?;

    let mut instances = Vec::new();
    let mut rejected = Vec::new();
    let mut seen_ids = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::format(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        match parse_row(&record, &cols, schema, line) {
            Ok(inst) if !seen_ids.insert(inst.id.clone()) => rejected.push(RejectedRow {
                row: line,
                reason: format!("duplicate instance id `{}`", inst.id),
            }),
            Ok(inst) => instances.push(inst),
            Err(reason) => rejected.push(RejectedRow { row: line, reason }),
        }
    }
    let mut dataset = Dataset::from_instances(instances);
    dataset.rejected = rejected;
    Ok(dataset)
}

/// Writes instances back out under `schema`'s column names.
pub fn write_tsv(dataset: &Dataset, schema: &Schema, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let with_captions = dataset.instances.iter().any(|i| i.captions.is_some());

    let mut header: Vec<&str> = Vec::new();
    if let Some(id) = &schema.id {
        header.push(id);
    }
    if let Some(lang) = &schema.language {
        header.push(lang);
    }
    header.push(&schema.sentence);
    header.push(&schema.compound);
    header.extend(schema.candidates.iter().map(String::as_str));
    if with_captions {
        header.extend(schema.captions.iter().map(String::as_str));
    }
    header.push(&schema.sentence_type);
    header.push(&schema.gold_order);

    let mut out = header.join("\t");
    out.push('\n');
    for inst in &dataset.instances {
        let mut row: Vec<String> = Vec::new();
        if schema.id.is_some() {
            row.push(inst.id.clone());
        }
        if schema.language.is_some() {
            row.push(inst.language.clone());
        }
        row.push(inst.sentence.clone());
        row.push(inst.compound.clone());
        row.extend(inst.candidates.iter().cloned());
        if with_captions {
            match &inst.captions {
                Some(c) => row.extend(c.iter().cloned()),
                None => row.extend(std::iter::repeat_n(String::new(), NUM_CANDIDATES)),
            }
        }
        row.push(inst.gold_sentence_type.map(|t| t.to_string()).unwrap_or_default());
        row.push(inst.gold_order.as_ref().map(|g| g.join(",")).unwrap_or_default());
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
