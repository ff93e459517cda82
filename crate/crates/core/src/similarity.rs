//! Query construction, cosine scoring and the per-instance score streams.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::fusion::default_weight;
use crate::model::{Instance, NUM_CANDIDATES};

/// Version of the key derivation below. Exporters must produce the same keys.
pub const KEY_SCHEME_VERSION: u32 = 1;

/// Separator between sentence and compound in sentence-typing features.
pub const FEATURE_SEPARATOR: &str = " [SEP] ";

/// Key for an arbitrary text: `t:` followed by the first 16 bytes of its
/// SHA-256 digest in lowercase hex.
pub fn text_key(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    format!("t:{}", hex::encode(&digest[..16]))
}

/// Key for caption `slot` (1-based) of an instance.
pub fn caption_key(instance_id: &str, slot: usize) -> String {
    format!("cap:{instance_id}:{slot}")
}

/// Images are keyed by their candidate id verbatim.
pub fn image_key(candidate: &str) -> String {
    candidate.to_string()
}

pub fn feature_text(sentence: &str, compound: &str) -> String {
    format!("{sentence}{FEATURE_SEPARATOR}{compound}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamName {
    Vision,
    TextM3,
    TextVl,
}

impl StreamName {
    pub const ALL: [StreamName; 3] = [StreamName::Vision, StreamName::TextM3, StreamName::TextVl];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamName::Vision => "vision",
            StreamName::TextM3 => "text_m3",
            StreamName::TextVl => "text_vl",
        }
    }
}

impl fmt::Display for StreamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        StreamName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown stream `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    ImageText,
    TextOnly,
}

/// One named vector of candidate scores and the weight it carries into fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreStream {
    pub name: StreamName,
    pub scores: Vec<f64>,
    pub weight: f64,
}

impl ScoreStream {
    pub fn new(name: StreamName, scores: Vec<f64>, weight: f64) -> Self {
        ScoreStream { name, scores, weight }
    }
}

/// Source of text embeddings. The bundled implementation reads precomputed
/// vectors from a store; a live encoder can implement the same trait.
pub trait TextEncoder {
    fn name(&self) -> &str;
    fn encode(&self, text: &str) -> Result<Cow<'_, [f32]>>;
}

/// Looks texts up in an [`EmbeddingStore`] under [`text_key`].
#[derive(Debug, Clone, Copy)]
pub struct StoreEncoder<'a> {
    pub name: &'a str,
    pub store: &'a EmbeddingStore,
}

impl<'a> StoreEncoder<'a> {
    pub fn new(name: &'a str, store: &'a EmbeddingStore) -> Self {
        StoreEncoder { name, store }
    }
}

impl TextEncoder for StoreEncoder<'_> {
    fn name(&self) -> &str {
        self.name
    }

    fn encode(&self, text: &str) -> Result<Cow<'_, [f32]>> {
        let key = text_key(text);
        match self.store.get(&key) {
            Some(v) => Ok(Cow::Borrowed(v)),
            None => Err(Error::MissingEmbedding {
                store: self.name.to_string(),
                key,
            }),
        }
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Softmax of `scores / tau`.
pub fn temperature_distribution(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::NonPositiveTemperature(tau));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(i));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn default_templates() -> Vec<String> {
    vec![
        "{sentence}".to_string(),
        "photo illustrating \"{compound}\": {sentence}".to_string(),
        "{sentence} ({compound} means {definition})".to_string(),
    ]
}

/// Ingredients for the text queries of one instance.
///
/// Templates containing `{definition}` are rendered once per definition and
/// skipped when there are none. Few-shot examples are prepended to every
/// rendered query; they change the text, not the number of queries.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub sentence_text: String,
    pub compound: String,
    pub definitions: Vec<String>,
    pub fewshot_examples: Vec<String>,
    pub templates: Vec<String>,
}

impl QuerySpec {
    pub fn new(sentence_text: impl Into<String>, compound: impl Into<String>) -> Self {
        QuerySpec {
            sentence_text: sentence_text.into(),
            compound: compound.into(),
            definitions: Vec::new(),
            fewshot_examples: Vec::new(),
            templates: default_templates(),
        }
    }

    pub fn render(&self) -> Result<Vec<String>> {
        if self.templates.is_empty() {
            return Err(Error::Config("query template list is empty".into()));
        }
        let prefix = (!self.fewshot_examples.is_empty()).then(|| self.fewshot_examples.join(" "));
        let fill = |template: &str, definition: Option<&str>| {
            let mut text = template
                .replace("{sentence}", &self.sentence_text)
                .replace("{compound}", &self.compound);
            if let Some(d) = definition {
                text = text.replace("{definition}", d);
            }
            match &prefix {
                Some(p) => format!("{p} {text}"),
                None => text,
            }
        };

        let mut queries = Vec::new();
        for template in &self.templates {
            if template.contains("{definition}") {
                queries.extend(self.definitions.iter().map(|d| fill(template, Some(d))));
            } else {
                queries.push(fill(template, None));
            }
        }
        if queries.is_empty() {
            return Err(Error::Config("no query could be rendered".into()));
        }
        if queries.iter().any(|q| q.trim().is_empty()) {
            return Err(Error::Config("a rendered query is empty".into()));
        }
        Ok(queries)
    }
}

/// Mean of the embeddings of every rendered query.
pub fn build_query_embedding(spec: &QuerySpec, encoder: &dyn TextEncoder) -> Result<Vec<f32>> {
    let queries = spec.render()?;
    let mut sum: Vec<f64> = Vec::new();
    for q in &queries {
        let e = encoder.encode(q)?;
        if sum.is_empty() {
            sum = vec![0.0; e.len()];
        } else if sum.len() != e.len() {
            return Err(Error::DimensionMismatch {
                expected: sum.len(),
                found: e.len(),
            });
        }
        for (s, &v) in sum.iter_mut().zip(e.iter()) {
            *s += f64::from(v);
        }
    }
    let n = queries.len() as f64;
    Ok(sum.into_iter().map(|s| (s / n) as f32).collect())
}

/// Embeddings needed to score one instance.
#[derive(Debug, Clone)]
pub struct StoreSet {
    /// Image embeddings keyed by candidate id. Not needed in text-only mode.
    pub image: Option<EmbeddingStore>,
    /// Vision-language text tower: query texts and captions.
    pub vl_text: EmbeddingStore,
    /// Multilingual sentence encoder: query texts, captions and typing features.
    pub m3: EmbeddingStore,
}

fn missing(store: &str, key: String) -> Error {
    Error::MissingEmbedding {
        store: store.to_string(),
        key,
    }
}

/// Cosine between the query and each candidate image.
pub fn vision_scores(instance: &Instance, query: &[f32], images: Option<&EmbeddingStore>) -> Result<Vec<f64>> {
    instance
        .candidates
        .iter()
        .map(|c| {
            let key = image_key(c);
            let v = images
                .and_then(|s| s.get(&key))
                .ok_or_else(|| missing("image", key.clone()))?;
            cosine(query, v)
        })
        .collect()
}

/// Cosine between the query and each candidate caption, using `store` for
/// caption embeddings.
pub fn caption_scores(
    instance: &Instance,
    query: &[f32],
    store: &EmbeddingStore,
    store_name: &str,
) -> Result<Vec<f64>> {
    if instance.captions.is_none() {
        return Err(Error::MissingCaptions(instance.id.clone()));
    }
    (1..=NUM_CANDIDATES)
        .map(|slot| {
            let key = caption_key(&instance.id, slot);
            let v = store.get(&key).ok_or_else(|| missing(store_name, key.clone()))?;
            cosine(query, v)
        })
        .collect()
}

/// The three score streams `[vision, text_m3, text_vl]` with their default
/// weights for `mode`. In text-only mode the vision stream is all zeros with
/// zero weight and no image embeddings are read.
pub fn compute_streams(
    instance: &Instance,
    q_vl: &[f32],
    q_m3: &[f32],
    stores: &StoreSet,
    mode: Mode,
) -> Result<Vec<ScoreStream>> {
    let vision = match mode {
        Mode::ImageText => vision_scores(instance, q_vl, stores.image.as_ref())?,
        Mode::TextOnly => vec![0.0; NUM_CANDIDATES],
    };
    let text_m3 = caption_scores(instance, q_m3, &stores.m3, "m3")?;
    let text_vl = caption_scores(instance, q_vl, &stores.vl_text, "vl_text")?;
    Ok(vec![
        ScoreStream::new(StreamName::Vision, vision, default_weight(mode, StreamName::Vision)),
        ScoreStream::new(StreamName::TextM3, text_m3, default_weight(mode, StreamName::TextM3)),
        ScoreStream::new(StreamName::TextVl, text_vl, default_weight(mode, StreamName::TextVl)),
    ])
}
