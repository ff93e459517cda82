//! Literal/idiomatic sentence typing.
//!
//! Four sources produce a [`SentenceTypeDecision`]: a logistic-regression
//! model over sentence embeddings ([`lr`]), an external classifier queried with
//! literal-first prompting ([`llm`]), a weighted vote over several decisions
//! ([`ensemble_classify`]), and a caption/marker heuristic
//! ([`heuristic_classify`]) that never fails.

pub mod cache;
pub mod client;
pub mod llm;
pub mod lr;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, SentenceType};

pub use cache::{LiteralExampleCache, TextCache};
pub use client::{ClassifierClient, ClientRequest, ClientResponse, MockClient, Phase};
pub use llm::{classify_literal_first, LiteralFirstOptions};
pub use lr::{predict_lr, train_lr, LrModel, TrainParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionSource {
    Lr,
    Llm,
    Ensemble,
    Heuristic,
    Gold,
    /// Typing disabled; every sentence is treated as idiomatic.
    Assumed,
}

impl DecisionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionSource::Lr => "lr",
            DecisionSource::Llm => "llm",
            DecisionSource::Ensemble => "ensemble",
            DecisionSource::Heuristic => "heuristic",
            DecisionSource::Gold => "gold",
            DecisionSource::Assumed => "assumed",
        }
    }
}

impl fmt::Display for DecisionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceTypeDecision {
    pub label: SentenceType,
    pub source: DecisionSource,
    /// Always in `[0, 1]`.
    pub confidence: f64,
}

impl SentenceTypeDecision {
    pub fn new(label: SentenceType, source: DecisionSource, confidence: f64) -> Self {
        SentenceTypeDecision {
            label,
            source,
            confidence: if confidence.is_finite() {
                confidence.clamp(0.0, 1.0)
            } else {
                0.0
            },
        }
    }

    pub fn is_idiomatic(&self) -> bool {
        self.label == SentenceType::Idiomatic
    }
}

/// Weighted vote. Ties go to `tie_label`.
pub fn ensemble_classify(
    decisions: &[(SentenceTypeDecision, f64)],
    tie_label: SentenceType,
) -> Result<SentenceTypeDecision> {
    if decisions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut literal, mut idiomatic) = (0.0, 0.0);
    for (d, w) in decisions {
        if !(*w >= 0.0) || !w.is_finite() {
            return Err(Error::Config(format!("ensemble weight must be nonnegative, got {w}")));
        }
        match d.label {
            SentenceType::Literal => literal += w,
            SentenceType::Idiomatic => idiomatic += w,
        }
    }
    let total = literal + idiomatic;
    if total == 0.0 {
        return Err(Error::EmptyInput);
    }
    let (label, mass) = if literal > idiomatic {
        (SentenceType::Literal, literal)
    } else if idiomatic > literal {
        (SentenceType::Idiomatic, idiomatic)
    } else {
        (tie_label, literal)
    };
    Ok(SentenceTypeDecision::new(label, DecisionSource::Ensemble, mass / total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicConfig {
    /// Minimum number of captions containing the compound for a literal call.
    pub threshold_k: usize,
    /// Case-insensitive substrings that mark a literal sentence.
    pub markers: Vec<String>,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            threshold_k: 2,
            markers: Vec::new(),
        }
    }
}

/// Literal when the compound shows up in at least `threshold_k` captions or
/// the sentence contains a marker. Without captions falls back to the
/// idiomatic majority prior.
pub fn heuristic_classify(instance: &Instance, threshold_k: usize, markers: &[String]) -> SentenceTypeDecision {
    let Some(captions) = &instance.captions else {
        return SentenceTypeDecision::new(SentenceType::Idiomatic, DecisionSource::Heuristic, 0.5);
    };
    let compound = instance.compound.trim().to_lowercase();
    let occurrences = captions
        .iter()
        .filter(|c| !compound.is_empty() && c.to_lowercase().contains(&compound))
        .count();
    let sentence = instance.sentence.to_lowercase();
    let marked = markers
        .iter()
        .map(|m| m.trim().to_lowercase())
        .any(|m| !m.is_empty() && sentence.contains(&m));
    let label = if occurrences >= threshold_k.max(1) || marked {
        SentenceType::Literal
    } else {
        SentenceType::Idiomatic
    };
    let confidence = 0.5 + 0.1 * occurrences.min(5) as f64;
    SentenceTypeDecision::new(label, DecisionSource::Heuristic, confidence)
}
