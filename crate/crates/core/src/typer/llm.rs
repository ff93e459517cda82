//! Literal-first classification: obtain (or reuse) a handful of literal
//! example sentences for the compound, then ask for a single label.

use log::debug;

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::typer::cache::{LiteralExampleCache, TextCache};
use crate::typer::client::{parse_label, ClassifierClient, ClientRequest, Phase};
use crate::typer::{DecisionSource, SentenceTypeDecision};

#[derive(Debug, Clone, PartialEq)]
pub struct LiteralFirstOptions {
    pub model: Option<String>,
    pub num_examples: usize,
}

impl Default for LiteralFirstOptions {
    fn default() -> Self {
        LiteralFirstOptions {
            model: None,
            num_examples: 3,
        }
    }
}

fn request(phase: Phase, instance: &Instance, model: &Option<String>) -> ClientRequest {
    ClientRequest {
        phase,
        compound: instance.compound.clone(),
        language: instance.language.clone(),
        sentence: None,
        examples: None,
        count: None,
        model: model.clone(),
    }
}

/// Literal examples for the instance's (compound, language), generating them
/// through `client` only on a cache miss.
pub fn literal_examples(
    instance: &Instance,
    client: &dyn ClassifierClient,
    cache: &LiteralExampleCache,
    options: &LiteralFirstOptions,
) -> Result<Vec<String>> {
    cache.get_or_insert_with(&instance.language, &instance.compound, || {
        let mut req = request(Phase::GenerateExamples, instance, &options.model);
        req.count = Some(options.num_examples);
        let resp = client.send(&req).map_err(as_unavailable)?;
        let examples: Vec<String> = resp
            .examples
            .unwrap_or_default()
            .into_iter()
            .map(|e| e.trim().to_string())
            .filter(|e| !e.is_empty())
            .take(options.num_examples)
            .collect();
        if examples.is_empty() {
            return Err(Error::ClientUnavailable("no literal examples returned".into()));
        }
        Ok(examples)
    })
}

fn as_unavailable(e: Error) -> Error {
    match e {
        Error::ClientUnavailable(_) => e,
        other => Error::ClientUnavailable(other.to_string()),
    }
}

pub fn classify_literal_first(
    instance: &Instance,
    client: &dyn ClassifierClient,
    cache: &LiteralExampleCache,
    options: &LiteralFirstOptions,
) -> Result<SentenceTypeDecision> {
    let examples = literal_examples(instance, client, cache, options)?;
    let mut req = request(Phase::Classify, instance, &options.model);
    req.sentence = Some(instance.sentence.clone());
    req.examples = Some(examples);

    for attempt in 0..2 {
        let resp = client.send(&req).map_err(as_unavailable)?;
        if let Some(label) = resp.label.as_deref().and_then(parse_label) {
            return Ok(SentenceTypeDecision::new(
                label,
                DecisionSource::Llm,
                resp.confidence.unwrap_or(1.0),
            ));
        }
        debug!("unparseable label for {} (attempt {})", instance.id, attempt + 1);
    }
    Err(Error::ClientUnavailable(format!(
        "no parseable label for `{}` after retry",
        instance.id
    )))
}

/// English rendering of the instance sentence, via the `translate` phase.
pub fn translate_sentence(
    instance: &Instance,
    client: &dyn ClassifierClient,
    cache: &TextCache,
    model: &Option<String>,
) -> Result<String> {
    let hit = cache.get_or_insert_with(&instance.language, &instance.sentence, || {
        let mut req = request(Phase::Translate, instance, model);
        req.sentence = Some(instance.sentence.clone());
        let resp = client.send(&req).map_err(as_unavailable)?;
        match resp.translation {
            Some(t) if !t.trim().is_empty() => Ok(vec![t]),
            _ => Err(Error::ClientUnavailable("empty translation".into())),
        }
    })?;
    hit.into_iter()
        .next()
        .ok_or_else(|| Error::ClientUnavailable("empty translation".into()))
}
