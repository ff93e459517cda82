//! Per-instance orchestration: sentence typing, rewriting, query
//! construction, stream scoring, optional cross-lingual blending and fusion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::fusion::{borda_fuse, combine_crosslingual, FusionConfig, RankingResult};
use crate::model::{Dataset, Instance, SentenceType};
use crate::rewriter::{miss_log_line, rewrite, IdiomLexicon, LexiconEntry};
use crate::similarity::{
    build_query_embedding, caption_key, caption_scores, compute_streams, default_templates, feature_text, image_key,
    temperature_distribution, text_key, vision_scores, Mode, QuerySpec, ScoreStream, StoreEncoder, StoreSet,
    StreamName,
};
use crate::typer::cache::{LiteralExampleCache, TextCache};
use crate::typer::client::ClassifierClient;
use crate::typer::llm::{classify_literal_first, translate_sentence, LiteralFirstOptions};
use crate::typer::lr::{predict_lr, LrModel};
use crate::typer::{ensemble_classify, heuristic_classify, DecisionSource, HeuristicConfig, SentenceTypeDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    #[default]
    Improved,
    TextOnly,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Improved => "improved",
            Variant::TextOnly => "text_only",
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            Variant::TextOnly => Mode::TextOnly,
            Variant::Baseline | Variant::Improved => Mode::ImageText,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TyperSource {
    Gold,
    Lr,
    LlmEnsemble,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmModel {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Backends for the literal-first vote. Empty means one request with no
    /// model selector.
    pub models: Vec<LlmModel>,
    pub num_examples: usize,
    pub tie_label: SentenceType,
    /// Bridge program speaking the line protocol on stdin/stdout.
    pub command: Option<Vec<String>>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            models: Vec::new(),
            num_examples: 3,
            tie_label: SentenceType::Idiomatic,
            command: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub typer_priority: Vec<TyperSource>,
    /// When false every sentence is treated as idiomatic.
    pub typer_enabled: bool,
    pub rewrite: bool,
    /// Feed the rewritten sentence to the vision query only; caption streams
    /// keep the original sentence.
    pub rewrite_vision_only: bool,
    pub fusion: FusionConfig,
    /// Weights for the two baseline streams.
    pub baseline_weights: BTreeMap<StreamName, f64>,
    pub tau: f64,
    pub crosslingual: bool,
    /// Languages that get cross-lingual blending; empty means every
    /// non-English language.
    pub crosslingual_languages: Vec<String>,
    pub blend: f64,
    pub few_shot: bool,
    pub templates: Vec<String>,
    pub heuristic: HeuristicConfig,
    pub llm: LlmConfig,
    pub strict: bool,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variant: Variant::Improved,
            typer_priority: vec![TyperSource::Lr, TyperSource::LlmEnsemble, TyperSource::Heuristic],
            typer_enabled: true,
            rewrite: true,
            rewrite_vision_only: false,
            fusion: FusionConfig::default(),
            baseline_weights: [(StreamName::Vision, 0.6), (StreamName::TextVl, 0.4)]
                .into_iter()
                .collect(),
            tau: 0.7,
            crosslingual: false,
            crosslingual_languages: Vec::new(),
            blend: 0.5,
            few_shot: false,
            templates: default_templates(),
            heuristic: HeuristicConfig::default(),
            llm: LlmConfig::default(),
            strict: false,
            workers: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.typer_priority.is_empty() {
            return Err(Error::Config("typer_priority must not be empty".into()));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::NonPositiveTemperature(self.tau));
        }
        if !(0.0..=1.0).contains(&self.blend) {
            return Err(Error::Config("blend must be in [0,1]".into()));
        }
        if self.templates.is_empty() {
            return Err(Error::Config("templates must not be empty".into()));
        }
        if self.llm.models.iter().any(|m| !(m.weight >= 0.0)) {
            return Err(Error::Config("llm model weights must be nonnegative".into()));
        }
        self.fusion.validate()
    }

    /// Fusion settings with the mode implied by the variant.
    pub fn effective_fusion(&self) -> FusionConfig {
        let mut f = self.fusion.clone();
        f.mode = self.variant.mode();
        if self.variant == Variant::Baseline {
            f.weights = Some(self.baseline_weights.clone());
        }
        f
    }

    fn crosslingual_for(&self, language: &str) -> bool {
        self.crosslingual
            && self.variant != Variant::Baseline
            && !language.eq_ignore_ascii_case("en")
            && (self.crosslingual_languages.is_empty()
                || self
                    .crosslingual_languages
                    .iter()
                    .any(|l| l.eq_ignore_ascii_case(language)))
    }

    fn priority(&self) -> Vec<TyperSource> {
        match self.variant {
            Variant::Baseline => vec![TyperSource::Heuristic],
            _ => self.typer_priority.clone(),
        }
    }

    fn rewriting(&self) -> bool {
        self.rewrite && self.variant != Variant::Baseline
    }
}

/// Everything a run reads besides the dataset.
pub struct Resources {
    pub lexicon: IdiomLexicon,
    pub stores: StoreSet,
    pub lr_model: Option<LrModel>,
    pub client: Option<Arc<dyn ClassifierClient>>,
    pub example_cache: LiteralExampleCache,
    pub translation_cache: TextCache,
}

impl Resources {
    pub fn new(lexicon: IdiomLexicon, stores: StoreSet) -> Self {
        Resources {
            lexicon,
            stores,
            lr_model: None,
            client: None,
            example_cache: LiteralExampleCache::in_memory(),
            translation_cache: TextCache::in_memory(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub language: String,
    pub compound: String,
    pub sentence_type: SentenceTypeDecision,
    pub ranking: RankingResult,
    /// Candidate ids, best first.
    pub ranked_candidates: Vec<String>,
    pub variant: Variant,
    pub rewrite_applied: bool,
    /// Idiomatic sentence whose compound has no lexicon entry.
    pub lexicon_miss: bool,
    /// Softmax view of each stream's raw scores at temperature `tau`.
    pub stream_probabilities: BTreeMap<StreamName, Vec<f64>>,
    pub elapsed_ms: f64,
}

impl PredictionRecord {
    /// Fused scores in ranked order.
    pub fn ranked_scores(&self) -> Vec<f64> {
        self.ranking
            .order
            .iter()
            .map(|&i| self.ranking.borda_scores[i])
            .collect()
    }
}

fn m3_feature(instance: &Instance, m3: &EmbeddingStore) -> Option<Vec<f64>> {
    m3.get(&text_key(&feature_text(&instance.sentence, &instance.compound)))
        .map(|v| v.iter().map(|&x| f64::from(x)).collect())
}

fn llm_decision(instance: &Instance, config: &PipelineConfig, resources: &Resources) -> Option<SentenceTypeDecision> {
    let client = resources.client.as_deref()?;
    let models: Vec<(Option<String>, f64)> = if config.llm.models.is_empty() {
        vec![(None, 1.0)]
    } else {
        config
            .llm
            .models
            .iter()
            .map(|m| (Some(m.name.clone()), m.weight))
            .collect()
    };
    let single = models.len() == 1;
    let mut votes = Vec::new();
    for (model, weight) in models {
        let options = LiteralFirstOptions {
            model,
            num_examples: config.llm.num_examples,
        };
        match classify_literal_first(instance, client, &resources.example_cache, &options) {
            Ok(d) => votes.push((d, weight)),
            Err(e) => debug!("{}: llm {:?} unavailable: {e}", instance.id, options.model),
        }
    }
    if single {
        return votes.pop().map(|(d, _)| d);
    }
    ensemble_classify(&votes, config.llm.tie_label).ok()
}

/// First decision produced by the configured sources; the heuristic is the
/// final fallback.
pub fn type_sentence(instance: &Instance, config: &PipelineConfig, resources: &Resources) -> SentenceTypeDecision {
    decide(instance, config, resources, true)
}

fn decide(
    instance: &Instance,
    config: &PipelineConfig,
    resources: &Resources,
    use_client: bool,
) -> SentenceTypeDecision {
    if !config.typer_enabled {
        return SentenceTypeDecision::new(SentenceType::Idiomatic, DecisionSource::Assumed, 0.5);
    }
    for source in config.priority() {
        let decision = match source {
            TyperSource::Gold => instance
                .gold_sentence_type
                .map(|t| SentenceTypeDecision::new(t, DecisionSource::Gold, 1.0)),
            TyperSource::Lr => resources.lr_model.as_ref().and_then(|model| {
                let feature = m3_feature(instance, &resources.stores.m3)?;
                predict_lr(model, &feature)
                    .map_err(|e| warn!("{}: lr skipped: {e}", instance.id))
                    .ok()
            }),
            TyperSource::LlmEnsemble if use_client => llm_decision(instance, config, resources),
            TyperSource::LlmEnsemble => None,
            TyperSource::Heuristic => Some(heuristic_classify(
                instance,
                config.heuristic.threshold_k,
                &config.heuristic.markers,
            )),
        };
        if let Some(d) = decision {
            return d;
        }
    }
    heuristic_classify(instance, config.heuristic.threshold_k, &config.heuristic.markers)
}

struct QueryPlan {
    vision: QuerySpec,
    captions: QuerySpec,
    rewrite_applied: bool,
    lexicon_miss: bool,
}

fn query_spec(
    sentence: &str,
    instance: &Instance,
    entry: Option<&LexiconEntry>,
    decision: &SentenceTypeDecision,
    config: &PipelineConfig,
) -> QuerySpec {
    let definitions = match entry {
        Some(e) if decision.is_idiomatic() => e.definition.iter().cloned().collect(),
        _ => Vec::new(),
    };
    let fewshot_examples = match entry {
        Some(e) if config.few_shot => e.fewshot.clone(),
        _ => Vec::new(),
    };
    QuerySpec {
        sentence_text: sentence.to_string(),
        compound: instance.compound.clone(),
        definitions,
        fewshot_examples,
        templates: config.templates.clone(),
    }
}

fn plan_queries(
    instance: &Instance,
    sentence: &str,
    decision: &SentenceTypeDecision,
    config: &PipelineConfig,
    lexicon: &IdiomLexicon,
) -> QueryPlan {
    let entry = lexicon.get(&instance.language, &instance.compound);
    let (rewritten, applied) = if config.rewriting() {
        let r = rewrite(sentence, &instance.compound, &instance.language, lexicon, decision);
        (r.text, r.applied)
    } else {
        (sentence.to_string(), false)
    };
    let caption_sentence = if config.rewrite_vision_only {
        sentence
    } else {
        &rewritten
    };
    QueryPlan {
        vision: query_spec(&rewritten, instance, entry, decision, config),
        captions: query_spec(caption_sentence, instance, entry, decision, config),
        rewrite_applied: applied,
        lexicon_miss: config.rewriting() && decision.is_idiomatic() && entry.is_none(),
    }
}

fn score_streams(
    instance: &Instance,
    plan: &QueryPlan,
    config: &PipelineConfig,
    stores: &StoreSet,
) -> Result<Vec<ScoreStream>> {
    let vl = StoreEncoder::new("vl_text", &stores.vl_text);
    let q_vision = build_query_embedding(&plan.vision, &vl)?;
    if config.variant == Variant::Baseline {
        let q_captions = if plan.captions == plan.vision {
            q_vision.clone()
        } else {
            build_query_embedding(&plan.captions, &vl)?
        };
        return Ok(vec![
            ScoreStream::new(
                StreamName::Vision,
                vision_scores(instance, &q_vision, stores.image.as_ref())?,
                0.0,
            ),
            ScoreStream::new(
                StreamName::TextVl,
                caption_scores(instance, &q_captions, &stores.vl_text, "vl_text")?,
                0.0,
            ),
        ]);
    }
    let m3 = StoreEncoder::new("m3", &stores.m3);
    let q_m3 = build_query_embedding(&plan.captions, &m3)?;
    let mode = config.variant.mode();
    if plan.captions == plan.vision {
        return compute_streams(instance, &q_vision, &q_m3, stores, mode);
    }
    let q_captions = build_query_embedding(&plan.captions, &vl)?;
    let mut streams = compute_streams(instance, &q_captions, &q_m3, stores, mode)?;
    if mode == Mode::ImageText {
        streams[0].scores = vision_scores(instance, &q_vision, stores.image.as_ref())?;
    }
    Ok(streams)
}

fn run_instance_inner(instance: &Instance, config: &PipelineConfig, resources: &Resources) -> Result<PredictionRecord> {
    let started = Instant::now();
    let decision = type_sentence(instance, config, resources);
    let plan = plan_queries(instance, &instance.sentence, &decision, config, &resources.lexicon);
    let fusion = config.effective_fusion();

    let mut streams = score_streams(instance, &plan, config, &resources.stores)?;

    if config.crosslingual_for(&instance.language) {
        let translated = resources.client.as_deref().and_then(|client| {
            translate_sentence(instance, client, &resources.translation_cache, &None)
                .map_err(|e| warn!("{}: no translation, skipping blend: {e}", instance.id))
                .ok()
        });
        if let Some(english) = translated {
            let mut tplan = plan_queries(instance, &english, &decision, config, &resources.lexicon);
            tplan.rewrite_applied = plan.rewrite_applied;
            let tstreams = score_streams(instance, &tplan, config, &resources.stores)?;
            streams = combine_crosslingual(&streams, &tstreams, config.blend)?;
        }
    }

    fusion.apply_weights(&mut streams);
    let ranking = borda_fuse(&streams, &fusion)?;
    let stream_probabilities = streams
        .iter()
        .map(|s| temperature_distribution(&s.scores, config.tau).map(|p| (s.name, p)))
        .collect::<Result<_>>()?;
    let ranked_candidates = ranking.order.iter().map(|&i| instance.candidates[i].clone()).collect();

    Ok(PredictionRecord {
        instance_id: instance.id.clone(),
        language: instance.language.clone(),
        compound: instance.compound.clone(),
        sentence_type: decision,
        ranking,
        ranked_candidates,
        variant: config.variant,
        rewrite_applied: plan.rewrite_applied,
        lexicon_miss: plan.lexicon_miss,
        stream_probabilities,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

pub fn run_instance(instance: &Instance, config: &PipelineConfig, resources: &Resources) -> Result<PredictionRecord> {
    run_instance_inner(instance, config, resources).map_err(|e| e.in_instance(&instance.id))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LanguageCoverage {
    pub processed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageReport {
    pub per_language: BTreeMap<String, LanguageCoverage>,
}

impl CoverageReport {
    pub fn processed(&self) -> usize {
        self.per_language.values().map(|c| c.processed).sum()
    }

    pub fn failed(&self) -> usize {
        self.per_language.values().map(|c| c.failed).sum()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("language\tprocessed\tfailed\n");
        for (lang, c) in &self.per_language {
            out.push_str(&format!("{lang}\t{}\t{}\n", c.processed, c.failed));
        }
        out.push_str(&format!("TOTAL\t{}\t{}\n", self.processed(), self.failed()));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceFailure {
    pub instance_id: String,
    pub language: String,
    pub message: String,
}

#[derive(Debug)]
pub struct DatasetRun {
    /// Successful predictions in input order.
    pub records: Vec<PredictionRecord>,
    pub failures: Vec<InstanceFailure>,
    pub coverage: CoverageReport,
}

impl DatasetRun {
    pub fn miss_log(&self) -> String {
        self.records
            .iter()
            .filter(|r| r.lexicon_miss)
            .map(|r| miss_log_line(&r.instance_id, &r.compound) + "\n")
            .collect()
    }
}

pub fn run_dataset(dataset: &Dataset, config: &PipelineConfig, resources: &Resources) -> Result<DatasetRun> {
    config.validate()?;
    let run_all = || -> Vec<Result<PredictionRecord>> {
        dataset
            .instances
            .par_iter()
            .map(|inst| run_instance(inst, config, resources))
            .collect()
    };
    let results = if config.workers > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run_all)
    } else {
        dataset
            .instances
            .iter()
            .map(|inst| run_instance(inst, config, resources))
            .collect()
    };

    let mut coverage = CoverageReport::default();
    for lang in dataset.language_counts.keys() {
        coverage.per_language.insert(lang.clone(), LanguageCoverage::default());
    }
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (inst, result) in dataset.instances.iter().zip(results) {
        let entry = coverage.per_language.entry(inst.language.clone()).or_default();
        match result {
            Ok(r) => {
                entry.processed += 1;
                records.push(r);
            }
            Err(e) if config.strict => return Err(e),
            Err(e) => {
                entry.failed += 1;
                warn!("{e}");
                failures.push(InstanceFailure {
                    instance_id: inst.id.clone(),
                    language: inst.language.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(DatasetRun {
        records,
        failures,
        coverage,
    })
}

/// A store name and key the pipeline would look up.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyRequest {
    pub store: &'static str,
    pub key: String,
    pub instance_id: String,
    pub what: String,
}

fn plan_keys(instance: &Instance, plan: &QueryPlan, config: &PipelineConfig, out: &mut BTreeSet<KeyRequest>) {
    let mut push = |store: &'static str, key: String, what: String| {
        out.insert(KeyRequest {
            store,
            key,
            instance_id: instance.id.clone(),
            what,
        });
    };
    let baseline = config.variant == Variant::Baseline;
    let mut texts: Vec<(&'static str, String)> = Vec::new();
    for spec in [&plan.vision, &plan.captions] {
        if let Ok(q) = spec.render() {
            texts.extend(q.into_iter().map(|t| ("vl_text", t)));
        }
    }
    if !baseline {
        if let Ok(q) = plan.captions.render() {
            texts.extend(q.into_iter().map(|t| ("m3", t)));
        }
    }
    for (store, text) in texts {
        push(store, text_key(&text), format!("query `{text}`"));
    }
    if config.variant.mode() == Mode::ImageText {
        for c in &instance.candidates {
            push("image", image_key(c), format!("image `{c}`"));
        }
    }
    for slot in 1..=instance.candidates.len() {
        push(
            "vl_text",
            caption_key(&instance.id, slot),
            format!("caption slot {slot}"),
        );
        if !baseline {
            push("m3", caption_key(&instance.id, slot), format!("caption slot {slot}"));
        }
    }
}

/// Keys a run would request, derived without scoring or contacting the
/// classifier. When `live_classifier` is set, decisions it would make are not
/// knowable offline, so both labels are expanded for those instances.
/// Translations are only followed when cached.
pub fn requested_keys(
    dataset: &Dataset,
    config: &PipelineConfig,
    resources: &Resources,
    live_classifier: bool,
) -> BTreeSet<KeyRequest> {
    let mut out = BTreeSet::new();
    for inst in &dataset.instances {
        let priority = config.priority();
        if config.typer_enabled && priority.contains(&TyperSource::Lr) && resources.lr_model.is_some() {
            out.insert(KeyRequest {
                store: "m3",
                key: text_key(&feature_text(&inst.sentence, &inst.compound)),
                instance_id: inst.id.clone(),
                what: "typing feature".into(),
            });
        }
        let decided = decide(inst, config, resources, false);
        let llm_first = config.typer_enabled
            && live_classifier
            && priority
                .iter()
                .position(|s| *s == TyperSource::LlmEnsemble)
                .is_some_and(|llm| {
                    let winner = priority.iter().position(|s| {
                        matches!(
                            (s, decided.source),
                            (TyperSource::Gold, DecisionSource::Gold)
                                | (TyperSource::Lr, DecisionSource::Lr)
                                | (TyperSource::Heuristic, DecisionSource::Heuristic)
                        )
                    });
                    winner.is_none_or(|w| llm < w)
                });
        let decisions: Vec<SentenceTypeDecision> = if llm_first {
            [SentenceType::Literal, SentenceType::Idiomatic]
                .into_iter()
                .map(|l| SentenceTypeDecision::new(l, DecisionSource::Llm, 1.0))
                .collect()
        } else {
            vec![decided]
        };
        for decision in &decisions {
            let plan = plan_queries(inst, &inst.sentence, decision, config, &resources.lexicon);
            plan_keys(inst, &plan, config, &mut out);
            if config.crosslingual_for(&inst.language) {
                if let Some(t) = resources.translation_cache.get(&inst.language, &inst.sentence) {
                    if let Some(english) = t.first() {
                        let tplan = plan_queries(inst, english, decision, config, &resources.lexicon);
                        plan_keys(inst, &tplan, config, &mut out);
                    }
                }
            }
        }
    }
    out
}

/// Requests missing from `stores`.
pub fn missing_keys(requests: &BTreeSet<KeyRequest>, stores: &StoreSet) -> Vec<KeyRequest> {
    requests
        .iter()
        .filter(|r| {
            let store = match r.store {
                "image" => stores.image.as_ref(),
                "vl_text" => Some(&stores.vl_text),
                _ => Some(&stores.m3),
            };
            !store.is_some_and(|s| s.contains(&r.key))
        })
        .cloned()
        .collect()
}

pub const PREDICTION_COLUMNS: &str = "instance_id\tsentence_type\tconfidence\tranked_candidates\tborda_scores";

/// Prediction TSV with a provenance comment line and optional timestamp.
pub fn predictions_tsv(
    records: &[PredictionRecord],
    variant: Variant,
    config_hash: &str,
    timestamp: Option<u64>,
) -> String {
    let mut out = format!("# polyframe predictions variant={variant} config={config_hash}\n");
    if let Some(t) = timestamp {
        out.push_str(&format!("# generated_at_unix={t}\n"));
    }
    out.push_str(PREDICTION_COLUMNS);
    out.push('\n');
    for r in records {
        let scores: Vec<String> = r.ranked_scores().iter().map(|s| s.to_string()).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.instance_id,
            r.sentence_type.label,
            r.sentence_type.confidence,
            r.ranked_candidates.join(","),
            scores.join(",")
        ));
    }
    out
}
