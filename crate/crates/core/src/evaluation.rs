//! Top-1, NDCG@5 and sentence-type accuracy, per-language reports and
//! ablation sweeps.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Aggregator;
use crate::model::{Dataset, Instance, SentenceType, NUM_CANDIDATES};
use crate::pipeline::{run_dataset, PipelineConfig, PredictionRecord, Resources, PREDICTION_COLUMNS};
use crate::similarity::StreamName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    #[default]
    Exponential,
    Linear,
}

impl GainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GainMode::Exponential => "exponential",
            GainMode::Linear => "linear",
        }
    }
}

/// Relevance grades assigned to gold positions 1..5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelevanceProfile {
    pub gains: Vec<f64>,
    pub gain_mode: GainMode,
}

impl Default for RelevanceProfile {
    fn default() -> Self {
        RelevanceProfile {
            gains: vec![4.0, 3.0, 2.0, 1.0, 0.0],
            gain_mode: GainMode::Exponential,
        }
    }
}

impl RelevanceProfile {
    pub fn validate(&self) -> Result<()> {
        let g = &self.gains;
        if g.len() != NUM_CANDIDATES {
            return Err(Error::Config(format!("gains must have {NUM_CANDIDATES} entries")));
        }
        if g.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Config("gains must be finite and nonnegative".into()));
        }
        if g.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config("gains must be nonincreasing".into()));
        }
        if !(g[0] > g[NUM_CANDIDATES - 1]) {
            return Err(Error::Config("gains must not be constant".into()));
        }
        Ok(())
    }

    fn gain(&self, rel: f64) -> f64 {
        match self.gain_mode {
            GainMode::Exponential => rel.exp2() - 1.0,
            GainMode::Linear => rel,
        }
    }

    /// `4,3,2,1,0/exponential`
    pub fn describe(&self) -> String {
        let g: Vec<String> = self.gains.iter().map(|x| x.to_string()).collect();
        format!("{}/{}", g.join(","), self.gain_mode.as_str())
    }
}

/// The evaluation view of one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub instance_id: String,
    pub sentence_type: Option<SentenceType>,
    pub ranked_candidates: Vec<String>,
}

impl From<&PredictionRecord> for Prediction {
    fn from(r: &PredictionRecord) -> Self {
        Prediction {
            instance_id: r.instance_id.clone(),
            sentence_type: Some(r.sentence_type.label),
            ranked_candidates: r.ranked_candidates.clone(),
        }
    }
}

/// Parses the prediction TSV. `#` lines are skipped; the column header is
/// required.
pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header == PREDICTION_COLUMNS => {}
        Some((i, _)) => return Err(Error::format(i + 1, "expected prediction header")),
        None => return Err(Error::format(1, "empty prediction file")),
    }
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() < 4 {
                return Err(Error::format(i + 1, "prediction row needs at least 4 fields"));
            }
            let sentence_type = match f[1] {
                "" => None,
                s => Some(s.parse().map_err(|e: String| Error::format(i + 1, e))?),
            };
            Ok(Prediction {
                instance_id: f[0].to_string(),
                sentence_type,
                ranked_candidates: f[3].split(',').map(str::to_string).collect(),
            })
        })
        .collect()
}

fn gold_index(gold: &Dataset) -> HashMap<&str, &Instance> {
    gold.instances.iter().map(|i| (i.id.as_str(), i)).collect()
}

fn gold_for<'a>(index: &HashMap<&str, &'a Instance>, id: &str) -> Result<&'a Instance> {
    index
        .get(id)
        .copied()
        .ok_or_else(|| Error::MissingGold(format!("no gold instance `{id}`")))
}

fn gold_order(inst: &Instance) -> Result<&[String]> {
    inst.gold_order
        .as_deref()
        .ok_or_else(|| Error::MissingGold(format!("instance `{}` has no gold order", inst.id)))
}

/// Fraction of predictions whose first candidate is the gold first candidate.
pub fn top1(predictions: &[Prediction], gold: &Dataset) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::MissingGold("no predictions".into()));
    }
    let index = gold_index(gold);
    let mut hits = 0usize;
    for p in predictions {
        let order = gold_order(gold_for(&index, &p.instance_id)?)?;
        if !p.ranked_candidates.is_empty() && p.ranked_candidates.first() == order.first() {
            hits += 1;
        }
    }
    Ok(hits as f64 / predictions.len() as f64)
}

fn check_permutation<T: PartialEq>(prediction: &[T], gold: &[T]) -> Result<()> {
    let n = gold.len();
    if prediction.len() != n {
        return Err(Error::NotAPermutation(format!(
            "length {} vs gold {n}",
            prediction.len()
        )));
    }
    for (i, g) in gold.iter().enumerate() {
        if gold[..i].contains(g) {
            return Err(Error::NotAPermutation("gold order repeats a candidate".into()));
        }
        if !prediction.contains(g) {
            return Err(Error::NotAPermutation("prediction misses a gold candidate".into()));
        }
    }
    Ok(())
}

/// NDCG over the full gold length with log2(i+1) discounts.
pub fn ndcg5<T: PartialEq>(prediction: &[T], gold: &[T], profile: &RelevanceProfile) -> Result<f64> {
    profile.validate()?;
    if gold.len() != profile.gains.len() {
        return Err(Error::NotAPermutation(format!(
            "expected {} candidates",
            profile.gains.len()
        )));
    }
    check_permutation(prediction, gold)?;
    let discount = |i: usize| ((i + 2) as f64).log2();
    let dcg: f64 = prediction
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let gold_pos = gold.iter().position(|g| g == c).expect("checked permutation");
            profile.gain(profile.gains[gold_pos]) / discount(i)
        })
        .sum();
    let idcg: f64 = profile
        .gains
        .iter()
        .enumerate()
        .map(|(i, &r)| profile.gain(r) / discount(i))
        .sum();
    Ok(dcg / idcg)
}

fn mean_ndcg(predictions: &[Prediction], gold: &Dataset, profile: &RelevanceProfile) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::MissingGold("no predictions".into()));
    }
    let index = gold_index(gold);
    let mut total = 0.0;
    for p in predictions {
        let order = gold_order(gold_for(&index, &p.instance_id)?)?;
        total += ndcg5(&p.ranked_candidates, order, profile)?;
    }
    Ok(total / predictions.len() as f64)
}

/// Label accuracy over predictions whose instance carries a gold label.
pub fn sentence_type_accuracy(predictions: &[Prediction], gold: &Dataset) -> Result<f64> {
    let index = gold_index(gold);
    let mut seen = 0usize;
    let mut correct = 0usize;
    for p in predictions {
        let inst = gold_for(&index, &p.instance_id)?;
        if let (Some(g), Some(l)) = (inst.gold_sentence_type, p.sentence_type) {
            seen += 1;
            correct += usize::from(g == l);
        }
    }
    if seen == 0 {
        return Err(Error::MissingGold("no gold sentence types".into()));
    }
    Ok(correct as f64 / seen as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub language: String,
    pub processed: usize,
    pub failed: usize,
    pub top1: Option<f64>,
    pub ndcg5: Option<f64>,
    pub sentence_type_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub variant: String,
    pub config_hash: String,
    pub profile: RelevanceProfile,
    pub languages: Vec<EvalRow>,
    /// Unweighted means of the per-language values.
    pub macro_avg: EvalRow,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-language report. Gold instances without a prediction count as failed.
pub fn evaluate(
    predictions: &[Prediction],
    gold: &Dataset,
    profile: &RelevanceProfile,
    variant: &str,
    config_hash: &str,
) -> Result<EvalReport> {
    profile.validate()?;
    let index = gold_index(gold);
    let mut by_lang: BTreeMap<&str, Vec<Prediction>> = BTreeMap::new();
    let mut predicted = std::collections::HashSet::new();
    for p in predictions {
        let inst = gold_for(&index, &p.instance_id)?;
        predicted.insert(inst.id.as_str());
        by_lang.entry(inst.language.as_str()).or_default().push(p.clone());
    }
    let mut failed: BTreeMap<&str, usize> = BTreeMap::new();
    for inst in &gold.instances {
        let f = failed.entry(inst.language.as_str()).or_default();
        if !predicted.contains(inst.id.as_str()) {
            *f += 1;
        }
        by_lang.entry(inst.language.as_str()).or_default();
    }

    let mut languages = Vec::new();
    for (lang, preds) in &by_lang {
        let (t, n) = if preds.is_empty() {
            (None, None)
        } else {
            (Some(top1(preds, gold)?), Some(mean_ndcg(preds, gold, profile)?))
        };
        languages.push(EvalRow {
            language: lang.to_string(),
            processed: preds.len(),
            failed: failed.get(lang).copied().unwrap_or(0),
            top1: t,
            ndcg5: n,
            sentence_type_accuracy: sentence_type_accuracy(preds, gold).ok(),
        });
    }
    let macro_avg = EvalRow {
        language: "MACRO".into(),
        processed: languages.iter().map(|r| r.processed).sum(),
        failed: languages.iter().map(|r| r.failed).sum(),
        top1: mean(languages.iter().map(|r| r.top1)),
        ndcg5: mean(languages.iter().map(|r| r.ndcg5)),
        sentence_type_accuracy: mean(languages.iter().map(|r| r.sentence_type_accuracy)),
    };
    Ok(EvalReport {
        variant: variant.to_string(),
        config_hash: config_hash.to_string(),
        profile: profile.clone(),
        languages,
        macro_avg,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

pub const EVAL_COLUMNS: &str = "language\tprocessed\tfailed\ttop1\tndcg5\tsentence_type_accuracy";

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "# polyframe eval variant={} config={} gains={}\n{EVAL_COLUMNS}\n",
            self.variant,
            self.config_hash,
            self.profile.describe()
        );
        for r in self.languages.iter().chain(std::iter::once(&self.macro_avg)) {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.language,
                r.processed,
                r.failed,
                cell(r.top1),
                cell(r.ndcg5),
                cell(r.sentence_type_accuracy)
            ));
        }
        out
    }
}

/// Sweep axes. An empty axis keeps the base configuration's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationAxes {
    pub taus: Vec<f64>,
    pub weight_sets: Vec<BTreeMap<StreamName, f64>>,
    pub aggregators: Vec<Aggregator>,
    pub rewrite: Vec<bool>,
    pub typer: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub config: PipelineConfig,
    pub report: std::result::Result<EvalReport, String>,
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Cartesian product of the axes, in axis order tau, weights, aggregator,
/// rewrite, typer.
pub fn ablation_configs(base: &PipelineConfig, axes: &AblationAxes) -> Vec<PipelineConfig> {
    let mut out = Vec::new();
    for tau in axis(&axes.taus, base.tau) {
        for weights in axis(
            &axes.weight_sets.iter().cloned().map(Some).collect::<Vec<_>>(),
            base.fusion.weights.clone(),
        ) {
            for aggregator in axis(&axes.aggregators, base.fusion.aggregator) {
                for rewrite in axis(&axes.rewrite, base.rewrite) {
                    for typer in axis(&axes.typer, base.typer_enabled) {
                        let mut c = base.clone();
                        c.tau = tau;
                        c.fusion.weights = weights.clone();
                        c.fusion.aggregator = aggregator;
                        c.rewrite = rewrite;
                        c.typer_enabled = typer;
                        out.push(c);
                    }
                }
            }
        }
    }
    out
}

pub fn ablate(
    dataset: &Dataset,
    base: &PipelineConfig,
    axes: &AblationAxes,
    resources: &Resources,
    profile: &RelevanceProfile,
    config_hash: impl Fn(&PipelineConfig) -> String,
) -> Vec<AblationCell> {
    ablation_configs(base, axes)
        .into_iter()
        .map(|config| {
            let report = run_dataset(dataset, &config, resources).and_then(|run| {
                let preds: Vec<Prediction> = run.records.iter().map(Prediction::from).collect();
                evaluate(&preds, dataset, profile, config.variant.as_str(), &config_hash(&config))
            });
            AblationCell {
                report: report.map_err(|e| e.to_string()),
                config,
            }
        })
        .collect()
}

fn weights_cell(w: &Option<BTreeMap<StreamName, f64>>) -> String {
    match w {
        None => "default".into(),
        Some(m) => m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
    }
}

pub const ABLATION_COLUMNS: &str =
    "cell\tvariant\ttau\tweights\taggregator\trewrite\ttyper\tstatus\tprocessed\tfailed\ttop1\tndcg5\tsentence_type_accuracy";

pub fn ablation_tsv(cells: &[AblationCell], profile: &RelevanceProfile) -> String {
    let mut out = format!(
        "# polyframe ablation gains={}\n{ABLATION_COLUMNS}\n",
        profile.describe()
    );
    for (i, c) in cells.iter().enumerate() {
        let head = format!(
            "{i}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.config.variant,
            c.config.tau,
            weights_cell(&c.config.fusion.weights),
            c.config.fusion.aggregator.as_str(),
            c.config.rewrite,
            c.config.typer_enabled
        );
        let tail = match &c.report {
            Ok(r) => {
                let m = &r.macro_avg;
                format!(
                    "ok\t{}\t{}\t{}\t{}\t{}",
                    m.processed,
                    m.failed,
                    cell(m.top1),
                    cell(m.ndcg5),
                    cell(m.sentence_type_accuracy)
                )
            }
            Err(e) => format!("failed: {}\tNA\tNA\tNA\tNA\tNA", e.replace(['\t', '\n'], " ")),
        };
        out.push_str(&head);
        out.push('\t');
        out.push_str(&tail);
        out.push('\n');
    }
    out
}
