//! Rank-level fusion of score streams.
//!
//! Each stream is turned into a ranking (descending score, ties broken by
//! candidate index). With `m` candidates, rank `p` earns `m - p` Borda points;
//! the fused score of a candidate is the weighted sum of its points across
//! streams, with weights renormalized to sum to one. Reciprocal-rank
//! aggregation (`1 / (k0 + p)`) is available as an alternative.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{Mode, ScoreStream, StreamName};

/// Submitted stream weights for image+text and text-only modes.
pub fn default_weight(mode: Mode, name: StreamName) -> f64 {
    match (mode, name) {
        (Mode::ImageText, StreamName::Vision) => 0.6,
        (Mode::ImageText, StreamName::TextM3) => 0.3,
        (Mode::ImageText, StreamName::TextVl) => 0.1,
        (Mode::TextOnly, StreamName::Vision) => 0.0,
        (Mode::TextOnly, StreamName::TextM3) => 0.7,
        (Mode::TextOnly, StreamName::TextVl) => 0.3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Borda,
    ReciprocalRank,
}

impl Aggregator {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Borda => "borda",
            Aggregator::ReciprocalRank => "reciprocal_rank",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Per-stream weights; streams not listed get zero. `None` selects the
    /// defaults for `mode`.
    pub weights: Option<BTreeMap<StreamName, f64>>,
    pub mode: Mode,
    pub confidence_adjust: bool,
    pub confidence_alpha: f64,
    pub aggregator: Aggregator,
    /// Rank offset for reciprocal-rank aggregation.
    pub rrf_k0: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            weights: None,
            mode: Mode::ImageText,
            confidence_adjust: false,
            confidence_alpha: 1.0,
            aggregator: Aggregator::Borda,
            rrf_k0: 0.0,
        }
    }
}

impl FusionConfig {
    pub fn for_mode(mode: Mode) -> Self {
        FusionConfig {
            mode,
            ..FusionConfig::default()
        }
    }

    pub fn weight(&self, name: StreamName) -> f64 {
        if self.mode == Mode::TextOnly && name == StreamName::Vision {
            return 0.0;
        }
        match &self.weights {
            Some(w) => w.get(&name).copied().unwrap_or(0.0),
            None => default_weight(self.mode, name),
        }
    }

    /// Stamps configured weights onto `streams`.
    pub fn apply_weights(&self, streams: &mut [ScoreStream]) {
        for s in streams {
            s.weight = self.weight(s.name);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.weights {
            for (name, &v) in w {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!("weight for {name} must be in [0,1], got {v}")));
                }
            }
        }
        if !(self.confidence_alpha >= 0.0) || !self.confidence_alpha.is_finite() {
            return Err(Error::Config("confidence_alpha must be nonnegative".into()));
        }
        if !(self.rrf_k0 >= 0.0) || !self.rrf_k0.is_finite() {
            return Err(Error::Config("rrf_k0 must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    /// Candidate indices, best first.
    pub order: Vec<usize>,
    /// Fused score per candidate, aligned with the candidate list.
    pub borda_scores: Vec<f64>,
    pub per_stream_ranks: BTreeMap<StreamName, Vec<usize>>,
    pub adjusted_weights: BTreeMap<StreamName, f64>,
}

fn check_finite(scores: &[f64]) -> Result<()> {
    match scores.iter().position(|s| !s.is_finite()) {
        Some(i) => Err(Error::NonFiniteScore(i)),
        None => Ok(()),
    }
}

/// Candidate indices by descending score; equal scores keep index order.
pub fn order_from_scores(scores: &[f64]) -> Result<Vec<usize>> {
    check_finite(scores)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(idx)
}

/// 1-based rank of each candidate, aligned with `scores`.
pub fn ranks_from_scores(scores: &[f64]) -> Result<Vec<usize>> {
    let order = order_from_scores(scores)?;
    let mut ranks = vec![0; scores.len()];
    for (pos, &c) in order.iter().enumerate() {
        ranks[c] = pos + 1;
    }
    Ok(ranks)
}

/// Rescales to `[0, 1]`; a constant vector maps to all zeros.
pub fn min_max_normalize(scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if !(span > 0.0) {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - min) / span).collect()
}

/// Difference between the top two min-max normalized scores.
pub fn confidence_gap(scores: &[f64]) -> f64 {
    let mut norm = min_max_normalize(scores);
    if norm.len() < 2 {
        return 0.0;
    }
    norm.sort_by(|a, b| b.total_cmp(a));
    norm[0] - norm[1]
}

fn renormalize(mut weights: BTreeMap<StreamName, f64>) -> BTreeMap<StreamName, f64> {
    let total: f64 = weights.values().sum();
    if total > 0.0 {
        for w in weights.values_mut() {
            *w /= total;
        }
    }
    weights
}

/// `w_s * (1 + alpha * gap_s)`, renormalized to sum to one.
pub fn adjust_weights_by_confidence(streams: &[ScoreStream], alpha: f64) -> BTreeMap<StreamName, f64> {
    let raw = streams
        .iter()
        .map(|s| (s.name, s.weight * (1.0 + alpha * confidence_gap(&s.scores))))
        .collect();
    renormalize(raw)
}

fn rank_points(aggregator: Aggregator, k0: f64, m: usize, rank: usize) -> f64 {
    match aggregator {
        Aggregator::Borda => (m - rank) as f64,
        Aggregator::ReciprocalRank => 1.0 / (k0 + rank as f64),
    }
}

pub fn borda_fuse(streams: &[ScoreStream], config: &FusionConfig) -> Result<RankingResult> {
    let first = streams.first().ok_or(Error::EmptyInput)?;
    let m = first.scores.len();
    let mut seen = Vec::with_capacity(streams.len());
    for s in streams {
        if s.scores.len() != m {
            return Err(Error::StreamMismatch(format!(
                "stream {} has {} scores, expected {m}",
                s.name,
                s.scores.len()
            )));
        }
        if seen.contains(&s.name) {
            return Err(Error::StreamMismatch(format!("duplicate stream {}", s.name)));
        }
        if !(s.weight >= 0.0) || !s.weight.is_finite() {
            return Err(Error::Config(format!(
                "invalid weight {} for stream {}",
                s.weight, s.name
            )));
        }
        seen.push(s.name);
    }

    let weights = if config.confidence_adjust {
        adjust_weights_by_confidence(streams, config.confidence_alpha)
    } else {
        renormalize(streams.iter().map(|s| (s.name, s.weight)).collect())
    };
    if weights.values().all(|&w| w == 0.0) {
        return Err(Error::AllZeroWeights);
    }

    let mut fused = vec![0.0; m];
    let mut per_stream_ranks = BTreeMap::new();
    for s in streams {
        let ranks = ranks_from_scores(&s.scores)?;
        let w = weights[&s.name];
        if w > 0.0 {
            for (c, &r) in ranks.iter().enumerate() {
                fused[c] += w * rank_points(config.aggregator, config.rrf_k0, m, r);
            }
        }
        per_stream_ranks.insert(s.name, ranks);
    }
    let order = order_from_scores(&fused)?;
    Ok(RankingResult {
        order,
        borda_scores: fused,
        per_stream_ranks,
        adjusted_weights: weights,
    })
}

/// Blends per-stream scores from the original sentence with scores from its
/// translation: `blend * norm(original) + (1 - blend) * norm(translated)`.
pub fn combine_crosslingual(
    original: &[ScoreStream],
    translated: &[ScoreStream],
    blend: f64,
) -> Result<Vec<ScoreStream>> {
    if !(0.0..=1.0).contains(&blend) {
        return Err(Error::Config(format!("blend must be in [0,1], got {blend}")));
    }
    if original.len() != translated.len() {
        return Err(Error::StreamMismatch(format!(
            "{} original streams vs {} translated",
            original.len(),
            translated.len()
        )));
    }
    original
        .iter()
        .zip(translated)
        .map(|(o, t)| {
            if o.name != t.name || o.scores.len() != t.scores.len() {
                return Err(Error::StreamMismatch(format!("{} vs {}", o.name, t.name)));
            }
            check_finite(&o.scores)?;
            check_finite(&t.scores)?;
            let scores = min_max_normalize(&o.scores)
                .into_iter()
                .zip(min_max_normalize(&t.scores))
                .map(|(a, b)| blend * a + (1.0 - blend) * b)
                .collect();
            Ok(ScoreStream::new(o.name, scores, o.weight))
        })
        .collect()
}
