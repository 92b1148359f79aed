//! Global chain correction.
//!
//! Accepted segments are clustered into candidate reasoning chains. Each
//! chain gets a factual score (evidence-weighted mean of segment scores), a
//! logical score (context-weighted cosine between consecutive segments) and
//! their soft minimum. The best chain is returned once it clears
//! `tau_global`; otherwise the segment thresholds are nudged and the answer
//! regenerated, up to `m_max` rounds.

mod chains;
mod kmeans;
mod tfidf;

pub use chains::assemble_chains;
pub use kmeans::{kmeans, Clustering, KMeans};
pub use tfidf::tfidf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::metrics;
use crate::segment::{CompactSegment, SegmentThresholds};
use crate::vector::{self, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactMode {
    /// `Σ w_k·F_seg(C_k)` with normalised weights.
    #[default]
    WeightedMean,
    /// The weighted mean additionally scaled by `1/K`.
    LiteralEq14,
}

/// Source of the per-segment knowledge score `E_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceMode {
    /// `E_k = 1` for every segment.
    #[default]
    Constant,
    /// Unigram recall of the segment text against the record's passage.
    Lexical,
}

/// Trajectory smoothing applied to chain scores before picking the best.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    pub alpha: f64,
    /// 0 disables smoothing.
    pub rounds: usize,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            rounds: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub tau_global: f64,
    pub delta_tau: f64,
    pub m_max: usize,
    /// `None` picks 3 for corpora under 1000 records and 5 otherwise.
    pub n_clusters: Option<usize>,
    pub cannot_answer_floor: f64,
    pub fact_mode: FactMode,
    pub low_high_split: f64,
    pub evidence: EvidenceMode,
    pub consensus: ConsensusConfig,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            tau_global: 0.7,
            delta_tau: 0.1,
            m_max: 2,
            n_clusters: None,
            cannot_answer_floor: 0.5,
            fact_mode: FactMode::WeightedMean,
            low_high_split: 0.6,
            evidence: EvidenceMode::Constant,
            consensus: ConsensusConfig::default(),
        }
    }
}

impl GlobalConfig {
    pub fn clusters_for(&self, corpus_len: usize) -> usize {
        self.n_clusters
            .unwrap_or(if corpus_len < 1000 { 3 } else { 5 })
    }
}

/// A candidate answer: accepted segments of one cluster in origin order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub segments: Vec<CompactSegment>,
    pub f_fact: f64,
    pub f_logic: f64,
    pub f_global: f64,
    pub cluster_id: usize,
}

impl ReasoningChain {
    /// An unscored chain; segments are sorted by origin index.
    pub fn new(mut segments: Vec<CompactSegment>, cluster_id: usize) -> Self {
        segments.sort_by_key(|s| s.origin_index);
        Self {
            segments,
            f_fact: 0.0,
            f_logic: 0.0,
            f_global: 0.0,
            cluster_id,
        }
    }

    pub fn token_ids(&self) -> Vec<crate::backend::TokenId> {
        self.segments.iter().flat_map(|s| s.token_ids.iter().copied()).collect()
    }

    /// Mean of the segment representations.
    pub fn mean_representation(&self) -> Result<Vector> {
        let reps: Vec<&[f64]> = self.segments.iter().map(|s| s.representation.as_slice()).collect();
        vector::mean(&reps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactScore {
    pub value: f64,
    /// All `‖f_k‖·E_k` were zero and uniform weights were used.
    pub degenerate: bool,
}

/// Evidence-weighted factual score of a chain.
///
/// ```
/// # use token_guard::global::{fact_score, FactMode};
/// let f = fact_score(&[(1.0, 0.6), (1.0, 0.8)], &[1.0, 1.0], FactMode::WeightedMean).unwrap();
/// assert!((f.value - 0.7).abs() < 1e-12);
/// ```
///
/// `parts` holds `(‖f_k‖, F_seg(C_k))` per segment.
pub fn fact_score(parts: &[(f64, f64)], evidence: &[f64], mode: FactMode) -> Result<FactScore> {
    if parts.is_empty() {
        return Err(Error::EmptyContext);
    }
    if parts.len() != evidence.len() {
        return Err(Error::DimensionMismatch {
            expected: parts.len(),
            got: evidence.len(),
        });
    }
    let raw: Vec<f64> = parts.iter().zip(evidence).map(|((n, _), e)| n * e).collect();
    let total: f64 = raw.iter().sum();
    let degenerate = total <= 0.0;
    let k = parts.len() as f64;
    let mean: f64 = if degenerate {
        parts.iter().map(|(_, s)| s).sum::<f64>() / k
    } else {
        raw.iter().zip(parts).map(|(w, (_, s))| w / total * s).sum()
    };
    let value = match mode {
        FactMode::WeightedMean => mean,
        FactMode::LiteralEq14 => mean / k,
    };
    Ok(FactScore { value, degenerate })
}

/// Contextual similarity `(1 + cos(ẽ_a, ẽ_b)) / 2` of two token sequences'
/// mean input embeddings.
pub fn sim_ctx<B: Backend + ?Sized>(a: &[u32], b: &[u32], backend: &B) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyContext);
    }
    let ea = vector::mean(&backend.embed_tokens(a)?)?;
    let eb = vector::mean(&backend.embed_tokens(b)?)?;
    vector::check_dim(&eb, ea.len())?;
    let cos = vector::cosine(&ea, &eb).ok_or(Error::ZeroNorm("sim_ctx"))?;
    Ok(((1.0 + cos) / 2.0).clamp(0.0, 1.0))
}

/// `(1/(K−1))·Σ λ_k·cos(H_k, H_{k+1})` with `λ_k = sim_ctx(C_k, C_{k+1})`;
/// 1 for a single segment.
pub fn logic_score<B: Backend + ?Sized>(segments: &[CompactSegment], backend: &B) -> Result<f64> {
    match segments.len() {
        0 => Err(Error::EmptyContext),
        1 => Ok(1.0),
        k => {
            let mut total = 0.0;
            for pair in segments.windows(2) {
                let cos = vector::cosine(&pair[0].representation, &pair[1].representation)
                    .ok_or(Error::ZeroNorm("logic_score"))?;
                total += sim_ctx(&pair[0].token_ids, &pair[1].token_ids, backend)? * cos;
            }
            Ok(total / (k - 1) as f64)
        }
    }
}

/// Soft minimum `f·l / (f + l − f·l)`, 0 when both are 0.
///
/// The denominator is evaluated as `1 − (1−f)(1−l)` so that a score of
/// exactly 1 returns the other score unchanged.
///
/// ```
/// use token_guard::global::global_score;
/// assert_eq!(global_score(1.0, 1.0), 1.0);
/// assert!((global_score(0.8, 0.9) - 0.72 / 0.98).abs() < 1e-12);
/// assert_eq!(global_score(1.0, 0.3), 0.3);
/// ```
pub fn global_score(f_fact: f64, f_logic: f64) -> f64 {
    let denom = 1.0 - (1.0 - f_fact) * (1.0 - f_logic);
    if denom == 0.0 {
        0.0
    } else {
        f_fact * f_logic / denom
    }
}

/// Tightens `tau_high` when facts lag logic, relaxes `tau_low` when logic
/// lags facts; otherwise returns the thresholds unchanged.
pub fn adjust_thresholds(
    f_fact: f64,
    f_logic: f64,
    thresholds: &SegmentThresholds,
    delta_tau: f64,
    low_high_split: f64,
) -> SegmentThresholds {
    let mut t = *thresholds;
    if f_fact < low_high_split && low_high_split <= f_logic {
        t.tau_high = (t.tau_high + delta_tau).clamp(0.0, 1.0);
    } else if f_logic < low_high_split && low_high_split <= f_fact {
        t.tau_low = (t.tau_low - delta_tau).clamp(0.0, 1.0);
    }
    if t.tau_low >= t.tau_high {
        return *thresholds;
    }
    t
}

/// `F ← α·F + (1−α)·mean_{j≠i} Sim_ij`, applied `rounds` times.
///
/// ```
/// use token_guard::global::consensus_refine;
/// let sim = [vec![1.0, 1.0], vec![1.0, 1.0]];
/// let f = consensus_refine(&[0.4, 0.8], &sim, 0.5, 1).unwrap();
/// assert!((f[0] - 0.7).abs() < 1e-12 && (f[1] - 0.9).abs() < 1e-12);
/// ```
pub fn consensus_refine<R: AsRef<[f64]>>(
    scores: &[f64],
    similarity: &[R],
    alpha: f64,
    rounds: usize,
) -> Result<Vec<f64>> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::InvalidArgument("consensus needs at least two scores".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    if similarity.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: similarity.len(),
        });
    }
    for row in similarity {
        vector::check_dim(row.as_ref(), n)?;
    }
    let pull: Vec<f64> = similarity
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let row = row.as_ref();
            row.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, s)| s)
                .sum::<f64>()
                / (n - 1) as f64
        })
        .collect();
    let mut f = scores.to_vec();
    for _ in 0..rounds {
        for (x, p) in f.iter_mut().zip(&pull) {
            *x = alpha * *x + (1.0 - alpha) * p;
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainScores {
    pub f_fact: f64,
    pub f_logic: f64,
    pub f_global: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fact_degenerate: bool,
}

pub trait ChainScorer: Sync {
    fn score(&self, chain: &ReasoningChain) -> Result<ChainScores>;
}

/// Scores chains against a backend, using the record passage for lexical
/// evidence when configured.
pub struct BackendScorer<'a, B: ?Sized> {
    pub backend: &'a B,
    pub fact_mode: FactMode,
    pub evidence: EvidenceMode,
    pub passage: Option<&'a str>,
}

/// Share of a text's normalised unigrams that occur in `passage`.
pub fn lexical_evidence(texts: &[String], passage: &str) -> f64 {
    let vocab: std::collections::HashSet<String> = metrics::tokens(passage).into_iter().collect();
    let words: Vec<String> = texts.iter().flat_map(|t| metrics::tokens(t)).collect();
    if words.is_empty() {
        return 1.0;
    }
    words.iter().filter(|w| vocab.contains(*w)).count() as f64 / words.len() as f64
}

impl<B: Backend + ?Sized> ChainScorer for BackendScorer<'_, B> {
    fn score(&self, chain: &ReasoningChain) -> Result<ChainScores> {
        let parts: Vec<(f64, f64)> = chain
            .segments
            .iter()
            .map(|s| (vector::norm(&s.token_scores), s.seg_score))
            .collect();
        let evidence: Vec<f64> = chain
            .segments
            .iter()
            .map(|s| match (self.evidence, self.passage) {
                (EvidenceMode::Lexical, Some(p)) => lexical_evidence(&s.texts, p),
                _ => 1.0,
            })
            .collect();
        let fact = fact_score(&parts, &evidence, self.fact_mode)?;
        let f_fact = fact.value.clamp(0.0, 1.0);
        let f_logic = logic_score(&chain.segments, self.backend)?.clamp(0.0, 1.0);
        Ok(ChainScores {
            f_fact,
            f_logic,
            f_global: global_score(f_fact, f_logic),
            fact_degenerate: fact.degenerate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundDecision {
    Accept,
    BothLow,
    Regenerate,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub cluster_id: usize,
    pub segments: usize,
    #[serde(flatten)]
    pub scores: ChainScores,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub thresholds: SegmentThresholds,
    pub chains: Vec<ChainRecord>,
    pub best: usize,
    pub decision: RoundDecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CannotAnswerReason {
    /// Best chain has both factual and logical scores under the floor.
    BothLow,
    /// `m_max` rounds without a chain clearing `tau_global`.
    Exhausted,
    NoAcceptedSegments,
    CallbackFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FinalOutcome {
    Answer {
        chain: ReasoningChain,
        trace: Vec<RoundTrace>,
    },
    CannotAnswer {
        reason: CannotAnswerReason,
        diagnostic: Option<String>,
        trace: Vec<RoundTrace>,
    },
}

impl FinalOutcome {
    pub fn trace(&self) -> &[RoundTrace] {
        match self {
            FinalOutcome::Answer { trace, .. } | FinalOutcome::CannotAnswer { trace, .. } => trace,
        }
    }

    pub fn is_answer(&self) -> bool {
        matches!(self, FinalOutcome::Answer { .. })
    }
}

/// Chain similarity `(1 + cos)/2` of mean chain representations.
fn chain_similarity(chains: &[ReasoningChain]) -> Result<Vec<Vec<f64>>> {
    let means = chains
        .iter()
        .map(ReasoningChain::mean_representation)
        .collect::<Result<Vec<_>>>()?;
    Ok(means
        .iter()
        .map(|a| {
            means
                .iter()
                .map(|b| (1.0 + vector::cosine(a, b).unwrap_or(0.0)) / 2.0)
                .collect()
        })
        .collect())
}

/// Runs the accept / regenerate / cannot-answer loop.
///
/// `regenerate` receives the adjusted thresholds and the next round number
/// and returns fresh candidate chains; it is called at most `m_max − 1`
/// times.
pub fn global_iterate<S, R>(
    chains: Vec<ReasoningChain>,
    thresholds: SegmentThresholds,
    config: &GlobalConfig,
    scorer: &S,
    mut regenerate: R,
) -> FinalOutcome
where
    S: ChainScorer + ?Sized,
    R: FnMut(&SegmentThresholds, usize) -> Result<Vec<ReasoningChain>>,
{
    let mut trace = Vec::new();
    let mut chains = chains;
    let mut thresholds = thresholds;
    let cannot = |reason, diagnostic, trace| FinalOutcome::CannotAnswer {
        reason,
        diagnostic,
        trace,
    };

    for round in 1..=config.m_max.max(1) {
        if chains.is_empty() {
            return cannot(CannotAnswerReason::NoAcceptedSegments, None, trace);
        }
        let scored: Result<Vec<ChainScores>> = chains.par_iter().map(|c| scorer.score(c)).collect();
        let scores = match scored {
            Ok(s) => s,
            Err(e) => return cannot(CannotAnswerReason::CallbackFailed, Some(e.to_string()), trace),
        };
        for (c, s) in chains.iter_mut().zip(&scores) {
            c.f_fact = s.f_fact;
            c.f_logic = s.f_logic;
            c.f_global = s.f_global;
        }

        let mut smoothed = None;
        if config.consensus.rounds > 0 && chains.len() >= 2 {
            let raw: Vec<f64> = scores.iter().map(|s| s.f_global).collect();
            smoothed = chain_similarity(&chains).and_then(|sim| {
                consensus_refine(&raw, &sim, config.consensus.alpha, config.consensus.rounds)
            })
            .ok();
        }
        let rank: Vec<f64> = smoothed
            .clone()
            .unwrap_or_else(|| scores.iter().map(|s| s.f_global).collect());
        let best = (0..chains.len()).fold(0, |b, i| if rank[i] > rank[b] { i } else { b });
        let top = scores[best];

        let decision = if top.f_global >= config.tau_global {
            RoundDecision::Accept
        } else if top.f_fact < config.cannot_answer_floor && top.f_logic < config.cannot_answer_floor {
            RoundDecision::BothLow
        } else if round >= config.m_max {
            RoundDecision::Exhausted
        } else {
            RoundDecision::Regenerate
        };
        trace.push(RoundTrace {
            round,
            thresholds,
            chains: chains
                .iter()
                .zip(&scores)
                .enumerate()
                .map(|(i, (c, s))| ChainRecord {
                    cluster_id: c.cluster_id,
                    segments: c.segments.len(),
                    scores: *s,
                    smoothed: smoothed.as_ref().map(|v| v[i]),
                })
                .collect(),
            best,
            decision,
        });

        match decision {
            RoundDecision::Accept => {
                return FinalOutcome::Answer {
                    chain: chains.swap_remove(best),
                    trace,
                }
            }
            RoundDecision::BothLow => return cannot(CannotAnswerReason::BothLow, None, trace),
            RoundDecision::Exhausted => return cannot(CannotAnswerReason::Exhausted, None, trace),
            RoundDecision::Regenerate => {
                thresholds = adjust_thresholds(
                    top.f_fact,
                    top.f_logic,
                    &thresholds,
                    config.delta_tau,
                    config.low_high_split,
                );
                chains = match regenerate(&thresholds, round + 1) {
                    Ok(c) => c,
                    Err(e) => {
                        return cannot(CannotAnswerReason::CallbackFailed, Some(e.to_string()), trace)
                    }
                };
            }
        }
    }
    cannot(CannotAnswerReason::Exhausted, None, trace)
}
