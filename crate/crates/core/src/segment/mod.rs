//! Segment-level scoring.
//!
//! A segment is a run of accepted tokens. Its representation `H_k` is the
//! softmax(score)-weighted average of the token hidden states, and its score
//! blends three parts:
//!
//! * the weighted token score `Σ w_i·F_i`,
//! * consistency `1 − mean_i ‖ĥ_i − ĥ_{i+1}‖₂ / 2` over unit-normalised
//!   hiddens (so it lives in `[0, 1]`),
//! * alignment `cos(H_k, H_x)` against the context anchor.

mod refine;

pub use refine::{refine_segment, RefineContext, RefineOutcome, RefineParams, RefineRound};

use serde::{Deserialize, Serialize};

use crate::backend::TokenId;
use crate::error::{Error, Result};
use crate::guard::ScoredToken;
use crate::vector::{self, Vector};

/// Mixing weights `(α, β, γ)` of the segment score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl SegmentWeights {
    pub fn validate(&self) -> Result<()> {
        let sum = self.alpha + self.beta + self.gamma;
        let in_unit = [self.alpha, self.beta, self.gamma]
            .iter()
            .all(|w| (0.0..=1.0).contains(w));
        if !in_unit || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(sum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentThresholds {
    pub tau_low: f64,
    pub tau_high: f64,
    /// Maximum local refinement rounds.
    pub n_max: usize,
}

impl SegmentThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.tau_low && self.tau_low < self.tau_high && self.tau_high <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "segment thresholds need 0 <= low ({}) < high ({}) <= 1",
                self.tau_low, self.tau_high
            )));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Accept,
    Refine,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "round")]
pub enum SegmentStatus {
    Pending,
    Accepted,
    Refining(usize),
    Discarded,
}

/// A scored span of accepted tokens (hidden states still attached).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub tokens: Vec<ScoredToken>,
    pub weights: Vec<f64>,
    pub representation: Vector,
    pub token_component: f64,
    pub consistency: f64,
    pub alignment: f64,
    pub seg_score: f64,
    pub status: SegmentStatus,
    pub origin_index: usize,
}

/// Softmax of raw token score values (no temperature).
pub fn segment_weights(token_score_values: &[f64]) -> Vec<f64> {
    vector::softmax(token_score_values, 1.0)
}

/// `H_k = Σ w_i·h_i`.
pub fn segment_representation<V: AsRef<[f64]>>(hiddens: &[V], weights: &[f64]) -> Result<Vector> {
    vector::weighted_sum(hiddens, weights)
}

/// Smoothness of adjacent hidden-state transitions, in `[0, 1]`.
pub fn consistency<V: AsRef<[f64]>>(hiddens: &[V]) -> Result<f64> {
    if hiddens.is_empty() {
        return Err(Error::EmptyContext);
    }
    let units = hiddens
        .iter()
        .map(|h| vector::unit(h.as_ref()).ok_or(Error::ZeroNorm("consistency")))
        .collect::<Result<Vec<_>>>()?;
    if units.len() == 1 {
        return Ok(1.0);
    }
    let total: f64 = units
        .windows(2)
        .map(|w| {
            let diff: Vector = w[0].iter().zip(&w[1]).map(|(a, b)| a - b).collect();
            vector::norm(&diff) / 2.0
        })
        .sum();
    Ok((1.0 - total / (units.len() - 1) as f64).clamp(0.0, 1.0))
}

/// `cos(H_k, H_x)`.
pub fn alignment(representation: &[f64], context_anchor: &[f64]) -> Result<f64> {
    vector::check_dim(representation, context_anchor.len())?;
    vector::cosine(representation, context_anchor).ok_or(Error::ZeroNorm("alignment"))
}

/// `α·token_component + β·consistency + γ·alignment`.
pub fn segment_score(
    token_component: f64,
    consistency: f64,
    alignment: f64,
    weights: &SegmentWeights,
) -> Result<f64> {
    weights.validate()?;
    Ok(weights.alpha * token_component + weights.beta * consistency + weights.gamma * alignment)
}

/// Accept at or above `tau_high`, refine from `tau_low` (inclusive), else discard.
pub fn classify_segment(seg_score: f64, thresholds: &SegmentThresholds) -> Classification {
    if seg_score >= thresholds.tau_high {
        Classification::Accept
    } else if seg_score >= thresholds.tau_low {
        Classification::Refine
    } else {
        Classification::Discard
    }
}

impl Segment {
    /// Scores a run of accepted tokens against the context anchor.
    pub fn score(
        tokens: Vec<ScoredToken>,
        context_anchor: &[f64],
        weights: &SegmentWeights,
        origin_index: usize,
    ) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyContext);
        }
        let values: Vec<f64> = tokens.iter().map(|t| t.score.value).collect();
        let hiddens: Vec<&[f64]> = tokens.iter().map(|t| t.candidate.hidden.as_slice()).collect();
        let w = segment_weights(&values);
        let representation = segment_representation(&hiddens, &w)?;
        let token_component = w.iter().zip(&values).map(|(w, v)| w * v).sum();
        let consistency = consistency(&hiddens)?;
        let alignment = alignment(&representation, context_anchor)?;
        let seg_score = segment_score(token_component, consistency, alignment, weights)?;
        Ok(Self {
            tokens,
            weights: w,
            representation,
            token_component,
            consistency,
            alignment,
            seg_score,
            status: SegmentStatus::Pending,
            origin_index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_ids(&self) -> Vec<TokenId> {
        self.tokens.iter().map(|t| t.candidate.token_id).collect()
    }

    /// Drops the per-token hidden states, keeping only what later stages use.
    pub fn compact(&self, refinement_rounds: usize) -> CompactSegment {
        CompactSegment {
            origin_index: self.origin_index,
            token_ids: self.token_ids(),
            texts: self.tokens.iter().map(|t| t.candidate.text.clone()).collect(),
            token_scores: self.tokens.iter().map(|t| t.score.value).collect(),
            representation: self.representation.clone(),
            token_component: self.token_component,
            consistency: self.consistency,
            alignment: self.alignment,
            seg_score: self.seg_score,
            status: self.status,
            refinement_rounds,
        }
    }
}

/// A finalised segment: `H_k`, the token-score vector `f_k` and the token ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSegment {
    pub origin_index: usize,
    pub token_ids: Vec<TokenId>,
    pub texts: Vec<String>,
    pub token_scores: Vec<f64>,
    pub representation: Vector,
    pub token_component: f64,
    pub consistency: f64,
    pub alignment: f64,
    pub seg_score: f64,
    pub status: SegmentStatus,
    pub refinement_rounds: usize,
}
