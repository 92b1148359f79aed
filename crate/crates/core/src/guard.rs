//! Token-level self-checking.
//!
//! Each decoding step scores every candidate with a hybrid of semantic
//! agreement (cosine against the running mean of accepted hidden states) and
//! its temperature-softmaxed probability, then keeps the best candidate that
//! clears `tau_token`.

use serde::{Deserialize, Serialize};

use crate::backend::TokenCandidate;
use crate::error::{Error, Result};
use crate::vector::{self, RunningMean, Vector};

/// Hybrid hallucination score of one candidate token.
///
/// `value = λ·cosine_part + (1−λ)·prob_part`; higher means more trustworthy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub value: f64,
    pub cosine_part: f64,
    pub prob_part: f64,
    /// Set when a zero-norm vector forced the cosine part to 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// A token accepted into the current segment together with its score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredToken {
    pub candidate: TokenCandidate,
    pub score: TokenScore,
}

/// Per-session decoding state: context anchor, running mean of accepted
/// hidden states, and the bounded buffer of the open segment.
#[derive(Debug, Clone)]
pub struct LatentEnvironment {
    anchor: Vector,
    accepted: RunningMean,
    buffer: Vec<ScoredToken>,
    capacity: usize,
    peak_buffered: usize,
}

impl LatentEnvironment {
    /// Anchors the environment at the mean context hidden state.
    pub fn init<V: AsRef<[f64]>>(context_hiddens: &[V], buffer_capacity: usize) -> Result<Self> {
        if context_hiddens.is_empty() {
            return Err(Error::EmptyContext);
        }
        if buffer_capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be >= 1".into()));
        }
        let d = context_hiddens[0].as_ref().len();
        for h in context_hiddens {
            vector::check_dim(h.as_ref(), d)?;
        }
        let anchor = vector::mean(context_hiddens)?;
        Ok(Self {
            accepted: RunningMean::new(d),
            anchor,
            buffer: Vec::with_capacity(buffer_capacity),
            capacity: buffer_capacity,
            peak_buffered: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// The context anchor `h_x`.
    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    /// Mean of accepted hidden states, or the anchor before any acceptance.
    pub fn running_mean(&self) -> &[f64] {
        if self.accepted.is_empty() {
            &self.anchor
        } else {
            self.accepted.mean()
        }
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted.count()
    }

    /// Accumulator over accepted hidden states (excludes the anchor).
    pub fn accepted_mean(&self) -> &RunningMean {
        &self.accepted
    }

    pub fn buffer(&self) -> &[ScoredToken] {
        &self.buffer
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.buffer.len() >= self.capacity
    }

    /// Largest buffer length observed since construction.
    pub fn peak_buffered(&self) -> usize {
        self.peak_buffered
    }

    /// Accepts a token into the open segment and the running mean.
    pub fn update(&mut self, accepted: TokenCandidate, score: TokenScore) -> Result<()> {
        if self.is_full() {
            return Err(Error::BufferFull(self.capacity));
        }
        self.accepted.push(&accepted.hidden)?;
        self.buffer.push(ScoredToken {
            candidate: accepted,
            score,
        });
        self.peak_buffered = self.peak_buffered.max(self.buffer.len());
        Ok(())
    }

    /// Folds a hidden state into the running mean without buffering it.
    ///
    /// Used for low-confidence selections, which belong to no segment.
    pub fn absorb(&mut self, hidden: &[f64]) -> Result<()> {
        self.accepted.push(hidden)
    }

    /// Releases the open segment's tokens.
    pub fn drain_buffer(&mut self) -> Vec<ScoredToken> {
        std::mem::take(&mut self.buffer)
    }

    /// Swaps hidden states of a spliced window in the running mean.
    pub fn replace_hiddens<V: AsRef<[f64]>, W: AsRef<[f64]>>(
        &mut self,
        removed: &[V],
        added: &[W],
    ) -> Result<()> {
        for h in removed {
            self.accepted.remove(h.as_ref())?;
        }
        for h in added {
            self.accepted.push(h.as_ref())?;
        }
        Ok(())
    }
}

/// Temperature-softmaxed probabilities of a step's candidate set.
pub fn prob_parts(logprobs: &[f64], softmax_temperature: f64) -> Vec<f64> {
    vector::softmax(logprobs, softmax_temperature)
}

/// Hybrid token score for a hidden state against the running mean.
pub fn token_score(hidden: &[f64], running_mean: &[f64], prob_part: f64, lambda: f64) -> TokenScore {
    let (cosine_part, degenerate) = match vector::cosine(hidden, running_mean) {
        Some(c) => (c, false),
        None => (0.0, true),
    };
    TokenScore {
        value: lambda * cosine_part + (1.0 - lambda) * prob_part,
        cosine_part,
        prob_part,
        degenerate,
    }
}

/// Scores every candidate of one decoding step.
pub fn score_candidates(
    candidates: &[TokenCandidate],
    env: &LatentEnvironment,
    lambda: f64,
    softmax_temperature: f64,
) -> Result<Vec<TokenScore>> {
    let logprobs: Vec<f64> = candidates.iter().map(|c| c.logprob).collect();
    let probs = prob_parts(&logprobs, softmax_temperature);
    candidates
        .iter()
        .zip(probs)
        .map(|(c, p)| {
            vector::check_dim(&c.hidden, env.dim())?;
            Ok(token_score(&c.hidden, env.running_mean(), p, lambda))
        })
        .collect()
}

/// Picks the next token. Returns the chosen index and whether it cleared `tau_token`.
///
/// Among passing candidates the highest score wins; if none pass, the overall
/// highest score is returned flagged as low-confidence. Ties go to the higher
/// logprob, then the lower token id.
pub fn select_token(candidates: &[TokenCandidate], scores: &[TokenScore], tau_token: f64) -> (usize, bool) {
    assert!(!candidates.is_empty() && candidates.len() == scores.len());
    let better = |a: usize, b: usize| -> bool {
        let (sa, sb) = (scores[a].value, scores[b].value);
        if sa != sb {
            return sa > sb;
        }
        let (la, lb) = (candidates[a].logprob, candidates[b].logprob);
        if la != lb {
            return la > lb;
        }
        candidates[a].token_id < candidates[b].token_id
    };
    let best_of = |pool: &mut dyn Iterator<Item = usize>| {
        pool.fold(None, |best: Option<usize>, i| match best {
            Some(b) if !better(i, b) => Some(b),
            _ => Some(i),
        })
    };
    let passing = best_of(&mut (0..scores.len()).filter(|&i| scores[i].value >= tau_token));
    match passing {
        Some(i) => (i, true),
        None => (best_of(&mut (0..scores.len())).expect("non-empty"), false),
    }
}

/// Hallucination-penalised reweighting: `p_guard(i) ∝ p(i)·exp(−γ·F(i))`.
pub fn guard_reweight(probs: &[f64], halu_scores: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if probs.is_empty() || probs.len() != halu_scores.len() {
        return Err(Error::InvalidDistribution(format!(
            "{} probabilities for {} scores",
            probs.len(),
            halu_scores.len()
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} must be >= 0")));
    }
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
    }
    if let Some(s) = halu_scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidArgument(format!("hallucination score {s} outside [0, 1]")));
    }
    let weighted: Vec<f64> = probs
        .iter()
        .zip(halu_scores)
        .map(|(p, s)| p * (-gamma * s).exp())
        .collect();
    let z: f64 = weighted.iter().sum();
    if z <= 0.0 {
        return Err(Error::InvalidDistribution("normaliser vanished".into()));
    }
    Ok(weighted.into_iter().map(|w| w / z).collect())
}

/// `Σ p(i)·F(i)`.
pub fn expected_hallucination(probs: &[f64], halu_scores: &[f64]) -> f64 {
    probs.iter().zip(halu_scores).map(|(p, s)| p * s).sum()
}
