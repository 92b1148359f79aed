//! Windowed local refinement of refine-eligible segments.

use serde::{Deserialize, Serialize};

use super::{Segment, SegmentStatus, SegmentThresholds, SegmentWeights};
use crate::backend::{Backend, CandidateWindow, RefineRequest, TokenId};
use crate::guard::{self, ScoredToken};
use crate::vector::RunningMean;

/// Where the segment sits in the decoding session.
#[derive(Debug, Clone, Copy)]
pub struct RefineContext<'a> {
    /// Token ids preceding the segment (prompt plus earlier output).
    pub prefix_ids: &'a [TokenId],
    /// Accepted hidden states preceding the segment.
    pub mean_before: &'a RunningMean,
    /// Context anchor `H_x`.
    pub anchor: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    pub lambda: f64,
    pub softmax_temperature: f64,
    pub sampling_temperature: f64,
    pub weights: SegmentWeights,
    pub top_m: usize,
    pub n_candidates: usize,
    /// Hard cap on segment length while splicing (the buffer capacity).
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRound {
    pub round: usize,
    pub window_start: usize,
    pub window_len: usize,
    pub replacement_len: usize,
    pub candidates: usize,
    pub seg_score_before: f64,
    pub seg_score_after: f64,
    pub spliced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    /// Final segment; `Accepted` or `Discarded`. A discarded segment carries
    /// its original tokens, never a partial splice.
    pub segment: Segment,
    pub rounds: Vec<RefineRound>,
    pub diagnostic: Option<String>,
    /// Longest segment held in memory while refining.
    pub peak_len: usize,
}

fn lowest_scoring(tokens: &[ScoredToken]) -> usize {
    tokens
        .iter()
        .enumerate()
        .fold(0, |lo, (i, t)| if t.score.value < tokens[lo].score.value { i } else { lo })
}

/// Probability of `own` within its step set after temperature softmax.
fn step_prob(own: f64, step_logprobs: &[f64], temperature: f64) -> f64 {
    if step_logprobs.is_empty() {
        return 1.0;
    }
    let max = step_logprobs.iter().copied().fold(own, f64::max);
    let z: f64 = step_logprobs.iter().map(|l| ((l - max) / temperature).exp()).sum();
    ((own - max) / temperature).exp() / z
}

fn rescore_window(
    window: &CandidateWindow,
    mean_at_start: &RunningMean,
    anchor: &[f64],
    params: &RefineParams,
) -> crate::error::Result<Vec<ScoredToken>> {
    let mut mean = mean_at_start.clone();
    window
        .candidates_meta
        .iter()
        .map(|meta| {
            let c = &meta.candidate;
            let running = if mean.is_empty() { anchor } else { mean.mean() };
            let p = step_prob(c.logprob, &meta.step_logprobs, params.softmax_temperature);
            let score = guard::token_score(&c.hidden, running, p, params.lambda);
            mean.push(&c.hidden)?;
            Ok(ScoredToken {
                candidate: c.clone(),
                score,
            })
        })
        .collect()
}

/// Iteratively rewrites the weakest window of `segment` until it clears
/// `tau_high` or `n_max` rounds elapse.
///
/// Each round: find the lowest-scoring token, take it with its immediate
/// neighbours (clipped to the segment), ask the backend for rewrites,
/// re-score every rewrite with the segment-local running mean and splice
/// the best one if it raises the segment score.
pub fn refine_segment<B: Backend + ?Sized>(
    segment: Segment,
    ctx: RefineContext<'_>,
    backend: &B,
    thresholds: &SegmentThresholds,
    params: &RefineParams,
) -> RefineOutcome {
    let original = segment.clone();
    let mut current = segment;
    let mut rounds = Vec::new();
    let mut peak_len = current.len();

    let discard = |mut seg: Segment, rounds, diagnostic, peak_len| {
        seg.status = SegmentStatus::Discarded;
        RefineOutcome {
            segment: seg,
            rounds,
            diagnostic,
            peak_len,
        }
    };

    if current.seg_score >= thresholds.tau_high {
        current.status = SegmentStatus::Accepted;
        return RefineOutcome {
            segment: current,
            rounds,
            diagnostic: None,
            peak_len,
        };
    }

    for round in 1..=thresholds.n_max {
        current.status = SegmentStatus::Refining(round);
        let n = current.len();
        let low = lowest_scoring(&current.tokens);
        let start = low.saturating_sub(1);
        let end = (low + 2).min(n);
        let ids = current.token_ids();

        let mut prefix_ids = ctx.prefix_ids.to_vec();
        prefix_ids.extend_from_slice(&ids[..start]);
        let request = RefineRequest {
            prefix_ids,
            window_ids: ids[start..end].to_vec(),
            suffix_ids: ids[end..].to_vec(),
            n_candidates: params.n_candidates,
            max_new: end - start + 2,
            top_m: params.top_m,
            temperature: params.sampling_temperature,
        };
        let windows = match backend.refine_window(&request) {
            Ok(w) => w,
            Err(e) => {
                return discard(original, rounds, Some(format!("refinement failed: {e}")), peak_len)
            }
        };

        let mut mean_at_start = ctx.mean_before.clone();
        for t in &current.tokens[..start] {
            if let Err(e) = mean_at_start.push(&t.candidate.hidden) {
                return discard(original, rounds, Some(e.to_string()), peak_len);
            }
        }

        let mut best: Option<(Segment, usize)> = None;
        for window in &windows {
            let len = window.candidates_meta.len();
            if len == 0 || len.abs_diff(end - start) > 2 || window.token_ids.len() != len {
                continue;
            }
            let new_len = n - (end - start) + len;
            if new_len > params.max_len {
                continue;
            }
            let Ok(replacement) = rescore_window(window, &mean_at_start, ctx.anchor, params) else {
                continue;
            };
            let mut tokens = Vec::with_capacity(new_len);
            tokens.extend_from_slice(&current.tokens[..start]);
            tokens.extend(replacement);
            tokens.extend_from_slice(&current.tokens[end..]);
            peak_len = peak_len.max(new_len);
            let Ok(candidate) =
                Segment::score(tokens, ctx.anchor, &params.weights, current.origin_index)
            else {
                continue;
            };
            if best
                .as_ref()
                .is_none_or(|(b, _)| candidate.seg_score > b.seg_score)
            {
                best = Some((candidate, len));
            }
        }

        let before = current.seg_score;
        let mut record = RefineRound {
            round,
            window_start: start,
            window_len: end - start,
            replacement_len: end - start,
            candidates: windows.len(),
            seg_score_before: before,
            seg_score_after: before,
            spliced: false,
        };
        if let Some((candidate, len)) = best {
            if candidate.seg_score > before {
                current = candidate;
                record.replacement_len = len;
                record.seg_score_after = current.seg_score;
                record.spliced = true;
            }
        }
        rounds.push(record);

        if current.seg_score >= thresholds.tau_high {
            current.status = SegmentStatus::Accepted;
            return RefineOutcome {
                segment: current,
                rounds,
                diagnostic: None,
                peak_len,
            };
        }
    }
    discard(original, rounds, None, peak_len)
}
