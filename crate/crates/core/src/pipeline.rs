//! The three-stage decoding engine.

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, TokenId};
use crate::config::GuardConfig;
use crate::dataset::QARecord;
use crate::error::{Error, Result};
use crate::global::{
    assemble_chains, global_iterate, BackendScorer, CannotAnswerReason, FinalOutcome,
    ReasoningChain, RoundTrace,
};
use crate::guard::{score_candidates, select_token, LatentEnvironment};
use crate::prompt::TemplateRegistry;
use crate::segment::{
    classify_segment, refine_segment, Classification, CompactSegment, RefineContext,
    RefineParams, RefineRound, Segment, SegmentStatus, SegmentThresholds,
};
use crate::vector::RunningMean;

/// Answer text used when the engine declines to answer.
pub const CANNOT_ANSWER: &str = "cannot answer";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Tokens decoded over all passes, discarded ones included.
    pub generated_tokens: usize,
    /// Tokens in the returned answer.
    pub emitted_tokens: usize,
    pub low_confidence: usize,
    pub refinement_rounds: usize,
    pub global_rounds: usize,
    pub segments: usize,
    pub discarded_segments: usize,
    /// Most hidden states held for the open segment at any time.
    pub peak_buffered: usize,
}

impl Counters {
    fn absorb(&mut self, other: &Counters) {
        self.generated_tokens += other.generated_tokens;
        self.low_confidence += other.low_confidence;
        self.refinement_rounds += other.refinement_rounds;
        self.segments += other.segments;
        self.discarded_segments += other.discarded_segments;
        self.peak_buffered = self.peak_buffered.max(other.peak_buffered);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTrace {
    #[serde(flatten)]
    pub segment: CompactSegment,
    /// Score before any refinement.
    pub initial_score: f64,
    pub classification: Classification,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinement: Vec<RefineRound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// One decoding pass over the prompt (stages one and two).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassTrace {
    pub round: usize,
    pub thresholds: SegmentThresholds,
    pub generated_ids: Vec<TokenId>,
    pub segments: Vec<SegmentTrace>,
    pub counters: Counters,
}

impl PassTrace {
    pub fn accepted(&self) -> Vec<CompactSegment> {
        self.segments
            .iter()
            .filter(|s| s.segment.status == SegmentStatus::Accepted)
            .map(|s| s.segment.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRun {
    /// Answer text, or [`CANNOT_ANSWER`].
    pub answer: String,
    pub answer_token_ids: Vec<TokenId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cannot_answer_reason: Option<CannotAnswerReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    pub passes: Vec<PassTrace>,
    pub global: Vec<RoundTrace>,
    pub counters: Counters,
}

impl RecordRun {
    pub fn answered(&self) -> bool {
        self.cannot_answer_reason.is_none()
    }
}

/// Unguarded argmax decoding, the comparison baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyRun {
    pub answer: String,
    pub answer_token_ids: Vec<TokenId>,
    pub counters: Counters,
}

pub struct Engine<'a, B: Backend + ?Sized> {
    backend: &'a B,
    config: GuardConfig,
    n_clusters: usize,
    templates: TemplateRegistry,
}

fn closes_sentence(text: &str) -> bool {
    text.trim_end().ends_with(['.', '?', '!'])
}

struct OpenSegment {
    start: usize,
    mean_before: RunningMean,
}

impl<'a, B: Backend + ?Sized> Engine<'a, B> {
    /// Expects an already validated config.
    pub fn new(backend: &'a B, config: GuardConfig) -> Self {
        Self {
            backend,
            n_clusters: config.global.clusters_for(0),
            config,
            templates: TemplateRegistry::default(),
        }
    }

    /// Picks the cluster count for a corpus of this size when the config
    /// leaves it open.
    pub fn with_corpus_len(mut self, n: usize) -> Self {
        self.n_clusters = self.config.global.clusters_for(n);
        self
    }

    pub fn config(&self) -> &GuardConfig {
        &self.config
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn run_record(&self, record: &QARecord) -> Result<RecordRun> {
        let prompt = self.templates.render(record);
        self.answer(&prompt, record.passage.as_deref())
    }

    pub fn greedy_record(&self, record: &QARecord) -> Result<GreedyRun> {
        self.greedy(&self.templates.render(record))
    }

    /// Runs all three stages on a rendered prompt.
    pub fn answer(&self, prompt: &str, passage: Option<&str>) -> Result<RecordRun> {
        let prompt_ids = self.backend.tokenize(prompt)?;
        let first = self.decode_pass(&prompt_ids, self.config.segment_thresholds, 1)?;
        let mut passes = vec![first];
        let initial = assemble_chains(&passes[0].accepted(), self.n_clusters, self.config.seed);

        let scorer = BackendScorer {
            backend: self.backend,
            fact_mode: self.config.global.fact_mode,
            evidence: self.config.global.evidence,
            passage,
        };
        let outcome = match initial {
            Err(Error::NoAcceptedSegments) => FinalOutcome::CannotAnswer {
                reason: CannotAnswerReason::NoAcceptedSegments,
                diagnostic: None,
                trace: Vec::new(),
            },
            Err(e) => return Err(e),
            Ok(chains) => global_iterate(
                chains,
                self.config.segment_thresholds,
                &self.config.global,
                &scorer,
                |thresholds: &SegmentThresholds, round| -> Result<Vec<ReasoningChain>> {
                    let pass = self.decode_pass(&prompt_ids, *thresholds, round)?;
                    let accepted = pass.accepted();
                    passes.push(pass);
                    match assemble_chains(&accepted, self.n_clusters, self.config.seed) {
                        Err(Error::NoAcceptedSegments) => Ok(Vec::new()),
                        other => other,
                    }
                },
            ),
        };

        let mut counters = Counters::default();
        for p in &passes {
            counters.absorb(&p.counters);
        }
        counters.global_rounds = outcome.trace().len();
        Ok(match outcome {
            FinalOutcome::Answer { chain, trace } => {
                let ids = chain.token_ids();
                counters.emitted_tokens = ids.len();
                RecordRun {
                    answer: self.backend.detokenize(&ids)?,
                    answer_token_ids: ids,
                    cannot_answer_reason: None,
                    diagnostic: None,
                    passes,
                    global: trace,
                    counters,
                }
            }
            FinalOutcome::CannotAnswer {
                reason,
                diagnostic,
                trace,
            } => RecordRun {
                answer: CANNOT_ANSWER.to_string(),
                answer_token_ids: Vec::new(),
                cannot_answer_reason: Some(reason),
                diagnostic,
                passes,
                global: trace,
                counters,
            },
        })
    }

    /// Stages one and two: guarded token selection with segment scoring and
    /// local refinement, under the given segment thresholds.
    pub fn decode_pass(
        &self,
        prompt_ids: &[TokenId],
        thresholds: SegmentThresholds,
        round: usize,
    ) -> Result<PassTrace> {
        let cfg = &self.config;
        let eos = self.backend.info()?.eos_token_id;
        let hiddens = self.backend.context_hiddens(prompt_ids)?;
        let mut env = LatentEnvironment::init(&hiddens, cfg.l_max)?;
        drop(hiddens);
        let mut context = prompt_ids.to_vec();
        let mut open: Option<OpenSegment> = None;
        let mut trace = PassTrace {
            round,
            thresholds,
            generated_ids: Vec::new(),
            segments: Vec::new(),
            counters: Counters::default(),
        };

        for _ in 0..cfg.max_new_tokens {
            let candidates =
                self.backend
                    .candidates(&context, cfg.top_m, cfg.sampling_temperature)?;
            if candidates.is_empty() {
                break;
            }
            let scores = score_candidates(&candidates, &env, cfg.lambda, cfg.softmax_temperature)?;
            let (idx, passed) = select_token(&candidates, &scores, cfg.tau_token);
            let chosen = candidates.into_iter().nth(idx).expect("index in range");
            if Some(chosen.token_id) == eos {
                break;
            }
            trace.counters.generated_tokens += 1;
            if passed {
                if open.is_none() {
                    open = Some(OpenSegment {
                        start: context.len(),
                        mean_before: env.accepted_mean().clone(),
                    });
                }
                let ends = closes_sentence(&chosen.text);
                context.push(chosen.token_id);
                env.update(chosen, scores[idx])?;
                if ends || env.is_full() {
                    self.close_segment(&mut env, &mut context, open.take(), &thresholds, &mut trace)?;
                }
            } else {
                self.close_segment(&mut env, &mut context, open.take(), &thresholds, &mut trace)?;
                trace.counters.low_confidence += 1;
                env.absorb(&chosen.hidden)?;
                context.push(chosen.token_id);
            }
        }
        self.close_segment(&mut env, &mut context, open.take(), &thresholds, &mut trace)?;
        trace.counters.peak_buffered = trace.counters.peak_buffered.max(env.peak_buffered());
        trace.generated_ids = context[prompt_ids.len()..].to_vec();
        Ok(trace)
    }

    fn close_segment(
        &self,
        env: &mut LatentEnvironment,
        context: &mut Vec<TokenId>,
        open: Option<OpenSegment>,
        thresholds: &SegmentThresholds,
        trace: &mut PassTrace,
    ) -> Result<()> {
        let Some(open) = open else { return Ok(()) };
        let tokens = env.drain_buffer();
        if tokens.is_empty() {
            return Ok(());
        }
        let cfg = &self.config;
        let origin_index = trace.segments.len();
        trace.counters.segments += 1;

        let scored = match Segment::score(tokens.clone(), env.anchor(), &cfg.segment_weights, origin_index) {
            Ok(s) => s,
            Err(e) => {
                trace.counters.discarded_segments += 1;
                let seg = Segment {
                    weights: vec![],
                    representation: vec![0.0; env.dim()],
                    token_component: 0.0,
                    consistency: 0.0,
                    alignment: 0.0,
                    seg_score: 0.0,
                    status: SegmentStatus::Discarded,
                    origin_index,
                    tokens,
                };
                trace.segments.push(SegmentTrace {
                    segment: seg.compact(0),
                    initial_score: 0.0,
                    classification: Classification::Discard,
                    refinement: vec![],
                    diagnostic: Some(e.to_string()),
                });
                return Ok(());
            }
        };
        let initial_score = scored.seg_score;
        let classification = classify_segment(initial_score, thresholds);
        let (segment, refinement, diagnostic) = match classification {
            Classification::Accept => {
                let mut s = scored;
                s.status = SegmentStatus::Accepted;
                (s, vec![], None)
            }
            Classification::Discard => {
                let mut s = scored;
                s.status = SegmentStatus::Discarded;
                (s, vec![], None)
            }
            Classification::Refine => {
                let params = RefineParams {
                    lambda: cfg.lambda,
                    softmax_temperature: cfg.softmax_temperature,
                    sampling_temperature: cfg.sampling_temperature,
                    weights: cfg.segment_weights,
                    top_m: cfg.top_m,
                    n_candidates: cfg.refine_candidates,
                    max_len: cfg.l_max,
                };
                let ctx = RefineContext {
                    prefix_ids: &context[..open.start],
                    mean_before: &open.mean_before,
                    anchor: env.anchor(),
                };
                let old_len = scored.len();
                let old: Vec<Vec<f64>> = scored.tokens.iter().map(|t| t.candidate.hidden.clone()).collect();
                let out = refine_segment(scored, ctx, self.backend, thresholds, &params);
                trace.counters.refinement_rounds += out.rounds.len();
                trace.counters.peak_buffered = trace.counters.peak_buffered.max(out.peak_len);
                if out.segment.status == SegmentStatus::Accepted && out.rounds.iter().any(|r| r.spliced) {
                    let new: Vec<&[f64]> = out
                        .segment
                        .tokens
                        .iter()
                        .map(|t| t.candidate.hidden.as_slice())
                        .collect();
                    env.replace_hiddens(&old, &new)?;
                    context.splice(open.start..open.start + old_len, out.segment.token_ids());
                }
                (out.segment, out.rounds, out.diagnostic)
            }
        };
        if segment.status == SegmentStatus::Discarded {
            trace.counters.discarded_segments += 1;
        }
        trace.segments.push(SegmentTrace {
            segment: segment.compact(refinement.len()),
            initial_score,
            classification,
            refinement,
            diagnostic,
        });
        Ok(())
    }

    /// Argmax decoding with no scoring, refinement or global pass.
    pub fn greedy(&self, prompt: &str) -> Result<GreedyRun> {
        let mut context = self.backend.tokenize(prompt)?;
        let eos = self.backend.info()?.eos_token_id;
        let start = context.len();
        for _ in 0..self.config.max_new_tokens {
            let Some(top) = self
                .backend
                .candidates(&context, 1, self.config.sampling_temperature)?
                .into_iter()
                .next()
            else {
                break;
            };
            if Some(top.token_id) == eos {
                break;
            }
            context.push(top.token_id);
        }
        let ids = context[start..].to_vec();
        Ok(GreedyRun {
            answer: self.backend.detokenize(&ids)?,
            counters: Counters {
                generated_tokens: ids.len(),
                emitted_tokens: ids.len(),
                ..Counters::default()
            },
            answer_token_ids: ids,
        })
    }
}
