//! Seeded, deterministic stand-in for a language model.
//!
//! Every output is a pure function of `(seed, inputs)`:
//!
//! * Prompt positions (up to and including the last answer-marker token) get
//!   seeded-hash unit vectors keyed by `(token id, position)`.
//! * A generated token at step `s` gets `c·â + √(1−c²)·u`, where `â` is the
//!   unit context anchor, `u ⟂ â` is a seeded direction for `(s, id)` and
//!   `c` is drawn from the configured coherence range.
//! * A planted token gets the same construction around the running mean of
//!   accepted hidden states instead of the anchor, so its cosine against the
//!   engine's running mean is exactly the planned value.
//! * Logits are seeded uniforms over the whole prefix; planted tokens have
//!   their probability overridden at their step, and reserved ids (planted,
//!   refinement and marker tokens) are pushed far down otherwise.
//!
//! The backend replays the engine's running mean from the token ids alone,
//! which is possible because every hidden state above depends only on
//! earlier positions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    Backend, CandidateWindow, ModelInfo, RefineRequest, TokenCandidate, TokenId, WindowToken,
};
use crate::error::{Error, Result};
use crate::vector::{self, RunningMean, Vector};

const TAG_PROMPT: u64 = 0x7072_6f6d;
const TAG_COSINE: u64 = 0x636f_7369;
const TAG_DIRECTION: u64 = 0x6469_7265;
const TAG_LOGIT: u64 = 0x6c6f_6769;
const TAG_EMBED: u64 = 0x656d_6265;
const TAG_REFINE: u64 = 0x7265_6669;
const TAG_TOKENIZE: u64 = 0x746f_6b65;

/// Logit offset applied to reserved ids outside their planted step.
const RESERVED_LOGIT_OFFSET: f64 = 12.0;

/// A token forced into the candidate set at a given generation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedToken {
    pub step: usize,
    pub token_id: TokenId,
    /// Cosine of the planted hidden state against the running mean, in `[-1, 1]`.
    pub cosine: f64,
    /// Raw probability of the planted token at its step, in `(0, 1)`.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBackendSpec {
    pub seed: u64,
    pub d: usize,
    pub vocab: Vec<String>,
    #[serde(default)]
    pub hallucination_plan: Vec<PlantedToken>,
    /// Cosine range `[lo, hi]` of ordinary generated tokens against the anchor.
    #[serde(default = "default_coherence")]
    pub coherence: [f64; 2],
    /// Ids used to build alternative windows in `refine_window`.
    #[serde(default)]
    pub refine_tokens: Vec<TokenId>,
    /// Cosine of refinement tokens against the anchor.
    #[serde(default = "default_refine_cosine")]
    pub refine_cosine: f64,
    /// Probability a refinement token gets at its position inside a rewrite.
    #[serde(default = "default_refine_probability")]
    pub refine_probability: f64,
    /// Whether `refine_window` returns the original window first.
    #[serde(default = "default_true")]
    pub refine_includes_original: bool,
    #[serde(default = "default_logit_scale")]
    pub logit_scale: f64,
    /// Token text that ends the prompt; positions after it are generated.
    #[serde(default = "default_marker")]
    pub marker: String,
    #[serde(default = "default_max_context")]
    pub max_context: usize,
}

fn default_coherence() -> [f64; 2] {
    [0.8, 0.99]
}
fn default_refine_cosine() -> f64 {
    0.97
}
fn default_refine_probability() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_logit_scale() -> f64 {
    3.0
}
fn default_marker() -> String {
    "Answer:".to_string()
}
fn default_max_context() -> usize {
    4096
}

/// Fixes the listed probabilities and rescales the rest to keep the total at 1.
fn pin(mut probs: Vec<f64>, fixed: &[(TokenId, f64)]) -> Vec<f64> {
    if fixed.is_empty() {
        return probs;
    }
    let mass: f64 = fixed.iter().map(|f| f.1).sum::<f64>().min(1.0 - 1e-9);
    let rest: f64 = probs
        .iter()
        .enumerate()
        .filter(|(v, _)| !fixed.iter().any(|f| f.0 as usize == *v))
        .map(|(_, p)| p)
        .sum();
    for (v, p) in probs.iter_mut().enumerate() {
        match fixed.iter().find(|f| f.0 as usize == v) {
            Some(f) => *p = f.1,
            None => *p *= (1.0 - mass) / rest,
        }
    }
    probs
}

const DEMO_WORDS: &[&str] = &[
    "the", "study", "shows", "that", "patients", "treated", "with", "drug", "had", "lower",
    "risk", "of", "stroke", "in", "trial", "results", "were", "significant", "and", "data",
    "support", "this", "finding", "revenue", "grew", "by", "percent", "year", "team", "scored",
    "yards", "touchdown", "quarter", "virus", "cells", "infection", "response", "was", "a",
    "higher", "rate", "evidence", "suggests", "yes", "no", "maybe", "is", "not", ",", ".",
];

impl SyntheticBackendSpec {
    /// A ready-made spec: ordinary words, an answer marker, three planted
    /// hallucination tokens and three refinement tokens.
    pub fn demo(seed: u64) -> Self {
        let mut vocab: Vec<String> = DEMO_WORDS.iter().map(|w| w.to_string()).collect();
        vocab.push("Answer:".into());
        let planted: Vec<TokenId> = ["Atlantis", "1887", "unicorn"]
            .iter()
            .map(|w| {
                vocab.push(w.to_string());
                (vocab.len() - 1) as TokenId
            })
            .collect();
        let refine_tokens: Vec<TokenId> = ["consistent", "reported", "observed"]
            .iter()
            .map(|w| {
                vocab.push(w.to_string());
                (vocab.len() - 1) as TokenId
            })
            .collect();
        let hallucination_plan = vec![
            PlantedToken {
                step: 2,
                token_id: planted[0],
                cosine: -0.3,
                probability: 0.6,
            },
            PlantedToken {
                step: 9,
                token_id: planted[1],
                cosine: -0.1,
                probability: 0.55,
            },
            PlantedToken {
                step: 17,
                token_id: planted[2],
                cosine: -0.2,
                probability: 0.65,
            },
        ];
        Self {
            seed,
            d: 64,
            vocab,
            hallucination_plan,
            coherence: default_coherence(),
            refine_tokens,
            refine_cosine: default_refine_cosine(),
            refine_probability: default_refine_probability(),
            refine_includes_original: true,
            logit_scale: default_logit_scale(),
            marker: default_marker(),
            max_context: default_max_context(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.d == 0 {
            return bad("synthetic backend needs d >= 1".into());
        }
        if self.vocab.len() < 2 {
            return bad("synthetic backend needs at least two vocabulary entries".into());
        }
        for p in &self.hallucination_plan {
            if p.token_id as usize >= self.vocab.len() {
                return bad(format!("planted token id {} outside vocabulary", p.token_id));
            }
            if !(p.probability > 0.0 && p.probability < 1.0) {
                return bad(format!("planted probability {} not in (0, 1)", p.probability));
            }
            if !(-1.0..=1.0).contains(&p.cosine) {
                return bad(format!("planted cosine {} not in [-1, 1]", p.cosine));
            }
        }
        for &id in &self.refine_tokens {
            if id as usize >= self.vocab.len() {
                return bad(format!("refinement token id {id} outside vocabulary"));
            }
        }
        let [lo, hi] = self.coherence;
        if !(-1.0..=1.0).contains(&lo) || !(-1.0..=1.0).contains(&hi) || lo > hi {
            return bad(format!("coherence range [{lo}, {hi}] invalid"));
        }
        if !(-1.0..=1.0).contains(&self.refine_cosine) {
            return bad(format!("refine cosine {} not in [-1, 1]", self.refine_cosine));
        }
        if !(self.refine_probability > 0.0 && self.refine_probability < 1.0) {
            return bad(format!("refine probability {} not in (0, 1)", self.refine_probability));
        }
        Ok(())
    }
}

/// Deterministic synthetic language model. See the module docs for the construction.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    spec: SyntheticBackendSpec,
    marker_id: Option<TokenId>,
    reserved: Vec<bool>,
}

/// Everything known about the model state after a given prefix.
struct StepState {
    step: usize,
    anchor_unit: Vector,
    /// Engine-equivalent running mean: the anchor until a token is accepted.
    running_mean: Vector,
    logits: Vec<f64>,
}

fn mix(mut h: u64, x: u64) -> u64 {
    // splitmix64 finaliser over an FNV-style fold
    h ^= x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = h.wrapping_mul(0x0100_0000_01b3);
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash(parts: &[u64]) -> u64 {
    parts.iter().fold(0xcbf2_9ce4_8422_2325, |h, &p| mix(h, p))
}

fn str_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| mix(h, b as u64))
}

impl SyntheticBackend {
    pub fn new(spec: SyntheticBackendSpec) -> Result<Self> {
        spec.validate()?;
        let marker_id = spec
            .vocab
            .iter()
            .position(|w| *w == spec.marker)
            .map(|i| i as TokenId);
        let mut reserved = vec![false; spec.vocab.len()];
        for p in &spec.hallucination_plan {
            reserved[p.token_id as usize] = true;
        }
        for &id in &spec.refine_tokens {
            reserved[id as usize] = true;
        }
        if let Some(m) = marker_id {
            reserved[m as usize] = true;
        }
        Ok(Self {
            spec,
            marker_id,
            reserved,
        })
    }

    pub fn spec(&self) -> &SyntheticBackendSpec {
        &self.spec
    }

    pub fn marker_id(&self) -> Option<TokenId> {
        self.marker_id
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.spec.vocab.len()) {
            Some(&id) => Err(Error::UnknownTokenId(id)),
            None => Ok(()),
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len > self.spec.max_context {
            return Err(Error::ContextTooLong {
                len,
                limit: self.spec.max_context,
            });
        }
        Ok(())
    }

    /// Number of prompt positions: everything up to and including the last marker.
    fn prompt_len(&self, ids: &[TokenId]) -> usize {
        match self.marker_id {
            Some(m) => ids
                .iter()
                .rposition(|&id| id == m)
                .map(|i| i + 1)
                .unwrap_or(ids.len()),
            None => ids.len(),
        }
    }

    fn gaussian_unit(&self, key: u64) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        loop {
            let v: Vector = (0..self.spec.d)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            if let Some(u) = vector::unit(&v) {
                return u;
            }
        }
    }

    fn prompt_hidden(&self, id: TokenId, position: usize) -> Vector {
        self.gaussian_unit(hash(&[self.spec.seed, TAG_PROMPT, id as u64, position as u64]))
    }

    /// `c·base + √(1−c²)·u` with `u` a seeded unit direction orthogonal to `base`.
    fn around(&self, base_unit: &[f64], cosine: f64, key: u64) -> Vector {
        let d = self.spec.d;
        if d == 1 {
            return vec![if cosine >= 0.0 { base_unit[0] } else { -base_unit[0] }];
        }
        let mut salt = 0u64;
        let ortho = loop {
            let g = self.gaussian_unit(hash(&[key, salt]));
            let proj = vector::dot(&g, base_unit);
            let r: Vector = g.iter().zip(base_unit).map(|(x, b)| x - proj * b).collect();
            if let Some(u) = vector::unit(&r) {
                if vector::norm(&r) > 1e-6 {
                    break u;
                }
            }
            salt += 1;
        };
        let s = (1.0 - cosine * cosine).max(0.0).sqrt();
        base_unit
            .iter()
            .zip(&ortho)
            .map(|(b, u)| cosine * b + s * u)
            .collect()
    }

    fn planted_at(&self, step: usize, id: TokenId) -> Option<&PlantedToken> {
        self.spec
            .hallucination_plan
            .iter()
            .find(|p| p.step == step && p.token_id == id)
    }

    fn generated_hidden(
        &self,
        step: usize,
        id: TokenId,
        anchor_unit: &[f64],
        running_mean: &[f64],
    ) -> Vector {
        let key = hash(&[self.spec.seed, TAG_DIRECTION, step as u64, id as u64]);
        if let Some(p) = self.planted_at(step, id) {
            let base = vector::unit(running_mean).unwrap_or_else(|| anchor_unit.to_vec());
            return self.around(&base, p.cosine, key);
        }
        let cosine = if self.spec.refine_tokens.contains(&id) {
            self.spec.refine_cosine
        } else {
            let [lo, hi] = self.spec.coherence;
            let mut rng =
                ChaCha8Rng::seed_from_u64(hash(&[self.spec.seed, TAG_COSINE, step as u64, id as u64]));
            lo + (hi - lo) * rng.random::<f64>()
        };
        self.around(anchor_unit, cosine, key)
    }

    /// Hidden states of every position plus the state after the last one.
    fn replay(&self, ids: &[TokenId]) -> (Vec<Vector>, StepState) {
        let prompt_len = self.prompt_len(ids);
        let mut hiddens: Vec<Vector> = ids[..prompt_len]
            .iter()
            .enumerate()
            .map(|(pos, &id)| self.prompt_hidden(id, pos))
            .collect();
        let anchor = if prompt_len == 0 {
            vec![0.0; self.spec.d]
        } else {
            vector::mean(&hiddens).expect("non-empty prompt")
        };
        let anchor_unit = vector::unit(&anchor).unwrap_or_else(|| {
            let mut e = vec![0.0; self.spec.d];
            e[0] = 1.0;
            e
        });
        let mut accepted = RunningMean::new(self.spec.d);
        let mean_now = |acc: &RunningMean| {
            if acc.is_empty() {
                anchor.clone()
            } else {
                acc.mean().to_vec()
            }
        };
        for (step, &id) in ids[prompt_len..].iter().enumerate() {
            let h = self.generated_hidden(step, id, &anchor_unit, &mean_now(&accepted));
            accepted.push(&h).expect("dimension d");
            hiddens.push(h);
        }
        let step = ids.len() - prompt_len;
        let running_mean = mean_now(&accepted);
        let logits = self.logits(ids, step);
        (
            hiddens,
            StepState {
                step,
                anchor_unit,
                running_mean,
                logits,
            },
        )
    }

    fn logits(&self, ids: &[TokenId], step: usize) -> Vec<f64> {
        let prefix = ids
            .iter()
            .fold(hash(&[self.spec.seed, TAG_LOGIT]), |h, &id| mix(h, id as u64));
        (0..self.spec.vocab.len())
            .map(|v| {
                let mut rng = ChaCha8Rng::seed_from_u64(hash(&[prefix, v as u64]));
                let mut logit = self.spec.logit_scale * rng.random::<f64>();
                if self.reserved[v] && self.planted_at(step, v as TokenId).is_none() {
                    logit -= RESERVED_LOGIT_OFFSET;
                }
                logit
            })
            .collect()
    }

    fn distribution(&self, state: &StepState, temperature: f64) -> Vec<f64> {
        let probs = vector::softmax(&state.logits, temperature);
        let planted: Vec<(TokenId, f64)> = self
            .spec
            .hallucination_plan
            .iter()
            .filter(|p| p.step == state.step)
            .map(|p| (p.token_id, p.probability))
            .collect();
        pin(probs, &planted)
    }

    fn candidate(&self, state: &StepState, probs: &[f64], id: TokenId) -> TokenCandidate {
        TokenCandidate {
            token_id: id,
            text: self.spec.vocab[id as usize].clone(),
            logprob: probs[id as usize].ln(),
            hidden: self.generated_hidden(state.step, id, &state.anchor_unit, &state.running_mean),
        }
    }

    fn ranked(probs: &[f64]) -> Vec<TokenId> {
        let mut order: Vec<TokenId> = (0..probs.len() as TokenId).collect();
        order.sort_by(|&a, &b| {
            probs[b as usize]
                .total_cmp(&probs[a as usize])
                .then(a.cmp(&b))
        });
        order
    }

    fn window_token(
        &self,
        context: &[TokenId],
        id: TokenId,
        top_m: usize,
        temperature: f64,
    ) -> WindowToken {
        let (_, state) = self.replay(context);
        let mut probs = self.distribution(&state, temperature);
        if self.spec.refine_tokens.contains(&id) {
            probs = pin(probs, &[(id, self.spec.refine_probability)]);
        }
        let top = Self::ranked(&probs);
        let mut step_logprobs: Vec<f64> = top
            .iter()
            .take(top_m)
            .map(|&v| probs[v as usize].ln())
            .collect();
        if !top.iter().take(top_m).any(|&v| v == id) {
            step_logprobs.push(probs[id as usize].ln());
        }
        WindowToken {
            candidate: self.candidate(&state, &probs, id),
            step_logprobs,
        }
    }

    fn build_window(
        &self,
        prefix: &[TokenId],
        ids: &[TokenId],
        top_m: usize,
        temperature: f64,
    ) -> CandidateWindow {
        let mut context = prefix.to_vec();
        let mut meta = Vec::with_capacity(ids.len());
        for &id in ids {
            meta.push(self.window_token(&context, id, top_m, temperature));
            context.push(id);
        }
        CandidateWindow {
            token_ids: ids.to_vec(),
            candidates_meta: meta,
        }
    }
}

impl Backend for SyntheticBackend {
    fn info(&self) -> Result<ModelInfo> {
        Ok(ModelInfo {
            model_name: format!("synthetic-{}", self.spec.seed),
            hidden_dim: self.spec.d,
            vocab_size: self.spec.vocab.len(),
            embedding_dim: None,
            eos_token_id: None,
        })
    }

    /// Whitespace tokenisation; unknown words hash onto non-reserved ids.
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        let ordinary: Vec<TokenId> = (0..self.spec.vocab.len() as TokenId)
            .filter(|&v| !self.reserved[v as usize])
            .collect();
        Ok(text
            .split_whitespace()
            .map(|word| {
                if let Some(i) = self.spec.vocab.iter().position(|w| w == word) {
                    return i as TokenId;
                }
                let h = hash(&[self.spec.seed, TAG_TOKENIZE, str_hash(word)]);
                if ordinary.is_empty() {
                    (h % self.spec.vocab.len() as u64) as TokenId
                } else {
                    ordinary[(h % ordinary.len() as u64) as usize]
                }
            })
            .collect())
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        self.check_ids(ids)?;
        Ok(ids
            .iter()
            .map(|&id| self.spec.vocab[id as usize].as_str())
            .collect::<Vec<_>>()
            .join(" "))
    }

    fn context_hiddens(&self, ids: &[TokenId]) -> Result<Vec<Vector>> {
        if ids.is_empty() {
            return Err(Error::EmptyContext);
        }
        self.check_ids(ids)?;
        self.check_len(ids.len())?;
        Ok(self.replay(ids).0)
    }

    fn candidates(
        &self,
        context: &[TokenId],
        top_m: usize,
        sampling_temperature: f64,
    ) -> Result<Vec<TokenCandidate>> {
        if context.is_empty() {
            return Err(Error::EmptyContext);
        }
        if top_m == 0 || !(sampling_temperature > 0.0) {
            return Err(Error::InvalidArgument(
                "top_m must be >= 1 and the temperature positive".into(),
            ));
        }
        self.check_ids(context)?;
        self.check_len(context.len())?;
        let (_, state) = self.replay(context);
        let probs = self.distribution(&state, sampling_temperature);
        Ok(Self::ranked(&probs)
            .into_iter()
            .take(top_m)
            .map(|id| self.candidate(&state, &probs, id))
            .collect())
    }

    /// Seeded hash vector with components in `[0, 1)`, unit-normalised.
    fn embed_tokens(&self, ids: &[TokenId]) -> Result<Vec<Vector>> {
        self.check_ids(ids)?;
        Ok(ids
            .iter()
            .map(|&id| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(hash(&[self.spec.seed, TAG_EMBED, id as u64]));
                let v: Vector = (0..self.spec.d).map(|_| rng.random::<f64>()).collect();
                vector::unit(&v).unwrap_or_else(|| vec![1.0 / (self.spec.d as f64).sqrt(); self.spec.d])
            })
            .collect())
    }

    fn refine_window(&self, request: &RefineRequest) -> Result<Vec<CandidateWindow>> {
        if request.window_ids.is_empty() || request.n_candidates == 0 {
            return Err(Error::InvalidArgument(
                "refinement needs a non-empty window and n_candidates >= 1".into(),
            ));
        }
        if request.prefix_ids.is_empty() {
            return Err(Error::EmptyContext);
        }
        self.check_ids(&request.prefix_ids)?;
        self.check_ids(&request.window_ids)?;
        self.check_ids(&request.suffix_ids)?;
        self.check_len(
            request.prefix_ids.len() + request.window_ids.len() + request.suffix_ids.len(),
        )?;
        let top_m = request.top_m.max(1);
        let len = request.window_ids.len();
        let mut windows = Vec::with_capacity(request.n_candidates);
        if self.spec.refine_includes_original {
            windows.push(self.build_window(
                &request.prefix_ids,
                &request.window_ids,
                top_m,
                request.temperature,
            ));
        }
        let prefix_key = request
            .prefix_ids
            .iter()
            .fold(hash(&[self.spec.seed, TAG_REFINE]), |h, &id| mix(h, id as u64));
        let mut alt = 1u64;
        while windows.len() < request.n_candidates {
            let ids: Vec<TokenId> = if self.spec.refine_tokens.is_empty() {
                // fall back to the alt-th ranked ordinary candidate at each position
                let mut ctx = request.prefix_ids.clone();
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    let (_, state) = self.replay(&ctx);
                    let probs = self.distribution(&state, request.temperature);
                    let ranked = Self::ranked(&probs);
                    let pick = ranked[(alt as usize) % ranked.len()];
                    out.push(pick);
                    ctx.push(pick);
                }
                out
            } else {
                (0..len)
                    .map(|q| {
                        let h = hash(&[prefix_key, alt, q as u64]);
                        self.spec.refine_tokens[(h % self.spec.refine_tokens.len() as u64) as usize]
                    })
                    .collect()
            };
            windows.push(self.build_window(&request.prefix_ids, &ids, top_m, request.temperature));
            alt += 1;
        }
        Ok(windows)
    }
}
