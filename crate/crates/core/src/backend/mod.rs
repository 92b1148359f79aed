//! Language-model backends.
//!
//! The engine never runs a network itself. Everything it needs from a model
//! (penultimate-layer hidden states, scored next-token candidates, input
//! embeddings and window rewrites) goes through [`Backend`]. Two
//! implementations ship with the crate: [`SyntheticBackend`], a seeded
//! deterministic stand-in used by the test-suite, and [`RemoteBackend`], a
//! client for the model-bridge HTTP protocol.

mod remote;
mod synthetic;

pub mod protocol;

pub use remote::RemoteBackend;
pub use synthetic::{PlantedToken, SyntheticBackend, SyntheticBackendSpec};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::vector::Vector;

pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_name: String,
    /// Width `d` of every hidden vector.
    pub hidden_dim: usize,
    pub vocab_size: usize,
    /// Width of input embeddings; equals `hidden_dim` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eos_token_id: Option<TokenId>,
}

impl ModelInfo {
    pub fn embedding_width(&self) -> usize {
        self.embedding_dim.unwrap_or(self.hidden_dim)
    }
}

/// A proposed next token with its raw log-probability and hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCandidate {
    pub token_id: TokenId,
    pub text: String,
    /// Natural-log probability under the sampling temperature.
    pub logprob: f64,
    pub hidden: Vector,
}

/// One token of a rewritten window.
///
/// `step_logprobs` holds the log-probabilities of the candidate set the token
/// was drawn from, including the token's own, so the engine can recompute the
/// temperature-softmaxed probability exactly as it does during decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowToken {
    #[serde(flatten)]
    pub candidate: TokenCandidate,
    #[serde(default)]
    pub step_logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateWindow {
    pub token_ids: Vec<TokenId>,
    pub candidates_meta: Vec<WindowToken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRequest {
    pub prefix_ids: Vec<TokenId>,
    pub window_ids: Vec<TokenId>,
    pub suffix_ids: Vec<TokenId>,
    pub n_candidates: usize,
    /// Upper bound on the rewritten window length.
    pub max_new: usize,
    #[serde(default = "default_top_m")]
    pub top_m: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_top_m() -> usize {
    8
}

fn default_temperature() -> f64 {
    0.4
}

/// Everything the decoding engine asks of a language model.
///
/// Implementations must be safe to call concurrently; no call may depend on
/// the order of earlier calls.
pub trait Backend: Send + Sync {
    fn info(&self) -> Result<ModelInfo>;

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>>;

    fn detokenize(&self, ids: &[TokenId]) -> Result<String>;

    /// Penultimate-layer hidden state of every position of `ids`.
    fn context_hiddens(&self, ids: &[TokenId]) -> Result<Vec<Vector>>;

    /// Top `top_m` next-token candidates, sorted by descending raw logprob.
    fn candidates(
        &self,
        context: &[TokenId],
        top_m: usize,
        sampling_temperature: f64,
    ) -> Result<Vec<TokenCandidate>>;

    /// Input-embedding rows for `ids`.
    fn embed_tokens(&self, ids: &[TokenId]) -> Result<Vec<Vector>>;

    /// Alternative rewrites of `window_ids` given the surrounding tokens.
    fn refine_window(&self, request: &RefineRequest) -> Result<Vec<CandidateWindow>>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn info(&self) -> Result<ModelInfo> {
        (**self).info()
    }
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        (**self).tokenize(text)
    }
    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        (**self).detokenize(ids)
    }
    fn context_hiddens(&self, ids: &[TokenId]) -> Result<Vec<Vector>> {
        (**self).context_hiddens(ids)
    }
    fn candidates(&self, c: &[TokenId], m: usize, t: f64) -> Result<Vec<TokenCandidate>> {
        (**self).candidates(c, m, t)
    }
    fn embed_tokens(&self, ids: &[TokenId]) -> Result<Vec<Vector>> {
        (**self).embed_tokens(ids)
    }
    fn refine_window(&self, request: &RefineRequest) -> Result<Vec<CandidateWindow>> {
        (**self).refine_window(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn info(&self) -> Result<ModelInfo> {
        (**self).info()
    }
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        (**self).tokenize(text)
    }
    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        (**self).detokenize(ids)
    }
    fn context_hiddens(&self, ids: &[TokenId]) -> Result<Vec<Vector>> {
        (**self).context_hiddens(ids)
    }
    fn candidates(&self, c: &[TokenId], m: usize, t: f64) -> Result<Vec<TokenCandidate>> {
        (**self).candidates(c, m, t)
    }
    fn embed_tokens(&self, ids: &[TokenId]) -> Result<Vec<Vector>> {
        (**self).embed_tokens(ids)
    }
    fn refine_window(&self, request: &RefineRequest) -> Result<Vec<CandidateWindow>> {
        (**self).refine_window(request)
    }
}
