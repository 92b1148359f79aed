//! Wire format of the model-bridge protocol.
//!
//! HTTP/1.1 with UTF-8 JSON bodies (`application/json`), no streaming:
//!
//! | method | path              | request             | response            |
//! |--------|-------------------|---------------------|---------------------|
//! | GET    | `/v1/info`        |                     | [`ModelInfo`]       |
//! | POST   | `/v1/tokenize`    | [`TokenizeRequest`] | [`TokenIdsResponse`]|
//! | POST   | `/v1/detokenize`  | [`TokenIdsRequest`] | [`TextResponse`]    |
//! | POST   | `/v1/hidden`      | [`TokenIdsRequest`] | [`HiddenResponse`]  |
//! | POST   | `/v1/candidates`  | [`CandidatesRequest`] | [`CandidatesResponse`] |
//! | POST   | `/v1/embed`       | [`TokenIdsRequest`] | [`EmbedResponse`]   |
//! | POST   | `/v1/refine`      | [`RefineRequest`]   | [`RefineResponse`]  |
//!
//! Errors are `{"error": ..., "detail": ...}` with status 400 (malformed
//! body), 413 (context too long), 422 (unknown token id) or 500.
//!
//! [`dispatch`] serves the protocol from any [`Backend`], which is how the
//! client is tested and how a synthetic model can be exposed over HTTP.

use serde::{Deserialize, Serialize};

use super::{Backend, CandidateWindow, ModelInfo, RefineRequest, TokenCandidate, TokenId};
use crate::error::Error;
use crate::vector::Vector;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizeRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenIdsRequest {
    pub token_ids: Vec<TokenId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenIdsResponse {
    pub token_ids: Vec<TokenId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextResponse {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HiddenResponse {
    pub hiddens: Vec<Vector>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidatesRequest {
    pub token_ids: Vec<TokenId>,
    pub top_m: usize,
    pub temperature: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidatesResponse {
    pub candidates: Vec<TokenCandidate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vector>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineResponse {
    pub windows: Vec<CandidateWindow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default)]
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_id: Option<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

/// A protocol response: HTTP status plus JSON body.
#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl ErrorBody {
    pub fn from_error(e: &Error) -> (u16, Self) {
        let (mut len, mut limit) = (None, None);
        let (status, kind, token_id) = match e {
            Error::ContextTooLong { len: l, limit: m } => {
                len = Some(*l);
                limit = Some(*m);
                (413, "context_too_long", None)
            }
            Error::UnknownTokenId(id) => (422, "unknown_token_id", Some(*id)),
            Error::EmptyContext | Error::InvalidArgument(_) => (400, "bad_request", None),
            _ => (500, "model_failure", None),
        };
        (
            status,
            Self {
                error: kind.to_string(),
                detail: e.to_string(),
                token_id,
                len,
                limit,
            },
        )
    }

    /// Maps a non-2xx reply back onto the engine's error type.
    pub fn into_error(self, status: u16) -> Error {
        match (status, self.token_id) {
            (422, Some(id)) => Error::UnknownTokenId(id),
            (413, _) => Error::ContextTooLong {
                len: self.len.unwrap_or(0),
                limit: self.limit.unwrap_or(0),
            },
            (400, _) if self.error == "bad_request" && self.detail.contains("empty") => {
                Error::EmptyContext
            }
            _ => Error::Protocol(format!("{status} {}: {}", self.error, self.detail)),
        }
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, Reply> {
    serde_json::from_str(body).map_err(|e| {
        let err = ErrorBody {
            error: "malformed_body".into(),
            detail: e.to_string(),
            token_id: None,
            len: None,
            limit: None,
        };
        Reply {
            status: 400,
            body: serde_json::to_string(&err).expect("error body serializes"),
        }
    })
}

fn ok<T: Serialize>(value: &T) -> Reply {
    match serde_json::to_string(value) {
        Ok(body) => Reply { status: 200, body },
        // serde_json refuses NaN/Inf, which the protocol forbids anyway.
        Err(e) => fail(&Error::Protocol(format!("non-finite value in response: {e}"))),
    }
}

fn fail(e: &Error) -> Reply {
    let (status, body) = ErrorBody::from_error(e);
    Reply {
        status,
        body: serde_json::to_string(&body).expect("error body serializes"),
    }
}

fn respond<T: Serialize>(result: crate::error::Result<T>) -> Reply {
    match result {
        Ok(v) => ok(&v),
        Err(e) => fail(&e),
    }
}

/// Serves one protocol request against `backend`.
pub fn dispatch<B: Backend + ?Sized>(backend: &B, method: &str, path: &str, body: &str) -> Reply {
    let result = (|| -> Result<Reply, Reply> {
        Ok(match (method, path) {
            ("GET", "/v1/info") => respond::<ModelInfo>(backend.info()),
            ("POST", "/v1/tokenize") => {
                let req: TokenizeRequest = parse(body)?;
                respond(
                    backend
                        .tokenize(&req.text)
                        .map(|token_ids| TokenIdsResponse { token_ids }),
                )
            }
            ("POST", "/v1/detokenize") => {
                let req: TokenIdsRequest = parse(body)?;
                respond(backend.detokenize(&req.token_ids).map(|text| TextResponse { text }))
            }
            ("POST", "/v1/hidden") => {
                let req: TokenIdsRequest = parse(body)?;
                respond(
                    backend
                        .context_hiddens(&req.token_ids)
                        .map(|hiddens| HiddenResponse { hiddens }),
                )
            }
            ("POST", "/v1/candidates") => {
                let req: CandidatesRequest = parse(body)?;
                respond(
                    backend
                        .candidates(&req.token_ids, req.top_m, req.temperature)
                        .map(|candidates| CandidatesResponse { candidates }),
                )
            }
            ("POST", "/v1/embed") => {
                let req: TokenIdsRequest = parse(body)?;
                respond(
                    backend
                        .embed_tokens(&req.token_ids)
                        .map(|embeddings| EmbedResponse { embeddings }),
                )
            }
            ("POST", "/v1/refine") => {
                let req: RefineRequest = parse(body)?;
                respond(backend.refine_window(&req).map(|windows| RefineResponse { windows }))
            }
            _ => Reply {
                status: 404,
                body: serde_json::to_string(&ErrorBody {
                    error: "not_found".into(),
                    detail: format!("{method} {path}"),
                    token_id: None,
                    len: None,
                    limit: None,
                })
                .expect("error body serializes"),
            },
        })
    })();
    result.unwrap_or_else(|reply| reply)
}
