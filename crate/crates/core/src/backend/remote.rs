use std::sync::OnceLock;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::{
    CandidatesRequest, CandidatesResponse, EmbedResponse, ErrorBody, HiddenResponse,
    RefineResponse, TextResponse, TokenIdsRequest, TokenIdsResponse, TokenizeRequest,
};
use super::{Backend, CandidateWindow, ModelInfo, RefineRequest, TokenCandidate, TokenId};
use crate::error::{Error, Result};
use crate::vector::Vector;

/// Client for a model bridge speaking the `/v1/*` JSON protocol.
pub struct RemoteBackend {
    base_url: String,
    agent: ureq::Agent,
    info: OnceLock<ModelInfo>,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("base_url", &self.base_url)
            .finish()
    }
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(120))
    }

    pub fn with_timeout(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
            info: OnceLock::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn decode<T: DeserializeOwned>(
        path: &str,
        response: std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<T> {
        let mut response = response.map_err(|e| Error::BackendUnreachable(format!("{path}: {e}")))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::BackendUnreachable(format!("{path}: {e}")))?;
        if !(200..300).contains(&status) {
            return Err(match serde_json::from_str::<ErrorBody>(&text) {
                Ok(body) => body.into_error(status),
                Err(_) => Error::Protocol(format!("{path}: HTTP {status}: {text}")),
            });
        }
        serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("{path}: {e}")))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        let url = format!("{}{path}", self.base_url);
        Self::decode(path, self.agent.get(&url).call())
    }

    fn post<Req: Serialize, T: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<T> {
        let url = format!("{}{path}", self.base_url);
        let payload =
            serde_json::to_string(body).map_err(|e| Error::Protocol(format!("{path}: {e}")))?;
        Self::decode(
            path,
            self.agent
                .post(&url)
                .header("content-type", "application/json")
                .send(payload.as_str()),
        )
    }

    fn check_rows(&self, endpoint: &str, rows: &[Vector], expected: usize, width: usize) -> Result<()> {
        if rows.len() != expected {
            return Err(Error::Protocol(format!(
                "{endpoint}: expected {expected} rows, got {}",
                rows.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::Protocol(format!(
                "{endpoint}: row width {} differs from reported dimension {width}",
                bad.len()
            )));
        }
        Ok(())
    }
}

impl Backend for RemoteBackend {
    fn info(&self) -> Result<ModelInfo> {
        if let Some(info) = self.info.get() {
            return Ok(info.clone());
        }
        let info: ModelInfo = self.get("/v1/info")?;
        Ok(self.info.get_or_init(|| info).clone())
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        let r: TokenIdsResponse = self.post(
            "/v1/tokenize",
            &TokenizeRequest {
                text: text.to_string(),
            },
        )?;
        Ok(r.token_ids)
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        let r: TextResponse = self.post(
            "/v1/detokenize",
            &TokenIdsRequest {
                token_ids: ids.to_vec(),
            },
        )?;
        Ok(r.text)
    }

    fn context_hiddens(&self, ids: &[TokenId]) -> Result<Vec<Vector>> {
        if ids.is_empty() {
            return Err(Error::EmptyContext);
        }
        let d = self.info()?.hidden_dim;
        let r: HiddenResponse = self.post(
            "/v1/hidden",
            &TokenIdsRequest {
                token_ids: ids.to_vec(),
            },
        )?;
        self.check_rows("/v1/hidden", &r.hiddens, ids.len(), d)?;
        Ok(r.hiddens)
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
        let d = self.info()?.hidden_dim;
        let r: CandidatesResponse = self.post(
            "/v1/candidates",
            &CandidatesRequest {
                token_ids: context.to_vec(),
                top_m,
                temperature: sampling_temperature,
            },
        )?;
        if r.candidates.len() > top_m {
            return Err(Error::Protocol(format!(
                "/v1/candidates: {} candidates for top_m {top_m}",
                r.candidates.len()
            )));
        }
        let hiddens: Vec<Vector> = r.candidates.iter().map(|c| c.hidden.clone()).collect();
        self.check_rows("/v1/candidates", &hiddens, r.candidates.len(), d)?;
        let mut candidates = r.candidates;
        // the contract is descending logprob; do not trust the wire order
        candidates.sort_by(|a, b| b.logprob.total_cmp(&a.logprob).then(a.token_id.cmp(&b.token_id)));
        Ok(candidates)
    }

    fn embed_tokens(&self, ids: &[TokenId]) -> Result<Vec<Vector>> {
        let width = self.info()?.embedding_width();
        let r: EmbedResponse = self.post(
            "/v1/embed",
            &TokenIdsRequest {
                token_ids: ids.to_vec(),
            },
        )?;
        self.check_rows("/v1/embed", &r.embeddings, ids.len(), width)?;
        Ok(r.embeddings)
    }

    fn refine_window(&self, request: &RefineRequest) -> Result<Vec<CandidateWindow>> {
        let d = self.info()?.hidden_dim;
        let r: RefineResponse = self.post("/v1/refine", request)?;
        for w in &r.windows {
            if w.token_ids.len() != w.candidates_meta.len() {
                return Err(Error::Protocol(
                    "/v1/refine: token_ids and candidates_meta lengths differ".into(),
                ));
            }
            let hiddens: Vec<Vector> = w
                .candidates_meta
                .iter()
                .map(|m| m.candidate.hidden.clone())
                .collect();
            self.check_rows("/v1/refine", &hiddens, w.token_ids.len(), d)?;
        }
        Ok(r.windows)
    }
}
