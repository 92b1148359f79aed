#![allow(dead_code)]

pub mod oracles;

use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;

use token_guard::backend::{protocol, Backend, SyntheticBackend, SyntheticBackendSpec};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn demo_backend(seed: u64) -> SyntheticBackend {
    SyntheticBackend::new(SyntheticBackendSpec::demo(seed)).unwrap()
}

/// A local HTTP server answering the bridge protocol from an in-process backend.
pub struct MockBridge {
    pub url: String,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

impl MockBridge {
    pub fn start<B: Backend + 'static>(backend: B) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}", server.server_addr().to_ip().unwrap());
        let srv = Arc::clone(&server);
        let handle = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let mut body = String::new();
                let _ = req.as_reader().read_to_string(&mut body);
                let reply = protocol::dispatch(&backend, req.method().as_str(), req.url(), &body);
                let header =
                    tiny_http::Header::from_bytes("content-type", "application/json").unwrap();
                let resp = tiny_http::Response::from_string(reply.body)
                    .with_status_code(reply.status)
                    .with_header(header);
                let _ = req.respond(resp);
            }
        });
        Self {
            url,
            server,
            handle: Some(handle),
        }
    }
}

impl Drop for MockBridge {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub fn compact(
    origin: usize,
    ids: &[u32],
    text: &str,
    representation: Vec<f64>,
    seg_score: f64,
) -> token_guard::segment::CompactSegment {
    token_guard::segment::CompactSegment {
        origin_index: origin,
        token_ids: ids.to_vec(),
        texts: text.split_whitespace().map(str::to_string).collect(),
        token_scores: vec![seg_score; ids.len()],
        representation,
        token_component: seg_score,
        consistency: 1.0,
        alignment: 1.0,
        seg_score,
        status: token_guard::segment::SegmentStatus::Accepted,
        refinement_rounds: 0,
    }
}
