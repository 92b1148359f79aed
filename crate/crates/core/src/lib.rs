//! Hallucination-controlled decoding.
//!
//! Generation runs in three stages. Each candidate token is scored against a
//! running mean of accepted hidden states ([`guard`]), runs of accepted
//! tokens are scored and locally rewritten as segments ([`segment`]), and
//! segments are clustered into candidate answers that must clear a global
//! score ([`global`]). [`pipeline::Engine`] ties the stages together over any
//! [`backend::Backend`].
//!
//! ```
//! use token_guard::{Engine, GuardConfig, QARecord, SyntheticBackend, SyntheticBackendSpec};
//!
//! let backend = SyntheticBackend::new(SyntheticBackendSpec::demo(3)).unwrap();
//! let engine = Engine::new(&backend, GuardConfig::default());
//! let run = engine.run_record(&QARecord::new("q", "what was reported ?")).unwrap();
//! assert!(!run.answer.is_empty());
//! ```
//!
//! The guide in `book/` walks through each stage with runnable examples.

pub mod backend;
pub mod config;
pub mod dataset;
pub mod error;
pub mod global;
pub mod guard;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod propcheck;
pub mod report;
pub mod segment;
pub mod vector;

pub use backend::{Backend, RemoteBackend, SyntheticBackend, SyntheticBackendSpec};
pub use config::GuardConfig;
pub use dataset::QARecord;
pub use error::{Error, Result};
pub use pipeline::{Engine, RecordRun};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/token-guard.md")]
    mod token_guard {}
    #[doc = include_str!("../../../book/src/segments.md")]
    mod segments {}
    #[doc = include_str!("../../../book/src/global.md")]
    mod global {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
