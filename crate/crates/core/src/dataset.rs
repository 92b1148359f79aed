//! JSON Lines question-answering datasets.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Pubmedqa,
    Financebench,
    History,
    Covidqa,
    Ragtruth,
    #[default]
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QARecord {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passage: Option<String>,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub domain_tag: DomainTag,
}

impl QARecord {
    pub fn new(id: impl Into<String>, question: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            passage: None,
            gold_answers: Vec::new(),
            domain_tag: DomainTag::Generic,
        }
    }

    pub fn with_passage(mut self, passage: impl Into<String>) -> Self {
        self.passage = Some(passage.into());
        self
    }

    pub fn with_gold(mut self, gold: impl Into<String>) -> Self {
        self.gold_answers.push(gold.into());
        self
    }

    pub fn with_domain(mut self, tag: DomainTag) -> Self {
        self.domain_tag = tag;
        self
    }
}

/// One dataset line: a record, or why the line was rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// 1-based line number.
    pub line: usize,
    pub record: std::result::Result<QARecord, String>,
}

/// Parses JSON Lines text. Blank lines are skipped; a bad line becomes an
/// `Err` entry and never stops the rest. Repeated ids and empty questions
/// are rejected per line.
pub fn parse_jsonl(text: &str) -> Vec<Entry> {
    let mut seen = HashSet::new();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let record = serde_json::from_str::<QARecord>(l)
                .map_err(|e| format!("line {}: {e}", i + 1))
                .and_then(|r| {
                    if r.question.trim().is_empty() {
                        Err(format!("line {}: record {} has an empty question", i + 1, r.id))
                    } else if !seen.insert(r.id.clone()) {
                        Err(format!("line {}: duplicate id {}", i + 1, r.id))
                    } else {
                        Ok(r)
                    }
                });
            Entry { line: i + 1, record }
        })
        .collect()
}

/// Reads and parses a dataset file. Only an unreadable file is an error.
pub fn load_jsonl(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    Ok(parse_jsonl(&text))
}
