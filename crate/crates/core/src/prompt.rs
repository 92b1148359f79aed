//! Prompt templates keyed by dataset domain.

use serde::{Deserialize, Serialize};

use crate::dataset::{DomainTag, QARecord};

/// Every rendered prompt ends with this marker on its own line.
pub const ANSWER_MARKER: &str = "Answer:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    /// Body with `{question}` and `{passage}` slots.
    pub body: String,
    /// Domain answer-format constraint, empty for the general template.
    pub constraint: String,
}

const GENERAL: &str = "Answer the question using only the information given. \
If the input does not contain the answer, say so instead of guessing. \
Start the final answer with \"Answer:\".";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRegistry {
    general: PromptTemplate,
    domains: Vec<(DomainTag, PromptTemplate)>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        let t = |name: &str, constraint: &str| PromptTemplate {
            name: name.to_string(),
            body: GENERAL.to_string(),
            constraint: constraint.to_string(),
        };
        Self {
            general: t("general", ""),
            domains: vec![
                (
                    DomainTag::Pubmedqa,
                    t(
                        "pubmedqa",
                        "The answer must start with \"Yes.\", \"No.\" or \"Maybe.\" followed by a \
                         concise one-sentence conclusion that keeps the key medical terms and conditions.",
                    ),
                ),
                (
                    DomainTag::Financebench,
                    t(
                        "financebench",
                        "Match the reference format exactly (USD amounts, percentages, ratios) and use \
                         only the financial data provided, without intermediate calculations.",
                    ),
                ),
                (
                    DomainTag::History,
                    t(
                        "history",
                        "Use only numbers and entities explicitly mentioned in the passage. If the \
                         passage is insufficient, answer \"The passage does not provide this information.\"",
                    ),
                ),
                (
                    DomainTag::Covidqa,
                    t(
                        "covidqa",
                        "Answer strictly from the passage; do not add outside medical knowledge.",
                    ),
                ),
                (
                    DomainTag::Ragtruth,
                    t(
                        "ragtruth",
                        "Limit the answer to the given passages and include every relevant factual \
                         detail, otherwise answer \"I cannot answer based on the provided passages.\"",
                    ),
                ),
            ],
        }
    }
}

impl TemplateRegistry {
    /// The domain template, or the general one.
    pub fn template(&self, tag: DomainTag) -> &PromptTemplate {
        self.domains
            .iter()
            .find(|(t, _)| *t == tag)
            .map(|(_, p)| p)
            .unwrap_or(&self.general)
    }

    /// Instructions, optional passage block, question, then the marker line.
    ///
    /// ```
    /// use token_guard::dataset::{DomainTag, QARecord};
    /// use token_guard::prompt::TemplateRegistry;
    ///
    /// let r = QARecord::new("q1", "Is water wet?").with_domain(DomainTag::Pubmedqa);
    /// let p = TemplateRegistry::default().render(&r);
    /// assert!(p.contains("\"Yes.\", \"No.\" or \"Maybe.\""));
    /// assert!(p.ends_with("Answer:"));
    /// ```
    pub fn render(&self, record: &QARecord) -> String {
        let t = self.template(record.domain_tag);
        let mut out = t.body.clone();
        if !t.constraint.is_empty() {
            out.push('\n');
            out.push_str(&t.constraint);
        }
        if let Some(p) = &record.passage {
            out.push_str("\n\nPassage:\n");
            out.push_str(p);
        }
        out.push_str("\n\nQuestion: ");
        out.push_str(&record.question);
        out.push('\n');
        out.push_str(ANSWER_MARKER);
        out
    }
}
