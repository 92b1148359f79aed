//! Dataset runs, throughput benches and metric evaluation.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, TokenId};
use crate::config::GuardConfig;
use crate::dataset::{Entry, QARecord};
use crate::error::{Error, Result};
use crate::global::{CannotAnswerReason, RoundTrace};
use crate::metrics::{self, EvalRecord};
use crate::pipeline::{Counters, Engine, PassTrace, RecordRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Guarded,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordReport {
    pub id: String,
    pub line: usize,
    pub answer: String,
    pub answer_token_ids: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cannot_answer_reason: Option<CannotAnswerReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    /// Set when the record could not be processed at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
    pub counters: Counters,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub passes: Vec<PassTrace>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub global: Vec<RoundTrace>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub records: usize,
    pub answered: usize,
    pub cannot_answer: usize,
    pub failures: usize,
    pub metrics: BTreeMap<String, f64>,
    pub emitted_tokens: usize,
    pub generated_tokens: usize,
    pub peak_buffered: usize,
    pub l_max: usize,
    pub wall_seconds: f64,
    /// Emitted tokens per wall-clock second.
    pub tokens_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub model_name: String,
    pub config: GuardConfig,
    pub records: Vec<RecordReport>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub mode: Mode,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Guarded,
            workers: 1,
        }
    }
}

fn score_record<B: Backend + ?Sized>(
    backend: &B,
    record: &QARecord,
    answer: &str,
    answer_ids: &[TokenId],
) -> BTreeMap<String, f64> {
    if record.gold_answers.is_empty() {
        return BTreeMap::new();
    }
    let gold_ids = backend.tokenize(&record.gold_answers[0]).ok();
    let ids = gold_ids.as_deref().map(|g| (answer_ids, g));
    EvalRecord::score(&record.id, answer, record.gold_answers.clone(), ids).per_metric
}

fn failed(id: String, line: usize, error: String) -> RecordReport {
    RecordReport {
        id,
        line,
        answer: String::new(),
        answer_token_ids: Vec::new(),
        cannot_answer_reason: None,
        diagnostic: None,
        error: Some(error),
        metrics: BTreeMap::new(),
        counters: Counters::default(),
        passes: Vec::new(),
        global: Vec::new(),
        wall_seconds: 0.0,
    }
}

fn run_one<B: Backend + ?Sized>(engine: &Engine<'_, B>, backend: &B, entry: &Entry, mode: Mode) -> RecordReport {
    let record = match &entry.record {
        Ok(r) => r,
        Err(e) => return failed(String::new(), entry.line, e.clone()),
    };
    let start = Instant::now();
    let result: Result<RecordRun> = match mode {
        Mode::Guarded => engine.run_record(record),
        Mode::Greedy => engine.greedy_record(record).map(|g| RecordRun {
            answer: g.answer,
            answer_token_ids: g.answer_token_ids,
            cannot_answer_reason: None,
            diagnostic: None,
            passes: Vec::new(),
            global: Vec::new(),
            counters: g.counters,
        }),
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    match result {
        Err(e) => {
            let mut r = failed(record.id.clone(), entry.line, e.to_string());
            r.wall_seconds = wall_seconds;
            r
        }
        Ok(run) => RecordReport {
            metrics: score_record(backend, record, &run.answer, &run.answer_token_ids),
            id: record.id.clone(),
            line: entry.line,
            answer: run.answer,
            answer_token_ids: run.answer_token_ids,
            cannot_answer_reason: run.cannot_answer_reason,
            diagnostic: run.diagnostic,
            error: None,
            counters: run.counters,
            passes: run.passes,
            global: run.global,
            wall_seconds,
        },
    }
}

/// Runs every entry and assembles the report in dataset order, whatever
/// the worker count.
pub fn run_dataset<B: Backend + ?Sized>(
    backend: &B,
    config: &GuardConfig,
    entries: &[Entry],
    options: RunOptions,
) -> Result<RunReport> {
    let config = config.validate()?;
    let model_name = backend.info()?.model_name;
    let engine = Engine::new(backend, config).with_corpus_len(entries.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let start = Instant::now();
    let records: Vec<RecordReport> = pool.install(|| {
        entries
            .par_iter()
            .map(|e| run_one(&engine, backend, e, options.mode))
            .collect()
    });
    let wall_seconds = start.elapsed().as_secs_f64();

    let ok: Vec<&RecordReport> = records.iter().filter(|r| r.error.is_none()).collect();
    let scored: Vec<EvalRecord> = ok
        .iter()
        .filter(|r| !r.metrics.is_empty())
        .map(|r| EvalRecord {
            id: r.id.clone(),
            prediction: r.answer.clone(),
            gold: Vec::new(),
            per_metric: r.metrics.clone(),
        })
        .collect();
    let emitted_tokens = ok.iter().map(|r| r.counters.emitted_tokens).sum();
    let aggregate = Aggregate {
        records: records.len(),
        answered: ok.iter().filter(|r| r.cannot_answer_reason.is_none()).count(),
        cannot_answer: ok.iter().filter(|r| r.cannot_answer_reason.is_some()).count(),
        failures: records.len() - ok.len(),
        metrics: metrics::aggregate(&scored),
        emitted_tokens,
        generated_tokens: ok.iter().map(|r| r.counters.generated_tokens).sum(),
        peak_buffered: ok.iter().map(|r| r.counters.peak_buffered).max().unwrap_or(0),
        l_max: config.l_max,
        wall_seconds,
        tokens_per_second: per_second(emitted_tokens, wall_seconds),
    };
    Ok(RunReport {
        mode: options.mode,
        model_name,
        config,
        records,
        aggregate,
    })
}

fn per_second(tokens: usize, seconds: f64) -> f64 {
    if seconds > 0.0 {
        tokens as f64 / seconds
    } else {
        0.0
    }
}

impl RunReport {
    pub fn has_failures(&self) -> bool {
        self.aggregate.failures > 0
    }

    /// Zeroes every wall-clock field so two runs can be compared bytewise.
    pub fn without_timing(mut self) -> Self {
        for r in &mut self.records {
            r.wall_seconds = 0.0;
        }
        self.aggregate.wall_seconds = 0.0;
        self.aggregate.tokens_per_second = 0.0;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Plain-text table, one row per record plus a totals line.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{:<12} {:>6} {:>6} {:>5} {:>5} {:>4}  answer\n",
            "id", "em", "f1", "low", "ref", "peak"
        );
        for r in &self.records {
            let m = |k: &str| r.metrics.get(k).map_or("-".to_string(), |v| format!("{v:.3}"));
            let answer = match &r.error {
                Some(e) => format!("ERROR {e}"),
                None => r.answer.chars().take(48).collect(),
            };
            out.push_str(&format!(
                "{:<12} {:>6} {:>6} {:>5} {:>5} {:>4}  {}\n",
                r.id,
                m("em"),
                m("f1"),
                r.counters.low_confidence,
                r.counters.refinement_rounds,
                r.counters.peak_buffered,
                answer
            ));
        }
        let a = &self.aggregate;
        out.push_str(&format!(
            "records {} answered {} cannot-answer {} failed {} | tokens {} in {:.3}s ({:.1} tok/s) | peak buffered {} of {}\n",
            a.records,
            a.answered,
            a.cannot_answer,
            a.failures,
            a.emitted_tokens,
            a.wall_seconds,
            a.tokens_per_second,
            a.peak_buffered,
            a.l_max
        ));
        for (k, v) in &a.metrics {
            out.push_str(&format!("mean {k} {v:.4}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub id: String,
    pub wall_seconds: f64,
    pub emitted_tokens: usize,
    /// All decoded tokens, refinement- and global-discarded ones included.
    pub generated_tokens: usize,
    pub tokens_per_second: f64,
    pub peak_buffered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub wall_seconds: f64,
    pub emitted_tokens: usize,
    pub generated_tokens: usize,
    pub tokens_per_second: f64,
    pub peak_buffered: usize,
    pub l_max: usize,
}

impl BenchReport {
    pub fn from_run(run: &RunReport) -> Self {
        let rows = run
            .records
            .iter()
            .map(|r| BenchRow {
                id: r.id.clone(),
                wall_seconds: r.wall_seconds,
                emitted_tokens: r.counters.emitted_tokens,
                generated_tokens: r.counters.generated_tokens,
                tokens_per_second: per_second(r.counters.emitted_tokens, r.wall_seconds),
                peak_buffered: r.counters.peak_buffered,
            })
            .collect();
        let a = &run.aggregate;
        Self {
            rows,
            wall_seconds: a.wall_seconds,
            emitted_tokens: a.emitted_tokens,
            generated_tokens: a.generated_tokens,
            tokens_per_second: a.tokens_per_second,
            peak_buffered: a.peak_buffered,
            l_max: a.l_max,
        }
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "{:<12} {:>9} {:>7} {:>9} {:>9} {:>4}\n",
            "id", "seconds", "tokens", "generated", "tok/s", "peak"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:>9.4} {:>7} {:>9} {:>9.1} {:>4}\n",
                r.id, r.wall_seconds, r.emitted_tokens, r.generated_tokens, r.tokens_per_second, r.peak_buffered
            ));
        }
        out.push_str(&format!(
            "{:<12} {:>9.4} {:>7} {:>9} {:>9.1} {:>4}\n",
            "total",
            self.wall_seconds,
            self.emitted_tokens,
            self.generated_tokens,
            self.tokens_per_second,
            self.peak_buffered
        ));
        out
    }
}

/// A single prediction row: `{"id": ..., "prediction": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub prediction: String,
}

/// Reads predictions from JSON Lines or from a saved [`RunReport`].
pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>> {
    if let Ok(report) = serde_json::from_str::<RunReport>(text) {
        return Ok(report
            .records
            .into_iter()
            .filter(|r| r.error.is_none())
            .map(|r| Prediction {
                id: r.id,
                prediction: r.answer,
            })
            .collect());
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Dataset(format!("predictions line {}: {e}", i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub means: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        let mut out = format!("{:<12} {:>6} {:>6} {:>6}\n", "id", "em", "f1", "bleu");
        for r in &self.records {
            let m = |k: &str| r.per_metric.get(k).copied().unwrap_or(0.0);
            out.push_str(&format!("{:<12} {:>6.3} {:>6.3} {:>6.3}\n", r.id, m("em"), m("f1"), m("bleu")));
        }
        for (k, v) in &self.means {
            out.push_str(&format!("mean {k} {v:.4}\n"));
        }
        out
    }
}

/// Scores predictions against dataset references. Ids must match exactly;
/// otherwise the missing and extra ids are listed in the error.
pub fn evaluate(predictions: &[Prediction], records: &[QARecord]) -> Result<EvalReport> {
    let by_id: HashMap<&str, &Prediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let missing: Vec<&str> = records
        .iter()
        .map(|r| r.id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    let known: std::collections::HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let extra: Vec<&str> = predictions
        .iter()
        .map(|p| p.id.as_str())
        .filter(|id| !known.contains(id))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Dataset(format!(
            "prediction ids do not match the dataset; missing: [{}]; extra: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    let rows: Vec<EvalRecord> = records
        .iter()
        .map(|r| EvalRecord::score(&r.id, by_id[r.id.as_str()].prediction.clone(), r.gold_answers.clone(), None))
        .collect();
    Ok(EvalReport {
        means: metrics::aggregate(&rows),
        records: rows,
    })
}
