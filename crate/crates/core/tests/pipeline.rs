mod common;

use common::{demo_backend, fixture};
use token_guard::backend::{Backend, SyntheticBackend, SyntheticBackendSpec, TokenId};
use token_guard::config::GuardConfig;
use token_guard::dataset::{load_jsonl, QARecord};
use token_guard::pipeline::{Engine, CANNOT_ANSWER};
use token_guard::report::{run_dataset, Mode, RunOptions, RunReport};

fn fixture_backend() -> SyntheticBackend {
    let text = std::fs::read_to_string(fixture("synthetic_demo.json")).unwrap();
    SyntheticBackend::new(serde_json::from_str::<SyntheticBackendSpec>(&text).unwrap()).unwrap()
}

fn run(mode: Mode, workers: usize) -> RunReport {
    let b = fixture_backend();
    let entries = load_jsonl(&fixture("planted.jsonl")).unwrap();
    run_dataset(&b, &GuardConfig::default(), &entries, RunOptions { mode, workers }).unwrap()
}

fn planted(b: &SyntheticBackend) -> Vec<TokenId> {
    b.spec().hallucination_plan.iter().map(|p| p.token_id).collect()
}

#[test]
fn fixture_has_ten_records_and_three_plants() {
    let entries = load_jsonl(&fixture("planted.jsonl")).unwrap();
    assert_eq!(entries.len(), 10);
    assert!(entries.iter().all(|e| e.record.is_ok()));
    assert_eq!(planted(&fixture_backend()).len(), 3);
}

#[test]
fn runs_are_byte_deterministic_across_worker_counts() {
    for mode in [Mode::Guarded, Mode::Greedy] {
        let a = run(mode, 1).without_timing().to_json();
        let b = run(mode, 4).without_timing().to_json();
        let c = run(mode, 4).without_timing().to_json();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }
}

#[test]
fn guarded_decoding_excludes_planted_tokens_greedy_emits() {
    let b = fixture_backend();
    let plants = planted(&b);
    let guarded = run(Mode::Guarded, 2);
    let greedy = run(Mode::Greedy, 2);
    let (mut included, mut excluded) = (0, 0);
    for (g, u) in guarded.records.iter().zip(&greedy.records) {
        assert_eq!(g.id, u.id);
        for p in &plants {
            if u.answer_token_ids.contains(p) {
                included += 1;
                if !g.answer_token_ids.contains(p) {
                    excluded += 1;
                }
            }
        }
    }
    assert!(included > 0);
    assert!(excluded * 2 >= included, "{excluded}/{included}");
}

#[test]
fn peak_buffer_never_exceeds_l_max() {
    for report in [run(Mode::Guarded, 3), run(Mode::Greedy, 3)] {
        let l_max = report.config.l_max;
        assert!(report.aggregate.peak_buffered <= l_max);
        assert!(report.records.iter().all(|r| r.counters.peak_buffered <= l_max));
    }
    let b = demo_backend(5);
    for l_max in [2, 4, 7] {
        let config = GuardConfig {
            l_max,
            ..GuardConfig::default()
        };
        let engine = Engine::new(&b, config);
        let run = engine
            .run_record(&QARecord::new("x", "did the drug lower the risk ?"))
            .unwrap();
        assert!(run.counters.peak_buffered <= l_max);
        assert!(run
            .passes
            .iter()
            .flat_map(|p| &p.segments)
            .all(|s| s.segment.token_ids.len() <= l_max));
    }
}

#[test]
fn impossible_thresholds_decline_to_answer() {
    let b = fixture_backend();
    let mut config = GuardConfig::default();
    config.global.tau_global = 0.999;
    let run = Engine::new(&b, config)
        .run_record(&QARecord::new("q", "what was reported ?"))
        .unwrap();
    assert_eq!(run.answer, CANNOT_ANSWER);
    assert!(run.cannot_answer_reason.is_some());
    assert!(run.answer_token_ids.is_empty());
}

#[test]
fn answered_text_detokenizes_answer_ids() {
    let b = fixture_backend();
    let engine = Engine::new(&b, GuardConfig::default());
    let r = engine
        .run_record(&QARecord::new("q", "did the drug lower the risk of stroke ?"))
        .unwrap();
    if r.answered() {
        assert_eq!(r.answer, b.detokenize(&r.answer_token_ids).unwrap());
        assert!(r.global.last().is_some());
    }
    let g = engine.greedy_record(&QARecord::new("q", "did the drug lower the risk of stroke ?")).unwrap();
    assert!(!g.answer_token_ids.is_empty());
}

