//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::oracles::{chains, check_refinement, fixture, kmeans_instance, segment_oracle_error, Fixed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use token_guard::backend::{SyntheticBackend, SyntheticBackendSpec, TokenId};
use token_guard::config::{preset, propagate_thresholds, GuardConfig, PropagationParams};
use token_guard::dataset::load_jsonl;
use token_guard::global::{
    adjust_thresholds, global_iterate, global_score, CannotAnswerReason, FinalOutcome, GlobalConfig,
};
use token_guard::metrics::{bleu, exact_match, f1, token_accuracy};
use token_guard::propcheck::{check_prop1, TrialSpec};
use token_guard::report::{run_dataset, Mode, RunOptions, RunReport};
use token_guard::segment::SegmentThresholds;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn prop1() -> Outcome {
    let t = Instant::now();
    let report = check_prop1(&TrialSpec::default()).unwrap();
    let took = t.elapsed();
    outcome(
        report.pass && report.trials >= 1000 && took < Duration::from_secs(5),
        format!("{}/{} trials over gamma 0.5, 1, 2, {}", report.passing, report.trials, secs(took)),
    )
}

fn soft_min() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut bad = 0;
    for _ in 0..10_000 {
        let (f, l): (f64, f64) = (rng.random(), rng.random());
        if global_score(f, l) > f.min(l) + 1e-12 {
            bad += 1;
        }
    }
    let equal = (0..=100)
        .map(|i| i as f64 / 100.0)
        .all(|x| global_score(1.0, x) == x && global_score(x, 1.0) == x);
    let took = t.elapsed();
    outcome(
        bad == 0 && equal && took < Duration::from_secs(1),
        format!("{bad} violations in 10000 pairs, equality cases {equal}, {}", secs(took)),
    )
}

fn default_constants() -> Outcome {
    let c = preset("paper-default").unwrap();
    let w = c.segment_weights;
    let t = c.segment_thresholds;
    let ok = c.lambda == 0.6
        && c.tau_token == 0.4
        && (w.alpha, w.beta, w.gamma) == (0.5, 0.3, 0.2)
        && (t.tau_low, t.tau_high, t.n_max) == (0.55, 0.75, 3)
        && c.global.tau_global == 0.7
        && c.global.delta_tau == 0.1
        && c.global.m_max == 2
        && (c.softmax_temperature, c.sampling_temperature) == (0.3, 0.4);
    outcome(ok, "paper-default preset")
}

struct EndToEnd {
    guarded: RunReport,
    greedy: RunReport,
    deterministic: bool,
    took: Duration,
    plants: Vec<TokenId>,
}

fn end_to_end() -> EndToEnd {
    let spec: SyntheticBackendSpec =
        serde_json::from_str(&std::fs::read_to_string(common::fixture("synthetic_demo.json")).unwrap())
            .unwrap();
    let backend = SyntheticBackend::new(spec).unwrap();
    let entries = load_jsonl(&common::fixture("planted.jsonl")).unwrap();
    let config = GuardConfig::default();
    let run = |mode, workers| {
        run_dataset(&backend, &config, &entries, RunOptions { mode, workers })
            .unwrap()
            .without_timing()
    };
    let t = Instant::now();
    let guarded = run(Mode::Guarded, 0);
    let greedy = run(Mode::Greedy, 0);
    let took = t.elapsed();
    let deterministic = guarded.to_json() == run(Mode::Guarded, 1).to_json()
        && greedy.to_json() == run(Mode::Greedy, 1).to_json();
    EndToEnd {
        guarded,
        greedy,
        deterministic,
        took,
        plants: backend.spec().hallucination_plan.iter().map(|p| p.token_id).collect(),
    }
}

fn planted(e: &EndToEnd) -> Outcome {
    let (mut included, mut excluded) = (0, 0);
    for (g, u) in e.guarded.records.iter().zip(&e.greedy.records) {
        for p in &e.plants {
            if u.answer_token_ids.contains(p) {
                included += 1;
                excluded += usize::from(!g.answer_token_ids.contains(p));
            }
        }
    }
    outcome(
        included > 0 && excluded * 2 >= included && e.deterministic && e.took < Duration::from_secs(10),
        format!(
            "{excluded}/{included} planted tokens excluded, {} of {} records answered, deterministic {}, {}",
            e.guarded.aggregate.answered,
            e.guarded.records.len(),
            e.deterministic,
            secs(e.took)
        ),
    )
}

fn segment_oracle() -> Outcome {
    let worst = (0..200u64).map(segment_oracle_error).fold(0.0, f64::max);
    outcome(worst < 1e-10, format!("200 segments, max deviation {worst:.1e}"))
}

fn refinement() -> Outcome {
    let mut failures = Vec::new();
    let mut refined = 0;
    for seed in 0..200u64 {
        match check_refinement(&fixture(seed)) {
            Ok(r) => refined += usize::from(r),
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    outcome(
        failures.is_empty(),
        format!("200 fixtures, {} violations, {refined} accepted after refinement{}", failures.len(),
            failures.first().map(|f| format!(" ({f})")).unwrap_or_default()),
    )
}

fn global_loop() -> Outcome {
    let t = SegmentThresholds {
        tau_low: 0.55,
        tau_high: 0.75,
        n_max: 3,
    };
    let config = GlobalConfig::default();
    let both_low = global_iterate(chains(1), t, &config, &Fixed(vec![(0.4, 0.4)]), |_, _| Ok(chains(1)));
    let both_low_ok = matches!(
        both_low,
        FinalOutcome::CannotAnswer { reason: CannotAnswerReason::BothLow, .. }
    );
    let mut calls = 0;
    let stuck = global_iterate(chains(1), t, &config, &Fixed(vec![(0.45, 0.85)]), |_, _| {
        calls += 1;
        Ok(chains(1))
    });
    let exhausted_ok = matches!(
        &stuck,
        FinalOutcome::CannotAnswer { reason: CannotAnswerReason::Exhausted, trace, .. } if trace.len() == config.m_max
    ) && calls == config.m_max - 1;
    let up = adjust_thresholds(0.45, 0.85, &t, 0.1, 0.6);
    let down = adjust_thresholds(0.85, 0.45, &t, 0.1, 0.6);
    let adjust_ok = (up.tau_high - 0.85).abs() < 1e-12
        && up.tau_low == 0.55
        && (down.tau_low - 0.45).abs() < 1e-12
        && down.tau_high == 0.75;
    outcome(
        both_low_ok && exhausted_ok && adjust_ok,
        format!("both-low {both_low_ok}, exhausted after {} rounds {exhausted_ok}, adjustment {adjust_ok}", stuck.trace().len()),
    )
}

fn kmeans_optimality() -> Outcome {
    let (mut exact, mut within) = (0, 0);
    for seed in 0..100u64 {
        let (got, _, opt) = kmeans_instance(seed);
        exact += usize::from(got <= opt + 1e-9);
        within += usize::from(got <= 1.05 * opt + 1e-12);
    }
    outcome(
        within == 100 && exact >= 90,
        format!("{exact}/100 optimal, {within}/100 within 5%"),
    )
}

#[derive(serde::Deserialize)]
struct Pair {
    prediction: String,
    golds: Vec<String>,
    pred_ids: Vec<u32>,
    gold_ids: Vec<u32>,
    em: f64,
    f1: f64,
    bleu: f64,
    token_accuracy: f64,
}

fn metric_oracle() -> Outcome {
    let pairs: Vec<Pair> =
        serde_json::from_str(&std::fs::read_to_string(common::fixture("metric_pairs.json")).unwrap()).unwrap();
    let agree = pairs
        .iter()
        .filter(|p| {
            let b = p.golds.iter().map(|g| bleu(&p.prediction, g, 4)).fold(0.0, f64::max);
            exact_match(&p.prediction, &p.golds) == p.em
                && f1(&p.prediction, &p.golds) == p.f1
                && token_accuracy(&p.pred_ids, &p.gold_ids) == p.token_accuracy
                && (b - p.bleu).abs() < 1e-12
        })
        .count();
    let two_thirds = f1("a b c", &["b c d"]) == 2.0 / 3.0;
    outcome(
        agree == 20 && pairs.len() == 20 && two_thirds,
        format!("{agree}/{} pairs agree, F1(a b c, b c d) = 2/3 {two_thirds}", pairs.len()),
    )
}

fn propagation() -> Outcome {
    let p = PropagationParams {
        c_seg: 0.7,
        k1: 0.15,
        k2: 0.15,
        delta1: 0.05,
        f_fact_expected: 0.7,
    };
    let t = propagate_thresholds(0.40, &p).unwrap();
    let formula = (t.tau_low - 0.355).abs() < 1e-12
        && (t.tau_high - 0.43).abs() < 1e-12
        && (t.tau_global - 0.70).abs() < 1e-12;
    let row = preset("thresholds-row4").unwrap();
    let table = (row.segment_thresholds.tau_low, row.segment_thresholds.tau_high, row.global.tau_global)
        == (0.55, 0.75, 0.70);
    let coexist = formula && table && t.tau_high != row.segment_thresholds.tau_high;
    outcome(
        coexist,
        format!("formula ({:.3}, {:.3}, {:.2}) and table row 4 (0.55, 0.75, 0.70) both available", t.tau_low, t.tau_high, t.tau_global),
    )
}

fn memory(e: &EndToEnd) -> Outcome {
    let l_max = e.guarded.config.l_max;
    let peak = [&e.guarded, &e.greedy]
        .iter()
        .flat_map(|r| r.records.iter().map(|x| x.counters.peak_buffered))
        .max()
        .unwrap_or(0);
    outcome(peak <= l_max, format!("peak buffered {peak}, l_max {l_max}"))
}

fn main() {
    let e2e = end_to_end();
    let checks: Vec<(&str, Outcome)> = vec![
        ("guard reweighting inequality", prop1()),
        ("soft-min bound", soft_min()),
        ("default constants", default_constants()),
        ("planted hallucination end-to-end", planted(&e2e)),
        ("segment oracle equivalence", segment_oracle()),
        ("refinement contract", refinement()),
        ("global loop", global_loop()),
        ("kmeans small-instance optimality", kmeans_optimality()),
        ("metric oracle", metric_oracle()),
        ("threshold propagation", propagation()),
        ("memory invariant", memory(&e2e)),
    ];
    let mut failed = 0;
    for (name, o) in &checks {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
