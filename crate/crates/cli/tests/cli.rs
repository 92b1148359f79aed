use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use token_guard::report::RunReport;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_token-guard"));
    c.env_remove("TOKEN_GUARD_CONFIG");
    c
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn synthetic() -> String {
    format!("synthetic:{}", fixture("synthetic_demo.json").display())
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_to(out: &Path, extra: &[&str]) -> Output {
    bin()
        .args(["run", fixture("planted.jsonl").to_str().unwrap(), "--backend", &synthetic(), "--out"])
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn report(path: &Path) -> RunReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn presets_and_propagate() {
    let o = bin().arg("presets").output().unwrap();
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 25);
    let o = bin().args(["presets", "thresholds-row4"]).output().unwrap();
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["segment_thresholds"]["tau_high"], 0.75);
    assert_eq!(v["global"]["tau_global"], 0.7);
    let o = bin().args(["presets", "missing"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("paper-default"));

    let o = bin().arg("propagate").output().unwrap();
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["tau_low"].as_f64().unwrap() - 0.355).abs() < 1e-12);
    assert!((v["tau_high"].as_f64().unwrap() - 0.43).abs() < 1e-12);
    assert!((v["tau_global"].as_f64().unwrap() - 0.70).abs() < 1e-12);
}

#[test]
fn run_is_deterministic_and_respects_l_max() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let oa = run_to(&a, &["--workers", "1"]);
    assert!(oa.status.success(), "{}", stderr(&oa));
    assert!(run_to(&b, &["--workers", "3"]).status.success());
    let (ra, rb) = (report(&a), report(&b));
    assert_eq!(ra.records.len(), 10);
    assert!(ra.aggregate.peak_buffered <= ra.aggregate.l_max);
    assert_eq!(ra.without_timing().to_json(), rb.without_timing().to_json());
    assert!(stderr(&oa).contains("peak buffered"));
}

#[test]
fn greedy_seed_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.json");
    let o = run_to(&out, &["--greedy", "--seed", "9", "--set", "l_max=4", "--set", "global.m_max=1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r.config.seed, 9);
    assert_eq!(r.config.l_max, 4);
    assert_eq!(r.config.global.m_max, 1);
    assert!(r.records.iter().all(|x| x.passes.is_empty()));
    assert!(r.aggregate.peak_buffered <= 4);
}

#[test]
fn config_file_from_environment_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 5, "lambda": 0.5}"#).unwrap();
    let out = dir.path().join("r.json");
    let o = bin()
        .env("TOKEN_GUARD_CONFIG", &cfg)
        .args(["run", fixture("planted.jsonl").to_str().unwrap(), "--backend", &synthetic(), "--greedy", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!((r.config.seed, r.config.lambda), (5, 0.5));

    let o = run_to(&out, &["--greedy", "--config", cfg.to_str().unwrap(), "--seed", "6", "--set", "lambda=0.7"]);
    assert!(o.status.success());
    let r = report(&out);
    assert_eq!((r.config.seed, r.config.lambda), (6, 0.7));
}

#[test]
fn bad_records_exit_one_and_keep_going() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    std::fs::write(
        &data,
        concat!(
            r#"{"id": "a", "question": "did the drug lower the risk ?", "gold_answers": ["yes"]}"#, "\n",
            r#"{"id": "b", "question": ""}"#, "\n",
            "not json\n",
            r#"{"id": "a", "question": "again ?"}"#, "\n",
            r#"{"id": "c", "question": "what was reported ?"}"#, "\n",
        ),
    )
    .unwrap();
    let out = dir.path().join("r.json");
    let o = bin()
        .args(["run", data.to_str().unwrap(), "--backend", &synthetic(), "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r.records.len(), 5);
    assert_eq!(r.aggregate.failures, 3);
    assert!(r.records[0].error.is_none() && r.records[4].error.is_none());
}

#[test]
fn fatal_errors_exit_two() {
    let data = fixture("planted.jsonl");
    for args in [
        vec!["run", data.to_str().unwrap(), "--set", "lambda=3"],
        vec!["run", data.to_str().unwrap(), "--set", "nonsense"],
        vec!["run", data.to_str().unwrap(), "--backend", "carrier-pigeon"],
        vec!["run", data.to_str().unwrap(), "--preset", "nope"],
        vec!["run", data.to_str().unwrap(), "--backend", "http://127.0.0.1:9"],
        vec!["run", "/does/not/exist.jsonl"],
    ] {
        let o = bin().args(&args).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error:"));
    }
}

#[test]
fn eval_scores_predictions_and_lists_id_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    std::fs::write(
        &data,
        concat!(
            r#"{"id": "1", "question": "q ?", "gold_answers": ["Yes."]}"#, "\n",
            r#"{"id": "2", "question": "q ?", "gold_answers": ["the data"]}"#, "\n",
        ),
    )
    .unwrap();
    let preds = dir.path().join("p.jsonl");
    std::fs::write(&preds, "{\"id\": \"1\", \"prediction\": \"yes\"}\n{\"id\": \"2\", \"prediction\": \"no\"}\n").unwrap();
    let o = bin().args(["eval", preds.to_str().unwrap(), data.to_str().unwrap()]).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["means"]["em"], 0.5);

    std::fs::write(&preds, "{\"id\": \"1\", \"prediction\": \"yes\"}\n{\"id\": \"9\", \"prediction\": \"no\"}\n").unwrap();
    let o = bin().args(["eval", preds.to_str().unwrap(), data.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("missing: [2]") && err.contains("extra: [9]"), "{err}");
}

#[test]
fn eval_accepts_a_saved_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    assert!(run_to(&out, &["--greedy"]).status.success());
    let o = bin()
        .args(["eval", out.to_str().unwrap(), fixture("planted.jsonl").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), 10);
}

#[test]
fn bench_reports_throughput() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.json");
    let o = bin()
        .args(["bench", fixture("planted.jsonl").to_str().unwrap(), "--backend", &synthetic(), "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let (tokens, secs) = (v["emitted_tokens"].as_f64().unwrap(), v["wall_seconds"].as_f64().unwrap());
    assert!((v["tokens_per_second"].as_f64().unwrap() - tokens / secs).abs() < 1e-6 * (1.0 + tokens / secs));
    assert!(v["peak_buffered"].as_u64().unwrap() <= v["l_max"].as_u64().unwrap());
    assert_eq!(v["rows"].as_array().unwrap().len(), 10);
}

#[test]
fn propcheck_subcommand() {
    let o = bin().args(["propcheck", "--prop", "1", "--trials", "200"]).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["trials"], 200);
    assert_eq!(v[0]["pass"], true);
    let o = bin().args(["propcheck", "--prop", "7"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
