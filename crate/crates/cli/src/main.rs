//! Command-line driver for the token-guard decoding engine.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use token_guard::backend::{Backend, RemoteBackend, SyntheticBackend, SyntheticBackendSpec};
use token_guard::config::{preset, preset_names, propagate_thresholds, GuardConfig, PropagationParams};
use token_guard::dataset::load_jsonl;
use token_guard::propcheck::{check_prop1, check_prop2, check_prop3, TrialSpec};
use token_guard::report::{evaluate, parse_predictions, run_dataset, BenchReport, Mode, RunOptions};

const CONFIG_ENV: &str = "TOKEN_GUARD_CONFIG";

#[derive(Parser)]
#[command(name = "token-guard", version, about = "Hallucination-controlled decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer every record of a JSON Lines dataset.
    Run(RunArgs),
    /// Like `run`, reporting wall time and throughput.
    Bench(RunArgs),
    /// Score predictions against a dataset's gold answers.
    Eval {
        /// Predictions as JSON Lines or a saved run report.
        predictions: PathBuf,
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive segment and global thresholds from a token threshold.
    Propagate {
        #[arg(long, default_value_t = 0.4)]
        tau_token: f64,
        #[arg(long, default_value_t = 0.7)]
        c_seg: f64,
        #[arg(long, default_value_t = 0.15)]
        k1: f64,
        #[arg(long, default_value_t = 0.15)]
        k2: f64,
        #[arg(long, default_value_t = 0.05)]
        delta1: f64,
        #[arg(long, default_value_t = 0.7)]
        f_expected: f64,
    },
    /// List preset names, or print one preset as JSON.
    Presets { name: Option<String> },
    /// Run the randomized property checks.
    Propcheck {
        /// Which property: 1, 2, 3 or all.
        #[arg(long, default_value = "all")]
        prop: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    dataset: PathBuf,
    /// JSON config file; falls back to $TOKEN_GUARD_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset instead of the defaults.
    #[arg(long)]
    preset: Option<String>,
    /// `synthetic`, `synthetic:SPEC.json` or a bridge URL.
    #[arg(long, default_value = "synthetic")]
    backend: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Plain argmax decoding with no guarding.
    #[arg(long)]
    greedy: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Field override such as `global.m_max=3`; repeatable.
    #[arg(long = "set", value_name = "PATH=JSON")]
    overrides: Vec<String>,
}

fn resolve_config(args: &RunArgs) -> Result<GuardConfig> {
    let mut config = match &args.preset {
        Some(name) => preset(name)?,
        None => GuardConfig::default(),
    };
    let file = args
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    if let Some(path) = file {
        config = GuardConfig::load(&path).with_context(|| format!("loading {}", path.display()))?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config.with_overrides(&args.overrides)?.validate()?)
}

fn open_backend(selector: &str, seed: u64) -> Result<Box<dyn Backend>> {
    if selector.starts_with("http://") || selector.starts_with("https://") {
        return Ok(Box::new(RemoteBackend::new(selector)));
    }
    let spec = match selector.strip_prefix("synthetic") {
        Some("") => SyntheticBackendSpec::demo(seed),
        Some(rest) if rest.starts_with(':') => {
            let path = &rest[1..];
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?
        }
        _ => bail!("unknown backend `{selector}`; use synthetic, synthetic:SPEC.json or a URL"),
    };
    Ok(Box::new(SyntheticBackend::new(spec)?))
}

fn emit(out: Option<&Path>, json: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, format!("{json}\n")).with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn run(args: &RunArgs, bench: bool) -> Result<ExitCode> {
    let config = resolve_config(args)?;
    let backend = open_backend(&args.backend, config.seed)?;
    let entries = load_jsonl(&args.dataset)?;
    let mode = if args.greedy { Mode::Greedy } else { Mode::Guarded };
    let report = run_dataset(
        backend.as_ref(),
        &config,
        &entries,
        RunOptions {
            mode,
            workers: args.workers,
        },
    )?;
    if bench {
        let b = BenchReport::from_run(&report);
        eprint!("{}", b.summary());
        emit(args.out.as_deref(), &serde_json::to_string_pretty(&b)?)?;
    } else {
        eprint!("{}", report.summary());
        emit(args.out.as_deref(), &report.to_json())?;
    }
    Ok(if report.has_failures() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => run(&args, false),
        Command::Bench(args) => run(&args, true),
        Command::Eval {
            predictions,
            dataset,
            out,
        } => {
            let text = std::fs::read_to_string(&predictions)
                .with_context(|| format!("reading {}", predictions.display()))?;
            let preds = parse_predictions(&text)?;
            let entries = load_jsonl(&dataset)?;
            let mut records = Vec::new();
            for e in entries {
                match e.record {
                    Ok(r) => records.push(r),
                    Err(msg) => bail!("dataset line {}: {msg}", e.line),
                }
            }
            let report = evaluate(&preds, &records)?;
            eprint!("{}", report.summary());
            emit(out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Propagate {
            tau_token,
            c_seg,
            k1,
            k2,
            delta1,
            f_expected,
        } => {
            let p = PropagationParams {
                c_seg,
                k1,
                k2,
                delta1,
                f_fact_expected: f_expected,
            };
            let t = propagate_thresholds(tau_token, &p)?;
            println!("{}", serde_json::to_string_pretty(&t)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets { name } => {
            match name {
                Some(n) => println!("{}", preset(&n)?.to_json()),
                None => preset_names().iter().for_each(|n| println!("{n}")),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Propcheck {
            prop,
            seed,
            trials,
            out,
        } => {
            let spec = TrialSpec {
                seed,
                n_trials: trials,
                ..TrialSpec::default()
            };
            let which: Vec<u8> = match prop.as_str() {
                "all" => vec![1, 2, 3],
                "1" => vec![1],
                "2" => vec![2],
                "3" => vec![3],
                other => bail!("unknown property `{other}`; use 1, 2, 3 or all"),
            };
            let mut reports = Vec::new();
            for p in which {
                let r = match p {
                    1 => check_prop1(&spec)?,
                    2 => check_prop2(&spec)?,
                    _ => check_prop3(&spec)?,
                };
                eprintln!(
                    "{} {}: {}/{} ({:.3} >= {})",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.passing,
                    r.trials,
                    r.pass_rate,
                    r.threshold
                );
                reports.push(r);
            }
            emit(out.as_deref(), &serde_json::to_string_pretty(&reports)?)?;
            Ok(if reports.iter().all(|r| r.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
