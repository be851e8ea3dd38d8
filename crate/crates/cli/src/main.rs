mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pythoness_core::bench::{self, BenchOptions, Mode};
use pythoness_core::cache::CACHE_FORMAT_VERSION;
use pythoness_core::engine::{Engine, SynthesisStatus};
use pythoness_core::header::Module;
use pythoness_core::prompting::{Prompt, PromptKind, TEMPLATE_VERSION};
use pythoness_core::splice::{splice_file, SpliceStatus, SpliceTarget};
use pythoness_core::validation::worker::PROTOCOL_VERSION;
use pythoness_core::validation::{PythonRuntime, ValidationConfig};
use pythoness_core::Error;

use config::{build_backend, ConfigFile, Settings};

#[derive(Parser)]
#[command(name = "pythoness", about = "Synthesize, validate, cache and splice spec-driven Python functions")]
struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    json: bool,
    /// Flat TOML config file (also $PYTHONESS_CONFIG).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect or clear the code cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Inline cached code into a source file and remove its headers.
    Splice {
        file: PathBuf,
        #[arg(long, conflicts_with = "all")]
        function: Option<String>,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        dry_run: bool,
        #[arg(long, value_name = "DIR")]
        root: Option<PathBuf>,
    },
    /// Send a trivial prompt and report the round-trip latency.
    CheckBackend {
        #[arg(long)]
        backend: Option<String>,
    },
    /// Synthesize every decorated function in a file and cache the results.
    Synthesize {
        file: PathBuf,
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        backend: Option<String>,
        #[arg(long, value_name = "DIR")]
        root: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Benchmark corpus runs.
    Bench {
        #[command(subcommand)]
        action: BenchAction,
    },
    /// Print version information.
    Version,
}

#[derive(Args)]
struct CacheArgs {
    #[arg(long)]
    function: Option<String>,
    #[arg(long, value_name = "DIR")]
    root: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CacheAction {
    List(CacheArgs),
    Clear(CacheArgs),
}

#[derive(Subcommand)]
enum BenchAction {
    Run {
        /// Directory of problems, each with `problem.toml` and `oracle.py`.
        corpus: PathBuf,
        /// `description-only` or `full-spec`.
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        /// `scripted:SCRIPT` or `http`.
        #[arg(long)]
        backend: Option<String>,
        /// Validation fuzzing seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the JSON report here.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        /// Problems run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Overrides every problem's hidden suite size.
        #[arg(long)]
        hidden_size: Option<usize>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

/// An expected failure: printed, then exit status 1.
struct Failure(String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

struct Out {
    json: bool,
}

impl Out {
    fn emit(&self, value: serde_json::Value, text: impl FnOnce() -> String) {
        let mut stdout = std::io::stdout().lock();
        if self.json {
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&value).expect("json"));
        } else {
            let t = text();
            if !t.is_empty() {
                let _ = writeln!(stdout, "{}", t.trim_end());
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let wants_json = std::env::args().any(|a| a == "--json");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if wants_json {
                let msg = e.render().to_string();
                println!("{}", json!({"ok": false, "error": msg.trim(), "usage": true}));
            } else {
                let _ = e.print();
            }
            return ExitCode::from(2);
        }
    };
    let out = Out { json: cli.json };
    match run(&cli, &out) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure(msg)) => {
            if cli.json {
                println!("{}", json!({"ok": false, "error": msg}));
            } else {
                eprintln!("error: {msg}");
            }
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli, out: &Out) -> Outcome {
    let file = ConfigFile::resolve(cli.config.as_deref())?;
    match &cli.command {
        Command::Version => {
            out.emit(
                json!({
                    "version": env!("CARGO_PKG_VERSION"),
                    "cache_format": CACHE_FORMAT_VERSION,
                    "prompt_templates": TEMPLATE_VERSION,
                    "worker_protocol": PROTOCOL_VERSION,
                }),
                || {
                    format!(
                        "pythoness {} (cache format {CACHE_FORMAT_VERSION}, templates {TEMPLATE_VERSION}, worker protocol {PROTOCOL_VERSION})",
                        env!("CARGO_PKG_VERSION")
                    )
                },
            );
            Ok(true)
        }
        Command::Cache { action } => cache(action, &file, out),
        Command::Splice {
            file: path,
            function,
            all: _,
            dry_run,
            root,
        } => {
            let settings = Settings::resolve(&file, None, root.as_deref())?;
            splice(path, function.as_deref(), *dry_run, &settings, out)
        }
        Command::CheckBackend { backend } => {
            let settings = Settings::resolve(&file, backend.as_deref(), None)?;
            check_backend(&settings, out)
        }
        Command::Synthesize {
            file: path,
            function,
            backend,
            root,
            seed,
        } => {
            let settings = Settings::resolve(&file, backend.as_deref(), root.as_deref())?;
            synthesize(path, function.as_deref(), seed.unwrap_or(settings.fuzz_seed), &settings, out)
        }
        Command::Bench {
            action:
                BenchAction::Run {
                    corpus,
                    mode,
                    backend,
                    seed,
                    report,
                    jobs,
                    hidden_size,
                },
        } => {
            let settings = Settings::resolve(&file, backend.as_deref(), None)?;
            let options = BenchOptions {
                mode: *mode,
                seed: *seed,
                jobs: *jobs,
                runtime: PythonRuntime::default(),
                hidden_size: *hidden_size,
            };
            bench_run(corpus, &settings, &options, report.as_deref(), out)
        }
    }
}

fn cache(action: &CacheAction, file: &ConfigFile, out: &Out) -> Outcome {
    match action {
        CacheAction::List(args) => {
            let settings = Settings::resolve(file, None, args.root.as_deref())?;
            let entries: Vec<_> = settings
                .cache()
                .list()?
                .into_iter()
                .filter(|e| args.function.as_deref().is_none_or(|f| f == e.function_name))
                .collect();
            out.emit(json!(entries), || {
                let mut t = format!("{:<64}  {:<24}  {}\n", "SPEC_HASH", "FUNCTION", "CREATED_AT");
                for e in &entries {
                    t.push_str(&format!(
                        "{:<64}  {:<24}  {}\n",
                        e.spec_hash,
                        e.function_name,
                        e.created_at.format("%Y-%m-%dT%H:%M:%SZ")
                    ));
                }
                t
            });
            Ok(true)
        }
        CacheAction::Clear(args) => {
            let settings = Settings::resolve(file, None, args.root.as_deref())?;
            let removed = settings.cache().clear(args.function.as_deref())?;
            out.emit(json!({"removed": removed}), || format!("removed {removed} record(s)"));
            Ok(true)
        }
    }
}

fn splice(path: &Path, function: Option<&str>, dry_run: bool, settings: &Settings, out: &Out) -> Outcome {
    if !path.is_file() {
        return Err(Failure(format!("file not found: {}", path.display())));
    }
    let target = match function {
        Some(f) => SpliceTarget::Function(f.to_string()),
        None => SpliceTarget::All,
    };
    let report = splice_file(path, &target, &settings.cache(), dry_run)?;
    out.emit(json!(report), || {
        let mut t = String::new();
        if report.nothing_to_do {
            t.push_str(&format!("{}: nothing to do\n", path.display()));
        }
        for f in &report.functions {
            let status = match f.status {
                SpliceStatus::Spliced if dry_run => "would splice",
                SpliceStatus::Spliced => "spliced",
                SpliceStatus::SpliceMiss => "SPLICE_MISS (no cache record)",
                SpliceStatus::SpliceStale => "SPLICE_STALE (header changed since validation)",
            };
            t.push_str(&format!("{}: {status}\n", f.function));
        }
        if let Some(diff) = &report.diff {
            t.push_str(diff);
        }
        if report.spliced() > 0 {
            t.push_str("cache records were kept\n");
        }
        t
    });
    Ok(report.all_spliced())
}

fn check_backend(settings: &Settings, out: &Out) -> Outcome {
    let backend = settings.backend()?;
    let prompt = Prompt {
        system_text: "You are a connectivity check.".into(),
        user_text: "Reply with the single word: ok".into(),
        kind: PromptKind::Generate,
    };
    let started = Instant::now();
    let result = backend.complete(&prompt);
    let latency_ms = started.elapsed().as_millis() as u64;
    match result {
        Ok(text) => {
            out.emit(
                json!({"ok": true, "backend": backend.id(), "latency_ms": latency_ms, "response_chars": text.chars().count()}),
                || format!("{}: ok in {latency_ms} ms", backend.id()),
            );
            Ok(true)
        }
        Err(e) => {
            out.emit(
                json!({"ok": false, "backend": backend.id(), "latency_ms": latency_ms, "error": e.to_string()}),
                || format!("{}: failed after {latency_ms} ms: {e}", backend.id()),
            );
            Ok(false)
        }
    }
}

fn synthesize(path: &Path, function: Option<&str>, seed: u64, settings: &Settings, out: &Out) -> Outcome {
    if !path.is_file() {
        return Err(Failure(format!("file not found: {}", path.display())));
    }
    let module = Module::load(path)?;
    let engine = Engine::new(settings.backend()?)
        .with_cache(settings.cache())
        .with_config(ValidationConfig::with_seed(seed));
    let mut rows = Vec::new();
    let mut all_ok = true;
    for f in module
        .functions
        .iter()
        .filter(|f| function.is_none_or(|n| n == f.spec.name))
    {
        let result = engine.synthesize(&f.spec)?;
        all_ok &= result.status != SynthesisStatus::Failed;
        let failure = (result.status == SynthesisStatus::Failed).then(|| result.failure(&f.spec.name).message);
        rows.push(json!({
            "function": f.spec.name,
            "status": result.status,
            "attempts_used": result.attempts_used,
            "spec_hash": result.spec_hash,
            "code": result.code,
            "error": failure,
        }));
    }
    if let Some(name) = function {
        if rows.is_empty() {
            return Err(Failure(format!("{} has no decorated function `{name}`", path.display())));
        }
    }
    let usage = engine.backend().usage();
    out.emit(json!({"functions": rows, "backend_calls": usage.calls}), || {
        let mut t = String::new();
        for r in &rows {
            t.push_str(&format!(
                "{}: {} after {} attempt(s)\n",
                r["function"].as_str().unwrap_or(""),
                r["status"].as_str().unwrap_or(""),
                r["attempts_used"]
            ));
            if let Some(e) = r["error"].as_str() {
                t.push_str(&format!("  {}\n", e.replace('\n', "\n  ")));
            }
        }
        t.push_str(&format!("backend calls: {}\n", usage.calls));
        t
    });
    Ok(all_ok)
}

fn bench_run(corpus: &Path, settings: &Settings, options: &BenchOptions, report_path: Option<&Path>, out: &Out) -> Outcome {
    let problems = bench::load_corpus(corpus)?;
    let spec = settings.backend.clone();
    let http = settings.http.clone();
    let factory = move |_: &bench::Problem| build_backend(&spec, &http);
    let report = bench::run_bench(&problems, &factory, options)?;
    if let Some(p) = report_path {
        std::fs::write(p, report.to_json())?;
    }
    out.emit(serde_json::to_value(&report).expect("json"), || {
        let mut t = format!(
            "{:<28} {:<17} {:>8} {:>9} {:>8} {:>14}\n",
            "PROBLEM", "MODE", "ATTEMPTS", "ACCEPTED", "VISIBLE", "HIDDEN"
        );
        for p in &report.problems {
            t.push_str(&format!(
                "{:<28} {:<17} {:>8} {:>9} {:>8} {:>14}\n",
                p.name,
                p.mode.as_str(),
                p.attempts,
                p.accepted,
                p.visible_tests_passed,
                format!("{}/{}", p.hidden_passed, p.hidden_total)
            ));
        }
        t
    });
    Ok(true)
}
