use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use forge_core::blueprint::provider::ProviderRegistry;
use forge_core::blueprint::{draft_plan_constrained, refine_plan, Domain, TaskBlueprint};
use forge_core::bundle::{assemble_bundle, read_json, write_json, StubAssetProvider, WebsiteBundle};
use forge_core::difficulty::{dimension_distribution, Level};
use forge_core::harness::{read_results, spearman_matrix, write_results, Modality, RESULTS_FILE};
use forge_core::refinement::{default_rules, load_rules, refine_bundle, NoiseConfig};
use forge_core::validation::{replay_solution, PassRateTable, ReplayOptions, SimOptions, DEFAULT_BUDGET};
use forge_core::workbench::{
    evaluate_benchmark, report, run_pipeline, serve_bundle, serve_manifest, AgentSpec,
    BenchmarkManifest, BrowserKind, EvaluateConfig, RunConfig, StageProviders, PASS_RATES_FILE,
};
use forge_core::{fixtures, ForgeError, Result};

#[derive(Parser)]
#[command(name = "forge", version, about = "Forge, harden, validate, serve and score browser-agent benchmark tasks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Providers file (TOML), or `builtin` for the bundled fixtures.
    #[arg(long, global = true)]
    providers: Option<String>,
    /// Drive a headless Chromium-family browser instead of the simulator.
    #[arg(long, global = true)]
    headless: bool,
    /// Browser binary for --headless.
    #[arg(long, global = true, default_value = "chromium")]
    browser: String,
    /// Workspace root holding `benchmarks/`.
    #[arg(long, global = true, default_value = ".")]
    root: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draft and refine one task plan.
    Plan {
        #[arg(long)]
        domain: Domain,
        #[arg(long)]
        level: Level,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a bundle from a plan, or run the whole pipeline from --config.
    Generate {
        #[arg(long, requires = "out")]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "task-001")]
        task_id: String,
    },
    /// Assess and repair a bundle in place.
    Refine {
        bundle: PathBuf,
        /// Quality rules file; defaults to the built-in rule set.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Replay a bundle's solution and write its verdict.
    Validate {
        bundle: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
        /// Verdict directory; defaults to the bundle's parent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a bundle, or every task of a benchmark under /<task_id>/.
    Serve {
        #[arg(long, conflicts_with = "benchmark", required_unless_present = "benchmark")]
        bundle: Option<PathBuf>,
        #[arg(long)]
        benchmark: Option<PathBuf>,
        #[arg(long, default_value_t = 8000)]
        port: u16,
    },
    /// Run agents on every benchmark task.
    Evaluate {
        #[arg(long)]
        benchmark: PathBuf,
        /// Provider ids, or `scripted` for the reference-solution agent.
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_BUDGET as u32)]
        budget: u32,
        #[arg(long, default_value = "screenshot_dom")]
        modality: Modality,
        /// Results file; defaults to results.jsonl in the benchmark.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render report tables from evaluation results.
    Report {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print pass rates and difficulty statistics of a benchmark.
    Stats {
        #[arg(long)]
        benchmark: PathBuf,
    },
}

fn registry(spec: Option<&str>) -> Result<ProviderRegistry> {
    match spec {
        None => Err(ForgeError::Config("--providers is required (a TOML file or `builtin`)".into())),
        Some("builtin") => Ok(fixtures::builtin_registry()),
        Some(path) => {
            let path = Path::new(path);
            let text = std::fs::read_to_string(path).map_err(|e| ForgeError::Config(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            ProviderRegistry::from_toml(&text, base).map_err(|e| ForgeError::Config(e.to_string()))
        }
    }
}

fn run_config(g: &Global) -> Result<RunConfig> {
    let path = g.config.as_ref().ok_or_else(|| ForgeError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| ForgeError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn noise(g: &Global) -> Result<NoiseConfig> {
    let mut n = match &g.config {
        Some(_) => run_config(g)?.noise,
        None => NoiseConfig::default(),
    };
    if let Some(s) = g.seed {
        n.seed = s as u32;
    }
    Ok(n)
}

fn plan(g: &Global, domain: Domain, level: Level, out: Option<&Path>) -> Result<u8> {
    let reg = registry(g.providers.as_deref())?;
    let overrides = match &g.config {
        Some(_) => run_config(g)?.dimension_overrides,
        None => Default::default(),
    };
    let stages = StageProviders::resolve(&reg, &Default::default())?;
    let draft = draft_plan_constrained(domain, level, &overrides, &stages.creative.0, stages.creative.1.as_ref())?;
    let refined = refine_plan(&draft.plan, &stages.precision.0, stages.precision.1.as_ref())?;
    for w in &refined.warnings {
        eprintln!("warning: {w}");
    }
    match out {
        Some(p) => write_json(p, &refined.plan)?,
        None => println!("{}", serde_json::to_string_pretty(&refined.plan)?),
    }
    Ok(0)
}

fn generate(g: &Global, plan: Option<&Path>, out: Option<&Path>, task_id: &str) -> Result<u8> {
    let reg = registry(g.providers.as_deref())?;
    match plan {
        Some(plan_path) => {
            let plan: TaskBlueprint = read_json(plan_path)?;
            let stages = StageProviders::resolve(&reg, &Default::default())?;
            let (profile, provider) = &stages.generator;
            let out = out.expect("clap requires --out with --plan");
            let b = assemble_bundle(&plan, profile, provider.as_ref(), &StubAssetProvider, out, task_id)?;
            println!("{} files written to {}", b.inventory().total, out.display());
            Ok(0)
        }
        None => {
            let cfg = run_config(g)?;
            let stages = StageProviders::resolve(&reg, &cfg.providers)?;
            let run = run_pipeline(&cfg, &stages, &g.root, g.workers)?;
            println!("{}", run.pass_rates.to_markdown());
            println!("benchmark: {}", run.dir.display());
            println!("manifest digest: {}", run.manifest.digest());
            let failed: Vec<_> = run.failures().collect();
            for f in &failed {
                let why = f.error.clone().or_else(|| f.failure_mode.map(|m| format!("{m:?}"))).unwrap_or_default();
                eprintln!("{}: not admitted ({why})", f.task_id);
            }
            Ok(u8::from(!failed.is_empty()))
        }
    }
}

fn refine(g: &Global, bundle: &Path, rules: Option<&Path>) -> Result<u8> {
    let mut b = WebsiteBundle::load(bundle)?;
    let rules = match rules {
        Some(p) => load_rules(p)?,
        None => default_rules(),
    };
    let report = refine_bundle(&mut b, &rules, &noise(g)?, None)?;
    for f in &report.before.findings {
        println!("found  {:?} {} {}: {}", f.severity, f.rule_id, f.file, f.detail);
    }
    for f in &report.after.findings {
        println!("remain {:?} {} {}: {}", f.severity, f.rule_id, f.file, f.detail);
    }
    println!(
        "{} findings before, {} after; bundle is {}",
        report.before.findings.len(),
        report.after.findings.len(),
        if report.clean() { "clean" } else { "not clean" }
    );
    Ok(u8::from(!report.clean()))
}

fn validate(bundle: &Path, budget: usize, out: Option<&Path>) -> Result<u8> {
    let b = WebsiteBundle::load(bundle)?;
    let opts = ReplayOptions {
        budget,
        ..ReplayOptions::default()
    };
    let v = replay_solution(&b, SimOptions::default(), opts)?;
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => bundle.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    v.save(&dir)?;
    match v.failure_mode {
        None => println!("solvable in {} steps", v.steps_used),
        Some(m) => println!("not solvable: {m:?} after {} steps {}", v.steps_used, v.detail),
    }
    Ok(u8::from(!v.solvable))
}

fn serve(g: &Global, bundle: Option<&Path>, benchmark: Option<&Path>, port: u16) -> Result<u8> {
    let seed = g.seed.unwrap_or(0) as u32;
    let handle = match (bundle, benchmark) {
        (Some(b), _) => serve_bundle(&WebsiteBundle::load(b)?, port, seed)?,
        (None, Some(dir)) => serve_manifest(dir, &BenchmarkManifest::load(dir)?, port, seed)?,
        (None, None) => return Err(ForgeError::Config("--bundle or --benchmark is required".into())),
    };
    println!("serving on {}", handle.base_url());
    handle.wait();
    Ok(0)
}

fn evaluate(g: &Global, bench: &Path, models: &[String], budget: u32, modality: Modality, out: Option<&Path>) -> Result<u8> {
    let manifest = BenchmarkManifest::load(bench)?;
    let needs_registry = models.iter().any(|m| m != "scripted");
    let reg = if needs_registry { registry(g.providers.as_deref())? } else { ProviderRegistry::default() };
    let mut agents = Vec::new();
    for m in models {
        if m == "scripted" {
            agents.push(AgentSpec::Scripted { model_id: m.clone() });
            continue;
        }
        let (profile, provider) = reg.get(m).ok_or_else(|| ForgeError::Config(format!("model `{m}` is not a configured provider")))?;
        agents.push(AgentSpec::Llm {
            model_id: m.clone(),
            profile: profile.clone(),
            provider: Arc::clone(provider),
            step_logging: true,
        });
    }
    let browser = if g.headless {
        BrowserKind::Cdp {
            binary: g.browser.clone(),
            headless: true,
        }
    } else {
        BrowserKind::Simulated {
            action_ms: SimOptions::default().action_ms,
        }
    };
    let cfg = EvaluateConfig {
        opts: forge_core::harness::EvalOptions {
            modality,
            budget,
            max_turns: budget.saturating_mul(2),
        },
        workers: g.workers,
        browser,
        seed: g.seed.unwrap_or(manifest.seed),
    };
    let records = evaluate_benchmark(bench, &manifest, &agents, &cfg)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| bench.join(RESULTS_FILE));
    write_results(&out, &records)?;
    let infra = records.iter().filter(|r| !r.counted()).count();
    let correct = records.iter().filter(|r| r.correct).count();
    println!("{correct}/{} correct, {infra} infrastructure failures, results in {}", records.len(), out.display());
    Ok(u8::from(infra > 0))
}

fn report_cmd(bench: &Path, results: Option<&Path>, out: Option<&Path>) -> Result<u8> {
    let manifest = BenchmarkManifest::load(bench)?;
    let results = results.map(Path::to_path_buf).unwrap_or_else(|| bench.join(RESULTS_FILE));
    let records = read_results(&results)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| bench.join("report"));
    for f in report(&manifest, &records, &out)? {
        println!("{}", f.display());
    }
    Ok(0)
}

fn stats(bench: &Path) -> Result<u8> {
    let manifest = BenchmarkManifest::load(bench)?;
    let rates_path = bench.join(PASS_RATES_FILE);
    if rates_path.exists() {
        let rates: PassRateTable = read_json(&rates_path)?;
        println!("## Pass rates\n\n{}", rates.to_markdown());
    }
    let vectors: Vec<_> = manifest.tasks.iter().map(|t| t.difficulty.clone()).collect();
    println!("## Dimension levels\n\n{}", dimension_distribution(&vectors)?.to_markdown());
    match spearman_matrix(&vectors) {
        Ok(m) => println!("## Dimension correlation\n\n{}", m.to_markdown()),
        Err(ForgeError::Empty(_)) => println!("Too few tasks for a correlation matrix."),
        Err(e) => return Err(e),
    }
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::Plan { domain, level, out } => plan(g, *domain, *level, out.as_deref()),
        Command::Generate { plan, out, task_id } => generate(g, plan.as_deref(), out.as_deref(), task_id),
        Command::Refine { bundle, rules } => refine(g, bundle, rules.as_deref()),
        Command::Validate { bundle, budget, out } => validate(bundle, *budget, out.as_deref()),
        Command::Serve { bundle, benchmark, port } => serve(g, bundle.as_deref(), benchmark.as_deref(), *port),
        Command::Evaluate {
            benchmark,
            models,
            budget,
            modality,
            out,
        } => evaluate(g, benchmark, models, *budget, *modality, out.as_deref()),
        Command::Report { benchmark, results, out } => report_cmd(benchmark, results.as_deref(), out.as_deref()),
        Command::Stats { benchmark } => stats(benchmark),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("FORGE_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

