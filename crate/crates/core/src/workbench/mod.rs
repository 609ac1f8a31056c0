//! Run orchestration: benchmark configuration, the plan → generate →
//! refine → validate pipeline, manifest persistence, the environment server
//! and report rendering.

pub mod evaluate;
pub mod report;
pub mod server;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{info, warn};

pub use evaluate::{evaluate_benchmark, AgentSpec, BrowserKind, EvaluateConfig};
pub use report::{report, REPORT_FILES};
pub use server::{serve, serve_bundle, serve_manifest, Mount, ServerHandle};

use crate::blueprint::provider::ProviderRegistry;
use crate::blueprint::{draft_plan_constrained, refine_plan, Domain, LlmProvider, ProviderProfile, ProviderRole, TaskBlueprint};
use crate::bundle::{assemble_bundle, read_json, write_json, StubAssetProvider, WebsiteBundle};
use crate::difficulty::{check_composition, DifficultyVector, Dimension, Level, OverallLevel};
use crate::error::{ForgeError, Result};
use crate::harness::TaskInfo;
use crate::refinement::{default_rules, refine_bundle, NoiseConfig, QualityRule};
use crate::validation::{
    filter_benchmark, replay_solution, FailureMode, PassRateTable, ReplayOptions, SimOptions, ValidatedTask,
    DEFAULT_BUDGET, VERDICT_FILE,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PIPELINE_FILE: &str = "pipeline.json";
pub const PASS_RATES_FILE: &str = "pass_rates.json";
pub const PASS_RATES_MD: &str = "pass_rates.md";
pub const PLAN_FILE: &str = "plan.json";
pub const REFINEMENT_FILE: &str = "refinement.json";
pub const SITE_DIR: &str = "site";
pub const TASKS_DIR: &str = "tasks";
pub const BENCHMARKS_DIR: &str = "benchmarks";

/// Provider ids used by each stage. Unset entries fall back to the first
/// registered provider of the matching role.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderBindings {
    #[serde(default)]
    pub creative: Option<String>,
    #[serde(default)]
    pub precision: Option<String>,
    /// Site generation; defaults to the precision provider.
    #[serde(default)]
    pub generator: Option<String>,
    /// Optional reviewer for the LLM-judged quality rules.
    #[serde(default)]
    pub reviewer: Option<String>,
}

fn default_tasks_per_cell() -> u32 {
    60
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub benchmark_id: Option<String>,
    pub domains: Vec<Domain>,
    pub levels: Vec<OverallLevel>,
    #[serde(default = "default_tasks_per_cell")]
    pub tasks_per_cell: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub providers: ProviderBindings,
    #[serde(default)]
    pub dimension_overrides: BTreeMap<Dimension, Level>,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// Validator action budget.
    #[serde(default = "default_budget")]
    pub budget: usize,
}

impl RunConfig {
    pub fn new(domains: Vec<Domain>, levels: Vec<OverallLevel>, tasks_per_cell: u32, seed: u64) -> Self {
        RunConfig {
            benchmark_id: None,
            domains,
            levels,
            tasks_per_cell,
            seed,
            providers: ProviderBindings::default(),
            dimension_overrides: BTreeMap::new(),
            noise: NoiseConfig::default(),
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ForgeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn benchmark_id(&self) -> String {
        self.benchmark_id.clone().unwrap_or_else(|| format!("forge-{}", self.seed))
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() || self.levels.is_empty() {
            return Err(ForgeError::Config("at least one domain and one level are required".into()));
        }
        if self.tasks_per_cell == 0 {
            return Err(ForgeError::Config("tasks_per_cell must be positive".into()));
        }
        if self.domains.iter().collect::<BTreeSet<_>>().len() != self.domains.len()
            || self.levels.iter().collect::<BTreeSet<_>>().len() != self.levels.len()
        {
            return Err(ForgeError::Config("domains and levels must not repeat".into()));
        }
        if let Some(id) = &self.benchmark_id {
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) || id.starts_with('.') {
                return Err(ForgeError::Config(format!("benchmark id `{id}` is not a safe directory name")));
            }
        }
        for level in &self.levels {
            if !overrides_satisfiable(*level, &self.dimension_overrides) {
                let fixed: Vec<String> =
                    self.dimension_overrides.iter().map(|(d, l)| format!("{}={l}", d.key())).collect();
                return Err(ForgeError::Config(format!(
                    "dimension overrides {} cannot satisfy the {level} composition rule",
                    fixed.join(", ")
                )));
            }
        }
        self.noise.validate()
    }

    /// Task ids in cell order.
    pub fn task_ids(&self) -> Vec<(String, Domain, OverallLevel)> {
        let mut out = Vec::new();
        for d in &self.domains {
            for l in &self.levels {
                for i in 1..=self.tasks_per_cell {
                    out.push((format!("{d}-{l}-{i:03}"), *d, *l));
                }
            }
        }
        out
    }
}

/// Whether some vector agreeing with the pinned dimensions meets the rule.
pub fn overrides_satisfiable(level: OverallLevel, overrides: &BTreeMap<Dimension, Level>) -> bool {
    DifficultyVector::enumerate_all()
        .any(|v| overrides.iter().all(|(d, l)| v.level(*d) == *l) && check_composition(level, &v))
}

/// Per-task seed derived from the run seed by hashing the task id.
pub fn task_seed(run_seed: u64, task_id: &str) -> u32 {
    let h = Sha256::digest(format!("{run_seed}:{task_id}").as_bytes());
    u32::from_be_bytes([h[0], h[1], h[2], h[3]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Plan,
    Generate,
    Refine,
    Validate,
}

/// What happened to one task in the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRun {
    pub task_id: String,
    pub domain: Domain,
    pub level: OverallLevel,
    pub seed: u32,
    pub solvable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_mode: Option<FailureMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<DifficultyVector>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub verdict_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_used: Option<usize>,
}

impl TaskRun {
    fn validated(&self) -> ValidatedTask {
        ValidatedTask {
            task_id: self.task_id.clone(),
            domain: self.domain,
            level: self.level,
            solvable: self.solvable,
            failure_mode: self.failure_mode,
            verdict_digest: self.verdict_digest.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestTask {
    pub task_id: String,
    pub domain: Domain,
    pub level: OverallLevel,
    pub difficulty: DifficultyVector,
    /// Bundle directory relative to the benchmark directory.
    pub bundle: PathBuf,
    pub verdict_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub domain: Domain,
    pub level: OverallLevel,
    pub tasks: u64,
}

/// The tasks that entered the benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub benchmark_id: String,
    pub seed: u64,
    pub tasks: Vec<ManifestTask>,
    pub counts: Vec<CellCount>,
    /// RFC 3339 timestamp; excluded from the digest.
    pub created_at: String,
}

impl BenchmarkManifest {
    pub fn new(benchmark_id: impl Into<String>, seed: u64, tasks: Vec<ManifestTask>) -> Result<Self> {
        if let Some(t) = tasks.iter().find(|t| t.verdict_digest.is_empty()) {
            return Err(ForgeError::Pipeline(format!("task `{}` has no solvable verdict", t.task_id)));
        }
        let mut counts: BTreeMap<(Domain, OverallLevel), u64> = BTreeMap::new();
        for t in &tasks {
            *counts.entry((t.domain, t.level)).or_default() += 1;
        }
        Ok(BenchmarkManifest {
            benchmark_id: benchmark_id.into(),
            seed,
            tasks,
            counts: counts
                .into_iter()
                .map(|((domain, level), tasks)| CellCount { domain, level, tasks })
                .collect(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })
    }

    /// Digest over everything except the creation time.
    pub fn digest(&self) -> String {
        let mut m = self.clone();
        m.created_at.clear();
        hex::encode(Sha256::digest(serde_json::to_vec(&m).expect("manifest serializes")))
    }

    pub fn count(&self, domain: Domain, level: OverallLevel) -> u64 {
        self.counts.iter().find(|c| c.domain == domain && c.level == level).map_or(0, |c| c.tasks)
    }

    pub fn task(&self, task_id: &str) -> Option<&ManifestTask> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    /// Index used to join evaluation records.
    pub fn index(&self) -> BTreeMap<String, TaskInfo> {
        self.tasks
            .iter()
            .map(|t| {
                let info = TaskInfo {
                    domain: t.domain,
                    level: t.level,
                    difficulty: t.difficulty.clone(),
                };
                (t.task_id.clone(), info)
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    /// Loads `manifest.json` from a benchmark directory or a file path.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        if !file.exists() {
            return Err(ForgeError::MissingFile(file));
        }
        read_json(&file)
    }
}

/// Checks the manifest against the verdicts on disk: every listed task has
/// a solvable verdict with the recorded digest, and per-cell counts equal
/// the number of solvable verdicts stored.
pub fn verify_storage(bench_dir: &Path, manifest: &BenchmarkManifest) -> Result<()> {
    let mut stored: BTreeMap<(Domain, OverallLevel), u64> = BTreeMap::new();
    let runs: Vec<TaskRun> = read_json(&bench_dir.join(PIPELINE_FILE))?;
    for run in &runs {
        let path = bench_dir.join(TASKS_DIR).join(&run.task_id).join(VERDICT_FILE);
        if !path.exists() {
            continue;
        }
        let v: crate::validation::Verdict = read_json(&path)?;
        if v.solvable {
            *stored.entry((run.domain, run.level)).or_default() += 1;
            if let Some(t) = manifest.task(&run.task_id) {
                if t.verdict_digest != v.digest() {
                    return Err(ForgeError::Pipeline(format!("verdict of `{}` changed on disk", run.task_id)));
                }
            }
        }
    }
    let listed: BTreeMap<(Domain, OverallLevel), u64> =
        manifest.counts.iter().map(|c| ((c.domain, c.level), c.tasks)).collect();
    if stored != listed {
        return Err(ForgeError::Pipeline(format!(
            "manifest counts {listed:?} differ from stored solvable verdicts {stored:?}"
        )));
    }
    Ok(())
}

/// Providers resolved for each pipeline stage.
#[derive(Clone)]
pub struct StageProviders {
    pub creative: (ProviderProfile, Arc<dyn LlmProvider>),
    pub precision: (ProviderProfile, Arc<dyn LlmProvider>),
    pub generator: (ProviderProfile, Arc<dyn LlmProvider>),
    pub reviewer: Option<(ProviderProfile, Arc<dyn LlmProvider>)>,
}

impl StageProviders {
    pub fn resolve(registry: &ProviderRegistry, bindings: &ProviderBindings) -> Result<Self> {
        let pick = |id: &Option<String>, role: ProviderRole| -> Result<(ProviderProfile, Arc<dyn LlmProvider>)> {
            let found = match id {
                Some(id) => registry
                    .get(id)
                    .ok_or_else(|| ForgeError::Config(format!("provider `{id}` is not configured")))?,
                None => registry
                    .by_role(role)
                    .ok_or_else(|| ForgeError::Config(format!("no {role:?} provider is configured")))?,
            };
            Ok((found.0.clone(), Arc::clone(found.1)))
        };
        let precision = pick(&bindings.precision, ProviderRole::Precision)?;
        let generator = match &bindings.generator {
            Some(_) => pick(&bindings.generator, ProviderRole::Precision)?,
            None => precision.clone(),
        };
        let reviewer = match &bindings.reviewer {
            Some(_) => Some(pick(&bindings.reviewer, ProviderRole::Precision)?),
            None => None,
        };
        Ok(StageProviders {
            creative: pick(&bindings.creative, ProviderRole::Creative)?,
            precision,
            generator,
            reviewer,
        })
    }
}

/// Everything a pipeline run produced.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub dir: PathBuf,
    pub manifest: BenchmarkManifest,
    pub runs: Vec<TaskRun>,
    pub pass_rates: PassRateTable,
}

impl PipelineRun {
    pub fn failures(&self) -> impl Iterator<Item = &TaskRun> {
        self.runs.iter().filter(|r| !r.solvable)
    }
}

/// Directory of a benchmark under a workspace root.
pub fn benchmark_dir(root: &Path, benchmark_id: &str) -> PathBuf {
    root.join(BENCHMARKS_DIR).join(benchmark_id)
}

/// Runs every (domain, level, index) cell through plan, generate, refine
/// and validate on a pool of `workers` threads. A failing stage is recorded
/// on its task and the remaining tasks continue.
pub fn run_pipeline(
    config: &RunConfig,
    providers: &StageProviders,
    root: &Path,
    workers: usize,
) -> Result<PipelineRun> {
    config.validate()?;
    let id = config.benchmark_id();
    let dir = benchmark_dir(root, &id);
    if dir.join(MANIFEST_FILE).exists() || dir.join(TASKS_DIR).exists() {
        return Err(ForgeError::Config(format!("{} already holds a benchmark", dir.display())));
    }
    std::fs::create_dir_all(dir.join(TASKS_DIR))?;
    let rules = default_rules();
    let cells = config.task_ids();
    info!(benchmark = %id, tasks = cells.len(), "pipeline started");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ForgeError::Infrastructure(e.to_string()))?;
    let runs: Vec<TaskRun> = pool.install(|| {
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|(task_id, domain, level)| run_task(config, providers, &rules, &dir, task_id, *domain, *level))
            .collect()
    });

    let validated: Vec<ValidatedTask> = runs.iter().map(TaskRun::validated).collect();
    let filtered = filter_benchmark(&validated)?;
    let tasks = runs
        .iter()
        .filter(|r| r.solvable)
        .map(|r| ManifestTask {
            task_id: r.task_id.clone(),
            domain: r.domain,
            level: r.level,
            difficulty: r.difficulty.clone().expect("solvable tasks have a plan"),
            bundle: Path::new(TASKS_DIR).join(&r.task_id).join(SITE_DIR),
            verdict_digest: r.verdict_digest.clone(),
        })
        .collect();
    let manifest = BenchmarkManifest::new(id, config.seed, tasks)?;
    write_json(&dir.join(PIPELINE_FILE), &runs)?;
    write_json(&dir.join(PASS_RATES_FILE), &filtered.pass_rates)?;
    std::fs::write(dir.join(PASS_RATES_MD), filtered.pass_rates.to_markdown())?;
    manifest.save(&dir)?;
    info!(accepted = filtered.accepted.len(), rejected = filtered.rejected.len(), "pipeline finished");
    Ok(PipelineRun {
        dir,
        manifest,
        runs,
        pass_rates: filtered.pass_rates,
    })
}

fn run_task(
    config: &RunConfig,
    providers: &StageProviders,
    rules: &[QualityRule],
    bench_dir: &Path,
    task_id: &str,
    domain: Domain,
    level: OverallLevel,
) -> TaskRun {
    let seed = task_seed(config.seed, task_id);
    let mut run = TaskRun {
        task_id: task_id.to_string(),
        domain,
        level,
        seed,
        solvable: false,
        failure_mode: None,
        failed_stage: None,
        error: None,
        difficulty: None,
        verdict_digest: String::new(),
        steps_used: None,
    };
    let task_dir = bench_dir.join(TASKS_DIR).join(task_id);
    if let Err((stage, e)) = task_stages(config, providers, rules, &task_dir, &mut run) {
        warn!(task = task_id, ?stage, error = %e, "stage failed");
        run.failed_stage = Some(stage);
        run.error = Some(e.to_string());
    }
    run
}

fn at<T>(stage: Stage, r: Result<T>) -> std::result::Result<T, (Stage, ForgeError)> {
    r.map_err(|e| (stage, e))
}

fn task_stages(
    config: &RunConfig,
    providers: &StageProviders,
    rules: &[QualityRule],
    task_dir: &Path,
    run: &mut TaskRun,
) -> std::result::Result<(), (Stage, ForgeError)> {
    at(Stage::Plan, std::fs::create_dir_all(task_dir).map_err(ForgeError::from))?;
    let plan = at(Stage::Plan, plan_task(config, providers, run.domain, run.level))?;
    at(Stage::Plan, write_json(&task_dir.join(PLAN_FILE), &plan))?;
    run.difficulty = Some(plan.difficulty.clone());

    let (gen_profile, gen) = &providers.generator;
    let mut bundle = at(
        Stage::Generate,
        assemble_bundle(&plan, gen_profile, gen.as_ref(), &StubAssetProvider, &task_dir.join(SITE_DIR), &run.task_id),
    )?;

    let noise = NoiseConfig {
        seed: run.seed,
        ..config.noise.clone()
    };
    let reviewer = providers.reviewer.as_ref().map(|(p, l)| (p, l.as_ref()));
    let report = at(Stage::Refine, refine_bundle(&mut bundle, rules, &noise, reviewer))?;
    at(Stage::Refine, write_json(&task_dir.join(REFINEMENT_FILE), &report))?;

    let opts = ReplayOptions {
        budget: config.budget,
        ..ReplayOptions::default()
    };
    let verdict = at(Stage::Validate, replay_solution(&bundle, SimOptions::default(), opts))?;
    at(Stage::Validate, verdict.save(task_dir))?;
    run.solvable = verdict.solvable;
    run.failure_mode = verdict.failure_mode;
    run.steps_used = Some(verdict.steps_used);
    run.verdict_digest = verdict.digest();
    Ok(())
}

fn plan_task(
    config: &RunConfig,
    providers: &StageProviders,
    domain: Domain,
    level: OverallLevel,
) -> Result<TaskBlueprint> {
    let (cp, creative) = &providers.creative;
    let draft = draft_plan_constrained(domain, level, &config.dimension_overrides, cp, creative.as_ref())?;
    let (pp, precision) = &providers.precision;
    let plan = refine_plan(&draft.plan, pp, precision.as_ref())?.plan;
    if plan.domain != domain || plan.overall_level != level {
        return Err(ForgeError::Pipeline(format!(
            "plan targets {}/{}, the cell is {domain}/{level}",
            plan.domain, plan.overall_level
        )));
    }
    for (d, l) in &config.dimension_overrides {
        if plan.difficulty.level(*d) != *l {
            return Err(ForgeError::Pipeline(format!(
                "plan sets {} to {}, the override requires {l}",
                d.key(),
                plan.difficulty.level(*d)
            )));
        }
    }
    Ok(plan)
}

/// Loads the bundle of a manifest task.
pub fn load_task_bundle(bench_dir: &Path, task: &ManifestTask) -> Result<WebsiteBundle> {
    WebsiteBundle::load(&bench_dir.join(&task.bundle))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn satisfiability_of_overrides() {
        let mut o = BTreeMap::new();
        o.insert(Dimension::RiskFactor, Level::L3);
        assert!(!overrides_satisfiable(Level::L1, &o));
        assert!(overrides_satisfiable(Level::L2, &o));
        assert!(overrides_satisfiable(Level::L3, &o));
        o.insert(Dimension::JumpDepth, Level::L3);
        assert!(!overrides_satisfiable(Level::L2, &o));
        assert!(overrides_satisfiable(Level::L1, &BTreeMap::new()));
    }

    #[test]
    fn task_seeds_are_stable_and_distinct() {
        assert_eq!(task_seed(7, "D1-L3-001"), task_seed(7, "D1-L3-001"));
        assert_ne!(task_seed(7, "D1-L3-001"), task_seed(7, "D1-L3-002"));
        assert_ne!(task_seed(7, "D1-L3-001"), task_seed(8, "D1-L3-001"));
    }

    #[test]
    fn config_parses_and_rejects_bad_values() {
        let cfg = RunConfig::from_toml(
            "domains = [\"D1\"]\nlevels = [3]\ntasks_per_cell = 2\nseed = 5\n[dimension_overrides]\njump_depth = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.task_ids()[1].0, "D1-L3-002");
        assert_eq!(cfg.benchmark_id(), "forge-5");
        assert!(RunConfig::from_toml("domains = [\"D1\"]\nlevels = [1]\n[dimension_overrides]\nrisk_factor = 3\n").is_err());
        assert!(RunConfig::from_toml("domains = []\nlevels = [1]\n").is_err());
        assert!(RunConfig::from_toml("domains = [\"D1\"]\nlevels = [1]\ntasks_per_cell = 0\n").is_err());
        assert!(RunConfig::from_toml("domains = [\"D1\"]\nlevels = [1]\nbenchmark_id = \"../x\"\n").is_err());
    }
}
