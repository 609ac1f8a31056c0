//! Agent evaluation over a validated benchmark and the statistics and
//! reports built from evaluation records.

pub mod agent;
pub mod judge;
pub mod stats;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use agent::{Agent, AgentTurn, LlmAgent, SolverAgent};
pub use judge::judge_answer;
pub use stats::{aggregate, per_dimension_table, runtime_report, solvability, spearman_matrix};

use crate::blueprint::Domain;
use crate::bundle::WebsiteBundle;
use crate::difficulty::{DifficultyVector, OverallLevel};
use crate::error::{ForgeError, Result};
use crate::validation::{AnswerKey, Browser, BrowserAction, DEFAULT_BUDGET};

pub const RESULTS_FILE: &str = "results.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    ScreenshotDom,
    DomOnly,
}

impl std::str::FromStr for Modality {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "screenshot_dom" | "screenshot+dom" => Ok(Modality::ScreenshotDom),
            "dom_only" | "dom" => Ok(Modality::DomOnly),
            other => Err(ForgeError::Config(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub model_id: String,
    pub task_id: String,
    pub modality: Modality,
    pub correct: bool,
    /// Dialogue rounds.
    pub turns: u32,
    /// Browser actions dispatched.
    pub acts: u32,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub step_logging: bool,
    #[serde(default)]
    pub submitted_answer: BTreeMap<String, String>,
    /// Wall-clock seconds.
    pub elapsed: f64,
    /// Set when the run broke for reasons outside the agent's control. Such
    /// records are left out of every accuracy denominator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infra_error: Option<String>,
}

impl EvaluationRecord {
    pub fn counted(&self) -> bool {
        self.infra_error.is_none()
    }
}

/// Index fields of one benchmark task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub domain: Domain,
    pub level: OverallLevel,
    pub difficulty: DifficultyVector,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub records: Vec<EvaluationRecord>,
    pub tasks: BTreeMap<String, TaskInfo>,
}

impl ResultSet {
    /// Fails with the list of record task ids missing from the index.
    pub fn new(records: Vec<EvaluationRecord>, tasks: BTreeMap<String, TaskInfo>) -> Result<Self> {
        let rs = ResultSet { records, tasks };
        rs.check()?;
        Ok(rs)
    }

    pub fn check(&self) -> Result<()> {
        let missing: std::collections::BTreeSet<&str> = self
            .records
            .iter()
            .filter(|r| !self.tasks.contains_key(&r.task_id))
            .map(|r| r.task_id.as_str())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(ForgeError::DanglingTasks(missing.into_iter().map(str::to_owned).collect()))
        }
    }

    /// Model ids in order of first appearance.
    pub fn models(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.model_id) {
                out.push(r.model_id.clone());
            }
        }
        out
    }

    pub fn counted(&self) -> impl Iterator<Item = (&EvaluationRecord, &TaskInfo)> {
        self.records.iter().filter(|r| r.counted()).filter_map(|r| self.tasks.get(&r.task_id).map(|t| (r, t)))
    }

    pub fn infra_failures(&self) -> impl Iterator<Item = &EvaluationRecord> {
        self.records.iter().filter(|r| !r.counted())
    }
}

pub fn write_results(path: &Path, records: &[EvaluationRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<EvaluationRecord>> {
    let f = std::fs::File::open(path).map_err(|_| ForgeError::MissingFile(path.to_path_buf()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| ForgeError::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub modality: Modality,
    /// Browser actions allowed.
    pub budget: u32,
    /// Dialogue rounds allowed, bounding observation-only loops.
    pub max_turns: u32,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            modality: Modality::ScreenshotDom,
            budget: DEFAULT_BUDGET as u32,
            max_turns: 2 * DEFAULT_BUDGET as u32,
        }
    }
}

/// Runs one agent on one task and judges only its final answer. Browser
/// and agent errors produce a record flagged with `infra_error`.
pub fn evaluate_task(
    bundle: &WebsiteBundle,
    browser: &mut dyn Browser,
    agent: &mut dyn Agent,
    opts: EvalOptions,
) -> EvaluationRecord {
    let start = Instant::now();
    let mut rec = EvaluationRecord {
        model_id: agent.model_id().to_string(),
        task_id: bundle.task.task_id.clone(),
        modality: opts.modality,
        correct: false,
        turns: 0,
        acts: 0,
        prompt_tokens: 0,
        completion_tokens: 0,
        step_logging: agent.step_logging(),
        submitted_answer: BTreeMap::new(),
        elapsed: 0.0,
        infra_error: None,
    };
    if let Err(e) = run(bundle, browser, agent, opts, &mut rec) {
        rec.infra_error = Some(e.to_string());
    }
    rec.elapsed = start.elapsed().as_secs_f64();
    rec
}

fn run(
    bundle: &WebsiteBundle,
    browser: &mut dyn Browser,
    agent: &mut dyn Agent,
    opts: EvalOptions,
    rec: &mut EvaluationRecord,
) -> Result<()> {
    if opts.budget == 0 {
        return Ok(());
    }
    let key = AnswerKey::for_bundle(bundle);
    agent.begin(&bundle.task.user_query);
    browser.open("index.html")?;
    let mut last = None;
    while rec.acts < opts.budget && rec.turns < opts.max_turns {
        let obs = browser.observe(opts.modality == Modality::ScreenshotDom)?;
        let turn = agent.turn(&obs, last.as_ref())?;
        rec.turns += 1;
        rec.prompt_tokens += turn.prompt_tokens;
        rec.completion_tokens += turn.completion_tokens;
        match turn.action {
            None => {}
            Some(BrowserAction::Terminate { answers }) => {
                rec.correct = judge_answer(key.answer_type, &answers, &key.expected, &key.code_fields);
                rec.submitted_answer = answers;
                return Ok(());
            }
            Some(action) => {
                last = Some(browser.act(&action)?);
                rec.acts += 1;
            }
        }
    }
    Ok(())
}
