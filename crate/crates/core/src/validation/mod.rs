//! Validation: replays a task's solution in a browser session under a step
//! budget and classifies the outcome.

pub mod cdp;
pub mod sim;
pub mod solver;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blueprint::{AnswerType, Domain};
use crate::bundle::{SolutionFile, WebsiteBundle};
use crate::difficulty::OverallLevel;
use crate::error::{ForgeError, Result};
use crate::harness::judge::judge_answer;
use crate::logic::{derive, Outcome};
use crate::pct::Ratio;

pub use sim::{SimBrowser, SimOptions};
pub use solver::ScriptedSolver;
pub use cdp::CdpBrowser;

pub const DEFAULT_BUDGET: usize = 50;
pub const DEFAULT_RETRIES: usize = 3;
pub const VERDICT_FILE: &str = "verdict.json";
pub const TRACE_FILE: &str = "trace.jsonl";

/// One element of a DOM snapshot. Interactive elements carry a dense index
/// assigned in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub tag: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, String>,
}

impl DomNode {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub url: String,
    pub title: String,
    pub nodes: Vec<DomNode>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "b64_opt")]
    pub screenshot: Option<Vec<u8>>,
    #[serde(default)]
    pub storage: BTreeMap<String, String>,
}

mod b64_opt {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_some(&base64::engine::general_purpose::STANDARD.encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let v: Option<String> = Option::deserialize(d)?;
        v.map(|s| base64::engine::general_purpose::STANDARD.decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

impl Observation {
    pub fn interactive(&self) -> impl Iterator<Item = &DomNode> {
        self.nodes.iter().filter(|n| n.index.is_some())
    }

    pub fn element(&self, index: usize) -> Option<&DomNode> {
        self.nodes.iter().find(|n| n.index == Some(index))
    }

    /// Digest over url, nodes and storage; screenshots are excluded.
    pub fn digest(&self) -> String {
        let value = serde_json::json!({"url": self.url, "nodes": self.nodes, "storage": self.storage});
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    /// Indented text rendering for agents: `[i] <tag> text` per node.
    pub fn render(&self) -> String {
        let mut out = format!("url: {}\ntitle: {}\n", self.url, self.title);
        for n in &self.nodes {
            match n.index {
                Some(i) => out.push_str(&format!("[{i}] <{}> {}\n", n.tag, n.text)),
                None => out.push_str(&format!("    <{}> {}\n", n.tag, n.text)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScrollTo {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BrowserAction {
    Navigate { url: String },
    Click { index: usize },
    Input { index: usize, text: String },
    Scroll { direction: ScrollTo },
    Back,
    Terminate { answers: BTreeMap<String, String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub message: String,
}

impl ActionOutcome {
    pub fn ok() -> Self {
        Self {
            ok: true,
            message: String::new(),
        }
    }

    pub fn ok_with(message: impl Into<String>) -> Self {
        Self {
            ok: true,
            message: message.into(),
        }
    }

    pub fn fail(message: impl Into<String>) -> Self {
        Self {
            ok: false,
            message: message.into(),
        }
    }
}

/// A browser session. Errors are infrastructure failures; an action that
/// cannot be performed on the page is an unsuccessful [`ActionOutcome`].
pub trait Browser {
    fn open(&mut self, url: &str) -> Result<()>;
    fn observe(&mut self, screenshot: bool) -> Result<Observation>;
    fn act(&mut self, action: &BrowserAction) -> Result<ActionOutcome>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub reasoning: String,
    pub action: BrowserAction,
}

/// The agent side of the observe-reason-act loop.
pub trait Solver {
    fn decide(&mut self, observation: &Observation, last: Option<&ActionOutcome>) -> Result<Decision>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    GtMismatch,
    LogicFlaw,
    RepeatedActionFailure,
    StepBudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub url: String,
    pub observation: String,
    pub reasoning: String,
    pub action: BrowserAction,
    pub outcome: ActionOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub solvable: bool,
    pub steps_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_mode: Option<FailureMode>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<BTreeMap<String, String>>,
    pub trace: Vec<TraceStep>,
}

impl Verdict {
    fn failed(mode: FailureMode, steps_used: usize, detail: impl Into<String>, trace: Vec<TraceStep>) -> Self {
        Verdict {
            solvable: false,
            steps_used,
            failure_mode: Some(mode),
            detail: detail.into(),
            answers: None,
            trace,
        }
    }

    /// Stable digest of the whole verdict.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("verdict serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Writes `verdict.json` and the JSONL trace into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        crate::bundle::write_json(&dir.join(VERDICT_FILE), self)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(TRACE_FILE))?);
        for t in &self.trace {
            let line = serde_json::json!({
                "step": t.step,
                "url": t.url,
                "action": t.action,
                "outcome": t.outcome,
                "reasoning": t.reasoning,
            });
            writeln!(f, "{line}")?;
        }
        f.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetryDecision {
    Continue,
    AbortRepeatedFailure,
}

/// Aborts when the most recent `limit` outcomes are failures of one and the
/// same action.
pub fn retry_gate(history: &[(BrowserAction, ActionOutcome)], limit: usize) -> RetryDecision {
    if limit == 0 || history.len() < limit {
        return RetryDecision::Continue;
    }
    let tail = &history[history.len() - limit..];
    let first = &tail[0].0;
    if tail.iter().all(|(a, o)| !o.ok && a == first) {
        RetryDecision::AbortRepeatedFailure
    } else {
        RetryDecision::Continue
    }
}

/// What a terminate answer is compared against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub answer_type: AnswerType,
    pub expected: BTreeMap<String, String>,
    #[serde(default)]
    pub code_fields: Vec<String>,
}

impl AnswerKey {
    pub fn for_bundle(bundle: &WebsiteBundle) -> Self {
        AnswerKey {
            answer_type: bundle.answer.answer_type,
            expected: bundle.solution.expected_final_state.clone(),
            code_fields: bundle.solution.judge.code_field.iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayOptions {
    pub budget: usize,
    pub retries: usize,
    pub screenshots: bool,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            budget: DEFAULT_BUDGET,
            retries: DEFAULT_RETRIES,
            screenshots: false,
        }
    }
}

/// The observe-reason-act loop. Every dispatched action, terminate
/// included, uses one step.
pub fn run_episode(
    browser: &mut dyn Browser,
    solver: &mut dyn Solver,
    start_url: &str,
    key: &AnswerKey,
    opts: ReplayOptions,
) -> Result<Verdict> {
    let mut trace = Vec::new();
    let mut history: Vec<(BrowserAction, ActionOutcome)> = Vec::new();
    browser.open(start_url)?;
    let mut last: Option<ActionOutcome> = None;
    let mut steps = 0;
    while steps < opts.budget {
        let obs = browser.observe(opts.screenshots)?;
        let decision = solver.decide(&obs, last.as_ref())?;
        steps += 1;
        if let BrowserAction::Terminate { answers } = &decision.action {
            let ok = judge_answer(key.answer_type, answers, &key.expected, &key.code_fields);
            trace.push(TraceStep {
                step: steps,
                url: obs.url.clone(),
                observation: obs.digest(),
                reasoning: decision.reasoning.clone(),
                action: decision.action.clone(),
                outcome: ActionOutcome::ok(),
            });
            let mut v = if ok {
                Verdict {
                    solvable: true,
                    steps_used: steps,
                    failure_mode: None,
                    detail: String::new(),
                    answers: None,
                    trace,
                }
            } else {
                let diff: Vec<String> = key
                    .expected
                    .iter()
                    .filter(|(f, want)| answers.get(*f) != Some(*want))
                    .map(|(f, want)| format!("{f}: got {:?}, expected {want:?}", answers.get(f)))
                    .collect();
                Verdict::failed(FailureMode::GtMismatch, steps, diff.join("; "), trace)
            };
            v.answers = Some(answers.clone());
            return Ok(v);
        }
        let outcome = browser.act(&decision.action)?;
        trace.push(TraceStep {
            step: steps,
            url: obs.url.clone(),
            observation: obs.digest(),
            reasoning: decision.reasoning,
            action: decision.action.clone(),
            outcome: outcome.clone(),
        });
        history.push((decision.action, outcome.clone()));
        if retry_gate(&history, opts.retries) == RetryDecision::AbortRepeatedFailure {
            let detail = format!("action failed {} times in a row: {}", opts.retries, outcome.message);
            return Ok(Verdict::failed(FailureMode::RepeatedActionFailure, steps, detail, trace));
        }
        last = Some(outcome);
    }
    Ok(Verdict::failed(
        FailureMode::StepBudgetExceeded,
        steps,
        format!("no answer within {} actions", opts.budget),
        trace,
    ))
}

/// Replays the bundle's solution in the simulated browser with the
/// scripted solver. The solution's logic is checked first.
pub fn replay_solution(bundle: &WebsiteBundle, sim: SimOptions, opts: ReplayOptions) -> Result<Verdict> {
    if let LogicCheck::LogicFlaw(detail) = check_solution_logic(&bundle.solution) {
        return Ok(Verdict::failed(FailureMode::LogicFlaw, 0, detail, Vec::new()));
    }
    let mut browser = SimBrowser::new(&bundle.root, sim);
    let mut solver = ScriptedSolver::new(&bundle.solution.steps);
    run_episode(&mut browser, &mut solver, "index.html", &AnswerKey::for_bundle(bundle), opts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "detail", rename_all = "snake_case")]
pub enum LogicCheck {
    Ok,
    LogicFlaw(String),
}

/// Executes the solution's derivations on its intended state and checks
/// them against the expected final state. The intended state must also
/// reach the correct judge outcome.
pub fn check_solution_logic(solution: &SolutionFile) -> LogicCheck {
    let judge = &solution.judge;
    if judge.rules.is_empty() && judge.derivations.is_empty() {
        return LogicCheck::Ok;
    }
    if !judge.rules.is_empty() {
        match judge.match_rule(&solution.intended_state).map(|r| &r.outcome) {
            Some(Outcome::Correct) => {}
            Some(Outcome::Deceptive(p)) => {
                return LogicCheck::LogicFlaw(format!("intended state triggers mistake pattern `{p}`"))
            }
            None => return LogicCheck::LogicFlaw("no judge rule matches the intended state".into()),
        }
    }
    let derived = match derive(&judge.derivations, &solution.intended_state) {
        Ok(d) => d,
        Err(e) => return LogicCheck::LogicFlaw(format!("derivation failed: {e}")),
    };
    for (field, value) in &derived {
        if let Some(expected) = solution.expected_final_state.get(field) {
            if expected != value {
                return LogicCheck::LogicFlaw(format!("`{field}` derives to {value}, expected {expected}"));
            }
        }
    }
    LogicCheck::Ok
}

/// A task that went through validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedTask {
    pub task_id: String,
    pub domain: Domain,
    pub level: OverallLevel,
    pub solvable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_mode: Option<FailureMode>,
    pub verdict_digest: String,
}

/// Pass rates by domain and level.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassRateTable {
    #[serde(with = "cell_list")]
    pub cells: BTreeMap<(Domain, OverallLevel), Ratio>,
}

mod cell_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::blueprint::Domain;
    use crate::difficulty::OverallLevel;
    use crate::pct::Ratio;

    #[derive(Serialize, Deserialize)]
    struct Cell {
        domain: Domain,
        level: OverallLevel,
        passed: u64,
        attempted: u64,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<(Domain, OverallLevel), Ratio>, s: S) -> Result<S::Ok, S::Error> {
        let cells: Vec<Cell> = m
            .iter()
            .map(|((domain, level), r)| Cell {
                domain: *domain,
                level: *level,
                passed: r.hits,
                attempted: r.total,
            })
            .collect();
        cells.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(Domain, OverallLevel), Ratio>, D::Error> {
        let cells: Vec<Cell> = Vec::deserialize(d)?;
        Ok(cells.into_iter().map(|c| ((c.domain, c.level), Ratio::new(c.passed, c.attempted))).collect())
    }
}

impl PassRateTable {
    pub fn cell(&self, domain: Domain, level: OverallLevel) -> Ratio {
        self.cells.get(&(domain, level)).copied().unwrap_or_default()
    }

    pub fn domain_total(&self, domain: Domain) -> Ratio {
        self.cells.iter().filter(|((d, _), _)| *d == domain).fold(Ratio::default(), |a, (_, r)| a.merge(*r))
    }

    pub fn level_total(&self, level: OverallLevel) -> Ratio {
        self.cells.iter().filter(|((_, l), _)| *l == level).fold(Ratio::default(), |a, (_, r)| a.merge(*r))
    }

    pub fn overall(&self) -> Ratio {
        self.cells.values().fold(Ratio::default(), |a, r| a.merge(*r))
    }

    /// `count (rate)` cells, one row per domain present plus a total row.
    pub fn to_markdown(&self) -> String {
        use crate::difficulty::Level;
        let fmt = |r: Ratio| match r.render() {
            Some(p) => format!("{} ({p})", r.hits),
            None => "-".to_string(),
        };
        let mut out = String::from("| Domain | L1 | L2 | L3 | Total |\n|---|---|---|---|---|\n");
        let domains: std::collections::BTreeSet<Domain> = self.cells.keys().map(|(d, _)| *d).collect();
        for d in domains {
            out.push_str(&format!("| {:?}: {} |", d, d.name()));
            for l in Level::ALL {
                out.push_str(&format!(" {} |", fmt(self.cell(d, l))));
            }
            out.push_str(&format!(" {} |\n", fmt(self.domain_total(d))));
        }
        out.push_str("| Total |");
        for l in Level::ALL {
            out.push_str(&format!(" {} |", fmt(self.level_total(l))));
        }
        out.push_str(&format!(" {} |\n", fmt(self.overall())));
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterResult {
    pub accepted: Vec<ValidatedTask>,
    pub rejected: Vec<ValidatedTask>,
    pub pass_rates: PassRateTable,
}

/// Keeps solvable tasks and tabulates pass rates by (domain, level).
pub fn filter_benchmark(tasks: &[ValidatedTask]) -> Result<FilterResult> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = FilterResult::default();
    for t in tasks {
        if !seen.insert(t.task_id.as_str()) {
            return Err(ForgeError::Config(format!("task `{}` has more than one verdict", t.task_id)));
        }
        out.pass_rates.cells.entry((t.domain, t.level)).or_default().add(t.solvable);
        if t.solvable {
            out.accepted.push(t.clone());
        } else {
            out.rejected.push(t.clone());
        }
    }
    Ok(out)
}
