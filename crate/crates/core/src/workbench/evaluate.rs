//! Parallel agent evaluation over a benchmark manifest. Each task runs in
//! its own browser session; in CDP mode each also gets its own server on an
//! ephemeral port.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::{load_task_bundle, serve_bundle, task_seed, BenchmarkManifest, ManifestTask};
use crate::blueprint::{LlmProvider, ProviderProfile};
use crate::error::{ForgeError, Result};
use crate::harness::{evaluate_task, Agent, EvalOptions, EvaluationRecord, LlmAgent, SolverAgent};
use crate::validation::{Browser, CdpBrowser, ScriptedSolver, SimBrowser, SimOptions};

/// An agent under test, instantiated afresh for every task.
#[derive(Clone)]
pub enum AgentSpec {
    /// Replays each bundle's reference solution.
    Scripted { model_id: String },
    Llm {
        model_id: String,
        profile: ProviderProfile,
        provider: Arc<dyn LlmProvider>,
        step_logging: bool,
    },
}

impl AgentSpec {
    pub fn model_id(&self) -> &str {
        match self {
            AgentSpec::Scripted { model_id } | AgentSpec::Llm { model_id, .. } => model_id,
        }
    }

    fn build(&self, bundle: &crate::bundle::WebsiteBundle) -> Box<dyn Agent> {
        match self {
            AgentSpec::Scripted { model_id } => {
                Box::new(SolverAgent::new(model_id.clone(), ScriptedSolver::new(&bundle.solution.steps)))
            }
            AgentSpec::Llm {
                model_id,
                profile,
                provider,
                step_logging,
            } => {
                let a = LlmAgent::new(model_id.clone(), Arc::clone(provider), profile.clone());
                Box::new(if *step_logging { a } else { a.without_step_logging() })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BrowserKind {
    Simulated { action_ms: u64 },
    /// A Chromium-family binary driven over the DevTools protocol.
    Cdp { binary: String, headless: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluateConfig {
    pub opts: EvalOptions,
    pub workers: usize,
    pub browser: BrowserKind,
    /// Run seed; each task's noise seed is derived from it.
    pub seed: u64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            opts: EvalOptions::default(),
            workers: 1,
            browser: BrowserKind::Simulated {
                action_ms: SimOptions::default().action_ms,
            },
            seed: 0,
        }
    }
}

fn infra_record(agent: &AgentSpec, task: &ManifestTask, cfg: &EvaluateConfig, e: ForgeError) -> EvaluationRecord {
    EvaluationRecord {
        model_id: agent.model_id().to_string(),
        task_id: task.task_id.clone(),
        modality: cfg.opts.modality,
        correct: false,
        turns: 0,
        acts: 0,
        prompt_tokens: 0,
        completion_tokens: 0,
        step_logging: !matches!(agent, AgentSpec::Llm { step_logging: false, .. }),
        submitted_answer: BTreeMap::new(),
        elapsed: 0.0,
        infra_error: Some(e.to_string()),
    }
}

fn evaluate_one(bench_dir: &Path, task: &ManifestTask, agent: &AgentSpec, cfg: &EvaluateConfig) -> Result<EvaluationRecord> {
    let bundle = load_task_bundle(bench_dir, task)?;
    let seed = task_seed(cfg.seed, &task.task_id);
    let mut a = agent.build(&bundle);
    match &cfg.browser {
        BrowserKind::Simulated { action_ms } => {
            let opts = SimOptions {
                action_ms: *action_ms,
                seed: Some(seed),
            };
            let mut b = SimBrowser::new(&bundle.root, opts);
            Ok(evaluate_task(&bundle, &mut b, a.as_mut(), cfg.opts))
        }
        BrowserKind::Cdp { binary, headless } => {
            let server = serve_bundle(&bundle, 0, seed)?;
            let mut b = CdpBrowser::launch(binary, *headless, &server.base_url())?;
            let rec = evaluate_task(&bundle, &mut b as &mut dyn Browser, a.as_mut(), cfg.opts);
            drop(b);
            drop(server);
            Ok(rec)
        }
    }
}

/// Evaluates every agent on every manifest task. Records come back in
/// (agent, task) order regardless of scheduling.
pub fn evaluate_benchmark(
    bench_dir: &Path,
    manifest: &BenchmarkManifest,
    agents: &[AgentSpec],
    cfg: &EvaluateConfig,
) -> Result<Vec<EvaluationRecord>> {
    let pairs: Vec<(&AgentSpec, &ManifestTask)> =
        agents.iter().flat_map(|a| manifest.tasks.iter().map(move |t| (a, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| ForgeError::Infrastructure(e.to_string()))?;
    Ok(pool.install(|| {
        pairs
            .par_iter()
            .map(|(a, t)| evaluate_one(bench_dir, t, a, cfg).unwrap_or_else(|e| infra_record(a, t, cfg, e)))
            .collect()
    }))
}
