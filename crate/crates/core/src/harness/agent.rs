//! Agents under test. An agent sees observations and may take one browser
//! action per dialogue turn, or none.

use std::sync::Arc;

use serde::Deserialize;

use crate::blueprint::{LlmProvider, ProviderProfile};
use crate::blueprint::provider::CompletionRequest;
use crate::error::Result;
use crate::validation::{ActionOutcome, BrowserAction, Observation, Solver};

/// One dialogue round. `action: None` is an observation-only turn.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTurn {
    pub reasoning: String,
    pub action: Option<BrowserAction>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

pub trait Agent {
    fn model_id(&self) -> &str;

    /// Whether the agent records per-step observation/reasoning/action.
    fn step_logging(&self) -> bool {
        true
    }

    fn begin(&mut self, _instruction: &str) {}

    fn turn(&mut self, observation: &Observation, last: Option<&ActionOutcome>) -> Result<AgentTurn>;
}

/// Runs any validator solver as an agent with zero token usage.
pub struct SolverAgent<S> {
    model_id: String,
    solver: S,
}

impl<S: Solver> SolverAgent<S> {
    pub fn new(model_id: impl Into<String>, solver: S) -> Self {
        SolverAgent {
            model_id: model_id.into(),
            solver,
        }
    }
}

impl<S: Solver> Agent for SolverAgent<S> {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn turn(&mut self, observation: &Observation, last: Option<&ActionOutcome>) -> Result<AgentTurn> {
        let d = self.solver.decide(observation, last)?;
        Ok(AgentTurn {
            reasoning: d.reasoning,
            action: Some(d.action),
            prompt_tokens: 0,
            completion_tokens: 0,
        })
    }
}

pub const AGENT_SYSTEM: &str = "You operate a web browser to complete a task. Each turn you receive the page \
as a list of elements; interactive ones carry an index in brackets. Reply with one JSON object: \
{\"observation\": str, \"reasoning\": str, \"action\": A} where A is one of \
{\"kind\":\"click\",\"index\":n}, {\"kind\":\"input\",\"index\":n,\"text\":str}, \
{\"kind\":\"navigate\",\"url\":str}, {\"kind\":\"scroll\",\"direction\":\"up\"|\"down\"}, {\"kind\":\"back\"}, \
{\"kind\":\"terminate\",\"answers\":{field: value}}, or null to only observe.";

#[derive(Deserialize)]
struct Reply {
    #[serde(default)]
    reasoning: String,
    #[serde(default)]
    action: Option<BrowserAction>,
}

/// Extracts the first top-level JSON object from free text.
fn json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// An agent backed by a text completion provider.
pub struct LlmAgent {
    model_id: String,
    provider: Arc<dyn LlmProvider>,
    profile: ProviderProfile,
    step_logging: bool,
    instruction: String,
    history: Vec<String>,
}

impl LlmAgent {
    pub fn new(model_id: impl Into<String>, provider: Arc<dyn LlmProvider>, profile: ProviderProfile) -> Self {
        LlmAgent {
            model_id: model_id.into(),
            provider,
            profile,
            step_logging: true,
            instruction: String::new(),
            history: Vec::new(),
        }
    }

    pub fn without_step_logging(mut self) -> Self {
        self.step_logging = false;
        self
    }

    fn prompt(&self, obs: &Observation, last: Option<&ActionOutcome>) -> String {
        let mut p = format!("Task: {}\n\n", self.instruction);
        if !self.history.is_empty() {
            p.push_str("Previous actions:\n");
            for h in &self.history {
                p.push_str(&format!("- {h}\n"));
            }
            p.push('\n');
        }
        if let Some(o) = last {
            p.push_str(&format!("Last outcome: {}{}\n\n", if o.ok { "ok" } else { "failed" }, if o.message.is_empty() { String::new() } else { format!(" ({})", o.message) }));
        }
        if let Some(shot) = &obs.screenshot {
            p.push_str(&format!("[screenshot attached: image/png, {} bytes]\n", shot.len()));
        }
        p.push_str(&obs.render());
        p
    }
}

impl Agent for LlmAgent {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn step_logging(&self) -> bool {
        self.step_logging
    }

    fn begin(&mut self, instruction: &str) {
        self.instruction = instruction.to_string();
        self.history.clear();
    }

    fn turn(&mut self, observation: &Observation, last: Option<&ActionOutcome>) -> Result<AgentTurn> {
        let req = CompletionRequest::new(&self.profile, AGENT_SYSTEM, self.prompt(observation, last));
        let c = self.provider.complete(&req)?;
        let reply: Option<Reply> = json_object(&c.text).and_then(|j| serde_json::from_str(j).ok());
        let (reasoning, action) = match reply {
            Some(r) => (r.reasoning, r.action),
            None => ("unparseable reply".to_string(), None),
        };
        if let Some(a) = &action {
            self.history.push(serde_json::to_string(a)?);
        }
        Ok(AgentTurn {
            reasoning,
            action,
            prompt_tokens: c.prompt_tokens,
            completion_tokens: c.completion_tokens,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blueprint::provider::{ScriptRule, ScriptedProvider};
    use std::collections::BTreeMap;

    fn obs() -> Observation {
        Observation {
            url: "index.html".into(),
            title: "Home".into(),
            nodes: Vec::new(),
            screenshot: None,
            storage: BTreeMap::new(),
        }
    }

    #[test]
    fn llm_agent_parses_actions_and_tolerates_noise() {
        let replies = vec![
            "Sure. {\"reasoning\": \"open\", \"action\": {\"kind\": \"click\", \"index\": 2}}".to_string(),
            "I am not sure".to_string(),
            "{\"reasoning\": \"look\", \"action\": null}".to_string(),
        ];
        let provider = Arc::new(ScriptedProvider::new("m", vec![ScriptRule::new(&["Task:"], replies)]));
        let mut a = LlmAgent::new("m", provider, ProviderProfile::precision("m"));
        a.begin("find it");
        let t = a.turn(&obs(), None).unwrap();
        assert_eq!(t.action, Some(BrowserAction::Click { index: 2 }));
        assert!(t.prompt_tokens > 0);
        assert_eq!(a.turn(&obs(), None).unwrap().action, None);
        assert_eq!(a.turn(&obs(), None).unwrap().reasoning, "look");
    }
}
