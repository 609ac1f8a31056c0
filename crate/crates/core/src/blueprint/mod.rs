//! Task blueprints: the structured plan a task is built from, its JSON
//! contract with LLM providers, and the two-stage planning agent.

pub mod plan;
pub mod provider;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::difficulty::{check_composition, DifficultyVector, OverallLevel};
use crate::error::{ForgeError, Result};

pub use plan::{draft_plan, draft_plan_constrained, modification_ratio, refine_plan, DraftOutcome, RefineOutcome};
pub use provider::{LlmProvider, ProviderProfile, ProviderRole};

/// The seven task domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    D1,
    D2,
    D3,
    D4,
    D5,
    D6,
    D7,
}

impl Domain {
    pub const ALL: [Domain; 7] = [
        Domain::D1,
        Domain::D2,
        Domain::D3,
        Domain::D4,
        Domain::D5,
        Domain::D6,
        Domain::D7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Domain::D1 => "Consumer Transaction/Service",
            Domain::D2 => "Content Moderation/Compliance",
            Domain::D3 => "Enterprise Process/Collaboration",
            Domain::D4 => "Info Retrieval/Analysis",
            Domain::D5 => "Platform Management/Ops",
            Domain::D6 => "Tool Usage",
            Domain::D7 => "Content Creation/Publishing",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}", self.index() + 1)
    }
}

impl FromStr for Domain {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Domain::ALL
            .into_iter()
            .find(|d| d.to_string().eq_ignore_ascii_case(t) || d.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| ForgeError::Parse(format!("unknown domain `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageDesign {
    pub page_id: String,
    pub route: String,
    pub purpose: String,
    #[serde(default)]
    pub key_content: String,
    #[serde(default)]
    pub distractors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Navigate,
    Observe,
    VisualAnalysis,
    Reasoning,
    FormInput,
    Click,
    Verify,
    ReadAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionStep {
    pub ordinal: u32,
    pub description: String,
    pub kind: StepKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    DirectAnswer,
    OperationCode,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingTier {
    pub condition: String,
    pub credit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSpec {
    pub answer_type: AnswerType,
    pub ground_truth_fields: BTreeMap<String, String>,
    /// Fields compared by exact match when the answer type is `mixed`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub code_fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grading_tiers: Option<Vec<GradingTier>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBlueprint {
    #[serde(default)]
    pub title: String,
    pub user_query: String,
    pub domain: Domain,
    pub overall_level: OverallLevel,
    pub difficulty: DifficultyVector,
    pub pages: Vec<PageDesign>,
    pub solution: Vec<SolutionStep>,
    pub answer: AnswerSpec,
    #[serde(default)]
    pub qa_notes: String,
}

impl TaskBlueprint {
    pub fn composition_ok(&self) -> bool {
        check_composition(self.overall_level, &self.difficulty)
    }

    /// Structural invariants; the composition rule is checked only when
    /// `enforce_composition` is set (drafts may violate it).
    pub fn validate(&self, enforce_composition: bool) -> Result<()> {
        let bad = |msg: String| Err(ForgeError::Parse(msg));
        if self.pages.is_empty() {
            return bad("web environment design has no pages".into());
        }
        if self.solution.is_empty() {
            return bad("solution path is empty".into());
        }
        if self.answer.ground_truth_fields.is_empty() {
            return bad("answer configuration has no ground-truth fields".into());
        }
        let mut ids = HashSet::new();
        let mut routes = HashSet::new();
        for p in &self.pages {
            if !ids.insert(p.page_id.as_str()) {
                return bad(format!("duplicate page id `{}`", p.page_id));
            }
            if !routes.insert(p.route.as_str()) {
                return bad(format!("duplicate route `{}`", p.route));
            }
        }
        for (i, step) in self.solution.iter().enumerate() {
            if step.ordinal as usize != i + 1 {
                return bad(format!(
                    "solution ordinals must be contiguous from 1 (step {} has ordinal {})",
                    i + 1,
                    step.ordinal
                ));
            }
        }
        if self.answer.answer_type == AnswerType::Mixed && self.answer.ground_truth_fields.len() < 2 {
            return bad("mixed answers need at least two ground-truth fields".into());
        }
        if let Some(tiers) = &self.answer.grading_tiers {
            if let Some(t) = tiers.iter().find(|t| !(t.credit > 0.0 && t.credit <= 1.0)) {
                return bad(format!("grading tier credit {} outside (0, 1]", t.credit));
            }
        }
        if enforce_composition && !self.composition_ok() {
            return Err(ForgeError::Pipeline(format!(
                "difficulty vector violates the composition rule for level {}",
                self.overall_level
            )));
        }
        Ok(())
    }
}

/// Canonical textual form: a fenced JSON block.
pub fn serialize_blueprint(plan: &TaskBlueprint) -> String {
    let json = serde_json::to_string_pretty(plan).expect("blueprint serializes");
    format!("```json\n{json}\n```\n")
}

/// Returns the body of the first fenced code block (preferring one tagged
/// `json`), or `None` when the text has no fence.
pub fn extract_fenced_json(text: &str) -> Option<&str> {
    let start = text.find("```json").map(|i| i + 7).or_else(|| text.find("```").map(|i| i + 3))?;
    let rest = &text[start..];
    let body_start = rest.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &rest[body_start..];
    let end = body.find("```")?;
    Some(body[..end].trim())
}

const MANDATORY_SECTIONS: [(&str, &str); 7] = [
    ("user_query", "user query missing"),
    ("domain", "domain missing"),
    ("overall_level", "overall level missing"),
    ("difficulty", "difficulty configuration missing"),
    ("pages", "web environment design missing"),
    ("solution", "solution path missing"),
    ("answer", "answer configuration missing"),
];

/// Parses provider output. Only the fenced JSON block is read; composition
/// is not enforced here.
pub fn parse_blueprint(text: &str) -> Result<TaskBlueprint> {
    let body = extract_fenced_json(text)
        .ok_or_else(|| ForgeError::Parse("no fenced JSON block in provider output".into()))?;
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| ForgeError::Parse(format!("invalid blueprint JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ForgeError::Parse("blueprint must be a JSON object".into()))?;
    for (key, message) in MANDATORY_SECTIONS {
        if obj.get(key).map_or(true, |v| v.is_null()) {
            return Err(ForgeError::Parse(message.into()));
        }
    }
    let plan: TaskBlueprint = serde_json::from_value(value)
        .map_err(|e| ForgeError::Parse(format!("blueprint does not match the schema: {e}")))?;
    plan.validate(false)?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn refined_walkthrough_plan_has_seventeen_steps() {
        let plan = parse_blueprint(fixtures::wedding::REFINED_PLAN).unwrap();
        assert_eq!(plan.solution.len(), 17);
        assert_eq!(plan.pages.len(), 8);
        assert!(plan.composition_ok());
    }

    #[test]
    fn missing_difficulty_is_named() {
        let text = "```json\n{\"user_query\":\"q\",\"domain\":\"D1\",\"overall_level\":1,\"pages\":[],\"solution\":[],\"answer\":{}}\n```";
        let err = parse_blueprint(text).unwrap_err();
        assert!(err.to_string().contains("difficulty configuration missing"), "{err}");
    }

    #[test]
    fn prose_without_fence_is_rejected() {
        assert!(parse_blueprint("Here is my plan: book a venue.").is_err());
        assert!(parse_blueprint("").is_err());
    }

    #[test]
    fn fenced_block_is_preferred_over_prose() {
        let plan = parse_blueprint(fixtures::lookup::DRAFT_PLAN).unwrap();
        let again = parse_blueprint(&serialize_blueprint(&plan)).unwrap();
        assert_eq!(plan, again);
    }

    #[test]
    fn domain_parsing() {
        assert_eq!("d4".parse::<Domain>().unwrap(), Domain::D4);
        assert_eq!("Tool Usage".parse::<Domain>().unwrap(), Domain::D6);
        assert!("D8".parse::<Domain>().is_err());
    }
}
