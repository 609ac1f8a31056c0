//! `solution.json`: the concrete replay script and the expected final state.
//! Read by the validator only; the environment server never serves it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::logic::{JudgeProgram, State};

pub const MAX_SOLUTION_STEPS: usize = 50;

/// How a step locates an element. All present criteria must match; `nth`
/// picks among several matches in document order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// `data-forge-field` of a form control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// `value` attribute, used to pick a radio option.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    /// `data-forge-bind` of a display element.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bind: Option<String>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub nth: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl Target {
    pub fn text(text: &str) -> Self {
        Target {
            text: Some(text.into()),
            ..Default::default()
        }
    }

    pub fn index(index: usize) -> Self {
        Target {
            index: Some(index),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScrollDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SolutionAction {
    Navigate {
        url: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Click {
        target: Target,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Input {
        target: Target,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Scroll {
        direction: ScrollDirection,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Back {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    /// Copies an element's text into the answer map. Not a browser action.
    Read {
        field: String,
        target: Target,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    /// Ends the episode. `answers` override values collected by `read`.
    Terminate {
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        answers: BTreeMap<String, String>,
    },
}

impl SolutionAction {
    pub fn note(&self) -> Option<&str> {
        match self {
            SolutionAction::Navigate { note, .. }
            | SolutionAction::Click { note, .. }
            | SolutionAction::Input { note, .. }
            | SolutionAction::Scroll { note, .. }
            | SolutionAction::Back { note }
            | SolutionAction::Read { note, .. } => note.as_deref(),
            SolutionAction::Terminate { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Date,
    Integer,
    Choice,
    Text,
}

/// Declaration of one submission-state field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub steps: Vec<SolutionAction>,
    pub expected_final_state: BTreeMap<String, String>,
    #[serde(default)]
    pub submission_schema: Vec<FieldDecl>,
    /// The workflow state the solution path accumulates.
    #[serde(default)]
    pub intended_state: State,
    #[serde(default)]
    pub judge: JudgeProgram,
}

impl SolutionFile {
    pub fn validate(&self) -> Result<()> {
        if self.steps.len() > MAX_SOLUTION_STEPS {
            return Err(ForgeError::Parse(format!(
                "solution has {} steps, more than {MAX_SOLUTION_STEPS}",
                self.steps.len()
            )));
        }
        if !matches!(self.steps.last(), Some(SolutionAction::Terminate { .. })) {
            return Err(ForgeError::Parse("solution must end with a terminate step".into()));
        }
        if !self.judge.rules.is_empty() && !self.judge.has_catch_all() {
            return Err(ForgeError::Parse("judge rules must end with a catch-all".into()));
        }
        Ok(())
    }

    /// Validates a state against the submission schema.
    pub fn conforms(&self, state: &State) -> std::result::Result<(), String> {
        for decl in &self.submission_schema {
            let value = state.get(&decl.name).map(String::as_str).unwrap_or("");
            match decl.kind {
                FieldKind::Date => {
                    if crate::logic::parse_iso_date(value).is_none() {
                        return Err(format!("{}: `{value}` is not an ISO date", decl.name));
                    }
                }
                FieldKind::Integer => {
                    let n: i64 = value
                        .trim()
                        .parse()
                        .map_err(|_| format!("{}: `{value}` is not an integer", decl.name))?;
                    let bound = |b: &Option<String>| b.as_deref().and_then(|s| s.parse::<i64>().ok());
                    if bound(&decl.min).is_some_and(|m| n < m) || bound(&decl.max).is_some_and(|m| n > m) {
                        return Err(format!("{}: {n} is out of range", decl.name));
                    }
                }
                FieldKind::Choice => {
                    if !decl.choices.iter().any(|c| c == value) {
                        return Err(format!("{}: `{value}` is not a declared choice", decl.name));
                    }
                }
                FieldKind::Text => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn actions_use_tagged_json() {
        let a: SolutionAction =
            serde_json::from_str(r#"{"action":"click","target":{"text":"Book Now"}}"#).unwrap();
        assert_eq!(
            a,
            SolutionAction::Click {
                target: Target::text("Book Now"),
                note: None
            }
        );
        let t: SolutionAction = serde_json::from_str(r#"{"action":"terminate"}"#).unwrap();
        assert_eq!(serde_json::to_string(&t).unwrap(), r#"{"action":"terminate"}"#);
    }

    #[test]
    fn step_limit() {
        let mut steps = vec![
            SolutionAction::Scroll {
                direction: ScrollDirection::Down,
                note: None
            };
            50
        ];
        steps.push(SolutionAction::Terminate {
            answers: BTreeMap::new(),
        });
        let file = SolutionFile {
            steps,
            expected_final_state: BTreeMap::new(),
            submission_schema: vec![],
            intended_state: State::new(),
            judge: JudgeProgram::default(),
        };
        assert!(file.validate().is_err());
    }
}
