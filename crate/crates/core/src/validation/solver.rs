//! Replays a `solution.json` step list against whatever the browser shows,
//! dismissing noise overlays first.

use std::collections::BTreeMap;

use super::{ActionOutcome, BrowserAction, Decision, DomNode, Observation, ScrollTo, Solver};
use crate::bundle::solution::{ScrollDirection, SolutionAction, Target};
use crate::error::Result;

/// Whether `node` satisfies every criterion present in `target`.
pub fn target_matches(node: &DomNode, target: &Target) -> bool {
    let attr_eq = |name: &str, want: &Option<String>| want.as_ref().is_none_or(|w| node.attr(name) == Some(w.as_str()));
    attr_eq("id", &target.id)
        && attr_eq("data-forge-field", &target.field)
        && attr_eq("value", &target.value)
        && attr_eq("data-forge-bind", &target.bind)
        && target.text.as_ref().is_none_or(|t| node.text.trim() == t.trim())
}

/// Locates a node. With `interactive`, only indexed nodes qualify.
pub fn resolve_target<'a>(obs: &'a Observation, target: &Target, interactive: bool) -> Option<&'a DomNode> {
    if let Some(i) = target.index {
        return obs.element(i);
    }
    obs.nodes
        .iter()
        .filter(|n| !interactive || n.index.is_some())
        .filter(|n| target_matches(n, target))
        .nth(target.nth)
}

fn describe(target: &Target) -> String {
    if let Some(t) = &target.text {
        format!("\"{t}\"")
    } else if let Some(f) = &target.field {
        format!("field {f}")
    } else if let Some(b) = &target.bind {
        format!("{b} display")
    } else if let Some(i) = &target.id {
        format!("#{i}")
    } else if let Some(i) = target.index {
        format!("element {i}")
    } else {
        "element".into()
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedSolver {
    steps: Vec<SolutionAction>,
    pos: usize,
    reads: BTreeMap<String, String>,
    step_in_flight: bool,
}

impl ScriptedSolver {
    pub fn new(steps: &[SolutionAction]) -> Self {
        ScriptedSolver {
            steps: steps.to_vec(),
            pos: 0,
            reads: BTreeMap::new(),
            step_in_flight: false,
        }
    }

    fn noise_button(obs: &Observation, kind: &str) -> Option<usize> {
        obs.nodes
            .iter()
            .find(|n| n.index.is_some() && n.attr("data-forge-noise") == Some(kind))
            .and_then(|n| n.index)
    }

    fn unreachable(obs: &Observation) -> usize {
        obs.interactive().count()
    }
}

impl Solver for ScriptedSolver {
    fn decide(&mut self, obs: &Observation, last: Option<&ActionOutcome>) -> Result<Decision> {
        if self.step_in_flight && last.is_some_and(|o| o.ok) {
            self.pos += 1;
        }
        self.step_in_flight = false;

        for (kind, why) in [("popup", "Close the promotional popup"), ("cookie", "Accept the cookie banner")] {
            if let Some(index) = Self::noise_button(obs, kind) {
                return Ok(Decision {
                    reasoning: why.into(),
                    action: BrowserAction::Click { index },
                });
            }
        }

        loop {
            let Some(step) = self.steps.get(self.pos).cloned() else {
                return Ok(Decision {
                    reasoning: "Solution exhausted; submit collected answers".into(),
                    action: BrowserAction::Terminate { answers: self.reads.clone() },
                });
            };
            let note = step.note().map(str::to_owned);
            let (reasoning, action) = match step {
                SolutionAction::Read { field, target, .. } => {
                    if let Some(node) = resolve_target(obs, &target, false) {
                        let value = match node.attr("value") {
                            Some(v) if matches!(node.tag.as_str(), "input" | "select" | "textarea") => v.to_string(),
                            _ => node.text.trim().to_string(),
                        };
                        self.reads.insert(field, value);
                    }
                    self.pos += 1;
                    continue;
                }
                SolutionAction::Terminate { answers } => {
                    let mut all = self.reads.clone();
                    all.extend(answers);
                    ("Submit the answer".to_string(), BrowserAction::Terminate { answers: all })
                }
                SolutionAction::Navigate { url, .. } => (format!("Open {url}"), BrowserAction::Navigate { url }),
                SolutionAction::Click { target, .. } => {
                    let index = resolve_target(obs, &target, true).and_then(|n| n.index).unwrap_or_else(|| Self::unreachable(obs));
                    (format!("Click {}", describe(&target)), BrowserAction::Click { index })
                }
                SolutionAction::Input { target, text, .. } => {
                    let index = resolve_target(obs, &target, true).and_then(|n| n.index).unwrap_or_else(|| Self::unreachable(obs));
                    (format!("Type \"{text}\" into {}", describe(&target)), BrowserAction::Input { index, text })
                }
                SolutionAction::Scroll { direction, .. } => {
                    let direction = match direction {
                        ScrollDirection::Up => ScrollTo::Up,
                        ScrollDirection::Down => ScrollTo::Down,
                    };
                    ("Scroll".to_string(), BrowserAction::Scroll { direction })
                }
                SolutionAction::Back { .. } => ("Go back".to_string(), BrowserAction::Back),
            };
            self.step_in_flight = true;
            return Ok(Decision {
                reasoning: note.unwrap_or(reasoning),
                action,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(index: Option<usize>, tag: &str, text: &str, attrs: &[(&str, &str)]) -> DomNode {
        DomNode {
            index,
            tag: tag.into(),
            text: text.into(),
            attrs: attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    fn obs(nodes: Vec<DomNode>) -> Observation {
        Observation {
            url: "index.html".into(),
            title: String::new(),
            nodes,
            screenshot: None,
            storage: BTreeMap::new(),
        }
    }

    #[test]
    fn nth_and_interactive_filter() {
        let o = obs(vec![
            node(None, "h2", "Go", &[]),
            node(Some(0), "a", "Go", &[]),
            node(Some(1), "a", " Go ", &[]),
        ]);
        let t = Target { text: Some("Go".into()), nth: 1, ..Default::default() };
        assert_eq!(resolve_target(&o, &t, true).and_then(|n| n.index), Some(1));
        assert_eq!(resolve_target(&o, &Target::text("Go"), false).map(|n| n.tag.as_str()), Some("h2"));
    }

    #[test]
    fn noise_first_then_retry_on_failure() {
        let steps = vec![SolutionAction::Click { target: Target::text("Go"), note: None }];
        let mut s = ScriptedSolver::new(&steps);
        let with_popup = obs(vec![
            node(Some(0), "button", "×", &[("data-forge-noise", "popup")]),
            node(Some(1), "a", "Go", &[]),
        ]);
        let d = s.decide(&with_popup, None).unwrap();
        assert_eq!(d.action, BrowserAction::Click { index: 0 });
        let plain = obs(vec![node(Some(0), "a", "Go", &[])]);
        let d = s.decide(&plain, Some(&ActionOutcome::ok())).unwrap();
        assert_eq!(d.action, BrowserAction::Click { index: 0 });
        let d = s.decide(&plain, Some(&ActionOutcome::fail("x"))).unwrap();
        assert_eq!(d.action, BrowserAction::Click { index: 0 });
        let d = s.decide(&plain, Some(&ActionOutcome::ok())).unwrap();
        assert!(matches!(d.action, BrowserAction::Terminate { .. }));
    }

    #[test]
    fn missing_target_is_out_of_range() {
        let steps = vec![SolutionAction::Click { target: Target::text("Nope"), note: None }];
        let mut s = ScriptedSolver::new(&steps);
        let o = obs(vec![node(Some(0), "a", "Go", &[])]);
        assert_eq!(s.decide(&o, None).unwrap().action, BrowserAction::Click { index: 1 });
    }
}
