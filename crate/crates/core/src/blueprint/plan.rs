//! The Plan Agent: a high-temperature draft followed by a low-temperature
//! refinement that enforces the composition rules.

use std::collections::BTreeMap;

use tracing::{debug, warn};

use super::provider::{CompletionRequest, LlmProvider, ProviderProfile, ProviderRole};
use super::{parse_blueprint, serialize_blueprint, Domain, TaskBlueprint};
use crate::difficulty::{Dimension, Level, OverallLevel};
use crate::error::{ForgeError, Result};

pub const DRAFT_PARSE_ATTEMPTS: usize = 3;
pub const REFINE_RETRIES: usize = 2;
pub const MIN_MODIFICATION_RATIO: f64 = 0.30;

#[derive(Debug, Clone)]
pub struct DraftOutcome {
    pub plan: TaskBlueprint,
    /// Composition is recorded at the draft stage, not enforced.
    pub composition_ok: bool,
    pub attempts: usize,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub plan: TaskBlueprint,
    pub modification_ratio: f64,
    pub attempts: usize,
    pub warnings: Vec<String>,
}

const SCHEMA_HINT: &str = "Respond with a single fenced ```json block containing an object with the keys \
title, user_query, domain, overall_level, difficulty (one entry per dimension: jump_depth, jump_breadth, \
page_interaction, visual_complexity, info_complexity, reasoning_calc, risk_factor, each {level, justification}), \
pages [{page_id, route, purpose, key_content, distractors}], solution [{ordinal, description, kind}], \
answer {answer_type, ground_truth_fields, code_fields, grading_tiers}, qa_notes.";

fn composition_text() -> &'static str {
    "Level 1: at most 2 dimensions at L2 and no L3. \
Level 2: at least 2 dimensions at L2 and at most 1 dimension at L3. \
Level 3: at least 2 dimensions at L3 and at least 2 dimensions at L2."
}

fn draft_request(
    domain: Domain,
    level: OverallLevel,
    constraints: &BTreeMap<Dimension, Level>,
    profile: &ProviderProfile,
) -> CompletionRequest {
    let system = format!(
        "You are the planning agent of a web-task benchmark generator.\nstage: draft\n{SCHEMA_HINT}"
    );
    let mut user = format!(
        "domain: {domain} ({})\noverall level: {level}\nComposition rules: {}\n\
Propose an original, realistic multi-page website task. The website must not hint at the objective. \
Every ground-truth value must be derivable from page content.",
        domain.name(),
        composition_text()
    );
    if !constraints.is_empty() {
        let fixed: Vec<String> = constraints.iter().map(|(d, l)| format!("{}={l}", d.key())).collect();
        user.push_str(&format!("\nRequired dimension levels: {}", fixed.join(", ")));
    }
    CompletionRequest::new(profile, system, user)
}

fn refine_request(
    draft: &TaskBlueprint,
    profile: &ProviderProfile,
    feedback: Option<&str>,
) -> CompletionRequest {
    let system = format!(
        "You are the planning agent of a web-task benchmark generator.\nstage: refine\n{SCHEMA_HINT}"
    );
    let mut user = format!(
        "Rigorously revise the draft below. Check difficulty calibration against the composition rules, \
logical consistency of the solution path, and that the answer is uniquely determined. Keep the domain and \
overall level unchanged.\nComposition rules: {}\n\n{}",
        composition_text(),
        serialize_blueprint(draft)
    );
    if let Some(fb) = feedback {
        user.push_str("\nThe previous revision was rejected: ");
        user.push_str(fb);
        user.push('\n');
    }
    CompletionRequest::new(profile, system, user)
}

fn check_role(profile: &ProviderProfile, role: ProviderRole, stage: &str) -> Result<()> {
    if profile.role != role {
        return Err(ForgeError::Config(format!(
            "{stage} requires a {role:?} provider, `{}` is {:?}",
            profile.provider_id, profile.role
        )));
    }
    Ok(())
}

/// Stage one: creative drafting. Parse failures are retried; composition
/// violations are only recorded.
pub fn draft_plan(
    domain: Domain,
    level: OverallLevel,
    profile: &ProviderProfile,
    provider: &dyn LlmProvider,
) -> Result<DraftOutcome> {
    draft_plan_constrained(domain, level, &BTreeMap::new(), profile, provider)
}

/// [`draft_plan`] with some dimensions pinned to a level in the prompt.
pub fn draft_plan_constrained(
    domain: Domain,
    level: OverallLevel,
    constraints: &BTreeMap<Dimension, Level>,
    profile: &ProviderProfile,
    provider: &dyn LlmProvider,
) -> Result<DraftOutcome> {
    check_role(profile, ProviderRole::Creative, "drafting")?;
    let request = draft_request(domain, level, constraints, profile);
    let mut last_raw = String::new();
    let mut last_reason = String::new();
    for attempt in 1..=DRAFT_PARSE_ATTEMPTS {
        let completion = provider.complete(&request)?;
        match parse_blueprint(&completion.text) {
            Ok(plan) => {
                let composition_ok = plan.composition_ok();
                if !composition_ok {
                    debug!(%domain, %level, "draft violates composition; refinement will enforce it");
                }
                return Ok(DraftOutcome {
                    plan,
                    composition_ok,
                    attempts: attempt,
                });
            }
            Err(e) => {
                debug!(attempt, error = %e, "draft output did not parse");
                last_reason = e.to_string();
                last_raw = completion.text;
            }
        }
    }
    Err(ForgeError::Generation {
        attempts: DRAFT_PARSE_ATTEMPTS,
        reason: last_reason,
        raw: last_raw,
    })
}

/// Stage two: precision refinement. Domain and overall level are held at
/// the draft's values; composition is enforced with up to two retries.
pub fn refine_plan(
    draft: &TaskBlueprint,
    profile: &ProviderProfile,
    provider: &dyn LlmProvider,
) -> Result<RefineOutcome> {
    check_role(profile, ProviderRole::Precision, "refinement")?;
    let mut feedback: Option<String> = None;
    let mut warnings = Vec::new();
    let mut last_raw = String::new();
    let mut composition_failed = false;
    let attempts = 1 + REFINE_RETRIES;
    for attempt in 1..=attempts {
        let request = refine_request(draft, profile, feedback.as_deref());
        let completion = provider.complete(&request)?;
        let mut plan = match parse_blueprint(&completion.text) {
            Ok(p) => p,
            Err(e) => {
                feedback = Some(e.to_string());
                last_raw = completion.text;
                composition_failed = false;
                continue;
            }
        };
        if plan.domain != draft.domain || plan.overall_level != draft.overall_level {
            warnings.push(format!(
                "refinement changed domain/level to {}/{}; restored {}/{}",
                plan.domain, plan.overall_level, draft.domain, draft.overall_level
            ));
            plan.domain = draft.domain;
            plan.overall_level = draft.overall_level;
        }
        if let Err(e) = plan.validate(true) {
            let counts: Vec<String> = Dimension::ALL
                .iter()
                .map(|d| format!("{}={}", d.key(), plan.difficulty.level(*d)))
                .collect();
            feedback = Some(format!("{e} ({})", counts.join(", ")));
            last_raw = completion.text;
            composition_failed = matches!(e, ForgeError::Pipeline(_));
            continue;
        }
        let ratio = modification_ratio(draft, &plan);
        if ratio < MIN_MODIFICATION_RATIO {
            let msg = format!("modification ratio {ratio:.3} is below {MIN_MODIFICATION_RATIO}");
            warn!("{msg}");
            warnings.push(msg);
        }
        return Ok(RefineOutcome {
            plan,
            modification_ratio: ratio,
            attempts: attempt,
            warnings,
        });
    }
    let reason = feedback.unwrap_or_default();
    if composition_failed {
        Err(ForgeError::Pipeline(format!(
            "refined plan still violates the composition rule after {REFINE_RETRIES} retries: {reason}"
        )))
    } else {
        Err(ForgeError::Generation {
            attempts,
            reason,
            raw: last_raw,
        })
    }
}

fn tokens(plan: &TaskBlueprint) -> Vec<String> {
    serialize_blueprint(plan).split_whitespace().map(str::to_owned).collect()
}

/// Token-level Levenshtein distance between the serialized plans,
/// normalized by the longer token count.
pub fn modification_ratio(a: &TaskBlueprint, b: &TaskBlueprint) -> f64 {
    let (ta, tb) = (tokens(a), tokens(b));
    let longest = ta.len().max(tb.len());
    if longest == 0 {
        return 0.0;
    }
    strsim::generic_levenshtein(&ta, &tb) as f64 / longest as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blueprint::provider::{ScriptRule, ScriptedProvider};
    use crate::difficulty::{DifficultyVector, Level};
    use crate::fixtures;

    fn creative() -> ProviderProfile {
        ProviderProfile::creative("drafter")
    }

    fn precision() -> ProviderProfile {
        ProviderProfile::precision("refiner")
    }

    #[test]
    fn wedding_draft_parses() {
        let p = fixtures::wedding::planner();
        let out = draft_plan(Domain::D1, Level::L3, &creative(), &p).unwrap();
        assert_eq!(out.plan.pages.len(), 7);
        assert_eq!(out.plan.answer.ground_truth_fields["total_cost"], "10300.00");
        assert_eq!(out.plan.difficulty.level(Dimension::JumpBreadth), Level::L1);
        // 3 dims at L3 and 3 at L2 already satisfy the L3 rule.
        assert!(out.composition_ok);
    }

    #[test]
    fn wedding_refinement_matches_walkthrough() {
        let p = fixtures::wedding::planner();
        let draft = draft_plan(Domain::D1, Level::L3, &creative(), &p).unwrap().plan;
        let out = refine_plan(&draft, &precision(), &p).unwrap();
        assert_eq!(out.plan.pages.len(), 8);
        assert_eq!(out.plan.answer.ground_truth_fields["total_cost"], "11440.00");
        assert_eq!(out.plan.difficulty.level(Dimension::JumpBreadth), Level::L2);
        assert!(out.plan.composition_ok());
        assert!(out.modification_ratio > 0.0 && out.modification_ratio <= 1.0);
    }

    #[test]
    fn empty_output_is_a_generation_error() {
        let p = ScriptedProvider::new("drafter", vec![ScriptRule::new(&[], vec![String::new()])]);
        match draft_plan(Domain::D2, Level::L2, &creative(), &p) {
            Err(ForgeError::Generation { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected generation error, got {other:?}"),
        }
    }

    #[test]
    fn lookup_draft_is_admissible_at_level_one() {
        let p = fixtures::lookup::planner();
        let out = draft_plan(Domain::D4, Level::L1, &creative(), &p).unwrap();
        assert_eq!(out.plan.difficulty.levels(), DifficultyVector::uniform(Level::L1).levels());
        assert!(out.composition_ok);
    }

    #[test]
    fn identity_refinement_warns() {
        let draft = parse_blueprint(fixtures::lookup::DRAFT_PLAN).unwrap();
        let echo = ScriptedProvider::echo("refiner");
        let out = refine_plan(&draft, &precision(), &echo).unwrap();
        assert_eq!(out.plan, draft);
        assert_eq!(out.modification_ratio, 0.0);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn persistent_violation_is_a_pipeline_error() {
        let mut bad = parse_blueprint(fixtures::wedding::REFINED_PLAN).unwrap();
        bad.difficulty = DifficultyVector::from_values([3, 1, 1, 1, 1, 1, 1]).unwrap();
        let reply = serialize_blueprint(&bad);
        let p = ScriptedProvider::new("refiner", vec![ScriptRule::new(&["stage: refine"], vec![reply])]);
        let draft = parse_blueprint(fixtures::wedding::DRAFT_PLAN).unwrap();
        let err = refine_plan(&draft, &precision(), &p).unwrap_err();
        assert!(matches!(err, ForgeError::Pipeline(_)), "{err}");
    }

    #[test]
    fn wrong_role_is_rejected() {
        let p = ScriptedProvider::echo("x");
        assert!(matches!(
            draft_plan(Domain::D1, Level::L1, &precision(), &p),
            Err(ForgeError::Config(_))
        ));
    }

    #[test]
    fn ratio_is_symmetric_and_zero_on_self() {
        let a = parse_blueprint(fixtures::wedding::DRAFT_PLAN).unwrap();
        let b = parse_blueprint(fixtures::wedding::REFINED_PLAN).unwrap();
        assert_eq!(modification_ratio(&a, &a), 0.0);
        assert_eq!(modification_ratio(&a, &b), modification_ratio(&b, &a));
    }
}
