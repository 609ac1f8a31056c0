//! Built-in scripted providers and sample sites. They back the hermetic
//! pipeline (`fixture = "builtin:wedding"` in a providers file) and the
//! test suites.

use crate::blueprint::provider::{ProviderError, ScriptRule, ScriptedProvider};

fn section(out: &mut String, path: &str, body: &str) {
    out.push_str("=== FILE: ");
    out.push_str(path);
    out.push_str(" ===\n");
    out.push_str(body);
    if !body.ends_with('\n') {
        out.push('\n');
    }
}

fn compose(files: &[(&str, &str)], logic: &str, assets: &str) -> String {
    let mut out = String::from("Generated website files follow.\n\n");
    for (path, body) in files {
        section(&mut out, path, body);
    }
    section(&mut out, "forge/logic.json", logic);
    section(&mut out, "forge/assets.json", assets);
    out.push_str("=== END ===\n");
    out
}

/// Grand Estate Gardens wedding booking (D1, L3, mixed answer).
pub mod wedding {
    use super::*;

    pub const DRAFT_PLAN: &str = include_str!("../fixtures/wedding/draft_plan.md");
    pub const REFINED_PLAN: &str = include_str!("../fixtures/wedding/refined_plan.md");
    pub const LOGIC: &str = include_str!("../fixtures/wedding/logic.json");
    pub const ASSETS: &str = include_str!("../fixtures/wedding/assets.json");

    pub const SITE_FILES: [(&str, &str); 10] = [
        ("index.html", include_str!("../fixtures/wedding/site/index.html")),
        ("search.html", include_str!("../fixtures/wedding/site/search.html")),
        ("venue_overview.html", include_str!("../fixtures/wedding/site/venue_overview.html")),
        ("venue_pricing.html", include_str!("../fixtures/wedding/site/venue_pricing.html")),
        ("venue_flora.html", include_str!("../fixtures/wedding/site/venue_flora.html")),
        ("venue_book.html", include_str!("../fixtures/wedding/site/venue_book.html")),
        ("venue_review.html", include_str!("../fixtures/wedding/site/venue_review.html")),
        ("venue_confirmation.html", include_str!("../fixtures/wedding/site/venue_confirmation.html")),
        ("css/style.css", include_str!("../fixtures/wedding/site/css/style.css")),
        ("js/main.js", include_str!("../fixtures/wedding/site/js/main.js")),
    ];

    /// The generation agent's reply for the refined plan.
    pub fn generation_reply() -> String {
        compose(&SITE_FILES, LOGIC, ASSETS)
    }

    /// Scripted rules covering draft, refine and generate.
    pub fn rules() -> Vec<ScriptRule> {
        vec![
            ScriptRule::new(&["stage: draft", "domain: D1"], vec![DRAFT_PLAN.to_string()]),
            ScriptRule::new(&["stage: refine", "Grand Estate Gardens"], vec![REFINED_PLAN.to_string()]),
            ScriptRule::new(&["stage: generate", "Grand Estate Gardens"], vec![generation_reply()]),
        ]
    }

    pub fn planner() -> ScriptedProvider {
        ScriptedProvider::new("wedding", rules())
    }
}

/// TechNest single-page price lookup (D4, L1, direct answer).
pub mod lookup {
    use super::*;

    pub const DRAFT_PLAN: &str = include_str!("../fixtures/lookup/draft_plan.md");
    pub const LOGIC: &str = include_str!("../fixtures/lookup/logic.json");
    pub const ASSETS: &str = include_str!("../fixtures/lookup/assets.json");
    pub const SITE_FILES: [(&str, &str); 1] = [("index.html", include_str!("../fixtures/lookup/site/index.html"))];

    pub fn generation_reply() -> String {
        compose(&SITE_FILES, LOGIC, ASSETS)
    }

    /// The refine stage returns the draft unchanged.
    pub fn rules() -> Vec<ScriptRule> {
        vec![
            ScriptRule::new(&["stage: draft", "domain: D4"], vec![DRAFT_PLAN.to_string()]),
            ScriptRule::new(&["stage: refine", "Aurora 14"], vec![DRAFT_PLAN.to_string()]),
            ScriptRule::new(&["stage: generate", "Aurora 14"], vec![generation_reply()]),
        ]
    }

    pub fn planner() -> ScriptedProvider {
        ScriptedProvider::new("lookup", rules())
    }
}

/// Resolves `builtin:<name>` provider fixtures.
pub fn builtin_provider(id: &str, name: &str) -> Result<ScriptedProvider, ProviderError> {
    let rules = match name {
        "wedding" => wedding::rules(),
        "lookup" => lookup::rules(),
        "fixtures" => wedding::rules().into_iter().chain(lookup::rules()).collect(),
        other => return Err(ProviderError::Config(format!("unknown builtin fixture `{other}`"))),
    };
    Ok(ScriptedProvider::new(id, rules))
}

/// A creative and a precision provider playing back both bundled fixtures.
pub fn builtin_registry() -> crate::blueprint::provider::ProviderRegistry {
    use crate::blueprint::ProviderProfile;
    use std::sync::Arc;
    let mut reg = crate::blueprint::provider::ProviderRegistry::default();
    for profile in [ProviderProfile::creative("fixture-creative"), ProviderProfile::precision("fixture-precision")] {
        let p = builtin_provider(&profile.provider_id, "fixtures").expect("bundled fixture");
        reg.insert(profile, Arc::new(p));
    }
    reg
}
