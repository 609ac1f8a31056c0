//! Refinement: checklist assessment, repair planning and execution, noise
//! injection, dialog replacement and dead-link resolution.

pub mod dialogs;
pub mod links;
pub mod noise;
pub mod script;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use scraper::{Html, Selector};
use serde::{Deserialize, Serialize};

use crate::blueprint::provider::{CompletionRequest, LlmProvider, ProviderProfile};
use crate::bundle::audit::audit_bundle;
use crate::bundle::nav::{extract_nav_graph, is_external, resolve_relative};
use crate::bundle::{WebsiteBundle, MAIN_SCRIPT};
use crate::error::{ForgeError, Result};

pub use dialogs::{count_blocking_dialogs, replace_blocking_dialogs, ReplacedDialog};
pub use links::{resolve_dead_links, LinkRepair};
pub use noise::{inject_noise, NoiseConfig};

use script::{blocking_dialog_calls, inline_scripts, tokenize, TokenKind};

pub const RULES_FILE: &str = "rules.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleCategory {
    FunctionalCompleteness,
    VisualCorrectness,
    StateDeterminism,
    EnvironmentRealism,
    TaskSecurity,
    InteractionFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checker {
    Static,
    Llm,
}

/// Ordered most severe first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Blocker,
    Major,
    Minor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityRule {
    pub rule_id: String,
    pub category: RuleCategory,
    pub checker: Checker,
    pub severity: Severity,
    #[serde(default)]
    pub description: String,
}

impl QualityRule {
    fn new(id: &str, category: RuleCategory, checker: Checker, severity: Severity, description: &str) -> Self {
        Self {
            rule_id: id.into(),
            category,
            checker,
            severity,
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub rule_id: String,
    pub file: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRule {
    pub rule_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub findings: Vec<Finding>,
    pub skipped: Vec<SkippedRule>,
}

impl Assessment {
    pub fn blockers(&self) -> usize {
        self.findings.iter().filter(|f| f.severity == Severity::Blocker).count()
    }

    pub fn has_rule(&self, rule_id: &str) -> bool {
        self.findings.iter().any(|f| f.rule_id == rule_id)
    }

    pub fn categories(&self, rules: &[QualityRule]) -> BTreeSet<RuleCategory> {
        self.findings
            .iter()
            .filter_map(|f| rules.iter().find(|r| r.rule_id == f.rule_id).map(|r| r.category))
            .collect()
    }
}

pub const DEAD_NAVIGATION: &str = "dead-navigation";
pub const MISSING_PAGE_FILE: &str = "missing-page-file";
pub const BROKEN_ASSET_REFERENCE: &str = "broken-asset-reference";
pub const AMBIENT_RANDOMNESS: &str = "ambient-randomness";
pub const UNBOUND_STATE_DISPLAY: &str = "unbound-state-display";
pub const NOISE_RUNTIME: &str = "noise-runtime";
pub const ANSWER_LEAK: &str = "answer-leak";
pub const BLOCKING_DIALOG: &str = "blocking-dialog";
pub const FORM_FEEDBACK: &str = "form-feedback";
pub const VISUAL_REVIEW: &str = "visual-review";

const STATIC_RULES: [&str; 9] = [
    DEAD_NAVIGATION,
    MISSING_PAGE_FILE,
    BROKEN_ASSET_REFERENCE,
    AMBIENT_RANDOMNESS,
    UNBOUND_STATE_DISPLAY,
    NOISE_RUNTIME,
    ANSWER_LEAK,
    BLOCKING_DIALOG,
    FORM_FEEDBACK,
];

/// The shipped checklist, one or more checks per category.
pub fn default_rules() -> Vec<QualityRule> {
    use Checker::*;
    use RuleCategory::*;
    use Severity::*;
    vec![
        QualityRule::new(DEAD_NAVIGATION, FunctionalCompleteness, Static, Blocker, "every link, form action and scripted navigation reaches a page"),
        QualityRule::new(MISSING_PAGE_FILE, FunctionalCompleteness, Static, Blocker, "every declared route has a page file"),
        QualityRule::new(BROKEN_ASSET_REFERENCE, VisualCorrectness, Static, Major, "images, stylesheets and scripts referenced by pages exist"),
        QualityRule::new(AMBIENT_RANDOMNESS, StateDeterminism, Static, Major, "site scripts do not draw from Math.random"),
        QualityRule::new(UNBOUND_STATE_DISPLAY, StateDeterminism, Static, Major, "pages that bind state carry the runtime configuration"),
        QualityRule::new(NOISE_RUNTIME, EnvironmentRealism, Static, Major, "every page loads the noise runtime exactly once"),
        QualityRule::new(ANSWER_LEAK, TaskSecurity, Static, Blocker, "no answer material is served in plaintext or fetched from outside"),
        QualityRule::new(BLOCKING_DIALOG, InteractionFeedback, Static, Blocker, "no native blocking dialogs in served scripts"),
        QualityRule::new(FORM_FEEDBACK, InteractionFeedback, Static, Minor, "required fields declare an inline error message"),
        QualityRule::new(VISUAL_REVIEW, VisualCorrectness, Llm, Minor, "page layout and copy are coherent"),
    ]
}

/// Checks rule-set invariants: unique ids, and static rules must name a
/// known check.
pub fn validate_rules(rules: &[QualityRule]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for r in rules {
        if r.rule_id.trim().is_empty() {
            return Err(ForgeError::Config("rule with empty rule_id".into()));
        }
        if !seen.insert(r.rule_id.as_str()) {
            return Err(ForgeError::Config(format!("duplicate rule_id `{}`", r.rule_id)));
        }
        if r.checker == Checker::Static && !STATIC_RULES.contains(&r.rule_id.as_str()) {
            return Err(ForgeError::Config(format!("no static check named `{}`", r.rule_id)));
        }
    }
    Ok(())
}

pub fn load_rules(path: &Path) -> Result<Vec<QualityRule>> {
    let rules: Vec<QualityRule> = crate::bundle::read_json(path)?;
    validate_rules(&rules)?;
    Ok(rules)
}

struct Scan {
    pages: Vec<(String, String)>,
    scripts: Vec<(String, String)>,
}

fn scan(bundle: &WebsiteBundle) -> Result<Scan> {
    let mut pages = Vec::new();
    let mut scripts = Vec::new();
    for file in bundle.served_files()? {
        if file.ends_with(".html") {
            let html = bundle.read_text(&file)?;
            for (s, e) in inline_scripts(&html) {
                scripts.push((file.clone(), html[s..e].to_string()));
            }
            pages.push((file, html));
        } else if file.ends_with(".js") {
            let src = bundle.read_text(&file)?;
            scripts.push((file, src));
        }
    }
    Ok(Scan { pages, scripts })
}

fn finding(rule: &QualityRule, file: &str, detail: String) -> Finding {
    Finding {
        severity: rule.severity,
        rule_id: rule.rule_id.clone(),
        file: file.to_string(),
        detail,
    }
}

fn sel(css: &str) -> Selector {
    Selector::parse(css).expect("static selector")
}

/// The part of the site script written by the site, without the runtime.
fn site_part(src: &str) -> &str {
    match src.find(noise::RUNTIME_BEGIN) {
        Some(i) => &src[..i],
        None => src,
    }
}

fn uses_math_random(src: &str) -> bool {
    let toks: Vec<_> = tokenize(src)
        .into_iter()
        .filter(|t| !matches!(t.kind, TokenKind::Space | TokenKind::Comment))
        .collect();
    toks.windows(3)
        .any(|w| w[0].text == "Math" && w[1].text == "." && w[2].text == "random" && w[2].kind == TokenKind::Ident)
}

fn check_static(bundle: &WebsiteBundle, sc: &Scan, rule: &QualityRule) -> Result<Vec<Finding>> {
    let mut out = Vec::new();
    match rule.rule_id.as_str() {
        DEAD_NAVIGATION => {
            let graph = extract_nav_graph(bundle)?;
            for e in graph.dead_edges() {
                let href = e.href.as_deref().unwrap_or("(none)");
                out.push(finding(rule, &format!("{}.html", e.from), format!("\"{}\" -> {href}", e.text)));
            }
        }
        MISSING_PAGE_FILE => {
            for (route, file) in &bundle.metadata.routes {
                if !bundle.path(file).is_file() {
                    out.push(finding(rule, file, format!("route {route} has no page file")));
                }
            }
        }
        BROKEN_ASSET_REFERENCE => {
            let refs = sel("img[src], script[src], link[href][rel=stylesheet], source[src]");
            for (file, html) in &sc.pages {
                let doc = Html::parse_document(html);
                for el in doc.select(&refs) {
                    let v = el.value();
                    let Some(target) = v.attr("src").or_else(|| v.attr("href")) else { continue };
                    let target = target.trim();
                    if target.is_empty() || is_external(target) || target.starts_with("data:") {
                        continue;
                    }
                    let rel = resolve_relative(file, target);
                    if !bundle.path(&rel).is_file() {
                        out.push(finding(rule, file, format!("<{}> references missing {rel}", v.name())));
                    }
                }
            }
        }
        AMBIENT_RANDOMNESS => {
            for (file, src) in &sc.scripts {
                let body = if file == MAIN_SCRIPT { site_part(src) } else { src.as_str() };
                if uses_math_random(body) {
                    out.push(finding(rule, file, "Math.random drives page content".into()));
                }
            }
        }
        UNBOUND_STATE_DISPLAY => {
            let bound = sel("[data-forge-bind], [data-forge-field]");
            for (file, html) in &sc.pages {
                let doc = Html::parse_document(html);
                let n = doc.select(&bound).count();
                if n > 0 && noise::read_island(html).is_none() {
                    out.push(finding(rule, file, format!("{n} state-bound elements without runtime configuration")));
                }
            }
        }
        NOISE_RUNTIME => {
            for (file, html) in &sc.pages {
                let islands = noise::island_count(html);
                if islands != 1 {
                    out.push(finding(rule, file, format!("{islands} runtime-config islands")));
                } else if noise::read_island(html).is_none() {
                    out.push(finding(rule, file, "runtime-config island does not parse".into()));
                }
                let includes = noise::main_script_includes(file, html);
                if includes != 1 {
                    out.push(finding(rule, file, format!("site script included {includes} times")));
                }
            }
            let blocks = match bundle.read_text(MAIN_SCRIPT) {
                Ok(src) => noise::runtime_block_count(&src),
                Err(_) => 0,
            };
            if blocks != 1 {
                out.push(finding(rule, MAIN_SCRIPT, format!("{blocks} runtime blocks")));
            }
        }
        ANSWER_LEAK => {
            for flag in audit_bundle(bundle)?.flags {
                out.push(finding(rule, &flag.file, flag.detail));
            }
        }
        BLOCKING_DIALOG => {
            for (file, src) in &sc.scripts {
                for call in blocking_dialog_calls(src) {
                    out.push(finding(rule, file, format!("{}() call at offset {}", call.function, call.callee_start)));
                }
            }
        }
        FORM_FEEDBACK => {
            let required = sel("form [required]");
            for (file, html) in &sc.pages {
                let doc = Html::parse_document(html);
                for el in doc.select(&required) {
                    if el.value().attr("data-forge-message").is_none() {
                        let name = el.value().attr("name").unwrap_or("(unnamed)");
                        out.push(finding(rule, file, format!("required field `{name}` has no inline message")));
                    }
                }
            }
        }
        other => {
            return Err(ForgeError::Config(format!("no static check named `{other}`")));
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct LlmIssue {
    file: String,
    detail: String,
}

/// System text of llm-checker requests.
pub fn assess_system_prompt(rule: &QualityRule) -> String {
    format!(
        "stage: assess\nrule: {}\ncategory: {}\n{}\nReply with a JSON array of {{\"file\", \"detail\"}} objects, one per problem; [] when none.",
        rule.rule_id,
        serde_json::to_value(rule.category).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        rule.description
    )
}

fn check_llm(
    bundle: &WebsiteBundle,
    sc: &Scan,
    rule: &QualityRule,
    profile: &ProviderProfile,
    provider: &dyn LlmProvider,
) -> std::result::Result<Vec<Finding>, String> {
    let mut user = format!("site: {}\n", bundle.metadata.site_name);
    for (file, html) in &sc.pages {
        user.push_str(&format!("=== FILE: {file} ===\n{html}\n"));
    }
    user.push_str("=== END ===\n");
    let req = CompletionRequest::new(profile, assess_system_prompt(rule), user);
    let reply = provider.complete(&req).map_err(|e| e.to_string())?;
    let text = reply.text.trim();
    let json = match (text.find('['), text.rfind(']')) {
        (Some(a), Some(b)) if a < b => &text[a..=b],
        _ => return Err("reply holds no JSON array".into()),
    };
    let issues: Vec<LlmIssue> = serde_json::from_str(json).map_err(|e| format!("unparseable reply: {e}"))?;
    Ok(issues.into_iter().map(|i| finding(rule, &i.file, i.detail)).collect())
}

/// Evaluates the bundle against a rule set. Static rules are pure scans;
/// llm rules run only when a provider is given and are reported as skipped
/// otherwise.
pub fn assess(
    bundle: &WebsiteBundle,
    rules: &[QualityRule],
    llm: Option<(&ProviderProfile, &dyn LlmProvider)>,
) -> Result<Assessment> {
    let mut out = Assessment::default();
    if rules.is_empty() {
        return Ok(out);
    }
    let sc = scan(bundle)?;
    for rule in rules {
        match rule.checker {
            Checker::Static => out.findings.extend(check_static(bundle, &sc, rule)?),
            Checker::Llm => match llm {
                None => out.skipped.push(SkippedRule {
                    rule_id: rule.rule_id.clone(),
                    reason: "no provider configured".into(),
                }),
                Some((profile, provider)) => match check_llm(bundle, &sc, rule, profile, provider) {
                    Ok(f) => out.findings.extend(f),
                    Err(reason) => out.skipped.push(SkippedRule {
                        rule_id: rule.rule_id.clone(),
                        reason,
                    }),
                },
            },
        }
    }
    out.findings.sort();
    out.findings.dedup();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairAction {
    ResolveDeadLinks,
    ReplaceBlockingDialogs,
    InjectNoise,
    /// No automatic repair; the finding stays in the residual.
    Manual,
}

impl RepairAction {
    pub fn for_rule(rule_id: &str) -> Self {
        match rule_id {
            DEAD_NAVIGATION => RepairAction::ResolveDeadLinks,
            BLOCKING_DIALOG => RepairAction::ReplaceBlockingDialogs,
            NOISE_RUNTIME | UNBOUND_STATE_DISPLAY => RepairAction::InjectNoise,
            _ => RepairAction::Manual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairStep {
    pub rule_id: String,
    pub severity: Severity,
    pub action: RepairAction,
    pub findings: usize,
}

pub type RepairPlan = Vec<RepairStep>;

/// One step per failing rule: blockers first, then major, then minor;
/// ties broken by rule id.
pub fn plan_repairs(findings: &[Finding]) -> RepairPlan {
    let mut by_rule: BTreeMap<(Severity, &str), usize> = BTreeMap::new();
    for f in findings {
        *by_rule.entry((f.severity, f.rule_id.as_str())).or_default() += 1;
    }
    by_rule
        .into_iter()
        .map(|((severity, rule_id), n)| RepairStep {
            rule_id: rule_id.to_string(),
            severity,
            action: RepairAction::for_rule(rule_id),
            findings: n,
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub actions: Vec<RepairAction>,
    pub links: Option<LinkRepair>,
    pub dialogs: Vec<ReplacedDialog>,
    pub manual: Vec<String>,
}

/// Applies the plan in order. Each automatic action runs at most once.
/// Noise injection is applied last so pages created by earlier steps are
/// covered.
pub fn execute_repairs(bundle: &mut WebsiteBundle, plan: &RepairPlan, noise: &NoiseConfig) -> Result<ExecutionLog> {
    let mut log = ExecutionLog::default();
    let mut inject = false;
    for step in plan {
        match step.action {
            RepairAction::Manual => log.manual.push(step.rule_id.clone()),
            RepairAction::InjectNoise => inject = true,
            a if log.actions.contains(&a) => {}
            RepairAction::ResolveDeadLinks => {
                log.links = Some(resolve_dead_links(bundle)?);
                log.actions.push(RepairAction::ResolveDeadLinks);
            }
            RepairAction::ReplaceBlockingDialogs => {
                log.dialogs = replace_blocking_dialogs(bundle)?;
                log.actions.push(RepairAction::ReplaceBlockingDialogs);
            }
        }
    }
    if inject {
        bundle.rescan()?;
        inject_noise(bundle, noise)?;
        log.actions.push(RepairAction::InjectNoise);
    }
    Ok(log)
}

/// Re-assesses only the rules that failed before; returns what still fails.
pub fn verify_repairs(
    bundle: &WebsiteBundle,
    rules: &[QualityRule],
    findings: &[Finding],
    llm: Option<(&ProviderProfile, &dyn LlmProvider)>,
) -> Result<Vec<Finding>> {
    let failing: BTreeSet<&str> = findings.iter().map(|f| f.rule_id.as_str()).collect();
    let subset: Vec<QualityRule> = rules.iter().filter(|r| failing.contains(r.rule_id.as_str())).cloned().collect();
    Ok(assess(bundle, &subset, llm)?.findings)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub before: Assessment,
    pub plan: RepairPlan,
    pub execution: ExecutionLog,
    pub residual: Vec<Finding>,
    pub after: Assessment,
}

impl RefinementReport {
    pub fn clean(&self) -> bool {
        self.after.blockers() == 0 && self.residual.iter().all(|f| f.severity != Severity::Blocker)
    }
}

/// The full refinement pass: assess, plan, execute, verify. The runtime is
/// always injected, so refined bundles carry noise even when the initial
/// assessment did not ask for it.
pub fn refine_bundle(
    bundle: &mut WebsiteBundle,
    rules: &[QualityRule],
    noise: &NoiseConfig,
    llm: Option<(&ProviderProfile, &dyn LlmProvider)>,
) -> Result<RefinementReport> {
    validate_rules(rules)?;
    noise.validate()?;
    bundle.rescan()?;
    let before = assess(bundle, rules, llm)?;
    let mut plan = plan_repairs(&before.findings);
    if !plan.iter().any(|s| s.action == RepairAction::InjectNoise) {
        plan.push(RepairStep {
            rule_id: NOISE_RUNTIME.into(),
            severity: Severity::Major,
            action: RepairAction::InjectNoise,
            findings: 0,
        });
    }
    let execution = execute_repairs(bundle, &plan, noise)?;
    bundle.refresh()?;
    let residual = verify_repairs(bundle, rules, &before.findings, llm)?;
    let after = assess(bundle, rules, llm)?;
    Ok(RefinementReport {
        before,
        plan,
        execution,
        residual,
        after,
    })
}
