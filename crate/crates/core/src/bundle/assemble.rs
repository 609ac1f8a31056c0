//! The Generation Agent: turns a refined plan into a bundle on disk.
//!
//! The provider answers with file sections:
//!
//! ```text
//! === FILE: index.html ===
//! <!DOCTYPE html>...
//! === FILE: forge/logic.json ===
//! {"site_name": ..., "judge": ..., "steps": [...]}
//! === FILE: forge/assets.json ===
//! [{"path": "assets/hero.png", "kind": "image", "spec": {...}}]
//! === END ===
//! ```
//!
//! `forge/*` sections are parsed, not written.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use super::assets::{AssetProvider, AssetRequest};
use super::audit::audit_bundle;
use super::judge::{resolve_with_program, EncodedAnswerConfig};
use super::solution::{FieldDecl, SolutionAction, SolutionFile};
use super::{
    BundleMetadata, NetworkDelay, TaskCard, WebsiteBundle, CONTROL_FILES, DATA_FILE,
};
use crate::blueprint::plan::DRAFT_PARSE_ATTEMPTS;
use crate::blueprint::provider::{CompletionRequest, LlmProvider, ProviderProfile};
use crate::blueprint::{serialize_blueprint, TaskBlueprint};
use crate::error::{ForgeError, Result};
use crate::logic::{JudgeProgram, State};

pub const LOGIC_SECTION: &str = "forge/logic.json";
pub const ASSETS_SECTION: &str = "forge/assets.json";
const FILE_MARKER: &str = "=== FILE: ";
const END_MARKER: &str = "=== END ===";

/// Site behaviour the generator declares next to the files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteLogic {
    pub site_name: String,
    /// Plan page id to file path.
    pub page_files: BTreeMap<String, String>,
    #[serde(default)]
    pub judge: JudgeProgram,
    /// Mistake pattern to plaintext code; encoded on assembly.
    #[serde(default)]
    pub deceptive_codes: BTreeMap<String, String>,
    #[serde(default)]
    pub submission_schema: Vec<FieldDecl>,
    #[serde(default)]
    pub intended_state: State,
    pub steps: Vec<SolutionAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_delay: Option<NetworkDelay>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutput {
    pub files: BTreeMap<String, String>,
    pub logic: SiteLogic,
    pub assets: Vec<AssetRequest>,
}

fn check_path(path: &str) -> Result<()> {
    let bad = path.is_empty()
        || path.starts_with('/')
        || path.contains('\\')
        || path.split('/').any(|s| s.is_empty() || s == "." || s == "..");
    if bad {
        return Err(ForgeError::Assembly(format!("illegal file path `{path}`")));
    }
    if CONTROL_FILES.contains(&path) || path == DATA_FILE {
        return Err(ForgeError::Assembly(format!("`{path}` is reserved for the pipeline")));
    }
    Ok(())
}

impl GenerationOutput {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<(String, String)> = Vec::new();
        let mut current: Option<(String, Vec<&str>)> = None;
        let mut ended = false;
        for line in text.lines() {
            let trimmed = line.trim_end();
            if let Some(rest) = trimmed.strip_prefix(FILE_MARKER) {
                let name = rest
                    .strip_suffix(" ===")
                    .ok_or_else(|| ForgeError::Parse(format!("malformed file marker `{trimmed}`")))?
                    .trim();
                if let Some((n, body)) = current.take() {
                    sections.push((n, body.join("\n")));
                }
                current = Some((name.to_string(), Vec::new()));
            } else if trimmed == END_MARKER {
                ended = true;
                break;
            } else if let Some((_, body)) = current.as_mut() {
                body.push(line);
            }
        }
        if !ended {
            return Err(ForgeError::Parse("generation output is missing the end marker".into()));
        }
        if let Some((n, body)) = current.take() {
            sections.push((n, body.join("\n")));
        }

        let mut files = BTreeMap::new();
        let mut logic = None;
        let mut assets = Vec::new();
        for (name, mut body) in sections {
            match name.as_str() {
                LOGIC_SECTION => {
                    logic = Some(
                        serde_json::from_str::<SiteLogic>(&body)
                            .map_err(|e| ForgeError::Parse(format!("{LOGIC_SECTION}: {e}")))?,
                    )
                }
                ASSETS_SECTION => {
                    assets = serde_json::from_str(&body)
                        .map_err(|e| ForgeError::Parse(format!("{ASSETS_SECTION}: {e}")))?
                }
                _ => {
                    check_path(&name).map_err(|e| ForgeError::Parse(e.to_string()))?;
                    if !body.ends_with('\n') {
                        body.push('\n');
                    }
                    if files.insert(name.clone(), body).is_some() {
                        return Err(ForgeError::Parse(format!("file `{name}` emitted twice")));
                    }
                }
            }
        }
        let logic = logic.ok_or_else(|| ForgeError::Parse(format!("section {LOGIC_SECTION} missing")))?;
        Ok(Self { files, logic, assets })
    }

    /// Inverse of [`GenerationOutput::parse`].
    pub fn render(&self) -> Result<String> {
        let mut out = String::new();
        for (name, body) in &self.files {
            out.push_str(&format!("{FILE_MARKER}{name} ===\n{body}"));
            if !body.ends_with('\n') {
                out.push('\n');
            }
        }
        out.push_str(&format!(
            "{FILE_MARKER}{LOGIC_SECTION} ===\n{}\n",
            serde_json::to_string_pretty(&self.logic)?
        ));
        out.push_str(&format!(
            "{FILE_MARKER}{ASSETS_SECTION} ===\n{}\n",
            serde_json::to_string_pretty(&self.assets)?
        ));
        out.push_str(END_MARKER);
        out.push('\n');
        Ok(out)
    }
}

fn generation_request(plan: &TaskBlueprint, profile: &ProviderProfile) -> CompletionRequest {
    let system = format!(
        "You are the generation agent of a web-task benchmark generator.\nstage: generate\n\
Emit every website file as `{FILE_MARKER}<path> ===` followed by its content, then the sections \
{LOGIC_SECTION} (site name, page files, judge rules, deceptive codes, submission schema, solution steps) \
and {ASSETS_SECTION} (image and chart requests), and finish with `{END_MARKER}`."
    );
    let user = format!(
        "Build a purely static, self-contained website for the plan below. Every navigation element must \
link to a real page. Never write ground-truth values or confirmation codes into page files; operation \
codes are computed at runtime from the judge rules.\n\n{}",
        serialize_blueprint(plan)
    );
    CompletionRequest::new(profile, system, user)
}

/// Asks the provider for the site and parses its reply, retrying parse
/// failures.
pub fn generate_site(
    plan: &TaskBlueprint,
    profile: &ProviderProfile,
    provider: &dyn LlmProvider,
) -> Result<GenerationOutput> {
    let request = generation_request(plan, profile);
    let mut last = (String::new(), String::new());
    for attempt in 1..=DRAFT_PARSE_ATTEMPTS {
        let completion = provider.complete(&request)?;
        match GenerationOutput::parse(&completion.text) {
            Ok(out) => return Ok(out),
            Err(e) => {
                debug!(attempt, error = %e, "generation output did not parse");
                last = (e.to_string(), completion.text);
            }
        }
    }
    Err(ForgeError::Generation {
        attempts: DRAFT_PARSE_ATTEMPTS,
        reason: last.0,
        raw: last.1,
    })
}

/// Generates, writes and audits the bundle for `plan` under `out_dir`.
pub fn assemble_bundle(
    plan: &TaskBlueprint,
    profile: &ProviderProfile,
    provider: &dyn LlmProvider,
    asset_provider: &dyn AssetProvider,
    out_dir: &Path,
    task_id: &str,
) -> Result<WebsiteBundle> {
    plan.validate(true)?;
    let output = generate_site(plan, profile, provider)?;
    write_bundle(plan, &output, asset_provider, out_dir, task_id)
}

/// The deterministic half of assembly: everything after the provider call.
pub fn write_bundle(
    plan: &TaskBlueprint,
    output: &GenerationOutput,
    asset_provider: &dyn AssetProvider,
    out_dir: &Path,
    task_id: &str,
) -> Result<WebsiteBundle> {
    let logic = &output.logic;
    if out_dir.exists() && fs::read_dir(out_dir)?.next().is_some() {
        return Err(ForgeError::Assembly(format!("{} is not empty", out_dir.display())));
    }

    let mut routes = BTreeMap::new();
    for page in &plan.pages {
        let file = logic
            .page_files
            .get(&page.page_id)
            .ok_or_else(|| ForgeError::Assembly(format!("plan page `{}` has no file", page.page_id)))?;
        if !output.files.contains_key(file) {
            return Err(ForgeError::Assembly(format!(
                "page `{}` maps to `{file}`, which was not generated",
                page.page_id
            )));
        }
        routes.insert(page.route.clone(), file.clone());
    }

    fs::create_dir_all(out_dir)?;
    for (path, body) in &output.files {
        check_path(path)?;
        let to = out_dir.join(path);
        if let Some(parent) = to.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(to, body)?;
    }
    let mut asset_kinds = BTreeMap::new();
    for req in &output.assets {
        check_path(&req.path)?;
        let bytes = asset_provider.produce(req).map_err(|reason| ForgeError::Asset {
            asset: req.path.clone(),
            reason,
        })?;
        let to = out_dir.join(&req.path);
        if let Some(parent) = to.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(to, bytes)?;
        asset_kinds.insert(req.path.clone(), req.kind);
    }

    let answer = EncodedAnswerConfig::from_plaintext(
        plan.answer.answer_type,
        &plan.answer.ground_truth_fields,
        &logic.deceptive_codes,
    );
    answer.validate(logic.judge.code_field.as_deref())?;
    let solution = SolutionFile {
        steps: logic.steps.clone(),
        expected_final_state: plan.answer.ground_truth_fields.clone(),
        submission_schema: logic.submission_schema.clone(),
        intended_state: logic.intended_state.clone(),
        judge: logic.judge.clone(),
    };
    solution.validate()?;
    if !logic.submission_schema.is_empty() {
        solution
            .conforms(&logic.intended_state)
            .map_err(|e| ForgeError::Assembly(format!("intended state: {e}")))?;
    }

    let mut bundle = WebsiteBundle {
        root: out_dir.to_path_buf(),
        pages: Vec::new(),
        assets: Vec::new(),
        metadata: BundleMetadata {
            site_name: logic.site_name.clone(),
            routes,
            asset_kinds,
            network_delay: logic.network_delay.clone(),
            ..Default::default()
        },
        answer,
        solution,
        task: TaskCard::from_plan(task_id, plan),
    };
    bundle.refresh()?;

    let report = audit_bundle(&bundle)?;
    if !report.passed() {
        let details: Vec<String> = report.flags.iter().map(|f| format!("{}: {}", f.file, f.detail)).collect();
        return Err(ForgeError::Assembly(format!("anti-cheat audit failed: {}", details.join("; "))));
    }

    if let Some(field) = &logic.judge.code_field {
        let code = resolve_with_program(&logic.intended_state, &bundle.answer, &logic.judge)?;
        let expected = plan.answer.ground_truth_fields.get(field).cloned().unwrap_or_default();
        if code != expected {
            return Err(ForgeError::Assembly(format!(
                "intended state resolves to `{code}`, not the ground-truth code"
            )));
        }
    }
    let inv = bundle.inventory();
    info!(task_id, pages = inv.pages, assets = inv.assets, code_data = inv.code_data, "bundle assembled");
    Ok(bundle)
}
