//! Website bundles: the self-contained static site a task runs in, plus
//! the control files the pipeline keeps next to it.
//!
//! Layout under the bundle root:
//!
//! ```text
//! index.html, <page>.html   pages
//! assets/*                  images and charts
//! css/style.css             stylesheet
//! js/main.js                site script (runtime appended after refinement)
//! data.json                 encoded answer table
//! solution.json             replay script and expected state (validator only)
//! metadata.json             navigation graph, routes, stats, network delay
//! task.json                 instruction card (harness only)
//! ```

pub mod assemble;
pub mod assets;
pub mod audit;
pub mod codec;
pub mod judge;
pub mod nav;
pub mod solution;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::blueprint::{AnswerType, Domain, TaskBlueprint};
use crate::difficulty::{DifficultyVector, OverallLevel};
use crate::error::{ForgeError, Result};

pub use assemble::{assemble_bundle, GenerationOutput};
pub use assets::{AssetProvider, AssetRequest, AssetSpec, StubAssetProvider};
pub use audit::{audit_bundle, AuditFlag, AuditKind, AuditReport};
pub use codec::{decode_secret, encode_secret, Base64Codec, SecretCodec};
pub use judge::{resolve_submission, resolve_with_program, DataFile, EncodedAnswerConfig};
pub use nav::{extract_nav_graph, EdgeTarget, NavEdge, NavGraph};
pub use solution::{SolutionAction, SolutionFile, Target};

pub const DATA_FILE: &str = "data.json";
pub const SOLUTION_FILE: &str = "solution.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const TASK_FILE: &str = "task.json";
pub const STYLESHEET: &str = "css/style.css";
pub const MAIN_SCRIPT: &str = "js/main.js";

/// Files that belong to the pipeline, not to the served site.
pub const CONTROL_FILES: [&str; 3] = [SOLUTION_FILE, METADATA_FILE, TASK_FILE];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    Image,
    Chart,
    Stylesheet,
    Script,
    Data,
}

impl AssetKind {
    pub fn is_media(self) -> bool {
        matches!(self, AssetKind::Image | AssetKind::Chart)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageEntry {
    pub page_id: String,
    pub route: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetEntry {
    pub kind: AssetKind,
    pub path: String,
}

/// Inclusive latency range in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRange {
    pub min_ms: u64,
    pub max_ms: u64,
}

impl DelayRange {
    pub fn fixed(ms: u64) -> Self {
        Self { min_ms: ms, max_ms: ms }
    }
}

/// Per-route artificial latency applied by the environment server.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDelay {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<DelayRange>,
    /// Keyed by request path, e.g. `/venue_book.html`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub routes: BTreeMap<String, DelayRange>,
}

impl NetworkDelay {
    pub fn for_path(&self, path: &str) -> Option<DelayRange> {
        self.routes.get(path).copied().or(self.default)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleInventory {
    pub pages: usize,
    pub assets: usize,
    pub code_data: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub site_name: String,
    /// Plan route to page file, e.g. `/search` to `search.html`.
    #[serde(default)]
    pub routes: BTreeMap<String, String>,
    #[serde(default)]
    pub asset_kinds: BTreeMap<String, AssetKind>,
    #[serde(default)]
    pub nav: NavGraph,
    #[serde(default)]
    pub stats: BundleInventory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_delay: Option<NetworkDelay>,
}

/// `task.json`: what the evaluated agent is told, plus index fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCard {
    pub task_id: String,
    pub title: String,
    pub user_query: String,
    pub domain: Domain,
    pub overall_level: OverallLevel,
    pub difficulty: DifficultyVector,
    pub answer_type: AnswerType,
    /// Names of the fields the agent must report.
    pub answer_fields: Vec<String>,
}

impl TaskCard {
    pub fn from_plan(task_id: &str, plan: &TaskBlueprint) -> Self {
        Self {
            task_id: task_id.to_string(),
            title: plan.title.clone(),
            user_query: plan.user_query.clone(),
            domain: plan.domain,
            overall_level: plan.overall_level,
            difficulty: plan.difficulty.clone(),
            answer_type: plan.answer.answer_type,
            answer_fields: plan.answer.ground_truth_fields.keys().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WebsiteBundle {
    pub root: PathBuf,
    pub pages: Vec<PageEntry>,
    pub assets: Vec<AssetEntry>,
    pub metadata: BundleMetadata,
    pub answer: EncodedAnswerConfig,
    pub solution: SolutionFile,
    pub task: TaskCard,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ForgeError::MissingFile(path.to_path_buf()),
        _ => ForgeError::Io(e),
    })?;
    serde_json::from_str(&text).map_err(|e| ForgeError::Parse(format!("{}: {e}", path.display())))
}

/// All files under `root`, as sorted `/`-separated relative paths.
pub fn list_files(root: &Path) -> Result<Vec<String>> {
    fn walk(dir: &Path, prefix: &str, out: &mut Vec<String>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let rel = if prefix.is_empty() {
                name
            } else {
                format!("{prefix}/{name}")
            };
            if entry.file_type()?.is_dir() {
                walk(&entry.path(), &rel, out)?;
            } else {
                out.push(rel);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, "", &mut out)?;
    out.sort();
    Ok(out)
}

fn kind_for(path: &str, known: &BTreeMap<String, AssetKind>) -> Option<AssetKind> {
    if let Some(k) = known.get(path) {
        return Some(*k);
    }
    let ext = path.rsplit('.').next().unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "css" => Some(AssetKind::Stylesheet),
        "js" => Some(AssetKind::Script),
        "json" => Some(AssetKind::Data),
        "png" | "jpg" | "jpeg" | "gif" | "webp" | "svg" => Some(AssetKind::Image),
        _ => None,
    }
}

impl WebsiteBundle {
    pub fn load(root: &Path) -> Result<Self> {
        let task: TaskCard = read_json(&root.join(TASK_FILE))?;
        let data: DataFile = read_json(&root.join(DATA_FILE))?;
        let solution: SolutionFile = read_json(&root.join(SOLUTION_FILE))?;
        let metadata: BundleMetadata = read_json(&root.join(METADATA_FILE))?;
        let mut bundle = WebsiteBundle {
            root: root.to_path_buf(),
            pages: Vec::new(),
            assets: Vec::new(),
            answer: EncodedAnswerConfig::from_data_file(task.answer_type, data),
            metadata,
            solution,
            task,
        };
        bundle.rescan()?;
        Ok(bundle)
    }

    /// Re-reads the page and asset lists from disk.
    pub fn rescan(&mut self) -> Result<()> {
        let files = list_files(&self.root)?;
        let by_file: BTreeMap<&str, &str> = self
            .metadata
            .routes
            .iter()
            .map(|(route, file)| (file.as_str(), route.as_str()))
            .collect();
        self.pages.clear();
        self.assets.clear();
        for f in files {
            if CONTROL_FILES.contains(&f.as_str()) {
                continue;
            }
            if f.ends_with(".html") {
                let route = by_file.get(f.as_str()).map(|r| r.to_string()).unwrap_or_else(|| format!("/{f}"));
                self.pages.push(PageEntry {
                    page_id: nav::page_id(&f),
                    route,
                    file: f,
                });
            } else if let Some(kind) = kind_for(&f, &self.metadata.asset_kinds) {
                self.assets.push(AssetEntry { kind, path: f });
            }
        }
        Ok(())
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn read_text(&self, rel: &str) -> Result<String> {
        fs::read_to_string(self.path(rel)).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ForgeError::MissingFile(self.path(rel)),
            _ => ForgeError::Io(e),
        })
    }

    pub fn write_text(&self, rel: &str, content: &str) -> Result<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, content)?;
        Ok(())
    }

    pub fn inventory(&self) -> BundleInventory {
        let pages = self.pages.len();
        let assets = self.assets.iter().filter(|a| a.kind.is_media()).count();
        let code_data = self.assets.len() - assets;
        BundleInventory {
            pages,
            assets,
            code_data,
            total: pages + assets + code_data,
        }
    }

    /// Every file the environment server may deliver.
    pub fn served_files(&self) -> Result<Vec<String>> {
        Ok(list_files(&self.root)?
            .into_iter()
            .filter(|f| !CONTROL_FILES.contains(&f.as_str()))
            .collect())
    }

    /// Rescans, recomputes the navigation graph and stats, and rewrites the
    /// control files.
    pub fn refresh(&mut self) -> Result<()> {
        write_json(&self.path(DATA_FILE), &self.answer.data_file())?;
        self.rescan()?;
        self.metadata.nav = extract_nav_graph(self)?;
        self.metadata.stats = self.inventory();
        self.save_control()
    }

    pub fn save_control(&self) -> Result<()> {
        write_json(&self.path(TASK_FILE), &self.task)?;
        write_json(&self.path(DATA_FILE), &self.answer.data_file())?;
        write_json(&self.path(SOLUTION_FILE), &self.solution)?;
        write_json(&self.path(METADATA_FILE), &self.metadata)
    }

    /// Plaintext ground truth, decoded from the answer table.
    pub fn ground_truth(&self) -> Result<BTreeMap<String, String>> {
        self.answer.decoded_ground_truth()
    }

    /// Copies the whole bundle directory to `dest`.
    pub fn copy_to(&self, dest: &Path) -> Result<WebsiteBundle> {
        for rel in list_files(&self.root)? {
            let to = dest.join(&rel);
            if let Some(parent) = to.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::copy(self.root.join(&rel), to)?;
        }
        WebsiteBundle::load(dest)
    }
}
