//! In-process simulated browser. Parses bundle pages, models form state,
//! local storage, the injected runtime's bindings and noise on a virtual
//! clock, and native dialogs raised by site scripts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Cursor;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ego_tree::NodeId;
use scraper::{ElementRef, Html, Node};
use serde::{Deserialize, Serialize};

use super::{ActionOutcome, Browser, BrowserAction, DomNode, Observation};
use crate::bundle::codec::decode_secret;
use crate::bundle::nav::{element_text, is_external, is_inert_href, resolve_relative};
use crate::error::{ForgeError, Result};
use crate::logic::{derive, format_currency, State};
use crate::refinement::noise::{has_runtime, popup_delay, read_island, RuntimeConfig, LOAD_COUNTER_KEY};
use crate::refinement::script::{blocking_dialog_calls, inline_scripts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Virtual time each action takes.
    pub action_ms: u64,
    /// Replaces the runtime-config seed of every page, as the server does.
    pub seed: Option<u32>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            action_ms: 2000,
            seed: None,
        }
    }
}

const SKIPPED: [&str; 6] = ["head", "script", "style", "noscript", "template", "title"];
const KEPT_ATTRS: [&str; 16] = [
    "id",
    "name",
    "type",
    "value",
    "href",
    "action",
    "role",
    "aria-label",
    "placeholder",
    "min",
    "max",
    "required",
    "data-forge-field",
    "data-forge-bind",
    "data-forge-noise",
    "data-forge-placeholder",
];

#[derive(Debug, Clone)]
struct SimNode {
    tag: String,
    attrs: BTreeMap<String, String>,
    own_text: String,
    text: String,
    form: Option<usize>,
    options: Vec<(String, String)>,
}

impl SimNode {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.get(name).map(String::as_str)
    }

    fn input_type(&self) -> &str {
        match self.tag.as_str() {
            "input" => self.attr("type").unwrap_or("text"),
            "button" => self.attr("type").unwrap_or("submit"),
            _ => "",
        }
    }

    fn interactive(&self) -> bool {
        match self.tag.as_str() {
            "a" | "button" | "select" | "textarea" => true,
            "input" => self.input_type() != "hidden",
            _ => self.attrs.contains_key("onclick"),
        }
    }

    fn is_control(&self) -> bool {
        matches!(self.tag.as_str(), "input" | "select" | "textarea")
    }

    fn is_toggle(&self) -> bool {
        self.tag == "input" && matches!(self.input_type(), "radio" | "checkbox")
    }
}

#[derive(Debug, Clone)]
struct Page {
    file: String,
    title: String,
    nodes: Vec<SimNode>,
    dialog_scripts: bool,
    config: Option<RuntimeConfig>,
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_page(root: &Path, file: &str, html: &str) -> Page {
    let doc = Html::parse_document(html);
    let title = doc
        .select(&scraper::Selector::parse("title").expect("selector"))
        .next()
        .map(|t| element_text(&t))
        .unwrap_or_default();
    let mut nodes = Vec::new();
    let mut ids: HashMap<NodeId, usize> = HashMap::new();
    for node in doc.tree.root().descendants() {
        let Some(el) = ElementRef::wrap(node) else { continue };
        let name = el.value().name();
        if SKIPPED.contains(&name) || el.ancestors().filter_map(ElementRef::wrap).any(|a| SKIPPED.contains(&a.value().name())) {
            continue;
        }
        if matches!(name, "html" | "body" | "option") {
            continue;
        }
        let own_text = collapse(
            &el.children()
                .filter_map(|c| match c.value() {
                    Node::Text(t) => Some(&**t),
                    _ => None,
                })
                .collect::<Vec<_>>()
                .join(" "),
        );
        let form = el
            .ancestors()
            .filter_map(ElementRef::wrap)
            .find(|a| a.value().name() == "form")
            .and_then(|f| ids.get(&f.id()).copied());
        let attrs: BTreeMap<String, String> = el
            .value()
            .attrs()
            .filter(|(k, _)| KEPT_ATTRS.contains(k) || *k == "checked" || *k == "onclick" || *k == "data-forge-format" || *k == "data-forge-message" || *k == "data-forge-range-message" || *k == "data-forge-form")
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let options = if name == "select" {
            el.children()
                .filter_map(ElementRef::wrap)
                .filter(|o| o.value().name() == "option")
                .map(|o| {
                    let text = element_text(&o);
                    (o.value().attr("value").map(str::to_owned).unwrap_or_else(|| text.clone()), text)
                })
                .collect()
        } else {
            Vec::new()
        };
        ids.insert(el.id(), nodes.len());
        nodes.push(SimNode {
            tag: name.to_string(),
            attrs,
            own_text,
            text: element_text(&el),
            form,
            options,
        });
    }

    let mut scripts: Vec<String> = inline_scripts(html).into_iter().map(|(s, e)| html[s..e].to_string()).collect();
    let src_sel = scraper::Selector::parse("script[src]").expect("selector");
    let mut runtime = false;
    for s in doc.select(&src_sel) {
        let src = s.value().attr("src").unwrap_or_default();
        if is_external(src) {
            continue;
        }
        if let Ok(text) = std::fs::read_to_string(root.join(resolve_relative(file, src))) {
            runtime |= has_runtime(&text);
            scripts.push(text);
        }
    }
    let dialog_scripts = scripts.iter().any(|s| !blocking_dialog_calls(s).is_empty());
    let config = if runtime { read_island(html) } else { None };
    Page {
        file: file.to_string(),
        title,
        nodes,
        dialog_scripts,
        config,
    }
}

/// Accepts ISO dates and `MM/DD/YYYY`, returning the ISO form.
pub fn normalize_date(input: &str) -> Option<String> {
    let s = input.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%m/%d/%Y"))
        .ok()
        .map(|d| d.format("%Y-%m-%d").to_string())
}

enum Overlay {
    PopupClose,
    CookieAccept,
}

enum Hit {
    Overlay(Overlay),
    Node(usize),
}

pub struct SimBrowser {
    root: PathBuf,
    opts: SimOptions,
    storage: BTreeMap<String, String>,
    page: Option<Page>,
    values: HashMap<usize, String>,
    checked: BTreeSet<usize>,
    errors: Vec<(usize, String)>,
    page_time: u64,
    load_index: u32,
    blocked: Option<String>,
    history: Vec<String>,
}

impl SimBrowser {
    pub fn new(root: &Path, opts: SimOptions) -> Self {
        SimBrowser {
            root: root.to_path_buf(),
            opts,
            storage: BTreeMap::new(),
            page: None,
            values: HashMap::new(),
            checked: BTreeSet::new(),
            errors: Vec::new(),
            page_time: 0,
            load_index: 0,
            blocked: None,
            history: Vec::new(),
        }
    }

    pub fn storage(&self) -> &BTreeMap<String, String> {
        &self.storage
    }

    pub fn page_time_ms(&self) -> u64 {
        self.page_time
    }

    fn page(&self) -> Result<&Page> {
        self.page.as_ref().ok_or_else(|| ForgeError::Infrastructure("no page loaded".into()))
    }

    fn load(&mut self, file: &str) -> std::result::Result<(), String> {
        let path = self.root.join(file);
        if !file.ends_with(".html") || !path.is_file() {
            return Err(format!("404 not found: {file}"));
        }
        let html = std::fs::read_to_string(&path).map_err(|e| format!("cannot read {file}: {e}"))?;
        let mut page = parse_page(&self.root, file, &html);
        if let (Some(cfg), Some(seed)) = (page.config.as_mut(), self.opts.seed) {
            cfg.seed = seed;
        }
        self.values.clear();
        self.checked.clear();
        self.errors.clear();
        self.blocked = None;
        self.page_time = 0;
        for (i, n) in page.nodes.iter().enumerate() {
            if n.is_toggle() {
                if n.attrs.contains_key("checked") {
                    self.checked.insert(i);
                }
            } else if n.is_control() {
                let v = match n.tag.as_str() {
                    "select" => n.options.first().map(|o| o.0.clone()).unwrap_or_default(),
                    _ => n.attr("value").unwrap_or_default().to_string(),
                };
                self.values.insert(i, v);
            }
        }
        if let Some(cfg) = &page.config {
            let current = self.storage.get(LOAD_COUNTER_KEY).and_then(|v| v.parse::<u32>().ok()).unwrap_or(0);
            self.load_index = current;
            self.storage.insert(LOAD_COUNTER_KEY.into(), (current + 1).to_string());
            for (i, n) in page.nodes.iter().enumerate() {
                let Some(field) = n.attr("data-forge-field") else { continue };
                let stored = self.storage.get(&format!("{}{field}", cfg.state_prefix)).cloned().unwrap_or_default();
                if stored.is_empty() {
                    continue;
                }
                if n.is_toggle() {
                    if n.attr("value") == Some(stored.as_str()) {
                        self.checked.insert(i);
                    } else {
                        self.checked.remove(&i);
                    }
                } else if self.values.get(&i).is_none_or(|v| v.is_empty()) {
                    self.values.insert(i, stored);
                }
            }
        }
        self.page = Some(page);
        Ok(())
    }

    fn navigate(&mut self, target: &str) -> ActionOutcome {
        let previous = self.page.as_ref().map(|p| p.file.clone());
        match self.load(target) {
            Ok(()) => {
                if let Some(p) = previous {
                    self.history.push(p);
                }
                ActionOutcome::ok_with(format!("loaded {target}"))
            }
            Err(e) => ActionOutcome::fail(e),
        }
    }

    fn state(&self, prefix: &str) -> State {
        self.storage
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|f| (f.to_string(), v.clone())))
            .collect()
    }

    fn resolve_binding(&self, cfg: &RuntimeConfig, name: &str, state: &State) -> std::result::Result<String, String> {
        if cfg.code_field.as_deref() == Some(name) {
            let rule = cfg
                .judge_rules
                .iter()
                .find(|r| r.when.eval(state))
                .ok_or("forge-runtime: no judge rule matched")?;
            let outcome = rule.outcome.to_string();
            let encoded = cfg.encoded_codes.get(&outcome).ok_or(format!("forge-runtime: no code for outcome {outcome}"))?;
            return decode_secret(encoded).map_err(|e| e.to_string());
        }
        let derived = derive(&cfg.derivations, state).map_err(|e| e.to_string())?;
        if let Some(v) = derived.get(name) {
            return Ok(v.clone());
        }
        Ok(state.get(name).cloned().unwrap_or_default())
    }

    fn cookie_visible(&self) -> bool {
        match self.page.as_ref().and_then(|p| p.config.as_ref()) {
            Some(cfg) => {
                cfg.suppression_keys.first().is_some_and(|k| !self.storage.contains_key(k))
                    && self.page_time >= cfg.cookie_delay_ms
            }
            None => false,
        }
    }

    fn popup_visible(&self) -> bool {
        match self.page.as_ref().and_then(|p| p.config.as_ref()) {
            Some(cfg) => {
                cfg.suppression_keys.get(1).is_some_and(|k| !self.storage.contains_key(k))
                    && self.page_time
                        >= popup_delay(cfg.seed, self.load_index, cfg.popup_delay_min_ms, cfg.popup_delay_max_ms)
            }
            None => false,
        }
    }

    fn build_nodes(&self) -> (Vec<DomNode>, Vec<Hit>) {
        let mut out = Vec::new();
        let mut hits = Vec::new();
        let Some(page) = &self.page else {
            return (out, hits);
        };
        let cfg = page.config.as_ref();
        let push = |out: &mut Vec<DomNode>, hits: &mut Vec<Hit>, mut node: DomNode, hit: Option<Hit>| {
            if let Some(h) = hit {
                node.index = Some(hits.len());
                hits.push(h);
            }
            out.push(node);
        };
        if self.popup_visible() {
            let popup = &cfg.expect("popup implies config").popup;
            let attrs = BTreeMap::from([
                ("aria-label".to_string(), "Close".to_string()),
                ("data-forge-noise".to_string(), "popup".to_string()),
            ]);
            push(&mut out, &mut hits, DomNode { index: None, tag: "button".into(), text: popup.close_label.clone(), attrs }, Some(Hit::Overlay(Overlay::PopupClose)));
            push(&mut out, &mut hits, DomNode { index: None, tag: "h2".into(), text: popup.title.clone(), attrs: BTreeMap::new() }, None);
            push(&mut out, &mut hits, DomNode { index: None, tag: "p".into(), text: popup.body.clone(), attrs: BTreeMap::new() }, None);
        }
        let state = cfg.map(|c| self.state(&c.state_prefix)).unwrap_or_default();
        for (i, n) in page.nodes.iter().enumerate() {
            let bind = n.attr("data-forge-bind");
            let interactive = n.interactive();
            if !interactive && n.own_text.is_empty() && bind.is_none() && !n.attrs.contains_key("id") {
                continue;
            }
            let mut attrs: BTreeMap<String, String> =
                n.attrs.iter().filter(|(k, _)| KEPT_ATTRS.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect();
            let mut text = if interactive && matches!(n.tag.as_str(), "a" | "button") { n.text.clone() } else { n.own_text.clone() };
            if n.is_toggle() {
                attrs.remove("checked");
                if self.checked.contains(&i) {
                    attrs.insert("checked".into(), "true".into());
                }
            } else if n.is_control() {
                attrs.insert("value".into(), self.values.get(&i).cloned().unwrap_or_default());
            }
            if let (Some(name), Some(cfg)) = (bind, cfg) {
                match self.resolve_binding(cfg, name, &state) {
                    Ok(v) if v.is_empty() => {}
                    Ok(v) => {
                        text = if n.attr("data-forge-format") == Some("currency") { format_currency(&v) } else { v };
                    }
                    Err(_) => text = "Configuration error".into(),
                }
            }
            let hit = interactive.then_some(Hit::Node(i));
            push(&mut out, &mut hits, DomNode { index: None, tag: n.tag.clone(), text, attrs }, hit);
            for (_, msg) in self.errors.iter().filter(|(f, _)| *f == i) {
                let attrs = BTreeMap::from([
                    ("role".to_string(), "alert".to_string()),
                    ("data-forge-inline-error".to_string(), String::new()),
                ]);
                push(&mut out, &mut hits, DomNode { index: None, tag: "div".into(), text: format!("⊘ {msg}"), attrs }, None);
            }
        }
        if self.cookie_visible() {
            push(&mut out, &mut hits, DomNode { index: None, tag: "span".into(), text: "We use cookies to improve your experience.".into(), attrs: BTreeMap::new() }, None);
            let attrs = BTreeMap::from([("data-forge-noise".to_string(), "cookie".to_string())]);
            push(&mut out, &mut hits, DomNode { index: None, tag: "button".into(), text: "Accept".into(), attrs }, Some(Hit::Overlay(Overlay::CookieAccept)));
        }
        (out, hits)
    }

    fn save_field(&mut self, i: usize, value: &str) {
        let Some(page) = &self.page else { return };
        let (Some(cfg), Some(field)) = (page.config.as_ref(), page.nodes[i].attr("data-forge-field")) else {
            return;
        };
        self.storage.insert(format!("{}{field}", cfg.state_prefix), value.to_string());
    }

    fn validate_form(&self, form: usize) -> Vec<(usize, String)> {
        let page = self.page.as_ref().expect("page loaded");
        let mut errors = Vec::new();
        for (i, n) in page.nodes.iter().enumerate() {
            if n.form != Some(form) || !n.is_control() || n.is_toggle() {
                continue;
            }
            let value = self.values.get(&i).map(|v| v.trim().to_string()).unwrap_or_default();
            if n.attrs.contains_key("required") && value.is_empty() {
                let msg = n.attr("data-forge-message").unwrap_or("This field is required.");
                errors.push((i, msg.to_string()));
            } else if !value.is_empty() && n.input_type() == "number" {
                let num = value.parse::<f64>().ok();
                let min = n.attr("min").and_then(|m| m.parse::<f64>().ok());
                let max = n.attr("max").and_then(|m| m.parse::<f64>().ok());
                let bad = match num {
                    None => true,
                    Some(x) => min.is_some_and(|m| x < m) || max.is_some_and(|m| x > m),
                };
                if bad {
                    let msg = n.attr("data-forge-range-message").map(str::to_owned).unwrap_or_else(|| {
                        format!("Value must be between {} and {}.", n.attr("min").unwrap_or("null"), n.attr("max").unwrap_or("null"))
                    });
                    errors.push((i, msg));
                }
            }
        }
        errors
    }

    fn submit(&mut self, form: usize) -> ActionOutcome {
        let page = self.page.as_ref().expect("page loaded");
        let errors = self.validate_form(form);
        let managed = page.nodes[form].attrs.contains_key("data-forge-form") && page.config.is_some();
        if !errors.is_empty() {
            if page.dialog_scripts {
                self.blocked = Some(errors[0].1.clone());
                return ActionOutcome::fail(format!("native dialog opened: {}", errors[0].1));
            }
            if managed {
                let msg = errors[0].1.clone();
                self.errors = errors;
                return ActionOutcome::fail(format!("form validation failed: {msg}"));
            }
        }
        self.errors.clear();
        if managed {
            let fields: Vec<(usize, String)> = page
                .nodes
                .iter()
                .enumerate()
                .filter(|(i, n)| n.form == Some(form) && n.attrs.contains_key("data-forge-field") && (!n.is_toggle() || self.checked.contains(i)))
                .map(|(i, n)| {
                    let v = if n.is_toggle() { n.attr("value").unwrap_or("on").to_string() } else { self.values.get(&i).cloned().unwrap_or_default() };
                    (i, v)
                })
                .collect();
            for (i, v) in fields {
                self.save_field(i, &v);
            }
        }
        let page = self.page.as_ref().expect("page loaded");
        match page.nodes[form].attr("action").map(str::to_owned) {
            Some(action) if !is_inert_href(Some(&action)) => {
                let target = resolve_relative(&page.file, &action);
                self.navigate(&target)
            }
            _ => ActionOutcome::ok_with("form submitted"),
        }
    }

    fn click_node(&mut self, i: usize) -> ActionOutcome {
        let page = self.page.as_ref().expect("page loaded");
        let n = page.nodes[i].clone();
        match n.tag.as_str() {
            "a" => {
                let href = n.attr("href");
                if is_inert_href(href) {
                    return ActionOutcome::ok_with("link does not navigate");
                }
                let href = href.unwrap_or_default().trim();
                if is_external(href) {
                    return ActionOutcome::fail(format!("external navigation blocked: {href}"));
                }
                if href.starts_with('#') {
                    return ActionOutcome::ok();
                }
                let target = resolve_relative(&page.file, href);
                self.navigate(&target)
            }
            "input" if n.input_type() == "radio" => {
                let siblings: Vec<usize> = page
                    .nodes
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| o.tag == "input" && o.input_type() == "radio" && o.attr("name") == n.attr("name") && o.form == n.form)
                    .map(|(j, _)| j)
                    .collect();
                for j in siblings {
                    self.checked.remove(&j);
                }
                self.checked.insert(i);
                self.save_field(i, n.attr("value").unwrap_or("on"));
                ActionOutcome::ok()
            }
            "input" if n.input_type() == "checkbox" => {
                if !self.checked.remove(&i) {
                    self.checked.insert(i);
                    self.save_field(i, n.attr("value").unwrap_or("on"));
                }
                ActionOutcome::ok()
            }
            "input" | "button" if matches!(n.input_type(), "submit" | "image") => match n.form {
                Some(f) => self.submit(f),
                None => ActionOutcome::ok(),
            },
            _ => {
                if let Some(js) = n.attr("onclick") {
                    if let Some(target) = js.split(['"', '\'']).nth(1).filter(|_| js.contains("location")) {
                        let target = resolve_relative(&page.file, target);
                        return self.navigate(&target);
                    }
                }
                ActionOutcome::ok()
            }
        }
    }

    fn input_node(&mut self, i: usize, text: &str) -> ActionOutcome {
        let page = self.page.as_ref().expect("page loaded");
        let n = &page.nodes[i];
        if !n.is_control() || n.is_toggle() || matches!(n.input_type(), "submit" | "button" | "image" | "reset") {
            return ActionOutcome::fail(format!("element {} does not accept text", n.tag));
        }
        let value = match (n.tag.as_str(), n.input_type()) {
            ("select", _) => match n.options.iter().find(|(v, t)| v == text || t == text) {
                Some((v, _)) => v.clone(),
                None => return ActionOutcome::fail(format!("no option `{text}`")),
            },
            (_, "date") => match normalize_date(text) {
                Some(d) => d,
                None => return ActionOutcome::fail(format!("`{text}` is not a valid date")),
            },
            _ => text.to_string(),
        };
        self.values.insert(i, value.clone());
        self.save_field(i, &value);
        ActionOutcome::ok()
    }

    fn screenshot(&self, nodes: &[DomNode]) -> Result<Vec<u8>> {
        let seed = serde_json::to_vec(nodes)?;
        let digest = <sha2::Sha256 as sha2::Digest>::digest(&seed);
        let img = image::RgbImage::from_fn(160, 120, |x, y| {
            let k = ((x / 20 + y / 20 * 8) as usize) % digest.len();
            image::Rgb([digest[k], digest[(k + 1) % 32], digest[(k + 2) % 32]])
        });
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, image::ImageFormat::Png)
            .map_err(|e| ForgeError::Infrastructure(format!("screenshot encoding failed: {e}")))?;
        Ok(buf.into_inner())
    }
}

impl Browser for SimBrowser {
    fn open(&mut self, url: &str) -> Result<()> {
        self.load(url.trim_start_matches('/')).map_err(ForgeError::Infrastructure)
    }

    fn observe(&mut self, screenshot: bool) -> Result<Observation> {
        let page = self.page()?;
        let (mut nodes, _) = self.build_nodes();
        if let Some(msg) = &self.blocked {
            nodes.insert(
                0,
                DomNode {
                    index: None,
                    tag: "dialog".into(),
                    text: msg.clone(),
                    attrs: BTreeMap::from([("role".to_string(), "alertdialog".to_string())]),
                },
            );
        }
        let shot = if screenshot { Some(self.screenshot(&nodes)?) } else { None };
        Ok(Observation {
            url: page.file.clone(),
            title: page.title.clone(),
            nodes,
            screenshot: shot,
            storage: self.storage.clone(),
        })
    }

    fn act(&mut self, action: &BrowserAction) -> Result<ActionOutcome> {
        self.page()?;
        let outcome = if self.blocked.is_some() {
            ActionOutcome::fail("page is blocked by a native dialog")
        } else {
            match action {
                BrowserAction::Navigate { url } => {
                    if is_external(url) {
                        ActionOutcome::fail(format!("external navigation blocked: {url}"))
                    } else {
                        self.navigate(url.trim_start_matches('/'))
                    }
                }
                BrowserAction::Back => match self.history.pop() {
                    Some(prev) => match self.load(&prev) {
                        Ok(()) => ActionOutcome::ok_with(format!("loaded {prev}")),
                        Err(e) => ActionOutcome::fail(e),
                    },
                    None => ActionOutcome::fail("no previous page"),
                },
                BrowserAction::Scroll { .. } => ActionOutcome::ok(),
                BrowserAction::Terminate { .. } => ActionOutcome::ok(),
                BrowserAction::Click { index } | BrowserAction::Input { index, .. } => {
                    let (_, hits) = self.build_nodes();
                    let popup = self.popup_visible();
                    match hits.get(*index) {
                        None => ActionOutcome::fail(format!("no element with index {index}")),
                        Some(Hit::Overlay(o)) => {
                            if matches!(action, BrowserAction::Input { .. }) {
                                ActionOutcome::fail("element does not accept text")
                            } else {
                                let cfg = self.page()?.config.clone().expect("overlay implies config");
                                let key = match o {
                                    Overlay::PopupClose => cfg.suppression_keys[1].clone(),
                                    Overlay::CookieAccept => cfg.suppression_keys[0].clone(),
                                };
                                self.storage.insert(key, "1".into());
                                ActionOutcome::ok()
                            }
                        }
                        Some(Hit::Node(_)) if popup => ActionOutcome::fail("click intercepted by an overlay"),
                        Some(Hit::Node(i)) => {
                            let i = *i;
                            match action {
                                BrowserAction::Input { text, .. } => self.input_node(i, text),
                                _ => self.click_node(i),
                            }
                        }
                    }
                }
            }
        };
        self.page_time += self.opts.action_ms;
        Ok(outcome)
    }
}
