//! Real-web noise: the runtime-config island, the injected page runtime,
//! and the seeded popup timing shared with the simulated browser.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::script::obfuscate;
use crate::bundle::nav::resolve_relative;
use crate::bundle::{NetworkDelay, WebsiteBundle, MAIN_SCRIPT};
use crate::error::{ForgeError, Result};
use crate::logic::{Derivation, JudgeRule};

pub const ISLAND_ID: &str = "forge-runtime-config";
pub const RUNTIME_BEGIN: &str = "/* forge-runtime:begin */";
pub const RUNTIME_END: &str = "/* forge-runtime:end */";
/// Storage key holding the page-load counter that varies popup draws.
pub const LOAD_COUNTER_KEY: &str = "forge_loads";

/// Unobfuscated source of the page runtime.
pub const RUNTIME_SOURCE: &str = include_str!("runtime.js");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopupContent {
    pub title: String,
    pub body: String,
    pub close_label: String,
}

impl Default for PopupContent {
    fn default() -> Self {
        Self {
            title: "Limited-time offer".into(),
            body: "Subscribe to our newsletter and get 10% off your first booking.".into(),
            close_label: "×".into(),
        }
    }
}

fn default_cookie_delay() -> u64 {
    1000
}
fn default_popup_min() -> u64 {
    5000
}
fn default_popup_max() -> u64 {
    15000
}
fn default_keys() -> Vec<String> {
    vec!["forge_cookie_consent".into(), "forge_promo_dismissed".into()]
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(default = "default_cookie_delay")]
    pub cookie_banner_delay_ms: u64,
    #[serde(default = "default_popup_min")]
    pub popup_delay_min_ms: u64,
    #[serde(default = "default_popup_max")]
    pub popup_delay_max_ms: u64,
    /// `[cookie consent key, popup dismissal key]`.
    #[serde(default = "default_keys")]
    pub suppression_keys: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_delay: Option<NetworkDelay>,
    #[serde(default)]
    pub popup: PopupContent,
    /// Seed written into the island; servers override it per run.
    #[serde(default)]
    pub seed: u32,
    #[serde(default = "default_true")]
    pub obfuscate: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            cookie_banner_delay_ms: default_cookie_delay(),
            popup_delay_min_ms: default_popup_min(),
            popup_delay_max_ms: default_popup_max(),
            suppression_keys: default_keys(),
            network_delay: None,
            popup: PopupContent::default(),
            seed: 0,
            obfuscate: true,
        }
    }
}

impl NoiseConfig {
    pub fn new(cookie_delay_ms: u64, popup_min_ms: u64, popup_max_ms: u64) -> Result<Self> {
        let cfg = Self {
            cookie_banner_delay_ms: cookie_delay_ms,
            popup_delay_min_ms: popup_min_ms,
            popup_delay_max_ms: popup_max_ms,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.popup_delay_min_ms > self.popup_delay_max_ms {
            return Err(ForgeError::Config(format!(
                "popup delay minimum {} exceeds maximum {}",
                self.popup_delay_min_ms, self.popup_delay_max_ms
            )));
        }
        if self.suppression_keys.len() != 2 || self.suppression_keys.iter().any(|k| k.is_empty()) {
            return Err(ForgeError::Config(
                "suppression_keys must name the cookie key and the popup key".into(),
            ));
        }
        if let Some(nd) = &self.network_delay {
            for r in nd.default.iter().chain(nd.routes.values()) {
                if r.min_ms > r.max_ms {
                    return Err(ForgeError::Config("network delay range is inverted".into()));
                }
            }
        }
        Ok(())
    }
}

/// Contents of the runtime-config JSON island.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeConfig {
    pub cookie_delay_ms: u64,
    pub popup_delay_min_ms: u64,
    pub popup_delay_max_ms: u64,
    pub suppression_keys: Vec<String>,
    pub judge_rules: Vec<JudgeRule>,
    pub seed: u32,
    pub state_prefix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_field: Option<String>,
    #[serde(default)]
    pub derivations: Vec<Derivation>,
    /// Judge outcome to Base64 code.
    #[serde(default)]
    pub encoded_codes: BTreeMap<String, String>,
    #[serde(default)]
    pub popup: PopupContent,
}

impl RuntimeConfig {
    pub fn for_bundle(bundle: &WebsiteBundle, noise: &NoiseConfig) -> Self {
        let judge = &bundle.solution.judge;
        let mut encoded_codes = bundle.answer.deceptive_codes.clone();
        if let Some(code) = judge.code_field.as_ref().and_then(|f| bundle.answer.ground_truth.get(f)) {
            encoded_codes.insert("correct".into(), code.clone());
        }
        Self {
            cookie_delay_ms: noise.cookie_banner_delay_ms,
            popup_delay_min_ms: noise.popup_delay_min_ms,
            popup_delay_max_ms: noise.popup_delay_max_ms,
            suppression_keys: noise.suppression_keys.clone(),
            judge_rules: judge.rules.clone(),
            seed: noise.seed,
            state_prefix: judge.state_prefix.clone(),
            code_field: judge.code_field.clone(),
            derivations: judge.derivations.clone(),
            encoded_codes,
            popup: noise.popup.clone(),
        }
    }
}

/// The mulberry32 generator, bit-identical to the runtime's.
#[derive(Debug, Clone)]
pub struct Mulberry32(u32);

impl Mulberry32 {
    pub fn new(seed: u32) -> Self {
        Self(seed)
    }

    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x6d2b_79f5);
        let a = self.0;
        let mut t = (a ^ (a >> 15)).wrapping_mul(1 | a);
        t = t.wrapping_add((t ^ (t >> 7)).wrapping_mul(61 | t)) ^ t;
        (t ^ (t >> 14)) as f64 / 4_294_967_296.0
    }
}

/// Popup delay for the `load_index`-th page load under `seed`; always in
/// `[min_ms, max_ms]`.
pub fn popup_delay(seed: u32, load_index: u32, min_ms: u64, max_ms: u64) -> u64 {
    let mixed = seed ^ load_index.wrapping_mul(0x9e37_79b1);
    let r = Mulberry32::new(mixed).next_f64();
    min_ms + (r * (max_ms - min_ms + 1) as f64).floor() as u64
}

fn island_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?is)<script\b[^>]*\bid\s*=\s*["']forge-runtime-config["'][^>]*>(.*?)</script>\n?"#)
            .expect("regex")
    })
}

fn main_include_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?is)\s*<script\b[^>]*\bsrc\s*=\s*["']([^"']*js/main\.js)["'][^>]*>\s*</script>"#).expect("regex")
    })
}

/// Parses the runtime-config island of a page, if present.
pub fn read_island(html: &str) -> Option<RuntimeConfig> {
    let caps = island_re().captures(html)?;
    serde_json::from_str(&caps[1].replace("<\\/", "</")).ok()
}

pub fn island_count(html: &str) -> usize {
    island_re().find_iter(html).count()
}

fn render_island(cfg: &RuntimeConfig) -> Result<String> {
    let json = serde_json::to_string(cfg)?.replace("</", "<\\/");
    Ok(format!("<script id=\"{ISLAND_ID}\" type=\"application/json\">{json}</script>"))
}

/// Replaces the island's seed, leaving the rest of the page untouched.
pub fn rewrite_island_seed(html: &str, seed: u32) -> Option<String> {
    let caps = island_re().captures(html)?;
    let whole = caps.get(0)?;
    let mut cfg = read_island(html)?;
    cfg.seed = seed;
    let tail = if whole.as_str().ends_with('\n') { "\n" } else { "" };
    let island = render_island(&cfg).ok()?;
    Some(format!("{}{island}{tail}{}", &html[..whole.start()], &html[whole.end()..]))
}

/// Page files' references to the site script, resolved against the page.
pub fn main_script_includes(page_rel: &str, html: &str) -> usize {
    main_include_re()
        .captures_iter(html)
        .filter(|c| resolve_relative(page_rel, &c[1]) == MAIN_SCRIPT)
        .count()
}

/// Whether the site script carries the injected runtime.
pub fn has_runtime(main_js: &str) -> bool {
    main_js.contains(RUNTIME_BEGIN) && main_js.contains(RUNTIME_END)
}

pub fn runtime_block_count(main_js: &str) -> usize {
    main_js.matches(RUNTIME_BEGIN).count()
}

/// The runtime as shipped: obfuscated with a key derived from the site.
pub fn runtime_source(obfuscated: bool, key: &str) -> Result<String> {
    if obfuscated {
        Ok(obfuscate(RUNTIME_SOURCE, key)?.0)
    } else {
        Ok(RUNTIME_SOURCE.to_string())
    }
}

fn relative_prefix(page_rel: &str) -> String {
    "../".repeat(page_rel.matches('/').count())
}

fn rewrite_page(page_rel: &str, html: &str, island: &str) -> String {
    let mut page = island_re().replace_all(html, "").into_owned();
    let mut seen = 0;
    page = main_include_re()
        .replace_all(&page, |c: &regex::Captures<'_>| {
            if resolve_relative(page_rel, &c[1]) != MAIN_SCRIPT {
                return c[0].to_string();
            }
            seen += 1;
            if seen == 1 {
                c[0].to_string()
            } else {
                String::new()
            }
        })
        .into_owned();
    if seen == 0 {
        let tag = format!("<script src=\"{}{MAIN_SCRIPT}\"></script>\n", relative_prefix(page_rel));
        match page.rfind("</body>") {
            Some(pos) => page.insert_str(pos, &tag),
            None => page.push_str(&tag),
        }
    }
    let island_line = format!("{island}\n");
    match page.find("</head>") {
        Some(pos) => page.insert_str(pos, &island_line),
        None => match page.find("<body") {
            Some(pos) => page.insert_str(pos, &island_line),
            None => page.insert_str(0, &island_line),
        },
    }
    page
}

/// Embeds the runtime-config island in every page, makes every page load
/// the site script exactly once, and appends the runtime to that script.
/// Idempotent.
pub fn inject_noise(bundle: &mut WebsiteBundle, noise: &NoiseConfig) -> Result<()> {
    noise.validate()?;
    let cfg = RuntimeConfig::for_bundle(bundle, noise);
    let island = render_island(&cfg)?;
    for page in bundle.pages.clone() {
        let html = bundle.read_text(&page.file).map_err(|e| ForgeError::Repair {
            file: page.file.clone(),
            reason: e.to_string(),
        })?;
        let updated = rewrite_page(&page.file, &html, &island);
        if updated != html {
            bundle.write_text(&page.file, &updated).map_err(|e| ForgeError::Repair {
                file: page.file.clone(),
                reason: e.to_string(),
            })?;
        }
    }

    let existing = if bundle.path(MAIN_SCRIPT).is_file() {
        bundle.read_text(MAIN_SCRIPT)?
    } else {
        String::new()
    };
    let site_part = match existing.find(RUNTIME_BEGIN) {
        Some(pos) => existing[..pos].trim_end().to_string(),
        None => existing.trim_end().to_string(),
    };
    let runtime = runtime_source(noise.obfuscate, &bundle.metadata.site_name)?;
    let mut script = site_part;
    if !script.is_empty() {
        script.push_str("\n\n");
    }
    script.push_str(RUNTIME_BEGIN);
    script.push('\n');
    script.push_str(runtime.trim_end());
    script.push('\n');
    script.push_str(RUNTIME_END);
    script.push('\n');
    if script != existing {
        bundle.write_text(MAIN_SCRIPT, &script)?;
    }
    if noise.network_delay.is_some() {
        bundle.metadata.network_delay = noise.network_delay.clone();
    }
    bundle.refresh()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mulberry_reference_values() {
        let mut r = Mulberry32::new(0);
        let a = r.next_f64();
        assert!((0.0..1.0).contains(&a));
        let mut r1 = Mulberry32::new(42);
        let mut r2 = Mulberry32::new(42);
        assert_eq!(r1.next_f64(), r2.next_f64());
    }

    #[test]
    fn popup_delay_bounds() {
        for i in 0..500 {
            let d = popup_delay(7, i, 5000, 15000);
            assert!((5000..=15000).contains(&d));
        }
        assert_eq!(popup_delay(3, 9, 7000, 7000), 7000);
    }

    #[test]
    fn inverted_range_is_rejected() {
        assert!(matches!(NoiseConfig::new(1000, 9000, 8000), Err(ForgeError::Config(_))));
        assert!(NoiseConfig::new(1000, 7000, 7000).is_ok());
    }

    #[test]
    fn page_rewrite_is_idempotent() {
        let html = "<html><head><title>x</title></head><body><p>x</p>\
<script src=\"js/main.js\"></script><script src=\"./js/main.js\"></script></body></html>";
        let once = rewrite_page("index.html", html, "<script id=\"forge-runtime-config\" type=\"application/json\">{}</script>");
        let twice = rewrite_page("index.html", &once, "<script id=\"forge-runtime-config\" type=\"application/json\">{}</script>");
        assert_eq!(once, twice);
        assert_eq!(main_script_includes("index.html", &once), 1);
        assert_eq!(island_count(&once), 1);
        let nested = rewrite_page("docs/a.html", "<body></body>", "<i></i>");
        assert!(nested.contains("src=\"../js/main.js\""));
    }
}
