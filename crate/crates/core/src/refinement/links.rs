//! Dead-link resolution: missing targets become supporting pages, inert
//! links are pointed at grouped placeholder pages.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::bundle::nav::{collect_links, is_external, is_inert_href, resolve_relative, LinkKind};
use crate::bundle::{WebsiteBundle, MAIN_SCRIPT, STYLESHEET};
use crate::error::{ForgeError, Result};

/// Placeholder group for inert links that do not name one.
pub const DEFAULT_PLACEHOLDER: &str = "unavailable";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreatedKind {
    /// A page at the path a link already named.
    Supporting,
    /// A shared "Content Unavailable" page for inert links.
    Placeholder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatedPage {
    pub file: String,
    pub kind: CreatedKind,
    pub title: String,
    pub referrer: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkRepair {
    pub created: Vec<CreatedPage>,
    pub retargeted: usize,
}

fn anchor_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)<a\b[^>]*>").expect("regex"))
}

fn attr_re(name: &str) -> Regex {
    Regex::new(&format!(r#"(?is)\s{name}\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+))"#)).expect("regex")
}

fn attr_value(tag: &str, re: &Regex) -> Option<String> {
    re.captures(tag)
        .map(|c| c.get(1).or(c.get(2)).or(c.get(3)).map(|m| m.as_str().to_string()).unwrap_or_default())
}

fn escape_html(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn relative_to(from_rel: &str, target_rel: &str) -> String {
    format!("{}{target_rel}", "../".repeat(from_rel.matches('/').count()))
}

fn render_page(bundle: &WebsiteBundle, file: &str, page: &CreatedPage) -> String {
    let site = escape_html(&bundle.metadata.site_name);
    let title = escape_html(&page.title);
    let mut head = String::new();
    if bundle.path(STYLESHEET).is_file() {
        head.push_str(&format!("<link rel=\"stylesheet\" href=\"{}\">\n", relative_to(file, STYLESHEET)));
    }
    let body = match page.kind {
        CreatedKind::Supporting => format!(
            "<h1>{title}</h1>\n<p>The {title} section of {site} is being updated. Please check back soon.</p>\n"
        ),
        CreatedKind::Placeholder => format!(
            "<h1>Content Unavailable</h1>\n<p>The page you requested is not available right now.</p>\n"
        ),
    };
    let mut nav = format!(
        "<a class=\"btn\" href=\"{}\">Back</a>\n",
        relative_to(file, &page.referrer)
    );
    if page.referrer != "index.html" && bundle.path("index.html").is_file() {
        nav.push_str(&format!("<a class=\"btn\" href=\"{}\">Home</a>\n", relative_to(file, "index.html")));
    }
    let script = if bundle.path(MAIN_SCRIPT).is_file() {
        format!("<script src=\"{}\"></script>\n", relative_to(file, MAIN_SCRIPT))
    } else {
        String::new()
    };
    let heading = match page.kind {
        CreatedKind::Supporting => title.clone(),
        CreatedKind::Placeholder => "Content Unavailable".into(),
    };
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{heading} - {site}</title>\n{head}</head>\n<body>\n<main class=\"placeholder\">\n{body}{nav}</main>\n{script}</body>\n</html>\n"
    )
}

/// Retargets inert anchors of one page; returns the new HTML and the
/// placeholder groups used, in document order.
fn retarget_inert(page_rel: &str, html: &str) -> (String, Vec<(String, String)>) {
    let href_re = attr_re("href");
    let group_re = attr_re("data-forge-placeholder");
    let mut groups = Vec::new();
    let out = anchor_re().replace_all(html, |c: &regex::Captures<'_>| {
        let tag = &c[0];
        let href = attr_value(tag, &href_re);
        if !is_inert_href(href.as_deref()) {
            return tag.to_string();
        }
        let group = attr_value(tag, &group_re).unwrap_or_else(|| DEFAULT_PLACEHOLDER.to_string());
        let target = relative_to(page_rel, &format!("{group}.html"));
        groups.push((group, target.clone()));
        match href_re.find(tag) {
            Some(m) => format!("{} href=\"{target}\"{}", &tag[..m.start()], &tag[m.end()..]),
            None => format!("{} href=\"{target}\"{}", &tag[..2], &tag[2..]),
        }
    });
    (out.into_owned(), groups)
}

/// Makes every navigation element reach a page. Creates supporting pages
/// for missing targets and one placeholder page per inert-link group.
pub fn resolve_dead_links(bundle: &mut WebsiteBundle) -> Result<LinkRepair> {
    bundle.rescan()?;
    let mut pending: BTreeMap<String, CreatedPage> = BTreeMap::new();
    let mut repair = LinkRepair::default();
    let pages: Vec<String> = bundle.pages.iter().map(|p| p.file.clone()).collect();

    for rel in &pages {
        let html = bundle.read_text(rel)?;
        for link in collect_links(&html) {
            let href = link.href.as_deref();
            if is_inert_href(href) {
                if link.kind != LinkKind::Anchor {
                    continue;
                }
                let group = link.placeholder.clone().unwrap_or_else(|| DEFAULT_PLACEHOLDER.to_string());
                let file = format!("{group}.html");
                pending.entry(file).or_insert(CreatedPage {
                    file: format!("{group}.html"),
                    kind: CreatedKind::Placeholder,
                    title: link.text.clone(),
                    referrer: rel.clone(),
                });
                continue;
            }
            let href = href.unwrap_or_default().trim();
            if is_external(href) || href.starts_with('#') {
                continue;
            }
            let target = resolve_relative(rel, href);
            if bundle.path(&target).exists() || pages.contains(&target) {
                continue;
            }
            let title = if link.text.is_empty() {
                crate::bundle::nav::page_id(&target).replace(['_', '-'], " ")
            } else {
                link.text.clone()
            };
            pending.entry(target.clone()).or_insert(CreatedPage {
                file: target,
                kind: CreatedKind::Supporting,
                title,
                referrer: rel.clone(),
            });
        }
        let (updated, groups) = retarget_inert(rel, &html);
        if !groups.is_empty() {
            repair.retargeted += groups.len();
            bundle.write_text(rel, &updated).map_err(|e| ForgeError::Repair {
                file: rel.clone(),
                reason: e.to_string(),
            })?;
        }
    }

    for (file, page) in pending {
        if !file.ends_with(".html") {
            return Err(ForgeError::Repair {
                file: file.clone(),
                reason: "dead link targets a non-page resource".into(),
            });
        }
        let html = render_page(bundle, &file, &page);
        bundle.write_text(&file, &html).map_err(|e| ForgeError::Repair {
            file: file.clone(),
            reason: e.to_string(),
        })?;
        repair.created.push(page);
    }
    bundle.refresh()?;
    let dead = bundle.metadata.nav.dead_count();
    if dead > 0 {
        return Err(ForgeError::Repair {
            file: "metadata.json".into(),
            reason: format!("{dead} dead navigation edges remain"),
        });
    }
    Ok(repair)
}
