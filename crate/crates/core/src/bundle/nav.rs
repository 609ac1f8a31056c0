//! Navigation graph extraction over a bundle's pages.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use scraper::{ElementRef, Html, Selector};
use serde::{Deserialize, Serialize};

use super::WebsiteBundle;
use crate::error::{ForgeError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeTarget {
    Page { page: String },
    External { url: String },
    Dead,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavEdge {
    pub from: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub href: Option<String>,
    pub target: EdgeTarget,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<NavEdge>,
}

impl NavGraph {
    pub fn dead_edges(&self) -> impl Iterator<Item = &NavEdge> {
        self.edges.iter().filter(|e| e.target == EdgeTarget::Dead)
    }

    pub fn dead_count(&self) -> usize {
        self.dead_edges().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    Anchor,
    Form,
    Script,
}

/// A navigation element as written in the page source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLink {
    pub kind: LinkKind,
    pub text: String,
    pub href: Option<String>,
    /// `data-forge-placeholder`: groups dead links onto one placeholder page.
    pub placeholder: Option<String>,
}

/// Page id of an HTML file path relative to the bundle root.
pub fn page_id(rel_path: &str) -> String {
    rel_path.strip_suffix(".html").unwrap_or(rel_path).to_string()
}

pub fn element_text(el: &ElementRef<'_>) -> String {
    el.text().collect::<Vec<_>>().join(" ").split_whitespace().collect::<Vec<_>>().join(" ")
}

fn selector(css: &str) -> Selector {
    Selector::parse(css).expect("static selector")
}

fn script_nav_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"location(?:\.href)?\s*=\s*['"]([^'"]+)['"]"#).expect("regex"))
}

pub fn collect_links(html: &str) -> Vec<RawLink> {
    let doc = Html::parse_document(html);
    let mut out = Vec::new();
    let all = selector("a, form, [onclick]");
    let submit = selector("button, input[type=submit]");
    for el in doc.select(&all) {
        let v = el.value();
        let placeholder = v.attr("data-forge-placeholder").map(str::to_owned);
        match v.name() {
            "a" => out.push(RawLink {
                kind: LinkKind::Anchor,
                text: element_text(&el),
                href: v.attr("href").map(str::to_owned),
                placeholder,
            }),
            "form" => {
                if let Some(action) = v.attr("action") {
                    let text = el
                        .select(&submit)
                        .next()
                        .map(|b| {
                            let t = element_text(&b);
                            if t.is_empty() {
                                b.value().attr("value").unwrap_or("submit").to_string()
                            } else {
                                t
                            }
                        })
                        .unwrap_or_else(|| "form".into());
                    out.push(RawLink {
                        kind: LinkKind::Form,
                        text,
                        href: Some(action.to_string()),
                        placeholder,
                    });
                }
            }
            _ => {
                if let Some(cap) = v.attr("onclick").and_then(|js| script_nav_re().captures(js)) {
                    out.push(RawLink {
                        kind: LinkKind::Script,
                        text: element_text(&el),
                        href: Some(cap[1].to_string()),
                        placeholder,
                    });
                }
            }
        }
    }
    out
}

/// Whether an href cannot navigate anywhere by itself.
pub fn is_inert_href(href: Option<&str>) -> bool {
    match href.map(str::trim) {
        None | Some("") | Some("#") => true,
        Some(h) => h.to_ascii_lowercase().starts_with("javascript:"),
    }
}

pub fn is_external(href: &str) -> bool {
    let h = href.trim().to_ascii_lowercase();
    h.starts_with("//") || h.contains("://") || h.starts_with("mailto:") || h.starts_with("tel:")
}

/// Resolves a relative href against the directory of `from_rel` and returns
/// the bundle-relative path, without query or fragment.
pub fn resolve_relative(from_rel: &str, href: &str) -> String {
    let href = href.trim();
    let cut = href.find(['?', '#']).unwrap_or(href.len());
    let path = &href[..cut];
    let mut parts: Vec<&str> = if path.starts_with('/') {
        Vec::new()
    } else {
        let mut base: Vec<&str> = from_rel.split('/').collect();
        base.pop();
        base
    };
    for seg in path.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            s => parts.push(s),
        }
    }
    let mut joined = parts.join("/");
    if path.is_empty() {
        return from_rel.to_string();
    }
    if path.ends_with('/') || joined.is_empty() {
        if !joined.is_empty() {
            joined.push('/');
        }
        joined.push_str("index.html");
    }
    joined
}

fn classify(from_rel: &str, href: Option<&str>, root: &Path, pages: &BTreeSet<String>) -> Option<EdgeTarget> {
    if is_inert_href(href) {
        return Some(EdgeTarget::Dead);
    }
    let href = href.unwrap_or_default().trim();
    if is_external(href) {
        return Some(EdgeTarget::External { url: href.to_string() });
    }
    if href.starts_with('#') {
        return Some(EdgeTarget::Page {
            page: page_id(from_rel),
        });
    }
    let rel = resolve_relative(from_rel, href);
    if pages.contains(&rel) {
        Some(EdgeTarget::Page { page: page_id(&rel) })
    } else if root.join(&rel).is_file() {
        None
    } else {
        Some(EdgeTarget::Dead)
    }
}

/// Builds the graph from the HTML files under `root`; `pages` are
/// bundle-relative paths.
pub fn extract_from_dir(root: &Path, pages: &[String]) -> Result<NavGraph> {
    let set: BTreeSet<String> = pages.iter().cloned().collect();
    let mut graph = NavGraph {
        nodes: set.iter().map(|p| page_id(p)).collect(),
        edges: Vec::new(),
    };
    for rel in &set {
        let bytes = std::fs::read(root.join(rel))?;
        let html = String::from_utf8(bytes).map_err(|_| ForgeError::Extraction {
            file: rel.clone(),
            reason: "page is not valid UTF-8".into(),
        })?;
        for link in collect_links(&html) {
            if let Some(target) = classify(rel, link.href.as_deref(), root, &set) {
                graph.edges.push(NavEdge {
                    from: page_id(rel),
                    text: link.text,
                    href: link.href,
                    target,
                });
            }
        }
    }
    Ok(graph)
}

pub fn extract_nav_graph(bundle: &WebsiteBundle) -> Result<NavGraph> {
    let pages: Vec<String> = bundle.pages.iter().map(|p| p.file.clone()).collect();
    extract_from_dir(&bundle.root, &pages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_resolution() {
        assert_eq!(resolve_relative("index.html", "blog.html"), "blog.html");
        assert_eq!(resolve_relative("venues/a.html", "../b.html?x=1#top"), "b.html");
        assert_eq!(resolve_relative("venues/a.html", "/"), "index.html");
        assert_eq!(resolve_relative("index.html", "docs/"), "docs/index.html");
    }

    #[test]
    fn inert_and_external() {
        assert!(is_inert_href(Some("#")));
        assert!(is_inert_href(Some("javascript:void(0)")));
        assert!(is_inert_href(None));
        assert!(!is_inert_href(Some("#section")));
        assert!(is_external("https://example.com"));
        assert!(is_external("//cdn.example.com/x.js"));
        assert!(!is_external("about.html"));
    }

    #[test]
    fn single_page_without_links_has_no_edges() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("index.html"), "<html><body><p>hi</p></body></html>").unwrap();
        let g = extract_from_dir(dir.path(), &["index.html".into()]).unwrap();
        assert_eq!(g.nodes, vec!["index"]);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn links_are_classified() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("index.html"),
            r##"<a href="b.html">B</a><a href="missing.html">M</a><a href="#">X</a>
               <a href="https://example.com">E</a><a href="style.css">S</a>
               <form action="b.html"><button>Go</button></form>"##,
        )
        .unwrap();
        std::fs::write(dir.path().join("b.html"), "<p>b</p>").unwrap();
        std::fs::write(dir.path().join("style.css"), "").unwrap();
        let g = extract_from_dir(dir.path(), &["index.html".into(), "b.html".into()]).unwrap();
        let kinds: Vec<_> = g.edges.iter().map(|e| (e.text.as_str(), e.target.clone())).collect();
        assert_eq!(kinds.len(), 5);
        assert_eq!(g.dead_count(), 2);
        assert!(kinds.contains(&("Go", EdgeTarget::Page { page: "b".into() })));
    }
}
