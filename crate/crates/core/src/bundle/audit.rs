//! Anti-cheating audit over the files a bundle serves.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::codec::decode_secret;
use super::{WebsiteBundle, DATA_FILE};
use crate::error::Result;

/// Plaintext answers shorter than this are not scanned for; they would
/// match incidental page text.
pub const MIN_SCANNED_LEN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    PlaintextGroundTruth,
    PlaintextDeceptiveCode,
    ExternalReference,
    UnencodedDataField,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditFlag {
    pub kind: AuditKind,
    pub file: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub flags: Vec<AuditFlag>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn has(&self, kind: AuditKind) -> bool {
        self.flags.iter().any(|f| f.kind == kind)
    }
}

fn is_text_file(path: &str) -> bool {
    let ext = path.rsplit('.').next().unwrap_or("").to_ascii_lowercase();
    matches!(ext.as_str(), "html" | "htm" | "css" | "js" | "json" | "svg" | "txt" | "xml" | "map")
}

fn external_ref_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"(?i)(?:\b(?:src|href|action|srcset|poster|data)\s*=\s*["']?\s*|url\(\s*["']?|@import\s+["']|(?:fetch|open|import)\s*\(\s*["'])((?:https?:)?//[^\s"')]+)"#,
        )
        .expect("regex")
    })
}

/// Absolute network references (`https://…`, `//host/…`) in markup,
/// stylesheets or script loads.
pub fn external_references(text: &str) -> Vec<String> {
    external_ref_re()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .collect()
}

fn collect_keys(value: &serde_json::Value, out: &mut Vec<String>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                out.push(k.clone());
                collect_keys(v, out);
            }
        }
        serde_json::Value::Array(items) => items.iter().for_each(|v| collect_keys(v, out)),
        _ => {}
    }
}

/// Runs every check and returns all flags; an empty report passes.
pub fn audit_bundle(bundle: &WebsiteBundle) -> Result<AuditReport> {
    let mut report = AuditReport::default();
    let gt = bundle.answer.decoded_ground_truth().unwrap_or_default();
    let deceptive = bundle.answer.decoded_deceptive_codes().unwrap_or_default();

    for file in bundle.served_files()? {
        if !is_text_file(&file) {
            continue;
        }
        let bytes = std::fs::read(bundle.path(&file))?;
        let text = String::from_utf8_lossy(&bytes);
        for (name, value) in &gt {
            if value.len() >= MIN_SCANNED_LEN && text.contains(value.as_str()) {
                report.flags.push(AuditFlag {
                    kind: AuditKind::PlaintextGroundTruth,
                    file: file.clone(),
                    detail: format!("ground-truth field `{name}` appears in plaintext"),
                });
            }
        }
        for (pattern, code) in &deceptive {
            if code.len() >= MIN_SCANNED_LEN && text.contains(code.as_str()) {
                report.flags.push(AuditFlag {
                    kind: AuditKind::PlaintextDeceptiveCode,
                    file: file.clone(),
                    detail: format!("deceptive code `{pattern}` appears in plaintext"),
                });
            }
        }
        if file.ends_with(".json") && file != DATA_FILE {
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(&text) {
                let mut keys = Vec::new();
                collect_keys(&value, &mut keys);
                for key in keys {
                    if gt.contains_key(&key) || deceptive.contains_key(&key) {
                        report.flags.push(AuditFlag {
                            kind: AuditKind::UnencodedDataField,
                            file: file.clone(),
                            detail: format!("answer-bearing field `{key}` outside the encoded table"),
                        });
                    }
                }
            }
        }
        for url in external_references(&text) {
            report.flags.push(AuditFlag {
                kind: AuditKind::ExternalReference,
                file: file.clone(),
                detail: format!("references external origin {url}"),
            });
        }
    }

    let answer_maps = [
        ("ground_truth", &bundle.answer.ground_truth),
        ("deceptive_codes", &bundle.answer.deceptive_codes),
    ];
    for (section, map) in answer_maps {
        for (name, encoded) in map {
            let unencoded = match decode_secret(encoded) {
                Ok(plain) => plain.is_empty() && !encoded.is_empty(),
                Err(_) => true,
            };
            if unencoded {
                report.flags.push(AuditFlag {
                    kind: AuditKind::UnencodedDataField,
                    file: DATA_FILE.into(),
                    detail: format!("{section}.{name} is not a valid encoded value"),
                });
            }
        }
    }
    report.flags.sort_by(|a, b| (a.kind, &a.file, &a.detail).cmp(&(b.kind, &b.file, &b.detail)));
    report.flags.dedup();
    Ok(report)
}
