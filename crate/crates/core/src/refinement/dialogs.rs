//! Replacement of native blocking dialogs with inline feedback elements.

use serde::{Deserialize, Serialize};

use super::script::{blocking_dialog_calls, first_argument, inline_scripts, string_literal_value};
use crate::bundle::WebsiteBundle;
use crate::error::Result;

pub const FEEDBACK_MARKER: &str = "/* forge-inline-feedback */";

/// Helpers the rewritten calls delegate to. The error element lands next to
/// the field whose `data-forge-message` matches, else the focused field,
/// else the first form field.
pub const FEEDBACK_HELPERS: &str = r#"/* forge-inline-feedback */
function forgeInlineError(message) {
  var text = String(message);
  var target = null;
  var tagged = document.querySelectorAll("[data-forge-message]");
  for (var i = 0; i < tagged.length; i++) {
    if (tagged[i].getAttribute("data-forge-message") === text) {
      target = tagged[i];
      break;
    }
  }
  var active = document.activeElement;
  if (!target && active && ["INPUT", "SELECT", "TEXTAREA"].indexOf(active.tagName) >= 0) {
    target = active;
  }
  if (!target) {
    target = document.querySelector("form input, form select, form textarea");
  }
  var box = document.createElement("div");
  box.className = "forge-inline-error";
  box.setAttribute("role", "alert");
  box.setAttribute("data-forge-inline-error", "");
  box.textContent = "⊘ " + text;
  if (target && target.parentNode) {
    var next = target.nextSibling;
    if (next && next.nodeType === 1 && next.hasAttribute("data-forge-inline-error")) {
      next.parentNode.removeChild(next);
    }
    target.parentNode.insertBefore(box, target.nextSibling);
  } else {
    document.body.insertBefore(box, document.body.firstChild);
  }
}
function forgeInlineConfirm(message) {
  forgeInlineError(message);
  return true;
}
function forgeInlinePrompt(message, fallback) {
  forgeInlineError(message);
  return fallback === undefined ? "" : String(fallback);
}
"#;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacedDialog {
    pub file: String,
    pub function: String,
    /// The message literal, when the first argument is a string literal.
    pub message: Option<String>,
}

fn helper_for(function: &str) -> &'static str {
    match function {
        "confirm" => "forgeInlineConfirm",
        "prompt" => "forgeInlinePrompt",
        _ => "forgeInlineError",
    }
}

/// Rewrites every dialog call in one script body. Returns `None` when the
/// script has none.
pub fn rewrite_script(src: &str, file: &str, out: &mut Vec<ReplacedDialog>) -> Option<String> {
    let calls = blocking_dialog_calls(src);
    if calls.is_empty() {
        return None;
    }
    let mut result = String::with_capacity(src.len() + FEEDBACK_HELPERS.len());
    if !src.contains(FEEDBACK_MARKER) {
        result.push_str(FEEDBACK_HELPERS);
    }
    let mut cursor = 0;
    for call in &calls {
        result.push_str(&src[cursor..call.callee_start]);
        result.push_str(helper_for(&call.function));
        cursor = call.callee_end;
        out.push(ReplacedDialog {
            file: file.to_string(),
            function: call.function.clone(),
            message: string_literal_value(first_argument(&src[call.args_start..call.args_end])),
        });
    }
    result.push_str(&src[cursor..]);
    Some(result)
}

/// Counts dialog calls across all served scripts, inline ones included.
pub fn count_blocking_dialogs(bundle: &WebsiteBundle) -> Result<usize> {
    let mut n = 0;
    for file in bundle.served_files()? {
        if file.ends_with(".js") {
            n += blocking_dialog_calls(&bundle.read_text(&file)?).len();
        } else if file.ends_with(".html") {
            let html = bundle.read_text(&file)?;
            for (s, e) in inline_scripts(&html) {
                n += blocking_dialog_calls(&html[s..e]).len();
            }
        }
    }
    Ok(n)
}

/// Replaces native dialogs in `.js` files and inline page scripts. Files
/// without dialogs are left byte-identical.
pub fn replace_blocking_dialogs(bundle: &mut WebsiteBundle) -> Result<Vec<ReplacedDialog>> {
    let mut replaced = Vec::new();
    for file in bundle.served_files()? {
        if file.ends_with(".js") {
            let src = bundle.read_text(&file)?;
            if let Some(new) = rewrite_script(&src, &file, &mut replaced) {
                bundle.write_text(&file, &new)?;
            }
        } else if file.ends_with(".html") {
            let html = bundle.read_text(&file)?;
            let mut updated = String::with_capacity(html.len());
            let mut cursor = 0;
            let mut changed = false;
            for (s, e) in inline_scripts(&html) {
                if let Some(new) = rewrite_script(&html[s..e], &file, &mut replaced) {
                    updated.push_str(&html[cursor..s]);
                    updated.push_str(&new);
                    cursor = e;
                    changed = true;
                }
            }
            if changed {
                updated.push_str(&html[cursor..]);
                bundle.write_text(&file, &updated)?;
            }
        }
    }
    Ok(replaced)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewrite_preserves_message() {
        let mut log = Vec::new();
        let src = "if (!ok) { alert(\"Please enter a contact name.\"); }";
        let out = rewrite_script(src, "a.js", &mut log).unwrap();
        assert!(out.contains("forgeInlineError(\"Please enter a contact name.\")"));
        assert!(blocking_dialog_calls(&out).is_empty());
        assert_eq!(log[0].message.as_deref(), Some("Please enter a contact name."));
        assert!(rewrite_script("var x = 1;", "b.js", &mut log).is_none());
    }

    #[test]
    fn helpers_contain_no_dialog_calls() {
        assert!(blocking_dialog_calls(FEEDBACK_HELPERS).is_empty());
    }
}
