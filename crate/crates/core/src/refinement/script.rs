//! A small JavaScript lexer, enough to find call sites outside strings and
//! comments and to obfuscate the page runtime.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use regex::Regex;
use sha2::{Digest, Sha256};

use crate::error::{ForgeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Str,
    Template,
    Regex,
    Number,
    Comment,
    Space,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub start: usize,
}

fn regex_allowed(prev: Option<&Token<'_>>) -> bool {
    match prev {
        None => true,
        Some(t) => match t.kind {
            TokenKind::Punct => !matches!(t.text, ")" | "]" | "}"),
            TokenKind::Ident => matches!(t.text, "return" | "typeof" | "case" | "in" | "of" | "new" | "delete" | "void"),
            _ => false,
        },
    }
}

/// Splits `src` into tokens; concatenating every token's text yields `src`.
pub fn tokenize(src: &str) -> Vec<Token<'_>> {
    let bytes = src.as_bytes();
    let mut out: Vec<Token<'_>> = Vec::new();
    let mut i = 0;
    let mut last_sig: Option<usize> = None;
    while i < bytes.len() {
        let start = i;
        let c = bytes[i];
        let kind = if c.is_ascii_whitespace() {
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            TokenKind::Space
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            TokenKind::Comment
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i = src[i + 2..].find("*/").map(|p| i + 2 + p + 2).unwrap_or(bytes.len());
            TokenKind::Comment
        } else if c == b'"' || c == b'\'' || c == b'`' {
            i += 1;
            while i < bytes.len() && bytes[i] != c {
                if bytes[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            i = (i + 1).min(bytes.len());
            if c == b'`' {
                TokenKind::Template
            } else {
                TokenKind::Str
            }
        } else if c == b'/' && regex_allowed(last_sig.map(|k| &out[k])) {
            i += 1;
            let mut in_class = false;
            while i < bytes.len() && bytes[i] != b'\n' {
                match bytes[i] {
                    b'\\' => i += 1,
                    b'[' => in_class = true,
                    b']' => in_class = false,
                    b'/' if !in_class => break,
                    _ => {}
                }
                i += 1;
            }
            i = (i + 1).min(bytes.len());
            while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
                i += 1;
            }
            TokenKind::Regex
        } else if c.is_ascii_digit() {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.') {
                i += 1;
            }
            TokenKind::Number
        } else if c.is_ascii_alphabetic() || c == b'_' || c == b'$' || c >= 0x80 {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$' || bytes[i] >= 0x80) {
                i += 1;
            }
            TokenKind::Ident
        } else {
            i += 1;
            TokenKind::Punct
        };
        // keep multi-byte characters whole
        while i < bytes.len() && !src.is_char_boundary(i) {
            i += 1;
        }
        out.push(Token {
            kind,
            text: &src[start..i],
            start,
        });
        if !matches!(kind, TokenKind::Space | TokenKind::Comment) {
            last_sig = Some(out.len() - 1);
        }
    }
    out
}

fn significant<'a>(tokens: &'a [Token<'a>]) -> Vec<&'a Token<'a>> {
    tokens
        .iter()
        .filter(|t| !matches!(t.kind, TokenKind::Space | TokenKind::Comment))
        .collect()
}

pub const DIALOG_FUNCTIONS: [&str; 3] = ["alert", "confirm", "prompt"];

/// A native blocking dialog call, located in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogCall {
    pub function: String,
    /// Byte range of the callee including an optional `window.` prefix.
    pub callee_start: usize,
    pub callee_end: usize,
    /// Byte range of the argument list, parentheses excluded.
    pub args_start: usize,
    pub args_end: usize,
}

/// Finds `alert(...)`, `confirm(...)`, `prompt(...)` calls (optionally
/// through `window.`) outside strings and comments.
pub fn blocking_dialog_calls(src: &str) -> Vec<DialogCall> {
    let tokens = tokenize(src);
    let sig = significant(&tokens);
    let mut out = Vec::new();
    for (k, t) in sig.iter().enumerate() {
        if t.kind != TokenKind::Ident || !DIALOG_FUNCTIONS.contains(&t.text) {
            continue;
        }
        if sig.get(k + 1).map(|n| n.text) != Some("(") {
            continue;
        }
        let mut callee_start = t.start;
        if k >= 1 && sig[k - 1].text == "." {
            if k >= 2 && sig[k - 2].text == "window" && !(k >= 3 && sig[k - 3].text == ".") {
                callee_start = sig[k - 2].start;
            } else {
                continue;
            }
        } else if k >= 1 && sig[k - 1].kind == TokenKind::Ident && sig[k - 1].text == "function" {
            continue;
        }
        let open = sig[k + 1];
        let mut depth = 0usize;
        let mut close = None;
        for n in &sig[k + 1..] {
            match n.text {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(n.start);
                        break;
                    }
                }
                _ => {}
            }
        }
        if let Some(close) = close {
            out.push(DialogCall {
                function: t.text.to_string(),
                callee_start,
                callee_end: t.start + t.text.len(),
                args_start: open.start + 1,
                args_end: close,
            });
        }
    }
    out
}

/// First top-level argument of a call's argument text.
pub fn first_argument(args: &str) -> &str {
    let tokens = tokenize(args);
    let mut depth = 0usize;
    for t in &tokens {
        match t.text {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth = depth.saturating_sub(1),
            "," if depth == 0 => return args[..t.start].trim(),
            _ => {}
        }
    }
    args.trim()
}

/// Decodes a JS string literal token (quotes included) for common escapes.
pub fn string_literal_value(lit: &str) -> Option<String> {
    let inner = lit.get(1..lit.len().checked_sub(1)?)?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            '0' => out.push('\0'),
            'u' => {
                let hex: String = chars.by_ref().take(4).collect();
                out.push(char::from_u32(u32::from_str_radix(&hex, 16).ok()?)?);
            }
            other => out.push(other),
        }
    }
    Some(out)
}

/// Identifier renames and the string decoder name used by one obfuscation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObfuscationMap {
    pub renames: BTreeMap<String, String>,
    pub decoder: String,
}

fn declared_names(tokens: &[&Token<'_>]) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    for (k, t) in tokens.iter().enumerate() {
        if t.kind != TokenKind::Ident {
            continue;
        }
        match t.text {
            "var" | "let" | "const" | "function" => {
                if let Some(n) = tokens.get(k + 1).filter(|n| n.kind == TokenKind::Ident) {
                    names.insert(n.text.to_string());
                }
                if t.text == "function" {
                    let open = tokens[k + 1..].iter().position(|n| n.text == "(").map(|p| k + 1 + p);
                    if let Some(open) = open {
                        for n in &tokens[open + 1..] {
                            match n.text {
                                ")" => break,
                                "," => {}
                                _ if n.kind == TokenKind::Ident => {
                                    names.insert(n.text.to_string());
                                }
                                _ => {}
                            }
                        }
                    }
                }
            }
            "catch" => {
                if tokens.get(k + 1).map(|n| n.text) == Some("(") {
                    if let Some(n) = tokens.get(k + 2).filter(|n| n.kind == TokenKind::Ident) {
                        names.insert(n.text.to_string());
                    }
                }
            }
            _ => {}
        }
    }
    for kw in ["var", "let", "const", "function", "return", "if", "else", "for", "in", "of", "new", "this"] {
        names.remove(kw);
    }
    names
}

fn short_hash(key: &str, name: &str) -> String {
    let digest = Sha256::digest(format!("{key}:{name}").as_bytes());
    format!("_0x{}", &hex::encode(digest)[..6])
}

/// Renames every declared identifier and replaces each string literal with
/// a call to a Base64 decoder prepended to the output. The source must not
/// use template literals or quoted object keys.
pub fn obfuscate(src: &str, key: &str) -> Result<(String, ObfuscationMap)> {
    let tokens = tokenize(src);
    let sig = significant(&tokens);
    if tokens.iter().any(|t| t.kind == TokenKind::Template) {
        return Err(ForgeError::Config("template literals are not supported by the obfuscator".into()));
    }
    let mut map = ObfuscationMap {
        decoder: short_hash(key, "__decoder"),
        ..Default::default()
    };
    let mut used: BTreeSet<String> = BTreeSet::from([map.decoder.clone()]);
    for name in declared_names(&sig) {
        let mut new = short_hash(key, &name);
        let mut salt = 0;
        while used.contains(&new) {
            salt += 1;
            new = short_hash(key, &format!("{name}#{salt}"));
        }
        used.insert(new.clone());
        map.renames.insert(name, new);
    }

    let positions: BTreeMap<usize, usize> = sig.iter().enumerate().map(|(i, t)| (t.start, i)).collect();
    let mut out = format!(
        "var {d}=function(b){{var s=atob(b),p=\"\";for(var i=0;i<s.length;i++){{p+=\"%\"+(\"0\"+s.charCodeAt(i).toString(16)).slice(-2);}}return decodeURIComponent(p);}};\n",
        d = map.decoder
    );
    for t in &tokens {
        match t.kind {
            TokenKind::Ident => {
                let k = positions[&t.start];
                let after_dot = k > 0 && sig[k - 1].text == ".";
                let object_key = sig.get(k + 1).map(|n| n.text) == Some(":")
                    && k > 0
                    && matches!(sig[k - 1].text, "{" | ",");
                match map.renames.get(t.text) {
                    Some(new) if !after_dot && !object_key => out.push_str(new),
                    _ => out.push_str(t.text),
                }
            }
            TokenKind::Str => {
                let k = positions[&t.start];
                if sig.get(k + 1).map(|n| n.text) == Some(":") && k > 0 && matches!(sig[k - 1].text, "{" | ",") {
                    return Err(ForgeError::Config(format!("quoted object key {} is not supported", t.text)));
                }
                let value = string_literal_value(t.text)
                    .ok_or_else(|| ForgeError::Config(format!("unparseable string literal {}", t.text)))?;
                out.push_str(&format!("{}(\"{}\")", map.decoder, STANDARD.encode(value.as_bytes())));
            }
            _ => out.push_str(t.text),
        }
    }
    Ok((out, map))
}

fn decoder_call_re(decoder: &str) -> Regex {
    Regex::new(&format!(r#"{}\("([A-Za-z0-9+/=]*)"\)"#, regex::escape(decoder))).expect("regex")
}

fn js_quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Inverts [`obfuscate`] up to string-literal quoting: literals come back
/// double-quoted with minimal escapes.
pub fn deobfuscate(src: &str, map: &ObfuscationMap) -> Result<String> {
    let body = src
        .split_once('\n')
        .filter(|(first, _)| first.starts_with(&format!("var {}=", map.decoder)))
        .map(|(_, rest)| rest)
        .ok_or_else(|| ForgeError::Decode("decoder prelude missing".into()))?;
    let re = decoder_call_re(&map.decoder);
    let mut decoded_err = None;
    let with_strings = re.replace_all(body, |caps: &regex::Captures<'_>| {
        match STANDARD.decode(&caps[1]).ok().and_then(|b| String::from_utf8(b).ok()) {
            Some(s) => js_quote(&s),
            None => {
                decoded_err = Some(caps[1].to_string());
                String::new()
            }
        }
    });
    if let Some(bad) = decoded_err {
        return Err(ForgeError::Decode(format!("bad encoded literal {bad}")));
    }
    let reverse: BTreeMap<&str, &str> = map.renames.iter().map(|(a, b)| (b.as_str(), a.as_str())).collect();
    let tokens = tokenize(&with_strings);
    let mut out = String::with_capacity(with_strings.len());
    for t in tokens {
        match (t.kind, reverse.get(t.text)) {
            (TokenKind::Ident, Some(orig)) => out.push_str(orig),
            _ => out.push_str(t.text),
        }
    }
    Ok(out)
}

/// Normalizes string literals to the form [`deobfuscate`] produces, for
/// comparing a source with its round trip.
pub fn canonical_strings(src: &str) -> String {
    tokenize(src)
        .into_iter()
        .map(|t| match t.kind {
            TokenKind::Str => string_literal_value(t.text).map(|v| js_quote(&v)).unwrap_or_else(|| t.text.to_string()),
            _ => t.text.to_string(),
        })
        .collect()
}

fn inline_script_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)<script\b([^>]*)>(.*?)</script>").expect("regex"))
}

/// Byte ranges of inline script bodies (scripts without `src`, excluding
/// JSON data islands) in an HTML document.
pub fn inline_scripts(html: &str) -> Vec<(usize, usize)> {
    inline_script_re()
        .captures_iter(html)
        .filter(|c| {
            let attrs = c[1].to_ascii_lowercase();
            !attrs.contains("src=") && !attrs.contains("application/json")
        })
        .map(|c| {
            let m = c.get(2).expect("group");
            (m.start(), m.end())
        })
        .collect()
}
