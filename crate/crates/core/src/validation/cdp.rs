//! Chrome DevTools Protocol driver for running episodes in a real browser
//! against the environment server.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use super::{ActionOutcome, Browser, BrowserAction, DomNode, Observation, ScrollTo};
use crate::error::{ForgeError, Result};

/// Page-side snapshot. Enumerates elements in the same order and with the
/// same filters as the simulated browser; popup nodes first, cookie last.
const SNAPSHOT_JS: &str = r#"(() => {
  const keep = ["id","name","type","value","href","action","role","aria-label","placeholder","min","max","required",
    "data-forge-field","data-forge-bind","data-forge-noise","data-forge-placeholder"];
  const skip = new Set(["SCRIPT","STYLE","NOSCRIPT","TEMPLATE","OPTION"]);
  const interactive = (el) => {
    const t = el.tagName;
    if (t === "A" || t === "BUTTON" || t === "SELECT" || t === "TEXTAREA") return true;
    if (t === "INPUT") return (el.getAttribute("type") || "text") !== "hidden";
    return el.hasAttribute("onclick");
  };
  const own = (el) => Array.from(el.childNodes).filter(n => n.nodeType === 3).map(n => n.textContent).join(" ").trim().replace(/\s+/g, " ");
  const all = Array.from(document.body ? document.body.querySelectorAll("*") : []).filter(el => !skip.has(el.tagName));
  const zone = (el) => { const z = el.closest("[data-forge-noise]"); return z ? z.getAttribute("data-forge-noise") : null; };
  const ordered = all.filter(el => zone(el) === "popup").concat(all.filter(el => zone(el) === null), all.filter(el => zone(el) === "cookie"));
  const els = []; const nodes = [];
  for (const el of ordered) {
    const inter = interactive(el);
    const text = inter && (el.tagName === "A" || el.tagName === "BUTTON") ? el.textContent.trim().replace(/\s+/g, " ") : own(el);
    if (!inter && !text && !el.hasAttribute("id") && !el.hasAttribute("data-forge-bind")) continue;
    const attrs = {};
    for (const k of keep) if (el.hasAttribute(k)) attrs[k] = el.getAttribute(k);
    const z = zone(el);
    if (z && inter) attrs["data-forge-noise"] = z;
    if (el.tagName === "INPUT" || el.tagName === "SELECT" || el.tagName === "TEXTAREA") {
      if (el.type === "radio" || el.type === "checkbox") { if (el.checked) attrs.checked = "true"; }
      else attrs.value = el.value;
    }
    let index = null;
    if (inter) { index = els.length; els.push(el); }
    nodes.push({ index, tag: el.tagName.toLowerCase(), text, attrs });
  }
  window.__forgeEls = els;
  const storage = {};
  try { for (let i = 0; i < localStorage.length; i++) { const k = localStorage.key(i); storage[k] = localStorage.getItem(k); } } catch (e) {}
  return JSON.stringify({ url: location.pathname.replace(/^\//, ""), title: document.title, nodes, storage });
})()"#;

const CLICK_JS: &str = r#"((i) => {
  const el = (window.__forgeEls || [])[i];
  if (!el) return "missing";
  const overlay = document.querySelector('[data-forge-noise="popup"]');
  if (overlay && !overlay.contains(el)) return "intercepted";
  el.click();
  return "ok";
})"#;

const INPUT_JS: &str = r#"((i, text) => {
  const el = (window.__forgeEls || [])[i];
  if (!el) return "missing";
  if (!("value" in el) || el.type === "radio" || el.type === "checkbox") return "not-editable";
  el.value = text;
  el.dispatchEvent(new Event("input", { bubbles: true }));
  el.dispatchEvent(new Event("change", { bubbles: true }));
  return "ok";
})"#;

#[derive(Deserialize)]
struct Target {
    #[serde(rename = "type")]
    kind: String,
    #[serde(rename = "webSocketDebuggerUrl")]
    ws_url: Option<String>,
}

pub struct CdpBrowser {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
    next_id: u64,
    base_url: String,
    dialog: Option<String>,
    timeout: Duration,
    child: Option<Child>,
}

fn infra(context: &str, e: impl std::fmt::Display) -> ForgeError {
    ForgeError::Infrastructure(format!("{context}: {e}"))
}

impl CdpBrowser {
    /// Starts a Chromium-family binary and attaches to its first page.
    /// `base_url` is the environment server root that relative URLs join.
    pub fn launch(binary: &str, headless: bool, base_url: &str) -> Result<Self> {
        static LAUNCHES: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
        let n = LAUNCHES.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        let profile = std::env::temp_dir().join(format!("forge-cdp-{}-{n}", std::process::id()));
        let mut cmd = Command::new(binary);
        cmd.arg("--remote-debugging-port=0")
            .arg("--no-first-run")
            .arg("--no-default-browser-check")
            .arg(format!("--user-data-dir={}", profile.display()))
            .stdout(Stdio::null())
            .stderr(Stdio::piped());
        if headless {
            cmd.arg("--headless=new");
        }
        cmd.arg("about:blank");
        let mut child = cmd.spawn().map_err(|e| infra(&format!("cannot launch {binary}"), e))?;
        let stderr = child.stderr.take().ok_or_else(|| infra("launch", "no stderr"))?;
        let mut ws_browser = None;
        for line in BufReader::new(stderr).lines() {
            let line = line.map_err(|e| infra("reading browser output", e))?;
            if let Some(rest) = line.split("DevTools listening on ").nth(1) {
                ws_browser = Some(rest.trim().to_string());
                break;
            }
        }
        let Some(ws_browser) = ws_browser else {
            let _ = child.kill();
            return Err(infra("launch", "browser exited before exposing a DevTools endpoint"));
        };
        let host = ws_browser
            .trim_start_matches("ws://")
            .split('/')
            .next()
            .unwrap_or_default()
            .to_string();
        let targets: Vec<Target> = ureq::get(&format!("http://{host}/json/list"))
            .call()
            .map_err(|e| infra("listing targets", e))?
            .into_json()
            .map_err(|e| infra("listing targets", e))?;
        let page = targets
            .into_iter()
            .find(|t| t.kind == "page")
            .and_then(|t| t.ws_url)
            .ok_or_else(|| infra("launch", "no page target"))?;
        let mut b = Self::connect(&page, base_url)?;
        b.child = Some(child);
        Ok(b)
    }

    /// Attaches to an existing page target.
    pub fn connect(ws_url: &str, base_url: &str) -> Result<Self> {
        let (ws, _) = tungstenite::connect(ws_url).map_err(|e| infra(&format!("connecting to {ws_url}"), e))?;
        let mut base = base_url.to_string();
        if !base.ends_with('/') {
            base.push('/');
        }
        Ok(CdpBrowser {
            ws,
            next_id: 0,
            base_url: base,
            dialog: None,
            timeout: Duration::from_secs(30),
            child: None,
        })
    }

    /// Sends a command and waits for its response, recording dialog events.
    /// Returns `None` when a native dialog opened before the response.
    pub fn call(&mut self, method: &str, params: Value) -> Result<Option<Value>> {
        self.next_id += 1;
        let id = self.next_id;
        let msg = json!({"id": id, "method": method, "params": params});
        self.ws
            .send(Message::text(msg.to_string()))
            .map_err(|e| infra(method, e))?;
        let start = Instant::now();
        loop {
            if start.elapsed() > self.timeout {
                return Err(infra(method, "timed out"));
            }
            let frame = self.ws.read().map_err(|e| infra(method, e))?;
            let Message::Text(text) = frame else { continue };
            let v: Value = serde_json::from_str(text.as_ref()).map_err(|e| infra(method, e))?;
            if v.get("method").and_then(Value::as_str) == Some("Page.javascriptDialogOpening") {
                let message = v["params"]["message"].as_str().unwrap_or_default().to_string();
                self.dialog = Some(message);
                return Ok(None);
            }
            if v.get("id").and_then(Value::as_u64) != Some(id) {
                continue;
            }
            if let Some(err) = v.get("error") {
                return Err(infra(method, err));
            }
            return Ok(Some(v.get("result").cloned().unwrap_or(Value::Null)));
        }
    }

    fn evaluate(&mut self, expression: &str) -> Result<Option<Value>> {
        let r = self.call(
            "Runtime.evaluate",
            json!({"expression": expression, "returnByValue": true, "awaitPromise": true}),
        )?;
        Ok(r.map(|r| r["result"]["value"].clone()))
    }

    fn wait_ready(&mut self) -> Result<()> {
        let start = Instant::now();
        while start.elapsed() < self.timeout {
            match self.evaluate("document.readyState")? {
                None => return Ok(()),
                Some(Value::String(s)) if s == "complete" => return Ok(()),
                _ => std::thread::sleep(Duration::from_millis(50)),
            }
        }
        Err(infra("page load", "timed out"))
    }

    fn goto(&mut self, url: &str) -> Result<ActionOutcome> {
        let full = if url.contains("://") { url.to_string() } else { format!("{}{}", self.base_url, url.trim_start_matches('/')) };
        match self.call("Page.navigate", json!({"url": full}))? {
            Some(r) if r.get("errorText").and_then(Value::as_str).is_some() => {
                Ok(ActionOutcome::fail(format!("navigation failed: {}", r["errorText"])))
            }
            _ => {
                self.wait_ready()?;
                Ok(ActionOutcome::ok_with(format!("loaded {url}")))
            }
        }
    }

    fn settle(&mut self, status: Option<Value>) -> Result<ActionOutcome> {
        if self.dialog.is_some() {
            return Ok(ActionOutcome::fail("native dialog opened"));
        }
        std::thread::sleep(Duration::from_millis(100));
        self.wait_ready()?;
        Ok(match status.as_ref().and_then(Value::as_str) {
            Some("ok") | None => ActionOutcome::ok(),
            Some(other) => ActionOutcome::fail(other.to_string()),
        })
    }
}

impl Drop for CdpBrowser {
    fn drop(&mut self) {
        let _ = self.ws.close(None);
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[derive(Deserialize)]
struct Snapshot {
    url: String,
    title: String,
    nodes: Vec<DomNode>,
    storage: BTreeMap<String, String>,
}

impl Browser for CdpBrowser {
    fn open(&mut self, url: &str) -> Result<()> {
        self.call("Page.enable", json!({}))?;
        self.call("Runtime.enable", json!({}))?;
        let outcome = self.goto(url)?;
        if outcome.ok {
            Ok(())
        } else {
            Err(infra("open", outcome.message))
        }
    }

    fn observe(&mut self, screenshot: bool) -> Result<Observation> {
        if let Some(msg) = &self.dialog {
            return Ok(Observation {
                url: String::new(),
                title: String::new(),
                nodes: vec![DomNode {
                    index: None,
                    tag: "dialog".into(),
                    text: msg.clone(),
                    attrs: BTreeMap::from([("role".to_string(), "alertdialog".to_string())]),
                }],
                screenshot: None,
                storage: BTreeMap::new(),
            });
        }
        let raw = self.evaluate(SNAPSHOT_JS)?.unwrap_or(Value::Null);
        let snap: Snapshot = serde_json::from_str(raw.as_str().unwrap_or("null")).map_err(|e| infra("snapshot", e))?;
        let shot = if screenshot {
            match self.call("Page.captureScreenshot", json!({"format": "png"}))? {
                Some(r) => Some(
                    base64::engine::general_purpose::STANDARD
                        .decode(r["data"].as_str().unwrap_or_default())
                        .map_err(|e| infra("screenshot", e))?,
                ),
                None => None,
            }
        } else {
            None
        };
        Ok(Observation {
            url: snap.url,
            title: snap.title,
            nodes: snap.nodes,
            screenshot: shot,
            storage: snap.storage,
        })
    }

    fn act(&mut self, action: &BrowserAction) -> Result<ActionOutcome> {
        if self.dialog.is_some() {
            return Ok(ActionOutcome::fail("page is blocked by a native dialog"));
        }
        match action {
            BrowserAction::Navigate { url } => self.goto(url),
            BrowserAction::Click { index } => {
                let status = self.evaluate(&format!("{CLICK_JS}({index})"))?;
                self.settle(status)
            }
            BrowserAction::Input { index, text } => {
                let arg = serde_json::to_string(text)?;
                let status = self.evaluate(&format!("{INPUT_JS}({index}, {arg})"))?;
                self.settle(status)
            }
            BrowserAction::Scroll { direction } => {
                let dy = match direction {
                    ScrollTo::Up => -600,
                    ScrollTo::Down => 600,
                };
                self.evaluate(&format!("window.scrollBy(0, {dy})"))?;
                Ok(ActionOutcome::ok())
            }
            BrowserAction::Back => {
                let status = self.evaluate("history.back()")?;
                self.settle(status)
            }
            BrowserAction::Terminate { .. } => Ok(ActionOutcome::ok()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    #[test]
    fn missing_binary_is_infrastructure_error() {
        let err = CdpBrowser::launch("/nonexistent/chromium-forge", true, "http://127.0.0.1:1/").err().unwrap();
        assert!(matches!(err, ForgeError::Infrastructure(_)));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn call_matches_ids_and_records_dialogs() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut ws = tungstenite::accept(stream).unwrap();
            let req: Value = serde_json::from_str(ws.read().unwrap().to_text().unwrap()).unwrap();
            let id = req["id"].as_u64().unwrap();
            ws.send(Message::text(json!({"method": "Network.whatever", "params": {}}).to_string())).unwrap();
            ws.send(Message::text(json!({"id": id + 100, "result": {}}).to_string())).unwrap();
            ws.send(Message::text(json!({"id": id, "result": {"result": {"value": "complete"}}}).to_string())).unwrap();
            let _ = ws.read().unwrap();
            ws.send(Message::text(json!({"method": "Page.javascriptDialogOpening", "params": {"message": "Please fill"}}).to_string()))
                .unwrap();
            let _ = ws.read();
        });
        let mut b = CdpBrowser::connect(&format!("ws://{addr}/devtools/page/1"), "http://127.0.0.1:9").unwrap();
        let v = b.evaluate("document.readyState").unwrap();
        assert_eq!(v, Some(json!("complete")));
        let r = b.call("Runtime.evaluate", json!({})).unwrap();
        assert!(r.is_none());
        assert_eq!(b.dialog.as_deref(), Some("Please fill"));
        let out = b.act(&BrowserAction::Click { index: 0 }).unwrap();
        assert!(!out.ok);
        drop(b);
        server.join().unwrap();
    }
}
