//! LLM provider abstraction: one request/response call, with a scripted
//! playback implementation for tests, a recording proxy, and an HTTP gateway
//! speaking the common chat-completions wire format.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport failure talking to `{provider}`: {reason}")]
    Transport { provider: String, reason: String },
    #[error("provider `{provider}` returned status {status}: {body}")]
    Status {
        provider: String,
        status: u16,
        body: String,
    },
    #[error("provider `{provider}` has no scripted reply for this request")]
    NoScript { provider: String },
    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    /// Transport failures and server-side statuses may succeed on retry.
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Transport { .. } => true,
            ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderRole {
    Creative,
    Precision,
}

impl ProviderRole {
    pub fn default_temperature(self) -> f64 {
        match self {
            ProviderRole::Creative => 2.0,
            ProviderRole::Precision => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub provider_id: String,
    pub role: ProviderRole,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ProviderProfile {
    pub fn new(provider_id: impl Into<String>, role: ProviderRole) -> Self {
        Self {
            provider_id: provider_id.into(),
            role,
            temperature: role.default_temperature(),
            max_output_tokens: 16_384,
        }
    }

    pub fn creative(provider_id: impl Into<String>) -> Self {
        Self::new(provider_id, ProviderRole::Creative)
    }

    pub fn precision(provider_id: impl Into<String>) -> Self {
        Self::new(provider_id, ProviderRole::Precision)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(profile: &ProviderProfile, system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            user: user.into(),
            temperature: profile.temperature,
            max_tokens: profile.max_output_tokens,
        }
    }

    /// Stable digest over the full request, used to key recordings.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

pub trait LlmProvider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError>;
}

fn count_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// One playback rule: if every `contains` needle occurs in the request, the
/// rule answers with its replies in order, repeating the last one.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default)]
    pub contains: Vec<String>,
    pub replies: Vec<String>,
}

impl ScriptRule {
    pub fn new(contains: &[&str], replies: Vec<String>) -> Self {
        Self {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            replies,
        }
    }
}

#[derive(Debug, Default)]
enum ScriptMode {
    #[default]
    Rules,
    /// Replies with the first fenced block found in the user prompt.
    Echo,
}

/// Fixture playback provider. Deterministic and safe to share across
/// threads; per-rule cursors are the only mutable state.
#[derive(Debug)]
pub struct ScriptedProvider {
    id: String,
    rules: Vec<ScriptRule>,
    recorded: BTreeMap<String, String>,
    cursors: Mutex<Vec<usize>>,
    mode: ScriptMode,
}

impl ScriptedProvider {
    pub fn new(id: impl Into<String>, rules: Vec<ScriptRule>) -> Self {
        let n = rules.len();
        Self {
            id: id.into(),
            rules,
            recorded: BTreeMap::new(),
            cursors: Mutex::new(vec![0; n]),
            mode: ScriptMode::Rules,
        }
    }

    /// Returns the fenced block of the prompt unchanged (an identity refiner).
    pub fn echo(id: impl Into<String>) -> Self {
        let mut p = Self::new(id, Vec::new());
        p.mode = ScriptMode::Echo;
        p
    }

    /// Loads rules from a JSON file holding `[ScriptRule]`.
    pub fn from_file(id: impl Into<String>, path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        let rules: Vec<ScriptRule> = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(id, rules))
    }

    /// Plays back a JSONL file written by [`RecordingProvider`], matching
    /// requests by digest.
    pub fn from_recording(id: impl Into<String>, path: &Path) -> Result<Self, ProviderError> {
        let file = File::open(path).map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        let mut recorded = BTreeMap::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| ProviderError::Config(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: RecordedExchange =
                serde_json::from_str(&line).map_err(|e| ProviderError::Config(e.to_string()))?;
            recorded.insert(entry.digest, entry.completion.text);
        }
        let mut p = Self::new(id, Vec::new());
        p.recorded = recorded;
        Ok(p)
    }
}

impl LlmProvider for ScriptedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        let no_script = || ProviderError::NoScript {
            provider: self.id.clone(),
        };
        let text = if let Some(t) = self.recorded.get(&request.digest()) {
            t.clone()
        } else {
            match self.mode {
                ScriptMode::Echo => {
                    let body = crate::blueprint::extract_fenced_json(&request.user).ok_or_else(no_script)?;
                    format!("```json\n{body}\n```\n")
                }
                ScriptMode::Rules => {
                    let haystack = format!("{}\n{}", request.system, request.user);
                    let idx = self
                        .rules
                        .iter()
                        .position(|r| r.contains.iter().all(|needle| haystack.contains(needle.as_str())))
                        .ok_or_else(no_script)?;
                    let rule = &self.rules[idx];
                    if rule.replies.is_empty() {
                        return Err(no_script());
                    }
                    let mut cursors = self.cursors.lock().expect("cursor lock");
                    let i = cursors[idx].min(rule.replies.len() - 1);
                    cursors[idx] += 1;
                    rule.replies[i].clone()
                }
            }
        };
        Ok(Completion {
            prompt_tokens: count_tokens(&request.system) + count_tokens(&request.user),
            completion_tokens: count_tokens(&text),
            text,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordedExchange {
    digest: String,
    request: CompletionRequest,
    completion: Completion,
}

/// Forwards to an inner provider and appends every exchange to a JSONL file.
pub struct RecordingProvider {
    inner: Arc<dyn LlmProvider>,
    sink: Mutex<File>,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn LlmProvider>, path: &Path) -> std::io::Result<Self> {
        let sink = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner,
            sink: Mutex::new(sink),
        })
    }
}

impl LlmProvider for RecordingProvider {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        let completion = self.inner.complete(request)?;
        let entry = RecordedExchange {
            digest: request.digest(),
            request: request.clone(),
            completion: completion.clone(),
        };
        let line = serde_json::to_string(&entry).expect("exchange serializes");
        let mut sink = self.sink.lock().expect("sink lock");
        writeln!(sink, "{line}").map_err(|e| ProviderError::Config(format!("recording: {e}")))?;
        Ok(completion)
    }
}

/// Chat-completions HTTP gateway (`POST {endpoint}` with `model`,
/// `messages`, `temperature`, `max_tokens`).
pub struct HttpProvider {
    id: String,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(id: impl Into<String>, endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        let id = id.into();
        let api_key = std::env::var(api_key_var(&id)).ok();
        Self {
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(600)).build(),
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            id,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }
}

/// Environment variable carrying a provider's API key:
/// `FORGE_PROVIDER_<ID>_KEY`, id upper-cased with non-alphanumerics as `_`.
pub fn api_key_var(id: &str) -> String {
    let norm: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("FORGE_PROVIDER_{norm}_KEY")
}

impl LlmProvider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        let mut req = self.agent.post(&self.endpoint).set("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("authorization", &format!("Bearer {key}"));
        }
        let resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                return Err(ProviderError::Status {
                    provider: self.id.clone(),
                    status,
                    body: r.into_string().unwrap_or_default(),
                })
            }
            Err(e) => {
                return Err(ProviderError::Transport {
                    provider: self.id.clone(),
                    reason: e.to_string(),
                })
            }
        };
        let value: serde_json::Value = resp.into_json().map_err(|e| ProviderError::Transport {
            provider: self.id.clone(),
            reason: format!("malformed response body: {e}"),
        })?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| ProviderError::Transport {
                provider: self.id.clone(),
                reason: "response has no choices[0].message.content".into(),
            })?
            .to_string();
        let usage = &value["usage"];
        Ok(Completion {
            prompt_tokens: usage["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: usage["completion_tokens"].as_u64().unwrap_or(0),
            text,
        })
    }
}

/// One `[[provider]]` entry of a providers file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderEntry {
    pub id: String,
    #[serde(default = "default_kind")]
    pub kind: String,
    pub role: ProviderRole,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
    /// Script file (`scripted`) or recording (`replay`); `builtin:<name>`
    /// selects a bundled fixture.
    #[serde(default)]
    pub fixture: Option<String>,
    /// When set, exchanges are appended to this JSONL file.
    #[serde(default)]
    pub record_to: Option<PathBuf>,
}

fn default_kind() -> String {
    "http".into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProvidersFile {
    #[serde(default, rename = "provider")]
    pub providers: Vec<ProviderEntry>,
}

/// Resolved providers keyed by id.
#[derive(Clone, Default)]
pub struct ProviderRegistry {
    entries: BTreeMap<String, (ProviderProfile, Arc<dyn LlmProvider>)>,
}

impl ProviderRegistry {
    pub fn insert(&mut self, profile: ProviderProfile, provider: Arc<dyn LlmProvider>) {
        self.entries.insert(profile.provider_id.clone(), (profile, provider));
    }

    pub fn get(&self, id: &str) -> Option<(&ProviderProfile, &Arc<dyn LlmProvider>)> {
        self.entries.get(id).map(|(p, a)| (p, a))
    }

    /// First provider with the given role, in id order.
    pub fn by_role(&self, role: ProviderRole) -> Option<(&ProviderProfile, &Arc<dyn LlmProvider>)> {
        self.entries.values().find(|(p, _)| p.role == role).map(|(p, a)| (p, a))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ProviderError> {
        let file: ProvidersFile = toml::from_str(text).map_err(|e| ProviderError::Config(e.to_string()))?;
        let mut reg = ProviderRegistry::default();
        for entry in file.providers {
            let mut profile = ProviderProfile::new(entry.id.clone(), entry.role);
            if let Some(t) = entry.temperature {
                if t < 0.0 {
                    return Err(ProviderError::Config(format!("{}: negative temperature", entry.id)));
                }
                profile.temperature = t;
            }
            if let Some(m) = entry.max_output_tokens {
                if m == 0 {
                    return Err(ProviderError::Config(format!("{}: max_output_tokens must be positive", entry.id)));
                }
                profile.max_output_tokens = m;
            }
            let resolve = |p: &str| -> PathBuf {
                let path = Path::new(p);
                if path.is_absolute() {
                    path.to_path_buf()
                } else {
                    base_dir.join(path)
                }
            };
            let provider: Arc<dyn LlmProvider> = match entry.kind.as_str() {
                "http" => {
                    let endpoint = entry
                        .endpoint
                        .clone()
                        .ok_or_else(|| ProviderError::Config(format!("{}: http provider needs `endpoint`", entry.id)))?;
                    let model = entry.model.clone().unwrap_or_else(|| entry.id.clone());
                    Arc::new(HttpProvider::new(entry.id.clone(), endpoint, model))
                }
                "scripted" => match entry.fixture.as_deref() {
                    Some(name) if name.starts_with("builtin:") => {
                        Arc::new(crate::fixtures::builtin_provider(&entry.id, &name["builtin:".len()..])?)
                    }
                    Some(path) => Arc::new(ScriptedProvider::from_file(entry.id.clone(), &resolve(path))?),
                    None => return Err(ProviderError::Config(format!("{}: scripted provider needs `fixture`", entry.id))),
                },
                "replay" => {
                    let path = entry
                        .fixture
                        .as_deref()
                        .ok_or_else(|| ProviderError::Config(format!("{}: replay provider needs `fixture`", entry.id)))?;
                    Arc::new(ScriptedProvider::from_recording(entry.id.clone(), &resolve(path))?)
                }
                "echo" => Arc::new(ScriptedProvider::echo(entry.id.clone())),
                other => return Err(ProviderError::Config(format!("{}: unknown provider kind `{other}`", entry.id))),
            };
            let provider = match &entry.record_to {
                Some(path) => Arc::new(
                    RecordingProvider::new(provider, &resolve(&path.to_string_lossy()))
                        .map_err(|e| ProviderError::Config(e.to_string()))?,
                ) as Arc<dyn LlmProvider>,
                None => provider,
            };
            reg.insert(profile, provider);
        }
        Ok(reg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(user: &str) -> CompletionRequest {
        CompletionRequest::new(&ProviderProfile::creative("t"), "sys", user)
    }

    #[test]
    fn default_temperatures() {
        assert_eq!(ProviderProfile::creative("a").temperature, 2.0);
        assert_eq!(ProviderProfile::precision("a").temperature, 1.0);
    }

    #[test]
    fn scripted_replies_advance_and_stick() {
        let p = ScriptedProvider::new(
            "m",
            vec![ScriptRule::new(&["draft"], vec!["one".into(), "two".into()])],
        );
        assert_eq!(p.complete(&req("please draft")).unwrap().text, "one");
        assert_eq!(p.complete(&req("please draft")).unwrap().text, "two");
        assert_eq!(p.complete(&req("please draft")).unwrap().text, "two");
        assert!(matches!(p.complete(&req("other")), Err(ProviderError::NoScript { .. })));
    }

    #[test]
    fn echo_returns_prompt_block() {
        let p = ScriptedProvider::echo("e");
        let out = p.complete(&req("review:\n```json\n{\"a\":1}\n```\n")).unwrap();
        assert_eq!(out.text, "```json\n{\"a\":1}\n```\n");
    }

    #[test]
    fn recording_round_trips_through_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.jsonl");
        let inner = Arc::new(ScriptedProvider::new("x", vec![ScriptRule::new(&[], vec!["hello".into()])]));
        let rec = RecordingProvider::new(inner, &path).unwrap();
        rec.complete(&req("q1")).unwrap();
        let replay = ScriptedProvider::from_recording("x", &path).unwrap();
        assert_eq!(replay.complete(&req("q1")).unwrap().text, "hello");
        assert!(replay.complete(&req("q2")).is_err());
    }

    #[test]
    fn key_variable_name() {
        assert_eq!(api_key_var("gemini-3-pro"), "FORGE_PROVIDER_GEMINI_3_PRO_KEY");
    }

    #[test]
    fn http_gateway_against_local_stub() {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let addr = server.server_addr().to_ip().unwrap();
        let handle = std::thread::spawn(move || {
            let mut rq = server.recv().unwrap();
            let mut body = String::new();
            rq.as_reader().read_to_string(&mut body).unwrap();
            assert!(rq.headers().iter().any(|h| h.field.equiv("authorization")));
            let v: serde_json::Value = serde_json::from_str(&body).unwrap();
            assert_eq!(v["temperature"], 2.0);
            let reply = serde_json::json!({
                "choices": [{"message": {"content": "pong"}}],
                "usage": {"prompt_tokens": 7, "completion_tokens": 1}
            });
            rq.respond(tiny_http::Response::from_string(reply.to_string())).unwrap();
        });
        let p = HttpProvider::new("stub", format!("http://{addr}/v1/chat/completions"), "m")
            .with_api_key(Some("k".into()));
        let out = p.complete(&req("ping")).unwrap();
        handle.join().unwrap();
        assert_eq!(out.text, "pong");
        assert_eq!(out.prompt_tokens, 7);

        let dead = HttpProvider::new("dead", "http://127.0.0.1:9/none", "m");
        let err = dead.complete(&req("ping")).unwrap_err();
        assert!(err.is_retryable());
    }

    #[test]
    fn providers_file_parses() {
        let text = r#"
            [[provider]]
            id = "drafter"
            kind = "echo"
            role = "creative"

            [[provider]]
            id = "refiner"
            kind = "echo"
            role = "precision"
            temperature = 0.5
        "#;
        let reg = ProviderRegistry::from_toml(text, Path::new(".")).unwrap();
        assert_eq!(reg.by_role(ProviderRole::Precision).unwrap().0.temperature, 0.5);
        assert_eq!(reg.get("drafter").unwrap().0.temperature, 2.0);
        assert!(ProviderRegistry::from_toml("[[provider]]\nid='x'\nrole='creative'\n", Path::new(".")).is_err());
    }
}
