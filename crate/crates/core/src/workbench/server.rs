//! The environment server: read-only static serving of bundle files with
//! per-route artificial latency and per-run noise seeding.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use sha2::{Digest, Sha256};
use tiny_http::{Header, Response, Server};
use tracing::debug;

use super::{load_task_bundle, BenchmarkManifest};
use crate::bundle::{NetworkDelay, WebsiteBundle, CONTROL_FILES};
use crate::error::{ForgeError, Result};
use crate::refinement::noise::rewrite_island_seed;
use crate::validation::{TRACE_FILE, VERDICT_FILE};

const WORKERS: usize = 4;
const POLL: Duration = Duration::from_millis(50);

/// A bundle root served under a URL prefix (`""` for the server root).
#[derive(Debug, Clone)]
pub struct Mount {
    pub prefix: String,
    pub root: PathBuf,
    pub delay: Option<NetworkDelay>,
}

impl Mount {
    pub fn for_bundle(prefix: impl Into<String>, bundle: &WebsiteBundle) -> Self {
        Mount {
            prefix: prefix.into().trim_matches('/').to_string(),
            root: bundle.root.clone(),
            delay: bundle.metadata.network_delay.clone(),
        }
    }
}

/// A running server. Dropping it stops the worker threads.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/", self.addr)
    }

    /// Blocks until the server is stopped from another thread or the
    /// process exits.
    pub fn wait(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn stop(self) {}
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

struct Site {
    mounts: Vec<Mount>,
    seed: u32,
    requests: AtomicU64,
}

/// Starts serving `mounts` on `127.0.0.1:port` (0 picks a free port).
pub fn serve(mounts: Vec<Mount>, port: u16, seed: u32) -> Result<ServerHandle> {
    let server = Server::http(("127.0.0.1", port))
        .map_err(|e| ForgeError::Infrastructure(format!("cannot listen on port {port}: {e}")))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| ForgeError::Infrastructure("server has no IP address".into()))?;
    let server = Arc::new(server);
    let site = Arc::new(Site {
        mounts,
        seed,
        requests: AtomicU64::new(0),
    });
    let stop = Arc::new(AtomicBool::new(false));
    let workers = (0..WORKERS)
        .map(|_| {
            let (server, site, stop) = (Arc::clone(&server), Arc::clone(&site), Arc::clone(&stop));
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match server.recv_timeout(POLL) {
                        Ok(Some(req)) => handle(&site, req),
                        Ok(None) => {}
                        Err(_) => break,
                    }
                }
            })
        })
        .collect();
    debug!(%addr, "server listening");
    Ok(ServerHandle { addr, stop, workers })
}

pub fn serve_bundle(bundle: &WebsiteBundle, port: u16, seed: u32) -> Result<ServerHandle> {
    serve(vec![Mount::for_bundle("", bundle)], port, seed)
}

/// Serves every manifest task under `/<task_id>/`.
pub fn serve_manifest(bench_dir: &Path, manifest: &BenchmarkManifest, port: u16, seed: u32) -> Result<ServerHandle> {
    let mut mounts = Vec::new();
    for t in &manifest.tasks {
        let b = load_task_bundle(bench_dir, t)?;
        mounts.push(Mount::for_bundle(t.task_id.clone(), &b));
    }
    serve(mounts, port, seed)
}

/// Files never served: the control files and validator artifacts.
pub fn is_forbidden(rel: &str) -> bool {
    CONTROL_FILES.contains(&rel) || rel == VERDICT_FILE || rel == TRACE_FILE || rel.starts_with("forge/")
}

fn content_type(rel: &str) -> &'static str {
    match rel.rsplit('.').next().unwrap_or("") {
        "html" | "htm" => "text/html; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "js" => "application/javascript; charset=utf-8",
        "json" => "application/json",
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "svg" => "image/svg+xml",
        "gif" => "image/gif",
        "webp" => "image/webp",
        _ => "application/octet-stream",
    }
}

/// Splits a request path into its mount and a safe relative file path.
fn resolve<'a>(site: &'a Site, url: &str) -> Option<(&'a Mount, String)> {
    let path = url.split(['?', '#']).next().unwrap_or("");
    let path = path.trim_start_matches('/');
    for m in &site.mounts {
        let rest = if m.prefix.is_empty() {
            path
        } else if path == m.prefix {
            ""
        } else if let Some(r) = path.strip_prefix(&m.prefix).and_then(|r| r.strip_prefix('/')) {
            r
        } else {
            continue;
        };
        let rel = if rest.is_empty() || rest.ends_with('/') { format!("{rest}index.html") } else { rest.to_string() };
        if rel.split('/').any(|seg| matches!(seg, "" | "." | "..")) || rel.contains('\\') {
            return None;
        }
        return Some((m, rel));
    }
    None
}

/// Latency for one request, drawn deterministically from the range.
fn latency(site: &Site, mount: &Mount, rel: &str, n: u64) -> Duration {
    let Some(range) = mount.delay.as_ref().and_then(|d| d.for_path(&format!("/{rel}"))) else {
        return Duration::ZERO;
    };
    let span = range.max_ms.saturating_sub(range.min_ms);
    let ms = if span == 0 {
        range.min_ms
    } else {
        let h = Sha256::digest(format!("{}:{rel}:{n}", site.seed).as_bytes());
        range.min_ms + u64::from_be_bytes(h[..8].try_into().expect("8 bytes")) % (span + 1)
    };
    Duration::from_millis(ms)
}

fn handle(site: &Site, req: tiny_http::Request) {
    let n = site.requests.fetch_add(1, Ordering::SeqCst);
    let url = req.url().to_string();
    let not_found = || Response::from_string("not found").with_status_code(404);
    let method_ok = matches!(req.method(), tiny_http::Method::Get | tiny_http::Method::Head);
    let Some((mount, rel)) = resolve(site, &url).filter(|_| method_ok) else {
        let _ = req.respond(not_found());
        return;
    };
    if is_forbidden(&rel) {
        debug!(%url, "blocked control file");
        let _ = req.respond(not_found());
        return;
    }
    let file = mount.root.join(&rel);
    let Ok(mut body) = std::fs::read(&file) else {
        let _ = req.respond(not_found());
        return;
    };
    if rel.ends_with(".html") {
        if let Some(text) = std::str::from_utf8(&body).ok().and_then(|t| rewrite_island_seed(t, site.seed)) {
            body = text.into_bytes();
        }
    }
    std::thread::sleep(latency(site, mount, &rel, n));
    let header = Header::from_bytes("Content-Type", content_type(&rel)).expect("static header");
    let _ = req.respond(Response::from_data(body).with_header(header));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(prefix: &str) -> Site {
        Site {
            mounts: vec![Mount {
                prefix: prefix.into(),
                root: PathBuf::from("/x"),
                delay: None,
            }],
            seed: 1,
            requests: AtomicU64::new(0),
        }
    }

    #[test]
    fn path_resolution() {
        let s = site("");
        assert_eq!(resolve(&s, "/").unwrap().1, "index.html");
        assert_eq!(resolve(&s, "/a/b.html?x=1").unwrap().1, "a/b.html");
        assert!(resolve(&s, "/../etc/passwd").is_none());
        assert!(resolve(&s, "/a/./b").is_none());
        let s = site("D1-L3-001");
        assert_eq!(resolve(&s, "/D1-L3-001").unwrap().1, "index.html");
        assert_eq!(resolve(&s, "/D1-L3-001/data.json").unwrap().1, "data.json");
        assert!(resolve(&s, "/D1-L3-0011/data.json").is_none());
    }

    #[test]
    fn forbidden_files() {
        for f in ["solution.json", "metadata.json", "task.json", "verdict.json", "forge/logic.json"] {
            assert!(is_forbidden(f), "{f}");
        }
        assert!(!is_forbidden("data.json"));
    }
}
