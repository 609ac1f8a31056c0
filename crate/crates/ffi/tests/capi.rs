use std::ffi::{c_char, CStr, CString};
use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use forge_core::blueprint::Domain;
use forge_core::difficulty::{admissible_levels, DifficultyVector, Level};
use forge_core::fixtures::builtin_registry;
use forge_core::workbench::{run_pipeline, RunConfig, StageProviders};
use forge_ffi::*;

fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { forge_string_free(s) };
    out
}

fn last_error() -> String {
    let p = forge_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn wedding_site(root: &Path) -> PathBuf {
    let cfg = RunConfig::new(vec![Domain::D1], vec![Level::L3], 1, 4);
    let providers = StageProviders::resolve(&builtin_registry(), &Default::default()).unwrap();
    let run = run_pipeline(&cfg, &providers, root, 1).unwrap();
    run.dir.join(&run.manifest.tasks[0].bundle)
}

#[test]
fn admissible_mask_matches_core_for_every_vector() {
    for v in DifficultyVector::enumerate_all() {
        let values: Vec<u8> = v.levels().iter().map(|l| l.value()).collect();
        let mut mask = 0u8;
        assert_eq!(unsafe { forge_admissible_levels(values.as_ptr(), &mut mask) }, ForgeStatus::Ok);
        let expected = admissible_levels(&v).iter().fold(0u8, |m, l| m | 1 << l.index());
        assert_eq!(mask, expected);
    }
    let mut ok = false;
    let d2 = [3u8, 3, 3, 2, 2, 2, 2];
    assert_eq!(unsafe { forge_check_composition(3, d2.as_ptr(), &mut ok) }, ForgeStatus::Ok);
    assert!(ok);
    assert_eq!(unsafe { forge_check_composition(4, d2.as_ptr(), &mut ok) }, ForgeStatus::Parse);
}

#[test]
fn codec_round_trip_and_errors() {
    let plain = CString::new("11440.00").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { forge_encode_secret(plain.as_ptr(), &mut out) }, ForgeStatus::Ok);
    let encoded = take(out);
    assert_eq!(encoded, "MTE0NDAuMDA=");
    let enc = CString::new(encoded).unwrap();
    assert_eq!(unsafe { forge_decode_secret(enc.as_ptr(), &mut out) }, ForgeStatus::Ok);
    assert_eq!(take(out), "11440.00");

    let junk = CString::new("not base64!").unwrap();
    assert_eq!(unsafe { forge_decode_secret(junk.as_ptr(), &mut out) }, ForgeStatus::Parse);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { forge_encode_secret(ptr::null(), &mut out) }, ForgeStatus::NullArgument);
    assert!(last_error().contains("plaintext"));
    assert_eq!(unsafe { forge_encode_secret(plain.as_ptr(), ptr::null_mut()) }, ForgeStatus::NullArgument);
    let bad_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { forge_encode_secret(bad_utf8.as_ptr() as *const c_char, &mut out) },
        ForgeStatus::InvalidUtf8
    );
}

#[test]
fn bundle_handle_validates_judges_and_serves() {
    let root = tempfile::tempdir().unwrap();
    let site = CString::new(wedding_site(root.path()).to_str().unwrap()).unwrap();
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { forge_bundle_open(site.as_ptr(), &mut b) }, ForgeStatus::Ok);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { forge_bundle_task_json(b, &mut out) }, ForgeStatus::Ok);
    let task: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(task["domain"], "D1");

    assert_eq!(unsafe { forge_bundle_validate(b, 50, &mut out) }, ForgeStatus::Ok);
    let verdict: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(verdict["solvable"], true);
    assert_eq!(unsafe { forge_bundle_validate(b, 0, &mut out) }, ForgeStatus::TaskFailure);
    let verdict: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(verdict["failure_mode"], "step_budget_exceeded");

    let core = forge_core::bundle::WebsiteBundle::load(Path::new(site.to_str().unwrap())).unwrap();
    let state = CString::new(serde_json::to_string(&core.solution.intended_state).unwrap()).unwrap();
    assert_eq!(unsafe { forge_bundle_resolve(b, state.as_ptr(), &mut out) }, ForgeStatus::Ok);
    assert_eq!(take(out), "GEG-2026-05841");

    let mut correct = false;
    let answers = CString::new(serde_json::to_string(&core.solution.expected_final_state).unwrap()).unwrap();
    assert_eq!(unsafe { forge_bundle_judge(b, answers.as_ptr(), &mut correct) }, ForgeStatus::Ok);
    assert!(correct);
    let mut wrong = core.solution.expected_final_state.clone();
    wrong.insert("confirmation_code".into(), "GEG-2026-05842".into());
    let wrong = CString::new(serde_json::to_string(&wrong).unwrap()).unwrap();
    assert_eq!(unsafe { forge_bundle_judge(b, wrong.as_ptr(), &mut correct) }, ForgeStatus::Ok);
    assert!(!correct);
    let broken = CString::new("{").unwrap();
    assert_eq!(unsafe { forge_bundle_judge(b, broken.as_ptr(), &mut correct) }, ForgeStatus::Parse);

    let mut server = ptr::null_mut();
    assert_eq!(unsafe { forge_server_start(b, 0, 5, &mut server) }, ForgeStatus::Ok);
    let port = unsafe { forge_server_port(server) };
    assert_ne!(port, 0);
    let status = |path: &str| {
        let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
        write!(s, "GET /{path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
        let mut resp = String::new();
        s.read_to_string(&mut resp).unwrap();
        resp.split_whitespace().nth(1).unwrap().to_string()
    };
    assert_eq!(status("index.html"), "200");
    assert_eq!(status("solution.json"), "404");
    let mut second = ptr::null_mut();
    assert_eq!(unsafe { forge_server_start(b, port, 5, &mut second) }, ForgeStatus::Infrastructure);
    unsafe {
        forge_server_free(server);
        forge_bundle_free(b);
        forge_bundle_free(ptr::null_mut());
    }

    let missing = CString::new("/nonexistent/bundle").unwrap();
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { forge_bundle_open(missing.as_ptr(), &mut b) }, ForgeStatus::Io);
    assert!(b.is_null());
    assert_eq!(unsafe { forge_bundle_task_json(ptr::null(), &mut out) }, ForgeStatus::NullArgument);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/forge.h")).unwrap();
    for name in [
        "forge_last_error",
        "forge_string_free",
        "forge_admissible_levels",
        "forge_encode_secret",
        "forge_bundle_open",
        "forge_bundle_validate",
        "forge_bundle_resolve",
        "forge_bundle_judge",
        "forge_server_start",
        "forge_report",
        "typedef struct ForgeBundle ForgeBundle",
        "FORGE_STATUS_TASK_FAILURE = 7",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

/// Compiles the C smoke program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libforge_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("forge_smoke");
    let status = Command::new(cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
