//! C ABI over forge-core.
//!
//! Every fallible function returns a [`ForgeStatus`]; on anything other
//! than `FORGE_OK` the message is available from [`forge_last_error`] on
//! the same thread. Strings handed out by the library are freed with
//! [`forge_string_free`]; handles with their own `_free` function.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use forge_core::bundle::{decode_secret, encode_secret, resolve_with_program, WebsiteBundle};
use forge_core::difficulty::{admissible_levels, check_composition, DifficultyVector, Level};
use forge_core::harness::{judge_answer, read_results};
use forge_core::validation::{replay_solution, AnswerKey, ReplayOptions, SimOptions};
use forge_core::workbench::{report, serve_bundle, BenchmarkManifest, ServerHandle};
use forge_core::ForgeError;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForgeStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Config = 4,
    Infrastructure = 5,
    Io = 6,
    /// The operation ran but the task failed (e.g. an unsolvable bundle).
    TaskFailure = 7,
    Panic = 8,
    Other = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &ForgeError) -> ForgeStatus {
    match e {
        ForgeError::Parse(_) | ForgeError::Json(_) | ForgeError::Decode(_) => ForgeStatus::Parse,
        ForgeError::Config(_) => ForgeStatus::Config,
        ForgeError::Infrastructure(_) => ForgeStatus::Infrastructure,
        ForgeError::Io(_) | ForgeError::MissingFile(_) => ForgeStatus::Io,
        _ => ForgeStatus::Other,
    }
}

struct Fail(ForgeStatus, String);

impl From<ForgeError> for Fail {
    fn from(e: ForgeError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(ForgeStatus::Parse, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ForgeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ForgeStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside forge");
            ForgeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(ForgeStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(ForgeStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

fn check_out<T>(p: *mut T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(ForgeStatus::NullArgument, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

fn c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(ForgeStatus::Other, "string contains NUL".into()))
}

unsafe fn vector_arg(values: *const u8) -> Result<DifficultyVector, Fail> {
    if values.is_null() {
        return Err(Fail(ForgeStatus::NullArgument, "`values` is null".into()));
    }
    let mut v = [0u8; 7];
    std::ptr::copy_nonoverlapping(values, v.as_mut_ptr(), 7);
    Ok(DifficultyVector::from_values(v)?)
}

/// Message of the last failed call on this thread, or NULL. Owned by the
/// library and valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn forge_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn forge_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Writes a bit mask of admissible overall levels (bit 0 = L1, bit 1 = L2,
/// bit 2 = L3) for a vector of seven levels in `{1, 2, 3}`.
///
/// # Safety
/// `values` must point to 7 readable bytes and `out_mask` to a writable byte.
#[no_mangle]
pub unsafe extern "C" fn forge_admissible_levels(values: *const u8, out_mask: *mut u8) -> ForgeStatus {
    guard(|| {
        check_out(out_mask, "out_mask")?;
        let v = vector_arg(values)?;
        *out_mask = admissible_levels(&v).iter().fold(0u8, |m, l| m | 1 << l.index());
        Ok(())
    })
}

/// # Safety
/// `values` must point to 7 readable bytes and `out_ok` to a writable bool.
#[no_mangle]
pub unsafe extern "C" fn forge_check_composition(level: u8, values: *const u8, out_ok: *mut bool) -> ForgeStatus {
    guard(|| {
        check_out(out_ok, "out_ok")?;
        let level = Level::try_from(level).map_err(|e| Fail(ForgeStatus::Parse, e))?;
        *out_ok = check_composition(level, &vector_arg(values)?);
        Ok(())
    })
}

/// Base64-encodes a secret. The result must be freed with
/// [`forge_string_free`].
///
/// # Safety
/// `plaintext` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_encode_secret(plaintext: *const c_char, out: *mut *mut c_char) -> ForgeStatus {
    guard(|| {
        check_out(out, "out")?;
        *out = c_string(encode_secret(str_arg(plaintext, "plaintext")?))?;
        Ok(())
    })
}

/// # Safety
/// `encoded` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_decode_secret(encoded: *const c_char, out: *mut *mut c_char) -> ForgeStatus {
    guard(|| {
        check_out(out, "out")?;
        *out = c_string(decode_secret(str_arg(encoded, "encoded")?)?)?;
        Ok(())
    })
}

/// An opened website bundle.
pub struct ForgeBundle {
    inner: WebsiteBundle,
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_bundle_open(path: *const c_char, out: *mut *mut ForgeBundle) -> ForgeStatus {
    guard(|| {
        check_out(out, "out")?;
        let inner = WebsiteBundle::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(ForgeBundle { inner }));
        Ok(())
    })
}

/// # Safety
/// `bundle` must be NULL or a handle from [`forge_bundle_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn forge_bundle_free(bundle: *mut ForgeBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

unsafe fn bundle_ref<'a>(b: *const ForgeBundle) -> Result<&'a WebsiteBundle, Fail> {
    b.as_ref()
        .map(|b| &b.inner)
        .ok_or_else(|| Fail(ForgeStatus::NullArgument, "`bundle` is null".into()))
}

/// The task card (instruction, domain, level, difficulty) as JSON.
///
/// # Safety
/// `bundle` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_bundle_task_json(bundle: *const ForgeBundle, out: *mut *mut c_char) -> ForgeStatus {
    guard(|| {
        check_out(out, "out")?;
        *out = c_string(serde_json::to_string(&bundle_ref(bundle)?.task)?)?;
        Ok(())
    })
}

/// Replays the reference solution in the simulated browser and writes the
/// verdict as JSON. Returns `TaskFailure` (with the verdict still written)
/// when the bundle is not solvable within `budget` actions.
///
/// # Safety
/// `bundle` must be a live handle; `out_verdict` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_bundle_validate(
    bundle: *const ForgeBundle,
    budget: u32,
    out_verdict: *mut *mut c_char,
) -> ForgeStatus {
    guard(|| {
        check_out(out_verdict, "out_verdict")?;
        let opts = ReplayOptions {
            budget: budget as usize,
            ..ReplayOptions::default()
        };
        let v = replay_solution(bundle_ref(bundle)?, SimOptions::default(), opts)?;
        *out_verdict = c_string(serde_json::to_string(&v)?)?;
        if v.solvable {
            Ok(())
        } else {
            Err(Fail(ForgeStatus::TaskFailure, format!("{:?}: {}", v.failure_mode, v.detail)))
        }
    })
}

/// The confirmation code the site shows for a workflow state given as a
/// JSON object of strings.
///
/// # Safety
/// `bundle` must be a live handle; `state_json` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn forge_bundle_resolve(
    bundle: *const ForgeBundle,
    state_json: *const c_char,
    out: *mut *mut c_char,
) -> ForgeStatus {
    guard(|| {
        check_out(out, "out")?;
        let b = bundle_ref(bundle)?;
        let state: BTreeMap<String, String> = serde_json::from_str(str_arg(state_json, "state_json")?)?;
        *out = c_string(resolve_with_program(&state, &b.answer, &b.solution.judge)?)?;
        Ok(())
    })
}

/// Judges a final answer given as a JSON object of strings.
///
/// # Safety
/// `bundle` must be a live handle; `answers_json` NUL-terminated; `out_correct` writable.
#[no_mangle]
pub unsafe extern "C" fn forge_bundle_judge(
    bundle: *const ForgeBundle,
    answers_json: *const c_char,
    out_correct: *mut bool,
) -> ForgeStatus {
    guard(|| {
        check_out(out_correct, "out_correct")?;
        let key = AnswerKey::for_bundle(bundle_ref(bundle)?);
        let answers: BTreeMap<String, String> = serde_json::from_str(str_arg(answers_json, "answers_json")?)?;
        *out_correct = judge_answer(key.answer_type, &answers, &key.expected, &key.code_fields);
        Ok(())
    })
}

/// A running environment server.
pub struct ForgeServer {
    inner: ServerHandle,
}

/// Serves the bundle on 127.0.0.1 (`port` 0 picks a free port).
///
/// # Safety
/// `bundle` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn forge_server_start(
    bundle: *const ForgeBundle,
    port: u16,
    seed: u32,
    out: *mut *mut ForgeServer,
) -> ForgeStatus {
    guard(|| {
        check_out(out, "out")?;
        let inner = serve_bundle(bundle_ref(bundle)?, port, seed)?;
        *out = Box::into_raw(Box::new(ForgeServer { inner }));
        Ok(())
    })
}

/// # Safety
/// `server` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn forge_server_port(server: *const ForgeServer) -> u16 {
    server.as_ref().map_or(0, |s| s.inner.port())
}

/// Stops the server and frees the handle.
///
/// # Safety
/// `server` must be NULL or a handle from [`forge_server_start`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn forge_server_free(server: *mut ForgeServer) {
    if !server.is_null() {
        drop(Box::from_raw(server));
    }
}

/// Renders the report tables for a benchmark directory and a results file
/// into `out_dir`.
///
/// # Safety
/// All arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn forge_report(
    benchmark_dir: *const c_char,
    results_path: *const c_char,
    out_dir: *const c_char,
) -> ForgeStatus {
    guard(|| {
        let manifest = BenchmarkManifest::load(Path::new(str_arg(benchmark_dir, "benchmark_dir")?))?;
        let records = read_results(Path::new(str_arg(results_path, "results_path")?))?;
        report(&manifest, &records, Path::new(str_arg(out_dir, "out_dir")?))?;
        Ok(())
    })
}
