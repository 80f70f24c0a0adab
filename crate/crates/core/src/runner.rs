//! Test discovery, execution under a time budget, and cross-target pairing.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::build::Toolchain;
use crate::model::{TargetKind, Termination, TestOutcome, TestPairing, DIGEST_LIMIT};

/// Variables passed through to test processes; everything else is dropped.
pub const ENV_ALLOWLIST: &[&str] = &[
    "PATH", "HOME", "TMPDIR", "EMSDK", "EMSDK_NODE", "EM_CONFIG", "EM_CACHE", "NODE_PATH",
];

const CTEST_MANIFEST: &str = "CTestTestfile.cmake";

/// Directories the build tool owns; never searched for tests.
const INTERNAL_DIRS: &[&str] = &["CMakeFiles", "logs", "_deps", "Testing"];

const NON_TEST_EXTENSIONS: &[&str] = &[
    "so", "dylib", "a", "o", "obj", "sh", "py", "cmake", "js", "wasm", "txt", "json", "make",
    "data", "log", "bin",
];

#[derive(Debug, Error)]
pub enum RunError {
    #[error("no tests found under {0}")]
    NoTestsFound(PathBuf),
    #[error("wasm host runtime `{0}` not found")]
    RuntimeMissing(String),
    #[error("failed to spawn {path}: {source}")]
    SpawnFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RunnerKind {
    DirectExecutable,
    WasmHost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestArtifact {
    pub test_name: String,
    pub target: TargetKind,
    pub path: PathBuf,
    pub runner_kind: RunnerKind,
    pub declared_workdir: PathBuf,
}

/// An artifact together with the outcome of running it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutedTest {
    pub artifact: TestArtifact,
    pub outcome: TestOutcome,
}

static ADD_TEST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^\s*add_test\s*\((.*)\)\s*$").unwrap());
static SUBDIRS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?m)^\s*subdirs\s*\(\s*"?([^")]+)"?\s*\)"#).unwrap());
static TEST_PROPS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^\s*set_tests_properties\s*\((.*)\)\s*$").unwrap());
static CMAKE_ARG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"\[(=*)\[(.*?)\]=*\]|"((?:[^"\\]|\\.)*)"|([^\s"]+)"#).unwrap());

/// Splits a CMake argument list, honoring quoted and bracket arguments.
fn cmake_args(s: &str) -> Vec<String> {
    CMAKE_ARG
        .captures_iter(s)
        .map(|c| {
            c.get(2)
                .or_else(|| c.get(3))
                .or_else(|| c.get(4))
                .map_or(String::new(), |m| m.as_str().to_string())
        })
        .collect()
}

/// One `add_test` entry: (test name, command words, working directory).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub command: Vec<String>,
    pub working_directory: Option<PathBuf>,
}

/// Reads the test driver's manifest tree rooted at `dir`. Returns `None`
/// when no manifest exists.
pub fn read_test_manifest(dir: &Path) -> Option<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(dir.join(CTEST_MANIFEST)).ok()?;
    let mut entries = Vec::new();
    for cap in ADD_TEST.captures_iter(&text) {
        let mut args = cmake_args(&cap[1]).into_iter();
        if let Some(name) = args.next() {
            entries.push(ManifestEntry {
                name,
                command: args.collect(),
                working_directory: None,
            });
        }
    }
    for cap in TEST_PROPS.captures_iter(&text) {
        let args = cmake_args(&cap[1]);
        let Some(props) = args.iter().position(|a| a == "PROPERTIES") else {
            continue;
        };
        let names = &args[..props];
        let kv = &args[props + 1..];
        for pair in kv.chunks(2) {
            if let [key, value] = pair {
                if key == "WORKING_DIRECTORY" {
                    for e in entries.iter_mut().filter(|e| names.contains(&e.name)) {
                        e.working_directory = Some(PathBuf::from(value));
                    }
                }
            }
        }
    }
    for cap in SUBDIRS.captures_iter(&text) {
        let sub = Path::new(cap[1].trim());
        let sub = if sub.is_absolute() { sub.to_path_buf() } else { dir.join(sub) };
        if let Some(more) = read_test_manifest(&sub) {
            entries.extend(more);
        }
    }
    Some(entries)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn has_wasm_sibling(js: &Path) -> bool {
    js.with_extension("wasm").is_file()
}

#[cfg(unix)]
fn is_executable_file(p: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    p.metadata()
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

#[cfg(not(unix))]
fn is_executable_file(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "exe")
}

fn walk_build_tree(build_dir: &Path) -> impl Iterator<Item = PathBuf> {
    WalkDir::new(build_dir)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            let name = e.file_name().to_string_lossy();
            e.depth() == 0 || !(name.starts_with('.') || e.file_type().is_dir() && INTERNAL_DIRS.contains(&name.as_ref()))
        })
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
}

fn artifact(path: PathBuf, target: TargetKind, workdir: Option<PathBuf>) -> TestArtifact {
    let declared_workdir = workdir
        .or_else(|| path.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    TestArtifact {
        test_name: stem(&path),
        target,
        runner_kind: match target {
            TargetKind::Native => RunnerKind::DirectExecutable,
            TargetKind::Wasm => RunnerKind::WasmHost,
        },
        path,
        declared_workdir,
    }
}

fn from_manifest(entries: Vec<ManifestEntry>, target: TargetKind) -> Vec<TestArtifact> {
    entries
        .into_iter()
        .filter_map(|e| {
            let path = match target {
                TargetKind::Native => e.command.first().map(PathBuf::from),
                // The command may be prefixed by the host runtime.
                TargetKind::Wasm => e.command.iter().find(|w| w.ends_with(".js")).map(PathBuf::from),
            }?;
            let ok = match target {
                TargetKind::Native => is_executable_file(&path),
                TargetKind::Wasm => path.is_file() && has_wasm_sibling(&path),
            };
            ok.then(|| artifact(path, target, e.working_directory))
        })
        .collect()
}

fn from_filesystem(build_dir: &Path, target: TargetKind) -> Vec<TestArtifact> {
    walk_build_tree(build_dir)
        .filter(|p| match target {
            TargetKind::Native => {
                let ext = p.extension().map(|e| e.to_string_lossy().to_ascii_lowercase());
                is_executable_file(p)
                    && !ext.is_some_and(|e| NON_TEST_EXTENSIONS.contains(&e.as_str()))
            }
            TargetKind::Wasm => p.extension().is_some_and(|e| e == "js") && has_wasm_sibling(p),
        })
        .map(|p| artifact(p, target, None))
        .collect()
}

/// Finds test executables in a finished build tree. The test driver's
/// manifest is preferred; the filesystem is searched when the manifest is
/// missing or names nothing runnable. Results are sorted by path and
/// deduplicated by executable; clashing basenames get path-qualified names.
pub fn discover_tests(build_dir: &Path, target: TargetKind) -> Result<Vec<TestArtifact>, RunError> {
    let mut found = read_test_manifest(build_dir)
        .map(|entries| from_manifest(entries, target))
        .unwrap_or_default();
    if found.is_empty() {
        found = from_filesystem(build_dir, target);
    }
    found.sort_by(|a, b| a.path.cmp(&b.path));
    found.dedup_by(|a, b| a.path == b.path);

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for a in &found {
        *counts.entry(a.test_name.clone()).or_default() += 1;
    }
    for a in &mut found {
        if counts[&a.test_name] > 1 {
            let rel = a.path.strip_prefix(build_dir).unwrap_or(&a.path).with_extension("");
            a.test_name = rel.to_string_lossy().replace('\\', "/");
        }
    }
    if found.is_empty() {
        return Err(RunError::NoTestsFound(build_dir.to_path_buf()));
    }
    Ok(found)
}

/// Reads a stream to the end, keeping only the first `DIGEST_LIMIT` bytes.
fn drain<R: Read + Send + 'static>(stream: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        if let Some(mut s) = stream {
            let mut buf = [0u8; 8192];
            while let Ok(n) = s.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let room = DIGEST_LIMIT.saturating_sub(kept.len());
                kept.extend_from_slice(&buf[..n.min(room)]);
            }
        }
        kept
    })
}

#[cfg(unix)]
fn kill_tree(child: &mut std::process::Child) {
    // The child leads its own process group; take the whole group down.
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_tree(child: &mut std::process::Child) {
    let _ = child.kill();
}

fn termination(status: std::process::ExitStatus) -> Termination {
    if let Some(code) = status.code() {
        return Termination::Exited(code);
    }
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(sig) = status.signal() {
            return Termination::Signaled(sig);
        }
    }
    Termination::Exited(-1)
}

static RUNTIME_CACHE: LazyLock<Mutex<BTreeMap<String, Option<PathBuf>>>> =
    LazyLock::new(|| Mutex::new(BTreeMap::new()));

fn resolve_runtime(toolchain: &Toolchain) -> Result<PathBuf, RunError> {
    let mut cache = RUNTIME_CACHE.lock().unwrap();
    cache
        .entry(format!("{:?}|{}", toolchain.root, toolchain.host_runtime))
        .or_insert_with(|| toolchain.resolve(&toolchain.host_runtime).ok())
        .clone()
        .ok_or_else(|| RunError::RuntimeMissing(toolchain.host_runtime.clone()))
}

/// Runs one test with a clean environment in its declared working directory.
pub fn execute_test(
    artifact: &TestArtifact,
    timeout_secs: u64,
    toolchain: &Toolchain,
) -> Result<TestOutcome, RunError> {
    let mut cmd = match artifact.runner_kind {
        RunnerKind::DirectExecutable => Command::new(&artifact.path),
        RunnerKind::WasmHost => {
            let mut c = Command::new(resolve_runtime(toolchain)?);
            c.arg(&artifact.path);
            c
        }
    };
    cmd.current_dir(&artifact.declared_workdir)
        .env_clear()
        .envs(ENV_ALLOWLIST.iter().filter_map(|k| std::env::var_os(k).map(|v| (*k, v))))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }

    let budget = Duration::from_secs(timeout_secs);
    let started = Instant::now();
    let mut child = cmd.spawn().map_err(|source| RunError::SpawnFailure {
        path: artifact.path.clone(),
        source,
    })?;
    let out = drain(child.stdout.take());
    let err = drain(child.stderr.take());

    let mut poll = Duration::from_millis(1);
    let end = loop {
        match child.try_wait() {
            Ok(Some(status)) => break termination(status),
            Ok(None) if started.elapsed() >= budget => {
                kill_tree(&mut child);
                let _ = child.wait();
                break Termination::TimedOut;
            }
            Ok(None) => {
                thread::sleep(poll);
                poll = (poll * 2).min(Duration::from_millis(50));
            }
            Err(_) => {
                kill_tree(&mut child);
                let _ = child.wait();
                break Termination::Exited(-1);
            }
        }
    };
    let mut duration_ms = started.elapsed().as_millis() as u64;
    if end == Termination::TimedOut {
        duration_ms = duration_ms.max(budget.as_millis() as u64);
    }
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    Ok(TestOutcome::new(
        artifact.test_name.clone(),
        artifact.target,
        end,
        &stdout,
        &stderr,
        duration_ms,
    ))
}

/// Executes artifacts on up to `jobs` workers. Spawn failures are recorded
/// as `NotRun` outcomes; a missing host runtime aborts.
pub fn run_tests(
    artifacts: &[TestArtifact],
    timeout_secs: u64,
    toolchain: &Toolchain,
    jobs: usize,
) -> Result<Vec<ExecutedTest>, RunError> {
    if artifacts.iter().any(|a| a.runner_kind == RunnerKind::WasmHost) {
        resolve_runtime(toolchain)?;
    }
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(artifacts.len()));
    thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, artifacts.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(a) = artifacts.get(i) else { break };
                let outcome = match execute_test(a, timeout_secs, toolchain) {
                    Ok(o) => o,
                    Err(e) => {
                        log::warn!("{}: {e}", a.test_name);
                        TestOutcome::new(
                            a.test_name.clone(),
                            a.target,
                            Termination::NotStarted,
                            b"",
                            e.to_string().as_bytes(),
                            0,
                        )
                    }
                };
                results.lock().unwrap().push(ExecutedTest {
                    artifact: a.clone(),
                    outcome,
                });
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by(|a, b| a.artifact.test_name.cmp(&b.artifact.test_name));
    Ok(results)
}

/// Matches tests by exact name. Names seen on only one side yield
/// incomplete pairings. Output is sorted by name.
pub fn pair_tests(native: &[ExecutedTest], wasm: &[ExecutedTest]) -> Vec<TestPairing> {
    let mut by_name: BTreeMap<String, TestPairing> = BTreeMap::new();
    let mut slot = |t: &ExecutedTest, target: TargetKind| {
        let entry = by_name
            .entry(t.artifact.test_name.clone())
            .or_insert_with(|| TestPairing {
                test_name: t.artifact.test_name.clone(),
                native: None,
                wasm: None,
            });
        let side = match target {
            TargetKind::Native => &mut entry.native,
            TargetKind::Wasm => &mut entry.wasm,
        };
        if side.is_none() {
            *side = Some(t.outcome.clone());
        }
    };
    for t in native {
        slot(t, TargetKind::Native);
    }
    for t in wasm {
        slot(t, TargetKind::Wasm);
    }
    by_name.into_values().collect()
}

/// Names present on exactly one side.
pub fn unmatched_names(pairings: &[TestPairing]) -> BTreeSet<String> {
    pairings
        .iter()
        .filter(|p| !p.is_complete())
        .map(|p| p.test_name.clone())
        .collect()
}
