//! Shared domain types and project configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-test execution budget applied when a config omits `timeout_secs`.
pub const DEFAULT_TIMEOUT_SECS: u64 = 300;

/// Upper bound on retained stdout/stderr bytes per test.
pub const DIGEST_LIMIT: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("bad path for `{field}`: {path} ({reason})")]
    BadPath {
        field: &'static str,
        path: PathBuf,
        reason: String,
    },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The two compilation targets under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Native,
    Wasm,
}

impl TargetKind {
    pub const ALL: [TargetKind; 2] = [TargetKind::Native, TargetKind::Wasm];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::Native => "native",
            TargetKind::Wasm => "wasm",
        }
    }

    pub fn other(self) -> TargetKind {
        match self {
            TargetKind::Native => TargetKind::Wasm,
            TargetKind::Wasm => TargetKind::Native,
        }
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TargetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "native" => Ok(TargetKind::Native),
            "wasm" => Ok(TargetKind::Wasm),
            other => Err(format!("unknown target `{other}`")),
        }
    }
}

/// One codebase under test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectSpec {
    pub name: String,
    pub source_root: PathBuf,
    pub build_script: PathBuf,
    pub test_enable_options: Vec<String>,
    pub extra_configure_args: Vec<String>,
    pub workdir: PathBuf,
    pub timeout_secs: u64,
    /// Directory tests are expected to run from, used first when resolving
    /// file literals for preloading.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_workdir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toolchain_root: Option<PathBuf>,
    /// Extra known-bug fingerprints (TOML) merged into the built-in table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_fingerprints: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProjectConfig {
    name: Option<String>,
    source_root: Option<PathBuf>,
    build_script: Option<PathBuf>,
    #[serde(default)]
    test_enable_options: Vec<String>,
    #[serde(default)]
    extra_configure_args: Vec<String>,
    workdir: Option<PathBuf>,
    timeout_secs: Option<i64>,
    test_workdir: Option<PathBuf>,
    toolchain_root: Option<PathBuf>,
    bug_fingerprints: Option<PathBuf>,
}

/// Reads and validates a project config file. Relative paths are resolved
/// against the directory containing the config.
pub fn load_project_config(path: &Path) -> Result<ProjectSpec, ConfigError> {
    load_project_config_with(path, &[])
}

/// [`load_project_config`] with `key = value` overrides applied on top of
/// the file. A value that parses as TOML is taken as such, otherwise as a
/// plain string.
pub fn load_project_config_with(
    path: &Path,
    overrides: &[(String, String)],
) -> Result<ProjectSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| ConfigError::SchemaViolation(e.message().to_string()))?;
    for (key, value) in overrides {
        table.insert(key.clone(), override_value(value));
    }
    project_from_table(table, &base)
}

fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Parses config text; `base` anchors relative paths.
pub fn parse_project_config(text: &str, base: &Path) -> Result<ProjectSpec, ConfigError> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| ConfigError::SchemaViolation(e.message().to_string()))?;
    project_from_table(table, base)
}

pub(crate) fn project_from_table(
    table: toml::Table,
    base: &Path,
) -> Result<ProjectSpec, ConfigError> {
    let raw: RawProjectConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::SchemaViolation(e.message().to_string()))?;
    validate(raw, base)
}

fn validate(raw: RawProjectConfig, base: &Path) -> Result<ProjectSpec, ConfigError> {
    let name = raw
        .name
        .ok_or_else(|| ConfigError::MissingField("name".into()))?;
    if name.trim().is_empty() {
        return Err(ConfigError::SchemaViolation("`name` must be nonempty".into()));
    }
    let source_root = raw
        .source_root
        .ok_or_else(|| ConfigError::MissingField("source_root".into()))?;
    let build_script = raw
        .build_script
        .ok_or_else(|| ConfigError::MissingField("build_script".into()))?;
    let workdir = raw
        .workdir
        .ok_or_else(|| ConfigError::MissingField("workdir".into()))?;

    let timeout_secs = match raw.timeout_secs {
        None => DEFAULT_TIMEOUT_SECS,
        Some(t) if t >= 1 => t as u64,
        Some(t) => {
            return Err(ConfigError::SchemaViolation(format!(
                "`timeout_secs` must be >= 1, got {t}"
            )))
        }
    };

    let source_root = anchor(base, &source_root);
    let source_root = source_root
        .canonicalize()
        .ok()
        .filter(|p| p.is_dir())
        .ok_or_else(|| ConfigError::BadPath {
            field: "source_root",
            path: source_root.clone(),
            reason: "not an existing directory".into(),
        })?;

    let build_script = normalize(&anchor(&source_root, &build_script));
    if !build_script.is_file() {
        return Err(ConfigError::BadPath {
            field: "build_script",
            path: build_script,
            reason: "file does not exist".into(),
        });
    }
    let build_script = build_script.canonicalize().unwrap_or(build_script);
    if !build_script.starts_with(&source_root) {
        return Err(ConfigError::BadPath {
            field: "build_script",
            path: build_script,
            reason: "must live under source_root".into(),
        });
    }

    let workdir = resolve_existing_prefix(&normalize(&anchor(base, &workdir)));
    if workdir.starts_with(&source_root) || source_root.starts_with(&workdir) {
        return Err(ConfigError::BadPath {
            field: "workdir",
            path: workdir,
            reason: "must be disjoint from source_root".into(),
        });
    }

    let test_workdir = raw
        .test_workdir
        .map(|p| normalize(&anchor(&source_root, &p)));
    if let Some(dir) = &test_workdir {
        if !dir.is_dir() {
            return Err(ConfigError::BadPath {
                field: "test_workdir",
                path: dir.clone(),
                reason: "not an existing directory".into(),
            });
        }
    }

    Ok(ProjectSpec {
        name,
        source_root,
        build_script,
        test_enable_options: raw.test_enable_options,
        extra_configure_args: raw.extra_configure_args,
        workdir,
        timeout_secs,
        test_workdir,
        toolchain_root: raw.toolchain_root.map(|p| normalize(&anchor(base, &p))),
        bug_fingerprints: raw.bug_fingerprints.map(|p| normalize(&anchor(base, &p))),
    })
}

fn anchor(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Lexical normalization: drops `.` and folds `..` without touching the filesystem.
pub(crate) fn normalize(p: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in p.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}

/// Canonicalizes the longest existing ancestor so symlinked roots compare correctly.
fn resolve_existing_prefix(p: &Path) -> PathBuf {
    let mut existing = p.to_path_buf();
    let mut tail = Vec::new();
    while !existing.exists() {
        match (existing.file_name().map(|n| n.to_os_string()), existing.parent()) {
            (Some(name), Some(parent)) => {
                tail.push(name);
                existing = parent.to_path_buf();
            }
            _ => return p.to_path_buf(),
        }
    }
    let mut out = existing.canonicalize().unwrap_or(existing);
    for name in tail.into_iter().rev() {
        out.push(name);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestStatus {
    Pass,
    Fail,
    Timeout,
    CrashSignal,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub artifact_id: String,
    pub target: TargetKind,
    pub status: TestStatus,
    pub exit_code: Option<i32>,
    pub stdout_digest: String,
    pub stderr_digest: String,
    pub duration_ms: u64,
}

/// How a test process ended, before it is folded into a [`TestStatus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Exited(i32),
    Signaled(i32),
    TimedOut,
    NotStarted,
}

impl TestOutcome {
    pub fn new(
        artifact_id: impl Into<String>,
        target: TargetKind,
        termination: Termination,
        stdout: &[u8],
        stderr: &[u8],
        duration_ms: u64,
    ) -> Self {
        let (status, exit_code) = match termination {
            Termination::Exited(0) => (TestStatus::Pass, Some(0)),
            Termination::Exited(code) => (TestStatus::Fail, Some(code)),
            Termination::Signaled(_) => (TestStatus::CrashSignal, None),
            Termination::TimedOut => (TestStatus::Timeout, None),
            Termination::NotStarted => (TestStatus::NotRun, None),
        };
        TestOutcome {
            artifact_id: artifact_id.into(),
            target,
            status,
            exit_code,
            stdout_digest: digest(stdout),
            stderr_digest: digest(stderr),
            duration_ms,
        }
    }

    pub fn bit(&self) -> u8 {
        outcome_bit(self)
    }
}

/// o(t): 1 when the test passed, 0 for every other status.
pub fn outcome_bit(outcome: &TestOutcome) -> u8 {
    u8::from(outcome.status == TestStatus::Pass)
}

/// Bounded, lossily-decoded prefix of a captured stream.
pub fn digest(bytes: &[u8]) -> String {
    let end = bytes.len().min(DIGEST_LIMIT);
    String::from_utf8_lossy(&bytes[..end]).into_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPairing {
    pub test_name: String,
    pub native: Option<TestOutcome>,
    pub wasm: Option<TestOutcome>,
}

impl TestPairing {
    pub fn is_complete(&self) -> bool {
        self.native.is_some() && self.wasm.is_some()
    }

    pub fn side(&self, target: TargetKind) -> Option<&TestOutcome> {
        match target {
            TargetKind::Native => self.native.as_ref(),
            TargetKind::Wasm => self.wasm.as_ref(),
        }
    }

    /// |o_native - o_wasm| for complete pairings, `None` otherwise.
    pub fn discrepancy(&self) -> Option<u8> {
        match (&self.native, &self.wasm) {
            (Some(n), Some(w)) => Some(n.bit().abs_diff(w.bit())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    PassNativeFailWasm,
    FailNativePassWasm,
}

impl Direction {
    pub fn inverted(self) -> Direction {
        match self {
            Direction::PassNativeFailWasm => Direction::FailNativePassWasm,
            Direction::FailNativePassWasm => Direction::PassNativeFailWasm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RootCauseTag {
    DifferentStdlib,
    UnsupportedSyscallOrApi,
    WasmLanguageFeature,
    CompilerBug,
    Unclassified,
}

impl RootCauseTag {
    pub const ALL: [RootCauseTag; 5] = [
        RootCauseTag::DifferentStdlib,
        RootCauseTag::UnsupportedSyscallOrApi,
        RootCauseTag::WasmLanguageFeature,
        RootCauseTag::CompilerBug,
        RootCauseTag::Unclassified,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RootCauseTag::DifferentStdlib => "Different standard libraries",
            RootCauseTag::UnsupportedSyscallOrApi => "Unsupported system calls and APIs",
            RootCauseTag::WasmLanguageFeature => "WebAssembly language features",
            RootCauseTag::CompilerBug => "Compiler bugs",
            RootCauseTag::Unclassified => "Unclassified",
        }
    }
}

impl std::str::FromStr for RootCauseTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RootCauseTag::ALL
            .into_iter()
            .find(|t| format!("{t:?}") == s)
            .ok_or_else(|| format!("unknown root-cause tag `{s}`"))
    }
}

/// A named signal and the text it matched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub pattern: String,
    pub excerpt: String,
}

impl Evidence {
    pub fn new(pattern: impl Into<String>, excerpt: impl AsRef<str>) -> Self {
        Evidence {
            pattern: pattern.into(),
            excerpt: clip(excerpt.as_ref().trim(), 240),
        }
    }
}

pub(crate) fn clip(s: &str, max_chars: usize) -> String {
    match s.char_indices().nth(max_chars) {
        Some((idx, _)) => format!("{}...", &s[..idx]),
        None => s.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscrepancyRecord {
    pub pairing: TestPairing,
    pub direction: Direction,
    pub root_cause: RootCauseTag,
    pub evidence: Vec<Evidence>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<String>,
}

/// Tool name to version string.
pub type ToolVersions = BTreeMap<String, String>;
