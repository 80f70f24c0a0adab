//! Runs build plans and classifies failed builds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{LazyLock, Mutex};
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Evidence, TargetKind, ToolVersions};
use crate::transform::{BuildPlan, CommandLine, Injection};

/// Environment variable naming the Wasm toolchain root.
pub const TOOLCHAIN_ROOT_ENV: &str = "WASMDIFF_TOOLCHAIN_ROOT";
/// Fallback root set by the toolchain's own environment script.
pub const EMSDK_ENV: &str = "EMSDK";

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("required tool `{tool}` not available: {detail}")]
    ToolchainMissing { tool: String, detail: String },
    #[error("build directory {path} is not writable: {source}")]
    WorkdirUnwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to patch build script {path}: {source}")]
    ScriptPatch {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FailureCategory {
    UndefinedSymbols,
    MissingThirdParty,
    TargetDependentWerror,
    ArchPlatformSpecific,
    IncompatibleOptions,
    SuspectedCompilerBug,
    Unknown,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 7] = [
        FailureCategory::UndefinedSymbols,
        FailureCategory::MissingThirdParty,
        FailureCategory::TargetDependentWerror,
        FailureCategory::ArchPlatformSpecific,
        FailureCategory::IncompatibleOptions,
        FailureCategory::SuspectedCompilerBug,
        FailureCategory::Unknown,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FailureCategory::UndefinedSymbols => "Undefined symbols",
            FailureCategory::MissingThirdParty => "Missing third-party libraries",
            FailureCategory::TargetDependentWerror => "Target-dependent warnings + Werror",
            FailureCategory::ArchPlatformSpecific => "Architecture- and platform-specific code",
            FailureCategory::IncompatibleOptions => "Incompatible compiler options",
            FailureCategory::SuspectedCompilerBug => "WebAssembly compiler bugs (suspected)",
            FailureCategory::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureClassification {
    pub category: FailureCategory,
    pub matched_signals: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildResult {
    pub target: TargetKind,
    pub succeeded: bool,
    pub configure_log: String,
    pub build_log: String,
    pub duration_ms: u64,
    pub failure: Option<FailureClassification>,
}

/// Headers that only exist on particular platforms or architectures.
const PLATFORM_HEADERS: &[&str] = &[
    "sys/epoll.h", "sys/inotify.h", "sys/signalfd.h", "sys/timerfd.h", "sys/eventfd.h",
    "sys/prctl.h", "sys/sysinfo.h", "sys/io.h", "sys/sendfile.h", "sys/personality.h",
    "sys/fanotify.h", "sys/auxv.h", "sys/ptrace.h", "execinfo.h", "cpuid.h", "x86intrin.h",
    "immintrin.h", "ia32intrin.h", "nmmintrin.h", "tmmintrin.h", "wmmintrin.h", "arm_neon.h",
    "arm_acle.h", "windows.h", "winsock2.h", "intrin.h", "malloc/malloc.h",
];
const PLATFORM_HEADER_PREFIXES: &[&str] = &["linux/", "asm/", "mach/", "libkern/", "asm-generic/"];

fn is_platform_header(h: &str) -> bool {
    PLATFORM_HEADERS.contains(&h) || PLATFORM_HEADER_PREFIXES.iter().any(|p| h.starts_with(p))
}

fn compile(patterns: &[(&'static str, &str)]) -> Vec<(&'static str, Regex)> {
    patterns
        .iter()
        .map(|(name, pat)| (*name, Regex::new(pat).unwrap()))
        .collect()
}

static UNDEFINED: LazyLock<Vec<(&'static str, Regex)>> = LazyLock::new(|| {
    compile(&[
        ("undefined-symbol", r"(?i)undefined symbol"),
        ("undefined-reference", r"undefined reference to"),
    ])
});

static PACKAGE_MISSING: LazyLock<Vec<(&'static str, Regex)>> = LazyLock::new(|| {
    compile(&[
        ("cmake-could-not-find", r"(?i)could not find\b"),
        ("cmake-package-config", r#"By not providing "Find\w+\.cmake""#),
        ("pkg-config-missing", r"No package '[^']+' found"),
    ])
});

static MISSING_HEADER: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    vec![
        Regex::new(r"fatal error: '([^']+)' file not found").unwrap(),
        Regex::new(r"fatal error: ([^\s:']+): No such file or directory").unwrap(),
    ]
});

static WERROR_FLAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-Werror\b").unwrap());

static PROMOTED_WARNING: LazyLock<Vec<(&'static str, Regex)>> = LazyLock::new(|| {
    compile(&[
        ("unused-compilation-argument", r"(?i)unused compilation argument"),
        ("argument-unused", r"(?i)argument unused during compilation"),
        ("werror-diagnostic", r"\[-Werror[,=\]]"),
        ("warnings-as-errors", r"(?i)warnings being treated as errors"),
    ])
});

static ARCH_SPECIFIC: LazyLock<Vec<(&'static str, Regex)>> = LazyLock::new(|| {
    compile(&[
        ("invalid-asm-constraint", r"(?i)invalid (output|input) constraint"),
        ("unsupported-architecture", r"(?i)unsupported (architecture|platform)"),
        ("unknown-register", r"(?i)unknown register name"),
        ("asm-register-allocation", r"(?i)couldn't allocate (input|output) reg"),
        ("inline-asm", r"(?i)inline (asm|assembly)[^\n]*not supported"),
        ("error-directive-platform", r"(?i)#error[^\n]*(architecture|platform|operating system|\bOS\b)"),
        ("instruction-requires", r"(?i)instruction requires:"),
    ])
});

static INCOMPATIBLE: LazyLock<Vec<(&'static str, Regex)>> = LazyLock::new(|| {
    compile(&[
        ("unknown-argument", r"(?i)unknown argument"),
        ("unsupported-option", r"(?i)unsupported option"),
        ("unrecognized-option", r"(?i)unrecognized (command[- ]line )?option"),
        ("optimization-not-supported", r"(?i)optimization flag '[^']*' is not supported"),
        ("not-supported-for-target", r"(?i)is not supported for (the )?target"),
    ])
});

static COMPILER_BUG: LazyLock<Vec<(&'static str, Regex)>> = LazyLock::new(|| {
    compile(&[
        ("please-submit-bug-report", r"PLEASE submit a bug report"),
        ("internal-compiler-error", r"(?i)internal compiler error"),
        ("assertion-failed", r"Assertion [`'][^\n]*' failed|Assertion failed"),
        ("frontend-crash", r"(?i)(clang|compiler) frontend command failed"),
        ("llvm-error", r"LLVM ERROR"),
        ("stack-dump", r"(?m)^Stack dump:"),
        ("toolchain-crash", r"(?i)(segmentation fault|illegal instruction)"),
        // Errors inside the toolchain's own C++ library or sysroot headers.
        ("toolchain-header-error", r"(?i)(cache/sysroot/include|system/lib/libcxx|system/include)/[^\s:]+:\d+(:\d+)?: error:"),
    ])
});

fn first_matches(text: &str, patterns: &[(&'static str, Regex)]) -> Vec<Evidence> {
    patterns
        .iter()
        .filter_map(|(name, re)| re.find(text).map(|m| Evidence::new(*name, line_around(text, m.start()))))
        .collect()
}

fn line_around(text: &str, at: usize) -> &str {
    let start = text[..at].rfind('\n').map_or(0, |i| i + 1);
    let end = text[at..].find('\n').map_or(text.len(), |i| at + i);
    &text[start..end]
}

/// Ordered, first-match-wins build-failure classifier.
#[derive(Debug, Clone, Default)]
pub struct FailureClassifier {
    /// Header names belonging to the project; never counted as third-party.
    pub project_headers: BTreeSet<String>,
}

impl FailureClassifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_project_headers(project_headers: BTreeSet<String>) -> Self {
        FailureClassifier { project_headers }
    }

    fn missing_headers<'a>(&self, text: &'a str) -> Vec<(&'a str, usize)> {
        let mut out = Vec::new();
        for re in MISSING_HEADER.iter() {
            for cap in re.captures_iter(text) {
                let header = cap.get(1).unwrap();
                out.push((header.as_str(), header.start()));
            }
        }
        out.sort_by_key(|&(_, at)| at);
        out
    }

    fn is_project_header(&self, header: &str) -> bool {
        let base = header.rsplit('/').next().unwrap_or(header);
        self.project_headers.contains(header) || self.project_headers.contains(base)
    }

    pub fn classify(&self, configure_log: &str, build_log: &str) -> FailureClassification {
        let text = format!("{configure_log}\n{build_log}");
        let hit = |category, matched_signals: Vec<Evidence>| {
            (!matched_signals.is_empty()).then_some(FailureClassification {
                category,
                matched_signals,
            })
        };
        let headers = self.missing_headers(&text);

        if let Some(c) = hit(FailureCategory::UndefinedSymbols, first_matches(&text, &UNDEFINED)) {
            return c;
        }

        let mut third_party = first_matches(&text, &PACKAGE_MISSING);
        third_party.extend(
            headers
                .iter()
                .filter(|(h, _)| !is_platform_header(h) && !self.is_project_header(h))
                .map(|(_, at)| Evidence::new("missing-header", line_around(&text, *at))),
        );
        if let Some(c) = hit(FailureCategory::MissingThirdParty, third_party) {
            return c;
        }

        if let Some(flag) = WERROR_FLAG.find(&text) {
            let promoted = first_matches(&text, &PROMOTED_WARNING);
            if !promoted.is_empty() {
                let mut signals = vec![Evidence::new("werror-flag", line_around(&text, flag.start()))];
                signals.extend(promoted);
                return FailureClassification {
                    category: FailureCategory::TargetDependentWerror,
                    matched_signals: signals,
                };
            }
        }

        let mut arch = first_matches(&text, &ARCH_SPECIFIC);
        arch.extend(
            headers
                .iter()
                .filter(|(h, _)| is_platform_header(h))
                .map(|(_, at)| Evidence::new("platform-header", line_around(&text, *at))),
        );
        if let Some(c) = hit(FailureCategory::ArchPlatformSpecific, arch) {
            return c;
        }

        if let Some(c) = hit(FailureCategory::IncompatibleOptions, first_matches(&text, &INCOMPATIBLE)) {
            return c;
        }
        if let Some(c) = hit(FailureCategory::SuspectedCompilerBug, first_matches(&text, &COMPILER_BUG)) {
            return c;
        }
        FailureClassification {
            category: FailureCategory::Unknown,
            matched_signals: Vec::new(),
        }
    }
}

pub fn classify_failure(configure_log: &str, build_log: &str) -> FailureClassification {
    FailureClassifier::new().classify(configure_log, build_log)
}

/// Locates the native and Wasm tools and the Wasm host runtime.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Toolchain {
    pub root: Option<PathBuf>,
    pub host_runtime: String,
}

static VERSION_CACHE: LazyLock<Mutex<BTreeMap<PathBuf, Result<String, String>>>> =
    LazyLock::new(|| Mutex::new(BTreeMap::new()));

fn search_path(name: &str) -> Option<PathBuf> {
    if name.contains('/') {
        let p = PathBuf::from(name);
        return p.is_file().then_some(p);
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|candidate| is_executable(candidate))
}

fn is_executable(p: &Path) -> bool {
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        p.metadata()
            .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
            .unwrap_or(false)
    }
    #[cfg(not(unix))]
    {
        p.is_file()
    }
}

impl Toolchain {
    /// Uses `explicit` if given, else the environment.
    pub fn discover(explicit: Option<PathBuf>, host_runtime: Option<String>) -> Self {
        let root = explicit
            .or_else(|| std::env::var_os(TOOLCHAIN_ROOT_ENV).map(PathBuf::from))
            .or_else(|| std::env::var_os(EMSDK_ENV).map(PathBuf::from));
        Toolchain {
            root,
            host_runtime: host_runtime.unwrap_or_else(|| "node".to_string()),
        }
    }

    fn root_candidates(&self, name: &str) -> Vec<PathBuf> {
        match &self.root {
            Some(root) => vec![
                root.join(name),
                root.join("upstream/emscripten").join(name),
                root.join("emscripten").join(name),
                root.join("bin").join(name),
            ],
            None => Vec::new(),
        }
    }

    pub fn resolve(&self, program: &str) -> Result<PathBuf, BuildError> {
        self.root_candidates(program)
            .into_iter()
            .find(|c| is_executable(c))
            .or_else(|| search_path(program))
            .ok_or_else(|| BuildError::ToolchainMissing {
                tool: program.to_string(),
                detail: match &self.root {
                    Some(root) => format!("not under {} or on PATH", root.display()),
                    None => format!("not on PATH (set {TOOLCHAIN_ROOT_ENV} or --toolchain-root)"),
                },
            })
    }

    /// Runs `tool --version` once per process and returns the first line.
    pub fn probe(&self, program: &str) -> Result<String, BuildError> {
        let path = self.resolve(program)?;
        let mut cache = VERSION_CACHE.lock().unwrap();
        let entry = cache.entry(path.clone()).or_insert_with(|| {
            match Command::new(&path).arg("--version").output() {
                Ok(out) if out.status.success() => {
                    let text = String::from_utf8_lossy(&out.stdout);
                    let text = if text.trim().is_empty() {
                        String::from_utf8_lossy(&out.stderr).into_owned()
                    } else {
                        text.into_owned()
                    };
                    Ok(text.lines().next().unwrap_or("").trim().to_string())
                }
                Ok(out) => Err(format!("`{} --version` exited with {}", path.display(), out.status)),
                Err(e) => Err(e.to_string()),
            }
        });
        entry.clone().map_err(|detail| BuildError::ToolchainMissing {
            tool: program.to_string(),
            detail,
        })
    }

    /// Tools needed to build and test the given target.
    pub fn required_tools(&self, target: TargetKind) -> Vec<String> {
        match target {
            TargetKind::Native => vec!["cmake".into()],
            TargetKind::Wasm => vec!["cmake".into(), "emcc".into(), self.host_runtime.clone()],
        }
    }

    /// Checks every tool a target needs before anything runs.
    pub fn preflight(&self, target: TargetKind) -> Result<ToolVersions, BuildError> {
        let mut versions = ToolVersions::new();
        for tool in self.required_tools(target) {
            versions.insert(tool.clone(), self.probe(&tool)?);
        }
        if target == TargetKind::Wasm {
            self.resolve("emcmake")?;
            self.resolve("emmake")?;
        }
        Ok(versions)
    }
}

/// Appends a snippet to the build script and puts the original back on drop.
struct ScriptGuard {
    path: PathBuf,
    original: Vec<u8>,
}

impl ScriptGuard {
    fn apply(path: &Path, snippet: &str) -> Result<Self, BuildError> {
        let err = |source| BuildError::ScriptPatch {
            path: path.to_path_buf(),
            source,
        };
        let original = std::fs::read(path).map_err(err)?;
        let mut patched = original.clone();
        if !patched.ends_with(b"\n") {
            patched.push(b'\n');
        }
        patched.extend_from_slice(snippet.as_bytes());
        std::fs::write(path, patched).map_err(err)?;
        Ok(ScriptGuard {
            path: path.to_path_buf(),
            original,
        })
    }
}

impl Drop for ScriptGuard {
    fn drop(&mut self) {
        if let Err(e) = std::fs::write(&self.path, &self.original) {
            log::error!("could not restore {}: {e}", self.path.display());
        }
    }
}

fn ensure_writable(dir: &Path) -> Result<(), BuildError> {
    let err = |source| BuildError::WorkdirUnwritable {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(err)?;
    let probe = dir.join(".wasmdiff-write-probe");
    std::fs::write(&probe, b"").map_err(err)?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

/// Runs one step; returns (success, log text).
fn run_step(toolchain: &Toolchain, cmd: &CommandLine, cwd: &Path) -> Result<(bool, String), BuildError> {
    let program = toolchain.resolve(&cmd.program)?;
    let mut log = format!("$ {cmd}\n");
    match Command::new(&program).args(&cmd.args).current_dir(cwd).output() {
        Ok(out) => {
            log.push_str(&String::from_utf8_lossy(&out.stdout));
            log.push_str(&String::from_utf8_lossy(&out.stderr));
            if !out.status.success() {
                log.push_str(&format!("\n[exit: {}]\n", out.status));
            }
            Ok((out.status.success(), log))
        }
        Err(e) => {
            log.push_str(&format!("failed to spawn {}: {e}\n", program.display()));
            Ok((false, log))
        }
    }
}

/// Configures then builds in the plan's build directory. Logs land in
/// `<build_dir>/logs/`.
pub fn run_build(plan: &BuildPlan, toolchain: &Toolchain) -> Result<BuildResult, BuildError> {
    toolchain.preflight(plan.target)?;
    run_build_with(plan, toolchain, &FailureClassifier::new())
}

pub fn run_build_with(
    plan: &BuildPlan,
    toolchain: &Toolchain,
    classifier: &FailureClassifier,
) -> Result<BuildResult, BuildError> {
    ensure_writable(&plan.build_dir)?;
    let log_dir = plan.log_dir();
    ensure_writable(&log_dir)?;

    let started = Instant::now();
    let _guard = match &plan.injection {
        Injection::ScriptPatch { script, snippet } => Some(ScriptGuard::apply(script, snippet)?),
        Injection::CacheDefinitions => None,
    };
    let (configured, configure_log) = run_step(toolchain, &plan.configure, &plan.build_dir)?;
    let (built, build_log) = if configured {
        run_step(toolchain, &plan.build, &plan.build_dir)?
    } else {
        (false, String::new())
    };
    drop(_guard);
    let duration_ms = started.elapsed().as_millis() as u64;

    let write_log = |name: &str, text: &str| {
        std::fs::write(log_dir.join(name), text).map_err(|source| BuildError::WorkdirUnwritable {
            path: log_dir.clone(),
            source,
        })
    };
    write_log("configure.log", &configure_log)?;
    write_log("build.log", &build_log)?;

    let succeeded = configured && built;
    let failure = (!succeeded).then(|| classifier.classify(&configure_log, &build_log));
    Ok(BuildResult {
        target: plan.target,
        succeeded,
        configure_log,
        build_log,
        duration_ms,
        failure,
    })
}
