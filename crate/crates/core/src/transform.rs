//! Turns a construct report and the project's own flags into a build plan
//! per target.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProjectSpec, TargetKind};
use crate::scanner::{Construct, ConstructReport, PathLiteral};

pub const EXCEPTION_CATCHING: &str = "-sNO_DISABLE_EXCEPTION_CATCHING";
pub const EMULATE_FUNCTION_POINTER_CASTS: &str = "-sEMULATE_FUNCTION_POINTER_CASTS";
pub const PTHREAD: &str = "-pthread";
pub const PRINTF_LONG_DOUBLE: &str = "-sPRINTF_LONG_DOUBLE";

pub const STACK_SIZE_BYTES: u64 = 1_048_576;
pub const STACK_SIZE: &str = "-sSTACK_SIZE=1048576";
pub const ALLOW_MEMORY_GROWTH: &str = "-sALLOW_MEMORY_GROWTH";
pub const OPTIMIZE_SIZE: &str = "-Oz";

pub const NO_ERROR: &str = "-Wno-error";
pub const NO_STACK_PROTECTOR: &str = "-fno-stack-protector";

/// Construct → the setting that makes it work under the Wasm toolchain.
pub const FEATURE_RULES: &[(Construct, &str)] = &[
    (Construct::Exceptions, EXCEPTION_CATCHING),
    (Construct::FunctionPointerCasts, EMULATE_FUNCTION_POINTER_CASTS),
    (Construct::Threads, PTHREAD),
    (Construct::LongDouble, PRINTF_LONG_DOUBLE),
];

/// Settings that must also be present when compiling, not only when linking.
const COMPILE_TIME_FEATURES: &[&str] = &[EXCEPTION_CATCHING, PTHREAD];

/// Libraries with an existing toolchain port, keyed by a name pattern found
/// in configure or compile logs.
pub const PORTS: &[(&str, &str)] = &[
    (r"(?i)\bboost\b", "-sUSE_BOOST_HEADERS=1"),
    (r"(?i)\bzlib\b|\bzlib\.h\b", "-sUSE_ZLIB=1"),
    (r"(?i)\blibpng\b|\bpng\.h\b|\bPNG\b", "-sUSE_LIBPNG=1"),
    (r"(?i)\blibjpeg\b|\bjpeglib\.h\b|\bJPEG\b", "-sUSE_LIBJPEG=1"),
    (r"(?i)\bsdl2\b", "-sUSE_SDL=2"),
    (r"(?i)\bbzip2\b|\bbzlib\.h\b", "-sUSE_BZIP2=1"),
    (r"(?i)\bfreetype\b|\bft2build\.h\b", "-sUSE_FREETYPE=1"),
    (r"(?i)\bharfbuzz\b", "-sUSE_HARFBUZZ=1"),
    (r"(?i)\bicu\b|\bunicode/\w+\.h\b", "-sUSE_ICU=1"),
    (r"(?i)\bogg\b", "-sUSE_OGG=1"),
    (r"(?i)\bvorbis\b", "-sUSE_VORBIS=1"),
    (r"(?i)\bsqlite3?\b", "-sUSE_SQLITE3=1"),
    (r"(?i)\bgiflib\b|\bgif_lib\.h\b", "-sUSE_GIFLIB=1"),
];

static PORT_PATTERNS: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    PORTS
        .iter()
        .map(|(pat, flag)| (Regex::new(pat).unwrap(), *flag))
        .collect()
});

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("memory policy applies to wasm builds only, got {0}")]
    WrongTarget(TargetKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompilerSettings {
    pub target: TargetKind,
    pub feature_flags: BTreeSet<String>,
    pub memory_flags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub port_flags: BTreeSet<String>,
    pub sanitized_user_flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sanitized_link_flags: Vec<String>,
    pub preload_args: Vec<String>,
}

impl CompilerSettings {
    pub fn new(target: TargetKind) -> Self {
        CompilerSettings {
            target,
            feature_flags: BTreeSet::new(),
            memory_flags: BTreeSet::new(),
            port_flags: BTreeSet::new(),
            sanitized_user_flags: Vec::new(),
            sanitized_link_flags: Vec::new(),
            preload_args: Vec::new(),
        }
    }

    /// Flags for `CMAKE_C_FLAGS` / `CMAKE_CXX_FLAGS`. `-Oz` comes last so it
    /// overrides any optimization level the project sets.
    pub fn compile_flags(&self) -> Vec<String> {
        let mut out = self.sanitized_user_flags.clone();
        out.extend(
            self.feature_flags
                .iter()
                .filter(|f| COMPILE_TIME_FEATURES.contains(&f.as_str()))
                .cloned(),
        );
        out.extend(self.port_flags.iter().cloned());
        if self.memory_flags.contains(OPTIMIZE_SIZE) {
            out.push(OPTIMIZE_SIZE.to_string());
        }
        out
    }

    /// Flags for `CMAKE_EXE_LINKER_FLAGS`.
    pub fn link_flags(&self) -> Vec<String> {
        let mut out = self.sanitized_link_flags.clone();
        out.extend(self.feature_flags.iter().cloned());
        out.extend(self.port_flags.iter().cloned());
        out.extend(
            self.memory_flags
                .iter()
                .filter(|f| f.as_str() != OPTIMIZE_SIZE)
                .cloned(),
        );
        if self.memory_flags.contains(OPTIMIZE_SIZE) {
            out.push(OPTIMIZE_SIZE.to_string());
        }
        out.extend(self.preload_args.iter().cloned());
        out
    }
}

/// Exactly the settings implied by the report's construct flags.
pub fn infer_feature_flags(report: &ConstructReport) -> BTreeSet<String> {
    FEATURE_RULES
        .iter()
        .filter(|(construct, _)| report.uses(*construct))
        .map(|(_, flag)| flag.to_string())
        .collect()
}

fn is_werror(flag: &str) -> bool {
    flag == "-Werror" || flag.starts_with("-Werror=")
}

fn is_denied(flag: &str) -> bool {
    flag.starts_with("-march=") || flag.starts_with("-mtune=") || flag == "-Ofast"
}

fn is_stack_protector(flag: &str) -> bool {
    flag.starts_with("-fstack-protector")
}

/// Rewrites a user flag list for the Wasm toolchain; native lists pass through.
pub fn sanitize_user_flags<S: AsRef<str>>(flags: &[S], target: TargetKind) -> Vec<String> {
    if target == TargetKind::Native {
        return flags.iter().map(|f| f.as_ref().to_string()).collect();
    }
    let mut out = Vec::with_capacity(flags.len() + 1);
    let mut dropped_werror = false;
    let mut protector_replaced = false;
    for flag in flags.iter().map(AsRef::as_ref) {
        if is_werror(flag) {
            dropped_werror = true;
        } else if is_stack_protector(flag) {
            if !protector_replaced {
                out.push(NO_STACK_PROTECTOR.to_string());
                protector_replaced = true;
            }
        } else if !is_denied(flag) {
            out.push(flag.to_string());
        }
    }
    if dropped_werror {
        out.push(NO_ERROR.to_string());
    }
    out
}

/// Sets the fixed stack size, memory growth and `-Oz`. Idempotent.
pub fn apply_memory_policy(mut settings: CompilerSettings) -> Result<CompilerSettings, TransformError> {
    if settings.target != TargetKind::Wasm {
        return Err(TransformError::WrongTarget(settings.target));
    }
    settings.memory_flags = [STACK_SIZE, ALLOW_MEMORY_GROWTH, OPTIMIZE_SIZE]
        .into_iter()
        .map(String::from)
        .collect();
    Ok(settings)
}

/// A file copied from `src` on the host to `dst` in the virtual filesystem.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreloadMapping {
    pub src: PathBuf,
    pub dst: String,
}

impl PreloadMapping {
    /// `--preload-file SRC@DST`, with literal `@` doubled as the packager expects.
    pub fn to_arg(&self) -> String {
        format!(
            "--preload-file {}@{}",
            self.src.to_string_lossy().replace('@', "@@"),
            self.dst.replace('@', "@@")
        )
    }

    /// Inverse of [`PreloadMapping::to_arg`].
    pub fn parse_arg(arg: &str) -> Option<PreloadMapping> {
        let spec = arg.strip_prefix("--preload-file ")?;
        let bytes = spec.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'@' {
                if bytes.get(i + 1) == Some(&b'@') {
                    i += 2;
                    continue;
                }
                return Some(PreloadMapping {
                    src: PathBuf::from(spec[..i].replace("@@", "@")),
                    dst: spec[i + 1..].replace("@@", "@"),
                });
            }
            i += 1;
        }
        None
    }
}

impl fmt::Display for PreloadMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_arg())
    }
}

/// Result of preload resolution, including literals that matched nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PreloadResolution {
    pub mappings: Vec<PreloadMapping>,
    pub unresolved: Vec<PathLiteral>,
}

/// Probes each literal against the search roots in order; the first hit wins.
pub fn resolve_preloads(literals: &[PathLiteral], search_roots: &[PathBuf]) -> Vec<PreloadMapping> {
    resolve_preloads_detailed(literals, search_roots).mappings
}

pub fn resolve_preloads_detailed(
    literals: &[PathLiteral],
    search_roots: &[PathBuf],
) -> PreloadResolution {
    let mut out = PreloadResolution::default();
    let mut seen = BTreeSet::new();
    for lit in literals {
        let literal_path = Path::new(&lit.literal);
        let candidates: Vec<PathBuf> = if literal_path.is_absolute() {
            vec![literal_path.to_path_buf()]
        } else {
            search_roots.iter().map(|r| r.join(literal_path)).collect()
        };
        let hit = candidates
            .into_iter()
            .find(|c| c.exists())
            .and_then(|c| c.canonicalize().ok());
        match hit {
            Some(src) => {
                if seen.insert((src.clone(), lit.literal.clone())) {
                    out.mappings.push(PreloadMapping {
                        src,
                        dst: lit.literal.clone(),
                    });
                }
            }
            None => {
                log::debug!("no file for literal {:?} ({}:{})", lit.literal, lit.file, lit.line);
                out.unresolved.push(lit.clone());
            }
        }
    }
    out
}

/// Ports whose name appears in the given log excerpts.
pub fn port_flags_for(excerpts: &[&str]) -> BTreeSet<String> {
    PORT_PATTERNS
        .iter()
        .filter(|(re, _)| excerpts.iter().any(|e| re.is_match(e)))
        .map(|(_, flag)| flag.to_string())
        .collect()
}

/// A program invocation; `program` is resolved against the toolchain later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandLine {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandLine {
    pub fn new(program: &str, args: Vec<String>) -> Self {
        CommandLine {
            program: program.to_string(),
            args,
        }
    }
}

impl fmt::Display for CommandLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.program)?;
        for arg in &self.args {
            if arg.is_empty() || arg.chars().any(|c| c.is_whitespace() || c == '"' || c == '\'') {
                write!(f, " '{}'", arg.replace('\'', r"'\''"))?;
            } else {
                write!(f, " {arg}")?;
            }
        }
        Ok(())
    }
}

/// How settings reach the project's build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Injection {
    /// Only `-D` cache definitions on the configure line.
    CacheDefinitions,
    /// The script pins its own flags, so a snippet is appended to it for the
    /// configure and build steps and removed afterwards.
    ScriptPatch { script: PathBuf, snippet: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildPlan {
    pub project: String,
    pub target: TargetKind,
    pub source_root: PathBuf,
    pub build_dir: PathBuf,
    pub settings: CompilerSettings,
    pub configure: CommandLine,
    pub build: CommandLine,
    pub injection: Injection,
    pub manual_mode: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unresolved_literals: Vec<PathLiteral>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl BuildPlan {
    pub fn log_dir(&self) -> PathBuf {
        self.build_dir.join("logs")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlanOptions {
    /// Disable the transformer: raw flags, no memory policy, no preloads.
    pub manual_mode: bool,
    /// Forwarded to the build tool when greater than one.
    pub jobs: usize,
    /// Port settings discovered from an earlier failed configure.
    pub port_flags: BTreeSet<String>,
}

/// Flags a build script sets for itself, which cache definitions cannot
/// override.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptFlags {
    pub compile: Vec<String>,
    pub link: Vec<String>,
    /// `set(CMAKE_<LANG>_FLAGS ...)` without referencing the previous value.
    pub overwrites_cache_flags: bool,
}

static SCRIPT_COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)#.*$").unwrap());
static OPTION_COMMANDS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?is)\b(add_compile_options|target_compile_options|add_link_options|target_link_options)\s*\(([^)]*)\)").unwrap()
});
static SET_FLAGS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?is)\b(set|string\s*\(\s*APPEND)\s*\(?\s*(CMAKE_(?:C|CXX)_FLAGS|CMAKE_EXE_LINKER_FLAGS)\s+([^)]*)\)").unwrap()
});

pub fn scan_script_flags(script: &str) -> ScriptFlags {
    let text = SCRIPT_COMMENT.replace_all(script, "");
    let mut out = ScriptFlags::default();
    let split = |body: &str| -> Vec<String> {
        body.split_whitespace()
            .map(|w| w.trim_matches('"'))
            .filter(|w| w.starts_with('-'))
            .map(String::from)
            .collect()
    };
    for cap in OPTION_COMMANDS.captures_iter(&text) {
        let flags = split(&cap[2]);
        if cap[1].to_ascii_lowercase().contains("link") {
            out.link.extend(flags);
        } else {
            out.compile.extend(flags);
        }
    }
    for cap in SET_FLAGS.captures_iter(&text) {
        let var = &cap[2];
        let body = &cap[3];
        let flags = split(body);
        if var == "CMAKE_EXE_LINKER_FLAGS" {
            out.link.extend(flags);
        } else {
            out.compile.extend(flags);
        }
        let is_set = cap[1].eq_ignore_ascii_case("set");
        let self_ref = body.contains(&format!("${{{var}}}"));
        let cached = body.contains("CACHE");
        if is_set && (!self_ref && !cached || body.contains("FORCE")) {
            out.overwrites_cache_flags = true;
        }
    }
    out
}

const FLAG_VARIABLES: &[&str] = &["CMAKE_C_FLAGS", "CMAKE_CXX_FLAGS"];
const LINK_VARIABLE: &str = "CMAKE_EXE_LINKER_FLAGS";

/// Splits `-DVAR=value` cache definitions for the flag variables out of
/// `args`. Returns (remaining args, compile flags, link flags).
fn split_flag_definitions(args: &[String]) -> (Vec<String>, Vec<String>, Vec<String>) {
    let mut rest = Vec::new();
    let mut compile = Vec::new();
    let mut link = Vec::new();
    for arg in args {
        let def = arg.strip_prefix("-D").and_then(|d| d.split_once('='));
        match def {
            Some((var, value)) => {
                let var = var.split(':').next().unwrap_or(var);
                let words = value.split_whitespace().map(String::from);
                if FLAG_VARIABLES.contains(&var) {
                    for w in words {
                        if !compile.contains(&w) {
                            compile.push(w);
                        }
                    }
                } else if var == LINK_VARIABLE {
                    link.extend(words);
                } else {
                    rest.push(arg.clone());
                }
            }
            None => rest.push(arg.clone()),
        }
    }
    (rest, compile, link)
}

fn definition(option: &str) -> String {
    if option.starts_with("-D") {
        option.to_string()
    } else {
        format!("-D{option}")
    }
}

/// Search roots for file literals: the declared test directory, then the
/// directories of the files containing literals, then the source root.
pub fn default_search_roots(project: &ProjectSpec, literals: &[PathLiteral]) -> Vec<PathBuf> {
    let mut roots: Vec<PathBuf> = Vec::new();
    let mut push = |p: PathBuf| {
        if !roots.contains(&p) {
            roots.push(p);
        }
    };
    if let Some(dir) = &project.test_workdir {
        push(dir.clone());
    }
    for lit in literals {
        if let Some(parent) = project.source_root.join(&lit.file).parent() {
            push(parent.to_path_buf());
        }
    }
    push(project.source_root.clone());
    roots
}

fn patch_snippet(settings: &CompilerSettings) -> String {
    let extra_compile: Vec<String> = settings
        .compile_flags()
        .into_iter()
        .filter(|f| !settings.sanitized_user_flags.contains(f) || f == NO_ERROR)
        .collect();
    let mut extra_compile = extra_compile;
    if !extra_compile.iter().any(|f| f == NO_ERROR) {
        extra_compile.insert(0, NO_ERROR.to_string());
    }
    let link = settings.link_flags().join(" ");
    let compile = extra_compile.join(" ");
    format!(
        r#"
# >>> wasmdiff injected settings (removed after the build)
set(_wasmdiff_deny "^(-Werror(=.*)?|-march=.*|-mtune=.*|-Ofast)$")
foreach(_wasmdiff_var CMAKE_C_FLAGS CMAKE_CXX_FLAGS)
  separate_arguments(_wasmdiff_list UNIX_COMMAND "${{${{_wasmdiff_var}}}}")
  list(FILTER _wasmdiff_list EXCLUDE REGEX "${{_wasmdiff_deny}}")
  list(TRANSFORM _wasmdiff_list REPLACE "^-fstack-protector.*$" "{NO_STACK_PROTECTOR}")
  list(REMOVE_DUPLICATES _wasmdiff_list)
  list(JOIN _wasmdiff_list " " _wasmdiff_joined)
  set(${{_wasmdiff_var}} "${{_wasmdiff_joined}} {compile}")
endforeach()
set(CMAKE_EXE_LINKER_FLAGS "${{CMAKE_EXE_LINKER_FLAGS}} {link}")
get_property(_wasmdiff_targets DIRECTORY PROPERTY BUILDSYSTEM_TARGETS)
foreach(_wasmdiff_t IN LISTS _wasmdiff_targets)
  get_target_property(_wasmdiff_type ${{_wasmdiff_t}} TYPE)
  if(NOT _wasmdiff_type STREQUAL "INTERFACE_LIBRARY")
    foreach(_wasmdiff_prop COMPILE_OPTIONS LINK_OPTIONS)
      get_target_property(_wasmdiff_opts ${{_wasmdiff_t}} ${{_wasmdiff_prop}})
      if(_wasmdiff_opts)
        list(FILTER _wasmdiff_opts EXCLUDE REGEX "${{_wasmdiff_deny}}")
        list(TRANSFORM _wasmdiff_opts REPLACE "^-fstack-protector.*$" "{NO_STACK_PROTECTOR}")
        set_target_properties(${{_wasmdiff_t}} PROPERTIES ${{_wasmdiff_prop}} "${{_wasmdiff_opts}}")
      endif()
    endforeach()
  endif()
endforeach()
# <<< wasmdiff
"#
    )
}

/// Builds the configure/build commands and compiler settings for one target.
pub fn build_plan(
    project: &ProjectSpec,
    report: &ConstructReport,
    target: TargetKind,
    options: &PlanOptions,
) -> Result<BuildPlan, TransformError> {
    let build_dir = project.workdir.join(target.as_str());
    let source = project.source_root.to_string_lossy().into_owned();
    let mut configure_args = vec![source];
    configure_args.extend(project.test_enable_options.iter().map(|o| definition(o)));

    let mut build_args = vec!["--build".to_string(), ".".to_string()];
    if options.jobs > 1 {
        build_args.push("--parallel".into());
        build_args.push(options.jobs.to_string());
    }

    let mut settings = CompilerSettings::new(target);
    let mut notes = Vec::new();
    let mut injection = Injection::CacheDefinitions;
    let mut unresolved = Vec::new();

    let (configure, build) = match target {
        TargetKind::Native => {
            configure_args.extend(project.extra_configure_args.iter().cloned());
            (
                CommandLine::new("cmake", configure_args),
                CommandLine::new("cmake", build_args),
            )
        }
        TargetKind::Wasm if options.manual_mode => {
            configure_args.extend(project.extra_configure_args.iter().cloned());
            notes.push("manual mode: transformer disabled, toolchain defaults in effect".into());
            let mut c = vec!["cmake".to_string()];
            c.extend(configure_args);
            let mut b = vec!["cmake".to_string()];
            b.extend(build_args);
            (CommandLine::new("emcmake", c), CommandLine::new("emmake", b))
        }
        TargetKind::Wasm => {
            let (rest, arg_compile, arg_link) = split_flag_definitions(&project.extra_configure_args);
            let script_text = std::fs::read_to_string(&project.build_script).unwrap_or_default();
            let script = scan_script_flags(&script_text);

            settings.feature_flags = infer_feature_flags(report);
            settings.port_flags = options.port_flags.clone();
            settings.sanitized_user_flags = sanitize_user_flags(&arg_compile, target);
            settings.sanitized_link_flags = sanitize_user_flags(&arg_link, target);
            settings = apply_memory_policy(settings)?;

            let roots = default_search_roots(project, &report.path_literals);
            let resolution = resolve_preloads_detailed(&report.path_literals, &roots);
            settings.preload_args = resolution.mappings.iter().map(PreloadMapping::to_arg).collect();
            unresolved = resolution.unresolved;
            notes.push(format!(
                "{OPTIMIZE_SIZE} applied to the wasm build only; optimization level differs from native"
            ));

            let script_needs_rewrite = script
                .compile
                .iter()
                .chain(&script.link)
                .any(|f| is_werror(f) || is_denied(f) || is_stack_protector(f));
            if script.overwrites_cache_flags || script_needs_rewrite {
                injection = Injection::ScriptPatch {
                    script: project.build_script.clone(),
                    snippet: patch_snippet(&settings),
                };
                notes.push("build script pins its own flags; appending a temporary patch".into());
            }

            configure_args.extend(rest);
            let compile = settings.compile_flags().join(" ");
            if !compile.is_empty() {
                for var in FLAG_VARIABLES {
                    configure_args.push(format!("-D{var}={compile}"));
                }
            }
            let link = settings.link_flags().join(" ");
            if !link.is_empty() {
                configure_args.push(format!("-D{LINK_VARIABLE}={link}"));
            }
            let mut c = vec!["cmake".to_string()];
            c.extend(configure_args);
            let mut b = vec!["cmake".to_string()];
            b.extend(build_args);
            (CommandLine::new("emcmake", c), CommandLine::new("emmake", b))
        }
    };

    Ok(BuildPlan {
        project: project.name.clone(),
        target,
        source_root: project.source_root.clone(),
        build_dir,
        settings,
        configure,
        build,
        injection,
        manual_mode: options.manual_mode && target == TargetKind::Wasm,
        unresolved_literals: unresolved,
        notes,
    })
}
