//! The discrepancy metric and root-cause tagging.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    DiscrepancyRecord, Direction, Evidence, RootCauseTag, TestOutcome, TestPairing,
};
use crate::transform::PreloadMapping;

pub const PRELOAD_FALSE_POSITIVE: &str = "possible preload false positive";

/// Σ over complete pairings of |o_native − o_wasm|, with one record per
/// nonzero summand. Records start out `Unclassified`; see [`RootCauseTagger`].
pub fn compute_discrepancies(pairings: &[TestPairing]) -> (usize, Vec<DiscrepancyRecord>) {
    let records: Vec<DiscrepancyRecord> = pairings
        .iter()
        .filter_map(|p| {
            let (n, w) = (p.native.as_ref()?, p.wasm.as_ref()?);
            let direction = match (n.bit(), w.bit()) {
                (1, 0) => Direction::PassNativeFailWasm,
                (0, 1) => Direction::FailNativePassWasm,
                _ => return None,
            };
            Some(DiscrepancyRecord {
                pairing: p.clone(),
                direction,
                root_cause: RootCauseTag::Unclassified,
                evidence: Vec::new(),
                annotations: Vec::new(),
            })
        })
        .collect();
    (records.len(), records)
}

/// Same pairings with the native and wasm sides exchanged.
pub fn swap_targets(pairings: &[TestPairing]) -> Vec<TestPairing> {
    pairings
        .iter()
        .map(|p| TestPairing {
            test_name: p.test_name.clone(),
            native: p.wasm.clone(),
            wasm: p.native.clone(),
        })
        .collect()
}

/// glibc errno values and their counterparts in the wasm C library.
pub const ERRNO_PAIRS: &[(&str, u32, u32)] = &[
    ("EPERM", 1, 63),
    ("ENOENT", 2, 44),
    ("EBADF", 9, 8),
    ("EAGAIN", 11, 6),
    ("ENOMEM", 12, 48),
    ("EACCES", 13, 2),
    ("EEXIST", 17, 20),
    ("ENOTDIR", 20, 54),
    ("EISDIR", 21, 31),
    ("EINVAL", 22, 28),
    ("ENOSYS", 38, 52),
];

fn errno_pair(a: u32, b: u32) -> Option<&'static str> {
    ERRNO_PAIRS
        .iter()
        .find(|(_, g, w)| (*g, *w) == (a, b) || (*g, *w) == (b, a))
        .map(|(name, _, _)| *name)
}

static UNSUPPORTED: LazyLock<Vec<(&str, Regex)>> = LazyLock::new(|| {
    [
        ("enosys", r"\bENOSYS\b|Function not implemented"),
        ("missing-function", r"missing function: \w+"),
        ("unsupported-syscall", r"(?i)\b(syscall|system call)\b[^\n]*\bnot (supported|implemented)\b"),
        ("fork-unavailable", r"(?i)\b(fork|vfork|exec[lv]p?e?|getChild)\b[^\n]*(returned -1|returns -1|= ?-1\b|\bfail(ed|ure)?\b|not supported|unavailable)"),
        ("socket-failure", r"(?i)\b(socket|bind|listen|accept|connect|getaddrinfo|setsockopt)\b[^\n]*(\bfail(ed|ure)?\b|\berror\b|not supported|unavailable|returned -1)"),
    ]
    .into_iter()
    .map(|(n, p)| (n, Regex::new(p).unwrap()))
    .collect()
});

static TRAPS: LazyLock<Vec<(&str, Regex)>> = LazyLock::new(|| {
    [
        ("signature-mismatch", r"null function or function signature mismatch|function signature mismatch|indirect call signature mismatch"),
        ("unreachable", r"RuntimeError: unreachable|\bunreachable( executed| code should not be executed)?\b"),
    ]
    .into_iter()
    .map(|(n, p)| (n, Regex::new(p).unwrap()))
    .collect()
});

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").unwrap());
static ERRNO_TEXT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\berrno\b|\bE[A-Z]{3,}\b|No such file or directory|Permission denied|File exists|Invalid argument|Not a directory|Is a directory|Bad file descriptor")
        .unwrap()
});
static FILE_NOT_FOUND: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)No such file or directory|\bENOENT\b|cannot open|could not open|failed to open|file not found").unwrap()
});

fn lines(o: &TestOutcome) -> Vec<&str> {
    o.stdout_digest
        .lines()
        .chain(o.stderr_digest.lines())
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .collect()
}

fn text(o: &TestOutcome) -> String {
    format!("{}\n{}", o.stdout_digest, o.stderr_digest)
}

/// Lines with the same text apart from numbers, where the differing numbers
/// are errno values of the two C libraries. Returns the errno name.
fn errno_equivalent(a: &str, b: &str) -> Option<&'static str> {
    if NUMBER.replace_all(a, "#") != NUMBER.replace_all(b, "#") {
        return None;
    }
    let nums = |s: &str| -> Vec<u32> {
        NUMBER.find_iter(s).map(|m| m.as_str().parse().unwrap_or(u32::MAX)).collect()
    };
    let diffs: Vec<(u32, u32)> = nums(a)
        .into_iter()
        .zip(nums(b))
        .filter(|(x, y)| x != y)
        .collect();
    let named = diffs.iter().find_map(|&(x, y)| errno_pair(x, y))?;
    let all_errno = diffs.iter().all(|&(x, y)| errno_pair(x, y).is_some());
    (all_errno || ERRNO_TEXT.is_match(a)).then_some(named)
}

/// Sorts the comma-separated elements inside every bracket group.
fn canonical_elements(line: &str) -> String {
    static GROUP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\[{]([^\[\]{}]*)[\]}]").unwrap());
    let mut cur = line.to_string();
    // Innermost groups first; each pass flattens one nesting level.
    for _ in 0..8 {
        let next = GROUP
            .replace_all(&cur, |c: &regex::Captures| {
                let mut parts: Vec<&str> = c[1].split(',').map(str::trim).collect();
                parts.sort_unstable();
                format!("<{}>", parts.join(","))
            })
            .into_owned();
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

fn stdlib_signal(native: &TestOutcome, wasm: &TestOutcome) -> Option<Evidence> {
    let (n, w) = (lines(native), lines(wasm));
    if n == w {
        return None;
    }
    if n.len() == w.len() {
        let mut errno = None;
        let all = n.iter().zip(&w).all(|(a, b)| {
            a == b || {
                let hit = errno_equivalent(a, b);
                if errno.is_none() {
                    errno = hit.map(|name| (name, *a, *b));
                }
                hit.is_some()
            }
        });
        if let (true, Some((name, a, b))) = (all, errno) {
            return Some(Evidence::new(
                format!("errno-mismatch:{name}"),
                format!("native: {a} | wasm: {b}"),
            ));
        }
    }
    let mut sn = n.clone();
    let mut sw = w.clone();
    sn.sort_unstable();
    sw.sort_unstable();
    if sn == sw {
        let first = n.iter().zip(&w).find(|(a, b)| a != b).map(|(a, b)| (*a, *b));
        let (a, b) = first.unwrap_or_default();
        return Some(Evidence::new("line-order", format!("native: {a} | wasm: {b}")));
    }
    if n.len() == w.len() {
        let pairs: Vec<(&&str, &&str)> = n.iter().zip(&w).filter(|(a, b)| a != b).collect();
        if pairs.iter().all(|(a, b)| canonical_elements(a) == canonical_elements(b)) {
            let (a, b) = pairs[0];
            return Some(Evidence::new("element-order", format!("native: {a} | wasm: {b}")));
        }
    }
    None
}

#[derive(Debug, Error)]
pub enum FingerprintError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed fingerprint table: {0}")]
    Parse(String),
    #[error("fingerprint `{id}`: {reason}")]
    Invalid { id: String, reason: String },
}

/// A known toolchain bug recognized by what each side printed. Both patterns
/// are optional; an absent pattern places no constraint on that side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugFingerprint {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub native_pattern: Option<String>,
    #[serde(default)]
    pub wasm_pattern: Option<String>,
}

#[derive(Debug, Clone)]
struct CompiledFingerprint {
    spec: BugFingerprint,
    native: Option<Regex>,
    wasm: Option<Regex>,
}

impl CompiledFingerprint {
    fn new(spec: BugFingerprint) -> Result<Self, FingerprintError> {
        let compile = |p: &Option<String>| {
            p.as_deref()
                .map(Regex::new)
                .transpose()
                .map_err(|e| FingerprintError::Invalid {
                    id: spec.id.clone(),
                    reason: e.to_string(),
                })
        };
        if spec.native_pattern.is_none() && spec.wasm_pattern.is_none() {
            return Err(FingerprintError::Invalid {
                id: spec.id.clone(),
                reason: "needs native_pattern or wasm_pattern".into(),
            });
        }
        Ok(CompiledFingerprint {
            native: compile(&spec.native_pattern)?,
            wasm: compile(&spec.wasm_pattern)?,
            spec,
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FingerprintFile {
    #[serde(default)]
    fingerprint: Vec<BugFingerprint>,
}

/// Known-bug signatures. The built-in entry covers preloaded empty
/// directories that never reach the virtual filesystem.
#[derive(Debug, Clone)]
pub struct FingerprintTable {
    entries: Vec<CompiledFingerprint>,
}

pub const EMPTY_DIR_PRELOAD: &str = "empty-directory-preload";

impl Default for FingerprintTable {
    fn default() -> Self {
        FingerprintTable::builtin()
    }
}

impl FingerprintTable {
    pub fn builtin() -> Self {
        let spec = BugFingerprint {
            id: EMPTY_DIR_PRELOAD.into(),
            description: "empty directories are dropped when a directory is preloaded".into(),
            native_pattern: None,
            wasm_pattern: Some(
                r"(?i)\bempty\b[^\n]*\b(dir|directory|subdirectory)\b[^\n]*\b(missing|not found|absent|skipped)\b"
                    .into(),
            ),
        };
        FingerprintTable {
            entries: vec![CompiledFingerprint::new(spec).expect("builtin fingerprint")],
        }
    }

    pub fn empty() -> Self {
        FingerprintTable { entries: Vec::new() }
    }

    /// Parses `[[fingerprint]]` entries from TOML.
    pub fn parse(text: &str) -> Result<Vec<BugFingerprint>, FingerprintError> {
        let file: FingerprintFile =
            toml::from_str(text).map_err(|e| FingerprintError::Parse(e.message().to_string()))?;
        Ok(file.fingerprint)
    }

    /// Built-in entries followed by the ones in `path`.
    pub fn load(path: &Path) -> Result<Self, FingerprintError> {
        let text = std::fs::read_to_string(path).map_err(|source| FingerprintError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut table = FingerprintTable::builtin();
        table.extend(FingerprintTable::parse(&text)?)?;
        Ok(table)
    }

    pub fn extend(&mut self, more: Vec<BugFingerprint>) -> Result<(), FingerprintError> {
        for spec in more {
            self.entries.push(CompiledFingerprint::new(spec)?);
        }
        Ok(())
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.spec.id.as_str()).collect()
    }

    fn matching(&self, native: &str, wasm: &str) -> Option<Evidence> {
        self.entries.iter().find_map(|e| {
            let n = match &e.native {
                Some(re) => Some(re.find(native)?.as_str()),
                None => None,
            };
            let w = match &e.wasm {
                Some(re) => Some(re.find(wasm)?.as_str()),
                None => None,
            };
            Some(Evidence::new(format!("fingerprint:{}", e.spec.id), w.or(n).unwrap_or_default()))
        })
    }
}

/// Facts about the build that sharpen tagging.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaggingContext {
    /// Names of empty directories inside preloaded trees.
    pub empty_preload_dirs: BTreeSet<String>,
    /// Path literals that resolved to no file.
    pub unresolved_literals: BTreeSet<String>,
}

impl TaggingContext {
    pub fn from_preloads(mappings: &[PreloadMapping], unresolved: impl IntoIterator<Item = String>) -> Self {
        let mut empty = BTreeSet::new();
        for m in mappings.iter().filter(|m| m.src.is_dir()) {
            for entry in walkdir::WalkDir::new(&m.src).into_iter().filter_map(Result::ok) {
                let p = entry.path();
                if entry.file_type().is_dir()
                    && p.read_dir().map(|mut d| d.next().is_none()).unwrap_or(false)
                {
                    empty.insert(entry.file_name().to_string_lossy().into_owned());
                }
            }
        }
        TaggingContext {
            empty_preload_dirs: empty,
            unresolved_literals: unresolved.into_iter().collect(),
        }
    }
}

/// First-match-wins signal matching over the two sides' output.
#[derive(Debug, Clone, Default)]
pub struct RootCauseTagger {
    pub fingerprints: FingerprintTable,
    pub context: TaggingContext,
}

impl RootCauseTagger {
    pub fn new(fingerprints: FingerprintTable, context: TaggingContext) -> Self {
        RootCauseTagger { fingerprints, context }
    }

    pub fn tag(&self, record: &DiscrepancyRecord) -> (RootCauseTag, Vec<Evidence>) {
        let (Some(native), Some(wasm)) = (&record.pairing.native, &record.pairing.wasm) else {
            return (RootCauseTag::Unclassified, Vec::new());
        };
        let wasm_text = text(wasm);
        let native_text = text(native);
        let hit = |table: &[(&str, Regex)]| {
            table
                .iter()
                .find_map(|(name, re)| re.find(&wasm_text).map(|m| Evidence::new(*name, line_of(&wasm_text, m.start()))))
        };

        if let Some(ev) = hit(&UNSUPPORTED) {
            return (RootCauseTag::UnsupportedSyscallOrApi, vec![ev]);
        }
        if let Some(ev) = hit(&TRAPS) {
            return (RootCauseTag::WasmLanguageFeature, vec![ev]);
        }
        if let Some(ev) = stdlib_signal(native, wasm) {
            return (RootCauseTag::DifferentStdlib, vec![ev]);
        }
        if let Some(ev) = self.empty_dir_signal(&native_text, &wasm_text) {
            return (RootCauseTag::CompilerBug, vec![ev]);
        }
        if let Some(ev) = self.fingerprints.matching(&native_text, &wasm_text) {
            return (RootCauseTag::CompilerBug, vec![ev]);
        }
        (RootCauseTag::Unclassified, Vec::new())
    }

    /// Native output names an empty preloaded directory that the wasm
    /// output never mentions.
    fn empty_dir_signal(&self, native: &str, wasm: &str) -> Option<Evidence> {
        if self.fingerprints.ids().iter().all(|id| *id != EMPTY_DIR_PRELOAD) {
            return None;
        }
        self.context.empty_preload_dirs.iter().find_map(|dir| {
            let re = Regex::new(&format!(r"(^|[^\w.-]){}($|[^\w.-])", regex::escape(dir))).ok()?;
            let m = re.find(native)?;
            (!re.is_match(wasm)).then(|| {
                Evidence::new(format!("fingerprint:{EMPTY_DIR_PRELOAD}"), line_of(native, m.start()))
            })
        })
    }

    /// Notes that do not change the tag.
    pub fn annotations(&self, record: &DiscrepancyRecord) -> Vec<String> {
        let Some(wasm) = &record.pairing.wasm else {
            return Vec::new();
        };
        let wasm_text = text(wasm);
        let mentions_unresolved = self
            .context
            .unresolved_literals
            .iter()
            .any(|lit| wasm_text.contains(lit.as_str()));
        if record.direction == Direction::PassNativeFailWasm
            && FILE_NOT_FOUND.is_match(&wasm_text)
            && mentions_unresolved
        {
            vec![PRELOAD_FALSE_POSITIVE.to_string()]
        } else {
            Vec::new()
        }
    }

    /// Tags every record in place.
    pub fn apply(&self, records: &mut [DiscrepancyRecord]) {
        for r in records {
            let (tag, evidence) = self.tag(r);
            r.root_cause = tag;
            r.evidence = evidence;
            r.annotations = self.annotations(r);
        }
    }
}

fn line_of(text: &str, offset: usize) -> &str {
    let start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    let end = text[offset..].find('\n').map_or(text.len(), |i| offset + i);
    &text[start..end]
}

/// Tag with the built-in fingerprint table and no build context.
pub fn tag_root_cause(record: &DiscrepancyRecord) -> RootCauseTag {
    RootCauseTagger::default().tag(record).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TargetKind, Termination};

    fn outcome(target: TargetKind, code: i32, out: &str, err: &str) -> TestOutcome {
        TestOutcome::new("t", target, Termination::Exited(code), out.as_bytes(), err.as_bytes(), 1)
    }

    fn pairing(n: i32, w: i32) -> TestPairing {
        TestPairing {
            test_name: format!("t{n}{w}"),
            native: Some(outcome(TargetKind::Native, n, "", "")),
            wasm: Some(outcome(TargetKind::Wasm, w, "", "")),
        }
    }

    fn record(native: TestOutcome, wasm: TestOutcome) -> DiscrepancyRecord {
        let p = TestPairing { test_name: "t".into(), native: Some(native), wasm: Some(wasm) };
        compute_discrepancies(&[p]).1.remove(0)
    }

    #[test]
    fn metric_examples() {
        let (count, records) = compute_discrepancies(&[pairing(0, 0), pairing(0, 1), pairing(1, 1)]);
        assert_eq!(count, 1);
        assert_eq!(records[0].direction, Direction::PassNativeFailWasm);

        let (count, records) = compute_discrepancies(&[pairing(0, 0), pairing(1, 1)]);
        assert_eq!(count, 0);
        assert!(records.is_empty());
    }

    #[test]
    fn incomplete_pairings_do_not_count() {
        let mut p = pairing(0, 1);
        p.wasm = None;
        assert_eq!(compute_discrepancies(&[p]).0, 0);
    }

    #[test]
    fn swapping_inverts_direction() {
        let ps = [pairing(0, 1), pairing(1, 0), pairing(0, 0)];
        let (a, ra) = compute_discrepancies(&ps);
        let (b, rb) = compute_discrepancies(&swap_targets(&ps));
        assert_eq!(a, b);
        for (x, y) in ra.iter().zip(&rb) {
            assert_eq!(x.direction.inverted(), y.direction);
        }
    }

    #[test]
    fn errno_divergence_is_stdlib() {
        let r = record(
            outcome(TargetKind::Native, 0, "This is plog: No such file or directory [2]\n", ""),
            outcome(TargetKind::Wasm, 1, "This is plog: No such file or directory [44]\n", ""),
        );
        assert_eq!(tag_root_cause(&r), RootCauseTag::DifferentStdlib);
        let (_, ev) = RootCauseTagger::default().tag(&r);
        assert_eq!(ev[0].pattern, "errno-mismatch:ENOENT");
    }

    #[test]
    fn unrelated_number_change_is_not_errno() {
        assert!(errno_equivalent("count 3", "count 4").is_none());
        assert_eq!(errno_equivalent("open failed: errno=2", "open failed: errno=44"), Some("ENOENT"));
        assert_eq!(errno_equivalent("rc 13", "rc 2"), Some("EACCES"));
    }

    #[test]
    fn trap_is_language_feature() {
        let r = record(
            outcome(TargetKind::Native, 0, "Hello World\n", ""),
            outcome(TargetKind::Wasm, 1, "", "RuntimeError: unreachable\n    at helloWorld (wasm://wasm/1)\n"),
        );
        assert_eq!(tag_root_cause(&r), RootCauseTag::WasmLanguageFeature);
        let r = record(
            outcome(TargetKind::Native, 0, "", ""),
            outcome(TargetKind::Wasm, 1, "", "RuntimeError: null function or function signature mismatch"),
        );
        assert_eq!(tag_root_cause(&r), RootCauseTag::WasmLanguageFeature);
    }

    #[test]
    fn fork_failure_is_unsupported() {
        let r = record(
            outcome(TargetKind::Native, 0, "child started\n", ""),
            outcome(TargetKind::Wasm, 1, "", "getChild returned -1\n"),
        );
        assert_eq!(tag_root_cause(&r), RootCauseTag::UnsupportedSyscallOrApi);
        let r = record(
            outcome(TargetKind::Native, 0, "", ""),
            outcome(TargetKind::Wasm, 1, "", "fork: Function not implemented"),
        );
        assert_eq!(tag_root_cause(&r), RootCauseTag::UnsupportedSyscallOrApi);
    }

    #[test]
    fn syscall_signal_outranks_trap() {
        let r = record(
            outcome(TargetKind::Native, 0, "", ""),
            outcome(TargetKind::Wasm, 1, "", "socket() failed\nRuntimeError: unreachable"),
        );
        assert_eq!(tag_root_cause(&r), RootCauseTag::UnsupportedSyscallOrApi);
    }

    #[test]
    fn ordering_only_is_stdlib() {
        let r = record(
            outcome(TargetKind::Native, 0, "a\nb\nc\n", ""),
            outcome(TargetKind::Wasm, 1, "c\na\nb\n", ""),
        );
        assert_eq!(tag_root_cause(&r), RootCauseTag::DifferentStdlib);
        let r = record(
            outcome(TargetKind::Native, 0, "map={(0,3),(1,2)}\n", ""),
            outcome(TargetKind::Wasm, 1, "map={(1,2),(0,3)}\n", ""),
        );
        assert_eq!(tag_root_cause(&r), RootCauseTag::DifferentStdlib);
    }

    #[test]
    fn fallback_is_unclassified() {
        let r = record(
            outcome(TargetKind::Native, 0, "ok\n", ""),
            outcome(TargetKind::Wasm, 1, "assertion failed: x == y\n", ""),
        );
        assert_eq!(tag_root_cause(&r), RootCauseTag::Unclassified);
    }

    #[test]
    fn empty_preloaded_dir_is_compiler_bug() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("dir");
        std::fs::create_dir_all(root.join("emp")).unwrap();
        std::fs::create_dir_all(root.join("non-emp")).unwrap();
        std::fs::write(root.join("non-emp/program.c"), "int main(){}").unwrap();
        std::fs::write(root.join("data.txt"), "x").unwrap();
        let ctx = TaggingContext::from_preloads(
            &[PreloadMapping { src: root.clone(), dst: "dir".into() }],
            Vec::new(),
        );
        assert_eq!(ctx.empty_preload_dirs, BTreeSet::from(["emp".to_string()]));

        let tagger = RootCauseTagger::new(FingerprintTable::builtin(), ctx);
        let r = record(
            outcome(TargetKind::Native, 0, "data.txt\nemp\nnon-emp\nfound emp\n", ""),
            outcome(TargetKind::Wasm, 1, "data.txt\nnon-emp\n", ""),
        );
        assert_eq!(tagger.tag(&r).0, RootCauseTag::CompilerBug);
        // Without the table entry the same record stays unclassified.
        let bare = RootCauseTagger::new(FingerprintTable::empty(), tagger.context.clone());
        assert_eq!(bare.tag(&r).0, RootCauseTag::Unclassified);
    }

    #[test]
    fn user_fingerprints() {
        let parsed = FingerprintTable::parse(
            r#"
[[fingerprint]]
id = "mmap-zero"
description = "mmap returns zeroed pages"
wasm_pattern = "mmap: unexpected zero page"
"#,
        )
        .unwrap();
        let mut table = FingerprintTable::builtin();
        table.extend(parsed).unwrap();
        assert_eq!(table.ids(), vec![EMPTY_DIR_PRELOAD, "mmap-zero"]);
        let tagger = RootCauseTagger::new(table, TaggingContext::default());
        let r = record(
            outcome(TargetKind::Native, 0, "", ""),
            outcome(TargetKind::Wasm, 1, "mmap: unexpected zero page at 0x10\n", ""),
        );
        assert_eq!(tagger.tag(&r).0, RootCauseTag::CompilerBug);

        assert!(FingerprintTable::parse("[[fingerprint]]\nid = 3\n").is_err());
        let mut t = FingerprintTable::empty();
        assert!(t.extend(vec![BugFingerprint { id: "x".into(), description: String::new(), native_pattern: None, wasm_pattern: None }]).is_err());
        assert!(t.extend(vec![BugFingerprint { id: "y".into(), description: String::new(), native_pattern: Some("(".into()), wasm_pattern: None }]).is_err());
    }

    #[test]
    fn preload_false_positive_annotation() {
        let ctx = TaggingContext {
            empty_preload_dirs: BTreeSet::new(),
            unresolved_literals: BTreeSet::from(["data/missing.xml".to_string()]),
        };
        let tagger = RootCauseTagger::new(FingerprintTable::builtin(), ctx);
        let mut rs = vec![record(
            outcome(TargetKind::Native, 0, "", ""),
            outcome(TargetKind::Wasm, 1, "", "cannot open data/missing.xml: No such file or directory\n"),
        )];
        tagger.apply(&mut rs);
        assert_eq!(rs[0].annotations, vec![PRELOAD_FALSE_POSITIVE]);
    }
}
