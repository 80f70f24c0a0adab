//! Source-level construct detection over a project tree.

pub mod detect;
pub mod lexer;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

pub use detect::TypedefTable;
use lexer::{Lexed, TokenKind};

pub const DEFAULT_EXTENSIONS: &[&str] = &["c", "cc", "cpp", "cxx", "h", "hh", "hpp", "hxx", "inl"];

const MAX_PATH_LITERAL: usize = 4096;

const FILE_EXTENSIONS: &[&str] = &[
    "xml", "json", "txt", "csv", "tsv", "dat", "bin", "yaml", "yml", "ini", "cfg", "conf", "log",
    "png", "jpg", "jpeg", "gif", "bmp", "tga", "tif", "tiff", "ppm", "pgm", "pbm", "wav", "mp3",
    "ogg", "flac", "gz", "zip", "tar", "bz2", "xz", "zst", "md", "html", "htm", "css", "svg", "pdf",
    "ttf", "otf", "db", "sqlite", "toml", "obj", "stl", "ply", "raw", "img", "in", "out", "ref",
    "golden", "expected", "proto", "pb", "der", "pem", "crt", "key", "lua", "py", "sh",
];

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("scan root {0} does not exist")]
    RootMissing(PathBuf),
    #[error("no source files with extensions {extensions:?} under {root}")]
    EmptyTree { root: PathBuf, extensions: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construct {
    Exceptions,
    FunctionPointerCasts,
    Threads,
    LongDouble,
}

impl Construct {
    pub const ALL: [Construct; 4] = [
        Construct::Exceptions,
        Construct::FunctionPointerCasts,
        Construct::Threads,
        Construct::LongDouble,
    ];
}

/// `file:line`, with `file` relative to the scanned root.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathLiteral {
    pub literal: String,
    /// Relative to the scanned root.
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanIssue {
    pub file: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConstructReport {
    pub root: PathBuf,
    pub uses_exceptions: bool,
    pub casts_function_pointers: bool,
    pub uses_threads: bool,
    pub uses_long_double: bool,
    pub path_literals: Vec<PathLiteral>,
    pub scanned_files: usize,
    pub evidence: BTreeMap<Construct, Vec<Location>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<ScanIssue>,
}

impl ConstructReport {
    pub fn uses(&self, construct: Construct) -> bool {
        match construct {
            Construct::Exceptions => self.uses_exceptions,
            Construct::FunctionPointerCasts => self.casts_function_pointers,
            Construct::Threads => self.uses_threads,
            Construct::LongDouble => self.uses_long_double,
        }
    }

    /// Report with the given flags set and one synthetic evidence entry each.
    pub fn with_flags(constructs: &[Construct]) -> Self {
        let mut report = ConstructReport::default();
        for &c in constructs {
            report.add(
                c,
                Location {
                    file: "<synthetic>".into(),
                    line: 1,
                },
            );
        }
        report
    }

    fn add(&mut self, construct: Construct, at: Location) {
        self.evidence.entry(construct).or_default().push(at);
        match construct {
            Construct::Exceptions => self.uses_exceptions = true,
            Construct::FunctionPointerCasts => self.casts_function_pointers = true,
            Construct::Threads => self.uses_threads = true,
            Construct::LongDouble => self.uses_long_double = true,
        }
    }

    /// Folds another partial report into this one. The operation is
    /// commutative up to evidence ordering, which is normalized afterwards.
    pub fn merge(&mut self, other: ConstructReport) {
        for (construct, locations) in other.evidence {
            for at in locations {
                self.add(construct, at);
            }
        }
        self.path_literals.extend(other.path_literals);
        self.scanned_files += other.scanned_files;
        self.errors.extend(other.errors);
        self.normalize();
    }

    fn normalize(&mut self) {
        for locations in self.evidence.values_mut() {
            locations.sort();
            locations.dedup();
        }
        self.path_literals
            .sort_by(|a, b| (&a.file, a.line, &a.literal).cmp(&(&b.file, b.line, &b.literal)));
        self.errors.sort_by(|a, b| a.file.cmp(&b.file));
    }
}

struct SourceFile {
    rel: String,
    lexed: Lexed,
}

fn has_extension(path: &Path, extensions: &[String]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| extensions.iter().any(|x| x.trim_start_matches('.') == e))
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Walks `root` in path order, skipping hidden directories, and lexes every
/// matching file. Unreadable files become issues.
fn collect_sources(root: &Path, extensions: &[String]) -> (Vec<SourceFile>, Vec<ScanIssue>) {
    let mut files = Vec::new();
    let mut issues = Vec::new();
    let walker = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(err) => {
                issues.push(ScanIssue {
                    file: err
                        .path()
                        .map(|p| relative(root, p))
                        .unwrap_or_default(),
                    message: err.to_string(),
                });
                continue;
            }
        };
        if !entry.file_type().is_file() || !has_extension(entry.path(), extensions) {
            continue;
        }
        let rel = relative(root, entry.path());
        match std::fs::read(entry.path()) {
            Ok(bytes) => files.push(SourceFile {
                rel,
                lexed: lexer::lex(&String::from_utf8_lossy(&bytes)),
            }),
            Err(err) => issues.push(ScanIssue {
                file: rel,
                message: err.to_string(),
            }),
        }
    }
    (files, issues)
}

/// Scans every source file under `root` and aggregates the construct flags
/// and path-shaped string literals. Function-pointer aliases are collected
/// across all files before casts are examined.
pub fn scan_sources(root: &Path, extensions: &[String]) -> Result<ConstructReport, ScanError> {
    if !root.is_dir() {
        return Err(ScanError::RootMissing(root.to_path_buf()));
    }
    let extensions = if extensions.is_empty() {
        default_extensions()
    } else {
        extensions.to_vec()
    };
    let (files, issues) = collect_sources(root, &extensions);
    if files.is_empty() && issues.is_empty() {
        return Err(ScanError::EmptyTree {
            root: root.to_path_buf(),
            extensions,
        });
    }

    let mut table = TypedefTable::default();
    for f in &files {
        table.collect(&f.lexed);
    }

    let mut report = ConstructReport {
        root: root.to_path_buf(),
        errors: issues,
        ..Default::default()
    };
    for f in &files {
        report.merge(scan_file(f, &table));
    }
    Ok(report)
}

fn scan_file(file: &SourceFile, table: &TypedefTable) -> ConstructReport {
    let mut report = ConstructReport {
        scanned_files: 1,
        ..Default::default()
    };
    let hits = [
        (Construct::Exceptions, detect::detect_exceptions(&file.lexed)),
        (
            Construct::FunctionPointerCasts,
            detect::detect_function_pointer_casts(&file.lexed, table),
        ),
        (Construct::Threads, detect::detect_threads(&file.lexed)),
        (Construct::LongDouble, detect::detect_long_double(&file.lexed)),
    ];
    for (construct, lines) in hits {
        for line in lines {
            report.add(
                construct,
                Location {
                    file: file.rel.clone(),
                    line,
                },
            );
        }
    }
    report.path_literals = literals_in(file);
    report
}

fn literals_in(file: &SourceFile) -> Vec<PathLiteral> {
    file.lexed
        .tokens
        .iter()
        .filter(|t| t.kind == TokenKind::Str && looks_like_path(&t.text))
        .map(|t| PathLiteral {
            literal: t.text.clone(),
            file: file.rel.clone(),
            line: t.line,
        })
        .collect()
}

pub fn default_extensions() -> Vec<String> {
    DEFAULT_EXTENSIONS.iter().map(|s| s.to_string()).collect()
}

/// Every path-shaped string literal in the tree, in file then line order.
pub fn extract_path_literals(root: &Path) -> Vec<PathLiteral> {
    if !root.is_dir() {
        return Vec::new();
    }
    let (files, _) = collect_sources(root, &default_extensions());
    files.iter().flat_map(literals_in).collect()
}

/// A string is path-shaped when it contains `/`, or has no whitespace and
/// ends in a recognizable file extension.
pub fn looks_like_path(s: &str) -> bool {
    if s.is_empty() || s.len() > MAX_PATH_LITERAL || s.trim().is_empty() {
        return false;
    }
    if s.contains("://") || s.contains("\\n") {
        return false;
    }
    if s.chars().any(|c| c.is_control()) {
        return false;
    }
    if s.contains('/') {
        return true;
    }
    if s.chars().any(char::is_whitespace) {
        return false;
    }
    match s.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() => {
            FILE_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str())
        }
        _ => false,
    }
}
