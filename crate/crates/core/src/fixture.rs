//! Fixture manifests: a project config plus the outcomes the fixture is
//! expected to produce in each mode.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{project_from_table, ConfigError, ProjectSpec, RootCauseTag, TestPairing, TestStatus};
use crate::report::RunReport;

/// Names tried, in order, when a manifest path is a directory.
pub const MANIFEST_NAMES: &[&str] = &["manifest", "manifest.toml"];

const EXPECTATION_KEYS: &[&str] = &[
    "fixture_id",
    "expected_native",
    "expected_wasm_manual",
    "expected_wasm_checked",
    "expected_tag",
    "notes",
    "toolchain_version",
];

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("manifest is missing `{0}`")]
    Missing(&'static str),
    #[error("`{field}` = {value:?}: {reason}")]
    Invalid {
        field: &'static str,
        value: String,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expected {
    Pass,
    Fail,
    BuildFail,
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A root-cause tag, or the claim that the transformer removes the
/// divergence entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ExpectedTag {
    FixedByTransformer,
    Tag(RootCauseTag),
}

pub const FIXED_BY_TRANSFORMER: &str = "fixed-by-transformer";

impl TryFrom<String> for ExpectedTag {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s == FIXED_BY_TRANSFORMER {
            Ok(ExpectedTag::FixedByTransformer)
        } else {
            s.parse().map(ExpectedTag::Tag)
        }
    }
}

impl From<ExpectedTag> for String {
    fn from(t: ExpectedTag) -> String {
        match t {
            ExpectedTag::FixedByTransformer => FIXED_BY_TRANSFORMER.to_string(),
            ExpectedTag::Tag(tag) => format!("{tag:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub fixture_id: String,
    pub project: ProjectSpec,
    pub expected_native: Expected,
    pub expected_wasm_manual: Expected,
    pub expected_wasm_checked: Expected,
    pub expected_tag: ExpectedTag,
    pub notes: String,
    /// Toolchain versions the expectations were pinned against.
    pub toolchain_version: Option<String>,
}

fn take_str(table: &mut toml::Table, key: &'static str) -> Result<Option<String>, FixtureError> {
    match table.remove(key) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(FixtureError::Invalid {
            field: key,
            value: other.to_string(),
            reason: "expected a string".into(),
        }),
    }
}

fn expected(
    table: &mut toml::Table,
    key: &'static str,
    allowed: &[Expected],
) -> Result<Expected, FixtureError> {
    let value = take_str(table, key)?.ok_or(FixtureError::Missing(key))?;
    allowed
        .iter()
        .copied()
        .find(|e| e.to_string() == value)
        .ok_or_else(|| FixtureError::Invalid {
            field: key,
            value,
            reason: format!(
                "expected one of {}",
                allowed.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
            ),
        })
}

/// Parses manifest text. Expectation keys are split off and the rest is
/// read as an ordinary project config anchored at `base`.
pub fn parse_fixture_manifest(text: &str, base: &Path) -> Result<FixtureManifest, FixtureError> {
    let mut table: toml::Table = toml::from_str(text)
        .map_err(|e| ConfigError::SchemaViolation(e.message().to_string()))?;
    let fixture_id = take_str(&mut table, "fixture_id")?.ok_or(FixtureError::Missing("fixture_id"))?;
    let expected_native = expected(&mut table, "expected_native", &[Expected::Pass, Expected::Fail])?;
    let expected_wasm_manual = expected(
        &mut table,
        "expected_wasm_manual",
        &[Expected::Pass, Expected::Fail, Expected::BuildFail],
    )?;
    let expected_wasm_checked =
        expected(&mut table, "expected_wasm_checked", &[Expected::Pass, Expected::Fail])?;
    let tag_text = take_str(&mut table, "expected_tag")?.ok_or(FixtureError::Missing("expected_tag"))?;
    let expected_tag = ExpectedTag::try_from(tag_text.clone()).map_err(|reason| FixtureError::Invalid {
        field: "expected_tag",
        value: tag_text,
        reason,
    })?;
    let notes = take_str(&mut table, "notes")?.unwrap_or_default();
    let toolchain_version = take_str(&mut table, "toolchain_version")?;
    debug_assert!(EXPECTATION_KEYS.iter().all(|k| !table.contains_key(*k)));

    if !table.contains_key("name") {
        table.insert("name".into(), toml::Value::String(fixture_id.clone()));
    }
    let project = project_from_table(table, base)?;
    Ok(FixtureManifest {
        fixture_id,
        project,
        expected_native,
        expected_wasm_manual,
        expected_wasm_checked,
        expected_tag,
        notes,
        toolchain_version,
    })
}

/// Loads a manifest from a file, or from a fixture directory containing one.
pub fn load_fixture_manifest(path: &Path) -> Result<FixtureManifest, FixtureError> {
    let file: PathBuf = if path.is_dir() {
        MANIFEST_NAMES
            .iter()
            .map(|n| path.join(n))
            .find(|p| p.is_file())
            .unwrap_or_else(|| path.join(MANIFEST_NAMES[0]))
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&file).map_err(|source| ConfigError::Io {
        path: file.clone(),
        source,
    })?;
    let base = file.parent().unwrap_or(Path::new("."));
    parse_fixture_manifest(&text, base)
}

/// What a run actually produced, reduced to the manifest's vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub native: Expected,
    pub wasm: Expected,
    pub tags: Vec<RootCauseTag>,
}

fn side_outcome(built: bool, statuses: &[TestStatus]) -> Expected {
    if !built {
        Expected::BuildFail
    } else if !statuses.is_empty() && statuses.iter().all(|s| *s == TestStatus::Pass) {
        Expected::Pass
    } else {
        Expected::Fail
    }
}

impl Observation {
    pub fn from_run(report: &RunReport, pairings: &[TestPairing]) -> Self {
        let built = |t| report.builds.get(t).is_some_and(|b| b.succeeded);
        let statuses = |t| -> Vec<TestStatus> {
            pairings.iter().filter_map(|p| p.side(t)).map(|o| o.status).collect()
        };
        use crate::model::TargetKind::{Native, Wasm};
        Observation {
            native: side_outcome(built(Native), &statuses(Native)),
            wasm: side_outcome(built(Wasm), &statuses(Wasm)),
            tags: report.discrepancies.records.iter().map(|r| r.root_cause).collect(),
        }
    }
}

impl FixtureManifest {
    /// Mismatches between the manifest and an observation; empty when the
    /// fixture behaved as declared.
    pub fn check(&self, observed: &Observation, manual_mode: bool) -> Vec<String> {
        let mut problems = Vec::new();
        if observed.native != self.expected_native {
            problems.push(format!("native: expected {}, got {}", self.expected_native, observed.native));
        }
        let wasm = if manual_mode { self.expected_wasm_manual } else { self.expected_wasm_checked };
        if observed.wasm != wasm {
            problems.push(format!("wasm: expected {wasm}, got {}", observed.wasm));
        }
        if !manual_mode {
            match self.expected_tag {
                ExpectedTag::FixedByTransformer if !observed.tags.is_empty() => {
                    problems.push(format!("expected no discrepancies, got {:?}", observed.tags));
                }
                ExpectedTag::Tag(tag) if observed.tags != [tag] => {
                    problems.push(format!("expected exactly one {tag:?} discrepancy, got {:?}", observed.tags));
                }
                _ => {}
            }
        }
        problems
    }
}
