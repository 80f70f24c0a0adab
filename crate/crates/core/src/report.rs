//! Run reports and their JSON and markdown renderings.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::build::{BuildResult, FailureCategory, FailureClassification};
use crate::model::{DiscrepancyRecord, RootCauseTag, TargetKind, TestOutcome, TestPairing, ToolVersions};
use crate::transform::{BuildPlan, CompilerSettings};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report serialization failed: {0}")]
    Serialization(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub succeeded: bool,
    pub duration_ms: u64,
    pub manual_mode: bool,
    pub log_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureClassification>,
}

impl BuildSummary {
    pub fn new(result: &BuildResult, plan: &BuildPlan) -> Self {
        BuildSummary {
            succeeded: result.succeeded,
            duration_ms: result.duration_ms,
            manual_mode: plan.manual_mode,
            log_dir: plan.log_dir(),
            failure: result.failure.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Builds {
    pub native: Option<BuildSummary>,
    pub wasm: Option<BuildSummary>,
}

impl Builds {
    pub fn get(&self, target: TargetKind) -> Option<&BuildSummary> {
        match target {
            TargetKind::Native => self.native.as_ref(),
            TargetKind::Wasm => self.wasm.as_ref(),
        }
    }

    pub fn all_succeeded(&self) -> bool {
        TargetKind::ALL
            .iter()
            .all(|t| self.get(*t).is_some_and(|b| b.succeeded))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingSummary {
    pub total: usize,
    pub complete: usize,
    /// Tests seen on only one side, excluded from the metric.
    pub incomplete: Vec<String>,
}

impl PairingSummary {
    pub fn new(pairings: &[TestPairing]) -> Self {
        PairingSummary {
            total: pairings.len(),
            complete: pairings.iter().filter(|p| p.is_complete()).count(),
            incomplete: pairings
                .iter()
                .filter(|p| !p.is_complete())
                .map(|p| p.test_name.clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancies {
    pub count: usize,
    pub records: Vec<DiscrepancyRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettingsEcho {
    pub manual_mode: bool,
    pub native: Option<CompilerSettings>,
    pub wasm: Option<CompilerSettings>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub project: String,
    pub builds: Builds,
    pub pairings: PairingSummary,
    pub discrepancies: Discrepancies,
    pub settings: SettingsEcho,
    pub tools: ToolVersions,
}

impl RunReport {
    pub fn new(project: impl Into<String>) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            project: project.into(),
            builds: Builds::default(),
            pairings: PairingSummary::default(),
            discrepancies: Discrepancies::default(),
            settings: SettingsEcho::default(),
            tools: ToolVersions::new(),
        }
    }

    pub fn discrepancy_count(&self) -> usize {
        self.discrepancies.count
    }

    pub fn equivalent(&self) -> bool {
        self.discrepancies.count == 0
    }

    pub fn verdict(&self) -> String {
        if self.equivalent() {
            "EQUIVALENT (Σ = 0)".to_string()
        } else {
            format!("NOT EQUIVALENT (Σ = {})", self.discrepancies.count)
        }
    }

    /// Records carrying `tag`, in report order.
    pub fn records_tagged(&self, tag: RootCauseTag) -> impl Iterator<Item = &DiscrepancyRecord> {
        self.discrepancies.records.iter().filter(move |r| r.root_cause == tag)
    }
}

pub fn emit_report(report: &RunReport, format: ReportFormat) -> Result<String, ReportError> {
    match format {
        ReportFormat::Json => to_json(report),
        ReportFormat::Markdown => Ok(to_markdown(report)),
    }
}

pub fn to_json(report: &RunReport) -> Result<String, ReportError> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report(json: &str) -> Result<RunReport, ReportError> {
    Ok(serde_json::from_str(json)?)
}

fn cell(s: &str) -> String {
    let one_line = s.split_whitespace().collect::<Vec<_>>().join(" ");
    crate::model::clip(&one_line, 120).replace('|', "\\|")
}

fn status(o: Option<&TestOutcome>) -> String {
    match o {
        Some(o) => match o.exit_code {
            Some(code) => format!("{:?} ({code})", o.status),
            None => format!("{:?}", o.status),
        },
        None => "-".into(),
    }
}

pub fn to_markdown(r: &RunReport) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# wasmdiff report: {}\n", r.project);
    let _ = writeln!(md, "**Verdict:** {}\n", r.verdict());

    md.push_str("## Builds\n\n| Target | Result | Failure category | Duration (ms) |\n|---|---|---|---|\n");
    for t in TargetKind::ALL {
        match r.builds.get(t) {
            Some(b) => {
                let category = b.failure.as_ref().map_or("-", |f| f.category.label());
                let result = if b.succeeded { "built" } else { "failed" };
                let _ = writeln!(md, "| {t} | {result} | {category} | {} |", b.duration_ms);
            }
            None => {
                let _ = writeln!(md, "| {t} | not run | - | - |");
            }
        }
    }
    let failures: Vec<(TargetKind, &FailureClassification)> = TargetKind::ALL
        .iter()
        .filter_map(|t| Some((*t, r.builds.get(*t)?.failure.as_ref()?)))
        .collect();
    if !failures.is_empty() {
        md.push_str("\n### Build failures\n\n| Category | Target | Signal | Excerpt |\n|---|---|---|---|\n");
        for cat in FailureCategory::ALL {
            for (t, f) in failures.iter().filter(|(_, f)| f.category == cat) {
                if f.matched_signals.is_empty() {
                    let _ = writeln!(md, "| {} | {t} | - | - |", cat.label());
                }
                for ev in &f.matched_signals {
                    let _ = writeln!(md, "| {} | {t} | {} | {} |", cat.label(), cell(&ev.pattern), cell(&ev.excerpt));
                }
            }
        }
    }

    let p = &r.pairings;
    let _ = writeln!(
        md,
        "\n## Tests\n\n{} paired tests, {} complete, {} incomplete.",
        p.total,
        p.complete,
        p.incomplete.len()
    );
    if !p.incomplete.is_empty() {
        let _ = writeln!(md, "Incomplete (not counted): {}", p.incomplete.join(", "));
    }

    md.push_str("\n## Discrepancies by root cause\n\n| Root cause | Count |\n|---|---|\n");
    for tag in RootCauseTag::ALL {
        let _ = writeln!(md, "| {} | {} |", tag.label(), r.records_tagged(tag).count());
    }
    let _ = writeln!(md, "| **Total** | **{}** |", r.discrepancies.count);
    for tag in RootCauseTag::ALL {
        let records: Vec<&DiscrepancyRecord> = r.records_tagged(tag).collect();
        if records.is_empty() {
            continue;
        }
        let _ = writeln!(
            md,
            "\n### {}\n\n| Test | Direction | Native | Wasm | Evidence | Notes |\n|---|---|---|---|---|---|",
            tag.label()
        );
        for rec in records {
            let evidence = rec
                .evidence
                .iter()
                .map(|e| format!("{}: {}", e.pattern, e.excerpt))
                .collect::<Vec<_>>()
                .join("; ");
            let _ = writeln!(
                md,
                "| {} | {:?} | {} | {} | {} | {} |",
                cell(&rec.pairing.test_name),
                rec.direction,
                status(rec.pairing.native.as_ref()),
                status(rec.pairing.wasm.as_ref()),
                if evidence.is_empty() { "-".into() } else { cell(&evidence) },
                if rec.annotations.is_empty() { "-".into() } else { cell(&rec.annotations.join("; ")) },
            );
        }
    }

    md.push_str("\n## Settings\n\n");
    if r.settings.manual_mode {
        md.push_str("Manual mode: toolchain defaults, no transformer settings.\n\n");
    }
    for (t, s) in [("native", &r.settings.native), ("wasm", &r.settings.wasm)] {
        if let Some(s) = s {
            let _ = writeln!(md, "- {t} compile: `{}`", s.compile_flags().join(" "));
            let _ = writeln!(md, "- {t} link: `{}`", s.link_flags().join(" "));
        }
    }

    if !r.tools.is_empty() {
        md.push_str("\n## Tools\n\n");
        for (tool, version) in &r.tools {
            let _ = writeln!(md, "- {tool}: {}", cell(version));
        }
    }
    md
}
