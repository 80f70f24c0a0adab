//! Stage wiring: analyze, plan, build, test, diff. Every stage writes its
//! artifact under `<workdir>/stages/`; a stage run on its own reuses the
//! artifacts of the stages before it.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::build::{run_build_with, BuildError, BuildResult, FailureCategory, FailureClassifier, Toolchain};
use crate::differ::{compute_discrepancies, FingerprintError, FingerprintTable, RootCauseTagger, TaggingContext};
use crate::model::{ProjectSpec, TargetKind, TestPairing, ToolVersions};
use crate::report::{
    to_json, to_markdown, BuildSummary, Discrepancies, PairingSummary, ReportError, RunReport,
    SettingsEcho,
};
use crate::runner::{discover_tests, pair_tests, run_tests, ExecutedTest, RunError};
use crate::scanner::{default_extensions, scan_sources, ConstructReport, ScanError};
use crate::transform::{build_plan, port_flags_for, BuildPlan, PlanOptions, PreloadMapping, TransformError};

pub const STAGE_DIR: &str = "stages";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MARKDOWN: &str = "report.md";

/// Process exit codes.
pub const EXIT_EQUIVALENT: i32 = 0;
pub const EXIT_DISCREPANCIES: i32 = 1;
pub const EXIT_BUILD_FAILED: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Fingerprints(#[from] FingerprintError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage file {path} is unreadable: {reason}")]
    StageCorrupt { path: PathBuf, reason: String },
    #[error("{target} build did not succeed; run the build stage first")]
    BuildNotReady { target: TargetKind },
    #[error("{target} tests have not been run; run the test stage first")]
    TestsNotReady { target: TargetKind },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::BuildNotReady { .. } => EXIT_BUILD_FAILED,
            _ => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub manual_mode: bool,
    pub jobs: usize,
    pub timeout_secs: Option<u64>,
    pub toolchain: Toolchain,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            manual_mode: false,
            jobs: 1,
            timeout_secs: None,
            toolchain: Toolchain::discover(None, None),
        }
    }
}

/// Build stage artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildRecord {
    pub plan: BuildPlan,
    pub result: BuildResult,
    pub tools: ToolVersions,
}

/// Test stage artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRecord {
    pub target: TargetKind,
    pub tests: Vec<ExecutedTest>,
    pub tools: ToolVersions,
}

pub struct Pipeline {
    pub project: ProjectSpec,
    pub options: PipelineOptions,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(ReportError::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, PipelineError> {
    match std::fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| PipelineError::StageCorrupt {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(PipelineError::Io { path: path.to_path_buf(), source }),
    }
}

impl Pipeline {
    pub fn new(project: ProjectSpec, options: PipelineOptions) -> Self {
        Pipeline { project, options }
    }

    pub fn stage_path(&self, name: &str) -> PathBuf {
        self.project.workdir.join(STAGE_DIR).join(name)
    }

    fn analysis_path(&self) -> PathBuf {
        self.stage_path("analysis.json")
    }

    fn plan_path(&self, t: TargetKind) -> PathBuf {
        self.stage_path(&format!("plan-{t}.json"))
    }

    fn build_path(&self, t: TargetKind) -> PathBuf {
        self.stage_path(&format!("build-{t}.json"))
    }

    fn tests_path(&self, t: TargetKind) -> PathBuf {
        self.stage_path(&format!("tests-{t}.json"))
    }

    fn pairings_path(&self) -> PathBuf {
        self.stage_path("pairings.json")
    }

    fn timeout(&self) -> u64 {
        self.options.timeout_secs.unwrap_or(self.project.timeout_secs)
    }

    fn plan_options(&self) -> PlanOptions {
        PlanOptions {
            manual_mode: self.options.manual_mode,
            jobs: self.options.jobs,
            port_flags: Default::default(),
        }
    }

    pub fn analyze(&self) -> Result<ConstructReport, PipelineError> {
        let report = scan_sources(&self.project.source_root, &default_extensions())?;
        write_json(&self.analysis_path(), &report)?;
        Ok(report)
    }

    fn analysis(&self) -> Result<ConstructReport, PipelineError> {
        match read_json(&self.analysis_path())? {
            Some(r) => Ok(r),
            None => self.analyze(),
        }
    }

    pub fn plan(&self, target: TargetKind) -> Result<BuildPlan, PipelineError> {
        let report = self.analysis()?;
        let plan = build_plan(&self.project, &report, target, &self.plan_options())?;
        write_json(&self.plan_path(target), &plan)?;
        Ok(plan)
    }

    fn current_plan(&self, target: TargetKind) -> Result<BuildPlan, PipelineError> {
        match read_json(&self.plan_path(target))? {
            Some(p) => Ok(p),
            None => self.plan(target),
        }
    }

    /// Builds one target. A wasm build that fails for want of a library with
    /// a toolchain port is retried once with the port enabled.
    pub fn build(&self, target: TargetKind) -> Result<BuildRecord, PipelineError> {
        let toolchain = &self.options.toolchain;
        let tools = toolchain.preflight(target)?;
        let mut plan = self.current_plan(target)?;
        let classifier = self.classifier();
        let mut result = run_build_with(&plan, toolchain, &classifier)?;

        let missing_lib = result
            .failure
            .as_ref()
            .is_some_and(|f| f.category == FailureCategory::MissingThirdParty);
        if target == TargetKind::Wasm && missing_lib && !plan.manual_mode && plan.settings.port_flags.is_empty() {
            let ports = port_flags_for(&[&result.configure_log, &result.build_log]);
            if !ports.is_empty() {
                log::info!("retrying wasm build with ports: {ports:?}");
                let report = self.analysis()?;
                let mut options = self.plan_options();
                options.port_flags = ports;
                plan = build_plan(&self.project, &report, target, &options)?;
                plan.notes.push("rebuilt with toolchain ports after a missing-library failure".into());
                write_json(&self.plan_path(target), &plan)?;
                result = run_build_with(&plan, toolchain, &classifier)?;
            }
        }
        let record = BuildRecord { plan, result, tools };
        write_json(&self.build_path(target), &record)?;
        Ok(record)
    }

    /// Classifier that knows which headers the project ships itself.
    fn classifier(&self) -> FailureClassifier {
        const HEADER_EXTENSIONS: &[&str] = &["h", "hh", "hpp", "hxx", "inl"];
        let headers = walkdir::WalkDir::new(&self.project.source_root)
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| {
                e.file_type().is_file()
                    && e.path()
                        .extension()
                        .is_some_and(|x| HEADER_EXTENSIONS.contains(&x.to_string_lossy().as_ref()))
            })
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        FailureClassifier::with_project_headers(headers)
    }

    fn build_record(&self, target: TargetKind) -> Result<BuildRecord, PipelineError> {
        read_json(&self.build_path(target))?.ok_or(PipelineError::BuildNotReady { target })
    }

    /// Discovers and runs the tests of a finished build. An empty build tree
    /// is reported, not fatal.
    pub fn test(&self, target: TargetKind) -> Result<TestRecord, PipelineError> {
        let build = self.build_record(target)?;
        if !build.result.succeeded {
            return Err(PipelineError::BuildNotReady { target });
        }
        let mut tools = ToolVersions::new();
        if target == TargetKind::Wasm {
            let runtime = &self.options.toolchain.host_runtime;
            let version = self
                .options
                .toolchain
                .probe(runtime)
                .map_err(|_| RunError::RuntimeMissing(runtime.clone()))?;
            tools.insert(runtime.clone(), version);
        }
        let artifacts = match discover_tests(&build.plan.build_dir, target) {
            Ok(a) => a,
            Err(RunError::NoTestsFound(dir)) => {
                log::warn!("no {target} tests found under {}", dir.display());
                Vec::new()
            }
            Err(e) => return Err(e.into()),
        };
        let tests = run_tests(&artifacts, self.timeout(), &self.options.toolchain, self.options.jobs)?;
        let record = TestRecord { target, tests, tools };
        write_json(&self.tests_path(target), &record)?;
        Ok(record)
    }

    fn test_record(&self, target: TargetKind) -> Result<TestRecord, PipelineError> {
        read_json(&self.tests_path(target))?.ok_or(PipelineError::TestsNotReady { target })
    }

    fn tagger(&self, wasm_plan: Option<&BuildPlan>) -> Result<RootCauseTagger, PipelineError> {
        let table = match &self.project.bug_fingerprints {
            Some(path) => FingerprintTable::load(path)?,
            None => FingerprintTable::builtin(),
        };
        let context = match wasm_plan {
            Some(plan) => {
                let mappings: Vec<PreloadMapping> = plan
                    .settings
                    .preload_args
                    .iter()
                    .filter_map(|a| PreloadMapping::parse_arg(a))
                    .collect();
                TaggingContext::from_preloads(
                    &mappings,
                    plan.unresolved_literals.iter().map(|l| l.literal.clone()),
                )
            }
            None => TaggingContext::default(),
        };
        Ok(RootCauseTagger::new(table, context))
    }

    fn base_report(&self, builds: &[(TargetKind, Option<&BuildRecord>)]) -> RunReport {
        let mut report = RunReport::new(&self.project.name);
        report.settings = SettingsEcho {
            manual_mode: self.options.manual_mode,
            ..Default::default()
        };
        for (target, record) in builds {
            let Some(rec) = record else { continue };
            let summary = BuildSummary::new(&rec.result, &rec.plan);
            match target {
                TargetKind::Native => {
                    report.builds.native = Some(summary);
                    report.settings.native = Some(rec.plan.settings.clone());
                }
                TargetKind::Wasm => {
                    report.builds.wasm = Some(summary);
                    report.settings.wasm = Some(rec.plan.settings.clone());
                }
            }
            report.tools.extend(rec.tools.clone());
        }
        report
    }

    /// Pairs stored test outcomes, computes the metric and writes both
    /// report documents.
    pub fn diff(&self) -> Result<RunReport, PipelineError> {
        let native_build = read_json::<BuildRecord>(&self.build_path(TargetKind::Native))?;
        let wasm_build = read_json::<BuildRecord>(&self.build_path(TargetKind::Wasm))?;
        let native = self.test_record(TargetKind::Native)?;
        let wasm = self.test_record(TargetKind::Wasm)?;

        let pairings = pair_tests(&native.tests, &wasm.tests);
        write_json(&self.pairings_path(), &pairings)?;
        let mut report = self.base_report(&[
            (TargetKind::Native, native_build.as_ref()),
            (TargetKind::Wasm, wasm_build.as_ref()),
        ]);
        report.tools.extend(native.tools);
        report.tools.extend(wasm.tools);
        self.fill_discrepancies(&mut report, &pairings, wasm_build.as_ref().map(|b| &b.plan))?;
        self.write_reports(&report)?;
        Ok(report)
    }

    fn fill_discrepancies(
        &self,
        report: &mut RunReport,
        pairings: &[TestPairing],
        wasm_plan: Option<&BuildPlan>,
    ) -> Result<(), PipelineError> {
        let (count, mut records) = compute_discrepancies(pairings);
        self.tagger(wasm_plan)?.apply(&mut records);
        report.pairings = PairingSummary::new(pairings);
        report.discrepancies = Discrepancies { count, records };
        Ok(())
    }

    pub fn write_reports(&self, report: &RunReport) -> Result<(), PipelineError> {
        let dir = &self.project.workdir;
        let io = |path: PathBuf| move |source| PipelineError::Io { path, source };
        std::fs::create_dir_all(dir).map_err(io(dir.clone()))?;
        let json = dir.join(REPORT_JSON);
        std::fs::write(&json, to_json(report)?).map_err(io(json.clone()))?;
        let md = dir.join(REPORT_MARKDOWN);
        std::fs::write(&md, to_markdown(report)).map_err(io(md.clone()))?;
        Ok(())
    }

    /// The whole pipeline. When either build fails the report carries the
    /// failure classification and no test results.
    pub fn run(&self) -> Result<RunReport, PipelineError> {
        for t in TargetKind::ALL {
            self.options.toolchain.preflight(t)?;
        }
        self.analyze()?;
        for t in TargetKind::ALL {
            self.plan(t)?;
        }
        let native = self.build(TargetKind::Native)?;
        let wasm = self.build(TargetKind::Wasm)?;
        if !(native.result.succeeded && wasm.result.succeeded) {
            let report = self.base_report(&[
                (TargetKind::Native, Some(&native)),
                (TargetKind::Wasm, Some(&wasm)),
            ]);
            self.write_reports(&report)?;
            return Ok(report);
        }
        for t in TargetKind::ALL {
            self.test(t)?;
        }
        self.diff()
    }
}

/// 0 when equivalent, 1 with discrepancies, 2 when a build failed.
pub fn exit_code(report: &RunReport) -> i32 {
    if !report.builds.all_succeeded() {
        EXIT_BUILD_FAILED
    } else if report.equivalent() {
        EXIT_EQUIVALENT
    } else {
        EXIT_DISCREPANCIES
    }
}
