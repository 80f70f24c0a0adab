//! Differential testing of C/C++ test suites compiled natively and to
//! WebAssembly.
//!
//! The pipeline scans sources for constructs that need toolchain support,
//! derives compiler settings, builds both targets, runs every test on both
//! sides and reports tests whose pass/fail outcome differs.

pub mod build;
pub mod differ;
pub mod fixture;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod runner;
pub mod scanner;
pub mod transform;

pub use build::{
    classify_failure, run_build, BuildError, BuildResult, FailureCategory, FailureClassification,
    FailureClassifier, Toolchain,
};
pub use differ::{
    compute_discrepancies, tag_root_cause, BugFingerprint, FingerprintTable, RootCauseTagger,
    TaggingContext,
};
pub use model::{
    load_project_config, load_project_config_with, outcome_bit, ConfigError, Direction, DiscrepancyRecord, Evidence,
    ProjectSpec, RootCauseTag, TargetKind, TestOutcome, TestPairing, TestStatus, Termination, ToolVersions,
};
pub use pipeline::{exit_code, Pipeline, PipelineError, PipelineOptions};
pub use report::{emit_report, ReportFormat, RunReport};
pub use runner::{discover_tests, execute_test, pair_tests, ExecutedTest, RunError, TestArtifact};
pub use scanner::{default_extensions, scan_sources, Construct, ConstructReport, PathLiteral, ScanError};
pub use transform::{
    apply_memory_policy, build_plan, infer_feature_flags, resolve_preloads, sanitize_user_flags,
    BuildPlan, CompilerSettings, PlanOptions, PreloadMapping,
};
