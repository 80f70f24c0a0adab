//! Builders shared by the integration tests.
#![allow(dead_code)]

pub mod sandbox;

use std::path::PathBuf;

use wasmdiff::report::{BuildSummary, Builds, Discrepancies, PairingSummary, SettingsEcho};
use wasmdiff::{
    apply_memory_policy, compute_discrepancies, CompilerSettings, Evidence, FailureCategory, FailureClassification,
    RootCauseTagger, RunReport, TargetKind, TestOutcome, TestPairing, Termination,
};

pub fn outcome(name: &str, target: TargetKind, termination: Termination, stdout: &str, stderr: &str) -> TestOutcome {
    TestOutcome::new(name, target, termination, stdout.as_bytes(), stderr.as_bytes(), 12)
}

pub fn pairing(name: &str, native: (Termination, &str), wasm: (Termination, &str)) -> TestPairing {
    TestPairing {
        test_name: name.into(),
        native: Some(outcome(name, TargetKind::Native, native.0, native.1, "")),
        wasm: Some(outcome(name, TargetKind::Wasm, wasm.0, "", wasm.1)),
    }
}

fn built(target: &str, manual_mode: bool) -> BuildSummary {
    BuildSummary {
        succeeded: true,
        duration_ms: 1840,
        manual_mode,
        log_dir: PathBuf::from(format!("/work/demo/{target}/logs")),
        failure: None,
    }
}

fn wasm_settings() -> CompilerSettings {
    let mut s = CompilerSettings::new(TargetKind::Wasm);
    s.feature_flags.insert("-sNO_DISABLE_EXCEPTION_CATCHING".into());
    s.sanitized_user_flags = vec!["-O2".into(), "-Wall".into(), "-Wno-error".into()];
    s.preload_args = vec!["--preload-file /src/tests/data/test.xml@data/test.xml".into()];
    apply_memory_policy(s).unwrap()
}

/// Report over `pairings`, tagged with the default tagger.
pub fn report_for(project: &str, pairings: &[TestPairing]) -> RunReport {
    let (count, mut records) = compute_discrepancies(pairings);
    RootCauseTagger::default().apply(&mut records);
    let mut r = RunReport::new(project);
    r.builds = Builds {
        native: Some(built("native", false)),
        wasm: Some(built("wasm", false)),
    };
    r.pairings = PairingSummary::new(pairings);
    r.discrepancies = Discrepancies { count, records };
    r.settings = SettingsEcho {
        manual_mode: false,
        native: Some(CompilerSettings::new(TargetKind::Native)),
        wasm: Some(wasm_settings()),
    };
    r.tools.insert("cmake".into(), "cmake version 3.28.3".into());
    r.tools.insert("emcc".into(), "emcc 3.1.61".into());
    r
}

/// The reports stored under `tests/fixtures/reports`.
pub fn fixture_reports() -> Vec<(String, RunReport)> {
    use Termination::*;
    let equivalent = report_for(
        "equivalent",
        &[
            pairing("test_parse", (Exited(0), "ok\n"), (Exited(0), "")),
            pairing("test_emit", (Exited(0), "ok\n"), (Exited(0), "")),
        ],
    );

    let errno = report_for(
        "errno_divergence",
        &[pairing(
            "test_open",
            (Exited(0), "No such file or directory [2]\n"),
            (Exited(1), "No such file or directory [44]\n"),
        )],
    );

    let mut build_failure = RunReport::new("ssp_flags");
    build_failure.builds = Builds {
        native: Some(built("native", true)),
        wasm: Some(BuildSummary {
            succeeded: false,
            duration_ms: 930,
            manual_mode: true,
            log_dir: PathBuf::from("/work/ssp_flags/wasm/logs"),
            failure: Some(FailureClassification {
                category: FailureCategory::UndefinedSymbols,
                matched_signals: vec![Evidence::new(
                    "undefined-symbol",
                    "wasm-ld: error: main.o: undefined symbol: __stack_chk_guard",
                )],
            }),
        }),
    };
    build_failure.settings.manual_mode = true;

    let mut mixed_pairings = vec![
        pairing("fork | child", (Exited(0), ""), (Exited(1), "fork failed: function getChild returned -1")),
        pairing("signature", (Exited(0), ""), (Signaled(6), "RuntimeError: unreachable\n    at helloWorld")),
        TestPairing {
            test_name: "coloring".into(),
            native: Some(outcome("coloring", TargetKind::Native, Exited(0), "map={(0,3),(1,2),(2,1),(3,0)}\n", "")),
            wasm: Some(outcome("coloring", TargetKind::Wasm, Exited(1), "map={(3,0),(2,1),(1,2),(0,3)}\n", "")),
        },
        pairing("flaky", (Exited(3), ""), (Exited(0), "caf\u{e9} \"quoted\"\n")),
        pairing("slow", (TimedOut, ""), (TimedOut, "")),
    ];
    mixed_pairings.push(TestPairing {
        test_name: "native_only".into(),
        native: Some(outcome("native_only", TargetKind::Native, Exited(0), "", "")),
        wasm: None,
    });
    let mixed = report_for("mixed", &mixed_pairings);

    vec![
        ("equivalent".into(), equivalent),
        ("errno_divergence".into(), errno),
        ("build_failure".into(), build_failure),
        ("mixed".into(), mixed),
    ]
}
