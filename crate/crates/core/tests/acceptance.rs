//! Acceptance checks. Each criterion prints a single PASS or FAIL line; the
//! process exits nonzero if any fails.
//!
//! Set `WASMDIFF_BLESS=1` to rewrite the stored report fixtures.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use wasmdiff::report::{parse_report, to_json};
use wasmdiff::{
    classify_failure, compute_discrepancies, default_extensions, infer_feature_flags, resolve_preloads,
    sanitize_user_flags, scan_sources, FailureCategory, PreloadMapping, TargetKind, TestOutcome, TestPairing,
    TestStatus, Termination,
};

mod common;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn random_side(rng: &mut StdRng, name: &str, target: TargetKind) -> Option<TestOutcome> {
    let termination = match rng.gen_range(0..6) {
        0 => return None,
        1 | 2 => Termination::Exited(0),
        3 => Termination::Exited(rng.gen_range(1..256)),
        4 => Termination::Signaled(rng.gen_range(1..32)),
        _ => {
            if rng.gen_bool(0.5) {
                Termination::TimedOut
            } else {
                Termination::NotStarted
            }
        }
    };
    Some(TestOutcome::new(name, target, termination, b"", b"", 0))
}

/// Brute force over the raw statuses, without going through the model's bit helpers.
fn oracle_sum(pairings: &[TestPairing]) -> usize {
    let mut total = 0;
    for p in pairings {
        if let (Some(n), Some(w)) = (&p.native, &p.wasm) {
            let a: i32 = if n.status == TestStatus::Pass { 1 } else { 0 };
            let b: i32 = if w.status == TestStatus::Pass { 1 } else { 0 };
            total += (a - b).unsigned_abs() as usize;
        }
    }
    total
}

fn discrepancy_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let vectors = 1000;
    let start = Instant::now();
    for v in 0..vectors {
        let len = rng.gen_range(0..40);
        let pairings: Vec<TestPairing> = (0..len)
            .map(|i| {
                let name = format!("t{i}");
                TestPairing {
                    native: random_side(&mut rng, &name, TargetKind::Native),
                    wasm: random_side(&mut rng, &name, TargetKind::Wasm),
                    test_name: name,
                }
            })
            .collect();
        let (count, records) = compute_discrepancies(&pairings);
        let expected = oracle_sum(&pairings);
        if count != expected || records.len() != expected {
            return Err(format!("vector {v}: got {count} ({} records), oracle {expected}", records.len()));
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("{vectors} vectors took {elapsed:?}"));
    }
    Ok(format!("{vectors} vectors exact in {elapsed:?}"))
}

fn flag_inference() -> Check {
    let table = [
        ("exceptions.cpp", "-sNO_DISABLE_EXCEPTION_CATCHING"),
        ("fn_pointer_cast.c", "-sEMULATE_FUNCTION_POINTER_CASTS"),
        ("threads.cpp", "-pthread"),
        ("long_double.c", "-sPRINTF_LONG_DOUBLE"),
    ];
    let mut exact = 0;
    let mut misses = Vec::new();
    for (file, flag) in table {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        std::fs::copy(fixtures().join("flags").join(file), dir.path().join(file)).map_err(|e| e.to_string())?;
        let report = scan_sources(dir.path(), &default_extensions()).map_err(|e| e.to_string())?;
        let got = infer_feature_flags(&report);
        if got == BTreeSet::from([flag.to_string()]) {
            exact += 1;
        } else {
            misses.push(format!("{file}: {got:?}"));
        }
    }
    if misses.is_empty() {
        Ok(format!("{exact}/4 exact"))
    } else {
        Err(format!("{exact}/4 exact; {}", misses.join("; ")))
    }
}

fn flag_strategy() -> impl Strategy<Value = Vec<String>> {
    let known = prop::sample::select(vec![
        "-O2", "-O3", "-g", "-Wall", "-Wextra", "-Werror", "-Werror=format", "-march=native",
        "-march=haswell", "-mtune=generic", "-Ofast", "-fstack-protector", "-fstack-protector-strong",
        "-fstack-protector-all", "-DNDEBUG", "-I/opt/include", "-std=c++17", "-fPIC", "-Wno-error",
        "-fno-stack-protector", "-pthread",
    ])
    .prop_map(String::from);
    let other = "-[fWDm][a-z_]{1,8}".prop_map(String::from);
    prop::collection::vec(prop_oneof![3 => known, 1 => other], 0..24)
}

fn rewritten(f: &str) -> bool {
    f == "-Werror"
        || f.starts_with("-Werror=")
        || f.starts_with("-march=")
        || f.starts_with("-mtune=")
        || f == "-Ofast"
        || f.starts_with("-fstack-protector")
}

fn ordinary(flags: &[String]) -> Vec<&String> {
    flags
        .iter()
        .filter(|f| !rewritten(f) && *f != "-Wno-error" && *f != "-fno-stack-protector")
        .collect()
}

fn sanitizer_laws() -> Check {
    let mut runner = TestRunner::new(Config {
        cases: 512,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&flag_strategy(), |flags| {
        let once = sanitize_user_flags(&flags, TargetKind::Wasm);
        prop_assert_eq!(&sanitize_user_flags(&once, TargetKind::Wasm), &once, "idempotence");
        prop_assert!(!once.iter().any(|f| rewritten(f)), "deny-list survived: {:?}", once);
        if flags.iter().any(|f| f == "-Werror" || f.starts_with("-Werror=")) {
            prop_assert!(once.iter().any(|f| f == "-Wno-error"));
        }
        if flags.iter().any(|f| f.starts_with("-fstack-protector")) {
            prop_assert!(once.iter().any(|f| f == "-fno-stack-protector"));
        }
        prop_assert_eq!(ordinary(&once), ordinary(&flags), "order");
        prop_assert_eq!(sanitize_user_flags(&flags, TargetKind::Native), flags);
        Ok(())
    });
    match result {
        Ok(()) => Ok("512 random flag lists".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn classifier_regression() -> Check {
    let table = [
        ("undefined_symbols.log", FailureCategory::UndefinedSymbols),
        ("missing_third_party.log", FailureCategory::MissingThirdParty),
        ("target_dependent_werror.log", FailureCategory::TargetDependentWerror),
        ("arch_platform_specific.log", FailureCategory::ArchPlatformSpecific),
        ("incompatible_options.log", FailureCategory::IncompatibleOptions),
        ("suspected_compiler_bug.log", FailureCategory::SuspectedCompilerBug),
    ];
    let mut correct = 0;
    let mut misses = Vec::new();
    for (file, expected) in table {
        let log = std::fs::read_to_string(fixtures().join("build_logs").join(file)).map_err(|e| e.to_string())?;
        // Configure-stage logs go in the first slot, everything else in the second.
        let (configure, build) = if log.contains("CMake Error") { (log.as_str(), "") } else { ("", log.as_str()) };
        let first = classify_failure(configure, build);
        let again = classify_failure(configure, build);
        if first != again {
            misses.push(format!("{file}: nondeterministic"));
        } else if first.category != expected || first.matched_signals.is_empty() {
            misses.push(format!("{file}: {:?}", first.category));
        } else {
            correct += 1;
        }
    }
    if misses.is_empty() {
        Ok(format!("{correct}/6"))
    } else {
        Err(format!("{correct}/6; {}", misses.join("; ")))
    }
}

fn preload_resolution() -> Check {
    let root = fixtures().join("preload");
    let tests = root.join("tests");
    let report = scan_sources(&tests, &default_extensions()).map_err(|e| e.to_string())?;
    let literals: Vec<&str> = report.path_literals.iter().map(|l| l.literal.as_str()).collect();
    if literals.contains(&"Stack overflow prevented.") {
        return Err("message string kept as a path literal".into());
    }
    let mappings = resolve_preloads(&report.path_literals, &[tests.clone(), root.clone()]);
    let canon = |p: PathBuf| p.canonicalize().map_err(|e| e.to_string());
    let mut expected = vec![
        PreloadMapping {
            src: canon(tests.join("data/test.xml"))?,
            dst: "data/test.xml".into(),
        },
        PreloadMapping {
            src: canon(root.join("resources/input/input.xml"))?,
            dst: "../resources/input/input.xml".into(),
        },
    ];
    expected.sort_by(|a, b| a.dst.cmp(&b.dst));
    let mut got = mappings.clone();
    got.sort_by(|a, b| a.dst.cmp(&b.dst));
    if mappings.len() != 2 || got != expected {
        return Err(format!("got {mappings:?}"));
    }
    for m in &mappings {
        if !m.to_arg().starts_with("--preload-file ") || !m.to_arg().ends_with(&format!("@{}", m.dst)) {
            return Err(format!("bad argument {}", m.to_arg()));
        }
    }
    Ok("2 mappings, message string dropped".into())
}

fn report_round_trip() -> Check {
    let dir = fixtures().join("reports");
    let generated = common::fixture_reports();
    if std::env::var_os("WASMDIFF_BLESS").is_some() {
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        for (name, report) in &generated {
            std::fs::write(dir.join(format!("{name}.json")), to_json(report).unwrap()).map_err(|e| e.to_string())?;
        }
    }
    let mut checked = 0;
    for (name, report) in &generated {
        let first = to_json(report).map_err(|e| e.to_string())?;
        let second = to_json(&parse_report(&first).map_err(|e| format!("{name}: {e}"))?).map_err(|e| e.to_string())?;
        if first != second {
            return Err(format!("{name}: re-emitted JSON differs"));
        }
        checked += 1;
    }
    let mut stored: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    stored.sort();
    if stored.is_empty() {
        return Err("no stored report fixtures".into());
    }
    for path in &stored {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let parsed = parse_report(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if to_json(&parsed).map_err(|e| e.to_string())? != text {
            return Err(format!("{}: re-emitted JSON differs", path.display()));
        }
        checked += 1;
    }
    Ok(format!("{checked} reports byte-identical"))
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("discrepancy metric matches brute-force oracle", discrepancy_oracle),
        ("flag inference on single-construct snippets", flag_inference),
        ("sanitizer laws", sanitizer_laws),
        ("build-log classifier regression", classifier_regression),
        ("preload resolution on the xml test layout", preload_resolution),
        ("report JSON round-trip", report_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name} ({detail})"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
