use std::path::Path;
use std::process::{Command, Output};

#[path = "../../core/tests/common/sandbox.rs"]
mod sandbox;

use sandbox::Sandbox;

fn wasmdiff(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wasmdiff"))
        .current_dir(dir)
        .env_remove("WASMDIFF_TOOLCHAIN_ROOT")
        .env_remove("EMSDK")
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn project(dir: &Path, files: &[(&str, &str)]) -> std::path::PathBuf {
    std::fs::create_dir_all(dir.join("src")).unwrap();
    std::fs::write(dir.join("src/CMakeLists.txt"), "project(p C)\n").unwrap();
    for (name, text) in files {
        std::fs::write(dir.join("src").join(name), text).unwrap();
    }
    let cfg = dir.join("project.toml");
    std::fs::write(
        &cfg,
        "name = \"p\"\nsource_root = \"src\"\nbuild_script = \"CMakeLists.txt\"\nworkdir = \"work\"\n",
    )
    .unwrap();
    cfg
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&wasmdiff(dir.path(), &["--help"])), 0);
    assert_eq!(code(&wasmdiff(dir.path(), &["--version"])), 0);
}

#[test]
fn usage_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&wasmdiff(dir.path(), &["--bogus", "run"])), 3);
    assert_eq!(code(&wasmdiff(dir.path(), &["analyze"])), 3, "config is required");
    assert_eq!(code(&wasmdiff(dir.path(), &["-c", "missing.toml", "analyze"])), 3);
    assert_eq!(code(&wasmdiff(dir.path(), &["--jobs", "0", "-c", "x.toml", "run"])), 3);
}

#[test]
fn analyze_reports_exceptions_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = project(
        dir.path(),
        &[("main.cpp", "int main() { try { throw 1; } catch (int) {} return 0; }\n")],
    );
    let out = wasmdiff(dir.path(), &["-c", cfg.to_str().unwrap(), "--format", "json", "analyze"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["uses_exceptions"], true);
    assert_eq!(v["uses_threads"], false);
    assert!(dir.path().join("work/stages/analysis.json").is_file());
}

#[test]
fn empty_source_tree_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = project(dir.path(), &[]);
    let out = wasmdiff(dir.path(), &["-c", cfg.to_str().unwrap(), "analyze"]);
    assert_eq!(code(&out), 3);
    assert!(!out.stderr.is_empty());
}

#[test]
fn overrides_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = project(dir.path(), &[("a.c", "int main(void) { return 0; }\n")]);
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&wasmdiff(dir.path(), &["-c", cfg, "--set", "timeout_secs=0", "analyze"])), 3);
    assert_eq!(code(&wasmdiff(dir.path(), &["-c", cfg, "--set", "timeout_secs=5", "analyze"])), 0);
    assert_eq!(code(&wasmdiff(dir.path(), &["-c", cfg, "--set", "novalue", "analyze"])), 3);
}

#[test]
fn plan_shows_wasm_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = project(dir.path(), &[("t.cpp", "#include <thread>\nint main() { std::thread t([]{}); t.join(); }\n")]);
    let out = wasmdiff(dir.path(), &["-c", cfg.to_str().unwrap(), "plan", "--target", "wasm"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("-pthread"), "{text}");
    assert!(text.contains("-sSTACK_SIZE=1048576"), "{text}");

    let manual = wasmdiff(dir.path(), &["-c", cfg.to_str().unwrap(), "--manual-mode", "plan", "--target", "wasm"]);
    assert!(!String::from_utf8_lossy(&manual.stdout).contains("-pthread"));
}

#[test]
fn testing_an_unbuilt_target_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = project(dir.path(), &[("a.c", "int main(void) { return 0; }\n")]);
    let out = wasmdiff(dir.path(), &["-c", cfg.to_str().unwrap(), "test", "--target", "native"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_wasm_toolchain_exits_three() {
    if Command::new("emcc").arg("--version").output().is_ok() {
        eprintln!("skipping: a real emcc is on PATH");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = project(dir.path(), &[("a.c", "int main(void) { return 0; }\n")]);
    let out = wasmdiff(
        dir.path(),
        &["-c", cfg.to_str().unwrap(), "--toolchain-root", "/nonexistent", "run"],
    );
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("emcc"));
}

#[test]
fn run_exit_codes_follow_the_verdict() {
    if let Some(why) = sandbox::unavailable() {
        eprintln!("skipping: {why}");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let sb = Sandbox::create(dir.path());
    let root = sb.toolchain.to_str().unwrap();
    for (scenario, expected, count) in [("equivalent", 0, 0), ("errno", 1, 1), ("broken", 2, 0)] {
        let cfg = sb.config(scenario, &format!("work-{scenario}"));
        let out = wasmdiff(
            dir.path(),
            &["-c", cfg.to_str().unwrap(), "--toolchain-root", root, "--format", "json", "run"],
        );
        assert_eq!(code(&out), expected, "{scenario}: {}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["discrepancies"]["count"], count, "{scenario}");
        let workdir = dir.path().join(format!("work-{scenario}"));
        assert!(workdir.join("report.json").is_file() && workdir.join("report.md").is_file());
    }
    let md = std::fs::read_to_string(dir.path().join("work-errno/report.md")).unwrap();
    assert!(md.contains("NOT EQUIVALENT (Σ = 1)"), "{md}");
}

#[test]
fn stage_commands_then_diff() {
    if let Some(why) = sandbox::unavailable() {
        eprintln!("skipping: {why}");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let sb = Sandbox::create(dir.path());
    let cfg = sb.config("errno", "work");
    let base = ["-c", cfg.to_str().unwrap(), "--toolchain-root", sb.toolchain.to_str().unwrap()];
    for stage in [&["build"][..], &["test"][..]] {
        let args: Vec<&str> = base.iter().chain(stage).copied().collect();
        let out = wasmdiff(dir.path(), &args);
        assert_eq!(code(&out), 0, "{stage:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let args: Vec<&str> = base.iter().copied().chain(["diff"]).collect();
    let out = wasmdiff(dir.path(), &args);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("Different standard libraries"));
}
