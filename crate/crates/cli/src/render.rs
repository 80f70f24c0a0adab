//! Plain-text summaries for the stage subcommands.

use std::fmt::Write as _;

use wasmdiff::pipeline::{BuildRecord, TestRecord};
use wasmdiff::{BuildPlan, Construct, ConstructReport};

pub fn analysis(r: &ConstructReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scanned {} files under {}", r.scanned_files, r.root.display());
    for c in Construct::ALL {
        let _ = write!(s, "{:<26} {}", format!("{c:?}"), r.uses(c));
        if let Some(first) = r.evidence.get(&c).and_then(|v| v.first()) {
            let _ = write!(s, "  ({first})");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "uses_exceptions={} casts_function_pointers={} uses_threads={} uses_long_double={}",
        r.uses_exceptions, r.casts_function_pointers, r.uses_threads, r.uses_long_double);
    if !r.path_literals.is_empty() {
        let _ = writeln!(s, "path literals:");
        for lit in &r.path_literals {
            let _ = writeln!(s, "  {:?} at {}:{}", lit.literal, lit.file, lit.line);
        }
    }
    for issue in &r.errors {
        let _ = writeln!(s, "skipped {}: {}", issue.file, issue.message);
    }
    s
}

pub fn plan(p: &BuildPlan) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[{}] build dir {}", p.target, p.build_dir.display());
    let _ = writeln!(s, "  configure: {}", p.configure);
    let _ = writeln!(s, "  build:     {}", p.build);
    if !p.settings.compile_flags().is_empty() {
        let _ = writeln!(s, "  compile flags: {}", p.settings.compile_flags().join(" "));
    }
    if !p.settings.link_flags().is_empty() {
        let _ = writeln!(s, "  link flags:    {}", p.settings.link_flags().join(" "));
    }
    for lit in &p.unresolved_literals {
        let _ = writeln!(s, "  unresolved literal {:?} ({}:{})", lit.literal, lit.file, lit.line);
    }
    for note in &p.notes {
        let _ = writeln!(s, "  note: {note}");
    }
    s
}

pub fn build(r: &BuildRecord) -> String {
    let mut s = String::new();
    let verdict = if r.result.succeeded { "built" } else { "FAILED" };
    let _ = writeln!(s, "[{}] {verdict} in {} ms (logs in {})", r.plan.target, r.result.duration_ms, r.plan.log_dir().display());
    if let Some(f) = &r.result.failure {
        let _ = writeln!(s, "  category: {}", f.category.label());
        for ev in &f.matched_signals {
            let _ = writeln!(s, "  {}: {}", ev.pattern, ev.excerpt);
        }
    }
    s
}

pub fn tests(r: &TestRecord) -> String {
    let mut s = String::new();
    let passed = r.tests.iter().filter(|t| t.outcome.bit() == 1).count();
    let _ = writeln!(s, "[{}] {passed}/{} passed", r.target, r.tests.len());
    for t in &r.tests {
        let _ = writeln!(s, "  {:<32} {:?} ({} ms)", t.artifact.test_name, t.outcome.status, t.outcome.duration_ms);
    }
    s
}
