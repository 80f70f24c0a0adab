//! Synthetic inputs for the benchmarks.

use std::fs;
use std::io;
use std::path::Path;

use wasmdiff::{TargetKind, TestOutcome, TestPairing, Termination};

/// `n` complete pairings where every `every`-th test diverges with an errno
/// mismatch on the wasm side.
pub fn pairings(n: usize, every: usize) -> Vec<TestPairing> {
    (0..n)
        .map(|i| {
            let name = format!("test_{i:05}");
            let diverges = every > 0 && i % every == 0;
            let (wasm_end, wasm_out) = if diverges {
                (Termination::Exited(1), "No such file or directory [44]\n")
            } else {
                (Termination::Exited(0), "ok\n")
            };
            let native_out = if diverges { "No such file or directory [2]\n" } else { "ok\n" };
            TestPairing {
                native: Some(TestOutcome::new(&name, TargetKind::Native, Termination::Exited(0), native_out.as_bytes(), b"", 1)),
                wasm: Some(TestOutcome::new(&name, TargetKind::Wasm, wasm_end, wasm_out.as_bytes(), b"", 1)),
                test_name: name,
            }
        })
        .collect()
}

const UNIT: &str = r#"#include <stdexcept>
#include <string>

typedef int (*handler_t)(const char *);

static const char *FIXTURES[] = {"data/input.txt", "../shared/config.ini", 0};

long double scale(long double x) { return x * 1.5L; }

int check(int v) {
    if (v < 0) {
        throw std::invalid_argument("negative");
    }
    return v * 2;
}

void log_line(const char *msg) { (void)msg; }

handler_t as_handler() { return (handler_t) log_line; }
"#;

/// Writes `files` C++ sources (spread over subdirectories) under `root`.
pub fn source_tree(root: &Path, files: usize) -> io::Result<()> {
    for i in 0..files {
        let dir = root.join(format!("module_{:02}", i % 16));
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(format!("unit_{i:04}.cpp")), UNIT)?;
    }
    Ok(())
}

/// A flag list of length `n` mixing kept and rewritten flags.
pub fn flags(n: usize) -> Vec<String> {
    const POOL: &[&str] = &[
        "-O2", "-Wall", "-Werror", "-march=native", "-fstack-protector-strong", "-DNDEBUG", "-g", "-mtune=generic",
    ];
    (0..n).map(|i| POOL[i % POOL.len()].to_string()).collect()
}
