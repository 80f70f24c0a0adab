//! A throwaway CMake project plus a stand-in wasm toolchain. The fake
//! `emcmake` adds `-DWASMDIFF_FAKE_WASM=ON`, which makes the project emit a
//! node script with an empty `.wasm` sibling instead of compiling anything.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

pub const SCENARIOS: &[&str] = &["equivalent", "errno", "broken"];

const CMAKE_LISTS: &str = r#"cmake_minimum_required(VERSION 3.13)
if(WASMDIFF_FAKE_WASM)
  project(demo NONE)
else()
  project(demo C)
endif()
enable_testing()
set(CMAKE_C_FLAGS "${CMAKE_C_FLAGS} -Wall -Werror")
set(SCENARIO "equivalent" CACHE STRING "")

if(NOT WASMDIFF_FAKE_WASM)
  add_executable(test_open test_open.c)
  target_compile_definitions(test_open PRIVATE SCENARIO_${SCENARIO})
  add_test(NAME test_open COMMAND test_open)
elseif(SCENARIO STREQUAL "broken")
  add_custom_target(poller ALL COMMAND sh ${CMAKE_SOURCE_DIR}/wasm/broken.sh)
else()
  configure_file(${CMAKE_SOURCE_DIR}/wasm/${SCENARIO}.js ${CMAKE_BINARY_DIR}/test_open.js COPYONLY)
  file(WRITE ${CMAKE_BINARY_DIR}/test_open.wasm "")
  add_test(NAME test_open COMMAND node ${CMAKE_BINARY_DIR}/test_open.js)
endif()
"#;

const TEST_OPEN: &str = r#"#include <errno.h>
#include <stdio.h>
#include <string.h>

int main(void) {
#ifdef SCENARIO_errno
    FILE *f = fopen("missing/none.txt", "r");
    if (f == NULL) {
        printf("%s [%d]\n", strerror(errno), errno);
        return errno == ENOENT ? 0 : 1;
    }
    fclose(f);
    return 1;
#else
    puts("ok");
    return 0;
#endif
}
"#;

fn write_exec(path: &Path, body: &str) {
    fs::write(path, body).unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(path, fs::Permissions::from_mode(0o755)).unwrap();
    }
}

fn on_path(tool: &str) -> bool {
    std::env::var_os("PATH")
        .map(|p| std::env::split_paths(&p).any(|d| d.join(tool).is_file()))
        .unwrap_or(false)
}

/// Why the sandbox cannot run here, if it cannot.
pub fn unavailable() -> Option<String> {
    ["cmake", "cc", "node", "sh"]
        .into_iter()
        .find(|t| !on_path(t))
        .map(|t| format!("`{t}` not on PATH"))
}

pub struct Sandbox {
    pub root: PathBuf,
    pub source: PathBuf,
    pub toolchain: PathBuf,
}

impl Sandbox {
    pub fn create(root: &Path) -> Sandbox {
        let source = root.join("project");
        fs::create_dir_all(source.join("wasm")).unwrap();
        fs::write(source.join("CMakeLists.txt"), CMAKE_LISTS).unwrap();
        fs::write(source.join("test_open.c"), TEST_OPEN).unwrap();
        fs::write(
            source.join("wasm/broken.sh"),
            "echo \"poller.c:1:10: fatal error: 'sys/epoll.h' file not found\" >&2\nexit 1\n",
        )
        .unwrap();
        fs::write(source.join("wasm/equivalent.js"), "console.log('ok');\n").unwrap();
        fs::write(
            source.join("wasm/errno.js"),
            "console.log('No such file or directory [44]');\nprocess.exit(1);\n",
        )
        .unwrap();

        let toolchain = root.join("toolchain");
        fs::create_dir_all(&toolchain).unwrap();
        write_exec(&toolchain.join("emcc"), "#!/bin/sh\necho 'emcc (fake) 0.0.1'\n");
        write_exec(&toolchain.join("emcmake"), "#!/bin/sh\nexec \"$@\" -DWASMDIFF_FAKE_WASM=ON\n");
        write_exec(&toolchain.join("emmake"), "#!/bin/sh\nexec \"$@\"\n");
        Sandbox {
            root: root.to_path_buf(),
            source,
            toolchain,
        }
    }

    /// Writes a config for `scenario` and returns its path.
    pub fn config(&self, scenario: &str, workdir: &str) -> PathBuf {
        let path = self.root.join(format!("{scenario}-{workdir}.toml"));
        fs::write(
            &path,
            format!(
                "name = \"{scenario}\"\n\
                 source_root = \"project\"\n\
                 build_script = \"CMakeLists.txt\"\n\
                 workdir = \"{workdir}\"\n\
                 test_enable_options = [\"SCENARIO={scenario}\"]\n\
                 timeout_secs = 30\n"
            ),
        )
        .unwrap();
        path
    }

    /// Relative path and contents of every file under the source tree.
    pub fn source_snapshot(&self) -> Vec<(PathBuf, Vec<u8>)> {
        fn walk(dir: &Path, base: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
            for entry in fs::read_dir(dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    walk(&path, base, out);
                } else {
                    out.push((path.strip_prefix(base).unwrap().to_path_buf(), fs::read(&path).unwrap()));
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.source, &self.source, &mut out);
        out.sort();
        out
    }
}
