use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use wasmdiff::pipeline::{exit_code, Pipeline, PipelineError, PipelineOptions, EXIT_BUILD_FAILED, EXIT_USAGE};
use wasmdiff::report::{emit_report, ReportFormat};
use wasmdiff::{load_project_config_with, ConstructReport, TargetKind, Toolchain};

mod render;

/// Build a C/C++ project natively and to WebAssembly, run its tests on
/// both, and report tests whose outcome differs.
#[derive(Debug, Parser)]
#[command(name = "wasmdiff", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Project config file (TOML).
    #[arg(short = 'c', long = "config", global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set timeout_secs=60`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_key_value, global = true)]
    overrides: Vec<(String, String)>,
    #[arg(long, value_enum, default_value_t = Format::Markdown, global = true)]
    format: Format,
    /// Concurrent test processes; also passed to the build tool.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..), global = true)]
    jobs: u32,
    /// Toolchain defaults for the wasm build: no inferred settings, memory
    /// policy or preloads.
    #[arg(long, global = true)]
    manual_mode: bool,
    /// Per-test budget in seconds, overriding the config.
    #[arg(long, value_name = "SECS", value_parser = clap::value_parser!(u64).range(1..), global = true)]
    timeout: Option<u64>,
    /// Emscripten install root; defaults to $WASMDIFF_TOOLCHAIN_ROOT, then $EMSDK.
    #[arg(long, value_name = "PATH", global = true)]
    toolchain_root: Option<PathBuf>,
    /// Command that runs wasm test glue code.
    #[arg(long, value_name = "CMD", default_value = "node", global = true)]
    host_runtime: String,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Markdown,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Targets {
    Native,
    Wasm,
    Both,
}

impl Targets {
    fn kinds(self) -> Vec<TargetKind> {
        match self {
            Targets::Native => vec![TargetKind::Native],
            Targets::Wasm => vec![TargetKind::Wasm],
            Targets::Both => TargetKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan sources for constructs that need toolchain settings.
    Analyze,
    /// Derive the configure and build commands for each target.
    Plan {
        #[arg(long, value_enum, default_value_t = Targets::Both)]
        target: Targets,
    },
    /// Configure and build.
    Build {
        #[arg(long, value_enum, default_value_t = Targets::Both)]
        target: Targets,
    },
    /// Discover and run the tests of finished builds.
    Test {
        #[arg(long, value_enum, default_value_t = Targets::Both)]
        target: Targets,
    },
    /// Pair stored test outcomes and write the report.
    Diff,
    /// Every stage in order.
    Run,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err("empty key".into());
    }
    Ok((k.to_string(), v.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE as u8),
            };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<PipelineError>()
                .map_or(EXIT_USAGE, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn pipeline(g: &Global) -> anyhow::Result<Pipeline> {
    let config = g.config.as_ref().context("a project config is required (-c/--config)")?;
    let project = load_project_config_with(config, &g.overrides)
        .with_context(|| format!("loading {}", config.display()))?;
    let root = g.toolchain_root.clone().or_else(|| project.toolchain_root.clone());
    let options = PipelineOptions {
        manual_mode: g.manual_mode,
        jobs: g.jobs as usize,
        timeout_secs: g.timeout,
        toolchain: Toolchain::discover(root, Some(g.host_runtime.clone())),
    };
    Ok(Pipeline::new(project, options))
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    let g = &cli.global;
    let p = pipeline(g)?;
    let json = matches!(g.format, Format::Json);
    match &cli.command {
        Command::Analyze => {
            let report: ConstructReport = p.analyze()?;
            if json {
                print_json(&report)?;
            } else {
                print!("{}", render::analysis(&report));
            }
            Ok(0)
        }
        Command::Plan { target } => {
            let plans = target.kinds().into_iter().map(|t| p.plan(t)).collect::<Result<Vec<_>, _>>()?;
            if json {
                print_json(&plans)?;
            } else {
                plans.iter().for_each(|plan| print!("{}", render::plan(plan)));
            }
            Ok(0)
        }
        Command::Build { target } => {
            let mut code = 0;
            let mut records = Vec::new();
            for t in target.kinds() {
                let rec = p.build(t)?;
                if !rec.result.succeeded {
                    code = EXIT_BUILD_FAILED;
                }
                records.push(rec);
            }
            if json {
                let results: Vec<_> = records.iter().map(|r| &r.result).collect();
                print_json(&results)?;
            } else {
                records.iter().for_each(|r| print!("{}", render::build(r)));
            }
            Ok(code)
        }
        Command::Test { target } => {
            let records = target.kinds().into_iter().map(|t| p.test(t)).collect::<Result<Vec<_>, _>>()?;
            if json {
                print_json(&records)?;
            } else {
                records.iter().for_each(|r| print!("{}", render::tests(r)));
            }
            Ok(0)
        }
        Command::Diff => {
            let report = p.diff()?;
            print!("{}", emit_report(&report, g.format.into())?);
            Ok(exit_code(&report))
        }
        Command::Run => {
            let report = p.run()?;
            print!("{}", emit_report(&report, g.format.into())?);
            Ok(exit_code(&report))
        }
    }
}
