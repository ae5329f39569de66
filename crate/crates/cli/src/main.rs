// SPDX-License-Identifier: Apache-2.0

//! `partsan` command-line runner.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use partsan::asan_shadow::Granularity;
use partsan::harness::generate::RANDOM_CLEAN;
use partsan::harness::{
    builtin, emit_report, load_scenario, run_scenario, Overrides, ReportFormat, Scenario, Verdict,
};
use partsan::sched::Factor;
use partsan::syscall_annotations::parse_template;

#[derive(Parser)]
#[command(
    name = "partsan",
    version,
    about = "Partition simulator with sanitizer runtimes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file or built-in scenario.
    Run {
        /// Path to a scenario JSON file, or the name of a built-in.
        scenario: String,
        /// Global timer slowdown factor, an integer or `p/q`.
        #[arg(long)]
        slowdown_factor: Option<Factor>,
        /// Shadow granularity in bytes (1, 2, 4, 8 or 16).
        #[arg(long, value_parser = parse_granularity)]
        granularity: Option<Granularity>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "text")]
        report: ReportFormat,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Let GET_MY_ID from the main context return INVALID_MODE.
        #[arg(long)]
        legacy_get_my_id: bool,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Run every built-in scenario; exits 0 iff every verdict is MATCH.
    RunAll {
        #[arg(long, default_value = "text")]
        report: ReportFormat,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write one report per scenario into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse an annotated syscall template and print it as JSON.
    ParseTemplate { file: PathBuf },
    /// Write every built-in scenario as a JSON file into a directory.
    ExportScenarios { dir: PathBuf },
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    let bytes: u64 = s.parse().map_err(|e| format!("{e}"))?;
    Granularity::new(bytes).map_err(|e| e.to_string())
}

fn all_names() -> impl Iterator<Item = &'static str> {
    partsan::harness::BUILTIN_NAMES
        .iter()
        .copied()
        .chain(std::iter::once(RANDOM_CLEAN))
}

fn resolve(scenario: &str, seed: u64) -> Result<Scenario> {
    let path = Path::new(scenario);
    if path.exists() {
        return Ok(load_scenario(path)?);
    }
    builtin(scenario, seed)
        .ok_or_else(|| anyhow!("`{scenario}` is neither a file nor a built-in scenario"))
}

/// Write via a temporary sibling and rename, so readers never see a partial report.
fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn extension(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Text => "txt",
        ReportFormat::Json => "json",
    }
}

fn run_all(format: ReportFormat, seed: u64, out: Option<&Path>) -> Result<bool> {
    let names: Vec<&str> = all_names().collect();
    let results: Vec<Result<(String, Verdict)>> = thread::scope(|s| {
        let handles: Vec<_> = names
            .iter()
            .map(|&name| {
                s.spawn(move || -> Result<(String, Verdict)> {
                    let scenario = builtin(name, seed).expect("listed");
                    let report = run_scenario(&scenario, seed)?;
                    Ok((emit_report(&report, format), report.verdict))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(anyhow!("scenario thread panicked")))
            })
            .collect()
    });

    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut stdout = std::io::stdout().lock();
    let mut all_match = true;
    for (name, result) in names.iter().zip(results) {
        let (text, verdict) = result.with_context(|| format!("running {name}"))?;
        all_match &= verdict == Verdict::Match;
        match out {
            Some(dir) => {
                write_atomic(&dir.join(format!("{name}.{}", extension(format))), &text)?;
                writeln!(stdout, "{name}: {}", verdict.name())?;
            }
            None => stdout.write_all(text.as_bytes())?,
        }
    }
    Ok(all_match)
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            slowdown_factor,
            granularity,
            seed,
            report,
            out,
            legacy_get_my_id,
        } => {
            let mut scenario = resolve(&scenario, seed)?;
            Overrides {
                slowdown_factor,
                granularity,
                legacy_get_my_id,
            }
            .apply(&mut scenario);
            scenario.plan()?;
            let result = run_scenario(&scenario, seed)?;
            let text = emit_report(&result, report);
            match out {
                Some(path) => write_atomic(&path, &text)?,
                None => print!("{text}"),
            }
            Ok(if result.verdict == Verdict::Match {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::ListScenarios => {
            for name in all_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::RunAll { report, seed, out } => Ok(if run_all(report, seed, out.as_deref())? {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        }),
        Command::ParseTemplate { file } => {
            let text =
                fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let spec = parse_template(&text)?;
            println!("{}", serde_json::to_string_pretty(&spec)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportScenarios { dir } => {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            for scenario in partsan::harness::builtin_scenarios() {
                let path = dir.join(format!("{}.json", scenario.name));
                write_atomic(&path, &format!("{}\n", scenario.to_json()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
