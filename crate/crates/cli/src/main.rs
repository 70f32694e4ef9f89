//! `sbl`: run, sweep and compare bipartite Schmidt-dynamics scenarios.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sbl_core::exec::Execution;
use sbl_core::scenario::{
    compare_dynamics, parse_value, resolve_output_dir, run_scenario, sweep, RunReport,
    ScenarioConfig, OUTPUT_ROOT_ENV,
};
use sbl_core::Error;

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "sbl", version, about = "Schmidt-branch dynamics scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (default: $SBL_OUT/<name>, else out/<name>).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the config's global seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario.
    Run { config: PathBuf },
    /// Run a scenario once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// Dotted path into the config, e.g. `model.strength`.
        #[arg(long, value_name = "PATH")]
        param: String,
        /// Comma-separated values; each is read as JSON, else as a string.
        #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
        values: String,
    },
    /// Run exact propagation and the Schmidt equations side by side.
    Compare { config: PathBuf },
}

struct Failure {
    code: u8,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::Io(_) => EXIT_IO,
            Error::Config { .. } => EXIT_INVALID,
            _ => EXIT_NUMERICAL,
        };
        Failure { code, error }
    }
}

/// Errors while reading the config are all input problems.
fn invalid(error: Error) -> Failure {
    Failure {
        code: EXIT_INVALID,
        error,
    }
}

fn env_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::from_path(path).map_err(invalid)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn read_template(path: &Path) -> Result<serde_json::Value, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(Error::Io(format!("{}: {e}", path.display()))))?;
    serde_json::from_str(&text).map_err(|e| {
        invalid(Error::Config {
            path: "<root>".into(),
            message: e.to_string(),
        })
    })
}

/// Split on commas outside brackets, braces and quotes.
fn split_values(list: &str) -> Vec<String> {
    let mut out = Vec::new();
    let (mut depth, mut quoted, mut cur) = (0i32, false, String::new());
    for ch in list.chars() {
        match ch {
            '"' => quoted = !quoted,
            '[' | '{' if !quoted => depth += 1,
            ']' | '}' if !quoted => depth -= 1,
            ',' if !quoted && depth == 0 => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur);
    out.retain(|s| !s.trim().is_empty());
    out
}

fn print_report(dir: &Path, r: &RunReport) {
    let events: usize = r.event_counts.values().sum();
    println!(
        "{}: {} points, final entropy {:.6}, {} events, max reconstruction error {:.2e} -> {}",
        r.name,
        r.points,
        r.final_entropy,
        events,
        r.max_reconstruction_error,
        dir.display()
    );
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let root = env_root();
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config, cli.seed)?;
            let dir = resolve_output_dir(cfg.output_name(), cli.out.as_deref(), root.as_deref());
            let report = run_scenario(&cfg, &dir)?;
            print_report(&dir, &report);
        }
        Command::Compare { config } => {
            let cfg = load(&config, cli.seed)?;
            let dir = resolve_output_dir(cfg.output_name(), cli.out.as_deref(), root.as_deref());
            let report = compare_dynamics(&cfg, &dir)?;
            print_report(&dir, &report);
            if let Some(c) = &report.comparison {
                println!(
                    "min fidelity {:.12} (outside windows {:.12}), max |dp| {:.3e} (outside windows {:.3e})",
                    c.min_fidelity,
                    c.min_fidelity_outside_windows,
                    c.max_p_diff,
                    c.max_p_diff_outside_windows
                );
            }
        }
        Command::Sweep {
            config,
            param,
            values,
        } => {
            let template = read_template(&config)?;
            let values: Vec<_> = split_values(&values)
                .iter()
                .map(|v| parse_value(v))
                .collect();
            let name = ["output", "name"]
                .iter()
                .find_map(|k| template.get(*k).and_then(|v| v.as_str()))
                .unwrap_or("sweep")
                .to_string();
            let dir = resolve_output_dir(&name, cli.out.as_deref(), root.as_deref());
            let summary = sweep(
                &template,
                &param,
                &values,
                cli.seed,
                &dir,
                Execution::Parallel,
            )?;
            for e in &summary.entries {
                print_report(&dir.join(&e.dir), &e.report);
            }
            println!(
                "{} runs, summary in {}",
                summary.entries.len(),
                dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = execute(cli);
    eprintln!("wall time {:.3} s", started.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_split_outside_brackets() {
        assert_eq!(split_values("0,0.1, 0.2"), vec!["0", "0.1", " 0.2"]);
        assert_eq!(split_values("[2,2],[2,3]"), vec!["[2,2]", "[2,3]"]);
        assert_eq!(split_values(r#""a,b",c"#), vec![r#""a,b""#, "c"]);
        assert!(split_values("").is_empty());
    }

    #[test]
    fn exit_codes_follow_error_class() {
        let code = |e: Error| Failure::from(e).code;
        assert_eq!(
            code(Error::Config {
                path: "x".into(),
                message: String::new()
            }),
            2
        );
        assert_eq!(
            code(Error::Resonance {
                t: 0.0,
                a: 0,
                b: 1,
                gap: 0.0
            }),
            3
        );
        assert_eq!(code(Error::Io("disk".into())), 1);
    }
}
