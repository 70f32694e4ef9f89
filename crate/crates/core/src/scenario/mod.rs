//! Config-driven runs: JSON scenario files in, trajectory tables, event logs
//! and reports out.
//!
//! Every artifact is a function of the config alone, so repeated runs are
//! byte-identical. A run is computed completely in memory before anything
//! is written.

mod analyses;
mod build;
mod config;
mod output;
mod run;
mod sweep;

pub use build::{build_setup, Setup};
pub use config::{
    AnalysisKind, AnalysisOptions, ComplexSpec, DynamicsMode, FactorSpec, InitialSpec, MatrixSpec,
    ModelSpec, PointerKind, ScenarioConfig, TimeSpec, MAX_TOTAL_DIM,
};
pub use output::{
    events_jsonl, fmt_f64, trajectory_csv, write_artifacts, COMPARISON_FILE, EVENTS_FILE,
    REPORT_FILE, SUMMARY_FILE, TRAJECTORY_FILE, TRAJECTORY_HEADER,
};
pub use run::{
    compare_dynamics, execute, run_scenario, ComparisonSummary, IntegrationSummary,
    ResonanceAlignment, RunOutput, RunReport,
};
pub use sweep::{parse_value, sweep, sweep_configs, SweepEntry, SweepSummary, SUMMARY_HEADER};

use std::path::{Path, PathBuf};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "SBL_OUT";

/// Output directory of a run: `flag` when given, otherwise the config's
/// output name below `env_root` (or below `out/` when that is unset too).
pub fn resolve_output_dir(
    cfg_output: &str,
    flag: Option<&Path>,
    env_root: Option<&Path>,
) -> PathBuf {
    match (flag, env_root) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Some(root)) => root.join(cfg_output),
        (None, None) => Path::new("out").join(cfg_output),
    }
}
