use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ScenarioConfig;
use super::output::{fmt_f64, write_artifacts, SUMMARY_FILE};
use super::run::{execute, RunReport};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};

pub const SUMMARY_HEADER: &str =
    "index,value,seed,final_entropy,min_gap,max_reconstruction_error,events";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub index: usize,
    pub value: Value,
    pub seed: u64,
    /// Directory of this run below the sweep directory.
    pub dir: String,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub param: String,
    pub entries: Vec<SweepEntry>,
}

impl SweepSummary {
    pub fn csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for e in &self.entries {
            let value = match &e.value {
                Value::String(s) => s.clone(),
                v => v.to_string(),
            };
            let events: usize = e.report.event_counts.values().sum();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.index,
                csv_field(&value),
                e.seed,
                fmt_f64(e.report.final_entropy),
                e.report.min_gap.map_or(String::new(), fmt_f64),
                fmt_f64(e.report.max_reconstruction_error),
                events
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Slot addressed by a dotted path; numeric segments index arrays.
fn lookup<'a>(root: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    let mut cur = root;
    for seg in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(seg)?,
            Value::Array(items) => items.get_mut(seg.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

/// Read a `--values` entry: JSON when it parses, a plain string otherwise.
pub fn parse_value(text: &str) -> Value {
    serde_json::from_str(text.trim()).unwrap_or_else(|_| Value::String(text.trim().to_string()))
}

/// One config per value, with `param` replaced and the seed set to
/// `base_seed ^ index`. Every config is validated before anything runs.
pub fn sweep_configs(
    template: &Value,
    param: &str,
    values: &[Value],
    base_seed: Option<u64>,
) -> Result<Vec<(ScenarioConfig, Value)>> {
    let mut probe = template.clone();
    if param.is_empty() || lookup(&mut probe, param).is_none() {
        return Err(Error::config(
            param,
            "parameter path does not exist in the config",
        ));
    }
    let base = match base_seed {
        Some(s) => s,
        None => match template.get("seed") {
            None => 0,
            Some(v) => v
                .as_u64()
                .ok_or_else(|| Error::config("seed", "must be a non-negative integer"))?,
        },
    };
    let mut out = Vec::with_capacity(values.len());
    for (index, value) in values.iter().enumerate() {
        let mut v = template.clone();
        *lookup(&mut v, param).expect("checked above") = value.clone();
        v["seed"] = Value::from(base ^ index as u64);
        let cfg = ScenarioConfig::from_value(v).map_err(|e| match e {
            Error::Config { path, message } => Error::Config {
                path,
                message: format!("{message} (sweep value {index}: {value})"),
            },
            other => other,
        })?;
        out.push((cfg, value.clone()));
    }
    Ok(out)
}

/// Run every value of a sweep and write each run below `out_dir` in
/// `run-NNN`, plus `summary.csv` and `summary.json`. Runs may execute
/// concurrently; nothing is written unless all of them succeed.
pub fn sweep(
    template: &Value,
    param: &str,
    values: &[Value],
    base_seed: Option<u64>,
    out_dir: &Path,
    exec: Execution,
) -> Result<SweepSummary> {
    let configs = sweep_configs(template, param, values, base_seed)?;
    let outputs = try_map_indexed(exec, configs.len(), |i| execute(&configs[i].0))?;
    let mut files = Vec::new();
    let mut entries = Vec::with_capacity(outputs.len());
    for (index, (out, (cfg, value))) in outputs.into_iter().zip(configs).enumerate() {
        let dir = format!("run-{index:03}");
        for (name, bytes) in out.files {
            files.push((format!("{dir}/{name}"), bytes));
        }
        entries.push(SweepEntry {
            index,
            value,
            seed: cfg.seed,
            dir,
            report: out.report,
        });
    }
    let summary = SweepSummary {
        param: param.to_string(),
        entries,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    files.push((SUMMARY_FILE.to_string(), summary.csv().into_bytes()));
    files.push(("summary.json".to_string(), json.into_bytes()));
    write_artifacts(out_dir, &files)?;
    Ok(summary)
}
