use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::entanglement_entropy;
use crate::error::{Error, Result};
use crate::propagation::{EventLog, SchmidtTrajectory};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub const TRAJECTORY_HEADER: &str = "t,branch,p,sqrt_p,entropy,min_gap";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Entropy of a probability vector after removing rounding drift from its
/// sum.
pub(crate) fn entropy_of(p: &[f64]) -> f64 {
    let total: f64 = p.iter().map(|x| x.max(0.0)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let q: Vec<f64> = p.iter().map(|x| x.max(0.0) / total).collect();
    entanglement_entropy(&q).unwrap_or(f64::NAN)
}

/// One row per (time, branch label). `min_gap` is the distance from the
/// row's probability to the nearest other branch.
pub fn trajectory_csv(traj: &SchmidtTrajectory) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    let r = traj.branch_count();
    for k in 0..traj.len() {
        let form = &traj.forms[k];
        let p = form.probabilities();
        let entropy = entropy_of(&p);
        for label in 0..r {
            let pos = traj.position(k, label);
            let gap = (0..r)
                .filter(|&j| j != pos)
                .map(|j| (p[pos] - p[j]).abs())
                .fold(f64::INFINITY, f64::min);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f64(traj.times[k]),
                label,
                fmt_f64(p[pos]),
                fmt_f64(form.coeffs()[pos]),
                fmt_f64(entropy),
                fmt_f64(gap)
            );
        }
    }
    out
}

pub fn events_jsonl(log: &EventLog) -> String {
    let mut out = String::new();
    for e in log.entries() {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

/// Write `files` into `dir`, each through a temporary file renamed into
/// place. On failure the files already placed by this call are removed.
pub fn write_artifacts(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    let io =
        |what: &str, p: &Path, e: std::io::Error| Error::Io(format!("{what} {}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io("cannot create", dir, e))?;
    let mut placed: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        for (name, bytes) in files {
            let target = dir.join(name);
            let parent = target.parent().unwrap_or(dir).to_path_buf();
            std::fs::create_dir_all(&parent).map_err(|e| io("cannot create", &parent, e))?;
            let mut tmp = tempfile::Builder::new()
                .prefix(".sbl-")
                .tempfile_in(&parent)
                .map_err(|e| io("cannot stage in", &parent, e))?;
            tmp.write_all(bytes)
                .map_err(|e| io("cannot write", &target, e))?;
            tmp.persist(&target)
                .map_err(|e| io("cannot place", &target, e.error))?;
            placed.push(target);
        }
        Ok(())
    })();
    if result.is_err() {
        for p in placed {
            let _ = std::fs::remove_file(p);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            6.02214076e23,
            0.0,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
        }
    }

    #[test]
    fn entropy_tolerates_drift() {
        let s = entropy_of(&[0.5 + 1e-9, 0.5]);
        assert!((s - 2f64.ln()).abs() < 1e-8);
        assert_eq!(entropy_of(&[1.0, -1e-17]), 0.0);
    }

    #[test]
    fn artifacts_are_placed() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("run");
        let files = vec![
            ("a.txt".to_string(), b"one".to_vec()),
            ("sub/b.txt".to_string(), b"two".to_vec()),
        ];
        write_artifacts(&target, &files).unwrap();
        assert_eq!(std::fs::read(target.join("a.txt")).unwrap(), b"one");
        assert_eq!(std::fs::read(target.join("sub/b.txt")).unwrap(), b"two");
        let names: Vec<_> = std::fs::read_dir(&target)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert!(names.iter().all(|n| !n.starts_with(".sbl-")));
    }
}
