use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::analyses::{run_analysis, Context};
use super::build::{build_setup, Setup};
use super::config::{DynamicsMode, ScenarioConfig};
use super::output::{
    entropy_of, events_jsonl, fmt_f64, trajectory_csv, write_artifacts, COMPARISON_FILE,
    EVENTS_FILE, REPORT_FILE, TRAJECTORY_FILE,
};
use crate::dynamics::{integrate_schmidt, BridgeWindow, IntegrationOutcome, IntegrationStats};
use crate::error::{Error, Result};
use crate::linalg::{inner, schmidt_decompose, StateVector};
use crate::propagation::{
    detect_events, detect_events_with, evolve_exact, schmidt_trajectory, uniform_grid, EventKind,
    EventLog, ExactOracle, SchmidtTrajectory,
};

const EVENT_KINDS: [EventKind; 4] = [
    EventKind::AvoidedCrossing,
    EventKind::Degeneracy,
    EventKind::Recombination,
    EventKind::GaugeJump,
];

fn kind_name(kind: EventKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .expect("unit variants serialize to strings")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSummary {
    pub stats: IntegrationStats,
    pub windows: Vec<BridgeWindow>,
    pub halted_at: Option<f64>,
}

/// Where an exact-trajectory crossing sits relative to the integrator's
/// bridged windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceAlignment {
    pub t: f64,
    pub kind: EventKind,
    pub gap: f64,
    /// Index of the nearest window, if any.
    pub window: Option<usize>,
    /// Zero inside the window, else the distance to its nearest edge.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub compared_points: usize,
    pub min_fidelity: f64,
    pub min_fidelity_outside_windows: f64,
    pub max_p_diff: f64,
    pub max_p_diff_outside_windows: f64,
    pub alignment: Vec<ResonanceAlignment>,
}

/// Scalar summary of one run. Everything except `wall_time` is a function
/// of the config alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub model: String,
    pub dims: [usize; 2],
    pub hbar: f64,
    pub dynamics: DynamicsMode,
    pub points: usize,
    pub final_time: f64,
    pub final_probabilities: Vec<f64>,
    pub final_entropy: f64,
    /// Smallest occupied gap on the grid or at a refined crossing.
    pub min_gap: Option<f64>,
    /// Largest distance between a reported form and the exactly propagated
    /// state at the same time.
    pub max_reconstruction_error: f64,
    pub event_counts: BTreeMap<String, usize>,
    pub analyses: BTreeMap<String, serde_json::Value>,
    pub integration: Option<IntegrationSummary>,
    pub comparison: Option<ComparisonSummary>,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// A finished run held in memory: its report and the artifact files.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub files: Vec<(String, Vec<u8>)>,
}

struct Dynamics {
    trajectory: SchmidtTrajectory,
    events: EventLog,
    integration: Option<IntegrationOutcome>,
}

fn exact_dynamics(
    cfg: &ScenarioConfig,
    setup: &Setup,
    states: &[StateVector],
    times: &[f64],
) -> Result<Dynamics> {
    let trajectory = schmidt_trajectory(times, states, setup.model.dims())?;
    let oracle = ExactOracle::new(&setup.model, &setup.psi0)?;
    let events = detect_events_with(&trajectory, cfg.gap_threshold, Some(&oracle))?;
    Ok(Dynamics {
        trajectory,
        events,
        integration: None,
    })
}

/// Integrate the Schmidt equations. A halt on resonance fails the run.
fn integrate(cfg: &ScenarioConfig, setup: &Setup, times: &[f64]) -> Result<IntegrationOutcome> {
    let form0 = schmidt_decompose(&setup.psi0, setup.model.dims())?;
    let out = integrate_schmidt(&setup.model, &form0, times, &cfg.integrator)?;
    if let Some(t) = out.halted_at {
        let e = out
            .trajectory
            .events
            .entries()
            .iter()
            .rev()
            .find(|e| e.t == t);
        let (a, b, gap) = e.map_or((0, 0, 0.0), |e| (e.branch_a, e.branch_b, e.gap));
        return Err(Error::Resonance { t, a, b, gap });
    }
    Ok(out)
}

/// Run a scenario in memory.
pub fn execute(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let started = Instant::now();
    cfg.validate()?;
    let setup = build_setup(cfg)?;
    let times = uniform_grid(0.0, cfg.time.t_max, cfg.time.steps + 1);
    let states = evolve_exact(&setup.model, &setup.psi0, &times)?;

    let mut comparison_csv = None;
    let mut comparison = None;
    let dynamics = match cfg.dynamics {
        DynamicsMode::Exact => exact_dynamics(cfg, &setup, &states, &times)?,
        DynamicsMode::Schmidt => {
            let out = integrate(cfg, &setup, &times)?;
            let events = detect_events(&out.trajectory, cfg.gap_threshold);
            Dynamics {
                trajectory: out.trajectory.clone(),
                events,
                integration: Some(out),
            }
        }
        DynamicsMode::Both => {
            let mut d = exact_dynamics(cfg, &setup, &states, &times)?;
            let out = integrate(cfg, &setup, &times)?;
            let (csv, summary) = compare(&d, &out, &states);
            comparison_csv = Some(csv);
            comparison = Some(summary);
            d.events
                .extend(out.trajectory.events.entries().iter().cloned());
            d.integration = Some(out);
            d
        }
    };

    let traj = &dynamics.trajectory;
    let mut max_err: f64 = 0.0;
    for (form, psi) in traj.forms.iter().zip(&states) {
        max_err = max_err.max((form.reconstruct() - psi).norm());
    }
    let mut min_gap: Option<f64> = traj
        .forms
        .iter()
        .filter_map(|f| f.min_gap().map(|g| g.2))
        .reduce(f64::min);
    for e in dynamics.events.entries() {
        if matches!(e.kind, EventKind::AvoidedCrossing | EventKind::Degeneracy) {
            min_gap = Some(min_gap.map_or(e.gap, |g| g.min(e.gap)));
        }
    }
    let mut event_counts = BTreeMap::new();
    for kind in EVENT_KINDS {
        event_counts.insert(kind_name(kind), dynamics.events.count(kind));
    }

    let ctx = Context {
        cfg,
        setup: &setup,
        trajectory: traj,
    };
    let mut analyses = BTreeMap::new();
    for kind in &cfg.analyses {
        analyses.insert(kind.name().to_string(), run_analysis(*kind, &ctx)?);
    }

    let last = traj.forms.last().expect("at least one time point");
    let final_probabilities = last.probabilities();
    let report = RunReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        model: cfg.model.kind().to_string(),
        dims: cfg.model.dims(),
        hbar: cfg.hbar,
        dynamics: cfg.dynamics,
        points: traj.len(),
        final_time: *traj.times.last().expect("non-empty"),
        final_entropy: entropy_of(&final_probabilities),
        final_probabilities,
        min_gap,
        max_reconstruction_error: max_err,
        event_counts,
        analyses,
        integration: dynamics.integration.as_ref().map(|o| IntegrationSummary {
            stats: o.stats,
            windows: o.windows.clone(),
            halted_at: o.halted_at,
        }),
        comparison,
        wall_time: started.elapsed(),
    };

    let mut report_json = serde_json::to_string_pretty(&report).expect("report serializes");
    report_json.push('\n');
    let mut files = vec![
        (
            TRAJECTORY_FILE.to_string(),
            trajectory_csv(traj).into_bytes(),
        ),
        (
            EVENTS_FILE.to_string(),
            events_jsonl(&dynamics.events).into_bytes(),
        ),
        (REPORT_FILE.to_string(), report_json.into_bytes()),
    ];
    if let Some(csv) = comparison_csv {
        files.push((COMPARISON_FILE.to_string(), csv.into_bytes()));
    }
    Ok(RunOutput { report, files })
}

/// Run a scenario and write its artifacts to `out_dir`. Nothing is written
/// unless the whole run succeeds.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunReport> {
    let out = execute(cfg)?;
    write_artifacts(out_dir, &out.files)?;
    Ok(out.report)
}

/// Run with both exact propagation and the Schmidt equations and write the
/// per-step comparison next to the usual artifacts.
pub fn compare_dynamics(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunReport> {
    if cfg.dynamics != DynamicsMode::Both {
        return Err(Error::config(
            "dynamics",
            "compare needs \"both\" (exact propagation and Schmidt integration)",
        ));
    }
    run_scenario(cfg, out_dir)
}

fn compare(
    exact: &Dynamics,
    out: &IntegrationOutcome,
    states: &[StateVector],
) -> (String, ComparisonSummary) {
    let mut csv = String::from("t,branch,p_exact,p_schmidt,p_diff,fidelity,in_window\n");
    let mut s = ComparisonSummary {
        compared_points: out.trajectory.len(),
        min_fidelity: 1.0,
        min_fidelity_outside_windows: 1.0,
        max_p_diff: 0.0,
        max_p_diff_outside_windows: 0.0,
        alignment: Vec::new(),
    };
    for (k, form) in out.trajectory.forms.iter().enumerate() {
        let t = out.trajectory.times[k];
        let fidelity = inner(&states[k], &form.reconstruct()).norm_sqr();
        let pe = exact.trajectory.forms[k].probabilities();
        let ps = form.probabilities();
        let inside = out.windows.iter().any(|w| w.contains(t));
        let mut worst: f64 = 0.0;
        for (pos, (a, b)) in pe.iter().zip(&ps).enumerate() {
            let d = (a - b).abs();
            worst = worst.max(d);
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                fmt_f64(t),
                pos,
                fmt_f64(*a),
                fmt_f64(*b),
                fmt_f64(d),
                fmt_f64(fidelity),
                u8::from(inside)
            );
        }
        s.min_fidelity = s.min_fidelity.min(fidelity);
        s.max_p_diff = s.max_p_diff.max(worst);
        if !inside {
            s.min_fidelity_outside_windows = s.min_fidelity_outside_windows.min(fidelity);
            s.max_p_diff_outside_windows = s.max_p_diff_outside_windows.max(worst);
        }
    }
    for e in exact.events.entries() {
        if !matches!(e.kind, EventKind::AvoidedCrossing | EventKind::Degeneracy) {
            continue;
        }
        let nearest = out
            .windows
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let d = if w.contains(e.t) {
                    0.0
                } else {
                    (w.start - e.t).abs().min((w.end - e.t).abs())
                };
                (i, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1));
        s.alignment.push(ResonanceAlignment {
            t: e.t,
            kind: e.kind,
            gap: e.gap,
            window: nearest.map(|n| n.0),
            distance: nearest.map(|n| n.1),
        });
    }
    (csv, s)
}
