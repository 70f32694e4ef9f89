use serde::{Deserialize, Serialize};

use super::trajectory::SchmidtTrajectory;
use crate::error::Result;
use crate::linalg::{schmidt_decompose, Dims, Propagator, StateVector, EPS_DEG, EPS_RANK};
use crate::model::BipartiteModel;

pub const DEFAULT_GAP_THRESHOLD: f64 = 1e-3;

/// A branch must have exceeded this probability before its return to zero
/// counts as a recombination.
pub const RECOMBINATION_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    AvoidedCrossing,
    Degeneracy,
    Recombination,
    GaugeJump,
}

/// One logged event. `branch_a`/`branch_b` are trajectory labels; `gap` is
/// the minimum `|p_a - p_b|` for crossings, the residual probability for
/// recombinations and the step overlap for gauge jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
    pub branch_a: usize,
    pub branch_b: usize,
    pub gap: f64,
}

/// Time-ordered list of events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    entries: Vec<Event>,
}

impl EventLog {
    /// Insert keeping time order; equal times keep insertion order.
    pub fn push(&mut self, e: Event) {
        let idx = self.entries.partition_point(|x| x.t <= e.t);
        self.entries.insert(idx, e);
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = Event>) {
        for e in other {
            self.push(e);
        }
    }

    pub fn entries(&self) -> &[Event] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }
}

/// Sorted Schmidt probabilities at arbitrary times, used to refine grid
/// minima of branch gaps.
pub trait ProbabilityOracle {
    fn probabilities(&self, t: f64) -> Result<Vec<f64>>;
}

/// Oracle backed by exact spectral propagation from `psi0` at `t = 0`.
pub struct ExactOracle {
    propagator: Propagator,
    psi0: StateVector,
    dims: Dims,
}

impl ExactOracle {
    pub fn new(model: &BipartiteModel, psi0: &StateVector) -> Result<Self> {
        Ok(ExactOracle {
            propagator: Propagator::new(model.hamiltonian(), model.hbar())?,
            psi0: psi0.clone(),
            dims: model.dims(),
        })
    }
}

impl ProbabilityOracle for ExactOracle {
    fn probabilities(&self, t: f64) -> Result<Vec<f64>> {
        let psi = self.propagator.apply(t, &self.psi0);
        let psi = psi.unscale(psi.norm());
        Ok(schmidt_decompose(&psi, self.dims)?.probabilities())
    }
}

/// Grid-only event detection; see [`detect_events_with`].
pub fn detect_events(traj: &SchmidtTrajectory, gap_threshold: f64) -> EventLog {
    detect_events_with(traj, gap_threshold, None).expect("grid-only detection cannot fail")
}

/// Scan a trajectory for crossing-type events and recombinations.
///
/// For every pair of labels the gap `|p_a - p_b|` is scanned for interior
/// local minima below `gap_threshold` (both branches occupied). With an
/// oracle the minimum is refined by golden-section search on
/// `[t_k-1, t_k+1]`. Minima below `EPS_DEG` are degeneracies (exact
/// crossings), the rest avoided crossings. A label whose probability drops
/// to `EPS_RANK` or below after exceeding [`RECOMBINATION_FLOOR`] is a
/// recombination. The trajectory's own gauge-jump events are carried over.
pub fn detect_events_with(
    traj: &SchmidtTrajectory,
    gap_threshold: f64,
    oracle: Option<&dyn ProbabilityOracle>,
) -> Result<EventLog> {
    let mut log = traj.events.clone();
    let n = traj.len();
    let r = traj.branch_count();
    if n == 0 {
        return Ok(log);
    }
    let series: Vec<Vec<f64>> = (0..r).map(|l| traj.probability_series(l)).collect();

    for a in 0..r {
        for b in (a + 1)..r {
            let gap: Vec<f64> = (0..n)
                .map(|k| (series[a][k] - series[b][k]).abs())
                .collect();
            for k in 1..n.saturating_sub(1) {
                let is_min = gap[k] < gap[k - 1] && gap[k] <= gap[k + 1];
                if !is_min || gap[k] >= gap_threshold {
                    continue;
                }
                if series[a][k] <= EPS_RANK || series[b][k] <= EPS_RANK {
                    continue;
                }
                let (mut t_min, mut g_min) = (traj.times[k], gap[k]);
                if let Some(o) = oracle {
                    let pa = traj.position(k, a);
                    let pb = traj.position(k, b);
                    let f = |t: f64| -> Result<f64> {
                        let p = o.probabilities(t)?;
                        Ok((p[pa] - p[pb]).abs())
                    };
                    let (t_r, g_r) = golden_min(f, traj.times[k - 1], traj.times[k + 1])?;
                    if g_r < g_min {
                        t_min = t_r;
                        g_min = g_r;
                    }
                }
                let kind = if g_min < EPS_DEG {
                    EventKind::Degeneracy
                } else {
                    EventKind::AvoidedCrossing
                };
                log.push(Event {
                    kind,
                    t: t_min,
                    branch_a: a,
                    branch_b: b,
                    gap: g_min,
                });
            }
        }
    }

    for (label, p) in series.iter().enumerate() {
        let mut armed = false;
        for (k, &pk) in p.iter().enumerate().take(n) {
            if pk > RECOMBINATION_FLOOR {
                armed = true;
            } else if armed && pk <= EPS_RANK {
                armed = false;
                log.push(Event {
                    kind: EventKind::Recombination,
                    t: traj.times[k],
                    branch_a: label,
                    branch_b: label,
                    gap: p[k],
                });
            }
        }
    }
    Ok(log)
}

/// Golden-section minimization of `f` on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..200 {
        if (hi - lo).abs() <= 4.0 * f64::EPSILON * (lo.abs() + hi.abs()).max(1e-300) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::basis_state;
    use crate::model::CrossingFamily;
    use crate::propagation::{evolve_exact, schmidt_trajectory, uniform_grid};

    #[test]
    fn log_is_time_ordered() {
        let mut log = EventLog::default();
        for t in [0.5, 0.1, 0.3, 0.1] {
            log.push(Event {
                kind: EventKind::GaugeJump,
                t,
                branch_a: 0,
                branch_b: 0,
                gap: 0.0,
            });
        }
        let ts: Vec<f64> = log.entries().iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![0.1, 0.1, 0.3, 0.5]);
    }

    #[test]
    fn golden_finds_v_minimum() {
        let (t, g) = golden_min(|t| Ok((t - 0.3141).abs()), 0.0, 1.0).unwrap();
        assert!((t - 0.3141).abs() < 1e-14 && g < 1e-14);
    }

    #[test]
    fn monotone_separation_is_quiet() {
        // psi(t) = cos(a t)|00> + sin(a t)|11> on t in [0, 0.5], p separating
        // from a product state without ever meeting.
        let times = uniform_grid(0.0, 0.5, 40);
        let states: Vec<StateVector> = times
            .iter()
            .map(|&t| {
                basis_state(4, 0).scale((0.5 * t).cos()) + basis_state(4, 3).scale((0.5 * t).sin())
            })
            .collect();
        let traj = schmidt_trajectory(&times, &states, Dims::new(2, 2)).unwrap();
        assert!(detect_events(&traj, DEFAULT_GAP_THRESHOLD).is_empty());
    }

    fn crossing_log(coupling: f64, seed: u64) -> EventLog {
        let fam = CrossingFamily::from_seed(seed);
        let model = fam.model(coupling).unwrap();
        let psi0 = fam.initial_state();
        let times = uniform_grid(0.0, fam.window(), 201);
        let states = evolve_exact(&model, &psi0, &times).unwrap();
        let traj = schmidt_trajectory(&times, &states, model.dims()).unwrap();
        let oracle = ExactOracle::new(&model, &psi0).unwrap();
        detect_events_with(&traj, 0.5, Some(&oracle)).unwrap()
    }

    #[test]
    fn exact_crossing_is_degeneracy() {
        let log = crossing_log(0.0, 1);
        assert_eq!(log.count(EventKind::Degeneracy), 1);
        assert_eq!(log.count(EventKind::AvoidedCrossing), 0);
        let e = log.of_kind(EventKind::Degeneracy).next().unwrap();
        assert!(e.gap < 1e-8);
    }

    #[test]
    fn perturbed_crossing_is_avoided() {
        let log = crossing_log(0.1, 1);
        assert_eq!(log.count(EventKind::Degeneracy), 0);
        let e = log.of_kind(EventKind::AvoidedCrossing).next().unwrap();
        assert!(e.gap > 0.0);
    }

    #[test]
    fn recombination_detected() {
        // Branch 1 grows to 0.25 and returns exactly to zero at t = pi.
        let times = uniform_grid(0.0, std::f64::consts::PI, 61);
        let states: Vec<StateVector> = times
            .iter()
            .map(|&t| {
                let th = std::f64::consts::FRAC_PI_6 * t.sin();
                basis_state(4, 0).scale(th.cos()) + basis_state(4, 3).scale(th.sin())
            })
            .collect();
        let traj = schmidt_trajectory(&times, &states, Dims::new(2, 2)).unwrap();
        let log = detect_events(&traj, DEFAULT_GAP_THRESHOLD);
        assert_eq!(log.count(EventKind::Recombination), 1);
        assert_eq!(
            log.of_kind(EventKind::Recombination)
                .next()
                .unwrap()
                .branch_a,
            1
        );
    }
}
