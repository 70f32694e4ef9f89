use super::assignment::max_weight_assignment;
use super::events::{Event, EventKind, EventLog};
use crate::error::{Error, Result};
use crate::linalg::{inner, schmidt_decompose, Dims, SchmidtForm, StateVector, C64, EPS_RANK};

/// Matched branches whose `|<phi_i(t_k)|phi_i(t_k+1)>|` is at least this
/// large get their joint phase aligned; smaller overlaps are logged as gauge
/// jumps.
pub const PHASE_ALIGN_MIN_OVERLAP: f64 = 0.1;

/// Time series of Schmidt forms with persistent branch labels.
///
/// Each form is sorted by descending probability. `branch_ids[k][pos]` is the
/// label of the branch at sorted position `pos` at step `k`; labels are the
/// positions at the first step and then follow the maximal-overlap matching.
#[derive(Debug, Clone)]
pub struct SchmidtTrajectory {
    pub times: Vec<f64>,
    pub forms: Vec<SchmidtForm>,
    pub branch_ids: Vec<Vec<usize>>,
    pub events: EventLog,
}

impl SchmidtTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dims(&self) -> Option<Dims> {
        self.forms.first().map(|f| f.dims())
    }

    pub fn branch_count(&self) -> usize {
        self.forms.first().map_or(0, |f| f.branch_count())
    }

    /// Sorted position of `label` at step `k`.
    pub fn position(&self, k: usize, label: usize) -> usize {
        self.branch_ids[k]
            .iter()
            .position(|&l| l == label)
            .expect("label present at every step")
    }

    /// `p` of the labelled branch over time.
    pub fn probability_series(&self, label: usize) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let s = self.forms[k].coeffs()[self.position(k, label)];
                s * s
            })
            .collect()
    }

    /// `phi` of the labelled branch at step `k`.
    pub fn left_state(&self, k: usize, label: usize) -> &StateVector {
        &self.forms[k].left()[self.position(k, label)]
    }

    pub fn right_state(&self, k: usize, label: usize) -> &StateVector {
        &self.forms[k].right()[self.position(k, label)]
    }
}

/// Decompose every state and link branches across steps.
///
/// Between consecutive steps the labels follow the optimal assignment on
/// `|<phi_i(t_k)|phi_j(t_k+1)>|`. Each matched pair with overlap above
/// [`PHASE_ALIGN_MIN_OVERLAP`] is rephased so the overlap is real positive
/// (compensated on `Phi`); occupied pairs below it produce a gauge-jump event
/// whose `gap` field carries the overlap magnitude.
pub fn schmidt_trajectory(
    times: &[f64],
    states: &[StateVector],
    dims: Dims,
) -> Result<SchmidtTrajectory> {
    if times.len() != states.len() {
        return Err(Error::dims(format!(
            "{} times for {} states",
            times.len(),
            states.len()
        )));
    }
    super::check_times(times)?;
    let r = dims.rank();
    let mut forms: Vec<SchmidtForm> = Vec::with_capacity(states.len());
    let mut branch_ids: Vec<Vec<usize>> = Vec::with_capacity(states.len());
    let mut events = EventLog::default();

    for (k, psi) in states.iter().enumerate() {
        let mut form = schmidt_decompose(psi, dims)?;
        let ids = match forms.last() {
            None => (0..r).collect(),
            Some(prev) => {
                let prev_ids = &branch_ids[k - 1];
                let overlaps: Vec<Vec<C64>> = prev
                    .left()
                    .iter()
                    .map(|a| form.left().iter().map(|b| inner(a, b)).collect())
                    .collect();
                let weights: Vec<Vec<f64>> = overlaps
                    .iter()
                    .map(|row| row.iter().map(|z| z.norm()).collect())
                    .collect();
                let perm = max_weight_assignment(&weights);
                let mut ids = vec![0usize; r];
                let p_prev = prev.probabilities();
                let p_cur = form.probabilities();
                for (i, &j) in perm.iter().enumerate() {
                    ids[j] = prev_ids[i];
                    let ov = overlaps[i][j];
                    if ov.norm() > PHASE_ALIGN_MIN_OVERLAP {
                        form.rephase(j, ov.conj() / ov.norm());
                    } else if p_prev[i] > EPS_RANK && p_cur[j] > EPS_RANK {
                        events.push(Event {
                            kind: EventKind::GaugeJump,
                            t: times[k],
                            branch_a: prev_ids[i],
                            branch_b: prev_ids[i],
                            gap: ov.norm(),
                        });
                    }
                }
                ids
            }
        };
        forms.push(form);
        branch_ids.push(ids);
    }
    Ok(SchmidtTrajectory {
        times: times.to_vec(),
        forms,
        branch_ids,
        events,
    })
}
