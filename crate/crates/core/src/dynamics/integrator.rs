use serde::{Deserialize, Serialize};

use super::rhs::{schmidt_rhs_with, DiagonalTerm, RhsOptions, DEFAULT_EPS_GAP};
use crate::error::{Error, Result};
use crate::linalg::{
    amplitude_matrix, inner, schmidt_decompose, ComplexMatrix, Dims, SchmidtForm, StateVector, C64,
    EPS_DEG,
};
use crate::model::BipartiteModel;
use crate::propagation::{max_weight_assignment, Event, EventKind, EventLog, SchmidtTrajectory};

/// What the integrator does when two occupied probabilities come within
/// `eps_gap` of each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnResonance {
    /// Stop, log the event and return what was integrated so far.
    Halt,
    /// Continue the total state with the linear equation until the gap
    /// reopens, then restart from a fresh decomposition.
    #[default]
    Reseed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub eps_gap: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub on_resonance: OnResonance,
    /// A bridged window closes once the smallest occupied gap is at least
    /// `reopen_factor * eps_gap`.
    pub reopen_factor: f64,
    /// Branches below this probability that the Hamiltonian is filling or
    /// draining are carried through the total state as well.
    pub occupation_floor: f64,
    pub diagonal: DiagonalTerm,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-9,
            atol: 1e-12,
            eps_gap: DEFAULT_EPS_GAP,
            max_step: 0.25,
            min_step: 1e-12,
            on_resonance: OnResonance::Reseed,
            reopen_factor: 1e3,
            occupation_floor: 1e-3,
            diagonal: DiagonalTerm::Consistent,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.rtol) || !pos(self.atol) {
            return Err(Error::InvalidArgument("rtol and atol must be > 0".into()));
        }
        if !pos(self.eps_gap) {
            return Err(Error::InvalidArgument("eps_gap must be > 0".into()));
        }
        if !pos(self.min_step) || !pos(self.max_step) || self.min_step >= self.max_step {
            return Err(Error::InvalidArgument(
                "need 0 < min_step < max_step".into(),
            ));
        }
        if !(self.occupation_floor > 0.0 && self.occupation_floor < 0.5) {
            return Err(Error::InvalidArgument(
                "occupation_floor must lie in (0, 0.5)".into(),
            ));
        }
        if !(self.reopen_factor >= 1.0) {
            return Err(Error::InvalidArgument("reopen_factor must be >= 1".into()));
        }
        Ok(())
    }

    fn rhs(&self) -> RhsOptions {
        RhsOptions {
            eps_gap: self.eps_gap,
            diagonal: self.diagonal,
        }
    }
}

/// Why the Schmidt equations were set aside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Two occupied probabilities came within `eps_gap`.
    Resonance,
    /// A branch below `occupation_floor` was being filled or drained; its
    /// factor states are not determined by the equations there.
    Occupation,
}

/// An interval integrated through the total state instead of the Schmidt
/// equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeWindow {
    pub kind: WindowKind,
    pub start: f64,
    pub end: f64,
    /// The resonant pair, or the thin branch twice.
    pub branch_a: usize,
    pub branch_b: usize,
    /// Smallest occupied gap seen inside the window.
    pub gap: f64,
}

impl BridgeWindow {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Number of bridged windows.
    pub reseeds: usize,
}

#[derive(Debug, Clone)]
pub struct IntegrationOutcome {
    /// Forms at the requested times (truncated when halted). Events hold one
    /// entry per resonance (bridged or halted).
    pub trajectory: SchmidtTrajectory,
    pub windows: Vec<BridgeWindow>,
    pub halted_at: Option<f64>,
    pub stats: IntegrationStats,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[0.2],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
    ],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Step {
    y: Vec<f64>,
    k_last: Vec<f64>,
    err: f64,
}

/// One Dormand-Prince step from `(t, y)` with known slope `k1`.
fn dp_step<F>(
    f: &F,
    t: f64,
    y: &[f64],
    k1: &[f64],
    h: f64,
    opts: &IntegratorOptions,
    stats: &mut IntegrationStats,
) -> Result<Step>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(k1.to_vec());
    let mut stage = vec![0.0; n];
    for s in 1..7 {
        for (idx, v) in stage.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, a) in A[s].iter().enumerate() {
                acc += a * k[j][idx];
            }
            *v = y[idx] + h * acc;
        }
        stats.rhs_evals += 1;
        k.push(f(t + C[s] * h, &stage)?);
    }
    // The last stage point is the fifth-order solution.
    let y_new = stage;
    let mut sum = 0.0;
    for idx in 0..n {
        let mut e = 0.0;
        for (j, w) in E.iter().enumerate() {
            e += w * k[j][idx];
        }
        let sc = opts.atol + opts.rtol * y[idx].abs().max(y_new[idx].abs());
        sum += (h * e / sc).powi(2);
    }
    let err = (sum / n as f64).sqrt();
    if !err.is_finite() {
        return Err(Error::InvalidArgument("non-finite step error".into()));
    }
    Ok(Step {
        y: y_new,
        k_last: k.pop().expect("seven stages"),
        err,
    })
}

fn initial_step(y: &[f64], f0: &[f64], opts: &IntegratorOptions) -> f64 {
    let rms = |v: &[f64]| {
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(a, b)| (a / (opts.atol + opts.rtol * b.abs())).powi(2))
            .sum();
        (s / v.len() as f64).sqrt()
    };
    let (d0, d1) = (rms(y), rms(f0));
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.clamp(opts.min_step * 10.0, opts.max_step)
}

fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}

fn pack_form(form: &SchmidtForm) -> Vec<f64> {
    let mut y = Vec::new();
    y.extend_from_slice(form.coeffs());
    for v in form.left().iter().chain(form.right()) {
        for z in v.iter() {
            y.push(z.re);
            y.push(z.im);
        }
    }
    y
}

fn unpack_vec(y: &[f64], len: usize, at: &mut usize) -> StateVector {
    let v = StateVector::from_fn(len, |k, _| C64::new(y[*at + 2 * k], y[*at + 2 * k + 1]));
    *at += 2 * len;
    v
}

fn unpack_form(dims: Dims, y: &[f64]) -> SchmidtForm {
    let r = dims.rank();
    let coeffs = y[..r].to_vec();
    let mut at = r;
    let left = (0..r).map(|_| unpack_vec(y, dims.a, &mut at)).collect();
    let right = (0..r).map(|_| unpack_vec(y, dims.b, &mut at)).collect();
    SchmidtForm::from_parts(dims, coeffs, left, right).expect("packed layout matches dims")
}

fn pack_derivative(d: &super::SchmidtDerivative) -> Vec<f64> {
    let mut y = d.d_sqrt_p.clone();
    for v in d.d_left.iter().chain(&d.d_right) {
        for z in v.iter() {
            y.push(z.re);
            y.push(z.im);
        }
    }
    y
}

fn pack_state(psi: &StateVector) -> Vec<f64> {
    psi.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn unpack_state(y: &[f64]) -> StateVector {
    let mut at = 0;
    unpack_vec(y, y.len() / 2, &mut at)
}

/// Reorder and rephase a freshly decomposed form so branch `i` continues
/// branch `i` of `reference` (matched on `|<phi|phi'>|`).
fn align_to(reference: &SchmidtForm, fresh: SchmidtForm) -> SchmidtForm {
    let overlaps: Vec<Vec<C64>> = reference
        .left()
        .iter()
        .map(|a| fresh.left().iter().map(|b| inner(a, b)).collect())
        .collect();
    let weights: Vec<Vec<f64>> = overlaps
        .iter()
        .map(|row| row.iter().map(|z| z.norm()).collect())
        .collect();
    let perm = max_weight_assignment(&weights);
    let mut coeffs = Vec::with_capacity(perm.len());
    let mut left = Vec::with_capacity(perm.len());
    let mut right = Vec::with_capacity(perm.len());
    for (i, &j) in perm.iter().enumerate() {
        let ov = overlaps[i][j];
        let phase = if ov.norm() > 0.0 {
            ov.conj() / ov.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        coeffs.push(fresh.coeffs()[j]);
        left.push(&fresh.left()[j] * phase);
        right.push(&fresh.right()[j] * phase.conj());
    }
    SchmidtForm::from_parts(fresh.dims(), coeffs, left, right).expect("same dims")
}

struct Recorder {
    times: Vec<f64>,
    forms: Vec<SchmidtForm>,
    ids: Vec<Vec<usize>>,
}

impl Recorder {
    fn push(&mut self, t: f64, form: &SchmidtForm) {
        let mut sorted = form.clone();
        let order = sorted.canonicalize();
        self.times.push(t);
        self.forms.push(sorted);
        self.ids.push(order);
    }
}

fn resonance_kind(gap: f64) -> EventKind {
    if gap < EPS_DEG {
        EventKind::Degeneracy
    } else {
        EventKind::AvoidedCrossing
    }
}

/// A branch below `floor` that `H` moves amplitude into or out of: the
/// component of `H psi` outside the span of the occupied branches on both
/// sides is not negligible.
fn thin_branch(form: &SchmidtForm, model: &BipartiteModel, floor: f64) -> Option<usize> {
    let p = form.probabilities();
    let thin = (0..p.len())
        .filter(|&i| p[i] < floor)
        .min_by(|&a, &b| p[a].total_cmp(&p[b]))?;
    let dims = form.dims();
    let v = model.hamiltonian() * form.reconstruct();
    let scale = v.norm();
    if scale == 0.0 {
        return None;
    }
    let mut pa = ComplexMatrix::identity(dims.a, dims.a);
    let mut pb = ComplexMatrix::identity(dims.b, dims.b);
    for i in (0..p.len()).filter(|&i| p[i] >= floor) {
        pa -= &form.left()[i] * form.left()[i].adjoint();
        pb -= &form.right()[i] * form.right()[i].adjoint();
    }
    let vm = amplitude_matrix(&v, dims).expect("dims match");
    let w = pa * vm * pb.transpose();
    (w.norm() > THIN_TOL * scale).then_some(thin)
}

/// Relative size of `H psi` outside the occupied span that counts as
/// filling a thin branch.
const THIN_TOL: f64 = 1e-9;

enum Trigger {
    Resonance { a: usize, b: usize, gap: f64 },
    Thin(usize),
}

/// Integrate the Schmidt equations of motion from `form0` at `times[0]`,
/// reporting the form at every entry of `times`.
///
/// Steps are adaptive Dormand-Prince 5(4) with per-component weights
/// `atol + rtol |y|` on the packed real state (coefficients, then the real
/// and imaginary parts of every `phi_i`, then every `Phi_i`). Stage
/// evaluations that hit the resonance guard are treated as rejected steps.
///
/// The equations are set aside in two situations. When an accepted step
/// lands within `eps_gap` of a resonance, or the step size needed to avoid
/// one drops below `min_step`, the options decide between halting and
/// bridging. A branch below `occupation_floor` that the Hamiltonian is
/// filling or draining (a branching out of a product state, or a
/// recombination) is always bridged. The bridge integrates
/// `i hbar dpsi/dt = H psi` with the same stepper, reports decompositions of
/// `psi` meanwhile, and restarts the Schmidt equations once the gap has
/// reopened to `reopen_factor * eps_gap` and no thin branch is moving.
pub fn integrate_schmidt(
    model: &BipartiteModel,
    form0: &SchmidtForm,
    times: &[f64],
    opts: &IntegratorOptions,
) -> Result<IntegrationOutcome> {
    opts.validate()?;
    crate::propagation::check_times(times)?;
    if times.is_empty() {
        return Err(Error::InvalidArgument("no output times".into()));
    }
    if form0.dims() != model.dims() {
        return Err(Error::dims("initial form does not match the model"));
    }
    form0.validate(1e-8, None)?;
    if let Some((a, b, gap)) = form0.min_gap() {
        if gap < opts.eps_gap {
            return Err(Error::DegenerateSpectrum { a, b, gap });
        }
    }

    let dims = model.dims();
    let rhs_opts = opts.rhs();
    let schmidt_f = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let form = unpack_form(dims, y);
        schmidt_rhs_with(&form, model, &rhs_opts).map(|d| pack_derivative(&d))
    };
    let h_mat = model.hamiltonian();
    let rate = C64::new(0.0, -1.0 / model.hbar());
    let linear_f = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let psi = unpack_state(y);
        Ok(pack_state(&((h_mat * psi) * rate)))
    };

    let mut stats = IntegrationStats::default();
    let mut rec = Recorder {
        times: Vec::new(),
        forms: Vec::new(),
        ids: Vec::new(),
    };
    let mut events = EventLog::default();
    let mut windows = Vec::new();
    let mut halted_at = None;

    let mut t = times[0];
    let mut y = pack_form(form0);
    rec.push(t, form0);
    stats.rhs_evals += 1;
    let mut k1 = schmidt_f(t, &y)?;
    let mut h = initial_step(&y, &k1, opts);
    let mut next = 1;
    let mut trigger = thin_branch(form0, model, opts.occupation_floor).map(Trigger::Thin);

    while next < times.len() {
        if trigger.is_none() {
            let target = times[next];
            let span = target - t;
            let last = h >= span;
            let step = if last { span } else { h };
            match dp_step(&schmidt_f, t, &y, &k1, step, opts, &mut stats) {
                Err(Error::DegenerateSpectrum { a, b, gap }) => {
                    stats.rejected += 1;
                    h = step * 0.25;
                    if h < opts.min_step {
                        trigger = Some(Trigger::Resonance { a, b, gap });
                    }
                }
                Err(e) => return Err(e),
                Ok(st) if st.err <= 1.0 => {
                    stats.accepted += 1;
                    t = if last { target } else { t + step };
                    y = st.y;
                    k1 = st.k_last;
                    if !last {
                        h = (step * step_factor(st.err)).min(opts.max_step);
                    }
                    let form = unpack_form(dims, &y);
                    if last {
                        rec.push(t, &form);
                        next += 1;
                    }
                    trigger = match form.min_gap() {
                        Some((a, b, gap)) if gap < opts.eps_gap => {
                            Some(Trigger::Resonance { a, b, gap })
                        }
                        _ => thin_branch(&form, model, opts.occupation_floor).map(Trigger::Thin),
                    };
                }
                Ok(st) => {
                    stats.rejected += 1;
                    h = step * step_factor(st.err).min(0.9);
                    if h < opts.min_step {
                        let form = unpack_form(dims, &y);
                        return Err(Error::StepUnderflow {
                            t,
                            step: h,
                            pair: form.min_gap().map(|(a, b, _)| (a, b)),
                        });
                    }
                }
            }
            continue;
        }

        let mut reference = unpack_form(dims, &y);
        let mut window = match trigger.take().expect("checked above") {
            Trigger::Resonance { a, b, gap } => {
                if opts.on_resonance == OnResonance::Halt {
                    events.push(Event {
                        kind: resonance_kind(gap),
                        t,
                        branch_a: a.min(b),
                        branch_b: a.max(b),
                        gap,
                    });
                    halted_at = Some(t);
                    break;
                }
                BridgeWindow {
                    kind: WindowKind::Resonance,
                    start: t,
                    end: t,
                    branch_a: a.min(b),
                    branch_b: a.max(b),
                    gap,
                }
            }
            Trigger::Thin(i) => {
                let gap = reference.min_gap().map_or(f64::INFINITY, |g| g.2);
                BridgeWindow {
                    kind: WindowKind::Occupation,
                    start: t,
                    end: t,
                    branch_a: i,
                    branch_b: i,
                    gap,
                }
            }
        };
        let mut pair = (window.branch_a, window.branch_b);
        let mut t_min = t;

        // Bridge on the total state.
        let mut z = pack_state(&reference.reconstruct());
        stats.rhs_evals += 1;
        let mut kz = linear_f(t, &z)?;
        let mut hz = initial_step(&z, &kz, opts).max(h.min(opts.max_step));
        let mut reopened = false;
        while next < times.len() && !reopened {
            let target = times[next];
            let span = target - t;
            let last = hz >= span;
            let step = if last { span } else { hz };
            let st = dp_step(&linear_f, t, &z, &kz, step, opts, &mut stats)?;
            if st.err > 1.0 {
                stats.rejected += 1;
                hz = step * step_factor(st.err).min(0.9);
                if hz < opts.min_step {
                    return Err(Error::StepUnderflow {
                        t,
                        step: hz,
                        pair: Some((window.branch_a, window.branch_b)),
                    });
                }
                continue;
            }
            stats.accepted += 1;
            t = if last { target } else { t + step };
            z = st.y;
            kz = st.k_last;
            if !last {
                hz = (step * step_factor(st.err)).min(opts.max_step);
            }
            let psi = unpack_state(&z);
            let psi = &psi / C64::new(psi.norm(), 0.0);
            reference = align_to(&reference, schmidt_decompose(&psi, dims)?);
            if last {
                rec.push(t, &reference);
                next += 1;
            }
            let gap = reference.min_gap();
            if let Some((a, b, g)) = gap {
                if g < window.gap {
                    window.gap = g;
                    pair = (a.min(b), a.max(b));
                    t_min = t;
                }
            }
            let closed = gap.is_none_or(|g| g.2 >= opts.eps_gap * opts.reopen_factor);
            reopened = closed && thin_branch(&reference, model, opts.occupation_floor).is_none();
        }
        window.end = t;
        if window.gap < opts.eps_gap {
            events.push(Event {
                kind: resonance_kind(window.gap),
                t: t_min,
                branch_a: pair.0,
                branch_b: pair.1,
                gap: window.gap,
            });
        }
        windows.push(window);
        stats.reseeds += 1;
        if !reopened {
            break;
        }
        y = pack_form(&reference);
        stats.rhs_evals += 1;
        k1 = schmidt_f(t, &y)?;
        h = hz;
    }

    Ok(IntegrationOutcome {
        trajectory: SchmidtTrajectory {
            times: rec.times,
            forms: rec.forms,
            branch_ids: rec.ids,
            events,
        },
        windows,
        halted_at,
        stats,
    })
}
