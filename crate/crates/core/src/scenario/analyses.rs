use serde_json::{json, Value};

use super::build::{slot, Setup};
use super::config::{AnalysisKind, AnalysisOptions, ScenarioConfig};
use super::output::entropy_of;
use crate::analysis::{
    branching_ratios, default_fit_window, deseparation_rate, orthogonal_overlaps,
    product_deseparation_rate, quadratic_growth_fit, random_phase_study, relative_norms,
    superposition_rate_check, unitary_mapping, MemoryBranch, MemoryExpansion, NestedDecomposition,
    ObservationScenario,
};
use crate::dynamics::{schmidt_rhs, stable_branch_rhs};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::random::{derive_seed, random_unitary, rng};
use crate::linalg::{
    basis_state, c, columns, schmidt_decompose, SchmidtForm, StateVector, EPS_RANK,
};
use crate::model::stability_violation;
use crate::propagation::SchmidtTrajectory;

pub(crate) struct Context<'a> {
    pub cfg: &'a ScenarioConfig,
    pub setup: &'a Setup,
    pub trajectory: &'a SchmidtTrajectory,
}

fn seed_for(cfg: &ScenarioConfig, kind: AnalysisKind) -> u64 {
    derive_seed(cfg.seed, slot::ANALYSIS + kind as u64)
}

pub(crate) fn run_analysis(kind: AnalysisKind, ctx: &Context) -> Result<Value> {
    let seed = seed_for(ctx.cfg, kind);
    let opts = &ctx.cfg.analysis;
    match kind {
        AnalysisKind::DeseparationRate => rate(ctx, opts),
        AnalysisKind::SuperpositionRate => superposition(ctx),
        AnalysisKind::Entropy => Ok(entropy(ctx.trajectory)),
        AnalysisKind::Stability => stability(ctx, seed),
        AnalysisKind::Nested => nested(ctx, opts),
        AnalysisKind::BranchingRatios => branching(opts, seed),
        AnalysisKind::RandomPhaseNorms => phase_norms(opts, seed),
        AnalysisKind::Observation => observation(ctx, opts, seed),
    }
}

/// Orthonormal basis whose first member is `v`.
fn basis_from(v: &StateVector) -> Result<Vec<StateVector>> {
    Ok(columns(&unitary_mapping(&basis_state(v.len(), 0), v)?))
}

fn rate(ctx: &Context, opts: &AnalysisOptions) -> Result<Value> {
    let model = &ctx.setup.model;
    let form = schmidt_decompose(&ctx.setup.psi0, model.dims())?;
    let (phi, big) = (&form.left()[0], &form.right()[0]);
    let rate = deseparation_rate(model, &basis_from(phi)?, &basis_from(big)?, 0)?;
    let projector = product_deseparation_rate(model, phi, big)?;
    let window = default_fit_window(model)?;
    let hbar = model.hbar();
    let growth =
        quadratic_growth_fit(model, &ctx.setup.psi0, window, opts.fit_points)? * hbar * hbar;
    let relative = (rate > 1e-6).then(|| (rate - growth).abs() / rate);
    let agrees = match relative {
        Some(r) => r <= 1e-2,
        None => rate < 1e-8 && growth.abs() < 1e-8,
    };
    Ok(json!({
        "rate": rate,
        "projector_rate": projector,
        "growth": growth,
        "fit_window": window,
        "relative_difference": relative,
        "agrees": agrees,
    }))
}

fn superposition(ctx: &Context) -> Result<Value> {
    let pointer = ctx
        .setup
        .pointer
        .as_ref()
        .expect("validated: measurement model");
    let form = schmidt_decompose(&ctx.setup.psi0, ctx.setup.model.dims())?;
    let cond = pointer.conditional();
    let check =
        superposition_rate_check(&cond[0], &cond[1], &form.right()[0], ctx.setup.model.hbar())?;
    Ok(serde_json::to_value(check).expect("plain data"))
}

fn entropy(traj: &SchmidtTrajectory) -> Value {
    let series: Vec<f64> = traj
        .forms
        .iter()
        .map(|f| entropy_of(&f.probabilities()))
        .collect();
    let (k_max, s_max) = series
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (k, &s)| if s > acc.1 { (k, s) } else { acc },
        );
    json!({
        "initial": series.first(),
        "final": series.last(),
        "max": s_max,
        "t_at_max": traj.times.get(k_max),
    })
}

fn stability(ctx: &Context, seed: u64) -> Result<Value> {
    let pointer = ctx
        .setup
        .pointer
        .as_ref()
        .expect("validated: measurement model");
    let model = &ctx.setup.model;
    let dims = model.dims();
    let violation = stability_violation(model, pointer.states(), None)?;
    // An aligned form with well separated random weights.
    let r = dims.rank();
    let raw: Vec<f64> = (0..r).map(|k| (r - k) as f64 + 0.5).collect();
    let total: f64 = raw.iter().sum();
    let coeffs: Vec<f64> = raw.iter().map(|x| (x / total).sqrt()).collect();
    let right = columns(&random_unitary(&mut rng(seed), dims.b))[..r].to_vec();
    let left = pointer.states()[..r].to_vec();
    let form = SchmidtForm::from_parts(dims, coeffs, left, right)?;
    let full = schmidt_rhs(&form, model)?;
    let stable = stable_branch_rhs(&form, pointer, model)?;
    let coefficient_rate = full.d_sqrt_p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(json!({
        "violation": violation,
        "max_coefficient_rate": coefficient_rate,
        "stable_vs_full": full.max_abs_diff(&stable),
    }))
}

fn nested(ctx: &Context, opts: &AnalysisOptions) -> Result<Value> {
    let [d1, d2] = opts.environment_split.expect("validated");
    let last = ctx.trajectory.forms.last().expect("non-empty trajectory");
    let nd = NestedDecomposition::from_form(last, d1, d2)?;
    let branches: Vec<Value> = nd
        .branches
        .iter()
        .map(|(i, b)| json!({"branch": i, "weights": b.weights(), "entropy": b.entropy()}))
        .collect();
    Ok(json!({"residual": nd.residual(last), "branches": branches}))
}

fn branching(opts: &AnalysisOptions, seed: u64) -> Result<Value> {
    let mut worst: f64 = 0.0;
    for k in 0..opts.expansions {
        let mem = MemoryExpansion::random(
            &opts.memory_blocks,
            &opts.memory_alphas,
            k % 2 == 0
                && opts
                    .memory_alphas
                    .iter()
                    .all(|&a| a <= opts.memory_blocks.iter().sum()),
            derive_seed(seed, k as u64),
        )?;
        for i in 0..mem.branches().len() {
            worst = worst.max(branching_ratios(&mem, i)?.max_discrepancy());
        }
    }
    let amp = |x: f64, y: f64| StateVector::from_vec(vec![c(x.sqrt(), 0.0), c(y.sqrt(), 0.0)]);
    let worked = MemoryExpansion::new(
        vec![1, 1],
        vec![MemoryBranch {
            q: vec![0.5, 0.5],
            c: vec![amp(0.6, 0.4), amp(0.2, 0.8)],
        }],
    )?;
    let table = branching_ratios(&worked, 0)?;
    let ratio = table.ratio(0, 1).expect("two memory values");
    Ok(json!({
        "expansions": opts.expansions,
        "max_discrepancy": worst,
        "worked_example": {
            "weights": table.right_weights,
            "ratio_left": ratio.left,
            "ratio_right": ratio.right,
        },
    }))
}

fn phase_norms(opts: &AnalysisOptions, seed: u64) -> Result<Value> {
    let points = random_phase_study(
        &opts.phase_sizes,
        opts.phase_resamples,
        seed,
        Execution::Sequential,
    )?;
    let monotone = points.windows(2).all(|w| w[1].mean_error < w[0].mean_error);
    let mem = MemoryExpansion::random(&opts.memory_blocks, &opts.memory_alphas, false, seed)?;
    let mut orthogonal: f64 = 0.0;
    for (i, b) in mem.branches().iter().enumerate() {
        let g = orthogonal_overlaps(b.q.len(), mem.memory_count());
        orthogonal = orthogonal.max(relative_norms(&mem, i, 1.0, &g)?.max_abs_difference());
    }
    Ok(json!({
        "points": points,
        "monotone": monotone,
        "orthogonal_max_difference": orthogonal,
    }))
}

fn observation(ctx: &Context, opts: &AnalysisOptions, seed: u64) -> Result<Value> {
    let last = ctx.trajectory.forms.last().expect("non-empty trajectory");
    let occupied: Vec<f64> = last
        .probabilities()
        .into_iter()
        .filter(|&p| p > EPS_RANK)
        .collect();
    let total: f64 = occupied.iter().sum();
    let p: Vec<f64> = occupied.iter().map(|x| x / total).collect();
    let alphas: Vec<usize> = (0..p.len())
        .map(|i| opts.memory_alphas[i % opts.memory_alphas.len()])
        .collect();
    let mem = MemoryExpansion::random(&opts.memory_blocks, &alphas, false, seed)?;
    let sc = ObservationScenario::build(p, mem, 0.0, derive_seed(seed, 1))
        .map_err(|e| Error::InvalidArgument(format!("observation: {e}")))?;
    let mut norm_gap: f64 = 0.0;
    for i in 0..sc.p.len() {
        let rn = relative_norms(&sc.memory, i, sc.p[i], &sc.overlaps(i))?;
        norm_gap = norm_gap.max(rn.max_abs_difference());
    }
    Ok(json!({
        "branches": sc.p.len(),
        "norm_error": (sc.post.norm() - 1.0).abs(),
        "max_cross_overlap": sc.max_cross_overlap(),
        "prediction_error": sc.max_prediction_error(),
        "schmidt_weight_error": sc.schmidt_weight_error()?,
        "relative_norm_max_difference": norm_gap,
    }))
}
