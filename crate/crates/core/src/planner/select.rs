use crate::camera::CameraModel;
use crate::map::SemanticOctree;
use crate::metrics::{evaluate, random_utility, IgContext, IgMetric};
use crate::par::{self, ExecMode};
use crate::planner::{CandidateStatus, ViewpointCandidate};
use crate::raycast::{generate_rays, SamplingMode};

// Keeps tie order independent of the random-sampling draw.
const TIE_SALT: u64 = 0x7E5A_11C3_9B0D_2F41;

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub metric: IgMetric,
    pub sampling: SamplingMode,
    pub camera: CameraModel,
    pub roi_size: f64,
    pub exec: ExecMode,
}

/// Scores every candidate that is not filtered or executed. Returns the
/// number of rays cast.
pub fn evaluate_candidates(
    candidates: &mut [ViewpointCandidate],
    map: &SemanticOctree,
    ctx: &IgContext,
    opts: &EvalOptions,
) -> usize {
    let scores = par::map_range(opts.exec, candidates.len(), |i| {
        let c = &candidates[i];
        if matches!(
            c.status,
            CandidateStatus::Filtered | CandidateStatus::Executed
        ) {
            return None;
        }
        if opts.metric == IgMetric::Rs {
            return Some((random_utility(ctx.seed, i as u64), 0));
        }
        match generate_rays(
            &opts.camera,
            &c.pose,
            &c.target,
            map.resolution(),
            opts.roi_size,
            opts.sampling,
        ) {
            Ok(bundle) => Some(evaluate(opts.metric, map, &bundle, ctx, i as u64)),
            Err(_) => Some((0.0, 0)),
        }
    });
    let mut rays = 0;
    for (c, s) in candidates.iter_mut().zip(scores) {
        if let Some((u, n)) = s {
            c.utility = u;
            c.status = CandidateStatus::Evaluated;
            rays += n;
        }
    }
    rays
}

/// Evaluates candidates and returns the indices of the `k` best
/// (descending utility, exact ties broken by a seeded draw). Empty when nothing is selectable.
pub fn select_best(
    candidates: &mut [ViewpointCandidate],
    map: &SemanticOctree,
    ctx: &IgContext,
    k: usize,
    opts: &EvalOptions,
) -> (Vec<usize>, usize) {
    let rays = evaluate_candidates(candidates, map, ctx, opts);
    let mut idx: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].status == CandidateStatus::Evaluated)
        .collect();
    idx.sort_by(|&a, &b| {
        candidates[b]
            .utility
            .total_cmp(&candidates[a].utility)
            .then_with(|| {
                random_utility(ctx.seed ^ TIE_SALT, a as u64)
                    .total_cmp(&random_utility(ctx.seed ^ TIE_SALT, b as u64))
            })
            .then(a.cmp(&b))
    });
    idx.truncate(k.max(1));
    (idx, rays)
}
