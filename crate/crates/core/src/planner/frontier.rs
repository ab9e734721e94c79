use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::Vec3;
use crate::error::Result;
use crate::map::{SemanticOctree, VoxelKey};
use crate::metrics::IgContext;
use crate::planner::ViewpointCandidate;

/// Observed free voxels (`p_o < 0.5`) with at least one never-observed
/// 6-neighbor inside the map bounds, in key order.
pub fn frontier_voxels(map: &SemanticOctree) -> Vec<VoxelKey> {
    let mut out: Vec<VoxelKey> = map
        .iter()
        .filter(|(_, v)| v.occ_logodds < 0.0)
        .filter(|(k, _)| {
            k.neighbors6()
                .iter()
                .any(|n| map.in_bounds(n) && map.get(n).is_none())
        })
        .map(|(k, _)| *k)
        .collect();
    out.sort_unstable();
    out
}

/// Random viewpoints at distance `r` from frontier voxels near targets,
/// falling back to all frontier voxels when none is near a target.
pub fn frontier_candidates(
    map: &SemanticOctree,
    ctx: &IgContext,
    n_samples: usize,
    r: f64,
    seed: u64,
) -> Result<Vec<ViewpointCandidate>> {
    let frontiers = frontier_voxels(map);
    let roi: Vec<VoxelKey> = frontiers
        .iter()
        .filter(|k| {
            !ctx.targets.is_empty() && ctx.targets.any_closer_than(&map.center(k), ctx.max_dist)
        })
        .copied()
        .collect();
    let pool = if roi.is_empty() { &frontiers } else { &roi };
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let f = map.center(&pool[rng.gen_range(0..pool.len())]);
        let z: f64 = rng.gen_range(-0.5..0.866);
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - z * z).sqrt();
        let pos = f + Vec3::new(s * phi.cos(), s * phi.sin(), z) * r;
        out.push(ViewpointCandidate::looking_at(pos, f, None)?);
    }
    Ok(out)
}
