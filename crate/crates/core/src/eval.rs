//! Reconstruction quality: total fruit entropy and surface coverage.

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::camera::Vec3;
use crate::class::FRUIT;
use crate::error::{invalid, Result};
use crate::map::{SemanticOctree, VoxelKey};
use crate::sensor::Scene;
use crate::spatial::PointIndex;

/// Axis-aligned box `(min, max)`.
pub type Aabb = (Vec3, Vec3);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub viewpoint_idx: usize,
    pub entropy_nats: f64,
    pub coverage: f64,
    pub rays_cast: usize,
    pub map_ms: f64,
    pub plan_ms: f64,
}

/// Ground-truth fruit boxes, each inflated by one voxel.
pub fn fruit_boxes(scene: &Scene, resolution: f64) -> Vec<Aabb> {
    scene
        .fruits()
        .map(|p| {
            let (lo, hi) = p.shape.aabb();
            (lo.add_scalar(-resolution), hi.add_scalar(resolution))
        })
        .collect()
}

/// Keys whose voxel centers lie inside any box, each once, in key order.
pub fn keys_in_boxes(boxes: &[Aabb], resolution: f64) -> Vec<VoxelKey> {
    let mut set = FxHashSet::default();
    for (lo, hi) in boxes {
        let first = |x: f64| (x / resolution - 0.5).ceil() as i32;
        let last = |x: f64| (x / resolution - 0.5).floor() as i32;
        for ix in first(lo.x)..=last(hi.x) {
            for iy in first(lo.y)..=last(hi.y) {
                for iz in first(lo.z)..=last(hi.z) {
                    set.insert(VoxelKey::new(ix, iy, iz));
                }
            }
        }
    }
    let mut keys: Vec<VoxelKey> = set.into_iter().collect();
    keys.sort_unstable();
    keys
}

/// Sum of per-voxel class entropy over every voxel center inside the boxes.
/// Unknown voxels contribute `ln K`.
pub fn total_fruit_entropy(map: &SemanticOctree, boxes: &[Aabb]) -> f64 {
    keys_in_boxes(boxes, map.resolution())
        .iter()
        .map(|k| map.voxel_entropy(k))
        .sum()
}

/// Fraction of ground-truth points with a reconstructed point within
/// `threshold`.
pub fn surface_coverage(
    reconstructed: &[Vec3],
    ground_truth: &[Vec3],
    threshold: f64,
) -> Result<f64> {
    if ground_truth.is_empty() {
        return Err(invalid("ground-truth point set is empty"));
    }
    if reconstructed.is_empty() {
        return Ok(0.0);
    }
    let index = PointIndex::new(reconstructed.to_vec(), threshold.max(1e-9));
    let hit = ground_truth
        .iter()
        .filter(|p| index.any_within(p, threshold))
        .count();
    Ok(hit as f64 / ground_truth.len() as f64)
}

/// Coverage of the map's fruit-classified voxels against ground-truth
/// fruit points, at the map resolution.
pub fn fruit_coverage(map: &SemanticOctree, gt_fruit: &[Vec3], p_o_min: f64) -> Result<f64> {
    surface_coverage(
        &map.classified_voxels(FRUIT, p_o_min),
        gt_fruit,
        map.resolution(),
    )
}
