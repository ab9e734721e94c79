//! Viewpoint utility functionals over traced ray bundles.
//!
//! All sums run over rays, then over the voxels along each ray, so a voxel
//! crossed by several rays contributes several times. Only UVC and UVPC count
//! distinct voxels.

use std::fmt;
use std::str::FromStr;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::camera::Vec3;
use crate::error::{invalid, Error, Result};
use crate::map::{binary_entropy, entropy, SemanticOctree, VoxelKey};
use crate::raycast::{trace_bundle, RayBundle, RayTrace, DEFAULT_VISIBILITY_CUTOFF};
use crate::spatial::PointIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IgMetric {
    Rs,
    Ae,
    Uvc,
    Uvpc,
    Oae,
    Mi,
    #[default]
    Osamcep,
}

impl IgMetric {
    pub const ALL: [IgMetric; 7] = [
        IgMetric::Rs,
        IgMetric::Ae,
        IgMetric::Uvc,
        IgMetric::Uvpc,
        IgMetric::Oae,
        IgMetric::Mi,
        IgMetric::Osamcep,
    ];

    pub fn uses_rays(self) -> bool {
        self != IgMetric::Rs
    }
}

impl fmt::Display for IgMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IgMetric::Rs => "rs",
            IgMetric::Ae => "ae",
            IgMetric::Uvc => "uvc",
            IgMetric::Uvpc => "uvpc",
            IgMetric::Oae => "oae",
            IgMetric::Mi => "mi",
            IgMetric::Osamcep => "osamcep",
        })
    }
}

impl FromStr for IgMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        IgMetric::ALL
            .into_iter()
            .find(|m| m.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

/// Row-stochastic sensor confusion matrix: `p_gt` on the diagonal, the rest
/// spread evenly.
pub fn symmetric_confusion(num_classes: usize, p_gt: f64) -> Vec<Vec<f64>> {
    let off = (1.0 - p_gt) / (num_classes - 1) as f64;
    (0..num_classes)
        .map(|i| {
            (0..num_classes)
                .map(|j| if i == j { p_gt } else { off })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct IgContext {
    pub target_class: u8,
    pub max_dist: f64,
    /// Currently classified target voxel centers.
    pub targets: PointIndex,
    pub confusion: Vec<Vec<f64>>,
    pub max_range: f64,
    pub visibility_cutoff: f64,
    /// Seed for random sampling.
    pub seed: u64,
}

impl IgContext {
    pub fn new(
        target_class: u8,
        max_dist: f64,
        targets: Vec<Vec3>,
        num_classes: usize,
        p_gt: f64,
    ) -> Result<Self> {
        let ctx = IgContext {
            target_class,
            max_dist,
            targets: PointIndex::new(targets, max_dist.max(1e-6)),
            confusion: symmetric_confusion(num_classes, p_gt),
            max_range: 1.0,
            visibility_cutoff: DEFAULT_VISIBILITY_CUTOFF,
            seed: 0,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_dist > 0.0) {
            return Err(invalid("max_dist must be positive"));
        }
        for row in &self.confusion {
            if row.len() != self.confusion.len() || row.iter().any(|p| *p < 0.0) {
                return Err(invalid("confusion matrix must be square and non-negative"));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(invalid("confusion rows must sum to 1"));
            }
        }
        Ok(())
    }

    /// `dist(x) < max_dist`, measured to the nearest target voxel, or to the
    /// bundle centroid when there are no targets yet.
    pub fn near_target(&self, p: &Vec3, centroid: &Vec3) -> bool {
        if self.targets.is_empty() {
            (p - centroid).norm() < self.max_dist
        } else {
            self.targets.any_closer_than(p, self.max_dist)
        }
    }

    pub fn dist(&self, p: &Vec3, centroid: &Vec3) -> f64 {
        match self.targets.nearest(p) {
            Some((_, d)) => d,
            None => (p - centroid).norm(),
        }
    }
}

/// Semantic and occlusion aware multi-class entropy with proximity gating.
pub fn osamcep(map: &SemanticOctree, bundle: &RayBundle, ctx: &IgContext) -> f64 {
    osamcep_traces(map, &trace(map, bundle, ctx), &bundle.centroid, ctx)
}

pub fn osamcep_traces(
    map: &SemanticOctree,
    traces: &[RayTrace],
    centroid: &Vec3,
    ctx: &IgContext,
) -> f64 {
    let ln_k = (map.num_classes() as f64).ln();
    let mut g = 0.0;
    for t in traces {
        for s in &t.steps {
            let h = match map.get(&s.key) {
                None => ln_k,
                Some(v) if v.label() == Some(ctx.target_class) => map.entropy_of(v),
                Some(_) => continue,
            };
            if ctx.near_target(&map.center(&s.key), centroid) {
                g += s.visibility * h;
            }
        }
    }
    g
}

/// Mean binary occupancy entropy over every traversed voxel.
pub fn average_entropy(map: &SemanticOctree, bundle: &RayBundle, ctx: &IgContext) -> f64 {
    average_entropy_traces(&trace(map, bundle, ctx))
}

pub fn average_entropy_traces(traces: &[RayTrace]) -> f64 {
    let (sum, n) = traces
        .iter()
        .flat_map(|t| &t.steps)
        .fold((0.0, 0usize), |(s, n), st| {
            (s + binary_entropy(st.p_occ), n + 1)
        });
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn unknown_voxel_count(map: &SemanticOctree, bundle: &RayBundle, ctx: &IgContext) -> usize {
    unknown_keys(map, &trace(map, bundle, ctx), |_| true).len()
}

pub fn unknown_voxel_proximity_count(
    map: &SemanticOctree,
    bundle: &RayBundle,
    ctx: &IgContext,
) -> usize {
    let traces = trace(map, bundle, ctx);
    unknown_keys(map, &traces, |k| {
        ctx.near_target(&map.center(k), &bundle.centroid)
    })
    .len()
}

fn unknown_keys(
    map: &SemanticOctree,
    traces: &[RayTrace],
    keep: impl Fn(&VoxelKey) -> bool,
) -> FxHashSet<VoxelKey> {
    traces
        .iter()
        .flat_map(|t| &t.steps)
        .filter(|s| map.get(&s.key).is_none() && keep(&s.key))
        .map(|s| s.key)
        .collect()
}

/// Visibility-weighted binary occupancy entropy.
pub fn occlusion_aware_entropy(map: &SemanticOctree, bundle: &RayBundle, ctx: &IgContext) -> f64 {
    occlusion_aware_entropy_traces(&trace(map, bundle, ctx))
}

pub fn occlusion_aware_entropy_traces(traces: &[RayTrace]) -> f64 {
    traces
        .iter()
        .flat_map(|t| &t.steps)
        .map(|s| s.visibility * binary_entropy(s.p_occ))
        .sum()
}

/// Mutual information between a voxel's class and one noisy label drawn
/// through `confusion` (rows: true class, columns: observed class).
pub fn channel_mutual_information(prior: &[f64], confusion: &[Vec<f64>]) -> f64 {
    let k = prior.len();
    let mut h_post = 0.0;
    for z in 0..k {
        let pz: f64 = (0..k).map(|l| prior[l] * confusion[l][z]).sum();
        if pz <= 0.0 {
            continue;
        }
        let post: Vec<f64> = (0..k).map(|l| prior[l] * confusion[l][z] / pz).collect();
        h_post += pz * entropy(&post);
    }
    (entropy(prior) - h_post).max(0.0)
}

pub fn mutual_information(map: &SemanticOctree, bundle: &RayBundle, ctx: &IgContext) -> f64 {
    mutual_information_traces(map, &trace(map, bundle, ctx), ctx)
}

pub fn mutual_information_traces(
    map: &SemanticOctree,
    traces: &[RayTrace],
    ctx: &IgContext,
) -> f64 {
    let k = map.num_classes();
    let uniform_mi = channel_mutual_information(&vec![1.0 / k as f64; k], &ctx.confusion);
    let mut total = 0.0;
    for t in traces {
        for s in &t.steps {
            let mi = match map.get(&s.key) {
                None => uniform_mi,
                Some(v) => channel_mutual_information(
                    &v.class_distribution(map.params().alpha),
                    &ctx.confusion,
                ),
            };
            total += s.visibility * mi;
        }
    }
    total
}

/// Deterministic value in `[0, 1)` per `(seed, index)`.
pub fn random_utility(seed: u64, index: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Combines two seeds into one.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b ^ 0xD1B5_4A32_D192_ED03))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn trace(map: &SemanticOctree, bundle: &RayBundle, ctx: &IgContext) -> Vec<RayTrace> {
    trace_bundle(map, bundle, ctx.max_range, ctx.visibility_cutoff)
}

/// Utility of one candidate under `metric`. Returns `(utility, rays_cast)`.
pub fn evaluate(
    metric: IgMetric,
    map: &SemanticOctree,
    bundle: &RayBundle,
    ctx: &IgContext,
    candidate_index: u64,
) -> (f64, usize) {
    if metric == IgMetric::Rs {
        return (random_utility(ctx.seed, candidate_index), 0);
    }
    let traces = trace(map, bundle, ctx);
    let value = match metric {
        IgMetric::Rs => unreachable!(),
        IgMetric::Ae => average_entropy_traces(&traces),
        IgMetric::Uvc => unknown_keys(map, &traces, |_| true).len() as f64,
        IgMetric::Uvpc => unknown_keys(map, &traces, |k| {
            ctx.near_target(&map.center(k), &bundle.centroid)
        })
        .len() as f64,
        IgMetric::Oae => occlusion_aware_entropy_traces(&traces),
        IgMetric::Mi => mutual_information_traces(map, &traces, ctx),
        IgMetric::Osamcep => osamcep_traces(map, &traces, &bundle.centroid, ctx),
    };
    (value, bundle.len())
}
