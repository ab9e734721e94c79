//! Target-aware next-best-view planning over multi-class probabilistic
//! voxel maps.
//!
//! The pipeline is: a [`map::SemanticOctree`] fuses labeled depth images,
//! fruit voxels are grouped with DBSCAN ([`planner::cluster_targets`]),
//! candidate viewpoints are sampled on spheres around each cluster, scored
//! with an information-gain functional from [`metrics`] over ROI-bounded ray
//! bundles from [`raycast`], and the best ones are executed in TSP order.
//! [`sensor`] supplies procedural plant scenes and a labeled depth camera;
//! [`experiment`] runs the closed loop and writes CSV logs.

pub mod camera;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod map;
pub mod metrics;
pub mod par;
pub mod planner;
pub mod raycast;
pub mod sensor;
pub mod spatial;

pub use camera::{CameraModel, CameraPose, Vec3};
pub use error::{Error, Result};
pub use map::{MapParams, SemanticOctree, SemanticVoxel, VoxelKey};
pub use par::ExecMode;

/// Class ids used by the plant scenes. Fruit comes first so that argmax ties
/// resolve toward the target class.
pub mod class {
    pub const FRUIT: u8 = 0;
    pub const LEAF: u8 = 1;
    pub const BACKGROUND: u8 = 2;
    pub const COUNT: usize = 3;

    pub fn name(id: u8) -> &'static str {
        match id {
            FRUIT => "fruit",
            LEAF => "leaf",
            BACKGROUND => "background",
            _ => "unknown",
        }
    }
}
