//! Target clustering, viewpoint generation and selection, execution
//! ordering, and the baseline viewpoint generators.

mod cluster;
mod frontier;
mod scan;
mod select;
mod tsp;
mod viewpoints;

pub use cluster::{cluster_targets, FruitCluster};
pub use frontier::{frontier_candidates, frontier_voxels};
pub use scan::{predefined_scan_poses, ScanArc};
pub use select::{evaluate_candidates, select_best, EvalOptions};
pub use tsp::{order_viewpoints_tsp, path_length};
pub use viewpoints::{
    filter_workspace, sample_viewpoints, CandidateStatus, ViewpointCandidate, WorkspaceModel,
};
