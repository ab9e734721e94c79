//! Voxel traversal, per-ray visibility, and ray-bundle generation for
//! viewpoint evaluation.
//!
//! Visibility along a ray is the product of `(1 - p_o)` over the voxels in
//! front: the first voxel is always fully visible.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, CameraPose, Vec3};
use crate::error::{invalid, Error, Result};
use crate::map::{SemanticOctree, SemanticVoxel, VoxelKey};

pub const DEFAULT_VISIBILITY_CUTOFF: f64 = 0.01;
pub const DENSE_GRID: usize = 28;
pub const SPARSE_GRID: usize = 6;

/// Walks the grid cells crossed by the segment `origin + t * dir`,
/// `t in [0, length]`, in order. Cells touched with zero length (entered
/// exactly at `length`) are not visited. `visit` receives the cell and its
/// entry parameter `t` and returns `false` to stop.
pub fn walk_segment(
    origin: &Vec3,
    dir: &Vec3,
    length: f64,
    res: f64,
    mut visit: impl FnMut(VoxelKey, f64) -> bool,
) {
    let mut key = VoxelKey::from_point(origin, res);
    let mut cell = [key.ix, key.iy, key.iz];
    let mut step = [0i32; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let d = dir[a];
        if d > 0.0 {
            step[a] = 1;
            t_max[a] = ((cell[a] + 1) as f64 * res - origin[a]) / d;
            t_delta[a] = res / d;
        } else if d < 0.0 {
            step[a] = -1;
            t_max[a] = (cell[a] as f64 * res - origin[a]) / d;
            t_delta[a] = -res / d;
        }
    }
    let mut t = 0.0;
    loop {
        if !visit(key, t) {
            return;
        }
        let a = if t_max[0] < t_max[1] {
            if t_max[0] < t_max[2] {
                0
            } else {
                2
            }
        } else if t_max[1] < t_max[2] {
            1
        } else {
            2
        };
        if t_max[a] >= length {
            return;
        }
        t = t_max[a];
        cell[a] += step[a];
        t_max[a] += t_delta[a];
        key = VoxelKey::new(cell[0], cell[1], cell[2]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    MaxRange,
    VisibilityCutoff,
    Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub key: VoxelKey,
    pub p_occ: f64,
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayTrace {
    pub steps: Vec<TraceStep>,
    pub termination: Termination,
}

fn check_ray(dir: &Vec3, max_range: f64) -> Result<Vec3> {
    let n = dir.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(invalid("ray direction must be non-zero"));
    }
    if !(max_range > 0.0) {
        return Err(invalid("max_range must be positive"));
    }
    Ok(dir / n)
}

/// Visits voxels along a ray with their visibility. Stops before the first
/// voxel whose visibility would fall below `cutoff`, or on leaving the map
/// bounds.
pub fn trace_with(
    map: &SemanticOctree,
    origin: &Vec3,
    dir: &Vec3,
    max_range: f64,
    cutoff: f64,
    mut f: impl FnMut(&VoxelKey, Option<&SemanticVoxel>, f64, f64),
) -> Termination {
    let mut pv = 1.0;
    let mut term = Termination::MaxRange;
    walk_segment(origin, dir, max_range, map.resolution(), |k, _| {
        if !map.in_bounds(&k) {
            term = Termination::Bounds;
            return false;
        }
        if pv < cutoff {
            term = Termination::VisibilityCutoff;
            return false;
        }
        let v = map.get(&k);
        let p_o = v.map_or(0.5, SemanticVoxel::p_occ);
        f(&k, v, p_o, pv);
        pv *= 1.0 - p_o;
        true
    });
    term
}

pub fn traverse_ray(
    map: &SemanticOctree,
    origin: &Vec3,
    dir: &Vec3,
    max_range: f64,
    cutoff: f64,
) -> Result<RayTrace> {
    let dir = check_ray(dir, max_range)?;
    let mut steps = Vec::new();
    let termination = trace_with(
        map,
        origin,
        &dir,
        max_range,
        cutoff,
        |k, _, p_occ, visibility| {
            steps.push(TraceStep {
                key: *k,
                p_occ,
                visibility,
            })
        },
    );
    Ok(RayTrace { steps, termination })
}

/// Pixel step so that adjacent rays are about one voxel apart at distance
/// `z`: `max(1, round(res * fx / z))`, rounding half up.
pub fn downsample_step(res: f64, fx: f64, z: f64) -> Result<u32> {
    if !(res > 0.0 && fx > 0.0 && z > 0.0) {
        return Err(invalid("downsample_step needs positive inputs"));
    }
    let ds = (res * fx / z + 0.5).floor();
    Ok(ds.max(1.0).min(u32::MAX as f64) as u32)
}

/// Half-open pixel rectangle `[u0, u1) x [v0, v1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub u0: usize,
    pub v0: usize,
    pub u1: usize,
    pub v1: usize,
}

impl PixelRect {
    pub fn width(&self) -> usize {
        self.u1.saturating_sub(self.u0)
    }

    pub fn height(&self) -> usize {
        self.v1.saturating_sub(self.v0)
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }
}

/// Side length in pixels of the square image region covering an object of
/// size `size` at distance `z`.
pub fn roi_side(size: f64, fx: f64, z: f64) -> Result<usize> {
    if !(size > 0.0 && fx > 0.0 && z > 0.0) {
        return Err(invalid("roi_pixel_box needs positive inputs"));
    }
    Ok((size * fx / z + 0.5).floor().max(1.0) as usize)
}

/// Square box of side `size * fx / z` centered on `centroid_px`, clipped to
/// the image.
pub fn roi_pixel_box(
    size: f64,
    fx: f64,
    z: f64,
    centroid_px: (f64, f64),
    cam: &CameraModel,
) -> Result<PixelRect> {
    let b = roi_side(size, fx, z)? as f64;
    let clip = |x: f64, hi: usize| x.round().clamp(0.0, hi as f64) as usize;
    let rect = PixelRect {
        u0: clip(centroid_px.0 - b / 2.0, cam.width),
        v0: clip(centroid_px.1 - b / 2.0, cam.height),
        u1: clip(centroid_px.0 + b / 2.0, cam.width),
        v1: clip(centroid_px.1 + b / 2.0, cam.height),
    };
    Ok(rect)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    #[default]
    Adaptive,
    Dense,
    Sparse,
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Adaptive => "adaptive",
            SamplingMode::Dense => "dense",
            SamplingMode::Sparse => "sparse",
        })
    }
}

impl FromStr for SamplingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adaptive" => Ok(SamplingMode::Adaptive),
            "dense" => Ok(SamplingMode::Dense),
            "sparse" => Ok(SamplingMode::Sparse),
            _ => Err(Error::Config(format!("unknown sampling mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RayBundle {
    pub pose: CameraPose,
    pub directions: Vec<Vec3>,
    pub pixel_step: u32,
    pub roi: Option<PixelRect>,
    /// Point the bundle is aimed at (cluster centroid).
    pub centroid: Vec3,
}

impl RayBundle {
    pub fn origin(&self) -> Vec3 {
        self.pose.position
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// Ray directions used to evaluate a viewpoint aimed at `centroid`.
///
/// `Adaptive` casts a lattice with step [`downsample_step`] inside the ROI
/// box; `Dense` and `Sparse` cast uniform 28x28 and 6x6 grids over the whole
/// image.
pub fn generate_rays(
    cam: &CameraModel,
    pose: &CameraPose,
    centroid: &Vec3,
    res: f64,
    roi_size: f64,
    mode: SamplingMode,
) -> Result<RayBundle> {
    let p_cam = pose.to_camera(centroid);
    let centroid_px = cam
        .project(&p_cam)
        .ok_or_else(|| invalid("cluster centroid is behind the camera"))?;
    let (pixels, step, roi) = match mode {
        SamplingMode::Adaptive => {
            let z = (centroid - pose.position).norm();
            let ds = downsample_step(res, cam.fx, z)?;
            let rect = roi_pixel_box(roi_size, cam.fx, z, centroid_px, cam)?;
            let mut px = Vec::new();
            let mut v = rect.v0;
            while v < rect.v1 {
                let mut u = rect.u0;
                while u < rect.u1 {
                    px.push((u as f64, v as f64));
                    u += ds as usize;
                }
                v += ds as usize;
            }
            (px, ds, Some(rect))
        }
        SamplingMode::Dense | SamplingMode::Sparse => {
            let n = if mode == SamplingMode::Dense {
                DENSE_GRID
            } else {
                SPARSE_GRID
            };
            let mut px = Vec::with_capacity(n * n);
            for j in 0..n {
                for i in 0..n {
                    px.push((
                        (i as f64 + 0.5) * cam.width as f64 / n as f64,
                        (j as f64 + 0.5) * cam.height as f64 / n as f64,
                    ));
                }
            }
            (px, (cam.width / n).max(1) as u32, None)
        }
    };
    let directions = pixels
        .iter()
        .map(|&(u, v)| pose.pixel_ray(cam, u, v))
        .collect();
    Ok(RayBundle {
        pose: *pose,
        directions,
        pixel_step: step,
        roi,
        centroid: *centroid,
    })
}

/// Traces every ray of a bundle against the map.
pub fn trace_bundle(
    map: &SemanticOctree,
    bundle: &RayBundle,
    max_range: f64,
    cutoff: f64,
) -> Vec<RayTrace> {
    let origin = bundle.origin();
    bundle
        .directions
        .iter()
        .filter_map(|d| traverse_ray(map, &origin, d, max_range, cutoff).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapParams;

    fn map() -> SemanticOctree {
        SemanticOctree::new(MapParams::default()).unwrap()
    }

    #[test]
    fn axis_ray_through_empty_map() {
        let m = map();
        let o = Vec3::new(0.0071, 0.0072, 0.0073);
        let t = traverse_ray(&m, &o, &Vec3::x(), 0.15, 0.0).unwrap();
        assert!(
            t.steps.len() == 10 || t.steps.len() == 11,
            "{}",
            t.steps.len()
        );
        assert!(t.steps.iter().all(|s| s.p_occ == 0.5));
        assert_eq!(t.termination, Termination::MaxRange);
    }

    #[test]
    fn unknown_space_visibility_halves() {
        let m = map();
        let t = traverse_ray(
            &m,
            &Vec3::new(0.001, 0.002, 0.003),
            &Vec3::x(),
            0.5,
            DEFAULT_VISIBILITY_CUTOFF,
        )
        .unwrap();
        let pv: Vec<f64> = t.steps.iter().map(|s| s.visibility).collect();
        assert_eq!(pv, vec![1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625]);
        assert_eq!(t.termination, Termination::VisibilityCutoff);
    }

    #[test]
    fn short_ray_in_one_voxel() {
        let m = map();
        let t = traverse_ray(
            &m,
            &Vec3::new(0.005, 0.005, 0.005),
            &Vec3::new(1.0, 1.0, 0.0),
            0.001,
            0.01,
        )
        .unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.steps[0].visibility, 1.0);
    }

    #[test]
    fn zero_direction_rejected() {
        assert!(traverse_ray(&map(), &Vec3::zeros(), &Vec3::zeros(), 1.0, 0.01).is_err());
        assert!(traverse_ray(&map(), &Vec3::zeros(), &Vec3::x(), 0.0, 0.01).is_err());
    }

    #[test]
    fn bounds_stop_traversal() {
        let mut m = map();
        m.set_bounds(&Vec3::new(-0.1, -0.1, -0.1), &Vec3::new(0.05, 0.1, 0.1));
        let t = traverse_ray(&m, &Vec3::new(0.001, 0.002, 0.003), &Vec3::x(), 0.5, 0.0).unwrap();
        assert_eq!(t.termination, Termination::Bounds);
        assert_eq!(t.steps.len(), 4);
    }

    #[test]
    fn downsample_examples() {
        assert_eq!(downsample_step(0.015, 400.0, 0.4).unwrap(), 15);
        assert_eq!(downsample_step(0.015, 400.0, 0.6).unwrap(), 10);
        assert_eq!(downsample_step(0.015, 400.0, 1e6).unwrap(), 1);
        assert!(downsample_step(0.0, 400.0, 0.4).is_err());
        assert!(downsample_step(0.015, 400.0, -1.0).is_err());
    }

    #[test]
    fn roi_examples() {
        let cam = CameraModel::default();
        let r = roi_pixel_box(0.1, 400.0, 0.4, (200.0, 200.0), &cam).unwrap();
        assert_eq!((r.width(), r.height()), (100, 100));
        assert_eq!(roi_side(0.1, 400.0, 0.6).unwrap(), 67);
        let c = roi_pixel_box(0.1, 400.0, 0.4, (0.0, 0.0), &cam).unwrap();
        assert!(c.area() < 100 * 100);
        assert_eq!(c.area(), 50 * 50);
    }

    #[test]
    fn bundle_sizes() {
        let cam = CameraModel::default();
        let target = Vec3::new(0.3, 0.2, 0.5);
        let pose =
            CameraPose::look_at(target + Vec3::new(0.4, 0.0, 0.0), target, Vec3::z()).unwrap();
        let a = generate_rays(&cam, &pose, &target, 0.015, 0.1, SamplingMode::Adaptive).unwrap();
        assert_eq!(a.len(), 49);
        assert_eq!(a.pixel_step, 15);
        let d = generate_rays(&cam, &pose, &target, 0.015, 0.1, SamplingMode::Dense).unwrap();
        assert_eq!(d.len(), 784);
        let s = generate_rays(&cam, &pose, &target, 0.015, 0.1, SamplingMode::Sparse).unwrap();
        assert_eq!(s.len(), 36);
        for dir in a.directions.iter().chain(&d.directions) {
            assert!((dir.norm() - 1.0).abs() < 1e-9);
        }
        let behind = CameraPose::look_at(
            target + Vec3::new(0.4, 0.0, 0.0),
            target + Vec3::new(1.0, 0.0, 0.0),
            Vec3::z(),
        )
        .unwrap();
        assert!(generate_rays(&cam, &behind, &target, 0.015, 0.1, SamplingMode::Adaptive).is_err());
    }
}
