use crate::camera::{CameraPose, Vec3};
use crate::error::{invalid, Result};

/// Where fixed scanning poses are placed around a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanArc {
    /// Distance added to the region's horizontal half-diagonal (m).
    pub standoff: f64,
    /// Azimuth of the arc's middle (rad).
    pub center: f64,
    /// Angular span of the arc (rad); `TAU` is a full circle.
    pub span: f64,
}

impl ScanArc {
    pub fn full(standoff: f64, center: f64) -> Self {
        ScanArc {
            standoff,
            center,
            span: std::f64::consts::TAU,
        }
    }
}

/// Fixed scanning poses on a cylinder arc around an axis-aligned region.
///
/// Poses sit on three height levels at 1/4, 1/2 and 3/4 of the region height
/// (fewer levels when `n_poses < 3`), with `ceil(n / levels)` azimuths per
/// level. Azimuths split the arc into equal bins and are staggered between
/// levels, so a three-pose scan still sees the region from three sides. The
/// cylinder radius is the region's horizontal half-diagonal plus the
/// standoff. Every pose looks horizontally at the region's vertical axis.
pub fn predefined_scan_poses(
    min: &Vec3,
    max: &Vec3,
    n_poses: usize,
    arc: &ScanArc,
) -> Result<Vec<CameraPose>> {
    if n_poses == 0 {
        return Err(invalid("need at least one scan pose"));
    }
    if (0..3).any(|a| !(max[a] >= min[a])) || !(max.z > min.z) || !(arc.standoff > 0.0) {
        return Err(invalid("degenerate scan region"));
    }
    if !(arc.span > 0.0 && arc.span <= std::f64::consts::TAU) || !arc.center.is_finite() {
        return Err(invalid("scan arc span must lie in (0, 2pi]"));
    }
    let levels = n_poses.min(3);
    let per_level = n_poses.div_ceil(levels);
    let axis = (min + max) / 2.0;
    let radius = ((max.x - min.x).hypot(max.y - min.y)) / 2.0 + arc.standoff;
    let height = max.z - min.z;
    let start = arc.center - arc.span / 2.0;
    let mut poses = Vec::with_capacity(n_poses);
    'outer: for l in 0..levels {
        let z = min.z + height * (l + 1) as f64 / (levels + 1) as f64;
        for a in 0..per_level {
            if poses.len() == n_poses {
                break 'outer;
            }
            let f = (a as f64 + (l as f64 + 0.5) / levels as f64) / per_level as f64;
            let phi = start + arc.span * f;
            let pos = Vec3::new(axis.x + radius * phi.cos(), axis.y + radius * phi.sin(), z);
            poses.push(CameraPose::look_at(
                pos,
                Vec3::new(axis.x, axis.y, z),
                Vec3::z(),
            )?);
        }
    }
    Ok(poses)
}
