use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::camera::{CameraPose, Vec3};
use crate::error::{invalid, Error, Result};
use crate::spatial::PointIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateStatus {
    Unevaluated,
    Evaluated,
    Filtered,
    Executed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointCandidate {
    pub pose: CameraPose,
    /// Point the candidate looks at: a cluster centroid or a frontier voxel.
    pub target: Vec3,
    pub cluster_id: Option<usize>,
    pub utility: f64,
    pub status: CandidateStatus,
}

impl ViewpointCandidate {
    pub fn looking_at(position: Vec3, target: Vec3, cluster_id: Option<usize>) -> Result<Self> {
        Ok(ViewpointCandidate {
            pose: CameraPose::look_at(position, target, Vec3::z())?,
            target,
            cluster_id,
            utility: 0.0,
            status: CandidateStatus::Unevaluated,
        })
    }

    pub fn position(&self) -> Vec3 {
        self.pose.position
    }
}

/// Candidates on a sphere of radius `r` around `centroid`. Elevation is
/// measured from +z and spans [30, 150] degrees inclusive; azimuth spans
/// [0, 360) degrees.
pub fn sample_viewpoints(
    centroid: &Vec3,
    r: f64,
    n_theta: usize,
    n_phi: usize,
    cluster_id: Option<usize>,
) -> Result<Vec<ViewpointCandidate>> {
    if !(r > 0.0) || n_theta == 0 || n_phi == 0 {
        return Err(invalid(
            "sphere sampling needs r > 0 and at least one angle each",
        ));
    }
    let (lo, hi) = (30f64.to_radians(), 150f64.to_radians());
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        let theta = if n_theta == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n_theta - 1) as f64
        };
        for j in 0..n_phi {
            let phi = std::f64::consts::TAU * j as f64 / n_phi as f64;
            let offset = Vec3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ) * r;
            out.push(ViewpointCandidate::looking_at(
                centroid + offset,
                *centroid,
                cluster_id,
            )?);
        }
    }
    Ok(out)
}

/// Reachable camera positions with a nearest-neighbor tolerance.
#[derive(Debug, Clone)]
pub struct WorkspaceModel {
    points: PointIndex,
    pub tolerance: f64,
}

impl WorkspaceModel {
    pub fn new(points: Vec<Vec3>, tolerance: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("workspace has no points"));
        }
        if !(tolerance > 0.0) {
            return Err(invalid("workspace tolerance must be positive"));
        }
        Ok(WorkspaceModel {
            points: PointIndex::new(points, tolerance),
            tolerance,
        })
    }

    /// Lattice of points with spacing `tolerance` filling an axis-aligned box.
    pub fn from_box(min: &Vec3, max: &Vec3, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) || (0..3).any(|a| !(max[a] >= min[a])) {
            return Err(invalid("bad workspace box"));
        }
        let n: Vec<usize> = (0..3)
            .map(|a| ((max[a] - min[a]) / tolerance).floor() as usize + 1)
            .collect();
        let mut pts = Vec::with_capacity(n[0] * n[1] * n[2]);
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    pts.push(min + Vec3::new(i as f64, j as f64, k as f64) * tolerance);
                }
            }
        }
        WorkspaceModel::new(pts, tolerance)
    }

    pub fn points(&self) -> &[Vec3] {
        self.points.points()
    }

    pub fn nearest(&self, p: &Vec3) -> (Vec3, f64) {
        let (i, d) = self.points.nearest(p).expect("workspace is nonempty");
        (self.points.points()[i], d)
    }

    /// Whitespace-separated `x y z` per line; `#` starts a comment.
    pub fn read_xyz<R: BufRead>(r: R, tolerance: f64) -> Result<Self> {
        let mut pts = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let v: Vec<f64> = body
                .split_whitespace()
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse {
                    line: n + 1,
                    msg: "malformed coordinate".into(),
                })?;
            if v.len() != 3 {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("expected 3 values, got {}", v.len()),
                });
            }
            pts.push(Vec3::new(v[0], v[1], v[2]));
        }
        WorkspaceModel::new(pts, tolerance)
    }

    pub fn write_xyz<W: Write>(&self, mut w: W) -> Result<()> {
        for p in self.points() {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
        Ok(())
    }
}

/// Marks candidates outside the workspace as filtered. A candidate whose
/// nearest workspace point is farther than the tolerance but within twice
/// the tolerance is moved onto that point and re-aimed at its target.
pub fn filter_workspace(
    candidates: Vec<ViewpointCandidate>,
    ws: &WorkspaceModel,
) -> Vec<ViewpointCandidate> {
    candidates
        .into_iter()
        .map(|mut c| {
            if c.status == CandidateStatus::Filtered {
                return c;
            }
            let (nearest, d) = ws.nearest(&c.position());
            if d <= ws.tolerance {
                return c;
            }
            if d <= 2.0 * ws.tolerance {
                if let Ok(pose) = CameraPose::look_at(nearest, c.target, Vec3::z()) {
                    c.pose = pose;
                    return c;
                }
            }
            c.status = CandidateStatus::Filtered;
            c
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifty_candidates_on_sphere() {
        let c = Vec3::new(0.1, -0.2, 0.4);
        let cands = sample_viewpoints(&c, 0.4, 5, 10, Some(0)).unwrap();
        assert_eq!(cands.len(), 50);
        for v in &cands {
            assert!(((v.position() - c).norm() - 0.4).abs() < 1e-12);
            let look = (c - v.position()).normalize();
            assert!(
                look.cross(&v.pose.forward()).norm() < 1e-9 && look.dot(&v.pose.forward()) > 0.0
            );
        }
        for i in 0..cands.len() {
            for j in i + 1..cands.len() {
                assert!((cands[i].position() - cands[j].position()).norm() > 1e-6);
            }
        }
    }

    #[test]
    fn degenerate_grid() {
        let c = Vec3::zeros();
        let v = sample_viewpoints(&c, 1.0, 1, 1, None).unwrap();
        assert_eq!(v.len(), 1);
        let t = 30f64.to_radians();
        assert!((v[0].position() - Vec3::new(t.sin(), 0.0, t.cos())).norm() < 1e-12);
        assert!(sample_viewpoints(&c, 0.0, 1, 1, None).is_err());
    }

    #[test]
    fn workspace_filtering() {
        let c = Vec3::new(0.0, 0.0, 0.5);
        let cands = sample_viewpoints(&c, 0.4, 5, 10, None).unwrap();
        let all =
            WorkspaceModel::from_box(&Vec3::new(-0.5, -0.5, 0.0), &Vec3::new(0.5, 0.5, 1.0), 0.03)
                .unwrap();
        assert!(filter_workspace(cands.clone(), &all)
            .iter()
            .all(|c| c.status != CandidateStatus::Filtered));
        let far =
            WorkspaceModel::from_box(&Vec3::new(5.0, 5.0, 0.0), &Vec3::new(6.0, 6.0, 1.0), 0.03)
                .unwrap();
        assert!(filter_workspace(cands, &far)
            .iter()
            .all(|c| c.status == CandidateStatus::Filtered));
    }

    #[test]
    fn snaps_onto_box_face() {
        let tol = 0.03;
        let ws = WorkspaceModel::from_box(&Vec3::zeros(), &Vec3::new(0.3, 0.3, 0.3), tol).unwrap();
        let target = Vec3::new(1.0, 0.15, 0.15);
        let pos = Vec3::new(0.3 + 1.5 * tol, 0.15, 0.15);
        let c = ViewpointCandidate::looking_at(pos, target, None).unwrap();
        let out = filter_workspace(vec![c], &ws);
        assert_eq!(out[0].status, CandidateStatus::Unevaluated);
        assert!((out[0].position() - Vec3::new(0.3, 0.15, 0.15)).norm() < 1e-9);
        assert!((out[0].pose.forward() - Vec3::x()).norm() < 1e-9);
        let c =
            ViewpointCandidate::looking_at(Vec3::new(0.3 + 2.5 * tol, 0.15, 0.15), target, None)
                .unwrap();
        assert_eq!(
            filter_workspace(vec![c], &ws)[0].status,
            CandidateStatus::Filtered
        );
    }

    #[test]
    fn xyz_roundtrip() {
        let ws = WorkspaceModel::from_box(&Vec3::zeros(), &Vec3::new(0.1, 0.1, 0.1), 0.05).unwrap();
        let mut buf = Vec::new();
        ws.write_xyz(&mut buf).unwrap();
        let back = WorkspaceModel::read_xyz(&buf[..], 0.05).unwrap();
        assert_eq!(back.points(), ws.points());
        assert!(WorkspaceModel::read_xyz(&b"# nothing\n"[..], 0.05).is_err());
        assert!(WorkspaceModel::read_xyz(&b"1 2\n"[..], 0.05).is_err());
    }
}
