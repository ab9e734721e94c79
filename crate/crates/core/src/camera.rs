//! Pinhole camera model and camera poses.
//!
//! Camera frame: +x right, +y down, +z along the optical axis. Pixel `(u, v)`
//! maps to the camera-frame direction `((u - cx) / fx, (v - cy) / fy, 1)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Vec3 = Vector3<f64>;

const ORTHO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub max_depth: f64,
}

impl Default for CameraModel {
    /// 400x400 with fx = fy = 400 px (about 53 degrees field of view).
    fn default() -> Self {
        CameraModel {
            width: 400,
            height: 400,
            fx: 400.0,
            fy: 400.0,
            cx: 200.0,
            cy: 200.0,
            max_depth: 1.0,
        }
    }
}

impl CameraModel {
    /// Square camera with the default field of view at `size` pixels.
    pub fn square(size: usize, max_depth: f64) -> Self {
        let f = size as f64;
        CameraModel {
            width: size,
            height: size,
            fx: f,
            fy: f,
            cx: f / 2.0,
            cy: f / 2.0,
            max_depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid("camera has zero-sized image"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(invalid("focal lengths must be positive"));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(invalid("principal point outside the image"));
        }
        if !(self.max_depth > 0.0) {
            return Err(invalid("max_depth must be positive"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Unnormalized camera-frame direction through pixel coordinates (z = 1).
    #[inline]
    pub fn pixel_dir(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point to pixel coordinates. `None` when the
    /// point is not in front of the camera.
    pub fn project(&self, p_cam: &Vec3) -> Option<(f64, f64)> {
        if p_cam.z <= 0.0 {
            return None;
        }
        Some((
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ))
    }
}

/// Camera position plus a rotation whose columns are the camera axes
/// (right, down, forward) expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    pub rotation: Matrix3<f64>,
}

impl CameraPose {
    pub fn new(position: Vec3, rotation: Matrix3<f64>) -> Result<Self> {
        let pose = CameraPose { position, rotation };
        pose.validate()?;
        Ok(pose)
    }

    /// Pose at `position` looking at `target`, rolled so that the image
    /// "down" axis is as close as possible to `-up`.
    pub fn look_at(position: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let fwd = target - position;
        let n = fwd.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(invalid("look_at target coincides with position"));
        }
        let fwd = fwd / n;
        let mut right = fwd.cross(&up);
        if right.norm() < 1e-9 {
            // Looking straight along `up`; any perpendicular roll works.
            let alt = if fwd.x.abs() < 0.9 {
                Vec3::x()
            } else {
                Vec3::y()
            };
            right = fwd.cross(&alt);
        }
        let right = right.normalize();
        let down = fwd.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, fwd]);
        Ok(CameraPose { position, rotation })
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        if !r.iter().all(|x| x.is_finite()) || !self.position.iter().all(|x| x.is_finite()) {
            return Err(invalid("pose contains non-finite values"));
        }
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > ORTHO_TOL {
            return Err(invalid(format!(
                "rotation not orthonormal (error {err:.3e})"
            )));
        }
        if (r.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(invalid("rotation determinant is not +1"));
        }
        Ok(())
    }

    #[inline]
    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2).into()
    }

    #[inline]
    pub fn to_world_dir(&self, d_cam: &Vec3) -> Vec3 {
        self.rotation * d_cam
    }

    #[inline]
    pub fn to_camera(&self, p_world: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p_world - self.position)
    }

    /// World-space unit direction of the ray through pixel `(u, v)`.
    #[inline]
    pub fn pixel_ray(&self, cam: &CameraModel, u: f64, v: f64) -> Vec3 {
        self.to_world_dir(&cam.pixel_dir(u, v)).normalize()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_is_orthonormal_and_points_at_target() {
        let p = Vec3::new(0.3, -0.2, 0.5);
        let t = Vec3::new(0.0, 0.1, 0.2);
        let pose = CameraPose::look_at(p, t, Vec3::z()).unwrap();
        pose.validate().unwrap();
        let f = pose.forward();
        assert!((f - (t - p).normalize()).norm() < 1e-12);
        let c = pose.to_camera(&t);
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12 && c.z > 0.0);
    }

    #[test]
    fn look_at_straight_down() {
        let pose = CameraPose::look_at(Vec3::new(0.0, 0.0, 1.0), Vec3::zeros(), Vec3::z()).unwrap();
        pose.validate().unwrap();
    }

    #[test]
    fn image_down_follows_world_down() {
        let pose =
            CameraPose::look_at(Vec3::new(-1.0, 0.0, 0.0), Vec3::zeros(), Vec3::z()).unwrap();
        let down: Vec3 = pose.rotation.column(1).into();
        assert!((down - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_orthonormal() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraPose::new(Vec3::zeros(), m).is_err());
        let reflect = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(CameraPose::new(Vec3::zeros(), reflect).is_err());
    }

    #[test]
    fn projection_roundtrip() {
        let cam = CameraModel::default();
        let p = Vec3::new(0.05, -0.02, 0.4);
        let (u, v) = cam.project(&p).unwrap();
        let d = cam.pixel_dir(u, v) * p.z;
        assert!((d - p).norm() < 1e-12);
        assert!(cam.project(&Vec3::new(0.0, 0.0, -1.0)).is_none());
    }

    #[test]
    fn camera_validation() {
        CameraModel::default().validate().unwrap();
        let mut c = CameraModel::default();
        c.fx = 0.0;
        assert!(c.validate().is_err());
        let mut c = CameraModel::default();
        c.cx = 400.0;
        assert!(c.validate().is_err());
    }
}
