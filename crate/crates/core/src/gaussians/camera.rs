use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Real, Vec3};

/// Pinhole intrinsics in pixels. Pixel `(x, y)` is sampled at coordinates `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: Real,
    pub fy: Real,
    pub cx: Real,
    pub cy: Real,
}

/// Perspective camera, OpenCV axes (x right, y down, z forward).
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    /// World-to-camera rotation.
    pub rotation: Mat3,
    /// World-to-camera translation.
    pub translation: Vec3,
    pub width: u32,
    pub height: u32,
}

/// Orbit parameters around a target point (y is up).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub radius: Real,
    pub elevation_deg: Real,
    pub azimuth_deg: Real,
    pub fov_deg: Real,
}

impl Default for Orbit {
    fn default() -> Self {
        Self {
            radius: 3.2,
            elevation_deg: 0.0,
            azimuth_deg: 0.0,
            fov_deg: 40.0,
        }
    }
}

impl Camera {
    pub fn new(
        intrinsics: Intrinsics,
        rotation: Mat3,
        translation: Vec3,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        if !(intrinsics.fx > 0.0 && intrinsics.fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={} fy={}",
                intrinsics.fx, intrinsics.fy
            )));
        }
        let orth = (rotation.transpose() * rotation - Mat3::identity()).abs().max();
        if orth > 1e-6 || (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(
                "world-to-camera rotation is not a proper rotation".into(),
            ));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image size must be non-zero".into()));
        }
        Ok(Self {
            intrinsics,
            rotation,
            translation,
            width,
            height,
        })
    }

    /// From a row-major 4x4 camera-to-world matrix.
    pub fn from_camera_to_world(
        pose: &[Real; 16],
        intrinsics: Intrinsics,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let r_cw = Mat3::new(
            pose[0], pose[1], pose[2], pose[4], pose[5], pose[6], pose[8], pose[9], pose[10],
        );
        let t_cw = Vec3::new(pose[3], pose[7], pose[11]);
        let rotation = r_cw.transpose();
        Self::new(intrinsics, rotation, -(rotation * t_cw), width, height)
    }

    /// Row-major 4x4 camera-to-world matrix.
    pub fn camera_to_world(&self) -> [Real; 16] {
        let r = self.rotation.transpose();
        let c = self.center();
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], c.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], c.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], c.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        fov_deg: Real,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::InvalidArgument("look-at direction parallel to up".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let f = 0.5 * width as Real / (0.5 * fov_deg.to_radians()).tan();
        let intrinsics = Intrinsics {
            fx: f,
            fy: f,
            cx: 0.5 * width as Real,
            cy: 0.5 * height as Real,
        };
        Self::new(intrinsics, rotation, -(rotation * eye), width, height)
    }

    pub fn orbit(target: Vec3, orbit: &Orbit, width: u32, height: u32) -> Result<Self> {
        if !(orbit.radius > 0.0) || !(orbit.fov_deg > 0.0 && orbit.fov_deg < 180.0) {
            return Err(Error::InvalidArgument(format!("invalid orbit {orbit:?}")));
        }
        let (el, az) = (orbit.elevation_deg.to_radians(), orbit.azimuth_deg.to_radians());
        let eye = target
            + Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos()) * orbit.radius;
        Self::look_at(eye, target, Vec3::new(0.0, 1.0, 0.0), orbit.fov_deg, width, height)
    }

    /// Camera centre in world space.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    #[inline]
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_down_negative_z_is_axis_aligned() {
        let cam = Camera::look_at(
            Vec3::new(0.0, 0.0, 5.0),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            60.0,
            64,
            64,
        )
        .unwrap();
        // world +x maps to image right, world +y to image up (negative camera y)
        let p = cam.to_camera(&Vec3::new(1.0, 1.0, 0.0));
        assert!(p.x > 0.0 && p.y < 0.0 && (p.z - 5.0).abs() < 1e-12);
        assert!((cam.center() - Vec3::new(0.0, 0.0, 5.0)).norm() < 1e-12);
    }

    #[test]
    fn pose_round_trip() {
        let cam = Camera::orbit(
            Vec3::new(0.1, 0.2, 0.0),
            &Orbit {
                radius: 3.0,
                elevation_deg: 20.0,
                azimuth_deg: -35.0,
                fov_deg: 40.0,
            },
            32,
            24,
        )
        .unwrap();
        let back =
            Camera::from_camera_to_world(&cam.camera_to_world(), cam.intrinsics, 32, 24).unwrap();
        assert!((back.rotation - cam.rotation).abs().max() < 1e-12);
        assert!((back.translation - cam.translation).norm() < 1e-12);
    }

    #[test]
    fn non_rigid_rotation_is_rejected() {
        let k = Intrinsics {
            fx: 10.0,
            fy: 10.0,
            cx: 0.0,
            cy: 0.0,
        };
        assert!(Camera::new(k, Mat3::identity() * 2.0, Vec3::zeros(), 4, 4).is_err());
        let mut reflect = Mat3::identity();
        reflect[(0, 0)] = -1.0;
        assert!(Camera::new(k, reflect, Vec3::zeros(), 4, 4).is_err());
    }
}
