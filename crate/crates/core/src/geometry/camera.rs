use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Ray with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

/// Rigid world-to-camera transform: `x_cam = rotation * x_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }
}

/// Distortion-free pinhole camera. Camera frame: x right, y down, z forward.
/// Pixel `(x, y)` covers the image square `[x, x+1) × [y, y+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    intrinsics: Intrinsics,
    pose: Pose,
}

const ROTATION_TOLERANCE: f64 = 1e-6;

impl PinholeCamera {
    pub fn new(intrinsics: Intrinsics, pose: Pose) -> Result<Self> {
        let Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        } = intrinsics;
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image size must be non-zero".into()));
        }
        if !(0.0..f64::from(width)).contains(&cx) || !(0.0..f64::from(height)).contains(&cy) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        let r = pose.rotation;
        let orthogonality = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(orthogonality <= ROTATION_TOLERANCE && (r.determinant() - 1.0).abs() <= ROTATION_TOLERANCE)
        {
            return Err(Error::InvalidCamera(
                "rotation must be orthonormal with determinant +1".into(),
            ));
        }
        if !pose.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("non-finite translation".into()));
        }
        Ok(Self { intrinsics, pose })
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width as usize
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height as usize
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.pose.rotation.transpose() * self.pose.translation)
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.pose.rotation * world + self.pose.translation
    }

    /// Continuous image coordinates of a world point, or `None` behind the camera.
    pub fn project(&self, world: &Vec3) -> Option<(f64, f64)> {
        let c = self.to_camera(world);
        if c.z <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        Some((k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy))
    }

    /// World-space ray through image point `(x + jitter.0, y + jitter.1)`.
    pub fn pixel_ray(&self, x: u32, y: u32, jitter: (f64, f64)) -> Ray {
        self.image_ray(f64::from(x) + jitter.0, f64::from(y) + jitter.1)
    }

    /// World-space ray through a continuous image point.
    pub fn image_ray(&self, u: f64, v: f64) -> Ray {
        let k = &self.intrinsics;
        let dir_cam = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        Ray::new(self.center(), self.pose.rotation.transpose() * dir_cam)
    }

    /// Angle subtended by one pixel along x and y (radians, small-angle).
    pub fn pixel_angle(&self) -> (f64, f64) {
        (1.0 / self.intrinsics.fx, 1.0 / self.intrinsics.fy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn intrinsics(fx: f64, cx: f64) -> Intrinsics {
        Intrinsics {
            fx,
            fy: fx,
            cx,
            cy: cx,
            width: 200,
            height: 200,
        }
    }

    #[test]
    fn principal_point_ray_is_optical_axis() {
        let cam = PinholeCamera::new(intrinsics(100.0, 50.0), Pose::identity()).unwrap();
        let ray = cam.pixel_ray(50, 50, (0.0, 0.0));
        assert_relative_eq!(ray.direction, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn offset_pixel_direction() {
        let cam = PinholeCamera::new(intrinsics(100.0, 50.0), Pose::identity()).unwrap();
        let ray = cam.pixel_ray(150, 50, (0.0, 0.0));
        let s = 0.5f64.sqrt();
        assert_relative_eq!(ray.direction, Vec3::new(s, 0.0, s), epsilon = 1e-12);
    }

    #[test]
    fn directions_are_unit() {
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 1.1);
        let pose = Pose {
            rotation: *rot.matrix(),
            translation: Vec3::new(0.5, -2.0, 3.0),
        };
        let cam = PinholeCamera::new(intrinsics(80.0, 99.5), pose).unwrap();
        for (x, y) in [(0, 0), (199, 0), (17, 123), (199, 199)] {
            let d = cam.pixel_ray(x, y, (0.5, 0.25)).direction;
            assert!((d.norm() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn project_inverts_ray() {
        let rot = nalgebra::Rotation3::from_euler_angles(0.1, 0.4, -0.3);
        let pose = Pose {
            rotation: *rot.matrix(),
            translation: Vec3::new(1.0, 0.0, 2.0),
        };
        let cam = PinholeCamera::new(intrinsics(120.0, 100.0), pose).unwrap();
        let ray = cam.image_ray(37.25, 141.5);
        let (u, v) = cam.project(&ray.at(3.0)).unwrap();
        assert_relative_eq!(u, 37.25, epsilon = 1e-9);
        assert_relative_eq!(v, 141.5, epsilon = 1e-9);
    }

    #[test]
    fn invalid_cameras_rejected() {
        assert!(matches!(
            PinholeCamera::new(intrinsics(0.0, 50.0), Pose::identity()),
            Err(Error::InvalidCamera(_))
        ));
        assert!(PinholeCamera::new(intrinsics(100.0, 250.0), Pose::identity()).is_err());
        let mut pose = Pose::identity();
        pose.rotation[(0, 0)] = -1.0;
        assert!(PinholeCamera::new(intrinsics(100.0, 50.0), pose).is_err());
        pose.rotation = Matrix3::identity() * 1.1;
        assert!(PinholeCamera::new(intrinsics(100.0, 50.0), pose).is_err());
    }
}
