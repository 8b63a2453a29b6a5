//! Quaternions, rigid poses, pinhole projection and frustum membership.
//!
//! Conventions: quaternions are stored `(w, x, y, z)` and multiplied with the
//! Hamilton product. Poses are camera-to-world. The camera frame has `+z`
//! forward, `+x` right and `+y` down so that pixel coordinates grow with
//! `x` and `y`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Default near plane of the view frustum (m).
pub const Z_NEAR: f64 = 1e-4;
/// Default far plane, equal to the depth of the local box (m).
pub const Z_FAR: f64 = 4.8;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Self::new(c, s * a.x, s * a.y, s * a.z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateQuaternion);
        }
        Ok(Self::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    pub fn conj(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Raw Hamilton product without renormalization.
    pub fn hamilton(&self, rhs: &Quat) -> Quat {
        let (a, b, c, d) = (self.w, self.x, self.y, self.z);
        let (e, f, g, h) = (rhs.w, rhs.x, rhs.y, rhs.z);
        Quat {
            w: a * e - b * f - c * g - d * h,
            x: a * f + b * e + c * h - d * g,
            y: a * g - b * h + c * e + d * f,
            z: a * h + b * g - c * f + d * e,
        }
    }

    pub fn dot(&self, rhs: &Quat) -> f64 {
        self.w * rhs.w + self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    /// Unit quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_rotation_matrix(m: &Mat3) -> Quat {
        let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Quat::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            Quat::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            Quat::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            Quat::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        };
        let q = q.normalized().unwrap_or(Quat::IDENTITY);
        // Canonical hemisphere keeps conversions reproducible.
        if q.w < 0.0 {
            Quat::new(-q.w, -q.x, -q.y, -q.z)
        } else {
            q
        }
    }

    /// Rotates `v` by this (unit) quaternion.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        rotation_matrix(self) * v
    }
}

/// Hamilton product `a ⊗ b`, renormalized to unit length.
pub fn compose_quaternions(a: &Quat, b: &Quat) -> Result<Quat> {
    if !a.is_finite() || !b.is_finite() || a.norm() == 0.0 || b.norm() == 0.0 {
        return Err(Error::DegenerateQuaternion);
    }
    a.hamilton(b).normalized()
}

/// Rotation matrix of a unit quaternion.
pub fn rotation_matrix(q: &Quat) -> Mat3 {
    let Quat { w, x, y, z } = *q;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, xz, yz) = (x * y, x * z, y * z);
    let (wx, wy, wz) = (w * x, w * y, w * z);
    Mat3::new(
        1.0 - 2.0 * (yy + zz),
        2.0 * (xy - wz),
        2.0 * (xz + wy),
        2.0 * (xy + wz),
        1.0 - 2.0 * (xx + zz),
        2.0 * (yz - wx),
        2.0 * (xz - wy),
        2.0 * (yz + wx),
        1.0 - 2.0 * (xx + yy),
    )
}

/// Spherical interpolation from the identity rotation to `q` at fraction `t`.
///
/// `t = 0` gives the identity and `t = 1` gives `q` (up to sign).
pub fn slerp_from_identity(q: &Quat, t: f64) -> Quat {
    if t == 1.0 {
        return *q;
    }
    if t == 0.0 {
        return Quat::IDENTITY;
    }
    // Take the short arc.
    let q = if q.w < 0.0 {
        Quat::new(-q.w, -q.x, -q.y, -q.z)
    } else {
        *q
    };
    let vn = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
    if vn < 1e-15 {
        return Quat::IDENTITY;
    }
    let half = vn.atan2(q.w);
    let (s, c) = (t * half).sin_cos();
    Quat::new(c, s * q.x / vn, s * q.y / vn, s * q.z / vn)
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Mat3::identity()).amax();
        let det = rotation.determinant();
        if !(err <= ORTHONORMAL_TOL) || !((det - 1.0).abs() <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidConfig(format!(
                "pose rotation is not a proper rotation (orthonormality error {err:e}, det {det})"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("pose translation not finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_quat(q: &Quat, translation: Vec3) -> Result<Self> {
        Self::new(rotation_matrix(&q.normalized()?), translation)
    }

    /// Camera at `position` in a z-up world, looking along heading `yaw`
    /// (radians from +x towards +y) and tilted down by `pitch` radians.
    pub fn from_yaw_pitch(position: Vec3, yaw: f64, pitch: f64) -> Self {
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let forward = Vec3::new(cp * cy, cp * sy, -sp);
        let right = Vec3::new(sy, -cy, 0.0);
        let down = forward.cross(&right);
        Self {
            rotation: Mat3::from_columns(&[right, down, forward]),
            translation: position,
        }
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// Optical axis in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    pub fn rotation_quat(&self) -> Quat {
        Quat::from_rotation_matrix(&self.rotation)
    }

    /// Applies the world-frame rigid motion `(r, t)` to the camera.
    pub fn transformed(&self, r: &Mat3, t: &Vec3) -> Pose {
        Pose {
            rotation: r * self.rotation,
            translation: r * self.translation + t,
        }
    }

    /// Row-major 3x4 `[R | t]`.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    pub fn from_row_major(m: &[f64; 12]) -> Result<Self> {
        let rotation = Mat3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Self::new(rotation, Vec3::new(m[3], m[7], m[11]))
    }
}

/// `x_c = Rᵀ (p − t)`.
pub fn world_to_camera(p_world: &Vec3, pose: &Pose) -> Vec3 {
    pose.rotation.transpose() * (p_world - pose.translation)
}

/// `p = R x_c + t`.
pub fn camera_to_world(p_cam: &Vec3, pose: &Pose) -> Vec3 {
    pose.rotation * p_cam + pose.translation
}

/// Pinhole intrinsics with the image size they belong to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Intrinsics {
    /// 640x480 image with a 500 px focal length.
    fn default() -> Self {
        Self {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Row-major 3x3 camera matrix.
    pub fn matrix_row_major(&self) -> [f64; 9] {
        [self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0]
    }

    /// Camera-frame direction through pixel coordinate `(u, v)`, scaled to
    /// unit z-depth.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Result of a pinhole projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    pub z: f64,
    /// Set when `z <= 0`; `u` and `v` are then meaningless.
    pub behind_camera: bool,
}

pub fn project_to_pixel(p_cam: &Vec3, k: &Intrinsics) -> PixelProjection {
    let z = p_cam.z;
    if !(z > 0.0) {
        return PixelProjection {
            u: f64::NAN,
            v: f64::NAN,
            z,
            behind_camera: true,
        };
    }
    PixelProjection {
        u: k.fx * p_cam.x / z + k.cx,
        v: k.fy * p_cam.y / z + k.cy,
        z,
        behind_camera: false,
    }
}

/// Frustum test on a camera-frame point.
pub fn in_frustum_cam(p_cam: &Vec3, k: &Intrinsics, z_near: f64, z_far: f64) -> bool {
    let proj = project_to_pixel(p_cam, k);
    !proj.behind_camera
        && proj.z > z_near
        && proj.z <= z_far
        && proj.u >= 0.0
        && proj.u < k.width as f64
        && proj.v >= 0.0
        && proj.v < k.height as f64
}

/// True iff `p_world` projects inside the image with depth in `(z_near, z_far]`.
pub fn in_frustum(p_world: &Vec3, pose: &Pose, k: &Intrinsics, z_near: f64, z_far: f64) -> bool {
    in_frustum_cam(&world_to_camera(p_world, pose), k, z_near, z_far)
}
