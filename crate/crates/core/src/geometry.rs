//! Pinhole camera model, poses and the angular quantities derived from them.
//!
//! Conventions: the world frame is right-handed with +y up. A camera frame has
//! +x to the image right, +y to the image bottom and +z along the optical
//! axis. Depth is the camera-frame z coordinate (planar depth). Pixel `(u, v)`
//! names the pixel whose center sits at that coordinate, so an image of width
//! `w` spans `u ∈ [-0.5, w - 0.5)`.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::math;
use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance for the orthonormality and determinant checks on rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics", into = "RawIntrinsics")]
pub struct Intrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl TryFrom<RawIntrinsics> for Intrinsics {
    type Error = Error;

    fn try_from(r: RawIntrinsics) -> Result<Self> {
        Intrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl From<Intrinsics> for RawIntrinsics {
    fn from(i: Intrinsics) -> Self {
        RawIntrinsics {
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            width: i.width,
            height: i.height,
        }
    }
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx > 0.0 && fx.is_finite() && fy > 0.0 && fy.is_finite()) {
            return Err(Error::InvalidIntrinsics("focal lengths must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidIntrinsics("image size must be non-zero"));
        }
        if !(cx >= 0.0 && cx < f64::from(width) && cy >= 0.0 && cy < f64::from(height)) {
            return Err(Error::InvalidIntrinsics(
                "principal point must lie inside the image",
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Centered intrinsics with square pixels and the given vertical field of view.
    pub fn from_vertical_fov(width: u32, height: u32, vertical_fov: f64) -> Result<Self> {
        if !(vertical_fov > 0.0 && vertical_fov < core::f64::consts::PI) {
            return Err(Error::InvalidIntrinsics("vertical fov must lie in (0, pi)"));
        }
        let f = f64::from(height) / (2.0 * math::tan(vertical_fov / 2.0));
        Self::new(
            f,
            f,
            (f64::from(width) - 1.0) / 2.0,
            (f64::from(height) - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }

    pub fn fy(&self) -> f64 {
        self.fy
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Vertical field of view spanned by the full image rows, in radians.
    pub fn vertical_fov(&self) -> f64 {
        let top = self.cy + 0.5;
        let bottom = f64::from(self.height) - 0.5 - self.cy;
        math::atan(top / self.fy) + math::atan(bottom / self.fy)
    }

    /// Whether the continuous pixel coordinate falls on the image.
    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && u < f64::from(self.width) - 0.5 && v >= -0.5 && v < f64::from(self.height) - 0.5
    }

    /// Intrinsics for the same camera resampled to `width × height`.
    pub fn resized(&self, width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidIntrinsics("image size must be non-zero"));
        }
        let sx = f64::from(width) / f64::from(self.width);
        let sy = f64::from(height) / f64::from(self.height);
        Self::new(
            self.fx * sx,
            self.fy * sy,
            (self.cx + 0.5) * sx - 0.5,
            (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        )
    }

    /// Camera-frame direction with unit z through pixel `(u, v)`.
    #[inline]
    pub fn unproject_unit_depth(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Camera-to-world rigid transform: `x_world = R x_cam + t`, with `t` the
/// camera position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidPose("non-finite component"));
        }
        let gram = rotation.transpose() * rotation - Mat3::identity();
        if gram.amax() > ROTATION_TOLERANCE {
            return Err(Error::InvalidPose("rotation is not orthonormal"));
        }
        if math::fabs(rotation.determinant() - 1.0) > ROTATION_TOLERANCE {
            return Err(Error::InvalidPose("rotation determinant is not 1"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Camera at `eye` looking at `target`, image-up as close to `up` as possible.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let forward = target - eye;
        let len = forward.norm();
        if !(len > 1e-12) {
            return Err(Error::InvalidPose("eye and target coincide"));
        }
        let forward = forward / len;
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            // looking along `up`; fall back to world z as the reference.
            right = forward.cross(&Vec3::z());
            if right.norm() < 1e-9 {
                right = forward.cross(&Vec3::x());
            }
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Mat3::from_columns(&[right, down, forward]);
        Self::new(rotation, eye)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vec3 {
        self.translation
    }

    /// World-frame optical axis.
    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    pub fn to_world(&self, p_cam: &Vec3) -> Vec3 {
        self.rotation * p_cam + self.translation
    }

    pub fn to_camera(&self, p_world: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p_world - self.translation)
    }

    /// Row-major rotation followed by translation, the wire layout.
    pub fn to_row_major(&self) -> ([f64; 9], [f64; 3]) {
        let r = &self.rotation;
        (
            [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            [self.translation.x, self.translation.y, self.translation.z],
        )
    }

    pub fn from_row_major(rotation: &[f64; 9], translation: &[f64; 3]) -> Result<Self> {
        Self::new(
            Mat3::from_row_slice(rotation),
            Vec3::new(translation[0], translation[1], translation[2]),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct RawPose {
    rotation: Vec<f64>,
    translation: Vec<f64>,
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        let (r, t) = self.to_row_major();
        RawPose {
            rotation: r.to_vec(),
            translation: t.to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawPose::deserialize(d)?;
        let r: [f64; 9] = raw
            .rotation
            .as_slice()
            .try_into()
            .map_err(|_| D::Error::custom("rotation must hold 9 numbers"))?;
        let t: [f64; 3] = raw
            .translation
            .as_slice()
            .try_into()
            .map_err(|_| D::Error::custom("translation must hold 3 numbers"))?;
        Pose::from_row_major(&r, &t).map_err(D::Error::custom)
    }
}

/// Camera frustum clipped to `[near, far]` along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewFrustum {
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    near: f64,
    far: f64,
}

impl ViewFrustum {
    pub fn new(pose: Pose, intrinsics: Intrinsics, near: f64, far: f64) -> Result<Self> {
        if !(near > 0.0 && near < far) {
            return Err(Error::InvalidFrustum("require 0 < near < far"));
        }
        Ok(Self {
            pose,
            intrinsics,
            near,
            far,
        })
    }

    pub fn near(&self) -> f64 {
        self.near
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        match project(p, &self.intrinsics, &self.pose) {
            Ok((u, v, d)) => d >= self.near && d <= self.far && self.intrinsics.contains_pixel(u, v),
            Err(_) => false,
        }
    }
}

/// World point seen at pixel `(u, v)` with planar depth `depth`.
pub fn back_project(u: f64, v: f64, depth: f64, intr: &Intrinsics, pose: &Pose) -> Result<Vec3> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::InvalidDepth(depth));
    }
    Ok(pose.to_world(&(intr.unproject_unit_depth(u, v) * depth)))
}

/// Pixel coordinates and planar depth of a world point.
pub fn project(p: &Vec3, intr: &Intrinsics, pose: &Pose) -> Result<(f64, f64, f64)> {
    let q = pose.to_camera(p);
    if !(q.z > 0.0) {
        return Err(Error::BehindCamera);
    }
    Ok((
        intr.fx * q.x / q.z + intr.cx,
        intr.fy * q.y / q.z + intr.cy,
        q.z,
    ))
}

/// World-frame ray through pixel `(u, v)`, scaled so that the parameter is
/// planar depth: `origin + d * direction` is the point at depth `d`.
pub fn pixel_ray(u: f64, v: f64, intr: &Intrinsics, pose: &Pose) -> (Vec3, Vec3) {
    (
        pose.translation,
        pose.rotation * intr.unproject_unit_depth(u, v),
    )
}

/// Angular diameter of a sphere as seen from the camera, as a fraction of the
/// vertical field of view. Returns `f64::INFINITY` when the camera is inside
/// the sphere.
pub fn fov_fraction(center: &Vec3, radius: f64, pose: &Pose, vertical_fov: f64) -> f64 {
    let dist = (center - pose.translation).norm();
    if dist <= radius {
        return f64::INFINITY;
    }
    2.0 * math::asin(radius / dist) / vertical_fov
}

/// Geodesic angle (radians) of the relative rotation `aᵀ b`.
pub fn rotation_angle(a: &Mat3, b: &Mat3) -> f64 {
    let rel = a.transpose() * b;
    let cos2 = rel.trace() - 1.0;
    let sin2 = Vec3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    )
    .norm();
    math::atan2(sin2, cos2)
}

/// Rotation by `angle` radians about the unit vector `axis` (Rodrigues).
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let k = axis.normalize();
    let (s, c) = (math::sin(angle), math::cos(angle));
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Mat3::identity() + kx * s + kx * kx * (1.0 - c)
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAabb", into = "RawAabb")]
pub struct Aabb {
    min: Vec3,
    max: Vec3,
}

#[derive(Serialize, Deserialize)]
struct RawAabb {
    min: [f64; 3],
    max: [f64; 3],
}

impl TryFrom<RawAabb> for Aabb {
    type Error = Error;

    fn try_from(r: RawAabb) -> Result<Self> {
        Aabb::new(Vec3::from(r.min), Vec3::from(r.max))
    }
}

impl From<Aabb> for RawAabb {
    fn from(b: Aabb) -> Self {
        RawAabb {
            min: b.min.into(),
            max: b.max.into(),
        }
    }
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if !min.iter().chain(max.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("box corners must be finite"));
        }
        if (0..3).any(|i| min[i] > max[i]) {
            return Err(Error::InvalidInput("box min must not exceed max"));
        }
        Ok(Self { min, max })
    }

    pub fn from_center_size(center: Vec3, size: Vec3) -> Result<Self> {
        Self::new(center - size / 2.0, center + size / 2.0)
    }

    pub fn min(&self) -> &Vec3 {
        &self.min
    }

    pub fn max(&self) -> &Vec3 {
        &self.max
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) / 2.0
    }

    pub fn size(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        let min = self.min.sup(&other.min);
        let max = self.max.inf(&other.max);
        Aabb::new(min, max).ok()
    }

    /// Parametric entry and exit of the ray `origin + s * dir` (slab test),
    /// or `None` if the ray misses.
    pub fn ray_interval(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            if dir[i] == 0.0 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let (a, b) = ((self.min[i] - origin[i]) * inv, (self.max[i] - origin[i]) * inv);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        (t0 <= t1).then_some((t0, t1))
    }
}
