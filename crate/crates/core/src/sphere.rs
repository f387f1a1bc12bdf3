//! Sphere proxies for angular coverage.
//!
//! A proxy is a sphere `(c, r, S)` anchored on a detected object. Each of the
//! `N` subsurfaces in `S` stands for one viewing direction; it is marked
//! covered once the object has been seen from close to that direction. All
//! spheres share one canonical direction set so subsurfaces line up by index
//! across spheres, which is what makes merging coverage well defined.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::detection::{centroid, object_depth, Detection};
use crate::frame::{is_valid_depth, CameraFrame};
use crate::geometry::{back_project, fov_fraction, pixel_ray, Intrinsics, Pose, Vec3, ViewFrustum};
use crate::math;
use crate::{Error, Result};

/// Default bounding-box to radius scale `k`.
pub const DEFAULT_RADIUS_SCALE: f64 = 0.75;
/// Default number of subsurfaces per sphere.
pub const DEFAULT_SUBSURFACES: usize = 32;
/// Default merged-radius cap, meters.
pub const DEFAULT_MAX_RADIUS: f64 = 1.0;
/// Default soft-edge depth tolerance, meters.
pub const DEFAULT_DEPTH_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subsurface {
    pub dir: Vec3,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereProxy {
    pub id: u64,
    pub center: Vec3,
    pub radius: f64,
    pub category: String,
    pub created_at: f64,
    pub subsurfaces: Vec<Subsurface>,
}

impl SphereProxy {
    /// A sphere with all subsurfaces uncovered.
    pub fn new(
        id: u64,
        center: Vec3,
        radius: f64,
        directions: &[Vec3],
        created_at: f64,
        category: impl Into<String>,
    ) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput("sphere radius must be positive"));
        }
        if directions.is_empty() {
            return Err(Error::InvalidCount);
        }
        if directions.iter().any(|d| math::fabs(d.norm() - 1.0) > 1e-9) {
            return Err(Error::InvalidInput("subsurface directions must be unit vectors"));
        }
        Ok(Self {
            id,
            center,
            radius,
            category: category.into(),
            created_at,
            subsurfaces: directions
                .iter()
                .map(|&dir| Subsurface { dir, covered: false })
                .collect(),
        })
    }

    pub fn total(&self) -> usize {
        self.subsurfaces.len()
    }

    pub fn covered_count(&self) -> usize {
        self.subsurfaces.iter().filter(|s| s.covered).count()
    }

    pub fn remaining(&self) -> usize {
        self.total() - self.covered_count()
    }

    pub fn is_complete(&self) -> bool {
        self.subsurfaces.iter().all(|s| s.covered)
    }

    pub fn intersects(&self, other: &SphereProxy) -> bool {
        (self.center - other.center).norm() < self.radius + other.radius
    }

    /// Whether `other` lies entirely inside `self`.
    pub fn contains(&self, other: &SphereProxy) -> bool {
        (self.center - other.center).norm() + other.radius <= self.radius
    }

    /// Index of the subsurface whose direction is angularly closest to `dir`.
    pub fn nearest_subsurface(&self, dir: &Vec3) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, s) in self.subsurfaces.iter().enumerate() {
            let d = s.dir.dot(dir);
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        best
    }

    fn is_older_than(&self, other: &SphereProxy) -> bool {
        (self.created_at, self.id) < (other.created_at, other.id)
    }
}

/// `n` near-uniform unit directions on the generalized spiral of Saff and
/// Kuijlaars, with the spiral axis along world +y. Index 0 is the -y pole.
pub fn distribute_subsurfaces(n: usize) -> Result<Vec<Vec3>> {
    match n {
        0 => Err(Error::InvalidCount),
        1 => Ok(alloc::vec![Vec3::new(0.0, -1.0, 0.0)]),
        _ => {
            let nf = n as f64;
            let step = 3.6 / math::sqrt(nf);
            let mut phi = 0.0f64;
            let mut out = Vec::with_capacity(n);
            for k in 0..n {
                let h = -1.0 + 2.0 * k as f64 / (nf - 1.0);
                let sin_theta = math::sqrt((1.0 - h * h).max(0.0));
                if k == 0 || k == n - 1 {
                    phi = 0.0;
                } else {
                    phi = (phi + step / sin_theta) % core::f64::consts::TAU;
                }
                let d = Vec3::new(sin_theta * math::cos(phi), h, sin_theta * math::sin(phi));
                out.push(d / d.norm());
            }
            Ok(out)
        }
    }
}

/// Build a proxy for a detected object seen in `frame`.
///
/// The center is the mask centroid back-projected at the object depth; the
/// radius is the metric distance between the center and an auxiliary point
/// `r_px = k · max(bbox extent)` pixels above it at the same depth.
pub fn generate_sphere(det: &Detection, frame: &CameraFrame, k: f64, subsurfaces: usize) -> Result<SphereProxy> {
    if !(k > 0.0) {
        return Err(Error::InvalidConfig("radius scale must be positive"));
    }
    let bbox = det.bbox();
    let extent = bbox.width_span().max(bbox.height_span());
    if extent == 0 {
        return Err(Error::InvalidDetection("bounding box has zero extent"));
    }
    let depth = object_depth(det.mask(), &frame.depth)?;
    let (u_o, v_o) = centroid(det.mask());
    let center = back_project(u_o, v_o, depth, &frame.intrinsics, &frame.pose)?;
    let r_px = k * f64::from(extent);
    let q = back_project(u_o, v_o - r_px, depth, &frame.intrinsics, &frame.pose)?;
    let directions = distribute_subsurfaces(subsurfaces)?;
    SphereProxy::new(0, center, (q - center).norm(), &directions, frame.timestamp, det.category())
}

/// How a proxy is drawn for a given camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DisplayMode {
    /// Within the valid distance range: full sphere, coverage can be taken.
    Full,
    /// Too far: a fixed-size marker is drawn instead.
    Dot,
    /// Too close (or inside): nothing is drawn.
    Hidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayConfig {
    /// FoV fraction at which a sphere switches from `Dot` to `Full`.
    pub full_fraction: f64,
    /// FoV fraction at which a sphere disappears.
    pub hidden_fraction: f64,
    /// Soft-edge tolerance for occlusion, meters.
    pub depth_tolerance: f64,
}

impl Default for DisplayConfig {
    fn default() -> Self {
        Self {
            full_fraction: 0.20,
            hidden_fraction: 1.00,
            depth_tolerance: DEFAULT_DEPTH_TOLERANCE,
        }
    }
}

impl DisplayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_tolerance > 0.0) {
            return Err(Error::InvalidConfig("depth tolerance must be positive"));
        }
        if !(self.full_fraction > 0.0 && self.full_fraction < self.hidden_fraction) {
            return Err(Error::InvalidConfig("require 0 < full fraction < hidden fraction"));
        }
        Ok(())
    }
}

pub fn display_mode(sphere: &SphereProxy, pose: &Pose, vertical_fov: f64, cfg: &DisplayConfig) -> DisplayMode {
    let f = fov_fraction(&sphere.center, sphere.radius, pose, vertical_fov);
    if f < cfg.full_fraction {
        DisplayMode::Dot
    } else if f < cfg.hidden_fraction {
        DisplayMode::Full
    } else {
        DisplayMode::Hidden
    }
}

/// Opacity of a sphere fragment given its depth and the scene depth at the
/// same pixel: opaque in front of the scene, fading linearly to transparent
/// `t_depth` behind it.
pub fn occlusion_alpha(sphere_depth: f64, scene_depth: f64, t_depth: f64) -> f64 {
    let gap = sphere_depth - scene_depth;
    (1.0 - gap / t_depth).clamp(0.0, 1.0)
}

/// Planar depth of the front surface of `sphere` at pixel `(u, v)`, if the
/// pixel ray hits it in front of the camera.
pub fn surface_depth(sphere: &SphereProxy, intr: &Intrinsics, pose: &Pose, u: f64, v: f64) -> Option<f64> {
    let (o, d) = pixel_ray(u, v, intr, pose);
    let oc = o - sphere.center;
    let a = d.norm_squared();
    let b = 2.0 * d.dot(&oc);
    let c = oc.norm_squared() - sphere.radius * sphere.radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let s = math::sqrt(disc);
    let t0 = (-b - s) / (2.0 * a);
    let t1 = (-b + s) / (2.0 * a);
    [t0, t1].into_iter().find(|&t| t > 0.0)
}

/// Largest per-pixel occlusion alpha of `sphere` over the frame, sampling every
/// `stride` pixels. Zero means the sphere is entirely hidden by scene geometry.
pub fn max_visible_alpha(sphere: &SphereProxy, frame: &CameraFrame, t_depth: f64, stride: usize) -> f64 {
    let stride = stride.max(1);
    let mut best = 0.0f64;
    for v in (0..frame.depth.height()).step_by(stride) {
        for u in (0..frame.depth.width()).step_by(stride) {
            let Some(sd) = surface_depth(sphere, &frame.intrinsics, &frame.pose, f64::from(u), f64::from(v)) else {
                continue;
            };
            let scene = frame.depth.get(u, v);
            let alpha = if is_valid_depth(scene) {
                occlusion_alpha(sd, f64::from(scene), t_depth)
            } else {
                1.0
            };
            best = best.max(alpha);
        }
    }
    best
}

/// Mark the subsurface facing the camera as covered.
///
/// Coverage is only taken while the sphere is in `Full` mode and its center
/// lies inside the view frustum. Returns the newly covered indices.
pub fn mark_coverage(sphere: &mut SphereProxy, frustum: &ViewFrustum, cfg: &DisplayConfig) -> Vec<usize> {
    let pose = &frustum.pose;
    let mode = display_mode(sphere, pose, frustum.intrinsics.vertical_fov(), cfg);
    if mode != DisplayMode::Full || !frustum.contains(&sphere.center) {
        return Vec::new();
    }
    let to_camera = pose.position() - sphere.center;
    let len = to_camera.norm();
    if !(len > 0.0) {
        return Vec::new();
    }
    let i = sphere.nearest_subsurface(&(to_camera / len));
    if sphere.subsurfaces[i].covered {
        return Vec::new();
    }
    sphere.subsurfaces[i].covered = true;
    alloc::vec![i]
}

/// Where the merged sphere is centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeCenter {
    /// Midpoint of the two centers.
    #[default]
    Midpoint,
    /// Center of the minimal sphere enclosing both parents.
    Enclosing,
}

/// How subsurface coverage carries over into a merged sphere.
///
/// Both policies intersect the parents' subsurface sets index-wise; they
/// differ in which set is intersected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMerge {
    /// Intersect the sets of subsurfaces still awaiting capture: a subsurface
    /// stays covered if either parent covered it.
    #[default]
    IntersectRemaining,
    /// Intersect the covered sets: a subsurface is covered only if both
    /// parents covered it.
    IntersectCovered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub max_radius: f64,
    pub center: MergeCenter,
    pub coverage: CoverageMerge,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            max_radius: DEFAULT_MAX_RADIUS,
            center: MergeCenter::default(),
            coverage: CoverageMerge::default(),
        }
    }
}

/// Merge two intersecting spheres.
///
/// A sphere fully inside the other is absorbed and the larger one is returned
/// unchanged. Otherwise the result has radius `(r₁ + r₂ + ‖c₁ − c₂‖) / 2`,
/// keeps the older parent's id, timestamp and category, and combines coverage
/// per `cfg.coverage`. The radius cap is applied by [`merge_pass`], not here.
pub fn merge(a: &SphereProxy, b: &SphereProxy, cfg: &MergeConfig) -> Result<SphereProxy> {
    if !a.intersects(b) {
        return Err(Error::NotIntersecting);
    }
    if a.total() != b.total() {
        return Err(Error::InvalidInput("spheres use different subsurface counts"));
    }
    let (large, small) = if a.radius > b.radius || (a.radius == b.radius && !b.is_older_than(a)) {
        (a, b)
    } else {
        (b, a)
    };
    if large.contains(small) {
        return Ok(large.clone());
    }
    let d = (a.center - b.center).norm();
    let radius = (a.radius + b.radius + d) / 2.0;
    let center = match cfg.center {
        MergeCenter::Midpoint => (a.center + b.center) / 2.0,
        MergeCenter::Enclosing => {
            let (c1, r1, c2) = (&a.center, a.radius, &b.center);
            c1 + (c2 - c1) * ((radius - r1) / d)
        }
    };
    let (older, _) = if a.is_older_than(b) { (a, b) } else { (b, a) };
    let subsurfaces = a
        .subsurfaces
        .iter()
        .zip(&b.subsurfaces)
        .zip(&older.subsurfaces)
        .map(|((sa, sb), so)| Subsurface {
            dir: so.dir,
            covered: match cfg.coverage {
                CoverageMerge::IntersectRemaining => sa.covered || sb.covered,
                CoverageMerge::IntersectCovered => sa.covered && sb.covered,
            },
        })
        .collect();
    Ok(SphereProxy {
        id: older.id,
        center,
        radius,
        category: older.category.clone(),
        created_at: older.created_at,
        subsurfaces,
    })
}

/// One merge performed by [`merge_pass_logged`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub parents: [u64; 2],
    pub result: SphereProxy,
}

/// Merge intersecting spheres until none intersect, cheapest pair first.
pub fn merge_pass(spheres: Vec<SphereProxy>, cfg: &MergeConfig) -> Result<Vec<SphereProxy>> {
    merge_pass_logged(spheres, cfg).map(|(s, _)| s)
}

/// [`merge_pass`] that also reports every merge it performed, in order.
///
/// Each round merges the intersecting pair with the smallest merged radius
/// (ties broken by position). Merged radii are truncated at `cfg.max_radius`.
pub fn merge_pass_logged(mut spheres: Vec<SphereProxy>, cfg: &MergeConfig) -> Result<(Vec<SphereProxy>, Vec<MergeStep>)> {
    if !(cfg.max_radius > 0.0) {
        return Err(Error::InvalidConfig("max radius must be positive"));
    }
    let mut log = Vec::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..spheres.len() {
            for j in i + 1..spheres.len() {
                let (a, b) = (&spheres[i], &spheres[j]);
                if !a.intersects(b) {
                    continue;
                }
                let key = (a.radius + b.radius + (a.center - b.center).norm()) / 2.0;
                if best.is_none_or(|(k, _, _)| key < k) {
                    best = Some((key, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let (a, b) = (&spheres[i], &spheres[j]);
        let absorbed = a.contains(b) || b.contains(a);
        let mut merged = merge(a, b, cfg)?;
        if !absorbed {
            merged.radius = merged.radius.min(cfg.max_radius);
        }
        log.push(MergeStep {
            parents: [a.id, b.id],
            result: merged.clone(),
        });
        spheres.remove(j);
        spheres[i] = merged;
    }
    Ok((spheres, log))
}
