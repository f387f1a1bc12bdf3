//! Deterministic synthetic environment: primitive scenes, analytic ray-cast
//! rendering, trajectories and seeded ground-truth viewpoints.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::frame::{CameraFrame, DepthMap, Raster, RgbImage, INVALID_DEPTH};
use crate::geometry::{pixel_ray, Aabb, Intrinsics, Pose, Vec3};
use crate::math;
use crate::scoring::in_vocabulary;
use crate::session::{CaptureSession, IngestReport, Pipeline};
use crate::{Error, Result};

/// Object id of background pixels.
pub const NO_OBJECT: u32 = u32::MAX;

/// Hits closer than this along the unit-depth ray are ignored.
const MIN_HIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    /// Axis-aligned box with full extents.
    Box { size: Vec3 },
    /// Infinite plane through the object position.
    Plane { normal: Vec3 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawObject", into = "RawObject")]
pub struct SceneObject {
    pub shape: Shape,
    pub position: Vec3,
    pub category: String,
}

#[derive(Serialize, Deserialize)]
struct RawObject {
    shape: String,
    position: [f64; 3],
    size: Vec<f64>,
    category: String,
}

impl TryFrom<RawObject> for SceneObject {
    type Error = Error;

    fn try_from(r: RawObject) -> Result<Self> {
        let vec3 = |s: &[f64]| -> Result<Vec3> {
            match s {
                [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
                _ => Err(Error::InvalidScene(format!("{} size needs three values", r.shape))),
            }
        };
        let shape = match r.shape.as_str() {
            "sphere" => match r.size.as_slice() {
                [radius] => Shape::Sphere { radius: *radius },
                _ => return Err(Error::InvalidScene("sphere size is [radius]".into())),
            },
            "box" => Shape::Box { size: vec3(&r.size)? },
            "plane" => Shape::Plane { normal: vec3(&r.size)? },
            other => return Err(Error::InvalidScene(format!("unknown shape {other:?}"))),
        };
        Ok(SceneObject {
            shape,
            position: Vec3::from(r.position),
            category: r.category,
        })
    }
}

impl From<SceneObject> for RawObject {
    fn from(o: SceneObject) -> Self {
        let (shape, size) = match o.shape {
            Shape::Sphere { radius } => ("sphere", alloc::vec![radius]),
            Shape::Box { size } => ("box", alloc::vec![size.x, size.y, size.z]),
            Shape::Plane { normal } => ("plane", alloc::vec![normal.x, normal.y, normal.z]),
        };
        RawObject {
            shape: shape.into(),
            position: o.position.into(),
            size,
            category: o.category,
        }
    }
}

impl SceneObject {
    /// Ray parameter of the nearest hit beyond `MIN_HIT`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        match self.shape {
            Shape::Sphere { radius } => {
                let oc = origin - self.position;
                let a = dir.dot(dir);
                let b = oc.dot(dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = math::sqrt(disc);
                let t0 = (-b - s) / a;
                let t1 = (-b + s) / a;
                [t0, t1].into_iter().find(|&t| t > MIN_HIT)
            }
            Shape::Box { size } => {
                let bb = Aabb::from_center_size(self.position, size).ok()?;
                let (t0, t1) = bb.ray_interval(origin, dir)?;
                [t0, t1].into_iter().find(|&t| t > MIN_HIT)
            }
            Shape::Plane { normal } => {
                let denom = normal.dot(dir);
                if math::fabs(denom) < 1e-12 {
                    return None;
                }
                let t = normal.dot(&(self.position - origin)) / denom;
                (t > MIN_HIT).then_some(t)
            }
        }
    }

    /// Bounding box of finite shapes.
    pub fn bounding_box(&self) -> Option<Aabb> {
        match self.shape {
            Shape::Sphere { radius } => Aabb::from_center_size(self.position, Vec3::repeat(2.0 * radius)).ok(),
            Shape::Box { size } => Aabb::from_center_size(self.position, size).ok(),
            Shape::Plane { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.shape {
            Shape::Sphere { radius } => radius > 0.0 && radius.is_finite(),
            Shape::Box { size } => size.iter().all(|&s| s > 0.0 && s.is_finite()),
            Shape::Plane { normal } => normal.norm() > 1e-12 && normal.iter().all(|x| x.is_finite()),
        };
        if !ok || !self.position.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidScene(format!("degenerate {} object", self.category)));
        }
        if !in_vocabulary(&self.category) {
            return Err(Error::InvalidScene(format!("category {:?} is not in the vocabulary", self.category)));
        }
        Ok(())
    }
}

/// Category-labelled primitives inside an axis-aligned bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScene", into = "RawScene")]
pub struct Scene {
    bounds: Aabb,
    objects: Vec<SceneObject>,
    free_space: Option<Aabb>,
    coverage_region: Option<Aabb>,
}

#[derive(Serialize, Deserialize)]
struct RawScene {
    bounds: Aabb,
    objects: Vec<SceneObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    free_space: Option<Aabb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coverage_region: Option<Aabb>,
}

impl TryFrom<RawScene> for Scene {
    type Error = Error;

    fn try_from(r: RawScene) -> Result<Self> {
        Scene::new(r.bounds, r.objects, r.free_space, r.coverage_region)
    }
}

impl From<Scene> for RawScene {
    fn from(s: Scene) -> Self {
        RawScene {
            bounds: s.bounds,
            objects: s.objects,
            free_space: s.free_space,
            coverage_region: s.coverage_region,
        }
    }
}

impl Scene {
    pub fn new(
        bounds: Aabb,
        objects: Vec<SceneObject>,
        free_space: Option<Aabb>,
        coverage_region: Option<Aabb>,
    ) -> Result<Self> {
        for o in &objects {
            o.validate()?;
            let inside = match o.bounding_box() {
                Some(bb) => bounds.contains_box(&bb),
                None => bounds.contains(&o.position),
            };
            if !inside {
                return Err(Error::InvalidScene(format!("{} object leaves the scene bounds", o.category)));
            }
        }
        for (name, b) in [("free space", &free_space), ("coverage region", &coverage_region)] {
            if let Some(b) = b {
                if !bounds.contains_box(b) {
                    return Err(Error::InvalidScene(format!("{name} leaves the scene bounds")));
                }
            }
        }
        Ok(Self {
            bounds,
            objects,
            free_space,
            coverage_region,
        })
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    /// Region ground-truth cameras are drawn from; the scene bounds if unset.
    pub fn free_space(&self) -> &Aabb {
        self.free_space.as_ref().unwrap_or(&self.bounds)
    }

    pub fn coverage_region(&self) -> Option<&Aabb> {
        self.coverage_region.as_ref()
    }

    /// Nearest hit along a ray as `(t, object index)`.
    pub fn cast(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, u32)> {
        let mut best: Option<(f64, u32)> = None;
        for (i, o) in self.objects.iter().enumerate() {
            if let Some(t) = o.intersect(origin, dir) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i as u32));
                }
            }
        }
        best
    }
}

/// Output of [`render`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rendering {
    pub depth: DepthMap,
    pub ids: Raster<u32>,
    pub rgb: RgbImage,
}

/// Flat false color per object id.
pub fn object_color(id: u32) -> [u8; 3] {
    if id == NO_OBJECT {
        return [0, 0, 0];
    }
    let h = id.wrapping_add(1).wrapping_mul(0x9E37_79B9);
    [(h >> 24) as u8 | 0x40, (h >> 16) as u8 | 0x40, (h >> 8) as u8 | 0x40]
}

/// Ray-cast planar depth, object ids and false-color RGB. Pixels without a
/// hit carry `INVALID_DEPTH` and `NO_OBJECT`.
pub fn render(scene: &Scene, pose: &Pose, intr: &Intrinsics) -> Rendering {
    let (w, h) = (intr.width(), intr.height());
    let mut depth = Raster::filled(w, h, INVALID_DEPTH);
    let mut ids = Raster::filled(w, h, NO_OBJECT);
    let mut rgb = Raster::filled(w, h, [0u8; 3]);
    for v in 0..h {
        for u in 0..w {
            // the ray has unit camera-z, so t is planar depth
            let (o, d) = pixel_ray(f64::from(u), f64::from(v), intr, pose);
            if let Some((t, id)) = scene.cast(&o, &d) {
                depth.set(u, v, t as f32);
                ids.set(u, v, id);
                rgb.set(u, v, object_color(id));
            }
        }
    }
    Rendering { depth, ids, rgb }
}

pub fn render_ids(scene: &Scene, pose: &Pose, intr: &Intrinsics) -> Raster<u32> {
    render(scene, pose, intr).ids
}

pub fn render_frame(scene: &Scene, pose: &Pose, intr: &Intrinsics, timestamp: f64) -> CameraFrame {
    let r = render(scene, pose, intr);
    CameraFrame {
        rgb: r.rgb,
        depth: r.depth,
        intrinsics: *intr,
        pose: *pose,
        timestamp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub pose: Pose,
}

/// Timed camera path with strictly increasing times.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory", into = "RawTrajectory")]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
}

#[derive(Serialize, Deserialize)]
struct RawTrajectory {
    samples: Vec<TrajectorySample>,
}

impl TryFrom<RawTrajectory> for Trajectory {
    type Error = Error;

    fn try_from(r: RawTrajectory) -> Result<Self> {
        Trajectory::new(r.samples)
    }
}

impl From<Trajectory> for RawTrajectory {
    fn from(t: Trajectory) -> Self {
        RawTrajectory { samples: t.samples }
    }
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self> {
        if samples.iter().any(|s| !s.t.is_finite()) {
            return Err(Error::InvalidInput("trajectory time is not finite"));
        }
        if samples.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidInput("trajectory times must be strictly increasing"));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Parameters of a helical orbit around a target point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HelixOrbit {
    pub target: Vec3,
    pub radius: f64,
    /// Elevation of the first pose, radians above the horizontal.
    pub elevation_start: f64,
    pub elevation_end: f64,
    pub turns: f64,
    pub count: usize,
    pub interval: f64,
}

impl HelixOrbit {
    /// Poses on the helix, each looking at the target with +y up.
    pub fn trajectory(&self) -> Result<Trajectory> {
        if !(self.radius > 0.0 && self.interval > 0.0) {
            return Err(Error::InvalidInput("orbit radius and interval must be positive"));
        }
        let mut samples = Vec::with_capacity(self.count);
        let denom = self.count.saturating_sub(1).max(1) as f64;
        for i in 0..self.count {
            let s = i as f64 / denom;
            let elev = self.elevation_start + (self.elevation_end - self.elevation_start) * s;
            let az = 2.0 * core::f64::consts::PI * self.turns * s;
            let offset = Vec3::new(
                math::cos(elev) * math::cos(az),
                math::sin(elev),
                math::cos(elev) * math::sin(az),
            ) * self.radius;
            let pose = Pose::look_at(self.target + offset, self.target, Vec3::y())?;
            samples.push(TrajectorySample {
                t: i as f64 * self.interval,
                pose,
            });
        }
        Trajectory::new(samples)
    }
}

/// Render every trajectory sample with `intr` and feed it to the session in
/// time order. `record` sees each rendered frame before it is ingested.
pub fn run_trajectory(
    scene: &Scene,
    trajectory: &Trajectory,
    intr: &Intrinsics,
    session: &mut CaptureSession,
    pipeline: Pipeline<'_>,
    mut record: impl FnMut(&CameraFrame, &IngestReport) -> Result<()>,
) -> Result<()> {
    for sample in trajectory.samples() {
        let frame = render_frame(scene, &sample.pose, intr, sample.t);
        let report = session.ingest(&frame, pipeline)?;
        record(&frame, &report)?;
    }
    Ok(())
}

/// Seeded camera poses drawn uniformly from the free-space box, each looking
/// at a uniformly drawn point of the scene bounds.
pub fn sample_ground_truth(scene: &Scene, count: usize, seed: u64) -> Result<Vec<Pose>> {
    if count == 0 {
        return Err(Error::InvalidCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform_in = |b: &Aabb, rng: &mut ChaCha8Rng| {
        let (lo, hi) = (b.min(), b.max());
        Vec3::from_fn(|a, _| lo[a] + (hi[a] - lo[a]) * rng.random::<f64>())
    };
    let free = *scene.free_space();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let eye = uniform_in(&free, &mut rng);
        let target = uniform_in(&scene.bounds, &mut rng);
        if (target - eye).norm() < 1e-6 {
            continue;
        }
        out.push(Pose::look_at(eye, target, Vec3::y())?);
    }
    Ok(out)
}
