//! Viewpoint analysis: how well a set of training views covers independently
//! sampled ground-truth views, plus session coverage reports.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{Matrix3, SVD};
use serde::{Deserialize, Serialize};

use crate::geometry::{rotation_angle, Mat3, Pose, Vec3};
use crate::math;
use crate::session::{CaptureSession, SessionEvent};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseLabel {
    Training,
    GroundTruth,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPose {
    pub pose: Pose,
    pub label: PoseLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSet {
    pub poses: Vec<LabeledPose>,
    /// Whether positions are in meters.
    pub metric_scale: bool,
}

impl PoseSet {
    pub fn new(poses: Vec<Pose>, label: PoseLabel) -> Self {
        Self {
            poses: poses
                .into_iter()
                .map(|pose| LabeledPose { pose, label, scene: None })
                .collect(),
            metric_scale: true,
        }
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.poses.iter().map(|p| p.pose).collect()
    }

    pub fn with_label(&self, label: PoseLabel) -> Vec<Pose> {
        self.poses.iter().filter(|p| p.label == label).map(|p| p.pose).collect()
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Stats {
    /// Sample (n − 1) standard deviation; zero for a single value.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("statistics need at least one value"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            math::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
        };
        Ok(Self {
            mean,
            sd,
            n: values.len(),
        })
    }
}

/// How the training view compared in angle is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnglePairing {
    /// The training view nearest in position.
    #[default]
    NearestPosition,
    /// The training view with the smallest rotation difference.
    MinAngle,
}

fn nearest_index(train: &[Pose], p: &Vec3) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, t) in train.iter().enumerate() {
        let d = (t.position() - p).norm();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn check_sets(train: &[Pose], gt: &[Pose]) -> Result<()> {
    if train.is_empty() || gt.is_empty() {
        return Err(Error::InvalidInput("pose sets must be non-empty"));
    }
    Ok(())
}

/// Per ground-truth view, the distance to the nearest training position.
pub fn nearest_distances(train: &[Pose], gt: &[Pose]) -> Result<Vec<f64>> {
    check_sets(train, gt)?;
    Ok(gt
        .iter()
        .map(|g| {
            let p = g.position();
            (train[nearest_index(train, &p)].position() - p).norm()
        })
        .collect())
}

/// Per ground-truth view, the rotation angle in degrees to its paired
/// training view.
pub fn nearest_angles(train: &[Pose], gt: &[Pose], pairing: AnglePairing) -> Result<Vec<f64>> {
    check_sets(train, gt)?;
    Ok(gt
        .iter()
        .map(|g| {
            let rad = match pairing {
                AnglePairing::NearestPosition => {
                    rotation_angle(g.rotation(), train[nearest_index(train, &g.position())].rotation())
                }
                AnglePairing::MinAngle => train
                    .iter()
                    .map(|t| rotation_angle(g.rotation(), t.rotation()))
                    .fold(f64::INFINITY, f64::min),
            };
            rad.to_degrees()
        })
        .collect())
}

pub fn nearest_view_distance(train: &[Pose], gt: &[Pose]) -> Result<Stats> {
    Stats::from_values(&nearest_distances(train, gt)?)
}

pub fn nearest_view_angle(train: &[Pose], gt: &[Pose], pairing: AnglePairing) -> Result<Stats> {
    Stats::from_values(&nearest_angles(train, gt, pairing)?)
}

/// `x ↦ s·R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
    /// Root-mean-square correspondence error after alignment.
    pub residual: f64,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            residual: 0.0,
        }
    }

    /// Pure scaling that maps a measured length onto a known one.
    pub fn from_reference_length(measured: f64, known: f64) -> Result<Self> {
        if !(measured > 0.0 && known > 0.0 && measured.is_finite() && known.is_finite()) {
            return Err(Error::InvalidInput("reference lengths must be positive"));
        }
        Ok(Self {
            scale: known / measured,
            ..Self::identity()
        })
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }

    pub fn apply_pose(&self, pose: &Pose) -> Result<Pose> {
        Pose::new(self.rotation * pose.rotation(), self.apply_point(pose.translation()))
    }
}

/// Least-squares similarity transform taking `a[i]` onto `b[i]` (closed form
/// via the SVD of the cross-covariance).
pub fn align_rigid(a: &[Vec3], b: &[Vec3]) -> Result<Similarity> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput("correspondence lists differ in length"));
    }
    if a.len() < 3 {
        return Err(Error::DegenerateConfiguration("need at least three correspondences"));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<Vec3>() / n;
    let mean_b = b.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    let mut scatter_a = Matrix3::zeros();
    let mut var_a = 0.0;
    for (pa, pb) in a.iter().zip(b) {
        let (ca, cb) = (pa - mean_a, pb - mean_b);
        cov += cb * ca.transpose();
        scatter_a += ca * ca.transpose();
        var_a += ca.norm_squared();
    }
    cov /= n;
    var_a /= n;

    let spread = SVD::new(scatter_a, false, false).singular_values;
    let mut sv: Vec<f64> = spread.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    if !(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0] {
        return Err(Error::DegenerateConfiguration("correspondences are collinear"));
    }

    let svd = SVD::new(cov, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD did not converge")),
    };
    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rotation = u * s * v_t;
    let scale = (Matrix3::from_diagonal(&svd.singular_values) * s).trace() / var_a;
    let translation = mean_b - rotation * mean_a * scale;
    let mut out = Similarity {
        scale,
        rotation,
        translation,
        residual: 0.0,
    };
    let sq: f64 = a.iter().zip(b).map(|(pa, pb)| (out.apply_point(pa) - pb).norm_squared()).sum();
    out.residual = math::sqrt(sq / n);
    Ok(out)
}

/// [`align_rigid`] on camera positions paired by `(index in a, index in b)`.
pub fn align_poses(a: &[Pose], b: &[Pose], pairs: &[(usize, usize)]) -> Result<Similarity> {
    let mut pa = Vec::with_capacity(pairs.len());
    let mut pb = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let (Some(x), Some(y)) = (a.get(i), b.get(j)) else {
            return Err(Error::InvalidInput("correspondence index out of range"));
        };
        pa.push(x.position());
        pb.push(y.position());
    }
    align_rigid(&pa, &pb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewpointStats {
    pub distance: Stats,
    pub angle: Stats,
}

/// Distance and angle statistics, pooled over every ground-truth view and
/// per scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewpointReport {
    pub pooled: ViewpointStats,
    pub per_scene: BTreeMap<String, ViewpointStats>,
    /// Unweighted mean of the per-scene means, present when scenes are tagged.
    pub scene_mean: Option<ViewpointStats>,
    pub pairing: AnglePairing,
}

fn viewpoint_stats(train: &[Pose], gt: &[Pose], pairing: AnglePairing) -> Result<ViewpointStats> {
    Ok(ViewpointStats {
        distance: nearest_view_distance(train, gt)?,
        angle: nearest_view_angle(train, gt, pairing)?,
    })
}

/// Compare every pose of `train` with every pose of `gt`. When poses carry
/// scene tags, each scene is also evaluated on its own, matching only
/// training views of the same scene.
pub fn evaluate(train: &PoseSet, gt: &PoseSet, pairing: AnglePairing) -> Result<ViewpointReport> {
    if !(train.metric_scale && gt.metric_scale) {
        return Err(Error::InvalidInput("pose sets must be in metric scale"));
    }
    let pooled = if train.poses.iter().any(|p| p.scene.is_some()) || gt.poses.iter().any(|p| p.scene.is_some()) {
        // pool per-view values, each matched within its own scene
        let mut dist = Vec::new();
        let mut ang = Vec::new();
        for scene in scenes(gt) {
            let (t, g) = scene_split(train, gt, &scene);
            dist.extend(nearest_distances(&t, &g)?);
            ang.extend(nearest_angles(&t, &g, pairing)?);
        }
        ViewpointStats {
            distance: Stats::from_values(&dist)?,
            angle: Stats::from_values(&ang)?,
        }
    } else {
        viewpoint_stats(&train.poses(), &gt.poses(), pairing)?
    };
    let mut per_scene = BTreeMap::new();
    for scene in scenes(gt) {
        let (t, g) = scene_split(train, gt, &scene);
        per_scene.insert(scene, viewpoint_stats(&t, &g, pairing)?);
    }
    let scene_mean = if per_scene.is_empty() {
        None
    } else {
        let m = |f: &dyn Fn(&ViewpointStats) -> f64| {
            Stats::from_values(&per_scene.values().map(f).collect::<Vec<_>>())
        };
        Some(ViewpointStats {
            distance: m(&|s| s.distance.mean)?,
            angle: m(&|s| s.angle.mean)?,
        })
    };
    Ok(ViewpointReport {
        pooled,
        per_scene,
        scene_mean,
        pairing,
    })
}

fn scenes(set: &PoseSet) -> Vec<String> {
    let mut out: Vec<String> = set.poses.iter().filter_map(|p| p.scene.clone()).collect();
    out.sort();
    out.dedup();
    out
}

fn scene_split(train: &PoseSet, gt: &PoseSet, scene: &str) -> (Vec<Pose>, Vec<Pose>) {
    let pick = |s: &PoseSet| {
        s.poses
            .iter()
            .filter(|p| p.scene.as_deref() == Some(scene))
            .map(|p| p.pose)
            .collect::<Vec<_>>()
    };
    (pick(train), pick(gt))
}

/// Machine-readable summary of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub frames: usize,
    pub keyframes: usize,
    pub spheres: usize,
    pub spheres_by_category: BTreeMap<String, usize>,
    pub covered_subsurfaces: usize,
    pub total_subsurfaces: usize,
    pub remaining_subsurfaces: usize,
    pub unobserved_fraction: f64,
    pub events: usize,
}

pub fn coverage_report(session: &CaptureSession) -> CoverageReport {
    let status = session.completion_status();
    let mut by_category = BTreeMap::new();
    for s in session.spheres() {
        *by_category.entry(s.category.clone()).or_insert(0) += 1;
    }
    CoverageReport {
        frames: session.frames().len(),
        keyframes: session.keyframes().len(),
        spheres: session.spheres().len(),
        spheres_by_category: by_category,
        covered_subsurfaces: status.total_subsurfaces - status.remaining_subsurfaces,
        total_subsurfaces: status.total_subsurfaces,
        remaining_subsurfaces: status.remaining_subsurfaces,
        unobserved_fraction: status.unobserved_fraction,
        events: session.events().len(),
    }
}

/// Frame and keyframe totals recounted from the event log.
pub fn event_totals(events: &[SessionEvent]) -> (usize, usize) {
    events.iter().fold((0, 0), |(f, k), e| match e {
        SessionEvent::FrameAccepted { keyframe, .. } => (f + 1, k + usize::from(*keyframe)),
        _ => (f, k),
    })
}
