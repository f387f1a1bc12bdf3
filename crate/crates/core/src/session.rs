//! Capture session: cadence, keyframe vision pipeline, coverage bookkeeping.
//!
//! Cadence is driven by frame timestamps, never by a wall clock, so replaying
//! the same timestamped frames reproduces the same state bit for bit.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, Detector, DEFAULT_CONFIDENCE_CUTOFF};
use crate::frame::CameraFrame;
use crate::geometry::{Aabb, Pose, Vec3, ViewFrustum};
use crate::grid::{OccupancyGrid, DEFAULT_INTEGRATE_STRIDE, DEFAULT_VOXEL_SIZE};
use crate::scoring::{PriorTable, DEFAULT_THRESHOLD};
use crate::sphere::{
    generate_sphere, mark_coverage, merge_pass_logged, DisplayConfig, MergeConfig,
    SphereProxy, DEFAULT_RADIUS_SCALE, DEFAULT_SUBSURFACES,
};
use crate::{Error, Result};

pub const DEFAULT_CAPTURE_INTERVAL: f64 = 0.2;
pub const DEFAULT_KEYFRAME_INTERVAL: f64 = 5.0;
pub const DEFAULT_PROCESSING_SIZE: (u32, u32) = (480, 360);
/// Slack on interval comparisons so that decimal timestamps such as
/// `0.1 * k` land on the intended side of the cadence boundary.
pub const CADENCE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub subsurfaces: usize,
    pub radius_scale: f64,
    pub threshold: f64,
    pub confidence_cutoff: f64,
    pub capture_interval: f64,
    pub keyframe_interval: f64,
    pub processing_width: u32,
    pub processing_height: u32,
    pub voxel_size: f64,
    pub grid_bounds: Aabb,
    /// Region over which the unobserved fraction is reported; the whole grid
    /// when unset.
    pub coverage_region: Option<Aabb>,
    pub integrate_stride: usize,
    pub overlay_stride: usize,
    pub near: f64,
    pub far: f64,
    pub display: DisplayConfig,
    pub merge: MergeConfig,
}

impl SessionConfig {
    /// Defaults for a grid spanning `grid_bounds`.
    pub fn new(grid_bounds: Aabb) -> Self {
        Self {
            subsurfaces: DEFAULT_SUBSURFACES,
            radius_scale: DEFAULT_RADIUS_SCALE,
            threshold: DEFAULT_THRESHOLD,
            confidence_cutoff: DEFAULT_CONFIDENCE_CUTOFF,
            capture_interval: DEFAULT_CAPTURE_INTERVAL,
            keyframe_interval: DEFAULT_KEYFRAME_INTERVAL,
            processing_width: DEFAULT_PROCESSING_SIZE.0,
            processing_height: DEFAULT_PROCESSING_SIZE.1,
            voxel_size: DEFAULT_VOXEL_SIZE,
            grid_bounds,
            coverage_region: None,
            integrate_stride: DEFAULT_INTEGRATE_STRIDE,
            overlay_stride: 8,
            near: 0.05,
            far: 20.0,
            display: DisplayConfig::default(),
            merge: MergeConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subsurfaces == 0 {
            return Err(Error::InvalidCount);
        }
        if !(self.radius_scale > 0.0 && self.radius_scale.is_finite()) {
            return Err(Error::InvalidConfig("radius scale must be positive"));
        }
        if !(0.0..=100.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig("threshold must lie in [0, 100]"));
        }
        if !(0.0..=1.0).contains(&self.confidence_cutoff) {
            return Err(Error::InvalidConfig("confidence cutoff must lie in [0, 1]"));
        }
        if !(self.capture_interval >= 0.0 && self.keyframe_interval >= 0.0) {
            return Err(Error::InvalidConfig("cadence intervals must be non-negative"));
        }
        if self.processing_width == 0 || self.processing_height == 0 {
            return Err(Error::InvalidConfig("processing size must be positive"));
        }
        if self.integrate_stride == 0 || self.overlay_stride == 0 {
            return Err(Error::InvalidConfig("strides must be at least 1"));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::InvalidConfig("require 0 < near < far"));
        }
        if let Some(region) = &self.coverage_region {
            if self.grid_bounds.intersection(region).is_none() {
                return Err(Error::InvalidRegion);
            }
        }
        if !(self.merge.max_radius > 0.0) {
            return Err(Error::InvalidConfig("max radius must be positive"));
        }
        self.display.validate()
    }
}

/// Metadata of an accepted frame. Pixel data is not retained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub t: f64,
    pub pose: Pose,
    pub keyframe: bool,
}

/// Everything that changes session state, in ingestion order. Applying the
/// log to an empty session reproduces the live sphere set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    FrameAccepted {
        frame_index: usize,
        t: f64,
        keyframe: bool,
        unobserved_fraction: f64,
    },
    SubsurfacesCovered {
        sphere_id: u64,
        indices: Vec<usize>,
        frame_index: usize,
    },
    OverlaySummary {
        frame_index: usize,
        unobserved_pixels: usize,
        sampled_pixels: usize,
    },
    SphereSpawned {
        sphere: SphereProxy,
        frame_index: usize,
    },
    SpheresMerged {
        parents: [u64; 2],
        result: SphereProxy,
    },
    DetectionSkipped {
        frame_index: usize,
        category: Option<String>,
        reason: String,
    },
}

/// What the keyframe pipeline concluded about one detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub detection: Detection,
    pub score: Option<f64>,
    pub complex: bool,
    pub sphere_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub accepted: bool,
    pub frame_index: Option<usize>,
    pub keyframe: bool,
    pub detections: Vec<DetectionOutcome>,
    pub events: Vec<SessionEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereSummary {
    pub id: u64,
    pub category: String,
    pub center: Vec3,
    pub radius: f64,
    pub covered: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionStatus {
    pub remaining_subsurfaces: usize,
    pub total_subsurfaces: usize,
    pub unobserved_fraction: f64,
    pub spheres: Vec<SphereSummary>,
}

/// Vision back end used at keyframes.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub detector: &'a dyn Detector,
    pub table: &'a PriorTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureSession {
    config: SessionConfig,
    frames: Vec<FrameRecord>,
    keyframes: Vec<usize>,
    spheres: Vec<SphereProxy>,
    grid: OccupancyGrid,
    clock: Option<f64>,
    last_capture: Option<f64>,
    last_keyframe: Option<f64>,
    next_id: u64,
    events: Vec<SessionEvent>,
}

impl CaptureSession {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let grid = OccupancyGrid::from_bounds(&config.grid_bounds, config.voxel_size)?;
        Ok(Self {
            config,
            frames: Vec::new(),
            keyframes: Vec::new(),
            spheres: Vec::new(),
            grid,
            clock: None,
            last_capture: None,
            last_keyframe: None,
            next_id: 1,
            events: Vec::new(),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn keyframes(&self) -> &[usize] {
        &self.keyframes
    }

    pub fn spheres(&self) -> &[SphereProxy] {
        &self.spheres
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    /// Timestamp of the latest ingested frame, accepted or not.
    pub fn clock(&self) -> Option<f64> {
        self.clock
    }

    fn check_order(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::InvalidInput("timestamp must be finite"));
        }
        match self.clock {
            Some(clock) if t < clock => Err(Error::Ordering { t, clock }),
            _ => Ok(()),
        }
    }

    fn due(last: Option<f64>, t: f64, interval: f64) -> bool {
        last.is_none_or(|last| t - last >= interval - CADENCE_EPSILON)
    }

    /// Feed one frame at time `frame.timestamp`, applying the capture and
    /// keyframe cadence.
    pub fn ingest(&mut self, frame: &CameraFrame, pipeline: Pipeline<'_>) -> Result<IngestReport> {
        let t = frame.timestamp;
        self.check_order(t)?;
        self.clock = Some(t);
        if !Self::due(self.last_capture, t, self.config.capture_interval) {
            return Ok(IngestReport::default());
        }
        let keyframe = Self::due(self.last_keyframe, t, self.config.keyframe_interval);
        self.accept(frame, keyframe, pipeline)
    }

    /// Accept `frame` as a keyframe regardless of cadence. Ordering is still
    /// enforced.
    pub fn ingest_keyframe(&mut self, frame: &CameraFrame, pipeline: Pipeline<'_>) -> Result<IngestReport> {
        self.check_order(frame.timestamp)?;
        self.clock = Some(frame.timestamp);
        self.accept(frame, true, pipeline)
    }

    fn accept(&mut self, frame: &CameraFrame, keyframe: bool, pipeline: Pipeline<'_>) -> Result<IngestReport> {
        let t = frame.timestamp;
        let frustum = ViewFrustum::new(frame.pose, frame.intrinsics, self.config.near, self.config.far)?;
        let first_event = self.events.len();
        let index = self.frames.len();

        self.grid.integrate_frame(frame, self.config.integrate_stride)?;
        self.last_capture = Some(t);
        self.frames.push(FrameRecord {
            index,
            t,
            pose: frame.pose,
            keyframe,
        });
        if keyframe {
            self.last_keyframe = Some(t);
            self.keyframes.push(index);
        }
        let unobserved_fraction = self.unobserved_fraction();
        self.events.push(SessionEvent::FrameAccepted {
            frame_index: index,
            t,
            keyframe,
            unobserved_fraction,
        });

        for sphere in &mut self.spheres {
            let indices = mark_coverage(sphere, &frustum, &self.config.display);
            if !indices.is_empty() {
                self.events.push(SessionEvent::SubsurfacesCovered {
                    sphere_id: sphere.id,
                    indices,
                    frame_index: index,
                });
            }
        }

        let (unobserved_pixels, sampled_pixels) =
            self.grid
                .overlay_summary(&frame.pose, &frame.intrinsics, self.config.overlay_stride);
        self.events.push(SessionEvent::OverlaySummary {
            frame_index: index,
            unobserved_pixels,
            sampled_pixels,
        });

        let detections = if keyframe {
            self.process_keyframe(frame, index, pipeline)?
        } else {
            Vec::new()
        };

        Ok(IngestReport {
            accepted: true,
            frame_index: Some(index),
            keyframe,
            detections,
            events: self.events[first_event..].to_vec(),
        })
    }

    /// Detect, gate and spawn spheres for a keyframe, then merge. Per-detection
    /// failures are logged as events and never abort the keyframe.
    fn process_keyframe(
        &mut self,
        frame: &CameraFrame,
        index: usize,
        pipeline: Pipeline<'_>,
    ) -> Result<Vec<DetectionOutcome>> {
        let processed = frame.resized(self.config.processing_width, self.config.processing_height)?;
        let detections = match pipeline.detector.detect(&processed) {
            Ok(d) => d,
            Err(e) => {
                self.events.push(SessionEvent::DetectionSkipped {
                    frame_index: index,
                    category: None,
                    reason: e.to_string(),
                });
                return Ok(Vec::new());
            }
        };
        let mut outcomes = Vec::with_capacity(detections.len());
        let mut spawned = Vec::new();
        for det in detections {
            let mut outcome = DetectionOutcome {
                score: None,
                complex: false,
                sphere_id: None,
                detection: det,
            };
            let det = &outcome.detection;
            let skip = |reason: String| SessionEvent::DetectionSkipped {
                frame_index: index,
                category: Some(det.category().to_string()),
                reason,
            };
            match pipeline.table.score(det.category()) {
                Err(e) => self.events.push(skip(e.to_string())),
                Ok(score) => {
                    outcome.score = Some(score);
                    outcome.complex = score > self.config.threshold;
                }
            }
            if outcome.complex && det.confidence() < self.config.confidence_cutoff {
                self.events.push(skip("confidence below cutoff".to_string()));
            } else if outcome.complex {
                match generate_sphere(det, &processed, self.config.radius_scale, self.config.subsurfaces) {
                    Err(e) => self.events.push(skip(e.to_string())),
                    Ok(mut sphere) => {
                        sphere.id = self.next_id;
                        self.next_id += 1;
                        sphere.created_at = frame.timestamp;
                        outcome.sphere_id = Some(sphere.id);
                        spawned.push(sphere);
                    }
                }
            }
            outcomes.push(outcome);
        }
        for sphere in &spawned {
            self.events.push(SessionEvent::SphereSpawned {
                sphere: sphere.clone(),
                frame_index: index,
            });
        }
        let mut all = core::mem::take(&mut self.spheres);
        all.extend(spawned);
        let (merged, steps) = merge_pass_logged(all, &self.config.merge)?;
        self.spheres = merged;
        for step in steps {
            self.events.push(SessionEvent::SpheresMerged {
                parents: step.parents,
                result: step.result,
            });
        }
        Ok(outcomes)
    }

    fn unobserved_fraction(&self) -> f64 {
        let region = self.config.coverage_region.unwrap_or(self.config.grid_bounds);
        // validated at construction to intersect the grid
        self.grid.unobserved_fraction(&region).unwrap_or(1.0)
    }

    pub fn completion_status(&self) -> CompletionStatus {
        let spheres: Vec<SphereSummary> = self
            .spheres
            .iter()
            .map(|s| SphereSummary {
                id: s.id,
                category: s.category.clone(),
                center: s.center,
                radius: s.radius,
                covered: s.covered_count(),
                total: s.total(),
            })
            .collect();
        CompletionStatus {
            remaining_subsurfaces: spheres.iter().map(|s| s.total - s.covered).sum(),
            total_subsurfaces: spheres.iter().map(|s| s.total).sum(),
            unobserved_fraction: self.unobserved_fraction(),
            spheres,
        }
    }

    /// Replace the live sphere set. Intended for restoring external state and
    /// for tests; ids must be unique.
    pub fn set_spheres(&mut self, spheres: Vec<SphereProxy>) -> Result<()> {
        let mut ids: Vec<u64> = spheres.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("sphere ids must be unique"));
        }
        self.next_id = self.next_id.max(ids.last().map_or(1, |m| m + 1));
        self.spheres = spheres;
        Ok(())
    }
}
