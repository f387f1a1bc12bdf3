//! Scripted simulator runs with optional dataset recording.

use vsg_core::detection::SyntheticDetector;
use vsg_core::scoring::PriorTable;
use vsg_core::session::{CaptureSession, Pipeline, SessionConfig};
use vsg_core::sim::{run_trajectory, Scene, Trajectory};
use vsg_core::Intrinsics;

use crate::dataset::DatasetWriter;
use crate::error::Result;

/// Rendered frame size and vertical field of view (degrees).
pub const RENDER_WIDTH: u32 = 480;
pub const RENDER_HEIGHT: u32 = 360;
pub const RENDER_VFOV_DEG: f64 = 60.0;

pub fn render_intrinsics() -> Intrinsics {
    Intrinsics::from_vertical_fov(RENDER_WIDTH, RENDER_HEIGHT, RENDER_VFOV_DEG.to_radians()).expect("constant intrinsics are valid")
}

/// Default session configuration for a scene: the grid spans the scene bounds
/// and coverage is reported over the scene's coverage region.
pub fn session_config(scene: &Scene) -> SessionConfig {
    let mut cfg = SessionConfig::new(*scene.bounds());
    cfg.coverage_region = scene.coverage_region().copied();
    cfg
}

/// Play `trajectory` through a fresh session. Accepted frames are written to
/// `recorder` when given.
pub fn simulate(
    scene: &Scene,
    trajectory: &Trajectory,
    table: &PriorTable,
    config: SessionConfig,
    mut recorder: Option<&mut DatasetWriter>,
) -> Result<CaptureSession> {
    let mut session = CaptureSession::new(config)?;
    let detector = SyntheticDetector::new(scene.clone());
    let pipeline = Pipeline {
        detector: &detector,
        table,
    };
    let mut io_error = None;
    let outcome = run_trajectory(scene, trajectory, &render_intrinsics(), &mut session, pipeline, |frame, report| {
        if let (Some(rec), true) = (recorder.as_deref_mut(), report.accepted) {
            if let Err(e) = rec.write(frame, report.keyframe) {
                io_error = Some(e);
                return Err(vsg_core::Error::InvalidInput("dataset write failed"));
            }
        }
        Ok(())
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    outcome?;
    Ok(session)
}
