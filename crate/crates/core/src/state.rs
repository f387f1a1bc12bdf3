//! Client-facing session state and the reducer that advances it by events.
//!
//! A subscriber receives one [`StateSnapshot`] and then the session's events
//! in order; folding them with [`StateSnapshot::apply`] yields the same value
//! as [`StateSnapshot::from_session`] on the live session.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::session::{CaptureSession, SessionEvent};
use crate::sphere::SphereProxy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayStat {
    pub frame_index: usize,
    pub unobserved_pixels: usize,
    pub sampled_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub frames: usize,
    pub keyframes: usize,
    /// Live spheres ordered by id.
    pub spheres: Vec<SphereProxy>,
    pub remaining_subsurfaces: usize,
    pub total_subsurfaces: usize,
    pub unobserved_fraction: f64,
    pub overlay: Option<OverlayStat>,
    pub last_frame_t: Option<f64>,
    /// Number of events folded into this state.
    pub event_count: usize,
}

impl StateSnapshot {
    pub fn from_session(session: &CaptureSession) -> Self {
        let mut spheres = session.spheres().to_vec();
        spheres.sort_by_key(|s| s.id);
        let overlay = session.events().iter().rev().find_map(|e| match *e {
            SessionEvent::OverlaySummary {
                frame_index,
                unobserved_pixels,
                sampled_pixels,
            } => Some(OverlayStat {
                frame_index,
                unobserved_pixels,
                sampled_pixels,
            }),
            _ => None,
        });
        let mut s = Self {
            frames: session.frames().len(),
            keyframes: session.keyframes().len(),
            spheres,
            remaining_subsurfaces: 0,
            total_subsurfaces: 0,
            unobserved_fraction: session.completion_status().unobserved_fraction,
            overlay,
            last_frame_t: session.frames().last().map(|f| f.t),
            event_count: session.events().len(),
        };
        s.recount();
        s
    }

    fn recount(&mut self) {
        self.total_subsurfaces = self.spheres.iter().map(SphereProxy::total).sum();
        self.remaining_subsurfaces = self.spheres.iter().map(SphereProxy::remaining).sum();
    }

    fn insert(&mut self, sphere: SphereProxy) {
        let at = self.spheres.partition_point(|s| s.id < sphere.id);
        self.spheres.insert(at, sphere);
    }

    pub fn apply(&mut self, event: &SessionEvent) {
        match event {
            SessionEvent::FrameAccepted {
                t,
                keyframe,
                unobserved_fraction,
                ..
            } => {
                self.frames += 1;
                self.keyframes += usize::from(*keyframe);
                self.unobserved_fraction = *unobserved_fraction;
                self.last_frame_t = Some(*t);
            }
            SessionEvent::SubsurfacesCovered { sphere_id, indices, .. } => {
                if let Some(sphere) = self.spheres.iter_mut().find(|s| s.id == *sphere_id) {
                    for &i in indices {
                        if let Some(sub) = sphere.subsurfaces.get_mut(i) {
                            sub.covered = true;
                        }
                    }
                }
            }
            SessionEvent::OverlaySummary {
                frame_index,
                unobserved_pixels,
                sampled_pixels,
            } => {
                self.overlay = Some(OverlayStat {
                    frame_index: *frame_index,
                    unobserved_pixels: *unobserved_pixels,
                    sampled_pixels: *sampled_pixels,
                });
            }
            SessionEvent::SphereSpawned { sphere, .. } => self.insert(sphere.clone()),
            SessionEvent::SpheresMerged { parents, result } => {
                self.spheres.retain(|s| !parents.contains(&s.id));
                self.insert(result.clone());
            }
            SessionEvent::DetectionSkipped { .. } => {}
        }
        self.event_count += 1;
        self.recount();
    }
}
