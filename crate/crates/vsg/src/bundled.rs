//! Data files compiled into the binary.

use std::path::Path;

use vsg_core::scoring::PriorTable;
use vsg_core::sim::{HelixOrbit, Scene, Trajectory};
use vsg_core::Vec3;

pub const PRIOR_TABLE_CSV: &str = include_str!("../data/prior_table.csv");
pub const DESK_SCENE_JSON: &str = include_str!("../data/scenes/desk.json");
pub const DESK_ORBIT_JSON: &str = include_str!("../data/trajectories/desk_orbit.json");

/// Scene files by name.
pub const SCENES: [(&str, &str); 4] = [
    ("desk", DESK_SCENE_JSON),
    ("large", include_str!("../data/scenes/large.json")),
    ("medium", include_str!("../data/scenes/medium.json")),
    ("small", include_str!("../data/scenes/small.json")),
];

pub fn prior_table() -> PriorTable {
    crate::formats::parse_prior_table(PRIOR_TABLE_CSV, Path::new("prior_table.csv")).expect("bundled prior table is valid")
}

pub fn scene(name: &str) -> Option<Scene> {
    SCENES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, json)| serde_json::from_str(json).expect("bundled scene is valid"))
}

pub fn desk_scene() -> Scene {
    scene("desk").expect("desk scene is bundled")
}

/// Parameters the bundled desk orbit was generated from.
pub fn desk_orbit_params() -> HelixOrbit {
    HelixOrbit {
        target: Vec3::new(0.02, 0.85, 0.04),
        radius: 0.85,
        elevation_start: 85f64.to_radians(),
        elevation_end: (-70f64).to_radians(),
        turns: 5.0,
        count: 120,
        interval: 0.5,
    }
}

pub fn desk_orbit() -> Trajectory {
    serde_json::from_str(DESK_ORBIT_JSON).expect("bundled orbit is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_scene_parses() {
        for (name, _) in SCENES {
            let s = scene(name).unwrap();
            assert!(s.objects().iter().any(|o| o.category == "vase"), "{name}");
        }
        assert!(scene("attic").is_none());
    }

    #[test]
    fn orbit_file_matches_its_generator() {
        let generated = desk_orbit_params().trajectory().unwrap();
        assert_eq!(desk_orbit(), generated);
        assert_eq!(generated.samples().len(), 120);
    }

    #[test]
    fn scene_floor_areas() {
        for (name, area) in [("large", 9.0), ("medium", 2.0), ("small", 1.0)] {
            let b = *scene(name).unwrap().bounds();
            let (w, d) = (b.max().x - b.min().x - 0.1, b.max().z - b.min().z - 0.1);
            assert!((w * d - area).abs() < 0.05 * area, "{name}: {}", w * d);
        }
    }
}
