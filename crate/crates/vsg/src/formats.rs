//! On-disk formats: scenes, trajectories, pose sets, prior tables and grids.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vsg_core::eval::{LabeledPose, PoseSet};
use vsg_core::grid::OccupancyGrid;
use vsg_core::scoring::{CategoryScores, Metric, PriorTable};
use vsg_core::sim::{Scene, Trajectory};
use vsg_core::Vec3;

use crate::error::{Error, Result};

/// Frame convention written into pose-set files by this tool.
pub const FRAME_CONVENTION: &str = "camera_to_world_x_right_y_down_z_forward_world_y_up";

pub const PRIOR_TABLE_HEADER: [&str; 6] = ["category", "geometric", "texture", "size", "specularity", "transparency"];

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::malformed(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    read_json(path)
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    read_json(path)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PoseSetFile {
    Object {
        #[serde(default)]
        frame_convention: Option<String>,
        #[serde(default = "default_true")]
        metric_scale: bool,
        poses: Vec<LabeledPose>,
    },
    Bare(Vec<LabeledPose>),
}

fn default_true() -> bool {
    true
}

/// A pose set plus the frame convention its file declared, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPoseSet {
    pub set: PoseSet,
    pub frame_convention: Option<String>,
}

/// Accepts either `{"frame_convention", "metric_scale", "poses": [...]}` or a
/// bare array of pose records.
pub fn parse_pose_set(text: &str, path: &Path) -> Result<LoadedPoseSet> {
    let file: PoseSetFile = serde_json::from_str(text).map_err(|e| Error::malformed(path, e))?;
    let (frame_convention, metric_scale, poses) = match file {
        PoseSetFile::Object {
            frame_convention,
            metric_scale,
            poses,
        } => (frame_convention, metric_scale, poses),
        PoseSetFile::Bare(poses) => (None, true, poses),
    };
    if poses.is_empty() {
        return Err(Error::malformed(path, "pose set is empty"));
    }
    Ok(LoadedPoseSet {
        set: PoseSet { poses, metric_scale },
        frame_convention,
    })
}

pub fn load_pose_set(path: &Path) -> Result<LoadedPoseSet> {
    parse_pose_set(&read_text(path)?, path)
}

pub fn write_pose_set(path: &Path, set: &PoseSet) -> Result<()> {
    write_json(
        path,
        &PoseSetFile::Object {
            frame_convention: Some(FRAME_CONVENTION.to_string()),
            metric_scale: set.metric_scale,
            poses: set.poses.clone(),
        },
    )
}

/// Parse the prior-table CSV. Lines starting with `#` are comments; those of
/// the form `# provenance: ...` become the table's provenance note.
pub fn parse_prior_table(text: &str, path: &Path) -> Result<PriorTable> {
    let provenance: Vec<&str> = text
        .lines()
        .filter_map(|l| l.trim_start().strip_prefix('#'))
        .filter_map(|l| l.trim().strip_prefix("provenance:"))
        .map(str::trim)
        .collect();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::malformed(path, e))?.clone();
    if header.iter().ne(PRIOR_TABLE_HEADER) {
        return Err(Error::malformed(
            path,
            format!("header must be {:?}", PRIOR_TABLE_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::malformed(path, e))?;
        let mut scores = [0u8; 5];
        for (i, slot) in scores.iter_mut().enumerate() {
            let field = &record[i + 1];
            *slot = field
                .parse()
                .map_err(|_| Error::malformed(path, format!("score {field:?} for {:?} is not an integer in [0, 100]", &record[0])))?;
        }
        let [g, t, s, sp, tr] = scores;
        let scores = CategoryScores::new(g, t, s, sp, tr).map_err(|e| Error::malformed(path, e))?;
        rows.push((record[0].to_string(), scores));
    }
    PriorTable::new(rows, provenance.join(" ")).map_err(|e| Error::malformed(path, e))
}

pub fn load_prior_table(path: &Path) -> Result<PriorTable> {
    parse_prior_table(&read_text(path)?, path)
}

/// Serialize a table in the format read by [`parse_prior_table`].
pub fn format_prior_table(table: &PriorTable) -> String {
    let mut out = String::new();
    if !table.provenance().is_empty() {
        out.push_str(&format!("# provenance: {}\n", table.provenance()));
    }
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(PRIOR_TABLE_HEADER).expect("in-memory write");
    for (category, scores) in table.iter() {
        let mut row = vec![category.to_string()];
        row.extend(Metric::ALL.iter().map(|m| scores.get(*m).to_string()));
        w.write_record(&row).expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8"));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub origin: [f64; 3],
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

/// Write `<stem>.bin` (one byte per voxel, x fastest) and `<stem>.json`.
pub fn write_grid(dir: &Path, stem: &str, grid: &OccupancyGrid) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bin = dir.join(format!("{stem}.bin"));
    fs::write(&bin, grid.state_bytes()).map_err(|e| Error::io(&bin, e))?;
    let o = grid.origin();
    write_json(
        &dir.join(format!("{stem}.json")),
        &GridSidecar {
            origin: [o.x, o.y, o.z],
            voxel_size: grid.voxel_size(),
            dims: grid.dims(),
        },
    )
}

pub fn read_grid(dir: &Path, stem: &str) -> Result<OccupancyGrid> {
    let sidecar_path = dir.join(format!("{stem}.json"));
    let sidecar: GridSidecar = read_json(&sidecar_path)?;
    let bin = dir.join(format!("{stem}.bin"));
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    OccupancyGrid::from_parts(Vec3::from(sidecar.origin), sidecar.voxel_size, sidecar.dims, &bytes)
        .map_err(|e| Error::malformed(&bin, e))
}
