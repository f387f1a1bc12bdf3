//! Recorded datasets: one PNG, one raw depth file and one JSON record per
//! frame under `frames/`, plus an `index.json` listing the records.
//!
//! ```text
//! <dir>/index.json
//! <dir>/frames/000000.png     8-bit RGB
//! <dir>/frames/000000.depth   f32 little-endian, row-major, 0 = no depth
//! <dir>/frames/000000.json    {"index","t","keyframe","intrinsics","pose"}
//! ```

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vsg_core::frame::{CameraFrame, Raster};
use vsg_core::{Intrinsics, Pose};

use crate::error::{Error, Result};
use crate::formats::{read_json, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub index: usize,
    pub t: f64,
    pub keyframe: bool,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub frames: Vec<FrameMeta>,
}

pub fn encode_png(frame: &CameraFrame) -> Vec<u8> {
    let bytes: Vec<u8> = frame.rgb.as_slice().iter().flatten().copied().collect();
    let img = image::RgbImage::from_raw(frame.rgb.width(), frame.rgb.height(), bytes).expect("raster size matches");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn encode_depth(frame: &CameraFrame) -> Vec<u8> {
    frame.depth.as_slice().iter().flat_map(|d| d.to_le_bytes()).collect()
}

pub fn decode_depth(bytes: &[u8], width: u32, height: u32) -> Option<Raster<f32>> {
    if bytes.len() != width as usize * height as usize * 4 {
        return None;
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Raster::from_vec(width, height, data).ok()
}

pub fn decode_rgb(bytes: &[u8], width: u32, height: u32) -> Option<Raster<[u8; 3]>> {
    if bytes.len() != width as usize * height as usize * 3 {
        return None;
    }
    let data = bytes.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Raster::from_vec(width, height, data).ok()
}

/// Streams frames into a dataset directory.
pub struct DatasetWriter {
    dir: PathBuf,
    index: DatasetIndex,
}

impl DatasetWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        let frames = dir.join("frames");
        fs::create_dir_all(&frames).map_err(|e| Error::io(&frames, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            index: DatasetIndex::default(),
        })
    }

    pub fn write(&mut self, frame: &CameraFrame, keyframe: bool) -> Result<()> {
        let index = self.index.frames.len();
        let stem = self.dir.join("frames").join(format!("{index:06}"));
        let png = stem.with_extension("png");
        fs::write(&png, encode_png(frame)).map_err(|e| Error::io(&png, e))?;
        let depth = stem.with_extension("depth");
        fs::write(&depth, encode_depth(frame)).map_err(|e| Error::io(&depth, e))?;
        let meta = FrameMeta {
            index,
            t: frame.timestamp,
            keyframe,
            intrinsics: frame.intrinsics,
            pose: frame.pose,
        };
        write_json(&stem.with_extension("json"), &meta)?;
        self.index.frames.push(meta);
        Ok(())
    }

    pub fn finish(self) -> Result<DatasetIndex> {
        write_json(&self.dir.join("index.json"), &self.index)?;
        Ok(self.index)
    }
}

/// Load every frame of a dataset directory in index order.
pub fn read_dataset(dir: &Path) -> Result<Vec<(FrameMeta, CameraFrame)>> {
    let index: DatasetIndex = read_json(&dir.join("index.json"))?;
    let mut out = Vec::with_capacity(index.frames.len());
    for meta in index.frames {
        let stem = dir.join("frames").join(format!("{:06}", meta.index));
        let png = stem.with_extension("png");
        let img = image::open(&png).map_err(|e| Error::malformed(&png, e))?.to_rgb8();
        let (w, h) = (meta.intrinsics.width(), meta.intrinsics.height());
        let rgb = decode_rgb(img.as_raw(), w, h).ok_or_else(|| Error::malformed(&png, "image size does not match intrinsics"))?;
        let depth_path = stem.with_extension("depth");
        let bytes = fs::read(&depth_path).map_err(|e| Error::io(&depth_path, e))?;
        let depth = decode_depth(&bytes, w, h).ok_or_else(|| Error::malformed(&depth_path, "depth size does not match intrinsics"))?;
        let frame = CameraFrame::new(rgb, depth, meta.intrinsics, meta.pose, meta.t)?;
        out.push((meta, frame));
    }
    Ok(out)
}
