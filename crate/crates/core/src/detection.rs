//! Object detections, the detector seam, and robust object depth.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::frame::{is_valid_depth, CameraFrame, DepthMap};
use crate::sim::{render_ids, Scene, NO_OBJECT};
use crate::{Error, Result};

/// Default minimum visible pixel count for the synthetic detector.
pub const DEFAULT_MIN_PIXELS: usize = 64;
/// Default confidence below which detections are ignored.
pub const DEFAULT_CONFIDENCE_CUTOFF: f64 = 0.5;

/// Inclusive pixel bounds `(u_min, u_max, v_min, v_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub u_min: u32,
    pub u_max: u32,
    pub v_min: u32,
    pub v_max: u32,
}

impl BBox {
    pub fn new(u_min: u32, u_max: u32, v_min: u32, v_max: u32) -> Result<Self> {
        if u_min > u_max || v_min > v_max {
            return Err(Error::InvalidDetection("bounding box corners are inverted"));
        }
        Ok(Self {
            u_min,
            u_max,
            v_min,
            v_max,
        })
    }

    /// `u_max - u_min`, the horizontal extent used for the sphere radius.
    pub fn width_span(&self) -> u32 {
        self.u_max - self.u_min
    }

    pub fn height_span(&self) -> u32 {
        self.v_max - self.v_min
    }

    pub fn contains(&self, u: u32, v: u32) -> bool {
        u >= self.u_min && u <= self.u_max && v >= self.v_min && v <= self.v_max
    }

    fn cols(&self) -> usize {
        self.width_span() as usize + 1
    }

    fn area(&self) -> usize {
        self.cols() * (self.height_span() as usize + 1)
    }
}

/// Non-empty set of pixel coordinates, kept sorted in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pixels: Vec<(u32, u32)>,
}

impl Mask {
    pub fn new(mut pixels: Vec<(u32, u32)>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::InvalidDetection("mask is empty"));
        }
        pixels.sort_unstable_by_key(|&(u, v)| (v, u));
        pixels.dedup();
        Ok(Self { pixels })
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Tight bounding box of the mask.
    pub fn bounds(&self) -> BBox {
        let (mut u0, mut u1, mut v0, mut v1) = (u32::MAX, 0, u32::MAX, 0);
        for &(u, v) in &self.pixels {
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
        BBox {
            u_min: u0,
            u_max: u1,
            v_min: v0,
            v_max: v1,
        }
    }

    /// Run-length encoding over the bbox raster (row-major), alternating
    /// unset/set runs and starting with an unset run, as space-separated counts.
    pub fn to_rle(&self, bbox: &BBox) -> String {
        let cols = bbox.cols();
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0usize;
        let mut next = 0usize;
        for &(u, v) in &self.pixels {
            let idx = (v - bbox.v_min) as usize * cols + (u - bbox.u_min) as usize;
            // unset gap before this pixel
            if idx > next {
                if current {
                    counts.push(run);
                    run = 0;
                    current = false;
                }
                run += idx - next;
            }
            if !current {
                counts.push(run);
                run = 0;
                current = true;
            }
            run += 1;
            next = idx + 1;
        }
        counts.push(run);
        let tail = bbox.area() - next;
        if tail > 0 {
            counts.push(tail);
        }
        let mut out = String::new();
        for (i, c) in counts.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{c}");
        }
        out
    }

    pub fn from_rle(rle: &str, bbox: &BBox) -> Result<Self> {
        let cols = bbox.cols();
        let mut idx = 0usize;
        let mut set = false;
        let mut pixels = Vec::new();
        for tok in rle.split_ascii_whitespace() {
            let n: usize = tok
                .parse()
                .map_err(|_| Error::InvalidDetection("mask RLE holds a non-integer count"))?;
            if idx + n > bbox.area() {
                return Err(Error::InvalidDetection("mask RLE overruns the bounding box"));
            }
            if set {
                for i in idx..idx + n {
                    pixels.push((bbox.u_min + (i % cols) as u32, bbox.v_min + (i / cols) as u32));
                }
            }
            idx += n;
            set = !set;
        }
        if idx != bbox.area() {
            return Err(Error::InvalidDetection("mask RLE does not cover the bounding box"));
        }
        Mask::new(pixels)
    }
}

/// One detected object instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetection", into = "RawDetection")]
pub struct Detection {
    bbox: BBox,
    mask: Mask,
    category: String,
    confidence: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDetection {
    bbox: [u32; 4],
    category: String,
    confidence: f64,
    mask_rle: String,
}

impl TryFrom<RawDetection> for Detection {
    type Error = Error;

    fn try_from(r: RawDetection) -> Result<Self> {
        let [u0, u1, v0, v1] = r.bbox;
        let bbox = BBox::new(u0, u1, v0, v1)?;
        let mask = Mask::from_rle(&r.mask_rle, &bbox)?;
        Detection::new(bbox, mask, r.category, r.confidence)
    }
}

impl From<Detection> for RawDetection {
    fn from(d: Detection) -> Self {
        RawDetection {
            bbox: [d.bbox.u_min, d.bbox.u_max, d.bbox.v_min, d.bbox.v_max],
            mask_rle: d.mask.to_rle(&d.bbox),
            category: d.category,
            confidence: d.confidence,
        }
    }
}

impl Detection {
    pub fn new(bbox: BBox, mask: Mask, category: impl Into<String>, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidDetection("confidence must lie in [0, 1]"));
        }
        if mask.pixels().iter().any(|&(u, v)| !bbox.contains(u, v)) {
            return Err(Error::InvalidDetection("mask pixel outside bounding box"));
        }
        Ok(Self {
            bbox,
            mask,
            category: category.into(),
            confidence,
        })
    }

    /// Detection whose bbox is the tight bounds of `mask`.
    pub fn from_mask(mask: Mask, category: impl Into<String>, confidence: f64) -> Result<Self> {
        Self::new(mask.bounds(), mask, category, confidence)
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}

/// Seam for a segmentation model. Implementations must be deterministic for
/// identical input.
pub trait Detector {
    fn detect(&self, frame: &CameraFrame) -> Result<Vec<Detection>>;
}

/// Mean pixel coordinate of a mask.
pub fn centroid(mask: &Mask) -> (f64, f64) {
    let n = mask.len() as f64;
    let (su, sv) = mask
        .pixels()
        .iter()
        .fold((0.0, 0.0), |(a, b), &(u, v)| (a + f64::from(u), b + f64::from(v)));
    (su / n, sv / n)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Mean depth of the mask samples after dropping those outside
/// `median ± 3·MAD`. Pixels without a valid depth are ignored.
pub fn object_depth(mask: &Mask, depth: &DepthMap) -> Result<f64> {
    let mut samples: Vec<f64> = mask
        .pixels()
        .iter()
        .filter(|&&(u, v)| u < depth.width() && v < depth.height())
        .map(|&(u, v)| depth.get(u, v))
        .filter(|&d| is_valid_depth(d))
        .map(f64::from)
        .collect();
    if samples.is_empty() {
        return Err(Error::DegenerateDepth);
    }
    samples.sort_unstable_by(f64::total_cmp);
    let med = median(&samples);
    let mut dev: Vec<f64> = samples.iter().map(|d| (d - med).abs()).collect();
    dev.sort_unstable_by(f64::total_cmp);
    let mad = median(&dev);
    let (sum, count) = samples
        .iter()
        .filter(|&&d| (d - med).abs() <= 3.0 * mad)
        .fold((0.0, 0usize), |(s, c), &d| (s + d, c + 1));
    if count == 0 {
        return Err(Error::DegenerateDepth);
    }
    Ok(sum / count as f64)
}

/// Ground-truth detector for simulated frames: re-renders object ids for the
/// frame's camera and reports every object with enough visible pixels.
#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    scene: Scene,
    pub min_pixels: usize,
}

impl SyntheticDetector {
    pub fn new(scene: Scene) -> Self {
        Self {
            scene,
            min_pixels: DEFAULT_MIN_PIXELS,
        }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }
}

/// Detections for every scene object with at least `min_pixels` visible
/// pixels in `frame`, ordered by object index.
pub fn detect_synthetic(frame: &CameraFrame, scene: &Scene, min_pixels: usize) -> Vec<Detection> {
    let ids = render_ids(scene, &frame.pose, &frame.intrinsics);
    let mut per_object: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
    for v in 0..ids.height() {
        for u in 0..ids.width() {
            let id = ids.get(u, v);
            if id != NO_OBJECT {
                per_object.entry(id).or_default().push((u, v));
            }
        }
    }
    per_object
        .into_iter()
        .filter(|(_, px)| px.len() >= min_pixels.max(1))
        .filter_map(|(id, px)| {
            let category = scene.objects().get(id as usize)?.category.clone();
            let mask = Mask::new(px).ok()?;
            Detection::from_mask(mask, category, 1.0).ok()
        })
        .collect()
}

impl Detector for SyntheticDetector {
    fn detect(&self, frame: &CameraFrame) -> Result<Vec<Detection>> {
        Ok(detect_synthetic(frame, &self.scene, self.min_pixels))
    }
}

/// Detector that always fails; exercises error paths in callers.
#[derive(Debug, Clone, Default)]
pub struct FailingDetector {
    pub message: String,
}

impl Detector for FailingDetector {
    fn detect(&self, _frame: &CameraFrame) -> Result<Vec<Detection>> {
        let msg = if self.message.is_empty() {
            "detector unavailable".to_string()
        } else {
            self.message.clone()
        };
        Err(Error::Detector(msg))
    }
}
