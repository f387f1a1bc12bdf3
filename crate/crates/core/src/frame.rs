//! Posed RGB-D frames.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{Intrinsics, Pose};
use crate::{Error, Result};

/// Row-major raster of `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster<T> {
    width: u32,
    height: u32,
    data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn filled(width: u32, height: u32, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<T>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidInput("raster length does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> T {
        self.data[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: T) {
        let w = self.width as usize;
        self.data[v as usize * w + u as usize] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Nearest-neighbour resample to `width × height`.
    pub fn resize_nearest(&self, width: u32, height: u32) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for v in 0..height {
            let sv = ((u64::from(v) * 2 + 1) * u64::from(self.height) / (2 * u64::from(height))) as u32;
            for u in 0..width {
                let su = ((u64::from(u) * 2 + 1) * u64::from(self.width) / (2 * u64::from(width))) as u32;
                data.push(self.get(su, sv));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }
}

/// Metric planar depth per pixel; `INVALID_DEPTH` marks pixels without a return.
pub type DepthMap = Raster<f32>;
pub type RgbImage = Raster<[u8; 3]>;

pub const INVALID_DEPTH: f32 = 0.0;

#[inline]
pub fn is_valid_depth(d: f32) -> bool {
    d > 0.0 && d.is_finite()
}

/// One captured view: color, depth, calibration and pose at time `timestamp`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub rgb: RgbImage,
    pub depth: DepthMap,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub timestamp: f64,
}

impl CameraFrame {
    pub fn new(rgb: RgbImage, depth: DepthMap, intrinsics: Intrinsics, pose: Pose, timestamp: f64) -> Result<Self> {
        let (w, h) = (intrinsics.width(), intrinsics.height());
        if rgb.width() != w || rgb.height() != h || depth.width() != w || depth.height() != h {
            return Err(Error::InvalidInput("image dimensions do not match intrinsics"));
        }
        Ok(Self {
            rgb,
            depth,
            intrinsics,
            pose,
            timestamp,
        })
    }

    /// The same view resampled to `width × height` with matching intrinsics.
    pub fn resized(&self, width: u32, height: u32) -> Result<Self> {
        if width == self.intrinsics.width() && height == self.intrinsics.height() {
            return Ok(self.clone());
        }
        Ok(Self {
            rgb: self.rgb.resize_nearest(width, height),
            depth: self.depth.resize_nearest(width, height),
            intrinsics: self.intrinsics.resized(width, height)?,
            pose: self.pose,
            timestamp: self.timestamp,
        })
    }
}
