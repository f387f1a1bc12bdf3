//! Voxel occupancy grid tracking which parts of the scene have been observed.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::frame::{is_valid_depth, CameraFrame, Raster};
use crate::geometry::{back_project, pixel_ray, Aabb, Intrinsics, Pose, Vec3};
use crate::math;
use crate::{Error, Result};

pub const DEFAULT_VOXEL_SIZE: f64 = 0.1;
pub const DEFAULT_INTEGRATE_STRIDE: usize = 4;

/// Per-voxel observation state. Transitions only move upward:
/// `Unknown → Free → Occupied` or `Unknown → Occupied`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum VoxelState {
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

impl VoxelState {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Unknown),
            1 => Some(Self::Free),
            2 => Some(Self::Occupied),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct OccupancyGrid {
    origin: Vec3,
    voxel_size: f64,
    dims: [usize; 3],
    states: Vec<VoxelState>,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    origin: [f64; 3],
    voxel_size: f64,
    dims: [usize; 3],
    /// One digit per voxel, x fastest.
    states: String,
}

impl TryFrom<RawGrid> for OccupancyGrid {
    type Error = Error;

    fn try_from(r: RawGrid) -> Result<Self> {
        let bytes: Vec<u8> = r.states.bytes().map(|b| b.wrapping_sub(b'0')).collect();
        Self::from_parts(Vec3::from(r.origin), r.voxel_size, r.dims, &bytes)
    }
}

impl From<OccupancyGrid> for RawGrid {
    fn from(g: OccupancyGrid) -> Self {
        RawGrid {
            origin: g.origin.into(),
            voxel_size: g.voxel_size,
            dims: g.dims,
            states: g.states.iter().map(|&s| char::from(b'0' + s as u8)).collect(),
        }
    }
}

impl OccupancyGrid {
    /// All-unknown grid covering `bounds`, rounded up to whole voxels.
    pub fn from_bounds(bounds: &Aabb, voxel_size: f64) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::InvalidGrid("voxel size must be positive"));
        }
        let size = bounds.size();
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let n = math::ceil(size[a] / voxel_size - 1e-9).max(1.0);
            if n > 4096.0 {
                return Err(Error::InvalidGrid("grid is too large"));
            }
            dims[a] = n as usize;
        }
        let count = dims[0] * dims[1] * dims[2];
        if count > 64 << 20 {
            return Err(Error::InvalidGrid("grid is too large"));
        }
        Ok(Self {
            origin: *bounds.min(),
            voxel_size,
            dims,
            states: vec![VoxelState::Unknown; count],
        })
    }

    /// Rebuild from exported state bytes (0 unknown, 1 free, 2 occupied).
    pub fn from_parts(origin: Vec3, voxel_size: f64, dims: [usize; 3], states: &[u8]) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) || !origin.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidGrid("voxel size must be positive"));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidGrid("dimensions must be positive"));
        }
        let count = dims[0].checked_mul(dims[1]).and_then(|n| n.checked_mul(dims[2]));
        if count != Some(states.len()) {
            return Err(Error::InvalidGrid("state count does not match dimensions"));
        }
        let states = states
            .iter()
            .map(|&b| VoxelState::from_byte(b).ok_or(Error::InvalidGrid("unknown voxel state")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            origin,
            voxel_size,
            dims,
            states,
        })
    }

    pub fn origin(&self) -> &Vec3 {
        &self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        let extent = Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.voxel_size;
        Aabb::new(self.origin, self.origin + extent).expect("grid extent is positive")
    }

    pub fn state_bytes(&self) -> Vec<u8> {
        self.states.iter().map(|&s| s as u8).collect()
    }

    #[inline]
    fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    pub fn state(&self, cell: [usize; 3]) -> VoxelState {
        self.states[self.index(cell)]
    }

    pub fn voxel_center(&self, cell: [usize; 3]) -> Vec3 {
        self.origin + Vec3::new(cell[0] as f64 + 0.5, cell[1] as f64 + 0.5, cell[2] as f64 + 0.5) * self.voxel_size
    }

    /// Voxel containing `p`, or `None` outside the grid.
    pub fn voxel_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut cell = [0usize; 3];
        for a in 0..3 {
            let rel = math::floor((p[a] - self.origin[a]) / self.voxel_size);
            if rel < 0.0 || rel >= self.dims[a] as f64 {
                return None;
            }
            cell[a] = rel as usize;
        }
        Some(cell)
    }

    fn raise(&mut self, cell: [usize; 3], to: VoxelState) {
        let i = self.index(cell);
        if self.states[i] < to {
            self.states[i] = to;
        }
    }

    /// Visit voxels pierced by `origin + t·dir` for `t ∈ [0, t_limit]` in
    /// order, until `visit` returns false.
    fn traverse(&self, origin: &Vec3, dir: &Vec3, t_limit: f64, mut visit: impl FnMut([usize; 3]) -> bool) {
        let Some((ta, tb)) = self.bounds().ray_interval(origin, dir) else {
            return;
        };
        let t_start = ta.max(0.0);
        let t_end = tb.min(t_limit);
        if !(t_start <= t_end) {
            return;
        }
        let p = origin + dir * t_start;
        let mut cell = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_next = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            let rel = math::floor((p[a] - self.origin[a]) / self.voxel_size);
            let c = (rel as i64).clamp(0, self.dims[a] as i64 - 1);
            cell[a] = c;
            if dir[a] > 0.0 {
                step[a] = 1;
                let boundary = self.origin[a] + (c + 1) as f64 * self.voxel_size;
                t_next[a] = (boundary - origin[a]) / dir[a];
                t_delta[a] = self.voxel_size / dir[a];
            } else if dir[a] < 0.0 {
                step[a] = -1;
                let boundary = self.origin[a] + c as f64 * self.voxel_size;
                t_next[a] = (boundary - origin[a]) / dir[a];
                t_delta[a] = -self.voxel_size / dir[a];
            }
        }
        loop {
            if !visit([cell[0] as usize, cell[1] as usize, cell[2] as usize]) {
                return;
            }
            let a = if t_next[0] <= t_next[1] && t_next[0] <= t_next[2] {
                0
            } else if t_next[1] <= t_next[2] {
                1
            } else {
                2
            };
            if t_next[a] > t_end {
                return;
            }
            cell[a] += step[a];
            if cell[a] < 0 || cell[a] >= self.dims[a] as i64 {
                return;
            }
            t_next[a] += t_delta[a];
        }
    }

    /// Carve one depth ray: voxels before the endpoint become free, the
    /// endpoint voxel becomes occupied.
    fn integrate_ray(&mut self, camera: &Vec3, end: &Vec3) {
        let end_cell = self.voxel_of(end);
        let dir = end - camera;
        let mut free = Vec::new();
        self.traverse(camera, &dir, 1.0, |cell| {
            if Some(cell) == end_cell {
                return false;
            }
            free.push(cell);
            true
        });
        for cell in free {
            self.raise(cell, VoxelState::Free);
        }
        if let Some(cell) = end_cell {
            self.raise(cell, VoxelState::Occupied);
        }
    }

    /// Integrate every `stride`-th pixel (both axes) of the frame's depth map.
    /// Rays leaving the grid are clipped.
    pub fn integrate_frame(&mut self, frame: &CameraFrame, stride: usize) -> Result<()> {
        if stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1"));
        }
        let camera = frame.pose.position();
        let (w, h) = (frame.depth.width(), frame.depth.height());
        for v in (0..h).step_by(stride) {
            for u in (0..w).step_by(stride) {
                let d = frame.depth.get(u, v);
                if !is_valid_depth(d) {
                    continue;
                }
                let end = back_project(f64::from(u), f64::from(v), f64::from(d), &frame.intrinsics, &frame.pose)?;
                self.integrate_ray(&camera, &end);
            }
        }
        Ok(())
    }

    /// True when the pixel's viewing ray meets an unknown voxel before any
    /// occupied one.
    pub fn pixel_unobserved(&self, u: f64, v: f64, pose: &Pose, intr: &Intrinsics) -> bool {
        let (origin, dir) = pixel_ray(u, v, intr, pose);
        let mut hit = false;
        self.traverse(&origin, &dir, f64::INFINITY, |cell| match self.state(cell) {
            VoxelState::Unknown => {
                hit = true;
                false
            }
            VoxelState::Occupied => false,
            VoxelState::Free => true,
        });
        hit
    }

    /// Binary mask of unobserved pixels for a camera.
    pub fn unobserved_overlay(&self, pose: &Pose, intr: &Intrinsics) -> Raster<bool> {
        let mut mask = Raster::filled(intr.width(), intr.height(), false);
        for v in 0..intr.height() {
            for u in 0..intr.width() {
                if self.pixel_unobserved(f64::from(u), f64::from(v), pose, intr) {
                    mask.set(u, v, true);
                }
            }
        }
        mask
    }

    /// `(unobserved, sampled)` pixel counts over every `stride`-th pixel.
    pub fn overlay_summary(&self, pose: &Pose, intr: &Intrinsics, stride: usize) -> (usize, usize) {
        let stride = stride.max(1);
        let (mut hit, mut total) = (0, 0);
        for v in (0..intr.height()).step_by(stride) {
            for u in (0..intr.width()).step_by(stride) {
                total += 1;
                if self.pixel_unobserved(f64::from(u), f64::from(v), pose, intr) {
                    hit += 1;
                }
            }
        }
        (hit, total)
    }

    /// Voxels whose centers lie inside `region`.
    fn region_cells(&self, region: &Aabb) -> impl Iterator<Item = [usize; 3]> + '_ {
        let region = *region;
        let [nx, ny, nz] = self.dims;
        (0..nz)
            .flat_map(move |z| (0..ny).flat_map(move |y| (0..nx).map(move |x| [x, y, z])))
            .filter(move |&c| region.contains(&self.voxel_center(c)))
    }

    /// Share of unknown voxels among those centered inside `region`.
    pub fn unobserved_fraction(&self, region: &Aabb) -> Result<f64> {
        let (mut unknown, mut total) = (0usize, 0usize);
        for c in self.region_cells(region) {
            total += 1;
            if self.state(c) == VoxelState::Unknown {
                unknown += 1;
            }
        }
        if total == 0 {
            return Err(Error::InvalidRegion);
        }
        Ok(unknown as f64 / total as f64)
    }

    /// Counts of (unknown, free, occupied) voxels.
    pub fn counts(&self) -> [usize; 3] {
        let mut out = [0; 3];
        for &s in &self.states {
            out[s as usize] += 1;
        }
        out
    }
}
