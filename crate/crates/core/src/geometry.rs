//! Pinhole projection of radar points, horizontal region bands, and the
//! sparse-into-dense ground-truth merge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::contract(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        Ok(Intrinsics { fx, fy, cx, cy })
    }

    /// Camera used by the synthetic generator: focal length 0.8·W, principal
    /// point centred horizontally and at 3/8 of the height, so the horizon
    /// sits above the image middle.
    pub fn for_image(h: usize, w: usize) -> Self {
        let f = 0.8 * w as f64;
        Intrinsics {
            fx: f,
            fy: f,
            cx: w as f64 / 2.0,
            cy: 0.375 * h as f64,
        }
    }

    pub fn check_bounds(&self, h: usize, w: usize) -> Result<()> {
        if self.cx < 0.0 || self.cx >= w as f64 || self.cy < 0.0 || self.cy >= h as f64 {
            return Err(Error::contract(format!(
                "principal point ({}, {}) outside {w}×{h}",
                self.cx, self.cy
            )));
        }
        Ok(())
    }
}

/// One radar return in the camera frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    /// Radial velocity, m/s.
    pub v_r: f32,
    /// Radar cross section, dBsm.
    pub rcs: f32,
}

impl RadarPoint {
    pub fn to_array(self) -> [f32; 5] {
        [self.x, self.y, self.z, self.v_r, self.rcs]
    }

    pub fn from_array(a: [f32; 5]) -> Self {
        RadarPoint {
            x: a[0],
            y: a[1],
            z: a[2],
            v_r: a[3],
            rcs: a[4],
        }
    }
}

pub type RadarPointCloud = Vec<RadarPoint>;

/// Per-pixel H×W map of metres.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::dim(format!("depth map {h}×{w} given {} values", data.len())));
        }
        Ok(DepthMap { h, w, data })
    }

    pub fn filled(h: usize, w: usize, value: f32) -> Self {
        DepthMap {
            h,
            w,
            data: vec![value; h * w],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.w + col]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(self.w) {
            data.extend(row.iter().rev());
        }
        DepthMap {
            h: self.h,
            w: self.w,
            data,
        }
    }
}

/// Radar projection channels: depth (m), radial velocity (m/s), RCS (dBsm),
/// stored channel-major `[3 × H × W]`, zero where nothing projects.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarImage {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl RadarImage {
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.h * self.w;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn occupied_pixels(&self) -> usize {
        self.channel(0).iter().filter(|&&d| d > 0.0).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub image: RadarImage,
    /// `(u, v)` = (column, row) for every input point that lands in the
    /// image, `None` for dropped points.
    pub pixels: Vec<Option<(usize, usize)>>,
    pub dropped: usize,
}

impl Projection {
    /// Row indices of the points that survived projection, in input order.
    pub fn surviving(&self) -> Vec<usize> {
        self.pixels.iter().enumerate().filter_map(|(i, p)| p.map(|_| i)).collect()
    }

    /// Pixel coordinates of the surviving points, aligned with [`surviving`](Self::surviving).
    pub fn surviving_pixels(&self) -> Vec<(usize, usize)> {
        self.pixels.iter().flatten().copied().collect()
    }
}

/// Projects camera-frame radar points onto an `h×w` image. Points behind the
/// camera, beyond `depth_cap`, or outside the image are dropped; when two
/// points hit one pixel the nearer one wins.
pub fn project_points(
    cloud: &[RadarPoint],
    k: &Intrinsics,
    h: usize,
    w: usize,
    depth_cap: f64,
) -> Result<Projection> {
    if depth_cap <= 0.0 {
        return Err(Error::contract(format!("depth_cap must be positive, got {depth_cap}")));
    }
    let n = h * w;
    let mut data = vec![0f32; 3 * n];
    let mut pixels = Vec::with_capacity(cloud.len());
    let mut dropped = 0;
    for p in cloud {
        let z = p.z as f64;
        if !(z > 0.0 && z <= depth_cap) {
            pixels.push(None);
            dropped += 1;
            continue;
        }
        let u = (k.fx * p.x as f64 / z + k.cx).round();
        let v = (k.fy * p.y as f64 / z + k.cy).round();
        if !(u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64) {
            pixels.push(None);
            dropped += 1;
            continue;
        }
        let (u, v) = (u as usize, v as usize);
        let idx = v * w + u;
        let current = data[idx];
        if current == 0.0 || p.z < current {
            data[idx] = p.z;
            data[n + idx] = p.v_r;
            data[2 * n + idx] = p.rcs;
        }
        pixels.push(Some((u, v)));
    }
    Ok(Projection {
        image: RadarImage { h, w, data },
        pixels,
        dropped,
    })
}

/// The four horizontal bands, left to right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    L,
    ML,
    MR,
    R,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::L, Region::ML, Region::MR, Region::R];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Band of column `u` in an image `w` wide: `[0,W/4)`, `[W/4,W/2)`, ….
    pub fn of_column(u: usize, w: usize) -> Region {
        Region::ALL[(4 * u / w.max(1)).min(3)]
    }

    /// Mirror image band (L↔R, ML↔MR).
    pub fn mirrored(self) -> Region {
        Region::ALL[3 - self.index()]
    }
}

/// Four disjoint index sets, one per band.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegionAssignment {
    pub bands: [Vec<usize>; 4],
}

impl RegionAssignment {
    pub fn band(&self, r: Region) -> &[usize] {
        &self.bands[r.index()]
    }

    pub fn total(&self) -> usize {
        self.bands.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }
}

/// Assigns each projected point (by position in `pixels`) to its band.
pub fn partition_regions(pixels: &[(usize, usize)], w: usize) -> RegionAssignment {
    let mut out = RegionAssignment::default();
    for (i, &(u, _)) in pixels.iter().enumerate() {
        out.bands[Region::of_column(u, w).index()].push(i);
    }
    out
}

/// Dense map refined with exact sparse values wherever `sparse > 0`.
pub fn merge_sparse_into_dense(dense: &DepthMap, sparse: &DepthMap) -> Result<DepthMap> {
    if dense.h != sparse.h || dense.w != sparse.w {
        return Err(Error::dim(format!(
            "dense {}×{} vs sparse {}×{}",
            dense.h, dense.w, sparse.h, sparse.w
        )));
    }
    let data = dense
        .data
        .iter()
        .zip(&sparse.data)
        .map(|(&d, &s)| if s > 0.0 { s } else { d })
        .collect();
    Ok(DepthMap {
        h: dense.h,
        w: dense.w,
        data,
    })
}
