//! Single-channel rasters and the pixel-level operations shared by every
//! other module: thresholding, non-maximum suppression, thinning, segment
//! tracing and disk dilation.
//!
//! Rasters are row-major; pixel `(x, y)` lives at index `y * width + x`.

mod dilate;
pub mod io;
mod nms;
mod thin;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dilate::{dilate_disk, disk_offsets, proximity_mask};
pub use nms::nms_thin;
pub use thin::{find_block, is_thin, morph_thin};
pub use trace::trace_segments;

/// Integer pixel coordinate. Ordered row-major (by `y`, then `x`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub x: i32,
    pub y: i32,
}

impl Pixel {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn is_8_adjacent(self, other: Pixel) -> bool {
        self != other && (self.x - other.x).abs() <= 1 && (self.y - other.y).abs() <= 1
    }

    pub fn distance_squared(self, other: Pixel) -> i64 {
        let dx = i64::from(self.x - other.x);
        let dy = i64::from(self.y - other.y);
        dx * dx + dy * dy
    }
}

impl Ord for Pixel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Pixel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Offsets of the 8-neighbourhood, counter-clockwise starting east
/// (image y grows downward).
pub(crate) const NEIGHBORS_8: [(i32, i32); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            left_width: a.0,
            left_height: a.1,
            right_width: b.0,
            right_height: b.1,
        });
    }
    Ok(())
}

/// A map of boundary probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ProbabilityMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Wraps raw data, rejecting wrong lengths and values outside `[0, 1]`.
    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidValue(format!(
                "probability map data has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!(
                "probability value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Wraps raw data, mapping NaN to 0 and clamping everything else into `[0, 1]`.
    pub fn from_vec_clamped(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::from_vec(width, height, data)
    }

    pub fn from_binary(map: &BinaryMap) -> Self {
        Self {
            width: map.width,
            height: map.height,
            data: map.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Value at `(x, y)`; zero outside the raster.
    pub fn get_or_zero(&self, x: i64, y: i64) -> f32 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0.0
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    /// Sets a value, clamping it into `[0, 1]`.
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        let v = if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) };
        self.data[y * self.width + x] = v;
    }

    pub fn same_dims(&self, other: (usize, usize)) -> Result<()> {
        check_dims(self.dims(), other)
    }

    /// Pointwise thresholding; see [`ThresholdConfig`].
    pub fn threshold(&self, cfg: ThresholdConfig) -> Thresholded {
        match cfg.mode {
            ThresholdMode::Binary => Thresholded::Binary(self.threshold_binary(cfg.threshold)),
            ThresholdMode::NonBinary => {
                Thresholded::NonBinary(self.threshold_suppress(cfg.threshold))
            }
        }
    }

    /// `1` where `p >= t`, `0` elsewhere.
    pub fn threshold_binary(&self, t: f32) -> BinaryMap {
        BinaryMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v >= t).collect(),
        }
    }

    /// Keeps `p` where `p >= t`, zero elsewhere.
    pub fn threshold_suppress(&self, t: f32) -> ProbabilityMap {
        ProbabilityMap {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| if v >= t { v } else { 0.0 })
                .collect(),
        }
    }
}

/// A boolean raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidValue(format!(
                "binary map data has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a map with the given pixels set; out-of-canvas pixels are ignored.
    pub fn from_pixels<I>(width: usize, height: usize, pixels: I) -> Self
    where
        I: IntoIterator<Item = Pixel>,
    {
        let mut map = Self::new(width, height);
        for p in pixels {
            map.set_pixel(p, true);
        }
        map
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    /// Value at `p`; `false` outside the raster.
    pub fn at(&self, p: Pixel) -> bool {
        self.contains(p) && self.data[p.y as usize * self.width + p.x as usize]
    }

    /// Sets `p` if it lies on the canvas.
    pub fn set_pixel(&mut self, p: Pixel, value: bool) {
        if self.contains(p) {
            self.data[p.y as usize * self.width + p.x as usize] = value;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// On-pixels in row-major order.
    pub fn on_pixels(&self) -> Vec<Pixel> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| Pixel::new((i % self.width) as i32, (i / self.width) as i32))
            .collect()
    }

    pub fn same_dims(&self, other: (usize, usize)) -> Result<()> {
        check_dims(self.dims(), other)
    }

    /// Number of on-pixels among the 8 neighbours of `p`.
    pub fn neighbor_count(&self, p: Pixel) -> usize {
        NEIGHBORS_8
            .iter()
            .filter(|(dx, dy)| self.at(Pixel::new(p.x + dx, p.y + dy)))
            .count()
    }

    pub fn union(&self, other: &BinaryMap) -> Result<BinaryMap> {
        self.same_dims(other.dims())?;
        Ok(BinaryMap {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }
}

/// Whether the thresholded output is kept binary or retains probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    Binary,
    #[default]
    NonBinary,
}

/// Threshold applied to the NMS-thinned probability map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub threshold: f32,
    pub mode: ThresholdMode,
}

impl ThresholdConfig {
    pub const DEFAULT_THRESHOLD: f32 = 0.7;

    pub fn new(threshold: f32, mode: ThresholdMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidValue(format!(
                "threshold {threshold} outside [0, 1]"
            )));
        }
        Ok(Self { threshold, mode })
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            threshold: Self::DEFAULT_THRESHOLD,
            mode: ThresholdMode::default(),
        }
    }
}

/// Output of [`ProbabilityMap::threshold`].
#[derive(Debug, Clone, PartialEq)]
pub enum Thresholded {
    Binary(BinaryMap),
    NonBinary(ProbabilityMap),
}

impl Thresholded {
    /// The thresholded map as probabilities (binary maps become 0/1).
    pub fn into_probability(self) -> ProbabilityMap {
        match self {
            Thresholded::Binary(b) => ProbabilityMap::from_binary(&b),
            Thresholded::NonBinary(p) => p,
        }
    }

    pub fn to_binary(&self) -> BinaryMap {
        match self {
            Thresholded::Binary(b) => b.clone(),
            Thresholded::NonBinary(p) => p.threshold_binary(f32::MIN_POSITIVE),
        }
    }
}

/// An ordered, 8-connected pixel polyline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundarySegment {
    points: Vec<Pixel>,
}

impl BoundarySegment {
    /// Validates 8-adjacency of consecutive points and non-emptiness.
    pub fn new(points: Vec<Pixel>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidValue("empty boundary segment".into()));
        }
        if let Some(w) = points.windows(2).find(|w| !w[0].is_8_adjacent(w[1])) {
            return Err(Error::InvalidValue(format!(
                "segment points ({}, {}) and ({}, {}) are not 8-adjacent",
                w[0].x, w[0].y, w[1].x, w[1].y
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Pixel] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Pixel {
        self.points[0]
    }

    pub fn last(&self) -> Pixel {
        self.points[self.points.len() - 1]
    }

    pub(crate) fn from_points_unchecked(points: Vec<Pixel>) -> Self {
        debug_assert!(!points.is_empty());
        Self { points }
    }
}
