//! Ingestion and preprocessing of point clouds, images, and event streams,
//! plus the synthetic tri-modal scene generator used for desk-scale training.

mod io;
mod synth;

pub use io::*;
pub use synth::*;

use crate::geometry::{Frame, Intrinsics, PointCloud, RigidTransform};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no visible points")]
    NoVisiblePoints,
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("standard deviation must be positive, got {0}")]
    NonPositiveStd(f64),
    #[error("non-monotone timestamps at event {index}")]
    NonMonotoneTimestamps { index: usize },
    #[error("event out of bounds at index {index}: ({x}, {y}) not within {width}x{height}")]
    EventOutOfBounds {
        index: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("invalid polarity {polarity} at event {index}")]
    InvalidPolarity { index: usize, polarity: i8 },
    #[error("infeasible scene config: {0}")]
    InfeasibleConfig(String),
    #[error("malformed record at byte offset {offset}: {message}")]
    Malformed { offset: u64, message: String },
    #[error("missing config key {0}")]
    MissingKey(String),
    #[error("unknown config key {0}")]
    UnknownKey(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Dense image: `height` rows of `width` pixels with `channels` interleaved
/// real values per pixel. Index: `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize, c: usize) -> &mut f64 {
        &mut self.data[(y * self.width + x) * self.channels + c]
    }
}

/// Single asynchronous brightness-change event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    /// Microseconds.
    pub t_us: i64,
    pub x: u32,
    pub y: u32,
    /// +1 or -1.
    pub polarity: i8,
}

/// Time-ordered event stream bounded to a sensor of `width` x `height`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    pub width: u32,
    pub height: u32,
}

impl EventStream {
    /// Validates non-decreasing timestamps, pixel bounds, and +-1 polarity.
    pub fn new(events: Vec<Event>, width: u32, height: u32) -> Result<Self, DatasetError> {
        let mut prev = i64::MIN;
        for (index, e) in events.iter().enumerate() {
            if e.t_us < prev {
                return Err(DatasetError::NonMonotoneTimestamps { index });
            }
            prev = e.t_us;
            if e.x >= width || e.y >= height {
                return Err(DatasetError::EventOutOfBounds {
                    index,
                    x: e.x,
                    y: e.y,
                    width,
                    height,
                });
            }
            if e.polarity != 1 && e.polarity != -1 {
                return Err(DatasetError::InvalidPolarity {
                    index,
                    polarity: e.polarity,
                });
            }
        }
        Ok(Self {
            events,
            width,
            height,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// One synthetic tri-modal sample with ground-truth extrinsics.
#[derive(Debug, Clone)]
pub struct SyntheticFrame {
    /// Cloud in the LiDAR frame.
    pub cloud: PointCloud,
    /// RGB-like intensity image at the camera resolution, values in [0, 1].
    pub image: Image,
    pub events: EventStream,
    /// LiDAR -> RGB camera.
    pub t_lidar_rgb: RigidTransform,
    /// LiDAR -> event camera.
    pub t_lidar_event: RigidTransform,
    pub k_rgb: Intrinsics,
    pub k_event: Intrinsics,
}

/// Transform a cloud into the camera frame and keep points with depth in
/// `(0, z_max]`.
pub fn clip_points(
    pc: &PointCloud,
    t_cam: &RigidTransform,
    z_max: f64,
) -> Result<PointCloud, DatasetError> {
    assert!(z_max > 0.0, "z_max must be positive");
    let cam = t_cam.apply(pc);
    let points: Vec<[f64; 3]> = cam
        .points
        .into_iter()
        .filter(|p| p[2] > 0.0 && p[2] <= z_max)
        .collect();
    if points.is_empty() {
        return Err(DatasetError::NoVisiblePoints);
    }
    Ok(PointCloud::new(points, cam.frame))
}

/// Resample a cloud to exactly `n` points.
///
/// More than `n`: uniform random subset without replacement. Fewer: the
/// whole input plus uniformly chosen duplicates (with replacement). Exactly
/// `n`: the input unchanged.
pub fn resample_points(
    pc: &PointCloud,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<PointCloud, DatasetError> {
    if pc.is_empty() {
        return Err(DatasetError::EmptyCloud);
    }
    assert!(n >= 1, "target point count must be at least 1");
    let len = pc.len();
    let points = if len > n {
        rand::seq::index::sample(rng, len, n)
            .iter()
            .map(|i| pc.points[i])
            .collect()
    } else if len < n {
        let mut points = pc.points.clone();
        points.extend((0..n - len).map(|_| pc.points[rng.random_range(0..len)]));
        points
    } else {
        pc.points.clone()
    };
    Ok(PointCloud::new(points, pc.frame))
}

/// Accumulate events over `[t_center - window/2, t_center + window/2)` into
/// a two-channel count image: channel 0 positive, channel 1 negative.
pub fn accumulate_events(
    es: &EventStream,
    t_center_us: i64,
    window_us: i64,
    width: usize,
    height: usize,
) -> Image {
    assert!(window_us > 0, "window must be positive");
    let lo = t_center_us - window_us / 2;
    let hi = t_center_us + window_us / 2;
    let mut img = Image::zeros(width, height, 2);
    for e in es.events() {
        if e.t_us < lo || e.t_us >= hi {
            continue;
        }
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= width || y >= height {
            continue;
        }
        let c = if e.polarity > 0 { 0 } else { 1 };
        *img.at_mut(x, y, c) += 1.0;
    }
    img
}

/// Per-channel standardization: `out[c] = (in[c] - mean[c]) / std[c]`.
pub fn standardize_image(
    img: &Image,
    mean: [f64; 3],
    std: [f64; 3],
) -> Result<Image, DatasetError> {
    assert_eq!(img.channels, 3, "standardize_image expects a 3-channel image");
    for &s in &std {
        if !(s > 0.0) {
            return Err(DatasetError::NonPositiveStd(s));
        }
    }
    let mut out = img.clone();
    for px in out.data.chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = (px[c] - mean[c]) / std[c];
        }
    }
    Ok(out)
}

/// Inverse of [`standardize_image`] for the same `(mean, std)`.
pub fn destandardize_image(
    img: &Image,
    mean: [f64; 3],
    std: [f64; 3],
) -> Result<Image, DatasetError> {
    assert_eq!(img.channels, 3);
    for &s in &std {
        if !(s > 0.0) {
            return Err(DatasetError::NonPositiveStd(s));
        }
    }
    let mut out = img.clone();
    for px in out.data.chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = px[c] * std[c] + mean[c];
        }
    }
    Ok(out)
}
