//! Geometric, loss, and optimization core of a target-free tri-modal
//! (LiDAR / RGB / event) extrinsic-calibration pipeline, with a desk-scale
//! trainable regression head.
//!
//! The crate is organized around the data path:
//! [`dataset`] ingestion and synthetic scenes -> [`projection`] depth and
//! feature rasterization -> [`features`] fixed extractors and LiDAR fusion
//! -> [`costvolume`] cross-modal correlation -> [`regressor`] pose heads
//! with manual gradients -> [`losses`] supervision -> [`eval`] staged
//! refinement and metrics. [`perturb`] generates the miscalibrations the
//! pipeline learns to undo; [`rng`] keys every random draw so runs are
//! reproducible bit-for-bit.

pub mod costvolume;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod losses;
pub mod perturb;
pub mod pipeline;
pub mod projection;
pub mod regressor;
pub mod rng;

/// Modality pair being calibrated against the LiDAR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pair {
    LidarRgb,
    LidarEvent,
}

impl Pair {
    pub const ALL: [Pair; 2] = [Pair::LidarRgb, Pair::LidarEvent];

    /// Stable index used for substream keys and storage.
    pub fn index(&self) -> u8 {
        match self {
            Pair::LidarRgb => 0,
            Pair::LidarEvent => 1,
        }
    }

    /// Camera frame of this pair.
    pub fn camera_frame(&self) -> geometry::Frame {
        match self {
            Pair::LidarRgb => geometry::Frame::Rgb,
            Pair::LidarEvent => geometry::Frame::Event,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Pair::LidarRgb => "li_rgb",
            Pair::LidarEvent => "li_event",
        }
    }
}
