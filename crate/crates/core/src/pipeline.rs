//! Frame-to-cost-volume assembly shared by training and evaluation.
//!
//! Per frame, the unified LiDAR embedding is built exactly once from the
//! preprocessed cloud rasterized in its own (neutral) frame, and is consumed
//! byte-identically by both pair paths. Everything pose-dependent enters on
//! the camera side of the correlation: each pair's feature map concatenates
//! the observed camera features with depth features rendered under that
//! pair's current pose estimate, so later stages see the partially corrected
//! projection.

use crate::costvolume::{correlate, leaky_relu, CostVolume};
use crate::dataset::{
    accumulate_events, clip_points, resample_points, standardize_image, SyntheticFrame,
    EVENT_WINDOW_US,
};
use crate::features::{
    adapt_channels, concat_channels, extract_image_features, extract_point_features, fuse_lidar,
    FeatureConfig, FeatureMap,
};
use crate::geometry::{Frame, Intrinsics, PointCloud, RigidTransform};
use crate::projection::{project_depth, project_features, scale_intrinsics};
use crate::regressor::{RegressorConfig, RegressorError};
use crate::rng::{substream, Role, StreamKey};
use crate::Pair;

/// Everything needed to turn frames into regressor inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Resampled cloud size N.
    pub n_points: usize,
    /// Depth cutoff for preprocessing, meters.
    pub clip_z_max: f64,
    /// Model input resolution W' x H'.
    pub model_width: usize,
    pub model_height: usize,
    /// Correlation window radius d.
    pub cost_radius: usize,
    pub leaky_slope: f64,
    /// RGB standardization statistics.
    pub image_mean: [f64; 3],
    pub image_std: [f64; 3],
    pub feature: FeatureConfig,
    /// Regressor widths.
    pub growth: usize,
    pub fc_width: usize,
    pub head_width: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_points: 1024,
            clip_z_max: 80.0,
            model_width: 512,
            model_height: 256,
            cost_radius: 4,
            leaky_slope: 0.1,
            image_mean: [0.485, 0.456, 0.406],
            image_std: [0.229, 0.224, 0.225],
            feature: FeatureConfig::default(),
            growth: 8,
            fc_width: 128,
            head_width: 64,
        }
    }
}

impl PipelineConfig {
    pub fn regressor_config(&self) -> RegressorConfig {
        let side = 2 * self.cost_radius + 1;
        RegressorConfig {
            in_channels: side * side,
            width: self.feature.out_width,
            height: self.feature.out_height,
            growth: self.growth,
            fc_width: self.fc_width,
            head_width: self.head_width,
            leaky_slope: self.leaky_slope,
        }
    }
}

/// Precomputed per-frame inputs: pose-independent parts are built once.
#[derive(Debug, Clone)]
pub struct FrameContext {
    /// Clipped, resampled cloud in the LiDAR frame.
    pub cloud_pre: PointCloud,
    /// Unified LiDAR embedding, shared by both pairs.
    pub shared_embedding: FeatureMap,
    /// Observed camera features per pair (common channel dimension).
    pub obs_rgb: FeatureMap,
    pub obs_ev: FeatureMap,
    pub t_gt_rgb: RigidTransform,
    pub t_gt_ev: RigidTransform,
    pub intrinsics: Intrinsics,
}

impl FrameContext {
    pub fn gt(&self, pair: Pair) -> &RigidTransform {
        match pair {
            Pair::LidarRgb => &self.t_gt_rgb,
            Pair::LidarEvent => &self.t_gt_ev,
        }
    }

    pub fn obs(&self, pair: Pair) -> &FeatureMap {
        match pair {
            Pair::LidarRgb => &self.obs_rgb,
            Pair::LidarEvent => &self.obs_ev,
        }
    }
}

/// Depth features of a camera-frame cloud at the common channel dimension.
fn depth_branch(cloud_cam: &PointCloud, k: &Intrinsics, cfg: &PipelineConfig) -> FeatureMap {
    let k_model = scale_intrinsics(k, cfg.model_width, cfg.model_height);
    let dm = project_depth(cloud_cam, &k_model);
    let fm = extract_image_features(&dm.to_image(), &cfg.feature);
    adapt_channels(&fm, cfg.feature.common_channels)
}

/// Build the pose-independent context of one frame.
///
/// The resample substream is keyed by `(seed, frame)` only, so the
/// preprocessed cloud (and with it the shared embedding) is identical for
/// both pairs and all stages.
pub fn prepare_frame(
    frame: &SyntheticFrame,
    cfg: &PipelineConfig,
    seed: u64,
    frame_id: u32,
) -> Result<FrameContext, RegressorError> {
    // Neutral view: the desk-rig cloud already faces +z in its own frame.
    let neutral = RigidTransform::identity(Frame::Lidar);
    let clipped = clip_points(&frame.cloud, &neutral, cfg.clip_z_max)?;
    let mut rng = substream(seed, StreamKey::new(Role::Resample).frame(frame_id));
    let cloud_pre = resample_points(&clipped, cfg.n_points, &mut rng)?;

    // Shared LiDAR embedding: SFP point features fused with depth features.
    let k_feat = scale_intrinsics(
        &frame.k_rgb,
        cfg.feature.out_width,
        cfg.feature.out_height,
    );
    let pfeats = extract_point_features(&cloud_pre, &cfg.feature);
    let sfp = project_features(&cloud_pre, &pfeats, &k_feat)?;
    let point_fm = adapt_channels(&sfp, cfg.feature.common_channels);
    let depth_fm = depth_branch(&cloud_pre, &frame.k_rgb, cfg);
    let shared_embedding = fuse_lidar(&point_fm, &depth_fm)?;

    // Observed camera branches.
    let rgb_std = standardize_image(&frame.image, cfg.image_mean, cfg.image_std)?;
    let rgb_model =
        crate::projection::resize_bilinear(&rgb_std, cfg.model_width, cfg.model_height);
    let obs_rgb = adapt_channels(
        &extract_image_features(&rgb_model, &cfg.feature),
        cfg.feature.common_channels,
    );

    let ev_frame = accumulate_events(
        &frame.events,
        EVENT_WINDOW_US / 2,
        EVENT_WINDOW_US,
        frame.k_event.width as usize,
        frame.k_event.height as usize,
    );
    let ev_model =
        crate::projection::resize_bilinear(&ev_frame, cfg.model_width, cfg.model_height);
    let obs_ev = adapt_channels(
        &extract_image_features(&ev_model, &cfg.feature),
        cfg.feature.common_channels,
    );

    Ok(FrameContext {
        cloud_pre,
        shared_embedding,
        obs_rgb,
        obs_ev,
        t_gt_rgb: frame.t_lidar_rgb,
        t_gt_ev: frame.t_lidar_event,
        intrinsics: frame.k_rgb,
    })
}

/// Camera-side feature map of one pair under the current pose estimate:
/// `[observed | rendered-at-current-pose]`.
pub fn camera_features(
    ctx: &FrameContext,
    pair: Pair,
    t_current: &RigidTransform,
    cfg: &PipelineConfig,
) -> Result<FeatureMap, RegressorError> {
    let cloud_cam = t_current.apply(&ctx.cloud_pre);
    let render = depth_branch(&cloud_cam, &ctx.intrinsics, cfg);
    Ok(concat_channels(ctx.obs(pair), &render)?)
}

/// Cost volume of one pair at the current pose estimate.
pub fn pair_cost_volume(
    ctx: &FrameContext,
    pair: Pair,
    t_current: &RigidTransform,
    cfg: &PipelineConfig,
) -> Result<CostVolume, RegressorError> {
    let cam = camera_features(ctx, pair, t_current, cfg)?;
    let cv = correlate(&ctx.shared_embedding, &cam, cfg.cost_radius)?;
    Ok(leaky_relu(&cv, cfg.leaky_slope))
}
