//! Synthetic tri-modal scene generation: clouds sampled in the camera
//! frustum, splat-rendered intensity images, and events synthesized from a
//! small virtual camera motion.

use super::{DatasetError, Event, EventStream, Image, SceneConfig, SyntheticFrame};
use crate::geometry::{euler_to_quat, Frame, Intrinsics, PointCloud, RigidTransform};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Event accumulation window used throughout the pipeline (50 ms).
pub const EVENT_WINDOW_US: i64 = 50_000;

/// Fixed desk-rig ground truth: LiDAR -> RGB camera.
pub fn gt_lidar_rgb() -> RigidTransform {
    RigidTransform::new(
        euler_to_quat(1.2, -0.8, 0.6),
        [0.06, -0.03, 0.05],
        Frame::Lidar,
        Frame::Rgb,
    )
    .expect("constant pose is valid")
}

/// Fixed desk-rig ground truth: LiDAR -> event camera.
pub fn gt_lidar_event() -> RigidTransform {
    RigidTransform::new(
        euler_to_quat(-0.9, 0.7, -1.1),
        [-0.07, 0.04, 0.03],
        Frame::Lidar,
        Frame::Event,
    )
    .expect("constant pose is valid")
}

fn background(x: usize, y: usize, width: usize, height: usize) -> f64 {
    0.18 + 0.25 * x as f64 / (width - 1) as f64 + 0.18 * y as f64 / (height - 1) as f64
}

/// Splat depth-shaded points over a smooth gradient; nearest depth wins.
fn render_view(
    cam_points: &[[f64; 3]],
    k: &Intrinsics,
    z_min: f64,
    z_max: f64,
    channel_scale: &[f64],
) -> Image {
    let (w, h) = (k.width as usize, k.height as usize);
    let channels = channel_scale.len();
    let mut img = Image::zeros(w, h, channels);
    for y in 0..h {
        for x in 0..w {
            let bg = background(x, y, w, h);
            for (c, &s) in channel_scale.iter().enumerate() {
                *img.at_mut(x, y, c) = bg * s;
            }
        }
    }
    let mut depth = vec![f64::INFINITY; w * h];
    for p in cam_points {
        if p[2] <= 0.0 {
            continue;
        }
        let u = (k.fx * p[0] / p[2] + k.cx).round();
        let v = (k.fy * p[1] / p[2] + k.cy).round();
        if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
            continue;
        }
        let (ui, vi) = (u as usize, v as usize);
        if p[2] < depth[vi * w + ui] {
            depth[vi * w + ui] = p[2];
            let shade = 0.95 - 0.55 * ((p[2] - z_min) / (z_max - z_min)).clamp(0.0, 1.0);
            for (c, &s) in channel_scale.iter().enumerate() {
                *img.at_mut(ui, vi, c) = shade * s;
            }
        }
    }
    img
}

fn fraction_inside(cloud: &PointCloud, t: &RigidTransform, k: &Intrinsics) -> f64 {
    let cam = t.apply(cloud);
    let inside = cam
        .points
        .iter()
        .filter(|p| {
            if p[2] <= 0.0 {
                return false;
            }
            let u = (k.fx * p[0] / p[2] + k.cx).round();
            let v = (k.fy * p[1] / p[2] + k.cy).round();
            u >= 0.0 && v >= 0.0 && u < k.width as f64 && v < k.height as f64
        })
        .count();
    inside as f64 / cloud.len().max(1) as f64
}

/// Generate one tri-modal frame. Deterministic in `(cfg, rng state)`.
pub fn synth_scene(
    cfg: &SceneConfig,
    rng: &mut ChaCha12Rng,
) -> Result<SyntheticFrame, DatasetError> {
    cfg.validate()?;
    let k = cfg.intrinsics()?;
    let t_lidar_rgb = gt_lidar_rgb();
    let t_lidar_event = gt_lidar_event();

    // Sample the cloud inside the central RGB frustum with margin, then move
    // it to the LiDAR frame so ground-truth projection is non-trivial.
    let rgb_to_lidar = t_lidar_rgb.inverse();
    let (wf, hf) = (cfg.width as f64, cfg.height as f64);
    let mut lidar_points = Vec::with_capacity(cfg.point_count);
    for _ in 0..cfg.point_count {
        let u = rng.random_range(0.1 * wf..0.9 * wf);
        let v = rng.random_range(0.1 * hf..0.9 * hf);
        let z = rng.random_range(cfg.z_min..=cfg.z_max);
        let cam = [(u - cfg.cx) / cfg.fx * z, (v - cfg.cy) / cfg.fy * z, z];
        lidar_points.push(rgb_to_lidar.apply_point(cam));
    }
    let cloud = PointCloud::new(lidar_points, Frame::Lidar);

    // RGB view.
    let rgb_cam = t_lidar_rgb.apply(&cloud);
    let image = render_view(
        &rgb_cam.points,
        &k,
        cfg.z_min,
        cfg.z_max,
        &[1.0, 0.92, 0.82],
    );

    // Event view: intensity difference between the event camera at its true
    // pose and the same camera shifted laterally so the mid-depth pixel
    // displacement is `motion_px`.
    let ev_cam = t_lidar_event.apply(&cloud);
    let i0 = render_view(&ev_cam.points, &k, cfg.z_min, cfg.z_max, &[1.0]);
    let z_mid = 0.5 * (cfg.z_min + cfg.z_max);
    let shift_m = cfg.motion_px * z_mid / cfg.fx;
    let shifted: Vec<[f64; 3]> = ev_cam
        .points
        .iter()
        .map(|p| [p[0] + shift_m, p[1], p[2]])
        .collect();
    let i1 = render_view(&shifted, &k, cfg.z_min, cfg.z_max, &[1.0]);

    let mut polarity_map = Vec::new();
    for y in 0..k.height {
        for x in 0..k.width {
            let d = i1.at(x as usize, y as usize, 0) - i0.at(x as usize, y as usize, 0);
            if d.abs() > cfg.event_thresh {
                polarity_map.push((x, y, if d > 0.0 { 1i8 } else { -1i8 }));
            }
        }
    }
    let n = polarity_map.len() as i64;
    let events: Vec<Event> = polarity_map
        .into_iter()
        .enumerate()
        .map(|(i, (x, y, polarity))| Event {
            t_us: (i as i64) * EVENT_WINDOW_US / n.max(1),
            x,
            y,
            polarity,
        })
        .collect();
    let events = EventStream::new(events, cfg.width, cfg.height)?;

    let frame = SyntheticFrame {
        cloud,
        image,
        events,
        t_lidar_rgb,
        t_lidar_event,
        k_rgb: k,
        k_event: k,
    };
    for (t, cam_k) in [
        (&frame.t_lidar_rgb, &frame.k_rgb),
        (&frame.t_lidar_event, &frame.k_event),
    ] {
        let frac = fraction_inside(&frame.cloud, t, cam_k);
        if frac < 0.5 {
            return Err(DatasetError::InfeasibleConfig(format!(
                "only {frac:.2} of points project inside the image"
            )));
        }
    }
    Ok(frame)
}
