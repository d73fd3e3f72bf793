//! Scaled depth projection, scaled feature projection, and bilinear
//! resizing.
//!
//! Projection scales the intrinsic matrix to the target resolution and
//! rasterizes with a single rounding step (round half away from zero, which
//! is `f64::round`). Collisions keep the nearest depth; ties keep the lowest
//! input index.

use crate::dataset::Image;
use crate::features::{FeatureError, FeatureMap, PointFeatures};
use crate::geometry::{Intrinsics, PointCloud};

/// Intrinsics scaled by `diag(w_out/W, h_out/H, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Target raster size, pixels.
    pub width: usize,
    pub height: usize,
    /// The scale factors applied to the source intrinsics.
    pub scale_x: f64,
    pub scale_y: f64,
}

/// Single-channel metric depth raster; 0 marks an empty pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// View the depth raster as a one-channel [`Image`].
    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.clone(),
        }
    }
}

/// Scale intrinsics to a `w_out` x `h_out` raster.
pub fn scale_intrinsics(k: &Intrinsics, w_out: usize, h_out: usize) -> ScaledIntrinsics {
    assert!(w_out >= 1 && h_out >= 1);
    let sx = w_out as f64 / k.width as f64;
    let sy = h_out as f64 / k.height as f64;
    ScaledIntrinsics {
        fx: k.fx * sx,
        fy: k.fy * sy,
        cx: k.cx * sx,
        cy: k.cy * sy,
        width: w_out,
        height: h_out,
        scale_x: sx,
        scale_y: sy,
    }
}

#[inline]
fn raster_pixel(k: &ScaledIntrinsics, p: &[f64; 3]) -> Option<(usize, usize)> {
    if p[2] <= 0.0 {
        return None;
    }
    let u = (k.fx * p[0] / p[2] + k.cx).round();
    let v = (k.fy * p[1] / p[2] + k.cy).round();
    if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
        return None;
    }
    Some((u as usize, v as usize))
}

/// Scaled depth projection: rasterize a camera-frame cloud to a depth map at
/// the target resolution. Points behind the camera or outside the raster are
/// dropped; the nearest depth wins per pixel.
pub fn project_depth(pc: &PointCloud, k: &ScaledIntrinsics) -> DepthMap {
    let mut dm = DepthMap::zeros(k.width, k.height);
    for p in &pc.points {
        if let Some((u, v)) = raster_pixel(k, p) {
            let cell = &mut dm.data[v * k.width + u];
            if *cell == 0.0 || p[2] < *cell {
                *cell = p[2];
            }
        }
    }
    dm
}

/// Scaled feature projection: rasterize per-point feature vectors with the
/// same rounding and z-buffer rule as [`project_depth`]. Empty pixels hold
/// zero vectors.
pub fn project_features(
    pc: &PointCloud,
    feats: &PointFeatures,
    k: &ScaledIntrinsics,
) -> Result<FeatureMap, FeatureError> {
    if feats.len() != pc.len() {
        return Err(FeatureError::LengthMismatch {
            feats: feats.len(),
            points: pc.len(),
        });
    }
    let c = feats.channels;
    let mut fm = FeatureMap::zeros(k.width, k.height, c);
    let mut depth = vec![f64::INFINITY; k.width * k.height];
    for (i, p) in pc.points.iter().enumerate() {
        if let Some((u, v)) = raster_pixel(k, p) {
            let idx = v * k.width + u;
            if p[2] < depth[idx] {
                depth[idx] = p[2];
                for (ch, &val) in feats.row(i).iter().enumerate() {
                    *fm.at_mut(ch, u, v) = val;
                }
            }
        }
    }
    Ok(fm)
}

/// Bilinear resize with the align-corners-false convention: sample point for
/// output pixel `i` sits at `(i + 0.5) * n_in / n_out - 0.5`, clamped.
pub fn resize_bilinear(img: &Image, w_out: usize, h_out: usize) -> Image {
    assert!(w_out >= 1 && h_out >= 1);
    let mut out = Image::zeros(w_out, h_out, img.channels);
    let sx = img.width as f64 / w_out as f64;
    let sy = img.height as f64 / h_out as f64;
    for yo in 0..h_out {
        let src_y = ((yo as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        let y0 = src_y.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let ty = src_y - y0 as f64;
        for xo in 0..w_out {
            let src_x = ((xo as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            let x0 = src_x.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let tx = src_x - x0 as f64;
            for c in 0..img.channels {
                let v00 = img.at(x0, y0, c);
                let v10 = img.at(x1, y0, c);
                let v01 = img.at(x0, y1, c);
                let v11 = img.at(x1, y1, c);
                let top = v00 + (v10 - v00) * tx;
                let bottom = v01 + (v11 - v01) * tx;
                *out.at_mut(xo, yo, c) = top + (bottom - top) * ty;
            }
        }
    }
    out
}

/// 16-bit binary PGM (P5, big-endian samples per the format); depth
/// quantized as `round(z / z_max * 65535)`.
pub fn encode_depth_pgm16(dm: &DepthMap, z_max: f64) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", dm.width, dm.height).into_bytes();
    for &z in &dm.data {
        let q = ((z / z_max * 65535.0).round()).clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Depth-colored points composited over a grayscale frame, as binary PPM.
///
/// `gray` must be single-channel at the overlay resolution; `points` are
/// `(x, y, depth)` raster hits; `lut` maps the normalized depth to RGB.
pub fn encode_overlay_ppm(
    gray: &Image,
    points: &[(usize, usize, f64)],
    z_max: f64,
    lut: &[[u8; 3]; 256],
) -> Vec<u8> {
    assert_eq!(gray.channels, 1, "overlay background must be grayscale");
    let (w, h) = (gray.width, gray.height);
    let mut rgb = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let g = (gray.at(x, y, 0).clamp(0.0, 1.0) * 255.0).round() as u8;
            let o = (y * w + x) * 3;
            rgb[o] = g;
            rgb[o + 1] = g;
            rgb[o + 2] = g;
        }
    }
    for &(x, y, z) in points {
        if x >= w || y >= h {
            continue;
        }
        let idx = ((z / z_max * 255.0).round()).clamp(0.0, 255.0) as usize;
        let color = lut[idx];
        let o = (y * w + x) * 3;
        rgb[o] = color[0];
        rgb[o + 1] = color[1];
        rgb[o + 2] = color[2];
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&rgb);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureConfig;
    use crate::geometry::Frame;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn kitti_like() -> Intrinsics {
        Intrinsics::new(707.0, 707.0, 601.0, 183.0, 1240, 376).unwrap()
    }

    #[test]
    fn scale_matches_ratio() {
        let k = kitti_like();
        let s = scale_intrinsics(&k, 512, 256);
        assert_abs_diff_eq!(s.scale_x, 512.0 / 1240.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.scale_y, 256.0 / 376.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.fx, 707.0 * 512.0 / 1240.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.cy, 183.0 * 256.0 / 376.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_scale_keeps_intrinsics() {
        let k = kitti_like();
        let s = scale_intrinsics(&k, 1240, 376);
        assert_eq!((s.fx, s.fy, s.cx, s.cy), (k.fx, k.fy, k.cx, k.cy));
    }

    #[test]
    fn halving_width_halves_fx() {
        let k = Intrinsics::new(100.0, 100.0, 100.0, 50.0, 200, 100).unwrap();
        let s = scale_intrinsics(&k, 100, 100);
        assert_eq!(s.fx, 50.0);
    }

    #[test]
    fn principal_ray_lands_on_principal_point() {
        let k = Intrinsics::new(320.0, 320.0, 320.0, 160.0, 640, 320).unwrap();
        let s = scale_intrinsics(&k, 640, 320);
        let pc = PointCloud::new(vec![[0.0, 0.0, 5.0]], Frame::Rgb);
        let dm = project_depth(&pc, &s);
        assert_eq!(dm.at(320, 160), 5.0);
        assert_eq!(dm.data.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn z_buffer_keeps_nearest() {
        let k = Intrinsics::new(320.0, 320.0, 320.0, 160.0, 640, 320).unwrap();
        let s = scale_intrinsics(&k, 640, 320);
        let pc = PointCloud::new(vec![[0.0, 0.0, 5.0], [0.0, 0.0, 3.0]], Frame::Rgb);
        let dm = project_depth(&pc, &s);
        assert_eq!(dm.at(320, 160), 3.0);
    }

    fn random_cam_cloud(rng: &mut ChaCha12Rng, n: usize) -> PointCloud {
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                [
                    rng.random_range(-10.0..=10.0),
                    rng.random_range(-5.0..=5.0),
                    rng.random_range(0.5..=40.0),
                ]
            })
            .collect();
        PointCloud::new(pts, Frame::Rgb)
    }

    // Brute-force rasterizer: per-pixel scan for the minimal depth.
    fn oracle_depth(pc: &PointCloud, k: &ScaledIntrinsics) -> DepthMap {
        let mut dm = DepthMap::zeros(k.width, k.height);
        for y in 0..k.height {
            for x in 0..k.width {
                let mut best = f64::INFINITY;
                for p in &pc.points {
                    if p[2] <= 0.0 {
                        continue;
                    }
                    let u = (k.fx * p[0] / p[2] + k.cx).round();
                    let v = (k.fy * p[1] / p[2] + k.cy).round();
                    if u == x as f64 && v == y as f64 && p[2] < best {
                        best = p[2];
                    }
                }
                if best.is_finite() {
                    dm.data[y * k.width + x] = best;
                }
            }
        }
        dm
    }

    #[test]
    fn depth_matches_bruteforce_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let k = Intrinsics::new(64.0, 64.0, 32.0, 16.0, 64, 32).unwrap();
        let s = scale_intrinsics(&k, 32, 16);
        for _ in 0..5 {
            let pc = random_cam_cloud(&mut rng, 1000);
            assert_eq!(project_depth(&pc, &s), oracle_depth(&pc, &s));
        }
    }

    #[test]
    fn features_share_z_buffer_rule_with_depth() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let k = Intrinsics::new(64.0, 64.0, 32.0, 16.0, 64, 32).unwrap();
        let s = scale_intrinsics(&k, 32, 16);
        let pc = random_cam_cloud(&mut rng, 500);
        // Feature = depth reproduces project_depth exactly.
        let feats = PointFeatures {
            channels: 1,
            values: pc.points.iter().map(|p| p[2]).collect(),
        };
        let fm = project_features(&pc, &feats, &s).unwrap();
        let dm = project_depth(&pc, &s);
        assert_eq!(fm.data, dm.data);
    }

    #[test]
    fn single_point_single_nonzero_feature_pixel() {
        let k = Intrinsics::new(320.0, 320.0, 320.0, 160.0, 640, 320).unwrap();
        let s = scale_intrinsics(&k, 32, 16);
        let pc = PointCloud::new(vec![[0.1, -0.2, 4.0]], Frame::Rgb);
        let feats = PointFeatures {
            channels: 3,
            values: vec![1.0, 1.0, 1.0],
        };
        let fm = project_features(&pc, &feats, &s).unwrap();
        let nonzero = fm.data.iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, 3);
    }

    #[test]
    fn feature_length_mismatch_errors() {
        let k = Intrinsics::new(320.0, 320.0, 320.0, 160.0, 640, 320).unwrap();
        let s = scale_intrinsics(&k, 32, 16);
        let pc = PointCloud::new(vec![[0.0, 0.0, 1.0], [1.0, 0.0, 2.0]], Frame::Rgb);
        let feats = PointFeatures {
            channels: 2,
            values: vec![0.0, 0.0],
        };
        assert!(project_features(&pc, &feats, &s).is_err());
    }

    // Brute-force per-pixel oracle for SFP.
    #[test]
    fn features_match_bruteforce_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let k = Intrinsics::new(64.0, 64.0, 32.0, 16.0, 64, 32).unwrap();
        let s = scale_intrinsics(&k, 32, 16);
        let pc = random_cam_cloud(&mut rng, 800);
        let cfg = FeatureConfig::default();
        let feats = crate::features::extract_point_features(&pc, &cfg);
        let fm = project_features(&pc, &feats, &s).unwrap();
        for y in 0..s.height {
            for x in 0..s.width {
                let mut best = f64::INFINITY;
                let mut winner: Option<usize> = None;
                for (i, p) in pc.points.iter().enumerate() {
                    let u = (s.fx * p[0] / p[2] + s.cx).round();
                    let v = (s.fy * p[1] / p[2] + s.cy).round();
                    if u == x as f64 && v == y as f64 && p[2] < best {
                        best = p[2];
                        winner = Some(i);
                    }
                }
                for c in 0..fm.channels {
                    let expect = winner.map_or(0.0, |i| feats.row(i)[c]);
                    assert_eq!(fm.at(c, x, y), expect, "pixel ({x},{y}) ch {c}");
                }
            }
        }
    }

    #[test]
    fn sdp_single_rounding_consistency() {
        // The SDP pixel must equal the ideally rescaled continuous full-res
        // pixel within half a pixel: projection scales before the one and
        // only rounding step.
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let k = kitti_like();
        let s = scale_intrinsics(&k, 512, 256);
        for _ in 0..10_000 {
            let p = [
                rng.random_range(-30.0..=30.0),
                rng.random_range(-10.0..=10.0),
                rng.random_range(0.5..=80.0),
            ];
            let u_cont = k.fx * p[0] / p[2] + k.cx;
            let u_scaled = (s.fx * p[0] / p[2] + s.cx).round();
            assert!(
                (u_scaled - u_cont * s.scale_x).abs() <= 0.5 + 1e-9,
                "SDP pixel deviates from ideal rescale"
            );
            let v_cont = k.fy * p[1] / p[2] + k.cy;
            let v_scaled = (s.fy * p[1] / p[2] + s.cy).round();
            assert!((v_scaled - v_cont * s.scale_y).abs() <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn sdp_integer_ratio_matches_scaled_continuous_projection() {
        // For exact integer ratios, projecting with scaled intrinsics equals
        // scaling the continuous full-resolution pixel, then rounding once.
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let k = Intrinsics::new(400.0, 400.0, 320.0, 160.0, 640, 320).unwrap();
        let s = scale_intrinsics(&k, 320, 160);
        for _ in 0..10_000 {
            let p = [
                rng.random_range(-10.0..=10.0),
                rng.random_range(-5.0..=5.0),
                rng.random_range(0.5..=40.0),
            ];
            let u_scaled = (s.fx * p[0] / p[2] + s.cx).round();
            let u_cont_scaled = ((k.fx * p[0] / p[2] + k.cx) * 0.5).round();
            assert_eq!(u_scaled, u_cont_scaled);
        }
    }

    #[test]
    fn every_nonzero_depth_pixel_is_realizable() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let k = Intrinsics::new(64.0, 64.0, 32.0, 16.0, 64, 32).unwrap();
        let s = scale_intrinsics(&k, 32, 16);
        let pc = random_cam_cloud(&mut rng, 300);
        let dm = project_depth(&pc, &s);
        for y in 0..s.height {
            for x in 0..s.width {
                let z = dm.at(x, y);
                if z != 0.0 {
                    let witness = pc.points.iter().any(|p| {
                        p[2] == z
                            && (s.fx * p[0] / p[2] + s.cx).round() == x as f64
                            && (s.fy * p[1] / p[2] + s.cy).round() == y as f64
                    });
                    assert!(witness, "pixel ({x},{y}) holds unrealizable depth {z}");
                }
            }
        }
    }

    #[test]
    fn resize_constant_stays_constant() {
        let mut img = Image::zeros(7, 5, 2);
        img.data.fill(7.0);
        for (wo, ho) in [(3, 2), (14, 10), (1, 1), (7, 5)] {
            let out = resize_bilinear(&img, wo, ho);
            assert!(out.data.iter().all(|&v| v == 7.0));
        }
    }

    #[test]
    fn resize_identity_size_is_identical() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let mut img = Image::zeros(6, 4, 3);
        for v in img.data.iter_mut() {
            *v = rng.random_range(0.0..=1.0);
        }
        let out = resize_bilinear(&img, 6, 4);
        for (a, b) in img.data.iter().zip(out.data.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn resize_4x4_ramp_to_2x2_matches_hand_oracle() {
        // I(x, y) = x + 4y on a 4x4 grid. Downscale by 2: output pixel (i, j)
        // samples source (2i + 0.5, 2j + 0.5), the mean of a 2x2 block.
        let mut img = Image::zeros(4, 4, 1);
        for y in 0..4 {
            for x in 0..4 {
                *img.at_mut(x, y, 0) = (x + 4 * y) as f64;
            }
        }
        let out = resize_bilinear(&img, 2, 2);
        // Hand-evaluated: block means of {0,1,4,5}=2.5, {2,3,6,7}=4.5,
        // {8,9,12,13}=10.5, {10,11,14,15}=12.5.
        assert_abs_diff_eq!(out.at(0, 0, 0), 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.at(1, 0, 0), 4.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.at(0, 1, 0), 10.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.at(1, 1, 0), 12.5, epsilon = 1e-12);
    }

    #[test]
    fn resize_preserves_value_range() {
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        let mut img = Image::zeros(9, 7, 1);
        for v in img.data.iter_mut() {
            *v = rng.random_range(-3.0..=3.0);
        }
        let lo = img.data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = img.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (wo, ho) in [(4, 3), (18, 14), (5, 9)] {
            let out = resize_bilinear(&img, wo, ho);
            for &v in &out.data {
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn depth_pgm16_encodes_header_and_samples() {
        let mut dm = DepthMap::zeros(2, 1);
        dm.data[0] = 40.0;
        dm.data[1] = 80.0;
        let bytes = encode_depth_pgm16(&dm, 80.0);
        assert!(bytes.starts_with(b"P5\n2 1\n65535\n"));
        let px = &bytes[bytes.len() - 4..];
        // 40/80 * 65535 rounds to 32768 = 0x8000; 80/80 -> 0xFFFF.
        assert_eq!(px, &[0x80, 0x00, 0xFF, 0xFF]);
    }
}
