//! Pair-wise correlation cost volume.
//!
//! For each pixel and displacement in a `(2d+1)^2` window, the cost is the
//! channel-normalized inner product of the LiDAR feature vector and the
//! displaced camera feature vector. Out-of-bounds positions contribute zero
//! features. Displacement channels are row-major over `(dy, dx)` starting at
//! `(-d, -d)`.

use crate::features::{FeatureError, FeatureMap};

/// Per-pixel correlation costs over a square displacement window.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub width: usize,
    pub height: usize,
    /// Displacement radius `d`.
    pub radius: usize,
    /// Pixel-major storage: `(y * width + x) * m + channel`.
    pub data: Vec<f64>,
}

impl CostVolume {
    /// Number of displacement channels `M = (2d+1)^2`.
    pub fn m(&self) -> usize {
        let side = 2 * self.radius + 1;
        side * side
    }

    /// Channel index of displacement `(dy, dx)`, each in `[-d, d]`.
    #[inline]
    pub fn channel(&self, dy: i64, dx: i64) -> usize {
        let d = self.radius as i64;
        debug_assert!(dy.abs() <= d && dx.abs() <= d);
        ((dy + d) as usize) * (2 * self.radius + 1) + (dx + d) as usize
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.data[(y * self.width + x) * self.m() + channel]
    }
}

/// Correlate two equally shaped feature maps over displacements `[-d, d]^2`.
pub fn correlate(
    f_li: &FeatureMap,
    f_cam: &FeatureMap,
    d: usize,
) -> Result<CostVolume, FeatureError> {
    if f_li.width != f_cam.width || f_li.height != f_cam.height {
        return Err(FeatureError::SizeMismatch(
            f_li.width,
            f_li.height,
            f_cam.width,
            f_cam.height,
        ));
    }
    if f_li.channels != f_cam.channels {
        return Err(FeatureError::LengthMismatch {
            feats: f_cam.channels,
            points: f_li.channels,
        });
    }
    let (w, h, c) = (f_li.width, f_li.height, f_li.channels);
    let side = 2 * d + 1;
    let m = side * side;
    let mut cv = CostVolume {
        width: w,
        height: h,
        radius: d,
        data: vec![0.0; w * h * m],
    };
    let norm = 1.0 / c as f64;
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * m;
            for dy in -(d as i64)..=d as i64 {
                let ty = y as i64 + dy;
                for dx in -(d as i64)..=d as i64 {
                    let tx = x as i64 + dx;
                    let mi = ((dy + d as i64) as usize) * side + (dx + d as i64) as usize;
                    if ty < 0 || tx < 0 || ty >= h as i64 || tx >= w as i64 {
                        continue; // zero-padded target: cost stays 0
                    }
                    let (tx, ty) = (tx as usize, ty as usize);
                    let mut acc = 0.0;
                    for ch in 0..c {
                        acc += f_li.at(ch, x, y) * f_cam.at(ch, tx, ty);
                    }
                    cv.data[base + mi] = acc * norm;
                }
            }
        }
    }
    Ok(cv)
}

/// LeakyReLU activation: negative costs scaled by `slope`.
pub fn leaky_relu(cv: &CostVolume, slope: f64) -> CostVolume {
    debug_assert!(slope > 0.0 && slope < 1.0, "slope must lie in (0, 1)");
    let mut out = cv.clone();
    for v in out.data.iter_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    out
}

/// Debug dump: one 8-bit P5 page per displacement channel.
pub fn dump_cost_volume_pgm(cv: &CostVolume) -> Vec<u8> {
    let m = cv.m();
    let mut out = Vec::new();
    for mi in 0..m {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for y in 0..cv.height {
            for x in 0..cv.width {
                let v = cv.at(x, y, mi);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        out.extend_from_slice(format!("P5\n{} {}\n255\n", cv.width, cv.height).as_bytes());
        for y in 0..cv.height {
            for x in 0..cv.width {
                out.push((((cv.at(x, y, mi) - lo) / span) * 255.0).round() as u8);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_map(rng: &mut ChaCha12Rng, w: usize, h: usize, c: usize) -> FeatureMap {
        let mut fm = FeatureMap::zeros(w, h, c);
        for v in fm.data.iter_mut() {
            *v = rng.random_range(-1.0..=1.0);
        }
        fm
    }

    // Brute-force triple-loop oracle.
    fn oracle(f_li: &FeatureMap, f_cam: &FeatureMap, d: usize) -> Vec<f64> {
        let (w, h, c) = (f_li.width, f_li.height, f_li.channels);
        let side = 2 * d + 1;
        let m = side * side;
        let mut out = vec![0.0; w * h * m];
        for y in 0..h {
            for x in 0..w {
                for dy in -(d as i64)..=d as i64 {
                    for dx in -(d as i64)..=d as i64 {
                        let mi = ((dy + d as i64) as usize) * side + (dx + d as i64) as usize;
                        let (ty, tx) = (y as i64 + dy, x as i64 + dx);
                        if ty < 0 || tx < 0 || ty >= h as i64 || tx >= w as i64 {
                            continue;
                        }
                        let mut acc = 0.0;
                        for ch in 0..c {
                            acc += f_li.at(ch, x, y) * f_cam.at(ch, tx as usize, ty as usize);
                        }
                        out[(y * w + x) * m + mi] = acc / c as f64;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn d4_gives_81_channels() {
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        let a = random_map(&mut rng, 8, 4, 2);
        let b = random_map(&mut rng, 8, 4, 2);
        let cv = correlate(&a, &b, 4).unwrap();
        assert_eq!(cv.m(), 81);
    }

    #[test]
    fn all_ones_interior_costs_are_one() {
        let mut a = FeatureMap::zeros(16, 16, 8);
        a.data.fill(1.0);
        let cv = correlate(&a, &a, 4).unwrap();
        // Interior pixel: every displacement is in bounds.
        for mi in 0..cv.m() {
            assert_abs_diff_eq!(cv.at(8, 8, mi), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..3 {
            let a = random_map(&mut rng, 12, 7, 5);
            let b = random_map(&mut rng, 12, 7, 5);
            let cv = correlate(&a, &b, 3).unwrap();
            let expect = oracle(&a, &b, 3);
            for (got, want) in cv.data.iter().zip(expect.iter()) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn d0_is_per_pixel_normalized_dot() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let a = random_map(&mut rng, 6, 5, 4);
        let b = random_map(&mut rng, 6, 5, 4);
        let cv = correlate(&a, &b, 0).unwrap();
        assert_eq!(cv.m(), 1);
        for y in 0..5 {
            for x in 0..6 {
                let dot: f64 = (0..4).map(|c| a.at(c, x, y) * b.at(c, x, y)).sum();
                assert_abs_diff_eq!(cv.at(x, y, 0), dot / 4.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn swap_with_negated_displacement_transposes() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let a = random_map(&mut rng, 9, 6, 3);
        let b = random_map(&mut rng, 9, 6, 3);
        let ab = correlate(&a, &b, 2).unwrap();
        let ba = correlate(&b, &a, 2).unwrap();
        for y in 0..6i64 {
            for x in 0..9i64 {
                for dy in -2..=2i64 {
                    for dx in -2..=2i64 {
                        let (ty, tx) = (y + dy, x + dx);
                        if ty < 0 || tx < 0 || ty >= 6 || tx >= 9 {
                            continue;
                        }
                        let lhs = ab.at(x as usize, y as usize, ab.channel(dy, dx));
                        let rhs = ba.at(tx as usize, ty as usize, ba.channel(-dy, -dx));
                        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn linear_in_each_argument() {
        // Power-of-two scale so the identity holds bit-exactly.
        let mut rng = ChaCha12Rng::seed_from_u64(24);
        let a = random_map(&mut rng, 5, 4, 3);
        let b = random_map(&mut rng, 5, 4, 3);
        let mut a2 = a.clone();
        for v in a2.data.iter_mut() {
            *v *= 2.0;
        }
        let cv = correlate(&a, &b, 1).unwrap();
        let cv2 = correlate(&a2, &b, 1).unwrap();
        for (x, y) in cv.data.iter().zip(cv2.data.iter()) {
            assert_eq!(x * 2.0, *y);
        }
    }

    #[test]
    fn shape_mismatch_errors() {
        let a = FeatureMap::zeros(4, 4, 2);
        let b = FeatureMap::zeros(4, 3, 2);
        assert!(correlate(&a, &b, 1).is_err());
        let c = FeatureMap::zeros(4, 4, 3);
        assert!(correlate(&a, &c, 1).is_err());
    }

    #[test]
    fn leaky_relu_behavior() {
        let cv = CostVolume {
            width: 1,
            height: 1,
            radius: 0,
            data: vec![2.0],
        };
        assert_eq!(leaky_relu(&cv, 0.1).data, vec![2.0]);
        let neg = CostVolume {
            width: 1,
            height: 1,
            radius: 0,
            data: vec![-2.0],
        };
        assert_abs_diff_eq!(leaky_relu(&neg, 0.1).data[0], -0.2, epsilon = 1e-15);
        // Idempotent on nonnegative volumes.
        let nonneg = CostVolume {
            width: 1,
            height: 1,
            radius: 1,
            data: vec![0.0, 0.5, 2.0, 7.0, 0.25, 1.0, 0.75, 3.0, 0.125],
        };
        assert_eq!(leaky_relu(&nonneg, 0.1).data, nonneg.data);
    }
}
