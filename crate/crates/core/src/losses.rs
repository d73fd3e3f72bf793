//! Supervised losses: smooth-L1 translation, quaternion angular distance,
//! and point-cloud displacement, combined per pair and summed over pairs.
//!
//! Every loss comes with its analytic gradient with respect to the predicted
//! translation and the predicted unit quaternion; the normalization backward
//! lifts unit-quaternion gradients to the raw (pre-normalization) head
//! output. Rotation losses are radians internally.

use crate::geometry::{
    angular_distance_rad, cross, GeometryError, PointCloud, Quaternion, RigidTransform,
};
use crate::Pair;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty point cloud in batch element {0}")]
    EmptyCloud(usize),
    #[error("batch size mismatch: {0} predictions vs {1} targets")]
    BatchMismatch(usize, usize),
    #[error("weight domain violation: {0}")]
    WeightDomain(String),
    #[error("no pairs present")]
    ZeroPairs,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Loss weights of the per-pair combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_t: f64,
    pub lambda_r: f64,
    pub w: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.lambda_t < 0.0 || self.lambda_r < 0.0 {
            return Err(LossError::WeightDomain(format!(
                "lambda_t={}, lambda_r={} must be nonnegative",
                self.lambda_t, self.lambda_r
            )));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(LossError::WeightDomain(format!(
                "w={} must lie in [0, 1]",
                self.w
            )));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_t: 1.0,
            lambda_r: 1.0,
            w: 0.5,
        }
    }
}

/// Smooth L1 with transition at |x| = 1.
pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

/// Derivative of [`smooth_l1`]; continuous at the transition.
pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Batch-mean smooth-L1 translation loss, summed over the 3 components.
pub fn loss_translation(pred: &[[f64; 3]], target: &[[f64; 3]]) -> Result<f64, LossError> {
    if pred.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    if pred.len() != target.len() {
        return Err(LossError::BatchMismatch(pred.len(), target.len()));
    }
    let sum: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (0..3).map(|i| smooth_l1(p[i] - t[i])).sum::<f64>())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Gradient of the single-sample translation term with respect to `pred`.
pub fn grad_translation_single(pred: [f64; 3], target: [f64; 3]) -> [f64; 3] {
    [
        smooth_l1_grad(pred[0] - target[0]),
        smooth_l1_grad(pred[1] - target[1]),
        smooth_l1_grad(pred[2] - target[2]),
    ]
}

/// Batch-mean angular distance between unit quaternions, radians.
pub fn loss_rotation(pred: &[Quaternion], target: &[Quaternion]) -> Result<f64, LossError> {
    if pred.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    if pred.len() != target.len() {
        return Err(LossError::BatchMismatch(pred.len(), target.len()));
    }
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(target.iter()) {
        sum += angular_distance_rad(p, t)?;
    }
    Ok(sum / pred.len() as f64)
}

/// Gradient of `theta(pred, target)` (radians) with respect to the unit
/// quaternion `pred`. At the clamp boundary (|dot| >= 1) the subgradient 0
/// is returned.
pub fn grad_rotation_single(pred: &Quaternion, target: &Quaternion) -> [f64; 4] {
    let d = pred.dot(target);
    let s = d.abs();
    if s >= 1.0 {
        return [0.0; 4];
    }
    let scale = -2.0 * d.signum() / (1.0 - s * s).sqrt();
    [
        scale * target.w,
        scale * target.x,
        scale * target.y,
        scale * target.z,
    ]
}

/// Batch mean of per-cloud mean displacement between `pred(x)` and `gt(x)`.
pub fn loss_pcd(
    pred: &[RigidTransform],
    gt: &[RigidTransform],
    clouds: &[&PointCloud],
) -> Result<f64, LossError> {
    if pred.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    if pred.len() != gt.len() || pred.len() != clouds.len() {
        return Err(LossError::BatchMismatch(pred.len(), gt.len().min(clouds.len())));
    }
    let mut sum = 0.0;
    for (i, ((tp, tg), pc)) in pred.iter().zip(gt.iter()).zip(clouds.iter()).enumerate() {
        if pc.is_empty() {
            return Err(LossError::EmptyCloud(i));
        }
        let mut cloud_sum = 0.0;
        for &x in &pc.points {
            let a = tp.apply_point(x);
            let b = tg.apply_point(x);
            cloud_sum +=
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        }
        sum += cloud_sum / pc.len() as f64;
    }
    Ok(sum / pred.len() as f64)
}

/// Jacobian of the rotated vector `q v q*` with respect to the (unit)
/// quaternion, as four 3-vector columns `[d/dw, d/dx, d/dy, d/dz]`.
fn rotate_jacobian(q: &Quaternion, v: [f64; 3]) -> [[f64; 3]; 4] {
    let u = [q.x, q.y, q.z];
    let w = q.w;
    let uv = cross(u, v);
    let udotv = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let mut cols = [[0.0; 3]; 4];
    cols[0] = [2.0 * uv[0], 2.0 * uv[1], 2.0 * uv[2]];
    for j in 0..3 {
        // d(v')/du_j = 2w (e_j x v) + 2 ((u.v) e_j + u v_j - 2 v u_j)
        let e = [(j == 0) as i32 as f64, (j == 1) as i32 as f64, (j == 2) as i32 as f64];
        let exv = cross(e, v);
        for i in 0..3 {
            cols[j + 1][i] =
                2.0 * (w * exv[i] + udotv * e[i] + u[i] * v[j] - 2.0 * v[i] * u[j]);
        }
    }
    cols
}

/// Single-sample point-cloud loss: value plus gradients with respect to the
/// predicted translation and predicted unit quaternion.
pub fn pcd_single_with_grad(
    pred: &RigidTransform,
    gt: &RigidTransform,
    cloud: &PointCloud,
) -> Result<(f64, [f64; 3], [f64; 4]), LossError> {
    if cloud.is_empty() {
        return Err(LossError::EmptyCloud(0));
    }
    let n = cloud.len() as f64;
    let mut value = 0.0;
    let mut d_t = [0.0; 3];
    let mut d_q = [0.0; 4];
    for &x in &cloud.points {
        let a = pred.apply_point(x);
        let b = gt.apply_point(x);
        let e = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let dist = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
        value += dist;
        if dist > 1e-12 {
            let g = [e[0] / dist, e[1] / dist, e[2] / dist];
            for i in 0..3 {
                d_t[i] += g[i];
            }
            let jac = rotate_jacobian(&pred.rotation, x);
            for j in 0..4 {
                d_q[j] += g[0] * jac[j][0] + g[1] * jac[j][1] + g[2] * jac[j][2];
            }
        }
    }
    Ok((
        value / n,
        [d_t[0] / n, d_t[1] / n, d_t[2] / n],
        [d_q[0] / n, d_q[1] / n, d_q[2] / n, d_q[3] / n],
    ))
}

/// Backward of quaternion normalization: lifts a gradient with respect to
/// the unit quaternion to the raw head output via `(I - q q^T) / ||raw||`.
pub fn quat_normalize_backward(raw: &Quaternion, d_unit: [f64; 4]) -> [f64; 4] {
    let n = raw.norm();
    let q = [raw.w / n, raw.x / n, raw.y / n, raw.z / n];
    let dot = q[0] * d_unit[0] + q[1] * d_unit[1] + q[2] * d_unit[2] + q[3] * d_unit[3];
    [
        (d_unit[0] - q[0] * dot) / n,
        (d_unit[1] - q[1] * dot) / n,
        (d_unit[2] - q[2] * dot) / n,
        (d_unit[3] - q[3] * dot) / n,
    ]
}

/// Per-pair loss components and their weighted combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLossBreakdown {
    pub pair: Pair,
    pub l_trans: f64,
    pub l_rot: f64,
    pub l_pcd: f64,
    pub l_pair: f64,
}

/// Combine per-pair components: `(1-w)(lambda_t L_t + lambda_r L_r) + w L_pcd`.
pub fn loss_pair(
    pair: Pair,
    l_trans: f64,
    l_rot: f64,
    l_pcd: f64,
    weights: &LossWeights,
) -> Result<PairLossBreakdown, LossError> {
    weights.validate()?;
    let l_pair = (1.0 - weights.w) * (weights.lambda_t * l_trans + weights.lambda_r * l_rot)
        + weights.w * l_pcd;
    Ok(PairLossBreakdown {
        pair,
        l_trans,
        l_rot,
        l_pcd,
        l_pair,
    })
}

/// Total objective: sum of the per-pair losses that are present.
pub fn loss_total(
    rgb: Option<&PairLossBreakdown>,
    ev: Option<&PairLossBreakdown>,
) -> Result<f64, LossError> {
    match (rgb, ev) {
        (None, None) => Err(LossError::ZeroPairs),
        (a, b) => Ok(a.map_or(0.0, |l| l.l_pair) + b.map_or(0.0, |l| l.l_pair)),
    }
}

/// One row of the exported loss curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLossRow {
    pub epoch: usize,
    pub rgb: PairLossBreakdown,
    pub ev: PairLossBreakdown,
    pub total: f64,
}

/// CSV export of a loss curve, one row per epoch.
pub fn loss_curve_csv(rows: &[EpochLossRow]) -> String {
    let mut out = String::from(
        "epoch,l_trans_rgb,l_rot_rgb,l_pcd_rgb,l_pair_rgb,l_trans_ev,l_rot_ev,l_pcd_ev,l_pair_ev,l_total\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.epoch,
            r.rgb.l_trans,
            r.rgb.l_rot,
            r.rgb.l_pcd,
            r.rgb.l_pair,
            r.ev.l_trans,
            r.ev.l_rot,
            r.ev.l_pcd,
            r.ev.l_pair,
            r.total,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euler_to_quat, Frame};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn translation_zero_at_target() {
        let t = [[0.3, -0.2, 0.9]];
        assert_eq!(loss_translation(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn translation_boundary_and_linear_regime() {
        let target = [[0.0, 0.0, 0.0]];
        assert_abs_diff_eq!(
            loss_translation(&[[1.0, 0.0, 0.0]], &target).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            loss_translation(&[[2.0, 0.0, 0.0]], &target).unwrap(),
            1.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn translation_empty_batch_errors() {
        assert_eq!(loss_translation(&[], &[]), Err(LossError::EmptyBatch));
    }

    #[test]
    fn smooth_l1_is_c1_at_transition() {
        let h = 1e-7;
        let left = (smooth_l1(1.0) - smooth_l1(1.0 - h)) / h;
        let right = (smooth_l1(1.0 + h) - smooth_l1(1.0)) / h;
        assert_abs_diff_eq!(left, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(right, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn rotation_zero_at_target() {
        let q = euler_to_quat(3.0, -7.0, 11.0);
        assert_abs_diff_eq!(loss_rotation(&[q], &[q]).unwrap(), 0.0, epsilon = 1e-7);
    }

    #[test]
    fn rotation_quarter_turn_is_half_pi() {
        let q = euler_to_quat(0.0, 0.0, 90.0);
        let i = Quaternion::identity();
        assert_abs_diff_eq!(
            loss_rotation(&[q], &[i]).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rotation_batch_mean() {
        let i = Quaternion::identity();
        let q = euler_to_quat(0.0, 0.0, 90.0);
        assert_abs_diff_eq!(
            loss_rotation(&[i, q], &[i, i]).unwrap(),
            FRAC_PI_4,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pcd_zero_at_target() {
        let t = crate::dataset::gt_lidar_rgb();
        let pc = PointCloud::new(vec![[1.0, 2.0, 3.0], [-1.0, 0.5, 2.0]], Frame::Lidar);
        assert_eq!(loss_pcd(&[t], &[t], &[&pc]).unwrap(), 0.0);
    }

    #[test]
    fn pcd_pure_translation_offset() {
        let gt = crate::dataset::gt_lidar_rgb();
        let mut pred = gt;
        pred.translation[2] += 0.1;
        let pc = PointCloud::new(
            vec![[1.0, 2.0, 3.0], [-4.0, 0.5, 2.0], [0.0, 0.0, 10.0]],
            Frame::Lidar,
        );
        assert_abs_diff_eq!(
            loss_pcd(&[pred], &[gt], &[&pc]).unwrap(),
            0.1,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pcd_matches_bruteforce_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let gt = crate::dataset::gt_lidar_rgb();
        let pred = RigidTransform::new(
            euler_to_quat(4.0, -2.0, 7.0),
            [0.2, -0.1, 0.4],
            Frame::Lidar,
            Frame::Rgb,
        )
        .unwrap();
        let pts: Vec<[f64; 3]> = (0..200)
            .map(|_| {
                [
                    rng.random_range(-10.0..=10.0),
                    rng.random_range(-10.0..=10.0),
                    rng.random_range(-10.0..=10.0),
                ]
            })
            .collect();
        let pc = PointCloud::new(pts.clone(), Frame::Lidar);
        let got = loss_pcd(&[pred], &[gt], &[&pc]).unwrap();
        let mut expect = 0.0;
        for &x in &pts {
            let a = pred.apply_point(x);
            let b = gt.apply_point(x);
            expect += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2))
                .sqrt();
        }
        expect /= pts.len() as f64;
        assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
    }

    #[test]
    fn pcd_rotation_about_origin_bounded_by_chord() {
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        for _ in 0..20 {
            let angle = rng.random_range(0.1..=20.0f64);
            let gt = RigidTransform::identity(Frame::Lidar);
            let pred = RigidTransform::new(
                euler_to_quat(0.0, 0.0, angle),
                [0.0; 3],
                Frame::Lidar,
                Frame::Lidar,
            )
            .unwrap();
            let pts: Vec<[f64; 3]> = (0..100)
                .map(|_| {
                    [
                        rng.random_range(-5.0..=5.0),
                        rng.random_range(-5.0..=5.0),
                        rng.random_range(-5.0..=5.0),
                    ]
                })
                .collect();
            let max_norm = pts
                .iter()
                .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
                .fold(0.0, f64::max);
            let pc = PointCloud::new(pts, Frame::Lidar);
            let loss = loss_pcd(&[pred], &[gt], &[&pc]).unwrap();
            assert!(loss <= angle.to_radians() * max_norm + 1e-12);
        }
    }

    #[test]
    fn pair_combination_arithmetic() {
        let w = LossWeights {
            lambda_t: 1.0,
            lambda_r: 1.0,
            w: 0.5,
        };
        let b = loss_pair(Pair::LidarRgb, 0.2, 0.1, 0.4, &w).unwrap();
        assert_abs_diff_eq!(b.l_pair, 0.35, epsilon = 1e-15);

        let only_pcd = loss_pair(
            Pair::LidarRgb,
            0.2,
            0.1,
            0.4,
            &LossWeights {
                lambda_t: 1.0,
                lambda_r: 1.0,
                w: 1.0,
            },
        )
        .unwrap();
        assert_eq!(only_pcd.l_pair, only_pcd.l_pcd);

        let only_trans = loss_pair(
            Pair::LidarRgb,
            0.2,
            0.1,
            0.4,
            &LossWeights {
                lambda_t: 1.0,
                lambda_r: 0.0,
                w: 0.0,
            },
        )
        .unwrap();
        assert_eq!(only_trans.l_pair, only_trans.l_trans);
    }

    #[test]
    fn pair_rejects_bad_weights() {
        assert!(loss_pair(
            Pair::LidarRgb,
            0.1,
            0.1,
            0.1,
            &LossWeights {
                lambda_t: -1.0,
                lambda_r: 1.0,
                w: 0.5
            }
        )
        .is_err());
        assert!(loss_pair(
            Pair::LidarRgb,
            0.1,
            0.1,
            0.1,
            &LossWeights {
                lambda_t: 1.0,
                lambda_r: 1.0,
                w: 1.5
            }
        )
        .is_err());
    }

    #[test]
    fn total_sums_pairs_symmetrically() {
        let w = LossWeights::default();
        let a = loss_pair(Pair::LidarRgb, 0.2, 0.1, 0.4, &w).unwrap();
        let b = loss_pair(Pair::LidarEvent, 0.1, 0.05, 0.15, &w).unwrap();
        let ab = loss_total(Some(&a), Some(&b)).unwrap();
        let ba = loss_total(Some(&b), Some(&a)).unwrap();
        assert_eq!(ab, ba);
        assert_abs_diff_eq!(ab, a.l_pair + b.l_pair, epsilon = 1e-15);
        // Bi-modal degradation: a single present pair is its own total.
        assert_eq!(loss_total(Some(&a), None).unwrap(), a.l_pair);
        assert!(loss_total(None, None).is_err());
    }

    // Central finite differences for the per-sample gradients, through the
    // quaternion normalization so raw head outputs are covered.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let h = 1e-5;
        for _ in 0..10 {
            let raw = Quaternion::new(
                rng.random_range(0.5..=1.5),
                rng.random_range(-0.5..=0.5),
                rng.random_range(-0.5..=0.5),
                rng.random_range(-0.5..=0.5),
            );
            let target = euler_to_quat(
                rng.random_range(-30.0..=30.0),
                rng.random_range(-30.0..=30.0),
                rng.random_range(-30.0..=30.0),
            );
            // Rotation loss wrt raw quaternion.
            let unit = raw.normalized().unwrap();
            let d_unit = grad_rotation_single(&unit, &target);
            let d_raw = quat_normalize_backward(&raw, d_unit);
            let comps = [raw.w, raw.x, raw.y, raw.z];
            for j in 0..4 {
                let mut plus = comps;
                plus[j] += h;
                let mut minus = comps;
                minus[j] -= h;
                let f = |c: [f64; 4]| {
                    let q = Quaternion::new(c[0], c[1], c[2], c[3]).normalized().unwrap();
                    angular_distance_rad(&q, &target).unwrap()
                };
                let fd = (f(plus) - f(minus)) / (2.0 * h);
                let rel = (d_raw[j] - fd).abs() / d_raw[j].abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "rotation grad comp {j}: {} vs {fd}", d_raw[j]);
            }

            // PCD loss wrt translation and raw quaternion.
            let pts: Vec<[f64; 3]> = (0..20)
                .map(|_| {
                    [
                        rng.random_range(-5.0..=5.0),
                        rng.random_range(-5.0..=5.0),
                        rng.random_range(1.0..=10.0),
                    ]
                })
                .collect();
            let pc = PointCloud::new(pts, Frame::Lidar);
            let gt = crate::dataset::gt_lidar_rgb();
            let t_pred = [
                rng.random_range(-0.5..=0.5),
                rng.random_range(-0.5..=0.5),
                rng.random_range(-0.5..=0.5),
            ];
            let make = |c: [f64; 4], t: [f64; 3]| RigidTransform {
                rotation: Quaternion::new(c[0], c[1], c[2], c[3]).normalized().unwrap(),
                translation: t,
                source: Frame::Lidar,
                target: Frame::Rgb,
            };
            let pred = make(comps, t_pred);
            let (_, d_t, d_q_unit) = pcd_single_with_grad(&pred, &gt, &pc).unwrap();
            let d_q_raw = quat_normalize_backward(&raw, d_q_unit);
            for j in 0..3 {
                let mut plus = t_pred;
                plus[j] += h;
                let mut minus = t_pred;
                minus[j] -= h;
                let fp = loss_pcd(&[make(comps, plus)], &[gt], &[&pc]).unwrap();
                let fm = loss_pcd(&[make(comps, minus)], &[gt], &[&pc]).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let rel = (d_t[j] - fd).abs() / d_t[j].abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "pcd translation grad {j}: {} vs {fd}", d_t[j]);
            }
            for j in 0..4 {
                let mut plus = comps;
                plus[j] += h;
                let mut minus = comps;
                minus[j] -= h;
                let fp = loss_pcd(&[make(plus, t_pred)], &[gt], &[&pc]).unwrap();
                let fm = loss_pcd(&[make(minus, t_pred)], &[gt], &[&pc]).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let rel = (d_q_raw[j] - fd).abs() / d_q_raw[j].abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "pcd rotation grad {j}: {} vs {fd}", d_q_raw[j]);
            }

            // Translation loss gradient.
            let target_t = [
                rng.random_range(-2.0..=2.0),
                rng.random_range(-2.0..=2.0),
                rng.random_range(-2.0..=2.0),
            ];
            let g = grad_translation_single(t_pred, target_t);
            for j in 0..3 {
                let mut plus = t_pred;
                plus[j] += h;
                let mut minus = t_pred;
                minus[j] -= h;
                let fp = loss_translation(&[plus], &[target_t]).unwrap();
                let fm = loss_translation(&[minus], &[target_t]).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let rel = (g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "translation grad {j}: {} vs {fd}", g[j]);
            }
        }
    }

    #[test]
    fn loss_curve_csv_header_and_rows() {
        let w = LossWeights::default();
        let rgb = loss_pair(Pair::LidarRgb, 0.2, 0.1, 0.4, &w).unwrap();
        let ev = loss_pair(Pair::LidarEvent, 0.1, 0.05, 0.15, &w).unwrap();
        let total = loss_total(Some(&rgb), Some(&ev)).unwrap();
        let csv = loss_curve_csv(&[EpochLossRow {
            epoch: 0,
            rgb,
            ev,
            total,
        }]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epoch,l_trans_rgb,l_rot_rgb,l_pcd_rgb,l_pair_rgb,l_trans_ev,l_rot_ev,l_pcd_ev,l_pair_ev,l_total"
        );
        assert!(lines.next().unwrap().starts_with("0,0.2,0.1,0.4,"));
    }
}
