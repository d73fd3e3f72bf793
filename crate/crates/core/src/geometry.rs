//! SE(3) and quaternion algebra underlying every pose in the pipeline.
//!
//! Conventions, fixed once and used everywhere including file I/O:
//! - quaternion storage order is scalar-first `(w, x, y, z)`;
//! - Euler order is intrinsic Z-Y-X (yaw, pitch, roll), so
//!   `R = Rz(yaw) * Ry(pitch) * Rx(roll)`;
//! - angles are radians internally, degrees at API and report boundaries.

use thiserror::Error;

/// Tolerance for accepting a quaternion as unit-norm at API boundaries.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate quaternion")]
    DegenerateQuaternion,
    #[error("quaternion norm {norm} deviates from unity beyond tolerance")]
    NonUnitQuaternion { norm: f64 },
    #[error("frame mismatch: expected {expected:?}, found {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("malformed transform line: {0}")]
    MalformedTransform(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Coordinate frame tag carried by clouds and transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    Lidar,
    Rgb,
    Event,
}

/// Unit-quaternion rotation, scalar-first storage.
///
/// `q` and `-q` encode the same rotation (double cover); every angular
/// comparison in this crate collapses the sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Scale to unit norm, preserving direction.
    pub fn normalized(&self) -> Result<Quaternion, GeometryError> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(GeometryError::DegenerateQuaternion);
        }
        Ok(Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOL
    }

    pub fn conjugate(&self) -> Quaternion {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self * other`.
    pub fn mul(&self, other: &Quaternion) -> Quaternion {
        let (w1, x1, y1, z1) = (self.w, self.x, self.y, self.z);
        let (w2, x2, y2, z2) = (other.w, other.x, other.y, other.z);
        Quaternion::new(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )
    }

    /// Rotate a vector: `v' = v + 2w(u x v) + 2u x (u x v)` with `u = (x,y,z)`.
    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let u = [self.x, self.y, self.z];
        let uv = cross(u, v);
        let uuv = cross(u, uv);
        [
            v[0] + 2.0 * (self.w * uv[0] + uuv[0]),
            v[1] + 2.0 * (self.w * uv[1] + uuv[1]),
            v[2] + 2.0 * (self.w * uv[2] + uuv[2]),
        ]
    }

    /// Row-major 3x3 rotation matrix of this (assumed unit) quaternion.
    pub fn to_rotation_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Normalize a quaternion to unit norm. Errors on zero or non-finite norm.
pub fn quat_normalize(q: &Quaternion) -> Result<Quaternion, GeometryError> {
    q.normalized()
}

fn check_unit(q: &Quaternion) -> Result<(), GeometryError> {
    if !q.is_unit() {
        return Err(GeometryError::NonUnitQuaternion { norm: q.norm() });
    }
    Ok(())
}

/// Angular distance between two unit quaternions, in radians.
///
/// `theta = 2 * acos(|<q1, q2>|)`; the absolute value collapses the double
/// cover and the dot product is clamped to [-1, 1] so rounding never yields
/// NaN. Result lies in [0, pi]. Near zero the equivalent chord form
/// `4 * asin(||q1 -+ q2|| / 2)` is used: acos loses all precision at 1,
/// and identical (or exactly opposite) inputs must give exactly 0.
pub fn angular_distance_rad(q1: &Quaternion, q2: &Quaternion) -> Result<f64, GeometryError> {
    check_unit(q1)?;
    check_unit(q2)?;
    let d = q1.dot(q2);
    let s = d.abs().clamp(0.0, 1.0);
    if s > 0.999 {
        let sign = if d >= 0.0 { 1.0 } else { -1.0 };
        let diff = [
            q1.w - sign * q2.w,
            q1.x - sign * q2.x,
            q1.y - sign * q2.y,
            q1.z - sign * q2.z,
        ];
        let half_chord = 0.5
            * (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2] + diff[3] * diff[3])
                .sqrt();
        Ok(4.0 * half_chord.clamp(0.0, 1.0).asin())
    } else {
        Ok(2.0 * s.acos())
    }
}

/// Angular distance between two unit quaternions, in degrees, in [0, 180].
pub fn angular_distance(q1: &Quaternion, q2: &Quaternion) -> Result<f64, GeometryError> {
    Ok(angular_distance_rad(q1, q2)?.to_degrees())
}

/// Euler angles in degrees, intrinsic Z-Y-X (yaw, pitch, roll).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    /// Set when |pitch| is within 1e-6 degrees of 90; yaw is then
    /// conventionally 0 and roll absorbs the free axis.
    pub gimbal_lock: bool,
}

/// Unit quaternion of `Rz(yaw) * Ry(pitch) * Rx(roll)`, angles in degrees.
pub fn euler_to_quat(roll_deg: f64, pitch_deg: f64, yaw_deg: f64) -> Quaternion {
    let (hr, hp, hy) = (
        roll_deg.to_radians() * 0.5,
        pitch_deg.to_radians() * 0.5,
        yaw_deg.to_radians() * 0.5,
    );
    let qx = Quaternion::new(hr.cos(), hr.sin(), 0.0, 0.0);
    let qy = Quaternion::new(hp.cos(), 0.0, hp.sin(), 0.0);
    let qz = Quaternion::new(hy.cos(), 0.0, 0.0, hy.sin());
    qz.mul(&qy).mul(&qx)
}

/// Inverse of [`euler_to_quat`] away from gimbal lock.
pub fn quat_to_euler(q: &Quaternion) -> Result<EulerAngles, GeometryError> {
    check_unit(q)?;
    let m = q.to_rotation_matrix();
    let sin_pitch = (-m[2][0]).clamp(-1.0, 1.0);
    let pitch = sin_pitch.asin();
    let pitch_deg = pitch.to_degrees();
    if (pitch_deg.abs() - 90.0).abs() <= 1e-6 {
        // Only roll - yaw (pitch = +90) or roll + yaw (pitch = -90) is
        // observable; put it all in roll.
        let roll = if sin_pitch > 0.0 {
            f64::atan2(m[0][1], m[1][1])
        } else {
            f64::atan2(-m[0][1], m[1][1])
        };
        return Ok(EulerAngles {
            roll_deg: roll.to_degrees(),
            pitch_deg: if sin_pitch > 0.0 { 90.0 } else { -90.0 },
            yaw_deg: 0.0,
            gimbal_lock: true,
        });
    }
    let roll = f64::atan2(m[2][1], m[2][2]);
    let yaw = f64::atan2(m[1][0], m[0][0]);
    Ok(EulerAngles {
        roll_deg: roll.to_degrees(),
        pitch_deg: pitch_deg,
        yaw_deg: yaw.to_degrees(),
        gimbal_lock: false,
    })
}

/// Pinhole camera intrinsics at native sensor resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    /// Focal lengths, pixels.
    pub fx: f64,
    pub fy: f64,
    /// Principal point, pixels.
    pub cx: f64,
    pub cy: f64,
    /// Image size, pixels.
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }
}

/// N x 3 metric points in a named coordinate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Rigid SE(3) transform mapping points from `source` to `target` frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Quaternion,
    /// Meters.
    pub translation: [f64; 3],
    pub source: Frame,
    pub target: Frame,
}

impl RigidTransform {
    /// Build a transform, normalizing the rotation to unit norm.
    pub fn new(
        rotation: Quaternion,
        translation: [f64; 3],
        source: Frame,
        target: Frame,
    ) -> Result<Self, GeometryError> {
        Ok(Self {
            rotation: rotation.normalized()?,
            translation,
            source,
            target,
        })
    }

    pub fn identity(frame: Frame) -> Self {
        Self {
            rotation: Quaternion::identity(),
            translation: [0.0; 3],
            source: frame,
            target: frame,
        }
    }

    /// Composition `self o other`, i.e. `(self o other)(x) = self(other(x))`.
    ///
    /// Requires `other.target == self.source`; the result maps
    /// `other.source -> self.target`. The rotation is renormalized.
    pub fn compose(&self, other: &RigidTransform) -> Result<RigidTransform, GeometryError> {
        if self.source != other.target {
            return Err(GeometryError::FrameMismatch {
                expected: self.source,
                found: other.target,
            });
        }
        let rotation = self.rotation.mul(&other.rotation).normalized()?;
        let rt = self.rotation.rotate(other.translation);
        let translation = [
            rt[0] + self.translation[0],
            rt[1] + self.translation[1],
            rt[2] + self.translation[2],
        ];
        Ok(RigidTransform {
            rotation,
            translation,
            source: other.source,
            target: self.target,
        })
    }

    /// Inverse transform; swaps the frame tags.
    pub fn inverse(&self) -> RigidTransform {
        let rot_inv = self.rotation.conjugate();
        let t = rot_inv.rotate(self.translation);
        RigidTransform {
            rotation: rot_inv,
            translation: [-t[0], -t[1], -t[2]],
            source: self.target,
            target: self.source,
        }
    }

    /// Map a single point: `R x + t`.
    pub fn apply_point(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotation.rotate(p);
        [
            r[0] + self.translation[0],
            r[1] + self.translation[1],
            r[2] + self.translation[2],
        ]
    }

    /// Map every point of a cloud and retag it with the target frame.
    pub fn apply(&self, pc: &PointCloud) -> PointCloud {
        debug_assert_eq!(pc.frame, self.source, "cloud frame does not match transform source");
        PointCloud {
            points: pc.points.iter().map(|&p| self.apply_point(p)).collect(),
            frame: self.target,
        }
    }

    /// One-line text form: `qw qx qy qz tx ty tz`, 17 significant digits.
    pub fn to_line(&self) -> String {
        format!(
            "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
            self.rotation.w,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.translation[0],
            self.translation[1],
            self.translation[2],
        )
    }

    /// Parse the [`to_line`](Self::to_line) format; frames supplied by the
    /// caller. The stored rotation must already be unit-norm (our writer
    /// guarantees it); it is not renormalized, so write/read round-trips are
    /// bit-exact.
    pub fn from_line(line: &str, source: Frame, target: Frame) -> Result<Self, GeometryError> {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| GeometryError::MalformedTransform(format!("{line:?}: {e}")))?;
        if vals.len() != 7 {
            return Err(GeometryError::MalformedTransform(format!(
                "expected 7 fields, got {}",
                vals.len()
            )));
        }
        let rotation = Quaternion::new(vals[0], vals[1], vals[2], vals[3]);
        if !rotation.is_unit() {
            return Err(GeometryError::NonUnitQuaternion {
                norm: rotation.norm(),
            });
        }
        Ok(RigidTransform {
            rotation,
            translation: [vals[4], vals[5], vals[6]],
            source,
            target,
        })
    }
}
