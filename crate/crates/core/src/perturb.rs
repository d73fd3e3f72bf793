//! Artificial miscalibration: staged perturbation schedules and independent
//! per-pair pose disturbances.
//!
//! A perturbation composes on the left of the ground-truth extrinsic
//! (a camera-side disturbance): `T_init = dT o T_gt`. Losses and metrics use
//! the same convention.

use crate::geometry::{euler_to_quat, Frame, GeometryError, RigidTransform};
use crate::rng::{substream, Role, StreamKey};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("unknown schedule {0:?}")]
    UnknownSchedule(String),
    #[error("schedule must be non-empty")]
    EmptySchedule,
    #[error("schedule ranges must be non-increasing (stage {stage})")]
    NotMonotone { stage: usize },
    #[error("negative bound in stage {stage}")]
    NegativeBound { stage: usize },
    #[error("malformed schedule line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-stage maximum per-axis errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbRange {
    /// Degrees, per rotation axis.
    pub max_rot_deg: f64,
    /// Centimeters, per translation axis.
    pub max_trans_cm: f64,
}

/// Ordered stage ranges, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSchedule {
    ranges: Vec<PerturbRange>,
}

impl StageSchedule {
    pub fn new(ranges: Vec<PerturbRange>) -> Result<Self, PerturbError> {
        if ranges.is_empty() {
            return Err(PerturbError::EmptySchedule);
        }
        for (stage, r) in ranges.iter().enumerate() {
            if r.max_rot_deg < 0.0 || r.max_trans_cm < 0.0 {
                return Err(PerturbError::NegativeBound { stage });
            }
            if stage > 0 {
                let prev = ranges[stage - 1];
                if r.max_rot_deg > prev.max_rot_deg || r.max_trans_cm > prev.max_trans_cm {
                    return Err(PerturbError::NotMonotone { stage });
                }
            }
        }
        Ok(Self { ranges })
    }

    pub fn ranges(&self) -> &[PerturbRange] {
        &self.ranges
    }

    pub fn stages(&self) -> usize {
        self.ranges.len()
    }

    /// Stage ranges are 1-indexed to match stage numbering.
    pub fn stage(&self, k: usize) -> PerturbRange {
        self.ranges[k - 1]
    }

    /// The largest range; evaluation draws its single perturbation here.
    pub fn largest(&self) -> PerturbRange {
        self.ranges[0]
    }

    /// One `max_rot_deg max_trans_cm` pair per line, largest first.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.ranges {
            out.push_str(&format!("{} {}\n", r.max_rot_deg, r.max_trans_cm));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, PerturbError> {
        let mut ranges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(PerturbError::MalformedLine {
                    line: i + 1,
                    message: format!("expected 2 fields, got {}", fields.len()),
                });
            }
            let max_rot_deg = fields[0].parse::<f64>().map_err(|e| {
                PerturbError::MalformedLine {
                    line: i + 1,
                    message: e.to_string(),
                }
            })?;
            let max_trans_cm = fields[1].parse::<f64>().map_err(|e| {
                PerturbError::MalformedLine {
                    line: i + 1,
                    message: e.to_string(),
                }
            })?;
            ranges.push(PerturbRange {
                max_rot_deg,
                max_trans_cm,
            });
        }
        StageSchedule::new(ranges)
    }

    pub fn load(path: &Path) -> Result<Self, PerturbError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Built-in schedules: the five-stage and two-stage ranges.
pub fn builtin_schedule(name: &str) -> Result<StageSchedule, PerturbError> {
    let ranges = match name {
        "five_stage" => vec![
            (20.0, 150.0),
            (10.0, 100.0),
            (5.0, 50.0),
            (2.0, 20.0),
            (1.0, 10.0),
        ],
        "two_stage" => vec![(10.0, 100.0), (1.0, 10.0)],
        other => return Err(PerturbError::UnknownSchedule(other.to_string())),
    };
    StageSchedule::new(
        ranges
            .into_iter()
            .map(|(max_rot_deg, max_trans_cm)| PerturbRange {
                max_rot_deg,
                max_trans_cm,
            })
            .collect(),
    )
}

/// Draw a camera-side disturbance: roll/pitch/yaw and tx/ty/tz each uniform
/// over the closed per-axis range. Draw order is fixed (roll, pitch, yaw,
/// tx, ty, tz) so substreams reproduce bit-exactly.
pub fn sample_perturbation(
    r: &PerturbRange,
    rng: &mut ChaCha12Rng,
    frame: Frame,
) -> RigidTransform {
    let mut angles = [0.0; 3];
    for a in angles.iter_mut() {
        *a = if r.max_rot_deg > 0.0 {
            rng.random_range(-r.max_rot_deg..=r.max_rot_deg)
        } else {
            0.0
        };
    }
    let mut trans = [0.0; 3];
    for t in trans.iter_mut() {
        *t = if r.max_trans_cm > 0.0 {
            rng.random_range(-r.max_trans_cm..=r.max_trans_cm) / 100.0
        } else {
            0.0
        };
    }
    RigidTransform {
        rotation: euler_to_quat(angles[0], angles[1], angles[2]),
        translation: trans,
        source: frame,
        target: frame,
    }
}

/// Apply a disturbance to a ground-truth pose: `T_init = dT o T_gt`.
pub fn miscalibrate(
    t_gt: &RigidTransform,
    dt: &RigidTransform,
) -> Result<RigidTransform, GeometryError> {
    dt.compose(t_gt)
}

/// Independently perturb both pairs from disjoint substreams keyed by
/// `(seed, pair, frame, stage)`.
pub fn dual_perturb(
    t_rgb: &RigidTransform,
    t_ev: &RigidTransform,
    r: &PerturbRange,
    seed: u64,
    frame_id: u32,
    stage_id: u16,
) -> Result<(RigidTransform, RigidTransform), GeometryError> {
    let key = StreamKey::new(Role::EvalPerturb)
        .frame(frame_id)
        .stage(stage_id);
    let mut rng_rgb = substream(seed, key.pair(0));
    let mut rng_ev = substream(seed, key.pair(1));
    let d_rgb = sample_perturbation(r, &mut rng_rgb, t_rgb.target);
    let d_ev = sample_perturbation(r, &mut rng_ev, t_ev.target);
    Ok((miscalibrate(t_rgb, &d_rgb)?, miscalibrate(t_ev, &d_ev)?))
}
