//! Iterative multi-stage refinement, error metrics, per-axis decomposition,
//! and stage reports.
//!
//! The estimate tracked across stages is the accumulated *correction*: stage
//! 0 is the identity (the miscalibrated pose is not corrected), and each
//! stage composes its predicted residual on the left. Metrics always compare
//! the full corrected extrinsic against the ground truth.

use crate::geometry::{
    angular_distance, quat_to_euler, GeometryError, Quaternion, RigidTransform,
};
use crate::perturb::{dual_perturb, StageSchedule};
use crate::pipeline::{pair_cost_volume, FrameContext, PipelineConfig};
use crate::regressor::{forward, RegressorError, StageModel};
use crate::Pair;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty sample set")]
    EmptySet,
    #[error("sample count mismatch: {0} vs {1}")]
    CountMismatch(usize, usize),
    #[error("missing stage model for stage {0}")]
    MissingStageModel(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Regressor(#[from] RegressorError),
}

/// Accumulated correction of one pair after `stage` refinement steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationEstimate {
    pub pair: Pair,
    pub stage: usize,
    pub estimate: RigidTransform,
}

impl CalibrationEstimate {
    /// Stage-0 estimate: the identity correction in the pair's camera frame.
    pub fn initial(pair: Pair) -> Self {
        Self {
            pair,
            stage: 0,
            estimate: RigidTransform::identity(pair.camera_frame()),
        }
    }
}

/// Compose a stage's residual prediction onto the running correction.
pub fn refine_step(
    prev: &CalibrationEstimate,
    delta: &RigidTransform,
) -> Result<CalibrationEstimate, GeometryError> {
    Ok(CalibrationEstimate {
        pair: prev.pair,
        stage: prev.stage + 1,
        estimate: delta.compose(&prev.estimate)?,
    })
}

/// Mean Euclidean translation error, centimeters.
pub fn metric_et(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64, EvalError> {
    if pred.is_empty() {
        return Err(EvalError::EmptySet);
    }
    if pred.len() != gt.len() {
        return Err(EvalError::CountMismatch(pred.len(), gt.len()));
    }
    let sum: f64 = pred
        .iter()
        .zip(gt.iter())
        .map(|(p, g)| {
            ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt()
        })
        .sum();
    Ok(sum / pred.len() as f64 * 100.0)
}

/// Mean angular error, degrees.
pub fn metric_er(pred: &[Quaternion], gt: &[Quaternion]) -> Result<f64, EvalError> {
    if pred.is_empty() {
        return Err(EvalError::EmptySet);
    }
    if pred.len() != gt.len() {
        return Err(EvalError::CountMismatch(pred.len(), gt.len()));
    }
    let mut sum = 0.0;
    for (p, g) in pred.iter().zip(gt.iter()) {
        sum += angular_distance(p, g)?;
    }
    Ok(sum / pred.len() as f64)
}

/// Mean absolute per-axis errors: translation components in centimeters,
/// Euler components of the relative rotation `q_pred^-1 q_gt` in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisErrors {
    pub e_x_cm: f64,
    pub e_y_cm: f64,
    pub e_z_cm: f64,
    pub e_roll_deg: f64,
    pub e_pitch_deg: f64,
    pub e_yaw_deg: f64,
}

pub fn per_axis_errors(
    pred: &[RigidTransform],
    gt: &[RigidTransform],
) -> Result<AxisErrors, EvalError> {
    if pred.is_empty() {
        return Err(EvalError::EmptySet);
    }
    if pred.len() != gt.len() {
        return Err(EvalError::CountMismatch(pred.len(), gt.len()));
    }
    let mut t = [0.0f64; 3];
    let mut r = [0.0f64; 3];
    for (p, g) in pred.iter().zip(gt.iter()) {
        for i in 0..3 {
            t[i] += (p.translation[i] - g.translation[i]).abs();
        }
        // Relative rotation avoids wraparound artifacts of absolute angles.
        let rel = p.rotation.conjugate().mul(&g.rotation).normalized()?;
        let e = quat_to_euler(&rel)?;
        r[0] += e.roll_deg.abs();
        r[1] += e.pitch_deg.abs();
        r[2] += e.yaw_deg.abs();
    }
    let n = pred.len() as f64;
    Ok(AxisErrors {
        e_x_cm: t[0] / n * 100.0,
        e_y_cm: t[1] / n * 100.0,
        e_z_cm: t[2] / n * 100.0,
        e_roll_deg: r[0] / n,
        e_pitch_deg: r[1] / n,
        e_yaw_deg: r[2] / n,
    })
}

/// Per-(pair, stage) error summary over the evaluation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageReport {
    pub pair: Pair,
    pub stage: usize,
    pub axes: AxisErrors,
    pub e_t_cm: f64,
    pub e_r_deg: f64,
    pub n_samples: usize,
}

/// CSV export, one row per (pair, stage).
pub fn stage_report_csv(rows: &[StageReport]) -> String {
    let mut out = String::from("pair,stage,e_X,e_Y,e_Z,e_t,e_R,e_P,e_Yaw,e_r,n_samples\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.pair.label(),
            r.stage,
            r.axes.e_x_cm,
            r.axes.e_y_cm,
            r.axes.e_z_cm,
            r.e_t_cm,
            r.axes.e_roll_deg,
            r.axes.e_pitch_deg,
            r.axes.e_yaw_deg,
            r.e_r_deg,
            r.n_samples,
        ));
    }
    out
}

/// Console table, rounded to two decimals like the report tables.
pub fn stage_report_table(rows: &[StageReport]) -> String {
    let mut out = String::from(
        "pair      stage    e_X    e_Y    e_Z    e_t    e_R    e_P    e_Yaw    e_r      n\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{:<9} {:>5} {:>6.2} {:>6.2} {:>6.2} {:>6.2} {:>6.2} {:>6.2} {:>7.2} {:>6.2} {:>6}\n",
            r.pair.label(),
            r.stage,
            r.axes.e_x_cm,
            r.axes.e_y_cm,
            r.axes.e_z_cm,
            r.e_t_cm,
            r.axes.e_roll_deg,
            r.axes.e_pitch_deg,
            r.axes.e_yaw_deg,
            r.e_r_deg,
            r.n_samples,
        ));
    }
    out
}

/// One evaluated (pair, stage) pose of one frame: the fully corrected
/// extrinsic against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStagePose {
    pub pair: Pair,
    pub stage: usize,
    pub pred: RigidTransform,
    pub gt: RigidTransform,
}

/// A stage predictor: given the pair, stage, frame context, and current
/// corrected extrinsic, produce the residual correction (camera frame).
pub trait StagePredictor {
    fn predict(
        &self,
        pair: Pair,
        stage: usize,
        ctx: &FrameContext,
        t_current: &RigidTransform,
    ) -> Result<RigidTransform, EvalError>;
}

/// The learned predictor: one trained model per stage.
pub struct LearnedStages<'a> {
    pub models: &'a [StageModel],
    pub cfg: &'a PipelineConfig,
}

impl StagePredictor for LearnedStages<'_> {
    fn predict(
        &self,
        pair: Pair,
        stage: usize,
        ctx: &FrameContext,
        t_current: &RigidTransform,
    ) -> Result<RigidTransform, EvalError> {
        let model = self
            .models
            .get(stage - 1)
            .ok_or(EvalError::MissingStageModel(stage))?;
        let cv = pair_cost_volume(ctx, pair, t_current, self.cfg)?;
        let (pred, _) = forward(&cv, model.params(pair))?;
        Ok(RigidTransform {
            rotation: pred.rotation,
            translation: pred.translation,
            source: t_current.target,
            target: t_current.target,
        })
    }
}

/// An oracle predictor that returns the exact remaining residual inverse;
/// used to validate the refinement algebra end to end.
pub struct OracleStages;

impl StagePredictor for OracleStages {
    fn predict(
        &self,
        pair: Pair,
        _stage: usize,
        ctx: &FrameContext,
        t_current: &RigidTransform,
    ) -> Result<RigidTransform, EvalError> {
        Ok(ctx.gt(pair).compose(&t_current.inverse())?)
    }
}

/// Evaluate one frame: draw the dual perturbation from the largest stage,
/// then run every refinement stage for the requested pairs, recording the
/// corrected extrinsic at every stage (including the uncorrected stage 0).
pub fn eval_frame<P: StagePredictor>(
    ctx: &FrameContext,
    frame_id: u32,
    schedule: &StageSchedule,
    predictor: &P,
    pairs: &[Pair],
    seed: u64,
) -> Result<Vec<PairStagePose>, EvalError> {
    let (init_rgb, init_ev) = dual_perturb(
        &ctx.t_gt_rgb,
        &ctx.t_gt_ev,
        &schedule.largest(),
        seed,
        frame_id,
        0,
    )?;
    let mut out = Vec::with_capacity(pairs.len() * (schedule.stages() + 1));
    for &pair in pairs {
        let t_init = match pair {
            Pair::LidarRgb => init_rgb,
            Pair::LidarEvent => init_ev,
        };
        let gt = *ctx.gt(pair);
        let mut est = CalibrationEstimate::initial(pair);
        out.push(PairStagePose {
            pair,
            stage: 0,
            pred: est.estimate.compose(&t_init)?,
            gt,
        });
        for stage in 1..=schedule.stages() {
            let t_current = est.estimate.compose(&t_init)?;
            let delta = predictor.predict(pair, stage, ctx, &t_current)?;
            est = refine_step(&est, &delta)?;
            out.push(PairStagePose {
                pair,
                stage,
                pred: est.estimate.compose(&t_init)?,
                gt,
            });
        }
    }
    Ok(out)
}

/// Aggregate per-frame poses into one report row per (pair, stage).
pub fn aggregate_reports(
    samples: &[PairStagePose],
    pairs: &[Pair],
    stages: usize,
) -> Result<Vec<StageReport>, EvalError> {
    let mut rows = Vec::new();
    for &pair in pairs {
        for stage in 0..=stages {
            let subset: Vec<&PairStagePose> = samples
                .iter()
                .filter(|s| s.pair == pair && s.stage == stage)
                .collect();
            if subset.is_empty() {
                return Err(EvalError::EmptySet);
            }
            let pred_t: Vec<[f64; 3]> = subset.iter().map(|s| s.pred.translation).collect();
            let gt_t: Vec<[f64; 3]> = subset.iter().map(|s| s.gt.translation).collect();
            let pred_q: Vec<Quaternion> = subset.iter().map(|s| s.pred.rotation).collect();
            let gt_q: Vec<Quaternion> = subset.iter().map(|s| s.gt.rotation).collect();
            let pred_tf: Vec<RigidTransform> = subset.iter().map(|s| s.pred).collect();
            let gt_tf: Vec<RigidTransform> = subset.iter().map(|s| s.gt).collect();
            rows.push(StageReport {
                pair,
                stage,
                axes: per_axis_errors(&pred_tf, &gt_tf)?,
                e_t_cm: metric_et(&pred_t, &gt_t)?,
                e_r_deg: metric_er(&pred_q, &gt_q)?,
                n_samples: subset.len(),
            });
        }
    }
    Ok(rows)
}

/// Sequential full-set evaluation: every frame through every stage.
pub fn run_pipeline<P: StagePredictor>(
    frames: &[FrameContext],
    schedule: &StageSchedule,
    predictor: &P,
    pairs: &[Pair],
    seed: u64,
) -> Result<Vec<StageReport>, EvalError> {
    let mut samples = Vec::new();
    for (i, ctx) in frames.iter().enumerate() {
        samples.extend(eval_frame(ctx, i as u32, schedule, predictor, pairs, seed)?);
    }
    aggregate_reports(&samples, pairs, schedule.stages())
}
