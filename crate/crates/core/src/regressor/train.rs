//! Stage training: plain gradient descent with milestone learning-rate
//! decay over freshly sampled perturbations each epoch.

use super::{backward, forward, RegressorError, RegressorParams, StageModel};
use crate::geometry::{angular_distance_rad, RigidTransform};
use crate::losses::{
    grad_rotation_single, grad_translation_single, loss_pair, loss_total, pcd_single_with_grad,
    smooth_l1, EpochLossRow, LossWeights, PairLossBreakdown,
};
use crate::perturb::{miscalibrate, sample_perturbation, PerturbRange};
use crate::pipeline::{pair_cost_volume, FrameContext, PipelineConfig};
use crate::rng::{substream, Role, StreamKey};
use crate::Pair;
use rand::seq::SliceRandom;

/// Hyperparameters of one stage's training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch: usize,
    /// Initial learning rate; halves at each milestone epoch (0-based).
    pub lr: f64,
    pub milestones: Vec<usize>,
    pub weights: LossWeights,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 12,
            batch: 8,
            lr: 2e-3,
            milestones: vec![8, 11],
            weights: LossWeights::default(),
        }
    }
}

/// Outcome of one stage's training.
pub struct StageTraining {
    pub model: StageModel,
    pub curve: Vec<EpochLossRow>,
    /// Non-monotonicity warnings (loss at epoch e above epoch e-10).
    pub warnings: Vec<String>,
}

struct PairAccum {
    l_trans: f64,
    l_rot: f64,
    l_pcd: f64,
    count: usize,
}

impl PairAccum {
    fn new() -> Self {
        Self {
            l_trans: 0.0,
            l_rot: 0.0,
            l_pcd: 0.0,
            count: 0,
        }
    }

    fn breakdown(&self, pair: Pair, weights: &LossWeights) -> PairLossBreakdown {
        let n = self.count.max(1) as f64;
        loss_pair(
            pair,
            self.l_trans / n,
            self.l_rot / n,
            self.l_pcd / n,
            weights,
        )
        .expect("weights validated at entry")
    }
}

/// One training sample: forward, loss, gradients into `grads`.
/// Returns the (unweighted) component losses.
fn train_sample(
    ctx: &FrameContext,
    pair: Pair,
    params: &RegressorParams,
    grads: &mut RegressorParams,
    range: &PerturbRange,
    weights: &LossWeights,
    pcfg: &PipelineConfig,
    seed: u64,
    frame_id: u32,
    stage: usize,
    epoch: usize,
) -> Result<(f64, f64, f64), RegressorError> {
    let t_gt = ctx.gt(pair);
    let key = StreamKey::new(Role::TrainPerturb)
        .pair(pair.index())
        .frame(frame_id)
        .stage(stage as u16)
        .index(epoch as u32);
    let mut rng = substream(seed, key);
    let dt = sample_perturbation(range, &mut rng, t_gt.target);
    let t_cur = miscalibrate(t_gt, &dt)?;
    // The stage's target is the residual that cancels the disturbance.
    let target = dt.inverse();

    let cv = pair_cost_volume(ctx, pair, &t_cur, pcfg)?;
    let (pred, cache) = forward(&cv, params)?;

    let l_trans: f64 = (0..3)
        .map(|i| smooth_l1(pred.translation[i] - target.translation[i]))
        .sum();
    let g_trans = grad_translation_single(pred.translation, target.translation);

    let l_rot = angular_distance_rad(&pred.rotation, &target.rotation)?;
    let g_rot = grad_rotation_single(&pred.rotation, &target.rotation);

    // Point-cloud loss on the preprocessed cloud seen under the current
    // pose; comparing the residual transforms over it equals comparing the
    // full extrinsics over the original cloud.
    let cloud_cur = t_cur.apply(&ctx.cloud_pre);
    let pred_tf = RigidTransform {
        rotation: pred.rotation,
        translation: pred.translation,
        source: t_cur.target,
        target: t_cur.target,
    };
    let (l_pcd, gp_t, gp_q) = pcd_single_with_grad(&pred_tf, &target, &cloud_cur)?;

    let cw = 1.0 - weights.w;
    let d_t = [
        cw * weights.lambda_t * g_trans[0] + weights.w * gp_t[0],
        cw * weights.lambda_t * g_trans[1] + weights.w * gp_t[1],
        cw * weights.lambda_t * g_trans[2] + weights.w * gp_t[2],
    ];
    let mut d_q = [0.0; 4];
    for i in 0..4 {
        d_q[i] = cw * weights.lambda_r * g_rot[i] + weights.w * gp_q[i];
    }
    backward(&cache, params, d_t, d_q, grads);
    Ok((l_trans, l_rot, l_pcd))
}

/// Train one stage on the given frames, starting from `init`.
///
/// Perturbations are freshly sampled per `(pair, frame, epoch)` from keyed
/// substreams, so the run is a pure function of its arguments.
pub fn train_stage(
    frames: &[FrameContext],
    stage: usize,
    range: &PerturbRange,
    tcfg: &TrainingConfig,
    pcfg: &PipelineConfig,
    init: StageModel,
    seed: u64,
) -> Result<StageTraining, RegressorError> {
    tcfg.weights.validate()?;
    assert!(tcfg.batch >= 1, "batch size must be at least 1");
    let mut model = init;
    let mut curve = Vec::with_capacity(tcfg.epochs);
    let mut warnings = Vec::new();
    let rc = pcfg.regressor_config();

    for epoch in 0..tcfg.epochs {
        let decays = tcfg.milestones.iter().filter(|&&m| m <= epoch).count();
        let lr = tcfg.lr * 0.5f64.powi(decays as i32);

        let mut order: Vec<usize> = (0..frames.len()).collect();
        let mut shuffle_rng = substream(
            seed,
            StreamKey::new(Role::Shuffle)
                .stage(stage as u16)
                .index(epoch as u32),
        );
        order.shuffle(&mut shuffle_rng);

        let mut acc_rgb = PairAccum::new();
        let mut acc_ev = PairAccum::new();
        for batch in order.chunks(tcfg.batch) {
            let mut grads_rgb = RegressorParams::zeros(&rc);
            let mut grads_ev = RegressorParams::zeros(&rc);
            for &fi in batch {
                let ctx = &frames[fi];
                let (lt, lr_, lp) = train_sample(
                    ctx,
                    Pair::LidarRgb,
                    &model.rgb,
                    &mut grads_rgb,
                    range,
                    &tcfg.weights,
                    pcfg,
                    seed,
                    fi as u32,
                    stage,
                    epoch,
                )?;
                acc_rgb.l_trans += lt;
                acc_rgb.l_rot += lr_;
                acc_rgb.l_pcd += lp;
                acc_rgb.count += 1;
                let (lt, lr_, lp) = train_sample(
                    ctx,
                    Pair::LidarEvent,
                    &model.ev,
                    &mut grads_ev,
                    range,
                    &tcfg.weights,
                    pcfg,
                    seed,
                    fi as u32,
                    stage,
                    epoch,
                )?;
                acc_ev.l_trans += lt;
                acc_ev.l_rot += lr_;
                acc_ev.l_pcd += lp;
                acc_ev.count += 1;
            }
            let scale = -lr / batch.len() as f64;
            model.rgb.scaled_add(&grads_rgb, scale);
            model.ev.scaled_add(&grads_ev, scale);
        }

        let rgb = acc_rgb.breakdown(Pair::LidarRgb, &tcfg.weights);
        let ev = acc_ev.breakdown(Pair::LidarEvent, &tcfg.weights);
        let total = loss_total(Some(&rgb), Some(&ev))?;
        if !total.is_finite() {
            return Err(RegressorError::NanLoss { stage, epoch });
        }
        curve.push(EpochLossRow {
            epoch,
            rgb,
            ev,
            total,
        });
        if epoch >= 10 {
            let prev = curve[epoch - 10].total;
            if total > prev {
                warnings.push(format!(
                    "stage {stage}: epoch {epoch} loss {total:.6} above epoch {} loss {prev:.6}",
                    epoch - 10
                ));
            }
        }
    }
    Ok(StageTraining {
        model,
        curve,
        warnings,
    })
}
