//! Context module and split pose-prediction heads with hand-derived
//! gradients.
//!
//! Topology: five 3x3 convolutions over the cost volume with DenseNet-style
//! concatenation (each layer's activated output is appended to the running
//! tensor), flatten, one shared fully connected layer, then two two-layer
//! heads (translation and rotation) with a LeakyReLU in between. The
//! rotation output is normalized to a unit quaternion.
//!
//! Tensors are channel-major (`c * w * h + y * w + x`); the flattened latent
//! is the running tensor in that order. Dense weights are row-major
//! `w[out * n_in + in]`; conv weights `w[((o * c_in + i) * 3 + ky) * 3 + kx]`.

mod checkpoint;
mod train;

pub use checkpoint::*;
pub use train::*;

use crate::costvolume::CostVolume;
use crate::geometry::Quaternion;
use crate::losses::quat_normalize_backward;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Number of convolution layers in the context module.
pub const CONV_LAYERS: usize = 5;

#[derive(Debug, Error)]
pub enum RegressorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate head output")]
    DegenerateHeadOutput,
    #[error("NaN loss at stage {stage}, epoch {epoch}")]
    NanLoss { stage: usize, epoch: usize },
    #[error("checkpoint parse error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Loss(#[from] crate::losses::LossError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Network widths; the topology itself is fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorConfig {
    /// Cost-volume displacement channels M.
    pub in_channels: usize,
    pub width: usize,
    pub height: usize,
    /// Channels added by each context convolution.
    pub growth: usize,
    pub fc_width: usize,
    pub head_width: usize,
    pub leaky_slope: f64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            in_channels: 81,
            width: 32,
            height: 16,
            growth: 8,
            fc_width: 128,
            head_width: 64,
            leaky_slope: 0.1,
        }
    }
}

impl RegressorConfig {
    /// Channel count of the running tensor after all context layers.
    pub fn final_channels(&self) -> usize {
        self.in_channels + CONV_LAYERS * self.growth
    }

    /// Length of the flattened latent vector.
    pub fn latent_len(&self) -> usize {
        self.final_channels() * self.width * self.height
    }
}

/// Fully connected layer, row-major weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_in);
        let mut out = self.b.clone();
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            *out_v += row.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }

    /// Accumulates weight/bias grads into `grad` and returns the input
    /// gradient.
    fn backward(&self, x: &[f64], d_out: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut d_in = vec![0.0; self.n_in];
        for (o, &g) in d_out.iter().enumerate() {
            grad.b[o] += g;
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let grow = &mut grad.w[o * self.n_in..(o + 1) * self.n_in];
            for i in 0..self.n_in {
                grow[i] += g * x[i];
                d_in[i] += g * row[i];
            }
        }
        d_in
    }
}

/// 3x3 convolution, stride 1, zero padding 1 (spatial size preserved).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub c_in: usize,
    pub c_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv3x3 {
    fn zeros(c_in: usize, c_out: usize) -> Self {
        Self {
            c_in,
            c_out,
            w: vec![0.0; c_in * c_out * 9],
            b: vec![0.0; c_out],
        }
    }

    #[inline]
    fn w_at(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.w[((o * self.c_in + i) * 3 + ky) * 3 + kx]
    }

    /// `input` is a planar tensor of `c_in` planes of `w*h`.
    fn forward(&self, input: &[f64], w: usize, h: usize) -> Vec<f64> {
        let wh = w * h;
        let mut out = vec![0.0; self.c_out * wh];
        for o in 0..self.c_out {
            let plane = &mut out[o * wh..(o + 1) * wh];
            for v in plane.iter_mut() {
                *v = self.b[o];
            }
            for i in 0..self.c_in {
                let src = &input[i * wh..(i + 1) * wh];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wv = self.w_at(o, i, ky, kx);
                        if wv == 0.0 {
                            continue;
                        }
                        let (dy, dx) = (ky as i64 - 1, kx as i64 - 1);
                        for y in 0..h as i64 {
                            let sy = y + dy;
                            if sy < 0 || sy >= h as i64 {
                                continue;
                            }
                            let row_out = y as usize * w;
                            let row_src = sy as usize * w;
                            let x_lo = (-dx).max(0) as usize;
                            let x_hi = (w as i64 - dx.max(0)) as usize;
                            for x in x_lo..x_hi {
                                plane[row_out + x] += wv * src[row_src + (x as i64 + dx) as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Backprop: accumulates weight/bias grads into `grad`, returns the
    /// input gradient.
    fn backward(
        &self,
        input: &[f64],
        d_out: &[f64],
        w: usize,
        h: usize,
        grad: &mut Conv3x3,
    ) -> Vec<f64> {
        let wh = w * h;
        let mut d_in = vec![0.0; self.c_in * wh];
        for o in 0..self.c_out {
            let d_plane = &d_out[o * wh..(o + 1) * wh];
            grad.b[o] += d_plane.iter().sum::<f64>();
            for i in 0..self.c_in {
                let src = &input[i * wh..(i + 1) * wh];
                let d_src = &mut d_in[i * wh..(i + 1) * wh];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let (dy, dx) = (ky as i64 - 1, kx as i64 - 1);
                        let widx = ((o * self.c_in + i) * 3 + ky) * 3 + kx;
                        let wv = self.w[widx];
                        let mut gacc = 0.0;
                        for y in 0..h as i64 {
                            let sy = y + dy;
                            if sy < 0 || sy >= h as i64 {
                                continue;
                            }
                            let row_out = y as usize * w;
                            let row_src = sy as usize * w;
                            let x_lo = (-dx).max(0) as usize;
                            let x_hi = (w as i64 - dx.max(0)) as usize;
                            for x in x_lo..x_hi {
                                let sxi = row_src + (x as i64 + dx) as usize;
                                let g = d_plane[row_out + x];
                                gacc += g * src[sxi];
                                d_src[sxi] += g * wv;
                            }
                        }
                        grad.w[widx] += gacc;
                    }
                }
            }
        }
        d_in
    }
}

/// The two per-pair regressors of one refinement stage. They share no
/// parameters; both consume the same unified LiDAR embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct StageModel {
    pub rgb: RegressorParams,
    pub ev: RegressorParams,
}

impl StageModel {
    pub fn params(&self, pair: crate::Pair) -> &RegressorParams {
        match pair {
            crate::Pair::LidarRgb => &self.rgb,
            crate::Pair::LidarEvent => &self.ev,
        }
    }
}

/// All learnable parameters of one pair's regressor. The same structure
/// doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorParams {
    pub cfg: RegressorConfig,
    pub convs: Vec<Conv3x3>,
    pub fc_shared: Dense,
    pub t_head: [Dense; 2],
    pub r_head: [Dense; 2],
}

impl RegressorParams {
    /// Zero-valued parameters of the configured shapes.
    pub fn zeros(cfg: &RegressorConfig) -> Self {
        let convs = (0..CONV_LAYERS)
            .map(|i| Conv3x3::zeros(cfg.in_channels + i * cfg.growth, cfg.growth))
            .collect();
        Self {
            cfg: cfg.clone(),
            convs,
            fc_shared: Dense::zeros(cfg.latent_len(), cfg.fc_width),
            t_head: [
                Dense::zeros(cfg.fc_width, cfg.head_width),
                Dense::zeros(cfg.head_width, 3),
            ],
            r_head: [
                Dense::zeros(cfg.fc_width, cfg.head_width),
                Dense::zeros(cfg.head_width, 4),
            ],
        }
    }

    /// Seeded uniform init scaled by fan-in; the rotation-head bias starts
    /// at the identity quaternion so the initial output is never degenerate.
    pub fn init(cfg: &RegressorConfig, rng: &mut ChaCha12Rng) -> Self {
        let mut p = Self::zeros(cfg);
        for conv in p.convs.iter_mut() {
            let s = 1.0 / ((conv.c_in * 9) as f64).sqrt();
            for w in conv.w.iter_mut() {
                *w = rng.random_range(-s..=s);
            }
        }
        let [t0, t1] = &mut p.t_head;
        let [r0, r1] = &mut p.r_head;
        for dense in [&mut p.fc_shared, t0, t1, r0, r1] {
            let s = 1.0 / (dense.n_in as f64).sqrt();
            for w in dense.w.iter_mut() {
                *w = rng.random_range(-s..=s);
            }
        }
        p.r_head[1].b = vec![1.0, 0.0, 0.0, 0.0];
        p
    }

    pub(crate) fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.w"), vec![c.c_out, c.c_in, 3, 3], &c.w[..]));
            out.push((format!("conv{i}.b"), vec![c.c_out], &c.b[..]));
        }
        for (name, d) in [
            ("fc_shared", &self.fc_shared),
            ("t_head0", &self.t_head[0]),
            ("t_head1", &self.t_head[1]),
            ("r_head0", &self.r_head[0]),
            ("r_head1", &self.r_head[1]),
        ] {
            out.push((format!("{name}.w"), vec![d.n_out, d.n_in], &d.w[..]));
            out.push((format!("{name}.b"), vec![d.n_out], &d.b[..]));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for c in self.convs.iter_mut() {
            out.push(&mut c.w);
            out.push(&mut c.b);
        }
        out.push(&mut self.fc_shared.w);
        out.push(&mut self.fc_shared.b);
        let [t0, t1] = &mut self.t_head;
        let [r0, r1] = &mut self.r_head;
        for d in [t0, t1, r0, r1] {
            out.push(&mut d.w);
            out.push(&mut d.b);
        }
        out
    }

    /// All parameters as one flat vector (tensor order of [`tensors`]).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, _, data) in self.tensors() {
            out.extend_from_slice(data);
        }
        out
    }

    /// Rebuild parameters of the same shapes from a flat vector.
    pub fn from_flat(cfg: &RegressorConfig, flat: &[f64]) -> Self {
        let mut p = Self::zeros(cfg);
        let mut pos = 0;
        for t in p.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[pos..pos + n]);
            pos += n;
        }
        assert_eq!(pos, flat.len(), "flat vector length mismatch");
        p
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// `self += scale * other`, elementwise over all tensors.
    pub fn scaled_add(&mut self, other: &RegressorParams, scale: f64) {
        let mut mine = self.tensors_mut();
        let theirs: Vec<Vec<f64>> = other.tensors().iter().map(|(_, _, d)| d.to_vec()).collect();
        for (m, t) in mine.iter_mut().zip(theirs.iter()) {
            for (a, b) in m.iter_mut().zip(t.iter()) {
                *a += scale * b;
            }
        }
    }
}

#[inline]
fn leaky(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        v * slope
    }
}

#[inline]
fn leaky_grad(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// Activations cached by the context module for backprop.
pub struct ContextCache {
    /// Running tensors r_0 .. r_5; r_i has `in_channels + i * growth` planes.
    pub running: Vec<Vec<f64>>,
    /// Pre-activation output of each convolution.
    pub conv_pre: Vec<Vec<f64>>,
}

/// Activations cached by the prediction heads.
pub struct HeadCache {
    pub latent: Vec<f64>,
    pub fc_pre: Vec<f64>,
    pub fc_act: Vec<f64>,
    pub t_hid_pre: Vec<f64>,
    pub t_hid_act: Vec<f64>,
    pub r_hid_pre: Vec<f64>,
    pub r_hid_act: Vec<f64>,
    pub r_raw: [f64; 4],
}

pub struct ForwardCache {
    pub context: ContextCache,
    pub heads: HeadCache,
}

/// Pose prediction: unit rotation plus the raw head output it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePrediction {
    pub translation: [f64; 3],
    pub rotation: Quaternion,
    pub rotation_raw: [f64; 4],
}

fn check_shapes(cv: &CostVolume, cfg: &RegressorConfig) -> Result<(), RegressorError> {
    if cv.m() != cfg.in_channels || cv.width != cfg.width || cv.height != cfg.height {
        return Err(RegressorError::ShapeMismatch(format!(
            "cost volume {}x{}x{} vs configured {}x{}x{}",
            cv.width,
            cv.height,
            cv.m(),
            cfg.width,
            cfg.height,
            cfg.in_channels
        )));
    }
    Ok(())
}

/// Five densely concatenated convolutions, then flatten.
pub fn context_forward(
    cv: &CostVolume,
    p: &RegressorParams,
) -> Result<(Vec<f64>, ContextCache), RegressorError> {
    check_shapes(cv, &p.cfg)?;
    let (w, h, m) = (p.cfg.width, p.cfg.height, p.cfg.in_channels);
    let wh = w * h;
    // To channel-major planes.
    let mut r0 = vec![0.0; m * wh];
    for y in 0..h {
        for x in 0..w {
            for mi in 0..m {
                r0[mi * wh + y * w + x] = cv.at(x, y, mi);
            }
        }
    }
    let mut running = vec![r0];
    let mut conv_pre = Vec::with_capacity(CONV_LAYERS);
    for conv in &p.convs {
        let prev = running.last().expect("running tensor present");
        let pre = conv.forward(prev, w, h);
        let mut next = Vec::with_capacity(prev.len() + pre.len());
        next.extend_from_slice(prev);
        next.extend(pre.iter().map(|&v| leaky(v, p.cfg.leaky_slope)));
        conv_pre.push(pre);
        running.push(next);
    }
    let latent = running.last().expect("final tensor").clone();
    Ok((latent, ContextCache { running, conv_pre }))
}

/// Shared fully connected layer plus the two prediction heads.
pub fn predict_pose(
    latent: &[f64],
    p: &RegressorParams,
) -> Result<(PosePrediction, HeadCache), RegressorError> {
    if latent.len() != p.cfg.latent_len() {
        return Err(RegressorError::ShapeMismatch(format!(
            "latent length {} vs configured {}",
            latent.len(),
            p.cfg.latent_len()
        )));
    }
    let slope = p.cfg.leaky_slope;
    let fc_pre = p.fc_shared.forward(latent);
    let fc_act: Vec<f64> = fc_pre.iter().map(|&v| leaky(v, slope)).collect();

    let t_hid_pre = p.t_head[0].forward(&fc_act);
    let t_hid_act: Vec<f64> = t_hid_pre.iter().map(|&v| leaky(v, slope)).collect();
    let t_out = p.t_head[1].forward(&t_hid_act);

    let r_hid_pre = p.r_head[0].forward(&fc_act);
    let r_hid_act: Vec<f64> = r_hid_pre.iter().map(|&v| leaky(v, slope)).collect();
    let r_out = p.r_head[1].forward(&r_hid_act);

    let r_raw = [r_out[0], r_out[1], r_out[2], r_out[3]];
    let raw_q = Quaternion::new(r_raw[0], r_raw[1], r_raw[2], r_raw[3]);
    if raw_q.norm() < 1e-8 {
        return Err(RegressorError::DegenerateHeadOutput);
    }
    let rotation = raw_q.normalized()?;
    Ok((
        PosePrediction {
            translation: [t_out[0], t_out[1], t_out[2]],
            rotation,
            rotation_raw: r_raw,
        },
        HeadCache {
            latent: latent.to_vec(),
            fc_pre,
            fc_act,
            t_hid_pre,
            t_hid_act,
            r_hid_pre,
            r_hid_act,
            r_raw,
        },
    ))
}

/// Full forward pass with cached activations.
pub fn forward(
    cv: &CostVolume,
    p: &RegressorParams,
) -> Result<(PosePrediction, ForwardCache), RegressorError> {
    let (latent, context) = context_forward(cv, p)?;
    let (pred, heads) = predict_pose(&latent, p)?;
    Ok((pred, ForwardCache { context, heads }))
}

/// Exact backward pass: given the loss gradient with respect to the
/// predicted translation and the *unit* quaternion, accumulate parameter
/// gradients into `grads` (which must share shapes with `p`).
pub fn backward(
    cache: &ForwardCache,
    p: &RegressorParams,
    d_t: [f64; 3],
    d_q_unit: [f64; 4],
    grads: &mut RegressorParams,
) {
    let slope = p.cfg.leaky_slope;
    let hc = &cache.heads;
    let raw = Quaternion::new(hc.r_raw[0], hc.r_raw[1], hc.r_raw[2], hc.r_raw[3]);
    let d_q_raw = quat_normalize_backward(&raw, d_q_unit);

    let [gt0, gt1] = &mut grads.t_head;
    let [gr0, gr1] = &mut grads.r_head;

    // Rotation head.
    let d_r_hid_act = p.r_head[1].backward(&hc.r_hid_act, &d_q_raw, gr1);
    let d_r_hid_pre: Vec<f64> = d_r_hid_act
        .iter()
        .zip(hc.r_hid_pre.iter())
        .map(|(g, &v)| g * leaky_grad(v, slope))
        .collect();
    let d_fc_act_r = p.r_head[0].backward(&hc.fc_act, &d_r_hid_pre, gr0);

    // Translation head.
    let d_t_hid_act = p.t_head[1].backward(&hc.t_hid_act, &d_t, gt1);
    let d_t_hid_pre: Vec<f64> = d_t_hid_act
        .iter()
        .zip(hc.t_hid_pre.iter())
        .map(|(g, &v)| g * leaky_grad(v, slope))
        .collect();
    let d_fc_act_t = p.t_head[0].backward(&hc.fc_act, &d_t_hid_pre, gt0);

    // Shared layer.
    let d_fc_pre: Vec<f64> = d_fc_act_r
        .iter()
        .zip(d_fc_act_t.iter())
        .zip(hc.fc_pre.iter())
        .map(|((a, b), &v)| (a + b) * leaky_grad(v, slope))
        .collect();
    let d_latent = p
        .fc_shared
        .backward(&hc.latent, &d_fc_pre, &mut grads.fc_shared);

    // Context stack: peel concatenated layers back to front.
    let (w, h) = (p.cfg.width, p.cfg.height);
    let wh = w * h;
    let mut d_running = d_latent;
    for i in (0..CONV_LAYERS).rev() {
        let prev = &cache.context.running[i];
        let pre = &cache.context.conv_pre[i];
        let split = prev.len();
        let d_act = &d_running[split..];
        let d_pre: Vec<f64> = d_act
            .iter()
            .zip(pre.iter())
            .map(|(g, &v)| g * leaky_grad(v, slope))
            .collect();
        let d_input = p.convs[i].backward(prev, &d_pre, w, h, &mut grads.convs[i]);
        let mut d_prev = d_running[..split].to_vec();
        for (a, b) in d_prev.iter_mut().zip(d_input.iter()) {
            *a += b;
        }
        d_running = d_prev;
    }
    debug_assert_eq!(d_running.len(), p.cfg.in_channels * wh);
}
