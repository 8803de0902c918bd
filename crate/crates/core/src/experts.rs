//! Gaze experts: a per-cell logistic heatmap predictor, the social blur
//! augmentation and the two training procedures.
//!
//! Both experts share one model, `sigmoid(w · f(i, j) + b)`, and differ only
//! in the data they see. The agnostic expert trains on raw scene features.
//! The aware expert trains on features where everything outside the adult
//! faces and a disk around the (known) target is attenuated and blurred.

use std::borrow::Cow;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_in_union, BBox, Point};
use crate::heatmap::{argmax_cell, cell_of, sigmoid, Grid, Heatmap, DEFAULT_SIGMA, EPS};
use crate::io::{read_json, write_json};
use crate::scene::{channel, Annotation, SceneFeatures, FEATURE_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertKind {
    Aware,
    Agnostic,
}

impl fmt::Display for ExpertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExpertKind::Aware => "aware",
            ExpertKind::Agnostic => "agnostic",
        })
    }
}

/// Parameters of the social blur augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugConfig {
    /// Multiplier applied outside the keep region, in `[0, 1]`.
    pub attenuation: f64,
    /// Radius (cells) of the disk kept around the target during training.
    pub keep_radius: f64,
    /// Odd box-filter width used to blur the alignment channel.
    pub blur_kernel: usize,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            attenuation: 0.1,
            keep_radius: 3.0,
            blur_kernel: 3,
        }
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.attenuation) {
            return Err(Error::Config("attenuation must lie in [0, 1]".into()));
        }
        if self.blur_kernel.is_multiple_of(2) {
            return Err(Error::Config("blur_kernel must be odd and >= 1".into()));
        }
        if !(self.keep_radius >= 0.0) {
            return Err(Error::Config("keep_radius must be >= 0".into()));
        }
        Ok(())
    }
}

/// Attenuates and blurs everything outside the socially relevant region.
///
/// The keep region is the union of `faces` (cell units) plus, when given, the
/// disk of radius `cfg.keep_radius` around `keep_center` (cell units). Outside
/// it, the object and person masks are scaled by the attenuation and the
/// alignment channel is replaced by its attenuated `k × k` box average. Face,
/// head and distance channels are never touched.
pub fn aug_social(
    features: &SceneFeatures,
    faces: &[BBox],
    keep_center: Option<Point>,
    cfg: &AugConfig,
) -> SceneFeatures {
    let (h, w) = features.dims();
    let beta = cfg.attenuation as f32;
    let half = (cfg.blur_kernel / 2) as isize;
    let r2 = cfg.keep_radius * cfg.keep_radius;
    let mut out = features.clone();
    for i in 0..h {
        for j in 0..w {
            let c = Point::new(j as f64 + 0.5, i as f64 + 0.5);
            let near_target = keep_center
                .map(|k| {
                    let (dx, dy) = (c.x - k.x, c.y - k.y);
                    dx * dx + dy * dy <= r2
                })
                .unwrap_or(false);
            if near_target || point_in_union(c, faces) {
                continue;
            }
            let mut acc = 0.0f64;
            let mut n = 0u32;
            for di in -half..=half {
                for dj in -half..=half {
                    let (ii, jj) = (i as isize + di, j as isize + dj);
                    if ii >= 0 && jj >= 0 && (ii as usize) < h && (jj as usize) < w {
                        acc += f64::from(features.get(ii as usize, jj as usize, channel::GAZE_ALIGNMENT));
                        n += 1;
                    }
                }
            }
            let cell = out.cell_mut(i, j);
            cell[channel::OBJECT_MASK] *= beta;
            cell[channel::PNF_MASK] *= beta;
            cell[channel::GAZE_ALIGNMENT] = beta * (acc / f64::from(n)) as f32;
        }
    }
    out
}

/// Training hyper-parameters shared by both experts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Frames per update; `None` means full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Ground-truth heatmap blur, cells.
    pub sigma: f64,
}

impl Default for ExpertHyper {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.5,
            batch_size: None,
            seed: 7,
            sigma: DEFAULT_SIGMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertMeta {
    pub grid_h: usize,
    pub grid_w: usize,
    pub feature_dim: usize,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: Option<usize>,
    pub sigma: f64,
    pub aug: Option<AugConfig>,
    /// Mean training loss before each epoch, then after the last one.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertParams {
    pub kind: ExpertKind,
    pub w: Vec<f64>,
    pub b: f64,
    pub meta: ExpertMeta,
}

impl ExpertParams {
    /// Untrained parameters for a grid (used for fixtures and baselines).
    pub fn new(kind: ExpertKind, w: [f64; FEATURE_DIM], b: f64, grid_h: usize, grid_w: usize) -> Self {
        Self {
            kind,
            w: w.to_vec(),
            b,
            meta: ExpertMeta {
                grid_h,
                grid_w,
                feature_dim: FEATURE_DIM,
                seed: 0,
                epochs: 0,
                learning_rate: 0.0,
                batch_size: None,
                sigma: DEFAULT_SIGMA,
                aug: None,
                loss_history: Vec::new(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.meta.feature_dim != FEATURE_DIM || self.w.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: format!("feature_dim {FEATURE_DIM}"),
                actual: format!("feature_dim {} with {} weights", self.meta.feature_dim, self.w.len()),
            });
        }
        if !self.b.is_finite() || self.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("{} expert has non-finite weights", self.kind)));
        }
        Ok(())
    }

    fn weights(&self) -> [f64; FEATURE_DIM] {
        let mut w = [0.0; FEATURE_DIM];
        w.copy_from_slice(&self.w);
        w
    }

    fn check_dims(&self, f: &SceneFeatures) -> Result<()> {
        self.validate()?;
        if f.dims() != (self.meta.grid_h, self.meta.grid_w) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} grid", self.meta.grid_h, self.meta.grid_w),
                actual: format!("{}x{} grid", f.height(), f.width()),
            });
        }
        Ok(())
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.meta.loss_history.last().copied()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p: ExpertParams = read_json(path)?;
        p.validate()?;
        Ok(p)
    }
}

#[inline]
fn dot(w: &[f64; FEATURE_DIM], b: f64, x: &[f32]) -> f64 {
    let mut z = b;
    for k in 0..FEATURE_DIM {
        z += w[k] * f64::from(x[k]);
    }
    z
}

/// Per-cell logits `w · f + b`.
pub fn expert_logits(params: &ExpertParams, features: &SceneFeatures) -> Result<Grid> {
    params.check_dims(features)?;
    let w = params.weights();
    let data = features
        .as_slice()
        .chunks_exact(FEATURE_DIM)
        .map(|x| dot(&w, params.b, x))
        .collect();
    Grid::new(features.height(), features.width(), data)
}

/// Heatmap `sigmoid(w · f(i, j) + b)`.
pub fn predict_heatmap(params: &ExpertParams, features: &SceneFeatures) -> Result<Heatmap> {
    let logits = expert_logits(params, features)?;
    let (h, w) = logits.dims();
    Heatmap::new(h, w, logits.as_slice().iter().map(|&z| sigmoid(z)).collect())
}

/// Most likely gaze cell centre (cell units). Decoded on the logits, which
/// orders cells exactly like the heatmap but cannot saturate into ties.
pub fn predict_point(params: &ExpertParams, features: &SceneFeatures) -> Result<Point> {
    let logits = expert_logits(params, features)?;
    let (i, j) = argmax_cell(logits.as_slice(), features.width());
    Ok(Point::new(j as f64 + 0.5, i as f64 + 0.5))
}

/// One training example: model inputs and the ground-truth target cell.
#[derive(Debug, Clone)]
pub struct TrainingFrame<'a> {
    pub inputs: Cow<'a, SceneFeatures>,
    pub target: Point,
}

/// Separable factors of the ground-truth Gaussian for one frame.
struct GtFactors {
    rows: Vec<f64>,
    cols: Vec<f64>,
}

impl GtFactors {
    fn new(target: Point, sigma: f64, h: usize, w: usize) -> Self {
        let (ti, tj) = cell_of(target);
        let inv = 1.0 / (2.0 * sigma * sigma);
        let f = |n: usize, t: isize| -> Vec<f64> {
            (0..n)
                .map(|k| {
                    let d = k as f64 - t as f64;
                    (-d * d * inv).exp()
                })
                .collect()
        };
        Self {
            rows: f(h, ti),
            cols: f(w, tj),
        }
    }
}

/// Below this logit magnitude the probability clamp never binds.
const SATURATION: f64 = 13.8;

/// `-ln(EPS)` and `-ln(1 - EPS)`: the range of `-ln p` and `-ln(1 - p)`
/// under the probability clamp.
const CLAMP_LOSS: f64 = 13.815_510_557_964_274;
const CLAMP_FLOOR: f64 = 1.000_000_500_000_333_3e-6;

const EXP_FLOOR: f64 = 700.0;

/// `exp(x)` for `x ∈ [-EXP_FLOOR, 0]`, branch-free so the row loop
/// vectorizes. Relative error below 1e-15 on that interval.
#[inline]
fn exp_small(x: f64) -> f64 {
    const MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let t = x * std::f64::consts::LOG2_E + MAGIC;
    let n = t - MAGIC;
    let r = (-n).mul_add(LN2_LO, (-n).mul_add(LN2_HI, x));
    // Taylor coefficients 1/k!, evaluated with Estrin's scheme.
    const C: [f64; 13] = [
        1.0,
        1.0,
        0.5,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5_040.0,
        1.0 / 40_320.0,
        1.0 / 362_880.0,
        1.0 / 3_628_800.0,
        1.0 / 39_916_800.0,
        1.0 / 479_001_600.0,
    ];
    let r2 = r * r;
    let r4 = r2 * r2;
    let r8 = r4 * r4;
    let q0 = C[3].mul_add(r, C[2]).mul_add(r2, C[1].mul_add(r, C[0]));
    let q1 = C[7].mul_add(r, C[6]).mul_add(r2, C[5].mul_add(r, C[4]));
    let q2 = C[11].mul_add(r, C[10]).mul_add(r2, C[9].mul_add(r, C[8]));
    let p = C[12].mul_add(r4, q2).mul_add(r8, q1.mul_add(r4, q0));
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    p * scale
}

/// Channel-major copy of one frame's features: `data[k * n_cells + cell]`.
struct Packed {
    data: Vec<f32>,
}

impl Packed {
    fn new(x: &SceneFeatures) -> Self {
        let n = x.n_cells();
        let mut data = vec![0.0f32; n * FEATURE_DIM];
        for (c, xs) in x.as_slice().chunks_exact(FEATURE_DIM).enumerate() {
            for k in 0..FEATURE_DIM {
                data[k * n + c] = xs[k];
            }
        }
        Self { data }
    }
}

const LANES: usize = 8;

/// Fixed-shape tree reduction of lane partials.
#[inline(always)]
fn reduce(mut a: [f64; LANES], op: impl Fn(f64, f64) -> f64) -> f64 {
    let mut m = LANES;
    while m > 1 {
        m /= 2;
        for l in 0..m {
            a[l] = op(a[l], a[l + m]);
        }
    }
    a[0]
}

#[inline(always)]
fn combine(a: [f64; LANES]) -> f64 {
    reduce(a, |x, y| x + y)
}

/// Adds `Σ_j r_j x_j` into per-lane partial sums, so consecutive additions
/// are independent.
#[inline(always)]
fn lane_dot(acc: &mut [f64; LANES], r: &[f64], x: &[f64]) {
    let mut rc = r.chunks_exact(LANES);
    let mut xc = x.chunks_exact(LANES);
    for (rs, xs) in (&mut rc).zip(&mut xc) {
        for l in 0..LANES {
            acc[l] = rs[l].mul_add(xs[l], acc[l]);
        }
    }
    for (l, (rv, &xv)) in rc.remainder().iter().zip(xc.remainder()).enumerate() {
        acc[l] = rv.mul_add(xv, acc[l]);
    }
}

#[inline(always)]
fn lane_sum(acc: &mut [f64; LANES], v: &[f64]) {
    let mut vc = v.chunks_exact(LANES);
    for vs in &mut vc {
        for l in 0..LANES {
            acc[l] += vs[l];
        }
    }
    for (l, x) in vc.remainder().iter().enumerate() {
        acc[l] += x;
    }
}

/// Running `Σ_j ln(v_j)` for `v_j ∈ [1, 2]`: per-lane products, with one
/// logarithm per `LOG_BLOCK` values so no product exceeds `2^LOG_BLOCK`.
struct LogProd {
    acc: [f64; LANES],
    count: usize,
    total: f64,
}

const LOG_BLOCK: usize = 512;

impl LogProd {
    fn new() -> Self {
        Self {
            acc: [1.0; LANES],
            count: 0,
            total: 0.0,
        }
    }

    #[inline(always)]
    fn push(&mut self, mut v: &[f64]) {
        while !v.is_empty() {
            let (head, tail) = v.split_at((LOG_BLOCK - self.count).min(v.len()));
            let mut vc = head.chunks_exact(LANES);
            for vs in &mut vc {
                for l in 0..LANES {
                    self.acc[l] *= vs[l];
                }
            }
            for (l, x) in vc.remainder().iter().enumerate() {
                self.acc[l] *= x;
            }
            self.count += head.len();
            if self.count == LOG_BLOCK {
                self.flush();
            }
            v = tail;
        }
    }

    fn flush(&mut self) {
        self.total += reduce(self.acc, |x, y| x * y).ln();
        self.acc = [1.0; LANES];
        self.count = 0;
    }

    fn finish(mut self) -> f64 {
        if self.count > 0 {
            self.flush();
        }
        self.total
    }
}

/// Per-cell outputs of one row: residual `p - g`, the linear loss part and
/// `1 + e^{-|z|}`.
struct CellOut<'a> {
    r: &'a mut [f64],
    lin: &'a mut [f64],
    onepe: &'a mut [f64],
}

/// Row where no logit reaches `SATURATION`, so the clamp cannot bind.
#[inline(always)]
fn cells_unsaturated(z: &[f64], gi: f64, cols: &[f64], out: CellOut<'_>) {
    for j in 0..z.len() {
        let zj = z[j];
        let g = gi * cols[j];
        let e = exp_small(-zj.abs());
        let q = 1.0 / (1.0 + e);
        out.r[j] = if zj >= 0.0 { q } else { e * q } - g;
        out.lin[j] = (-g).mul_add(zj, zj.max(0.0));
        out.onepe[j] = 1.0 + e;
    }
}

/// Same as [`cells_unsaturated`] on unsaturated cells; saturated cells take
/// the clamped loss in closed form.
#[inline(always)]
fn cells_clamped(z: &[f64], gi: f64, cols: &[f64], out: CellOut<'_>) {
    for j in 0..z.len() {
        let zj = z[j];
        let g = gi * cols[j];
        let az = zj.abs();
        let e = exp_small(-az.min(EXP_FLOOR));
        let q = 1.0 / (1.0 + e);
        out.r[j] = if zj >= 0.0 { q } else { e * q } - g;
        let plain = (-g).mul_add(zj, zj.max(0.0));
        let big = az >= SATURATION;
        // ln(1 + e) for e < 1.1e-6, where the clamp may bind.
        let l = e * (-e).mul_add((-e).mul_add(-1.0 / 3.0, 0.5), 1.0);
        let clamped = g.mul_add(
            ((-zj).max(0.0) + l).clamp(CLAMP_FLOOR, CLAMP_LOSS),
            (1.0 - g) * (zj.max(0.0) + l).clamp(CLAMP_FLOOR, CLAMP_LOSS),
        );
        out.lin[j] = if big { clamped } else { plain };
        out.onepe[j] = if big { 1.0 } else { 1.0 + e };
    }
}

/// Loss sum and gradient sums `[dw_0..dw_5, db]` of one frame.
///
/// Uses `softplus(z) - g z` with the `ln(1 + e^{-|z|})` terms summed through
/// products; saturated cells apply the clamp explicitly.
#[inline(always)]
fn frame_pass_impl(
    x: &Packed,
    h: usize,
    width: usize,
    gt: &GtFactors,
    w: &[f64; FEATURE_DIM],
    b: f64,
) -> (f64, [f64; FEATURE_DIM + 1]) {
    let n = h * width;
    let mut lin_acc = [0.0; LANES];
    let mut grad_acc = [[0.0; LANES]; FEATURE_DIM + 1];
    let mut logs = LogProd::new();
    let mut z = vec![0.0f64; width];
    let mut xr = vec![0.0f64; FEATURE_DIM * width];
    let mut r = vec![0.0f64; width];
    let mut lin = vec![0.0f64; width];
    let mut onepe = vec![0.0f64; width];
    for i in 0..h {
        let off = i * width;
        z.fill(b);
        for (k, xk) in xr.chunks_exact_mut(width).enumerate() {
            for (d, &v) in xk.iter_mut().zip(&x.data[k * n + off..k * n + off + width]) {
                *d = f64::from(v);
            }
            for (zj, &v) in z.iter_mut().zip(xk.iter()) {
                *zj = w[k].mul_add(v, *zj);
            }
        }
        let cells = CellOut {
            r: &mut r,
            lin: &mut lin,
            onepe: &mut onepe,
        };
        if z.iter().all(|v| v.abs() < SATURATION) {
            cells_unsaturated(&z, gt.rows[i], &gt.cols, cells);
        } else {
            cells_clamped(&z, gt.rows[i], &gt.cols, cells);
        }
        lane_sum(&mut lin_acc, &lin);
        logs.push(&onepe);
        for k in 0..FEATURE_DIM {
            lane_dot(&mut grad_acc[k], &r, &xr[k * width..(k + 1) * width]);
        }
        lane_sum(&mut grad_acc[FEATURE_DIM], &r);
    }
    (combine(lin_acc) + logs.finish(), grad_acc.map(combine))
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn frame_pass_avx2(
    x: &Packed,
    h: usize,
    width: usize,
    gt: &GtFactors,
    w: &[f64; FEATURE_DIM],
    b: f64,
) -> (f64, [f64; FEATURE_DIM + 1]) {
    frame_pass_impl(x, h, width, gt, w, b)
}

/// Same arithmetic on every path: fused multiply-adds are explicit and
/// nothing is reassociated, so the wider instruction set only changes speed,
/// never results.
fn frame_pass(
    x: &Packed,
    h: usize,
    width: usize,
    gt: &GtFactors,
    w: &[f64; FEATURE_DIM],
    b: f64,
) -> (f64, [f64; FEATURE_DIM + 1]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: the CPU supports AVX2 and FMA, checked just above.
            return unsafe { frame_pass_avx2(x, h, width, gt, w, b) };
        }
    }
    frame_pass_impl(x, h, width, gt, w, b)
}

/// Mean loss and mean gradient over a batch; fixed-order reduction so the
/// result does not depend on the thread count.
fn batch_pass(
    packed: &[Packed],
    dims: (usize, usize),
    gts: &[GtFactors],
    idx: &[usize],
    w: &[f64; FEATURE_DIM],
    b: f64,
) -> (f64, [f64; FEATURE_DIM + 1]) {
    let (h, width) = dims;
    let parts: Vec<(f64, [f64; FEATURE_DIM + 1])> = idx
        .par_iter()
        .map(|&k| frame_pass(&packed[k], h, width, &gts[k], w, b))
        .collect();
    let scale = 1.0 / ((h * width) as f64 * idx.len() as f64);
    let mut loss = 0.0;
    let mut grad = [0.0; FEATURE_DIM + 1];
    for (l, g) in &parts {
        loss += l;
        for k in 0..=FEATURE_DIM {
            grad[k] += g[k];
        }
    }
    for g in &mut grad {
        *g *= scale;
    }
    (loss * scale, grad)
}

/// Fitted weights, bias and loss history.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub w: [f64; FEATURE_DIM],
    pub b: f64,
    pub loss_history: Vec<f64>,
}

/// Gradient descent on the mean pixel-wise BCE between the per-cell
/// logistic heatmap and Gaussian ground truth.
///
/// Initialization: `w = 0`, `b = logit(mean ground-truth value)`.
pub fn fit_heatmap_model(frames: &[TrainingFrame<'_>], hyper: &ExpertHyper) -> Result<FitResult> {
    let first = frames
        .first()
        .ok_or_else(|| Error::EmptySplit("no training frames".into()))?;
    let (h, wd) = first.inputs.dims();
    if let Some(bad) = frames.iter().find(|f| f.inputs.dims() != (h, wd)) {
        return Err(Error::DimensionMismatch {
            expected: format!("{h}x{wd} grid"),
            actual: format!("{}x{} grid", bad.inputs.height(), bad.inputs.width()),
        });
    }
    if !(hyper.sigma > 0.0) {
        return Err(Error::Config("sigma must be > 0".into()));
    }
    let gts: Vec<GtFactors> = frames
        .iter()
        .map(|f| GtFactors::new(f.target, hyper.sigma, h, wd))
        .collect();
    let mean_gt = gts
        .iter()
        .map(|g| g.rows.iter().sum::<f64>() * g.cols.iter().sum::<f64>())
        .sum::<f64>()
        / (frames.len() * h * wd) as f64;
    let mean_gt = mean_gt.clamp(EPS, 1.0 - EPS);

    let packed: Vec<Packed> = frames.par_iter().map(|f| Packed::new(&f.inputs)).collect();
    let dims = (h, wd);
    let mut w = [0.0; FEATURE_DIM];
    let mut b = (mean_gt / (1.0 - mean_gt)).ln();
    let n = frames.len();
    let batch = hyper.batch_size.filter(|&s| s > 0 && s < n).unwrap_or(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(hyper.epochs + 1);

    for epoch in 1..=hyper.epochs {
        if batch < n {
            let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
            rng.set_stream(epoch as u64);
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let (loss, grad) = batch_pass(&packed, dims, &gts, chunk, &w, b);
            epoch_loss += loss * chunk.len() as f64;
            for k in 0..FEATURE_DIM {
                w[k] -= hyper.learning_rate * grad[k];
            }
            b -= hyper.learning_rate * grad[FEATURE_DIM];
        }
        let epoch_loss = epoch_loss / n as f64;
        if !epoch_loss.is_finite() || !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(epoch_loss);
    }
    let (final_loss, _) = batch_pass(&packed, dims, &gts, &(0..n).collect::<Vec<_>>(), &w, b);
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: hyper.epochs + 1,
        });
    }
    history.push(final_loss);
    Ok(FitResult {
        w,
        b,
        loss_history: history,
    })
}

/// Model inputs for one frame: raw features for the agnostic expert,
/// socially augmented features (keep disk at the true target) for the aware
/// expert.
pub fn training_frame<'a>(
    ann: &'a Annotation,
    kind: ExpertKind,
    aug: &AugConfig,
) -> Result<TrainingFrame<'a>> {
    let f = ann.features()?;
    let (gh, gw) = f.dims();
    let target = ann.to_cells(ann.target_point, gh, gw);
    let inputs = match kind {
        ExpertKind::Agnostic => Cow::Borrowed(f),
        ExpertKind::Aware => Cow::Owned(aug_social(f, &ann.faces_in_cells(gh, gw), Some(target), aug)),
    };
    Ok(TrainingFrame { inputs, target })
}

/// Trains one expert on a split. Noninclusive frames are skipped.
pub fn train_expert(
    train: &[&Annotation],
    kind: ExpertKind,
    hyper: &ExpertHyper,
    aug: &AugConfig,
) -> Result<ExpertParams> {
    aug.validate()?;
    let frames = train
        .par_iter()
        .filter(|a| a.target_category.binary().is_some())
        .map(|a| training_frame(a, kind, aug))
        .collect::<Result<Vec<_>>>()?;
    if frames.is_empty() {
        return Err(Error::EmptySplit(format!("no frames to train the {kind} expert")));
    }
    let (gh, gw) = frames[0].inputs.dims();
    let fit = fit_heatmap_model(&frames, hyper)?;
    Ok(ExpertParams {
        kind,
        w: fit.w.to_vec(),
        b: fit.b,
        meta: ExpertMeta {
            grid_h: gh,
            grid_w: gw,
            feature_dim: FEATURE_DIM,
            seed: hyper.seed,
            epochs: hyper.epochs,
            learning_rate: hyper.learning_rate,
            batch_size: hyper.batch_size,
            sigma: hyper.sigma,
            aug: (kind == ExpertKind::Aware).then_some(*aug),
            loss_history: fit.loss_history,
        },
    })
}
