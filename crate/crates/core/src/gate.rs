//! Social context scoring and threshold gating.
//!
//! The scorer is a class-weighted logistic regression over six pooled scene
//! statistics. It plays the role of the context model that estimates how
//! likely the child is looking at a face.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_in_union, BBox, Point};
use crate::heatmap::sigmoid;
use crate::io::{read_json, write_json};
use crate::scene::{channel, Annotation, SceneFeatures};

pub const POOLED_DIM: usize = 6;

pub const DEFAULT_TAU: f64 = 0.5;

/// `[mean face alignment, max face alignment, mean object alignment,
/// max object alignment, face-cell fraction, global max alignment]`.
///
/// Face cells are the cells whose centre lies in one of `faces` (cell
/// units); object cells carry a non-zero object mask. Empty sets pool to 0
/// for means and -1 for maxima.
pub fn pool_features(features: &SceneFeatures, faces: &[BBox]) -> [f64; POOLED_DIM] {
    let (h, w) = features.dims();
    let (mut face_sum, mut face_max, mut n_face) = (0.0, -1.0f64, 0usize);
    let (mut obj_sum, mut obj_max, mut n_obj) = (0.0, -1.0f64, 0usize);
    let mut global_max = -1.0f64;
    for i in 0..h {
        for j in 0..w {
            let a = f64::from(features.get(i, j, channel::GAZE_ALIGNMENT));
            global_max = global_max.max(a);
            if point_in_union(Point::new(j as f64 + 0.5, i as f64 + 0.5), faces) {
                face_sum += a;
                face_max = face_max.max(a);
                n_face += 1;
            }
            if features.get(i, j, channel::OBJECT_MASK) > 0.0 {
                obj_sum += a;
                obj_max = obj_max.max(a);
                n_obj += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    [
        mean(face_sum, n_face),
        face_max,
        mean(obj_sum, n_obj),
        obj_max,
        n_face as f64 / (h * w) as f64,
        global_max,
    ]
}

/// Pooled statistics of an annotated frame.
pub fn pool_annotation(ann: &Annotation) -> Result<[f64; POOLED_DIM]> {
    let f = ann.features()?;
    let (gh, gw) = f.dims();
    Ok(pool_features(f, &ann.faces_in_cells(gh, gw)))
}

/// Eq.-style hard threshold: 1 (face) iff `s >= tau`.
pub fn coarse_classify(s: f64, tau: f64) -> u8 {
    u8::from(s >= tau)
}

/// Routing decision for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub s: f64,
    pub tau: f64,
    pub c_coarse: u8,
}

impl GateDecision {
    pub fn new(s: f64, tau: f64) -> Self {
        Self {
            s,
            tau,
            c_coarse: coarse_classify(s, tau),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the positive (Face) class; `None` → negatives / positives.
    pub class_weight: Option<f64>,
    pub seed: u64,
}

impl Default for GateHyper {
    fn default() -> Self {
        Self {
            epochs: 2000,
            learning_rate: 1.0,
            class_weight: None,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub class_weight: f64,
    pub loss_history: Vec<f64>,
}

fn gate_kind() -> String {
    "gate".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    #[serde(default = "gate_kind")]
    pub kind: String,
    pub v: Vec<f64>,
    pub c: f64,
    pub meta: GateMeta,
}

impl GateParams {
    pub fn new(v: [f64; POOLED_DIM], c: f64) -> Self {
        Self {
            kind: gate_kind(),
            v: v.to_vec(),
            c,
            meta: GateMeta {
                seed: 0,
                epochs: 0,
                learning_rate: 0.0,
                class_weight: 1.0,
                loss_history: Vec::new(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v.len() != POOLED_DIM {
            return Err(Error::DimensionMismatch {
                expected: format!("{POOLED_DIM} gate weights"),
                actual: format!("{} gate weights", self.v.len()),
            });
        }
        if !self.c.is_finite() || self.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("gate has non-finite weights".into()));
        }
        Ok(())
    }

    /// `sigmoid(v · pooled + c)`.
    pub fn score_pooled(&self, pooled: &[f64; POOLED_DIM]) -> f64 {
        let z = self.c + self.v.iter().zip(pooled).map(|(a, b)| a * b).sum::<f64>();
        sigmoid(z)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p: GateParams = read_json(path)?;
        p.validate()?;
        Ok(p)
    }
}

/// Social context score of a scene.
pub fn score(params: &GateParams, features: &SceneFeatures, faces: &[BBox]) -> f64 {
    params.score_pooled(&pool_features(features, faces))
}

/// Class-weighted logistic regression on pooled vectors with labels in {0, 1}.
///
/// Loss: `Σ_i ω_i BCE(s_i, y_i) / Σ_i ω_i` with `ω = class_weight` for
/// positives and 1 otherwise. Initialization: `v = 0`, `c = logit(prevalence)`.
pub fn train_gate_pooled(xs: &[[f64; POOLED_DIM]], ys: &[u8], hyper: &GateHyper) -> Result<GateParams> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} labels", xs.len()),
            actual: format!("{} labels", ys.len()),
        });
    }
    if xs.is_empty() {
        return Err(Error::EmptySplit("no frames to train the gate".into()));
    }
    let n_pos = ys.iter().filter(|&&y| y == 1).count();
    let n = ys.len();
    if n_pos == 0 || n_pos == n {
        return Err(Error::SingleClassSplit {
            n,
            label: ys[0],
        });
    }
    let class_weight = hyper
        .class_weight
        .unwrap_or((n - n_pos) as f64 / n_pos as f64);
    if !(class_weight > 0.0 && class_weight.is_finite()) {
        return Err(Error::Config("class_weight must be > 0".into()));
    }
    let prevalence = n_pos as f64 / n as f64;
    let mut v = [0.0; POOLED_DIM];
    let mut c = (prevalence / (1.0 - prevalence)).ln();
    let total_weight = n_pos as f64 * class_weight + (n - n_pos) as f64;
    let mut history = Vec::with_capacity(hyper.epochs + 1);

    let pass = |v: &[f64; POOLED_DIM], c: f64| {
        let mut loss = 0.0;
        let mut grad = [0.0; POOLED_DIM + 1];
        for (x, &y) in xs.iter().zip(ys) {
            let z = c + v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let p = sigmoid(z);
            let (wt, yf) = if y == 1 { (class_weight, 1.0) } else { (1.0, 0.0) };
            loss += wt * crate::heatmap::bce_term(p, yf);
            let r = wt * (p - yf);
            for k in 0..POOLED_DIM {
                grad[k] += r * x[k];
            }
            grad[POOLED_DIM] += r;
        }
        for g in &mut grad {
            *g /= total_weight;
        }
        (loss / total_weight, grad)
    };

    for epoch in 1..=hyper.epochs {
        let (loss, grad) = pass(&v, c);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(loss);
        for k in 0..POOLED_DIM {
            v[k] -= hyper.learning_rate * grad[k];
        }
        c -= hyper.learning_rate * grad[POOLED_DIM];
    }
    let (final_loss, _) = pass(&v, c);
    if !final_loss.is_finite() || !c.is_finite() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: hyper.epochs + 1,
        });
    }
    history.push(final_loss);
    Ok(GateParams {
        kind: gate_kind(),
        v: v.to_vec(),
        c,
        meta: GateMeta {
            seed: hyper.seed,
            epochs: hyper.epochs,
            learning_rate: hyper.learning_rate,
            class_weight,
            loss_history: history,
        },
    })
}

/// Trains the scorer on a split; labels are the binary target category.
/// Noninclusive frames are skipped.
pub fn train_gate(train: &[&Annotation], hyper: &GateHyper) -> Result<GateParams> {
    let mut xs = Vec::with_capacity(train.len());
    let mut ys = Vec::with_capacity(train.len());
    for a in train {
        if let Some(y) = a.target_category.binary() {
            xs.push(pool_annotation(a)?);
            ys.push(y);
        }
    }
    train_gate_pooled(&xs, &ys, hyper)
}

/// Perfect gate: the ground-truth binary label.
pub fn oracle_gate(ann: &Annotation) -> Result<u8> {
    ann.target_category.binary().ok_or_else(|| {
        Error::invariant(&ann.frame_id, "oracle gate is undefined for Noninclusive frames")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Category, Split};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coarse_threshold_is_inclusive() {
        assert_eq!(coarse_classify(0.5, 0.5), 1);
        assert_eq!(coarse_classify(0.49, 0.5), 0);
        for s in [0.0, 0.3, 1.0] {
            assert_eq!(coarse_classify(s, 0.0), 1);
        }
        let d = GateDecision::new(0.7, 0.8);
        assert_eq!(d.c_coarse, 0);
    }

    #[test]
    fn coarse_is_monotone() {
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        for &tau in &grid {
            for w in grid.windows(2) {
                assert!(coarse_classify(w[0], tau) <= coarse_classify(w[1], tau));
                assert!(coarse_classify(tau, w[0]) >= coarse_classify(tau, w[1]));
            }
        }
    }

    #[test]
    fn score_limits() {
        let f = SceneFeatures::zeros(4, 4);
        assert_eq!(score(&GateParams::new([0.0; 6], 0.0), &f, &[]), 0.5);
        assert!(score(&GateParams::new([0.0; 6], 30.0), &f, &[]) > 1.0 - 1e-9);
    }

    #[test]
    fn pooling_empty_faces() {
        let mut f = SceneFeatures::zeros(4, 4);
        f.set(1, 1, channel::GAZE_ALIGNMENT, 0.5);
        let p = pool_features(&f, &[]);
        assert_eq!((p[0], p[1], p[4]), (0.0, -1.0, 0.0));
        assert_eq!((p[2], p[3]), (0.0, -1.0));
        assert_eq!(p[5], 0.5);
    }

    #[test]
    fn pooling_all_face_grid() {
        let mut f = SceneFeatures::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                f.set(i, j, channel::FACE_MASK, 1.0);
                f.set(i, j, channel::GAZE_ALIGNMENT, 1.0);
            }
        }
        let all = BBox::new(0.0, 0.0, 3.0, 3.0).unwrap();
        assert_eq!(pool_features(&f, &[all]), [1.0, 1.0, 0.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn pooling_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (h, w) = (9, 11);
        let mut f = SceneFeatures::zeros(h, w);
        for i in 0..h {
            for j in 0..w {
                f.set(i, j, channel::OBJECT_MASK, f32::from(u8::from(rng.random::<f64>() < 0.3)));
                f.set(i, j, channel::GAZE_ALIGNMENT, rng.random_range(-1.0..1.0));
            }
        }
        let faces = [BBox::new(1.0, 1.0, 3.0, 4.0).unwrap(), BBox::new(6.0, 5.0, 9.0, 7.0).unwrap()];
        let got = pool_features(&f, &faces);

        let mut face_vals = vec![];
        let mut obj_vals = vec![];
        let mut all = vec![];
        for i in 0..h {
            for j in 0..w {
                let a = f64::from(f.get(i, j, channel::GAZE_ALIGNMENT));
                all.push(a);
                let (x, y) = (j as f64 + 0.5, i as f64 + 0.5);
                if faces.iter().any(|b| x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max) {
                    face_vals.push(a);
                }
                if f.get(i, j, channel::OBJECT_MASK) == 1.0 {
                    obj_vals.push(a);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let expected = [
            mean(&face_vals),
            max(&face_vals),
            mean(&obj_vals),
            max(&obj_vals),
            face_vals.len() as f64 / (h * w) as f64,
            max(&all),
        ];
        for k in 0..6 {
            assert!((got[k] - expected[k]).abs() < 1e-12, "component {k}");
        }
    }

    #[test]
    fn zero_rate_keeps_init() {
        let xs = [[1.0; 6], [0.0; 6], [0.5; 6], [0.2; 6]];
        let ys = [1, 0, 0, 0];
        let hyper = GateHyper {
            learning_rate: 0.0,
            epochs: 10,
            ..Default::default()
        };
        let g = train_gate_pooled(&xs, &ys, &hyper).unwrap();
        assert_eq!(g.v, vec![0.0; 6]);
        assert!((g.c - (0.25f64 / 0.75).ln()).abs() < 1e-15);
        assert_eq!(g.meta.class_weight, 3.0);
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let x = [0.8, 0.9, -0.2, 0.1, 0.05, 0.9];
        let xs = [x, x.map(|v| -v)];
        let ys = [1u8, 0];
        let g = train_gate_pooled(&xs, &ys, &GateHyper::default()).unwrap();
        let correct = xs
            .iter()
            .zip(ys)
            .filter(|(x, y)| coarse_classify(g.score_pooled(x), DEFAULT_TAU) == *y)
            .count();
        assert_eq!(correct, 2);
    }

    #[test]
    fn single_class_rejected() {
        let xs = [[0.0; 6], [1.0; 6]];
        let err = train_gate_pooled(&xs, &[0, 0], &GateHyper::default()).unwrap_err();
        assert!(err.to_string().contains("single-class split"));
        assert!(err.is_numerical());
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let xs: Vec<[f64; 6]> = (0..50).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let ys: Vec<u8> = xs.iter().map(|x| u8::from(x[0] + 0.3 * x[3] > 0.4)).collect();
        let hyper = GateHyper {
            epochs: 100,
            ..Default::default()
        };
        let a = serde_json::to_string(&train_gate_pooled(&xs, &ys, &hyper).unwrap()).unwrap();
        let b = serde_json::to_string(&train_gate_pooled(&xs, &ys, &hyper).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"kind\":\"gate\""));
    }

    #[test]
    fn oracle_projection() {
        let mut ann = Annotation {
            frame_id: "o".into(),
            clip_id: "c".into(),
            width: 10,
            height: 10,
            child_head: BBox::new(0.0, 0.0, 2.0, 2.0).unwrap(),
            adult_faces: vec![BBox::new(5.0, 5.0, 8.0, 8.0).unwrap()],
            target_point: Point::new(6.0, 6.0),
            target_box: None,
            target_category: Category::Face,
            split: Split::Test,
            features: None,
        };
        assert_eq!(oracle_gate(&ann).unwrap(), 1);
        ann.target_category = Category::Object;
        assert_eq!(oracle_gate(&ann).unwrap(), 0);
        ann.target_category = Category::PersonNonFace;
        assert_eq!(oracle_gate(&ann).unwrap(), 0);
        ann.target_category = Category::Noninclusive;
        assert!(oracle_gate(&ann).is_err());
    }
}
