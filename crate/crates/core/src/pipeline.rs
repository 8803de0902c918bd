//! Routed inference, evaluation modes and scenario analysis.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experts::{aug_social, predict_point, AugConfig, ExpertKind, ExpertParams};
use crate::gate::{coarse_classify, oracle_gate, score, GateParams};
use crate::geometry::{point_in_union, Point};
use crate::metrics::{l2_normalized, EvalReport};
use crate::scene::Annotation;

/// Evaluation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sacf,
    SacfOracle,
    Agnostic,
    Aware,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Sacf, Mode::SacfOracle, Mode::Agnostic, Mode::Aware];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sacf => "sacf",
            Mode::SacfOracle => "sacf-oracle",
            Mode::Agnostic => "agnostic",
            Mode::Aware => "aware",
        }
    }

    pub fn needs_gate(self) -> bool {
        self == Mode::Sacf
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown mode {s:?} (expected sacf, sacf-oracle, agnostic or aware)")))
    }
}

/// Fine class of a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineClass {
    Face,
    NotFace,
}

impl FineClass {
    pub fn label(self) -> u8 {
        u8::from(self == FineClass::Face)
    }

    pub fn from_label(y: u8) -> Self {
        if y == 1 {
            FineClass::Face
        } else {
            FineClass::NotFace
        }
    }
}

/// Both experts, the learned gate (when trained) and the routing threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SacfModel {
    pub aware: ExpertParams,
    pub agnostic: ExpertParams,
    pub gate: Option<GateParams>,
    pub tau: f64,
    pub aug: AugConfig,
}

impl SacfModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau = {} must lie in [0, 1]", self.tau)));
        }
        self.aug.validate()?;
        self.aware.validate()?;
        self.agnostic.validate()?;
        let (a, b) = (&self.aware.meta, &self.agnostic.meta);
        if (a.grid_h, a.grid_w, a.feature_dim) != (b.grid_h, b.grid_w, b.feature_dim) {
            return Err(Error::DimensionMismatch {
                expected: format!("aware grid {}x{}x{}", a.grid_h, a.grid_w, a.feature_dim),
                actual: format!("agnostic grid {}x{}x{}", b.grid_h, b.grid_w, b.feature_dim),
            });
        }
        if let Some(g) = &self.gate {
            g.validate()?;
        }
        Ok(())
    }
}

/// Output of routed inference for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub frame_id: String,
    pub mode: Mode,
    /// Gate score; absent for single-expert modes.
    pub s: Option<f64>,
    pub c_coarse: u8,
    pub c_fine: FineClass,
    pub routed_to: ExpertKind,
    /// Predicted point in cell units.
    pub p_t: Point,
    /// Predicted point divided by the frame size.
    pub p_t_norm: Point,
    pub p_t_px: Point,
    /// Aware expert's argmax on the face-only augmented input (cell units).
    pub aware_point: Point,
    /// Agnostic expert's argmax on the raw input (cell units).
    pub agnostic_point: Point,
    pub l2: f64,
}

/// Cell-centre → pixel mapping followed by the normalized L2 to the target.
fn l2_of_cell_point(ann: &Annotation, p: Point, gh: usize, gw: usize) -> f64 {
    let px = ann.to_pixels(p, gh, gw);
    l2_normalized(px, ann.target_point, f64::from(ann.width), f64::from(ann.height))
}

/// Routes one frame given an already made coarse decision.
pub fn predict_routed(model: &SacfModel, mode: Mode, ann: &Annotation, s: Option<f64>, c_coarse: u8) -> Result<Prediction> {
    let feats = ann.features()?;
    let (gh, gw) = feats.dims();
    let faces = ann.faces_in_cells(gh, gw);
    let augmented = aug_social(feats, &faces, None, &model.aug);
    let aware_point = predict_point(&model.aware, &augmented)?;
    let agnostic_point = predict_point(&model.agnostic, feats)?;
    let (routed_to, p_t) = if c_coarse == 1 {
        (ExpertKind::Aware, aware_point)
    } else {
        (ExpertKind::Agnostic, agnostic_point)
    };
    let p_t_px = ann.to_pixels(p_t, gh, gw);
    let c_fine = if point_in_union(p_t_px, &ann.adult_faces) {
        FineClass::Face
    } else {
        FineClass::NotFace
    };
    Ok(Prediction {
        frame_id: ann.frame_id.clone(),
        mode,
        s,
        c_coarse,
        c_fine,
        routed_to,
        p_t,
        p_t_norm: Point::new(p_t_px.x / f64::from(ann.width), p_t_px.y / f64::from(ann.height)),
        p_t_px,
        aware_point,
        agnostic_point,
        l2: l2_normalized(p_t_px, ann.target_point, f64::from(ann.width), f64::from(ann.height)),
    })
}

/// Gate score and coarse class for a frame under `mode`.
pub fn route(model: &SacfModel, mode: Mode, ann: &Annotation) -> Result<(Option<f64>, u8)> {
    Ok(match mode {
        Mode::Sacf => {
            let gate = model
                .gate
                .as_ref()
                .ok_or_else(|| Error::Config("mode sacf needs a trained gate".into()))?;
            let feats = ann.features()?;
            let (gh, gw) = feats.dims();
            let s = score(gate, feats, &ann.faces_in_cells(gh, gw));
            (Some(s), coarse_classify(s, model.tau))
        }
        Mode::SacfOracle => {
            let y = oracle_gate(ann)?;
            (Some(f64::from(y)), y)
        }
        Mode::Agnostic => (None, 0),
        Mode::Aware => (None, 1),
    })
}

/// Full inference for one frame.
pub fn predict(model: &SacfModel, mode: Mode, ann: &Annotation) -> Result<Prediction> {
    let (s, c) = route(model, mode, ann)?;
    predict_routed(model, mode, ann, s, c)
}

/// Predicts every labeled frame of `split` and scores the result.
/// Noninclusive frames are skipped.
pub fn evaluate(model: &SacfModel, mode: Mode, split: &[&Annotation]) -> Result<(EvalReport, Vec<Prediction>)> {
    let frames: Vec<&Annotation> = split
        .iter()
        .copied()
        .filter(|a| a.target_category.binary().is_some())
        .collect();
    if frames.is_empty() {
        return Err(Error::EmptySplit(format!("no labeled frames to evaluate in mode {mode}")));
    }
    let preds = frames
        .par_iter()
        .map(|a| predict(model, mode, a))
        .collect::<Result<Vec<_>>>()?;
    let l2: Vec<f64> = preds.iter().map(|p| p.l2).collect();
    let cats: Vec<_> = frames.iter().map(|a| a.target_category).collect();
    let fine: Vec<u8> = preds.iter().map(|p| p.c_fine.label()).collect();
    let mut report = EvalReport::compute(mode.as_str(), &l2, &cats, &fine)?;
    for (p, a) in preds.iter().zip(&frames) {
        report.routing.add(p.c_coarse, a.target_category.binary().unwrap_or(0));
    }
    report.tau = (mode == Mode::Sacf).then_some(model.tau);
    report.gate = match mode {
        Mode::Sacf => "learned",
        Mode::SacfOracle => "oracle",
        _ => "none",
    }
    .into();
    Ok((report, preds))
}

/// One row of the routing-scenario table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub routed: FineClass,
    pub truth: FineClass,
    pub count: usize,
    pub aware_l2: Option<f64>,
    pub agnostic_l2: Option<f64>,
}

/// Buckets predictions by (coarse decision, true class) and reports each
/// expert's mean L2 per bucket. Rows: face/face, face/not_face,
/// not_face/face, not_face/not_face.
pub fn scenario_analysis(preds: &[Prediction], dataset: &[&Annotation]) -> Result<Vec<ScenarioRow>> {
    let by_id: HashMap<&str, &Annotation> = dataset.iter().map(|a| (a.frame_id.as_str(), *a)).collect();
    let mut sums = [(0usize, 0.0f64, 0.0f64); 4];
    for p in preds {
        let ann = by_id
            .get(p.frame_id.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("prediction for unknown frame {}", p.frame_id)))?;
        let Some(y) = ann.target_category.binary() else {
            continue;
        };
        let (gh, gw) = ann.features()?.dims();
        let k = 2 * usize::from(1 - p.c_coarse.min(1)) + usize::from(1 - y);
        sums[k].0 += 1;
        sums[k].1 += l2_of_cell_point(ann, p.aware_point, gh, gw);
        sums[k].2 += l2_of_cell_point(ann, p.agnostic_point, gh, gw);
    }
    let names = ["face_face", "face_not_face", "not_face_face", "not_face_not_face"];
    Ok((0..4)
        .map(|k| {
            let (n, a, g) = sums[k];
            let avg = |s: f64| (n > 0).then(|| s / n as f64);
            ScenarioRow {
                scenario: names[k].into(),
                routed: FineClass::from_label(u8::from(k < 2)),
                truth: FineClass::from_label(u8::from(k % 2 == 0)),
                count: n,
                aware_l2: avg(a),
                agnostic_l2: avg(g),
            }
        })
        .collect())
}

pub fn scenario_csv(rows: &[ScenarioRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "null".to_string(), |x| x.to_string());
    let mut s = String::from("scenario,count,aware_l2,agnostic_l2\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.scenario, r.count, opt(r.aware_l2), opt(r.agnostic_l2)));
    }
    s
}
