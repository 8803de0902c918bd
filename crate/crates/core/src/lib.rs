//! Socially aware coarse-to-fine gaze target detection.
//!
//! A synthetic scene generator, two per-cell logistic gaze experts, a
//! logistic social-context gate with threshold routing, and the evaluation
//! and annotation-agreement metrics used to compare them.

pub mod error;
pub mod experts;
pub mod gate;
pub mod geometry;
pub mod heatmap;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod synth;

pub use error::{Error, Result};
pub use experts::{aug_social, predict_heatmap, predict_point, train_expert, AugConfig, ExpertHyper, ExpertKind, ExpertParams};
pub use gate::{coarse_classify, oracle_gate, pool_features, score, train_gate, GateHyper, GateParams};
pub use geometry::{iou, point_in_union, BBox, Point};
pub use heatmap::{argmax_coords, bce_grad_logits, bce_loss, gaussian_gt_heatmap, Grid, Heatmap};
pub use metrics::{agreement_curve, annotation_agreement, binary_prf, cohen_kappa, l2_by_class, l2_normalized, Confusion, EvalReport};
pub use pipeline::{evaluate, predict, scenario_analysis, Mode, Prediction, SacfModel};
pub use scene::{Annotation, Category, Dataset, SceneFeatures, Split};
pub use synth::{make_dataset, GenConfig};
