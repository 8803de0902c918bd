//! Localization, classification and agreement scores.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, Point};
use crate::scene::{Annotation, Category};

/// `sqrt((Δx / width)² + (Δy / height)²)` for pixel points.
pub fn l2_normalized(pred: Point, gt: Point, width: f64, height: f64) -> f64 {
    let dx = (pred.x - gt.x) / width;
    let dy = (pred.y - gt.y) / height;
    (dx * dx + dy * dy).sqrt()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Per-category mean L2. `None` marks a category with no frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2ByClass {
    pub l2_obj: Option<f64>,
    pub l2_face: Option<f64>,
    pub l2_pnf: Option<f64>,
}

pub fn l2_by_class(l2: &[f64], categories: &[Category]) -> Result<L2ByClass> {
    if l2.len() != categories.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} categories", l2.len()),
            actual: format!("{} categories", categories.len()),
        });
    }
    let of = |c: Category| {
        mean(
            l2.iter()
                .zip(categories)
                .filter(|(_, &k)| k == c)
                .map(|(&v, _)| v),
        )
    };
    Ok(L2ByClass {
        l2_obj: of(Category::Object),
        l2_face: of(Category::Face),
        l2_pnf: of(Category::PersonNonFace),
    })
}

/// Binary confusion counts with Face as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    /// Counts from aligned predicted and true labels in {0, 1}.
    pub fn from_labels(pred: &[u8], truth: &[u8]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} labels", truth.len()),
                actual: format!("{} labels", pred.len()),
            });
        }
        let mut c = Self::default();
        for (&p, &t) in pred.iter().zip(truth) {
            c.add(p, t);
        }
        Ok(c)
    }

    pub fn add(&mut self, pred: u8, truth: u8) {
        match (pred, truth) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn off_diagonal(&self) -> u64 {
        self.fp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BinaryPrf {
    pub face: ClassScores,
    pub not_face: ClassScores,
    #[serde(rename = "macro")]
    pub macro_: MacroScores,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean; 0 when `p + r = 0`.
pub fn f1_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn class_scores(tp: u64, fp: u64, fn_: u64) -> ClassScores {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    ClassScores {
        precision,
        recall,
        f1: f1_score(precision, recall),
        support: tp + fn_,
    }
}

/// Per-class and macro precision, recall and F1.
pub fn binary_prf(c: &Confusion) -> BinaryPrf {
    let face = class_scores(c.tp, c.fp, c.fn_);
    let not_face = class_scores(c.tn, c.fn_, c.fp);
    BinaryPrf {
        face,
        not_face,
        macro_: MacroScores {
            precision: (face.precision + not_face.precision) / 2.0,
            recall: (face.recall + not_face.recall) / 2.0,
            f1: (face.f1 + not_face.f1) / 2.0,
        },
    }
}

/// Cohen's kappa of a square count matrix (rows: rater A, columns: rater B).
pub fn cohen_kappa(matrix: &[Vec<u64>]) -> Result<f64> {
    let k = matrix.len();
    if k == 0 {
        return Err(Error::InvalidInput("kappa of an empty matrix".into()));
    }
    if let Some(row) = matrix.iter().find(|r| r.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: format!("{k} columns"),
            actual: format!("{} columns", row.len()),
        });
    }
    let n: u64 = matrix.iter().flatten().sum();
    if n == 0 {
        return Err(Error::InvalidInput("kappa of an all-zero matrix".into()));
    }
    let n = n as f64;
    let trace: u64 = (0..k).map(|i| matrix[i][i]).sum();
    let p_o = trace as f64 / n;
    let p_e = (0..k)
        .map(|i| {
            let row: u64 = matrix[i].iter().sum();
            let col: u64 = matrix.iter().map(|r| r[i]).sum();
            row as f64 * col as f64
        })
        .sum::<f64>()
        / (n * n);
    if p_e == 1.0 {
        return if p_o == 1.0 {
            Ok(1.0)
        } else {
            Err(Error::Degenerate(
                "kappa undefined: chance agreement is 1 but observed agreement is not".into(),
            ))
        };
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Fraction of pairs with `iou > t`, per threshold.
pub fn agreement_curve(pairs: &[(BBox, BBox)], thresholds: &[f64]) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("agreement over an empty pair list".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidInput(format!("threshold {t} outside [0, 1]")));
    }
    let ious: Vec<f64> = pairs.iter().map(|(a, b)| iou(a, b)).collect();
    Ok(thresholds
        .iter()
        .map(|&t| ious.iter().filter(|&&v| v > t).count() as f64 / ious.len() as f64)
        .collect())
}

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or a
/// comma-separated list.
pub fn parse_thresholds(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidInput(format!("invalid threshold spec {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let out = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9)
            .collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if out.is_empty() || out.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(bad());
    }
    Ok(out)
}

/// Square confusion matrix over the categories present in either list, in
/// the canonical category order.
pub fn category_confusion(a: &[Category], b: &[Category]) -> Result<(Vec<Category>, Vec<Vec<u64>>)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} labels", a.len()),
            actual: format!("{} labels", b.len()),
        });
    }
    let present: Vec<Category> = Category::ALL
        .into_iter()
        .filter(|c| a.contains(c) || b.contains(c))
        .collect();
    let idx = |c: &Category| present.iter().position(|p| p == c).unwrap();
    let mut m = vec![vec![0u64; present.len()]; present.len()];
    for (x, y) in a.iter().zip(b) {
        m[idx(x)][idx(y)] += 1;
    }
    Ok((present, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub n_pairs: usize,
    pub thresholds: Vec<f64>,
    pub agreement_rate: Vec<f64>,
    pub categories: Vec<Category>,
    pub confusion: Vec<Vec<u64>>,
    pub kappa: f64,
}

impl AgreementResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,agreement_rate\n");
        for (t, r) in self.thresholds.iter().zip(&self.agreement_rate) {
            writeln!(s, "{t},{r}").unwrap();
        }
        s
    }
}

/// Agreement between two annotation passes over shared frames.
///
/// Frames are matched by `frame_id` in the order of `a`. The IoU curve uses
/// pairs where both passes carry a target box; the category confusion and
/// kappa use every matched pair.
pub fn annotation_agreement(a: &[Annotation], b: &[Annotation], thresholds: &[f64]) -> Result<AgreementResult> {
    let by_id: HashMap<&str, &Annotation> = b.iter().map(|x| (x.frame_id.as_str(), x)).collect();
    let matched: Vec<(&Annotation, &Annotation)> = a
        .iter()
        .filter_map(|x| by_id.get(x.frame_id.as_str()).map(|y| (x, *y)))
        .collect();
    if matched.is_empty() {
        return Err(Error::InvalidInput("the two annotation files share no frame_id".into()));
    }
    let boxes: Vec<(BBox, BBox)> = matched
        .iter()
        .filter_map(|(x, y)| Some((x.target_box?, y.target_box?)))
        .collect();
    if boxes.is_empty() {
        return Err(Error::InvalidInput("no matched frame has target boxes in both files".into()));
    }
    let agreement_rate = agreement_curve(&boxes, thresholds)?;
    let (ca, cb): (Vec<Category>, Vec<Category>) =
        matched.iter().map(|(x, y)| (x.target_category, y.target_category)).unzip();
    let (categories, confusion) = category_confusion(&ca, &cb)?;
    let kappa = cohen_kappa(&confusion)?;
    Ok(AgreementResult {
        n_pairs: boxes.len(),
        thresholds: thresholds.to_vec(),
        agreement_rate,
        categories,
        confusion,
        kappa,
    })
}

/// All evaluation scores of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub n_frames: usize,
    pub l2_mean: f64,
    pub l2_obj: Option<f64>,
    pub l2_face: Option<f64>,
    pub l2_pnf: Option<f64>,
    pub face: ClassScores,
    pub not_face: ClassScores,
    #[serde(rename = "macro")]
    pub macro_: MacroScores,
    pub confusion: Confusion,
    /// Routing decisions (`c_coarse`) against the true binary class.
    pub routing: Confusion,
    pub tau: Option<f64>,
    pub gate: String,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "mode,n_frames,l2_mean,l2_obj,l2_face,l2_pnf,p_face,r_face,f1_face,p_notface,r_notface,f1_notface,p_macro,r_macro,f1_macro,tp,fp,fn,tn";

    /// Builds a report from per-frame L2 values, true categories and
    /// predicted binary classes. Noninclusive frames must already be removed.
    pub fn compute(mode: &str, l2: &[f64], categories: &[Category], predicted: &[u8]) -> Result<Self> {
        if l2.is_empty() {
            return Err(Error::EmptySplit(format!("nothing to evaluate for mode {mode}")));
        }
        let truth = categories
            .iter()
            .map(|c| {
                c.binary()
                    .ok_or_else(|| Error::InvalidInput("Noninclusive frame in evaluation".into()))
            })
            .collect::<Result<Vec<u8>>>()?;
        let by = l2_by_class(l2, categories)?;
        let confusion = Confusion::from_labels(predicted, &truth)?;
        let prf = binary_prf(&confusion);
        Ok(Self {
            mode: mode.to_string(),
            n_frames: l2.len(),
            l2_mean: mean(l2.iter().copied()).unwrap_or(0.0),
            l2_obj: by.l2_obj,
            l2_face: by.l2_face,
            l2_pnf: by.l2_pnf,
            face: prf.face,
            not_face: prf.not_face,
            macro_: prf.macro_,
            confusion,
            routing: Confusion::default(),
            tau: None,
            gate: "none".into(),
        })
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "null".to_string(), |x| x.to_string());
        let c = &self.confusion;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.mode,
            self.n_frames,
            self.l2_mean,
            opt(self.l2_obj),
            opt(self.l2_face),
            opt(self.l2_pnf),
            self.face.precision,
            self.face.recall,
            self.face.f1,
            self.not_face.precision,
            self.not_face.recall,
            self.not_face.f1,
            self.macro_.precision,
            self.macro_.recall,
            self.macro_.f1,
            c.tp,
            c.fp,
            c.fn_,
            c.tn
        )
    }

    pub fn to_csv(reports: &[EvalReport]) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in reports {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn l2_examples() {
        let (w, h) = (640.0, 480.0);
        let p = Point::new(10.0, 20.0);
        assert_eq!(l2_normalized(p, p, w, h), 0.0);
        let d = l2_normalized(Point::new(0.5 * w, 0.5 * h), Point::new(0.5 * w, 0.9 * h), w, h);
        assert!(close(d, 0.4, 1e-12));
        let d = l2_normalized(Point::new(0.0, 0.0), Point::new(w, h), w, h);
        assert!(close(d, 2f64.sqrt(), 1e-12));
    }

    #[test]
    fn l2_by_class_examples() {
        let r = l2_by_class(&[0.1, 0.1], &[Category::Face, Category::Face]).unwrap();
        assert_eq!(r.l2_face, Some(0.1));
        assert_eq!((r.l2_obj, r.l2_pnf), (None, None));

        let r = l2_by_class(&[0.2, 0.4, 0.1], &[Category::Object, Category::Object, Category::Face]).unwrap();
        assert!(close(r.l2_obj.unwrap(), 0.3, 1e-15));
        assert_eq!(r.l2_face, Some(0.1));
        assert_eq!(r.l2_pnf, None);

        assert!(l2_by_class(&[0.1], &[]).is_err());
    }

    #[test]
    fn prf_paper_counts() {
        let r = binary_prf(&Confusion::new(135, 60, 71, 3098));
        assert!(close(r.face.precision, 0.6923, 5e-4));
        assert!(close(r.face.recall, 0.6553, 5e-4));
        assert!(close(r.face.f1, 0.6731, 5e-4));
        assert!(close(r.not_face.precision, 0.9776, 5e-4));
        assert!(close(r.not_face.recall, 0.9811, 5e-4));
        assert!(close(r.not_face.f1, 0.9793, 5e-4));
        assert_eq!(r.face.support + r.not_face.support, 3364);
    }

    #[test]
    fn prf_degenerate_and_perfect() {
        let r = binary_prf(&Confusion::default());
        assert_eq!(r, BinaryPrf::default());
        let r = binary_prf(&Confusion::new(4, 0, 0, 9));
        assert_eq!(r.macro_.f1, 1.0);
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(cohen_kappa(&[vec![5, 0], vec![0, 7]]).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&[vec![25, 25], vec![25, 25]]).unwrap(), 0.0);
        assert_eq!(cohen_kappa(&[vec![9]]).unwrap(), 1.0);
        assert!(cohen_kappa(&[]).is_err());
        assert!(cohen_kappa(&[vec![0, 0], vec![0, 0]]).is_err());
        assert!(cohen_kappa(&[vec![1, 2]]).is_err());
    }

    #[test]
    fn kappa_published_matrix() {
        let m = [vec![499, 4, 12], vec![4, 27, 1], vec![12, 1, 1]];
        // p_o = 527/561; p_e = (515² + 32² + 14²)/561².
        let p_o = 527.0 / 561.0;
        let p_e = (515.0f64 * 515.0 + 32.0 * 32.0 + 14.0 * 14.0) / (561.0 * 561.0);
        let k = cohen_kappa(&m).unwrap();
        assert!(close(k, (p_o - p_e) / (1.0 - p_e), 1e-12));
        assert!(close(k, 0.6049, 1e-3));
    }

    #[test]
    fn agreement_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let far = BBox::new(5.0, 5.0, 6.0, 6.0).unwrap();
        // Half-overlapping pair: IoU = 2 / 6.
        let half = BBox::new(1.0, 0.0, 3.0, 2.0).unwrap();
        assert_eq!(agreement_curve(&[(a, a)], &[0.0, 0.5, 0.99]).unwrap(), vec![1.0; 3]);
        assert_eq!(agreement_curve(&[(a, far)], &[0.0, 0.5]).unwrap(), vec![0.0; 2]);
        assert_eq!(agreement_curve(&[(a, a), (a, half)], &[0.5]).unwrap(), vec![0.5]);
        assert_eq!(agreement_curve(&[(a, a)], &[1.0]).unwrap(), vec![0.0]);
        assert!(agreement_curve(&[], &[0.5]).is_err());
        assert!(agreement_curve(&[(a, a)], &[1.5]).is_err());
    }

    #[test]
    fn threshold_specs() {
        let t = parse_thresholds("0.1:0.9:0.2").unwrap();
        assert_eq!(t, vec![0.1, 0.3, 0.5, 0.7, 0.9]);
        assert_eq!(parse_thresholds("0.5,0.75").unwrap(), vec![0.5, 0.75]);
        assert_eq!(parse_thresholds("0:1:0.25").unwrap().len(), 5);
        for bad in ["", "a", "0.1:0.9", "0.9:0.1:0.1", "0:1:0", "2"] {
            assert!(parse_thresholds(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn category_confusion_present_only() {
        let a = [Category::Face, Category::Object, Category::Object];
        let b = [Category::Face, Category::Face, Category::Object];
        let (cats, m) = category_confusion(&a, &b).unwrap();
        assert_eq!(cats, vec![Category::Object, Category::Face]);
        assert_eq!(m, vec![vec![1, 1], vec![0, 1]]);
    }

    #[test]
    fn report_columns_and_nulls() {
        let r = EvalReport::compute(
            "agnostic",
            &[0.1, 0.3],
            &[Category::Face, Category::Object],
            &[1, 1],
        )
        .unwrap();
        assert_eq!(r.confusion, Confusion::new(1, 1, 0, 0));
        assert_eq!(r.l2_pnf, None);
        assert!(close(r.l2_mean, 0.2, 1e-15));
        let csv = EvalReport::to_csv(std::slice::from_ref(&r));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0].split(',').count(), 19);
        assert_eq!(lines[1].split(',').count(), 19);
        assert_eq!(lines[1].split(',').nth(5), Some("null"));
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["l2_pnf"].is_null());
        assert_eq!(json["confusion"]["fn"], 0);
        assert!(EvalReport::compute("x", &[], &[], &[]).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..50.0f64, 0.0..50.0f64, 0.5..30.0f64, 0.5..30.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
    }

    proptest! {
        #[test]
        fn agreement_monotone(pairs in prop::collection::vec((arb_box(), arb_box()), 1..20),
                              mut ts in prop::collection::vec(0.0..=1.0f64, 1..12)) {
            ts.sort_by(f64::total_cmp);
            let rates = agreement_curve(&pairs, &ts).unwrap();
            for w in rates.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            for r in rates {
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn kappa_permutation_invariant(cells in prop::collection::vec(0u64..30, 9), perm in Just([2usize, 0, 1])) {
            let m: Vec<Vec<u64>> = cells.chunks(3).map(|c| c.to_vec()).collect();
            let p: Vec<Vec<u64>> = (0..3).map(|i| (0..3).map(|j| m[perm[i]][perm[j]]).collect()).collect();
            match (cohen_kappa(&m), cohen_kappa(&p)) {
                (Ok(a), Ok(b)) => {
                    prop_assert!((a - b).abs() < 1e-12);
                    prop_assert!((-1.0..=1.0).contains(&a));
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "kappa definedness changed under permutation"),
            }
        }

        #[test]
        fn prf_matches_counting_oracle(labels in prop::collection::vec((0u8..2, 0u8..2), 0..200)) {
            let (pred, truth): (Vec<u8>, Vec<u8>) = labels.iter().copied().unzip();
            let r = binary_prf(&Confusion::from_labels(&pred, &truth).unwrap());
            let count = |f: &dyn Fn(u8, u8) -> bool| labels.iter().filter(|(p, t)| f(*p, *t)).count() as f64;
            let tp = count(&|p, t| p == 1 && t == 1);
            let pp = count(&|p, _| p == 1);
            let ap = count(&|_, t| t == 1);
            let tn = count(&|p, t| p == 0 && t == 0);
            let pn = count(&|p, _| p == 0);
            let an = count(&|_, t| t == 0);
            let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
            prop_assert_eq!(r.face.precision, div(tp, pp));
            prop_assert_eq!(r.face.recall, div(tp, ap));
            prop_assert_eq!(r.not_face.precision, div(tn, pn));
            prop_assert_eq!(r.not_face.recall, div(tn, an));
            prop_assert_eq!(r.face.support + r.not_face.support, labels.len() as u64);
            prop_assert!((f1_score(r.face.precision, r.face.recall) - r.face.f1).abs() < 1e-12);
        }

        #[test]
        fn l2_mean_is_support_weighted(vals in prop::collection::vec((0.0..1.5f64, 0usize..3), 1..60)) {
            let cats: Vec<Category> = vals.iter().map(|(_, c)| [Category::Object, Category::Face, Category::PersonNonFace][*c]).collect();
            let l2: Vec<f64> = vals.iter().map(|(v, _)| *v).collect();
            let pred = vec![0u8; l2.len()];
            let r = EvalReport::compute("m", &l2, &cats, &pred).unwrap();
            let mut num = 0.0;
            for (c, m) in [(Category::Object, r.l2_obj), (Category::Face, r.l2_face), (Category::PersonNonFace, r.l2_pnf)] {
                let n = cats.iter().filter(|&&k| k == c).count();
                prop_assert_eq!(n == 0, m.is_none());
                // brute-force group-by oracle
                let group: Vec<f64> = l2.iter().zip(&cats).filter(|(_, &k)| k == c).map(|(v, _)| *v).collect();
                if let Some(m) = m {
                    prop_assert!((m - group.iter().sum::<f64>() / group.len() as f64).abs() < 1e-12);
                    num += m * n as f64;
                }
            }
            prop_assert!((num / l2.len() as f64 - r.l2_mean).abs() < 1e-12);
        }
    }
}
