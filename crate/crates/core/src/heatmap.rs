//! Ground-truth heatmaps, pixel-wise BCE and argmax decoding.
//!
//! Numerics: predictions are clamped to `[EPS, 1 - EPS]` with `EPS = 1e-6`
//! before taking logs, so the loss is finite for saturated predictions.
//! Ground-truth values are never clamped.

use crate::error::{Error, Result};
use crate::geometry::Point;

pub const EPS: f64 = 1e-6;

/// Default ground-truth blur in grid cells.
pub const DEFAULT_SIGMA: f64 = 2.0;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Unconstrained row-major grid of reals (logits, gradients).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: format!("{height}x{width}"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, v: f64) -> Self {
        Self {
            height,
            width,
            data: vec![v; height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }
}

/// Grid of probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Heatmap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: format!("{height}x{width}"),
                actual: format!("{} values", data.len()),
            });
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "heatmap value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn uniform(height: usize, width: usize, v: f64) -> Result<Self> {
        Self::new(height, width, vec![v; height * width])
    }

    pub(crate) fn from_trusted(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert!(data.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            height,
            width,
            data,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    /// Debug dump: one CSV row per grid row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.data.chunks_exact(self.width) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Grid cell `(row, col)` containing a point given in cell units.
pub fn cell_of(p: Point) -> (isize, isize) {
    (p.y.floor() as isize, p.x.floor() as isize)
}

/// Peak-normalized Gaussian centred on the cell containing `target`.
///
/// `target` is in cell units (`x` = column, `y` = row). The Gaussian is
/// evaluated at integer cell offsets from the target cell, so that cell holds
/// exactly 1 and is the unique maximum.
pub fn gaussian_gt_heatmap(
    target: Point,
    sigma: f64,
    height: usize,
    width: usize,
) -> Result<Heatmap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma must be > 0, got {sigma}")));
    }
    if !target.is_finite()
        || target.x < 0.0
        || target.y < 0.0
        || target.x >= width as f64
        || target.y >= height as f64
    {
        return Err(Error::InvalidInput(format!(
            "target ({}, {}) outside the {height}x{width} grid",
            target.x, target.y
        )));
    }
    let (ti, tj) = cell_of(target);
    let inv = 1.0 / (2.0 * sigma * sigma);
    // Separable: exp(-(di² + dj²)/2σ²) = row factor × column factor.
    let rows: Vec<f64> = (0..height)
        .map(|i| {
            let d = i as f64 - ti as f64;
            (-d * d * inv).exp()
        })
        .collect();
    let cols: Vec<f64> = (0..width)
        .map(|j| {
            let d = j as f64 - tj as f64;
            (-d * d * inv).exp()
        })
        .collect();
    let mut data = Vec::with_capacity(height * width);
    for r in &rows {
        data.extend(cols.iter().map(|c| r * c));
    }
    Ok(Heatmap::from_trusted(height, width, data))
}

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", a.0, a.1),
            actual: format!("{}x{}", b.0, b.1),
        });
    }
    Ok(())
}

/// Per-pixel BCE term with the prediction clamped to `[EPS, 1 - EPS]`.
#[inline]
pub fn bce_term(p: f64, g: f64) -> f64 {
    let p = p.clamp(EPS, 1.0 - EPS);
    -(g * p.ln() + (1.0 - g) * (1.0 - p).ln())
}

/// Mean pixel-wise binary cross-entropy between prediction and target.
pub fn bce_loss(pred: &Heatmap, gt: &Heatmap) -> Result<f64> {
    check_dims(gt.dims(), pred.dims())?;
    let n = pred.data.len() as f64;
    let sum: f64 = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(&p, &g)| bce_term(p, g))
        .sum();
    Ok(sum / n)
}

/// Gradient of [`bce_loss`]`(sigmoid(z), gt)` with respect to the logits:
/// `(sigmoid(z) - gt) / (H W)`.
pub fn bce_grad_logits(logits: &Grid, gt: &Heatmap) -> Result<Grid> {
    check_dims(gt.dims(), logits.dims())?;
    let n = logits.data.len() as f64;
    let data = logits
        .data
        .iter()
        .zip(&gt.data)
        .map(|(&z, &g)| (sigmoid(z) - g) / n)
        .collect();
    Grid::new(logits.height, logits.width, data)
}

/// Index `(row, col)` of the maximum, ties to the smallest row-major index.
pub fn argmax_cell(values: &[f64], width: usize) -> (usize, usize) {
    let mut best = 0;
    for (k, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = k;
        }
    }
    (best / width, best % width)
}

/// Cell-centre coordinates (cell units) of the heatmap maximum.
pub fn argmax_coords(h: &Heatmap) -> Point {
    let (i, j) = argmax_cell(&h.data, h.width);
    Point::new(j as f64 + 0.5, i as f64 + 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gt_peak_and_sigma_point() {
        let h = gaussian_gt_heatmap(Point::new(10.3, 5.7), 2.0, 32, 32).unwrap();
        assert_eq!(h.get(5, 10), 1.0);
        assert!((h.get(7, 10) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((h.get(5, 12) - 0.6065306597126334).abs() < 1e-15);
    }

    #[test]
    fn gt_sum_matches_closed_form_grid() {
        let (t, sigma) = (Point::new(16.0, 16.0), 2.0);
        let h = gaussian_gt_heatmap(t, sigma, 32, 32).unwrap();
        let mut oracle = 0.0;
        for i in 0..32 {
            for j in 0..32 {
                let d2 = ((i as f64) - 16.0).powi(2) + ((j as f64) - 16.0).powi(2);
                oracle += (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
        let sum: f64 = h.as_slice().iter().sum();
        assert!((sum - oracle).abs() < 1e-9, "{sum} vs {oracle}");
    }

    #[test]
    fn gt_rejects_outside_target() {
        assert!(gaussian_gt_heatmap(Point::new(32.0, 3.0), 2.0, 32, 32).is_err());
        assert!(gaussian_gt_heatmap(Point::new(-0.1, 3.0), 2.0, 32, 32).is_err());
        assert!(gaussian_gt_heatmap(Point::new(3.0, 3.0), 0.0, 32, 32).is_err());
    }

    #[test]
    fn bce_examples() {
        let half = Heatmap::uniform(4, 4, 0.5).unwrap();
        let l = bce_loss(&half, &half).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);

        let ones = Heatmap::uniform(3, 3, 1.0).unwrap();
        let l = bce_loss(&ones, &ones).unwrap();
        assert!(l > 0.0 && l <= 2.0 * EPS, "{l}");
    }

    #[test]
    fn bce_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
        let g: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
        let mut reference = 0.0;
        for k in 0..16 {
            let pk = p[k].clamp(1e-6, 1.0 - 1e-6);
            reference -= g[k] * pk.ln() + (1.0 - g[k]) * (1.0 - pk).ln();
        }
        reference /= 16.0;
        let l = bce_loss(
            &Heatmap::new(4, 4, p).unwrap(),
            &Heatmap::new(4, 4, g).unwrap(),
        )
        .unwrap();
        assert!((l - reference).abs() < 1e-12);
    }

    #[test]
    fn bce_dimension_mismatch() {
        let a = Heatmap::uniform(2, 2, 0.5).unwrap();
        let b = Heatmap::uniform(2, 3, 0.5).unwrap();
        assert!(matches!(bce_loss(&a, &b), Err(Error::DimensionMismatch { .. })));
        let z = Grid::filled(3, 2, 0.0);
        assert!(bce_grad_logits(&z, &a).is_err());
    }

    #[test]
    fn grad_examples() {
        let z = Grid::filled(1, 1, 0.0);
        let g = Heatmap::uniform(1, 1, 1.0).unwrap();
        assert_eq!(bce_grad_logits(&z, &g).unwrap().as_slice(), &[-0.5]);

        let z = Grid::new(1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        let g = Heatmap::new(1, 3, vec![sigmoid(-1.0), 0.5, sigmoid(2.0)]).unwrap();
        let grad = bce_grad_logits(&z, &g).unwrap();
        assert!(grad.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn argmax_ties_row_major() {
        let u = Heatmap::uniform(4, 4, 0.3).unwrap();
        assert_eq!(argmax_coords(&u), Point::new(0.5, 0.5));

        let mut data = vec![0.0; 100];
        data[3 * 10 + 7] = 0.9;
        data[9 * 10 + 1] = 0.9;
        let h = Heatmap::new(10, 10, data).unwrap();
        // Peaks at (row 3, col 7) and (row 9, col 1); the first in row-major order wins.
        assert_eq!(argmax_cell(h.as_slice(), 10), (3, 7));
        assert_eq!(argmax_coords(&h), Point::new(7.5, 3.5));
    }

    #[test]
    fn argmax_recovers_gt_cell() {
        let h = gaussian_gt_heatmap(Point::new(4.9, 20.0), 1.0, 32, 32).unwrap();
        assert_eq!(argmax_coords(&h), Point::new(4.5, 20.5));
    }

    #[test]
    fn csv_dump_has_one_line_per_row() {
        let h = Heatmap::uniform(3, 2, 0.25).unwrap();
        assert_eq!(h.to_csv(), "0.25,0.25\n0.25,0.25\n0.25,0.25\n");
    }
}
