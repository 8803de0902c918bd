//! Axis-aligned boxes and points.
//!
//! Boxes are half-open: `[x_min, x_max) × [y_min, y_max)`. A point on the
//! right or bottom edge is outside. There is no epsilon anywhere in this
//! module; boundary cases are decided by the half-open rule alone.

use serde::{Deserialize, Serialize};

/// A 2-D point. Depending on context the unit is pixels or grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Half-open axis-aligned bounding box.
///
/// Serialized as `[x_min, y_min, x_max, y_max]`. Deserialization does not
/// validate; call [`BBox::validate`] (the dataset loader does, so it can name
/// the offending frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x_min, y_min, x_max, y_max]: [f64; 4]) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BBox {
    /// Builds a box, checking the ordering and range invariants.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, String> {
        let b = BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate().map(|_| b)
    }

    pub fn validate(&self) -> Result<(), String> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(format!("box {coords:?} has non-finite coordinates"));
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(format!("box {coords:?} has negative coordinates"));
        }
        if self.x_min >= self.x_max {
            return Err(format!("box {coords:?} violates x_min < x_max"));
        }
        if self.y_min >= self.y_max {
            return Err(format!("box {coords:?} violates y_min < y_max"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        point_in_box(p, self)
    }

    /// True when the box lies inside `[0, width) × [0, height)`.
    pub fn inside_frame(&self, width: f64, height: f64) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= width && self.y_max <= height
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn overlaps(&self, other: &BBox) -> bool {
        self.intersection_area(other) > 0.0
    }

    pub fn scale(&self, sx: f64, sy: f64) -> BBox {
        BBox {
            x_min: self.x_min * sx,
            y_min: self.y_min * sy,
            x_max: self.x_max * sx,
            y_max: self.y_max * sy,
        }
    }
}

/// Half-open membership test.
pub fn point_in_box(p: Point, b: &BBox) -> bool {
    b.x_min <= p.x && p.x < b.x_max && b.y_min <= p.y && p.y < b.y_max
}

/// True iff `p` lies in at least one box. False for an empty list.
pub fn point_in_union(p: Point, boxes: &[BBox]) -> bool {
    boxes.iter().any(|b| point_in_box(p, b))
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
