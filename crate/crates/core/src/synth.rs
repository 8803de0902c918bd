//! Seeded synthetic scene generator.
//!
//! Each frame holds one child head, one or two adults (a face box plus a
//! separate body-part box each) and a few objects, all placed on the feature
//! grid without overlap and at distinct viewing angles from the head. The gaze target is drawn from a category prior that mirrors
//! the heavy Face / Not-face imbalance of clinical play sessions.
//!
//! Randomness comes from a ChaCha stream keyed by `(seed, frame_index)`, so
//! frames can be produced in any order or in parallel with identical output.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Point};
use crate::scene::{channel, Annotation, Category, Dataset, SceneFeatures, Split, FEATURE_DIM};

const PLACEMENT_ATTEMPTS: usize = 500;
const FEATURE_QUANTUM: f64 = 1e-4;

/// Frame counts of the reference train / val / test split.
pub const REFERENCE_SPLIT: [usize; 3] = [9874, 3344, 3364];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryPrior {
    pub face: f64,
    pub object: f64,
    pub person_non_face: f64,
}

impl Default for CategoryPrior {
    fn default() -> Self {
        Self {
            face: 0.066,
            object: 0.85,
            person_non_face: 0.084,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    pub feature_dim: usize,
    pub n_frames: usize,
    /// Train / val / test fractions.
    pub split_fractions: [f64; 3],
    pub category_prior: CategoryPrior,
    /// Inclusive `[min, max]` adults per frame.
    pub n_faces: [usize; 2],
    /// Inclusive `[min, max]` objects per frame.
    pub n_objects: [usize; 2],
    /// Angular gaze noise, radians.
    pub gaze_noise_sigma: f64,
    /// Target jitter around the entity centre, grid cells.
    pub jitter_sigma: f64,
    pub frame_width: u32,
    pub frame_height: u32,
    /// Probability of emitting a Noninclusive frame (0 by default).
    pub include_noninclusive: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        let total: usize = REFERENCE_SPLIT.iter().sum();
        Self {
            grid_h: 32,
            grid_w: 32,
            feature_dim: FEATURE_DIM,
            n_frames: total,
            split_fractions: REFERENCE_SPLIT.map(|n| n as f64 / total as f64),
            category_prior: CategoryPrior::default(),
            n_faces: [1, 2],
            n_objects: [1, 4],
            gaze_noise_sigma: 0.35,
            jitter_sigma: 0.75,
            frame_width: 320,
            frame_height: 320,
            include_noninclusive: 0.0,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.grid_h < 8 || self.grid_w < 8 {
            return bad(format!(
                "grid must be at least 8x8, got {}x{}",
                self.grid_h, self.grid_w
            ));
        }
        if self.feature_dim != FEATURE_DIM {
            return bad(format!("feature_dim must be {FEATURE_DIM}"));
        }
        if self.n_frames < 1 {
            return bad("n_frames must be >= 1".into());
        }
        let p = &self.category_prior;
        let probs = [p.face, p.object, p.person_non_face];
        if probs.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("category_prior entries must be nonnegative".into());
        }
        if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("category_prior must sum to 1".into());
        }
        let fr = &self.split_fractions;
        if fr.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("split_fractions must be nonnegative".into());
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split_fractions must sum to 1".into());
        }
        if self.n_faces[0] > self.n_faces[1] || self.n_objects[0] > self.n_objects[1] {
            return bad("count ranges must satisfy min <= max".into());
        }
        if p.face > 0.0 && self.n_faces[0] == 0 {
            return bad("face prior > 0 requires at least one adult per frame".into());
        }
        if (p.object > 0.0 && self.n_objects[0] == 0)
            || (p.person_non_face > 0.0 && self.n_faces[0] == 0)
        {
            return bad("every category with prior mass needs at least one entity".into());
        }
        if !(self.gaze_noise_sigma >= 0.0 && self.gaze_noise_sigma.is_finite()) {
            return bad("gaze_noise_sigma must be >= 0".into());
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return bad("jitter_sigma must be >= 0".into());
        }
        if self.frame_width == 0 || self.frame_height == 0 {
            return bad("frame size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.include_noninclusive) {
            return bad("include_noninclusive must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("GenConfig serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn cell_size(&self) -> (f64, f64) {
        (
            f64::from(self.frame_width) / self.grid_w as f64,
            f64::from(self.frame_height) / self.grid_h as f64,
        )
    }

    fn scaled(&self, cells: f64) -> usize {
        let s = self.grid_h.min(self.grid_w) as f64 / 32.0;
        ((cells * s).round() as usize).max(1)
    }

    /// Number of frames per split (largest-remainder rounding).
    pub fn split_sizes(&self) -> [usize; 3] {
        let n = self.n_frames;
        let exact = self.split_fractions.map(|f| f * n as f64);
        let mut sizes = exact.map(|e| e.floor() as usize);
        let mut rest = n - sizes.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for k in order {
            if rest == 0 {
                break;
            }
            sizes[k] += 1;
            rest -= 1;
        }
        sizes
    }
}

/// Axis-aligned rectangle of grid cells, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CellRect {
    row: usize,
    col: usize,
    h: usize,
    w: usize,
}

impl CellRect {
    fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.row && i < self.row + self.h && j >= self.col && j < self.col + self.w
    }

    /// Overlap test with a one-cell margin around `self`.
    fn near(&self, o: &CellRect) -> bool {
        let r0 = self.row.saturating_sub(1);
        let c0 = self.col.saturating_sub(1);
        let r1 = self.row + self.h + 1;
        let c1 = self.col + self.w + 1;
        o.row < r1 && r0 < o.row + o.h && o.col < c1 && c0 < o.col + o.w
    }

    fn to_pixels(self, cw: f64, ch: f64) -> BBox {
        BBox {
            x_min: self.col as f64 * cw,
            y_min: self.row as f64 * ch,
            x_max: (self.col + self.w) as f64 * cw,
            y_max: (self.row + self.h) as f64 * ch,
        }
    }
}

struct Layout {
    head: CellRect,
    faces: Vec<CellRect>,
    torsos: Vec<CellRect>,
    objects: Vec<CellRect>,
}

/// Minimum angle, seen from the child's head, between a face and any other
/// entity.
const FACE_SEPARATION: f64 = 65.0 * std::f64::consts::PI / 180.0;
/// Minimum angle between two non-face entities.
const ENTITY_SEPARATION: f64 = 20.0 * std::f64::consts::PI / 180.0;
/// Tries per entity before the whole layout is redrawn.
const ENTITY_TRIES: usize = 40;

fn odd(n: usize) -> usize {
    n | 1
}

fn rect_center(r: &CellRect) -> (f64, f64) {
    (r.row as f64 + r.h as f64 / 2.0, r.col as f64 + r.w as f64 / 2.0)
}

fn angle_between(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

struct Placed {
    rect: CellRect,
    angle: f64,
    is_face: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Face,
    Person,
    Object,
}

/// One attempt at a full layout; `None` when some entity found no room.
fn try_layout(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> Option<Layout> {
    let (gh, gw) = (cfg.grid_h, cfg.grid_w);
    let s = gh.min(gw) as f64 / 32.0;
    let head_side = odd(cfg.scaled(3.0));
    let face_side = odd(cfg.scaled(3.0));
    let (obj_lo, obj_hi) = (odd(cfg.scaled(2.0)), odd(cfg.scaled(5.0)));
    let (torso_long, torso_short) = (odd(cfg.scaled(5.0)), odd(cfg.scaled(3.0)));
    let (d_lo, d_hi) = (5.0 * s, 12.0 * s);

    // Head somewhere in the middle half of the frame.
    let row_hi = (3 * gh / 4).saturating_sub(head_side).max(gh / 4);
    let col_hi = (3 * gw / 4).saturating_sub(head_side).max(gw / 4);
    let head = CellRect {
        row: rng.random_range(gh / 4..=row_hi),
        col: rng.random_range(gw / 4..=col_hi),
        h: head_side,
        w: head_side,
    };
    let (hr, hc) = rect_center(&head);

    let n_adults = rng.random_range(cfg.n_faces[0]..=cfg.n_faces[1]);
    let n_objects = rng.random_range(cfg.n_objects[0]..=cfg.n_objects[1]);
    let mut kinds = Vec::with_capacity(2 * n_adults + n_objects);
    kinds.extend(std::iter::repeat_n(Kind::Face, n_adults));
    kinds.extend(std::iter::repeat_n(Kind::Person, n_adults));
    kinds.extend(std::iter::repeat_n(Kind::Object, n_objects));

    let mut placed: Vec<Placed> = Vec::with_capacity(kinds.len());
    for &kind in &kinds {
        let (h, w) = match kind {
            Kind::Face => (face_side, face_side),
            Kind::Person if rng.random::<bool>() => (torso_long, torso_short),
            Kind::Person => (torso_short, torso_long),
            Kind::Object => {
                let steps = (obj_hi - obj_lo) / 2;
                (
                    obj_lo + 2 * rng.random_range(0..=steps),
                    obj_lo + 2 * rng.random_range(0..=steps),
                )
            }
        };
        let is_face = kind == Kind::Face;
        let mut found = None;
        for _ in 0..ENTITY_TRIES {
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            let d = d_lo + rng.random::<f64>() * (d_hi - d_lo);
            let top = (hr + d * theta.sin() - h as f64 / 2.0).round();
            let left = (hc + d * theta.cos() - w as f64 / 2.0).round();
            if top < 0.0 || left < 0.0 || top as usize + h > gh || left as usize + w > gw {
                continue;
            }
            let rect = CellRect {
                row: top as usize,
                col: left as usize,
                h,
                w,
            };
            if head.near(&rect) || placed.iter().any(|p| p.rect.near(&rect)) {
                continue;
            }
            let (r, c) = rect_center(&rect);
            let angle = (r - hr).atan2(c - hc);
            let clear = placed.iter().all(|p| {
                let min = if p.is_face || is_face {
                    FACE_SEPARATION
                } else {
                    ENTITY_SEPARATION
                };
                angle_between(p.angle, angle) >= min
            });
            if clear {
                found = Some(Placed {
                    rect,
                    angle,
                    is_face,
                });
                break;
            }
        }
        placed.push(found?);
    }

    let mut layout = Layout {
        head,
        faces: Vec::new(),
        torsos: Vec::new(),
        objects: Vec::new(),
    };
    for (p, kind) in placed.iter().zip(&kinds) {
        match kind {
            Kind::Face => layout.faces.push(p.rect),
            Kind::Person => layout.torsos.push(p.rect),
            Kind::Object => layout.objects.push(p.rect),
        }
    }
    Some(layout)
}

fn sample_layout(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> Result<Layout> {
    for _ in 0..PLACEMENT_ATTEMPTS {
        if let Some(layout) = try_layout(rng, cfg) {
            return Ok(layout);
        }
    }
    Err(Error::Placement {
        attempts: PLACEMENT_ATTEMPTS,
        limit: format!(
            "no layout fits a {}x{} grid with up to {} adults and {} objects; lower n_faces or n_objects",
            cfg.grid_h, cfg.grid_w, cfg.n_faces[1], cfg.n_objects[1]
        ),
    })
}

fn quantize(v: f64) -> f32 {
    ((v / FEATURE_QUANTUM).round() * FEATURE_QUANTUM) as f32
}

/// Output of [`sample_scene`]: the annotation (features attached) plus the
/// noisy gaze direction used to fill the alignment channel.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub annotation: Annotation,
    /// Unit vector in pixel space.
    pub gaze_dir: Point,
}

/// Per-frame RNG keyed by `(seed, frame_index)`.
pub fn frame_rng(seed: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index);
    rng
}

/// Draws one scene. The annotation's split is `Train`; [`make_dataset`]
/// reassigns it.
pub fn sample_scene(cfg: &GenConfig, frame_index: u64) -> Result<SceneSample> {
    let mut rng = frame_rng(cfg.seed, frame_index);
    let layout = sample_layout(&mut rng, cfg)?;
    let (cw, ch) = cfg.cell_size();
    let (fw, fh) = (f64::from(cfg.frame_width), f64::from(cfg.frame_height));

    let head_box = layout.head.to_pixels(cw, ch);
    let head_c = head_box.center();

    let noninclusive = cfg.include_noninclusive > 0.0 && rng.random::<f64>() < cfg.include_noninclusive;
    let (category, target_rect) = if noninclusive {
        (Category::Noninclusive, None)
    } else {
        let u: f64 = rng.random();
        let p = &cfg.category_prior;
        let (cat, pool) = if u < p.face {
            (Category::Face, &layout.faces)
        } else if u < p.face + p.object {
            (Category::Object, &layout.objects)
        } else {
            (Category::PersonNonFace, &layout.torsos)
        };
        // Rounding in the prior can land on an empty pool; fall back to objects.
        let (cat, pool) = if pool.is_empty() {
            (Category::Object, &layout.objects)
        } else {
            (cat, pool)
        };
        let k = rng.random_range(0..pool.len());
        (cat, Some(pool[k]))
    };

    let jx: f64 = rng.sample(StandardNormal);
    let jy: f64 = rng.sample(StandardNormal);
    let noise: f64 = rng.sample(StandardNormal);

    let (target_point, target_box, gaze_dir) = match target_rect {
        Some(rect) => {
            let tb = rect.to_pixels(cw, ch);
            let c = tb.center();
            let clamp_round = |v: f64, lo: f64, hi: f64| {
                let v = (v.clamp(lo, hi) * 100.0).round() / 100.0;
                v.clamp(lo, hi - 0.01)
            };
            let tp = Point::new(
                clamp_round(c.x + cfg.jitter_sigma * jx * cw, tb.x_min, tb.x_max),
                clamp_round(c.y + cfg.jitter_sigma * jy * ch, tb.y_min, tb.y_max),
            );
            let (dx, dy) = (tp.x - head_c.x, tp.y - head_c.y);
            let norm = dx.hypot(dy);
            let (ux, uy) = (dx / norm, dy / norm);
            let delta = cfg.gaze_noise_sigma * noise;
            let (s, c) = delta.sin_cos();
            let dir = Point::new(c * ux - s * uy, s * ux + c * uy);
            (tp, Some(tb), dir)
        }
        None => {
            let tp = Point::new(
                (rng.random::<f64>() * fw * 100.0).floor() / 100.0,
                (rng.random::<f64>() * fh * 100.0).floor() / 100.0,
            );
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            (tp, None, Point::new(angle.cos(), angle.sin()))
        }
    };

    let diag = fw.hypot(fh);
    let mut features = SceneFeatures::zeros(cfg.grid_h, cfg.grid_w);
    for i in 0..cfg.grid_h {
        for j in 0..cfg.grid_w {
            let cell = features.cell_mut(i, j);
            let in_any = |rs: &[CellRect]| rs.iter().any(|r| r.contains(i, j));
            cell[channel::FACE_MASK] = f32::from(u8::from(in_any(&layout.faces)));
            cell[channel::OBJECT_MASK] = f32::from(u8::from(in_any(&layout.objects)));
            cell[channel::PNF_MASK] = f32::from(u8::from(in_any(&layout.torsos)));
            cell[channel::HEAD_MASK] = f32::from(u8::from(layout.head.contains(i, j)));
            let cx = (j as f64 + 0.5) * cw - head_c.x;
            let cy = (i as f64 + 0.5) * ch - head_c.y;
            let d = cx.hypot(cy);
            let align = if d > 0.0 {
                ((cx * gaze_dir.x + cy * gaze_dir.y) / d).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            cell[channel::GAZE_ALIGNMENT] = quantize(align);
            cell[channel::HEAD_DISTANCE] = quantize((d / diag).min(1.0));
        }
    }

    let annotation = Annotation {
        frame_id: format!("f{frame_index:06}"),
        clip_id: format!("c{:05}", frame_index / 5),
        width: cfg.frame_width,
        height: cfg.frame_height,
        child_head: head_box,
        adult_faces: layout.faces.iter().map(|r| r.to_pixels(cw, ch)).collect(),
        target_point,
        target_box,
        target_category: category,
        split: Split::Train,
        features: Some(features),
    };
    Ok(SceneSample {
        annotation,
        gaze_dir,
    })
}

/// Generates `n_frames` scenes and assigns splits by a seeded shuffle.
pub fn make_dataset(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut annotations = (0..cfg.n_frames as u64)
        .into_par_iter()
        .map(|k| sample_scene(cfg, k).map(|s| s.annotation))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..cfg.n_frames).collect();
    order.shuffle(&mut frame_rng(cfg.seed, u64::MAX));
    let [n_train, n_val, _] = cfg.split_sizes();
    for (rank, &idx) in order.iter().enumerate() {
        annotations[idx].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(Dataset::new(annotations).with_provenance(cfg.hash(), cfg.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_in_union;

    fn small(n: usize, seed: u64) -> GenConfig {
        GenConfig {
            n_frames: n,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn default_split_sizes_match_reference() {
        assert_eq!(GenConfig::default().split_sizes(), REFERENCE_SPLIT);
    }

    #[test]
    fn exact_fraction_split() {
        let cfg = GenConfig {
            n_frames: 10,
            split_fractions: [0.8, 0.1, 0.1],
            ..Default::default()
        };
        let ds = make_dataset(&cfg).unwrap();
        let s = ds.metadata.splits;
        assert_eq!((s.train, s.val, s.test), (8, 1, 1));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small(0, 1);
        assert!(cfg.validate().is_err());
        cfg.n_frames = 5;
        cfg.category_prior.face = 0.5;
        assert!(cfg.validate().is_err());
        let cfg = GenConfig {
            grid_h: 4,
            ..small(5, 1)
        };
        assert!(cfg.validate().is_err());
        let cfg = GenConfig {
            split_fractions: [0.5, 0.5, 0.5],
            ..small(5, 1)
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn degenerate_prior_gives_only_faces() {
        let cfg = GenConfig {
            category_prior: CategoryPrior {
                face: 1.0,
                object: 0.0,
                person_non_face: 0.0,
            },
            ..small(200, 3)
        };
        let ds = make_dataset(&cfg).unwrap();
        assert!(ds
            .annotations
            .iter()
            .all(|a| a.target_category == Category::Face));
    }

    #[test]
    fn frames_are_valid_and_labels_consistent() {
        let ds = make_dataset(&small(500, 11)).unwrap();
        ds.validate().unwrap();
        for a in &ds.annotations {
            let in_face = point_in_union(a.target_point, &a.adult_faces);
            assert_eq!(a.target_category.binary() == Some(1), in_face, "{}", a.frame_id);
            let f = a.features.as_ref().unwrap();
            f.validate().unwrap();
            if !a.adult_faces.is_empty() {
                let any_face = (0..f.height())
                    .any(|i| (0..f.width()).any(|j| f.get(i, j, channel::FACE_MASK) == 1.0));
                assert!(any_face);
            }
        }
    }

    #[test]
    fn noiseless_gaze_points_at_target() {
        let cfg = GenConfig {
            gaze_noise_sigma: 0.0,
            ..small(50, 5)
        };
        for k in 0..50 {
            let s = sample_scene(&cfg, k).unwrap();
            let a = &s.annotation;
            let h = a.child_head.center();
            let (dx, dy) = (a.target_point.x - h.x, a.target_point.y - h.y);
            let n = dx.hypot(dy);
            assert_eq!(s.gaze_dir, Point::new(dx / n, dy / n));
        }
    }

    #[test]
    fn noiseless_gaze_aligns_with_target_cell() {
        let cfg = GenConfig {
            gaze_noise_sigma: 0.0,
            ..small(200, 9)
        };
        for k in 0..200 {
            let s = sample_scene(&cfg, k).unwrap();
            let a = &s.annotation;
            let f = a.features.as_ref().unwrap();
            let (cw, ch) = a.cell_size(cfg.grid_h, cfg.grid_w);
            let t = a.target_point;
            let (i, j) = ((t.y / ch) as usize, (t.x / cw) as usize);
            let c = Point::new((j as f64 + 0.5) * cw, (i as f64 + 0.5) * ch);
            let h = a.child_head.center();
            // The target lies on the gaze ray, so the angle to its cell centre
            // is at most asin(|c - t| / |t - h|).
            let ratio = c.distance(&t) / t.distance(&h);
            assert!(ratio < 1.0, "frame {k}");
            let bound = (1.0 - ratio * ratio).sqrt() - 1e-4;
            let got = f64::from(f.get(i, j, channel::GAZE_ALIGNMENT));
            assert!(got >= bound, "frame {k}: {got} < {bound}");
        }
    }

    /// Centre cells of the rectangles in each mask channel.
    fn entity_centres(f: &SceneFeatures) -> Vec<(usize, usize)> {
        let (h, w) = f.dims();
        let mut out = Vec::new();
        for ch in [channel::FACE_MASK, channel::OBJECT_MASK, channel::PNF_MASK] {
            let mut seen = vec![false; h * w];
            for i in 0..h {
                for j in 0..w {
                    if seen[i * w + j] || f.get(i, j, ch) <= 0.5 {
                        continue;
                    }
                    let (mut i0, mut i1, mut j0, mut j1) = (i, i, j, j);
                    let mut stack = vec![(i, j)];
                    seen[i * w + j] = true;
                    while let Some((a, b)) = stack.pop() {
                        (i0, i1, j0, j1) = (i0.min(a), i1.max(a), j0.min(b), j1.max(b));
                        let nbrs = [(a.wrapping_sub(1), b), (a + 1, b), (a, b.wrapping_sub(1)), (a, b + 1)];
                        for (x, y) in nbrs {
                            if x < h && y < w && !seen[x * w + y] && f.get(x, y, ch) > 0.5 {
                                seen[x * w + y] = true;
                                stack.push((x, y));
                            }
                        }
                    }
                    out.push(((i0 + i1) / 2, (j0 + j1) / 2));
                }
            }
        }
        out
    }

    #[test]
    fn noiseless_target_centre_is_most_aligned_entity() {
        let cfg = GenConfig {
            gaze_noise_sigma: 0.0,
            ..small(300, 13)
        };
        for k in 0..300 {
            let a = sample_scene(&cfg, k).unwrap().annotation;
            let f = a.features.as_ref().unwrap();
            let (cw, ch) = a.cell_size(cfg.grid_h, cfg.grid_w);
            let c = a.target_box.unwrap().center();
            let target = ((c.y / ch) as usize, (c.x / cw) as usize);
            let centres = entity_centres(f);
            assert!(centres.contains(&target), "frame {k}");
            let align = |(i, j): (usize, usize)| f.get(i, j, channel::GAZE_ALIGNMENT);
            for &e in &centres {
                assert!(align(target) >= align(e), "frame {k}: {e:?} beats {target:?}");
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = small(30, 42);
        let a = make_dataset(&cfg).unwrap();
        let b = make_dataset(&cfg).unwrap();
        let ser = |d: &Dataset| -> Vec<String> {
            d.annotations
                .iter()
                .map(|a| serde_json::to_string(a).unwrap())
                .collect()
        };
        assert_eq!(ser(&a), ser(&b));
        assert_eq!(a.metadata, b.metadata);
        let c = make_dataset(&small(30, 43)).unwrap();
        assert_ne!(ser(&a), ser(&c));
    }

    #[test]
    fn frames_do_not_depend_on_dataset_size() {
        let a = make_dataset(&small(20, 8)).unwrap();
        let b = make_dataset(&small(40, 8)).unwrap();
        for k in 0..20 {
            let (x, y) = (&a.annotations[k], &b.annotations[k]);
            assert_eq!(x.target_point, y.target_point);
            assert_eq!(x.features, y.features);
        }
    }

    #[test]
    fn crowded_config_fails_placement() {
        let cfg = GenConfig {
            n_objects: [60, 60],
            ..small(1, 1)
        };
        let err = make_dataset(&cfg).unwrap_err();
        assert!(matches!(err, Error::Placement { .. }), "{err}");
        assert!(err.to_string().contains("n_objects"));
    }

    #[test]
    fn small_grid_works() {
        let cfg = GenConfig {
            grid_h: 8,
            grid_w: 8,
            n_faces: [1, 1],
            n_objects: [1, 2],
            ..small(50, 2)
        };
        make_dataset(&cfg).unwrap().validate().unwrap();
    }

    #[test]
    fn noninclusive_frames_when_requested() {
        let cfg = GenConfig {
            include_noninclusive: 0.5,
            ..small(200, 4)
        };
        let ds = make_dataset(&cfg).unwrap();
        ds.validate().unwrap();
        let n = ds.metadata.categories.noninclusive;
        assert!(n > 50 && n < 150, "{n}");
    }
}
