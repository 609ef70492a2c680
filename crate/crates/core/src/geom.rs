//! Planar primitives: points, quadrilaterals, rotation, area, simplicity and
//! exact polygon IoU.
//!
//! Intersections are computed by Sutherland-Hodgman clipping of convex
//! pieces. Convex quads are clipped directly; concave (but simple) quads are
//! split along their interior diagonal into two triangles first, so concave
//! annotations are handled exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used by geometric predicates.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn try_new(x: f64, y: f64) -> Result<Self> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(Error::NonFinite)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    #[inline]
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn distance(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Twice the signed area of triangle `(a, b, c)`; positive when counter-clockwise
/// in a y-up frame.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    b.sub(a).cross(c.sub(a))
}

#[inline]
fn sign(v: f64) -> i8 {
    if v > EPS {
        1
    } else if v < -EPS {
        -1
    } else {
        0
    }
}

/// Axis-aligned rectangle, `min` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        self.x_min <= o.x_max && o.x_min <= self.x_max && self.y_min <= o.y_max && o.y_min <= self.y_max
    }

    pub fn intersection_area(&self, o: &Rect) -> f64 {
        let w = self.x_max.min(o.x_max) - self.x_min.max(o.x_min);
        let h = self.y_max.min(o.y_max) - self.y_min.max(o.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, o: &Rect) -> f64 {
        let inter = self.intersection_area(o);
        let union = self.area() + o.area() - inter;
        if union <= EPS {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }

    /// Corners in the order top-left, top-right, bottom-right, bottom-left
    /// (image coordinates, y pointing down).
    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x_min, self.y_min),
            Point::new(self.x_max, self.y_min),
            Point::new(self.x_max, self.y_max),
            Point::new(self.x_min, self.y_max),
        ]
    }
}

/// Four vertices in stored order. All coordinates are finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Point; 4]", into = "[Point; 4]")]
pub struct Quad {
    vertices: [Point; 4],
}

impl TryFrom<[Point; 4]> for Quad {
    type Error = Error;
    fn try_from(v: [Point; 4]) -> Result<Self> {
        Quad::new(v)
    }
}

impl From<Quad> for [Point; 4] {
    fn from(q: Quad) -> Self {
        q.vertices
    }
}

impl Quad {
    pub fn new(vertices: [Point; 4]) -> Result<Self> {
        if vertices.iter().all(Point::is_finite) {
            Ok(Self { vertices })
        } else {
            Err(Error::NonFinite)
        }
    }

    /// Builds a quad from `x1, y1, ..., x4, y4`.
    pub fn from_coords(c: [f64; 8]) -> Result<Self> {
        Self::new([
            Point::new(c[0], c[1]),
            Point::new(c[2], c[3]),
            Point::new(c[4], c[5]),
            Point::new(c[6], c[7]),
        ])
    }

    pub fn vertices(&self) -> &[Point; 4] {
        &self.vertices
    }

    pub fn coords(&self) -> [f64; 8] {
        let v = &self.vertices;
        [v[0].x, v[0].y, v[1].x, v[1].y, v[2].x, v[2].y, v[3].x, v[3].y]
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        area(&self.vertices)
    }

    /// Mean of the four vertices.
    pub fn centroid(&self) -> Point {
        let (sx, sy) = self
            .vertices
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / 4.0, sy / 4.0)
    }

    /// Circumscribed axis-aligned rectangle.
    pub fn bounding_rect(&self) -> Rect {
        let v = &self.vertices;
        let mut r = Rect::new(v[0].x, v[0].y, v[0].x, v[0].y);
        for p in &v[1..] {
            r.x_min = r.x_min.min(p.x);
            r.y_min = r.y_min.min(p.y);
            r.x_max = r.x_max.max(p.x);
            r.y_max = r.y_max.max(p.y);
        }
        r
    }

    /// Largest distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                d = d.max(v[i].distance(v[j]));
            }
        }
        d
    }

    pub fn is_simple(&self) -> bool {
        is_simple(self)
    }

    pub fn is_convex(&self) -> bool {
        let v = &self.vertices;
        let mut seen = 0i8;
        for i in 0..4 {
            let s = sign(orient(v[i], v[(i + 1) % 4], v[(i + 2) % 4]));
            if s == 0 {
                continue;
            }
            if seen == 0 {
                seen = s;
            } else if s != seen {
                return false;
            }
        }
        seen != 0
    }

    /// Same vertices with the traversal direction reversed.
    pub fn reversed(&self) -> Quad {
        let v = self.vertices;
        Quad {
            vertices: [v[3], v[2], v[1], v[0]],
        }
    }

    /// Same vertices with storage shifted left by `k`.
    pub fn shifted(&self, k: usize) -> Quad {
        let v = self.vertices;
        Quad {
            vertices: std::array::from_fn(|i| v[(i + k) % 4]),
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Quad {
        Quad {
            vertices: self.vertices.map(|p| Point::new(p.x + dx, p.y + dy)),
        }
    }
}

/// Shoelace sum divided by two (positive when counter-clockwise in a y-up frame).
pub fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        s += pts[i].cross(pts[(i + 1) % n]);
    }
    s / 2.0
}

/// Absolute polygon area; 0 for fewer than three vertices or collinear input.
pub fn area(pts: &[Point]) -> f64 {
    signed_area(pts).abs()
}

fn on_segment_interior_overlap(a: Point, b: Point, c: Point, d: Point) -> bool {
    // a-b and c-d are collinear; test for an overlap of positive length.
    let dir = b.sub(a);
    let len2 = dir.dot(dir);
    if len2 <= EPS {
        return false;
    }
    let t = |p: Point| p.sub(a).dot(dir) / len2;
    let (mut lo, mut hi) = (t(c), t(d));
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let overlap = hi.min(1.0) - lo.max(0.0);
    overlap * len2.sqrt() > EPS
}

/// Non-adjacent segments `a-b` and `c-d` cross or overlap. Touching at a
/// single point does not count.
fn segments_conflict(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = sign(orient(a, b, c));
    let o2 = sign(orient(a, b, d));
    let o3 = sign(orient(c, d, a));
    let o4 = sign(orient(c, d, b));
    if o1 * o2 < 0 && o3 * o4 < 0 {
        return true;
    }
    if o1 == 0 && o2 == 0 && o3 == 0 && o4 == 0 {
        return on_segment_interior_overlap(a, b, c, d);
    }
    false
}

/// True iff the quad's sides meet only at their shared endpoints.
///
/// Coincident vertices are rejected. Collinear adjacent sides are accepted
/// unless they fold back over each other; a vertex merely touching a
/// non-adjacent side is accepted.
pub fn is_simple(quad: &Quad) -> bool {
    let v = quad.vertices();
    for i in 0..4 {
        for j in i + 1..4 {
            if (v[i].x - v[j].x).abs() <= EPS && (v[i].y - v[j].y).abs() <= EPS {
                return false;
            }
        }
    }
    for i in 0..4 {
        let (a, b, c) = (v[i], v[(i + 1) % 4], v[(i + 2) % 4]);
        if sign(orient(a, b, c)) == 0 && a.sub(b).dot(c.sub(b)) > 0.0 {
            return false;
        }
    }
    !(segments_conflict(v[0], v[1], v[2], v[3]) || segments_conflict(v[1], v[2], v[3], v[0]))
}

/// Rotates every vertex rigidly about `center` by `angle` radians
/// (counter-clockwise in a y-up frame). Storage order is preserved.
pub fn rotate(quad: &Quad, center: Point, angle: f64) -> Quad {
    if angle == 0.0 {
        return *quad;
    }
    let (s, c) = angle.sin_cos();
    Quad {
        vertices: quad.vertices.map(|p| rotate_point(p, center, s, c)),
    }
}

#[inline]
fn rotate_point(p: Point, center: Point, s: f64, c: f64) -> Point {
    let dx = p.x - center.x;
    let dy = p.y - center.y;
    Point::new(center.x + dx * c - dy * s, center.y + dx * s + dy * c)
}

/// Clips `subject` to the inside of the counter-clockwise convex polygon `clip`.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    if subject.len() < 3 || clip.len() < 3 {
        return Vec::new();
    }
    let mut out: Vec<Point> = subject.to_vec();
    let mut buf = Vec::with_capacity(subject.len() + clip.len());
    for i in 0..clip.len() {
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        buf.clear();
        let n = out.len();
        for j in 0..n {
            let s = out[j];
            let e = out[(j + 1) % n];
            let sd = orient(a, b, s);
            let ed = orient(a, b, e);
            let (s_in, e_in) = (sd >= 0.0, ed >= 0.0);
            if s_in != e_in {
                let t = sd / (sd - ed);
                buf.push(Point::new(s.x + (e.x - s.x) * t, s.y + (e.y - s.y) * t));
            }
            if e_in {
                buf.push(e);
            }
        }
        std::mem::swap(&mut out, &mut buf);
        if out.len() < 3 {
            return Vec::new();
        }
    }
    out
}

/// Splits a quad into counter-clockwise convex pieces with disjoint interiors.
fn convex_pieces(q: &Quad) -> Vec<Vec<Point>> {
    let v = *q.vertices();
    let ccw = |mut pts: Vec<Point>| {
        if signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        pts
    };
    if q.is_convex() {
        return vec![ccw(v.to_vec())];
    }
    let total = q.signed_area();
    for d in 0..2 {
        let t1 = [v[d], v[d + 1], v[d + 2]];
        let t2 = [v[d + 2], v[(d + 3) % 4], v[d]];
        let (a1, a2) = (signed_area(&t1), signed_area(&t2));
        if a1 * total >= 0.0 && a2 * total >= 0.0 {
            return [t1, t2]
                .into_iter()
                .filter(|t| area(t) > EPS)
                .map(|t| ccw(t.to_vec()))
                .collect();
        }
    }
    // Self-intersecting input: no interior diagonal exists.
    [[v[0], v[1], v[2]], [v[2], v[3], v[0]]]
        .into_iter()
        .filter(|t| area(t) > EPS)
        .map(|t| ccw(t.to_vec()))
        .collect()
}

/// Area of `a ∩ b` for simple quads (convex or concave).
pub fn intersection_area(a: &Quad, b: &Quad) -> f64 {
    if !a.bounding_rect().intersects(&b.bounding_rect()) {
        return 0.0;
    }
    let pa = convex_pieces(a);
    let pb = convex_pieces(b);
    let mut total = 0.0;
    for p in &pa {
        for c in &pb {
            total += area(&clip_convex(p, c));
        }
    }
    total.min(a.area()).min(b.area()).max(0.0)
}

/// Exact polygon intersection-over-union; 0 when the union is degenerate.
pub fn iou(a: &Quad, b: &Quad) -> f64 {
    iou_with_areas(a, a.area(), b, b.area())
}

pub(crate) fn iou_with_areas(a: &Quad, area_a: f64, b: &Quad, area_b: f64) -> f64 {
    let inter = intersection_area(a, b);
    let union = area_a + area_b - inter;
    if union <= EPS {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(c: [f64; 8]) -> Quad {
        Quad::from_coords(c).unwrap()
    }

    fn unit_square_at(x: f64, y: f64) -> Quad {
        q([x, y, x + 1.0, y, x + 1.0, y + 1.0, x, y + 1.0])
    }

    #[test]
    fn area_examples() {
        assert_eq!(unit_square_at(0.0, 0.0).area(), 1.0);
        assert_eq!(q([0., 0., 1., 1., 2., 2., 3., 3.]).area(), 0.0);
        // bounding box 8x8 minus corner triangles 6 + 5 + 9 + 6
        assert_eq!(q([1., 2., 7., 0., 9., 5., 3., 8.]).area(), 38.0);
    }

    #[test]
    fn simplicity_examples() {
        assert!(q([0., 0., 2., 0., 2., 2., 0., 2.]).is_simple());
        assert!(!q([0., 0., 2., 2., 2., 0., 0., 2.]).is_simple());
        assert!(q([1., 2., 7., 0., 9., 5., 3., 8.]).is_simple());
        // concave dart
        assert!(q([0., 0., 4., 2., 0., 4., 1., 2.]).is_simple());
        // straight-through vertex is fine, fold-back is not
        assert!(q([0., 0., 1., 0., 2., 0., 1., 1.]).is_simple());
        assert!(!q([0., 0., 2., 0., 1., 0., 1., 1.]).is_simple());
        // duplicated vertex
        assert!(!q([0., 0., 0., 0., 4., 0., 4., 2.]).is_simple());
    }

    #[test]
    fn rotation_examples() {
        let sq = unit_square_at(0.0, 0.0);
        assert_eq!(rotate(&sq, Point::new(3.0, 4.0), 0.0), sq);

        let r = rotate(&sq, Point::new(0.5, 0.5), std::f64::consts::FRAC_PI_2);
        // (0,0) -> (1,0), i.e. each vertex moves to the next stored slot
        for i in 0..4 {
            let got = r.vertices()[i];
            let want = sq.vertices()[(i + 1) % 4];
            assert!(got.distance(want) < 1e-9, "{got:?} vs {want:?}");
        }

        let p = q([1., 0., 0., 0., 0., 0., 0., 0.]);
        let r = rotate(&p, Point::new(0.0, 0.0), std::f64::consts::FRAC_PI_2);
        assert!(r.vertices()[0].distance(Point::new(0.0, 1.0)) < 1e-9);
    }

    #[test]
    fn intersection_examples() {
        let a = unit_square_at(0.0, 0.0);
        assert!((intersection_area(&a, &a) - 1.0).abs() < 1e-9);
        assert_eq!(intersection_area(&a, &unit_square_at(5.0, 5.0)), 0.0);
        let b = unit_square_at(0.5, 0.0);
        assert!((intersection_area(&a, &b) - 0.5).abs() < 1e-12);

        assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(iou(&a, &unit_square_at(5.0, 5.0)), 0.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn concave_intersection_uses_interior_diagonal() {
        // Dart with reflex vertex at (1,2): area = 4*4/2 - 4*1/2 = 6
        let dart = q([0., 0., 4., 2., 0., 4., 1., 2.]);
        assert_eq!(dart.area(), 6.0);
        assert!((intersection_area(&dart, &dart) - 6.0).abs() < 1e-9);
        // Intersect with the half-plane x >= 1 box: triangle (1,0.5)-(4,2)-(1,3.5)
        let right = q([1., -1., 5., -1., 5., 5., 1., 5.]);
        assert!((intersection_area(&dart, &right) - 4.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_iou_is_zero() {
        let line = q([0., 0., 1., 1., 2., 2., 3., 3.]);
        assert_eq!(iou(&line, &line), 0.0);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Quad::from_coords([0., 0., 1., f64::NAN, 1., 1., 0., 1.]).is_err());
        assert!(Point::try_new(f64::INFINITY, 0.0).is_err());
    }

    fn convex_quad() -> impl Strategy<Value = Quad> {
        (
            -50.0..50.0f64,
            -50.0..50.0f64,
            0.0..std::f64::consts::TAU,
            prop::array::uniform4((5.0..40.0f64, -0.6..0.6f64)),
        )
            .prop_map(|(cx, cy, phase, radial)| {
                let pts: [Point; 4] = std::array::from_fn(|k| {
                    let (r, jitter) = radial[k];
                    let a = phase + k as f64 * std::f64::consts::FRAC_PI_2 + jitter;
                    Point::new(cx + r * a.cos(), cy + r * a.sin())
                });
                Quad::new(pts).unwrap()
            })
    }

    proptest! {
        #[test]
        fn iou_is_symmetric(a in convex_quad(), b in convex_quad()) {
            prop_assert!((iou(&a, &b) - iou(&b, &a)).abs() < 1e-9);
        }

        #[test]
        fn iou_rigid_invariance(a in convex_quad(), b in convex_quad(), th in -3.2..3.2f64) {
            let c = Point::new(7.0, -3.0);
            let before = iou(&a, &b);
            let after = iou(&rotate(&a, c, th), &rotate(&b, c, th));
            prop_assert!((before - after).abs() < 1e-6);
        }

        #[test]
        fn self_intersection_is_area(a in convex_quad()) {
            prop_assert!((intersection_area(&a, &a) - a.area()).abs() < 1e-9 * a.area().max(1.0));
        }

        #[test]
        fn rotate_round_trip(a in convex_quad(), th in -7.0..7.0f64) {
            let c = Point::new(1.5, 2.5);
            let back = rotate(&rotate(&a, c, th), c, -th);
            for (p, o) in back.vertices().iter().zip(a.vertices()) {
                prop_assert!(p.distance(*o) < 1e-9);
            }
        }

        #[test]
        fn intersection_bounded(a in convex_quad(), b in convex_quad()) {
            let i = intersection_area(&a, &b);
            prop_assert!(i >= 0.0);
            prop_assert!(i <= a.area().min(b.area()) + 1e-9);
        }
    }
}
