//! Orderless box discretization.
//!
//! A quadrilateral is encoded as its sorted x coordinates
//! `[x_min, x_2, x_3, x_max]`, its sorted y coordinates
//! `[y_min, y_2, y_3, y_max]` and a [`MatchingType`] saying which y rank
//! belongs to the vertex owning each x rank. None of the three depends on the
//! order in which the vertices were stored.
//!
//! Equal coordinates are ranked by the partner coordinate (for equal x, the
//! smaller y ranks first; symmetric for y), then by storage index. The index
//! only matters for coincident vertices, which decode identically either way.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Quad, Rect, EPS};

/// Default number of bins per axis.
pub const DEFAULT_GRID_M: u32 = 56;

/// Sorted x and y coordinate multisets of a quad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyEdges {
    pub xs: [f64; 4],
    pub ys: [f64; 4],
}

impl KeyEdges {
    /// Builds key edges from arbitrary values, sorting each axis.
    pub fn new(mut xs: [f64; 4], mut ys: [f64; 4]) -> Result<Self> {
        if !xs.iter().chain(&ys).all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        Ok(Self { xs, ys })
    }

    /// Centre used by half-line encoding: the mean of the four vertices.
    pub fn mean(&self) -> (f64, f64) {
        (self.xs.iter().sum::<f64>() / 4.0, self.ys.iter().sum::<f64>() / 4.0)
    }

    pub fn values(&self) -> [f64; 8] {
        let (x, y) = (self.xs, self.ys);
        [x[0], x[1], x[2], x[3], y[0], y[1], y[2], y[3]]
    }

    /// Largest absolute change over the eight key-edge values.
    pub fn max_shift(&self, other: &KeyEdges) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn bounding_rect(&self) -> Rect {
        Rect::new(self.xs[0], self.ys[0], self.xs[3], self.ys[3])
    }
}

/// One of the 24 bijections from x rank to y rank.
///
/// `id` is the lexicographic rank of `perm` among the permutations of
/// `(0, 1, 2, 3)`; `perm[i]` is the y rank paired with x rank `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MatchingType {
    id: u8,
    perm: [u8; 4],
}

pub const MATCHING_TYPE_COUNT: usize = 24;

impl MatchingType {
    pub fn from_id(id: u8) -> Result<Self> {
        if id as usize >= MATCHING_TYPE_COUNT {
            return Err(Error::InvalidMatchingId(id));
        }
        // factorial number system
        let mut pool: Vec<u8> = vec![0, 1, 2, 3];
        let mut rest = id as usize;
        let mut perm = [0u8; 4];
        for (slot, fact) in [6usize, 2, 1, 1].into_iter().enumerate() {
            let k = rest / fact;
            rest %= fact;
            perm[slot] = pool.remove(k);
        }
        Ok(Self { id, perm })
    }

    pub fn from_perm(perm: [u8; 4]) -> Result<Self> {
        let mut seen = [false; 4];
        for &p in &perm {
            if p > 3 || seen[p as usize] {
                return Err(Error::InvalidPermutation(perm));
            }
            seen[p as usize] = true;
        }
        let mut id = 0usize;
        for i in 0..4 {
            let smaller_after = perm[i + 1..].iter().filter(|&&q| q < perm[i]).count();
            id += smaller_after * [6, 2, 1, 1][i];
        }
        Ok(Self { id: id as u8, perm })
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn perm(&self) -> [u8; 4] {
        self.perm
    }

    /// All 24 matching types in ascending id order.
    pub fn all() -> impl Iterator<Item = MatchingType> {
        (0..MATCHING_TYPE_COUNT as u8).map(|id| MatchingType::from_id(id).expect("id in range"))
    }

    /// The four corners `(xs[i], ys[perm[i]])`, indexed by x rank.
    pub fn corners(&self, ke: &KeyEdges) -> [Point; 4] {
        std::array::from_fn(|i| Point::new(ke.xs[i], ke.ys[self.perm[i] as usize]))
    }
}

impl Serialize for MatchingType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.id)
    }
}

impl<'de> Deserialize<'de> for MatchingType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let id = u8::deserialize(d)?;
        MatchingType::from_id(id).map_err(serde::de::Error::custom)
    }
}

fn rank_order(v: &[Point; 4], primary: impl Fn(&Point) -> f64, partner: impl Fn(&Point) -> f64) -> [usize; 4] {
    let mut idx = [0usize, 1, 2, 3];
    idx.sort_by(|&a, &b| {
        primary(&v[a])
            .total_cmp(&primary(&v[b]))
            .then_with(|| partner(&v[a]).total_cmp(&partner(&v[b])))
            .then_with(|| a.cmp(&b))
    });
    idx
}

fn max_multiplicity(vals: impl Iterator<Item = f64> + Clone) -> usize {
    vals.clone()
        .map(|a| vals.clone().filter(|&b| b == a).count())
        .max()
        .unwrap_or(0)
}

/// Encodes a quad as key edges plus matching type.
///
/// Zero-area quads encode fine (and fail [`is_valid_matching`] later); a quad
/// where three or more vertices share one x or one y value is rejected.
pub fn encode(quad: &Quad) -> Result<(KeyEdges, MatchingType)> {
    let v = quad.vertices();
    if max_multiplicity(v.iter().map(|p| p.x)) > 2 {
        return Err(Error::DegenerateQuad("three or more vertices share an x value".into()));
    }
    if max_multiplicity(v.iter().map(|p| p.y)) > 2 {
        return Err(Error::DegenerateQuad("three or more vertices share a y value".into()));
    }
    let by_x = rank_order(v, |p| p.x, |p| p.y);
    let by_y = rank_order(v, |p| p.y, |p| p.x);
    let mut y_rank = [0u8; 4];
    for (rank, &vi) in by_y.iter().enumerate() {
        y_rank[vi] = rank as u8;
    }
    let ke = KeyEdges {
        xs: by_x.map(|i| v[i].x),
        ys: by_y.map(|i| v[i].y),
    };
    let perm = by_x.map(|i| y_rank[i]);
    Ok((ke, MatchingType::from_perm(perm)?))
}

/// Reassembles the quad for a matching type.
///
/// Vertices are ordered by increasing angle about their centroid
/// (counter-clockwise in a y-up frame, clockwise as drawn on an image),
/// starting from the corner holding `x_min`.
pub fn decode(ke: &KeyEdges, mt: MatchingType) -> Quad {
    let pts = mt.corners(ke);
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let angle = |p: &Point| (p.y - cy).atan2(p.x - cx);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| angle(&pts[a]).total_cmp(&angle(&pts[b])).then(a.cmp(&b)));
    let start = order.iter().position(|&i| i == 0).expect("rank 0 present");
    let vertices = std::array::from_fn(|k| pts[order[(start + k) % 4]]);
    Quad::new(vertices).expect("key edges are finite")
}

/// True iff the decoded quad is simple with positive area.
pub fn is_valid_matching(ke: &KeyEdges, mt: MatchingType) -> bool {
    let q = decode(ke, mt);
    q.area() > EPS && q.is_simple()
}

/// Matching types whose decoded shape is a valid quadrilateral, ascending by id.
pub fn enumerate_valid_matchings(ke: &KeyEdges) -> Vec<MatchingType> {
    MatchingType::all().filter(|&mt| is_valid_matching(ke, mt)).collect()
}

/// Key edges expressed as midpoints towards the box centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfEncoded {
    pub x_half: [f64; 4],
    pub y_half: [f64; 4],
    pub x_mean: f64,
    pub y_mean: f64,
}

pub fn half_encode(ke: &KeyEdges, x_mean: f64, y_mean: f64) -> HalfEncoded {
    HalfEncoded {
        x_half: ke.xs.map(|x| (x + x_mean) / 2.0),
        y_half: ke.ys.map(|y| (y + y_mean) / 2.0),
        x_mean,
        y_mean,
    }
}

pub fn half_decode(he: &HalfEncoded) -> KeyEdges {
    KeyEdges {
        xs: he.x_half.map(|h| 2.0 * h - he.x_mean),
        ys: he.y_half.map(|h| 2.0 * h - he.y_mean),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Uniform `m`-bin discretization of a window, per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    window: Rect,
    m: u32,
}

impl GridSpec {
    pub fn new(window: Rect, m: u32) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGrid(format!("m = {m}, need at least 2 bins")));
        }
        let finite = [window.x_min, window.y_min, window.x_max, window.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || window.width() <= 0.0 || window.height() <= 0.0 {
            return Err(Error::InvalidGrid(format!("window {window:?} has no area")));
        }
        Ok(Self { window, m })
    }

    pub fn window(&self) -> Rect {
        self.window
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    fn span(&self, axis: Axis) -> (f64, f64) {
        match axis {
            Axis::X => (self.window.x_min, self.window.width()),
            Axis::Y => (self.window.y_min, self.window.height()),
        }
    }

    pub fn bin_width(&self, axis: Axis) -> f64 {
        self.span(axis).1 / self.m as f64
    }

    /// Bin index of `coord`; out-of-window values clamp to the edge bins.
    pub fn quantize(&self, coord: f64, axis: Axis) -> u32 {
        let (lo, _) = self.span(axis);
        let b = ((coord - lo) / self.bin_width(axis)).floor();
        if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as u64).min(self.m as u64 - 1) as u32
        }
    }

    /// Centre of `bin`.
    pub fn dequantize(&self, bin: i64, axis: Axis) -> Result<f64> {
        if bin < 0 || bin >= self.m as i64 {
            return Err(Error::BinOutOfRange { bin, m: self.m });
        }
        let (lo, _) = self.span(axis);
        Ok(lo + (bin as f64 + 0.5) * self.bin_width(axis))
    }

    pub fn quantize_key_edges(&self, ke: &KeyEdges) -> ([u32; 4], [u32; 4]) {
        (
            ke.xs.map(|x| self.quantize(x, Axis::X)),
            ke.ys.map(|y| self.quantize(y, Axis::Y)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(c: [f64; 8]) -> Quad {
        Quad::from_coords(c).unwrap()
    }

    fn vertex_set(q: &Quad) -> Vec<(u64, u64)> {
        let mut v: Vec<_> = q.vertices().iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
        v.sort();
        v
    }

    /// Permutations of 0..4 in lexicographic order, generated independently
    /// of the factorial-number-system code under test.
    fn lexicographic_perms() -> Vec<[u8; 4]> {
        let mut out = Vec::new();
        for a in 0..4u8 {
            for b in 0..4u8 {
                for c in 0..4u8 {
                    for d in 0..4u8 {
                        let p = [a, b, c, d];
                        let mut s = p;
                        s.sort();
                        if s == [0, 1, 2, 3] {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matching_ids_are_lexicographic_ranks() {
        let perms = lexicographic_perms();
        assert_eq!(perms.len(), 24);
        for (id, p) in perms.iter().enumerate() {
            let mt = MatchingType::from_id(id as u8).unwrap();
            assert_eq!(mt.perm(), *p);
            assert_eq!(MatchingType::from_perm(*p).unwrap().id(), id as u8);
        }
        assert!(MatchingType::from_id(24).is_err());
        assert!(MatchingType::from_perm([0, 0, 1, 2]).is_err());
    }

    #[test]
    fn encode_reference_quad() {
        let (ke, mt) = encode(&q([1., 2., 7., 0., 9., 5., 3., 8.])).unwrap();
        assert_eq!(ke.xs, [1., 3., 7., 9.]);
        assert_eq!(ke.ys, [0., 2., 5., 8.]);
        // x_min<->y_2, x_2<->y_max, x_3<->y_min, x_max<->y_3
        assert_eq!(mt.perm(), [1, 3, 0, 2]);
    }

    #[test]
    fn encode_axis_aligned_rect_breaks_ties_by_partner() {
        let rect = q([0., 0., 4., 0., 4., 2., 0., 2.]);
        let (ke, mt) = encode(&rect).unwrap();
        assert_eq!(ke.xs, [0., 0., 4., 4.]);
        assert_eq!(ke.ys, [0., 0., 2., 2.]);
        // x ranks: (0,0) (0,2) (4,0) (4,2); y ranks: (0,0) (4,0) (0,2) (4,2)
        assert_eq!(mt.perm(), [0, 2, 1, 3]);
        assert_eq!(vertex_set(&decode(&ke, mt)), vertex_set(&rect));
        assert!(is_valid_matching(&ke, mt));
        // the identity pairing collapses the rectangle onto its diagonal
        let identity = MatchingType::from_id(0).unwrap();
        assert!(!is_valid_matching(&ke, identity));
    }

    #[test]
    fn encode_rejects_triple_ties() {
        let err = encode(&q([0., 0., 0., 1., 0., 2., 5., 1.])).unwrap_err();
        assert!(matches!(err, Error::DegenerateQuad(_)));
    }

    #[test]
    fn degenerate_quads_still_encode() {
        let line = q([0., 0., 1., 1., 2., 2., 3., 3.]);
        let (ke, mt) = encode(&line).unwrap();
        assert!(!is_valid_matching(&ke, mt));
    }

    #[test]
    fn decode_reverse_perm_is_collinear() {
        let ke = KeyEdges::new([0., 1., 2., 3.], [0., 1., 2., 3.]).unwrap();
        let rev = MatchingType::from_perm([3, 2, 1, 0]).unwrap();
        let d = decode(&ke, rev);
        let mut want = vec![(0., 3.), (1., 2.), (2., 1.), (3., 0.)];
        let mut got: Vec<_> = d.vertices().iter().map(|p| (p.x, p.y)).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
        assert_eq!(d.area(), 0.0);
        assert!(!is_valid_matching(&ke, rev));
    }

    #[test]
    fn decode_starts_at_x_min_and_runs_by_angle() {
        let (ke, mt) = encode(&q([1., 2., 7., 0., 9., 5., 3., 8.])).unwrap();
        let d = decode(&ke, mt);
        assert_eq!(d.vertices()[0], Point::new(1.0, 2.0));
        // increasing atan2 angle => positive shoelace area
        assert!(d.signed_area() > 0.0);
    }

    #[test]
    fn validity_examples() {
        let (ke, mt) = encode(&q([1., 2., 7., 0., 9., 5., 3., 8.])).unwrap();
        assert!(is_valid_matching(&ke, mt));
        let valid = enumerate_valid_matchings(&ke);
        assert!(valid.contains(&mt));
        assert!(valid.len() <= 24);
        assert!(valid.windows(2).all(|w| w[0].id() < w[1].id()));

        let flat = KeyEdges::new([3., 3., 3., 3.], [0., 1., 4., 6.]).unwrap();
        assert!(enumerate_valid_matchings(&flat).is_empty());
    }

    #[test]
    fn half_line_examples() {
        let (ke, _) = encode(&q([1., 2., 7., 0., 9., 5., 3., 8.])).unwrap();
        let (mx, my) = ke.mean();
        assert_eq!((mx, my), (5.0, 3.75));
        let he = half_encode(&ke, mx, my);
        assert_eq!(he.x_half[0], 3.0);
        assert_eq!(he.y_half[0], 1.875);
        assert_eq!(half_decode(&he), ke);

        let fixed = KeyEdges::new([5., 5., 6., 7.], [1., 2., 3., 4.]).unwrap();
        assert_eq!(half_encode(&fixed, 5.0, 0.0).x_half[0], 5.0);
        let inv = HalfEncoded {
            x_half: [3.0; 4],
            y_half: [0.0; 4],
            x_mean: 5.0,
            y_mean: 0.0,
        };
        assert_eq!(half_decode(&inv).xs[0], 1.0);
    }

    #[test]
    fn quantize_examples() {
        let g = GridSpec::new(Rect::new(0.0, 0.0, 56.0, 56.0), 56).unwrap();
        assert_eq!(g.quantize(0.0, Axis::X), 0);
        assert_eq!(g.quantize(56.0, Axis::X), 55);
        assert_eq!(g.quantize(10.4, Axis::Y), 10);
        assert_eq!(g.quantize(-30.0, Axis::X), 0);
        assert_eq!(g.quantize(1e9, Axis::Y), 55);
        assert_eq!(g.dequantize(0, Axis::X).unwrap(), 0.5);
        assert!(g.dequantize(56, Axis::X).is_err());
        assert!(g.dequantize(-1, Axis::X).is_err());
        for b in 0..56 {
            assert_eq!(g.quantize(g.dequantize(b, Axis::X).unwrap(), Axis::X), b as u32);
        }

        let g2 = GridSpec::new(Rect::new(0.0, 0.0, 1.0, 1.0), 2).unwrap();
        assert_eq!(g2.dequantize(1, Axis::X).unwrap(), 0.75);

        assert!(GridSpec::new(Rect::new(0.0, 0.0, 1.0, 1.0), 1).is_err());
        assert!(GridSpec::new(Rect::new(0.0, 0.0, 0.0, 1.0), 4).is_err());
    }

    fn generic_quad() -> impl Strategy<Value = Quad> {
        prop::array::uniform8(-500.0..500.0f64).prop_map(|c| Quad::from_coords(c).unwrap())
    }

    proptest! {
        #[test]
        fn encode_is_order_invariant(qd in generic_quad(), k in 0usize..4, rev in any::<bool>()) {
            let base = encode(&qd).unwrap();
            let mut other = qd.shifted(k);
            if rev { other = other.reversed(); }
            prop_assert_eq!(encode(&other).unwrap(), base);
        }

        #[test]
        fn decode_encode_round_trip(qd in generic_quad()) {
            let (ke, mt) = encode(&qd).unwrap();
            prop_assert_eq!(vertex_set(&decode(&ke, mt)), vertex_set(&qd));
        }

        #[test]
        fn key_edges_are_one_lipschitz(qd in generic_quad(), d in prop::array::uniform8(-3.0..3.0f64)) {
            let c = qd.coords();
            let moved = Quad::from_coords(std::array::from_fn(|i| c[i] + d[i])).unwrap();
            let disp = (0..8).map(|i| (moved.coords()[i] - c[i]).abs()).fold(0.0, f64::max);
            let (a, _) = encode(&qd).unwrap();
            let (b, _) = encode(&moved).unwrap();
            prop_assert!(a.max_shift(&b) <= disp);
        }

        #[test]
        fn half_round_trip(xs in prop::array::uniform4(-1e4..1e4f64), ys in prop::array::uniform4(-1e4..1e4f64)) {
            let ke = KeyEdges::new(xs, ys).unwrap();
            let (mx, my) = ke.mean();
            let back = half_decode(&half_encode(&ke, mx, my));
            for (a, b) in back.values().iter().zip(ke.values()) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(mx.abs()).max(my.abs()).max(1.0));
            }
        }

        #[test]
        fn quantization_error_within_half_bin(c in 0.0..100.0f64, m in 2u32..200) {
            let g = GridSpec::new(Rect::new(0.0, -5.0, 100.0, 20.0), m).unwrap();
            let back = g.dequantize(g.quantize(c, Axis::X) as i64, Axis::X).unwrap();
            prop_assert!((back - c).abs() <= g.bin_width(Axis::X) / 2.0 + 1e-12);
        }
    }
}
