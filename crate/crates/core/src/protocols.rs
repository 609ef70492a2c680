//! Vertex-ordering protocols and an instability harness.
//!
//! Sequence-regression detectors must decide which annotated vertex is
//! "first". Every such rule has configurations where a one-pixel change
//! reorders the whole sequence. This module implements four such rules, the
//! orderless key-edge target for comparison, and [`measure_instability`],
//! which perturbs quads and records how often each target's vertex
//! assignment flips and how far its coordinates jump.
//!
//! All orders are expressed in image coordinates (y grows downwards), so
//! "clockwise" is clockwise as displayed.
//!
//! The slope rule ([`order_dmpnet`]) and the circumscribed-rectangle rule
//! ([`order_textboxespp`]) are reconstructions from short prose
//! descriptions of the original detectors; their tie rules are documented
//! on each function.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{encode, KeyEdges, MatchingType};
use crate::error::{Error, Result};
use crate::geom::{rotate, Point, Quad, EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Minimum-x vertex first, then clockwise.
    Clockwise,
    /// Slope-based sequence.
    Dmpnet,
    /// Nearest corners of the circumscribed horizontal rectangle.
    Textboxes,
    /// Ascending angle about the mean centre.
    Qrn,
    /// Orderless key edges plus matching type.
    Obd,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Clockwise,
        Protocol::Dmpnet,
        Protocol::Textboxes,
        Protocol::Qrn,
        Protocol::Obd,
    ];
    pub const BASELINES: [Protocol; 4] = [Protocol::Clockwise, Protocol::Dmpnet, Protocol::Textboxes, Protocol::Qrn];

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Clockwise => "clockwise",
            Protocol::Dmpnet => "dmpnet",
            Protocol::Textboxes => "textboxes",
            Protocol::Qrn => "qrn",
            Protocol::Obd => "obd",
        }
    }

    /// Parses `all` or a comma-separated list of protocol names.
    pub fn parse_list(s: &str) -> Result<Vec<Protocol>> {
        if s.trim() == "all" {
            return Ok(Protocol::ALL.to_vec());
        }
        let mut out: Vec<Protocol> = s.split(',').map(|p| p.trim().parse()).collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown protocol `{s}`")))
    }
}

/// Regression target `x1, y1, ..., x4, y4` in protocol order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderedTarget {
    pub coords: [f64; 8],
}

impl OrderedTarget {
    pub fn from_points(p: [Point; 4]) -> Self {
        Self {
            coords: [p[0].x, p[0].y, p[1].x, p[1].y, p[2].x, p[2].y, p[3].x, p[3].y],
        }
    }

    pub fn point(&self, k: usize) -> Point {
        Point::new(self.coords[2 * k], self.coords[2 * k + 1])
    }

    /// Largest absolute coordinate change.
    pub fn linf_distance(&self, o: &OrderedTarget) -> f64 {
        self.coords
            .iter()
            .zip(&o.coords)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest Euclidean distance between corresponding slots.
    pub fn max_point_distance(&self, o: &OrderedTarget) -> f64 {
        (0..4).map(|k| self.point(k).distance(o.point(k))).fold(0.0, f64::max)
    }
}

/// A protocol's output: the target and which stored vertex fills each slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexOrder {
    pub target: OrderedTarget,
    pub slots: [usize; 4],
}

impl VertexOrder {
    fn new(q: &Quad, slots: [usize; 4]) -> Self {
        let v = q.vertices();
        Self {
            target: OrderedTarget::from_points(slots.map(|i| v[i])),
            slots,
        }
    }
}

fn lex_cmp(v: &[Point; 4], a: usize, b: usize) -> std::cmp::Ordering {
    v[a].x
        .total_cmp(&v[b].x)
        .then(v[a].y.total_cmp(&v[b].y))
        .then(a.cmp(&b))
}

fn min_x_vertex(v: &[Point; 4]) -> usize {
    (0..4).min_by(|&a, &b| lex_cmp(v, a, b)).expect("four vertices")
}

/// The minimum-x vertex (ties: minimum y) first, then the remaining vertices
/// along the quad's own boundary in clockwise direction.
pub fn order_clockwise_minx(q: &Quad) -> VertexOrder {
    let first = min_x_vertex(q.vertices());
    // with y pointing down a positive shoelace sum is clockwise on screen
    let step = if q.signed_area() >= 0.0 { 1 } else { 3 };
    VertexOrder::new(q, std::array::from_fn(|k| (first + step * k) % 4))
}

fn slope(from: Point, to: Point) -> f64 {
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    if dx == 0.0 {
        if dy > 0.0 {
            f64::INFINITY
        } else if dy < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    } else {
        dy / dx
    }
}

/// Slope-based sequence.
///
/// 1. The first point is the minimum-x vertex (ties: minimum y).
/// 2. Of the other three, the one whose connecting line from the first point
///    has the median slope becomes the third point.
/// 3. Of the remaining two, the one above the line 1-3 (smaller y side) is
///    the second point, the other the fourth.
/// 4. If the diagonal 2-4 is steeper than the diagonal 1-3, the sequence is
///    restarted from the smaller-x endpoint of 2-4 (ties: smaller y).
///
/// Tie rule: an exactly vertical 2-4 diagonal counts as slope `+inf`, so it
/// always restarts the sequence; tipping it one pixel to the left turns its
/// slope to a large negative value and the restart disappears.
pub fn order_dmpnet(q: &Quad) -> VertexOrder {
    let v = q.vertices();
    let p1 = min_x_vertex(v);
    let mut others: Vec<usize> = (0..4).filter(|&i| i != p1).collect();
    others.sort_by(|&a, &b| slope(v[p1], v[a]).total_cmp(&slope(v[p1], v[b])).then(lex_cmp(v, a, b)));
    let p3 = others[1];
    let side = |i: usize| v[p3].sub(v[p1]).cross(v[i].sub(v[p1]));
    let (a, b) = (others[0], others[2]);
    let (p2, p4) = match side(a).total_cmp(&side(b)).then(lex_cmp(v, a, b)) {
        std::cmp::Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let seq = [p1, p2, p3, p4];
    let k13 = slope(v[p1], v[p3]);
    let dx24 = v[p4].x - v[p2].x;
    let k24 = if dx24 == 0.0 {
        f64::INFINITY
    } else {
        (v[p4].y - v[p2].y) / dx24
    };
    let start = if k24 > k13 {
        if lex_cmp(v, p2, p4).is_le() {
            1
        } else {
            3
        }
    } else {
        0
    };
    VertexOrder::new(q, std::array::from_fn(|k| seq[(start + k) % 4]))
}

/// Assigns the vertices to the corners (top-left, top-right, bottom-right,
/// bottom-left) of the circumscribed horizontal rectangle, minimizing the
/// summed vertex-to-corner distance over all 24 assignments.
///
/// Tie rule: vertices are put in `(x, y)` order and assignments are scanned
/// in lexicographic order; a later assignment replaces the current best only
/// if it is cheaper by more than `1e-9`.
pub fn order_textboxespp(q: &Quad) -> VertexOrder {
    let v = q.vertices();
    let corners = q.bounding_rect().corners();
    let mut canon = [0usize, 1, 2, 3];
    canon.sort_by(|&a, &b| lex_cmp(v, a, b));
    let mut best: Option<(f64, [usize; 4])> = None;
    for mt in MatchingType::all() {
        let slots = mt.perm().map(|p| canon[p as usize]);
        let cost: f64 = (0..4).map(|k| v[slots[k]].distance(corners[k])).sum();
        if best.is_none_or(|(c, _)| cost < c - EPS) {
            best = Some((cost, slots));
        }
    }
    VertexOrder::new(q, best.expect("24 assignments").1)
}

/// Ascending angle about the mean centre, measured from the positive x axis
/// (clockwise on screen), in `[0, 2*pi)`. The minimum angle comes first.
pub fn order_qrn(q: &Quad) -> VertexOrder {
    let v = q.vertices();
    let c = q.centroid();
    let angle = |i: usize| {
        let a = (v[i].y - c.y).atan2(v[i].x - c.x);
        if a < 0.0 {
            a + TAU
        } else {
            a
        }
    };
    let mut slots = [0usize, 1, 2, 3];
    slots.sort_by(|&a, &b| {
        angle(a)
            .total_cmp(&angle(b))
            .then(v[a].distance(c).total_cmp(&v[b].distance(c)))
            .then(lex_cmp(v, a, b))
    });
    VertexOrder::new(q, slots)
}

/// The orderless target.
pub fn obd_target(q: &Quad) -> Result<(KeyEdges, MatchingType)> {
    encode(q)
}

/// Runs a baseline protocol. Returns `None` for [`Protocol::Obd`], whose
/// target is not a vertex sequence.
pub fn order_with(protocol: Protocol, q: &Quad) -> Option<VertexOrder> {
    match protocol {
        Protocol::Clockwise => Some(order_clockwise_minx(q)),
        Protocol::Dmpnet => Some(order_dmpnet(q)),
        Protocol::Textboxes => Some(order_textboxespp(q)),
        Protocol::Qrn => Some(order_qrn(q)),
        Protocol::Obd => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Perturbation {
    /// Rotation about the quad centroid by an angle uniform in `±degrees`.
    Rotate { degrees: f64 },
    /// Independent uniform noise in `±pixels` on every coordinate.
    Jitter { pixels: f64 },
}

impl Perturbation {
    fn magnitude(&self) -> f64 {
        match *self {
            Perturbation::Rotate { degrees } => degrees,
            Perturbation::Jitter { pixels } => pixels,
        }
    }

    pub fn apply(&self, q: &Quad, rng: &mut impl Rng) -> Quad {
        match *self {
            Perturbation::Rotate { degrees } if degrees > 0.0 => {
                let a = rng.gen_range(-degrees..=degrees).to_radians();
                rotate(q, q.centroid(), a)
            }
            Perturbation::Jitter { pixels } if pixels > 0.0 => {
                let c = q.coords();
                Quad::from_coords(c.map(|x| x + rng.gen_range(-pixels..=pixels))).expect("finite jitter")
            }
            _ => *q,
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Rotate { degrees } => write!(f, "rotate:{degrees}"),
            Perturbation::Jitter { pixels } => write!(f, "jitter:{pixels}"),
        }
    }
}

impl FromStr for Perturbation {
    type Err = Error;

    /// `rotate:<degrees>` or `jitter:<pixels>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad perturbation `{s}`, expected rotate:<deg> or jitter:<px>"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        let p = match kind.trim() {
            "rotate" => Perturbation::Rotate { degrees: value },
            "jitter" => Perturbation::Jitter { pixels: value },
            _ => return Err(bad()),
        };
        if !p.magnitude().is_finite() || p.magnitude() < 0.0 {
            return Err(bad());
        }
        Ok(p)
    }
}

/// Per-protocol outcome of one perturbed sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolOutcome {
    pub protocol: Protocol,
    /// Vertex assignment (or matching type, for OBD) changed.
    pub flipped: bool,
    /// L-infinity change of the target (key-edge values for OBD).
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub trial: usize,
    pub quad_index: usize,
    /// Largest absolute change of any vertex coordinate.
    pub displacement: f64,
    pub outcomes: Vec<ProtocolOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityReport {
    pub protocol: Protocol,
    pub trials: usize,
    pub flip_rate: f64,
    pub mean_target_shift: f64,
    pub max_target_shift: f64,
    pub max_displacement: f64,
}

enum Target {
    Order(VertexOrder),
    Obd(KeyEdges, MatchingType),
}

fn target(p: Protocol, q: &Quad) -> Result<Target> {
    match order_with(p, q) {
        Some(o) => Ok(Target::Order(o)),
        None => {
            let (ke, mt) = obd_target(q)?;
            Ok(Target::Obd(ke, mt))
        }
    }
}

fn compare(base: &Target, moved: &Target) -> (bool, f64) {
    match (base, moved) {
        (Target::Order(a), Target::Order(b)) => (a.slots != b.slots, a.target.linf_distance(&b.target)),
        (Target::Obd(ka, ma), Target::Obd(kb, mb)) => (ma != mb, ka.max_shift(kb)),
        _ => unreachable!("targets of one protocol"),
    }
}

/// Per-sample results; trial `t` perturbs `quads[t % quads.len()]` with an
/// RNG on stream `t` of the seeded generator, so results do not depend on
/// scheduling.
pub fn instability_samples(
    quads: &[Quad],
    protocols: &[Protocol],
    perturbation: Perturbation,
    trials: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if quads.is_empty() {
        return Err(Error::InvalidArgument("empty quad corpus".into()));
    }
    let bases: Vec<Vec<Target>> = quads
        .iter()
        .map(|q| protocols.iter().map(|&p| target(p, q)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let qi = t % quads.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let q = &quads[qi];
            let moved = perturbation.apply(q, &mut rng);
            let displacement = q
                .coords()
                .iter()
                .zip(moved.coords())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let outcomes = protocols
                .iter()
                .zip(&bases[qi])
                .map(|(&protocol, base)| {
                    let (flipped, shift) = compare(base, &target(protocol, &moved)?);
                    Ok(ProtocolOutcome {
                        protocol,
                        flipped,
                        shift,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Sample {
                trial: t,
                quad_index: qi,
                displacement,
                outcomes,
            })
        })
        .collect()
}

/// Aggregates [`instability_samples`] into one report per protocol.
pub fn summarize(protocols: &[Protocol], samples: &[Sample]) -> Vec<InstabilityReport> {
    let max_displacement = samples.iter().map(|s| s.displacement).fold(0.0, f64::max);
    protocols
        .iter()
        .enumerate()
        .map(|(k, &protocol)| {
            let (mut flips, mut sum, mut max) = (0usize, 0.0, 0.0f64);
            for s in samples {
                let o = &s.outcomes[k];
                flips += o.flipped as usize;
                sum += o.shift;
                max = max.max(o.shift);
            }
            let n = samples.len().max(1) as f64;
            InstabilityReport {
                protocol,
                trials: samples.len(),
                flip_rate: flips as f64 / n,
                mean_target_shift: sum / n,
                max_target_shift: max,
                max_displacement,
            }
        })
        .collect()
}

pub fn measure_instability_for(
    quads: &[Quad],
    protocols: &[Protocol],
    perturbation: Perturbation,
    trials: usize,
    seed: u64,
) -> Result<Vec<InstabilityReport>> {
    let samples = instability_samples(quads, protocols, perturbation, trials, seed)?;
    Ok(summarize(protocols, &samples))
}

/// Instability of all five targets.
pub fn measure_instability(
    quads: &[Quad],
    perturbation: Perturbation,
    trials: usize,
    seed: u64,
) -> Result<Vec<InstabilityReport>> {
    measure_instability_for(quads, &Protocol::ALL, perturbation, trials, seed)
}

/// Random star-shaped (hence simple) quads, convex and concave, with
/// centres in `[100, 900]²`.
pub fn random_corpus(n: usize, seed: u64) -> Vec<Quad> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let c = Point::new(rng.gen_range(100.0..900.0), rng.gen_range(100.0..900.0));
            let phase = rng.gen_range(0.0..TAU);
            let pts = std::array::from_fn(|k| {
                let a = phase + k as f64 * TAU / 4.0 + rng.gen_range(-0.7..0.7);
                let r = rng.gen_range(20.0..150.0);
                Point::new(c.x + r * a.cos(), c.y + r * a.sin())
            });
            Quad::new(pts).expect("finite")
        })
        .collect()
}

fn rect(x: f64, y: f64, w: f64, h: f64) -> Quad {
    Quad::from_coords([x, y, x + w, y, x + w, y + h, x, y + h]).expect("finite")
}

/// Rhombus centred at `(cx, cy)` with horizontal half-diagonal `a` and
/// vertical half-diagonal `b`; the rightmost vertex sits on the centre's
/// positive x axis.
fn rhombus(cx: f64, cy: f64, a: f64, b: f64) -> Quad {
    Quad::from_coords([cx + a, cy, cx, cy + b, cx - a, cy, cx, cy - b]).expect("finite")
}

/// Inputs sitting exactly on a protocol's decision boundary, where small
/// perturbations reorder its sequence. For [`Protocol::Obd`] a random corpus
/// is returned.
pub fn adversarial_corpus(protocol: Protocol) -> Vec<Quad> {
    let n = 24;
    match protocol {
        // two vertices share the minimum x
        Protocol::Clockwise => (0..n)
            .map(|k| {
                let k = k as f64;
                rect(50.0 + 30.0 * k, 40.0 + 20.0 * k, 120.0 + 15.0 * k, 60.0 + 7.0 * k)
            })
            .collect(),
        // vertical 2-4 diagonal
        Protocol::Dmpnet => (0..n)
            .map(|k| {
                let k = k as f64;
                let (x0, y0, w, h) = (40.0 + 10.0 * k, 60.0 + 10.0 * k, 160.0 + 10.0 * k, 100.0 + 6.0 * k);
                Quad::from_coords([x0, y0 + h / 2.0, x0 + w / 2.0, y0, x0 + w, y0 + h / 2.0, x0 + w / 2.0, y0 + h])
                    .expect("finite")
            })
            .collect(),
        // axis-aligned squares on a vertex: every vertex equidistant to two corners
        Protocol::Textboxes => (0..n)
            .map(|k| {
                let k = k as f64;
                rhombus(200.0 + 10.0 * k, 200.0 + 5.0 * k, 60.0 + 4.0 * k, 60.0 + 4.0 * k)
            })
            .collect(),
        // first vertex exactly on the positive x axis
        Protocol::Qrn => (0..n)
            .map(|k| {
                let k = k as f64;
                rhombus(300.0 + 10.0 * k, 300.0 - 5.0 * k, 100.0 + 5.0 * k, 60.0 + 3.0 * k)
            })
            .collect(),
        Protocol::Obd => random_corpus(n, 0),
    }
}

/// Two quads differing by at most one pixel in a single vertex whose
/// targets under `protocol` differ by at least half the quad diameter.
/// `None` for [`Protocol::Obd`], which has no such pair.
pub fn discontinuity_witness(protocol: Protocol) -> Option<(Quad, Quad)> {
    let pair = |a: [f64; 8], b: [f64; 8]| Some((Quad::from_coords(a).ok()?, Quad::from_coords(b).ok()?));
    match protocol {
        // bottom-left vertex moves one pixel left of the top-left one
        Protocol::Clockwise => pair(
            [0., 0., 200., 0., 200., 80., 0., 80.],
            [0., 0., 200., 0., 200., 80., -1., 80.],
        ),
        // bottom vertex on either side of the vertical 2-4 diagonal
        Protocol::Dmpnet => pair(
            [0., 50., 100., 0., 200., 50., 100.5, 100.],
            [0., 50., 100., 0., 200., 50., 99.5, 100.],
        ),
        // top vertex half a pixel left or right of the equidistant point
        Protocol::Textboxes => pair(
            [49.5, 0., 100., 50., 50., 100., 0., 50.],
            [50.5, 0., 100., 50., 50., 100., 0., 50.],
        ),
        // rightmost vertex half a pixel above or below the centre line
        Protocol::Qrn => pair(
            [250., 149.5, 150., 210., 50., 150., 150., 90.],
            [250., 150.5, 150., 210., 50., 150., 150., 90.],
        ),
        Protocol::Obd => None,
    }
}
