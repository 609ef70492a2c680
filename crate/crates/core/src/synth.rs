//! Synthetic scenes standing in for detector output.
//!
//! Each image holds ground-truth text-line quads laid out on a grid of
//! 120 px cells, and detections derived from them: one jittered hit per
//! ground truth, plus optional duplicates, half-box shifted boxes and
//! negatives placed in empty cells. Every detection carries eight key-edge
//! score vectors. Hits, duplicates and shifted boxes get one sharp peak
//! at the bin of the true key edge; a configurable fraction of negatives get
//! two or three comparable peaks instead, the ambiguous pattern re-scoring
//! is meant to demote.
//!
//! Output depends only on the config, including the seed.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{GridSpec, KeyEdges, DEFAULT_GRID_M};
use crate::error::{Error, Result};
use crate::eval::GtInstance;
use crate::geom::{rotate, Point, Quad, Rect};
use crate::rpp::{ScoreVector, ScoredDetection};

const CELL: f64 = 120.0;
const PROPOSAL_PAD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Ground-truth quads over all images.
    pub n_quads: usize,
    pub images: usize,
    /// Uniform per-coordinate noise on hits, in pixels.
    pub jitter: f64,
    /// Probability that a ground truth gets an extra near-duplicate hit.
    pub duplicate_frac: f64,
    /// Probability that a ground truth gets an extra box shifted by half its width.
    pub shifted_frac: f64,
    /// Negatives per ground truth.
    pub negative_frac: f64,
    /// Probability that a negative is multi-peaked.
    pub multi_peak_frac: f64,
    pub grid_m: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_quads: 200,
            images: 10,
            jitter: 1.0,
            duplicate_frac: 0.2,
            shifted_frac: 0.1,
            negative_frac: 0.3,
            multi_peak_frac: 0.5,
            grid_m: DEFAULT_GRID_M,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Hits equal ground truth exactly and nothing else is generated.
    pub fn closed_loop(n_quads: usize, seed: u64) -> Self {
        Self {
            n_quads,
            jitter: 0.0,
            duplicate_frac: 0.0,
            shifted_frac: 0.0,
            negative_frac: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.images == 0 {
            return bad("images must be at least 1".into());
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return bad(format!("jitter {} must be a non-negative number", self.jitter));
        }
        for (name, v) in [
            ("duplicate_frac", self.duplicate_frac),
            ("shifted_frac", self.shifted_frac),
            ("multi_peak_frac", self.multi_peak_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(self.negative_frac.is_finite() && self.negative_frac >= 0.0) {
            return bad(format!("negative_frac {} must be non-negative", self.negative_frac));
        }
        if self.grid_m < 2 {
            return Err(Error::InvalidGrid(format!("m = {}, need at least 2 bins", self.grid_m)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetKind {
    Hit,
    Duplicate,
    Shifted,
    Negative,
    MultiPeakNegative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    pub key: String,
    pub gts: Vec<GtInstance>,
    pub dets: Vec<ScoredDetection>,
    /// Parallel to `dets`.
    pub kinds: Vec<DetKind>,
}

fn round_to(v: f64, scale: f64) -> f64 {
    (v * scale).round() / scale
}

fn round_quad(q: &Quad) -> Quad {
    Quad::from_coords(q.coords().map(|c| round_to(c, 100.0))).expect("finite")
}

/// The proposal window a detector would have regressed the key edges in:
/// the quad's bounding box padded by 10% per side.
pub fn proposal_window(q: &Quad) -> Rect {
    let r = q.bounding_rect();
    let (px, py) = (r.width().max(1.0) * PROPOSAL_PAD, r.height().max(1.0) * PROPOSAL_PAD);
    Rect::new(r.x_min - px, r.y_min - py, r.x_max + px, r.y_max + py)
}

/// Normalized mixture of Gaussian bumps over `m` bins plus a flat floor,
/// rounded to six decimals.
fn bumps(m: u32, peaks: &[(f64, f64, f64)]) -> ScoreVector {
    let raw: Vec<f64> = (0..m)
        .map(|i| {
            let i = i as f64;
            0.01 + peaks
                .iter()
                .map(|&(c, sigma, w)| w * (-(i - c).powi(2) / (2.0 * sigma * sigma)).exp())
                .sum::<f64>()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    ScoreVector::new(raw.iter().map(|v| round_to(v / total, 1e6)).collect()).expect("entries in [0, 1]")
}

fn score_vectors(q: &Quad, m: u32, multi_peak: bool, rng: &mut ChaCha8Rng) -> Vec<ScoreVector> {
    let grid = GridSpec::new(proposal_window(q), m).expect("padded window has area");
    let v = q.vertices();
    let ke = KeyEdges::new(v.map(|p| p.x), v.map(|p| p.y)).expect("finite");
    let positions: Vec<f64> = ke
        .xs
        .iter()
        .map(|&x| (x - grid.window().x_min) / grid.bin_width(crate::codec::Axis::X) - 0.5)
        .chain(ke.ys.iter().map(|&y| (y - grid.window().y_min) / grid.bin_width(crate::codec::Axis::Y) - 0.5))
        .collect();
    let top = m as f64 - 1.0;
    positions
        .into_iter()
        .map(|c| {
            let c = c.clamp(0.0, top);
            if !multi_peak {
                return bumps(m, &[(c, rng.gen_range(0.5..1.2), 1.0)]);
            }
            let n_peaks = rng.gen_range(2..=3);
            let mut centres = vec![c];
            let mut tries = 0;
            while centres.len() < n_peaks && tries < 100 {
                tries += 1;
                let cand = rng.gen_range(0.0..=top);
                if centres.iter().all(|&o| (o - cand).abs() >= 6.0) {
                    centres.push(cand);
                }
            }
            let peaks: Vec<_> = centres
                .into_iter()
                .map(|cc| (cc, rng.gen_range(0.5..1.0), rng.gen_range(0.7..1.0)))
                .collect();
            bumps(m, &peaks)
        })
        .collect()
}

/// Rectangle-ish text line centred in `cell` of a `cols`-wide grid.
fn text_line(cell: usize, cols: usize, rng: &mut ChaCha8Rng) -> Quad {
    let cx = (cell % cols) as f64 * CELL + CELL / 2.0 + rng.gen_range(-8.0..8.0);
    let cy = (cell / cols) as f64 * CELL + CELL / 2.0 + rng.gen_range(-8.0..8.0);
    let (w, h) = (rng.gen_range(40.0..90.0), rng.gen_range(15.0..40.0));
    let mut c = [
        cx - w / 2.0,
        cy - h / 2.0,
        cx + w / 2.0,
        cy - h / 2.0,
        cx + w / 2.0,
        cy + h / 2.0,
        cx - w / 2.0,
        cy + h / 2.0,
    ];
    // perspective-like corner noise on about a third of the lines
    if rng.gen_bool(0.3) {
        for v in &mut c {
            *v += rng.gen_range(-4.0..4.0);
        }
    }
    let q = Quad::from_coords(c).expect("finite");
    round_quad(&rotate(&q, Point::new(cx, cy), rng.gen_range(-40.0..40.0) * PI / 180.0))
}

fn jittered(q: &Quad, px: f64, rng: &mut ChaCha8Rng) -> Quad {
    if px == 0.0 {
        return *q;
    }
    round_quad(&Quad::from_coords(q.coords().map(|c| c + rng.gen_range(-px..=px))).expect("finite"))
}

/// Moves `q` along its first edge by 45-60% of that edge's length.
fn shifted(q: &Quad, rng: &mut ChaCha8Rng) -> Quad {
    let v = q.vertices();
    let e = v[1].sub(v[0]);
    let f = rng.gen_range(0.45..0.6) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    round_quad(&q.translated(e.x * f, e.y * f))
}

fn synth_image(cfg: &SynthConfig, index: usize, n_gt: usize) -> SynthImage {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let n_neg = (n_gt as f64 * cfg.negative_frac).round() as usize;
    let cols = ((n_gt + n_neg) as f64).sqrt().ceil().max(1.0) as usize;
    let m = cfg.grid_m;

    let gts: Vec<GtInstance> = (0..n_gt).map(|c| GtInstance::care(text_line(c, cols, &mut rng))).collect();
    let mut dets = Vec::new();
    let mut kinds = Vec::new();
    let mut push = |q: Quad, s_box: f64, kind: DetKind, rng: &mut ChaCha8Rng| {
        let vecs = score_vectors(&q, m, kind == DetKind::MultiPeakNegative, rng);
        dets.push(ScoredDetection::new(q, round_to(s_box, 1e6)).with_ke_scores(vecs));
        kinds.push(kind);
    };
    for g in &gts {
        let q = jittered(&g.quad, cfg.jitter, &mut rng);
        let s = rng.gen_range(0.6..0.98);
        push(q, s, DetKind::Hit, &mut rng);
        if rng.gen_bool(cfg.duplicate_frac) {
            let q = jittered(&g.quad, cfg.jitter + 2.0, &mut rng);
            let s = rng.gen_range(0.3..0.8);
            push(q, s, DetKind::Duplicate, &mut rng);
        }
        if rng.gen_bool(cfg.shifted_frac) {
            let q = shifted(&g.quad, &mut rng);
            let s = rng.gen_range(0.3..0.8);
            push(q, s, DetKind::Shifted, &mut rng);
        }
    }
    for c in n_gt..n_gt + n_neg {
        let q = text_line(c, cols, &mut rng);
        let kind = if rng.gen_bool(cfg.multi_peak_frac) {
            DetKind::MultiPeakNegative
        } else {
            DetKind::Negative
        };
        let s = rng.gen_range(0.55..0.95);
        push(q, s, kind, &mut rng);
    }
    SynthImage {
        key: format!("img_{:04}", index + 1),
        gts,
        dets,
        kinds,
    }
}

/// Generates `cfg.images` scenes sharing `cfg.n_quads` ground truths as
/// evenly as possible.
pub fn synth_scene(cfg: &SynthConfig) -> Result<Vec<SynthImage>> {
    cfg.validate()?;
    let per = cfg.n_quads / cfg.images;
    let extra = cfg.n_quads % cfg.images;
    Ok((0..cfg.images)
        .map(|k| synth_image(cfg, k, per + usize::from(k < extra)))
        .collect())
}
