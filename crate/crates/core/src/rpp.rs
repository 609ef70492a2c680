//! Re-scoring from key-edge score vectors.
//!
//! Each of the eight key edges comes with a discrete distribution over grid
//! positions. A detection whose key edges are sharply localized gets a high
//! key-edge score; one whose distributions split their mass over several
//! peaks gets a low one. The key-edge score is blended with the classifier
//! score by [`fuse`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Quad;

/// Number of key edges per detection.
pub const KEY_EDGE_COUNT: usize = 8;
/// Neighbours summed on each side of the peak.
pub const PEAK_HALF_WIDTH: usize = 2;
pub const DEFAULT_GAMMA: f64 = 1.4;
pub const DEFAULT_PROMINENCE: f64 = 0.5;

/// Scores of one key edge over the grid positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreVector(Vec<f64>);

impl TryFrom<Vec<f64>> for ScoreVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScoreVector::new(v)
    }
}

impl From<ScoreVector> for Vec<f64> {
    fn from(v: ScoreVector) -> Self {
        v.0
    }
}

impl ScoreVector {
    /// Entries must lie in `[0, 1]`. Normalization is not enforced.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyScoreVector);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::ScoreOutOfRange { index, value });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn peak_mass(&self) -> f64 {
        peak_window(&self.0).expect("non-empty by construction").mass
    }

    pub fn peak_pattern(&self, prominence: f64) -> PeakPattern {
        peak_pattern(&self.0, prominence)
    }
}

/// The summation window chosen around a peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakWindow {
    pub peak: usize,
    /// Inclusive range of summed indices, clipped to the vector.
    pub start: usize,
    pub end: usize,
    pub mass: f64,
}

fn window_at(v: &[f64], i: usize) -> PeakWindow {
    let start = i.saturating_sub(PEAK_HALF_WIDTH);
    let end = (i + PEAK_HALF_WIDTH).min(v.len() - 1);
    PeakWindow {
        peak: i,
        start,
        end,
        mass: v[start..=end].iter().sum(),
    }
}

/// Sum of the peak entry and up to two neighbours on each side.
///
/// Neighbours beyond the head or tail are simply missing. When the maximum
/// value occurs more than once, the occurrence whose window holds the most
/// mass is used (lowest index among equals).
pub fn peak_window(v: &[f64]) -> Result<PeakWindow> {
    if v.is_empty() {
        return Err(Error::EmptyScoreVector);
    }
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<PeakWindow> = None;
    for (i, _) in v.iter().enumerate().filter(|(_, &x)| x == top) {
        let w = window_at(v, i);
        if best.is_none_or(|b| w.mass > b.mass) {
            best = Some(w);
        }
    }
    Ok(best.expect("at least one maximum"))
}

pub fn peak_mass(v: &[f64]) -> Result<f64> {
    peak_window(v).map(|w| w.mass)
}

/// Mean peak mass over the eight key-edge vectors, clamped to `[0, 1]`.
pub fn s_obd(ke_scores: &[ScoreVector]) -> Result<f64> {
    if ke_scores.len() != KEY_EDGE_COUNT {
        return Err(Error::WrongVectorCount(ke_scores.len()));
    }
    let total: f64 = ke_scores.iter().map(ScoreVector::peak_mass).sum();
    Ok((total / KEY_EDGE_COUNT as f64).clamp(0.0, 1.0))
}

/// `((2 - gamma) * s_box + gamma * s_obd) / 2`, clamped to `[0, 1]`.
pub fn fuse(s_box: f64, s_obd: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&gamma) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    if !s_box.is_finite() || !s_obd.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok((((2.0 - gamma) * s_box + gamma * s_obd) / 2.0).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeakPattern {
    OnePeak,
    MultiPeak,
}

/// Indices of local maxima. A plateau counts once, at its first index.
pub fn local_maxima(v: &[f64]) -> Vec<usize> {
    let n = v.len();
    (0..n)
        .filter(|&i| {
            let left_ok = i == 0 || v[i] > v[i - 1];
            let right_ok = i + 1 == n || v[i] >= v[i + 1];
            left_ok && right_ok && v[i] > 0.0
        })
        .collect()
}

/// `MultiPeak` iff at least two local maxima reach `prominence * max(v)`.
pub fn peak_pattern(v: &[f64], prominence: f64) -> PeakPattern {
    let top = v.iter().copied().fold(0.0, f64::max);
    let strong = local_maxima(v)
        .into_iter()
        .filter(|&i| v[i] >= prominence * top)
        .count();
    if strong >= 2 {
        PeakPattern::MultiPeak
    } else {
        PeakPattern::OnePeak
    }
}

/// A detection with its classifier score and optional key-edge evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDetection {
    pub quad: Quad,
    pub s_box: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ke_scores: Option<Vec<ScoreVector>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused: Option<f64>,
}

impl ScoredDetection {
    pub fn new(quad: Quad, s_box: f64) -> Self {
        Self {
            quad,
            s_box,
            ke_scores: None,
            fused: None,
        }
    }

    pub fn with_ke_scores(mut self, ke_scores: Vec<ScoreVector>) -> Self {
        self.ke_scores = Some(ke_scores);
        self
    }

    /// Ranking score: the fused score when present, else the classifier score.
    pub fn score(&self) -> f64 {
        self.fused.unwrap_or(self.s_box)
    }

    pub fn s_obd(&self) -> Option<Result<f64>> {
        self.ke_scores.as_deref().map(s_obd)
    }

    /// Sets `fused` from the key-edge vectors. Detections without vectors
    /// are left untouched.
    pub fn rescore(&mut self, gamma: f64) -> Result<()> {
        if let Some(s) = self.s_obd() {
            self.fused = Some(fuse(self.s_box, s?, gamma)?);
        } else if !(0.0..=2.0).contains(&gamma) {
            return Err(Error::GammaOutOfRange(gamma));
        }
        Ok(())
    }

    /// `MultiPeak` if any key-edge vector is multi-peaked.
    pub fn peak_pattern(&self, prominence: f64) -> Option<PeakPattern> {
        let vs = self.ke_scores.as_ref()?;
        Some(
            if vs.iter().any(|v| v.peak_pattern(prominence) == PeakPattern::MultiPeak) {
                PeakPattern::MultiPeak
            } else {
                PeakPattern::OnePeak
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_hot(n: usize, at: usize) -> ScoreVector {
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        ScoreVector::new(v).unwrap()
    }

    fn uniform(n: usize) -> ScoreVector {
        ScoreVector::new(vec![1.0 / n as f64; n]).unwrap()
    }

    /// Window sum written out directly from the definition.
    fn oracle_window_sum(v: &[f64], i: usize) -> f64 {
        let mut s = 0.0;
        for (p, x) in v.iter().enumerate() {
            if p + 2 >= i && p <= i + 2 {
                s += x;
            }
        }
        s
    }

    #[test]
    fn peak_mass_examples() {
        assert!((peak_mass(&[0.0, 0.1, 0.6, 0.2, 0.1, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        let head = peak_window(&[0.9, 0.1, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!((head.start, head.end), (0, 2));
        assert_eq!(head.mass, 1.0);
        let tail = peak_window(&[0.0, 0.0, 0.0, 0.1, 0.9]).unwrap();
        assert_eq!((tail.start, tail.end), (2, 4));
        assert_eq!(one_hot(56, 30).peak_mass(), 1.0);
        assert!(matches!(peak_mass(&[]), Err(Error::EmptyScoreVector)));
        assert!(ScoreVector::new(vec![]).is_err());
        assert!(ScoreVector::new(vec![0.5, 1.5]).is_err());
    }

    #[test]
    fn s_obd_examples() {
        let hot: Vec<_> = (0..8).map(|k| one_hot(56, k * 7)).collect();
        assert_eq!(s_obd(&hot).unwrap(), 1.0);

        let flat: Vec<_> = (0..8).map(|_| uniform(56)).collect();
        assert!((s_obd(&flat).unwrap() - 5.0 / 56.0).abs() < 1e-12);

        let mixed: Vec<_> = (0..8).map(|k| if k < 4 { one_hot(56, 10) } else { uniform(56) }).collect();
        let want = (4.0 + 4.0 * 5.0 / 56.0) / 8.0;
        assert!((s_obd(&mixed).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.5446).abs() < 1e-4);

        assert!(matches!(s_obd(&hot[..7]), Err(Error::WrongVectorCount(7))));
    }

    #[test]
    fn fuse_examples() {
        assert!((fuse(1.0, 0.5, 1.4).unwrap() - 0.65).abs() < 1e-12);
        assert_eq!(fuse(0.37, 0.91, 0.0).unwrap(), 0.37);
        assert_eq!(fuse(0.37, 0.91, 2.0).unwrap(), 0.91);
        assert!(matches!(fuse(0.5, 0.5, 2.1), Err(Error::GammaOutOfRange(_))));
        assert!(fuse(0.5, 0.5, -0.1).is_err());
    }

    #[test]
    fn peak_pattern_examples() {
        assert_eq!(peak_pattern(one_hot(10, 4).values(), 0.5), PeakPattern::OnePeak);
        assert_eq!(peak_pattern(&[0.4, 0.0, 0.4, 0.0, 0.2], 0.5), PeakPattern::MultiPeak);
        let inc: Vec<f64> = (0..10).map(|i| i as f64 / 45.0).collect();
        assert_eq!(peak_pattern(&inc, 0.5), PeakPattern::OnePeak);
        assert_eq!(peak_pattern(uniform(56).values(), 0.5), PeakPattern::OnePeak);
        // second bump below the prominence cut
        assert_eq!(peak_pattern(&[0.0, 0.8, 0.0, 0.0, 0.2, 0.0], 0.5), PeakPattern::OnePeak);
    }

    #[test]
    fn rescore_keeps_box_score_without_vectors() {
        let q = Quad::from_coords([0., 0., 1., 0., 1., 1., 0., 1.]).unwrap();
        let mut d = ScoredDetection::new(q, 0.7);
        d.rescore(1.4).unwrap();
        assert_eq!(d.fused, None);
        assert_eq!(d.score(), 0.7);
        let mut d = d.with_ke_scores((0..8).map(|_| one_hot(8, 3)).collect());
        d.rescore(1.4).unwrap();
        assert!((d.score() - (0.6 * 0.7 + 1.4) / 2.0).abs() < 1e-12);
    }

    fn normalized(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0..1.0f64, n).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>().max(1e-9);
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn fuse_is_monotone(a in 0.0..1.0f64, b in 0.0..1.0f64, d in 0.0..0.5f64, g in 0.0..=2.0f64) {
            let base = fuse(a, b, g).unwrap();
            prop_assert!(fuse((a + d).min(1.0), b, g).unwrap() >= base);
            prop_assert!(fuse(a, (b + d).min(1.0), g).unwrap() >= base);
        }

        #[test]
        fn fuse_fixed_point(s in 0.0..=1.0f64, g in 0.0..=2.0f64) {
            prop_assert!((fuse(s, s, g).unwrap() - s).abs() < 1e-12);
        }

        #[test]
        fn peak_mass_bounded_by_total(v in normalized(20)) {
            let w = peak_window(&v).unwrap();
            let total: f64 = v.iter().sum();
            prop_assert!(w.mass <= total + 1e-12);
            let outside: f64 = v.iter().enumerate()
                .filter(|(i, _)| *i < w.start || *i > w.end).map(|(_, x)| x).sum();
            if outside == 0.0 {
                prop_assert!((total - w.mass).abs() < 1e-12);
            } else if outside > 1e-9 {
                prop_assert!(w.mass < total);
            }
            prop_assert!((w.mass - oracle_window_sum(&v, w.peak)).abs() < 1e-12);
        }

        #[test]
        fn splitting_a_peak_lowers_mass(n in 12usize..60, at in 0usize..60, gap in 5usize..30, frac in 0.05..0.95f64) {
            let at = at % n;
            let other = (at + gap) % n;
            prop_assume!(at.abs_diff(other) > 4);
            let mut split = vec![0.0; n];
            split[at] = frac;
            split[other] = 1.0 - frac;
            prop_assert!(peak_mass(&split).unwrap() < one_hot(n, at).peak_mass());
        }

        #[test]
        fn s_obd_permutation_invariant(vs in prop::collection::vec(normalized(16), 8), rot in 0usize..8) {
            let vs: Vec<ScoreVector> = vs.into_iter().map(|v| ScoreVector::new(v).unwrap()).collect();
            let mut shuffled = vs.clone();
            shuffled.rotate_left(rot);
            shuffled.reverse();
            prop_assert!((s_obd(&vs).unwrap() - s_obd(&shuffled).unwrap()).abs() < 1e-12);
        }
    }
}
