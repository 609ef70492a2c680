//! Duplicate suppression and removal of invalid reconstructions.

use serde::{Deserialize, Serialize};

use crate::codec::{decode, is_valid_matching, KeyEdges, MatchingType};
use crate::error::{Error, Result};
use crate::geom::{iou_with_areas, Rect};
use crate::rpp::{ScoreVector, ScoredDetection};

pub const DEFAULT_NMS_THRESHOLD: f64 = 0.3;
pub const DEFAULT_PNMS_THRESHOLD: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuppressionMode {
    /// Overlap of the circumscribed horizontal rectangles.
    AxisAligned,
    /// Exact quadrilateral overlap.
    Polygonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuppressionConfig {
    iou_threshold: f64,
    mode: SuppressionMode,
}

impl SuppressionConfig {
    pub fn new(mode: SuppressionMode, iou_threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&iou_threshold) {
            return Err(Error::InvalidArgument(format!(
                "suppression threshold {iou_threshold} outside [0, 1]"
            )));
        }
        Ok(Self { iou_threshold, mode })
    }

    pub fn polygonal() -> Self {
        Self {
            iou_threshold: DEFAULT_PNMS_THRESHOLD,
            mode: SuppressionMode::Polygonal,
        }
    }

    pub fn axis_aligned() -> Self {
        Self {
            iou_threshold: DEFAULT_NMS_THRESHOLD,
            mode: SuppressionMode::AxisAligned,
        }
    }

    pub fn iou_threshold(&self) -> f64 {
        self.iou_threshold
    }

    pub fn mode(&self) -> SuppressionMode {
        self.mode
    }
}

/// Input indices sorted by descending score, ties by index.
pub(crate) fn score_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Greedy suppression; returns the indices of kept detections in descending
/// score order.
pub fn suppress_indices(dets: &[ScoredDetection], cfg: &SuppressionConfig) -> Vec<usize> {
    let order = score_order(dets.iter().map(ScoredDetection::score));
    let rects: Vec<Rect> = dets.iter().map(|d| d.quad.bounding_rect()).collect();
    let areas: Vec<f64> = dets.iter().map(|d| d.quad.area()).collect();
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let overlaps = kept.iter().any(|&k| {
            if !rects[i].intersects(&rects[k]) {
                return false;
            }
            let o = match cfg.mode {
                SuppressionMode::AxisAligned => rects[i].iou(&rects[k]),
                SuppressionMode::Polygonal => iou_with_areas(&dets[i].quad, areas[i], &dets[k].quad, areas[k]),
            };
            o > cfg.iou_threshold
        });
        if !overlaps {
            kept.push(i);
        }
    }
    kept
}

/// Keeps a detection iff its overlap with every already kept, higher-scored
/// detection is at most the threshold. Output is sorted by score descending.
pub fn suppress(dets: &[ScoredDetection], cfg: &SuppressionConfig) -> Vec<ScoredDetection> {
    suppress_indices(dets, cfg)
        .into_iter()
        .map(|i| dets[i].clone())
        .collect()
}

/// A raw key-edge prediction before reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub key_edges: KeyEdges,
    pub matching: MatchingType,
    pub s_box: f64,
    pub ke_scores: Option<Vec<ScoreVector>>,
}

/// Decodes candidates and drops those whose matching type does not give a
/// simple quadrilateral. Order is preserved.
pub fn filter_valid(cands: &[Candidate]) -> Vec<ScoredDetection> {
    cands
        .iter()
        .filter(|c| is_valid_matching(&c.key_edges, c.matching))
        .map(|c| ScoredDetection {
            quad: decode(&c.key_edges, c.matching),
            s_box: c.s_box,
            ke_scores: c.ke_scores.clone(),
            fused: None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode;
    use crate::geom::{iou, rotate, Point, Quad};
    use proptest::prelude::*;

    fn det(c: [f64; 8], s: f64) -> ScoredDetection {
        ScoredDetection::new(Quad::from_coords(c).unwrap(), s)
    }

    /// Two 100x10 bars through the origin at +45 and -45 degrees.
    fn crossing_bars() -> (Quad, Quad) {
        let bar = Quad::from_coords([-50., -5., 50., -5., 50., 5., -50., 5.]).unwrap();
        let o = Point::new(0.0, 0.0);
        (
            rotate(&bar, o, std::f64::consts::FRAC_PI_4),
            rotate(&bar, o, -std::f64::consts::FRAC_PI_4),
        )
    }

    #[test]
    fn exact_duplicate_is_suppressed() {
        let a = det([0., 0., 4., 0., 4., 2., 0., 2.], 0.8);
        let b = det([0., 0., 4., 0., 4., 2., 0., 2.], 0.9);
        let kept = suppress(&[a, b.clone()], &SuppressionConfig::polygonal());
        assert_eq!(kept, vec![b]);
    }

    #[test]
    fn disjoint_boxes_survive_any_threshold() {
        let a = det([0., 0., 4., 0., 4., 2., 0., 2.], 0.8);
        let b = det([10., 10., 14., 10., 14., 12., 10., 12.], 0.9);
        for mode in [SuppressionMode::Polygonal, SuppressionMode::AxisAligned] {
            let cfg = SuppressionConfig::new(mode, 0.0).unwrap();
            assert_eq!(suppress(&[a.clone(), b.clone()], &cfg).len(), 2);
        }
    }

    #[test]
    fn crossing_bars_separate_polygonal_from_axis_aligned() {
        let (a, b) = crossing_bars();
        // 10x10 overlap square over a union of 1000 + 1000 - 100
        let poly = iou(&a, &b);
        assert!((poly - 100.0 / 1900.0).abs() < 1e-9, "{poly}");
        assert!(poly < 0.15);
        assert!(a.bounding_rect().iou(&b.bounding_rect()) > 0.3);

        let dets = [ScoredDetection::new(a, 0.9), ScoredDetection::new(b, 0.8)];
        assert_eq!(suppress(&dets, &SuppressionConfig::polygonal()).len(), 2);
        assert_eq!(suppress(&dets, &SuppressionConfig::axis_aligned()).len(), 1);
    }

    #[test]
    fn threshold_one_keeps_everything() {
        let a = det([0., 0., 4., 0., 4., 2., 0., 2.], 0.5);
        let cfg = SuppressionConfig::new(SuppressionMode::Polygonal, 1.0).unwrap();
        assert_eq!(suppress(&[a.clone(), a.clone(), a], &cfg).len(), 3);
        assert!(SuppressionConfig::new(SuppressionMode::Polygonal, 1.5).is_err());
    }

    #[test]
    fn ties_broken_by_input_index() {
        let a = det([0., 0., 4., 0., 4., 2., 0., 2.], 0.5);
        let mut b = a.clone();
        b.s_box = 0.5;
        b.fused = None;
        let out = suppress_indices(&[a, b], &SuppressionConfig::polygonal());
        assert_eq!(out, vec![0]);
    }

    #[test]
    fn greedy_kept_set_is_not_monotone_in_threshold() {
        // A-B IoU 1/4, B-C IoU 2/3, A-C IoU 1/9. At the low threshold B is
        // suppressed by A and cannot suppress C; at the high one B survives.
        let a = det([0., 0., 10., 0., 10., 10., 0., 10.], 0.9);
        let b = det([6., 0., 16., 0., 16., 10., 6., 10.], 0.8);
        let c = det([8., 0., 18., 0., 18., 10., 8., 10.], 0.7);
        let all = [a, b, c];
        let low = suppress_indices(&all, &SuppressionConfig::new(SuppressionMode::Polygonal, 0.2).unwrap());
        let high = suppress_indices(&all, &SuppressionConfig::new(SuppressionMode::Polygonal, 0.5).unwrap());
        assert_eq!(low, vec![0, 2]);
        assert_eq!(high, vec![0, 1]);
    }

    #[test]
    fn filter_valid_drops_invalid_matchings() {
        let (ke, mt) = encode(&Quad::from_coords([1., 2., 7., 0., 9., 5., 3., 8.]).unwrap()).unwrap();
        let rect = Quad::from_coords([0., 0., 4., 0., 4., 2., 0., 2.]).unwrap();
        let (rke, rmt) = encode(&rect).unwrap();
        let bad = MatchingType::from_id(0).unwrap();
        let cand = |key_edges, matching, s_box| Candidate {
            key_edges,
            matching,
            s_box,
            ke_scores: None,
        };
        let cands = vec![
            cand(ke, mt, 0.9),
            cand(rke, bad, 0.8),
            cand(rke, rmt, 0.7),
            cand(rke, bad, 0.6),
        ];
        let out = filter_valid(&cands);
        // brute-force oracle: survivors are exactly the valid entries, in order
        let expected: Vec<f64> = cands
            .iter()
            .filter(|c| {
                let q = decode(&c.key_edges, c.matching);
                q.is_simple() && q.area() > 0.0
            })
            .map(|c| c.s_box)
            .collect();
        assert_eq!(out.iter().map(|d| d.s_box).collect::<Vec<_>>(), expected);
        assert_eq!(expected, vec![0.9, 0.7]);
        assert_eq!(out[0].quad, decode(&ke, mt));
    }

    fn det_set() -> impl Strategy<Value = Vec<ScoredDetection>> {
        prop::collection::vec(
            (0.0..60.0f64, 0.0..60.0f64, 5.0..25.0f64, 5.0..25.0f64, -1.0..1.0f64, 0.0..1.0f64),
            0..25,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(x, y, w, h, th, s)| {
                    let r = Quad::from_coords([x, y, x + w, y, x + w, y + h, x, y + h]).unwrap();
                    ScoredDetection::new(rotate(&r, Point::new(x, y), th), s)
                })
                .collect()
        })
    }

    fn mode() -> impl Strategy<Value = SuppressionMode> {
        prop_oneof![Just(SuppressionMode::Polygonal), Just(SuppressionMode::AxisAligned)]
    }

    proptest! {
        #[test]
        fn suppression_is_idempotent(d in det_set(), m in mode(), t in 0.0..1.0f64) {
            let cfg = SuppressionConfig::new(m, t).unwrap();
            let once = suppress(&d, &cfg);
            prop_assert_eq!(suppress(&once, &cfg), once);
        }

        #[test]
        fn output_sorted_and_top_kept(d in det_set(), m in mode(), t in 0.0..1.0f64) {
            let cfg = SuppressionConfig::new(m, t).unwrap();
            let out = suppress(&d, &cfg);
            prop_assert!(out.windows(2).all(|w| w[0].score() >= w[1].score()));
            if let Some(top) = d.iter().map(|x| x.score()).reduce(f64::max) {
                prop_assert_eq!(out[0].score(), top);
            }
        }

        #[test]
        fn raising_threshold_never_shrinks_pairs(d in det_set(), m in mode(), t in 0.0..0.9f64, dt in 0.0..0.1f64) {
            let d = &d[..d.len().min(2)];
            let lo = suppress_indices(d, &SuppressionConfig::new(m, t).unwrap());
            let hi = suppress_indices(d, &SuppressionConfig::new(m, t + dt).unwrap());
            prop_assert!(lo.iter().all(|i| hi.contains(i)));
        }
    }
}
