//! ICDAR-style detection evaluation.
//!
//! Detections are matched one-to-one to ground truth by polygon IoU in
//! descending score order. Because the match of a detection only depends on
//! higher-scored detections, a single matching pass per image yields the
//! tallies for every confidence cutoff; [`sweep_thresholds`] then reads off
//! precision, recall and Hmean at each distinct score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{intersection_area, iou, Quad};
use crate::postproc::score_order;
use crate::rpp::ScoredDetection;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    pub quad: Quad,
    /// "Do not care" region: matches to it count neither way.
    pub ignore: bool,
}

impl GtInstance {
    pub fn care(quad: Quad) -> Self {
        Self { quad, ignore: false }
    }

    pub fn ignored(quad: Quad) -> Self {
        Self { quad, ignore: true }
    }
}

/// How overlap with a "do not care" region is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IgnoreRule {
    #[default]
    Iou,
    /// Intersection area over detection area, the upstream ICDAR15 rule.
    IntersectionOverDetection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub iou_threshold: f64,
    pub ignore_rule: IgnoreRule,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            ignore_rule: IgnoreRule::Iou,
        }
    }
}

impl MatchConfig {
    pub fn new(iou_threshold: f64, ignore_rule: IgnoreRule) -> Result<Self> {
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!("IoU threshold {iou_threshold} outside (0, 1]")));
        }
        Ok(Self {
            iou_threshold,
            ignore_rule,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Outcome {
    TruePositive { gt: usize },
    FalsePositive,
    /// Absorbed by a "do not care" region.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetRecord {
    /// Position in the caller's detection list.
    pub index: usize,
    pub score: f64,
    pub outcome: Outcome,
}

/// Matching result of one image, records in descending score order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImageTally {
    pub care_gts: usize,
    pub records: Vec<DetRecord>,
}

impl ImageTally {
    pub fn true_positives(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.outcome, Outcome::TruePositive { .. }))
            .count()
    }

    pub fn false_positives(&self) -> usize {
        self.records.iter().filter(|r| r.outcome == Outcome::FalsePositive).count()
    }
}

/// Greedy one-to-one matching of one image.
///
/// Detections are visited by descending score (ties by index). Each one
/// takes the unmatched care GT of highest IoU if that IoU reaches the
/// threshold. A detection whose best overlap is with an ignored GT, and
/// reaches the threshold, is `Ignored` instead.
pub fn match_image(dets: &[ScoredDetection], gts: &[GtInstance], cfg: &MatchConfig) -> ImageTally {
    let thr = cfg.iou_threshold;
    let mut taken = vec![false; gts.len()];
    let mut records = Vec::with_capacity(dets.len());
    for i in score_order(dets.iter().map(ScoredDetection::score)) {
        let d = &dets[i].quad;
        let mut best_care: Option<(usize, f64)> = None;
        let mut best_ignored = 0.0f64;
        for (g, gt) in gts.iter().enumerate() {
            if gt.ignore {
                let o = match cfg.ignore_rule {
                    IgnoreRule::Iou => iou(d, &gt.quad),
                    IgnoreRule::IntersectionOverDetection => {
                        let a = d.area();
                        if a > 0.0 {
                            intersection_area(d, &gt.quad) / a
                        } else {
                            0.0
                        }
                    }
                };
                best_ignored = best_ignored.max(o);
            } else if !taken[g] {
                let o = iou(d, &gt.quad);
                if best_care.is_none_or(|(_, b)| o > b) {
                    best_care = Some((g, o));
                }
            }
        }
        let care = best_care.filter(|&(_, o)| o >= thr);
        let outcome = if best_ignored >= thr && care.is_none_or(|(_, o)| best_ignored > o) {
            Outcome::Ignored
        } else if let Some((g, _)) = care {
            taken[g] = true;
            Outcome::TruePositive { gt: g }
        } else {
            Outcome::FalsePositive
        };
        records.push(DetRecord {
            index: i,
            score: dets[i].score(),
            outcome,
        });
    }
    ImageTally {
        care_gts: gts.iter().filter(|g| !g.ignore).count(),
        records,
    }
}

/// `2PR / (P + R)`, zero when both are zero.
pub fn hmean(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub recall: f64,
    pub precision: f64,
    pub hmean: f64,
    pub best_threshold: f64,
    pub matches: usize,
    pub detections: usize,
    pub gts: usize,
}

impl EvalResult {
    fn from_counts(threshold: f64, matches: usize, detections: usize, gts: usize) -> Self {
        let recall = if gts > 0 { matches as f64 / gts as f64 } else { 0.0 };
        let precision = if detections > 0 {
            matches as f64 / detections as f64
        } else {
            0.0
        };
        Self {
            recall,
            precision,
            hmean: hmean(precision, recall),
            best_threshold: threshold,
            matches,
            detections,
            gts,
        }
    }
}

/// P/R/H keeping only detections scored at or above `cutoff`. Ignored
/// detections are not counted.
pub fn evaluate_at(tallies: &[ImageTally], cutoff: f64) -> EvalResult {
    let gts = tallies.iter().map(|t| t.care_gts).sum();
    let (mut tp, mut dets) = (0, 0);
    for r in tallies.iter().flat_map(|t| &t.records).filter(|r| r.score >= cutoff) {
        match r.outcome {
            Outcome::TruePositive { .. } => {
                tp += 1;
                dets += 1;
            }
            Outcome::FalsePositive => dets += 1,
            Outcome::Ignored => {}
        }
    }
    EvalResult::from_counts(cutoff, tp, dets, gts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub best: EvalResult,
    /// One point per distinct score, descending cutoff.
    pub curve: Vec<EvalResult>,
}

/// Evaluates every distinct score as a cutoff and returns the best Hmean
/// point (ties: the highest cutoff) with the full curve. Without any
/// detections the best point is all zeros at cutoff 1.
pub fn sweep_thresholds(tallies: &[ImageTally]) -> Sweep {
    let gts: usize = tallies.iter().map(|t| t.care_gts).sum();
    let mut recs: Vec<&DetRecord> = tallies.iter().flat_map(|t| &t.records).collect();
    recs.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut curve = Vec::new();
    let (mut tp, mut dets) = (0, 0);
    let mut i = 0;
    while i < recs.len() {
        let cutoff = recs[i].score;
        while i < recs.len() && recs[i].score == cutoff {
            match recs[i].outcome {
                Outcome::TruePositive { .. } => {
                    tp += 1;
                    dets += 1;
                }
                Outcome::FalsePositive => dets += 1,
                Outcome::Ignored => {}
            }
            i += 1;
        }
        curve.push(EvalResult::from_counts(cutoff, tp, dets, gts));
    }
    let best = curve
        .iter()
        .copied()
        .reduce(|b, p| if p.hmean > b.hmean { p } else { b })
        .unwrap_or_else(|| EvalResult::from_counts(1.0, 0, 0, gts));
    Sweep { best, curve }
}

/// Matches every image in parallel; output order follows the input.
pub fn match_dataset(images: &[(Vec<GtInstance>, Vec<ScoredDetection>)], cfg: &MatchConfig) -> Vec<ImageTally> {
    images
        .par_iter()
        .map(|(gts, dets)| match_image(dets, gts, cfg))
        .collect()
}
