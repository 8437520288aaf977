//! Proximity matching of predicted and ground-truth points, precision /
//! recall / F1, and average precision over a confidence sweep.
//!
//! A prediction with no ground truth within the match radius is a false
//! positive. A ground-truth point is detected when any prediction lies within
//! the radius; among those predictions, only the highest-confidence one is a
//! true positive for it and the rest are ignored (neither TP nor FP). A
//! prediction that wins several ground-truth points counts once.
//! Horizontal distances wrap around the panorama seam.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::heatmap::PointLabel;
use crate::projection::wrapped_distance;

pub const MATCH_RADIUS_PX: f64 = 88.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// The proximity rule described in the module docs.
    #[default]
    Proximity,
    /// Each ground-truth point absorbs at most one prediction and each
    /// prediction at most one ground-truth point; predictions are taken by
    /// descending confidence and matched to the nearest free point in range.
    OneToOne,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    pub true_positives: Vec<PointLabel>,
    pub false_positives: Vec<PointLabel>,
    /// Lower-ranked predictions near ground truth already claimed by a
    /// better prediction.
    pub ignored: Vec<PointLabel>,
    pub detected: Vec<PointLabel>,
    pub missed: Vec<PointLabel>,
}

impl MatchResult {
    pub fn counts(&self) -> MatchCounts {
        MatchCounts {
            tp: self.true_positives.len(),
            fp: self.false_positives.len(),
            ignored: self.ignored.len(),
            detected: self.detected.len(),
            missed: self.missed.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub ignored: usize,
    pub detected: usize,
    pub missed: usize,
}

impl core::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.ignored += o.ignored;
        self.detected += o.detected;
        self.missed += o.missed;
    }
}

impl core::ops::SubAssign for MatchCounts {
    fn sub_assign(&mut self, o: Self) {
        self.tp -= o.tp;
        self.fp -= o.fp;
        self.ignored -= o.ignored;
        self.detected -= o.detected;
        self.missed -= o.missed;
    }
}

/// Ranking of predictions: confidence descending, then smaller `(y, x)`.
fn rank(a: &PointLabel, b: &PointLabel) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.y.total_cmp(&b.y))
        .then(a.x.total_cmp(&b.x))
}

/// Matches one panorama's predictions against its ground truth.
pub fn match_pano(preds: &[PointLabel], gts: &[PointLabel], radius_px: f64, width: u32, mode: MatchMode) -> MatchResult {
    let within = |p: &PointLabel, g: &PointLabel| wrapped_distance(p.x, p.y, g.x, g.y, width) <= radius_px;
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| rank(&preds[a], &preds[b]).then(a.cmp(&b)));

    let mut is_tp = alloc::vec![false; preds.len()];
    let mut near_gt = alloc::vec![false; preds.len()];
    let mut gt_hit = alloc::vec![false; gts.len()];
    match mode {
        MatchMode::Proximity => {
            for (gi, g) in gts.iter().enumerate() {
                // first in rank order wins
                if let Some(&w) = order.iter().find(|&&pi| within(&preds[pi], g)) {
                    is_tp[w] = true;
                    gt_hit[gi] = true;
                }
            }
            for (pi, p) in preds.iter().enumerate() {
                near_gt[pi] = gts.iter().any(|g| within(p, g));
            }
        }
        MatchMode::OneToOne => {
            for &pi in &order {
                let p = &preds[pi];
                let best = gts
                    .iter()
                    .enumerate()
                    .filter(|(gi, g)| !gt_hit[*gi] && within(p, g))
                    .min_by(|(ia, a), (ib, b)| {
                        wrapped_distance(p.x, p.y, a.x, a.y, width)
                            .total_cmp(&wrapped_distance(p.x, p.y, b.x, b.y, width))
                            .then(ia.cmp(ib))
                    })
                    .map(|(gi, _)| gi);
                if let Some(gi) = best {
                    gt_hit[gi] = true;
                    is_tp[pi] = true;
                }
            }
        }
    }

    let mut r = MatchResult::default();
    for (pi, p) in preds.iter().enumerate() {
        if is_tp[pi] {
            r.true_positives.push(p.clone());
        } else if near_gt[pi] {
            r.ignored.push(p.clone());
        } else {
            r.false_positives.push(p.clone());
        }
    }
    for (gi, g) in gts.iter().enumerate() {
        if gt_hit[gi] {
            r.detected.push(g.clone());
        } else {
            r.missed.push(g.clone());
        }
    }
    r
}

/// Precision, recall and F1. A metric whose denominator is empty is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn prf_from_counts(c: MatchCounts) -> Prf {
    let precision = (c.tp + c.fp > 0).then(|| c.tp as f64 / (c.tp + c.fp) as f64);
    let gt = c.detected + c.missed;
    let recall = (gt > 0).then(|| c.detected as f64 / gt as f64);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => Some(f_score(p, r)),
        _ => None,
    };
    Prf { precision, recall, f1 }
}

pub fn prf(results: &[MatchResult]) -> Prf {
    let mut total = MatchCounts::default();
    for r in results {
        total += r.counts();
    }
    prf_from_counts(total)
}

/// One panorama's predictions and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPano {
    pub pano_id: String,
    pub width: u32,
    pub preds: Vec<PointLabel>,
    pub gts: Vec<PointLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    /// `None` when there is no ground truth.
    pub recall: Option<f64>,
}

/// Precision and recall at every distinct prediction confidence, highest
/// threshold first, plus the area under its monotone envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    /// `None` when there is no ground truth.
    pub ap: Option<f64>,
}

/// Sweeps every distinct confidence over the global prediction pool,
/// re-matching only the panoramas whose retained set changed.
pub fn average_precision(panos: &[EvalPano], radius_px: f64, mode: MatchMode) -> PrCurve {
    let total_gt: usize = panos.iter().map(|p| p.gts.len()).sum();
    let sorted: Vec<Vec<PointLabel>> = panos
        .iter()
        .map(|p| {
            let mut v = p.preds.clone();
            v.sort_by(rank);
            v
        })
        .collect();
    let mut pool: Vec<(f64, usize)> = sorted
        .iter()
        .enumerate()
        .flat_map(|(pi, v)| v.iter().map(move |l| (l.confidence, pi)))
        .collect();
    pool.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut retained = alloc::vec![0usize; panos.len()];
    let mut current: Vec<MatchCounts> = panos
        .iter()
        .map(|p| MatchCounts {
            missed: p.gts.len(),
            ..Default::default()
        })
        .collect();
    let mut total = MatchCounts {
        missed: total_gt,
        ..Default::default()
    };

    let mut points = Vec::new();
    let mut i = 0;
    while i < pool.len() {
        let t = pool[i].0;
        let mut touched = Vec::new();
        while i < pool.len() && pool[i].0 == t {
            retained[pool[i].1] += 1;
            touched.push(pool[i].1);
            i += 1;
        }
        touched.dedup();
        for pi in touched {
            let p = &panos[pi];
            let c = match_pano(&sorted[pi][..retained[pi]], &p.gts, radius_px, p.width, mode).counts();
            total -= current[pi];
            total += c;
            current[pi] = c;
        }
        let m = prf_from_counts(total);
        points.push(PrPoint {
            threshold: t,
            precision: m.precision.unwrap_or(0.0),
            recall: m.recall,
        });
    }
    let ap = (total_gt > 0).then(|| envelope_area(&points));
    PrCurve { points, ap }
}

/// All-points area under the monotone precision envelope; `points` must be
/// in descending threshold order.
fn envelope_area(points: &[PrPoint]) -> f64 {
    let mut env = alloc::vec![0.0; points.len()];
    let mut best: f64 = 0.0;
    for (k, p) in points.iter().enumerate().rev() {
        best = best.max(p.precision);
        env[k] = best;
    }
    let mut prev_r = 0.0;
    let mut ap = 0.0;
    for (p, e) in points.iter().zip(env) {
        let r = p.recall.unwrap_or(0.0);
        ap += (r - prev_r) * e;
        prev_r = r;
    }
    ap
}

/// Per-panorama matches at an operating threshold, the totals, and the
/// full PR curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub results: Vec<(String, MatchResult)>,
    pub counts: MatchCounts,
    pub prf: Prf,
    pub curve: PrCurve,
    pub operating_threshold: f64,
}

pub fn evaluate(panos: &[EvalPano], radius_px: f64, mode: MatchMode, operating_threshold: f64) -> Evaluation {
    let mut counts = MatchCounts::default();
    let results: Vec<(String, MatchResult)> = panos
        .iter()
        .map(|p| {
            let kept: Vec<PointLabel> = p
                .preds
                .iter()
                .filter(|l| l.confidence >= operating_threshold)
                .cloned()
                .collect();
            let r = match_pano(&kept, &p.gts, radius_px, p.width, mode);
            counts += r.counts();
            (p.pano_id.clone(), r)
        })
        .collect();
    Evaluation {
        results,
        counts,
        prf: prf_from_counts(counts),
        curve: average_precision(panos, radius_px, mode),
        operating_threshold,
    }
}
