//! The crop localizer boundary and the reduction of per-crop detections into
//! one labeled panorama.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geo::PanoMeta;
use crate::heatmap::{LabelSource, PointLabel};
use crate::projection::{crop_point_to_pano, wrapped_distance, CropImage, CropSpec};
use crate::synth::MarkerPalette;
use crate::{Error, Result};

/// Labels from different crops closer than this (pano px) are merged.
pub const DEDUP_RADIUS_PX: f64 = 44.0;

/// A detection in crop coordinates: `u` is the column within the retained
/// band, `v` the row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropPoint {
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

/// Finds curb-ramp points in a crop.
///
/// Implementations must be deterministic for identical pixels. An empty
/// result is a normal outcome; `Err` marks the crop as failed.
pub trait CropLocalizer: Sync {
    fn locate(&self, crop: &CropImage) -> core::result::Result<Vec<CropPoint>, String>;
}

impl<L: CropLocalizer + ?Sized> CropLocalizer for &L {
    fn locate(&self, crop: &CropImage) -> core::result::Result<Vec<CropPoint>, String> {
        (**self).locate(crop)
    }
}

/// Runs `loc` on `crop`, validates its output and orders it by descending
/// confidence, then `(v, u)`.
pub fn localize<L: CropLocalizer + ?Sized>(loc: &L, crop: &CropImage) -> Result<Vec<CropPoint>> {
    let (bw, sq) = (crop.spec.band_width(), crop.spec.square_px);
    if (crop.image.width(), crop.image.height()) != (bw, sq) {
        return Err(Error::Localizer(alloc::format!(
            "crop is {}x{}, expected {bw}x{sq}",
            crop.image.width(),
            crop.image.height()
        )));
    }
    let mut pts = loc.locate(crop).map_err(Error::Localizer)?;
    for p in &pts {
        let inside = p.u >= 0.0 && p.u < bw as f64 && p.v >= 0.0 && p.v < sq as f64;
        if !inside || !(p.confidence > 0.0 && p.confidence <= 1.0) {
            return Err(Error::Localizer(alloc::format!(
                "point ({}, {}) confidence {} is out of range",
                p.u,
                p.v,
                p.confidence
            )));
        }
    }
    pts.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.v.total_cmp(&b.v))
            .then(a.u.total_cmp(&b.u))
    });
    Ok(pts)
}

/// Detects synthetic fiducial markers by exact palette color and reports the
/// centroid of each with confidence 1.0.
///
/// Markers that touch the crop border, or cover fewer than `min_pixels`
/// exact-color pixels, are skipped: their centroid would be biased.
#[derive(Debug, Clone, Copy)]
pub struct MarkerOracleLocalizer {
    pub min_pixels: usize,
}

impl Default for MarkerOracleLocalizer {
    fn default() -> Self {
        Self { min_pixels: 4 }
    }
}

impl CropLocalizer for MarkerOracleLocalizer {
    fn locate(&self, crop: &CropImage) -> core::result::Result<Vec<CropPoint>, String> {
        struct Acc {
            n: usize,
            su: f64,
            sv: f64,
            border: bool,
        }
        let img = &crop.image;
        let (w, h) = (img.width(), img.height());
        let mut groups: BTreeMap<[u8; 3], Acc> = BTreeMap::new();
        for (i, px) in img.as_raw().chunks_exact(3).enumerate() {
            let rgb = [px[0], px[1], px[2]];
            if !MarkerPalette::is_marker(rgb) {
                continue;
            }
            let (u, v) = ((i as u32) % w, (i as u32) / w);
            let acc = groups.entry(rgb).or_insert(Acc {
                n: 0,
                su: 0.0,
                sv: 0.0,
                border: false,
            });
            acc.n += 1;
            acc.su += u as f64;
            acc.sv += v as f64;
            acc.border |= u == 0 || v == 0 || u + 1 == w || v + 1 == h;
        }
        Ok(groups
            .into_values()
            .filter(|a| !a.border && a.n >= self.min_pixels.max(1))
            .map(|a| CropPoint {
                u: a.su / a.n as f64,
                v: a.sv / a.n as f64,
                confidence: 1.0,
            })
            .collect())
    }
}

/// Localizer output for one crop of a panorama.
#[derive(Debug, Clone, PartialEq)]
pub struct CropDetections {
    pub spec: CropSpec,
    /// The candidate ramp the crop was aimed at.
    pub ramp_id: Option<String>,
    /// Points, or the localizer's error message.
    pub outcome: core::result::Result<Vec<CropPoint>, String>,
}

/// Why a candidate did not yield a label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelFlag {
    NoDetection { ramp_id: Option<String> },
    CropFailed { ramp_id: Option<String>, message: String },
}

/// A panorama's labels after aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoLabelSet {
    pub pano_id: String,
    pub width: u32,
    pub height: u32,
    pub labels: Vec<PointLabel>,
    /// Candidate ramp ids whose crops were consumed, sorted.
    pub provenance: Vec<String>,
    pub flags: Vec<LabelFlag>,
}

/// Projects every crop detection onto the panorama and merges points closer
/// than `dedup_radius_px` (wrap-aware), keeping the most confident one.
///
/// Equal confidences prefer the point nearer its crop's center, then smaller
/// `(y, x)`, then ramp id, so the result does not depend on input order.
pub fn aggregate(pano: &PanoMeta, per_crop: &[CropDetections], dedup_radius_px: f64) -> PanoLabelSet {
    let mut provenance = BTreeSet::new();
    let mut flags = Vec::new();
    let mut pending: Vec<(PointLabel, f64)> = Vec::new();
    for crop in per_crop {
        if let Some(id) = &crop.ramp_id {
            provenance.insert(id.clone());
        }
        match &crop.outcome {
            Err(message) => flags.push(LabelFlag::CropFailed {
                ramp_id: crop.ramp_id.clone(),
                message: message.clone(),
            }),
            Ok(pts) if pts.is_empty() => flags.push(LabelFlag::NoDetection {
                ramp_id: crop.ramp_id.clone(),
            }),
            Ok(pts) => {
                let (cu, cv) = crop.spec.crop_center();
                for p in pts {
                    let px = crop_point_to_pano(p.u, p.v, pano, &crop.spec);
                    let label = PointLabel {
                        confidence: p.confidence,
                        ramp_id: crop.ramp_id.clone(),
                        source: LabelSource::Localizer,
                        x: px.x,
                        y: px.y,
                    };
                    pending.push((label, crate::math::hypot(p.u - cu, p.v - cv)));
                }
            }
        }
    }
    pending.sort_by(|(a, da), (b, db)| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(da.total_cmp(db))
            .then(label_order(a, b))
    });
    flags.sort();
    PanoLabelSet {
        pano_id: pano.pano_id().into(),
        width: pano.width_px(),
        height: pano.height_px(),
        labels: greedy_keep(pending.into_iter().map(|(l, _)| l), pano.width_px(), dedup_radius_px),
        provenance: provenance.into_iter().collect(),
        flags,
    }
}

/// Greedy merge of labels closer than `radius_px`, strongest first. The
/// output is in priority order and idempotent under a second pass.
pub fn dedup_labels(labels: &[PointLabel], width: u32, radius_px: f64) -> Vec<PointLabel> {
    let mut sorted = labels.to_vec();
    sorted.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(label_order(a, b)));
    greedy_keep(sorted.into_iter(), width, radius_px)
}

fn label_order(a: &PointLabel, b: &PointLabel) -> core::cmp::Ordering {
    a.y.total_cmp(&b.y)
        .then(a.x.total_cmp(&b.x))
        .then(a.ramp_id.cmp(&b.ramp_id))
        .then(a.source.cmp(&b.source))
}

fn greedy_keep(ordered: impl Iterator<Item = PointLabel>, width: u32, radius_px: f64) -> Vec<PointLabel> {
    let mut kept: Vec<PointLabel> = Vec::new();
    for l in ordered {
        if kept
            .iter()
            .all(|k| wrapped_distance(k.x, k.y, l.x, l.y, width) > radius_px)
        {
            kept.push(l);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::image::RgbImage;
    use crate::projection::{pano_point_to_crop, PanoPixel};
    use alloc::vec;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn pano() -> PanoMeta {
        PanoMeta::new(
            "P1",
            GeoPoint::new(45.5, -122.6).unwrap(),
            NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
            0.0,
            4096,
            2048,
        )
        .unwrap()
    }

    fn crop_with(discs: &[((u32, u32), u32, [u8; 3])]) -> CropImage {
        let spec = CropSpec::toward(0.0);
        let mut img = RgbImage::filled(spec.band_width(), spec.square_px, [80, 80, 80]);
        for &((cu, cv), r, rgb) in discs {
            for v in cv.saturating_sub(r)..=cv + r {
                for u in cu.saturating_sub(r)..=cu + r {
                    let (du, dv) = (u as i64 - cu as i64, v as i64 - cv as i64);
                    if du * du + dv * dv <= (r * r) as i64 {
                        img.put(u, v, rgb);
                    }
                }
            }
        }
        CropImage {
            image: img,
            spec,
            pano_id: "P1".into(),
        }
    }

    #[test]
    fn oracle_finds_single_marker() {
        let crop = crop_with(&[((170, 600), 6, MarkerPalette::color(3))]);
        let pts = localize(&MarkerOracleLocalizer::default(), &crop).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].u - 170.0).abs() <= 1.0 && (pts[0].v - 600.0).abs() <= 1.0);
        assert_eq!(pts[0].confidence, 1.0);
    }

    #[test]
    fn oracle_empty_crop() {
        let crop = crop_with(&[]);
        assert!(localize(&MarkerOracleLocalizer::default(), &crop).unwrap().is_empty());
    }

    #[test]
    fn oracle_two_markers_are_ordered_by_row() {
        let crop = crop_with(&[
            ((170, 700), 5, MarkerPalette::color(0)),
            ((170, 600), 5, MarkerPalette::color(9)),
        ]);
        let pts = localize(&MarkerOracleLocalizer::default(), &crop).unwrap();
        assert_eq!(pts.len(), 2);
        assert!((pts[0].v - 600.0).abs() < 1e-9 && (pts[1].v - 700.0).abs() < 1e-9);
    }

    #[test]
    fn oracle_skips_border_markers() {
        let crop = crop_with(&[((3, 600), 5, MarkerPalette::color(1))]);
        assert!(localize(&MarkerOracleLocalizer::default(), &crop).unwrap().is_empty());
    }

    struct Broken;
    impl CropLocalizer for Broken {
        fn locate(&self, _: &CropImage) -> core::result::Result<Vec<CropPoint>, String> {
            Ok(vec![CropPoint {
                u: 500.0,
                v: 10.0,
                confidence: 0.5,
            }])
        }
    }

    #[test]
    fn out_of_bounds_output_is_an_error() {
        assert!(matches!(localize(&Broken, &crop_with(&[])), Err(Error::Localizer(_))));
    }

    fn dets(yaw: f64, ramp: &str, pts: &[(f64, f64, f64)]) -> CropDetections {
        CropDetections {
            spec: CropSpec::toward(yaw),
            ramp_id: Some(ramp.into()),
            outcome: Ok(pts.iter().map(|&(u, v, confidence)| CropPoint { u, v, confidence }).collect()),
        }
    }

    /// Crop coordinates that land on pano pixel `(x, y)` for a crop toward `yaw`.
    fn crop_coords(x: f64, y: f64, yaw: f64) -> (f64, f64) {
        pano_point_to_crop(PanoPixel { x, y }, &pano(), &CropSpec::toward(yaw)).unwrap()
    }

    #[test]
    fn single_detection_projects_to_pano() {
        let p = pano();
        let set = aggregate(&p, &[dets(10.0, "r1", &[(171.0, 600.0, 0.9)])], DEDUP_RADIUS_PX);
        assert_eq!(set.labels.len(), 1);
        let expected = crop_point_to_pano(171.0, 600.0, &p, &CropSpec::toward(10.0));
        assert_eq!((set.labels[0].x, set.labels[0].y), (expected.x, expected.y));
        assert_eq!(set.provenance, vec![String::from("r1")]);
        assert!(set.flags.is_empty());
    }

    #[test]
    fn nearby_detections_merge_to_max_confidence() {
        let (u1, v1) = crop_coords(2100.0, 1300.0, 3.0);
        let (u2, v2) = crop_coords(2110.0, 1300.0, 6.0);
        let set = aggregate(
            &pano(),
            &[dets(3.0, "a", &[(u1, v1, 0.7)]), dets(6.0, "b", &[(u2, v2, 0.95)])],
            DEDUP_RADIUS_PX,
        );
        assert_eq!(set.labels.len(), 1);
        assert_eq!(set.labels[0].confidence, 0.95);
        assert_eq!(set.labels[0].ramp_id.as_deref(), Some("b"));
    }

    #[test]
    fn distant_detections_are_kept() {
        let (u1, v1) = crop_coords(2100.0, 1300.0, 5.0);
        let (u2, v2) = crop_coords(2200.0, 1300.0, 5.0);
        let set = aggregate(&pano(), &[dets(5.0, "a", &[(u1, v1, 0.7), (u2, v2, 0.8)])], DEDUP_RADIUS_PX);
        assert_eq!(set.labels.len(), 2);
    }

    #[test]
    fn empty_and_failed_crops_are_flagged() {
        let failed = CropDetections {
            spec: CropSpec::toward(0.0),
            ramp_id: Some("b".into()),
            outcome: Err("timeout".into()),
        };
        let set = aggregate(&pano(), &[dets(0.0, "a", &[]), failed], DEDUP_RADIUS_PX);
        assert!(set.labels.is_empty());
        assert_eq!(
            set.flags,
            vec![
                LabelFlag::NoDetection { ramp_id: Some("a".into()) },
                LabelFlag::CropFailed {
                    ramp_id: Some("b".into()),
                    message: "timeout".into()
                },
            ]
        );
    }

    #[test]
    fn dedup_respects_the_seam() {
        let a = PointLabel::new(2.0, 100.0, 0.9, LabelSource::Localizer);
        let b = PointLabel::new(4090.0, 100.0, 0.8, LabelSource::Localizer);
        assert_eq!(dedup_labels(&[a.clone(), b], 4096, 44.0), vec![a]);
    }

    fn arb_crops() -> impl Strategy<Value = Vec<CropDetections>> {
        let pt = (0.0..341.0f64, 300.0..1000.0f64, prop_oneof![Just(1.0), Just(0.5), 0.1..1.0f64]);
        proptest::collection::vec((0.0..360.0f64, proptest::collection::vec(pt, 0..4)), 0..6).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (yaw, pts))| dets(yaw, &alloc::format!("r{i}"), &pts))
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn aggregate_is_order_independent(crops in arb_crops(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let p = pano();
            let a = aggregate(&p, &crops, DEDUP_RADIUS_PX);
            let mut shuffled = crops.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(&a, &aggregate(&p, &shuffled, DEDUP_RADIUS_PX));
            for (i, x) in a.labels.iter().enumerate() {
                for y in &a.labels[i + 1..] {
                    prop_assert!(wrapped_distance(x.x, x.y, y.x, y.y, 4096) > DEDUP_RADIUS_PX);
                }
            }
            prop_assert_eq!(dedup_labels(&a.labels, 4096, DEDUP_RADIUS_PX).len(), a.labels.len());
        }

        #[test]
        fn dedup_is_idempotent(pts in proptest::collection::vec((0.0..4096.0f64, 0.0..2048.0f64, 0.01..1.0f64), 0..40)) {
            let labels: Vec<_> = pts.iter().map(|&(x, y, c)| PointLabel::new(x, y, c, LabelSource::Localizer)).collect();
            let once = dedup_labels(&labels, 4096, 44.0);
            prop_assert_eq!(&dedup_labels(&once, 4096, 44.0), &once);
        }
    }
}
