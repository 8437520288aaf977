//! Spatial and temporal candidate logic: which panoramas to process, which
//! ramps to label in each, and which ramp-free panoramas to add as nulls.
//!
//! Every radius test is a closed ball (`distance <= radius`), except the null
//! clearance which requires `distance >= min_dist` from every ramp.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{PanoCatalog, RampDataset};
use crate::geo::{haversine_distance, initial_bearing, CurbRampRecord, GeoPoint, PanoMeta};
use crate::index::SpatialIndex;
use crate::math;
use crate::{Error, Result};

pub const PANO_RADIUS_M: f64 = 10.0;
pub const CANDIDATE_RADIUS_M: f64 = 35.0;
pub const NULL_MIN_DIST_M: f64 = 60.0;
pub const NULL_FRACTION: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub pano_radius_m: f64,
    pub candidate_radius_m: f64,
    pub null_min_dist_m: f64,
    pub null_fraction: f64,
    pub seed: u64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            pano_radius_m: PANO_RADIUS_M,
            candidate_radius_m: CANDIDATE_RADIUS_M,
            null_min_dist_m: NULL_MIN_DIST_M,
            null_fraction: NULL_FRACTION,
            seed: 0,
        }
    }
}

/// A ramp dataset together with a spatial index over its locations.
#[derive(Debug, Clone)]
pub struct RampLocator<'a> {
    ramps: &'a RampDataset,
    index: SpatialIndex,
}

impl<'a> RampLocator<'a> {
    pub fn new(ramps: &'a RampDataset) -> Self {
        let pts: Vec<GeoPoint> = ramps.ramps().iter().map(|r| r.location).collect();
        Self {
            ramps,
            index: SpatialIndex::build(&pts),
        }
    }

    pub fn ramps(&self) -> &'a RampDataset {
        self.ramps
    }

    /// Ramps within `radius_m` of `p`, in ramp-id order.
    pub fn within(&self, p: GeoPoint, radius_m: f64) -> impl Iterator<Item = &'a CurbRampRecord> + '_ {
        let ramps = self.ramps.ramps();
        self.index.radius_query(p, radius_m).into_iter().map(move |i| &ramps[i])
    }

    pub fn any_within(&self, p: GeoPoint, radius_m: f64) -> bool {
        self.index.any_within(p, radius_m)
    }
}

/// A (panorama, ramp) pair that passed the distance and install-date filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCandidate {
    pub pano_id: String,
    pub ramp_id: String,
    /// Initial bearing from the panorama to the ramp.
    pub bearing_deg: f64,
    pub distance_m: f64,
}

/// Candidates for one panorama plus the reasons others were turned away.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateScan {
    pub candidates: Vec<LabelCandidate>,
    pub rejected_temporal: usize,
    /// Ramps accepted without an install date.
    pub missing_install_date: usize,
    /// Ramps at exactly the panorama location, where no bearing exists.
    pub rejected_coincident: usize,
}

/// Panoramas within `radius_m` of at least one ramp, sorted by id.
pub fn select_panos(catalog: &PanoCatalog, ramps: &RampLocator<'_>, radius_m: f64) -> Vec<String> {
    catalog
        .panos()
        .iter()
        .filter(|p| ramps.any_within(p.location(), radius_m))
        .map(|p| p.pano_id().to_string())
        .collect()
}

/// Ramps within `radius_m` of the panorama that were installed before it was
/// captured, sorted by ramp id.
pub fn label_candidates(pano: &PanoMeta, ramps: &RampLocator<'_>, radius_m: f64) -> CandidateScan {
    let mut scan = CandidateScan::default();
    for ramp in ramps.within(pano.location(), radius_m) {
        match ramp.installed_on {
            Some(d) if d >= pano.captured_on() => {
                scan.rejected_temporal += 1;
                continue;
            }
            None => scan.missing_install_date += 1,
            Some(_) => {}
        }
        let Ok(bearing_deg) = initial_bearing(pano.location(), ramp.location) else {
            scan.rejected_coincident += 1;
            continue;
        };
        scan.candidates.push(LabelCandidate {
            pano_id: pano.pano_id().to_string(),
            ramp_id: ramp.ramp_id.clone(),
            bearing_deg,
            distance_m: haversine_distance(pano.location(), ramp.location),
        });
    }
    scan
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullSample {
    /// Sampled ids, sorted.
    pub pano_ids: Vec<String>,
    pub requested: usize,
    pub shortfall: usize,
}

/// Number of nulls that makes `nulls / (nulls + positives) == fraction`,
/// rounded half up.
pub fn null_target(positives: usize, fraction: f64) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    math::floor(fraction * positives as f64 / (1.0 - fraction) + 0.5) as usize
}

/// Seeded sample of catalog panoramas that are not positives and lie at
/// least `min_dist_m` from every ramp.
pub fn sample_null_panos(
    catalog: &PanoCatalog,
    ramps: &RampLocator<'_>,
    positives: &BTreeSet<String>,
    min_dist_m: f64,
    fraction: f64,
    seed: u64,
) -> Result<NullSample> {
    check_fraction(fraction)?;
    let requested = null_target(positives.len(), fraction);
    let mut pool: Vec<&str> = catalog
        .panos()
        .iter()
        .filter(|p| !positives.contains(p.pano_id()))
        .filter(|p| is_null_eligible(p.location(), ramps, min_dist_m))
        .map(|p| p.pano_id())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let take = requested.min(pool.len());
    let mut pano_ids: Vec<String> = pool[..take].iter().map(|s| s.to_string()).collect();
    pano_ids.sort();
    Ok(NullSample {
        pano_ids,
        requested,
        shortfall: requested - take,
    })
}

fn is_null_eligible(p: GeoPoint, ramps: &RampLocator<'_>, min_dist_m: f64) -> bool {
    // eligible iff no ramp is strictly closer than min_dist_m
    ramps
        .within(p, min_dist_m)
        .all(|r| haversine_distance(p, r.location) >= min_dist_m)
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(alloc::format!(
            "null fraction {fraction} must be in [0, 1)"
        )));
    }
    Ok(())
}

/// Counters for one selection run; serialized with fixed key names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub panos_selected: usize,
    pub positives: usize,
    pub candidates: usize,
    pub nulls_sampled: usize,
    pub null_shortfall: usize,
    pub rejected_temporal: usize,
    /// Catalog panoramas with no ramp inside the selection radius.
    pub rejected_spatial: usize,
    pub rejected_coincident: usize,
    pub missing_install_date: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub positives: Vec<String>,
    pub nulls: Vec<String>,
    /// Sorted by (pano id, ramp id).
    pub candidates: Vec<LabelCandidate>,
    pub report: SelectionReport,
}

/// Runs positive selection, candidate gathering and null sampling.
pub fn run_selection(
    catalog: &PanoCatalog,
    ramps: &RampDataset,
    params: &SelectionParams,
) -> Result<Selection> {
    check_fraction(params.null_fraction)?;
    let locator = RampLocator::new(ramps);
    let positives = select_panos(catalog, &locator, params.pano_radius_m);
    let mut report = SelectionReport {
        positives: positives.len(),
        rejected_spatial: catalog.len() - positives.len(),
        ..Default::default()
    };
    let mut candidates = Vec::new();
    for id in &positives {
        let pano = catalog.get(id).expect("selected from catalog");
        let scan = label_candidates(pano, &locator, params.candidate_radius_m);
        report.rejected_temporal += scan.rejected_temporal;
        report.missing_install_date += scan.missing_install_date;
        report.rejected_coincident += scan.rejected_coincident;
        candidates.extend(scan.candidates);
    }
    let pos_set: BTreeSet<String> = positives.iter().cloned().collect();
    let nulls = sample_null_panos(
        catalog,
        &locator,
        &pos_set,
        params.null_min_dist_m,
        params.null_fraction,
        params.seed,
    )?;
    report.candidates = candidates.len();
    report.nulls_sampled = nulls.pano_ids.len();
    report.null_shortfall = nulls.shortfall;
    report.panos_selected = positives.len() + nulls.pano_ids.len();
    Ok(Selection {
        positives,
        nulls: nulls.pano_ids,
        candidates,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use chrono::NaiveDate;

    fn origin() -> GeoPoint {
        GeoPoint::new(45.52, -122.68).unwrap()
    }

    fn date(y: i32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, 6, 1).unwrap()
    }

    fn pano_at(id: &str, loc: GeoPoint, year: i32) -> PanoMeta {
        PanoMeta::new(id, loc, date(year), 0.0, 64, 32).unwrap()
    }

    fn ramp(id: &str, loc: GeoPoint, year: Option<i32>) -> CurbRampRecord {
        CurbRampRecord {
            ramp_id: id.into(),
            location: loc,
            installed_on: year.map(date),
        }
    }

    #[test]
    fn pano_selection_boundary() {
        let o = origin();
        let ramps = RampDataset::new(
            "t",
            vec![ramp("r1", o, Some(2010)), ramp("r2", o.destination(90.0, 500.0), Some(2010))],
        )
        .unwrap();
        let cat = PanoCatalog::new(vec![
            pano_at("in", o.destination(0.0, 9.9), 2021),
            pano_at("out", o.destination(180.0, 10.1), 2021),
        ])
        .unwrap();
        let loc = RampLocator::new(&ramps);
        assert_eq!(select_panos(&cat, &loc, 10.0), vec!["in".to_string()]);
    }

    #[test]
    fn candidate_rules() {
        let o = origin();
        let ramps = RampDataset::new(
            "t",
            vec![
                ramp("a_ok", o.destination(0.0, 34.0), Some(2019)),
                ramp("b_late", o.destination(90.0, 34.0), Some(2022)),
                ramp("c_far", o.destination(180.0, 36.0), Some(2019)),
                ramp("d_undated", o.destination(270.0, 20.0), None),
            ],
        )
        .unwrap();
        let pano = pano_at("p", o, 2021);
        let scan = label_candidates(&pano, &RampLocator::new(&ramps), 35.0);
        let ids: Vec<&str> = scan.candidates.iter().map(|c| c.ramp_id.as_str()).collect();
        assert_eq!(ids, vec!["a_ok", "d_undated"]);
        assert_eq!(scan.rejected_temporal, 1);
        assert_eq!(scan.missing_install_date, 1);
        let a = &scan.candidates[0];
        assert!(a.bearing_deg.abs() < 1e-6 || (a.bearing_deg - 360.0).abs() < 1e-6);
        assert!((a.distance_m - 34.0).abs() < 1e-6);
        assert!((scan.candidates[1].bearing_deg - 270.0).abs() < 1e-6);
    }

    #[test]
    fn same_day_install_is_rejected() {
        let o = origin();
        let ramps = RampDataset::new("t", vec![ramp("r", o.destination(0.0, 5.0), Some(2021))]).unwrap();
        let scan = label_candidates(&pano_at("p", o, 2021), &RampLocator::new(&ramps), 35.0);
        assert!(scan.candidates.is_empty());
        assert_eq!(scan.rejected_temporal, 1);
    }

    #[test]
    fn null_target_arithmetic() {
        assert_eq!(null_target(80, 0.2), 20);
        assert_eq!(null_target(0, 0.2), 0);
        assert_eq!(null_target(10, 0.0), 0);
        assert_eq!(null_target(3, 0.2), 1);
    }

    #[test]
    fn null_clearance_boundary_and_shortfall() {
        let o = origin();
        let ramps = RampDataset::new("t", vec![ramp("r", o, Some(2010))]).unwrap();
        let mut panos = vec![pano_at("near59", o.destination(0.0, 59.0), 2021)];
        for i in 0..5 {
            panos.push(pano_at(&alloc::format!("far{i}"), o.destination(72.0 * i as f64, 61.0 + i as f64), 2021));
        }
        let cat = PanoCatalog::new(panos).unwrap();
        let loc = RampLocator::new(&ramps);
        // 80 positives want 20 nulls, only 5 qualify
        let positives: BTreeSet<String> = (0..80).map(|i| alloc::format!("pos{i}")).collect();
        let s = sample_null_panos(&cat, &loc, &positives, 60.0, 0.2, 1).unwrap();
        assert_eq!(s.requested, 20);
        assert_eq!(s.pano_ids.len(), 5);
        assert_eq!(s.shortfall, 15);
        assert!(!s.pano_ids.iter().any(|id| id == "near59"));
    }

    #[test]
    fn null_sampling_hits_fraction_with_ample_pool() {
        let o = origin();
        let ramps = RampDataset::new("t", vec![ramp("r", o, Some(2010))]).unwrap();
        let panos: Vec<PanoMeta> = (0..100)
            .map(|i| pano_at(&alloc::format!("n{i:03}"), o.destination(3.6 * i as f64, 100.0 + i as f64), 2021))
            .collect();
        let cat = PanoCatalog::new(panos).unwrap();
        let loc = RampLocator::new(&ramps);
        let positives: BTreeSet<String> = (0..80).map(|i| alloc::format!("pos{i}")).collect();
        let a = sample_null_panos(&cat, &loc, &positives, 60.0, 0.2, 9).unwrap();
        let b = sample_null_panos(&cat, &loc, &positives, 60.0, 0.2, 9).unwrap();
        assert_eq!(a.pano_ids.len(), 20);
        assert_eq!(a.shortfall, 0);
        assert_eq!(a, b);
        let c = sample_null_panos(&cat, &loc, &positives, 60.0, 0.2, 10).unwrap();
        assert_ne!(a.pano_ids, c.pano_ids);
    }

    #[test]
    fn invalid_fraction_is_rejected() {
        let ramps = RampDataset::new("t", vec![]).unwrap();
        let cat = PanoCatalog::default();
        let params = SelectionParams {
            null_fraction: 1.0,
            ..Default::default()
        };
        assert!(run_selection(&cat, &ramps, &params).is_err());
    }

    #[test]
    fn report_counts_are_consistent() {
        let o = origin();
        let ramps = RampDataset::new(
            "t",
            vec![ramp("r1", o, Some(2010)), ramp("r2", o.destination(45.0, 20.0), Some(2030))],
        )
        .unwrap();
        let cat = PanoCatalog::new(vec![
            pano_at("p1", o.destination(0.0, 5.0), 2021),
            pano_at("p2", o.destination(180.0, 30.0), 2021),
            pano_at("p3", o.destination(180.0, 200.0), 2021),
        ])
        .unwrap();
        let sel = run_selection(&cat, &ramps, &SelectionParams::default()).unwrap();
        let r = &sel.report;
        assert_eq!(sel.positives, vec!["p1".to_string()]);
        assert_eq!(r.panos_selected, r.positives + r.nulls_sampled);
        assert_eq!(r.candidates, 1);
        assert_eq!(r.rejected_temporal, 1);
        assert_eq!(r.rejected_spatial, 2);
        // one positive -> target round(0.25) = 0 nulls
        assert_eq!(r.nulls_sampled, 0);
    }
}
