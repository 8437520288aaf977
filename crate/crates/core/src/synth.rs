//! Deterministic miniature cities for end-to-end tests.
//!
//! Each generated world has ramp records, a panorama catalog, exact
//! ground-truth pixel labels and an [`ImageProvider`] that renders the
//! panoramas on demand. A panorama shows a flat sky/ground backdrop and one
//! uniquely colored sphere per ramp within [`VISIBILITY_M`], centered at the
//! ramp's ground point. Spheres always appear as round discs regardless of
//! distance, and the ground does not occlude them.
//!
//! Generation uses one ChaCha8 stream seeded from [`WorldSpec::seed`];
//! rendering draws no random numbers, so images are identical whatever the
//! order or thread they are rendered on.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::catalog::{ImageProvider, PanoCatalog, RampDataset};
use crate::geo::{haversine_distance, initial_bearing, CurbRampRecord, GeoPoint, PanoMeta};
use crate::heatmap::{LabelSource, PointLabel};
use crate::image::{EquirectImage, RgbImage};
use crate::index::SpatialIndex;
use crate::math;
use crate::projection::{direction_ray, direction_to_pixel, pixel_to_direction, Direction, PanoPixel};
use crate::split::LabelRecord;
use crate::{Error, Result};

/// Markers farther than this from a panorama are neither drawn nor labeled.
pub const VISIBILITY_M: f64 = 35.0;
/// Two markers closer than this never share a color.
pub const COLOR_REUSE_M: f64 = 80.0;
/// Minimum ramp-to-panorama distance.
pub const MIN_RAMP_DIST_M: f64 = 3.0;

pub const SKY: [u8; 3] = [150, 190, 235];
pub const GROUND: [u8; 3] = [96, 104, 88];

const GENERATOR: &str = "chacha8";
/// Extra angular gap between marker discs seen from the same panorama.
const MARKER_GAP_DEG: f64 = 1.5;
const PLACEMENT_ATTEMPTS: usize = 400;

/// The fiducial colors: red channel 255, green and blue on a stride-8 grid.
/// No backdrop color and no blend of a marker with the backdrop has a red
/// channel of exactly 255 except at full marker coverage.
pub struct MarkerPalette;

impl MarkerPalette {
    pub const SIZE: usize = 1024;

    pub fn color(i: usize) -> [u8; 3] {
        let i = i % Self::SIZE;
        [255, (8 * (i % 32) + 4) as u8, (8 * (i / 32) + 4) as u8]
    }

    pub fn is_marker(rgb: [u8; 3]) -> bool {
        rgb[0] == 255 && rgb[1] % 8 == 4 && rgb[2] % 8 == 4
    }
}

/// Geographic bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBox {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl GeoBox {
    /// A box of `side_m` meters per side centered on `center`.
    pub fn around(center: GeoPoint, side_m: f64) -> Self {
        let n = center.destination(0.0, side_m / 2.0);
        let s = center.destination(180.0, side_m / 2.0);
        let e = center.destination(90.0, side_m / 2.0);
        let w = center.destination(270.0, side_m / 2.0);
        Self {
            south: s.lat(),
            west: w.lon(),
            north: n.lat(),
            east: e.lon(),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> GeoPoint {
        GeoPoint::new(
            rng.random_range(self.south..self.north),
            rng.random_range(self.west..self.east),
        )
        .expect("inside a validated box")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub seed: u64,
    /// Always `"chacha8"`; recorded so a serialized spec names its generator.
    pub generator: String,
    pub city: String,
    pub n_panos: usize,
    /// Ramps placed around each non-null panorama.
    pub ramps_per_pano: usize,
    /// Share of panoramas placed far from every ramp.
    pub null_fraction: f64,
    pub area: GeoBox,
    pub marker_radius_m: f64,
    pub camera_height_m: f64,
    pub pano_width: u32,
}

impl WorldSpec {
    /// Defaults with an area that keeps panoramas sparse enough for small
    /// spatial components and room for null panoramas.
    pub fn new(seed: u64, n_panos: usize) -> Self {
        let side = 160.0 * math::sqrt(n_panos.max(1) as f64) + 300.0;
        Self {
            seed,
            generator: GENERATOR.into(),
            city: "synthetic".into(),
            n_panos,
            ramps_per_pano: 3,
            null_fraction: 0.2,
            area: GeoBox::around(GeoPoint::new(45.52, -122.68).expect("valid"), side),
            marker_radius_m: 0.3,
            camera_height_m: 2.5,
            pano_width: 4096,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.generator != GENERATOR {
            return bad("unsupported generator");
        }
        if self.n_panos == 0 || self.ramps_per_pano == 0 {
            return bad("pano and ramp counts must be positive");
        }
        if !(0.0..1.0).contains(&self.null_fraction) {
            return bad("null fraction must be in [0, 1)");
        }
        let a = &self.area;
        let lat_ok = (-90.0..=90.0).contains(&a.south) && (-90.0..=90.0).contains(&a.north);
        let lon_ok = (-180.0..=180.0).contains(&a.west) && (-180.0..=180.0).contains(&a.east);
        if !(lat_ok && lon_ok && a.south < a.north && a.west < a.east) {
            return bad("area must be a non-degenerate box");
        }
        if !(self.marker_radius_m > 0.0 && self.marker_radius_m < MIN_RAMP_DIST_M) {
            return bad("marker radius must be positive and below the minimum ramp distance");
        }
        if !(self.camera_height_m > 0.0 && self.camera_height_m.is_finite()) {
            return bad("camera height must be positive");
        }
        if self.pano_width < 8 || !self.pano_width.is_multiple_of(2) {
            return bad("panorama width must be even and at least 8");
        }
        Ok(())
    }
}

/// A ramp as drawn: where it is and its palette color.
#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub ramp_id: String,
    pub location: GeoPoint,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub spec: WorldSpec,
    pub ramps: RampDataset,
    pub catalog: PanoCatalog,
    /// One record per panorama, in id order, with every visible marker.
    pub ground_truth: Vec<LabelRecord>,
    markers: Vec<Marker>,
    /// Marker indices per panorama, in the catalog's order.
    visible: Vec<Vec<usize>>,
}

impl SyntheticWorld {
    /// Builds a world from explicit panoramas and ramps: assigns colors and
    /// computes the ground truth.
    pub fn from_parts(spec: WorldSpec, panos: Vec<PanoMeta>, ramps: Vec<CurbRampRecord>) -> Result<Self> {
        spec.validate()?;
        let ramps = RampDataset::new(spec.city.clone(), ramps)?;
        let catalog = PanoCatalog::new(panos)?;
        let locs: Vec<GeoPoint> = ramps.ramps().iter().map(|r| r.location).collect();
        let index = SpatialIndex::build(&locs);

        let mut colors: Vec<usize> = Vec::with_capacity(locs.len());
        for (i, &loc) in locs.iter().enumerate() {
            let mut used = alloc::vec![false; MarkerPalette::SIZE];
            for j in index.radius_query(loc, COLOR_REUSE_M) {
                if j < i {
                    used[colors[j]] = true;
                }
            }
            let Some(c) = used.iter().position(|u| !u) else {
                return Err(Error::InvalidParameter("too many ramps for the marker palette".into()));
            };
            colors.push(c);
        }
        let markers: Vec<Marker> = ramps
            .ramps()
            .iter()
            .zip(&colors)
            .map(|(r, &c)| Marker {
                ramp_id: r.ramp_id.clone(),
                location: r.location,
                color: MarkerPalette::color(c),
            })
            .collect();

        let mut visible = Vec::with_capacity(catalog.len());
        let mut ground_truth = Vec::with_capacity(catalog.len());
        for pano in catalog.panos() {
            let ids: Vec<usize> = index
                .radius_query(pano.location(), VISIBILITY_M)
                .into_iter()
                .filter(|&i| haversine_distance(pano.location(), locs[i]) > 0.0)
                .collect();
            let labels = ids
                .iter()
                .map(|&i| {
                    let d = marker_direction(pano, locs[i], spec.camera_height_m);
                    let px = direction_to_pixel(d, pano);
                    PointLabel {
                        confidence: 1.0,
                        ramp_id: Some(markers[i].ramp_id.clone()),
                        source: LabelSource::Manual,
                        x: px.x,
                        y: px.y,
                    }
                })
                .collect();
            ground_truth.push(LabelRecord {
                city: spec.city.clone(),
                height: pano.height_px(),
                labels,
                pano_id: pano.pano_id().into(),
                split: None,
                width: pano.width_px(),
            });
            visible.push(ids);
        }
        Ok(Self {
            spec,
            ramps,
            catalog,
            ground_truth,
            markers,
            visible,
        })
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    pub fn ground_truth_for(&self, pano_id: &str) -> Option<&LabelRecord> {
        self.ground_truth
            .binary_search_by(|r| r.pano_id.as_str().cmp(pano_id))
            .ok()
            .map(|i| &self.ground_truth[i])
    }

    /// Renders one panorama; `None` for ids not in the catalog.
    pub fn render(&self, pano_id: &str) -> Option<RgbImage> {
        let i = self
            .catalog
            .panos()
            .binary_search_by(|p| p.pano_id().cmp(pano_id))
            .ok()?;
        let pano = &self.catalog.panos()[i];
        let markers: Vec<&Marker> = self.visible[i].iter().map(|&m| &self.markers[m]).collect();
        Some(render_pano(pano, &markers, self.spec.marker_radius_m, self.spec.camera_height_m))
    }
}

impl ImageProvider for SyntheticWorld {
    fn fetch(&self, pano_id: &str) -> core::result::Result<Option<EquirectImage>, String> {
        match self.render(pano_id) {
            Some(img) => EquirectImage::new(img).map(Some).map_err(|e| e.to_string()),
            None => Ok(None),
        }
    }
}

/// Direction from the camera to a ramp's ground point.
fn marker_direction(pano: &PanoMeta, ramp: GeoPoint, camera_height_m: f64) -> Direction {
    let d = haversine_distance(pano.location(), ramp);
    Direction {
        bearing_deg: initial_bearing(pano.location(), ramp).unwrap_or(0.0),
        elevation_deg: -math::to_deg(math::atan2(camera_height_m, d)),
    }
}

/// Angular radius in degrees of a sphere of `radius_m` seen from the camera.
fn angular_radius_deg(pano: &PanoMeta, ramp: GeoPoint, radius_m: f64, camera_height_m: f64) -> f64 {
    let d = haversine_distance(pano.location(), ramp);
    let range = math::hypot(d, camera_height_m);
    math::to_deg(math::asin((radius_m / range).min(1.0)))
}

/// Draws the backdrop, then each marker as the set of pixels whose viewing
/// ray hits its sphere. Nearer markers are drawn last.
pub fn render_pano(pano: &PanoMeta, markers: &[&Marker], radius_m: f64, camera_height_m: f64) -> RgbImage {
    let (w, h) = (pano.width_px(), pano.height_px());
    let mut img = RgbImage::filled(w, h, GROUND);
    for y in 0..h {
        let elev = (0.5 - y as f64 / h as f64) * 180.0;
        if elev > 0.0 {
            for px in img.row_mut(y).chunks_exact_mut(3) {
                px.copy_from_slice(&SKY);
            }
        }
    }

    let mut order: Vec<(f64, &Marker)> = markers
        .iter()
        .map(|m| (haversine_distance(pano.location(), m.location), *m))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.ramp_id.cmp(&b.1.ramp_id)));

    for (_, m) in order {
        let dir = marker_direction(pano, m.location, camera_height_m);
        let alpha = angular_radius_deg(pano, m.location, radius_m, camera_height_m);
        let center = direction_ray(dir);
        let cos_a = math::cos(math::to_rad(alpha));

        let row = |elev: f64| h as f64 * (0.5 - elev / 180.0);
        let y0 = math::floor(row(dir.elevation_deg + alpha)).max(1.0) as u32 - 1;
        let y1 = (math::floor(row(dir.elevation_deg - alpha)) as u32 + 1).min(h - 1);
        let top = dir.elevation_deg.abs() + alpha;
        let span_cols = if top < 89.0 {
            let half = math::to_deg(math::asin(
                (math::sin(math::to_rad(alpha)) / math::cos(math::to_rad(top))).min(1.0),
            ));
            (half / 360.0 * w as f64) as i64 + 2
        } else {
            w as i64
        };
        let cx = math::floor(w as f64 * (0.5 + math::wrap_deg_180(dir.bearing_deg - pano.heading_deg()) / 360.0)) as i64;
        let (xa, xb) = if 2 * span_cols + 1 >= w as i64 {
            (0, w as i64 - 1)
        } else {
            (cx - span_cols, cx + span_cols)
        };
        for y in y0..=y1 {
            for xr in xa..=xb {
                let x = xr.rem_euclid(w as i64) as u32;
                let ray = direction_ray(pixel_to_direction(
                    PanoPixel {
                        x: x as f64,
                        y: y as f64,
                    },
                    pano,
                ));
                let dot = ray[0] * center[0] + ray[1] * center[1] + ray[2] * center[2];
                if dot >= cos_a {
                    img.put(x, y, m.color);
                }
            }
        }
    }
    img
}

fn random_date(rng: &mut ChaCha8Rng, from: (i32, u32, u32), to: (i32, u32, u32)) -> NaiveDate {
    use chrono::Datelike;
    let a = NaiveDate::from_ymd_opt(from.0, from.1, from.2).expect("valid").num_days_from_ce();
    let b = NaiveDate::from_ymd_opt(to.0, to.1, to.2).expect("valid").num_days_from_ce();
    NaiveDate::from_num_days_from_ce_opt(rng.random_range(a..=b)).expect("in range")
}

/// Coarse planar bucketing for the generator's growing ramp set.
struct Buckets {
    origin: GeoPoint,
    cell_m: f64,
    cells: BTreeMap<(i64, i64), Vec<usize>>,
}

impl Buckets {
    fn new(origin: GeoPoint, cell_m: f64) -> Self {
        Self {
            origin,
            cell_m,
            cells: BTreeMap::new(),
        }
    }

    fn key(&self, p: GeoPoint) -> (i64, i64) {
        let m_per_deg = math::to_rad(1.0) * crate::geo::EARTH_RADIUS_M;
        let x = (p.lon() - self.origin.lon()) * m_per_deg * math::cos(math::to_rad(self.origin.lat()));
        let y = (p.lat() - self.origin.lat()) * m_per_deg;
        (math::floor(x / self.cell_m) as i64, math::floor(y / self.cell_m) as i64)
    }

    fn insert(&mut self, p: GeoPoint, i: usize) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push(i);
    }

    /// Superset of the entries within `reach` cells of `p`.
    fn near(&self, p: GeoPoint, reach: i64) -> impl Iterator<Item = usize> + '_ {
        let (kx, ky) = self.key(p);
        (kx - reach..=kx + reach)
            .flat_map(move |x| (ky - reach..=ky + reach).map(move |y| (x, y)))
            .filter_map(|k| self.cells.get(&k))
            .flatten()
            .copied()
    }
}

/// Generates a world from `spec`.
pub fn generate(spec: &WorldSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_null = math::round(spec.n_panos as f64 * spec.null_fraction) as usize;
    let n_pos = spec.n_panos - n_null;
    let (w, h) = (spec.pano_width, spec.pano_width / 2);

    let new_pano = |rng: &mut ChaCha8Rng, i: usize, loc: GeoPoint| {
        let date = random_date(rng, (2019, 1, 1), (2023, 12, 31));
        let heading = rng.random_range(0.0..360.0);
        PanoMeta::new(alloc::format!("P{i:05}"), loc, date, heading, w, h)
    };

    let mut panos = Vec::with_capacity(spec.n_panos);
    for i in 0..n_pos {
        let loc = spec.area.sample(&mut rng);
        panos.push(new_pano(&mut rng, i, loc)?);
    }
    let pano_locs: Vec<GeoPoint> = panos.iter().map(|p| p.location()).collect();
    let pano_index = SpatialIndex::build(&pano_locs);

    let center = GeoPoint::new(
        (spec.area.south + spec.area.north) / 2.0,
        (spec.area.west + spec.area.east) / 2.0,
    )?;
    // reach 2 cells of 40 m covers markers within 2 * VISIBILITY_M
    let mut buckets = Buckets::new(center, 40.0);
    let mut ramps: Vec<CurbRampRecord> = Vec::new();
    for (pi, pano) in panos.iter().enumerate() {
        let capture = pano.captured_on();
        for j in 0..spec.ramps_per_pano {
            let max_d = if j == 0 { 9.5 } else { 25.0 };
            let mut placed = false;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let d = rng.random_range(MIN_RAMP_DIST_M..max_d);
                let b = rng.random_range(0.0..360.0);
                let loc = pano.location().destination(b, d);
                if fits(spec, &panos, &pano_index, &ramps, &buckets, loc) {
                    let installed = random_date(&mut rng, (2005, 1, 1), (2018, 12, 31));
                    debug_assert!(installed < capture);
                    buckets.insert(loc, ramps.len());
                    ramps.push(CurbRampRecord {
                        ramp_id: alloc::format!("R{:06}", ramps.len()),
                        location: loc,
                        installed_on: Some(installed),
                    });
                    placed = true;
                    break;
                }
            }
            if !placed && j == 0 {
                return Err(Error::InvalidParameter(alloc::format!(
                    "could not place a ramp near panorama {pi}; enlarge the area"
                )));
            }
        }
    }

    let ramp_locs: Vec<GeoPoint> = ramps.iter().map(|r| r.location).collect();
    let ramp_index = SpatialIndex::build(&ramp_locs);
    let null_clearance = crate::selection::NULL_MIN_DIST_M + 1.0;
    let mut attempts = 0usize;
    while panos.len() < spec.n_panos {
        attempts += 1;
        if attempts > 2000 * (n_null + 1) {
            return Err(Error::InvalidParameter(
                "could not place null panoramas; enlarge the area".into(),
            ));
        }
        let loc = spec.area.sample(&mut rng);
        if ramp_index.any_within(loc, null_clearance) {
            continue;
        }
        let i = panos.len();
        panos.push(new_pano(&mut rng, i, loc)?);
    }
    SyntheticWorld::from_parts(spec.clone(), panos, ramps)
}

/// Whether a marker at `loc` keeps its distance from every positive
/// panorama and stays visually separate from every marker that shares a
/// panorama view with it.
fn fits(
    spec: &WorldSpec,
    panos: &[PanoMeta],
    pano_index: &SpatialIndex,
    ramps: &[CurbRampRecord],
    buckets: &Buckets,
    loc: GeoPoint,
) -> bool {
    if pano_index.any_within(loc, MIN_RAMP_DIST_M) {
        return false;
    }
    let viewers = pano_index.radius_query(loc, VISIBILITY_M);
    if viewers.is_empty() {
        return true;
    }
    let (r, hcam) = (spec.marker_radius_m, spec.camera_height_m);
    let nearby: Vec<usize> = buckets
        .near(loc, 2)
        .filter(|&k| haversine_distance(loc, ramps[k].location) <= 2.0 * VISIBILITY_M)
        .collect();
    for vi in viewers {
        let pano = &panos[vi];
        let a = direction_ray(marker_direction(pano, loc, hcam));
        let ra = angular_radius_deg(pano, loc, r, hcam);
        for &k in &nearby {
            let other = ramps[k].location;
            if haversine_distance(pano.location(), other) > VISIBILITY_M {
                continue;
            }
            let b = direction_ray(marker_direction(pano, other, hcam));
            let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
            let sep = math::to_deg(math::acos(dot));
            if sep < ra + angular_radius_deg(pano, other, r, hcam) + MARKER_GAP_DEG {
                return false;
            }
        }
    }
    true
}

/// What [`perturb`] changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbLog {
    /// `(pano_id, ramp_id)` of every dropped label.
    pub dropped: Vec<(String, Option<String>)>,
    pub jittered: usize,
}

/// Jitters label positions with Gaussian noise (`noise_px` standard
/// deviation per axis) and drops each label with probability `drop_rate`.
/// Jittered `x` wraps around the seam and `y` is clamped to the image.
pub fn perturb(
    records: &[LabelRecord],
    noise_px: f64,
    drop_rate: f64,
    seed: u64,
) -> Result<(Vec<LabelRecord>, PerturbLog)> {
    if !(noise_px >= 0.0 && noise_px.is_finite()) {
        return Err(Error::InvalidParameter("noise must be non-negative".into()));
    }
    if !(0.0..1.0).contains(&drop_rate) {
        return Err(Error::InvalidParameter("drop rate must be in [0, 1)".into()));
    }
    let normal = Normal::new(0.0, noise_px).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = PerturbLog::default();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let mut labels = Vec::with_capacity(r.labels.len());
        for l in &r.labels {
            let drop = rng.random::<f64>() < drop_rate;
            let (dx, dy) = (normal.sample(&mut rng), normal.sample(&mut rng));
            if drop {
                log.dropped.push((r.pano_id.clone(), l.ramp_id.clone()));
                continue;
            }
            let mut l = l.clone();
            if noise_px > 0.0 {
                l.x = math::rem_euclid(l.x + dx, r.width as f64);
                l.y = (l.y + dy).clamp(0.0, r.height.saturating_sub(1) as f64);
                log.jittered += 1;
            }
            labels.push(l);
        }
        out.push(LabelRecord { labels, ..r.clone() });
    }
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{match_pano, prf, MatchMode};
    use crate::localize::{localize, MarkerOracleLocalizer};
    use crate::projection::{crop_point_to_pano, wrapped_distance, CropSampler, CropSpec};
    use crate::selection::{label_candidates, RampLocator};
    use alloc::vec;

    fn one_pano_world(ramp_dist: f64, width: u32) -> SyntheticWorld {
        let mut spec = WorldSpec::new(1, 1);
        spec.pano_width = width;
        let o = GeoPoint::new(45.52, -122.68).unwrap();
        let pano = PanoMeta::new("P0", o, NaiveDate::from_ymd_opt(2021, 5, 1).unwrap(), 0.0, width, width / 2).unwrap();
        let ramp = CurbRampRecord {
            ramp_id: "R0".into(),
            location: o.destination(0.0, ramp_dist),
            installed_on: NaiveDate::from_ymd_opt(2010, 1, 1),
        };
        SyntheticWorld::from_parts(spec, vec![pano], vec![ramp]).unwrap()
    }

    #[test]
    fn due_north_marker_label() {
        let w = one_pano_world(10.0, 4096);
        let gt = &w.ground_truth[0].labels;
        assert_eq!(gt.len(), 1);
        // depression angle atan(2.5 / 10)
        let phi = (2.5f64 / 10.0).atan().to_degrees();
        assert!((phi - 14.036).abs() < 1e-3);
        assert!((gt[0].x - 2048.0).abs() < 1e-6, "{}", gt[0].x);
        assert!((gt[0].y - 2048.0 * (0.5 + phi / 180.0)).abs() < 1e-6);
    }

    #[test]
    fn far_ramp_is_not_a_candidate() {
        let w = one_pano_world(100.0, 64);
        assert_eq!(w.ramps.len(), 1);
        assert!(w.ground_truth[0].labels.is_empty());
        let loc = RampLocator::new(&w.ramps);
        assert!(label_candidates(&w.catalog.panos()[0], &loc, 35.0).candidates.is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = WorldSpec::new(42, 12);
        spec.pano_width = 512;
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        for p in a.catalog.panos() {
            assert_eq!(a.render(p.pano_id()), b.render(p.pano_id()));
        }
        assert_ne!(a, generate(&WorldSpec { seed: 43, ..spec }).unwrap());
    }

    #[test]
    fn generated_world_respects_placement_rules() {
        let spec = WorldSpec::new(3, 200);
        let w = generate(&spec).unwrap();
        assert_eq!(w.catalog.len(), 200);
        let ramp_locs: Vec<_> = w.ramps.ramps().iter().map(|r| r.location).collect();
        let mut nulls = 0;
        for p in w.catalog.panos() {
            let nearest = ramp_locs
                .iter()
                .map(|&r| haversine_distance(p.location(), r))
                .fold(f64::INFINITY, f64::min);
            assert!(nearest >= MIN_RAMP_DIST_M);
            if nearest > 60.0 {
                nulls += 1;
            }
        }
        assert!(nulls >= 40);
        for r in w.ramps.ramps() {
            let installed = r.installed_on.unwrap();
            for p in w.catalog.panos() {
                assert!(installed < p.captured_on());
            }
        }
    }

    #[test]
    fn palette_colors_are_markers_and_backdrop_is_not() {
        for i in 0..MarkerPalette::SIZE {
            assert!(MarkerPalette::is_marker(MarkerPalette::color(i)));
        }
        assert!(!MarkerPalette::is_marker(SKY) && !MarkerPalette::is_marker(GROUND));
    }

    #[test]
    fn oracle_recovers_ground_truth_through_crops() {
        let mut spec = WorldSpec::new(8, 6);
        spec.null_fraction = 0.0;
        let w = generate(&spec).unwrap();
        let sampler = CropSampler::new(&CropSpec::default(), 4096, 2048);
        let loc = RampLocator::new(&w.ramps);
        let mut checked = 0;
        for pano in w.catalog.panos() {
            let img = w.fetch(pano.pano_id()).unwrap().unwrap();
            let gt = w.ground_truth_for(pano.pano_id()).unwrap();
            for cand in label_candidates(pano, &loc, 25.0).candidates {
                let crop = sampler.extract(&img, pano, cand.bearing_deg).unwrap();
                let pts = localize(&MarkerOracleLocalizer::default(), &crop).unwrap();
                let target = gt.labels.iter().find(|l| l.ramp_id.as_deref() == Some(cand.ramp_id.as_str())).unwrap();
                let best = pts
                    .iter()
                    .map(|p| {
                        let px = crop_point_to_pano(p.u, p.v, pano, &crop.spec);
                        wrapped_distance(px.x, px.y, target.x, target.y, 4096)
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!(best <= 5.0, "{} {}: {best}", pano.pano_id(), cand.ramp_id);
                checked += 1;
            }
        }
        assert!(checked >= 18);
    }

    #[test]
    fn perturb_identity_and_drops() {
        let spec = WorldSpec::new(5, 60);
        let w = generate(&spec).unwrap();
        let (same, log) = perturb(&w.ground_truth, 0.0, 0.0, 1).unwrap();
        assert_eq!(same, w.ground_truth);
        assert!(log.dropped.is_empty());

        let labels: Vec<PointLabel> = (0..100)
            .map(|i| PointLabel::new(i as f64 * 10.0, 500.0, 1.0, LabelSource::Manual).with_ramp(alloc::format!("r{i}")))
            .collect();
        let rec = LabelRecord {
            city: "c".into(),
            height: 2048,
            labels,
            pano_id: "p".into(),
            split: None,
            width: 4096,
        };
        let (out, log) = perturb(core::slice::from_ref(&rec), 0.0, 0.5, 17).unwrap();
        let kept = out[0].labels.len();
        // 3.5 standard deviations of Binomial(100, 0.5)
        assert!((33..=67).contains(&kept), "{kept}");
        assert_eq!(log.dropped.len(), 100 - kept);
    }

    #[test]
    fn heavy_noise_costs_recall() {
        let spec = WorldSpec::new(6, 40);
        let w = generate(&spec).unwrap();
        let (noisy, _) = perturb(&w.ground_truth, 100.0, 0.0, 2).unwrap();
        let results: Vec<_> = w
            .ground_truth
            .iter()
            .zip(&noisy)
            .map(|(g, n)| match_pano(&n.labels, &g.labels, 88.0, g.width, MatchMode::Proximity))
            .collect();
        assert!(prf(&results).recall.unwrap() < 1.0);
    }
}
