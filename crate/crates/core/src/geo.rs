//! Geodesic primitives on a spherical Earth and the canonical ramp / panorama
//! records shared by every other module.
//!
//! Distances use the haversine formula on a sphere of radius
//! [`EARTH_RADIUS_M`]. Every radius this crate works with is tens of meters,
//! far below the scale where an ellipsoidal model would matter.

use alloc::string::String;
use chrono::NaiveDate;

use crate::math;
use crate::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A WGS84 latitude/longitude pair in degrees.
///
/// Latitude is validated to `[-90, 90]`; longitude is wrapped into `[-180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::NonFiniteCoordinate { lat, lon });
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidLatitude(lat));
        }
        let lon = if (-180.0..180.0).contains(&lon) {
            lon
        } else {
            math::wrap_deg_180(lon)
        };
        Ok(Self { lat, lon })
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// The point reached by travelling `distance_m` along the great circle
    /// leaving `self` at compass `bearing_deg`.
    pub fn destination(&self, bearing_deg: f64, distance_m: f64) -> GeoPoint {
        let delta = distance_m / EARTH_RADIUS_M;
        let brg = math::to_rad(bearing_deg);
        let lat1 = math::to_rad(self.lat);
        let lon1 = math::to_rad(self.lon);
        let sin_lat2 =
            math::sin(lat1) * math::cos(delta) + math::cos(lat1) * math::sin(delta) * math::cos(brg);
        let lat2 = math::asin(sin_lat2.clamp(-1.0, 1.0));
        let lon2 = lon1
            + math::atan2(
                math::sin(brg) * math::sin(delta) * math::cos(lat1),
                math::cos(delta) - math::sin(lat1) * sin_lat2,
            );
        let lat = math::to_deg(lat2).clamp(-90.0, 90.0);
        GeoPoint {
            lat,
            lon: math::wrap_deg_180(math::to_deg(lon2)),
        }
    }

    /// Unit-sphere position scaled to meters (x toward (0,0), z toward the north pole).
    pub(crate) fn to_cartesian_m(self) -> [f64; 3] {
        let lat = math::to_rad(self.lat);
        let lon = math::to_rad(self.lon);
        let c = math::cos(lat);
        [
            EARTH_RADIUS_M * c * math::cos(lon),
            EARTH_RADIUS_M * c * math::sin(lon),
            EARTH_RADIUS_M * math::sin(lat),
        ]
    }
}

/// Great-circle distance in meters. Symmetric bit-for-bit in its arguments.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = math::to_rad(a.lat);
    let lat2 = math::to_rad(b.lat);
    let half_dlat = math::to_rad((b.lat - a.lat).abs()) / 2.0;
    let half_dlon = math::to_rad((b.lon - a.lon).abs()) / 2.0;
    let s_lat = math::sin(half_dlat);
    let s_lon = math::sin(half_dlon);
    let (c1, c2) = (math::cos(lat1), math::cos(lat2));
    let h = (s_lat * s_lat + c1 * c2 * s_lon * s_lon).clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * math::asin(math::sqrt(h))
}

/// Compass bearing in `[0, 360)` of the great circle leaving `from` toward `to`.
pub fn initial_bearing(from: GeoPoint, to: GeoPoint) -> Result<f64> {
    if from == to {
        return Err(Error::CoincidentPoints);
    }
    let lat1 = math::to_rad(from.lat);
    let lat2 = math::to_rad(to.lat);
    let dlon = math::to_rad(to.lon - from.lon);
    let y = math::sin(dlon) * math::cos(lat2);
    let x = math::cos(lat1) * math::sin(lat2) - math::sin(lat1) * math::cos(lat2) * math::cos(dlon);
    if x == 0.0 && y == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(math::wrap_deg_360(math::to_deg(math::atan2(y, x))))
}

/// One government-reported curb ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct CurbRampRecord {
    pub ramp_id: String,
    pub location: GeoPoint,
    /// `None` when the source dataset has no install date; such ramps pass
    /// the install-before-capture filter.
    pub installed_on: Option<NaiveDate>,
}

/// Metadata of one equirectangular panorama.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoMeta {
    pano_id: String,
    location: GeoPoint,
    captured_on: NaiveDate,
    heading_deg: f64,
    width_px: u32,
    height_px: u32,
}

impl PanoMeta {
    /// Builds a panorama record. The heading is wrapped into `[0, 360)`;
    /// dimensions must be positive with `width == 2 * height`.
    pub fn new(
        pano_id: impl Into<String>,
        location: GeoPoint,
        captured_on: NaiveDate,
        heading_deg: f64,
        width_px: u32,
        height_px: u32,
    ) -> Result<Self> {
        if width_px == 0 || height_px == 0 {
            return Err(Error::ZeroDimension);
        }
        if width_px as u64 != 2 * height_px as u64 {
            return Err(Error::AspectRatio {
                width: width_px,
                height: height_px,
            });
        }
        if !heading_deg.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "heading {heading_deg} is not finite"
            )));
        }
        Ok(Self {
            pano_id: pano_id.into(),
            location,
            captured_on,
            heading_deg: math::wrap_deg_360(heading_deg),
            width_px,
            height_px,
        })
    }

    pub fn pano_id(&self) -> &str {
        &self.pano_id
    }

    pub fn location(&self) -> GeoPoint {
        self.location
    }

    pub fn captured_on(&self) -> NaiveDate {
        self.captured_on
    }

    /// Bearing of the image's center column.
    pub fn heading_deg(&self) -> f64 {
        self.heading_deg
    }

    pub fn width_px(&self) -> u32 {
        self.width_px
    }

    pub fn height_px(&self) -> u32 {
        self.height_px
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn distance_identity_is_zero() {
        let a = p(47.6, -122.3);
        assert_eq!(haversine_distance(a, a), 0.0);
    }

    #[test]
    fn one_degree_of_latitude() {
        // arc length (pi / 180) * R
        let expected = core::f64::consts::PI / 180.0 * EARTH_RADIUS_M;
        assert!((expected - 111_194.9).abs() < 0.1);
        let d = haversine_distance(p(0.0, 0.0), p(1.0, 0.0));
        assert!((d - expected).abs() < 1.0, "{d}");
    }

    #[test]
    fn antipodal_distance() {
        let d = haversine_distance(p(0.0, 0.0), p(0.0, 180.0));
        assert!((d - 20_015_087.0).abs() < 10.0, "{d}");
    }

    #[test]
    fn cardinal_bearings() {
        assert!((initial_bearing(p(0.0, 0.0), p(1.0, 0.0)).unwrap() - 0.0).abs() < 1e-9);
        assert!((initial_bearing(p(0.0, 0.0), p(0.0, 1.0)).unwrap() - 90.0).abs() < 1e-9);
    }

    #[test]
    fn small_offset_bearing_matches_tangent_plane() {
        // tangent plane oracle: atan2(dlon * cos(lat), dlat)
        let lat = 10.0_f64.to_radians();
        let oracle = (0.001 * lat.cos()).atan2(0.001).to_degrees();
        assert!((oracle - 44.56).abs() < 0.01);
        let b = initial_bearing(p(10.0, 10.0), p(10.001, 10.001)).unwrap();
        assert!((b - oracle).abs() < 0.5, "{b}");
    }

    #[test]
    fn bearing_to_self_is_an_error() {
        let a = p(1.0, 2.0);
        assert_eq!(initial_bearing(a, a), Err(Error::CoincidentPoints));
    }

    #[test]
    fn longitude_wraps_and_latitude_is_validated() {
        assert_eq!(p(0.0, 180.0).lon(), -180.0);
        assert!((p(0.0, 190.0).lon() - -170.0).abs() < 1e-12);
        assert!((p(0.0, -540.0).lon() - -180.0).abs() < 1e-12);
        assert_eq!(GeoPoint::new(91.0, 0.0), Err(Error::InvalidLatitude(91.0)));
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn pano_meta_enforces_aspect_and_wraps_heading() {
        let d = NaiveDate::from_ymd_opt(2022, 8, 1).unwrap();
        let m = PanoMeta::new("P1", p(45.5, -122.6), d, 450.0, 4096, 2048).unwrap();
        assert_eq!(m.heading_deg(), 90.0);
        assert!(matches!(
            PanoMeta::new("P1", p(45.5, -122.6), d, 0.0, 4000, 2048),
            Err(Error::AspectRatio { .. })
        ));
    }

    fn arb_point() -> impl Strategy<Value = GeoPoint> {
        (-89.0..89.0f64, -180.0..180.0f64).prop_map(|(a, b)| p(a, b))
    }

    fn near_pair() -> impl Strategy<Value = (GeoPoint, GeoPoint)> {
        (arb_point(), 0.0..360.0f64, 25.0..1000.0f64)
            .prop_map(|(a, brg, dist)| (a, a.destination(brg, dist)))
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in arb_point(), b in arb_point()) {
            prop_assert_eq!(haversine_distance(a, b), haversine_distance(b, a));
        }

        #[test]
        fn triangle_inequality(a in arb_point(), b in arb_point(), c in arb_point()) {
            let ab = haversine_distance(a, b);
            let bc = haversine_distance(b, c);
            let ac = haversine_distance(a, c);
            prop_assert!(ac <= (ab + bc) * (1.0 + 1e-6) + 1e-6);
        }

        #[test]
        fn reverse_bearing_is_opposite_near_equator(
            lat in -3.0..3.0f64, lon in -180.0..180.0f64, brg in 0.0..360.0f64, d in 1.0..1000.0f64,
        ) {
            let a = p(lat, lon);
            let b = a.destination(brg, d);
            let fwd = initial_bearing(a, b).unwrap();
            let back = initial_bearing(b, a).unwrap();
            let diff = crate::math::wrap_deg_180(back - fwd - 180.0);
            prop_assert!(diff.abs() < 1e-3, "{} {}", fwd, back);
        }

        #[test]
        fn reverse_bearing_differs_by_meridian_convergence((a, b) in near_pair()) {
            // away from the equator the back bearing rotates by roughly dlon * sin(lat)
            let fwd = initial_bearing(a, b).unwrap();
            let back = initial_bearing(b, a).unwrap();
            let diff = crate::math::wrap_deg_180(back - fwd - 180.0);
            let dlon = crate::math::wrap_deg_180(b.lon() - a.lon());
            let mid_lat = ((a.lat() + b.lat()) / 2.0).to_radians();
            let convergence = dlon * mid_lat.sin();
            prop_assert!((diff - convergence).abs() < 1e-3, "{} vs {}", diff, convergence);
        }

        #[test]
        fn stepping_along_bearing_approaches_target((a, b) in near_pair()) {
            let brg = initial_bearing(a, b).unwrap();
            let stepped = a.destination(brg, 10.0);
            prop_assert!(haversine_distance(stepped, b) < haversine_distance(a, b));
        }

        #[test]
        fn destination_travels_requested_distance(a in arb_point(), brg in 0.0..360.0f64, d in 1.0..5000.0f64) {
            let b = a.destination(brg, d);
            prop_assert!((haversine_distance(a, b) - d).abs() < 1e-4 * d.max(1.0));
        }
    }
}
