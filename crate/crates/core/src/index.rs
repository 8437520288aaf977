//! Exact radius queries over geographic points.
//!
//! Points are bucketed on a uniform 3D grid over their Earth-centered
//! positions, which avoids special cases at the poles and the antimeridian.
//! A query visits the cells overlapping the chord-length ball equivalent to
//! the requested arc radius, then filters candidates with
//! [`haversine_distance`], so results match a linear scan exactly.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::geo::{haversine_distance, GeoPoint, EARTH_RADIUS_M};
use crate::math;

/// Default grid cell edge in meters.
pub const DEFAULT_CELL_M: f64 = 50.0;

type CellKey = (i32, i32, i32);

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cell_m: f64,
    points: Vec<GeoPoint>,
    cells: BTreeMap<CellKey, Vec<u32>>,
}

impl SpatialIndex {
    pub fn build(points: &[GeoPoint]) -> Self {
        Self::with_cell_size(points, DEFAULT_CELL_M)
    }

    pub fn with_cell_size(points: &[GeoPoint], cell_m: f64) -> Self {
        assert!(cell_m > 0.0 && cell_m.is_finite(), "cell size must be positive");
        let mut cells: BTreeMap<CellKey, Vec<u32>> = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key_of(p.to_cartesian_m(), cell_m)).or_default().push(i as u32);
        }
        Self {
            cell_m,
            points: points.to_vec(),
            cells,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> GeoPoint {
        self.points[i]
    }

    /// Indices of all points `q` with `haversine_distance(center, q) <= radius_m`,
    /// in ascending order.
    pub fn radius_query(&self, center: GeoPoint, radius_m: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_candidate(center, radius_m, |i| {
            if haversine_distance(center, self.points[i]) <= radius_m {
                out.push(i);
            }
        });
        out.sort_unstable();
        out
    }

    /// Whether any point lies within `radius_m` of `center`.
    pub fn any_within(&self, center: GeoPoint, radius_m: f64) -> bool {
        let mut found = false;
        self.for_each_candidate(center, radius_m, |i| {
            if !found && haversine_distance(center, self.points[i]) <= radius_m {
                found = true;
            }
        });
        found
    }

    fn for_each_candidate(&self, center: GeoPoint, radius_m: f64, mut f: impl FnMut(usize)) {
        if self.points.is_empty() || radius_m.is_nan() || radius_m < 0.0 {
            return;
        }
        let half_circumference = math::PI * EARTH_RADIUS_M;
        if radius_m >= half_circumference {
            (0..self.points.len()).for_each(f);
            return;
        }
        // chord length for the arc, padded for rounding in the cartesian positions
        let chord = 2.0 * EARTH_RADIUS_M * math::sin(radius_m / (2.0 * EARTH_RADIUS_M)) + 1e-3;
        let c = center.to_cartesian_m();
        let lo = key_of([c[0] - chord, c[1] - chord, c[2] - chord], self.cell_m);
        let hi = key_of([c[0] + chord, c[1] + chord, c[2] + chord], self.cell_m);
        let span = |a: i32, b: i32| (b as i64 - a as i64 + 1) as u128;
        let visits = span(lo.0, hi.0) * span(lo.1, hi.1) * span(lo.2, hi.2);
        if visits > self.cells.len() as u128 {
            // cheaper to walk the occupied cells than the query box
            for (&(x, y, z), ids) in &self.cells {
                if (lo.0..=hi.0).contains(&x) && (lo.1..=hi.1).contains(&y) && (lo.2..=hi.2).contains(&z) {
                    ids.iter().for_each(|&i| f(i as usize));
                }
            }
            return;
        }
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                for z in lo.2..=hi.2 {
                    if let Some(ids) = self.cells.get(&(x, y, z)) {
                        ids.iter().for_each(|&i| f(i as usize));
                    }
                }
            }
        }
    }
}

fn key_of(p: [f64; 3], cell_m: f64) -> CellKey {
    let k = |v: f64| math::floor(v / cell_m) as i32;
    (k(p[0]), k(p[1]), k(p[2]))
}
