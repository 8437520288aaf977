//! Point labels as Gaussian heatmaps, and back.
//!
//! A label at image position `c` contributes `exp(-|q - c / downscale|^2 / (2 sigma^2))`
//! to heatmap cell `q`; overlapping kernels combine by max, so every cell
//! stays in `[0, 1]`. Decoding keeps 8-neighborhood maxima at or above the
//! peak threshold, suppresses weaker peaks within `nms_radius` cells of a
//! stronger one, and refines each survivor to sub-cell precision.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::image::RgbImage;
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapConfig {
    /// Kernel width in heatmap cells.
    pub sigma: f64,
    pub peak_threshold: f64,
    /// Image pixels per heatmap cell.
    pub downscale: u32,
    /// Suppression radius in heatmap cells.
    pub nms_radius: f64,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            peak_threshold: 0.55,
            downscale: 4,
            nms_radius: 5.0,
        }
    }
}

impl HeatmapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!("sigma {} must be positive", self.sigma)));
        }
        if !(self.peak_threshold > 0.0 && self.peak_threshold < 1.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "peak threshold {} must be in (0, 1)",
                self.peak_threshold
            )));
        }
        if self.downscale == 0 {
            return Err(Error::InvalidParameter("downscale must be at least 1".into()));
        }
        if self.nms_radius.is_nan() || self.nms_radius < 0.0 {
            return Err(Error::InvalidParameter("nms radius must be non-negative".into()));
        }
        Ok(())
    }
}

/// Single-channel grid of values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    /// Values are clamped into `[0, 1]`; NaN becomes 0.
    pub fn from_values(width: u32, height: u32, mut values: Vec<f64>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(Error::BufferSize {
                expected,
                actual: values.len(),
            });
        }
        for v in &mut values {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Left-right mirror image.
    pub fn mirrored(&self) -> Self {
        let w = self.width as usize;
        let mut values = self.values.clone();
        for row in values.chunks_exact_mut(w.max(1)) {
            row.reverse();
        }
        Self { values, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Government,
    Localizer,
    Manual,
    Detector,
}

impl LabelSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelSource::Government => "government",
            LabelSource::Localizer => "localizer",
            LabelSource::Manual => "manual",
            LabelSource::Detector => "detector",
        }
    }
}

/// A curb-ramp point in full-resolution image pixels.
///
/// Fields are declared in key order so serialized records have sorted keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointLabel {
    /// In `(0, 1]`.
    pub confidence: f64,
    /// The ramp this label was derived from, when known.
    pub ramp_id: Option<String>,
    pub source: LabelSource,
    pub x: f64,
    pub y: f64,
}

impl PointLabel {
    pub fn new(x: f64, y: f64, confidence: f64, source: LabelSource) -> Self {
        Self {
            x,
            y,
            confidence,
            source,
            ramp_id: None,
        }
    }

    pub fn with_ramp(mut self, ramp_id: impl Into<String>) -> Self {
        self.ramp_id = Some(ramp_id.into());
        self
    }

    pub fn check(&self, width: u32, height: u32) -> Result<()> {
        let in_x = self.x >= 0.0 && self.x < width as f64;
        let in_y = self.y >= 0.0 && self.y <= height as f64;
        if !in_x || !in_y {
            return Err(Error::InvalidParameter(alloc::format!(
                "point ({}, {}) outside {width}x{height}",
                self.x,
                self.y
            )));
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "confidence {} outside (0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Renders `points` (image pixels) onto a heatmap of
/// `image_dims / downscale` cells.
pub fn encode(points: &[PointLabel], image_width: u32, image_height: u32, cfg: &HeatmapConfig) -> Heatmap {
    let ds = cfg.downscale.max(1);
    let (w, h) = (image_width / ds, image_height / ds);
    let mut map = Heatmap::zeros(w, h);
    if w == 0 || h == 0 {
        return map;
    }
    let inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    let mut gx = vec![0.0; w as usize];
    let mut gy = vec![0.0; h as usize];
    for p in points {
        let (cx, cy) = (p.x / ds as f64, p.y / ds as f64);
        for (i, g) in gx.iter_mut().enumerate() {
            let d = i as f64 - cx;
            *g = math::exp(-d * d * inv);
        }
        for (j, g) in gy.iter_mut().enumerate() {
            let d = j as f64 - cy;
            *g = math::exp(-d * d * inv);
        }
        for (row, &fy) in map.values.chunks_exact_mut(w as usize).zip(&gy) {
            if fy == 0.0 {
                continue;
            }
            for (cell, &fx) in row.iter_mut().zip(&gx) {
                let v = fx * fy;
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
    map
}

/// Extracts peaks as detector labels in image pixels, sorted by descending
/// confidence.
pub fn decode(map: &Heatmap, cfg: &HeatmapConfig) -> Vec<PointLabel> {
    let (w, h) = (map.width as i64, map.height as i64);
    let mut peaks: Vec<(f64, u32, u32)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = map.get(x as u32, y as u32);
            if v < cfg.peak_threshold || v.is_nan() || v <= 0.0 {
                continue;
            }
            if is_peak(map, x, y, v) {
                peaks.push((v, y as u32, x as u32));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));

    let r2 = cfg.nms_radius * cfg.nms_radius;
    let mut kept: Vec<(f64, u32, u32)> = Vec::new();
    for p in peaks {
        let clash = kept.iter().any(|k| {
            let dx = k.2 as f64 - p.2 as f64;
            let dy = k.1 as f64 - p.1 as f64;
            dx * dx + dy * dy <= r2
        });
        if !clash {
            kept.push(p);
        }
    }

    let ds = cfg.downscale.max(1) as f64;
    let mut out: Vec<(PointLabel, u32, u32)> = kept
        .into_iter()
        .map(|(v, y, x)| {
            let (dx, dy, amp) = refine(map, x, y);
            let conf = amp.clamp(v, 1.0);
            (
                PointLabel::new((x as f64 + dx) * ds, (y as f64 + dy) * ds, conf, LabelSource::Detector),
                y,
                x,
            )
        })
        .collect();
    out.sort_by(|a, b| {
        b.0.confidence
            .total_cmp(&a.0.confidence)
            .then((a.1, a.2).cmp(&(b.1, b.2)))
    });
    out.into_iter().map(|(p, _, _)| p).collect()
}

/// Strict 8-neighborhood maximum; on plateaus the smallest `(y, x)` cell wins.
fn is_peak(map: &Heatmap, x: i64, y: i64, v: f64) -> bool {
    for ny in y - 1..=y + 1 {
        for nx in x - 1..=x + 1 {
            if (nx, ny) == (x, y) || nx < 0 || ny < 0 || nx >= map.width as i64 || ny >= map.height as i64 {
                continue;
            }
            let n = map.get(nx as u32, ny as u32);
            if n > v || (n == v && (ny, nx) < (y, x)) {
                return false;
            }
        }
    }
    true
}

/// Sub-cell offset and peak amplitude from a Gaussian fit to the 3x3
/// neighborhood: a parabola through the log values along each axis, which is
/// exact for an isolated kernel. Axes without two positive neighbors fall
/// back to the value-weighted centroid.
fn refine(map: &Heatmap, x: u32, y: u32) -> (f64, f64, f64) {
    let center = map.get(x, y);
    let lc = math::ln(center);
    let axis = |prev: Option<f64>, next: Option<f64>| -> (f64, f64, bool) {
        match (prev, next) {
            (Some(l), Some(r)) if l > 0.0 && r > 0.0 => {
                let (ll, lr) = (math::ln(l), math::ln(r));
                let b = (lr - ll) / 2.0;
                let a = (ll + lr) / 2.0 - lc;
                if a < 0.0 {
                    let t = (-b / (2.0 * a)).clamp(-0.5, 0.5);
                    (t, -b * b / (4.0 * a), true)
                } else {
                    (0.0, 0.0, true)
                }
            }
            _ => (0.0, 0.0, false),
        }
    };
    let at = |dx: i64, dy: i64| -> Option<f64> {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        (nx >= 0 && ny >= 0 && nx < map.width as i64 && ny < map.height as i64).then(|| map.get(nx as u32, ny as u32))
    };
    let (mut dx, gain_x, fit_x) = axis(at(-1, 0), at(1, 0));
    let (mut dy, gain_y, fit_y) = axis(at(0, -1), at(0, 1));
    if !fit_x || !fit_y {
        let (cx, cy) = centroid(map, x, y);
        if !fit_x {
            dx = cx;
        }
        if !fit_y {
            dy = cy;
        }
    }
    (dx, dy, math::exp(lc + gain_x + gain_y))
}

fn centroid(map: &Heatmap, x: u32, y: u32) -> (f64, f64) {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= map.width as i64 || ny >= map.height as i64 {
                continue;
            }
            let v = map.get(nx as u32, ny as u32);
            sw += v;
            sx += v * dx as f64;
            sy += v * dy as f64;
        }
    }
    if sw > 0.0 {
        (sx / sw, sy / sw)
    } else {
        (0.0, 0.0)
    }
}

/// Mirrors an image and its labels left to right: `x' = width - 1 - x`.
pub fn hflip(image: &RgbImage, points: &[PointLabel]) -> (RgbImage, Vec<PointLabel>) {
    let w = image.width() as f64;
    let pts = points
        .iter()
        .map(|p| PointLabel {
            x: w - 1.0 - p.x,
            ..p.clone()
        })
        .collect();
    (image.flipped_horizontal(), pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(x: f64, y: f64) -> PointLabel {
        PointLabel::new(x, y, 1.0, LabelSource::Manual)
    }

    #[test]
    fn no_points_gives_zeros() {
        let h = encode(&[], 4096, 2048, &HeatmapConfig::default());
        assert_eq!((h.width(), h.height()), (1024, 512));
        assert!(h.values().iter().all(|&v| v == 0.0));
        assert!(decode(&h, &HeatmapConfig::default()).is_empty());
    }

    #[test]
    fn single_kernel_values() {
        let h = encode(&[pt(400.0, 400.0)], 4096, 2048, &HeatmapConfig::default());
        assert_eq!(h.get(100, 100), 1.0);
        assert!((h.get(110, 100) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((h.get(110, 100) - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn overlapping_kernels_take_max() {
        // direct evaluation: exp(-(2^2) / (2 * 10^2))
        let expected = (-4.0f64 / 200.0).exp();
        assert!((expected - 0.9802).abs() < 1e-4);
        let h = encode(&[pt(400.0, 400.0), pt(416.0, 400.0)], 4096, 2048, &HeatmapConfig::default());
        assert!((h.get(102, 100) - expected).abs() < 1e-12);
    }

    #[test]
    fn round_trip_single_point() {
        let cfg = HeatmapConfig::default();
        let out = decode(&encode(&[pt(400.0, 400.0)], 4096, 2048, &cfg), &cfg);
        assert_eq!(out.len(), 1);
        assert!((out[0].x - 400.0).abs() < 2.0 && (out[0].y - 400.0).abs() < 2.0);
        assert_eq!(out[0].confidence, 1.0);
        assert_eq!(out[0].source, LabelSource::Detector);
    }

    #[test]
    fn round_trip_two_separated_points() {
        let cfg = HeatmapConfig::default();
        // 60 heatmap cells apart
        let pts = [pt(1000.0, 800.0), pt(1240.0, 800.0)];
        let out = decode(&encode(&pts, 4096, 2048, &cfg), &cfg);
        assert_eq!(out.len(), 2);
        for p in &pts {
            assert!(out.iter().any(|q| (q.x - p.x).hypot(q.y - p.y) < 2.0));
        }
    }

    #[test]
    fn half_cell_offsets_are_recovered() {
        let cfg = HeatmapConfig::default();
        let out = decode(&encode(&[pt(402.0, 602.0)], 4096, 2048, &cfg), &cfg);
        assert_eq!(out.len(), 1);
        assert!((out[0].x - 402.0).abs() < 0.05 && (out[0].y - 602.0).abs() < 0.05, "{:?}", out[0]);
        assert!(out[0].confidence > 0.999);
    }

    #[test]
    fn plateau_keeps_smallest_cell() {
        let mut vals = vec![0.0; 25];
        vals[2 * 5 + 2] = 0.9;
        vals[2 * 5 + 3] = 0.9;
        let h = Heatmap::from_values(5, 5, vals).unwrap();
        let cfg = HeatmapConfig {
            downscale: 1,
            ..Default::default()
        };
        let out = decode(&h, &cfg);
        assert_eq!(out.len(), 1);
        assert!((out[0].y - 2.0).abs() < 1e-12);
        assert!(out[0].x >= 2.0 && out[0].x < 3.0);
    }

    #[test]
    fn nms_suppresses_nearby_weaker_peak() {
        let mut vals = vec![0.0; 100];
        vals[5 * 10 + 2] = 0.9;
        vals[5 * 10 + 6] = 0.8;
        let h = Heatmap::from_values(10, 10, vals).unwrap();
        let cfg = HeatmapConfig {
            downscale: 1,
            ..Default::default()
        };
        let out = decode(&h, &cfg);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence, 0.9);
        let far = HeatmapConfig { nms_radius: 3.0, ..cfg };
        assert_eq!(decode(&h, &far).len(), 2);
    }

    #[test]
    fn flip_examples() {
        let img = RgbImage::filled(4096, 2, [0; 3]);
        let (_, pts) = hflip(&img, &[pt(0.0, 5.0)]);
        assert_eq!(pts[0].x, 4095.0);
        assert_eq!(pts[0].y, 5.0);
        let mut img = RgbImage::filled(7, 3, [0; 3]);
        img.put(1, 2, [4, 5, 6]);
        let src = [pt(1.5, 2.0), pt(6.0, 0.0)];
        let (fi, fp) = hflip(&img, &src);
        let (bi, bp) = hflip(&fi, &fp);
        assert_eq!(bi, img);
        assert_eq!(bp, src);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = HeatmapConfig {
            peak_threshold: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(HeatmapConfig::default().validate().is_ok());
    }

    fn arb_points(w: f64, h: f64) -> impl Strategy<Value = Vec<PointLabel>> {
        proptest::collection::vec((0.0..w, 0.0..h), 0..6)
            .prop_map(|v| v.into_iter().map(|(x, y)| pt(x, y)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn flip_commutes_with_encode_at_unit_downscale(pts in arb_points(256.0, 128.0)) {
            let cfg = HeatmapConfig { downscale: 1, ..Default::default() };
            let img = RgbImage::filled(256, 128, [0; 3]);
            let (_, flipped) = hflip(&img, &pts);
            let a = encode(&flipped, 256, 128, &cfg);
            let b = encode(&pts, 256, 128, &cfg).mirrored();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn encode_is_monotone(pts in arb_points(512.0, 256.0), extra in (0.0..512.0f64, 0.0..256.0f64)) {
            let cfg = HeatmapConfig::default();
            let a = encode(&pts, 512, 256, &cfg);
            let mut more = pts.clone();
            more.push(pt(extra.0, extra.1));
            let b = encode(&more, 512, 256, &cfg);
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!(y >= x);
            }
        }

        #[test]
        fn lower_threshold_keeps_every_peak(pts in arb_points(1024.0, 512.0), t1 in 0.1..0.9f64, t2 in 0.1..0.9f64) {
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let base = HeatmapConfig::default();
            let mut map = encode(&pts, 1024, 512, &base);
            // perturb to create secondary bumps
            for (i, v) in map.values.iter_mut().enumerate() {
                *v *= 0.8 + 0.2 * (((i * 7919) % 97) as f64 / 97.0);
            }
            let strict = decode(&map, &HeatmapConfig { peak_threshold: hi, ..base });
            let loose = decode(&map, &HeatmapConfig { peak_threshold: lo, ..base });
            for p in &strict {
                prop_assert!(loose.iter().any(|q| q.x == p.x && q.y == p.y && q.confidence == p.confidence));
            }
            for w in loose.windows(2) {
                prop_assert!(w[0].confidence >= w[1].confidence);
            }
            prop_assert!(loose.iter().all(|p| p.confidence >= lo));
        }
    }
}
