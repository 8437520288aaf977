//! Ramp datasets, panorama catalogs, and the boundary to whatever supplies
//! panorama pixels.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::geo::{CurbRampRecord, PanoMeta};
use crate::image::EquirectImage;
use crate::{Error, Result};

/// The ramps of one city, sorted by `ramp_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct RampDataset {
    city: String,
    ramps: Vec<CurbRampRecord>,
}

impl RampDataset {
    /// Sorts the records by id and rejects duplicate ids.
    pub fn new(city: impl Into<String>, mut ramps: Vec<CurbRampRecord>) -> Result<Self> {
        ramps.sort_by(|a, b| a.ramp_id.cmp(&b.ramp_id));
        if let Some(w) = ramps.windows(2).find(|w| w[0].ramp_id == w[1].ramp_id) {
            return Err(Error::DuplicateRampId(w[0].ramp_id.clone()));
        }
        Ok(Self {
            city: city.into(),
            ramps,
        })
    }

    pub fn city(&self) -> &str {
        &self.city
    }

    pub fn ramps(&self) -> &[CurbRampRecord] {
        &self.ramps
    }

    pub fn len(&self) -> usize {
        self.ramps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ramps.is_empty()
    }

    pub fn get(&self, ramp_id: &str) -> Option<&CurbRampRecord> {
        self.ramps
            .binary_search_by(|r| r.ramp_id.as_str().cmp(ramp_id))
            .ok()
            .map(|i| &self.ramps[i])
    }
}

/// Panorama metadata indexed by id, iterated in id order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PanoCatalog {
    panos: Vec<PanoMeta>,
}

impl PanoCatalog {
    pub fn new(mut panos: Vec<PanoMeta>) -> Result<Self> {
        panos.sort_by(|a, b| a.pano_id().cmp(b.pano_id()));
        if let Some(w) = panos.windows(2).find(|w| w[0].pano_id() == w[1].pano_id()) {
            return Err(Error::DuplicatePanoId(w[0].pano_id().to_string()));
        }
        Ok(Self { panos })
    }

    pub fn panos(&self) -> &[PanoMeta] {
        &self.panos
    }

    pub fn len(&self) -> usize {
        self.panos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panos.is_empty()
    }

    pub fn get(&self, pano_id: &str) -> Option<&PanoMeta> {
        self.panos
            .binary_search_by(|p| p.pano_id().cmp(pano_id))
            .ok()
            .map(|i| &self.panos[i])
    }

    /// Keeps only the panoramas whose id is in `ids`.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> PanoCatalog {
        let keep: BTreeMap<&str, ()> = ids.into_iter().map(|id| (id, ())).collect();
        PanoCatalog {
            panos: self
                .panos
                .iter()
                .filter(|p| keep.contains_key(p.pano_id()))
                .cloned()
                .collect(),
        }
    }
}

/// Supplies panorama pixels by id.
///
/// `Ok(None)` means the image is not available, which is a normal outcome.
/// Implementations must return identical pixels for repeated fetches of the
/// same id and tolerate concurrent fetches of distinct ids.
pub trait ImageProvider: Sync {
    fn fetch(&self, pano_id: &str) -> core::result::Result<Option<EquirectImage>, String>;
}

impl<P: ImageProvider + ?Sized> ImageProvider for &P {
    fn fetch(&self, pano_id: &str) -> core::result::Result<Option<EquirectImage>, String> {
        (**self).fetch(pano_id)
    }
}

/// Fetches the image for `pano` and checks it against the catalog dimensions.
pub fn fetch_image<P: ImageProvider + ?Sized>(
    provider: &P,
    pano: &PanoMeta,
) -> Result<Option<EquirectImage>> {
    let img = provider
        .fetch(pano.pano_id())
        .map_err(|message| Error::Provider {
            pano_id: pano.pano_id().to_string(),
            message,
        })?;
    match img {
        Some(img) if img.width() != pano.width_px() || img.height() != pano.height_px() => {
            Err(Error::DimensionMismatch {
                pano_id: pano.pano_id().to_string(),
                expected_w: pano.width_px(),
                expected_h: pano.height_px(),
                actual_w: img.width(),
                actual_h: img.height(),
            })
        }
        other => Ok(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::image::RgbImage;
    use chrono::NaiveDate;

    fn pano(id: &str, w: u32) -> PanoMeta {
        PanoMeta::new(
            id,
            GeoPoint::new(45.5, -122.6).unwrap(),
            NaiveDate::from_ymd_opt(2022, 8, 1).unwrap(),
            90.0,
            w,
            w / 2,
        )
        .unwrap()
    }

    struct Fixed(u32);
    impl ImageProvider for Fixed {
        fn fetch(&self, id: &str) -> core::result::Result<Option<EquirectImage>, String> {
            if id == "missing" {
                return Ok(None);
            }
            Ok(Some(
                EquirectImage::new(RgbImage::filled(self.0, self.0 / 2, [0; 3])).unwrap(),
            ))
        }
    }

    #[test]
    fn catalog_rejects_duplicates_and_sorts() {
        let err = PanoCatalog::new(alloc::vec![pano("P1", 64), pano("P1", 64)]).unwrap_err();
        assert_eq!(err, Error::DuplicatePanoId("P1".into()));
        let cat = PanoCatalog::new(alloc::vec![pano("b", 64), pano("a", 64)]).unwrap();
        assert_eq!(cat.panos()[0].pano_id(), "a");
        assert!(cat.get("b").is_some());
        assert!(cat.get("c").is_none());
    }

    #[test]
    fn fetch_checks_dimensions() {
        let p = pano("P1", 4096);
        assert_eq!(fetch_image(&Fixed(4096), &p).unwrap().unwrap().width(), 4096);
        assert!(fetch_image(&Fixed(4096), &pano("missing", 4096)).unwrap().is_none());
        assert!(matches!(
            fetch_image(&Fixed(1024), &p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ramp_dataset_rejects_duplicates() {
        let r = |id: &str| CurbRampRecord {
            ramp_id: id.into(),
            location: GeoPoint::new(0.0, 0.0).unwrap(),
            installed_on: None,
        };
        assert_eq!(
            RampDataset::new("x", alloc::vec![r("a"), r("a")]).unwrap_err(),
            Error::DuplicateRampId("a".into())
        );
        let ds = RampDataset::new("x", alloc::vec![r("b"), r("a")]).unwrap();
        assert_eq!(ds.ramps()[0].ramp_id, "a");
        assert!(ds.get("b").is_some());
    }
}
