//! Ramp tables and panorama catalogs.
//!
//! Ramp tables arrive in per-city schemas, so the id / latitude / longitude
//! / install-date fields are addressed through a [`ColumnMap`]. Rows whose
//! coordinates do not parse are skipped and counted; if more than half of
//! the rows are skipped the mapping is probably wrong and parsing fails.
//!
//! The canonical ramp CSV is `ramp_id,lat,lon,installed_on` and the catalog
//! CSV is exactly `pano_id,lat,lon,captured_on,heading,width,height`.

use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use curbscape_core::catalog::{PanoCatalog, RampDataset};
use curbscape_core::geo::{CurbRampRecord, GeoPoint, PanoMeta};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const CATALOG_HEADER: [&str; 7] = ["pano_id", "lat", "lon", "captured_on", "heading", "width", "height"];
pub const RAMP_HEADER: [&str; 4] = ["ramp_id", "lat", "lon", "installed_on"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("geojson feature {feature}: {message}")]
    GeoJson { feature: usize, message: String },
    #[error("geojson: {0}")]
    GeoJsonDocument(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("{skipped} of {total} rows skipped; check the column mapping")]
    TooManySkipped { skipped: usize, total: usize },
    #[error("catalog line {line}: {source}")]
    CatalogRow {
        line: u64,
        #[source]
        source: curbscape_core::Error,
    },
    #[error(transparent)]
    Core(#[from] curbscape_core::Error),
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line());
    IngestError::Csv {
        line,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampFormat {
    Csv,
    Geojson,
}

impl FromStr for RampFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(RampFormat::Csv),
            "geojson" | "json" => Ok(RampFormat::Geojson),
            _ => Err(format!("unknown ramp format {s:?}")),
        }
    }
}

/// Field names for the ramp id, coordinates and optional install date.
/// For GeoJSON, `lat` and `lon` are unused; coordinates come from the point
/// geometry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub id: String,
    pub lat: String,
    pub lon: String,
    pub installed: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            installed: Some("installed".into()),
        }
    }
}

impl ColumnMap {
    /// The mapping for files written by [`write_ramp_csv`].
    pub fn canonical() -> Self {
        Self {
            id: "ramp_id".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            installed: Some("installed_on".into()),
        }
    }
}

/// A parsed ramp table and what was left out.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRamps {
    pub dataset: RampDataset,
    pub total_rows: usize,
    pub skipped: usize,
    /// Rows kept without an install date because the value did not parse.
    pub bad_dates: usize,
}

fn parse_coord(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Accepts `YYYY-MM-DD`, optionally followed by a time part.
fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let head = s.get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

fn date_field(raw: Option<&str>, bad_dates: &mut usize) -> Option<NaiveDate> {
    let raw = raw.map(str::trim).filter(|s| !s.is_empty())?;
    let d = parse_date(raw);
    if d.is_none() {
        *bad_dates += 1;
    }
    d
}

pub fn parse_ramp_table(
    source: impl Read,
    format: RampFormat,
    map: &ColumnMap,
    city: &str,
) -> Result<ParsedRamps, IngestError> {
    let (records, total, bad_dates) = match format {
        RampFormat::Csv => ramps_from_csv(source, map)?,
        RampFormat::Geojson => ramps_from_geojson(source, map)?,
    };
    let skipped = total - records.len();
    if skipped * 2 > total {
        return Err(IngestError::TooManySkipped { skipped, total });
    }
    Ok(ParsedRamps {
        dataset: RampDataset::new(city, records)?,
        total_rows: total,
        skipped,
        bad_dates,
    })
}

fn ramps_from_csv(source: impl Read, map: &ColumnMap) -> Result<(Vec<CurbRampRecord>, usize, usize), IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let (ci, la, lo) = (col(&map.id)?, col(&map.lat)?, col(&map.lon)?);
    let inst = map.installed.as_deref().and_then(|n| headers.iter().position(|h| h == n));

    let (mut out, mut total, mut bad_dates) = (Vec::new(), 0, 0);
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        total += 1;
        let id = row.get(ci).unwrap_or("").trim();
        let coords = (row.get(la).and_then(parse_coord), row.get(lo).and_then(parse_coord));
        let (Some(lat), Some(lon)) = coords else { continue };
        let Ok(location) = GeoPoint::new(lat, lon) else { continue };
        if id.is_empty() {
            continue;
        }
        out.push(CurbRampRecord {
            ramp_id: id.to_string(),
            location,
            installed_on: date_field(inst.and_then(|i| row.get(i)), &mut bad_dates),
        });
    }
    Ok((out, total, bad_dates))
}

fn json_scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn ramps_from_geojson(mut source: impl Read, map: &ColumnMap) -> Result<(Vec<CurbRampRecord>, usize, usize), IngestError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| IngestError::GeoJsonDocument(e.to_string()))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(IngestError::GeoJsonDocument("not a FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| IngestError::GeoJsonDocument("missing features array".into()))?;

    let (mut out, mut bad_dates) = (Vec::new(), 0);
    for (i, f) in features.iter().enumerate() {
        let bad = |m: &str| IngestError::GeoJson {
            feature: i,
            message: m.to_string(),
        };
        if f.get("type").and_then(Value::as_str) != Some("Feature") {
            return Err(bad("not a Feature"));
        }
        let props = match f.get("properties") {
            None | Some(Value::Null) => None,
            Some(Value::Object(m)) => Some(m),
            Some(_) => return Err(bad("properties must be an object")),
        };
        let id = props
            .and_then(|p| p.get(&map.id))
            .or_else(|| f.get("id"))
            .and_then(json_scalar)
            .filter(|s| !s.is_empty());
        let point = f
            .get("geometry")
            .filter(|g| g.get("type").and_then(Value::as_str) == Some("Point"))
            .and_then(|g| g.get("coordinates"))
            .and_then(Value::as_array);
        let coords = point.and_then(|c| Some((c.first()?.as_f64()?, c.get(1)?.as_f64()?)));
        let (Some(id), Some((lon, lat))) = (id, coords) else { continue };
        let Ok(location) = GeoPoint::new(lat, lon) else { continue };
        let raw_date = map
            .installed
            .as_deref()
            .and_then(|k| props.and_then(|p| p.get(k)))
            .and_then(json_scalar);
        out.push(CurbRampRecord {
            ramp_id: id,
            location,
            installed_on: date_field(raw_date.as_deref(), &mut bad_dates),
        });
    }
    Ok((out, features.len(), bad_dates))
}

/// Writes the canonical ramp CSV. Floats use the shortest representation
/// that reads back to the same value.
pub fn write_ramp_csv(dataset: &RampDataset, sink: impl Write) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(RAMP_HEADER).map_err(csv_error)?;
    for r in dataset.ramps() {
        w.write_record([
            r.ramp_id.clone(),
            r.location.lat().to_string(),
            r.location.lon().to_string(),
            r.installed_on.map(|d| d.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses the catalog CSV. Headings outside `[0, 360)` are normalized with
/// a warning.
pub fn parse_pano_catalog(source: impl Read) -> Result<PanoCatalog, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers().map_err(csv_error)?;
    if headers.iter().ne(CATALOG_HEADER) {
        return Err(IngestError::Csv {
            line: 1,
            message: format!("expected header {}", CATALOG_HEADER.join(",")),
        });
    }
    let mut panos = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");
        let bad = |what: &str| IngestError::Csv {
            line,
            message: format!("unparseable {what} {:?}", field(CATALOG_HEADER.iter().position(|h| *h == what).unwrap())),
        };
        let lat = parse_coord(field(1)).ok_or_else(|| bad("lat"))?;
        let lon = parse_coord(field(2)).ok_or_else(|| bad("lon"))?;
        let date = parse_date(field(3)).ok_or_else(|| bad("captured_on"))?;
        let heading = parse_coord(field(4)).ok_or_else(|| bad("heading"))?;
        let width: u32 = field(5).parse().map_err(|_| bad("width"))?;
        let height: u32 = field(6).parse().map_err(|_| bad("height"))?;
        if !(0.0..360.0).contains(&heading) {
            log::warn!("catalog line {line}: heading {heading} normalized into [0, 360)");
        }
        let row_err = |source| IngestError::CatalogRow { line, source };
        let loc = GeoPoint::new(lat, lon).map_err(row_err)?;
        panos.push(PanoMeta::new(field(0), loc, date, heading, width, height).map_err(row_err)?);
    }
    Ok(PanoCatalog::new(panos)?)
}

pub fn write_pano_catalog(catalog: &PanoCatalog, sink: impl Write) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CATALOG_HEADER).map_err(csv_error)?;
    for p in catalog.panos() {
        w.write_record([
            p.pano_id().to_string(),
            p.location().lat().to_string(),
            p.location().lon().to_string(),
            p.captured_on().to_string(),
            p.heading_deg().to_string(),
            p.width_px().to_string(),
            p.height_px().to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
