//! The label store: one JSON object per line, keys sorted, one record per
//! panorama, records ordered by `pano_id` when written in bulk.
//!
//! Coordinates are rounded half-up to one decimal on write, so reading and
//! re-writing a store reproduces it byte for byte.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use curbscape_core::split::LabelRecord;

use crate::fsutil;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate pano_id {0:?}")]
    Duplicate(String),
}

/// Round half up to one decimal place.
pub fn round_coord(v: f64) -> f64 {
    (v * 10.0 + 0.5).floor() / 10.0
}

/// The canonical line for `record`, without the trailing newline.
pub fn encode_record(record: &LabelRecord) -> String {
    let mut r = record.clone();
    for l in &mut r.labels {
        l.x = round_coord(l.x);
        // rounding can push a point onto the seam column
        if l.x >= r.width as f64 {
            l.x -= r.width as f64;
        }
        l.y = round_coord(l.y);
    }
    serde_json::to_string(&r).expect("label records always serialize")
}

pub fn decode_records(source: impl BufRead) -> Result<Vec<LabelRecord>, StoreError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.pano_id.clone()) {
            return Err(StoreError::Duplicate(rec.pano_id));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Reads a store; a missing or empty file holds zero records.
pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, StoreError> {
    match fs::File::open(path) {
        Ok(f) => decode_records(io::BufReader::new(f)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, mut seen: BTreeSet<String>) -> Result<(), StoreError> {
    for id in ids {
        if !seen.insert(id.to_string()) {
            return Err(StoreError::Duplicate(id.to_string()));
        }
    }
    Ok(())
}

/// Replaces the store with `records`, sorted by `pano_id`. Returns the count.
pub fn write_labels(path: &Path, records: &[LabelRecord]) -> Result<usize, StoreError> {
    check_unique(records.iter().map(|r| r.pano_id.as_str()), BTreeSet::new())?;
    let mut sorted: Vec<&LabelRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.pano_id.cmp(&b.pano_id));
    fsutil::write_atomic_with(path, |w| {
        for r in &sorted {
            writeln!(w, "{}", encode_record(r))?;
        }
        Ok(())
    })?;
    Ok(records.len())
}

/// Appends `records` in the given order, rejecting any `pano_id` already in
/// the store or repeated in `records`.
pub fn append_labels(path: &Path, records: &[LabelRecord]) -> Result<usize, StoreError> {
    let existing: BTreeSet<String> = read_labels(path)?.into_iter().map(|r| r.pano_id).collect();
    check_unique(records.iter().map(|r| r.pano_id.as_str()), existing)?;
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = io::BufWriter::new(fs::OpenOptions::new().create(true).append(true).open(path)?);
    for r in records {
        writeln!(f, "{}", encode_record(r))?;
    }
    f.flush()?;
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use curbscape_core::heatmap::{LabelSource, PointLabel};
    use curbscape_core::split::Split;
    use proptest::prelude::*;

    fn rec(id: &str, pts: &[(f64, f64)]) -> LabelRecord {
        LabelRecord {
            city: "portland".into(),
            height: 2048,
            labels: pts
                .iter()
                .map(|&(x, y)| PointLabel::new(x, y, 0.75, LabelSource::Localizer).with_ramp("r1"))
                .collect(),
            pano_id: id.into(),
            split: Some(Split::Val),
            width: 4096,
        }
    }

    #[test]
    fn line_has_sorted_keys_and_rounded_coords() {
        let line = encode_record(&rec("P1", &[(10.04, 20.05)]));
        assert_eq!(
            line,
            r#"{"city":"portland","height":2048,"labels":[{"confidence":0.75,"ramp_id":"r1","source":"localizer","x":10.0,"y":20.1}],"pano_id":"P1","split":"val","width":4096}"#
        );
        let mut none = rec("P2", &[]);
        none.split = None;
        assert!(encode_record(&none).contains(r#""split":null"#));
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.jsonl");
        let recs = vec![rec("b", &[(1.5, 2.5)]), rec("a", &[]), rec("c", &[(4095.9, 0.0), (7.0, 8.0)])];
        assert_eq!(write_labels(&p, &recs).unwrap(), 3);
        let back = read_labels(&p).unwrap();
        let mut sorted = recs.clone();
        sorted.sort_by(|a, b| a.pano_id.cmp(&b.pano_id));
        assert_eq!(back, sorted);
    }

    #[test]
    fn append_rejects_existing_id() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.jsonl");
        append_labels(&p, &[rec("P1", &[])]).unwrap();
        match append_labels(&p, &[rec("P2", &[]), rec("P1", &[])]) {
            Err(StoreError::Duplicate(id)) => assert_eq!(id, "P1"),
            other => panic!("{other:?}"),
        }
        assert_eq!(read_labels(&p).unwrap().len(), 1);
    }

    #[test]
    fn empty_store_has_no_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.jsonl");
        fs::write(&p, "").unwrap();
        assert!(read_labels(&p).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let good = encode_record(&rec("a", &[]));
        let src = format!("{good}\n{{\"pano_id\": 3}}\n");
        match decode_records(src.as_bytes()) {
            Err(StoreError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn reencoding_is_byte_stable(pts in proptest::collection::vec((0.0..4096.0f64, 0.0..2048.0f64), 0..8)) {
            let line = encode_record(&rec("p", &pts));
            let back = decode_records(line.as_bytes()).unwrap();
            prop_assert_eq!(encode_record(&back[0]), line);
        }
    }
}
