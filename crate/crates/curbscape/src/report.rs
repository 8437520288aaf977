//! Evaluation outputs: `pr_curve.csv`, `metrics.json` and `errors.jsonl`.

use std::io::{self, Write};
use std::path::Path;

use curbscape_core::eval::{Evaluation, MatchCounts, MatchMode, Prf};
use serde::Serialize;

use crate::fsutil;

#[derive(Debug, Serialize)]
struct Metrics<'a> {
    ap: Option<f64>,
    operating_threshold: f64,
    match_radius_px: f64,
    match_mode: MatchMode,
    #[serde(flatten)]
    prf: &'a Prf,
    counts: &'a MatchCounts,
    panos: usize,
    curve_points: usize,
}

#[derive(Debug, Serialize)]
struct ErrorLine<'a> {
    kind: &'static str,
    pano_id: &'a str,
    x: f64,
    y: f64,
    confidence: Option<f64>,
    ramp_id: Option<&'a str>,
}

/// Writes the three report files into `out_dir`.
pub fn emit_report(eval: &Evaluation, match_radius_px: f64, mode: MatchMode, out_dir: &Path) -> io::Result<()> {
    fsutil::write_atomic_with(&out_dir.join("pr_curve.csv"), |w| {
        writeln!(w, "threshold,precision,recall")?;
        for p in &eval.curve.points {
            let recall = p.recall.map(|r| r.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{}", p.threshold, p.precision, recall)?;
        }
        Ok(())
    })?;

    let metrics = Metrics {
        ap: eval.curve.ap,
        operating_threshold: eval.operating_threshold,
        match_radius_px,
        match_mode: mode,
        prf: &eval.prf,
        counts: &eval.counts,
        panos: eval.results.len(),
        curve_points: eval.curve.points.len(),
    };
    let mut json = serde_json::to_vec_pretty(&metrics).map_err(io::Error::other)?;
    json.push(b'\n');
    fsutil::write_atomic(&out_dir.join("metrics.json"), &json)?;

    fsutil::write_atomic_with(&out_dir.join("errors.jsonl"), |w| {
        for (pano_id, r) in &eval.results {
            let lines = r
                .false_positives
                .iter()
                .map(|l| ("false_positive", l, Some(l.confidence)))
                .chain(r.missed.iter().map(|l| ("false_negative", l, None)));
            for (kind, l, confidence) in lines {
                let line = ErrorLine {
                    kind,
                    pano_id,
                    x: l.x,
                    y: l.y,
                    confidence,
                    ramp_id: l.ramp_id.as_deref(),
                };
                serde_json::to_writer(&mut *w, &line).map_err(io::Error::other)?;
                writeln!(w)?;
            }
        }
        Ok(())
    })
}
