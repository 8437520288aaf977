//! Pipeline stages. Each stage reads the previous stages' files under the
//! output root and writes its own directory:
//!
//! ```text
//! world/      ramps.csv catalog.csv images/*.png ground_truth.jsonl world.json
//! ingest/     ramps.csv catalog.csv report.json
//! select/     panos.csv candidates.csv report.json
//! crops/      images/<pano>/<ramp>.png index.csv report.json
//! localize/   detections.jsonl report.json
//! aggregate/  labels.jsonl flags.jsonl report.json [heatmaps/*.png]
//! split/      splits.csv labels.jsonl report.json
//! stats/      stats.csv stats.json
//! eval/       pr_curve.csv metrics.json errors.jsonl
//! ```
//!
//! Work inside a stage runs on a thread pool of `workers` threads. Results
//! are collected in input order, so outputs do not depend on the pool size.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use curbscape_core::catalog::{fetch_image, PanoCatalog, RampDataset};
use curbscape_core::eval::{evaluate, EvalPano};
use curbscape_core::geo::PanoMeta;
use curbscape_core::heatmap::encode;
use curbscape_core::localize::{aggregate, localize, CropDetections, CropLocalizer, CropPoint, LabelFlag, MarkerOracleLocalizer};
use curbscape_core::projection::{CropImage, CropSampler, CropSpec};
use curbscape_core::selection::{run_selection, LabelCandidate};
use curbscape_core::split::{assign_splits, dataset_stats, leakage_pairs, spatial_components, LabelRecord, Split};
use curbscape_core::synth::generate;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{LocalizerKind, RunConfig};
use crate::imageio::{self, DirectoryProvider};
use crate::ingest::{self, ColumnMap};
use crate::process::ProcessLocalizer;
use crate::{fsutil, report, store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Synth,
    Ingest,
    Select,
    Crops,
    Localize,
    Aggregate,
    Split,
    Stats,
    Eval,
}

impl Stage {
    pub const CHAIN: [Stage; 8] = [
        Stage::Ingest,
        Stage::Select,
        Stage::Crops,
        Stage::Localize,
        Stage::Aggregate,
        Stage::Split,
        Stage::Stats,
        Stage::Eval,
    ];
}

/// File locations under the output root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, stage: &str, file: &str) -> PathBuf {
        self.root.join(stage).join(file)
    }

    pub fn world_images(&self) -> PathBuf {
        self.path("world", "images")
    }

    pub fn ground_truth(&self) -> PathBuf {
        self.path("world", "ground_truth.jsonl")
    }

    pub fn labels(&self) -> PathBuf {
        self.path("aggregate", "labels.jsonl")
    }

    pub fn split_labels(&self) -> PathBuf {
        self.path("split", "labels.jsonl")
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fsutil::write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    fsutil::write_atomic_with(path, |w| {
        for r in rows {
            serde_json::to_writer(&mut *w, r).map_err(std::io::Error::other)?;
            writeln!(w)?;
        }
        Ok(())
    })
    .with_context(|| format!("writing {}", path.display()))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    fsutil::write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize()
        .map(|row| row.with_context(|| format!("parsing {}", path.display())))
        .collect()
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if !path.exists() {
        bail!("{} not found; {hint}", path.display());
    }
    Ok(())
}

/// File-system-safe name for an id; ids are otherwise arbitrary strings.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect::<String>()
        .trim_start_matches('.')
        .to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PanoRow {
    pano_id: String,
    kind: PanoKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PanoKind {
    Positive,
    Null,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CropRow {
    pano_id: String,
    ramp_id: String,
    yaw_deg: f64,
    /// Relative to the crops directory; empty when the crop is missing.
    file: String,
    status: CropStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum CropStatus {
    Ok,
    Unavailable,
}

/// One crop's localizer outcome. Keys are declared in sorted order.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectionLine {
    error: Option<String>,
    pano_id: String,
    points: Vec<CropPoint>,
    ramp_id: String,
    yaw_deg: f64,
}

#[derive(Debug, Serialize)]
struct FlagLine<'a> {
    flags: &'a [LabelFlag],
    labels: usize,
    pano_id: &'a str,
    provenance: &'a [String],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitRow {
    pano_id: String,
    split: Split,
}

/// Sends existing crop files to a process localizer without re-encoding.
struct OnDisk<'a> {
    loc: &'a ProcessLocalizer,
    path: &'a Path,
}

impl CropLocalizer for OnDisk<'_> {
    fn locate(&self, _crop: &CropImage) -> std::result::Result<Vec<CropPoint>, String> {
        self.loc.request(&self.path.to_string_lossy())
    }
}

pub struct Pipeline {
    cfg: RunConfig,
    layout: Layout,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .context("building worker pool")?;
        Ok(Self {
            layout: Layout::new(&cfg.out),
            cfg,
            pool,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        let started = std::time::Instant::now();
        match stage {
            Stage::Synth => self.synth(),
            Stage::Ingest => self.ingest(),
            Stage::Select => self.select(),
            Stage::Crops => self.crops(),
            Stage::Localize => self.localize(),
            Stage::Aggregate => self.aggregate(),
            Stage::Split => self.split(),
            Stage::Stats => self.stats(),
            Stage::Eval => self.eval(),
        }
        .with_context(|| format!("stage {stage:?}"))?;
        info!("{stage:?} done in {:.2?}", started.elapsed());
        Ok(())
    }

    /// Runs every stage in order. A synthetic world is generated first when
    /// `synthetic` is set; evaluation is skipped when no ground truth exists.
    pub fn run_all(&self) -> Result<()> {
        if self.cfg.synthetic {
            self.run(Stage::Synth)?;
        }
        for stage in Stage::CHAIN {
            if stage == Stage::Eval && self.gt_path().is_none() {
                info!("no ground truth available; skipping eval");
                continue;
            }
            self.run(stage)?;
        }
        Ok(())
    }

    fn synth(&self) -> Result<()> {
        let spec = self.cfg.world_spec();
        let world = generate(&spec)?;
        let l = &self.layout;
        info!("world: {} panoramas, {} ramps", world.catalog.len(), world.ramps.len());

        let mut buf = Vec::new();
        ingest::write_ramp_csv(&world.ramps, &mut buf)?;
        fsutil::write_atomic(&l.path("world", "ramps.csv"), &buf)?;
        buf.clear();
        ingest::write_pano_catalog(&world.catalog, &mut buf)?;
        fsutil::write_atomic(&l.path("world", "catalog.csv"), &buf)?;
        store::write_labels(&l.ground_truth(), &world.ground_truth)?;
        write_json(&l.path("world", "world.json"), &spec)?;

        let dir = l.world_images();
        fs::create_dir_all(&dir)?;
        self.pool.install(|| {
            world.catalog.panos().par_iter().try_for_each(|p| -> Result<()> {
                let img = world.render(p.pano_id()).expect("catalog pano");
                imageio::save_png(&dir.join(format!("{}.png", file_stem(p.pano_id()))), &img)?;
                Ok(())
            })
        })
    }

    fn world_file(&self, name: &str) -> Option<PathBuf> {
        let p = self.layout.path("world", name);
        (self.cfg.synthetic || p.exists()).then_some(p)
    }

    fn ingest(&self) -> Result<()> {
        let (ramps_path, map) = match (&self.cfg.ramps, self.world_file("ramps.csv")) {
            (Some(p), _) => (p.clone(), self.cfg.column_map()),
            (None, Some(p)) => (p, ColumnMap::canonical()),
            (None, None) => bail!("no ramp table: pass --ramps, or run synth first"),
        };
        let format = if self.cfg.ramps.is_some() { self.cfg.ramp_format } else { ingest::RampFormat::Csv };
        let catalog_path = match (&self.cfg.catalog, self.world_file("catalog.csv")) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => p,
            (None, None) => bail!("no panorama catalog: pass --catalog, or run synth first"),
        };
        let src = File::open(&ramps_path).with_context(|| format!("opening {}", ramps_path.display()))?;
        let parsed = ingest::parse_ramp_table(BufReader::new(src), format, &map, &self.cfg.city)
            .with_context(|| format!("parsing {}", ramps_path.display()))?;
        let src = File::open(&catalog_path).with_context(|| format!("opening {}", catalog_path.display()))?;
        let catalog = ingest::parse_pano_catalog(BufReader::new(src))
            .with_context(|| format!("parsing {}", catalog_path.display()))?;

        let l = &self.layout;
        let mut buf = Vec::new();
        ingest::write_ramp_csv(&parsed.dataset, &mut buf)?;
        fsutil::write_atomic(&l.path("ingest", "ramps.csv"), &buf)?;
        buf.clear();
        ingest::write_pano_catalog(&catalog, &mut buf)?;
        fsutil::write_atomic(&l.path("ingest", "catalog.csv"), &buf)?;
        if parsed.skipped > 0 {
            warn!("skipped {} of {} ramp rows", parsed.skipped, parsed.total_rows);
        }
        info!("ingested {} ramps and {} panoramas", parsed.dataset.len(), catalog.len());
        write_json(
            &l.path("ingest", "report.json"),
            &serde_json::json!({
                "city": self.cfg.city,
                "ramp_rows": parsed.total_rows,
                "ramps": parsed.dataset.len(),
                "skipped_rows": parsed.skipped,
                "unparsed_install_dates": parsed.bad_dates,
                "panos": catalog.len(),
            }),
        )
    }

    fn load_ingested(&self) -> Result<(RampDataset, PanoCatalog)> {
        let l = &self.layout;
        let rp = l.path("ingest", "ramps.csv");
        let cp = l.path("ingest", "catalog.csv");
        require(&rp, "run ingest first")?;
        require(&cp, "run ingest first")?;
        let ramps = ingest::parse_ramp_table(
            BufReader::new(File::open(&rp)?),
            ingest::RampFormat::Csv,
            &ColumnMap::canonical(),
            &self.cfg.city,
        )?
        .dataset;
        let catalog = self.load_catalog()?;
        Ok((ramps, catalog))
    }

    fn load_catalog(&self) -> Result<PanoCatalog> {
        let cp = self.layout.path("ingest", "catalog.csv");
        require(&cp, "run ingest first")?;
        Ok(ingest::parse_pano_catalog(BufReader::new(File::open(&cp)?))?)
    }

    fn select(&self) -> Result<()> {
        let (ramps, catalog) = self.load_ingested()?;
        let sel = run_selection(&catalog, &ramps, &self.cfg.selection_params())?;
        let mut rows: Vec<PanoRow> = sel
            .positives
            .iter()
            .map(|id| PanoRow {
                pano_id: id.clone(),
                kind: PanoKind::Positive,
            })
            .chain(sel.nulls.iter().map(|id| PanoRow {
                pano_id: id.clone(),
                kind: PanoKind::Null,
            }))
            .collect();
        rows.sort_by(|a, b| a.pano_id.cmp(&b.pano_id));
        let l = &self.layout;
        write_csv(&l.path("select", "panos.csv"), &rows)?;
        write_csv(&l.path("select", "candidates.csv"), &sel.candidates)?;
        if sel.report.null_shortfall > 0 {
            warn!("only {} of the requested null panoramas are eligible", sel.report.nulls_sampled);
        }
        info!(
            "selected {} positives, {} nulls, {} candidates",
            sel.report.positives, sel.report.nulls_sampled, sel.report.candidates
        );
        write_json(&l.path("select", "report.json"), &sel.report)
    }

    fn load_selection(&self) -> Result<(Vec<PanoRow>, Vec<LabelCandidate>)> {
        let l = &self.layout;
        let pp = l.path("select", "panos.csv");
        let cp = l.path("select", "candidates.csv");
        require(&pp, "run select first")?;
        require(&cp, "run select first")?;
        Ok((read_csv(&pp)?, read_csv(&cp)?))
    }

    fn images_root(&self) -> Result<PathBuf> {
        match &self.cfg.images {
            Some(p) => Ok(p.clone()),
            None if self.cfg.synthetic || self.layout.world_images().exists() => Ok(self.layout.world_images()),
            None => bail!("no image directory: pass --images"),
        }
    }

    fn crops(&self) -> Result<()> {
        let catalog = self.load_catalog()?;
        let (_, candidates) = self.load_selection()?;
        let provider = DirectoryProvider::new(self.images_root()?);
        let geometry = self.cfg.crop_spec()?;
        let mut by_pano: BTreeMap<&str, Vec<&LabelCandidate>> = BTreeMap::new();
        for c in &candidates {
            by_pano.entry(c.pano_id.as_str()).or_default().push(c);
        }
        let mut samplers: BTreeMap<(u32, u32), CropSampler> = BTreeMap::new();
        let mut work: Vec<(&PanoMeta, Vec<&LabelCandidate>)> = Vec::new();
        for (id, cands) in by_pano {
            let pano = catalog
                .get(id)
                .with_context(|| format!("candidate pano {id} is not in the catalog"))?;
            let dims = (pano.width_px(), pano.height_px());
            samplers
                .entry(dims)
                .or_insert_with(|| CropSampler::new(&geometry, dims.0, dims.1));
            work.push((pano, cands));
        }
        let crops_dir = self.layout.root.join("crops");
        let per_pano: Vec<Vec<CropRow>> = self.pool.install(|| {
            work.par_iter()
                .map(|(pano, cands)| -> Result<Vec<CropRow>> {
                    let img = fetch_image(&provider, pano).map_err(|e| anyhow::anyhow!("panorama {}: {e}", pano.pano_id()))?;
                    let Some(img) = img else {
                        warn!("image for {} unavailable", pano.pano_id());
                        return Ok(cands
                            .iter()
                            .map(|c| CropRow {
                                pano_id: c.pano_id.clone(),
                                ramp_id: c.ramp_id.clone(),
                                yaw_deg: c.bearing_deg,
                                file: String::new(),
                                status: CropStatus::Unavailable,
                            })
                            .collect());
                    };
                    let sampler = &samplers[&(pano.width_px(), pano.height_px())];
                    cands
                        .iter()
                        .map(|c| {
                            let crop = sampler.extract(&img, pano, c.bearing_deg)?;
                            let file = format!("images/{}/{}.png", file_stem(&c.pano_id), file_stem(&c.ramp_id));
                            imageio::save_png(&crops_dir.join(&file), &crop.image)?;
                            Ok(CropRow {
                                pano_id: c.pano_id.clone(),
                                ramp_id: c.ramp_id.clone(),
                                yaw_deg: c.bearing_deg,
                                file,
                                status: CropStatus::Ok,
                            })
                        })
                        .collect()
                })
                .collect::<Result<_>>()
        })?;
        let rows: Vec<CropRow> = per_pano.into_iter().flatten().collect();
        let ok = rows.iter().filter(|r| r.status == CropStatus::Ok).count();
        info!("wrote {ok} crops; {} unavailable", rows.len() - ok);
        write_csv(&crops_dir.join("index.csv"), &rows)?;
        write_json(
            &crops_dir.join("report.json"),
            &serde_json::json!({ "crops": ok, "unavailable": rows.len() - ok }),
        )
    }

    fn localize(&self) -> Result<()> {
        let crops_dir = self.layout.root.join("crops");
        let index = crops_dir.join("index.csv");
        require(&index, "run crops first")?;
        let rows: Vec<CropRow> = read_csv(&index)?;
        let geometry = self.cfg.crop_spec()?;
        let process = match self.cfg.localizer {
            LocalizerKind::Oracle => None,
            LocalizerKind::Process => {
                let (prog, args) = self.cfg.localizer_cmd.split_first().expect("validated");
                Some(
                    ProcessLocalizer::spawn(prog, args, self.layout.path("localize", "scratch"))
                        .with_context(|| format!("starting localizer {prog}"))?,
                )
            }
        };
        let oracle = MarkerOracleLocalizer::default();
        let lines: Vec<DetectionLine> = self.pool.install(|| {
            rows.par_iter()
                .map(|r| {
                    let outcome = match r.status {
                        CropStatus::Unavailable => Err("panorama image unavailable".to_string()),
                        CropStatus::Ok => self.locate_one(&crops_dir.join(&r.file), r, &geometry, &oracle, process.as_ref()),
                    };
                    let (points, error) = match outcome {
                        Ok(p) => (p, None),
                        Err(e) => (Vec::new(), Some(e)),
                    };
                    DetectionLine {
                        error,
                        pano_id: r.pano_id.clone(),
                        points,
                        ramp_id: r.ramp_id.clone(),
                        yaw_deg: r.yaw_deg,
                    }
                })
                .collect()
        });
        drop(process);
        let _ = fs::remove_dir(self.layout.path("localize", "scratch"));
        let failed = lines.iter().filter(|l| l.error.is_some()).count();
        let points: usize = lines.iter().map(|l| l.points.len()).sum();
        info!("localized {} crops: {points} points, {failed} failures", lines.len());
        write_jsonl(&self.layout.path("localize", "detections.jsonl"), &lines)?;
        write_json(
            &self.layout.path("localize", "report.json"),
            &serde_json::json!({ "crops": lines.len(), "failed": failed, "points": points }),
        )
    }

    fn locate_one(
        &self,
        path: &Path,
        row: &CropRow,
        geometry: &CropSpec,
        oracle: &MarkerOracleLocalizer,
        process: Option<&ProcessLocalizer>,
    ) -> std::result::Result<Vec<CropPoint>, String> {
        let image = imageio::load_rgb(path).map_err(|e| e.to_string())?;
        let crop = CropImage {
            image,
            spec: geometry.with_yaw(row.yaw_deg),
            pano_id: row.pano_id.clone(),
        };
        let found = match process {
            Some(loc) => localize(&OnDisk { loc, path }, &crop),
            None => localize(oracle, &crop),
        };
        found.map_err(|e| e.to_string())
    }

    fn aggregate(&self) -> Result<()> {
        let catalog = self.load_catalog()?;
        let (panos, _) = self.load_selection()?;
        let det_path = self.layout.path("localize", "detections.jsonl");
        require(&det_path, "run localize first")?;
        let geometry = self.cfg.crop_spec()?;
        let mut per_pano: BTreeMap<String, Vec<CropDetections>> = BTreeMap::new();
        for d in read_jsonl::<DetectionLine>(&det_path)? {
            per_pano.entry(d.pano_id).or_default().push(CropDetections {
                spec: geometry.with_yaw(d.yaw_deg),
                ramp_id: Some(d.ramp_id),
                outcome: match d.error {
                    Some(e) => Err(e),
                    None => Ok(d.points),
                },
            });
        }
        let sets: Vec<_> = self.pool.install(|| {
            panos
                .par_iter()
                .map(|row| -> Result<_> {
                    let pano = catalog
                        .get(&row.pano_id)
                        .with_context(|| format!("selected pano {} is not in the catalog", row.pano_id))?;
                    let dets = per_pano.get(&row.pano_id).map_or(&[][..], Vec::as_slice);
                    Ok(aggregate(pano, dets, self.cfg.dedup_radius))
                })
                .collect::<Result<_>>()
        })?;
        let records: Vec<LabelRecord> = sets
            .iter()
            .map(|s| LabelRecord {
                city: self.cfg.city.clone(),
                height: s.height,
                labels: s.labels.clone(),
                pano_id: s.pano_id.clone(),
                split: None,
                width: s.width,
            })
            .collect();
        store::write_labels(&self.layout.labels(), &records)?;
        let flags: Vec<FlagLine> = sets
            .iter()
            .map(|s| FlagLine {
                flags: &s.flags,
                labels: s.labels.len(),
                pano_id: &s.pano_id,
                provenance: &s.provenance,
            })
            .collect();
        write_jsonl(&self.layout.path("aggregate", "flags.jsonl"), &flags)?;
        let labels: usize = records.iter().map(|r| r.labels.len()).sum();
        let flagged: usize = sets.iter().map(|s| s.flags.len()).sum();
        info!("aggregated {labels} labels over {} panoramas; {flagged} flags", records.len());

        if self.cfg.dump_heatmaps {
            let hm = self.cfg.heatmap_config();
            let dir = self.layout.path("aggregate", "heatmaps");
            self.pool.install(|| {
                records.par_iter().try_for_each(|r| -> Result<()> {
                    let map = encode(&r.labels, r.width, r.height, &hm);
                    imageio::save_heatmap_png(&dir.join(format!("{}.png", file_stem(&r.pano_id))), &map)?;
                    Ok(())
                })
            })?;
        }
        write_json(
            &self.layout.path("aggregate", "report.json"),
            &serde_json::json!({ "panos": records.len(), "labels": labels, "flags": flagged }),
        )
    }

    fn split(&self) -> Result<()> {
        let catalog = self.load_catalog()?;
        let (panos, _) = self.load_selection()?;
        let selected = catalog.subset(panos.iter().map(|p| p.pano_id.as_str()));
        let components = spatial_components(&selected, self.cfg.link_dist);
        let assignment = assign_splits(&components, self.cfg.split_fractions()?, self.cfg.seed)?;
        let leaks = leakage_pairs(&selected, &assignment, self.cfg.link_dist);
        if let Some((a, b)) = leaks.first() {
            bail!("panoramas {a} and {b} are linked but assigned to different splits");
        }
        let rows: Vec<SplitRow> = assignment
            .splits
            .iter()
            .map(|(id, s)| SplitRow {
                pano_id: id.clone(),
                split: *s,
            })
            .collect();
        let l = &self.layout;
        write_csv(&l.path("split", "splits.csv"), &rows)?;
        let labels_path = l.labels();
        if labels_path.exists() {
            let mut records = store::read_labels(&labels_path)?;
            for r in &mut records {
                r.split = assignment.get(&r.pano_id);
            }
            store::write_labels(&l.split_labels(), &records)?;
        } else {
            warn!("{} not found; writing splits only", labels_path.display());
        }
        let [train, val, test] = assignment.counts();
        info!(
            "{} components split into train {train}, val {val}, test {test}",
            assignment.component_count
        );
        write_json(
            &l.path("split", "report.json"),
            &serde_json::json!({
                "seed": assignment.seed,
                "link_dist_m": self.cfg.link_dist,
                "components": assignment.component_count,
                "train": train,
                "val": val,
                "test": test,
                "leakage_pairs": leaks.len(),
            }),
        )
    }

    fn stats(&self) -> Result<()> {
        let l = &self.layout;
        let path = [l.split_labels(), l.labels()]
            .into_iter()
            .find(|p| p.exists())
            .context("no label store found; run aggregate first")?;
        let records = store::read_labels(&path)?;
        let rows = dataset_stats(&records, None);
        write_csv(&l.path("stats", "stats.csv"), &rows)?;
        write_json(&l.path("stats", "stats.json"), &rows)
    }

    fn gt_path(&self) -> Option<PathBuf> {
        self.cfg.gt.clone().or_else(|| self.world_file("ground_truth.jsonl"))
    }

    fn eval(&self) -> Result<()> {
        let pred_path = self.cfg.pred.clone().unwrap_or_else(|| self.layout.labels());
        let gt_path = self.gt_path().context("no ground truth: pass --gt")?;
        require(&pred_path, "pass --pred or run aggregate first")?;
        require(&gt_path, "pass --gt")?;
        let preds = store::read_labels(&pred_path).with_context(|| format!("reading {}", pred_path.display()))?;
        let gts: BTreeMap<String, LabelRecord> = store::read_labels(&gt_path)
            .with_context(|| format!("reading {}", gt_path.display()))?
            .into_iter()
            .map(|r| (r.pano_id.clone(), r))
            .collect();
        let mut missing = BTreeSet::new();
        let panos: Vec<EvalPano> = preds
            .into_iter()
            .map(|p| {
                let gts = match gts.get(&p.pano_id) {
                    Some(g) => g.labels.clone(),
                    None => {
                        missing.insert(p.pano_id.clone());
                        Vec::new()
                    }
                };
                EvalPano {
                    pano_id: p.pano_id,
                    width: p.width,
                    preds: p.labels,
                    gts,
                }
            })
            .collect();
        if !missing.is_empty() {
            warn!("{} predicted panoramas have no ground-truth record", missing.len());
        }
        let e = evaluate(&panos, self.cfg.match_radius, self.cfg.match_mode, self.cfg.eval_thresh);
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        info!(
            "precision {} recall {} f1 {} ap {}",
            fmt(e.prf.precision),
            fmt(e.prf.recall),
            fmt(e.prf.f1),
            fmt(e.curve.ap)
        );
        let dir = self.layout.root.join("eval");
        report::emit_report(&e, self.cfg.match_radius, self.cfg.match_mode, &dir)
            .with_context(|| format!("writing {}", dir.display()))
    }
}
