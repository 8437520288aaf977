//! The run configuration: one flat document whose keys mirror the
//! command-line flags. Values come from the defaults, then the config file,
//! then flags.

use std::path::{Path, PathBuf};

use clap::Args;
use curbscape_core::eval::MatchMode;
use curbscape_core::heatmap::HeatmapConfig;
use curbscape_core::projection::CropSpec;
use curbscape_core::selection::SelectionParams;
use curbscape_core::split::SplitFractions;
use curbscape_core::synth::WorldSpec;
use serde::{Deserialize, Serialize};

use crate::ingest::{ColumnMap, RampFormat};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LocalizerKind {
    /// Exact-color detector for synthetic markers.
    Oracle,
    /// External process; see `localizer-cmd`.
    Process,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    pub ramps: Option<PathBuf>,
    pub ramp_format: RampFormat,
    pub id_column: String,
    pub lat_column: String,
    pub lon_column: String,
    /// Empty when the table has no install dates.
    pub installed_column: String,
    pub catalog: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub city: String,

    pub synthetic: bool,
    pub seed: u64,
    /// Panoramas in a synthetic world.
    pub panos: usize,

    pub pano_radius: f64,
    pub cand_radius: f64,
    pub null_dist: f64,
    pub null_frac: f64,

    pub fov: f64,
    pub pitch: f64,
    pub crop_size: u32,

    pub sigma: f64,
    pub peak_thresh: f64,
    pub downscale: u32,
    pub nms_radius: f64,
    /// Also write each aggregated panorama's labels as a heatmap PNG.
    pub dump_heatmaps: bool,

    pub localizer: LocalizerKind,
    pub localizer_cmd: Vec<String>,
    pub dedup_radius: f64,

    /// Train, val and test shares, comma separated.
    pub split: String,
    pub link_dist: f64,

    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub match_radius: f64,
    pub match_mode: MatchMode,
    /// Confidence cut for the headline precision / recall / F1.
    pub eval_thresh: f64,

    /// 0 means one per available core.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let map = ColumnMap::default();
        let sel = SelectionParams::default();
        let hm = HeatmapConfig::default();
        let crop = CropSpec::default();
        Self {
            out: PathBuf::from("out"),
            ramps: None,
            ramp_format: RampFormat::Csv,
            id_column: map.id,
            lat_column: map.lat,
            lon_column: map.lon,
            installed_column: map.installed.unwrap_or_default(),
            catalog: None,
            images: None,
            city: "synthetic".into(),
            synthetic: false,
            seed: 0,
            panos: 50,
            pano_radius: sel.pano_radius_m,
            cand_radius: sel.candidate_radius_m,
            null_dist: sel.null_min_dist_m,
            null_frac: sel.null_fraction,
            fov: crop.fov_deg,
            pitch: crop.pitch_deg,
            crop_size: crop.square_px,
            sigma: hm.sigma,
            peak_thresh: hm.peak_threshold,
            downscale: hm.downscale,
            nms_radius: hm.nms_radius,
            dump_heatmaps: false,
            localizer: LocalizerKind::Oracle,
            localizer_cmd: Vec::new(),
            dedup_radius: curbscape_core::localize::DEDUP_RADIUS_PX,
            split: "0.7,0.2,0.1".into(),
            link_dist: curbscape_core::split::LINK_DIST_M,
            pred: None,
            gt: None,
            match_radius: curbscape_core::eval::MATCH_RADIUS_PX,
            match_mode: MatchMode::Proximity,
            eval_thresh: hm.peak_threshold,
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Checks every knob; the derived parameter sets below assume this passed.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("{v} must be positive")))
            }
        };
        positive("pano-radius", self.pano_radius)?;
        positive("cand-radius", self.cand_radius)?;
        positive("null-dist", self.null_dist)?;
        positive("dedup-radius", self.dedup_radius)?;
        positive("link-dist", self.link_dist)?;
        positive("match-radius", self.match_radius)?;
        if !(0.0..1.0).contains(&self.null_frac) {
            return Err(invalid("null-frac", "must be in [0, 1)"));
        }
        self.crop_spec()?;
        self.heatmap_config()
            .validate()
            .map_err(|e| invalid("heatmap", e.to_string()))?;
        self.split_fractions()?;
        if !(0.0..=1.0).contains(&self.eval_thresh) {
            return Err(invalid("eval-thresh", "must be in [0, 1]"));
        }
        if self.localizer == LocalizerKind::Process && self.localizer_cmd.is_empty() {
            return Err(invalid("localizer-cmd", "required for the process localizer"));
        }
        if self.id_column.is_empty() || self.lat_column.is_empty() || self.lon_column.is_empty() {
            return Err(invalid("columns", "id, lat and lon column names must be set"));
        }
        Ok(())
    }

    pub fn selection_params(&self) -> SelectionParams {
        SelectionParams {
            pano_radius_m: self.pano_radius,
            candidate_radius_m: self.cand_radius,
            null_min_dist_m: self.null_dist,
            null_fraction: self.null_frac,
            seed: self.seed,
        }
    }

    pub fn crop_spec(&self) -> Result<CropSpec, ConfigError> {
        CropSpec::new(0.0, self.pitch, self.fov, self.crop_size).map_err(|e| invalid("crop", e.to_string()))
    }

    pub fn heatmap_config(&self) -> HeatmapConfig {
        HeatmapConfig {
            sigma: self.sigma,
            peak_threshold: self.peak_thresh,
            downscale: self.downscale,
            nms_radius: self.nms_radius,
        }
    }

    pub fn split_fractions(&self) -> Result<SplitFractions, ConfigError> {
        let parts: Vec<f64> = self
            .split
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| invalid("split", e.to_string()))?;
        let [train, val, test] = parts[..] else {
            return Err(invalid("split", "expected three comma-separated fractions"));
        };
        SplitFractions::new(train, val, test).map_err(|e| invalid("split", e.to_string()))
    }

    pub fn column_map(&self) -> ColumnMap {
        ColumnMap {
            id: self.id_column.clone(),
            lat: self.lat_column.clone(),
            lon: self.lon_column.clone(),
            installed: Some(self.installed_column.clone()).filter(|s| !s.is_empty()),
        }
    }

    pub fn world_spec(&self) -> WorldSpec {
        let mut spec = WorldSpec::new(self.seed, self.panos);
        spec.city = self.city.clone();
        spec.null_fraction = self.null_frac;
        spec
    }
}

/// Command-line overrides for every config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Config file (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub ramps: Option<PathBuf>,
    #[arg(long, global = true)]
    pub ramp_format: Option<RampFormat>,
    #[arg(long, global = true)]
    pub id_column: Option<String>,
    #[arg(long, global = true)]
    pub lat_column: Option<String>,
    #[arg(long, global = true)]
    pub lon_column: Option<String>,
    #[arg(long, global = true)]
    pub installed_column: Option<String>,
    /// Panorama catalog CSV.
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    /// Directory of `<pano_id>.png|jpg` images.
    #[arg(long, global = true)]
    pub images: Option<PathBuf>,
    #[arg(long, global = true)]
    pub city: Option<String>,
    /// Generate a synthetic world instead of ingesting files.
    #[arg(long, global = true)]
    pub synthetic: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Panoramas in the synthetic world.
    #[arg(long, global = true)]
    pub panos: Option<usize>,
    #[arg(long, global = true)]
    pub pano_radius: Option<f64>,
    #[arg(long, global = true)]
    pub cand_radius: Option<f64>,
    #[arg(long, global = true)]
    pub null_dist: Option<f64>,
    #[arg(long, global = true)]
    pub null_frac: Option<f64>,
    #[arg(long, global = true)]
    pub fov: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub pitch: Option<f64>,
    #[arg(long, global = true)]
    pub crop_size: Option<u32>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub peak_thresh: Option<f64>,
    #[arg(long, global = true)]
    pub downscale: Option<u32>,
    #[arg(long, global = true)]
    pub nms_radius: Option<f64>,
    #[arg(long, global = true)]
    pub dump_heatmaps: bool,
    #[arg(long, global = true, value_enum)]
    pub localizer: Option<LocalizerKind>,
    /// Localizer command line, split on whitespace.
    #[arg(long, global = true)]
    pub localizer_cmd: Option<String>,
    #[arg(long, global = true)]
    pub dedup_radius: Option<f64>,
    /// Train,val,test shares.
    #[arg(long, global = true)]
    pub split: Option<String>,
    #[arg(long, global = true)]
    pub link_dist: Option<f64>,
    /// Prediction label store for `eval`.
    #[arg(long, global = true)]
    pub pred: Option<PathBuf>,
    /// Ground-truth label store for `eval`.
    #[arg(long, global = true)]
    pub gt: Option<PathBuf>,
    #[arg(long, global = true)]
    pub match_radius: Option<f64>,
    #[arg(long, global = true, value_parser = parse_mode)]
    pub match_mode: Option<MatchMode>,
    #[arg(long, global = true)]
    pub eval_thresh: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

fn parse_mode(s: &str) -> Result<MatchMode, String> {
    match s {
        "proximity" => Ok(MatchMode::Proximity),
        "one-to-one" => Ok(MatchMode::OneToOne),
        _ => Err(format!("unknown match mode {s:?}")),
    }
}

impl Overrides {
    /// Loads the config file if given, applies the flags and validates.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut c);
        c.validate()?;
        Ok(c)
    }

    pub fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    c.$f = v.clone().into();
                }
            )*};
        }
        set!(out, ramp_format, id_column, lat_column, lon_column, installed_column, city, seed, panos);
        set!(pano_radius, cand_radius, null_dist, null_frac, fov, pitch, crop_size);
        set!(sigma, peak_thresh, downscale, nms_radius, localizer, dedup_radius, split, link_dist);
        set!(match_radius, match_mode, eval_thresh, workers);
        for (dst, src) in [
            (&mut c.ramps, &self.ramps),
            (&mut c.catalog, &self.catalog),
            (&mut c.images, &self.images),
            (&mut c.pred, &self.pred),
            (&mut c.gt, &self.gt),
        ] {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        if let Some(cmd) = &self.localizer_cmd {
            c.localizer_cmd = cmd.split_whitespace().map(String::from).collect();
        }
        c.synthetic |= self.synthetic;
        c.dump_heatmaps |= self.dump_heatmaps;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml(), Path::new("x")).unwrap(), c);
        assert_eq!(c.split_fractions().unwrap(), SplitFractions::default());
        assert_eq!((c.pitch, c.fov, c.match_radius), (-30.0, 90.0, 88.0));
    }

    #[test]
    fn keys_are_kebab_case() {
        let text = RunConfig::default().to_toml();
        for key in ["pano-radius", "cand-radius", "null-dist", "null-frac", "peak-thresh", "match-radius", "link-dist"] {
            assert!(text.contains(&format!("{key} = ")), "{key}");
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_toml("bogus = 1", Path::new("x")).is_err());
        let c = RunConfig {
            split: "0.5,0.5".into(),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            peak_thresh: 1.5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "seed = 3\nsigma = 8.0\n").unwrap();
        let o = Overrides {
            config: Some(p),
            seed: Some(9),
            ..Default::default()
        };
        let c = o.resolve().unwrap();
        assert_eq!((c.seed, c.sigma), (9, 8.0));
    }

    proptest! {
        #[test]
        fn arbitrary_configs_round_trip(seed in any::<u64>(), r in 0.1..100.0f64, frac in 0.0..0.9f64, w in 0..64usize, cmd in proptest::collection::vec("[a-z]{1,5}", 0..3)) {
            let c = RunConfig {
                seed,
                pano_radius: r,
                null_frac: frac,
                workers: w,
                localizer_cmd: cmd,
                ramps: Some(PathBuf::from("a/b.csv")),
                ..Default::default()
            };
            prop_assert_eq!(RunConfig::from_toml(&c.to_toml(), Path::new("x")).unwrap(), c);
        }
    }
}
