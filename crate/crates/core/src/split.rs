//! Leakage-free train/val/test splits and dataset statistics.
//!
//! Panoramas closer than the link distance are chained into components, and
//! whole components are dealt to splits, so no scene straddles two splits.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::PanoCatalog;
use crate::heatmap::PointLabel;
use crate::index::SpatialIndex;
use crate::{Error, Result};

pub const LINK_DIST_M: f64 = 60.0;

/// Disjoint-set forest with union by rank and path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: alloc::vec![0; n],
        }
    }

    pub fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Returns `true` when `a` and `b` were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            core::cmp::Ordering::Less => self.parent[ra] = rb,
            core::cmp::Ordering::Greater => self.parent[rb] = ra,
            core::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Connected components of the graph linking panoramas at most `link_dist_m`
/// apart. Each component is sorted by id; components are ordered by their
/// first id.
pub fn spatial_components(catalog: &PanoCatalog, link_dist_m: f64) -> Vec<Vec<String>> {
    let panos = catalog.panos();
    let locs: Vec<_> = panos.iter().map(|p| p.location()).collect();
    let index = SpatialIndex::build(&locs);
    let mut uf = UnionFind::new(panos.len());
    for (i, &loc) in locs.iter().enumerate() {
        for j in index.radius_query(loc, link_dist_m) {
            if j > i {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, p) in panos.iter().enumerate() {
        let root = uf.find(i);
        first.entry(root).or_insert(i);
        groups.entry(root).or_default().push(p.pano_id().to_string());
    }
    // catalog order is id order, so ordering by first member sorts by first id
    let mut out: Vec<(usize, Vec<String>)> = groups.into_iter().map(|(r, g)| (first[&r], g)).collect();
    out.sort_by_key(|(f, _)| *f);
    out.into_iter().map(|(_, g)| g).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl core::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidParameter(alloc::format!("unknown split {s:?}"))),
        }
    }
}

/// Target shares of panoramas per split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.20,
            test: 0.10,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = Self { train, val, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.as_array();
        if all.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(alloc::format!(
                "split fractions {}/{}/{} must be non-negative and sum to 1",
                self.train,
                self.val,
                self.test
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub seed: u64,
    pub component_count: usize,
    pub splits: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn get(&self, pano_id: &str) -> Option<Split> {
        self.splits.get(pano_id).copied()
    }

    /// Panoramas per split, in [`Split::ALL`] order.
    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in self.splits.values() {
            c[s.index()] += 1;
        }
        c
    }
}

/// Shuffles components with a seeded generator, then hands each whole
/// component to the split with the largest remaining pano-count deficit
/// (ties go to the earlier split).
pub fn assign_splits(components: &[Vec<String>], fractions: SplitFractions, seed: u64) -> Result<SplitAssignment> {
    fractions.validate()?;
    let total: usize = components.iter().map(Vec::len).sum();
    let targets = fractions.as_array().map(|f| f * total as f64);
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut counts = [0usize; 3];
    let mut splits = BTreeMap::new();
    for ci in order {
        let mut best = 0;
        for s in 1..3 {
            if targets[s] - counts[s] as f64 > targets[best] - counts[best] as f64 {
                best = s;
            }
        }
        counts[best] += components[ci].len();
        for id in &components[ci] {
            if splits.insert(id.clone(), Split::ALL[best]).is_some() {
                return Err(Error::DuplicatePanoId(id.clone()));
            }
        }
    }
    Ok(SplitAssignment {
        seed,
        component_count: components.len(),
        splits,
    })
}

/// Pairs of catalog panoramas within `link_dist_m` of each other that sit in
/// different splits (or where only one is assigned). Empty for any
/// assignment produced from [`spatial_components`] with the same distance.
pub fn leakage_pairs(catalog: &PanoCatalog, assignment: &SplitAssignment, link_dist_m: f64) -> Vec<(String, String)> {
    let panos = catalog.panos();
    let locs: Vec<_> = panos.iter().map(|p| p.location()).collect();
    let index = SpatialIndex::build(&locs);
    let mut out = Vec::new();
    for (i, p) in panos.iter().enumerate() {
        for j in index.radius_query(locs[i], link_dist_m) {
            if j > i && assignment.get(p.pano_id()) != assignment.get(panos[j].pano_id()) {
                out.push((p.pano_id().to_string(), panos[j].pano_id().to_string()));
            }
        }
    }
    out
}

/// One line of the label store.
///
/// Fields are declared in key order so serialized records have sorted keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub city: String,
    pub height: u32,
    pub labels: Vec<PointLabel>,
    pub pano_id: String,
    pub split: Option<Split>,
    pub width: u32,
}

/// Counts for one (city, split) cell. `split` is `"all"` for totals and
/// `"none"` for unassigned panoramas; `city` is `"all"` for the global rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub city: String,
    pub split: String,
    pub panos: usize,
    pub labels: usize,
    /// Mean labels over panoramas that have at least one label.
    pub labels_per_pano: f64,
    /// Share of panoramas with no labels.
    pub null_share: f64,
}

#[derive(Debug, Default)]
struct Tally {
    panos: usize,
    labels: usize,
    nulls: usize,
}

/// Per-city and per-split counts. Splits come from `assignment` when given,
/// otherwise from each record. Ratios over zero panoramas are reported as 0.
pub fn dataset_stats(records: &[LabelRecord], assignment: Option<&SplitAssignment>) -> Vec<StatsRow> {
    let mut cells: BTreeMap<(String, String), Tally> = BTreeMap::new();
    cells.entry(("all".into(), "all".into())).or_default();
    for r in records {
        let split = match assignment {
            Some(a) => a.get(&r.pano_id),
            None => r.split,
        };
        let split = split.map_or("none", |s| s.as_str());
        for key in [
            (r.city.clone(), split.to_string()),
            (r.city.clone(), "all".to_string()),
            ("all".to_string(), split.to_string()),
            ("all".to_string(), "all".to_string()),
        ] {
            let t = cells.entry(key).or_default();
            t.panos += 1;
            t.labels += r.labels.len();
            t.nulls += r.labels.is_empty() as usize;
        }
    }
    cells
        .into_iter()
        .map(|((city, split), t)| {
            let labeled = t.panos - t.nulls;
            StatsRow {
                city,
                split,
                panos: t.panos,
                labels: t.labels,
                labels_per_pano: if labeled == 0 { 0.0 } else { t.labels as f64 / labeled as f64 },
                null_share: if t.panos == 0 { 0.0 } else { t.nulls as f64 / t.panos as f64 },
            }
        })
        .collect()
}
