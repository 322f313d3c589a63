//! Partition cells and count equalization.
//!
//! Target trials are grouped into cells by the schema's dimensions.
//! Non-target trials are grouped into pools by the same dimensions minus
//! `phone_match` (non-targets never share a phone number with the model),
//! and every target cell is scored against the pool with matching
//! remaining coordinates. A target cell participates when it has targets
//! and its pool has non-targets.
//!
//! Equalization gives every participating target cell the same target
//! mass, and every (target cell, matched pool) pairing the same non-target
//! mass. A pool shared by two target cells therefore carries twice the mass
//! of an unshared one. With this weighting the pooled, equalized
//! `C_norm(theta)` equals the mean of the per-cell `C_norm(theta)`, so the
//! single-threshold minimum can never exceed the actual cost.

use std::collections::BTreeMap;
use std::fmt;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use super::MetricError;
use crate::trial_data::{TrialId, TrialKey, TrialRecord, Track};

/// Trial metadata field usable as a partition dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Gender,
    SourceMatch,
    LanguageMatch,
    PhoneMatch,
    NumEnroll,
}

impl Dimension {
    pub fn name(self) -> &'static str {
        match self {
            Dimension::Gender => "gender",
            Dimension::SourceMatch => "source_match",
            Dimension::LanguageMatch => "language_match",
            Dimension::PhoneMatch => "phone_match",
            Dimension::NumEnroll => "num_enroll",
        }
    }

    /// Level of `record` along this dimension. Phone match is normalized
    /// (not-applicable counts as N).
    pub fn level(self, record: &TrialRecord) -> &'static str {
        match self {
            Dimension::Gender => record.gender.as_str(),
            Dimension::SourceMatch => record.source_match.as_str(),
            Dimension::LanguageMatch => record.language_match.as_str(),
            Dimension::PhoneMatch => record.phone_match.normalized().as_str(),
            Dimension::NumEnroll => match record.num_enroll_segments {
                3 => "3",
                _ => "1",
            },
        }
    }
}

/// Trials removed before any cost is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    ThreeSegmentEnrollment,
}

impl Exclusion {
    pub fn matches(self, record: &TrialRecord) -> bool {
        match self {
            Exclusion::ThreeSegmentEnrollment => record.num_enroll_segments == 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSchema {
    pub track: Track,
    pub dimensions: Vec<Dimension>,
    pub exclusions: Vec<Exclusion>,
}

impl PartitionSchema {
    /// Default schema of a track: audio uses gender, source, language and
    /// phone match; audio-visual uses gender and language match; visual uses
    /// gender only. 3-segment enrollment trials are excluded.
    pub fn for_track(track: Track) -> Self {
        let dimensions = match track {
            Track::Audio => vec![
                Dimension::Gender,
                Dimension::SourceMatch,
                Dimension::LanguageMatch,
                Dimension::PhoneMatch,
            ],
            Track::AudioVisual => vec![Dimension::Gender, Dimension::LanguageMatch],
            Track::Visual => vec![Dimension::Gender],
        };
        PartitionSchema {
            track,
            dimensions,
            exclusions: vec![Exclusion::ThreeSegmentEnrollment],
        }
    }

    /// Keeps 3-segment enrollment trials, scoring them in cells of their own
    /// via an added `num_enroll` dimension.
    pub fn with_three_segment_trials(mut self) -> Self {
        self.exclusions.retain(|e| *e != Exclusion::ThreeSegmentEnrollment);
        if !self.dimensions.contains(&Dimension::NumEnroll) {
            self.dimensions.push(Dimension::NumEnroll);
        }
        self
    }

    pub fn excludes(&self, record: &TrialRecord) -> bool {
        self.exclusions.iter().any(|e| e.matches(record))
    }

    pub fn target_coordinates(&self, record: &TrialRecord) -> Coordinates {
        Coordinates(self.dimensions.iter().map(|d| (*d, d.level(record))).collect())
    }

    pub fn pool_coordinates(&self, record: &TrialRecord) -> Coordinates {
        Coordinates(
            self.dimensions
                .iter()
                .filter(|d| **d != Dimension::PhoneMatch)
                .map(|d| (*d, d.level(record)))
                .collect(),
        )
    }

    /// Pool coordinates matched to a target cell.
    pub fn pool_of(&self, cell: &Coordinates) -> Coordinates {
        Coordinates(
            cell.0
                .iter()
                .filter(|(d, _)| *d != Dimension::PhoneMatch)
                .copied()
                .collect(),
        )
    }
}

/// Position of a cell along the schema dimensions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coordinates(pub Vec<(Dimension, &'static str)>);

impl fmt::Display for Coordinates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("all");
        }
        for (i, (d, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}={}", d.name(), v)?;
        }
        Ok(())
    }
}

impl Serialize for Coordinates {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (d, v) in &self.0 {
            map.serialize_entry(d.name(), v)?;
        }
        map.end()
    }
}

/// Which class-specific group a trial belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Target(usize),
    Nontarget(usize),
}

/// Cell structure of a key under a schema, independent of scores and of
/// trial multiplicities.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub target_cells: Vec<Coordinates>,
    pub target_pool: Vec<Option<usize>>,
    pub pools: Vec<Coordinates>,
    /// Per key record (same order as `TrialKey::records`); `None` = excluded.
    pub slots: Vec<Option<Slot>>,
}

impl Layout {
    pub fn new(key: &TrialKey, schema: &PartitionSchema) -> Result<Self, MetricError> {
        let mut cells: BTreeMap<Coordinates, usize> = BTreeMap::new();
        let mut pools: BTreeMap<Coordinates, usize> = BTreeMap::new();
        for r in key.records().iter().filter(|r| !schema.excludes(r)) {
            if r.is_target() {
                cells.entry(schema.target_coordinates(r)).or_insert(0);
            } else {
                pools.entry(schema.pool_coordinates(r)).or_insert(0);
            }
        }
        if cells.is_empty() && pools.is_empty() {
            return Err(MetricError::AllExcluded);
        }
        for (i, v) in cells.values_mut().enumerate() {
            *v = i;
        }
        for (i, v) in pools.values_mut().enumerate() {
            *v = i;
        }
        let slots = key
            .records()
            .iter()
            .map(|r| {
                if schema.excludes(r) {
                    None
                } else if r.is_target() {
                    Some(Slot::Target(cells[&schema.target_coordinates(r)]))
                } else {
                    Some(Slot::Nontarget(pools[&schema.pool_coordinates(r)]))
                }
            })
            .collect();
        let target_pool = cells.keys().map(|c| pools.get(&schema.pool_of(c)).copied()).collect();
        Ok(Layout {
            target_cells: cells.into_keys().collect(),
            target_pool,
            pools: pools.into_keys().collect(),
            slots,
        })
    }
}

/// Class counts per cell for one multiset of trials.
#[derive(Debug, Clone)]
pub(crate) struct Tally {
    pub n_target: Vec<u64>,
    pub n_pool: Vec<u64>,
    /// Participating target cells in coordinate order.
    pub participating: Vec<usize>,
    /// Target cells that have targets but no matched non-targets.
    pub skipped: Vec<usize>,
}

impl Tally {
    /// Counts trials with the given per-record multiplicities (`None` means
    /// every record once).
    pub fn new(layout: &Layout, multiplicity: Option<&[u32]>) -> Self {
        let mut n_target = vec![0u64; layout.target_cells.len()];
        let mut n_pool = vec![0u64; layout.pools.len()];
        for (i, slot) in layout.slots.iter().enumerate() {
            let m = multiplicity.map_or(1, |m| m[i]) as u64;
            match slot {
                Some(Slot::Target(c)) => n_target[*c] += m,
                Some(Slot::Nontarget(p)) => n_pool[*p] += m,
                None => {}
            }
        }
        let mut participating = Vec::new();
        let mut skipped = Vec::new();
        for c in 0..n_target.len() {
            if n_target[c] == 0 {
                continue;
            }
            match layout.target_pool[c] {
                Some(p) if n_pool[p] > 0 => participating.push(c),
                _ => skipped.push(c),
            }
        }
        Tally {
            n_target,
            n_pool,
            participating,
            skipped,
        }
    }

    /// Number of participating target cells using each pool.
    pub fn pool_uses(&self, layout: &Layout) -> Vec<u64> {
        let mut uses = vec![0u64; layout.pools.len()];
        for &c in &self.participating {
            uses[layout.target_pool[c].expect("participating cell has a pool")] += 1;
        }
        uses
    }

    /// Whether a trial in `slot` contributes to the equalized rates.
    pub fn is_active(&self, layout: &Layout, slot: Slot, uses: &[u64]) -> bool {
        match slot {
            Slot::Target(c) => self.participating.binary_search(&c).is_ok(),
            Slot::Nontarget(p) => {
                let _ = layout;
                uses[p] > 0
            }
        }
    }

    /// Equalized (p_miss, p_fa) from per-cell miss counts and per-pool
    /// false-alarm counts. The summation order is fixed (coordinate order of
    /// participating cells) so that equal counts give bit-identical rates.
    pub fn rates(&self, layout: &Layout, miss: &[u64], fa: &[u64]) -> (f64, f64) {
        let n = self.participating.len() as f64;
        let mut p_miss = 0.0;
        let mut p_fa = 0.0;
        for &c in &self.participating {
            let p = layout.target_pool[c].expect("participating cell has a pool");
            p_miss += miss[c] as f64 / self.n_target[c] as f64;
            p_fa += fa[p] as f64 / self.n_pool[p] as f64;
        }
        (p_miss / n, p_fa / n)
    }
}

/// Per-trial weights making every participating cell contribute equally.
/// Target weights sum to 1, as do non-target weights.
#[derive(Debug, Clone)]
pub struct EqualizationWeights {
    pub(crate) layout: Layout,
    pub(crate) tally: Tally,
    pub(crate) n_records: usize,
    weights: BTreeMap<TrialId, f64>,
}

impl EqualizationWeights {
    pub fn get(&self, id: &TrialId) -> Option<f64> {
        self.weights.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TrialId, f64)> {
        self.weights.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Participating target cells, in coordinate order.
    pub fn cells(&self) -> Vec<&Coordinates> {
        self.tally
            .participating
            .iter()
            .map(|&c| &self.layout.target_cells[c])
            .collect()
    }

    /// Target cells dropped for lack of matched non-targets.
    pub fn skipped_cells(&self) -> Vec<&Coordinates> {
        self.tally.skipped.iter().map(|&c| &self.layout.target_cells[c]).collect()
    }

    /// Target cell of a target trial or pool of a non-target trial.
    pub fn group_of(&self, key: &TrialKey, id: &TrialId) -> Option<&Coordinates> {
        let idx = key.records().binary_search_by(|r| r.id.cmp(id)).ok()?;
        match self.layout.slots.get(idx)?.as_ref()? {
            Slot::Target(c) => Some(&self.layout.target_cells[*c]),
            Slot::Nontarget(p) => Some(&self.layout.pools[*p]),
        }
    }

    /// Number of participating target cells matched to the pool holding
    /// `coords`; 1 for every pool unless a phone-match split shares it.
    pub fn pool_multiplicity(&self, coords: &Coordinates) -> u64 {
        let uses = self.tally.pool_uses(&self.layout);
        self.layout
            .pools
            .iter()
            .position(|p| p == coords)
            .map_or(0, |p| uses[p])
    }
}

/// Builds equalization weights for `key` under `schema`.
pub fn equalization_weights(key: &TrialKey, schema: &PartitionSchema) -> Result<EqualizationWeights, MetricError> {
    let layout = Layout::new(key, schema)?;
    let tally = Tally::new(&layout, None);
    if tally.participating.is_empty() {
        return Err(MetricError::NoParticipatingCells {
            skipped: tally.skipped.len(),
        });
    }
    let n_cells = tally.participating.len() as f64;
    let uses = tally.pool_uses(&layout);
    let mut weights = BTreeMap::new();
    for (r, slot) in key.records().iter().zip(&layout.slots) {
        let w = match slot {
            Some(Slot::Target(c)) if tally.participating.binary_search(c).is_ok() => {
                1.0 / tally.n_target[*c] as f64 / n_cells
            }
            Some(Slot::Nontarget(p)) if uses[*p] > 0 => uses[*p] as f64 / tally.n_pool[*p] as f64 / n_cells,
            _ => continue,
        };
        weights.insert(r.id.clone(), w);
    }
    Ok(EqualizationWeights {
        n_records: key.len(),
        layout,
        tally,
        weights,
    })
}
