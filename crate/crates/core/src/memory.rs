//! Episodic memory: the append-only dataset every memory-based model reads.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::{euclidean, EpisodeRecord, SpaceId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub episode: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, Default)]
struct SpaceIndex {
    dim: usize,
    points: Vec<f64>,
    episodes: Vec<usize>,
}

impl SpaceIndex {
    fn len(&self) -> usize {
        self.episodes.len()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

/// Records in insertion order plus a flat per-space index over reached
/// outcomes. Queries are exact linear scans.
#[derive(Clone, Debug, Default)]
pub struct EpisodicMemory {
    records: Vec<EpisodeRecord>,
    index: BTreeMap<SpaceId, SpaceIndex>,
    displacements: BTreeMap<SpaceId, Vec<f64>>,
}

impl EpisodicMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<EpisodeRecord>) -> Result<Self> {
        let mut mem = Self::new();
        for r in records {
            mem.record(r)?;
        }
        Ok(mem)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn get(&self, episode: usize) -> Option<&EpisodeRecord> {
        self.records.get(episode)
    }

    /// Number of indexed outcomes in `space`.
    pub fn index_len(&self, space: SpaceId) -> usize {
        self.index.get(&space).map_or(0, SpaceIndex::len)
    }

    pub fn has_data(&self, space: SpaceId) -> bool {
        self.index_len(space) > 0
    }

    /// Appends a record and indexes every produced outcome. Rejected records
    /// leave the memory untouched.
    pub fn record(&mut self, rec: EpisodeRecord) -> Result<usize> {
        rec.validate()?;
        if rec.episode != self.records.len() {
            return Err(Error::MalformedRecord(format!(
                "episode id {} but memory holds {} records",
                rec.episode,
                self.records.len()
            )));
        }
        for (space, value) in &rec.reached {
            if let (Some(v), Some(idx)) = (value, self.index.get(space)) {
                if idx.dim != v.len() {
                    return Err(Error::OutcomeDimension {
                        space: *space,
                        expected: idx.dim,
                        got: v.len(),
                    });
                }
            }
        }
        let id = rec.episode;
        for (space, value) in &rec.reached {
            if let Some(v) = value {
                let idx = self.index.entry(*space).or_insert_with(|| SpaceIndex {
                    dim: v.len(),
                    ..SpaceIndex::default()
                });
                idx.points.extend_from_slice(v);
                idx.episodes.push(id);
            }
        }
        for pair in rec.trace.windows(2) {
            for (i, (before, after)) in pair[0].iter().zip(&pair[1]).enumerate() {
                if let (Some(b), Some(a)) = (before, after) {
                    let d = euclidean(a, b);
                    if d > 1e-12 {
                        self.displacements
                            .entry(SpaceId(i as u16))
                            .or_default()
                            .push(d);
                    }
                }
            }
        }
        self.records.push(rec);
        Ok(id)
    }

    /// Up to `k` records ordered by Euclidean distance of their reached
    /// outcome in `space` to `value`; equal distances are ordered by episode.
    pub fn nearest(&self, space: SpaceId, value: &[f64], k: usize) -> Vec<Neighbor> {
        self.nearest_filtered(space, value, k, |_| true)
    }

    pub fn nearest_filtered(
        &self,
        space: SpaceId,
        value: &[f64],
        k: usize,
        keep: impl Fn(&EpisodeRecord) -> bool,
    ) -> Vec<Neighbor> {
        let Some(idx) = self.index.get(&space) else {
            return Vec::new();
        };
        if k == 0 || idx.dim != value.len() {
            return Vec::new();
        }
        let mut all: Vec<Neighbor> = (0..idx.len())
            .filter(|&i| keep(&self.records[idx.episodes[i]]))
            .map(|i| Neighbor {
                episode: idx.episodes[i],
                distance: euclidean(idx.point(i), value),
            })
            .collect();
        let order = |a: &Neighbor, b: &Neighbor| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.episode.cmp(&b.episode))
        };
        if all.len() > k {
            all.select_nth_unstable_by(k - 1, order);
            all.truncate(k);
        }
        all.sort_by(order);
        all
    }

    /// All indexed `(outcome, episode)` pairs of a space, in insertion order.
    pub fn scan(&self, space: SpaceId) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.index
            .get(&space)
            .into_iter()
            .flat_map(|idx| (0..idx.len()).map(move |i| (idx.point(i), idx.episodes[i])))
    }

    /// Quantile `q` of the nonzero one-step displacements observed in `space`.
    pub fn reach(&self, space: SpaceId, q: f64) -> Option<f64> {
        let d = self.displacements.get(&space)?;
        if d.is_empty() {
            return None;
        }
        let mut sorted = d.clone();
        sorted.sort_by(f64::total_cmp);
        let pos = ((sorted.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
        Some(sorted[pos])
    }
}

impl PartialEq for EpisodicMemory {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl Serialize for EpisodicMemory {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(&self.records)
    }
}

impl<'de> Deserialize<'de> for EpisodicMemory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let records = Vec::<EpisodeRecord>::deserialize(deserializer)?;
        EpisodicMemory::from_records(records).map_err(serde::de::Error::custom)
    }
}
