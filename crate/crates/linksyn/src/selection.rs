//! Attribute-guided seed instance selection.
//!
//! Every sampled KP path becomes a *seed group*: a target difficulty h and
//! discipline s are drawn from configured attribute distributions, then each
//! path node k contributes the instance from Φ(k) that best matches the
//! target — restricted to discipline s when any such candidate exists, and
//! never reusing an instance already chosen for the group.
//!
//! Selection key, in order: smallest |h_D − h|, then smallest Φ-order
//! position (Φ lists follow corpus order). Φ positions are unique within a
//! node's list, so the documented final id tie-break can never fire; it is
//! kept in the oracle definition for completeness.
//!
//! Per-node candidates are pre-bucketed by difficulty tier (each bucket in
//! Φ order), so a query touches at most five short runs instead of sorting
//! Φ(k) per call.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::par::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::KpGraph;
use crate::rng::RngStream;
use crate::sampling::{CumulativeTable, Path};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("unknown kp `{0}`")]
    UnknownKp(String),
    #[error("no candidate instance available")]
    NoCandidate,
    #[error("invalid attribute distribution: {0}")]
    InvalidDistribution(String),
}

/// Target attribute laws: ρ_h over difficulty tiers 1..=5 and ρ_s over
/// discipline labels (possibly a point mass).
#[derive(Debug, Clone)]
pub struct AttributeDistribution {
    difficulty_probs: [f64; 5],
    disciplines: Vec<(String, f64)>,
    difficulty_table: CumulativeTable,
    discipline_table: CumulativeTable,
}

impl AttributeDistribution {
    /// Validates both laws: entries ≥ 0, each sums to 1 within 1e-9.
    pub fn new(
        difficulty_probs: [f64; 5],
        discipline_probs: BTreeMap<String, f64>,
    ) -> Result<Self, SelectionError> {
        let check = |name: &str, sum: f64, neg: bool| -> Result<(), SelectionError> {
            if neg {
                return Err(SelectionError::InvalidDistribution(format!(
                    "{name} entries must be non-negative"
                )));
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(SelectionError::InvalidDistribution(format!(
                    "{name} sums to {sum}, expected 1"
                )));
            }
            Ok(())
        };
        check(
            "difficulty_probs",
            difficulty_probs.iter().sum(),
            difficulty_probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()),
        )?;
        if discipline_probs.is_empty() {
            return Err(SelectionError::InvalidDistribution(
                "discipline_probs is empty".into(),
            ));
        }
        check(
            "discipline_probs",
            discipline_probs.values().sum(),
            discipline_probs.values().any(|&p| !(p >= 0.0) || !p.is_finite()),
        )?;
        let disciplines: Vec<(String, f64)> = discipline_probs.into_iter().collect();
        let difficulty_table = CumulativeTable::from_weights(difficulty_probs.iter().copied())
            .ok_or_else(|| {
                SelectionError::InvalidDistribution("difficulty_probs has no mass".into())
            })?;
        let discipline_table =
            CumulativeTable::from_weights(disciplines.iter().map(|(_, p)| *p)).ok_or_else(
                || SelectionError::InvalidDistribution("discipline_probs has no mass".into()),
            )?;
        Ok(Self { difficulty_probs, disciplines, difficulty_table, discipline_table })
    }

    /// The reference difficulty mix: 10% H1, 15% H2, 25% each H3–H5.
    pub fn reference_difficulty() -> [f64; 5] {
        [0.10, 0.15, 0.25, 0.25, 0.25]
    }

    pub fn difficulty_probs(&self) -> &[f64; 5] {
        &self.difficulty_probs
    }

    pub fn discipline_probs(&self) -> &[(String, f64)] {
        &self.disciplines
    }
}

/// Draws (h, s) independently: difficulty tier first, then discipline.
pub fn draw_targets<'d>(
    dist: &'d AttributeDistribution,
    rng: &mut RngStream,
) -> (u8, &'d str) {
    let h = dist.difficulty_table.sample(rng) as u8 + 1;
    let s = dist.disciplines[dist.discipline_table.sample(rng)].0.as_str();
    (h, s)
}

/// One path with its attribute targets and chosen seed instances.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedGroup {
    pub path: Path,
    pub target_difficulty: u8,
    pub target_discipline: String,
    /// Instance ids, one per matched path node, in path order.
    pub seeds: Vec<String>,
    /// Path nodes for which every candidate was already excluded.
    pub skipped_nodes: Vec<String>,
}

impl SeedGroup {
    /// Number of seed references the group contributes to a prompt.
    pub fn ref_num(&self) -> usize {
        self.seeds.len()
    }

    pub fn to_record(&self) -> SeedGroupRecord {
        SeedGroupRecord {
            kps: self.path.kps.clone(),
            target_h: self.target_difficulty,
            target_s: self.target_discipline.clone(),
            seed_ids: self.seeds.clone(),
            skipped: self.skipped_nodes.clone(),
        }
    }
}

/// JSONL form of a seed group:
/// `{"kps": [...], "target_h": int, "target_s": str, "seed_ids": [...], "skipped": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedGroupRecord {
    pub kps: Vec<String>,
    pub target_h: u8,
    pub target_s: String,
    pub seed_ids: Vec<String>,
    pub skipped: Vec<String>,
}

/// Reusable selection state over a frozen graph.
pub struct SeedSelector<'g> {
    graph: &'g KpGraph,
    /// Per node: five difficulty buckets, each holding instance positions in
    /// Φ order (ascending corpus position).
    buckets: Vec<[Vec<u32>; 5]>,
    id_index: HashMap<String, u32>,
}

impl<'g> SeedSelector<'g> {
    pub fn new(graph: &'g KpGraph) -> Self {
        let buckets = (0..graph.node_count() as u32)
            .map(|v| {
                let mut b: [Vec<u32>; 5] = Default::default();
                for &inst in graph.phi_indices(v) {
                    let tier = graph.instance(inst).difficulty;
                    debug_assert!((1..=5).contains(&tier));
                    b[(tier - 1) as usize].push(inst);
                }
                b
            })
            .collect();
        let id_index = graph
            .instances()
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.clone(), i as u32))
            .collect();
        Self { graph, buckets, id_index }
    }

    pub fn graph(&self) -> &KpGraph {
        self.graph
    }

    /// Picks the best instance for `kp` under target difficulty `h` and
    /// discipline `s`, skipping `excluded` ids. See the module doc for the
    /// selection key; the discipline restriction applies whenever any
    /// non-excluded candidate carries it.
    pub fn select_instance(
        &self,
        kp: &str,
        h: u8,
        s: &str,
        excluded: &HashSet<String>,
    ) -> Result<String, SelectionError> {
        let node = self
            .graph
            .node_index(kp)
            .ok_or_else(|| SelectionError::UnknownKp(kp.to_string()))?;
        let excluded_idx: Vec<u32> = excluded
            .iter()
            .filter_map(|id| self.id_index.get(id).copied())
            .collect();
        let s_idx = self.graph.discipline_index(s);
        self.select_index(node, h, s_idx, &excluded_idx)
            .map(|i| self.graph.instance(i).id.clone())
            .ok_or(SelectionError::NoCandidate)
    }

    /// Index-based core. `excluded` is a small per-group list.
    fn select_index(&self, node: u32, h: u8, s: Option<u16>, excluded: &[u32]) -> Option<u32> {
        // Pass 1 honors the discipline restriction; pass 2 lifts it when the
        // restricted pool (net of exclusions) is empty.
        if let Some(s_idx) = s {
            if let Some(found) = self.best_candidate(node, h, Some(s_idx), excluded) {
                return Some(found);
            }
        }
        self.best_candidate(node, h, None, excluded)
    }

    fn best_candidate(
        &self,
        node: u32,
        h: u8,
        s: Option<u16>,
        excluded: &[u32],
    ) -> Option<u32> {
        let buckets = &self.buckets[node as usize];
        let mut best: Option<(u8, u32)> = None;
        for tier in 1..=5u8 {
            let dist = h.abs_diff(tier);
            // Buckets are Φ-ordered, so the first non-excluded hit per tier
            // is that tier's minimum-position candidate.
            let hit = buckets[(tier - 1) as usize].iter().copied().find(|&inst| {
                !excluded.contains(&inst)
                    && s.is_none_or(|want| self.graph.instance(inst).discipline == want)
            });
            if let Some(inst) = hit {
                let key = (dist, inst);
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
        }
        best.map(|(_, inst)| inst)
    }

    /// Runs target drawing + per-node selection for every path, then drops
    /// groups whose seed id sequence repeats an earlier group's (the
    /// uniqueness check applies to zero-seed groups too, so at most one
    /// all-skipped group survives). Group i draws from RNG substream
    /// `(rng_seed, i)`, so output is independent of worker count.
    pub fn build_seed_groups(
        &self,
        paths: &[Path],
        dist: &AttributeDistribution,
        rng_seed: u64,
    ) -> Result<Vec<SeedGroup>, SelectionError> {
        let groups: Vec<SeedGroup> = paths
            .par_iter()
            .enumerate()
            .map(|(i, path)| self.group_for_path(path, i as u64, dist, rng_seed))
            .collect::<Result<_, _>>()?;

        let mut seen: HashSet<Vec<String>> = HashSet::with_capacity(groups.len());
        Ok(groups.into_iter().filter(|g| seen.insert(g.seeds.clone())).collect())
    }

    fn group_for_path(
        &self,
        path: &Path,
        index: u64,
        dist: &AttributeDistribution,
        rng_seed: u64,
    ) -> Result<SeedGroup, SelectionError> {
        let mut rng = RngStream::substream(rng_seed, index);
        let (h, s) = draw_targets(dist, &mut rng);
        let s_idx = self.graph.discipline_index(s);

        let mut chosen: Vec<u32> = Vec::with_capacity(path.kps.len());
        let mut seeds = Vec::with_capacity(path.kps.len());
        let mut skipped = Vec::new();
        for kp in &path.kps {
            let node = self
                .graph
                .node_index(kp)
                .ok_or_else(|| SelectionError::UnknownKp(kp.clone()))?;
            match self.select_index(node, h, s_idx, &chosen) {
                Some(inst) => {
                    chosen.push(inst);
                    seeds.push(self.graph.instance(inst).id.clone());
                }
                None => skipped.push(kp.clone()),
            }
        }
        Ok(SeedGroup {
            path: path.clone(),
            target_difficulty: h,
            target_discipline: s.to_string(),
            seeds,
            skipped_nodes: skipped,
        })
    }
}
