//! Path sampling over the KP graph, and the distribution-value math that
//! justifies it.
//!
//! Two random-walk policies generate KP paths:
//!
//! * **Coverage** — start node uniform over K, each transition uniform over
//!   the current node's neighbors. Favors breadth: the uniform distribution
//!   maximizes the expected number of distinct KPs hit by M draws.
//! * **Popularity** — start node drawn from the empirical KP frequency
//!   p(k) = |Φ(k)| / Σ|Φ(k')|, transitions proportional to edge weight.
//!   Favors the corpus's natural emphasis.
//!
//! The two are reconciled by the knowledge-distribution-value objective
//! `KV(p) = λ·D(p‖p_uniform) + (1−λ)·D(p‖p_empirical)`, minimized in closed
//! form by the convex mixture `λ·p_uniform + (1−λ)·p_empirical` for both
//! supported divergences ([`kv_value`], [`optimal_mixture`]). In path space
//! the mixture is realized by [`hybrid_blend`]: an α-fraction of coverage
//! paths, the rest popularity paths. α defaults to λ.
//!
//! Walks stop early at dead-end nodes (paths flagged `truncated`), duplicate
//! sequences are rejected and re-drawn under a retry budget, and every draw
//! is a pure function of `(seed, attempt index)`, so results never depend on
//! worker count.

mod discrete;

pub use discrete::{AliasTable, CumulativeTable};

use std::collections::HashSet;
use std::sync::OnceLock;

use crate::par::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::KpGraph;
use crate::rng::RngStream;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("support violation at index {index}: q is positive where p is zero")]
    SupportViolation { index: usize },
    #[error("not enough source paths: needed {needed}, available {available}")]
    InsufficientPaths { needed: usize, available: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// Which walk policy produced a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Coverage,
    Popularity,
}

/// One sampled KP path. Serialized form:
/// `{"kps": [...], "policy": "coverage|popularity", "truncated": bool}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path {
    pub kps: Vec<String>,
    pub policy: Policy,
    pub truncated: bool,
}

/// Walk parameters for one `sample_paths` call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Target path length l (number of nodes).
    pub length: usize,
    /// Number of unique paths requested (M).
    pub count: usize,
    pub policy: Policy,
    pub rng_seed: u64,
    /// Upper bound on `length`; the reference setting is 3.
    #[serde(default = "default_max_length")]
    pub max_length: usize,
    /// Retry budget multiplier: up to `retry_factor · count` walk attempts
    /// before giving up on finding `count` unique paths.
    #[serde(default = "default_retry_factor")]
    pub retry_factor: usize,
}

fn default_max_length() -> usize {
    3
}

fn default_retry_factor() -> usize {
    20
}

impl WalkConfig {
    pub fn new(
        length: usize,
        count: usize,
        policy: Policy,
        rng_seed: u64,
    ) -> Result<Self, SamplingError> {
        let cfg = Self {
            length,
            count,
            policy,
            rng_seed,
            max_length: default_max_length(),
            retry_factor: default_retry_factor(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.length < 1 || self.length > self.max_length {
            return Err(SamplingError::InvalidConfig(format!(
                "length must be in 1..={}, got {}",
                self.max_length, self.length
            )));
        }
        if self.count < 1 {
            return Err(SamplingError::InvalidConfig("count must be >= 1".into()));
        }
        if self.retry_factor < 1 {
            return Err(SamplingError::InvalidConfig("retry_factor must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of one sampling run. `budget_exhausted` is the soft signal that
/// the retry budget ran out before `count` unique paths were found; the
/// paths gathered so far are still returned.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
    pub budget_exhausted: bool,
    /// Walk attempts consumed (for observability; deterministic).
    pub attempts: u64,
}

/// A probability vector over the graph's nodes (by node id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates non-negativity and normalization (sum within 1e-9 of 1).
    pub fn new(probs: Vec<f64>) -> Result<Self, SamplingError> {
        if probs.is_empty() {
            return Err(SamplingError::InvalidDistribution("empty vector".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(SamplingError::InvalidDistribution(
                "entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SamplingError::InvalidDistribution(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// L1 distance to another vector of the same dimension.
    pub fn l1_distance(&self, other: &Distribution) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// p(k) = 1/|K| for every node.
pub fn uniform_distribution(graph: &KpGraph) -> Result<Distribution, SamplingError> {
    let n = graph.node_count();
    if n == 0 {
        return Err(SamplingError::EmptyGraph);
    }
    Ok(Distribution { probs: vec![1.0 / n as f64; n] })
}

/// p(k) = |Φ(k)| / Σ_j |Φ(k_j)|.
pub fn empirical_distribution(graph: &KpGraph) -> Result<Distribution, SamplingError> {
    let n = graph.node_count();
    if n == 0 {
        return Err(SamplingError::EmptyGraph);
    }
    let total: u64 = (0..n as u32).map(|v| graph.node_freq(v) as u64).sum();
    if total == 0 {
        return Err(SamplingError::EmptyGraph);
    }
    Ok(Distribution {
        probs: (0..n as u32)
            .map(|v| graph.node_freq(v) as f64 / total as f64)
            .collect(),
    })
}

/// Expected number of distinct items hit by `m` independent draws from `p`:
/// `Σ_i [1 − (1 − p_i)^m]`.
pub fn expected_coverage(p: &Distribution, m: u32) -> f64 {
    debug_assert!(m >= 1, "coverage needs at least one draw");
    p.probs.iter().map(|&pi| 1.0 - (1.0 - pi).powi(m as i32)).sum()
}

/// Divergence plugged into the distribution-value objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    /// D(p‖q) = ‖p − q‖².
    SquaredEuclidean,
    /// D(p‖q) = KL(q‖p) — the arguments reversed, which is what makes the
    /// convex mixture the exact minimizer.
    ReverseKl,
}

/// Weight and divergence of the distribution-value objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KvConfig {
    /// λ ∈ [0,1]: weight on the uniform (coverage) term.
    pub lambda: f64,
    pub divergence: DivergenceKind,
}

impl KvConfig {
    fn validate(&self) -> Result<(), SamplingError> {
        if !(0.0..=1.0).contains(&self.lambda) || !self.lambda.is_finite() {
            return Err(SamplingError::InvalidConfig(format!(
                "lambda must be in [0,1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// KV(p) = λ·D(p‖pa) + (1−λ)·D(p‖pb).
///
/// For [`DivergenceKind::ReverseKl`] this is λ·KL(pa‖p) + (1−λ)·KL(pb‖p);
/// p must be positive wherever pa or pb carries mass.
pub fn kv_value(
    p: &Distribution,
    kv: &KvConfig,
    pa: &Distribution,
    pb: &Distribution,
) -> Result<f64, SamplingError> {
    kv.validate()?;
    for q in [pa, pb] {
        if q.len() != p.len() {
            return Err(SamplingError::DimensionMismatch { left: p.len(), right: q.len() });
        }
    }
    let term = |q: &Distribution| -> Result<f64, SamplingError> {
        match kv.divergence {
            DivergenceKind::SquaredEuclidean => Ok(p
                .probs
                .iter()
                .zip(&q.probs)
                .map(|(&pi, &qi)| (pi - qi) * (pi - qi))
                .sum()),
            DivergenceKind::ReverseKl => {
                let mut acc = 0.0;
                for (i, (&pi, &qi)) in p.probs.iter().zip(&q.probs).enumerate() {
                    if qi > 0.0 {
                        if pi <= 0.0 {
                            return Err(SamplingError::SupportViolation { index: i });
                        }
                        acc += qi * (qi / pi).ln();
                    }
                }
                Ok(acc)
            }
        }
    };
    Ok(kv.lambda * term(pa)? + (1.0 - kv.lambda) * term(pb)?)
}

/// The closed-form KV minimizer: `λ·pa + (1−λ)·pb` componentwise. The same
/// mixture is optimal for both divergence choices.
pub fn optimal_mixture(
    kv: &KvConfig,
    pa: &Distribution,
    pb: &Distribution,
) -> Result<Distribution, SamplingError> {
    kv.validate()?;
    if pa.len() != pb.len() {
        return Err(SamplingError::DimensionMismatch { left: pa.len(), right: pb.len() });
    }
    let probs = pa
        .probs
        .iter()
        .zip(&pb.probs)
        .map(|(&a, &b)| kv.lambda * a + (1.0 - kv.lambda) * b)
        .collect();
    Ok(Distribution { probs })
}

/// Neighbor lists longer than this get a lazily built alias table; shorter
/// ones binary-search a cumulative table.
pub const ALIAS_DEGREE_THRESHOLD: usize = 64;

/// Reusable walk state over a frozen graph: start-node tables and per-node
/// transition tables. Cheap to share across threads.
pub struct WalkSampler<'g> {
    graph: &'g KpGraph,
    empirical_start: CumulativeTable,
    /// Per-adjacency-slot cumulative weight, restarting at each node's
    /// segment.
    cum_weights: Vec<f64>,
    /// Dense index into `alias` for hot nodes; u32::MAX elsewhere.
    alias_slot: Vec<u32>,
    alias: Vec<OnceLock<AliasTable>>,
}

impl<'g> WalkSampler<'g> {
    pub fn new(graph: &'g KpGraph) -> Result<Self, SamplingError> {
        let n = graph.node_count();
        if n == 0 {
            return Err(SamplingError::EmptyGraph);
        }
        let empirical_start =
            CumulativeTable::from_weights((0..n as u32).map(|v| graph.node_freq(v) as f64))
                .ok_or(SamplingError::EmptyGraph)?;

        let mut cum_weights = Vec::new();
        let mut alias_slot = vec![u32::MAX; n];
        let mut hot = 0u32;
        for v in 0..n as u32 {
            let (_, weights) = graph.neighbor_slices(v);
            let mut run = 0.0f64;
            for &w in weights {
                run += w as f64;
                cum_weights.push(run);
            }
            if weights.len() > ALIAS_DEGREE_THRESHOLD {
                alias_slot[v as usize] = hot;
                hot += 1;
            }
        }
        let alias = (0..hot).map(|_| OnceLock::new()).collect();
        Ok(Self { graph, empirical_start, cum_weights, alias_slot, alias })
    }

    pub fn graph(&self) -> &KpGraph {
        self.graph
    }

    /// Draws a start node: uniform over K (coverage) or empirical (popularity).
    pub fn sample_start(&self, policy: Policy, rng: &mut RngStream) -> u32 {
        match policy {
            Policy::Coverage => rng.next_index(self.graph.node_count()) as u32,
            Policy::Popularity => self.empirical_start.sample(rng) as u32,
        }
    }

    /// Draws the next hop from `from`, or `None` at a dead end: uniform over
    /// neighbors (coverage) or proportional to edge weight (popularity).
    pub fn sample_transition(
        &self,
        policy: Policy,
        from: u32,
        rng: &mut RngStream,
    ) -> Option<u32> {
        let (nbrs, _) = self.graph.neighbor_slices(from);
        if nbrs.is_empty() {
            return None;
        }
        let local = match policy {
            Policy::Coverage => rng.next_index(nbrs.len()),
            Policy::Popularity => {
                let slot = self.alias_slot[from as usize];
                if slot != u32::MAX {
                    let table = self.alias[slot as usize].get_or_init(|| {
                        let (_, weights) = self.graph.neighbor_slices(from);
                        let w: Vec<f64> = weights.iter().map(|&w| w as f64).collect();
                        AliasTable::from_weights(&w).expect("edge weights are positive")
                    });
                    table.sample(rng)
                } else {
                    self.cumulative_transition(from, rng)
                }
            }
        };
        Some(nbrs[local])
    }

    fn cumulative_transition(&self, from: u32, rng: &mut RngStream) -> usize {
        let (nbrs, _) = self.graph.neighbor_slices(from);
        // cum_weights parallels the adjacency array; recover this node's run.
        let start = self.graph.adjacency_offset(from);
        let seg = &self.cum_weights[start..start + nbrs.len()];
        let total = seg[seg.len() - 1];
        let u = rng.next_f64() * total;
        seg.partition_point(|&c| c <= u).min(seg.len() - 1)
    }

    /// One complete walk attempt; pure in `(rng_seed, attempt)`.
    fn walk_attempt(&self, cfg: &WalkConfig, attempt: u64) -> Vec<u32> {
        let mut rng = RngStream::substream(cfg.rng_seed, attempt);
        let mut path = Vec::with_capacity(cfg.length);
        let mut cur = self.sample_start(cfg.policy, &mut rng);
        path.push(cur);
        for _ in 1..cfg.length {
            match self.sample_transition(cfg.policy, cur, &mut rng) {
                Some(next) => {
                    path.push(next);
                    cur = next;
                }
                None => break, // dead end: keep what we have, flag truncated
            }
        }
        path
    }

    /// Samples up to `count` unique paths (sequence equality; a path and its
    /// reversal are distinct). Attempts are generated in parallel chunks but
    /// accepted in attempt order, so output is independent of worker count.
    pub fn sample_paths(&self, cfg: &WalkConfig) -> Result<PathSet, SamplingError> {
        cfg.validate()?;
        let budget = (cfg.retry_factor as u64).saturating_mul(cfg.count as u64);
        let mut seen: HashSet<Vec<u32>> = HashSet::with_capacity(cfg.count * 2);
        let mut ordered: Vec<Vec<u32>> = Vec::with_capacity(cfg.count);
        let mut attempts = 0u64;

        const CHUNK: u64 = 8192;
        let mut next = 0u64;
        'outer: while next < budget {
            let end = (next + CHUNK).min(budget);
            let batch: Vec<Vec<u32>> = (next..end)
                .into_par_iter()
                .map(|i| self.walk_attempt(cfg, i))
                .collect();
            for (i, path) in batch.into_iter().enumerate() {
                attempts = next + i as u64 + 1;
                if seen.insert(path.clone()) {
                    ordered.push(path);
                    if ordered.len() == cfg.count {
                        break 'outer;
                    }
                }
            }
            next = end;
        }

        let paths = ordered
            .into_iter()
            .map(|nodes| Path {
                truncated: nodes.len() < cfg.length,
                kps: nodes.iter().map(|&v| self.graph.label(v).to_string()).collect(),
                policy: cfg.policy,
            })
            .collect::<Vec<_>>();
        let budget_exhausted = paths.len() < cfg.count;
        Ok(PathSet { paths, budget_exhausted, attempts })
    }
}

/// Convenience: build a sampler and run one config.
pub fn sample_paths(graph: &KpGraph, cfg: &WalkConfig) -> Result<PathSet, SamplingError> {
    WalkSampler::new(graph)?.sample_paths(cfg)
}

/// Draws `round(alpha·total)` paths uniformly without replacement from
/// `pi_a` and the remainder from `pi_b`. A popularity draw whose KP sequence
/// duplicates an already chosen path is dropped and refilled from the rest
/// of `pi_b`. Path order in the result: coverage picks first (draw order),
/// then popularity picks.
pub fn hybrid_blend(
    pi_a: &[Path],
    pi_b: &[Path],
    alpha: f64,
    total: usize,
    rng_seed: u64,
) -> Result<Vec<Path>, SamplingError> {
    if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
        return Err(SamplingError::InvalidConfig(format!(
            "alpha must be in [0,1], got {alpha}"
        )));
    }
    let n_a = ((alpha * total as f64).round() as usize).min(total);
    let n_b = total - n_a;
    if pi_a.len() < n_a {
        return Err(SamplingError::InsufficientPaths { needed: n_a, available: pi_a.len() });
    }
    if pi_b.len() < n_b {
        return Err(SamplingError::InsufficientPaths { needed: n_b, available: pi_b.len() });
    }

    let mut chosen: Vec<Path> = Vec::with_capacity(total);
    let mut sequences: HashSet<&[String]> = HashSet::with_capacity(total);

    let mut draw_a = LazyShuffle::new(pi_a.len(), RngStream::substream(rng_seed, 0));
    while chosen.len() < n_a {
        let Some(i) = draw_a.next_draw() else {
            return Err(SamplingError::InsufficientPaths { needed: n_a, available: chosen.len() });
        };
        let path = &pi_a[i];
        if sequences.insert(&path.kps) {
            chosen.push(path.clone());
        }
    }

    let mut draw_b = LazyShuffle::new(pi_b.len(), RngStream::substream(rng_seed, 1));
    let mut taken_b = 0usize;
    while taken_b < n_b {
        let Some(i) = draw_b.next_draw() else {
            return Err(SamplingError::InsufficientPaths {
                needed: n_b,
                available: taken_b,
            });
        };
        let path = &pi_b[i];
        if sequences.insert(&path.kps) {
            chosen.push(path.clone());
            taken_b += 1;
        }
    }
    Ok(chosen)
}

/// Incremental Fisher-Yates: yields a uniformly random permutation of
/// `0..n`, one element per call.
struct LazyShuffle {
    idx: Vec<u32>,
    pos: usize,
    rng: RngStream,
}

impl LazyShuffle {
    fn new(n: usize, rng: RngStream) -> Self {
        Self { idx: (0..n as u32).collect(), pos: 0, rng }
    }

    fn next_draw(&mut self) -> Option<usize> {
        if self.pos == self.idx.len() {
            return None;
        }
        let j = self.pos + self.rng.next_index(self.idx.len() - self.pos);
        self.idx.swap(self.pos, j);
        let out = self.idx[self.pos] as usize;
        self.pos += 1;
        Some(out)
    }
}
