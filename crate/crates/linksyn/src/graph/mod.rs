//! Weighted knowledge-point co-occurrence graph.
//!
//! Nodes are the distinct KP labels of a corpus. An undirected edge joins
//! two KPs whenever at least one instance is annotated with both; its weight
//! is the number of such instances. Each node also carries Φ(k): the list of
//! instances annotated with k, in corpus order. Instance metadata
//! (id, discipline, difficulty) is embedded so a saved graph is
//! self-contained for sampling and seed selection.
//!
//! Storage is compressed sparse rows over `u32` node ids: node labels are
//! sorted, adjacency lists are sorted by neighbor id, and Φ lists are sorted
//! by instance position. Everything downstream leans on those orderings for
//! determinism and binary search.

mod io;
mod stats;

pub use io::{load_graph, save_graph};
pub use stats::{compute_stats, estimate_diameter, GraphStats};

use std::collections::HashMap;

use crate::par::prelude::*;
use thiserror::Error;

use crate::corpus::Corpus;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("corpus contains no instances")]
    EmptyCorpus,
    #[error("unknown kp `{0}`")]
    UnknownKp(String),
    #[error("corrupt graph file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-instance metadata embedded in the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMeta {
    pub id: String,
    /// Index into [`KpGraph::disciplines`].
    pub discipline: u16,
    /// Difficulty tier 1..=5.
    pub difficulty: u8,
}

/// The co-occurrence graph plus embedded instance table.
#[derive(Debug, Clone, PartialEq)]
pub struct KpGraph {
    labels: Vec<String>,
    label_index: HashMap<String, u32>,
    adj_offsets: Vec<u64>,
    adj_neighbors: Vec<u32>,
    adj_weights: Vec<u32>,
    phi_offsets: Vec<u64>,
    phi_instances: Vec<u32>,
    instances: Vec<InstanceMeta>,
    disciplines: Vec<String>,
}

impl KpGraph {
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adj_neighbors.len() / 2
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn label(&self, node: u32) -> &str {
        &self.labels[node as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn node_index(&self, label: &str) -> Option<u32> {
        self.label_index.get(label).copied()
    }

    pub fn degree(&self, node: u32) -> usize {
        let n = node as usize;
        (self.adj_offsets[n + 1] - self.adj_offsets[n]) as usize
    }

    /// Adjacency slice of a node: neighbor ids (sorted ascending) and the
    /// parallel co-occurrence weights.
    pub fn neighbor_slices(&self, node: u32) -> (&[u32], &[u32]) {
        let n = node as usize;
        let range = self.adj_offsets[n] as usize..self.adj_offsets[n + 1] as usize;
        (&self.adj_neighbors[range.clone()], &self.adj_weights[range])
    }

    /// First adjacency-array slot of a node's neighbor run.
    pub fn adjacency_offset(&self, node: u32) -> usize {
        self.adj_offsets[node as usize] as usize
    }

    /// Neighbors of a KP by label, with weights, in neighbor-label-id order.
    pub fn neighbors(&self, label: &str) -> Result<Vec<(&str, u32)>, GraphError> {
        let node = self
            .node_index(label)
            .ok_or_else(|| GraphError::UnknownKp(label.to_string()))?;
        let (nbrs, weights) = self.neighbor_slices(node);
        Ok(nbrs
            .iter()
            .zip(weights)
            .map(|(&n, &w)| (self.label(n), w))
            .collect())
    }

    /// Φ(k): indices of the instances annotated with `node`, in corpus order.
    pub fn phi_indices(&self, node: u32) -> &[u32] {
        let n = node as usize;
        &self.phi_instances[self.phi_offsets[n] as usize..self.phi_offsets[n + 1] as usize]
    }

    /// Φ(k) by label, as instance ids.
    pub fn phi(&self, label: &str) -> Result<Vec<&str>, GraphError> {
        let node = self
            .node_index(label)
            .ok_or_else(|| GraphError::UnknownKp(label.to_string()))?;
        Ok(self
            .phi_indices(node)
            .iter()
            .map(|&i| self.instances[i as usize].id.as_str())
            .collect())
    }

    /// |Φ(k)|: how many instances mention this KP.
    pub fn node_freq(&self, node: u32) -> usize {
        let n = node as usize;
        (self.phi_offsets[n + 1] - self.phi_offsets[n]) as usize
    }

    pub fn instance(&self, index: u32) -> &InstanceMeta {
        &self.instances[index as usize]
    }

    pub fn instances(&self) -> &[InstanceMeta] {
        &self.instances
    }

    pub fn disciplines(&self) -> &[String] {
        &self.disciplines
    }

    pub fn discipline_label(&self, index: u16) -> &str {
        &self.disciplines[index as usize]
    }

    pub fn discipline_index(&self, label: &str) -> Option<u16> {
        self.disciplines
            .binary_search_by(|d| d.as_str().cmp(label))
            .ok()
            .map(|i| i as u16)
    }

    /// Raw parts, used by the serializer.
    pub(crate) fn parts(
        &self,
    ) -> (&[String], &[u64], &[u32], &[u32], &[u64], &[u32], &[InstanceMeta], &[String]) {
        (
            &self.labels,
            &self.adj_offsets,
            &self.adj_neighbors,
            &self.adj_weights,
            &self.phi_offsets,
            &self.phi_instances,
            &self.instances,
            &self.disciplines,
        )
    }

    /// Rebuilds the derived label index from deserialized parts.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        labels: Vec<String>,
        adj_offsets: Vec<u64>,
        adj_neighbors: Vec<u32>,
        adj_weights: Vec<u32>,
        phi_offsets: Vec<u64>,
        phi_instances: Vec<u32>,
        instances: Vec<InstanceMeta>,
        disciplines: Vec<String>,
    ) -> Self {
        let label_index =
            labels.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();
        Self {
            labels,
            label_index,
            adj_offsets,
            adj_neighbors,
            adj_weights,
            phi_offsets,
            phi_instances,
            instances,
            disciplines,
        }
    }
}

/// Builds the co-occurrence graph from a corpus.
///
/// Pair counting is sharded across threads; shard maps merge into one count
/// table, so the result is independent of worker count.
pub fn build_graph(corpus: &Corpus) -> Result<KpGraph, GraphError> {
    if corpus.is_empty() {
        return Err(GraphError::EmptyCorpus);
    }

    let mut labels: Vec<String> = corpus
        .instances()
        .iter()
        .flat_map(|i| i.kps.iter().cloned())
        .collect();
    labels.sort();
    labels.dedup();
    let label_index: HashMap<String, u32> =
        labels.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();
    let n = labels.len();

    // Instance KP sets as node ids (kps are duplicate-free per corpus rules).
    let instance_nodes: Vec<Vec<u32>> = corpus
        .instances()
        .par_iter()
        .map(|inst| inst.kps.iter().map(|kp| label_index[kp]).collect())
        .collect();

    let pair_counts: HashMap<(u32, u32), u32> = instance_nodes
        .par_chunks(2048)
        .map(|chunk| {
            let mut local: HashMap<(u32, u32), u32> = HashMap::new();
            for nodes in chunk {
                for (i, &a) in nodes.iter().enumerate() {
                    for &b in &nodes[i + 1..] {
                        let key = if a < b { (a, b) } else { (b, a) };
                        *local.entry(key).or_insert(0) += 1;
                    }
                }
            }
            local
        })
        .reduce(HashMap::new, |mut acc, local| {
            for (k, v) in local {
                *acc.entry(k).or_insert(0) += v;
            }
            acc
        });

    // Adjacency CSR: bucket per node, sort each run by neighbor id, flatten.
    let mut per_node: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
    for (&(a, b), &w) in &pair_counts {
        per_node[a as usize].push((b, w));
        per_node[b as usize].push((a, w));
    }
    per_node.par_iter_mut().for_each(|run| run.sort_unstable());
    let mut adj_offsets = vec![0u64; n + 1];
    for i in 0..n {
        adj_offsets[i + 1] = adj_offsets[i] + per_node[i].len() as u64;
    }
    let total_slots = adj_offsets[n] as usize;
    let mut adj_neighbors = Vec::with_capacity(total_slots);
    let mut adj_weights = Vec::with_capacity(total_slots);
    for run in &per_node {
        for &(nb, w) in run {
            adj_neighbors.push(nb);
            adj_weights.push(w);
        }
    }
    drop(per_node);

    // Φ CSR, filled in corpus order so each list is ascending by position.
    let mut phi_len = vec![0u64; n];
    for nodes in &instance_nodes {
        for &k in nodes {
            phi_len[k as usize] += 1;
        }
    }
    let mut phi_offsets = vec![0u64; n + 1];
    for i in 0..n {
        phi_offsets[i + 1] = phi_offsets[i] + phi_len[i];
    }
    let mut phi_instances = vec![0u32; phi_offsets[n] as usize];
    let mut phi_cursor: Vec<u64> = phi_offsets[..n].to_vec();
    for (idx, nodes) in instance_nodes.iter().enumerate() {
        for &k in nodes {
            phi_instances[phi_cursor[k as usize] as usize] = idx as u32;
            phi_cursor[k as usize] += 1;
        }
    }

    // Embedded instance table over a sorted discipline dictionary.
    let mut disciplines: Vec<String> = corpus
        .instances()
        .iter()
        .map(|i| i.discipline.clone())
        .collect();
    disciplines.sort();
    disciplines.dedup();
    let instances = corpus
        .instances()
        .iter()
        .map(|inst| InstanceMeta {
            id: inst.id.clone(),
            discipline: disciplines
                .binary_search(&inst.discipline)
                .expect("discipline present in dictionary") as u16,
            difficulty: inst.difficulty,
        })
        .collect();

    Ok(KpGraph {
        labels,
        label_index,
        adj_offsets,
        adj_neighbors,
        adj_weights,
        phi_offsets,
        phi_instances,
        instances,
        disciplines,
    })
}
