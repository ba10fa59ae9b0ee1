//! Structural statistics of the KP graph.
//!
//! Covers connected components (union-find), the giant component's node and
//! text shares, degree assortativity, and degree/weight histograms. Exact
//! diameters are intractable at a 10M-node scale, so [`estimate_diameter`]
//! offers a sampled double-sweep BFS lower bound instead.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::consolidation::DisjointSets;
use crate::graph::KpGraph;
use crate::rng::RngStream;

/// Summary statistics; serializes to the JSON shape the `stats` subcommand
/// prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub component_count: usize,
    /// Nodes in the largest component / all nodes.
    pub giant_component_node_fraction: f64,
    /// Instances whose every KP lies in the largest component / all instances.
    pub giant_component_text_fraction: f64,
    /// Pearson correlation of endpoint degrees over both edge orientations;
    /// 0.0 when undefined (no edges or zero degree variance).
    pub assortativity: f64,
    /// degree → number of nodes. Values sum to `node_count`.
    pub degree_histogram: BTreeMap<usize, usize>,
    /// weight → number of (undirected) edges. Values sum to `edge_count`.
    pub weight_histogram: BTreeMap<u32, usize>,
    /// Sampled double-sweep BFS estimate, present when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diameter_estimate: Option<usize>,
}

/// Computes all statistics in one pass over the frozen graph. The embedded
/// instance table supplies the text fraction, so no corpus is needed.
pub fn compute_stats(graph: &KpGraph) -> GraphStats {
    let n = graph.node_count();
    let giant = giant_component(graph);

    let (component_count, giant_size) = {
        let mut dsu = components(graph);
        let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
        for v in 0..n {
            *sizes.entry(dsu.find(v)).or_insert(0) += 1;
        }
        (sizes.len(), sizes.values().copied().max().unwrap_or(0))
    };

    // An instance leaves the giant-text share iff any of its KPs lies
    // outside the giant component; invert Φ once instead of walking kps.
    let mut outside = vec![false; graph.instance_count()];
    for v in 0..n as u32 {
        if !giant[v as usize] {
            for &inst in graph.phi_indices(v) {
                outside[inst as usize] = true;
            }
        }
    }
    let inside = outside.iter().filter(|&&o| !o).count();

    let mut degree_histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for v in 0..n as u32 {
        *degree_histogram.entry(graph.degree(v)).or_insert(0) += 1;
    }
    let mut weight_histogram: BTreeMap<u32, usize> = BTreeMap::new();
    for v in 0..n as u32 {
        let (nbrs, weights) = graph.neighbor_slices(v);
        for (&u, &w) in nbrs.iter().zip(weights) {
            if v < u {
                *weight_histogram.entry(w).or_insert(0) += 1;
            }
        }
    }

    GraphStats {
        node_count: n,
        edge_count: graph.edge_count(),
        component_count,
        giant_component_node_fraction: if n == 0 { 0.0 } else { giant_size as f64 / n as f64 },
        giant_component_text_fraction: if graph.instance_count() == 0 {
            0.0
        } else {
            inside as f64 / graph.instance_count() as f64
        },
        assortativity: assortativity(graph),
        degree_histogram,
        weight_histogram,
        diameter_estimate: None,
    }
}

fn components(graph: &KpGraph) -> DisjointSets {
    let n = graph.node_count();
    let mut dsu = DisjointSets::new(n);
    for v in 0..n as u32 {
        let (nbrs, _) = graph.neighbor_slices(v);
        for &u in nbrs {
            if v < u {
                dsu.union(v as usize, u as usize);
            }
        }
    }
    dsu
}

/// Membership mask of the largest component (ties broken toward the
/// component containing the smallest node id).
fn giant_component(graph: &KpGraph) -> Vec<bool> {
    let n = graph.node_count();
    let mut dsu = components(graph);
    let mut size: BTreeMap<usize, usize> = BTreeMap::new();
    for v in 0..n {
        *size.entry(dsu.find(v)).or_insert(0) += 1;
    }
    let giant_root = size
        .iter()
        .max_by_key(|&(root, count)| (count, std::cmp::Reverse(root)))
        .map(|(&root, _)| root);
    (0..n).map(|v| Some(dsu.find(v)) == giant_root).collect()
}

/// Degree assortativity: Pearson correlation of (deg(u), deg(v)) over both
/// orientations of every edge. Returns 0.0 when undefined.
fn assortativity(graph: &KpGraph) -> f64 {
    let mut count = 0f64;
    let (mut sx, mut sxx, mut sxy) = (0f64, 0f64, 0f64);
    for v in 0..graph.node_count() as u32 {
        let dv = graph.degree(v) as f64;
        let (nbrs, _) = graph.neighbor_slices(v);
        for &u in nbrs {
            let du = graph.degree(u) as f64;
            count += 1.0;
            sx += dv;
            sxx += dv * dv;
            sxy += dv * du;
        }
    }
    if count == 0.0 {
        return 0.0;
    }
    // x and y marginals coincide by symmetry.
    let cov = sxy / count - (sx / count) * (sx / count);
    let var = sxx / count - (sx / count) * (sx / count);
    if var <= 0.0 {
        return 0.0;
    }
    cov / var
}

/// Lower-bound diameter estimate of the giant component: `sources` sampled
/// start nodes, each followed by a double-sweep BFS (the second sweep starts
/// from the farthest node found by the first).
pub fn estimate_diameter(graph: &KpGraph, sources: usize, seed: u64) -> usize {
    let giant = giant_component(graph);
    let members: Vec<u32> =
        (0..graph.node_count() as u32).filter(|&v| giant[v as usize]).collect();
    if members.is_empty() {
        return 0;
    }
    let mut rng = RngStream::substream(seed, 0x_d1a);
    let mut best = 0usize;
    for _ in 0..sources.max(1) {
        let start = members[rng.next_index(members.len())];
        let (far, d1) = bfs_farthest(graph, start);
        let (_, d2) = bfs_farthest(graph, far);
        best = best.max(d1).max(d2);
    }
    best
}

fn bfs_farthest(graph: &KpGraph, start: u32) -> (u32, usize) {
    let mut dist = vec![usize::MAX; graph.node_count()];
    let mut queue = std::collections::VecDeque::new();
    dist[start as usize] = 0;
    queue.push_back(start);
    let (mut far, mut far_d) = (start, 0usize);
    while let Some(v) = queue.pop_front() {
        let d = dist[v as usize];
        if d > far_d || (d == far_d && v < far) {
            far = v;
            far_d = d;
        }
        let (nbrs, _) = graph.neighbor_slices(v);
        for &u in nbrs {
            if dist[u as usize] == usize::MAX {
                dist[u as usize] = d + 1;
                queue.push_back(u);
            }
        }
    }
    (far, far_d)
}
