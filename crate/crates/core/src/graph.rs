//! Centrality computations over a layer's user graph.
//!
//! The graph is undirected with cosine-similarity edge weights. Betweenness
//! and closeness run on the unweighted skeleton (weights are similarities,
//! not distances); PageRank and eigenvector centrality use the weights as
//! transition mass.
//!
//! Parallel sections reduce partial results in a fixed chunk order so scores
//! are identical for any thread count.

use rayon::prelude::*;
use std::collections::VecDeque;

/// Compact adjacency for one layer.
#[derive(Debug, Clone, Default)]
pub struct AdjacencyGraph {
    /// `neighbors[u]` sorted by neighbor index.
    pub neighbors: Vec<Vec<(u32, f64)>>,
}

impl AdjacencyGraph {
    pub fn with_nodes(n: usize) -> Self {
        AdjacencyGraph { neighbors: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: &[(u32, u32, f64)]) -> Self {
        let mut g = Self::with_nodes(n);
        for &(u, v, w) in edges {
            g.neighbors[u as usize].push((v, w));
            g.neighbors[v as usize].push((u, w));
        }
        for adj in &mut g.neighbors {
            adj.sort_by_key(|&(v, _)| v);
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    pub fn weight_sum(&self, u: usize) -> f64 {
        self.neighbors[u].iter().map(|&(_, w)| w).sum()
    }
}

const BETWEENNESS_CHUNK: usize = 64;

/// Exact shortest-path betweenness (Brandes), unnormalized pair counts.
///
/// Each unordered pair of distinct endpoints contributes at most 1 in total,
/// split across the shortest paths between them. A path `a - b - c` therefore
/// gives `b` a score of 1, and the center of a 4-leaf star scores C(4,2) = 6.
pub fn betweenness(graph: &AdjacencyGraph) -> Vec<f64> {
    let n = graph.node_count();
    if n < 3 {
        return vec![0.0; n];
    }
    let sources: Vec<usize> = (0..n).collect();
    let partials: Vec<Vec<f64>> = sources
        .par_chunks(BETWEENNESS_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0f64; n];
            for &s in chunk {
                brandes_from(graph, s, &mut acc);
            }
            acc
        })
        .collect();
    let mut scores = vec![0.0f64; n];
    for part in partials {
        for (s, p) in scores.iter_mut().zip(part) {
            *s += p;
        }
    }
    // Undirected: every pair was counted from both endpoints.
    for s in &mut scores {
        *s /= 2.0;
    }
    scores
}

fn brandes_from(graph: &AdjacencyGraph, s: usize, acc: &mut [f64]) {
    let n = graph.node_count();
    let mut stack: Vec<usize> = Vec::with_capacity(n);
    let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    sigma[s] = 1.0;
    dist[s] = 0;

    let mut queue = VecDeque::new();
    queue.push_back(s);
    while let Some(v) = queue.pop_front() {
        stack.push(v);
        for &(w, _) in &graph.neighbors[v] {
            let w = w as usize;
            if dist[w] < 0 {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
            if dist[w] == dist[v] + 1 {
                sigma[w] += sigma[v];
                predecessors[w].push(v);
            }
        }
    }

    let mut delta = vec![0.0f64; n];
    while let Some(w) = stack.pop() {
        for &v in &predecessors[w] {
            delta[v] += (sigma[v] / sigma[w]) * (1.0 + delta[w]);
        }
        if w != s {
            acc[w] += delta[w];
        }
    }
}

/// Weighted PageRank with uniform teleport; dangling mass is redistributed
/// uniformly so the vector always sums to 1.
pub fn pagerank(graph: &AdjacencyGraph, damping: f64, max_iterations: usize, tol: f64) -> Vec<f64> {
    let n = graph.node_count();
    if n == 0 {
        return Vec::new();
    }
    let inv_n = 1.0 / n as f64;
    let weight_sums: Vec<f64> = (0..n).map(|u| graph.weight_sum(u)).collect();
    let mut rank = vec![inv_n; n];
    let mut next = vec![0.0f64; n];

    for _ in 0..max_iterations {
        let dangling: f64 = (0..n).filter(|&u| weight_sums[u] == 0.0).map(|u| rank[u]).sum();
        next.par_iter_mut().enumerate().for_each(|(u, slot)| {
            let mut incoming = 0.0;
            for &(v, w) in &graph.neighbors[u] {
                let v = v as usize;
                if weight_sums[v] > 0.0 {
                    incoming += rank[v] * (w / weight_sums[v]);
                }
            }
            *slot = (1.0 - damping) * inv_n + damping * (incoming + dangling * inv_n);
        });
        let delta: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < tol {
            break;
        }
    }
    rank
}

/// Eigenvector centrality by power iteration on the weighted adjacency,
/// normalized to unit maximum. Isolated nodes converge to 0.
pub fn eigenvector(graph: &AdjacencyGraph, iterations: usize) -> Vec<f64> {
    let n = graph.node_count();
    if n == 0 {
        return Vec::new();
    }
    let mut x = vec![1.0f64; n];
    let mut next = vec![0.0f64; n];
    for _ in 0..iterations {
        next.par_iter_mut().enumerate().for_each(|(u, slot)| {
            *slot = graph.neighbors[u].iter().map(|&(v, w)| w * x[v as usize]).sum();
        });
        let max = next.iter().cloned().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return vec![0.0; n];
        }
        for (xi, ni) in x.iter_mut().zip(&next) {
            *xi = ni / max;
        }
    }
    x
}

/// Harmonic closeness on the unweighted skeleton: sum of 1/d(u,v) over
/// reachable v. Robust to disconnected layers.
pub fn harmonic_closeness(graph: &AdjacencyGraph) -> Vec<f64> {
    let n = graph.node_count();
    (0..n)
        .into_par_iter()
        .map(|s| {
            let mut dist = vec![-1i64; n];
            dist[s] = 0;
            let mut queue = VecDeque::new();
            queue.push_back(s);
            let mut total = 0.0;
            while let Some(v) = queue.pop_front() {
                for &(w, _) in &graph.neighbors[v] {
                    let w = w as usize;
                    if dist[w] < 0 {
                        dist[w] = dist[v] + 1;
                        total += 1.0 / dist[w] as f64;
                        queue.push_back(w);
                    }
                }
            }
            total
        })
        .collect()
}

/// Mean incident edge weight; 0 for isolated nodes.
pub fn average_weights(graph: &AdjacencyGraph) -> Vec<f64> {
    (0..graph.node_count())
        .map(|u| {
            let d = graph.degree(u);
            if d == 0 {
                0.0
            } else {
                graph.weight_sum(u) / d as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> AdjacencyGraph {
        AdjacencyGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)])
    }

    #[test]
    fn path_middle_vertex_scores_one() {
        let b = betweenness(&path3());
        assert_eq!(b, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn star_center_scores_pair_count() {
        let g = AdjacencyGraph::from_edges(
            5,
            &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)],
        );
        let b = betweenness(&g);
        assert_eq!(b[0], 6.0); // C(4,2)
        assert!(b[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pagerank_sums_to_one_with_dangling_nodes() {
        let g = AdjacencyGraph::from_edges(4, &[(0, 1, 2.0), (1, 2, 1.0)]); // node 3 isolated
        let pr = pagerank(&g, 0.85, 100, 1e-12);
        let sum: f64 = pr.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "sum = {sum}");
        assert!(pr.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn eigenvector_peaks_at_hub() {
        let g = AdjacencyGraph::from_edges(
            4,
            &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0)],
        );
        let ev = eigenvector(&g, 100);
        assert!((ev[0] - 1.0).abs() < 1e-9);
        assert!(ev[3] < ev[1]);
    }

    #[test]
    fn harmonic_closeness_handles_disconnection() {
        let g = AdjacencyGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let c = harmonic_closeness(&g);
        assert_eq!(c, vec![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn average_weights_zero_for_isolated() {
        let g = AdjacencyGraph::from_edges(3, &[(0, 1, 0.8)]);
        let aw = average_weights(&g);
        assert_eq!(aw, vec![0.8, 0.8, 0.0]);
    }
}
