//! Candidate-expert selection, run per relevant layer and per method.
//!
//! Three phases. Sorting orders layer nodes either by betweenness centrality
//! (network method) or by the query's merged retrieval order restricted to
//! the layer (content method). Collection scans that order, skipping
//! non-experts and accumulating experts while the modeled probability of
//! receiving no answer stays above `alpha`:
//!
//! `p <- p * (1 - mu~)` with `mu~ = mu * answers_in_layer / max_answers`,
//!
//! where `mu` is the user's global acceptance ratio. Exploration then runs
//! fixed-length random walks from every collected seed, stepping to neighbor
//! `j` with probability `w_ij / sum_z w_iz`, and records every expert
//! encountered.
//!
//! RNG streams are keyed by (query, layer, method, seed index) so parallel
//! and serial schedules, and single- and dual-method runs, draw identical
//! numbers.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::AdjacencyGraph;
use crate::ids::{PostId, UserId};
use crate::mlg::{Layer, MultiLayerGraph};
use crate::seeding::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Network,
    Content,
}

impl Method {
    fn stream_tag(self) -> u64 {
        match self {
            Method::Network => 1,
            Method::Content => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSet {
    pub network: bool,
    pub content: bool,
}

impl MethodSet {
    pub fn both() -> Self {
        MethodSet { network: true, content: true }
    }

    pub fn only(method: Method) -> Self {
        match method {
            Method::Network => MethodSet { network: true, content: false },
            Method::Content => MethodSet { network: false, content: true },
        }
    }

    pub fn iter(self) -> impl Iterator<Item = Method> {
        [Method::Network, Method::Content]
            .into_iter()
            .filter(move |m| match m {
                Method::Network => self.network,
                Method::Content => self.content,
            })
    }

    pub fn parse(s: &str) -> Option<Self> {
        let mut set = MethodSet { network: false, content: false };
        for part in s.split(',') {
            match part.trim().to_lowercase().as_str() {
                "network" => set.network = true,
                "content" => set.content = true,
                "" => {}
                _ => return None,
            }
        }
        (set.network || set.content).then_some(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub walks_per_seed: usize,
    pub max_steps: usize,
    pub rng_seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig { walks_per_seed: 5, max_steps: 10, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub alpha: f64,
    pub walk: WalkConfig,
    pub methods: MethodSet,
    pub exploration: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            alpha: 0.001,
            walk: WalkConfig::default(),
            methods: MethodSet::both(),
            exploration: true,
        }
    }
}

/// How one method met one candidate inside one layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDiscovery {
    pub visits_network: u32,
    pub visits_content: u32,
    /// 1-based position at which the candidate was first reached: the sorted
    /// rank during collection, or seed-set size plus walk step during
    /// exploration.
    pub steps_network: Option<u32>,
    pub steps_content: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CandidateSet {
    pub query: PostId,
    /// Query layers (selection ran in each of these).
    pub layers: BTreeSet<usize>,
    /// Union of discovered experts, ascending.
    pub experts: Vec<UserId>,
    pub provenance: BTreeMap<UserId, BTreeMap<usize, LayerDiscovery>>,
}

impl CandidateSet {
    pub fn contains(&self, user: UserId) -> bool {
        self.experts.binary_search(&user).is_ok()
    }

    /// Layers in which the candidate was actually selected.
    pub fn selected_layers(&self, user: UserId) -> Option<&BTreeMap<usize, LayerDiscovery>> {
        self.provenance.get(&user)
    }
}

/// Network ordering: node indices by descending betweenness, ties by user id.
pub fn sorted_nodes_network(layer: &Layer) -> Vec<usize> {
    let mut order: Vec<usize> = (0..layer.nodes.len()).collect();
    order.sort_by_key(|&i| layer.centrality.betweenness_rank[i]);
    order
}

/// Content ordering: the query's merged expert list restricted to this
/// layer's node set, keeping the merged order.
pub fn sorted_nodes_content(layer: &Layer, merged_experts: &[UserId]) -> Vec<usize> {
    merged_experts
        .iter()
        .filter_map(|&u| layer.node_index(u))
        .collect()
}

/// Outcome of the collection phase.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectedSeeds {
    /// (node index, 1-based rank in the scanned order).
    pub seeds: Vec<(usize, u32)>,
    pub final_probability: f64,
}

/// Scan the sorted order, skipping non-experts, until the no-answer
/// probability drops to `alpha` or the order is exhausted.
pub fn collect(
    sorted: &[usize],
    layer: &Layer,
    mlg: &MultiLayerGraph,
    alpha: f64,
) -> CollectedSeeds {
    let max_answers = layer.max_answer_count();
    let mut p = 1.0f64;
    let mut seeds = Vec::new();
    for (pos, &node) in sorted.iter().enumerate() {
        let user = layer.nodes[node];
        if !mlg.labeling.is_expert(user) {
            continue;
        }
        let mu = mlg.global_stats(user).acceptance_ratio();
        let smoothed = if max_answers == 0 {
            0.0
        } else {
            mu * layer.node_stats[node].answers as f64 / max_answers as f64
        };
        seeds.push((node, pos as u32 + 1));
        p *= 1.0 - smoothed;
        if p <= alpha {
            break;
        }
    }
    CollectedSeeds { seeds, final_probability: p }
}

/// Transition distribution out of `node`: weight over total incident weight.
pub fn neighbor_distribution(adjacency: &AdjacencyGraph, node: usize) -> Vec<(u32, f64)> {
    let total: f64 = adjacency.neighbors[node].iter().map(|&(_, w)| w).sum();
    if total <= 0.0 {
        return Vec::new();
    }
    adjacency.neighbors[node]
        .iter()
        .map(|&(v, w)| (v, w / total))
        .collect()
}

fn sample_step(adjacency: &AdjacencyGraph, node: usize, rng: &mut impl Rng) -> Option<usize> {
    let dist = neighbor_distribution(adjacency, node);
    if dist.is_empty() {
        return None;
    }
    let draw: f64 = rng.gen();
    let mut cumulative = 0.0;
    for &(v, p) in &dist {
        cumulative += p;
        if draw < cumulative {
            return Some(v as usize);
        }
    }
    Some(dist.last().unwrap().0 as usize)
}

/// Per-(layer, method) discovery map: node index -> (visits, first step).
type Discoveries = BTreeMap<usize, (u32, u32)>;

/// Expand the seed set with weighted random walks. Every expert encountered
/// (seeds included) gets its visit count incremented; newly met experts get
/// `seed count + walk step` as their discovery step.
pub fn random_walk_expand(
    layer: &Layer,
    adjacency: &AdjacencyGraph,
    mlg: &MultiLayerGraph,
    seeds: &CollectedSeeds,
    walk: &WalkConfig,
    stream: &[u64],
) -> Discoveries {
    let mut found: Discoveries = seeds.seeds.iter().map(|&(n, r)| (n, (1, r))).collect();
    let base = seeds.seeds.len() as u32;
    for (seed_index, &(seed, _)) in seeds.seeds.iter().enumerate() {
        let seed_stream = derive_seed(walk.rng_seed, &[stream, &[seed_index as u64]].concat());
        let mut rng = ChaCha8Rng::seed_from_u64(seed_stream);
        for _ in 0..walk.walks_per_seed {
            // The walk starts on the seed, which counts as an encounter.
            found.entry(seed).and_modify(|(v, _)| *v += 1);
            let mut current = seed;
            for step in 1..=walk.max_steps {
                let Some(next) = sample_step(adjacency, current, &mut rng) else {
                    break;
                };
                if mlg.labeling.is_expert(layer.nodes[next]) {
                    let entry = found.entry(next).or_insert((0, base + step as u32));
                    entry.0 += 1;
                    entry.1 = entry.1.min(base + step as u32);
                }
                current = next;
            }
        }
    }
    found
}

/// Run sorting, collection and exploration for every (query layer, method)
/// and union the discoveries.
pub fn select_candidates(
    query: PostId,
    query_tags: &[String],
    mlg: &MultiLayerGraph,
    adjacencies: &[AdjacencyGraph],
    merged_experts: &[UserId],
    cfg: &SelectionConfig,
) -> CandidateSet {
    let layers = mlg.assign_question_layers(query_tags);
    let mut set = CandidateSet { query, layers: layers.clone(), ..Default::default() };

    for &layer_id in &layers {
        let layer = &mlg.layers[layer_id];
        if layer.nodes.is_empty() {
            continue;
        }
        let adjacency = &adjacencies[layer_id];
        for method in cfg.methods.iter() {
            let sorted = match method {
                Method::Network => sorted_nodes_network(layer),
                Method::Content => sorted_nodes_content(layer, merged_experts),
            };
            let seeds = collect(&sorted, layer, mlg, cfg.alpha);
            let found = if cfg.exploration {
                let stream = [query.0 as u64, layer_id as u64, method.stream_tag()];
                random_walk_expand(layer, adjacency, mlg, &seeds, &cfg.walk, &stream)
            } else {
                seeds.seeds.iter().map(|&(n, r)| (n, (1, r))).collect()
            };
            for (node, (visits, first_step)) in found {
                let user = layer.nodes[node];
                let entry = set
                    .provenance
                    .entry(user)
                    .or_default()
                    .entry(layer_id)
                    .or_default();
                match method {
                    Method::Network => {
                        entry.visits_network += visits;
                        entry.steps_network = Some(match entry.steps_network {
                            Some(s) => s.min(first_step),
                            None => first_step,
                        });
                    }
                    Method::Content => {
                        entry.visits_content += visits;
                        entry.steps_content = Some(match entry.steps_content {
                            Some(s) => s.min(first_step),
                            None => first_step,
                        });
                    }
                }
            }
        }
    }

    set.experts = set.provenance.keys().copied().collect();
    set
}
