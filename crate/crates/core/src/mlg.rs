//! The multi-layer user graph: one layer per tag cluster.
//!
//! Layer nodes are the users whose accepted-answer count inside the layer
//! reaches the epsilon percentile. Every node carries a topic vector over the
//! layer's tags, normalized by the user's accepted contributions across *all*
//! layers, so one user's entries sum to 1 globally. Edges connect nodes whose
//! topic vectors have cosine similarity of at least delta.
//!
//! Expert labeling is global: candidates are the users at or above the
//! expert percentile of accepted answers, experts the candidates whose
//! acceptance ratio strictly exceeds the candidate average.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, AdjacencyGraph};
use crate::ids::{PostId, UserId};
use crate::ingest::Dataset;
use crate::topics::TagClustering;

/// Question-level activity of one user inside one layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerUserStats {
    pub answers: u32,
    pub accepted: u32,
}

/// Global (training period) activity of one user.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalUserStats {
    pub answers: u32,
    pub accepted: u32,
}

impl GlobalUserStats {
    pub fn acceptance_ratio(&self) -> f64 {
        if self.answers == 0 {
            0.0
        } else {
            self.accepted as f64 / self.answers as f64
        }
    }
}

/// Centrality tables precomputed per layer, indexed by node position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CentralityTables {
    pub betweenness: Vec<f64>,
    /// 1-based rank in the betweenness ordering (descending score, ties by
    /// ascending user id).
    pub betweenness_rank: Vec<u32>,
    pub pagerank: Vec<f64>,
    pub eigenvector: Vec<f64>,
    pub closeness: Vec<f64>,
    pub degree: Vec<u32>,
    pub avg_weight: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub id: usize,
    /// Cluster member tags, sorted; topic vector positions follow this order.
    pub tags: Vec<String>,
    /// Node user ids, sorted ascending.
    pub nodes: Vec<UserId>,
    /// Per node: accepted-answer distribution over `tags`, normalized by the
    /// user's global accepted contribution.
    pub topic_vectors: Vec<Vec<f64>>,
    pub node_stats: Vec<LayerUserStats>,
    /// Undirected edges `(u, v, weight)` with `u < v` (node indices).
    pub edges: Vec<(u32, u32, f64)>,
    pub centrality: CentralityTables,
    /// Question-level stats for every user who answered in this layer,
    /// nodes or not. Needed for query-knowledge features of arbitrary users.
    pub user_stats: BTreeMap<UserId, LayerUserStats>,
    /// Absolute accepted-count threshold derived from the epsilon percentile.
    pub epsilon_cut: u32,
}

impl Layer {
    pub fn node_index(&self, user: UserId) -> Option<usize> {
        self.nodes.binary_search(&user).ok()
    }

    pub fn adjacency(&self) -> AdjacencyGraph {
        AdjacencyGraph::from_edges(self.nodes.len(), &self.edges)
    }

    pub fn max_answer_count(&self) -> u32 {
        self.node_stats.iter().map(|s| s.answers).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertLabeling {
    /// Users at or above the expert percentile of accepted answers, sorted.
    pub candidates: Vec<UserId>,
    /// Candidates whose acceptance ratio strictly exceeds the mean, sorted.
    pub experts: Vec<UserId>,
    /// Smallest accepted-answer count among candidates (MinAccAns).
    pub min_accepted: u32,
    pub mean_ratio: f64,
    pub ratios: BTreeMap<UserId, f64>,
}

impl ExpertLabeling {
    pub fn is_expert(&self, user: UserId) -> bool {
        self.experts.binary_search(&user).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlgParams {
    pub epsilon_percentile: f64,
    pub delta: f64,
    pub expert_percentile: f64,
    /// Documented conventions, recorded for cross-run comparability.
    pub percentile_convention: String,
    pub betweenness_mode: String,
    pub percentile_scope: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLayerGraph {
    pub layers: Vec<Layer>,
    pub labeling: ExpertLabeling,
    pub tag_to_layer: BTreeMap<String, usize>,
    pub user_global: BTreeMap<UserId, GlobalUserStats>,
    pub params: MlgParams,
    pub warnings: Vec<String>,
}

impl MultiLayerGraph {
    /// Layers a question belongs to: the distinct clusters of its tags.
    /// Tags unseen at build time are ignored; a question with no known tag
    /// is routed to every layer.
    pub fn assign_question_layers(&self, tags: &[String]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for t in tags {
            if let Some(&l) = self.tag_to_layer.get(t) {
                out.insert(l);
            }
        }
        if out.is_empty() {
            out.extend(0..self.layers.len());
        }
        out
    }

    pub fn global_stats(&self, user: UserId) -> GlobalUserStats {
        self.user_global.get(&user).copied().unwrap_or_default()
    }
}

/// Nearest-rank percentile: the value at 1-based index `ceil(p/100 * n)` of
/// the ascending-sorted sample.
pub fn percentile_nearest_rank(sorted_ascending: &[u32], p: f64) -> u32 {
    assert!(!sorted_ascending.is_empty());
    let n = sorted_ascending.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted_ascending[rank.clamp(1, n) - 1]
}

/// Label candidates and experts from global accepted-answer counts.
///
/// An empty expert set (every candidate sharing one ratio) is returned as-is;
/// the pipeline treats it as a fatal configuration problem.
pub fn label_experts(
    user_global: &BTreeMap<UserId, GlobalUserStats>,
    expert_percentile: f64,
) -> Result<ExpertLabeling> {
    let mut accepted: Vec<u32> = user_global
        .values()
        .map(|s| s.accepted)
        .filter(|&a| a > 0)
        .collect();
    if accepted.is_empty() {
        return Err(Error::EmptyDataset(
            "no user has an accepted answer".to_string(),
        ));
    }
    accepted.sort_unstable();
    let min_accepted = percentile_nearest_rank(&accepted, expert_percentile);

    let candidates: Vec<UserId> = user_global
        .iter()
        .filter(|(_, s)| s.accepted >= min_accepted)
        .map(|(&u, _)| u)
        .collect();
    let ratios: BTreeMap<UserId, f64> = candidates
        .iter()
        .map(|&u| (u, user_global[&u].acceptance_ratio()))
        .collect();
    let mean_ratio = ratios.values().sum::<f64>() / candidates.len() as f64;
    let experts: Vec<UserId> = candidates
        .iter()
        .copied()
        .filter(|u| ratios[u] > mean_ratio)
        .collect();

    Ok(ExpertLabeling { candidates, experts, min_accepted, mean_ratio, ratios })
}

/// Per-user accepted contributions keyed by (layer, tag), plus the global
/// denominator of the topic-vector normalization.
struct AcceptedContributions {
    per_user: HashMap<UserId, BTreeMap<(usize, String), u32>>,
    totals: HashMap<UserId, u32>,
}

pub fn build(
    dataset: &Dataset,
    clustering: &TagClustering,
    epsilon_percentile: f64,
    delta: f64,
    expert_percentile: f64,
) -> Result<MultiLayerGraph> {
    if !(epsilon_percentile > 0.0 && epsilon_percentile < 100.0) {
        return Err(Error::Config(format!(
            "epsilon percentile must lie in (0,100), got {epsilon_percentile}"
        )));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Config(format!("delta must lie in [0,1], got {delta}")));
    }

    let layer_count = clustering.k;
    let tag_to_layer: BTreeMap<String, usize> = clustering.assignment.clone();

    // Question -> distinct layers of its tags.
    let mut question_layers: HashMap<PostId, Vec<usize>> = HashMap::new();
    for q in &dataset.train_questions {
        let mut set = BTreeSet::new();
        for t in &q.tags {
            if let Some(&l) = tag_to_layer.get(t) {
                set.insert(l);
            }
        }
        question_layers.insert(q.id, set.into_iter().collect());
    }

    // Global and per-layer question-level stats over the training period.
    let mut user_global: BTreeMap<UserId, GlobalUserStats> = BTreeMap::new();
    let mut layer_stats: Vec<BTreeMap<UserId, LayerUserStats>> =
        vec![BTreeMap::new(); layer_count];
    let mut contributions = AcceptedContributions {
        per_user: HashMap::new(),
        totals: HashMap::new(),
    };

    for q in &dataset.train_questions {
        let layers = &question_layers[&q.id];
        let answers = dataset.answers.get(&q.id).map(Vec::as_slice).unwrap_or(&[]);
        for a in answers {
            let g = user_global.entry(a.owner).or_default();
            g.answers += 1;
            let is_accepted = a.id == q.accepted_answer_id;
            if is_accepted {
                g.accepted += 1;
            }
            for &l in layers {
                let s = layer_stats[l].entry(a.owner).or_default();
                s.answers += 1;
                if is_accepted {
                    s.accepted += 1;
                }
            }
        }
        // One accepted contribution per (question, tag) pair.
        let u = q.accepted_answerer;
        for t in &q.tags {
            if let Some(&l) = tag_to_layer.get(t) {
                *contributions
                    .per_user
                    .entry(u)
                    .or_default()
                    .entry((l, t.clone()))
                    .or_insert(0) += 1;
                *contributions.totals.entry(u).or_insert(0) += 1;
            }
        }
    }

    let labeling = label_experts(&user_global, expert_percentile)?;

    let mut warnings = Vec::new();
    let mut layers = Vec::with_capacity(layer_count);
    for l in 0..layer_count {
        let tags: Vec<String> = tag_to_layer
            .iter()
            .filter(|(_, &c)| c == l)
            .map(|(t, _)| t.clone())
            .collect();
        let layer = build_layer(
            l,
            tags,
            &layer_stats[l],
            &contributions,
            epsilon_percentile,
            delta,
        );
        if layer.nodes.is_empty() {
            warnings.push(format!("layer {l} has no qualifying node"));
        }
        layers.push(layer);
    }

    Ok(MultiLayerGraph {
        layers,
        labeling,
        tag_to_layer,
        user_global,
        params: MlgParams {
            epsilon_percentile,
            delta,
            expert_percentile,
            percentile_convention: "nearest-rank".to_string(),
            betweenness_mode: "unweighted-skeleton".to_string(),
            percentile_scope: "per-layer".to_string(),
        },
        warnings,
    })
}

fn build_layer(
    id: usize,
    tags: Vec<String>,
    stats: &BTreeMap<UserId, LayerUserStats>,
    contributions: &AcceptedContributions,
    epsilon_percentile: f64,
    delta: f64,
) -> Layer {
    let mut nonzero: Vec<u32> = stats.values().map(|s| s.accepted).filter(|&a| a > 0).collect();
    let (nodes, epsilon_cut): (Vec<UserId>, u32) = if nonzero.is_empty() {
        (Vec::new(), 0)
    } else {
        nonzero.sort_unstable();
        let cut = percentile_nearest_rank(&nonzero, epsilon_percentile);
        let nodes = stats
            .iter()
            .filter(|(_, s)| s.accepted >= cut)
            .map(|(&u, _)| u)
            .collect();
        (nodes, cut)
    };

    let node_stats: Vec<LayerUserStats> = nodes.iter().map(|u| stats[u]).collect();

    let topic_vectors: Vec<Vec<f64>> = nodes
        .iter()
        .map(|u| {
            let total = contributions.totals.get(u).copied().unwrap_or(0);
            let per_tag = contributions.per_user.get(u);
            tags.iter()
                .map(|t| match (per_tag, total) {
                    (Some(map), total) if total > 0 => map
                        .get(&(id, t.clone()))
                        .map(|&c| c as f64 / total as f64)
                        .unwrap_or(0.0),
                    _ => 0.0,
                })
                .collect()
        })
        .collect();

    let edges = build_edges(&topic_vectors, delta);

    let adjacency = AdjacencyGraph::from_edges(nodes.len(), &edges);
    let betweenness = graph::betweenness(&adjacency);
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| {
        betweenness[b]
            .partial_cmp(&betweenness[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| nodes[a].cmp(&nodes[b]))
    });
    let mut betweenness_rank = vec![0u32; nodes.len()];
    for (rank, &idx) in order.iter().enumerate() {
        betweenness_rank[idx] = rank as u32 + 1;
    }

    let centrality = CentralityTables {
        betweenness,
        betweenness_rank,
        pagerank: graph::pagerank(&adjacency, 0.85, 100, 1e-10),
        eigenvector: graph::eigenvector(&adjacency, 100),
        closeness: graph::harmonic_closeness(&adjacency),
        degree: (0..nodes.len()).map(|u| adjacency.degree(u) as u32).collect(),
        avg_weight: graph::average_weights(&adjacency),
    };

    Layer {
        id,
        tags,
        nodes,
        topic_vectors,
        node_stats,
        edges,
        centrality,
        user_stats: stats.clone(),
        epsilon_cut,
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// All pairs with cosine similarity at or above `delta`; no self loops.
pub fn build_edges(vectors: &[Vec<f64>], delta: f64) -> Vec<(u32, u32, f64)> {
    let n = vectors.len();
    let per_node: Vec<Vec<(u32, u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let mut out = Vec::new();
            for v in u + 1..n {
                let w = cosine(&vectors[u], &vectors[v]);
                if w >= delta {
                    out.push((u as u32, v as u32, w));
                }
            }
            out
        })
        .collect();
    per_node.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::Timestamp;
    use crate::ingest::{Answer, Question, UserRecord};
    use crate::topics::{build_matrix, build_vocabulary, cluster};

    /// Tiny corpus builder: each entry is (question tags, answerers, index of
    /// the accepted answerer within that list).
    pub(crate) fn dataset_from(spec: &[(&[&str], &[i64], usize)]) -> Dataset {
        let mut train = Vec::new();
        let mut answers: BTreeMap<PostId, Vec<Answer>> = BTreeMap::new();
        let mut users: BTreeMap<UserId, UserRecord> = BTreeMap::new();
        let mut next_id = 1i64;
        for (i, (tags, answerers, accepted_idx)) in spec.iter().enumerate() {
            let qid = PostId(next_id);
            next_id += 1;
            let mut list = Vec::new();
            for (j, &owner) in answerers.iter().enumerate() {
                let aid = PostId(next_id);
                next_id += 1;
                list.push(Answer {
                    id: aid,
                    question_id: qid,
                    owner: UserId(owner),
                    created_at: Timestamp(i as i64 * 100 + j as i64 + 1),
                });
                users.entry(UserId(owner)).or_insert(UserRecord {
                    id: UserId(owner),
                    reputation: 10,
                });
            }
            let accepted = list[*accepted_idx].clone();
            train.push(Question {
                id: qid,
                asker: UserId(1000 + i as i64),
                created_at: Timestamp(i as i64 * 100),
                title: format!("q{i}"),
                body: String::new(),
                tags: tags.iter().map(|t| t.to_string()).collect(),
                accepted_answer_id: accepted.id,
                accepted_answerer: accepted.owner,
            });
            answers.insert(qid, list);
        }
        Dataset { train_questions: train, test_questions: Vec::new(), answers, users }
    }

    pub(crate) fn clustering_for(dataset: &Dataset, k_range: (usize, usize)) -> TagClustering {
        let vocab = build_vocabulary(&dataset.train_questions, 10).unwrap();
        let matrix = build_matrix(&vocab, &dataset.train_questions);
        cluster(&matrix, k_range, 7).unwrap()
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let v = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        assert_eq!(percentile_nearest_rank(&v, 90.0), 9);
        assert_eq!(percentile_nearest_rank(&v, 95.0), 10);
        assert_eq!(percentile_nearest_rank(&v, 50.0), 5);
        assert_eq!(percentile_nearest_rank(&[4, 4, 4], 90.0), 4);
    }

    #[test]
    fn labeling_matches_oracle() {
        let mut stats = BTreeMap::new();
        // user 1: 8/10 accepted; user 2: 4/10; both land in C with p=50.
        stats.insert(UserId(1), GlobalUserStats { answers: 10, accepted: 8 });
        stats.insert(UserId(2), GlobalUserStats { answers: 10, accepted: 4 });
        let lab = label_experts(&stats, 50.0).unwrap();
        assert_eq!(lab.candidates, vec![UserId(1), UserId(2)]);
        assert!((lab.mean_ratio - 0.6).abs() < 1e-12);
        assert_eq!(lab.experts, vec![UserId(1)]);
    }

    #[test]
    fn equal_ratios_produce_empty_expert_set() {
        let mut stats = BTreeMap::new();
        stats.insert(UserId(1), GlobalUserStats { answers: 10, accepted: 5 });
        stats.insert(UserId(2), GlobalUserStats { answers: 20, accepted: 10 });
        let lab = label_experts(&stats, 50.0).unwrap();
        assert!(lab.experts.is_empty());
    }

    fn two_topic_dataset() -> Dataset {
        // Topic A tags {a, a2}, topic B tags {b, b2}; user 1 owns topic A,
        // user 2 owns topic B, user 3 dabbles in both.
        let mut spec: Vec<(&[&str], &[i64], usize)> = Vec::new();
        for _ in 0..6 {
            spec.push((&["a", "a2"], &[1, 3], 0));
            spec.push((&["b", "b2"], &[2, 3], 0));
        }
        spec.push((&["a", "a2"], &[3, 1], 0));
        spec.push((&["b", "b2"], &[3, 2], 0));
        dataset_from(&spec)
    }

    #[test]
    fn question_layer_assignment() {
        let ds = two_topic_dataset();
        let clustering = clustering_for(&ds, (2, 2));
        let mlg = build(&ds, &clustering, 50.0, 0.0, 50.0).unwrap();

        let la = mlg.tag_to_layer["a"];
        let lb = mlg.tag_to_layer["b"];
        assert_ne!(la, lb);
        let same = mlg.assign_question_layers(&["a".into(), "a2".into()]);
        assert_eq!(same.into_iter().collect::<Vec<_>>(), vec![la]);
        let both = mlg.assign_question_layers(&["a".into(), "b".into()]);
        assert_eq!(both.len(), 2);
        // Unknown tags are ignored; all-unknown falls back to every layer.
        let partial = mlg.assign_question_layers(&["a".into(), "zzz".into()]);
        assert_eq!(partial.into_iter().collect::<Vec<_>>(), vec![la]);
        let unknown = mlg.assign_question_layers(&["zzz".into()]);
        assert_eq!(unknown.len(), mlg.layers.len());
    }

    #[test]
    fn user_in_two_layers_and_global_normalization() {
        let ds = two_topic_dataset();
        let clustering = clustering_for(&ds, (2, 2));
        let mlg = build(&ds, &clustering, 10.0, 0.0, 50.0).unwrap();

        // User 3 has an accepted answer in both topics.
        let appearing: Vec<usize> = mlg
            .layers
            .iter()
            .filter(|l| l.node_index(UserId(3)).is_some())
            .map(|l| l.id)
            .collect();
        assert_eq!(appearing.len(), 2);

        // Topic-vector entries of each user sum to 1 across all layers.
        for user in [UserId(1), UserId(2), UserId(3)] {
            let mut sum = 0.0;
            for layer in &mlg.layers {
                if let Some(i) = layer.node_index(user) {
                    sum += layer.topic_vectors[i].iter().sum::<f64>();
                }
            }
            assert!((sum - 1.0).abs() < 1e-9, "user {user}: {sum}");
        }
    }

    #[test]
    fn topic_vector_matches_recount_oracle() {
        let ds = two_topic_dataset();
        let clustering = clustering_for(&ds, (2, 2));
        let mlg = build(&ds, &clustering, 10.0, 0.0, 50.0).unwrap();

        // Brute-force recount from raw answers for every node entry.
        for layer in &mlg.layers {
            for (i, &user) in layer.nodes.iter().enumerate() {
                for (j, tag) in layer.tags.iter().enumerate() {
                    let mut count = 0u32;
                    let mut total = 0u32;
                    for q in &ds.train_questions {
                        if q.accepted_answerer == user {
                            for t in &q.tags {
                                total += 1;
                                if t == tag && mlg.tag_to_layer[t] == layer.id {
                                    count += 1;
                                }
                            }
                        }
                    }
                    let expected = if total == 0 { 0.0 } else { count as f64 / total as f64 };
                    assert!(
                        (layer.topic_vectors[i][j] - expected).abs() < 1e-12,
                        "layer {} user {user} tag {tag}",
                        layer.id
                    );
                }
            }
        }
    }

    #[test]
    fn edge_rules() {
        let identical = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let e = build_edges(&identical, 1.0);
        assert_eq!(e.len(), 1);
        assert!((e[0].2 - 1.0).abs() < 1e-12);

        let orthogonal = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(build_edges(&orthogonal, 0.01).is_empty());

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let angled = vec![vec![1.0, 0.0], vec![s, s]];
        let e = build_edges(&angled, 0.5);
        assert_eq!(e.len(), 1);
        assert!((e[0].2 - s).abs() < 1e-9);
    }

    #[test]
    fn raising_delta_never_adds_edges_and_raising_epsilon_never_adds_nodes() {
        let ds = two_topic_dataset();
        let clustering = clustering_for(&ds, (2, 2));
        let loose = build(&ds, &clustering, 10.0, 0.1, 50.0).unwrap();
        let tight = build(&ds, &clustering, 60.0, 0.9, 50.0).unwrap();
        for (ll, tl) in loose.layers.iter().zip(&tight.layers) {
            assert!(tl.nodes.iter().all(|u| ll.nodes.contains(u)));
            let loose_pairs: BTreeSet<(UserId, UserId)> = ll
                .edges
                .iter()
                .map(|&(u, v, _)| (ll.nodes[u as usize], ll.nodes[v as usize]))
                .collect();
            for &(u, v, _) in &tl.edges {
                let pair = (tl.nodes[u as usize], tl.nodes[v as usize]);
                assert!(loose_pairs.contains(&pair));
            }
        }
    }

    #[test]
    fn equal_layer_counts_include_everyone() {
        // Every answerer collects exactly one accepted answer.
        let spec: Vec<(&[&str], &[i64], usize)> =
            vec![(&["a"], &[1], 0), (&["a"], &[2], 0), (&["a"], &[3], 0)];
        let ds = dataset_from(&spec);
        let clustering = TagClustering::single_layer(
            &build_vocabulary(&ds.train_questions, 10).unwrap(),
            0,
        );
        let mlg = build(&ds, &clustering, 90.0, 0.5, 50.0).unwrap();
        assert_eq!(mlg.layers[0].nodes.len(), 3);
        assert_eq!(mlg.layers[0].epsilon_cut, 1);
    }
}
