//! Topic identification: tags are clustered on their normalized co-occurrence
//! with the community's most frequent tags.
//!
//! Each tag becomes a row counting, per frequent "feature" tag, the questions
//! where both appear together. Rows are normalized to relative frequencies
//! and k-means groups them into macro topics; the number of clusters is
//! chosen by silhouette over a configured range.

pub mod kmeans;
pub mod silhouette;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Question;

pub use kmeans::{kmeans, KmeansResult};
pub use silhouette::silhouette_score;

/// The training-set tag universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagVocabulary {
    /// Every distinct tag, sorted lexicographically.
    pub all_tags: Vec<String>,
    /// The `lambda` most frequent tags (ties broken lexicographically),
    /// used as matrix columns.
    pub feature_tags: Vec<String>,
    pub tag_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    pub tags: Vec<String>,
    pub features: Vec<String>,
    /// `raw[i][j]` = number of questions containing both `tags[i]` and
    /// `features[j]`. When the tag is itself a feature the pair degenerates
    /// to a singleton, so the cell counts the tag's own questions.
    pub raw: Vec<Vec<u64>>,
    /// Rows of `raw` normalized to sum to 1; all-zero rows stay zero.
    pub normalized: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagClustering {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
    pub centroids: Vec<Vec<f64>>,
    pub silhouette: f64,
    pub seed: u64,
    pub metadata: ClusteringMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringMetadata {
    pub distance: String,
    pub k_range: (usize, usize),
    pub lambda: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Tags whose raw row was all zeros; they were assigned to the nearest
    /// centroid after training and excluded from the silhouette.
    pub degenerate_tags: usize,
}

impl TagClustering {
    pub fn layer_count(&self) -> usize {
        self.k
    }

    /// Single-layer fallback: every tag in cluster 0, no clustering run.
    pub fn single_layer(vocab: &TagVocabulary, seed: u64) -> TagClustering {
        let assignment = vocab.all_tags.iter().map(|t| (t.clone(), 0)).collect();
        TagClustering {
            k: 1,
            assignment,
            centroids: vec![vec![0.0; vocab.feature_tags.len()]],
            silhouette: 0.0,
            seed,
            metadata: ClusteringMetadata {
                distance: "euclidean".to_string(),
                k_range: (1, 1),
                lambda: vocab.feature_tags.len(),
                restarts: 0,
                max_iterations: 0,
                degenerate_tags: 0,
            },
        }
    }
}

/// Count tags over the training questions and pick the top-`lambda` features.
pub fn build_vocabulary(train_questions: &[Question], lambda: usize) -> Result<TagVocabulary> {
    if train_questions.is_empty() {
        return Err(Error::EmptyDataset("no training questions".to_string()));
    }
    let mut tag_counts: BTreeMap<String, u64> = BTreeMap::new();
    for q in train_questions {
        for t in &q.tags {
            *tag_counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    let all_tags: Vec<String> = tag_counts.keys().cloned().collect();
    let mut by_count: Vec<(&String, &u64)> = tag_counts.iter().collect();
    by_count.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let feature_tags = by_count
        .into_iter()
        .take(lambda.min(all_tags.len()))
        .map(|(t, _)| t.clone())
        .collect();
    Ok(TagVocabulary { all_tags, feature_tags, tag_counts })
}

/// Build the raw and row-normalized co-occurrence matrix.
pub fn build_matrix(vocab: &TagVocabulary, train_questions: &[Question]) -> CooccurrenceMatrix {
    let tag_index: BTreeMap<&str, usize> = vocab
        .all_tags
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let feature_index: BTreeMap<&str, usize> = vocab
        .feature_tags
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();

    let mut raw = vec![vec![0u64; vocab.feature_tags.len()]; vocab.all_tags.len()];
    for q in train_questions {
        let features_present: Vec<usize> = q
            .tags
            .iter()
            .filter_map(|t| feature_index.get(t.as_str()).copied())
            .collect();
        for t in &q.tags {
            let Some(&ti) = tag_index.get(t.as_str()) else { continue };
            for &fj in &features_present {
                raw[ti][fj] += 1;
            }
        }
    }

    let normalized = raw
        .iter()
        .map(|row| {
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                vec![0.0; row.len()]
            } else {
                row.iter().map(|&v| v as f64 / sum as f64).collect()
            }
        })
        .collect();

    CooccurrenceMatrix {
        tags: vocab.all_tags.clone(),
        features: vocab.feature_tags.clone(),
        raw,
        normalized,
    }
}

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITERATIONS: usize = 300;

/// Cluster the matrix rows for every `k` in `k_range` and keep the silhouette
/// maximizer; ties prefer smaller `k`, then lower inertia.
pub fn cluster(
    matrix: &CooccurrenceMatrix,
    k_range: (usize, usize),
    seed: u64,
) -> Result<TagClustering> {
    let (k_min, k_max) = k_range;
    if k_min < 1 || k_min > k_max {
        return Err(Error::Config(format!("invalid k range [{k_min}, {k_max}]")));
    }

    // Zero raw rows carry no co-occurrence signal; they are held out of
    // training and attached to the nearest centroid afterwards.
    let active: Vec<usize> = (0..matrix.tags.len())
        .filter(|&i| matrix.raw[i].iter().any(|&v| v > 0))
        .collect();
    let points: Vec<Vec<f64>> = active.iter().map(|&i| matrix.normalized[i].clone()).collect();

    let distinct = {
        let mut rows: Vec<Vec<u64>> = points
            .iter()
            .map(|p| p.iter().map(|v| v.to_bits()).collect())
            .collect();
        rows.sort();
        rows.dedup();
        rows.len()
    };
    if distinct < k_min {
        return Err(Error::Config(format!(
            "only {distinct} distinct tag profiles but k_min = {k_min}"
        )));
    }
    let k_max_eff = k_max.min(distinct);

    let mut best: Option<(f64, usize, f64, KmeansResult)> = None;
    for k in k_min..=k_max_eff {
        let res = kmeans(&points, k, KMEANS_RESTARTS, KMEANS_MAX_ITERATIONS, seed);
        let s = silhouette_score(&points, &res.assignment, k);
        let candidate = (s, k, res.inertia, res);
        let replace = match &best {
            None => true,
            // Maximize silhouette; tie -> smaller k; tie -> smaller inertia.
            Some((bs, bk, bi, _)) => {
                (candidate.0, std::cmp::Reverse(candidate.1))
                    .partial_cmp(&(*bs, std::cmp::Reverse(*bk)))
                    .map(|o| {
                        o == std::cmp::Ordering::Greater
                            || (o == std::cmp::Ordering::Equal && candidate.2 < *bi)
                    })
                    .unwrap_or(false)
            }
        };
        if replace {
            best = Some(candidate);
        }
    }
    let (silhouette, k, _inertia, res) = best.unwrap();

    let mut assignment: BTreeMap<String, usize> = BTreeMap::new();
    for (pos, &row) in active.iter().enumerate() {
        assignment.insert(matrix.tags[row].clone(), res.assignment[pos]);
    }
    let mut degenerate = 0usize;
    for (i, tag) in matrix.tags.iter().enumerate() {
        if !assignment.contains_key(tag) {
            degenerate += 1;
            let c = kmeans::nearest(&matrix.normalized[i], &res.centroids);
            assignment.insert(tag.clone(), c);
        }
    }

    Ok(TagClustering {
        k,
        assignment,
        centroids: res.centroids,
        silhouette,
        seed,
        metadata: ClusteringMetadata {
            distance: "euclidean".to_string(),
            k_range: (k_min, k_max),
            lambda: matrix.features.len(),
            restarts: KMEANS_RESTARTS,
            max_iterations: KMEANS_MAX_ITERATIONS,
            degenerate_tags: degenerate,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{PostId, Timestamp, UserId};

    fn q(id: i64, tags: &[&str]) -> Question {
        Question {
            id: PostId(id),
            asker: UserId(1),
            created_at: Timestamp(id * 10),
            title: String::new(),
            body: String::new(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            accepted_answer_id: PostId(id + 1_000_000),
            accepted_answerer: UserId(2),
        }
    }

    #[test]
    fn vocabulary_counts_and_tie_break() {
        let questions = vec![q(1, &["a", "b"]), q(2, &["a", "c"]), q(3, &["a"])];
        let v = build_vocabulary(&questions, 2).unwrap();
        assert_eq!(v.all_tags, vec!["a", "b", "c"]);
        // b and c tie at 1; b wins lexicographically.
        assert_eq!(v.feature_tags, vec!["a", "b"]);
        assert_eq!(v.tag_counts["a"], 3);
    }

    #[test]
    fn lambda_larger_than_vocabulary_keeps_everything() {
        let questions = vec![q(1, &["a", "b"])];
        let v = build_vocabulary(&questions, 10).unwrap();
        assert_eq!(v.feature_tags.len(), 2);
    }

    #[test]
    fn matrix_self_pair_convention() {
        // One question tagged {a, b}; F = [a, b].
        let questions = vec![q(1, &["a", "b"])];
        let v = build_vocabulary(&questions, 2).unwrap();
        let m = build_matrix(&v, &questions);
        let row_a = &m.raw[0];
        assert_eq!(row_a, &vec![1, 1]);
        assert_eq!(m.normalized[0], vec![0.5, 0.5]);
    }

    #[test]
    fn duplicate_questions_scale_raw_but_not_normalized() {
        let once = vec![q(1, &["a", "b"]), q(2, &["b", "c"])];
        let twice = vec![q(1, &["a", "b"]), q(2, &["b", "c"]), q(3, &["a", "b"]), q(4, &["b", "c"])];
        let v = build_vocabulary(&once, 2).unwrap();
        let m1 = build_matrix(&v, &once);
        let m2 = build_matrix(&v, &twice);
        for i in 0..m1.raw.len() {
            for j in 0..m1.raw[i].len() {
                assert_eq!(m2.raw[i][j], 2 * m1.raw[i][j]);
                assert!((m2.normalized[i][j] - m1.normalized[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rows_are_stochastic_or_zero() {
        let questions = vec![q(1, &["a", "b"]), q(2, &["c", "d"]), q(3, &["a", "d"]), q(4, &["e"])];
        let v = build_vocabulary(&questions, 3).unwrap();
        let m = build_matrix(&v, &questions);
        for (i, row) in m.normalized.iter().enumerate() {
            let raw_sum: u64 = m.raw[i].iter().sum();
            let sum: f64 = row.iter().sum();
            if raw_sum == 0 {
                assert_eq!(sum, 0.0);
            } else {
                assert!((sum - 1.0).abs() < 1e-9, "row {i} sums to {sum}");
            }
        }
    }

    #[test]
    fn question_order_does_not_matter() {
        let mut questions = vec![q(1, &["a", "b"]), q(2, &["b", "c"]), q(3, &["c", "a"])];
        let v = build_vocabulary(&questions, 2).unwrap();
        let m1 = build_matrix(&v, &questions);
        questions.reverse();
        let v2 = build_vocabulary(&questions, 2).unwrap();
        let m2 = build_matrix(&v2, &questions);
        assert_eq!(v, v2);
        assert_eq!(m1, m2);
    }

    /// Build a corpus whose tags form two far-apart co-occurrence profiles.
    fn clusterable_corpus() -> Vec<Question> {
        let mut questions = Vec::new();
        let mut id = 0;
        // Group 1: tags g1x always co-occur with hub "h1".
        // Group 2: tags g2x always co-occur with hub "h2".
        for rep in 0..6 {
            for sub in 0..3 {
                id += 1;
                questions.push(q(id, &["h1", &format!("g1{sub}")]));
                id += 1;
                questions.push(q(id, &["h2", &format!("g2{sub}")]));
                let _ = rep;
            }
        }
        questions
    }

    #[test]
    fn recovers_two_tag_groups() {
        let questions = clusterable_corpus();
        let v = build_vocabulary(&questions, 2).unwrap();
        assert_eq!(v.feature_tags, vec!["h1", "h2"]);
        let m = build_matrix(&v, &questions);
        let c = cluster(&m, (2, 2), 11).unwrap();
        assert_eq!(c.k, 2);
        assert!(c.silhouette > 0.9, "silhouette = {}", c.silhouette);
        let g1 = c.assignment["g10"];
        assert_eq!(c.assignment["g11"], g1);
        assert_eq!(c.assignment["h1"], g1);
        assert_ne!(c.assignment["h2"], g1);
    }

    #[test]
    fn silhouette_selects_true_k() {
        let questions = clusterable_corpus();
        let v = build_vocabulary(&questions, 2).unwrap();
        let m = build_matrix(&v, &questions);
        let c = cluster(&m, (2, 5), 11).unwrap();
        assert_eq!(c.k, 2);
    }

    #[test]
    fn too_few_distinct_rows_is_a_config_error() {
        let questions = vec![q(1, &["a", "b"]), q(2, &["a", "b"])];
        let v = build_vocabulary(&questions, 2).unwrap();
        let m = build_matrix(&v, &questions);
        let err = cluster(&m, (3, 4), 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn deterministic_given_seed() {
        let questions = clusterable_corpus();
        let v = build_vocabulary(&questions, 2).unwrap();
        let m = build_matrix(&v, &questions);
        let c1 = cluster(&m, (2, 4), 123).unwrap();
        let c2 = cluster(&m, (2, 4), 123).unwrap();
        assert_eq!(c1, c2);
    }
}
