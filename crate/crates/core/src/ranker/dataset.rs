//! Grouped training data for the listwise ranker, plus feature binning.

use serde::{Deserialize, Serialize};

use crate::features::{FeatureRow, FEATURE_COUNT};
use crate::ids::PostId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LtrGroup {
    pub query: PostId,
    pub start: usize,
    pub end: usize,
}

impl LtrGroup {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Rows grouped contiguously per query, groups in chronological order.
/// Every group carries exactly one label-1 row; the trailing 20% of groups
/// form the validation fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtrTrainingSet {
    pub rows: Vec<FeatureRow>,
    pub groups: Vec<LtrGroup>,
    /// Groups `[0, validation_from)` train, the rest validate.
    pub validation_from: usize,
}

impl LtrTrainingSet {
    /// Assemble from per-query row blocks (already chronological). Groups
    /// without exactly one positive row are dropped.
    pub fn from_query_blocks(blocks: Vec<Vec<FeatureRow>>, split_ratio: f64) -> LtrTrainingSet {
        let mut rows = Vec::new();
        let mut groups = Vec::new();
        for block in blocks {
            let positives = block.iter().filter(|r| r.label == 1).count();
            if positives != 1 || block.is_empty() {
                continue;
            }
            let start = rows.len();
            rows.extend(block);
            groups.push(LtrGroup { query: rows[start].query, start, end: rows.len() });
        }
        let n = groups.len();
        let validation_from = if n <= 1 {
            n
        } else {
            (((n as f64) * split_ratio).round() as usize).clamp(1, n - 1)
        };
        LtrTrainingSet { rows, groups, validation_from }
    }

    pub fn train_groups(&self) -> &[LtrGroup] {
        &self.groups[..self.validation_from]
    }

    pub fn validation_groups(&self) -> &[LtrGroup] {
        &self.groups[self.validation_from..]
    }

    /// Index of the single positive row of a group.
    pub fn positive_row(&self, group: &LtrGroup) -> usize {
        (group.start..group.end)
            .find(|&i| self.rows[i].label == 1)
            .expect("group invariant: one positive row")
    }
}

/// Quantile histogram bins per feature.
///
/// `edges[f]` holds ascending split thresholds; a value `v` lands in bin
/// `partition_point(edges, v > e)`, so bin `b` means `v <= edges[b]` for
/// `b < edges.len()` and the last bin is unbounded. Split "at bin b" uses
/// threshold `edges[b]`, which reproduces the training partition exactly at
/// inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBins {
    pub edges: Vec<Vec<f64>>,
}

pub const MAX_BINS: usize = 255;

impl FeatureBins {
    pub fn build(rows: &[FeatureRow], row_indices: &[usize], max_bins: usize) -> FeatureBins {
        let mut edges = Vec::with_capacity(FEATURE_COUNT);
        for f in 0..FEATURE_COUNT {
            let mut values: Vec<f64> = row_indices.iter().map(|&i| rows[i].features.0[f]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            values.dedup();
            let mut feature_edges = Vec::new();
            if values.len() > 1 {
                if values.len() <= max_bins {
                    for w in values.windows(2) {
                        feature_edges.push((w[0] + w[1]) / 2.0);
                    }
                } else {
                    // Evenly sample the distinct-value ladder.
                    for i in 1..max_bins {
                        let idx = i * values.len() / max_bins;
                        let edge = (values[idx - 1] + values[idx]) / 2.0;
                        if feature_edges.last().map_or(true, |&last| edge > last) {
                            feature_edges.push(edge);
                        }
                    }
                }
            }
            edges.push(feature_edges);
        }
        FeatureBins { edges }
    }

    pub fn bin_of(&self, feature: usize, value: f64) -> u16 {
        self.edges[feature].partition_point(|&e| value > e) as u16
    }

    pub fn bin_count(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    /// Feature-major binned matrix covering all rows.
    pub fn bin_rows(&self, rows: &[FeatureRow]) -> Vec<Vec<u16>> {
        (0..FEATURE_COUNT)
            .map(|f| rows.iter().map(|r| self.bin_of(f, r.features.0[f])).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use crate::ids::UserId;

    pub(crate) fn row(query: i64, candidate: i64, label: u8, f0: f64) -> FeatureRow {
        let mut features = FeatureVector::zeros();
        features.0[0] = f0;
        FeatureRow { query: PostId(query), candidate: UserId(candidate), label, features }
    }

    #[test]
    fn groups_without_single_positive_are_dropped() {
        let blocks = vec![
            vec![row(1, 1, 1, 0.0), row(1, 2, 0, 1.0)],
            vec![row(2, 1, 0, 0.0), row(2, 2, 0, 1.0)], // no positive
            vec![row(3, 1, 1, 0.0), row(3, 2, 1, 1.0)], // two positives
            vec![row(4, 1, 1, 0.0)],
        ];
        let ts = LtrTrainingSet::from_query_blocks(blocks, 0.8);
        assert_eq!(ts.groups.len(), 2);
        assert_eq!(ts.groups[0].query, PostId(1));
        assert_eq!(ts.groups[1].query, PostId(4));
    }

    #[test]
    fn split_keeps_order_and_is_nonempty_on_both_sides() {
        let blocks: Vec<Vec<FeatureRow>> = (0..10)
            .map(|q| vec![row(q, 1, 1, 0.0), row(q, 2, 0, 1.0)])
            .collect();
        let ts = LtrTrainingSet::from_query_blocks(blocks, 0.8);
        assert_eq!(ts.train_groups().len(), 8);
        assert_eq!(ts.validation_groups().len(), 2);
        assert!(ts.train_groups().iter().all(|g| g.query < PostId(8)));
    }

    #[test]
    fn binning_round_trips_thresholds() {
        let rows: Vec<FeatureRow> = [0.0, 1.0, 2.0, 5.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| row(i as i64, 1, 0, v))
            .collect();
        let idx: Vec<usize> = (0..rows.len()).collect();
        let bins = FeatureBins::build(&rows, &idx, MAX_BINS);
        assert_eq!(bins.bin_count(0), 4);
        assert_eq!(bins.bin_of(0, 0.0), 0);
        assert_eq!(bins.bin_of(0, 0.5), 0); // edge at 0.5 keeps 0.5 in the left bin
        assert_eq!(bins.bin_of(0, 1.4), 1);
        assert_eq!(bins.bin_of(0, 99.0), 3);
        // Constant feature: a single bin, no edges.
        assert_eq!(bins.bin_count(1), 1);
    }

    #[test]
    fn oversized_value_sets_are_quantile_sampled() {
        let rows: Vec<FeatureRow> = (0..1000).map(|i| row(i, 1, 0, i as f64)).collect();
        let idx: Vec<usize> = (0..rows.len()).collect();
        let bins = FeatureBins::build(&rows, &idx, 64);
        assert!(bins.bin_count(0) <= 64);
        assert!(bins.bin_count(0) > 32);
        // Edges strictly increasing.
        for w in bins.edges[0].windows(2) {
            assert!(w[0] < w[1]);
        }
    }
}
