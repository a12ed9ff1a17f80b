//! Listwise gradient boosting on LambdaRank gradients.
//!
//! Labels are binary with exactly one positive per group, so the ideal DCG is
//! 1 and the pairwise |delta NDCG| reduces to the discount difference between
//! the two positions being compared. Per-pair lambdas use the sigmoid-shaped
//! cost; leaf values are Newton steps (sum of lambdas over sum of hessians).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::dataset::{FeatureBins, LtrGroup, LtrTrainingSet, MAX_BINS};
use super::tree::{grow_tree, FeatureConstraint, GrowthParams, Tree};
use crate::features::{FEATURE_COUNT, FEATURE_NAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaMartParams {
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_data_in_leaf: usize,
    /// Feature columns the trees may split on.
    pub active_features: Vec<usize>,
}

impl Default for LambdaMartParams {
    fn default() -> Self {
        LambdaMartParams {
            learning_rate: 0.05,
            num_leaves: 64,
            n_estimators: 100,
            max_depth: 10,
            min_data_in_leaf: 20,
            active_features: (0..FEATURE_COUNT).collect(),
        }
    }
}

impl LambdaMartParams {
    pub fn growth(&self) -> GrowthParams {
        GrowthParams {
            num_leaves: self.num_leaves.max(2),
            max_depth: self.max_depth.max(1),
            min_data_in_leaf: self.min_data_in_leaf.max(1),
        }
    }
}

/// Boosted tree ensemble with per-tree shrinkage and recorded split gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtEnsemble {
    pub trees: Vec<Tree>,
    pub shrinkage: Vec<f64>,
    pub feature_names: Vec<String>,
    pub active_features: Vec<usize>,
    /// Per tree: split gain accumulated per feature.
    pub tree_gains: Vec<BTreeMap<usize, f64>>,
}

impl GbdtEnsemble {
    pub fn empty() -> Self {
        GbdtEnsemble {
            trees: Vec::new(),
            shrinkage: Vec::new(),
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            active_features: (0..FEATURE_COUNT).collect(),
            tree_gains: Vec::new(),
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .zip(&self.shrinkage)
            .map(|(t, s)| s * t.eval(x))
            .sum()
    }

    /// Total split gain per feature, summed over trees, descending.
    pub fn feature_importance(&self) -> Vec<(usize, f64)> {
        let mut gains = vec![0.0f64; FEATURE_COUNT];
        for tree_gain in &self.tree_gains {
            for (&f, &g) in tree_gain {
                gains[f] += g;
            }
        }
        let mut out: Vec<(usize, f64)> = gains.into_iter().enumerate().collect();
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: GbdtEnsemble,
    /// Training-fold NDCG@3 after each boosting round.
    pub train_ndcg3: Vec<f64>,
}

/// Positions (1-based) of every row of a group under the current scores;
/// ties break by row index so rankings are reproducible.
fn group_positions(scores: &[f64], group: &LtrGroup) -> Vec<usize> {
    let mut order: Vec<usize> = (group.start..group.end).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut positions = vec![0usize; group.len()];
    for (pos, &row) in order.iter().enumerate() {
        positions[row - group.start] = pos + 1;
    }
    positions
}

fn discount(position: usize) -> f64 {
    1.0 / ((position + 1) as f64).log2()
}

fn sigmoid_clamped(delta_score: f64) -> f64 {
    1.0 / (1.0 + delta_score.clamp(-50.0, 50.0).exp())
}

/// LambdaRank gradients and hessians for all training rows.
pub fn compute_lambdas(
    ts: &LtrTrainingSet,
    groups: &[LtrGroup],
    scores: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let per_group: Vec<(usize, Vec<f64>, Vec<f64>)> = groups
        .par_iter()
        .map(|g| {
            let mut grad = vec![0.0f64; g.len()];
            let mut hess = vec![0.0f64; g.len()];
            if g.len() >= 2 {
                let positions = group_positions(scores, g);
                let rel = ts.positive_row(g) - g.start;
                let rel_discount = discount(positions[rel]);
                for j in 0..g.len() {
                    if j == rel {
                        continue;
                    }
                    let delta = (rel_discount - discount(positions[j])).abs();
                    if delta == 0.0 {
                        continue;
                    }
                    let rho = sigmoid_clamped(scores[g.start + rel] - scores[g.start + j]);
                    let weight = rho * (1.0 - rho) * delta;
                    grad[rel] += rho * delta;
                    grad[j] -= rho * delta;
                    hess[rel] += weight;
                    hess[j] += weight;
                }
            }
            (g.start, grad, hess)
        })
        .collect();

    let n = ts.rows.len();
    let mut grads = vec![0.0f64; n];
    let mut hess = vec![0.0f64; n];
    for (start, g, h) in per_group {
        grads[start..start + g.len()].copy_from_slice(&g);
        hess[start..start + h.len()].copy_from_slice(&h);
    }
    (grads, hess)
}

/// Mean NDCG@3 over the given groups (single relevant item, so IDCG = 1).
pub fn ndcg3(ts: &LtrTrainingSet, groups: &[LtrGroup], scores: &[f64]) -> f64 {
    if groups.is_empty() {
        return 0.0;
    }
    let total: f64 = groups
        .iter()
        .map(|g| {
            let positions = group_positions(scores, g);
            let pos = positions[ts.positive_row(g) - g.start];
            if pos <= 3 {
                discount(pos)
            } else {
                0.0
            }
        })
        .sum();
    total / groups.len() as f64
}

/// Mean reciprocal rank over the given groups.
pub fn mean_reciprocal_rank(ts: &LtrTrainingSet, groups: &[LtrGroup], scores: &[f64]) -> f64 {
    if groups.is_empty() {
        return 0.0;
    }
    let total: f64 = groups
        .iter()
        .map(|g| {
            let positions = group_positions(scores, g);
            1.0 / positions[ts.positive_row(g) - g.start] as f64
        })
        .sum();
    total / groups.len() as f64
}

pub fn score_all(model: &GbdtEnsemble, ts: &LtrTrainingSet) -> Vec<f64> {
    ts.rows.par_iter().map(|r| model.score(&r.features.0)).collect()
}

/// Fit the unconstrained LambdaMART ensemble on the training fold.
pub fn train_lambdamart(ts: &LtrTrainingSet, params: &LambdaMartParams) -> TrainOutcome {
    let train_groups = ts.train_groups();
    let train_rows: Vec<usize> =
        train_groups.iter().flat_map(|g| g.start..g.end).collect();
    let bins = FeatureBins::build(&ts.rows, &train_rows, MAX_BINS);
    let binned = bins.bin_rows(&ts.rows);

    let mut model = GbdtEnsemble::empty();
    model.active_features = params.active_features.clone();
    let mut scores = vec![0.0f64; ts.rows.len()];
    let mut history = Vec::with_capacity(params.n_estimators);

    for _ in 0..params.n_estimators {
        let (grads, hess) = compute_lambdas(ts, train_groups, &scores);
        let grown = grow_tree(
            &bins,
            &binned,
            train_rows.clone(),
            &grads,
            &hess,
            &params.growth(),
            FeatureConstraint::Any(&params.active_features),
        );
        if grown.tree.features_used().is_empty() {
            break; // no split cleared the constraints; boosting has converged
        }
        scores
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, s)| *s += params.learning_rate * grown.tree.eval(&ts.rows[i].features.0));
        model.tree_gains.push(grown.feature_gains);
        model.trees.push(grown.tree);
        model.shrinkage.push(params.learning_rate);
        history.push(ndcg3(ts, train_groups, &scores));
    }

    TrainOutcome { model, train_ndcg3: history }
}
