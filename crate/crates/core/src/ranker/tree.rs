//! Regression trees grown leaf-wise on gradient/hessian histograms.
//!
//! Split finding scans pre-binned integer features, so results do not depend
//! on thread count. Ties between equal-gain splits resolve to the lower
//! feature index, then the lower bin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::dataset::FeatureBins;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn features_used(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn thresholds_of(&self, feature: usize) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature: f, threshold, .. } if *f == feature => Some(*threshold),
                _ => None,
            })
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthParams {
    pub num_leaves: usize,
    pub max_depth: usize,
    pub min_data_in_leaf: usize,
}

/// Which features a tree may split on.
#[derive(Debug, Clone, Copy)]
pub enum FeatureConstraint<'a> {
    /// Any feature from the set, freely mixed.
    Any(&'a [usize]),
    /// The root picks the best feature from the set; every later split in
    /// the tree must reuse that same feature.
    SingleFrom(&'a [usize]),
}

const HESS_EPS: f64 = 1e-9;

fn leaf_score(grad: f64, hess: f64) -> f64 {
    grad * grad / (hess + HESS_EPS)
}

fn leaf_value(grad: f64, hess: f64) -> f64 {
    grad / (hess + HESS_EPS)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SplitChoice {
    gain: f64,
    feature: usize,
    bin: u16,
    left_count: usize,
    right_count: usize,
    left_grad: f64,
    left_hess: f64,
}

/// Best split of one feature's histogram, if any passes the constraints.
fn best_split_of_feature(
    histogram: &[(f64, f64, usize)],
    total: (f64, f64, usize),
    min_data_in_leaf: usize,
    feature: usize,
) -> Option<SplitChoice> {
    let (total_grad, total_hess, total_count) = total;
    let parent = leaf_score(total_grad, total_hess);
    let mut left_grad = 0.0;
    let mut left_hess = 0.0;
    let mut left_count = 0usize;
    let mut best: Option<SplitChoice> = None;
    // The last bin cannot host a split (no right side).
    for bin in 0..histogram.len().saturating_sub(1) {
        let (g, h, c) = histogram[bin];
        left_grad += g;
        left_hess += h;
        left_count += c;
        let right_count = total_count - left_count;
        if left_count < min_data_in_leaf || right_count < min_data_in_leaf {
            continue;
        }
        let right_grad = total_grad - left_grad;
        let right_hess = total_hess - left_hess;
        let gain = leaf_score(left_grad, left_hess) + leaf_score(right_grad, right_hess) - parent;
        if best.as_ref().map_or(gain > 0.0, |b| gain > b.gain) {
            best = Some(SplitChoice {
                gain,
                feature,
                bin: bin as u16,
                left_count,
                right_count,
                left_grad,
                left_hess,
            });
        }
    }
    best
}

fn histogram_for(
    binned_feature: &[u16],
    bin_count: usize,
    rows: &[usize],
    grads: &[f64],
    hess: &[f64],
) -> Vec<(f64, f64, usize)> {
    let mut hist = vec![(0.0, 0.0, 0usize); bin_count];
    for &r in rows {
        let b = binned_feature[r] as usize;
        hist[b].0 += grads[r];
        hist[b].1 += hess[r];
        hist[b].2 += 1;
    }
    hist
}

/// Best split over the allowed features; ties keep the lowest feature id
/// (features are scanned in ascending order and only strict improvements
/// replace the incumbent).
fn best_split(
    bins: &FeatureBins,
    binned: &[Vec<u16>],
    rows: &[usize],
    grads: &[f64],
    hess: &[f64],
    allowed: &[usize],
    min_data_in_leaf: usize,
) -> Option<SplitChoice> {
    let total_grad: f64 = rows.iter().map(|&r| grads[r]).sum();
    let total_hess: f64 = rows.iter().map(|&r| hess[r]).sum();
    let total = (total_grad, total_hess, rows.len());

    let mut per_feature: Vec<(usize, Option<SplitChoice>)> = allowed
        .par_iter()
        .map(|&f| {
            let hist = histogram_for(&binned[f], bins.bin_count(f), rows, grads, hess);
            (f, best_split_of_feature(&hist, total, min_data_in_leaf, f))
        })
        .collect();
    per_feature.sort_by_key(|&(f, _)| f);

    let mut best: Option<SplitChoice> = None;
    for (_, choice) in per_feature {
        if let Some(c) = choice {
            if best.as_ref().map_or(true, |b| c.gain > b.gain) {
                best = Some(c);
            }
        }
    }
    best
}

struct OpenLeaf {
    rows: Vec<usize>,
    depth: usize,
    grad: f64,
    hess: f64,
    split: Option<SplitChoice>,
}

pub struct GrownTree {
    pub tree: Tree,
    /// Total split gain per feature, for importance and pair selection.
    pub feature_gains: BTreeMap<usize, f64>,
}

/// Grow one tree on the given row set. Returns a single-leaf tree when no
/// split clears the constraints.
pub fn grow_tree(
    bins: &FeatureBins,
    binned: &[Vec<u16>],
    rows: Vec<usize>,
    grads: &[f64],
    hess: &[f64],
    params: &GrowthParams,
    constraint: FeatureConstraint<'_>,
) -> GrownTree {
    let total_grad: f64 = rows.iter().map(|&r| grads[r]).sum();
    let total_hess: f64 = rows.iter().map(|&r| hess[r]).sum();

    let root_allowed: Vec<usize> = match constraint {
        FeatureConstraint::Any(set) | FeatureConstraint::SingleFrom(set) => set.to_vec(),
    };
    let mut locked_feature: Option<usize> = None;

    let mut leaves: Vec<OpenLeaf> = vec![OpenLeaf {
        split: best_split(bins, binned, &rows, grads, hess, &root_allowed, params.min_data_in_leaf),
        rows,
        depth: 0,
        grad: total_grad,
        hess: total_hess,
    }];
    let mut feature_gains: BTreeMap<usize, f64> = BTreeMap::new();

    // (parent arena index, is_left) links resolved at the end.
    let mut arena: Vec<Option<Node>> = vec![None];
    let mut leaf_arena: Vec<usize> = vec![0]; // arena slot of each open leaf

    while leaves.len() < params.num_leaves {
        // Expand the open leaf with the best split.
        let mut best_idx: Option<usize> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if leaf.depth >= params.max_depth {
                continue;
            }
            if let Some(s) = &leaf.split {
                let better = match best_idx {
                    None => true,
                    Some(j) => s.gain > leaves[j].split.as_ref().unwrap().gain,
                };
                if better {
                    best_idx = Some(i);
                }
            }
        }
        let Some(idx) = best_idx else { break };

        let leaf = leaves.swap_remove(idx);
        let slot = leaf_arena.swap_remove(idx);
        let split = leaf.split.unwrap();
        *feature_gains.entry(split.feature).or_insert(0.0) += split.gain;

        if let FeatureConstraint::SingleFrom(_) = constraint {
            locked_feature.get_or_insert(split.feature);
        }
        let child_allowed: Vec<usize> = match (&constraint, locked_feature) {
            (FeatureConstraint::SingleFrom(_), Some(f)) => vec![f],
            _ => root_allowed.clone(),
        };

        let (mut left_rows, mut right_rows) = (
            Vec::with_capacity(split.left_count),
            Vec::with_capacity(split.right_count),
        );
        for &r in &leaf.rows {
            if binned[split.feature][r] <= split.bin {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        debug_assert_eq!(left_rows.len(), split.left_count);

        let threshold = bins.edges[split.feature][split.bin as usize];
        let left_slot = arena.len();
        arena.push(None);
        let right_slot = arena.len();
        arena.push(None);
        arena[slot] = Some(Node::Split {
            feature: split.feature,
            threshold,
            left: left_slot,
            right: right_slot,
        });

        for (child_rows, child_grad, child_hess, child_slot) in [
            (left_rows, split.left_grad, split.left_hess, left_slot),
            (
                right_rows,
                leaf.grad - split.left_grad,
                leaf.hess - split.left_hess,
                right_slot,
            ),
        ] {
            let child_split = if leaf.depth + 1 < params.max_depth {
                best_split(
                    bins,
                    binned,
                    &child_rows,
                    grads,
                    hess,
                    &child_allowed,
                    params.min_data_in_leaf,
                )
            } else {
                None
            };
            leaves.push(OpenLeaf {
                rows: child_rows,
                depth: leaf.depth + 1,
                grad: child_grad,
                hess: child_hess,
                split: child_split,
            });
            leaf_arena.push(child_slot);
        }
    }

    for (leaf, &slot) in leaves.iter().zip(&leaf_arena) {
        arena[slot] = Some(Node::Leaf { value: leaf_value(leaf.grad, leaf.hess) });
    }

    GrownTree {
        tree: Tree { nodes: arena.into_iter().map(Option::unwrap).collect() },
        feature_gains,
    }
}
