//! Interpretable constrained boosting in three stages.
//!
//! Stage 1 learns main effects: every tree is locked to a single feature
//! (the root picks it, the rest of the tree reuses it). Stage 2 runs a short
//! unconstrained probe and ranks feature pairs by the product of their split
//! gains within the same probe tree; the probe trees themselves are
//! discarded. Stage 3 boosts the residuals with trees restricted to one
//! selected pair each.
//!
//! The resulting model is an exact additive decomposition: the score is the
//! sum of per-feature curves plus per-pair surfaces.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::dataset::{FeatureBins, LtrTrainingSet, MAX_BINS};
use super::lambdamart::{compute_lambdas, ndcg3, LambdaMartParams};
use super::tree::{grow_tree, FeatureConstraint, GrowthParams, Tree};
use crate::features::FEATURE_NAMES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretableParams {
    pub base: LambdaMartParams,
    /// Boosting rounds for stage 1 and stage 3; the probe run uses
    /// `probe_trees` unconstrained rounds.
    pub main_trees: usize,
    pub interaction_trees: usize,
    pub probe_trees: usize,
    pub k_pairs: usize,
}

impl InterpretableParams {
    pub fn from_base(base: LambdaMartParams, k_pairs: usize) -> Self {
        let n = base.n_estimators;
        InterpretableParams {
            main_trees: n,
            interaction_trees: n / 2,
            probe_trees: (n / 5).max(10),
            k_pairs,
            base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainEffect {
    pub feature: usize,
    pub trees: Vec<Tree>,
    pub shrinkage: Vec<f64>,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEffect {
    pub features: (usize, usize),
    pub trees: Vec<Tree>,
    pub shrinkage: Vec<f64>,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretableEnsemble {
    pub main_effects: Vec<MainEffect>,
    pub interaction_effects: Vec<InteractionEffect>,
    pub selected_pairs: Vec<(usize, usize)>,
    pub feature_names: Vec<String>,
}

impl InterpretableEnsemble {
    pub fn score(&self, x: &[f64]) -> f64 {
        let mains: f64 = self
            .main_effects
            .iter()
            .map(|e| Self::eval_effect(&e.trees, &e.shrinkage, x))
            .sum();
        let inters: f64 = self
            .interaction_effects
            .iter()
            .map(|e| Self::eval_effect(&e.trees, &e.shrinkage, x))
            .sum();
        mains + inters
    }

    fn eval_effect(trees: &[Tree], shrinkage: &[f64], x: &[f64]) -> f64 {
        trees.iter().zip(shrinkage).map(|(t, s)| s * t.eval(x)).sum()
    }

    /// Contribution of one main effect at a feature value.
    pub fn main_contribution(&self, effect: &MainEffect, value: f64) -> f64 {
        let mut x = [0.0f64; crate::features::FEATURE_COUNT];
        x[effect.feature] = value;
        Self::eval_effect(&effect.trees, &effect.shrinkage, &x)
    }

    pub fn interaction_contribution(&self, effect: &InteractionEffect, a: f64, b: f64) -> f64 {
        let mut x = [0.0f64; crate::features::FEATURE_COUNT];
        x[effect.features.0] = a;
        x[effect.features.1] = b;
        Self::eval_effect(&effect.trees, &effect.shrinkage, &x)
    }

    /// Effects ranked by accumulated split gain, descending.
    pub fn effect_ranking(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .main_effects
            .iter()
            .map(|e| (self.feature_names[e.feature].clone(), e.gain))
            .chain(self.interaction_effects.iter().map(|e| {
                (
                    format!(
                        "{}*{}",
                        self.feature_names[e.features.0], self.feature_names[e.features.1]
                    ),
                    e.gain,
                )
            }))
            .collect();
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// Structural audit: every main tree splits on exactly its one feature,
    /// every interaction tree only on its pair.
    pub fn audit_structure(&self) -> Result<(), String> {
        for effect in &self.main_effects {
            for (i, tree) in effect.trees.iter().enumerate() {
                let used = tree.features_used();
                if used != vec![effect.feature] {
                    return Err(format!(
                        "main effect {} tree {i} splits on {used:?}",
                        self.feature_names[effect.feature]
                    ));
                }
            }
        }
        for effect in &self.interaction_effects {
            let allowed = [effect.features.0, effect.features.1];
            for (i, tree) in effect.trees.iter().enumerate() {
                let used = tree.features_used();
                if used.is_empty() || !used.iter().all(|f| allowed.contains(f)) {
                    return Err(format!(
                        "interaction effect {:?} tree {i} splits on {used:?}",
                        effect.features
                    ));
                }
            }
        }
        Ok(())
    }

    /// 1D step-function table of one main effect: grid points are every
    /// split threshold plus one point beyond the last, evaluated exactly.
    pub fn main_curve(&self, effect: &MainEffect) -> EffectCurve {
        let grid = curve_grid(effect.trees.iter().flat_map(|t| t.thresholds_of(effect.feature)));
        let contribution = grid.iter().map(|&v| self.main_contribution(effect, v)).collect();
        EffectCurve {
            feature: effect.feature,
            feature_name: self.feature_names[effect.feature].clone(),
            grid,
            contribution,
        }
    }

    /// 2D step-surface table of one interaction effect.
    pub fn interaction_surface(&self, effect: &InteractionEffect) -> InteractionSurface {
        let (fa, fb) = effect.features;
        let grid_a = curve_grid(effect.trees.iter().flat_map(|t| t.thresholds_of(fa)));
        let grid_b = curve_grid(effect.trees.iter().flat_map(|t| t.thresholds_of(fb)));
        let contribution = grid_a
            .iter()
            .map(|&a| grid_b.iter().map(|&b| self.interaction_contribution(effect, a, b)).collect())
            .collect();
        InteractionSurface {
            features: effect.features,
            feature_names: (
                self.feature_names[fa].clone(),
                self.feature_names[fb].clone(),
            ),
            grid_a,
            grid_b,
            contribution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurve {
    pub feature: usize,
    pub feature_name: String,
    pub grid: Vec<f64>,
    pub contribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSurface {
    pub features: (usize, usize),
    pub feature_names: (String, String),
    pub grid_a: Vec<f64>,
    pub grid_b: Vec<f64>,
    pub contribution: Vec<Vec<f64>>,
}

fn curve_grid(thresholds: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut grid: Vec<f64> = thresholds.collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    // One representative per constant region: each threshold value sits in
    // the region left of its split; add a point past the last threshold.
    match grid.last().copied() {
        Some(last) => grid.push(last + 1.0),
        None => grid.push(0.0),
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretableOutcome {
    pub model: InterpretableEnsemble,
    pub train_ndcg3: Vec<f64>,
}

pub fn train_interpretable(
    ts: &LtrTrainingSet,
    params: &InterpretableParams,
) -> InterpretableOutcome {
    let train_groups = ts.train_groups();
    let train_rows: Vec<usize> = train_groups.iter().flat_map(|g| g.start..g.end).collect();
    let bins = FeatureBins::build(&ts.rows, &train_rows, MAX_BINS);
    let binned = bins.bin_rows(&ts.rows);
    let growth = params.base.growth();
    let lr = params.base.learning_rate;
    let active = &params.base.active_features;

    let mut scores = vec![0.0f64; ts.rows.len()];
    let mut history = Vec::new();
    let mut mains: BTreeMap<usize, MainEffect> = BTreeMap::new();

    // Stage 1: main effects.
    for _ in 0..params.main_trees {
        let (grads, hess) = compute_lambdas(ts, train_groups, &scores);
        let grown = grow_tree(
            &bins,
            &binned,
            train_rows.clone(),
            &grads,
            &hess,
            &growth,
            FeatureConstraint::SingleFrom(active),
        );
        let used = grown.tree.features_used();
        if used.is_empty() {
            break;
        }
        let feature = used[0];
        apply_tree(&mut scores, &grown.tree, lr, ts);
        let entry = mains.entry(feature).or_insert_with(|| MainEffect {
            feature,
            trees: Vec::new(),
            shrinkage: Vec::new(),
            gain: 0.0,
        });
        entry.gain += grown.feature_gains.values().sum::<f64>();
        entry.trees.push(grown.tree);
        entry.shrinkage.push(lr);
        history.push(ndcg3(ts, train_groups, &scores));
    }

    // Stage 2: probe for interaction pairs on the residuals. Probe trees are
    // scouts only; their score updates are thrown away.
    let mut pair_gain: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    {
        let mut probe_scores = scores.clone();
        for _ in 0..params.probe_trees {
            let (grads, hess) = compute_lambdas(ts, train_groups, &probe_scores);
            let grown = grow_tree(
                &bins,
                &binned,
                train_rows.clone(),
                &grads,
                &hess,
                &growth,
                FeatureConstraint::Any(active),
            );
            if grown.tree.features_used().is_empty() {
                break;
            }
            let per_feature: Vec<(usize, f64)> =
                grown.feature_gains.iter().map(|(&f, &g)| (f, g)).collect();
            for i in 0..per_feature.len() {
                for j in i + 1..per_feature.len() {
                    let (fa, ga) = per_feature[i];
                    let (fb, gb) = per_feature[j];
                    *pair_gain.entry((fa, fb)).or_insert(0.0) += ga * gb;
                }
            }
            apply_tree(&mut probe_scores, &grown.tree, lr, ts);
        }
    }
    let mut ranked_pairs: Vec<((usize, usize), f64)> = pair_gain.into_iter().collect();
    ranked_pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    let selected_pairs: Vec<(usize, usize)> =
        ranked_pairs.into_iter().take(params.k_pairs).map(|(p, _)| p).collect();

    // Stage 3: interaction effects, one pair per tree. Each round grows the
    // tree for the pair whose best root split gains the most.
    let mut interactions: BTreeMap<(usize, usize), InteractionEffect> = BTreeMap::new();
    if !selected_pairs.is_empty() && params.interaction_trees > 0 {
        for _ in 0..params.interaction_trees {
            let (grads, hess) = compute_lambdas(ts, train_groups, &scores);
            let mut best: Option<((usize, usize), super::tree::GrownTree, f64)> = None;
            for &pair in &selected_pairs {
                let allowed = [pair.0, pair.1];
                let grown = grow_tree(
                    &bins,
                    &binned,
                    train_rows.clone(),
                    &grads,
                    &hess,
                    &GrowthParams { num_leaves: growth.num_leaves.min(8), ..growth },
                    FeatureConstraint::Any(&allowed),
                );
                if grown.tree.features_used().is_empty() {
                    continue;
                }
                let gain: f64 = grown.feature_gains.values().sum();
                if best.as_ref().map_or(true, |(_, _, g)| gain > *g) {
                    best = Some((pair, grown, gain));
                }
            }
            let Some((pair, grown, gain)) = best else { break };
            apply_tree(&mut scores, &grown.tree, lr, ts);
            let entry = interactions.entry(pair).or_insert_with(|| InteractionEffect {
                features: pair,
                trees: Vec::new(),
                shrinkage: Vec::new(),
                gain: 0.0,
            });
            entry.gain += gain;
            entry.trees.push(grown.tree);
            entry.shrinkage.push(lr);
            history.push(ndcg3(ts, train_groups, &scores));
        }
    }

    let model = InterpretableEnsemble {
        main_effects: mains.into_values().collect(),
        interaction_effects: interactions.into_values().collect(),
        selected_pairs,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    InterpretableOutcome { model, train_ndcg3: history }
}

fn apply_tree(scores: &mut [f64], tree: &Tree, lr: f64, ts: &LtrTrainingSet) {
    use rayon::prelude::*;
    scores
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, s)| *s += lr * tree.eval(&ts.rows[i].features.0));
}
