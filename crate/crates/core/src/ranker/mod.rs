//! Learning-to-rank models and their training-set construction.

pub mod dataset;
pub mod interpretable;
pub mod lambdamart;
pub mod tree;
pub mod tune;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::QueryEngine;
use crate::error::{Error, Result};
use crate::features::{FeatureRow, FeatureVector, FEATURE_COUNT};
use crate::ids::UserId;

pub use dataset::{FeatureBins, LtrGroup, LtrTrainingSet};
pub use interpretable::{
    train_interpretable, EffectCurve, InteractionSurface, InterpretableEnsemble,
    InterpretableOutcome, InterpretableParams,
};
pub use lambdamart::{
    mean_reciprocal_rank, ndcg3, score_all, train_lambdamart, GbdtEnsemble, LambdaMartParams,
    TrainOutcome,
};
pub use tree::{FeatureConstraint, GrowthParams, Tree};
pub use tune::{tune, TrialReport, TuningRanges};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankerKind {
    LambdaMart,
    Interpretable,
    Linear,
}

/// Fixed linear combination of the 23 features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() != FEATURE_COUNT {
            return Err(Error::Config(format!(
                "linear model needs {FEATURE_COUNT} weights, got {}",
                weights.len()
            )));
        }
        Ok(LinearModel { weights })
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RankingModel {
    LambdaMart(GbdtEnsemble),
    Interpretable(InterpretableEnsemble),
    Linear(LinearModel),
}

impl RankingModel {
    pub fn kind(&self) -> RankerKind {
        match self {
            RankingModel::LambdaMart(_) => RankerKind::LambdaMart,
            RankingModel::Interpretable(_) => RankerKind::Interpretable,
            RankingModel::Linear(_) => RankerKind::Linear,
        }
    }

    pub fn score(&self, x: &FeatureVector) -> f64 {
        match self {
            RankingModel::LambdaMart(m) => m.score(&x.0),
            RankingModel::Interpretable(m) => m.score(&x.0),
            RankingModel::Linear(m) => m.score(&x.0),
        }
    }
}

/// Descending score, ties by ascending user id.
pub fn rank_by_score(mut scored: Vec<(UserId, f64)>) -> Vec<UserId> {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.0.cmp(&b.0))
    });
    scored.into_iter().map(|(u, _)| u).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSetReport {
    /// Expert-answered training queries examined (after the recency cap).
    pub queries_considered: usize,
    /// Queries dropped because selection missed the accepted answerer.
    pub dropped_missing_expert: usize,
    pub groups: usize,
    pub mean_list_length: f64,
}

/// Build the grouped training set: the most recent `zeta_cap` training
/// queries answered by a labeled expert, each run through selection and
/// featurization; groups whose ground-truth expert was not selected are
/// dropped.
pub fn build_training_set(
    engine: &QueryEngine<'_>,
    zeta_cap: usize,
    split_ratio: f64,
) -> Result<(LtrTrainingSet, TrainingSetReport)> {
    if zeta_cap == 0 {
        return Err(Error::Config("zeta cap must be positive".to_string()));
    }
    let eligible: Vec<&crate::ingest::Question> = engine
        .dataset
        .train_questions
        .iter()
        .filter(|q| engine.mlg.labeling.is_expert(q.accepted_answerer))
        .collect();
    let start = eligible.len().saturating_sub(zeta_cap);
    let recent = &eligible[start..];

    let blocks: Vec<Option<Vec<FeatureRow>>> = recent
        .par_iter()
        .map(|q| {
            let outcome = engine.process_question(q);
            if !outcome.candidates.contains(q.accepted_answerer) {
                return None;
            }
            let ctx = engine.feature_context(&outcome);
            let rows = outcome
                .candidates
                .experts
                .iter()
                .map(|&u| FeatureRow {
                    query: q.id,
                    candidate: u,
                    label: u8::from(u == q.accepted_answerer),
                    features: ctx.features_for(u),
                })
                .collect();
            Some(rows)
        })
        .collect();

    let queries_considered = recent.len();
    let dropped = blocks.iter().filter(|b| b.is_none()).count();
    let kept: Vec<Vec<FeatureRow>> = blocks.into_iter().flatten().collect();
    let mean_list_length = if kept.is_empty() {
        0.0
    } else {
        kept.iter().map(|b| b.len() as f64).sum::<f64>() / kept.len() as f64
    };

    let ts = LtrTrainingSet::from_query_blocks(kept, split_ratio);
    if ts.groups.is_empty() {
        return Err(Error::EmptyDataset(
            "no training query survived candidate-containment filtering".to_string(),
        ));
    }
    let report = TrainingSetReport {
        queries_considered,
        dropped_missing_expert: dropped,
        groups: ts.groups.len(),
        mean_list_length,
    };
    Ok((ts, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{col, FEATURE_NAMES};
    use crate::ids::PostId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Groups where the positive row's ScoreIndexText strictly dominates.
    pub(crate) fn separable_training_set(queries: usize, group_size: usize, seed: u64) -> LtrTrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<Vec<FeatureRow>> = (0..queries)
            .map(|q| {
                let winner = rng.gen_range(0..group_size);
                (0..group_size)
                    .map(|c| {
                        let mut f = FeatureVector::zeros();
                        f.0[col::SCORE_INDEX_TEXT] = if c == winner {
                            rng.gen_range(5.0..10.0)
                        } else {
                            rng.gen_range(0.0..4.9)
                        };
                        f.0[col::REPUTATION] = rng.gen_range(0.0..100.0); // noise
                        f.0[col::DEGREE] = rng.gen_range(0.0..5.0); // noise
                        FeatureRow {
                            query: PostId(q as i64),
                            candidate: UserId(c as i64),
                            label: u8::from(c == winner),
                            features: f,
                        }
                    })
                    .collect()
            })
            .collect();
        LtrTrainingSet::from_query_blocks(blocks, 0.8)
    }

    fn train_p_at_1(ts: &LtrTrainingSet, scores: &[f64]) -> f64 {
        let groups = ts.train_groups();
        let hits = groups
            .iter()
            .filter(|g| {
                let best = (g.start..g.end)
                    .max_by(|&a, &b| {
                        scores[a]
                            .partial_cmp(&scores[b])
                            .unwrap()
                            .then_with(|| b.cmp(&a))
                    })
                    .unwrap();
                ts.rows[best].label == 1
            })
            .count();
        hits as f64 / groups.len() as f64
    }

    #[test]
    fn separable_set_reaches_perfect_train_precision() {
        let ts = separable_training_set(40, 6, 3);
        let params = LambdaMartParams {
            n_estimators: 30,
            num_leaves: 8,
            max_depth: 4,
            min_data_in_leaf: 1,
            learning_rate: 0.3,
            ..Default::default()
        };
        let outcome = train_lambdamart(&ts, &params);
        let scores = score_all(&outcome.model, &ts);
        assert_eq!(train_p_at_1(&ts, &scores), 1.0);
    }

    #[test]
    fn train_ndcg_non_decreasing_early() {
        let ts = separable_training_set(40, 6, 7);
        let params = LambdaMartParams {
            n_estimators: 10,
            num_leaves: 8,
            max_depth: 4,
            min_data_in_leaf: 1,
            learning_rate: 0.1,
            ..Default::default()
        };
        let outcome = train_lambdamart(&ts, &params);
        assert!(outcome.train_ndcg3.len() >= 2);
        for w in outcome.train_ndcg3.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "NDCG@3 dropped: {:?}", outcome.train_ndcg3);
        }
    }

    #[test]
    fn swapping_feature_columns_preserves_rankings() {
        let ts = separable_training_set(30, 5, 11);
        // Swap columns 0 (Reputation) and 15 (ScoreIndexText) everywhere.
        let mut swapped = ts.clone();
        for row in &mut swapped.rows {
            row.features.0.swap(col::REPUTATION, col::SCORE_INDEX_TEXT);
        }
        let params = LambdaMartParams {
            n_estimators: 15,
            num_leaves: 8,
            max_depth: 4,
            min_data_in_leaf: 1,
            learning_rate: 0.2,
            ..Default::default()
        };
        let m1 = train_lambdamart(&ts, &params).model;
        let m2 = train_lambdamart(&swapped, &params).model;
        for (a, b) in ts.rows.iter().zip(&swapped.rows) {
            assert!((m1.score(&a.features.0) - m2.score(&b.features.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_single_row_groups_train_without_error() {
        let mut blocks: Vec<Vec<FeatureRow>> = Vec::new();
        for q in 0..10 {
            let mut f = FeatureVector::zeros();
            f.0[col::SCORE_INDEX_TEXT] = q as f64;
            blocks.push(vec![FeatureRow {
                query: PostId(q),
                candidate: UserId(1),
                label: 1,
                features: f,
            }]);
        }
        let ts = LtrTrainingSet::from_query_blocks(blocks, 0.8);
        let outcome = train_lambdamart(&ts, &LambdaMartParams::default());
        // All-degenerate groups yield zero gradients and an empty ensemble.
        assert!(outcome.model.trees.is_empty());
    }

    #[test]
    fn empty_ensemble_scores_zero() {
        let m = GbdtEnsemble::empty();
        assert_eq!(m.score(&[1.0; FEATURE_COUNT]), 0.0);
    }

    #[test]
    fn single_stump_trace() {
        use tree::Node;
        let stump = Tree {
            nodes: vec![
                Node::Split {
                    feature: col::SCORE_INDEX_TEXT,
                    threshold: 2.0,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: -1.0 },
                Node::Leaf { value: 1.0 },
            ],
        };
        let model = GbdtEnsemble {
            trees: vec![stump],
            shrinkage: vec![0.1],
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            active_features: (0..FEATURE_COUNT).collect(),
            tree_gains: vec![Default::default()],
        };
        let mut x = [0.0; FEATURE_COUNT];
        x[col::SCORE_INDEX_TEXT] = 4.5;
        assert!((model.score(&x) - 0.1).abs() < 1e-12);
        x[col::SCORE_INDEX_TEXT] = 1.0;
        assert!((model.score(&x) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn rank_by_score_breaks_ties_by_id() {
        let ranked = rank_by_score(vec![
            (UserId(9), 1.0),
            (UserId(2), 3.0),
            (UserId(5), 1.0),
        ]);
        assert_eq!(ranked, vec![UserId(2), UserId(5), UserId(9)]);
    }

    #[test]
    fn linear_model_validates_width() {
        assert!(LinearModel::new(vec![1.0; 3]).is_err());
        let m = LinearModel::new(vec![1.0; FEATURE_COUNT]).unwrap();
        let mut x = FeatureVector::zeros();
        x.0[0] = 2.5;
        x.0[22] = 1.5;
        assert_eq!(m.score(&x.0), 4.0);
    }

    #[test]
    fn tuner_returns_validation_argmax_earliest() {
        let ts = separable_training_set(30, 5, 17);
        let ranges = TuningRanges {
            learning_rate: (0.05, 0.3),
            num_leaves: (4, 16),
            n_estimators: (5, 20),
            max_depth: (3, 6),
            min_data_in_leaf: (1, 5),
        };
        let active: Vec<usize> = (0..FEATURE_COUNT).collect();
        let (best, reports) = tune(&ts, &ranges, 4, 5, &active);
        let max = reports
            .iter()
            .map(|r| r.validation_mrr)
            .fold(f64::NEG_INFINITY, f64::max);
        let earliest_max = reports.iter().find(|r| r.validation_mrr == max).unwrap();
        assert_eq!(best, earliest_max.params);

        // Single trial returns that trial's sample.
        let (only, reports1) = tune(&ts, &ranges, 1, 5, &active);
        assert_eq!(only, reports1[0].params);
    }

    mod interpretable_tests {
        use super::*;
        use interpretable::{InterpretableEnsemble, InterpretableParams, MainEffect};
        use tree::Node;

        fn base_params() -> InterpretableParams {
            InterpretableParams {
                base: LambdaMartParams {
                    n_estimators: 20,
                    num_leaves: 8,
                    max_depth: 4,
                    min_data_in_leaf: 1,
                    learning_rate: 0.2,
                    ..Default::default()
                },
                main_trees: 20,
                interaction_trees: 10,
                probe_trees: 5,
                k_pairs: 3,
            }
        }

        #[test]
        fn zero_pairs_is_purely_additive() {
            let ts = separable_training_set(30, 5, 23);
            let params = InterpretableParams { k_pairs: 0, ..base_params() };
            let outcome = train_interpretable(&ts, &params);
            assert!(outcome.model.interaction_effects.is_empty());
            assert!(!outcome.model.main_effects.is_empty());
            outcome.model.audit_structure().unwrap();
        }

        #[test]
        fn decomposition_reconstructs_score() {
            let ts = separable_training_set(30, 5, 29);
            let outcome = train_interpretable(&ts, &base_params());
            let model = &outcome.model;
            model.audit_structure().unwrap();
            for row in ts.rows.iter().take(50) {
                let x = &row.features.0;
                let total: f64 = model
                    .main_effects
                    .iter()
                    .map(|e| model.main_contribution(e, x[e.feature]))
                    .sum::<f64>()
                    + model
                        .interaction_effects
                        .iter()
                        .map(|e| {
                            model.interaction_contribution(e, x[e.features.0], x[e.features.1])
                        })
                        .sum::<f64>();
                assert!((total - model.score(x)).abs() < 1e-9);
            }
        }

        #[test]
        fn capacity_ordering_against_unconstrained() {
            let ts = separable_training_set(40, 6, 31);
            let params = base_params();
            let constrained = train_interpretable(&ts, &params);
            let free = train_lambdamart(
                &ts,
                &LambdaMartParams {
                    n_estimators: params.main_trees + params.interaction_trees,
                    ..params.base.clone()
                },
            );
            let free_scores = score_all(&free.model, &ts);
            let mut constrained_scores = vec![0.0; ts.rows.len()];
            for (i, row) in ts.rows.iter().enumerate() {
                constrained_scores[i] = constrained.model.score(&row.features.0);
            }
            let free_ndcg = ndcg3(&ts, ts.train_groups(), &free_scores);
            let constrained_ndcg = ndcg3(&ts, ts.train_groups(), &constrained_scores);
            assert!(
                free_ndcg >= constrained_ndcg - 1e-9,
                "unconstrained {free_ndcg} < constrained {constrained_ndcg}"
            );
        }

        /// Hand-built monotone model: experts with uniformly larger
        /// content-frequency features must outscore smaller ones.
        #[test]
        fn monotone_effects_order_decision_traces() {
            let step = |feature: usize, cuts: &[f64]| -> MainEffect {
                // Increasing staircase: value = number of thresholds passed.
                let mut trees = Vec::new();
                for &c in cuts {
                    trees.push(Tree {
                        nodes: vec![
                            Node::Split { feature, threshold: c, left: 1, right: 2 },
                            Node::Leaf { value: 0.0 },
                            Node::Leaf { value: 1.0 },
                        ],
                    });
                }
                MainEffect {
                    feature,
                    shrinkage: vec![1.0; trees.len()],
                    trees,
                    gain: 1.0,
                }
            };
            let model = InterpretableEnsemble {
                main_effects: vec![
                    step(col::FREQUENCY_INDEX_TAG, &[5.0, 20.0, 40.0]),
                    step(col::VISIT_COUNT_CONTENT, &[5.0, 10.0]),
                    step(col::FREQUENCY_INDEX_TEXT, &[10.0, 30.0, 50.0]),
                ],
                interaction_effects: vec![],
                selected_pairs: vec![],
                feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            };
            let mut strong = FeatureVector::zeros();
            strong.0[col::FREQUENCY_INDEX_TAG] = 45.0;
            strong.0[col::VISIT_COUNT_CONTENT] = 17.0;
            strong.0[col::FREQUENCY_INDEX_TEXT] = 54.0;
            let mut weak = FeatureVector::zeros();
            weak.0[col::FREQUENCY_INDEX_TAG] = 7.0;
            weak.0[col::VISIT_COUNT_CONTENT] = 7.0;
            weak.0[col::FREQUENCY_INDEX_TEXT] = 7.0;
            assert!(model.score(&strong.0) > model.score(&weak.0));
        }

        #[test]
        fn effect_curves_cover_all_regions() {
            let ts = separable_training_set(30, 5, 37);
            let outcome = train_interpretable(&ts, &base_params());
            for effect in &outcome.model.main_effects {
                let curve = outcome.model.main_curve(effect);
                assert!(!curve.grid.is_empty());
                assert_eq!(curve.grid.len(), curve.contribution.len());
                // Grid values must reproduce the step function exactly.
                for (v, c) in curve.grid.iter().zip(&curve.contribution) {
                    assert_eq!(outcome.model.main_contribution(effect, *v), *c);
                }
            }
        }
    }
}
