//! Random-search hyperparameter tuning, selected by validation MRR.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::LtrTrainingSet;
use super::lambdamart::{mean_reciprocal_rank, score_all, train_lambdamart, LambdaMartParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningRanges {
    pub learning_rate: (f64, f64),
    pub num_leaves: (usize, usize),
    pub n_estimators: (usize, usize),
    pub max_depth: (usize, usize),
    pub min_data_in_leaf: (usize, usize),
}

impl Default for TuningRanges {
    fn default() -> Self {
        TuningRanges {
            learning_rate: (0.0001, 0.15),
            num_leaves: (50, 200),
            n_estimators: (50, 150),
            max_depth: (8, 15),
            min_data_in_leaf: (150, 500),
        }
    }
}

impl TuningRanges {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.learning_rate.0 > 0.0
            && self.learning_rate.0 <= self.learning_rate.1
            && self.num_leaves.0 >= 2
            && self.num_leaves.0 <= self.num_leaves.1
            && self.n_estimators.0 >= 1
            && self.n_estimators.0 <= self.n_estimators.1
            && self.max_depth.0 >= 1
            && self.max_depth.0 <= self.max_depth.1
            && self.min_data_in_leaf.0 >= 1
            && self.min_data_in_leaf.0 <= self.min_data_in_leaf.1;
        if ok {
            Ok(())
        } else {
            Err("tuning ranges are empty or out of order".to_string())
        }
    }

    fn sample(&self, rng: &mut impl Rng, active_features: &[usize]) -> LambdaMartParams {
        fn pick(rng: &mut impl Rng, range: (usize, usize)) -> usize {
            rng.gen_range(range.0..=range.1)
        }
        LambdaMartParams {
            learning_rate: rng.gen_range(self.learning_rate.0..=self.learning_rate.1),
            num_leaves: pick(rng, self.num_leaves),
            n_estimators: pick(rng, self.n_estimators),
            max_depth: pick(rng, self.max_depth),
            min_data_in_leaf: pick(rng, self.min_data_in_leaf),
            active_features: active_features.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub params: LambdaMartParams,
    pub validation_mrr: f64,
}

/// Sample `trials` configurations and return the validation-MRR argmax
/// (earlier trial wins ties) plus the full trial log.
pub fn tune(
    ts: &LtrTrainingSet,
    ranges: &TuningRanges,
    trials: usize,
    seed: u64,
    active_features: &[usize],
) -> (LambdaMartParams, Vec<TrialReport>) {
    assert!(trials >= 1, "tuning needs at least one trial");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(trials);
    let mut best: Option<usize> = None;

    for trial in 0..trials {
        let params = ranges.sample(&mut rng, active_features);
        let outcome = train_lambdamart(ts, &params);
        let scores = score_all(&outcome.model, ts);
        let validation_mrr = mean_reciprocal_rank(ts, ts.validation_groups(), &scores);
        reports.push(TrialReport { trial, params, validation_mrr });
        let better = match best {
            None => true,
            Some(b) => validation_mrr > reports[b].validation_mrr,
        };
        if better {
            best = Some(trial);
        }
    }

    (reports[best.unwrap()].params.clone(), reports)
}
