//! Ranking metrics, the two evaluation protocols, and paired significance
//! tests.
//!
//! Ground truth is the single accepted answerer, so the metrics take their
//! binary single-relevant forms: P@1 = [rank = 1], NDCG@3 = 1/log2(rank+1)
//! for rank <= 3, R@5 = [rank <= 5], RR = 1/rank. A query whose ground truth
//! is absent from the ranking contributes 0 to all four.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::engine::QueryEngine;
use crate::error::{Error, Result};
use crate::ids::{PostId, UserId};
use crate::ingest::Question;
use crate::ranker::{rank_by_score, RankingModel};
use crate::seeding::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query: PostId,
    pub ranking: Vec<UserId>,
    pub ground_truth: UserId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query: PostId,
    /// 1-based rank of the ground truth, if present.
    pub rank: Option<usize>,
    pub p1: f64,
    pub ndcg3: f64,
    pub r5: f64,
    pub rr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_query: Vec<QueryMetrics>,
    pub query_count: usize,
    pub miss_count: usize,
    pub p1: f64,
    pub ndcg3: f64,
    pub r5: f64,
    pub mrr: f64,
}

pub fn query_metrics(list: &RankedList) -> QueryMetrics {
    let rank = list.ranking.iter().position(|&u| u == list.ground_truth).map(|i| i + 1);
    match rank {
        None => QueryMetrics { query: list.query, rank, p1: 0.0, ndcg3: 0.0, r5: 0.0, rr: 0.0 },
        Some(r) => QueryMetrics {
            query: list.query,
            rank,
            p1: if r == 1 { 1.0 } else { 0.0 },
            ndcg3: if r <= 3 { 1.0 / ((r + 1) as f64).log2() } else { 0.0 },
            r5: if r <= 5 { 1.0 } else { 0.0 },
            rr: 1.0 / r as f64,
        },
    }
}

/// Aggregate metrics over ranked lists; sums run in list order so the report
/// is reproducible.
pub fn metrics(lists: &[RankedList]) -> MetricReport {
    let per_query: Vec<QueryMetrics> = lists.iter().map(query_metrics).collect();
    let n = per_query.len();
    let mut sums = (0.0, 0.0, 0.0, 0.0);
    let mut misses = 0usize;
    for m in &per_query {
        sums.0 += m.p1;
        sums.1 += m.ndcg3;
        sums.2 += m.r5;
        sums.3 += m.rr;
        if m.rank.is_none() {
            misses += 1;
        }
    }
    let denom = if n == 0 { 1.0 } else { n as f64 };
    MetricReport {
        per_query,
        query_count: n,
        miss_count: misses,
        p1: sums.0 / denom,
        ndcg3: sums.1 / denom,
        r5: sums.2 / denom,
        mrr: sums.3 / denom,
    }
}

/// A protocol run: the metric report plus the mean length of the ranked
/// lists (the published tables report this as AvgList).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub metrics: MetricReport,
    pub mean_list_length: f64,
}

/// Run any ranking rule over the expert-ranking pool: the test queries whose
/// accepted answerer is a labeled expert. Ground truth missing from a
/// ranking counts as a miss.
pub fn ranking_protocol<F>(
    engine: &QueryEngine<'_>,
    test_queries: &[Question],
    rank: F,
) -> ProtocolOutcome
where
    F: Fn(&Question, &crate::engine::QueryOutcome) -> Vec<UserId> + Sync,
{
    let pool: Vec<&Question> = test_queries
        .iter()
        .filter(|q| engine.mlg.labeling.is_expert(q.accepted_answerer))
        .collect();
    let lists: Vec<RankedList> = pool
        .par_iter()
        .map(|q| {
            let outcome = engine.process_question(q);
            RankedList {
                query: q.id,
                ranking: rank(q, &outcome),
                ground_truth: q.accepted_answerer,
            }
        })
        .collect();
    let mean_list_length = if lists.is_empty() {
        0.0
    } else {
        lists.iter().map(|l| l.ranking.len() as f64).sum::<f64>() / lists.len() as f64
    };
    ProtocolOutcome { metrics: metrics(&lists), mean_list_length }
}

/// Rank every selected candidate with the model.
pub fn expert_ranking_protocol(
    engine: &QueryEngine<'_>,
    model: &RankingModel,
    test_queries: &[Question],
) -> ProtocolOutcome {
    ranking_protocol(engine, test_queries, |_, outcome| {
        let ctx = engine.feature_context(outcome);
        let scored: Vec<(UserId, f64)> = outcome
            .candidates
            .experts
            .iter()
            .map(|&u| (u, model.score(&ctx.features_for(u))))
            .collect();
        rank_by_score(scored)
    })
}

fn rank_with_model(
    engine: &QueryEngine<'_>,
    model: &RankingModel,
    q: &Question,
    fixed_users: Option<&[UserId]>,
) -> RankedList {
    let outcome = engine.process_question(q);
    let ctx = engine.feature_context(&outcome);
    let users: Vec<UserId> = match fixed_users {
        Some(u) => u.to_vec(),
        None => outcome.candidates.experts.clone(),
    };
    let scored: Vec<(UserId, f64)> =
        users.iter().map(|&u| (u, model.score(&ctx.features_for(u)))).collect();
    RankedList { query: q.id, ranking: rank_by_score(scored), ground_truth: q.accepted_answerer }
}

/// The fixed user set ranked for one query under the subsample protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsamplePlan {
    pub query: PostId,
    pub users: Vec<UserId>,
    pub seed: u64,
}

pub const SUBSAMPLE_SIZE: usize = 20;

/// Build per-query plans: all actual answerers (the best answerer included)
/// plus random candidates drawn without replacement from the query's own
/// selection pool until the plan reaches `size`. Queries whose best answerer
/// was not selected are skipped, mirroring the protocol's containment
/// restriction.
pub fn build_subsample_plans(
    engine: &QueryEngine<'_>,
    test_queries: &[Question],
    size: usize,
    seed: u64,
) -> Vec<SubsamplePlan> {
    let pool: Vec<&Question> = test_queries
        .iter()
        .filter(|q| engine.mlg.labeling.is_expert(q.accepted_answerer))
        .collect();
    pool.par_iter()
        .filter_map(|q| {
            let outcome = engine.process_question(q);
            if !outcome.candidates.contains(q.accepted_answerer) {
                return None;
            }
            let mut users: Vec<UserId> = Vec::new();
            users.push(q.accepted_answerer);
            if let Some(answers) = engine.dataset.answers.get(&q.id) {
                let mut others: Vec<UserId> = answers
                    .iter()
                    .map(|a| a.owner)
                    .filter(|&u| u != q.accepted_answerer)
                    .collect();
                others.sort();
                others.dedup();
                users.extend(others.into_iter().take(size.saturating_sub(1)));
            }
            let mut fill: Vec<UserId> = outcome
                .candidates
                .experts
                .iter()
                .copied()
                .filter(|u| !users.contains(u))
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[q.id.0 as u64]));
            while users.len() < size && !fill.is_empty() {
                let pick = rng.gen_range(0..fill.len());
                users.push(fill.swap_remove(pick));
            }
            users.sort();
            Some(SubsamplePlan { query: q.id, users, seed })
        })
        .collect()
}

/// Rank exactly each plan's users with the same feature pipeline. Users that
/// were never selected get sentinel-filled features computed on demand.
pub fn subsample_protocol(
    engine: &QueryEngine<'_>,
    model: &RankingModel,
    plans: &[SubsamplePlan],
    test_queries: &[Question],
) -> Result<ProtocolOutcome> {
    let by_id: std::collections::HashMap<PostId, &Question> =
        test_queries.iter().map(|q| (q.id, q)).collect();
    let lists: Vec<RankedList> = plans
        .par_iter()
        .map(|plan| {
            let q = by_id.get(&plan.query).ok_or_else(|| {
                Error::Artifact(format!("plan query {} not in the test set", plan.query))
            })?;
            Ok(rank_with_model(engine, model, q, Some(&plan.users)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_list_length = if lists.is_empty() {
        0.0
    } else {
        lists.iter().map(|l| l.ranking.len() as f64).sum::<f64>() / lists.len() as f64
    };
    Ok(ProtocolOutcome { metrics: metrics(&lists), mean_list_length })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p_value: f64,
    pub num_comparisons: usize,
    pub significant: bool,
}

/// Two-sided paired t-test with Bonferroni-corrected significance at 0.05.
///
/// Degenerate difference vectors follow the documented conventions: zero
/// variance with zero mean is not significant, zero variance with nonzero
/// mean is.
pub fn paired_ttest_bonferroni(a: &[f64], b: &[f64], num_comparisons: usize) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::Config("paired t-test needs aligned arrays".to_string()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Config("paired t-test needs at least two pairs".to_string()));
    }
    if num_comparisons == 0 {
        return Err(Error::Config("Bonferroni family size must be positive".to_string()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let threshold = 0.05 / num_comparisons as f64;

    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult { t: 0.0, p_value: 1.0, num_comparisons, significant: false }
        } else {
            TTestResult {
                t: if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                p_value: 0.0,
                num_comparisons,
                significant: true,
            }
        });
    }

    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::Config(format!("t-distribution: {e}")))?;
    let p_value = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTestResult { t, p_value, num_comparisons, significant: p_value < threshold })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub queries: usize,
    pub mean_seconds: f64,
    pub median_seconds: f64,
    pub p95_seconds: f64,
}

/// Wall-clock per-query inference latency over warm artifacts.
pub fn timing_harness(
    engine: &QueryEngine<'_>,
    model: &RankingModel,
    test_queries: &[Question],
) -> TimingReport {
    let mut samples: Vec<f64> = Vec::with_capacity(test_queries.len());
    for q in test_queries {
        let start = Instant::now();
        let _ = rank_with_model(engine, model, q, None);
        samples.push(start.elapsed().as_secs_f64());
    }
    summarize_timing(&samples)
}

pub fn summarize_timing(samples: &[f64]) -> TimingReport {
    if samples.is_empty() {
        return TimingReport { queries: 0, mean_seconds: 0.0, median_seconds: 0.0, p95_seconds: 0.0 };
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let idx = |p: f64| -> f64 { sorted[(((p * n as f64).ceil() as usize).clamp(1, n)) - 1] };
    TimingReport {
        queries: n,
        mean_seconds: samples.iter().sum::<f64>() / n as f64,
        median_seconds: idx(0.5),
        p95_seconds: idx(0.95),
    }
}

/// Queries of the expert-ranking pool whose candidate set contains the
/// ground truth; used to align protocol comparisons.
pub fn containment_filter(engine: &QueryEngine<'_>, test_queries: &[Question]) -> BTreeSet<PostId> {
    test_queries
        .par_iter()
        .filter(|q| engine.mlg.labeling.is_expert(q.accepted_answerer))
        .filter_map(|q| {
            let outcome = engine.process_question(q);
            outcome.candidates.contains(q.accepted_answerer).then_some(q.id)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(ranking: &[i64], truth: i64) -> RankedList {
        RankedList {
            query: PostId(1),
            ranking: ranking.iter().map(|&u| UserId(u)).collect(),
            ground_truth: UserId(truth),
        }
    }

    #[test]
    fn metric_values_at_fixed_ranks() {
        let m1 = query_metrics(&list(&[7, 2, 3], 7));
        assert_eq!((m1.p1, m1.ndcg3, m1.r5, m1.rr), (1.0, 1.0, 1.0, 1.0));

        let m2 = query_metrics(&list(&[2, 7, 3], 7));
        assert!((m2.ndcg3 - 1.0 / 3.0f64.log2()).abs() < 1e-12);
        assert_eq!(m2.rr, 0.5);
        assert_eq!(m2.p1, 0.0);

        let m7 = query_metrics(&list(&[1, 2, 3, 4, 5, 6, 7], 7));
        assert_eq!((m7.p1, m7.ndcg3, m7.r5), (0.0, 0.0, 0.0));
        assert!((m7.rr - 1.0 / 7.0).abs() < 1e-12);

        let miss = query_metrics(&list(&[1, 2], 99));
        assert_eq!((miss.p1, miss.ndcg3, miss.r5, miss.rr), (0.0, 0.0, 0.0, 0.0));
        assert!(miss.rank.is_none());
    }

    #[test]
    fn report_means_and_structural_inequalities() {
        let lists = vec![
            list(&[7, 1], 7),
            list(&[1, 7], 7),
            list(&[1, 2], 9), // miss
        ];
        let r = metrics(&lists);
        assert_eq!(r.query_count, 3);
        assert_eq!(r.miss_count, 1);
        assert!((r.p1 - 1.0 / 3.0).abs() < 1e-12);
        assert!(r.p1 <= r.r5 && r.p1 <= r.mrr);
    }

    /// Brute-force re-evaluation of the four formulas on randomized cases.
    #[test]
    fn metrics_match_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let len = rng.gen_range(1..30usize);
            let mut ranking: Vec<i64> = (0..len as i64).collect();
            for i in (1..len).rev() {
                let j = rng.gen_range(0..=i);
                ranking.swap(i, j);
            }
            let truth = rng.gen_range(0..len as i64 + 5); // sometimes absent
            let m = query_metrics(&list(&ranking, truth));
            let pos = ranking.iter().position(|&u| u == truth);
            match pos {
                None => assert_eq!((m.p1, m.ndcg3, m.r5, m.rr), (0.0, 0.0, 0.0, 0.0)),
                Some(i) => {
                    let rank = i + 1;
                    assert_eq!(m.p1, if rank == 1 { 1.0 } else { 0.0 });
                    let ndcg = if rank <= 3 { 1.0 / ((rank + 1) as f64).log2() } else { 0.0 };
                    assert_eq!(m.ndcg3, ndcg);
                    assert_eq!(m.r5, if rank <= 5 { 1.0 } else { 0.0 });
                    assert_eq!(m.rr, 1.0 / rank as f64);
                }
            }
        }
    }

    #[test]
    fn random_ranker_subsample_mrr_approaches_harmonic_mean() {
        // Uniform random ranking of 20 users with one relevant: the expected
        // reciprocal rank is H(20)/20.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 10_000;
        let mut total = 0.0;
        for _ in 0..trials {
            let rank = rng.gen_range(1..=20usize);
            total += 1.0 / rank as f64;
        }
        let empirical = total / trials as f64;
        let expected: f64 = (1..=20).map(|k| 1.0 / k as f64).sum::<f64>() / 20.0;
        assert!((empirical - expected).abs() < 0.02, "{empirical} vs {expected}");
    }

    #[test]
    fn ttest_hand_computed_case() {
        let a = [2.0, 4.0, 6.0, 8.0, 10.0];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        // Diffs 1..5: mean 3, sd 1.5811, t = 4.2426.
        let r = paired_ttest_bonferroni(&a, &b, 1).unwrap();
        assert!((r.t - 4.242640687).abs() < 1e-6);
        assert!(r.p_value > 0.01 && r.p_value < 0.02);
    }

    #[test]
    fn ttest_identical_arrays_not_significant() {
        let a = [0.3, 0.5, 0.9, 0.1];
        let r = paired_ttest_bonferroni(&a, &a, 3).unwrap();
        assert_eq!(r.t, 0.0);
        assert!(!r.significant);
    }

    #[test]
    fn ttest_constant_shift_conventions() {
        // 0.5 is exactly representable, so every difference is bit-identical
        // and the variance is exactly zero.
        let a: Vec<f64> = (0..100).map(|i| i as f64 + 0.5).collect();
        let b: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = paired_ttest_bonferroni(&a, &b, 4).unwrap();
        assert!(r.significant);
        assert!(r.t.is_infinite() && r.t > 0.0);
    }

    #[test]
    fn ttest_large_sample_small_effect_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1000;
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let a: Vec<f64> = b.iter().map(|x| x + 0.1 + rng.gen_range(-0.01..0.01)).collect();
        let r = paired_ttest_bonferroni(&a, &b, 10).unwrap();
        assert!(r.significant);
    }

    #[test]
    fn timing_summary_arithmetic() {
        let r = summarize_timing(&[]);
        assert_eq!(r.queries, 0);
        let r = summarize_timing(&[0.2, 0.1, 0.3, 0.4]);
        assert!((r.mean_seconds - 0.25).abs() < 1e-12);
        assert_eq!(r.median_seconds, 0.2);
        assert_eq!(r.p95_seconds, 0.4);
    }
}
