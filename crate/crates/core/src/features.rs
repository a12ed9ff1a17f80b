//! The per-(query, candidate) feature vector.
//!
//! Six static fields describe the candidate alone; seventeen query-dependent
//! fields mix selection provenance, retrieval scores, and per-layer
//! centrality tables. Values from multiple layers are folded with the
//! aggregation rules: network centralities take the maximum, visit counts and
//! query knowledge sum, step-like positions take the minimum. Index-derived
//! sums are query-global and counted once.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ids::{PostId, UserId};
use crate::ingest::Dataset;
use crate::mlg::MultiLayerGraph;
use crate::retrieval::ScoredQuestion;
use crate::selection::CandidateSet;

pub const FEATURE_COUNT: usize = 23;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "Reputation",
    "Answers",
    "AcceptedAnswers",
    "Ratio",
    "AvgActivity",
    "StdActivity",
    "LayerCount",
    "QueryKnowledge",
    "VisitCountContent",
    "VisitCountNetwork",
    "StepsContent",
    "StepsNetwork",
    "BetweennessPos",
    "BetweennessScore",
    "ScoreIndexTag",
    "ScoreIndexText",
    "FrequencyIndexTag",
    "FrequencyIndexText",
    "Eigenvector",
    "PageRank",
    "Closeness",
    "Degree",
    "AvgWeights",
];

/// Column indices into [`FeatureVector`].
pub mod col {
    pub const REPUTATION: usize = 0;
    pub const ANSWERS: usize = 1;
    pub const ACCEPTED_ANSWERS: usize = 2;
    pub const RATIO: usize = 3;
    pub const AVG_ACTIVITY: usize = 4;
    pub const STD_ACTIVITY: usize = 5;
    pub const LAYER_COUNT: usize = 6;
    pub const QUERY_KNOWLEDGE: usize = 7;
    pub const VISIT_COUNT_CONTENT: usize = 8;
    pub const VISIT_COUNT_NETWORK: usize = 9;
    pub const STEPS_CONTENT: usize = 10;
    pub const STEPS_NETWORK: usize = 11;
    pub const BETWEENNESS_POS: usize = 12;
    pub const BETWEENNESS_SCORE: usize = 13;
    pub const SCORE_INDEX_TAG: usize = 14;
    pub const SCORE_INDEX_TEXT: usize = 15;
    pub const FREQUENCY_INDEX_TAG: usize = 16;
    pub const FREQUENCY_INDEX_TEXT: usize = 17;
    pub const EIGENVECTOR: usize = 18;
    pub const PAGERANK: usize = 19;
    pub const CLOSENESS: usize = 20;
    pub const DEGREE: usize = 21;
    pub const AVG_WEIGHTS: usize = 22;
}

/// Sentinel for step/position fields when the signal never fired.
pub const STEP_SENTINEL: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector([0.0; FEATURE_COUNT])
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|&n| n == name).map(|i| self.0[i])
    }
}

/// Static (query-independent) candidate description.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StaticFeatures {
    pub reputation: f64,
    pub answers: f64,
    pub accepted_answers: f64,
    pub ratio: f64,
    pub avg_activity: f64,
    pub std_activity: f64,
}

/// Compute static features for every user who answered in the training
/// period. Activity statistics are the mean and population standard deviation
/// of the gaps, in seconds, between consecutive answers; users with fewer
/// than two answers get 0 for both.
pub fn compute_static_table(dataset: &Dataset) -> BTreeMap<UserId, StaticFeatures> {
    let mut answer_times: BTreeMap<UserId, Vec<f64>> = BTreeMap::new();
    let mut counts: BTreeMap<UserId, (u32, u32)> = BTreeMap::new();
    for q in &dataset.train_questions {
        if let Some(answers) = dataset.answers.get(&q.id) {
            for a in answers {
                answer_times.entry(a.owner).or_default().push(a.created_at.as_seconds_f64());
                let c = counts.entry(a.owner).or_default();
                c.0 += 1;
                if a.id == q.accepted_answer_id {
                    c.1 += 1;
                }
            }
        }
    }

    let mut out = BTreeMap::new();
    for (user, mut times) in answer_times {
        let (answers, accepted) = counts[&user];
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (avg, std) = if times.len() < 2 {
            (0.0, 0.0)
        } else {
            let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
            let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / gaps.len() as f64;
            (mean, var.sqrt())
        };
        out.insert(
            user,
            StaticFeatures {
                reputation: dataset.users.get(&user).map(|u| u.reputation as f64).unwrap_or(0.0),
                answers: answers as f64,
                accepted_answers: accepted as f64,
                ratio: if answers == 0 { 0.0 } else { accepted as f64 / answers as f64 },
                avg_activity: avg,
                std_activity: std,
            },
        );
    }
    out
}

/// Node centrality snapshot for one layer, read from the precomputed tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCentrality {
    pub betweenness: f64,
    pub betweenness_rank: u32,
    pub pagerank: f64,
    pub eigenvector: f64,
    pub closeness: f64,
    pub degree: f64,
    pub avg_weight: f64,
}

/// One layer's contribution to the query-dependent fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerPartial {
    pub layer: usize,
    pub query_knowledge: f64,
    pub visits_content: u32,
    pub visits_network: u32,
    pub steps_content: Option<u32>,
    pub steps_network: Option<u32>,
    /// None when the candidate is not a node of this layer.
    pub centrality: Option<NodeCentrality>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphAggregates {
    pub query_knowledge: f64,
    pub visits_content: f64,
    pub visits_network: f64,
    pub steps_content: f64,
    pub steps_network: f64,
    pub betweenness_pos: f64,
    pub betweenness_score: f64,
    pub eigenvector: f64,
    pub pagerank: f64,
    pub closeness: f64,
    pub degree: f64,
    pub avg_weights: f64,
}

/// Fold per-layer partials: sum for knowledge/visits, min for steps and
/// betweenness position, max for centrality scores. A single layer is the
/// identity; missing signals fall back to sentinels.
pub fn aggregate_layers(partials: &[LayerPartial]) -> GraphAggregates {
    let mut agg = GraphAggregates {
        query_knowledge: 0.0,
        visits_content: 0.0,
        visits_network: 0.0,
        steps_content: STEP_SENTINEL,
        steps_network: STEP_SENTINEL,
        betweenness_pos: STEP_SENTINEL,
        betweenness_score: 0.0,
        eigenvector: 0.0,
        pagerank: 0.0,
        closeness: 0.0,
        degree: 0.0,
        avg_weights: 0.0,
    };
    for p in partials {
        agg.query_knowledge += p.query_knowledge;
        agg.visits_content += p.visits_content as f64;
        agg.visits_network += p.visits_network as f64;
        if let Some(s) = p.steps_content {
            agg.steps_content = agg.steps_content.min(s as f64);
        }
        if let Some(s) = p.steps_network {
            agg.steps_network = agg.steps_network.min(s as f64);
        }
        if let Some(c) = p.centrality {
            agg.betweenness_pos = agg.betweenness_pos.min(c.betweenness_rank as f64);
            agg.betweenness_score = agg.betweenness_score.max(c.betweenness);
            agg.eigenvector = agg.eigenvector.max(c.eigenvector);
            agg.pagerank = agg.pagerank.max(c.pagerank);
            agg.closeness = agg.closeness.max(c.closeness);
            agg.degree = agg.degree.max(c.degree);
            agg.avg_weights = agg.avg_weights.max(c.avg_weight);
        }
    }
    agg
}

/// Per-candidate sums over the two retrieval hit lists.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RetrievalSums {
    pub score_tag: f64,
    pub freq_tag: u32,
    pub score_text: f64,
    pub freq_text: u32,
}

pub fn retrieval_sums(
    tag_hits: &[ScoredQuestion],
    text_hits: &[ScoredQuestion],
) -> BTreeMap<UserId, RetrievalSums> {
    let mut out: BTreeMap<UserId, RetrievalSums> = BTreeMap::new();
    for hit in tag_hits {
        let e = out.entry(hit.expert).or_default();
        e.score_tag += hit.score;
        e.freq_tag += 1;
    }
    for hit in text_hits {
        let e = out.entry(hit.expert).or_default();
        e.score_text += hit.score;
        e.freq_text += 1;
    }
    out
}

/// Everything needed to featurize candidates of one query.
pub struct QueryFeatureContext<'a> {
    pub mlg: &'a MultiLayerGraph,
    pub statics: &'a BTreeMap<UserId, StaticFeatures>,
    pub query_layers: &'a BTreeSet<usize>,
    pub candidates: &'a CandidateSet,
    pub retrieval: &'a BTreeMap<UserId, RetrievalSums>,
    /// When set, per-layer query knowledge uses the literal answers-over-
    /// accepted reading instead of the bounded accepted-over-answers one.
    pub literal_query_knowledge: bool,
}

impl QueryFeatureContext<'_> {
    /// Full 23-field vector for any user; works for never-selected users by
    /// filling sentinels (subsample evaluation needs that).
    pub fn features_for(&self, user: UserId) -> FeatureVector {
        let mut x = FeatureVector::zeros();

        let st = self.statics.get(&user).copied().unwrap_or_default();
        x.0[col::REPUTATION] = st.reputation;
        x.0[col::ANSWERS] = st.answers;
        x.0[col::ACCEPTED_ANSWERS] = st.accepted_answers;
        x.0[col::RATIO] = st.ratio;
        x.0[col::AVG_ACTIVITY] = st.avg_activity;
        x.0[col::STD_ACTIVITY] = st.std_activity;

        let selected = self.candidates.selected_layers(user);
        x.0[col::LAYER_COUNT] = selected.map(|m| m.len()).unwrap_or(0) as f64;

        let partials: Vec<LayerPartial> = self
            .query_layers
            .iter()
            .map(|&l| self.layer_partial(user, l, selected))
            .collect();
        let agg = aggregate_layers(&partials);
        x.0[col::QUERY_KNOWLEDGE] = agg.query_knowledge;
        x.0[col::VISIT_COUNT_CONTENT] = agg.visits_content;
        x.0[col::VISIT_COUNT_NETWORK] = agg.visits_network;
        x.0[col::STEPS_CONTENT] = agg.steps_content;
        x.0[col::STEPS_NETWORK] = agg.steps_network;
        x.0[col::BETWEENNESS_POS] = agg.betweenness_pos;
        x.0[col::BETWEENNESS_SCORE] = agg.betweenness_score;
        x.0[col::EIGENVECTOR] = agg.eigenvector;
        x.0[col::PAGERANK] = agg.pagerank;
        x.0[col::CLOSENESS] = agg.closeness;
        x.0[col::DEGREE] = agg.degree;
        x.0[col::AVG_WEIGHTS] = agg.avg_weights;

        let sums = self.retrieval.get(&user).copied().unwrap_or_default();
        x.0[col::SCORE_INDEX_TAG] = sums.score_tag;
        x.0[col::SCORE_INDEX_TEXT] = sums.score_text;
        x.0[col::FREQUENCY_INDEX_TAG] = sums.freq_tag as f64;
        x.0[col::FREQUENCY_INDEX_TEXT] = sums.freq_text as f64;

        x
    }

    fn layer_partial(
        &self,
        user: UserId,
        layer_id: usize,
        selected: Option<&BTreeMap<usize, crate::selection::LayerDiscovery>>,
    ) -> LayerPartial {
        let layer = &self.mlg.layers[layer_id];

        let qk = layer
            .user_stats
            .get(&user)
            .map(|s| {
                if self.literal_query_knowledge {
                    if s.accepted == 0 {
                        0.0
                    } else {
                        s.answers as f64 / s.accepted as f64
                    }
                } else if s.answers == 0 {
                    0.0
                } else {
                    s.accepted as f64 / s.answers as f64
                }
            })
            .unwrap_or(0.0);

        let discovery = selected.and_then(|m| m.get(&layer_id)).copied().unwrap_or_default();

        let centrality = layer.node_index(user).map(|i| {
            let c = &layer.centrality;
            NodeCentrality {
                betweenness: c.betweenness[i],
                betweenness_rank: c.betweenness_rank[i],
                pagerank: c.pagerank[i],
                eigenvector: c.eigenvector[i],
                closeness: c.closeness[i],
                degree: c.degree[i] as f64,
                avg_weight: c.avg_weight[i],
            }
        });

        LayerPartial {
            layer: layer_id,
            query_knowledge: qk,
            visits_content: discovery.visits_content,
            visits_network: discovery.visits_network,
            steps_content: discovery.steps_content,
            steps_network: discovery.steps_network,
            centrality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub query: PostId,
    pub candidate: UserId,
    pub label: u8,
    pub features: FeatureVector,
}

/// Columnar text export: one header row of names, one row per
/// (query, candidate, label).
pub fn write_feature_matrix<W: Write>(mut w: W, rows: &[FeatureRow]) -> std::io::Result<()> {
    write!(w, "query_id,candidate_id,label")?;
    for name in FEATURE_NAMES {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for row in rows {
        write!(w, "{},{},{}", row.query, row.candidate, row.label)?;
        for v in row.features.0 {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::Timestamp;
    use crate::ingest::{Answer, Question, UserRecord};

    #[test]
    fn static_activity_gaps() {
        // One user answers at t = 0s, 100s, 300s.
        let q = |id: i64| Question {
            id: PostId(id),
            asker: UserId(99),
            created_at: Timestamp(0),
            title: String::new(),
            body: String::new(),
            tags: vec!["t".to_string()],
            accepted_answer_id: PostId(id + 100),
            accepted_answerer: UserId(1),
        };
        let questions = vec![q(1), q(2), q(3)];
        let mut answers = BTreeMap::new();
        for (i, t) in [0i64, 100, 300].iter().enumerate() {
            let qid = PostId(i as i64 + 1);
            answers.insert(
                qid,
                vec![Answer {
                    id: PostId(i as i64 + 101),
                    question_id: qid,
                    owner: UserId(1),
                    created_at: Timestamp(t * 1000),
                }],
            );
        }
        let users = [(UserId(1), UserRecord { id: UserId(1), reputation: 42 })]
            .into_iter()
            .collect();
        let ds = Dataset { train_questions: questions, test_questions: vec![], answers, users };
        let table = compute_static_table(&ds);
        let st = table[&UserId(1)];
        assert_eq!(st.avg_activity, 150.0);
        assert_eq!(st.std_activity, 50.0);
        assert_eq!(st.reputation, 42.0);
        assert_eq!(st.answers, 3.0);
        assert_eq!(st.accepted_answers, 3.0);
    }

    #[test]
    fn single_answer_user_gets_zero_activity() {
        let q = Question {
            id: PostId(1),
            asker: UserId(99),
            created_at: Timestamp(0),
            title: String::new(),
            body: String::new(),
            tags: vec![],
            accepted_answer_id: PostId(2),
            accepted_answerer: UserId(1),
        };
        let answers = [(
            PostId(1),
            vec![Answer {
                id: PostId(2),
                question_id: PostId(1),
                owner: UserId(1),
                created_at: Timestamp(5000),
            }],
        )]
        .into_iter()
        .collect();
        let ds = Dataset {
            train_questions: vec![q],
            test_questions: vec![],
            answers,
            users: BTreeMap::new(),
        };
        let st = compute_static_table(&ds)[&UserId(1)];
        assert_eq!((st.avg_activity, st.std_activity), (0.0, 0.0));
        assert_eq!(st.ratio, 1.0);
    }

    #[test]
    fn ratio_is_accepted_over_answers() {
        let st = StaticFeatures {
            answers: 10.0,
            accepted_answers: 4.0,
            ratio: 4.0 / 10.0,
            ..Default::default()
        };
        assert_eq!(st.ratio, 0.4);
    }

    fn partial(layer: usize) -> LayerPartial {
        LayerPartial {
            layer,
            query_knowledge: 0.0,
            visits_content: 0,
            visits_network: 0,
            steps_content: None,
            steps_network: None,
            centrality: None,
        }
    }

    #[test]
    fn single_layer_aggregation_is_identity() {
        let p = LayerPartial {
            layer: 0,
            query_knowledge: 0.7,
            visits_content: 3,
            visits_network: 2,
            steps_content: Some(4),
            steps_network: Some(9),
            centrality: Some(NodeCentrality {
                betweenness: 1.5,
                betweenness_rank: 2,
                pagerank: 0.1,
                eigenvector: 0.9,
                closeness: 3.0,
                degree: 4.0,
                avg_weight: 0.6,
            }),
        };
        let agg = aggregate_layers(&[p]);
        assert_eq!(agg.query_knowledge, 0.7);
        assert_eq!(agg.visits_content, 3.0);
        assert_eq!(agg.steps_content, 4.0);
        assert_eq!(agg.betweenness_pos, 2.0);
        assert_eq!(agg.pagerank, 0.1);
    }

    #[test]
    fn max_min_sum_rules() {
        let mut a = partial(0);
        a.centrality = Some(NodeCentrality {
            betweenness: 0.0,
            betweenness_rank: 5,
            pagerank: 0.1,
            eigenvector: 0.0,
            closeness: 0.0,
            degree: 0.0,
            avg_weight: 0.0,
        });
        a.steps_content = Some(4);
        a.visits_content = 2;
        let mut b = partial(2);
        b.centrality = Some(NodeCentrality {
            betweenness: 0.0,
            betweenness_rank: 9,
            pagerank: 0.3,
            eigenvector: 0.0,
            closeness: 0.0,
            degree: 0.0,
            avg_weight: 0.0,
        });
        b.steps_content = Some(2);
        b.visits_content = 5;

        let agg = aggregate_layers(&[a, b]);
        assert_eq!(agg.pagerank, 0.3); // max
        assert_eq!(agg.steps_content, 2.0); // min
        assert_eq!(agg.visits_content, 7.0); // sum
        assert_eq!(agg.betweenness_pos, 5.0); // min rank

        // Aggregation is permutation invariant.
        let swapped = aggregate_layers(&[b, a]);
        assert_eq!(agg, swapped);
    }

    #[test]
    fn missing_signals_become_sentinels() {
        let agg = aggregate_layers(&[partial(0)]);
        assert_eq!(agg.steps_content, STEP_SENTINEL);
        assert_eq!(agg.steps_network, STEP_SENTINEL);
        assert_eq!(agg.betweenness_pos, STEP_SENTINEL);
        assert_eq!(agg.betweenness_score, 0.0);
    }

    #[test]
    fn retrieval_sums_accumulate_per_expert() {
        let hit = |q: i64, s: f64, e: i64| ScoredQuestion {
            question: PostId(q),
            score: s,
            expert: UserId(e),
        };
        let text = vec![hit(1, 3.0, 5), hit(2, 1.5, 5), hit(3, 9.9, 6)];
        let sums = retrieval_sums(&[], &text);
        assert_eq!(sums[&UserId(5)].score_text, 4.5);
        assert_eq!(sums[&UserId(5)].freq_text, 2);
        assert_eq!(sums[&UserId(6)].freq_text, 1);
        assert_eq!(sums[&UserId(5)].freq_tag, 0);
    }

    #[test]
    fn matrix_export_has_header_and_all_columns() {
        let rows = vec![FeatureRow {
            query: PostId(9),
            candidate: UserId(3),
            label: 1,
            features: FeatureVector::zeros(),
        }];
        let mut buf = Vec::new();
        write_feature_matrix(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("query_id,candidate_id,label,Reputation,"));
        assert_eq!(header.split(',').count(), 3 + FEATURE_COUNT);
        assert_eq!(lines.next().unwrap().split(',').count(), 3 + FEATURE_COUNT);
    }
}
