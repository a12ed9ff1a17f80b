//! Per-query composition of retrieval, selection, and featurization.
//!
//! A `QueryEngine` borrows the built artifacts, precomputes the per-layer
//! adjacency lists and the static feature table once, and then answers
//! individual queries. It is read-only after construction and safe to share
//! across threads.

use std::collections::{BTreeMap, BTreeSet};

use crate::features::{
    compute_static_table, retrieval_sums, FeatureVector, QueryFeatureContext, RetrievalSums,
    StaticFeatures,
};
use crate::graph::AdjacencyGraph;
use crate::ids::{PostId, UserId};
use crate::ingest::{Dataset, Question};
use crate::mlg::MultiLayerGraph;
use crate::retrieval::{merge_alternate, tokenize, InvertedIndex, ScoredQuestion};
use crate::selection::{select_candidates, CandidateSet, SelectionConfig};

pub struct QueryEngine<'a> {
    pub dataset: &'a Dataset,
    pub mlg: &'a MultiLayerGraph,
    pub text_index: &'a InvertedIndex,
    pub tag_index: &'a InvertedIndex,
    pub adjacencies: Vec<AdjacencyGraph>,
    pub statics: BTreeMap<UserId, StaticFeatures>,
    pub selection: SelectionConfig,
    pub top_n: usize,
    pub literal_query_knowledge: bool,
}

/// Everything selection and retrieval produced for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query: PostId,
    pub layers: BTreeSet<usize>,
    pub merged: Vec<UserId>,
    pub candidates: CandidateSet,
    pub retrieval: BTreeMap<UserId, RetrievalSums>,
    pub tag_hits: Vec<ScoredQuestion>,
    pub text_hits: Vec<ScoredQuestion>,
}

impl<'a> QueryEngine<'a> {
    pub fn new(
        dataset: &'a Dataset,
        mlg: &'a MultiLayerGraph,
        text_index: &'a InvertedIndex,
        tag_index: &'a InvertedIndex,
        selection: SelectionConfig,
        top_n: usize,
        literal_query_knowledge: bool,
    ) -> Self {
        QueryEngine {
            dataset,
            mlg,
            text_index,
            tag_index,
            adjacencies: mlg.layers.iter().map(|l| l.adjacency()).collect(),
            statics: compute_static_table(dataset),
            selection,
            top_n,
            literal_query_knowledge,
        }
    }

    pub fn process_question(&self, q: &Question) -> QueryOutcome {
        self.process(q.id, &q.title, &q.body, &q.tags)
    }

    pub fn process(&self, id: PostId, title: &str, body: &str, tags: &[String]) -> QueryOutcome {
        let mut text_terms = tokenize(title);
        text_terms.extend(tokenize(body));
        let text_hits = self.text_index.query(&text_terms, self.top_n);
        let tag_hits = self.tag_index.query(tags, self.top_n);
        let merged = merge_alternate(&tag_hits, &text_hits);
        let candidates =
            select_candidates(id, tags, self.mlg, &self.adjacencies, &merged, &self.selection);
        let retrieval = retrieval_sums(&tag_hits, &text_hits);
        QueryOutcome {
            query: id,
            layers: candidates.layers.clone(),
            merged,
            candidates,
            retrieval,
            tag_hits,
            text_hits,
        }
    }

    pub fn feature_context<'b>(&'b self, outcome: &'b QueryOutcome) -> QueryFeatureContext<'b> {
        QueryFeatureContext {
            mlg: self.mlg,
            statics: &self.statics,
            query_layers: &outcome.layers,
            candidates: &outcome.candidates,
            retrieval: &outcome.retrieval,
            literal_query_knowledge: self.literal_query_knowledge,
        }
    }

    pub fn features_for(&self, outcome: &QueryOutcome, users: &[UserId]) -> Vec<(UserId, FeatureVector)> {
        let ctx = self.feature_context(outcome);
        users.iter().map(|&u| (u, ctx.features_for(u))).collect()
    }

    /// Experts of the query's layers ordered by betweenness (descending,
    /// ties by user id). This ordering *is* the ranking in the
    /// centrality-only configuration.
    pub fn betweenness_ranking(&self, layers: &BTreeSet<usize>) -> Vec<UserId> {
        let mut best: BTreeMap<UserId, f64> = BTreeMap::new();
        for &l in layers {
            let layer = &self.mlg.layers[l];
            for (i, &u) in layer.nodes.iter().enumerate() {
                if self.mlg.labeling.is_expert(u) {
                    let score = layer.centrality.betweenness[i];
                    let entry = best.entry(u).or_insert(f64::NEG_INFINITY);
                    if score > *entry {
                        *entry = score;
                    }
                }
            }
        }
        let mut order: Vec<(UserId, f64)> = best.into_iter().collect();
        order.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.0.cmp(&b.0))
        });
        order.into_iter().map(|(u, _)| u).collect()
    }
}
