//! Inverted indexes over expert-answered training questions, with BM25
//! scoring and the alternating tag/text merge.
//!
//! Two indexes are kept: `TextIndex` over tokenized title+body and `TagIndex`
//! over whole tag strings. Both contain only training questions whose
//! accepted answerer is a labeled expert — retrieval exists to surface the
//! experts behind similar past questions, so non-expert answerers can never
//! be candidates.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ids::{PostId, UserId};
use crate::ingest::Dataset;
use crate::mlg::ExpertLabeling;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub question: PostId,
    pub term_frequency: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMetadata {
    pub tokenizer: String,
    pub idf: String,
    pub query_terms: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    /// term -> postings sorted by question id.
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub doc_lengths: BTreeMap<PostId, u32>,
    pub avg_doc_length: f64,
    pub doc_count: usize,
    /// Accepted answerer of each indexed question (always a labeled expert).
    pub doc_expert: BTreeMap<PostId, UserId>,
    pub k1: f64,
    pub b: f64,
    pub metadata: IndexMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredQuestion {
    pub question: PostId,
    pub score: f64,
    pub expert: UserId,
}

/// Lowercase, split on non-alphanumerics, drop tokens shorter than two
/// characters. No stemming, no stop words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.len() >= 2)
        .map(|t| t.to_string())
        .collect()
}

impl InvertedIndex {
    fn build<F>(dataset: &Dataset, labeling: &ExpertLabeling, terms_of: F, tokenizer: &str) -> Self
    where
        F: Fn(&crate::ingest::Question) -> Vec<String>,
    {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths: BTreeMap<PostId, u32> = BTreeMap::new();
        let mut doc_expert: BTreeMap<PostId, UserId> = BTreeMap::new();
        let mut total_length = 0u64;

        for q in &dataset.train_questions {
            if !labeling.is_expert(q.accepted_answerer) {
                continue;
            }
            let terms = terms_of(q);
            let mut freqs: BTreeMap<&str, u32> = BTreeMap::new();
            for t in &terms {
                *freqs.entry(t.as_str()).or_insert(0) += 1;
            }
            doc_lengths.insert(q.id, terms.len() as u32);
            doc_expert.insert(q.id, q.accepted_answerer);
            total_length += terms.len() as u64;
            for (term, tf) in freqs {
                postings
                    .entry(term.to_string())
                    .or_default()
                    .push(Posting { question: q.id, term_frequency: tf });
            }
        }

        let doc_count = doc_lengths.len();
        // Train questions are chronological, not id-ordered; postings must be
        // sorted by question id.
        for list in postings.values_mut() {
            list.sort_by_key(|p| p.question);
        }

        InvertedIndex {
            postings,
            avg_doc_length: if doc_count == 0 {
                0.0
            } else {
                total_length as f64 / doc_count as f64
            },
            doc_count,
            doc_lengths,
            doc_expert,
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            metadata: IndexMetadata {
                tokenizer: tokenizer.to_string(),
                idf: "ln((N-n+0.5)/(n+0.5)+1)".to_string(),
                query_terms: "deduplicated".to_string(),
            },
        }
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.postings.get(term).map(|p| p.len()).unwrap_or(0) as f64;
        if n == 0.0 {
            return 0.0;
        }
        let big_n = self.doc_count as f64;
        ((big_n - n + 0.5) / (n + 0.5) + 1.0).ln()
    }

    /// BM25 over the index, descending score, ties broken by question id.
    pub fn query(&self, terms: &[String], top_n: usize) -> Vec<ScoredQuestion> {
        let mut distinct: Vec<&String> = terms.iter().collect();
        distinct.sort();
        distinct.dedup();

        let mut scores: HashMap<PostId, f64> = HashMap::new();
        for term in distinct {
            let Some(postings) = self.postings.get(term.as_str()) else {
                continue;
            };
            let idf = self.idf(term);
            for p in postings {
                let tf = p.term_frequency as f64;
                let len = self.doc_lengths[&p.question] as f64;
                let denom = tf + self.k1 * (1.0 - self.b + self.b * len / self.avg_doc_length);
                *scores.entry(p.question).or_insert(0.0) += idf * tf * (self.k1 + 1.0) / denom;
            }
        }

        let mut hits: Vec<ScoredQuestion> = scores
            .into_iter()
            .map(|(question, score)| ScoredQuestion {
                question,
                score,
                expert: self.doc_expert[&question],
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.question.cmp(&b.question))
        });
        hits.truncate(top_n);
        hits
    }
}

/// Build the text index (tokenized title + body) and the tag index (whole
/// tag strings) over expert-answered training questions.
pub fn build_indexes(dataset: &Dataset, labeling: &ExpertLabeling) -> (InvertedIndex, InvertedIndex) {
    let text = InvertedIndex::build(
        dataset,
        labeling,
        |q| {
            let mut terms = tokenize(&q.title);
            terms.extend(tokenize(&q.body));
            terms
        },
        "lowercase, split non-alphanumeric, min length 2, no stemming/stopwords",
    );
    let tag = InvertedIndex::build(dataset, labeling, |q| q.tags.clone(), "verbatim tag strings");
    (text, tag)
}

/// Interleave the two retrieval lists (tag first), map each question to its
/// expert, and keep the first occurrence of every expert.
pub fn merge_alternate(tag_list: &[ScoredQuestion], text_list: &[ScoredQuestion]) -> Vec<UserId> {
    let mut order: Vec<UserId> = Vec::new();
    let mut seen: std::collections::HashSet<UserId> = std::collections::HashSet::new();
    let mut push = |u: UserId, order: &mut Vec<UserId>| {
        if seen.insert(u) {
            order.push(u);
        }
    };
    let max_len = tag_list.len().max(text_list.len());
    for i in 0..max_len {
        if let Some(hit) = tag_list.get(i) {
            push(hit.expert, &mut order);
        }
        if let Some(hit) = text_list.get(i) {
            push(hit.expert, &mut order);
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::Timestamp;
    use crate::ingest::{Answer, Question, UserRecord};
    use proptest::prelude::*;

    fn sq(question: i64, score: f64, expert: i64) -> ScoredQuestion {
        ScoredQuestion { question: PostId(question), score, expert: UserId(expert) }
    }

    fn toy_dataset() -> (Dataset, ExpertLabeling) {
        // Three questions; users 1 and 2 answer, only user 1 is an expert.
        let mk_q = |id: i64, title: &str, body: &str, tags: &[&str], answerer: i64| Question {
            id: PostId(id),
            asker: UserId(100),
            created_at: Timestamp(id * 10),
            title: title.to_string(),
            body: body.to_string(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            accepted_answer_id: PostId(id + 500),
            accepted_answerer: UserId(answerer),
        };
        let questions = vec![
            mk_q(1, "borrow checker error", "lifetime puzzle in rust", &["rust"], 1),
            mk_q(2, "index out of bounds", "panic on slice access", &["rust", "debug"], 2),
            mk_q(3, "", "graph traversal order", &["graphs"], 1),
        ];
        let mut answers = BTreeMap::new();
        for q in &questions {
            answers.insert(
                q.id,
                vec![Answer {
                    id: q.accepted_answer_id,
                    question_id: q.id,
                    owner: q.accepted_answerer,
                    created_at: Timestamp(q.id.0 * 10 + 1),
                }],
            );
        }
        let users: BTreeMap<UserId, UserRecord> = [1, 2, 100]
            .into_iter()
            .map(|u| (UserId(u), UserRecord { id: UserId(u), reputation: 1 }))
            .collect();
        let dataset = Dataset { train_questions: questions, test_questions: vec![], answers, users };
        let labeling = ExpertLabeling {
            candidates: vec![UserId(1)],
            experts: vec![UserId(1)],
            min_accepted: 1,
            mean_ratio: 0.0,
            ratios: BTreeMap::new(),
        };
        (dataset, labeling)
    }

    #[test]
    fn indexes_contain_only_expert_answered_questions() {
        let (ds, lab) = toy_dataset();
        let (text, tag) = build_indexes(&ds, &lab);
        assert_eq!(text.doc_count, 2);
        assert_eq!(tag.doc_count, 2);
        assert!(!text.doc_expert.contains_key(&PostId(2)));
        // Empty title still indexes from the other field.
        assert!(text.doc_lengths[&PostId(3)] > 0);
    }

    #[test]
    fn single_doc_bm25_matches_hand_formula() {
        let (ds, lab) = toy_dataset();
        let (_, tag) = build_indexes(&ds, &lab);
        // TagIndex doc for question 3 is ["graphs"]; query that term.
        let hits = tag.query(&["graphs".to_string()], 10);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].question, PostId(3));
        let n_docs = 2.0;
        let idf = ((n_docs - 1.0 + 0.5) / (1.0 + 0.5) + 1.0f64).ln();
        let tf = 1.0;
        let len = 1.0;
        let avg = 1.0; // both tag docs have one tag
        let expected = idf * tf * (1.2 + 1.0) / (tf + 1.2 * (1.0 - 0.75 + 0.75 * len / avg));
        assert!((hits[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn no_matching_terms_returns_empty() {
        let (ds, lab) = toy_dataset();
        let (text, _) = build_indexes(&ds, &lab);
        assert!(text.query(&["quantum".to_string()], 10).is_empty());
    }

    #[test]
    fn top_n_truncates_to_argmax() {
        let (ds, lab) = toy_dataset();
        let (text, _) = build_indexes(&ds, &lab);
        let q = vec!["borrow".to_string(), "graph".to_string(), "rust".to_string()];
        let all = text.query(&q, 10);
        let top = text.query(&q, 1);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].question, all[0].question);
    }

    #[test]
    fn rebuild_is_identical() {
        let (ds, lab) = toy_dataset();
        let (t1, g1) = build_indexes(&ds, &lab);
        let (t2, g2) = build_indexes(&ds, &lab);
        assert_eq!(
            serde_json::to_string(&(&t1, &g1)).unwrap(),
            serde_json::to_string(&(&t2, &g2)).unwrap()
        );
    }

    #[test]
    fn merge_interleaves_and_dedupes() {
        let tag = vec![sq(10, 3.0, 1), sq(11, 2.0, 2)]; // experts [A, B]
        let text = vec![sq(12, 9.0, 3), sq(13, 8.0, 1)]; // experts [C, A]
        let merged = merge_alternate(&tag, &text);
        assert_eq!(merged, vec![UserId(1), UserId(3), UserId(2)]);
    }

    #[test]
    fn merge_with_one_empty_list() {
        let text = vec![sq(1, 3.0, 5), sq(2, 2.0, 6), sq(3, 1.0, 5)];
        assert_eq!(merge_alternate(&[], &text), vec![UserId(5), UserId(6)]);
        assert_eq!(merge_alternate(&text, &[]), vec![UserId(5), UserId(6)]);
    }

    #[test]
    fn merge_identical_lists_is_identity() {
        let l = vec![sq(1, 3.0, 1), sq(2, 2.0, 2), sq(3, 1.0, 3)];
        assert_eq!(merge_alternate(&l, &l), vec![UserId(1), UserId(2), UserId(3)]);
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Borrow-checker's rules, v2!"), vec!["borrow", "checker", "rules", "v2"]);
        assert!(tokenize("a b c").is_empty()); // single chars dropped
    }

    proptest! {
        /// Every expert from either list appears exactly once, in the order a
        /// direct transcription of the interleave rule produces.
        #[test]
        fn merge_matches_interleave_oracle(
            tag_experts in proptest::collection::vec(0i64..8, 0..12),
            text_experts in proptest::collection::vec(0i64..8, 0..12),
        ) {
            let tag: Vec<ScoredQuestion> = tag_experts
                .iter()
                .enumerate()
                .map(|(i, &e)| sq(i as i64, 100.0 - i as f64, e))
                .collect();
            let text: Vec<ScoredQuestion> = text_experts
                .iter()
                .enumerate()
                .map(|(i, &e)| sq(100 + i as i64, 100.0 - i as f64, e))
                .collect();
            let merged = merge_alternate(&tag, &text);

            let mut unique: Vec<UserId> = merged.clone();
            unique.sort();
            unique.dedup();
            prop_assert_eq!(unique.len(), merged.len());

            // Oracle: write out the alternating sequence, then keep first
            // occurrences.
            let mut sequence: Vec<i64> = Vec::new();
            for i in 0..tag_experts.len().max(text_experts.len()) {
                if let Some(&e) = tag_experts.get(i) { sequence.push(e); }
                if let Some(&e) = text_experts.get(i) { sequence.push(e); }
            }
            let mut expected: Vec<UserId> = Vec::new();
            for e in sequence {
                if !expected.contains(&UserId(e)) {
                    expected.push(UserId(e));
                }
            }
            prop_assert_eq!(merged, expected);
        }
    }
}
