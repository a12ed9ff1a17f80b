//! Dump ingestion: raw post records, cleaning rules, and the chronological
//! train/test split.
//!
//! Cleaning keeps closed questions only (an accepted answer must be present
//! in the data), drops self-answered questions, and attributes every retained
//! answer to a user record — synthesizing a reputation-0 record when the
//! owner is absent from the users file.

pub mod xml;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{PostId, Timestamp, UserId};

pub use xml::{parse_dump, ParseStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PostType {
    Question,
    Answer,
}

/// One well-formed row of `Posts.xml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: PostId,
    pub post_type: PostType,
    pub accepted_answer_id: Option<PostId>,
    pub parent_id: Option<PostId>,
    pub owner_user_id: Option<UserId>,
    pub creation_date: Timestamp,
    pub tags: Vec<String>,
    pub title: String,
    pub body: String,
    pub score: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub id: UserId,
    pub reputation: u64,
}

/// A retained, closed question with plain-text title/body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: PostId,
    pub asker: UserId,
    pub created_at: Timestamp,
    pub title: String,
    pub body: String,
    pub tags: Vec<String>,
    pub accepted_answer_id: PostId,
    pub accepted_answerer: UserId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub id: PostId,
    pub question_id: PostId,
    pub owner: UserId,
    pub created_at: Timestamp,
}

/// Half-open time window `[start, end)` applied to question creation dates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub start: Option<Timestamp>,
    pub end: Option<Timestamp>,
}

impl Period {
    pub fn all() -> Self {
        Period::default()
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start.map_or(true, |s| t >= s) && self.end.map_or(true, |e| t < e)
    }
}

/// The cleaned, chronologically split corpus. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub train_questions: Vec<Question>,
    pub test_questions: Vec<Question>,
    /// Question id -> its answers, ordered by (creation date, id).
    pub answers: BTreeMap<PostId, Vec<Answer>>,
    pub users: BTreeMap<UserId, UserRecord>,
}

impl Dataset {
    pub fn question_count(&self) -> usize {
        self.train_questions.len() + self.test_questions.len()
    }

    /// All retained questions in chronological order.
    pub fn all_questions(&self) -> impl Iterator<Item = &Question> {
        self.train_questions.iter().chain(self.test_questions.iter())
    }
}

/// Apply the cleaning rules and split chronologically.
///
/// A question is retained iff it falls in `period`, carries an accepted
/// answer whose row is present, and its asker differs from the accepted
/// answerer. Retained answers are exactly those pointing at a retained
/// question. Ties in creation date are broken by post id so the split is
/// deterministic.
pub fn clean_and_split(
    posts: &[RawPost],
    users: &[UserRecord],
    period: Period,
    split_ratio: f64,
) -> Result<Dataset> {
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(Error::Config(format!(
            "split_ratio must lie in (0,1), got {split_ratio}"
        )));
    }

    let mut answer_rows: HashMap<PostId, &RawPost> = HashMap::new();
    for p in posts {
        if p.post_type == PostType::Answer {
            answer_rows.insert(p.id, p);
        }
    }

    let mut questions: Vec<Question> = Vec::new();
    for p in posts {
        if p.post_type != PostType::Question || !period.contains(p.creation_date) {
            continue;
        }
        let (Some(asker), Some(acc_id)) = (p.owner_user_id, p.accepted_answer_id) else {
            continue;
        };
        let Some(acc_row) = answer_rows.get(&acc_id) else {
            continue; // accepted answer row absent from the dump slice
        };
        if acc_row.parent_id != Some(p.id) {
            continue;
        }
        let Some(acc_owner) = acc_row.owner_user_id else {
            continue;
        };
        if acc_owner == asker {
            continue; // self-answered
        }
        questions.push(Question {
            id: p.id,
            asker,
            created_at: p.creation_date,
            title: strip_html(&p.title),
            body: strip_html(&p.body),
            tags: p.tags.clone(),
            accepted_answer_id: acc_id,
            accepted_answerer: acc_owner,
        });
    }

    if questions.is_empty() {
        return Err(Error::EmptyDataset(
            "no question survived cleaning".to_string(),
        ));
    }

    questions.sort_by_key(|q| (q.created_at, q.id));
    let retained_ids: HashSet<PostId> = questions.iter().map(|q| q.id).collect();

    let mut answers: BTreeMap<PostId, Vec<Answer>> = BTreeMap::new();
    for p in posts {
        if p.post_type != PostType::Answer {
            continue;
        }
        let (Some(parent), Some(owner)) = (p.parent_id, p.owner_user_id) else {
            continue;
        };
        if !retained_ids.contains(&parent) {
            continue;
        }
        answers.entry(parent).or_default().push(Answer {
            id: p.id,
            question_id: parent,
            owner,
            created_at: p.creation_date,
        });
    }
    for list in answers.values_mut() {
        list.sort_by_key(|a| (a.created_at, a.id));
    }

    let mut user_map: BTreeMap<UserId, UserRecord> = BTreeMap::new();
    for u in users {
        user_map.insert(u.id, *u);
    }
    // Answer owners missing from the users file keep their answers; they get
    // a synthetic record rather than shrinking the answerer pool.
    for list in answers.values() {
        for a in list {
            user_map
                .entry(a.owner)
                .or_insert(UserRecord { id: a.owner, reputation: 0 });
        }
    }

    let n = questions.len();
    let train_len = ((n as f64) * split_ratio).round() as usize;
    let train_len = train_len.min(n);
    let test_questions = questions.split_off(train_len);

    Ok(Dataset {
        train_questions: questions,
        test_questions,
        answers,
        users: user_map,
    })
}

/// Strip HTML markup down to plain text and decode the common entities.
pub fn strip_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '<' => {
                // Drop everything to the matching '>' (or the end).
                for t in chars.by_ref() {
                    if t == '>' {
                        break;
                    }
                }
                out.push(' ');
            }
            '&' => {
                let mut entity = String::new();
                let mut closed = false;
                while let Some(&t) = chars.peek() {
                    if t == ';' {
                        chars.next();
                        closed = true;
                        break;
                    }
                    if entity.len() >= 8 || t == '&' || t == '<' || t.is_whitespace() {
                        break;
                    }
                    entity.push(t);
                    chars.next();
                }
                if closed {
                    match entity.as_str() {
                        "lt" => out.push('<'),
                        "gt" => out.push('>'),
                        "amp" => out.push('&'),
                        "quot" => out.push('"'),
                        "apos" | "#39" => out.push('\''),
                        "nbsp" => out.push(' '),
                        _ => {
                            // Unknown entity: keep the raw text.
                            out.push('&');
                            out.push_str(&entity);
                            out.push(';');
                        }
                    }
                } else {
                    out.push('&');
                    out.push_str(&entity);
                }
            }
            _ => out.push(c),
        }
    }
    out
}
