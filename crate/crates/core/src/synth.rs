//! Synthetic CQA corpus generator with planted topical experts.
//!
//! Questions come from disjoint topics. Each topic has one hub tag plus
//! satellite tags, a word pool for templated text, one dominant expert whose
//! acceptance share grows over time, and satellite-specialized secondary
//! experts. Cross-topic generalists, high-volume low-acceptance answerers,
//! and a long tail of light answerers fill out the population so percentile
//! labeling and the acceptance-ratio filter both have something to cut.
//!
//! The generator can emit the corpus directly as raw records or as
//! `Posts.xml` / `Users.xml` files in the public archive's row format.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ids::{PostId, Timestamp, UserId};
use crate::ingest::{PostType, RawPost, UserRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub questions: usize,
    pub topics: usize,
    pub satellites_per_topic: usize,
    pub secondaries_per_topic: usize,
    pub generalists: usize,
    pub prolific_low_quality: usize,
    pub mediocre: usize,
    pub light_answerers: usize,
    pub askers: usize,
    pub seed: u64,
    /// Fraction of the timeline in the "early" regime where secondary
    /// experts win most accepted answers; afterwards the dominant expert
    /// takes over. This keeps single-shot retrieval order (driven by the
    /// whole history) weaker than aggregate evidence.
    pub early_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            questions: 2000,
            topics: 5,
            satellites_per_topic: 3,
            secondaries_per_topic: 3,
            generalists: 4,
            prolific_low_quality: 2,
            mediocre: 2,
            light_answerers: 600,
            askers: 500,
            seed: 42,
            early_fraction: 0.55,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    /// Dominant expert per topic.
    pub dominant: Vec<UserId>,
    /// All planted experts (dominant + secondaries).
    pub experts: Vec<UserId>,
    pub topic_of_question: BTreeMap<PostId, usize>,
    pub hub_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub posts: Vec<RawPost>,
    pub users: Vec<UserRecord>,
    pub truth: PlantedTruth,
}

const TOPIC_BASES: [&str; 10] = [
    "compilers", "kernels", "databases", "rendering", "ciphers", "routing", "tensors", "parsers",
    "schedulers", "allocators",
];
const SATELLITE_SUFFIXES: [&str; 6] = ["io", "api", "perf", "debug", "config", "tests"];
const TOPIC_WORDS: [&str; 18] = [
    "crash", "flag", "cache", "loop", "buffer", "thread", "merge", "probe", "stack", "queue",
    "handle", "branch", "symbol", "opcode", "frame", "batch", "retry", "limit",
];
const FILLER_WORDS: [&str; 12] = [
    "unexpected", "behavior", "minimal", "example", "fails", "during", "release", "build",
    "version", "after", "upgrade", "reproduce",
];

struct Population {
    dominant: Vec<UserId>,
    secondaries: Vec<Vec<UserId>>,
    generalists: Vec<UserId>,
    prolific: Vec<UserId>,
    mediocre: Vec<UserId>,
    light: Vec<UserId>,
    askers: Vec<UserId>,
}

fn population(cfg: &SynthConfig) -> Population {
    // Secondary experts take the lowest ids: on fully tied betweenness the
    // centrality ordering falls back to ids and must not hand the dominant
    // expert a free first place.
    Population {
        secondaries: (0..cfg.topics)
            .map(|t| {
                (0..cfg.secondaries_per_topic)
                    .map(|j| UserId(200 + (t * 10 + j) as i64))
                    .collect()
            })
            .collect(),
        generalists: (0..cfg.generalists).map(|g| UserId(300 + g as i64)).collect(),
        prolific: (0..cfg.prolific_low_quality).map(|v| UserId(400 + v as i64)).collect(),
        mediocre: (0..cfg.mediocre).map(|v| UserId(450 + v as i64)).collect(),
        light: (0..cfg.light_answerers).map(|i| UserId(1000 + i as i64)).collect(),
        dominant: (0..cfg.topics).map(|t| UserId(5000 + t as i64)).collect(),
        askers: (0..cfg.askers).map(|i| UserId(10_000 + i as i64)).collect(),
    }
}

fn topic_tags(cfg: &SynthConfig, topic: usize) -> (String, Vec<String>) {
    let base = TOPIC_BASES[topic % TOPIC_BASES.len()];
    let hub = if topic < TOPIC_BASES.len() { base.to_string() } else { format!("{base}{topic}") };
    let satellites = (0..cfg.satellites_per_topic)
        .map(|s| format!("{hub}-{}", SATELLITE_SUFFIXES[s % SATELLITE_SUFFIXES.len()]))
        .collect();
    (hub, satellites)
}

fn topic_word(topic: usize, rng: &mut impl Rng) -> String {
    let base = TOPIC_BASES[topic % TOPIC_BASES.len()];
    format!("{base}{}", TOPIC_WORDS[rng.gen_range(0..TOPIC_WORDS.len())])
}

fn pick<T: Copy>(items: &[T], rng: &mut impl Rng) -> T {
    items[rng.gen_range(0..items.len())]
}

/// Which planted role wins the accepted answer.
#[derive(Clone, Copy, PartialEq)]
enum Role {
    Dominant,
    HomeSecondary,
    /// A secondary expert of the previous topic answering here, so experts
    /// span two layers and layers interconnect.
    VisitingSecondary,
    Generalist,
    Prolific,
    Mediocre,
    Light,
}

fn accepted_role(early: bool, rng: &mut impl Rng) -> Role {
    let draw: f64 = rng.gen();
    // Cumulative cuts; the remainder goes to the light tail.
    let cuts: [(Role, f64); 6] = if early {
        [
            (Role::Dominant, 0.16),
            (Role::HomeSecondary, 0.50),
            (Role::VisitingSecondary, 0.59),
            (Role::Generalist, 0.63),
            (Role::Prolific, 0.68),
            (Role::Mediocre, 0.72),
        ]
    } else {
        [
            (Role::Dominant, 0.66),
            (Role::HomeSecondary, 0.76),
            (Role::VisitingSecondary, 0.79),
            (Role::Generalist, 0.81),
            (Role::Prolific, 0.85),
            (Role::Mediocre, 0.90),
        ]
    };
    for (role, cut) in cuts {
        if draw < cut {
            return role;
        }
    }
    Role::Light
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    assert!(cfg.topics >= 2 && cfg.questions >= 10);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pop = population(cfg);

    let mut posts: Vec<RawPost> = Vec::with_capacity(cfg.questions * 4);
    let mut truth = PlantedTruth {
        dominant: pop.dominant.clone(),
        experts: {
            let mut e = pop.dominant.clone();
            e.extend(pop.secondaries.iter().flatten().copied());
            e.sort();
            e
        },
        topic_of_question: BTreeMap::new(),
        hub_tags: (0..cfg.topics).map(|t| topic_tags(cfg, t).0).collect(),
    };

    let base_time = Timestamp::parse("2020-12-01T00:00:00").unwrap().0;
    let mut next_id: i64 = 1;
    let early_cutoff = (cfg.questions as f64 * cfg.early_fraction) as usize;
    // Light accepted answers rotate through the pool so the percentile
    // labeling sees a broad population of one-hit answerers.
    let mut light_cursor = 0usize;

    for i in 0..cfg.questions {
        let topic = i % cfg.topics;
        let early = i < early_cutoff;
        let (hub, satellites) = topic_tags(cfg, topic);
        let mut tags = vec![hub.clone()];
        let extra = 1 + rng.gen_range(0..2usize.min(satellites.len()));
        let mut sat_pool: Vec<usize> = (0..satellites.len()).collect();
        for _ in 0..extra.min(sat_pool.len()) {
            let s = sat_pool.swap_remove(rng.gen_range(0..sat_pool.len()));
            tags.push(satellites[s].clone());
        }

        let asker = pick(&pop.askers, &mut rng);
        let accepted_by = match accepted_role(early, &mut rng) {
            Role::Dominant => pop.dominant[topic],
            Role::HomeSecondary => {
                // Prefer the specialist of a satellite carried by the question.
                let idx = tags
                    .get(1)
                    .and_then(|t| satellites.iter().position(|s| s == t))
                    .unwrap_or(0)
                    % pop.secondaries[topic].len();
                pop.secondaries[topic][idx]
            }
            Role::VisitingSecondary => {
                let neighbor = (topic + 1) % cfg.topics;
                pick(&pop.secondaries[neighbor], &mut rng)
            }
            Role::Generalist => pick(&pop.generalists, &mut rng),
            Role::Prolific => pick(&pop.prolific, &mut rng),
            Role::Mediocre => pick(&pop.mediocre, &mut rng),
            Role::Light => {
                let user = pop.light[light_cursor % pop.light.len()];
                light_cursor += 1;
                user
            }
        };

        let created = Timestamp(base_time + (i as i64) * 90_000);
        let question_id = PostId(next_id);
        next_id += 1;

        let title_words: Vec<String> = (0..rng.gen_range(4..8))
            .map(|j| {
                if j % 2 == 0 {
                    topic_word(topic, &mut rng)
                } else {
                    pick(&FILLER_WORDS, &mut rng).to_string()
                }
            })
            .collect();
        let body_words: Vec<String> = (0..rng.gen_range(15..30))
            .map(|j| {
                if j % 3 == 0 {
                    pick(&FILLER_WORDS, &mut rng).to_string()
                } else {
                    topic_word(topic, &mut rng)
                }
            })
            .collect();

        // Accepted answer first, then distractor answers.
        let accepted_id = PostId(next_id);
        next_id += 1;
        let mut answerers = vec![accepted_by];
        let distractors = rng.gen_range(1..=3usize);
        for _ in 0..distractors {
            let draw: f64 = rng.gen();
            let candidate = if draw < 0.52 {
                pick(&pop.light, &mut rng)
            } else if draw < 0.70 {
                pick(&pop.generalists, &mut rng)
            } else if draw < 0.90 {
                pick(&pop.prolific, &mut rng)
            } else if draw < 0.95 {
                pick(&pop.mediocre, &mut rng)
            } else if draw < 0.98 {
                pick(&pop.secondaries[topic], &mut rng)
            } else {
                pop.dominant[topic]
            };
            if candidate != asker && !answerers.contains(&candidate) {
                answerers.push(candidate);
            }
        }

        posts.push(RawPost {
            id: question_id,
            post_type: PostType::Question,
            accepted_answer_id: Some(accepted_id),
            parent_id: None,
            owner_user_id: Some(asker),
            creation_date: created,
            tags: tags.clone(),
            title: title_words.join(" "),
            body: format!("<p>{}</p>", body_words.join(" ")),
            score: rng.gen_range(0..25),
        });
        truth.topic_of_question.insert(question_id, topic);

        for (j, &owner) in answerers.iter().enumerate() {
            let answer_id = if j == 0 {
                accepted_id
            } else {
                let id = PostId(next_id);
                next_id += 1;
                id
            };
            posts.push(RawPost {
                id: answer_id,
                post_type: PostType::Answer,
                accepted_answer_id: None,
                parent_id: Some(question_id),
                owner_user_id: Some(owner),
                creation_date: Timestamp(created.0 + 10_000 + (j as i64) * 7_000),
                tags: Vec::new(),
                title: String::new(),
                body: format!("<p>try the {} {}</p>", topic_word(topic, &mut rng), pick(&FILLER_WORDS, &mut rng)),
                score: rng.gen_range(0..10),
            });
        }
    }

    let mut users: Vec<UserRecord> = Vec::new();
    let mut add = |ids: &[UserId], base_rep: u64, spread: u64, rng: &mut ChaCha8Rng| {
        for &id in ids {
            users.push(UserRecord { id, reputation: base_rep + rng.gen_range(0..=spread) });
        }
    };
    add(&pop.dominant, 20_000, 5_000, &mut rng);
    for sec in &pop.secondaries {
        add(sec, 8_000, 2_000, &mut rng);
    }
    add(&pop.generalists, 3_000, 1_000, &mut rng);
    add(&pop.prolific, 2_000, 500, &mut rng);
    add(&pop.mediocre, 1_500, 500, &mut rng);
    add(&pop.light, 50, 200, &mut rng);
    add(&pop.askers, 20, 80, &mut rng);
    users.sort_by_key(|u| u.id);

    SynthCorpus { posts, users, truth }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Write the corpus in the public archive's row format.
pub fn write_dump(corpus: &SynthCorpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut posts = std::io::BufWriter::new(std::fs::File::create(dir.join("Posts.xml"))?);
    writeln!(posts, "<?xml version=\"1.0\" encoding=\"utf-8\"?>")?;
    writeln!(posts, "<posts>")?;
    for p in &corpus.posts {
        let mut row = format!(
            "  <row Id=\"{}\" PostTypeId=\"{}\" CreationDate=\"{}\" Score=\"{}\"",
            p.id,
            match p.post_type {
                PostType::Question => 1,
                PostType::Answer => 2,
            },
            p.creation_date,
            p.score
        );
        if let Some(owner) = p.owner_user_id {
            row.push_str(&format!(" OwnerUserId=\"{owner}\""));
        }
        if let Some(acc) = p.accepted_answer_id {
            row.push_str(&format!(" AcceptedAnswerId=\"{acc}\""));
        }
        if let Some(parent) = p.parent_id {
            row.push_str(&format!(" ParentId=\"{parent}\""));
        }
        if p.post_type == PostType::Question {
            let tags: String = p.tags.iter().map(|t| format!("<{t}>")).collect();
            row.push_str(&format!(
                " Title=\"{}\" Tags=\"{}\"",
                escape_xml(&p.title),
                escape_xml(&tags)
            ));
        }
        row.push_str(&format!(" Body=\"{}\" />", escape_xml(&p.body)));
        writeln!(posts, "{row}")?;
    }
    writeln!(posts, "</posts>")?;
    posts.flush()?;

    let mut users = std::io::BufWriter::new(std::fs::File::create(dir.join("Users.xml"))?);
    writeln!(users, "<?xml version=\"1.0\" encoding=\"utf-8\"?>")?;
    writeln!(users, "<users>")?;
    for u in &corpus.users {
        writeln!(users, "  <row Id=\"{}\" Reputation=\"{}\" />", u.id, u.reputation)?;
    }
    writeln!(users, "</users>")?;
    users.flush()?;
    Ok(())
}
