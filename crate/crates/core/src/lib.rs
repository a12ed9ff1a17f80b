//! Topic-aware expert finding for community Q&A archives.
//!
//! The pipeline ingests a public archive dump, clusters question tags into
//! macro topics, builds one user-interaction graph per topic, selects
//! candidate answerers for a new question from both network centrality and
//! content similarity, extracts a 23-feature representation per candidate,
//! and ranks candidates with gradient-boosted learning-to-rank models
//! (including an interpretable constrained variant).

pub mod artifact;
pub mod config;
pub mod engine;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod ids;
pub mod ingest;
pub mod mlg;
pub mod pipeline;
pub mod ranker;
pub mod retrieval;
pub mod seeding;
pub mod selection;
pub mod synth;
pub mod topics;

pub use config::{AblationMode, FeatureSet, GraphMode, PipelineConfig};
pub use engine::{QueryEngine, QueryOutcome};
pub use error::{Error, Result};
pub use features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
pub use ids::{PostId, Timestamp, UserId};
pub use ingest::{clean_and_split, parse_dump, Dataset, Period, Question, RawPost, UserRecord};
pub use mlg::{ExpertLabeling, Layer, MultiLayerGraph};
pub use pipeline::{BuildArtifacts, Protocol, Workspace};
pub use ranker::{RankerKind, RankingModel};
pub use selection::{CandidateSet, Method, MethodSet};
pub use topics::TagClustering;
