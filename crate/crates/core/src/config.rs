//! Pipeline configuration: every knob, its default, and its documented range.
//!
//! A config can be loaded from a flat `key = value` text file; command-line
//! flags overwrite file values through the same key names. The full config
//! is embedded in every artifact for provenance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{col, FEATURE_COUNT};
use crate::ranker::{RankerKind, TuningRanges};
use crate::selection::MethodSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphMode {
    MultiLayer,
    SingleLayer,
}

/// Feature subsets for the method-restricted configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    Full,
    NetworkOnly,
    ContentOnly,
}

impl FeatureSet {
    pub fn active_features(self) -> Vec<usize> {
        let statics = [
            col::REPUTATION,
            col::ANSWERS,
            col::ACCEPTED_ANSWERS,
            col::RATIO,
            col::AVG_ACTIVITY,
            col::STD_ACTIVITY,
        ];
        match self {
            FeatureSet::Full => (0..FEATURE_COUNT).collect(),
            FeatureSet::NetworkOnly => {
                let mut v = statics.to_vec();
                v.extend([
                    col::LAYER_COUNT,
                    col::QUERY_KNOWLEDGE,
                    col::VISIT_COUNT_NETWORK,
                    col::STEPS_NETWORK,
                    col::BETWEENNESS_POS,
                    col::BETWEENNESS_SCORE,
                    col::EIGENVECTOR,
                    col::PAGERANK,
                    col::CLOSENESS,
                    col::DEGREE,
                    col::AVG_WEIGHTS,
                ]);
                v.sort_unstable();
                v
            }
            FeatureSet::ContentOnly => {
                let mut v = statics.to_vec();
                v.extend([
                    col::LAYER_COUNT,
                    col::QUERY_KNOWLEDGE,
                    col::VISIT_COUNT_CONTENT,
                    col::STEPS_CONTENT,
                    col::SCORE_INDEX_TAG,
                    col::SCORE_INDEX_TEXT,
                    col::FREQUENCY_INDEX_TAG,
                    col::FREQUENCY_INDEX_TEXT,
                    col::DEGREE,
                    col::AVG_WEIGHTS,
                ]);
                v.sort_unstable();
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    // Topic identification.
    pub lambda: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub cluster_seed: u64,
    // Graph construction.
    pub epsilon: f64,
    pub delta: f64,
    pub expert_percentile: f64,
    pub graph_mode: GraphMode,
    // Retrieval.
    pub top_n: usize,
    // Selection.
    pub alpha: f64,
    pub walks: usize,
    pub max_steps: usize,
    pub rng_seed: u64,
    pub methods: MethodSet,
    pub exploration: bool,
    // Ranking.
    pub ranker: RankerKind,
    pub feature_set: FeatureSet,
    pub zeta: usize,
    pub split_ratio: f64,
    pub tuner: TuningRanges,
    pub tuner_trials: usize,
    pub tuner_seed: u64,
    pub interaction_pairs: usize,
    pub linear_weights: Option<Vec<f64>>,
    pub literal_query_knowledge: bool,
    // Evaluation.
    pub subsample_size: usize,
    pub subsample_seed: u64,
    // Execution.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            lambda: 10,
            k_min: 2,
            k_max: 10,
            cluster_seed: 42,
            epsilon: 90.0,
            delta: 0.5,
            expert_percentile: 95.0,
            graph_mode: GraphMode::MultiLayer,
            top_n: 1000,
            alpha: 0.001,
            walks: 5,
            max_steps: 10,
            rng_seed: 42,
            methods: MethodSet::both(),
            exploration: true,
            ranker: RankerKind::LambdaMart,
            feature_set: FeatureSet::Full,
            zeta: 50_000,
            split_ratio: 0.80,
            tuner: TuningRanges::default(),
            tuner_trials: 10,
            tuner_seed: 42,
            interaction_pairs: 10,
            linear_weights: None,
            literal_query_knowledge: false,
            subsample_size: 20,
            subsample_seed: 42,
            threads: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.lambda == 0 {
            return fail("lambda must be at least 1".into());
        }
        if self.k_min < 1 || self.k_min > self.k_max {
            return fail(format!("k range [{}, {}] is invalid", self.k_min, self.k_max));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 100.0) {
            return fail(format!("epsilon percentile {} outside (0, 100)", self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return fail(format!("delta {} outside [0, 1]", self.delta));
        }
        if !(self.expert_percentile > 0.0 && self.expert_percentile < 100.0) {
            return fail(format!(
                "expert percentile {} outside (0, 100)",
                self.expert_percentile
            ));
        }
        if self.top_n == 0 {
            return fail("top-n must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.max_steps == 0 {
            return fail("max-steps must be at least 1".into());
        }
        if self.zeta == 0 {
            return fail("zeta must be positive".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return fail(format!("split ratio {} outside (0, 1)", self.split_ratio));
        }
        if self.tuner_trials == 0 {
            return fail("tuner trials must be at least 1".into());
        }
        if self.subsample_size == 0 {
            return fail("subsample size must be at least 1".into());
        }
        self.tuner.validate().map_err(Error::Config)?;
        if self.ranker == RankerKind::Linear {
            match &self.linear_weights {
                None => return fail("linear ranker needs linear-weights".into()),
                Some(w) if w.len() != FEATURE_COUNT => {
                    return fail(format!(
                        "linear-weights needs {FEATURE_COUNT} values, got {}",
                        w.len()
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Apply one `key = value` override. Keys match the CLI flag names.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = |what: &str| Error::Config(format!("invalid {what}: {v}"));
        match key.trim() {
            "lambda" => self.lambda = v.parse().map_err(|_| bad("lambda"))?,
            "k-range" => {
                let (lo, hi) = v.split_once(',').ok_or_else(|| bad("k-range"))?;
                self.k_min = lo.trim().parse().map_err(|_| bad("k-range"))?;
                self.k_max = hi.trim().parse().map_err(|_| bad("k-range"))?;
            }
            "seed" | "cluster-seed" => {
                self.cluster_seed = v.parse().map_err(|_| bad("seed"))?
            }
            "epsilon" => self.epsilon = v.parse().map_err(|_| bad("epsilon"))?,
            "delta" => self.delta = v.parse().map_err(|_| bad("delta"))?,
            "expert-percentile" => {
                self.expert_percentile = v.parse().map_err(|_| bad("expert-percentile"))?
            }
            "graph-mode" => {
                self.graph_mode = match v {
                    "multi-layer" => GraphMode::MultiLayer,
                    "single-layer" => GraphMode::SingleLayer,
                    _ => return Err(bad("graph-mode (multi-layer|single-layer)")),
                }
            }
            "top-n" => self.top_n = v.parse().map_err(|_| bad("top-n"))?,
            "alpha" => self.alpha = v.parse().map_err(|_| bad("alpha"))?,
            "walks" => self.walks = v.parse().map_err(|_| bad("walks"))?,
            "max-steps" => self.max_steps = v.parse().map_err(|_| bad("max-steps"))?,
            "rng-seed" => self.rng_seed = v.parse().map_err(|_| bad("rng-seed"))?,
            "methods" => {
                self.methods = MethodSet::parse(v).ok_or_else(|| bad("methods"))?
            }
            "exploration" => {
                self.exploration = match v {
                    "on" | "true" => true,
                    "off" | "false" => false,
                    _ => return Err(bad("exploration (on|off)")),
                }
            }
            "ranker" => {
                self.ranker = match v {
                    "lambdamart" => RankerKind::LambdaMart,
                    "interpretable" => RankerKind::Interpretable,
                    "linear" => RankerKind::Linear,
                    _ => return Err(bad("ranker (lambdamart|interpretable|linear)")),
                }
            }
            "feature-set" => {
                self.feature_set = match v {
                    "full" => FeatureSet::Full,
                    "network-only" => FeatureSet::NetworkOnly,
                    "content-only" => FeatureSet::ContentOnly,
                    _ => return Err(bad("feature-set (full|network-only|content-only)")),
                }
            }
            "zeta" => self.zeta = v.parse().map_err(|_| bad("zeta"))?,
            "split-ratio" => self.split_ratio = v.parse().map_err(|_| bad("split-ratio"))?,
            "tuner-trials" => self.tuner_trials = v.parse().map_err(|_| bad("tuner-trials"))?,
            "tuner-seed" => self.tuner_seed = v.parse().map_err(|_| bad("tuner-seed"))?,
            "interaction-pairs" => {
                self.interaction_pairs = v.parse().map_err(|_| bad("interaction-pairs"))?
            }
            "linear-weights" => {
                let weights: std::result::Result<Vec<f64>, _> =
                    v.split(',').map(|x| x.trim().parse()).collect();
                self.linear_weights = Some(weights.map_err(|_| bad("linear-weights"))?);
            }
            "literal-query-knowledge" => {
                self.literal_query_knowledge = match v {
                    "on" | "true" => true,
                    "off" | "false" => false,
                    _ => return Err(bad("literal-query-knowledge (on|off)")),
                }
            }
            "subsample-size" => {
                self.subsample_size = v.parse().map_err(|_| bad("subsample-size"))?
            }
            "subsample-seed" => {
                self.subsample_seed = v.parse().map_err(|_| bad("subsample-seed"))?
            }
            "threads" => self.threads = v.parse().map_err(|_| bad("threads"))?,
            other => return Err(Error::Config(format!("unknown config key: {other}"))),
        }
        Ok(())
    }

    /// Parse a flat `key = value` file; `#` starts a comment.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {} is not key = value", lineno + 1))
            })?;
            self.apply_kv(key, value)?;
        }
        Ok(())
    }

    pub fn active_features(&self) -> Vec<usize> {
        self.feature_set.active_features()
    }

    pub fn selection_config(&self) -> crate::selection::SelectionConfig {
        crate::selection::SelectionConfig {
            alpha: self.alpha,
            walk: crate::selection::WalkConfig {
                walks_per_seed: self.walks,
                max_steps: self.max_steps,
                rng_seed: self.rng_seed,
            },
            methods: self.methods,
            exploration: self.exploration,
        }
    }
}

/// The named configurations of the component study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    /// Betweenness ordering used directly as the final ranking.
    Bc,
    /// Merged retrieval ordering used directly as the final ranking.
    Bm25,
    /// Network method only, network feature subset.
    Nb,
    /// Content method only, content feature subset.
    Cb,
    /// Single-layer graph; everything else unchanged.
    Sl,
    /// No random-walk exploration.
    NoRw,
    /// Interpretable constrained ranker.
    IlMart,
    /// The complete pipeline.
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 8] = [
        AblationMode::Bc,
        AblationMode::Bm25,
        AblationMode::Nb,
        AblationMode::Cb,
        AblationMode::Sl,
        AblationMode::NoRw,
        AblationMode::IlMart,
        AblationMode::Full,
    ];

    pub fn parse(s: &str) -> Option<AblationMode> {
        Some(match s.trim().to_lowercase().as_str() {
            "bc" => AblationMode::Bc,
            "bm25" => AblationMode::Bm25,
            "nb" => AblationMode::Nb,
            "cb" => AblationMode::Cb,
            "sl" => AblationMode::Sl,
            "norw" => AblationMode::NoRw,
            "ilmart" => AblationMode::IlMart,
            "full" => AblationMode::Full,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationMode::Bc => "BC",
            AblationMode::Bm25 => "BM25",
            AblationMode::Nb => "NB",
            AblationMode::Cb => "CB",
            AblationMode::Sl => "SL",
            AblationMode::NoRw => "NoRW",
            AblationMode::IlMart => "IlMart",
            AblationMode::Full => "full",
        }
    }

    /// Whether this mode ranks with a trained model at all.
    pub fn needs_model(self) -> bool {
        !matches!(self, AblationMode::Bc | AblationMode::Bm25)
    }

    /// Transform the base configuration into this mode's configuration.
    pub fn configure(self, base: &PipelineConfig) -> PipelineConfig {
        use crate::selection::{Method, MethodSet};
        let mut cfg = base.clone();
        match self {
            AblationMode::Bc | AblationMode::Bm25 | AblationMode::Full => {}
            AblationMode::Nb => {
                cfg.methods = MethodSet::only(Method::Network);
                cfg.feature_set = FeatureSet::NetworkOnly;
            }
            AblationMode::Cb => {
                cfg.methods = MethodSet::only(Method::Content);
                cfg.feature_set = FeatureSet::ContentOnly;
            }
            AblationMode::Sl => cfg.graph_mode = GraphMode::SingleLayer,
            AblationMode::NoRw => cfg.exploration = false,
            AblationMode::IlMart => cfg.ranker = RankerKind::Interpretable,
        }
        cfg
    }
}
