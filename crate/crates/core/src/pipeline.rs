//! End-to-end orchestration over persisted artifacts.
//!
//! The in-memory functions (`build_artifacts`, `train_model`, `ablate`, ...)
//! carry the actual logic; the `run_*` functions wrap them with artifact
//! loading, lineage verification, and report writing for the CLI.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::{self, Artifact};
use crate::config::{AblationMode, GraphMode, PipelineConfig};
use crate::engine::QueryEngine;
use crate::error::{Error, Result};
use crate::eval::{
    self, paired_ttest_bonferroni, ProtocolOutcome, SubsamplePlan, TimingReport,
};
use crate::features::{FeatureRow, FEATURE_NAMES};
use crate::ids::UserId;
use crate::ingest::{self, Dataset, Period};
use crate::mlg::{self, MultiLayerGraph};
use crate::ranker::{
    build_training_set, rank_by_score, train_interpretable, train_lambdamart, tune,
    InterpretableParams, LambdaMartParams, LinearModel, RankerKind, RankingModel, TrainingSetReport,
    TrialReport,
};
use crate::retrieval::{build_indexes, InvertedIndex};
use crate::topics::{self, TagClustering};

pub const SCHEMA_DATASET: &str = "dataset";
pub const SCHEMA_CLUSTERING: &str = "clustering";
pub const SCHEMA_GRAPH: &str = "graph";
pub const SCHEMA_INDEXES: &str = "indexes";
pub const SCHEMA_MODEL: &str = "model";

/// File layout inside a working directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub dir: PathBuf,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Workspace { dir: dir.into() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.dir.join("dataset.json")
    }
    pub fn clustering(&self) -> PathBuf {
        self.dir.join("clustering.json")
    }
    pub fn graph(&self) -> PathBuf {
        self.dir.join("graph.json")
    }
    pub fn indexes(&self) -> PathBuf {
        self.dir.join("indexes.json")
    }
    pub fn model(&self) -> PathBuf {
        self.dir.join("model.json")
    }
    pub fn feature_matrix(&self) -> PathBuf {
        self.dir.join("features_train.csv")
    }
    pub fn report(&self, name: &str, ext: &str) -> PathBuf {
        self.dir.join("reports").join(format!("{name}.{ext}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexesPayload {
    pub text: InvertedIndex,
    pub tag: InvertedIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildArtifacts {
    pub clustering: TagClustering,
    pub mlg: MultiLayerGraph,
    pub text_index: InvertedIndex,
    pub tag_index: InvertedIndex,
}

/// Cluster tags, build the multi-layer graph, label experts, build indexes.
pub fn build_artifacts(dataset: &Dataset, cfg: &PipelineConfig) -> Result<BuildArtifacts> {
    cfg.validate()?;
    let vocab = topics::build_vocabulary(&dataset.train_questions, cfg.lambda)?;
    let clustering = match cfg.graph_mode {
        GraphMode::SingleLayer => TagClustering::single_layer(&vocab, cfg.cluster_seed),
        GraphMode::MultiLayer => {
            let matrix = topics::build_matrix(&vocab, &dataset.train_questions);
            topics::cluster(&matrix, (cfg.k_min, cfg.k_max), cfg.cluster_seed)?
        }
    };
    let mlg = mlg::build(dataset, &clustering, cfg.epsilon, cfg.delta, cfg.expert_percentile)?;
    if mlg.labeling.experts.is_empty() {
        return Err(Error::Config(
            "expert labeling is empty: every candidate shares one acceptance ratio".to_string(),
        ));
    }
    let (text_index, tag_index) = build_indexes(dataset, &mlg.labeling);
    Ok(BuildArtifacts { clustering, mlg, text_index, tag_index })
}

pub fn make_engine<'a>(
    dataset: &'a Dataset,
    build: &'a BuildArtifacts,
    cfg: &PipelineConfig,
) -> QueryEngine<'a> {
    QueryEngine::new(
        dataset,
        &build.mlg,
        &build.text_index,
        &build.tag_index,
        cfg.selection_config(),
        cfg.top_n,
        cfg.literal_query_knowledge,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub ltr: TrainingSetReport,
    pub chosen_params: Option<LambdaMartParams>,
    pub trials: Vec<TrialReport>,
    pub train_ndcg3: Vec<f64>,
    pub validation_mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPayload {
    pub model: RankingModel,
    pub diagnostics: TrainDiagnostics,
}

/// Build the LtR training set and fit the configured ranker.
pub fn train_model(
    dataset: &Dataset,
    build: &BuildArtifacts,
    cfg: &PipelineConfig,
) -> Result<(ModelPayload, Vec<FeatureRow>)> {
    cfg.validate()?;
    let engine = make_engine(dataset, build, cfg);
    let (ts, ltr_report) = build_training_set(&engine, cfg.zeta, cfg.split_ratio)?;
    let active = cfg.active_features();

    let payload = match cfg.ranker {
        RankerKind::Linear => {
            let weights = cfg.linear_weights.clone().expect("validated");
            let model = RankingModel::Linear(LinearModel::new(weights)?);
            ModelPayload {
                model,
                diagnostics: TrainDiagnostics {
                    ltr: ltr_report,
                    chosen_params: None,
                    trials: Vec::new(),
                    train_ndcg3: Vec::new(),
                    validation_mrr: 0.0,
                },
            }
        }
        RankerKind::LambdaMart => {
            let (best, trials) = tune(&ts, &cfg.tuner, cfg.tuner_trials, cfg.tuner_seed, &active);
            let outcome = train_lambdamart(&ts, &best);
            let scores = crate::ranker::score_all(&outcome.model, &ts);
            let validation_mrr =
                crate::ranker::mean_reciprocal_rank(&ts, ts.validation_groups(), &scores);
            ModelPayload {
                model: RankingModel::LambdaMart(outcome.model),
                diagnostics: TrainDiagnostics {
                    ltr: ltr_report,
                    chosen_params: Some(best),
                    trials,
                    train_ndcg3: outcome.train_ndcg3,
                    validation_mrr,
                },
            }
        }
        RankerKind::Interpretable => {
            let (best, trials) = tune(&ts, &cfg.tuner, cfg.tuner_trials, cfg.tuner_seed, &active);
            let params = InterpretableParams::from_base(best.clone(), cfg.interaction_pairs);
            let outcome = train_interpretable(&ts, &params);
            let scores: Vec<f64> =
                ts.rows.iter().map(|r| outcome.model.score(&r.features.0)).collect();
            let validation_mrr =
                crate::ranker::mean_reciprocal_rank(&ts, ts.validation_groups(), &scores);
            ModelPayload {
                model: RankingModel::Interpretable(outcome.model),
                diagnostics: TrainDiagnostics {
                    ltr: ltr_report,
                    chosen_params: Some(best),
                    trials,
                    train_ndcg3: outcome.train_ndcg3,
                    validation_mrr,
                },
            }
        }
    };
    Ok((payload, ts.rows))
}

/// Expert-ranking evaluation of one configuration. The centrality-only and
/// retrieval-only configurations bypass the model entirely.
pub fn evaluate_mode(
    dataset: &Dataset,
    build: &BuildArtifacts,
    model: Option<&RankingModel>,
    mode: AblationMode,
    cfg: &PipelineConfig,
) -> Result<ProtocolOutcome> {
    let engine = make_engine(dataset, build, cfg);
    let outcome = match mode {
        AblationMode::Bc => eval::ranking_protocol(&engine, &dataset.test_questions, |_, out| {
            engine.betweenness_ranking(&out.layers)
        }),
        AblationMode::Bm25 => {
            eval::ranking_protocol(&engine, &dataset.test_questions, |_, out| out.merged.clone())
        }
        _ => {
            let model = model.ok_or_else(|| {
                Error::Config(format!("mode {} needs a trained model", mode.name()))
            })?;
            eval::expert_ranking_protocol(&engine, model, &dataset.test_questions)
        }
    };
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceEntry {
    pub baseline: String,
    pub metric: String,
    pub t: f64,
    pub p_value: f64,
    pub significant: bool,
    /// Positive means the full configuration scores higher.
    pub mean_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub modes: Vec<(String, ProtocolOutcome)>,
    pub significance: Vec<SignificanceEntry>,
    pub num_comparisons: usize,
}

/// Run the named configurations, evaluate each end to end, and test every
/// baseline against the full configuration with Bonferroni correction.
pub fn ablate(
    dataset: &Dataset,
    base_cfg: &PipelineConfig,
    modes: &[AblationMode],
) -> Result<AblationReport> {
    let mut modes: Vec<AblationMode> = modes.to_vec();
    if !modes.contains(&AblationMode::Full) {
        modes.push(AblationMode::Full);
    }

    let base_build = build_artifacts(dataset, base_cfg)?;
    let mut per_mode: Vec<(String, ProtocolOutcome)> = Vec::new();
    let mut full_outcome: Option<ProtocolOutcome> = None;

    for &mode in &modes {
        let cfg = mode.configure(base_cfg);
        // A different graph shape needs its own build; everything else can
        // share the base artifacts.
        let own_build;
        let build = if cfg.graph_mode != base_cfg.graph_mode {
            own_build = build_artifacts(dataset, &cfg)?;
            &own_build
        } else {
            &base_build
        };
        let model = if mode.needs_model() {
            Some(train_model(dataset, build, &cfg)?.0.model)
        } else {
            None
        };
        let outcome = evaluate_mode(dataset, build, model.as_ref(), mode, &cfg)?;
        if mode == AblationMode::Full {
            full_outcome = Some(outcome.clone());
        }
        per_mode.push((mode.name().to_string(), outcome));
    }

    let full = full_outcome.expect("full mode always present");
    let num_comparisons = (per_mode.len() - 1).max(1) * 4;
    let mut significance = Vec::new();
    for (name, outcome) in &per_mode {
        if name == AblationMode::Full.name() {
            continue;
        }
        for (metric, full_values, base_values) in [
            ("P@1", per_query(&full, |m| m.p1), per_query(outcome, |m| m.p1)),
            ("NDCG@3", per_query(&full, |m| m.ndcg3), per_query(outcome, |m| m.ndcg3)),
            ("R@5", per_query(&full, |m| m.r5), per_query(outcome, |m| m.r5)),
            ("MRR", per_query(&full, |m| m.rr), per_query(outcome, |m| m.rr)),
        ] {
            if full_values.len() != base_values.len() || full_values.len() < 2 {
                continue;
            }
            let test = paired_ttest_bonferroni(&full_values, &base_values, num_comparisons)?;
            let mean_difference = (full_values.iter().sum::<f64>()
                - base_values.iter().sum::<f64>())
                / full_values.len() as f64;
            significance.push(SignificanceEntry {
                baseline: name.clone(),
                metric: metric.to_string(),
                t: test.t,
                p_value: test.p_value,
                significant: test.significant,
                mean_difference,
            });
        }
    }

    Ok(AblationReport { modes: per_mode, significance, num_comparisons })
}

fn per_query(outcome: &ProtocolOutcome, f: impl Fn(&eval::QueryMetrics) -> f64) -> Vec<f64> {
    outcome.metrics.per_query.iter().map(f).collect()
}

/// Render the comparison as an aligned text table with significance marks:
/// `v` where the full configuration significantly beats the baseline on that
/// metric, `^` where the baseline significantly wins.
pub fn render_ablation_table(report: &AblationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>10} {:>10} {:>10} {:>10} {:>9} {:>8} {:>9}\n",
        "config", "P@1", "NDCG@3", "R@5", "MRR", "queries", "misses", "avg-list"
    ));
    for (name, outcome) in &report.modes {
        let m = &outcome.metrics;
        let mark = |metric: &str| -> &'static str {
            report
                .significance
                .iter()
                .find(|s| &s.baseline == name && s.metric == metric && s.significant)
                .map(|s| if s.mean_difference > 0.0 { "v" } else { "^" })
                .unwrap_or("")
        };
        out.push_str(&format!(
            "{:<10} {:>9.3}{:<1} {:>9.3}{:<1} {:>9.3}{:<1} {:>9.3}{:<1} {:>9} {:>8} {:>9.1}\n",
            name,
            m.p1,
            mark("P@1"),
            m.ndcg3,
            mark("NDCG@3"),
            m.r5,
            mark("R@5"),
            m.mrr,
            mark("MRR"),
            m.query_count,
            m.miss_count,
            outcome.mean_list_length,
        ));
    }
    out.push_str(&format!(
        "significance: paired t-test, two-sided, p < 0.05/{} (Bonferroni)\n",
        report.num_comparisons
    ));
    out
}

// ---------------------------------------------------------------------------
// Disk-backed flows used by the command-line driver.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub parse: IngestParseStats,
    pub train_questions: usize,
    pub test_questions: usize,
    pub answers: usize,
    pub users: usize,
    pub tags: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestParseStats {
    pub questions: usize,
    pub answers: usize,
    pub users: usize,
    pub skipped_rows: usize,
    pub other_post_types: usize,
}

pub fn run_ingest(
    posts_path: &Path,
    users_path: &Path,
    workspace: &Workspace,
    cfg: &PipelineConfig,
    period: Period,
) -> Result<IngestSummary> {
    cfg.validate()?;
    let posts_file = std::fs::File::open(posts_path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", posts_path.display())))?;
    let users_file = std::fs::File::open(users_path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", users_path.display())))?;
    let (posts, users, stats) = ingest::parse_dump(
        std::io::BufReader::new(posts_file),
        std::io::BufReader::new(users_file),
    )?;
    let dataset = ingest::clean_and_split(&posts, &users, period, cfg.split_ratio)?;

    artifact::save(&workspace.dataset(), SCHEMA_DATASET, cfg, BTreeMap::new(), &dataset)?;

    let mut tags: std::collections::BTreeSet<&str> = Default::default();
    for q in dataset.all_questions() {
        tags.extend(q.tags.iter().map(String::as_str));
    }
    Ok(IngestSummary {
        parse: IngestParseStats {
            questions: stats.questions,
            answers: stats.answers,
            users: stats.users,
            skipped_rows: stats.skipped_rows,
            other_post_types: stats.other_post_types,
        },
        train_questions: dataset.train_questions.len(),
        test_questions: dataset.test_questions.len(),
        answers: dataset.answers.values().map(Vec::len).sum(),
        users: dataset.users.len(),
        tags: tags.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub layers: usize,
    pub silhouette: f64,
    pub experts: usize,
    pub min_accepted: u32,
    pub layer_nodes: Vec<usize>,
    pub layer_edges: Vec<usize>,
    pub text_documents: usize,
    pub tag_documents: usize,
    pub warnings: Vec<String>,
}

pub fn run_build(workspace: &Workspace, cfg: &PipelineConfig) -> Result<BuildSummary> {
    let dataset_art: Artifact<Dataset> = artifact::load(&workspace.dataset(), SCHEMA_DATASET)?;
    let dataset = &dataset_art.payload;
    let build = build_artifacts(dataset, cfg)?;

    let parents: BTreeMap<String, String> =
        [("dataset".to_string(), dataset_art.fingerprint.clone())].into_iter().collect();
    let clustering_fp = artifact::save(
        &workspace.clustering(),
        SCHEMA_CLUSTERING,
        cfg,
        parents.clone(),
        &build.clustering,
    )?;
    let mut graph_parents = parents.clone();
    graph_parents.insert("clustering".to_string(), clustering_fp);
    let graph_fp =
        artifact::save(&workspace.graph(), SCHEMA_GRAPH, cfg, graph_parents, &build.mlg)?;
    let mut index_parents = parents;
    index_parents.insert("graph".to_string(), graph_fp);
    artifact::save(
        &workspace.indexes(),
        SCHEMA_INDEXES,
        cfg,
        index_parents,
        &IndexesPayload { text: build.text_index.clone(), tag: build.tag_index.clone() },
    )?;

    Ok(BuildSummary {
        layers: build.mlg.layers.len(),
        silhouette: build.clustering.silhouette,
        experts: build.mlg.labeling.experts.len(),
        min_accepted: build.mlg.labeling.min_accepted,
        layer_nodes: build.mlg.layers.iter().map(|l| l.nodes.len()).collect(),
        layer_edges: build.mlg.layers.iter().map(|l| l.edges.len()).collect(),
        text_documents: build.text_index.doc_count,
        tag_documents: build.tag_index.doc_count,
        warnings: build.mlg.warnings.clone(),
    })
}

struct LoadedStack {
    dataset: Artifact<Dataset>,
    build: BuildArtifacts,
    graph_fp: String,
}

fn load_build_stack(workspace: &Workspace) -> Result<LoadedStack> {
    let dataset: Artifact<Dataset> = artifact::load(&workspace.dataset(), SCHEMA_DATASET)?;
    let clustering: Artifact<TagClustering> =
        artifact::load(&workspace.clustering(), SCHEMA_CLUSTERING)?;
    let graph: Artifact<MultiLayerGraph> = artifact::load(&workspace.graph(), SCHEMA_GRAPH)?;
    let indexes: Artifact<IndexesPayload> = artifact::load(&workspace.indexes(), SCHEMA_INDEXES)?;
    artifact::require_parent(&clustering, "dataset", &dataset.fingerprint)?;
    artifact::require_parent(&graph, "dataset", &dataset.fingerprint)?;
    artifact::require_parent(&graph, "clustering", &clustering.fingerprint)?;
    artifact::require_parent(&indexes, "graph", &graph.fingerprint)?;
    let graph_fp = graph.fingerprint.clone();
    Ok(LoadedStack {
        build: BuildArtifacts {
            clustering: clustering.payload,
            mlg: graph.payload,
            text_index: indexes.payload.text,
            tag_index: indexes.payload.tag,
        },
        dataset,
        graph_fp,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub diagnostics: TrainDiagnostics,
    pub feature_rows: usize,
}

pub fn run_train(workspace: &Workspace, cfg: &PipelineConfig) -> Result<TrainSummary> {
    let stack = load_build_stack(workspace)?;
    // Train against the build's own configuration for the engine-side knobs;
    // the ranker-side knobs come from the caller.
    let mut effective = stack.dataset.config.clone();
    apply_build_config(&mut effective, &load_graph_config(workspace)?);
    apply_ranker_config(&mut effective, cfg);
    effective.validate()?;

    let (payload, rows) = train_model(&stack.dataset.payload, &stack.build, &effective)?;

    let parents: BTreeMap<String, String> = [
        ("dataset".to_string(), stack.dataset.fingerprint.clone()),
        ("graph".to_string(), stack.graph_fp.clone()),
    ]
    .into_iter()
    .collect();
    artifact::save(&workspace.model(), SCHEMA_MODEL, &effective, parents, &payload)?;

    let file = std::fs::File::create(workspace.feature_matrix())?;
    crate::features::write_feature_matrix(std::io::BufWriter::new(file), &rows)?;

    Ok(TrainSummary { diagnostics: payload.diagnostics, feature_rows: rows.len() })
}

fn load_graph_config(workspace: &Workspace) -> Result<PipelineConfig> {
    let graph: Artifact<MultiLayerGraph> = artifact::load(&workspace.graph(), SCHEMA_GRAPH)?;
    Ok(graph.config)
}

/// Engine-side knobs travel with the build artifacts.
fn apply_build_config(target: &mut PipelineConfig, build_cfg: &PipelineConfig) {
    target.lambda = build_cfg.lambda;
    target.k_min = build_cfg.k_min;
    target.k_max = build_cfg.k_max;
    target.cluster_seed = build_cfg.cluster_seed;
    target.epsilon = build_cfg.epsilon;
    target.delta = build_cfg.delta;
    target.expert_percentile = build_cfg.expert_percentile;
    target.graph_mode = build_cfg.graph_mode;
}

/// Ranker- and selection-side knobs come from the current invocation.
fn apply_ranker_config(target: &mut PipelineConfig, cfg: &PipelineConfig) {
    target.top_n = cfg.top_n;
    target.alpha = cfg.alpha;
    target.walks = cfg.walks;
    target.max_steps = cfg.max_steps;
    target.rng_seed = cfg.rng_seed;
    target.methods = cfg.methods;
    target.exploration = cfg.exploration;
    target.ranker = cfg.ranker;
    target.feature_set = cfg.feature_set;
    target.zeta = cfg.zeta;
    target.split_ratio = cfg.split_ratio;
    target.tuner = cfg.tuner;
    target.tuner_trials = cfg.tuner_trials;
    target.tuner_seed = cfg.tuner_seed;
    target.interaction_pairs = cfg.interaction_pairs;
    target.linear_weights = cfg.linear_weights.clone();
    target.literal_query_knowledge = cfg.literal_query_knowledge;
    target.subsample_size = cfg.subsample_size;
    target.subsample_seed = cfg.subsample_seed;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    ExpertRanking,
    Subsample,
}

impl Protocol {
    pub fn parse(s: &str) -> Option<Protocol> {
        match s.trim().to_lowercase().as_str() {
            "expert-ranking" => Some(Protocol::ExpertRanking),
            "subsample" => Some(Protocol::Subsample),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::ExpertRanking => "expert-ranking",
            Protocol::Subsample => "subsample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub protocol: String,
    pub outcome: ProtocolOutcome,
    pub plans: Option<usize>,
}

/// Evaluate the persisted model under one protocol. Engine knobs come from
/// the model artifact so results line up with training; the protocol and
/// subsample knobs come from the caller.
pub fn run_evaluate(
    workspace: &Workspace,
    cfg: &PipelineConfig,
    protocol: Protocol,
    with_timing: bool,
) -> Result<(EvalSummary, Option<TimingReport>)> {
    let stack = load_build_stack(workspace)?;
    let model_art: Artifact<ModelPayload> = artifact::load(&workspace.model(), SCHEMA_MODEL)?;
    artifact::require_parent(&model_art, "dataset", &stack.dataset.fingerprint)?;
    artifact::require_parent(&model_art, "graph", &stack.graph_fp)?;

    let mut effective = model_art.config.clone();
    effective.subsample_size = cfg.subsample_size;
    effective.subsample_seed = cfg.subsample_seed;

    let dataset = &stack.dataset.payload;
    let engine = make_engine(dataset, &stack.build, &effective);
    let model = &model_art.payload.model;

    let (summary, timing) = match protocol {
        Protocol::ExpertRanking => {
            let outcome = eval::expert_ranking_protocol(&engine, model, &dataset.test_questions);
            let timing = with_timing
                .then(|| eval::timing_harness(&engine, model, &dataset.test_questions));
            (
                EvalSummary {
                    protocol: protocol.name().to_string(),
                    outcome,
                    plans: None,
                },
                timing,
            )
        }
        Protocol::Subsample => {
            let plans: Vec<SubsamplePlan> = eval::build_subsample_plans(
                &engine,
                &dataset.test_questions,
                effective.subsample_size,
                effective.subsample_seed,
            );
            let outcome = eval::subsample_protocol(&engine, model, &plans, &dataset.test_questions)?;
            (
                EvalSummary {
                    protocol: protocol.name().to_string(),
                    outcome,
                    plans: Some(plans.len()),
                },
                None,
            )
        }
    };

    let json_path = workspace.report(protocol.name(), "json");
    if let Some(dir) = json_path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&json_path, serde_json::to_string_pretty(&summary)?)?;
    std::fs::write(
        workspace.report(protocol.name(), "txt"),
        render_eval_summary(&summary),
    )?;
    if let Some(t) = &timing {
        std::fs::write(
            workspace.report("timing", "json"),
            serde_json::to_string_pretty(t)?,
        )?;
    }
    Ok((summary, timing))
}

pub fn render_eval_summary(summary: &EvalSummary) -> String {
    let m = &summary.outcome.metrics;
    let mut out = String::new();
    out.push_str(&format!("protocol       {}\n", summary.protocol));
    out.push_str(&format!("queries        {}\n", m.query_count));
    out.push_str(&format!("misses         {}\n", m.miss_count));
    if let Some(p) = summary.plans {
        out.push_str(&format!("plans          {p}\n"));
    }
    out.push_str(&format!("mean list len  {:.2}\n", summary.outcome.mean_list_length));
    out.push_str(&format!(
        "P@1 {:.4}  NDCG@3 {:.4}  R@5 {:.4}  MRR {:.4}\n",
        m.p1, m.ndcg3, m.r5, m.mrr
    ));
    out
}

pub fn run_ablate(
    workspace: &Workspace,
    cfg: &PipelineConfig,
    modes: &[AblationMode],
) -> Result<AblationReport> {
    let dataset_art: Artifact<Dataset> = artifact::load(&workspace.dataset(), SCHEMA_DATASET)?;
    let report = ablate(&dataset_art.payload, cfg, modes)?;
    let json_path = workspace.report("ablation", "json");
    if let Some(dir) = json_path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
    std::fs::write(workspace.report("ablation", "txt"), render_ablation_table(&report))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankQuery {
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedExpert {
    pub user: UserId,
    pub score: f64,
    pub features: BTreeMap<String, f64>,
    /// Per-effect contribution breakdown; present for interpretable models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contributions: Option<Vec<(String, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOutput {
    pub layers: Vec<usize>,
    pub candidates: usize,
    pub ranking: Vec<RankedExpert>,
}

/// Rank a single ad-hoc query given as JSON on standard input.
pub fn run_rank(workspace: &Workspace, query: &RankQuery, limit: usize) -> Result<RankOutput> {
    let stack = load_build_stack(workspace)?;
    let model_art: Artifact<ModelPayload> = artifact::load(&workspace.model(), SCHEMA_MODEL)?;
    artifact::require_parent(&model_art, "dataset", &stack.dataset.fingerprint)?;
    artifact::require_parent(&model_art, "graph", &stack.graph_fp)?;

    let effective = model_art.config.clone();
    let dataset = &stack.dataset.payload;
    let engine = make_engine(dataset, &stack.build, &effective);
    let model = &model_art.payload.model;

    let outcome = engine.process(crate::ids::PostId(0), &query.title, &query.body, &query.tags);
    let ctx = engine.feature_context(&outcome);
    let scored: Vec<(UserId, f64)> = outcome
        .candidates
        .experts
        .iter()
        .map(|&u| (u, model.score(&ctx.features_for(u))))
        .collect();
    let order = rank_by_score(scored);

    let ranking = order
        .into_iter()
        .take(limit)
        .map(|u| {
            let features = ctx.features_for(u);
            let named: BTreeMap<String, f64> = FEATURE_NAMES
                .iter()
                .zip(features.0.iter())
                .map(|(n, v)| (n.to_string(), *v))
                .collect();
            let contributions = match model {
                RankingModel::Interpretable(m) => {
                    let mut parts: Vec<(String, f64)> = m
                        .main_effects
                        .iter()
                        .map(|e| {
                            (
                                m.feature_names[e.feature].clone(),
                                m.main_contribution(e, features.0[e.feature]),
                            )
                        })
                        .chain(m.interaction_effects.iter().map(|e| {
                            (
                                format!(
                                    "{}*{}",
                                    m.feature_names[e.features.0], m.feature_names[e.features.1]
                                ),
                                m.interaction_contribution(
                                    e,
                                    features.0[e.features.0],
                                    features.0[e.features.1],
                                ),
                            )
                        }))
                        .collect();
                    parts.sort_by(|a, b| {
                        b.1.abs().partial_cmp(&a.1.abs()).unwrap().then_with(|| a.0.cmp(&b.0))
                    });
                    Some(parts)
                }
                _ => None,
            };
            RankedExpert { user: u, score: model.score(&features), features: named, contributions }
        })
        .collect();

    Ok(RankOutput {
        layers: outcome.layers.iter().copied().collect(),
        candidates: outcome.candidates.experts.len(),
        ranking,
    })
}
