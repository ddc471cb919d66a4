//! Staged pipeline: ingest, assemble, build_db, generate, validate,
//! evaluate, report. Each stage reads the previous stages' artifacts from
//! the output directory and records content hashes in `manifest.json`.

mod config;
mod export;
pub mod io;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    ClusterSource, CollectionsConfig, ConverterConfig, ConverterKind, CorpusConfig, EvalModelConfig, EvalModelKind,
    EvaluationConfig, GenerationConfig, PipelineConfig, BUNDLED,
};
pub use export::{export_split, ExportFormat};

use crate::analysis;
use crate::collection::{concat_context, plan_collections, Collection, ContextDocument, Level, PlanReport};
use crate::corpus::{
    expand_seed, load_corpus, parse_corpus, save_corpus, ArticleCluster, Corpus, GraphApi, HttpGraph, LoadReport,
    LocalGraph, Subject, Tokenizer, TokenizerSpec, MINI_CORPUS,
};
use crate::error::{PipelineError, TemplateError};
use crate::eval::{evaluate_prompt, render_prompt_fulltext, render_prompt_tables, ContextMode, EvalRecord, EvalTarget};
use crate::llm::{
    map_bounded, ChatModel, ConstantModel, EchoConverter, FixedSqlConverter, GoldEcho, HttpChatModel, UuidModel,
};
use crate::metadata::{build_database, MetadataDatabase};
use crate::nl::{round_trip_validate, Validation};
use crate::seed::{rng_for, sha256_hex, unit_interval};
use crate::template::{
    execute_query, instance_id, instantiate, select_templates, serialize_answer, BenchmarkInstance, InstantiatedQuery,
    Split,
};
use io::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Assemble,
    BuildDb,
    Generate,
    Validate,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Assemble,
        Stage::BuildDb,
        Stage::Generate,
        Stage::Validate,
        Stage::Evaluate,
        Stage::Report,
    ];
    /// Stages that produce the benchmark itself, without model evaluation.
    pub const GENERATION: [Stage; 5] =
        [Stage::Ingest, Stage::Assemble, Stage::BuildDb, Stage::Generate, Stage::Validate];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Assemble => "assemble",
            Stage::BuildDb => "build_db",
            Stage::Generate => "generate",
            Stage::Validate => "validate",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    fn cli_name(self) -> &'static str {
        match self {
            Stage::BuildDb => "build-db",
            s => s.as_str(),
        }
    }

    /// Artifacts (relative to the output directory) this stage writes.
    fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &["corpus.jsonl", "ingest_report.json"],
            Stage::Assemble => &["clusters.json", "collections.json", "assembly_report.json"],
            Stage::BuildDb => &["db"],
            Stage::Generate => &["queries.jsonl", "generate_report.json"],
            Stage::Validate => &["instances", "validate_report.json"],
            Stage::Evaluate => &["eval"],
            Stage::Report => &["reports"],
        }
    }

    fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Assemble => &[Stage::Ingest],
            Stage::BuildDb => &[Stage::Ingest, Stage::Assemble],
            Stage::Generate => &[Stage::Assemble, Stage::BuildDb],
            Stage::Validate => &[Stage::Generate, Stage::BuildDb],
            Stage::Evaluate => &[Stage::Ingest, Stage::Assemble, Stage::BuildDb, Stage::Validate],
            Stage::Report => &[Stage::Assemble, Stage::Validate, Stage::Evaluate],
        }
    }

    fn checkpoint(self) -> Option<&'static str> {
        match self {
            Stage::Validate => Some("validation_log.jsonl"),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.replace('-', "_");
        Stage::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub fingerprint: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let p = dir.join("manifest.json");
        if p.exists() {
            read_json(&p)
        } else {
            Ok(Manifest::default())
        }
    }

    /// Every artifact hash across stages.
    pub fn artifacts(&self) -> BTreeMap<String, String> {
        self.stages.values().flat_map(|r| r.outputs.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOutcome {
    Ran,
    UpToDate,
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQuery {
    #[serde(flatten)]
    pub query: InstantiatedQuery,
    pub level: Level,
    pub gold_answer: String,
    pub tie_affected: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GenerateReport {
    pub collections: usize,
    pub selected: usize,
    pub instantiated: usize,
    pub dropped_tie_affected: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rejection {
    pub collection_id: String,
    pub template_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ValidationEntry {
    instance_id: String,
    validation: Validation,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidateReport {
    pub queries: usize,
    pub accepted: usize,
    pub discarded: usize,
    /// Telemetry only; depends on the converter model.
    pub acceptance_rate: Option<f64>,
    pub accepted_at_attempt: BTreeMap<usize, usize>,
    pub instances_per_file: BTreeMap<String, usize>,
}

const CHUNK: usize = 64;

/// Modal subject of a collection, ties broken by the subject order.
pub fn modal_subject(c: &Collection, corpus: &Corpus) -> Subject {
    let mut counts: BTreeMap<Subject, usize> = BTreeMap::new();
    for id in &c.article_ids {
        if let Some(a) = corpus.get(id) {
            *counts.entry(a.subject).or_default() += 1;
        }
    }
    let max = counts.values().copied().max().unwrap_or(0);
    counts.into_iter().find(|(_, n)| *n == max).map(|(s, _)| s).unwrap_or(Subject::ALL[0])
}

/// Collections are split as a whole so no context spans train and test.
pub fn split_of(seed: u64, collection_id: &str, test_fraction: f64) -> Split {
    if unit_interval(seed, &[collection_id, "split"]) < test_fraction {
        Split::Test
    } else {
        Split::Train
    }
}

pub fn instance_file(level: Level, split: Split) -> String {
    format!("instances/{level}-{split}.jsonl")
}

fn stage_err(stage: Stage, message: impl ToString) -> PipelineError {
    PipelineError::Stage { stage: stage.to_string(), message: message.to_string() }
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        let out = cfg.out_dir();
        Pipeline { cfg, out }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn tokenizer(&self) -> Result<Tokenizer, PipelineError> {
        let spec = match &self.cfg.tokenizer {
            TokenizerSpec::VocabFile { vocab_path } => {
                TokenizerSpec::VocabFile { vocab_path: self.cfg.resolve(vocab_path) }
            }
            s => s.clone(),
        };
        Ok(Tokenizer::from_spec(&spec)?)
    }

    /// Hash of the configuration sections a stage depends on.
    fn fingerprint(&self, stage: Stage) -> String {
        let c = &self.cfg;
        let v = match stage {
            Stage::Ingest => serde_json::json!([c.corpus.path, c.tokenizer]),
            Stage::Assemble => serde_json::json!([c.seed, c.corpus.clusters, c.corpus.seeds, c.collections]),
            Stage::BuildDb => serde_json::json!([]),
            Stage::Generate => serde_json::json!([c.seed, c.generation]),
            Stage::Validate => serde_json::json!([
                c.seed,
                c.converter.kind,
                c.converter.max_attempts,
                c.converter.fixed_sql,
                c.converter.endpoint.model,
                c.converter.endpoint.base_url,
                c.converter.endpoint.temperature,
                c.generation.test_fraction
            ]),
            Stage::Evaluate => serde_json::to_value(&c.evaluation).expect("serializable"),
            Stage::Report => serde_json::json!([]),
        };
        sha256_hex(v.to_string().as_bytes())
    }

    fn current_inputs(&self, stage: Stage) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut m = BTreeMap::new();
        for p in stage.prerequisites() {
            for rel in p.outputs() {
                m.extend(hash_tree(&self.out, rel)?);
            }
        }
        Ok(m)
    }

    fn current_outputs(&self, stage: Stage) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut m = BTreeMap::new();
        for rel in stage.outputs() {
            m.extend(hash_tree(&self.out, rel)?);
        }
        Ok(m)
    }

    fn check_prerequisites(&self, stage: Stage) -> Result<(), PipelineError> {
        for p in stage.prerequisites() {
            if p.outputs().iter().any(|rel| !self.path(rel).exists()) {
                return Err(PipelineError::MissingPrerequisite {
                    stage: stage.cli_name().into(),
                    needs: p.cli_name().into(),
                });
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> Result<Manifest, PipelineError> {
        Manifest::load(&self.out)
    }

    /// Runs `stages` in pipeline order. A stage whose configuration, inputs
    /// and outputs are unchanged since its last run is skipped.
    pub fn run(&self, stages: &[Stage]) -> Result<(Manifest, Vec<(Stage, StageOutcome)>), PipelineError> {
        self.cfg.validate(stages)?;
        std::fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        let mut ordered: Vec<Stage> = stages.to_vec();
        ordered.sort();
        ordered.dedup();
        let mut manifest = self.manifest()?;
        manifest.seed = self.cfg.seed();
        let mut outcomes = Vec::new();
        for stage in ordered {
            self.check_prerequisites(stage)?;
            let fingerprint = self.fingerprint(stage);
            let inputs = self.current_inputs(stage)?;
            if let Some(prev) = manifest.stages.get(&stage) {
                let same = prev.fingerprint == fingerprint && prev.inputs == inputs;
                if same && !prev.outputs.is_empty() && self.current_outputs(stage)? == prev.outputs {
                    log::info!("{stage}: up to date");
                    outcomes.push((stage, StageOutcome::UpToDate));
                    continue;
                }
                if !same {
                    if let Some(cp) = stage.checkpoint() {
                        let _ = std::fs::remove_file(self.path(cp));
                    }
                    if stage == Stage::Evaluate {
                        let _ = std::fs::remove_dir_all(self.path("eval"));
                    }
                }
            }
            // Drop the record first so an interrupted stage is never seen as complete.
            manifest.stages.remove(&stage);
            write_json(&self.path("manifest.json"), &manifest)?;
            log::info!("{stage}: running");
            self.run_stage(stage)?;
            let outputs = self.current_outputs(stage)?;
            manifest.stages.insert(stage, StageRecord { fingerprint, inputs, outputs });
            write_json(&self.path("manifest.json"), &manifest)?;
            outcomes.push((stage, StageOutcome::Ran));
        }
        Ok((manifest, outcomes))
    }

    fn run_stage(&self, stage: Stage) -> Result<(), PipelineError> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Assemble => self.assemble(),
            Stage::BuildDb => self.build_db(),
            Stage::Generate => self.generate(),
            Stage::Validate => self.validate(),
            Stage::Evaluate => self.evaluate(),
            Stage::Report => self.report(),
        }
    }

    pub fn load_corpus(&self) -> Result<Corpus, PipelineError> {
        Ok(load_corpus(&self.path("corpus.jsonl"), &self.tokenizer()?)?.0)
    }

    pub fn load_collections(&self) -> Result<Vec<Collection>, PipelineError> {
        read_json(&self.path("collections.json"))
    }

    pub fn load_db(&self, collection_id: &str) -> Result<MetadataDatabase, PipelineError> {
        Ok(MetadataDatabase::load_dumps(collection_id, &self.path(&format!("db/{collection_id}")))?)
    }

    pub fn load_instances(&self, splits: &[Split], levels: &[Level]) -> Result<Vec<BenchmarkInstance>, PipelineError> {
        let collections = self.load_collections()?;
        let mut all_levels: Vec<Level> = collections.iter().map(|c| c.level).collect();
        all_levels.sort();
        all_levels.dedup();
        let mut out = Vec::new();
        for l in all_levels.into_iter().filter(|l| levels.is_empty() || levels.contains(l)) {
            for s in splits {
                let p = self.path(&instance_file(l, *s));
                if p.exists() {
                    out.extend(read_jsonl::<BenchmarkInstance>(&p)?);
                }
            }
        }
        Ok(out)
    }

    fn ingest(&self) -> Result<(), PipelineError> {
        let tok = self.tokenizer()?;
        let (corpus, report): (Corpus, LoadReport) = if self.cfg.corpus.path == BUNDLED {
            parse_corpus(MINI_CORPUS, &tok)?
        } else {
            load_corpus(&self.cfg.resolve(&self.cfg.corpus.path), &tok)?
        };
        for d in &report.dropped {
            log::warn!("dropped `{}`: {}", d.article_id, d.reason);
        }
        log::info!("ingest: {} articles, {} tokens", corpus.len(), corpus.total_tokens());
        save_corpus(&corpus, &self.path("corpus.jsonl"))?;
        write_json(&self.path("ingest_report.json"), &report)
    }

    fn clusters(&self, corpus: &Corpus) -> Result<Vec<ArticleCluster>, PipelineError> {
        let seed = self.cfg.seed();
        let graph: Box<dyn GraphApi> = match self.cfg.corpus.clusters {
            ClusterSource::Whole => return Ok(ArticleCluster::whole_corpus(corpus).into_iter().collect()),
            ClusterSource::LocalGraph => Box::new(LocalGraph::new(corpus)),
            ClusterSource::HttpGraph => Box::new(HttpGraph::new(self.cfg.corpus.graph.clone())?),
        };
        let mut ids: Vec<&str> = corpus.ids().collect();
        ids.sort_unstable();
        if self.cfg.corpus.seeds > 0 && self.cfg.corpus.seeds < ids.len() {
            let mut rng = rng_for(seed, &["seeds"]);
            let mut picked: Vec<&str> = rand::seq::index::sample(&mut rng, ids.len(), self.cfg.corpus.seeds)
                .into_iter()
                .map(|i| ids[i])
                .collect();
            picked.sort_unstable();
            ids = picked;
        }
        let mut clusters = Vec::new();
        for id in ids {
            let c = expand_seed(id, graph.as_ref(), corpus, &mut rng_for(seed, &["cluster", id]))?;
            if c.degenerate {
                log::debug!("seed `{id}` has no eligible neighbours");
            } else {
                clusters.push(c);
            }
        }
        if clusters.is_empty() {
            log::warn!("no seed expanded into a cluster; using the whole corpus");
            clusters.extend(ArticleCluster::whole_corpus(corpus));
        }
        Ok(clusters)
    }

    fn assemble(&self) -> Result<(), PipelineError> {
        let corpus = self.load_corpus()?;
        let clusters = self.clusters(&corpus)?;
        let (collections, report): (Vec<Collection>, PlanReport) = plan_collections(
            &clusters,
            &corpus,
            &self.cfg.collections.levels,
            &self.cfg.collections.plan(),
            self.cfg.seed(),
        );
        for i in &report.infeasible {
            log::warn!("assemble: {i}");
        }
        if collections.is_empty() {
            return Err(stage_err(
                Stage::Assemble,
                "no collection could be assembled; lower the levels or add articles",
            ));
        }
        log::info!("assemble: {} clusters, {} collections", clusters.len(), collections.len());
        write_json(&self.path("clusters.json"), &clusters)?;
        write_json(&self.path("collections.json"), &collections)?;
        write_json(&self.path("assembly_report.json"), &report)
    }

    fn build_db(&self) -> Result<(), PipelineError> {
        let corpus = self.load_corpus()?;
        let collections = self.load_collections()?;
        let db_root = self.path("db");
        let _ = std::fs::remove_dir_all(&db_root);
        collections.par_iter().try_for_each(|c| -> Result<(), PipelineError> {
            let db = build_database(c, &corpus)?;
            let dir = db_root.join(&c.collection_id);
            db.write_dumps(&dir).map_err(io_err(&dir))
        })
    }

    fn generate(&self) -> Result<(), PipelineError> {
        let lib = self.cfg.library()?;
        let collections = self.load_collections()?;
        let g = &self.cfg.generation;
        let seed = self.cfg.seed();
        type PerCollection = (Vec<GeneratedQuery>, Vec<Rejection>, usize, usize);
        let per: Vec<PerCollection> = collections
            .par_iter()
            .map(|c| -> Result<PerCollection, PipelineError> {
                let db = self.load_db(&c.collection_id)?;
                let chosen = select_templates(
                    &lib,
                    g.templates_per_collection,
                    g.selection,
                    &mut rng_for(seed, &["select", &c.collection_id]),
                )?;
                let (mut ok, mut rejected, mut dropped) = (Vec::new(), Vec::new(), 0);
                for t in &chosen {
                    let mut rng = rng_for(seed, &["instantiate", &c.collection_id, &t.template_id]);
                    match instantiate(t, &db, &mut rng) {
                        Ok(q) => {
                            let r = execute_query(&db, &q.sql).map_err(TemplateError::from_sql(&t.template_id))?;
                            if r.tie_affected && g.drop_tie_affected {
                                dropped += 1;
                                continue;
                            }
                            ok.push(GeneratedQuery {
                                level: c.level,
                                gold_answer: serialize_answer(&r),
                                tie_affected: r.tie_affected,
                                query: q,
                            });
                        }
                        Err(e) => {
                            log::info!("{}: {e}", c.collection_id);
                            rejected.push(Rejection {
                                collection_id: c.collection_id.clone(),
                                template_id: t.template_id.clone(),
                                reason: e.to_string(),
                            });
                        }
                    }
                }
                Ok((ok, rejected, dropped, chosen.len()))
            })
            .collect::<Result<_, _>>()?;
        let mut report = GenerateReport { collections: collections.len(), ..Default::default() };
        let mut queries = Vec::new();
        for (ok, rej, dropped, selected) in per {
            report.selected += selected;
            report.instantiated += ok.len();
            report.dropped_tie_affected += dropped;
            report.rejected.extend(rej);
            queries.extend(ok);
        }
        log::info!("generate: {} queries from {} collections", queries.len(), collections.len());
        write_jsonl(&self.path("queries.jsonl"), &queries)?;
        write_json(&self.path("generate_report.json"), &report)
    }

    fn converter(&self) -> Result<Box<dyn ChatModel>, PipelineError> {
        let c = &self.cfg.converter;
        Ok(match c.kind {
            ConverterKind::Echo => Box::new(EchoConverter::new()),
            ConverterKind::FixedSql => Box::new(FixedSqlConverter { sql: c.fixed_sql.clone() }),
            ConverterKind::Http => Box::new(
                HttpChatModel::new(c.endpoint.clone())
                    .map_err(|e| PipelineError::Endpoint { stage: "validate".into(), source: e })?,
            ),
        })
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let queries: Vec<GeneratedQuery> = read_jsonl(&self.path("queries.jsonl"))?;
        let collections = self.load_collections()?;
        let corpus = self.load_corpus()?;
        let model = self.converter()?;
        let ep = &self.cfg.converter.endpoint;
        let cp = self.path(Stage::Validate.checkpoint().unwrap());
        let done: Vec<ValidationEntry> = read_checkpoint(&cp)?;
        let mut results: HashMap<String, Validation> =
            done.into_iter().map(|e| (e.instance_id, e.validation)).collect();
        if !results.is_empty() {
            log::info!("validate: resuming with {} checkpointed results", results.len());
        }
        let pending: Vec<&GeneratedQuery> = queries
            .iter()
            .filter(|q| !results.contains_key(&instance_id(&q.query.collection_id, &q.query.template_id)))
            .collect();
        let inflight =
            if self.cfg.converter.kind == ConverterKind::Http { ep.max_inflight } else { rayon::current_num_threads() };
        let mut dbs: HashMap<String, MetadataDatabase> = HashMap::new();
        for q in &pending {
            if !dbs.contains_key(&q.query.collection_id) {
                dbs.insert(q.query.collection_id.clone(), self.load_db(&q.query.collection_id)?);
            }
        }
        for chunk in pending.chunks(CHUNK) {
            let out = map_bounded(chunk, inflight, |q| {
                let db = &dbs[&q.query.collection_id];
                round_trip_validate(&q.query, db, model.as_ref(), ep, self.cfg.converter.max_attempts).map(|v| {
                    ValidationEntry {
                        instance_id: instance_id(&q.query.collection_id, &q.query.template_id),
                        validation: v,
                    }
                })
            });
            let mut entries = Vec::new();
            let mut failure = None;
            for r in out {
                match r {
                    Ok(e) => entries.push(e),
                    Err(e) => failure = Some(e),
                }
            }
            append_jsonl(&cp, &entries)?;
            for e in entries {
                results.insert(e.instance_id, e.validation);
            }
            if let Some(e) = failure {
                return Err(PipelineError::Endpoint { stage: "validate".into(), source: e.0 });
            }
        }
        let by_id: HashMap<&str, &Collection> = collections.iter().map(|c| (c.collection_id.as_str(), c)).collect();
        let mut files: BTreeMap<String, Vec<BenchmarkInstance>> = BTreeMap::new();
        for c in &collections {
            for s in [Split::Train, Split::Test] {
                files.entry(instance_file(c.level, s)).or_default();
            }
        }
        let mut report = ValidateReport { queries: queries.len(), ..Default::default() };
        for q in &queries {
            let id = instance_id(&q.query.collection_id, &q.query.template_id);
            match results.get(&id) {
                Some(Validation::Accepted { question, gold_answer, log, .. }) => {
                    report.accepted += 1;
                    *report.accepted_at_attempt.entry(log.len()).or_default() += 1;
                    let c = by_id.get(q.query.collection_id.as_str()).ok_or_else(|| {
                        stage_err(Stage::Validate, format!("unknown collection `{}`", q.query.collection_id))
                    })?;
                    let split = split_of(self.cfg.seed(), &c.collection_id, self.cfg.generation.test_fraction);
                    files.entry(instance_file(c.level, split)).or_default().push(BenchmarkInstance {
                        instance_id: id,
                        collection_id: c.collection_id.clone(),
                        level: c.level,
                        skill: q.query.skill,
                        topic: q.query.topic,
                        sql: q.query.sql.clone(),
                        question: question.clone(),
                        gold_answer: gold_answer.clone(),
                        split,
                        tie_affected: q.tie_affected,
                        subject: modal_subject(c, &corpus),
                    });
                }
                Some(Validation::Discarded { .. }) => report.discarded += 1,
                None => return Err(stage_err(Stage::Validate, format!("no validation result for `{id}`"))),
            }
        }
        report.acceptance_rate = (report.queries > 0).then(|| report.accepted as f64 / report.queries as f64);
        let _ = std::fs::remove_dir_all(self.path("instances"));
        for (rel, items) in &files {
            report.instances_per_file.insert(rel.clone(), items.len());
            write_jsonl(&self.path(rel), items)?;
        }
        log::info!("validate: {} accepted, {} discarded", report.accepted, report.discarded);
        write_json(&self.path("validate_report.json"), &report)
    }

    fn eval_model(&self, m: &EvalModelConfig) -> Result<Box<dyn ChatModel>, PipelineError> {
        Ok(match m.kind {
            EvalModelKind::Http => Box::new(
                HttpChatModel::new(m.endpoint.clone())
                    .map_err(|e| PipelineError::Endpoint { stage: "evaluate".into(), source: e })?,
            ),
            EvalModelKind::Uuid => Box::new(UuidModel),
            EvalModelKind::Constant => Box::new(ConstantModel { answer: m.constant.clone() }),
            EvalModelKind::GoldEcho => Box::new(GoldEcho::new()),
        })
    }

    pub fn eval_file(model: &str, mode: ContextMode) -> String {
        format!("eval/{model}.{}.jsonl", mode.as_str())
    }

    fn evaluate(&self) -> Result<(), PipelineError> {
        let e = &self.cfg.evaluation;
        let instances = self.load_instances(&e.splits, &e.levels)?;
        let collections = self.load_collections()?;
        let corpus = self.load_corpus()?;
        let tok = self.tokenizer()?;
        let by_id: HashMap<&str, &Collection> = collections.iter().map(|c| (c.collection_id.as_str(), c)).collect();
        let mut docs: HashMap<String, ContextDocument> = HashMap::new();
        let mut dbs: HashMap<String, MetadataDatabase> = HashMap::new();
        for i in &instances {
            if !dbs.contains_key(&i.collection_id) {
                dbs.insert(i.collection_id.clone(), self.load_db(&i.collection_id)?);
                if e.context_modes.contains(&ContextMode::FullText) {
                    let c = by_id.get(i.collection_id.as_str()).ok_or_else(|| {
                        stage_err(Stage::Evaluate, format!("unknown collection `{}`", i.collection_id))
                    })?;
                    let doc = concat_context(c, &corpus, &tok).map_err(|err| stage_err(Stage::Evaluate, err))?;
                    docs.insert(i.collection_id.clone(), doc);
                }
            }
        }
        std::fs::create_dir_all(self.path("eval")).map_err(io_err(&self.path("eval")))?;
        let mut summary = Vec::new();
        for m in &e.models {
            for &mode in &e.context_modes {
                let prompts: Vec<String> = instances
                    .iter()
                    .map(|i| match mode {
                        ContextMode::FullText => render_prompt_fulltext(&docs[&i.collection_id], &i.question),
                        ContextMode::DbTables => render_prompt_tables(&dbs[&i.collection_id], &i.question),
                    })
                    .collect::<Result<_, _>>()
                    .map_err(|err| stage_err(Stage::Evaluate, err))?;
                let model: Box<dyn ChatModel> = if m.kind == EvalModelKind::GoldEcho {
                    let mut g = GoldEcho::new();
                    for (i, p) in instances.iter().zip(&prompts) {
                        g.register(p, i.gold_answer.clone());
                    }
                    Box::new(g)
                } else {
                    self.eval_model(m)?
                };
                let path = self.path(&Self::eval_file(&m.name, mode));
                let done: Vec<EvalRecord> = read_checkpoint(&path)?;
                let mut have: HashMap<String, EvalRecord> =
                    done.into_iter().map(|r| (r.instance_id.clone(), r)).collect();
                let pending: Vec<usize> =
                    (0..instances.len()).filter(|k| !have.contains_key(&instances[*k].instance_id)).collect();
                let inflight =
                    if m.kind == EvalModelKind::Http { m.endpoint.max_inflight } else { rayon::current_num_threads() };
                for chunk in pending.chunks(CHUNK) {
                    let out = map_bounded(chunk, inflight, |k| {
                        let i = &instances[*k];
                        let t = EvalTarget {
                            instance_id: &i.instance_id,
                            level: i.level,
                            skill: i.skill,
                            topic: i.topic,
                            sql: &i.sql,
                            gold: &i.gold_answer,
                        };
                        let mut r =
                            evaluate_prompt(&t, &prompts[*k], mode, model.as_ref(), &m.endpoint, e.samples, &tok)?;
                        r.model = m.name.clone();
                        Ok(r)
                    });
                    let mut recs = Vec::new();
                    let mut failure = None;
                    for r in out {
                        match r {
                            Ok(r) => recs.push(r),
                            Err(err) => failure = Some(err),
                        }
                    }
                    append_jsonl(&path, &recs)?;
                    for r in recs {
                        have.insert(r.instance_id.clone(), r);
                    }
                    if let Some(err) = failure {
                        return Err(PipelineError::Endpoint { stage: "evaluate".into(), source: err });
                    }
                }
                // Rewrite in instance order so the file does not depend on resume history.
                let ordered: Vec<EvalRecord> = instances.iter().filter_map(|i| have.remove(&i.instance_id)).collect();
                write_jsonl(&path, &ordered)?;
                let mut levels: Vec<Level> = ordered.iter().map(|r| r.level).collect();
                levels.sort();
                levels.dedup();
                for l in levels {
                    let rs: Vec<&EvalRecord> = ordered.iter().filter(|r| r.level == l).collect();
                    let em: Vec<f64> = rs.iter().filter_map(|r| r.mean_em).collect();
                    let f1: Vec<f64> = rs.iter().filter_map(|r| r.mean_f1).collect();
                    summary.push(vec![
                        m.name.clone(),
                        l.to_string(),
                        mode.as_str().to_string(),
                        rs.len().to_string(),
                        rs.iter().filter(|r| r.unanswerable).count().to_string(),
                        csv_field(analysis::mean(&em)),
                        csv_field(analysis::mean(&f1)),
                    ]);
                }
            }
        }
        write_csv(
            &self.path("eval/summary.csv"),
            &["model", "level", "context_mode", "instances", "unanswerable", "mean_em", "mean_f1"],
            &summary,
        )
    }

    pub fn load_eval_records(&self) -> Result<Vec<EvalRecord>, PipelineError> {
        let mut out = Vec::new();
        for m in &self.cfg.evaluation.models {
            for &mode in &self.cfg.evaluation.context_modes {
                let p = self.path(&Self::eval_file(&m.name, mode));
                if p.exists() {
                    out.extend(read_jsonl::<EvalRecord>(&p)?);
                }
            }
        }
        Ok(out)
    }

    fn report(&self) -> Result<(), PipelineError> {
        let instances = self.load_instances(&[Split::Train, Split::Test], &[])?;
        let collections = self.load_collections()?;
        let records = self.load_eval_records()?;
        let dir = self.path("reports");
        let _ = std::fs::remove_dir_all(&dir);
        let mut keys: Vec<(String, ContextMode)> = records.iter().map(|r| (r.model.clone(), r.context_mode)).collect();
        keys.sort();
        keys.dedup();
        let mut plots = serde_json::Map::new();
        let mut failures = serde_json::Map::new();
        for by in
            [analysis::GroupBy::Skill, analysis::GroupBy::Topic, analysis::GroupBy::Subject, analysis::GroupBy::Level]
        {
            let mut rows = Vec::new();
            for (model, mode) in &keys {
                let rs: Vec<EvalRecord> =
                    records.iter().filter(|r| &r.model == model && r.context_mode == *mode).cloned().collect();
                for g in analysis::aggregate_scores(&rs, &instances, by) {
                    rows.push(vec![
                        model.clone(),
                        mode.as_str().into(),
                        g.group,
                        g.count.to_string(),
                        csv_field(g.mean_em),
                        csv_field(g.mean_f1),
                    ]);
                }
            }
            let name = serde_json::to_value(by).unwrap().as_str().unwrap().to_string();
            write_csv(
                &dir.join(format!("scores_by_{name}.csv")),
                &["model", "context_mode", name.as_str(), "count", "mean_em", "mean_f1"],
                &rows,
            )?;
        }
        let mut corr_rows = Vec::new();
        for (model, mode) in &keys {
            let rs: Vec<EvalRecord> =
                records.iter().filter(|r| &r.model == model && r.context_mode == *mode).cloned().collect();
            let key = format!("{model}.{}", mode.as_str());
            failures.insert(key.clone(), serde_json::to_value(analysis::failure_patterns(&rs, &instances)).unwrap());
            for c in analysis::factor_correlations(&rs, &instances, &collections) {
                corr_rows.push(vec![
                    model.clone(),
                    mode.as_str().into(),
                    c.x,
                    c.y,
                    c.n.to_string(),
                    csv_field(c.r),
                    csv_field(c.p),
                ]);
            }
            plots.insert(key, analysis::plot_data(&rs, &instances, &collections));
        }
        write_csv(
            &dir.join("factor_correlations.csv"),
            &["model", "context_mode", "x", "y", "n", "r", "p"],
            &corr_rows,
        )?;
        write_json(&dir.join("failures.json"), &failures)?;
        let test: Vec<BenchmarkInstance> = instances.iter().filter(|i| i.split == Split::Test).cloned().collect();
        let dist = analysis::command_distribution(&test);
        write_csv(
            &dir.join("command_distribution.csv"),
            &["command", "instances", "proportion"],
            &dist
                .iter()
                .map(|d| vec![d.command.clone(), d.instances.to_string(), format!("{:.4}", d.proportion)])
                .collect::<Vec<_>>(),
        )?;
        let neg = analysis::negation_subset(&test);
        let stats = analysis::dataset_stats(&collections, &instances);
        write_csv(
            &dir.join("dataset_stats.csv"),
            &[
                "level",
                "collections",
                "mean_articles",
                "min_tokens",
                "max_tokens",
                "mean_tokens",
                "train_instances",
                "test_instances",
            ],
            &stats
                .iter()
                .map(|s| {
                    vec![
                        s.level.to_string(),
                        s.collections.to_string(),
                        csv_field(s.mean_articles),
                        s.min_tokens.map(|t| t.to_string()).unwrap_or_default(),
                        s.max_tokens.map(|t| t.to_string()).unwrap_or_default(),
                        csv_field(s.mean_tokens),
                        s.train_instances.to_string(),
                        s.test_instances.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        )?;
        let plot = serde_json::json!({
            "models": plots,
            "command_distribution": dist,
            "dataset_stats": stats,
            "negation_subset_size": neg.len(),
        });
        write_json(&dir.join("plot_data.json"), &plot)
    }

    pub fn plot_data(&self) -> Result<serde_json::Value, PipelineError> {
        read_json(&self.path("reports/plot_data.json"))
    }
}

impl TemplateError {
    fn from_sql(id: &str) -> impl FnOnce(lcqa_sql::SqlError) -> TemplateError + '_ {
        move |e| TemplateError::Rejected { id: id.to_string(), reason: e.to_string() }
    }
}
