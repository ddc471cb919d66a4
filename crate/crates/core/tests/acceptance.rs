//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::prompt_fixtures::{doc, golden, golden_db, ARTICLES_DOC, QUESTION, SQL};
use common::{illustrative_db, oracle_run, transformer_db};
use lcqa::analysis::pearson;
use lcqa::collection::{
    assemble_random, assemble_traversal, check_overlap, plan_collections, Collection, Level, PlanConfig, TraversalMode,
    MIN_ARTICLES,
};
use lcqa::corpus::{mini_corpus, ArticleCluster, Tokenizer};
use lcqa::eval::{exact_match, f1_score, render_prompt_fulltext, render_prompt_tables, ContextMode};
use lcqa::llm::{EchoConverter, EndpointConfig, FixedSqlConverter};
use lcqa::nl::{round_trip_validate, Validation};
use lcqa::pipeline::{io::hash_tree, Pipeline, PipelineConfig, Stage};
use lcqa::prompts;
use lcqa::seed::rng_for;
use lcqa::template::{execute_query, serialize_answer, InstantiatedQuery, Skill, Split, Topic};
use proptest::test_runner::{Config, TestRunner};

const ORACLE_DATABASES: usize = 200;
const ORACLE_SEED: u64 = 20_240_601;
const TIME_LIMIT: Duration = Duration::from_secs(300);
const ASSEMBLIES: usize = 500;
const PLAN_SEEDS: u64 = 20;
const MAX_OVERLAP: f64 = 0.5;
const PROPERTY_CASES: u32 = 10_000;
const PEARSON_TOL: f64 = 1e-9;
const MIN_INSTANCES: usize = 20;
const PROMPT_TOKENS_TARGET: f64 = 2048.0;
const PROMPT_TOKENS_BAND: f64 = 0.5;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Suite {
    failed: usize,
}

impl Suite {
    fn check(&mut self, n: usize, name: &str, f: impl FnOnce() -> Outcome) {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match r {
            Ok(detail) => println!("PASS [{n}] {name}: {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL [{n}] {name}: {detail}");
            }
        }
    }
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let st = oracle_run(ORACLE_DATABASES, ORACLE_SEED);
    let elapsed = t.elapsed();
    ensure(st.databases == ORACLE_DATABASES, format!("{} databases", st.databases))?;
    ensure(
        st.mismatches.is_empty(),
        format!("{} mismatches, first: {}", st.mismatches.len(), st.mismatches.first().cloned().unwrap_or_default()),
    )?;
    ensure(st.exact + st.tie_multiset_match == st.compared, "unaccounted comparisons")?;
    ensure(elapsed < TIME_LIMIT, format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "{} queries on {} databases, {} byte-identical, {} tie-flagged matched as multisets, {} not instantiable, {elapsed:.1?}",
        st.compared, st.databases, st.exact, st.tie_multiset_match, st.rejected
    ))
}

fn illustrative_pairs() -> Outcome {
    let (a, b) = (illustrative_db(), transformer_db());
    let cases = [
        (&a, "SELECT MAX(author_count) FROM articles", "10"),
        (&a, "SELECT title_word_count FROM articles ORDER BY author_count ASC", "9, 17, 5, 6, 9, 12"),
        (&a, "SELECT reference_count FROM articles WHERE author_count = 2", "16"),
        (
            &a,
            "SELECT COUNT(*) FROM articles WHERE article_id NOT IN (SELECT article_id_citing FROM citing_cited) AND article_id IN (SELECT article_id_cited FROM citing_cited)",
            "2",
        ),
        (&b, "SELECT SUM(title_word_count) FROM articles WHERE reference_count = 60", "13"),
        (&b, "SELECT author_name FROM article_author WHERE author_position < 2 ORDER BY author_position DESC", "N. Shazeer, A. Vaswani"),
    ];
    for (db, sql, want) in cases {
        let got = serialize_answer(&execute_query(db, sql).map_err(|e| format!("{sql}: {e}"))?);
        ensure(got == want, format!("{sql}: got `{got}`, want `{want}`"))?;
    }
    Ok("6/6 answers reproduced".into())
}

fn round_trip_protocol() -> Outcome {
    let db = illustrative_db();
    let ep = EndpointConfig::default();
    let q = |sql: &str| InstantiatedQuery {
        template_id: "t".into(),
        collection_id: "c".into(),
        skill: Skill::Filtering,
        topic: Topic::ReferenceCount,
        sql: sql.into(),
        bindings: Default::default(),
        draws: 1,
    };
    let filter = "SELECT reference_count FROM articles WHERE author_count = 2";
    let echo = round_trip_validate(&q(filter), &db, &EchoConverter::new(), &ep, 10).map_err(|e| e.to_string())?;
    ensure(echo.is_accepted() && echo.attempts() == 1, format!("echo: {echo:?}"))?;

    let rewrite =
        EchoConverter::new().with_rewrite(filter, "SELECT reference_count FROM articles WHERE 2 = author_count");
    let v = round_trip_validate(&q(filter), &db, &rewrite, &ep, 10).map_err(|e| e.to_string())?;
    ensure(v.is_accepted(), format!("rewrite: {v:?}"))?;

    let wrong = FixedSqlConverter { sql: "SELECT COUNT(*) FROM articles".into() };
    let v = round_trip_validate(&q("SELECT MAX(author_count) FROM articles"), &db, &wrong, &ep, 10)
        .map_err(|e| e.to_string())?;
    match &v {
        Validation::Discarded { log, .. } => ensure(log.len() == 10, format!("discarded after {}", log.len()))?,
        other => return Err(format!("always-wrong: {other:?}")),
    }
    Ok("echo accepted on attempt 1, rewrite accepted by execution, always-wrong discarded after 10".into())
}

fn collection_constraints() -> Outcome {
    let tok = Tokenizer::default();
    let corpus = mini_corpus(&tok);
    let cluster = ArticleCluster::whole_corpus(&corpus).ok_or("empty corpus")?;
    let levels = [Level(8 * 1024), Level(16 * 1024), Level(32 * 1024)];
    let mut means = Vec::new();
    for level in levels {
        let mut articles = 0usize;
        for strategy in ["random", "dfs", "bfs"] {
            for i in 0..ASSEMBLIES {
                let mut rng = rng_for(ORACLE_SEED, &["acceptance", &level.to_string(), strategy, &i.to_string()]);
                let c = match strategy {
                    "random" => assemble_random(&cluster, &corpus, level, &mut rng),
                    "dfs" => assemble_traversal(&cluster, &corpus, level, TraversalMode::Dfs, &mut rng),
                    _ => assemble_traversal(&cluster, &corpus, level, TraversalMode::Bfs, &mut rng),
                }
                .map_err(|e| format!("{level} {strategy}: {e}"))?;
                ensure(
                    c.article_ids.len() >= MIN_ARTICLES,
                    format!("{level} {strategy}: {} articles", c.article_ids.len()),
                )?;
                ensure(c.total_tokens >= level.budget(), format!("{level} {strategy}: {} tokens", c.total_tokens))?;
                let sum: u64 = c.article_ids.iter().map(|id| corpus.get(id).unwrap().token_count).sum();
                ensure(sum == c.total_tokens, "total_tokens disagrees with article counts")?;
                articles += c.article_ids.len();
            }
        }
        means.push(articles as f64 / (3 * ASSEMBLIES) as f64);
    }
    ensure(means.windows(2).all(|w| w[0] < w[1]), format!("means not increasing: {means:?}"))?;

    let mut planned = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..PLAN_SEEDS {
        let (cs, _) = plan_collections(std::slice::from_ref(&cluster), &corpus, &levels, &PlanConfig::default(), seed);
        let mut by_level: BTreeMap<Level, Vec<&Collection>> = BTreeMap::new();
        for c in &cs {
            by_level.entry(c.level).or_default().push(c);
        }
        for group in by_level.values() {
            for (i, a) in group.iter().enumerate() {
                for b in &group[i + 1..] {
                    worst = worst.max(check_overlap(a, b));
                }
            }
        }
        planned += cs.len();
    }
    ensure(worst <= MAX_OVERLAP, format!("overlap {worst}"))?;
    Ok(format!(
        "{} assemblies per strategy and level, mean articles {:.2} < {:.2} < {:.2}, max same-level overlap {worst:.2} over {planned} planned collections",
        ASSEMBLIES, means[0], means[1], means[2]
    ))
}

fn metric_correctness() -> Outcome {
    let em_cases = [
        ("10", "10", 1),
        ("null", "NULL", 1),
        ("A. Vaswani, N. Shazeer", "N. Shazeer, A. Vaswani", 0),
        ("11", "10", 0),
    ];
    for (p, g, want) in em_cases {
        ensure(exact_match(p, g) == want, format!("EM({p:?}, {g:?})"))?;
    }
    ensure(f1_score("A. Vaswani", "A. Vaswani") == 1.0, "F1 identical")?;
    ensure((f1_score("N. Shazeer, A. Vaswani", "A. Vaswani") - 2.0 / 3.0).abs() < 1e-12, "F1 2/3")?;
    ensure(f1_score("alpha beta", "gamma delta") == 0.0, "F1 disjoint")?;

    let text = || proptest::string::string_regex("[ a-cA-C0-9.,]{0,12}").unwrap();
    let mut runner = TestRunner::new(Config { cases: PROPERTY_CASES, failure_persistence: None, ..Config::default() });
    runner
        .run(&(text(), text()), |(p, g)| {
            proptest::prop_assert!(exact_match(&p, &g) == 0 || f1_score(&p, &g) == 1.0);
            Ok(())
        })
        .map_err(|e| format!("EM implies F1: {e}"))?;

    let r = pearson(&[1.0f64, 2.0, 3.0], &[1.0, 3.0, 2.0]).map_err(|e| e.to_string())?.r;
    ensure((r - 0.5).abs() < PEARSON_TOL, format!("r = {r}"))?;
    let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin() * 3.0 + i as f64 * 0.2).collect();
    let ys: Vec<f64> = (0..50).map(|i| (i as f64 * 1.3).cos() + i as f64 * 0.1).collect();
    let n = xs.len() as f64;
    let (sx, sy): (f64, f64) = (xs.iter().sum(), ys.iter().sum());
    let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
    let sxx: f64 = xs.iter().map(|a| a * a).sum();
    let syy: f64 = ys.iter().map(|b| b * b).sum();
    let closed = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    let got = pearson(&xs, &ys).map_err(|e| e.to_string())?.r;
    ensure((got - closed).abs() < PEARSON_TOL, format!("pearson {got} vs closed form {closed}"))?;
    Ok(format!("unit cases exact, EM=1 implies F1=1 over {PROPERTY_CASES} pairs, pearson within {PEARSON_TOL:e}"))
}

fn prompt_fidelity() -> Outcome {
    let pairs = [
        ("sql_to_question", prompts::sql_to_question(SQL)),
        ("question_to_sql", prompts::question_to_sql(QUESTION)),
        ("eval_fulltext", render_prompt_fulltext(&doc(), QUESTION).map_err(|e| e.to_string())?),
        ("eval_tables", render_prompt_tables(&golden_db(), QUESTION).map_err(|e| e.to_string())?),
        ("reasoning_fulltext", prompts::reasoning_fulltext(ARTICLES_DOC, QUESTION)),
    ];
    for (name, got) in &pairs {
        ensure(*got == golden(name), format!("{name} differs from its golden file"))?;
    }
    Ok(format!("{} prompts byte-identical", pairs.len()))
}

const DESK_CONFIG: &str = r#"
seed = 7
output_dir = "run"

[collections]
levels = ["8K"]
per_level = 10

[generation]
templates_per_collection = 10

[converter]
kind = "echo"

[evaluation]
context_modes = ["full_text", "db_tables"]
samples = 3
splits = ["train", "test"]

[[evaluation.models]]
name = "gold-echo"
kind = "gold_echo"

[[evaluation.models]]
name = "uuid"
kind = "uuid"
"#;

struct DeskRun {
    _dir: tempfile::TempDir,
    pipeline: Pipeline,
}

fn desk_pipeline(dir: &std::path::Path) -> Pipeline {
    Pipeline::new(PipelineConfig::from_toml(DESK_CONFIG, dir).expect("desk config parses"))
}

fn end_to_end(run: &mut Option<DeskRun>) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = desk_pipeline(dir.path());
    let t = Instant::now();
    p.run(&Stage::ALL).map_err(|e| format!("{e:#}"))?;
    let elapsed = t.elapsed();
    let n = p.load_instances(&[Split::Train, Split::Test], &[]).map_err(|e| e.to_string())?.len();
    ensure(n >= MIN_INSTANCES, format!("{n} instances"))?;
    let records = p.load_eval_records().map_err(|e| e.to_string())?;
    let mean_em = |model: &str| {
        let v: Vec<f64> = records.iter().filter(|r| r.model == model).filter_map(|r| r.mean_em).collect();
        (v.iter().sum::<f64>() / v.len() as f64, v.len())
    };
    let (gold, ng) = mean_em("gold-echo");
    let (uuid, nu) = mean_em("uuid");
    ensure(ng > 0 && gold == 1.0, format!("gold-echo EM {gold} over {ng}"))?;
    ensure(nu > 0 && uuid == 0.0, format!("uuid EM {uuid} over {nu}"))?;
    ensure(elapsed < TIME_LIMIT, format!("took {elapsed:.1?}"))?;
    *run = Some(DeskRun { _dir: dir, pipeline: p });
    Ok(format!("{n} instances, gold-echo EM {:.0}%, uuid EM {:.0}%, {elapsed:.1?}", gold * 100.0, uuid * 100.0))
}

fn reproducibility(run: &Option<DeskRun>) -> Outcome {
    let first = &run.as_ref().ok_or("end-to-end run unavailable")?.pipeline;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = desk_pipeline(dir.path());
    second.run(&Stage::ALL).map_err(|e| format!("{e:#}"))?;
    let (a, b) = (hash_tree(first.out_dir(), "instances"), hash_tree(second.out_dir(), "instances"));
    let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
    ensure(!a.is_empty(), "no instance files")?;
    ensure(a == b, "instance files differ")?;
    Ok(format!("{} instance files hash-identical across two runs", a.len()))
}

fn telemetry(run: &Option<DeskRun>) -> Outcome {
    println!(
        "NOTE [9] Model scores and failure-rate tables measured with frontier models at up to 1M tokens of context \
         are not reproducible at desk scale; criteria 1-8 and the telemetry below stand in for them."
    );
    let p = &run.as_ref().ok_or("end-to-end run unavailable")?.pipeline;
    let records = p.load_eval_records().map_err(|e| e.to_string())?;
    let toks: Vec<f64> =
        records.iter().filter(|r| r.context_mode == ContextMode::DbTables).map(|r| r.prompt_tokens as f64).collect();
    ensure(!toks.is_empty(), "no db-tables records")?;
    let mean = toks.iter().sum::<f64>() / toks.len() as f64;
    let (lo, hi) =
        (PROMPT_TOKENS_TARGET * (1.0 - PROMPT_TOKENS_BAND), PROMPT_TOKENS_TARGET * (1.0 + PROMPT_TOKENS_BAND));
    ensure((lo..=hi).contains(&mean), format!("mean db-tables prompt {mean:.0} tokens outside [{lo}, {hi}]"))?;
    Ok(format!("mean db-tables prompt {mean:.0} tokens over {} prompts, band [{lo}, {hi}]", toks.len()))
}

fn main() {
    let mut s = Suite { failed: 0 };
    let mut run = None;
    s.check(1, "oracle equivalence", oracle_equivalence);
    s.check(2, "illustrative pairs", illustrative_pairs);
    s.check(3, "round-trip protocol", round_trip_protocol);
    s.check(4, "collection constraints", collection_constraints);
    s.check(5, "metric correctness", metric_correctness);
    s.check(6, "prompt fidelity", prompt_fidelity);
    s.check(7, "end-to-end desk scale", || end_to_end(&mut run));
    s.check(8, "reproducibility", || reproducibility(&run));
    s.check(9, "non-reproducibility statement and prompt telemetry", || telemetry(&run));
    println!("{} of 9 criteria failed", s.failed);
    if s.failed > 0 {
        std::process::exit(1);
    }
}
