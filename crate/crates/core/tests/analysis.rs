use lcqa::analysis::{aggregate_scores, commands_in, failure_patterns, negation_subset, pearson, GroupBy, StatsError};
use lcqa::collection::Level;
use lcqa::corpus::Subject;
use lcqa::eval::{score_record, ContextMode, EvalRecord, EvalTarget};
use lcqa::template::{BenchmarkInstance, Skill, Split, Topic};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn instance(
    id: usize,
    skill: Skill,
    subject: Subject,
    level: Level,
    sql: &str,
    question: &str,
    gold: &str,
) -> BenchmarkInstance {
    BenchmarkInstance {
        instance_id: format!("i{id}"),
        collection_id: format!("c{}", id % 3),
        level,
        skill,
        topic: Topic::ALL[id % Topic::ALL.len()],
        sql: sql.into(),
        question: question.into(),
        gold_answer: gold.into(),
        split: Split::Test,
        tie_affected: false,
        subject,
    }
}

fn record(i: &BenchmarkInstance, samples: &[&str]) -> EvalRecord {
    let t = EvalTarget {
        instance_id: &i.instance_id,
        level: i.level,
        skill: i.skill,
        topic: i.topic,
        sql: &i.sql,
        gold: &i.gold_answer,
    };
    score_record(&t, "m", ContextMode::FullText, 100, samples.iter().map(|s| s.to_string()).collect())
}

fn fixture(n: usize, seed: u64) -> (Vec<BenchmarkInstance>, Vec<EvalRecord>) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let answers = ["10", "11", "NULL", "10, 12", "x"];
    let mut is = Vec::new();
    let mut rs = Vec::new();
    for k in 0..n {
        let i = instance(
            k,
            Skill::ALL[k % 6],
            Subject::ALL[k % 5],
            [Level(8192), Level(16384)][k % 2],
            "SELECT MAX(author_count) FROM articles",
            "How many?",
            "10",
        );
        let s: Vec<&str> = (0..3).map(|_| *answers.choose(&mut rng).unwrap()).collect();
        rs.push(record(&i, &s));
        is.push(i);
    }
    (is, rs)
}

#[test]
fn every_group_is_reported() {
    let (is, rs) = fixture(30, 1);
    assert_eq!(aggregate_scores(&rs, &is, GroupBy::Skill).len(), 6);
    let subj = aggregate_scores(&rs, &is, GroupBy::Subject);
    assert!(subj.len() <= 8);
    let empty: Vec<_> = subj.iter().filter(|g| g.count == 0).collect();
    assert_eq!(empty.len(), 3);
    assert!(empty.iter().all(|g| g.mean_em.is_none() && g.mean_f1.is_none()));
    let lv = aggregate_scores(&rs, &is, GroupBy::Level);
    assert_eq!(lv.iter().map(|g| g.group.as_str()).collect::<Vec<_>>(), ["8K", "16K"]);
    assert_eq!(aggregate_scores(&rs, &is, GroupBy::Topic).len(), 7);
}

#[test]
fn perfect_records_give_unit_means() {
    let (is, _) = fixture(24, 2);
    let rs: Vec<EvalRecord> = is.iter().map(|i| record(i, &["10", "10"])).collect();
    for by in [GroupBy::Skill, GroupBy::Topic, GroupBy::Subject, GroupBy::Level] {
        for g in aggregate_scores(&rs, &is, by).into_iter().filter(|g| g.count > 0) {
            assert_eq!(g.mean_em, Some(1.0));
            assert_eq!(g.mean_f1, Some(1.0));
        }
    }
}

#[test]
fn unjoinable_records_are_skipped() {
    let (is, mut rs) = fixture(6, 3);
    let mut stray = rs[0].clone();
    stray.instance_id = "missing".into();
    rs.push(stray);
    let total: usize = aggregate_scores(&rs, &is, GroupBy::Skill).iter().map(|g| g.count).sum();
    assert_eq!(total, 6);
}

#[test]
fn failure_flags_follow_rules() {
    let a = instance(
        0,
        Skill::Filtering,
        Subject::CS,
        Level(8192),
        "SELECT reference_count FROM articles WHERE author_count = 2",
        "How many references?",
        "16",
    );
    let b = instance(
        1,
        Skill::Sorting,
        Subject::CS,
        Level(8192),
        "SELECT title_word_count FROM articles ORDER BY author_count",
        "Counts?",
        "9, 17, 5",
    );
    let c =
        instance(2, Skill::Aggregating, Subject::CS, Level(8192), "SELECT COUNT(*) FROM articles", "How many?", "3");
    let rs = vec![record(&a, &["NULL"]), record(&b, &["9, 17"]), record(&c, &["P. Smith, Q. Jones"])];
    assert_eq!(rs[0].null_answer, [true]);
    assert_eq!(rs[1].partial_answer, [true]);
    assert_eq!(rs[2].format_violation, [true]);
    let rep = failure_patterns(&rs, &[a, b, c]);
    let row = |s: Skill| rep.per_skill.iter().find(|r| r.skill == s).unwrap().clone();
    assert_eq!(row(Skill::Filtering).null_rate, Some(1.0));
    assert_eq!(row(Skill::Sorting).partial_answer_rate, Some(1.0));
    assert_eq!(row(Skill::Aggregating).format_violation_rate, Some(1.0));
    assert_eq!(row(Skill::RelationalFiltering).samples, 0);
}

#[test]
fn negation_subset_rules() {
    let rel = "SELECT COUNT(*) FROM articles WHERE article_id NOT IN (SELECT article_id_citing FROM citing_cited) AND article_id IN (SELECT article_id_cited FROM citing_cited)";
    let is = vec![
        instance(
            0,
            Skill::RelationalFiltering,
            Subject::CS,
            Level(8192),
            rel,
            "How many articles are cited inside the collection yet never cite another member?",
            "2",
        ),
        instance(
            1,
            Skill::Aggregating,
            Subject::CS,
            Level(8192),
            "SELECT MAX(author_count) FROM articles",
            "What is the largest author count of any article?",
            "10",
        ),
        instance(
            2,
            Skill::Filtering,
            Subject::CS,
            Level(8192),
            "SELECT article_title FROM articles WHERE author_count <> 3",
            "Which titles belong to articles whose author count differs from three?",
            "x",
        ),
    ];
    let ids: Vec<&str> = negation_subset(&is).iter().map(|i| i.instance_id.as_str()).collect();
    assert_eq!(ids, ["i0", "i2"]);
}

#[test]
fn pearson_edge_cases() {
    assert!((pearson(&[1.0f64, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap().r - 1.0).abs() < 1e-12);
    assert!((pearson(&[1.0f64, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().r + 1.0).abs() < 1e-12);
    assert_eq!(pearson(&[1.0f64, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err(), StatsError::ZeroVariance);
    assert!(pearson(&[1.0f64, 2.0], &[1.0]).is_err());
}

#[test]
fn command_labels_follow_the_query() {
    let got = commands_in("SELECT COUNT(DISTINCT author_name) FROM article_author WHERE author_position >= 2 AND article_id NOT IN (SELECT article_id_citing FROM citing_cited)");
    for want in ["SELECT", "COUNT", "DISTINCT", "WHERE", ">=", "AND", "NOT", "IN"] {
        assert!(got.contains(&want), "{want} missing from {got:?}");
    }
    assert!(!got.contains(&"ORDER BY"));
}

proptest! {
    #[test]
    fn aggregate_is_order_and_shard_invariant(seed in any::<u64>(), n in 1usize..60, cut in 0usize..60) {
        let (is, rs) = fixture(n, seed);
        let base = aggregate_scores(&rs, &is, GroupBy::Skill);
        let mut shuffled = rs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 1));
        prop_assert_eq!(&aggregate_scores(&shuffled, &is, GroupBy::Skill), &base);
        let cut = cut.min(n);
        let (a, b) = (aggregate_scores(&rs[..cut], &is, GroupBy::Skill), aggregate_scores(&rs[cut..], &is, GroupBy::Skill));
        for ((x, y), whole) in a.iter().zip(&b).zip(&base) {
            prop_assert_eq!(x.count + y.count, whole.count);
            if whole.count > 0 {
                let merged = (x.mean_em.unwrap_or(0.0) * x.count as f64 + y.mean_em.unwrap_or(0.0) * y.count as f64) / whole.count as f64;
                prop_assert!((merged - whole.mean_em.unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pearson_of_affine_image_is_unit(xs in proptest::collection::vec(-1e3f64..1e3, 3..40), a in prop_oneof![0.01f64..100.0, -100.0f64..-0.01], b in -1e3f64..1e3) {
        let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        match pearson(&xs, &ys) {
            Ok(c) => prop_assert!((c.r - a.signum()).abs() < 1e-12, "r = {}", c.r),
            Err(e) => prop_assert_eq!(e, StatsError::ZeroVariance),
        }
    }
}
