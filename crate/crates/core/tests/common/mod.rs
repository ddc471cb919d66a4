#![allow(dead_code)]

use std::path::Path;

use lcqa::collection::{Collection, Level, Strategy};
use lcqa::corpus::{Article, Corpus, Subject};
use lcqa::metadata::{build_database, MetadataDatabase, TABLE_NAMES};
use lcqa_sql::{exact_from_f64, format_exact};
use rand::seq::SliceRandom;
use rand::Rng;

const WORDS: &[&str] = &[
    "graph",
    "neural",
    "learning",
    "of",
    "the",
    "quantum",
    "market",
    "model",
    "data",
    "networks",
    "for",
    "optimal",
    "attention",
    "stochastic",
    "bayesian",
    "inference",
    "spectral",
    "robust",
];
const NAMES: &[&str] = &[
    "A. Vaswani",
    "N. Shazeer",
    "P. Smith",
    "Q. Jones",
    "L. Chen",
    "M. Rossi",
    "D. O'Neil",
    "K. Tanaka",
    "S. Gupta",
    "R. Müller",
    "J. García",
    "E. Novak",
];

pub fn article(id: &str, title: &str, authors: &[&str], refs: &[&str]) -> Article {
    Article {
        article_id: id.into(),
        title: title.into(),
        authors: authors.iter().map(|s| s.to_string()).collect(),
        reference_ids: refs.iter().map(|s| s.to_string()).collect(),
        full_text: format!("{title}\n\nBody of {id}."),
        subject: Subject::CS,
        token_count: 100,
    }
}

pub fn collection_of(id: &str, ids: &[&str]) -> Collection {
    Collection {
        collection_id: id.into(),
        level: Level(8 * 1024),
        strategy: Strategy::Random,
        article_ids: ids.iter().map(|s| s.to_string()).collect(),
        total_tokens: 0,
    }
}

/// A random collection of `n` articles with in-collection and external references.
pub fn random_database(rng: &mut impl Rng, n: usize, tag: &str) -> MetadataDatabase {
    let ids: Vec<String> = (0..n).map(|i| format!("{tag}-a{i:02}")).collect();
    let mut arts = Vec::with_capacity(n);
    for id in &ids {
        let wc = rng.gen_range(1..=14);
        let title: Vec<&str> = (0..wc).map(|_| *WORDS.choose(rng).unwrap()).collect();
        let na = rng.gen_range(1..=10);
        let authors: Vec<&str> = NAMES.choose_multiple(rng, na).copied().collect();
        let mut refs: Vec<String> = ids.iter().filter(|o| *o != id && rng.gen_bool(0.12)).cloned().collect();
        let ext = rng.gen_range(0..40);
        refs.extend((0..ext).map(|k| format!("ext-{tag}-{id}-{k}")));
        refs.shuffle(rng);
        let refs: Vec<&str> = refs.iter().map(String::as_str).collect();
        let mut a = article(id, &title.join(" "), &authors, &refs);
        a.subject = *Subject::ALL.choose(rng).unwrap();
        arts.push(a);
    }
    let corpus = Corpus::new(arts).unwrap();
    let idr: Vec<&str> = ids.iter().map(String::as_str).collect();
    build_database(&collection_of(tag, &idr), &corpus).unwrap()
}

/// Loads the CSV dumps in `dir` into an in-memory SQLite database.
pub fn sqlite_from_dumps(dir: &Path) -> rusqlite::Connection {
    let conn = rusqlite::Connection::open_in_memory().unwrap();
    conn.execute_batch(
        "CREATE TABLE articles (article_id TEXT, article_title TEXT, title_word_count INTEGER, author_count INTEGER, reference_count INTEGER);
         CREATE TABLE article_author (relation_id TEXT, article_id TEXT, author_name TEXT, author_position INTEGER);
         CREATE TABLE citing_cited (relation_id TEXT, article_id_citing TEXT, article_id_cited TEXT);",
    )
    .unwrap();
    for t in TABLE_NAMES {
        let mut r = csv::Reader::from_path(dir.join(format!("{t}.csv"))).unwrap();
        let header = r.headers().unwrap().clone();
        let ph: Vec<String> = (1..=header.len()).map(|i| format!("?{i}")).collect();
        let sql = format!("INSERT INTO {t} VALUES ({})", ph.join(", "));
        let mut stmt = conn.prepare(&sql).unwrap();
        for rec in r.records() {
            let rec = rec.unwrap();
            let vals: Vec<rusqlite::types::Value> = rec
                .iter()
                .zip(header.iter())
                .map(|(v, h)| {
                    if h.ends_with("_count") || h == "author_position" {
                        rusqlite::types::Value::Integer(v.parse().unwrap())
                    } else {
                        rusqlite::types::Value::Text(v.to_string())
                    }
                })
                .collect();
            stmt.execute(rusqlite::params_from_iter(vals)).unwrap();
        }
    }
    conn
}

fn render_sqlite(v: rusqlite::types::ValueRef<'_>) -> String {
    use rusqlite::types::ValueRef;
    match v {
        ValueRef::Null => "NULL".into(),
        ValueRef::Integer(i) => i.to_string(),
        ValueRef::Real(x) => format_exact(&exact_from_f64(x).expect("finite real")),
        ValueRef::Text(t) => String::from_utf8(t.to_vec()).unwrap(),
        ValueRef::Blob(_) => panic!("unexpected blob"),
    }
}

pub fn sqlite_rows(conn: &rusqlite::Connection, sql: &str) -> Vec<Vec<String>> {
    let mut stmt = conn.prepare(sql).unwrap_or_else(|e| panic!("sqlite rejected {sql}: {e}"));
    let ncol = stmt.column_count();
    let mut rows = stmt.query([]).unwrap();
    let mut out = Vec::new();
    while let Some(row) = rows.next().unwrap() {
        out.push((0..ncol).map(|i| render_sqlite(row.get_ref(i).unwrap())).collect());
    }
    out
}

/// Same serialization as the gold answers: values row-major, ", "-joined.
pub fn serialize_rows(rows: &[Vec<String>]) -> String {
    if rows.is_empty() {
        return "NULL".into();
    }
    rows.iter().flatten().cloned().collect::<Vec<_>>().join(", ")
}

/// The six-article collection behind the illustrative question table.
pub fn illustrative_db() -> MetadataDatabase {
    let titles = [
        "w w w w w w w w w",
        "w w w w w w w w w w w w w w w w w",
        "w w w w w",
        "w w w w w w",
        "w w w w w w w w w",
        "w w w w w w w w w w w w",
    ];
    let author_counts = [1usize, 2, 3, 4, 6, 10];
    let ext: Vec<String> = (0..40).map(|k| format!("x{k}")).collect();
    let refs: [Vec<&str>; 6] = [
        vec!["a3", "a4", "x0"],
        ["a3"].into_iter().chain(ext[..15].iter().map(String::as_str)).collect(),
        vec!["x1"],
        vec![],
        vec!["a2", "x2", "x3"],
        vec!["x9"],
    ];
    let mut arts = Vec::new();
    for i in 0..6 {
        let names: Vec<String> = (0..author_counts[i]).map(|k| format!("Author {i}-{k}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        arts.push(article(&format!("a{}", i + 1), titles[i], &names, &refs[i]));
    }
    let corpus = Corpus::new(arts).unwrap();
    build_database(&collection_of("illustrative-a", &["a1", "a2", "a3", "a4", "a5", "a6"]), &corpus).unwrap()
}

/// One article: two authors, a 13-word title and 60 references.
pub fn transformer_db() -> MetadataDatabase {
    let ext: Vec<String> = (0..60).map(|k| format!("ref{k}")).collect();
    let refs: Vec<&str> = ext.iter().map(String::as_str).collect();
    let a = article(
        "t1",
        "Attention Is All You Need for sequence transduction with simple attention networks only",
        &["A. Vaswani", "N. Shazeer"],
        &refs,
    );
    let corpus = Corpus::new(vec![a]).unwrap();
    build_database(&collection_of("illustrative-b", &["t1"]), &corpus).unwrap()
}

#[derive(Debug, Default)]
pub struct OracleStats {
    pub databases: usize,
    pub compared: usize,
    pub exact: usize,
    pub tie_affected: usize,
    pub tie_multiset_match: usize,
    pub rejected: usize,
    pub mismatches: Vec<String>,
}

/// Instantiates every bundled template on `n_dbs` random databases and
/// compares the serialized answers with SQLite reading the CSV dumps.
pub fn oracle_run(n_dbs: usize, seed: u64) -> OracleStats {
    use lcqa::seed::rng_for;
    use lcqa::template::{execute_query, instantiate, serialize_answer, TemplateLibrary};

    let lib = TemplateLibrary::bundled();
    let tmp = tempfile::tempdir().unwrap();
    let mut st = OracleStats::default();
    for d in 0..n_dbs {
        let tag = format!("db{d:03}");
        let mut rng = rng_for(seed, &["oracle", &tag]);
        let n = rng.gen_range(3..=50);
        let db = random_database(&mut rng, n, &tag);
        let dir = tmp.path().join(&tag);
        db.write_dumps(&dir).unwrap();
        let reloaded = MetadataDatabase::load_dumps(&tag, &dir).unwrap();
        let sqlite = sqlite_from_dumps(&dir);
        st.databases += 1;
        for t in lib.templates() {
            let mut r = rng_for(seed, &["oracle", &tag, &t.template_id]);
            let Ok(q) = instantiate(t, &reloaded, &mut r) else {
                st.rejected += 1;
                continue;
            };
            let ours = execute_query(&reloaded, &q.sql).unwrap_or_else(|e| panic!("{}: {e}", q.sql));
            let theirs = sqlite_rows(&sqlite, &q.sql);
            st.compared += 1;
            if ours.tie_affected {
                st.tie_affected += 1;
                let mut a: Vec<Vec<String>> =
                    ours.rows.iter().map(|r| r.iter().map(|v| v.to_string()).collect()).collect();
                let mut b = theirs.clone();
                a.sort();
                b.sort();
                if a == b {
                    st.tie_multiset_match += 1;
                } else {
                    st.mismatches.push(format!("{} [tie]: {:?} vs {:?}", q.sql, a, b));
                }
            } else if serialize_answer(&ours) == serialize_rows(&theirs) {
                st.exact += 1;
            } else {
                st.mismatches.push(format!(
                    "{}: `{}` vs `{}`",
                    q.sql,
                    serialize_answer(&ours),
                    serialize_rows(&theirs)
                ));
            }
        }
    }
    st
}

pub mod prompt_fixtures {
    use lcqa::collection::ContextDocument;
    use lcqa::metadata::{ArticleAuthorRow, ArticlesRow, MetadataDatabase};

    pub const ARTICLES_DOC: &str = "Title A\nBody with {question} braces.\n\n---\n\nTitle B\nSecond body.";
    pub const QUESTION: &str = "How many articles cite {sql_query} or 'NULL'?";
    pub const SQL: &str = "SELECT MAX(author_count) FROM articles";

    pub fn golden(name: &str) -> String {
        std::fs::read_to_string(format!("{}/tests/golden/{name}.txt", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    pub fn golden_db() -> MetadataDatabase {
        MetadataDatabase::from_rows(
            "g",
            vec![ArticlesRow {
                article_id: "a1".into(),
                article_title: "Attention Is All You Need".into(),
                title_word_count: 5,
                author_count: 2,
                reference_count: 40,
            }],
            vec![
                ArticleAuthorRow {
                    relation_id: "r1".into(),
                    article_id: "a1".into(),
                    author_name: "A. Vaswani".into(),
                    author_position: 0,
                },
                ArticleAuthorRow {
                    relation_id: "r2".into(),
                    article_id: "a1".into(),
                    author_name: "N. Shazeer".into(),
                    author_position: 1,
                },
            ],
            vec![],
        )
        .unwrap()
    }

    pub fn doc() -> ContextDocument {
        ContextDocument { collection_id: "g".into(), text: ARTICLES_DOC.into(), article_offsets: vec![] }
    }
}
