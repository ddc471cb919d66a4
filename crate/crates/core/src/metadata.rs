//! Per-collection metadata database: `articles`, `article_author` and
//! `citing_cited`.

use std::collections::HashSet;
use std::path::Path;

use lcqa_sql::{Column, ColumnType, Database, ResultTable, Table, Value};
use serde::{Deserialize, Serialize};

use crate::collection::Collection;
use crate::corpus::Corpus;
use crate::error::DbError;
use crate::seed::content_id;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticlesRow {
    pub article_id: String,
    pub article_title: String,
    pub title_word_count: i64,
    pub author_count: i64,
    pub reference_count: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleAuthorRow {
    pub relation_id: String,
    pub article_id: String,
    pub author_name: String,
    pub author_position: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitingCitedRow {
    pub relation_id: String,
    pub article_id_citing: String,
    pub article_id_cited: String,
}

/// Word count with any whitespace run as one boundary.
pub fn title_word_count(title: &str) -> i64 {
    title.split_whitespace().count() as i64
}

pub fn citation_relation_id(citing: &str, cited: &str) -> String {
    content_id(&["citing_cited", citing, cited])
}

pub fn author_relation_id(article_id: &str, position: i64, name: &str) -> String {
    content_id(&["article_author", article_id, &position.to_string(), name])
}

/// One edge per ordered in-collection pair (x, y) with y in x's references,
/// in collection order then reference-list order.
pub fn derive_citation_edges(c: &Collection, corpus: &Corpus) -> Result<Vec<CitingCitedRow>, DbError> {
    let members: HashSet<&str> = c.article_ids.iter().map(String::as_str).collect();
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for x in &c.article_ids {
        let a = corpus.get(x).ok_or_else(|| DbError::MissingArticle(x.clone()))?;
        for y in &a.reference_ids {
            if y != x && members.contains(y.as_str()) && seen.insert((x.as_str(), y.as_str())) {
                rows.push(CitingCitedRow {
                    relation_id: citation_relation_id(x, y),
                    article_id_citing: x.clone(),
                    article_id_cited: y.clone(),
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetadataDatabase {
    pub collection_id: String,
    pub articles: Vec<ArticlesRow>,
    pub article_author: Vec<ArticleAuthorRow>,
    pub citing_cited: Vec<CitingCitedRow>,
    engine: Database,
}

pub const TABLE_NAMES: [&str; 3] = ["articles", "article_author", "citing_cited"];

fn col(name: &str, ty: ColumnType) -> Column {
    Column { name: name.into(), ty }
}

impl MetadataDatabase {
    pub fn from_rows(
        collection_id: impl Into<String>,
        articles: Vec<ArticlesRow>,
        article_author: Vec<ArticleAuthorRow>,
        citing_cited: Vec<CitingCitedRow>,
    ) -> Result<Self, DbError> {
        use ColumnType::{Integer, Text};
        let mut t_art = Table::new(
            "articles",
            vec![
                col("article_id", Text),
                col("article_title", Text),
                col("title_word_count", Integer),
                col("author_count", Integer),
                col("reference_count", Integer),
            ],
        )
        .with_key_column("article_id")?;
        for r in &articles {
            t_art.push_row(vec![
                Value::text(&r.article_id),
                Value::text(&r.article_title),
                Value::Int(r.title_word_count),
                Value::Int(r.author_count),
                Value::Int(r.reference_count),
            ])?;
        }
        let mut t_auth = Table::new(
            "article_author",
            vec![
                col("relation_id", Text),
                col("article_id", Text),
                col("author_name", Text),
                col("author_position", Integer),
            ],
        )
        .with_key_column("relation_id")?;
        for r in &article_author {
            t_auth.push_row(vec![
                Value::text(&r.relation_id),
                Value::text(&r.article_id),
                Value::text(&r.author_name),
                Value::Int(r.author_position),
            ])?;
        }
        let mut t_cite = Table::new(
            "citing_cited",
            vec![col("relation_id", Text), col("article_id_citing", Text), col("article_id_cited", Text)],
        )
        .with_key_column("relation_id")?;
        for r in &citing_cited {
            t_cite.push_row(vec![
                Value::text(&r.relation_id),
                Value::text(&r.article_id_citing),
                Value::text(&r.article_id_cited),
            ])?;
        }
        let mut engine = Database::new();
        engine.add_table(t_art);
        engine.add_table(t_auth);
        engine.add_table(t_cite);
        Ok(MetadataDatabase { collection_id: collection_id.into(), articles, article_author, citing_cited, engine })
    }

    pub fn engine(&self) -> &Database {
        &self.engine
    }

    pub fn query(&self, sql: &str) -> Result<ResultTable, lcqa_sql::SqlError> {
        self.engine.query(sql)
    }

    /// CSV dump of one table with a header row.
    pub fn to_csv(&self, table: &str) -> String {
        let empty = match table {
            "articles" => self.articles.is_empty(),
            "article_author" => self.article_author.is_empty(),
            "citing_cited" => self.citing_cited.is_empty(),
            other => panic!("unknown table {other}"),
        };
        if empty {
            // The csv writer only emits headers together with a record.
            return format!("{}\n", csv_header(table));
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let res = match table {
            "articles" => write_rows(&mut w, &self.articles),
            "article_author" => write_rows(&mut w, &self.article_author),
            _ => write_rows(&mut w, &self.citing_cited),
        };
        res.expect("writing to memory");
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 csv")
    }

    pub fn write_dumps(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for t in TABLE_NAMES {
            std::fs::write(dir.join(format!("{t}.csv")), self.to_csv(t))?;
        }
        Ok(())
    }

    pub fn load_dumps(collection_id: &str, dir: &Path) -> Result<Self, DbError> {
        fn read<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DbError> {
            let err = |m: String| DbError::Dump { path: path.to_path_buf(), message: m };
            let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
            r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| err(e.to_string()))
        }
        MetadataDatabase::from_rows(
            collection_id,
            read(&dir.join("articles.csv"))?,
            read(&dir.join("article_author.csv"))?,
            read(&dir.join("citing_cited.csv"))?,
        )
    }
}

fn write_rows<T: Serialize>(w: &mut csv::Writer<Vec<u8>>, rows: &[T]) -> csv::Result<()> {
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_header(table: &str) -> &'static str {
    match table {
        "articles" => "article_id,article_title,title_word_count,author_count,reference_count",
        "article_author" => "relation_id,article_id,author_name,author_position",
        "citing_cited" => "relation_id,article_id_citing,article_id_cited",
        other => panic!("unknown table {other}"),
    }
}

pub fn build_database(c: &Collection, corpus: &Corpus) -> Result<MetadataDatabase, DbError> {
    let mut articles = Vec::with_capacity(c.article_ids.len());
    let mut authors = Vec::new();
    for id in &c.article_ids {
        let a = corpus.get(id).ok_or_else(|| DbError::MissingArticle(id.clone()))?;
        if a.authors.is_empty() {
            return Err(DbError::EmptyAuthors(id.clone()));
        }
        articles.push(ArticlesRow {
            article_id: a.article_id.clone(),
            article_title: a.title.clone(),
            title_word_count: title_word_count(&a.title),
            author_count: a.authors.len() as i64,
            reference_count: a.reference_ids.len() as i64,
        });
        for (pos, name) in a.authors.iter().enumerate() {
            authors.push(ArticleAuthorRow {
                relation_id: author_relation_id(id, pos as i64, name),
                article_id: id.clone(),
                author_name: name.clone(),
                author_position: pos as i64,
            });
        }
    }
    let cites = derive_citation_edges(c, corpus)?;
    MetadataDatabase::from_rows(c.collection_id.clone(), articles, authors, cites)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn title_word_counts() {
        assert_eq!(title_word_count("Attention Is All You Need"), 5);
        assert_eq!(title_word_count(""), 0);
        assert_eq!(title_word_count("Graph-based  summarization"), 2);
        assert_eq!(title_word_count("  padded\ttitle \n"), 2);
    }

    #[test]
    fn empty_table_dump_still_has_header() {
        let db = MetadataDatabase::from_rows("c", vec![], vec![], vec![]).unwrap();
        assert_eq!(db.to_csv("citing_cited"), "relation_id,article_id_citing,article_id_cited\n");
    }
}
