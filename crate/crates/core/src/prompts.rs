//! Prompt templates for conversion, evaluation and reasoning-trace export.

use std::collections::BTreeMap;

use crate::template::substitute;

pub const SQL_TO_QUESTION: &str = include_str!("../assets/prompts/sql_to_question.txt");
pub const QUESTION_TO_SQL: &str = include_str!("../assets/prompts/question_to_sql.txt");
pub const EVAL_FULLTEXT: &str = include_str!("../assets/prompts/eval_fulltext.txt");
pub const EVAL_TABLES: &str = include_str!("../assets/prompts/eval_tables.txt");
pub const REASONING_FULLTEXT: &str = include_str!("../assets/prompts/reasoning_fulltext.txt");

pub const P_SQL: &str = "sql_query";
pub const P_QUESTION: &str = "question";
pub const P_ARTICLES: &str = "scientific articles";
pub const P_T_ARTICLES: &str = "the table of articles";
pub const P_T_AUTHORS: &str = "the table of article-author";
pub const P_T_CITES: &str = "the table of citing-cited";

/// Substitutes each `{name}` once; inserted values are never re-expanded.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let map: BTreeMap<String, String> = values.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    substitute(template, &map)
}

pub fn sql_to_question(sql: &str) -> String {
    render(SQL_TO_QUESTION, &[(P_SQL, sql)])
}

pub fn question_to_sql(question: &str) -> String {
    render(QUESTION_TO_SQL, &[(P_QUESTION, question)])
}

pub fn eval_fulltext(articles: &str, question: &str) -> String {
    render(EVAL_FULLTEXT, &[(P_ARTICLES, articles), (P_QUESTION, question)])
}

pub fn eval_tables(articles_csv: &str, authors_csv: &str, cites_csv: &str, question: &str) -> String {
    render(
        EVAL_TABLES,
        &[
            (P_T_ARTICLES, articles_csv.trim_end_matches('\n')),
            (P_T_AUTHORS, authors_csv.trim_end_matches('\n')),
            (P_T_CITES, cites_csv.trim_end_matches('\n')),
            (P_QUESTION, question),
        ],
    )
}

pub fn reasoning_fulltext(articles: &str, question: &str) -> String {
    render(REASONING_FULLTEXT, &[(P_ARTICLES, articles), (P_QUESTION, question)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_instructions_present() {
        assert!(SQL_TO_QUESTION.contains("Do not refer to relation_id or article_id in the natural-language question."));
        assert!(
            SQL_TO_QUESTION.contains("{\"sql\": \"the given SQL query\", \"question\": \"the generated question\"}")
        );
        assert!(QUESTION_TO_SQL.contains("Do not output relation_id or article_id in generated SQL query."));
        assert!(EVAL_FULLTEXT.contains("just return 'NULL'."));
        assert!(EVAL_TABLES.contains("separate them with commas."));
        assert!(REASONING_FULLTEXT.contains("place your final answer within \\boxed{}"));
        for p in [SQL_TO_QUESTION, QUESTION_TO_SQL, EVAL_FULLTEXT, EVAL_TABLES, REASONING_FULLTEXT] {
            assert!(!p.ends_with('\n'));
            assert!(!p.contains('\u{2019}') && !p.contains('`'));
        }
    }

    #[test]
    fn braces_in_values_stay_literal() {
        let p = eval_fulltext("doc {question}", "what about {scientific articles}?");
        assert!(p.contains("doc {question}"));
        assert!(p.ends_with("what about {scientific articles}?"));
        assert_eq!(p.matches("{question}").count(), 1);
    }
}
