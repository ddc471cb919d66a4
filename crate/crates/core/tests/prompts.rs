mod common;

use common::prompt_fixtures::{doc, golden, golden_db, ARTICLES_DOC, QUESTION, SQL};
use lcqa::collection::ContextDocument;
use lcqa::eval::{render_prompt_fulltext, render_prompt_tables, PromptError};
use lcqa::prompts;

#[test]
fn conversion_prompts_match_golden() {
    assert_eq!(prompts::sql_to_question(SQL), golden("sql_to_question"));
    assert_eq!(prompts::question_to_sql(QUESTION), golden("question_to_sql"));
}

#[test]
fn evaluation_prompts_match_golden() {
    assert_eq!(render_prompt_fulltext(&doc(), QUESTION).unwrap(), golden("eval_fulltext"));
    assert_eq!(render_prompt_tables(&golden_db(), QUESTION).unwrap(), golden("eval_tables"));
    assert_eq!(prompts::reasoning_fulltext(ARTICLES_DOC, QUESTION), golden("reasoning_fulltext"));
}

#[test]
fn table_prompt_is_deterministic_and_embeds_rows() {
    let db = golden_db();
    let a = render_prompt_tables(&db, "Which?").unwrap();
    assert_eq!(a, render_prompt_tables(&db, "Which?").unwrap());
    assert!(a.contains("a1,Attention Is All You Need,5,2,40\n"));
    assert!(a.contains("relation_id,article_id_citing,article_id_cited"));
}

#[test]
fn empty_inputs_are_rejected() {
    assert!(matches!(render_prompt_fulltext(&doc(), "  "), Err(PromptError::EmptyQuestion)));
    assert!(matches!(render_prompt_tables(&golden_db(), ""), Err(PromptError::EmptyQuestion)));
    let empty = ContextDocument { collection_id: "e".into(), text: String::new(), article_offsets: vec![] };
    assert!(matches!(render_prompt_fulltext(&empty, "Q?"), Err(PromptError::EmptyContext)));
}
