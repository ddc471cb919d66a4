"""Writes the prompt text assets and the golden renderings used in tests."""
import os
import re
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
ASSETS = os.path.join(ROOT, "crates/core/assets/prompts")
GOLDEN = os.path.join(ROOT, "crates/core/tests/golden")

ARTICLES_COLS = """The articles table contains the following columns:
- article_id (String): the unique identifier of the article;
- article_title (String): the title of the article;
- title_word_count (Integer): the number of words in the article's title (using spaces to determine word boundaries);
- author_count (Integer): the number of authors for the article;
- reference_count (Integer): the number of references cited in the article."""

AUTHOR_COLS = """The article-author table contains the following columns:
- relation_id (String): the unique identifier of the article-author relationship;
- article_id (String): the identifier of the associated article;
- author_name (String): the name of the author;
- author_position (Integer): the position of the author in the author list (starting from 0 for the first author)."""

CITE_COLS = """The citing-cited table contains the following columns:
- relation_id (String): the unique identifier of the citation relationship between two articles;
- article_id_citing (String): the identifier of the article which cites the other article;
- article_id_cited (String): the identifier of the article which is cited by the other article."""

ASSUMPTIONS = """Assumptions:
- The articles table contains multiple entries;
- The article_author table maps authors to articles, where one author can contribute to multiple articles, and one article can have multiple authors;
- The citing_cited table represents citation relationships among articles in the articles table, where one article can be cited by multiple others."""

INTRO = "You are given a database with three tables: articles, article-author, and citing-cited."

SQL_TO_NL = "\n\n".join([
    INTRO, ARTICLES_COLS, AUTHOR_COLS, CITE_COLS, ASSUMPTIONS,
    """Your task involves two steps:
1. Understand the given SQL query in the context of the database schema described above;
2. Convert the SQL query into a clear and natural-sounding question in everyday language, as if you were reading textural articles rather than querying a database.""",
    "The given SQL query: {sql_query}",
    """Do not refer to relation_id or article_id in the natural-language question.
You must output the SQL query and the corresponding question in the following JSON format, and do not include any extra text:""",
    '{"sql": "the given SQL query", "question": "the generated question"}',
])

NL_TO_SQL = "\n\n".join([
    INTRO, ARTICLES_COLS, AUTHOR_COLS, CITE_COLS, ASSUMPTIONS,
    """Available core SQL commands:
- Aggregating: MIN(), MAX(), COUNT(), SUM(), AVG(), DISTINCT
- Filtering: WHERE
- Organizing: ORDER BY, ASC, DESC, GROUP BY""",
    """Available core SQL operators:
- Comparison: =, >, <, >=, <=, <>, LIKE
- Arithmetic: +, -, *, /, %
- Logical: AND, NOT, OR, BETWEEN, IN""",
    """Your task is to:
1. Understand the database schema described above and the given natural language question below;
2. Convert the natural language question into a SQL query in the context of the database schema with the listed SQL commands and operators.""",
    "The given natural language question: {question}",
    """Do not output relation_id or article_id in generated SQL query.
Use the SQL commands and operators listed above.
Make the generated SQL query aligned well with the natural language question.
You must output the natural language question and the generated SQL query in the following JSON format, and do not include any extra text:
{"question": "the given question", "sql": "the generated SQL query"}""",
])

FORMAT = """If the answer consists of multiple components (e.g., author names, article titles, reference counts), separate them with commas.
For example, if the answer includes two author names, your response should be in the format of 'the-first-author-name, the-second-author-name'.
When counting the number of words in article titles, use spaces to determine word boundaries. Words are spaced apart individually."""

ARTICLES_HEAD = ["Articles:", "{scientific articles}",
                 "You are provided with multiple scientific articles above. Based on the information in these articles, answer the question provided below.",
                 FORMAT]

FULLTEXT = "\n\n".join(ARTICLES_HEAD + [
    "Respond with only the final answer, with no additional explanation or formatting. If you cannot get the answer from the articles, just return 'NULL'.",
    "Question:",
    "{question}",
])

TABLES = "\n\n".join([
    "You are given three tables, named articles, article-author, and citing-cited.",
    ARTICLES_COLS, "{the table of articles}",
    AUTHOR_COLS, "{the table of article-author}",
    CITE_COLS, "{the table of citing-cited}",
    "Based on the information in the tables above, answer the question provided below.",
    "If the answer consists of multiple components (e.g., author names, article titles, reference counts), separate them with commas. For example, if the answer includes two author names, your response should be in the format of 'the-first-author-name, the-second-author-name'.",
    "Respond with only the final answer, with no additional explanation or formatting. If you cannot get the answer from the tables, just return 'NULL'.",
    "Question: {question}",
])

REASONING = "\n\n".join(ARTICLES_HEAD + [
    "Think step by step, and place your final answer within \\boxed{}. If you cannot get the answer from the articles, just return 'NULL'.",
    "Question: {question}",
])

PROMPTS = {
    "sql_to_question": SQL_TO_NL,
    "question_to_sql": NL_TO_SQL,
    "eval_fulltext": FULLTEXT,
    "eval_tables": TABLES,
    "reasoning_fulltext": REASONING,
}

# Golden renderings use plain str.replace on fixed inputs.
ARTICLES_DOC = "Title A\nBody with {question} braces.\n\n---\n\nTitle B\nSecond body."
QUESTION = "How many articles cite {sql_query} or 'NULL'?"
SQL = "SELECT MAX(author_count) FROM articles"
T_ART = "article_id,article_title,title_word_count,author_count,reference_count\na1,Attention Is All You Need,5,2,40"
T_AUT = "relation_id,article_id,author_name,author_position\nr1,a1,A. Vaswani,0\nr2,a1,N. Shazeer,1"
T_CIT = "relation_id,article_id_citing,article_id_cited"


def render(name):
    text = PROMPTS[name]
    subs = {
        "sql_to_question": {"{sql_query}": SQL},
        "question_to_sql": {"{question}": QUESTION},
        "eval_fulltext": {"{scientific articles}": ARTICLES_DOC, "{question}": QUESTION},
        "eval_tables": {"{the table of articles}": T_ART, "{the table of article-author}": T_AUT,
                        "{the table of citing-cited}": T_CIT, "{question}": QUESTION},
        "reasoning_fulltext": {"{scientific articles}": ARTICLES_DOC, "{question}": QUESTION},
    }[name]
    pattern = re.compile("|".join(re.escape(k) for k in subs))
    return pattern.sub(lambda m: subs[m.group(0)], text)


for name, text in PROMPTS.items():
    with open(os.path.join(ASSETS, name + ".txt"), "w") as f:
        f.write(text)
    if "golden" in sys.argv:
        with open(os.path.join(GOLDEN, name + ".txt"), "w") as f:
            f.write(render(name))
print("ok")
