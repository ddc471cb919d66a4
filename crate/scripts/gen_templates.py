"""Writes the bundled SQL template library (387 templates).

Per-skill counts: Aggregating 20, Sorting 27, Filtering 107,
Filtering+Aggregating 107, Filtering+Sorting 106, RelationalFiltering 20.
Selection inside each skill is deterministic: required templates first, then
the remaining candidates ordered by a content hash.
"""
import hashlib
import json
import sys

INT = {
    "author_count": ("author-count", "AuthorCount"),
    "reference_count": ("reference-count", "ReferenceCount"),
    "title_word_count": ("title-word-count", "TitleWordCount"),
}
TARGETS = {
    "article_title": "TitleList",
    "author_count": "AuthorCount",
    "reference_count": "ReferenceCount",
    "title_word_count": "TitleWordCount",
}


def colval(col):
    return {"rule": "column_value", "table": "articles", "column": col}


def spec_for(name):
    for col, (ph, _) in INT.items():
        if name == ph or name == ph + "-2":
            return colval(col)
        if name == ph + "-upper":
            return {"rule": "column_value_at_least", "table": "articles", "column": col, "lower": ph}
    return {
        "author-position": {"rule": "author_position"},
        "title-word": {"rule": "title_word"},
        "author-name": {"rule": "author_name"},
        "article-title": {"rule": "article_title"},
    }[name]


def placeholders(sql):
    out, i = [], 0
    while True:
        i = sql.find("{", i)
        if i < 0:
            return out
        j = sql.index("}", i)
        name = sql[i + 1:j]
        if name not in out:
            out.append(name)
        i = j + 1


def conditions():
    """(sql, columns mentioned, is_equality_on) triples for the articles table."""
    out = []
    for col, (ph, _) in INT.items():
        p = "{" + ph + "}"
        for op in ["=", ">", "<", ">=", "<=", "<>"]:
            out.append((f"{col} {op} {p}", {col}, col if op == "=" else None))
        out.append((f"{col} BETWEEN {p} AND {{{ph}-upper}}", {col}, None))
        out.append((f"{col} NOT BETWEEN {p} AND {{{ph}-upper}}", {col}, None))
        out.append((f"{col} % 2 = 1", {col}, None))
        out.append((f"{col} % 2 = 0", {col}, None))
        out.append((f"{col} IN ({p}, {{{ph}-2}})", {col}, col))
        out.append((f"{col} NOT IN ({p}, {{{ph}-2}})", {col}, None))
        out.append((f"NOT {col} > {p}", {col}, None))
    cols = list(INT)
    for a in cols:
        for b in cols:
            if a == b:
                continue
            pa, pb = "{" + INT[a][0] + "}", "{" + INT[b][0] + "}"
            out.append((f"{a} > {b}", {a, b}, None))
            out.append((f"{a} > {pa} AND {b} < {pb}", {a, b}, None))
            out.append((f"{a} = {pa} OR {b} = {pb}", {a, b}, None))
            out.append((f"{a} >= {pa} OR {b} <= {pb}", {a, b}, None))
    out += [
        ("reference_count / author_count >= 5", {"reference_count", "author_count"}, None),
        ("reference_count - title_word_count > 10", {"reference_count", "title_word_count"}, None),
        ("author_count * 2 > title_word_count", {"author_count", "title_word_count"}, None),
        ("reference_count % author_count = 0", {"reference_count", "author_count"}, None),
        ("title_word_count + author_count < {title-word-count}", {"title_word_count", "author_count"}, None),
        ("article_title LIKE {title-word}", {"article_title"}, None),
        ("article_title NOT LIKE {title-word}", {"article_title"}, None),
        ("article_title LIKE {title-word} AND author_count > {author-count}", {"article_title", "author_count"}, None),
        ("article_title LIKE {title-word} OR reference_count < {reference-count}", {"article_title", "reference_count"}, None),
    ]
    return out


def key(sql):
    return hashlib.sha1(sql.encode()).hexdigest()


def pick(required, candidates, n):
    chosen, seen = [], set()
    for t in required:
        assert t[0] not in seen, t
        chosen.append(t)
        seen.add(t[0])
    rest = sorted((c for c in candidates if c[0] not in seen), key=lambda c: key(c[0]))
    for c in rest:
        if len(chosen) == n:
            break
        if c[0] not in seen:
            chosen.append(c)
            seen.add(c[0])
    assert len(chosen) == n, (len(chosen), n)
    return chosen


def aggregating():
    t = []
    for col, (_, topic) in INT.items():
        for f in ["MAX", "MIN", "AVG", "SUM"]:
            t.append((f"SELECT {f}({col}) FROM articles", topic))
    t += [
        ("SELECT COUNT(*) FROM articles", "TitleList"),
        ("SELECT COUNT(DISTINCT author_name) FROM article_author", "AuthorList"),
        ("SELECT DISTINCT author_name FROM article_author", "AuthorList"),
        ("SELECT COUNT(*) FROM article_author", "AuthorCount"),
        ("SELECT MAX(reference_count) - MIN(reference_count) FROM articles", "ReferenceCount"),
        ("SELECT COUNT(DISTINCT title_word_count) FROM articles", "TitleWordCount"),
        ("SELECT MAX(author_position) FROM article_author", "AuthorCount"),
        ("SELECT COUNT(DISTINCT author_count) FROM articles", "AuthorCount"),
    ]
    return pick([], t, 20)


def sorting():
    t = []
    for target, topic in TARGETS.items():
        for k in INT:
            for d in ["ASC", "DESC"]:
                t.append((f"SELECT {target} FROM articles ORDER BY {k} {d}", topic))
    t += [
        ("SELECT author_count, COUNT(*) FROM articles GROUP BY author_count", "AuthorCount"),
        ("SELECT title_word_count, COUNT(*) FROM articles GROUP BY title_word_count ORDER BY COUNT(*) DESC", "TitleWordCount"),
        ("SELECT author_position, COUNT(*) FROM article_author GROUP BY author_position", "AuthorCount"),
    ]
    return pick([], t, 27)


def filtering():
    t = []
    for cond, cols, eq in conditions():
        for target, topic in TARGETS.items():
            if target == eq:
                continue
            if target == "article_title" and cols == {"article_title"}:
                continue
            t.append((f"SELECT {target} FROM articles WHERE {cond}", topic))
    author = []
    for op in ["=", "<", ">", ">=", "<=", "<>"]:
        author.append((f"SELECT author_name FROM article_author WHERE author_position {op} {{author-position}}", "AuthorList"))
    author += [
        ("SELECT author_position FROM article_author WHERE author_name = {author-name}", "AuthorList"),
        ("SELECT author_name FROM article_author WHERE author_position BETWEEN 1 AND {author-position}", "AuthorList"),
        ("SELECT author_name FROM article_author WHERE author_position % 2 = 1", "AuthorList"),
        ("SELECT author_name FROM article_author WHERE author_name LIKE {title-word} OR author_position = 0", "AuthorList"),
        ("SELECT author_name FROM article_author WHERE article_id IN (SELECT article_id FROM articles WHERE reference_count > {reference-count})", "AuthorList"),
        ("SELECT author_name FROM article_author WHERE article_id IN (SELECT article_id FROM articles WHERE title_word_count < {title-word-count})", "AuthorList"),
        ("SELECT author_name FROM article_author WHERE author_position = 0 AND article_id IN (SELECT article_id FROM articles WHERE author_count >= {author-count})", "AuthorList"),
    ]
    required = [
        ("SELECT author_name FROM article_author WHERE author_position = {author-position}", "AuthorList"),
        ("SELECT reference_count FROM articles WHERE author_count = {author-count}", "ReferenceCount"),
    ]
    # Keep some article_author coverage regardless of hash order.
    required += [a for a in author if a not in required][:8]
    return pick(required, t + author, 107)


def filtering_aggregating():
    t = []
    for cond, cols, eq in conditions():
        t.append((f"SELECT COUNT(*) FROM articles WHERE {cond}", "TitleList"))
        for col, (_, topic) in INT.items():
            if col == eq:
                continue
            for f in ["SUM", "AVG", "MAX", "MIN"]:
                t.append((f"SELECT {f}({col}) FROM articles WHERE {cond}", topic))
    author = [
        ("SELECT COUNT(DISTINCT author_name) FROM article_author WHERE author_position > {author-position}", "AuthorList"),
        ("SELECT COUNT(DISTINCT author_name) FROM article_author WHERE author_position = 0", "AuthorList"),
        ("SELECT DISTINCT author_name FROM article_author WHERE author_position = 0", "AuthorList"),
        ("SELECT DISTINCT author_name FROM article_author WHERE author_position >= {author-position}", "AuthorList"),
        ("SELECT COUNT(*) FROM article_author WHERE author_name = {author-name}", "AuthorCount"),
        ("SELECT MAX(author_position) FROM article_author WHERE author_name = {author-name}", "AuthorCount"),
        ("SELECT COUNT(*) FROM article_author WHERE author_position < {author-position}", "AuthorCount"),
        ("SELECT DISTINCT author_count FROM articles WHERE reference_count > {reference-count}", "AuthorCount"),
        ("SELECT DISTINCT title_word_count FROM articles WHERE author_count < {author-count}", "TitleWordCount"),
    ]
    required = [("SELECT SUM(title_word_count) FROM articles WHERE reference_count = {reference-count}", "TitleWordCount")]
    required += author
    return pick(required, t, 107)


def filtering_sorting():
    t = []
    for cond, cols, eq in conditions():
        for target, topic in TARGETS.items():
            if target == eq:
                continue
            for k in INT:
                if k == eq:
                    continue
                for d in ["ASC", "DESC"]:
                    t.append((f"SELECT {target} FROM articles WHERE {cond} ORDER BY {k} {d}", topic))
    author = [
        ("SELECT author_name FROM article_author WHERE author_position < 2 ORDER BY author_position DESC", "AuthorList"),
        ("SELECT author_name FROM article_author WHERE author_position < {author-position} ORDER BY author_position DESC", "AuthorList"),
        ("SELECT author_name FROM article_author WHERE author_position > {author-position} ORDER BY author_position ASC", "AuthorList"),
        ("SELECT author_position FROM article_author WHERE author_name = {author-name} ORDER BY author_position DESC", "AuthorList"),
    ]
    required = [("SELECT author_count FROM articles WHERE title_word_count % 2 = 1 ORDER BY title_word_count DESC", "AuthorCount")]
    required += author
    return pick(required, t, 106)


def relational():
    cit = "CitationRelation"
    aut = "AuthorRelation"
    t = [
        ("SELECT COUNT(*) FROM articles WHERE article_id NOT IN (SELECT article_id_citing FROM citing_cited) AND article_id IN (SELECT article_id_cited FROM citing_cited)", cit),
        ("SELECT article_title FROM articles WHERE article_id IN (SELECT article_id_cited FROM citing_cited)", cit),
        ("SELECT article_title FROM articles WHERE article_id IN (SELECT article_id_citing FROM citing_cited)", cit),
        ("SELECT article_title FROM articles WHERE article_id NOT IN (SELECT article_id_cited FROM citing_cited)", cit),
        ("SELECT COUNT(*) FROM articles WHERE article_id IN (SELECT article_id_citing FROM citing_cited) AND article_id IN (SELECT article_id_cited FROM citing_cited)", cit),
        ("SELECT COUNT(*) FROM citing_cited", cit),
        ("SELECT article_title FROM articles WHERE article_id IN (SELECT article_id_cited FROM citing_cited WHERE article_id_citing IN (SELECT article_id FROM articles WHERE article_title = {article-title}))", cit),
        ("SELECT article_title FROM articles WHERE article_id IN (SELECT article_id_citing FROM citing_cited WHERE article_id_cited IN (SELECT article_id FROM articles WHERE article_title = {article-title}))", cit),
        ("SELECT COUNT(*) FROM citing_cited WHERE article_id_cited IN (SELECT article_id FROM articles WHERE article_title = {article-title})", cit),
        ("SELECT reference_count FROM articles WHERE article_id IN (SELECT article_id_cited FROM citing_cited) ORDER BY reference_count DESC", cit),
        ("SELECT MAX(author_count) FROM articles WHERE article_id IN (SELECT article_id_citing FROM citing_cited)", cit),
        ("SELECT COUNT(*) FROM articles WHERE article_id NOT IN (SELECT article_id_citing FROM citing_cited) AND article_id NOT IN (SELECT article_id_cited FROM citing_cited)", cit),
        ("SELECT article_title FROM articles WHERE article_id IN (SELECT article_id FROM article_author WHERE author_name = {author-name})", aut),
        ("SELECT COUNT(*) FROM articles WHERE article_id IN (SELECT article_id FROM article_author WHERE author_name = {author-name})", aut),
        ("SELECT article_title FROM articles WHERE article_id IN (SELECT article_id FROM article_author WHERE author_name = {author-name} AND author_position = 0)", aut),
        ("SELECT author_name FROM article_author WHERE article_id IN (SELECT article_id FROM articles WHERE article_title = {article-title}) ORDER BY author_position ASC", aut),
        ("SELECT DISTINCT author_name FROM article_author WHERE author_position = 0 AND article_id IN (SELECT article_id_cited FROM citing_cited)", aut),
        ("SELECT COUNT(DISTINCT author_name) FROM article_author WHERE article_id IN (SELECT article_id_citing FROM citing_cited)", aut),
        ("SELECT SUM(reference_count) FROM articles WHERE article_id IN (SELECT article_id FROM article_author WHERE author_name = {author-name})", aut),
        ("SELECT author_position FROM article_author WHERE author_name = {author-name} AND article_id IN (SELECT article_id_cited FROM citing_cited)", aut),
    ]
    return pick(t, [], 20)


SKILLS = [
    ("Aggregating", "agg", aggregating),
    ("Sorting", "sort", sorting),
    ("Filtering", "filt", filtering),
    ("Filtering+Aggregating", "fagg", filtering_aggregating),
    ("Filtering+Sorting", "fsort", filtering_sorting),
    ("RelationalFiltering", "rel", relational),
]

lib = []
for skill, prefix, fn in SKILLS:
    for i, (sql, topic) in enumerate(fn(), 1):
        specs = {p: spec_for(p) for p in placeholders(sql)}
        lib.append({
            "template_id": f"{prefix}-{i:03d}",
            "skill": skill,
            "topic": topic,
            "sql_text": sql,
            "placeholder_specs": specs,
        })

assert len(lib) == 387
assert len({t["sql_text"] for t in lib}) == 387
with open(sys.argv[1], "w") as f:
    json.dump(lib, f, indent=1)
    f.write("\n")
print(len(lib))
