"""Writes the bundled synthetic mini corpus (12 articles, JSON lines)."""
import hashlib
import json
import random
import sys

rng = random.Random(20240611)

SUBJECTS = ["CS", "Economics", "EE", "Math", "Physics", "Biology", "Finance", "Statistics"]
FIRST = ["A.", "B.", "C.", "D.", "E.", "F.", "G.", "H.", "J.", "K.", "L.", "M.", "N.", "P.", "R.", "S.", "T.", "W."]
LAST = ["Vaswani", "Shazeer", "Parmar", "Uszkoreit", "Jones", "Gomez", "Kaiser", "Polosukhin", "Chen", "Okafor",
        "Schmidt", "Rossi", "Tanaka", "Novak", "Haddad", "Silva", "Kowalski", "Ivanova", "Dubois", "O'Brien",
        "Nguyen", "Larsen", "Petrov", "Moreau"]
TITLES = [
    "Attention Is All You Need",
    "Sparse Mixtures of Experts for Scalable Sequence Modeling in Low Resource Settings",
    "Graph-based Summarization of Long Scientific Documents",
    "Market Microstructure and Liquidity",
    "Quantum Error Correction with Surface Codes",
    "Bayesian Inference for Gene Regulatory Networks",
    "Robust Portfolio Optimization under Model Uncertainty",
    "A Survey of Power Electronics for Renewable Grids",
    "On the Spectral Gap of Random Regular Graphs",
    "Causal Effects of Minimum Wage Policies",
    "Scaling Laws for Neural Language Models",
    "Nonparametric Tests for Conditional Independence",
]
VOCAB = ("model data method result analysis network theory sample signal market graph energy protein "
         "estimate bound proof layer attention error rate policy price measure field quantum circuit "
         "distribution variance kernel gradient optimal random sparse dense linear equation system").split()


def hexid(s):
    return hashlib.sha1(s.encode()).hexdigest()


def paragraph(n_words):
    words = [rng.choice(VOCAB) for _ in range(n_words)]
    out, i = [], 0
    while i < len(words):
        k = rng.randint(8, 18)
        sent = " ".join(words[i:i + k])
        out.append(sent[0].upper() + sent[1:] + ".")
        i += k
    return " ".join(out)


def body(title, authors, target_chars):
    parts = [f"# {title}", "", ", ".join(authors), "", "## Abstract", "", paragraph(80)]
    sec = 1
    while sum(len(p) + 1 for p in parts) < target_chars:
        parts += ["", f"## {sec} Section {sec}", "", paragraph(rng.randint(120, 220))]
        sec += 1
    parts += ["", "## References", ""]
    return "\n".join(parts)


ids = [hexid(f"mini-article-{i}") for i in range(12)]
external = [hexid(f"external-{i}") for i in range(40)]
records = []
for i, title in enumerate(TITLES):
    n_auth = [2, 8, 3, 1, 5, 6, 4, 7, 3, 5, 9, 2][i]
    authors = []
    while len(authors) < n_auth:
        name = f"{rng.choice(FIRST)} {rng.choice(LAST)}"
        if name not in authors:
            authors.append(name)
    if i == 0:
        authors = ["A. Vaswani", "N. Shazeer"]
    in_corpus = rng.sample([x for j, x in enumerate(ids) if j != i], rng.randint(1, 4))
    refs = in_corpus + rng.sample(external, rng.randint(5, 30))
    rng.shuffle(refs)
    target = rng.randint(9000, 26000)
    records.append({
        "article_id": ids[i],
        "title": title,
        "authors": authors,
        "reference_ids": refs,
        "subject": SUBJECTS[i % 8],
        "full_text": body(title, authors, target),
    })

out = sys.argv[1]
with open(out, "w") as f:
    for r in records:
        f.write(json.dumps(r, ensure_ascii=False) + "\n")
print(sum(len(r["full_text"]) for r in records) / 4, "heuristic tokens total")
for r in records:
    print(len(r["full_text"]) // 4, len(r["authors"]), len(r["reference_ids"]), r["title"])
