"""Small deterministic corpora used by the test-suite, the CLI fixtures and the docs."""

from __future__ import annotations

import numpy as np

from .corpus import PassageExample

PERSONS = ["Alice", "Bob", "Carol", "Dave", "Erin", "Frank"]
CITIES = ["Paris", "Rome", "Oslo", "Lima", "Cairo", "Delhi"]
OBJECTS = ["book", "lamp", "car", "bike", "kite", "drum"]
YEARS = ["1990", "2001", "2012", "1985"]


def _visit_sentence(person: str, city: str, year: str, off: int):
    # Alice visited Paris in 1990 .
    tokens = [person, "visited", city, "in", year, "."]
    pos = ["NNP", "VBD", "NNP", "IN", "CD", "."]
    ner = ["PERSON", "O", "LOC", "O", "DATE", "O"]
    heads = [1, -1, 1, 1, 3, 1]
    return tokens, pos, ner, [h if h < 0 else h + off for h in heads]


def _buy_sentence(person: str, obj: str, off: int):
    # Bob bought a book .
    tokens = [person, "bought", "a", obj, "."]
    pos = ["NNP", "VBD", "DT", "NN", "."]
    ner = ["PERSON", "O", "O", "O", "O"]
    heads = [1, -1, 3, 1, 1]
    return tokens, pos, ner, [h if h < 0 else h + off for h in heads]


def _join(ex_id, sentences, answer, question) -> PassageExample:
    tokens, pos, ner, heads, bounds = [], [], [], [], []
    for t, p, n, h in sentences:
        bounds.append((len(tokens), len(tokens) + len(t)))
        tokens += t
        pos += p
        ner += n
        heads += h
    return PassageExample(ex_id, tuple(tokens), tuple(answer), tuple(pos), tuple(ner), tuple(heads),
                          tuple(bounds), tuple(question))


def overfit_corpus(n: int = 20, seed: int = 0) -> list[PassageExample]:
    """Two-sentence passages with four question templates; every example distinct."""
    rng = np.random.default_rng(seed)
    out: list[PassageExample] = []
    seen: set = set()
    while len(out) < n:
        p1, p2 = rng.choice(PERSONS, 2, replace=False)
        city, obj, year = rng.choice(CITIES), rng.choice(OBJECTS), rng.choice(YEARS)
        kind = int(rng.integers(4))
        key = (p1, p2, city, obj, year, kind)
        if key in seen:
            continue
        seen.add(key)
        s1 = _visit_sentence(p1, city, year, 0)
        s2 = _buy_sentence(p2, obj, 6)
        if kind == 0:
            answer, question = [city], ["which", "city", "did", p1, "visit", "?"]
        elif kind == 1:
            answer, question = [year], ["when", "did", p1, "visit", city, "?"]
        elif kind == 2:
            answer, question = [obj], ["what", "did", p2, "buy", "?"]
        else:
            answer, question = [p2], ["who", "bought", "a", obj, "?"]
        out.append(_join(f"ov{len(out):03d}", [s1, s2], answer, question))
    return out


WH = {"city": "where", "year": "when", "person": "who"}


def answer_dependent_corpus(n_passages: int = 8, seed: int = 0) -> list[PassageExample]:
    """Each passage appears once per candidate answer; the question depends only on the answer."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_passages):
        person, city, year = rng.choice(PERSONS), rng.choice(CITIES), rng.choice(YEARS)
        sent = _visit_sentence(person, city, year, 0)
        for cls, ans in (("city", city), ("year", year), ("person", person)):
            out.append(_join(f"ad{k:02d}-{cls}", [sent], [ans], [WH[cls], "is", ans, "?"]))
    return out


def gradcheck_fixture() -> list[PassageExample]:
    """Two examples of two sentences and at most eight tokens."""
    a = _join(
        "fx0",
        [(["Alice", "ran", "."], ["NNP", "VBD", "."], ["PERSON", "O", "O"], [1, -1, 1]),
         (["Bob", "sang", "."], ["NNP", "VBD", "."], ["PERSON", "O", "O"], [4, -1, 4])],
        ["Bob"],
        ["who", "sang", "?"],
    )
    b = _join(
        "fx1",
        [(["Carol", "visited", "Rome", "."], ["NNP", "VBD", "NNP", "."], ["PERSON", "O", "LOC", "O"], [1, -1, 1, 1]),
         (["Dave", "left", "."], ["NNP", "VBD", "."], ["PERSON", "O", "O"], [5, -1, 5])],
        ["Rome"],
        ["where", "did", "Carol", "go", "?"],
    )
    return [a, b]
