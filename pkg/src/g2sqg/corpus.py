"""Dataset ingestion, vocabularies, embeddings and the per-batch copy vocabulary."""

from __future__ import annotations

import json
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ParseError, ValidationError

PAD, UNK, SOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
SPECIALS = (PAD, UNK, SOS, EOS)
PAD_ID, UNK_ID, SOS_ID, EOS_ID = 0, 1, 2, 3

DEFAULT_MAX_VOCAB = 70000
CASE_LOWER, CASE_CAPITALIZED, CASE_OTHER = 0, 1, 2
CASE_DIM, POS_DIM, NER_DIM = 3, 12, 8


def case_class(token: str) -> int:
    if token == token.lower():
        return CASE_LOWER
    if token[:1].isupper() and token[1:] == token[1:].lower():
        return CASE_CAPITALIZED
    return CASE_OTHER


@dataclass(frozen=True)
class PassageExample:
    id: str
    passage_tokens: tuple[str, ...]
    answer_tokens: tuple[str, ...]
    pos: tuple[str, ...]
    ner: tuple[str, ...]
    dep_head: tuple[int, ...]
    sent_bounds: tuple[tuple[int, int], ...]
    question_tokens: tuple[str, ...] | None = None
    dep_label: tuple[str, ...] | None = None
    case: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.case:
            object.__setattr__(self, "case", tuple(case_class(t) for t in self.passage_tokens))

    @property
    def n(self) -> int:
        return len(self.passage_tokens)

    def sentence_of(self) -> list[int]:
        out = [0] * self.n
        for s, (lo, hi) in enumerate(self.sent_bounds):
            for i in range(lo, hi):
                out[i] = s
        return out

    def to_json(self) -> dict:
        rec = {
            "id": self.id,
            "passage_tokens": list(self.passage_tokens),
            "answer_tokens": list(self.answer_tokens),
            "pos": list(self.pos),
            "ner": list(self.ner),
            "dep_head": list(self.dep_head),
            "sent_bounds": [list(b) for b in self.sent_bounds],
        }
        if self.question_tokens is not None:
            rec["question_tokens"] = list(self.question_tokens)
        if self.dep_label is not None:
            rec["dep_label"] = list(self.dep_label)
        return rec

    def with_question(self, question: Sequence[str]) -> PassageExample:
        return PassageExample(
            self.id, self.passage_tokens, self.answer_tokens, self.pos, self.ner,
            self.dep_head, self.sent_bounds, tuple(question), self.dep_label,
        )


def validate(ex: PassageExample) -> None:
    n = ex.n
    if n < 1:
        raise ValidationError(ex.id, "passage_tokens", "passage is empty")
    if len(ex.answer_tokens) < 1:
        raise ValidationError(ex.id, "answer_tokens", "answer is empty")
    for name in ("pos", "ner", "dep_head"):
        if len(getattr(ex, name)) != n:
            raise ValidationError(ex.id, name, f"length {len(getattr(ex, name))} != passage length {n}")
    if ex.dep_label is not None and len(ex.dep_label) != n:
        raise ValidationError(ex.id, "dep_label", f"length {len(ex.dep_label)} != passage length {n}")
    pos = 0
    for lo, hi in ex.sent_bounds:
        if lo != pos or hi <= lo:
            raise ValidationError(ex.id, "sent_bounds", f"range [{lo}, {hi}) does not continue at {pos}")
        pos = hi
    if pos != n:
        raise ValidationError(ex.id, "sent_bounds", f"ranges cover [0, {pos}) instead of [0, {n})")
    for s, (lo, hi) in enumerate(ex.sent_bounds):
        for i in range(lo, hi):
            h = ex.dep_head[i]
            if h == -1:
                continue
            if not lo <= h < hi:
                raise ValidationError(ex.id, "dep_head", f"head {h} of token {i} lies outside sentence {s} [{lo}, {hi})")


def _example_from_record(rec: dict) -> PassageExample:
    q = rec.get("question_tokens")
    labels = rec.get("dep_label")
    return PassageExample(
        id=str(rec["id"]),
        passage_tokens=tuple(rec["passage_tokens"]),
        answer_tokens=tuple(rec["answer_tokens"]),
        pos=tuple(rec["pos"]),
        ner=tuple(rec["ner"]),
        dep_head=tuple(int(h) for h in rec["dep_head"]),
        sent_bounds=tuple((int(a), int(b)) for a, b in rec["sent_bounds"]),
        question_tokens=tuple(q) if q is not None else None,
        dep_label=tuple(labels) if labels is not None else None,
    )


_REQUIRED = ("id", "passage_tokens", "answer_tokens", "pos", "ner", "dep_head", "sent_bounds")


def load_dataset(path: str | Path) -> list[PassageExample]:
    """Read a JSONL dataset, validating every example."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON ({e.msg})", lineno) from None
            if not isinstance(rec, dict):
                raise ParseError("expected a JSON object", lineno)
            for key in _REQUIRED:
                if key not in rec:
                    raise ParseError(f"missing field {key!r}", lineno)
            try:
                ex = _example_from_record(rec)
            except (TypeError, ValueError) as e:
                raise ParseError(f"malformed field ({e})", lineno) from None
            validate(ex)
            out.append(ex)
    return out


def write_dataset(path: str | Path, examples: Iterable[PassageExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), ensure_ascii=False) + "\n")


def import_conllu(conllu_path: str | Path, alignment_path: str | Path) -> list[PassageExample]:
    """Assemble examples from a CoNLL-U sentence stream.

    Each alignment line is a JSON object ``{id, sentences, answer_tokens,
    question_tokens?}``; it consumes the next ``sentences`` sentences of the
    stream as its passage.  Columns ID, FORM, UPOS and HEAD are used.
    """
    sentences: list[list[tuple[str, str, int]]] = []
    cur: list[tuple[str, str, int]] = []
    with open(conllu_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                if cur:
                    sentences.append(cur)
                    cur = []
                continue
            if line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 7:
                raise ParseError(f"expected 10 tab-separated columns, got {len(cols)}", lineno)
            if not cols[0].isdigit():
                continue  # multiword ranges and empty nodes
            if int(cols[0]) != len(cur) + 1:
                raise ParseError(f"token id {cols[0]} out of sequence", lineno)
            cur.append((cols[1], cols[3], int(cols[6])))
    if cur:
        sentences.append(cur)

    examples = []
    nxt = 0
    with open(alignment_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                count = int(rec["sentences"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"bad alignment record ({e})", lineno) from None
            if nxt + count > len(sentences):
                raise ParseError("alignment asks for more sentences than the stream holds", lineno)
            tokens, pos, heads, bounds = [], [], [], []
            for sent in sentences[nxt : nxt + count]:
                off = len(tokens)
                for form, upos, head in sent:
                    tokens.append(form)
                    pos.append(upos)
                    heads.append(-1 if head == 0 else off + head - 1)
                bounds.append((off, len(tokens)))
            nxt += count
            q = rec.get("question_tokens")
            ex = PassageExample(
                id=str(rec["id"]),
                passage_tokens=tuple(tokens),
                answer_tokens=tuple(rec["answer_tokens"]),
                pos=tuple(pos),
                ner=tuple(rec.get("ner") or ["O"] * len(tokens)),
                dep_head=tuple(heads),
                sent_bounds=tuple(bounds),
                question_tokens=tuple(q) if q is not None else None,
            )
            validate(ex)
            examples.append(ex)
    return examples


# --------------------------------------------------------------------------
# vocabularies


class Vocabulary:
    """Token ids with PAD, UNK, SOS, EOS at 0..3."""

    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[:4]) != SPECIALS:
            raise ConfigError("vocabulary must start with the four special tokens")
        self.tokens = list(tokens)
        self._index = {t: i for i, t in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ConfigError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self._index.get(t, UNK_ID) for t in tokens]

    def token(self, i: int) -> str:
        return self.tokens[i]


class TagVocab:
    """Ids for POS or NER tags; id 0 is reserved for unseen tags."""

    def __init__(self, tags: Sequence[str]):
        self.tags = ["<unk>"] + [t for t in tags if t != "<unk>"]
        self._index = {t: i for i, t in enumerate(self.tags)}

    def __len__(self) -> int:
        return len(self.tags)

    def ids(self, tags: Iterable[str]) -> list[int]:
        return [self._index.get(t, 0) for t in tags]


def build_vocab(dataset: Sequence[PassageExample], max_size: int = DEFAULT_MAX_VOCAB) -> Vocabulary:
    """Most frequent tokens over passages, answers and questions.

    Ties are broken by first occurrence.
    """
    if max_size < 5:
        raise ConfigError(f"vocabulary max_size must be at least 5, got {max_size}")
    if not dataset:
        raise ConfigError("cannot build a vocabulary from an empty dataset")
    counts: Counter[str] = Counter()
    first: dict[str, int] = {}
    for ex in dataset:
        for seq in (ex.passage_tokens, ex.answer_tokens, ex.question_tokens or ()):
            for t in seq:
                if t in SPECIALS:
                    continue
                counts[t] += 1
                first.setdefault(t, len(first))
    ranked = sorted(counts, key=lambda t: (-counts[t], first[t]))
    return Vocabulary(list(SPECIALS) + ranked[: max_size - len(SPECIALS)])


def build_tag_vocabs(dataset: Sequence[PassageExample]) -> tuple[TagVocab, TagVocab]:
    pos: dict[str, None] = {}
    ner: dict[str, None] = {}
    for ex in dataset:
        pos.update(dict.fromkeys(ex.pos))
        ner.update(dict.fromkeys(ex.ner))
    return TagVocab(list(pos)), TagVocab(list(ner))


@dataclass
class VocabBundle:
    words: Vocabulary
    pos: TagVocab
    ner: TagVocab

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"tokens": self.words.tokens, "pos": self.pos.tags[1:], "ner": self.ner.tags[1:]}, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path: str | Path) -> VocabBundle:
        with open(path, encoding="utf-8") as fh:
            rec = json.load(fh)
        return cls(Vocabulary(rec["tokens"]), TagVocab(rec["pos"]), TagVocab(rec["ner"]))

    @classmethod
    def from_dataset(cls, dataset: Sequence[PassageExample], max_size: int = DEFAULT_MAX_VOCAB) -> VocabBundle:
        return cls(build_vocab(dataset, max_size), *build_tag_vocabs(dataset))


# --------------------------------------------------------------------------
# embeddings


def random_embeddings(vocab: Vocabulary, dim: int, seed: int) -> np.ndarray:
    """Seeded uniform(-0.1, 0.1) vectors, one row per vocabulary id."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.1, 0.1, size=(len(vocab), dim)).astype(np.float32)


def load_glove(path: str | Path, vocab: Vocabulary, dim: int = 300, seed: int = 0) -> np.ndarray:
    """Fixed word table: file vectors where available, seeded uniform otherwise."""
    table = random_embeddings(vocab, dim, seed)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) <= 1:
                continue
            if len(parts) - 1 != dim:
                raise FormatError(f"line {lineno}: expected {dim} values, got {len(parts) - 1}")
            tok = parts[0]
            if tok in vocab:
                try:
                    table[vocab.id(tok)] = np.asarray(parts[1:], dtype=np.float32)
                except ValueError:
                    raise FormatError(f"line {lineno}: non-numeric vector entry") from None
    return table


def load_contextual(path: str | Path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Precomputed contextual matrices keyed ``ctx/<id>/passage`` and ``ctx/<id>/answer``."""
    from .container import read_container

    tensors = read_container(path)
    out: dict[str, dict[str, np.ndarray]] = {}
    for name, arr in tensors.items():
        parts = name.split("/")
        if len(parts) < 3 or parts[0] != "ctx" or parts[-1] not in ("passage", "answer"):
            continue
        out.setdefault("/".join(parts[1:-1]), {})[parts[-1]] = arr
    return {k: (v["passage"], v["answer"]) for k, v in out.items() if "passage" in v and "answer" in v}


# --------------------------------------------------------------------------
# copy vocabulary


class ExtendedVocab:
    """Base vocabulary plus the out-of-vocabulary source tokens of one batch."""

    def __init__(self, base: Vocabulary, oov: Sequence[str] = ()):
        self.base = base
        self.oov = list(oov)
        self._ext = {t: len(base) + i for i, t in enumerate(self.oov)}

    def __len__(self) -> int:
        return len(self.base) + len(self.oov)

    def id(self, token: str) -> int:
        """Base id, else extended id, else UNK."""
        if token in self.base:
            return self.base.id(token)
        return self._ext.get(token, UNK_ID)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def token(self, i: int) -> str:
        if i < len(self.base):
            return self.base.token(i)
        return self.oov[i - len(self.base)]


def extend_vocab(batch: Sequence[PassageExample], vocab: Vocabulary) -> tuple[ExtendedVocab, list[np.ndarray]]:
    """Extended vocabulary of a batch and each example's passage ids in it."""
    seen: dict[str, None] = {}
    for ex in batch:
        for t in (*ex.passage_tokens, *ex.answer_tokens):
            if t not in vocab:
                seen.setdefault(t)
    ext = ExtendedVocab(vocab, list(seen))
    return ext, [np.asarray(ext.ids(ex.passage_tokens), dtype=np.intp) for ex in batch]
