"""BLEU-4, ROUGE-L, word mover's distance and the sequence reward."""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigError, MetricError

DEFAULT_ALPHA = 0.1
ROUGE_BETA = 1.2
UNIGRAM_EPSILON = 0.1

Embedder = Callable[[Sequence[str]], np.ndarray]


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped_matches(cand: Sequence[str], ref: Sequence[str], n: int) -> tuple[int, int]:
    c = ngram_counts(cand, n)
    r = ngram_counts(ref, n)
    return sum(min(v, r[g]) for g, v in c.items()), max(len(cand) - n + 1, 0)


def _brevity(c: int, r: int) -> float:
    return 1.0 if c > r else math.exp(1 - r / c)


def sentence_bleu4(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Smoothed sentence BLEU-4.

    Orders 2-4 use add-one smoothing.  A unigram precision of zero is floored
    at ``0.1 / |candidate|`` so the score stays strictly positive.
    """
    if not reference:
        raise MetricError("reference must be non-empty")
    c = len(candidate)
    if c == 0:
        return 0.0
    log_p = 0.0
    for n in range(1, 5):
        m, total = _clipped_matches(candidate, reference, n)
        if n == 1:
            p = m / total if m > 0 else UNIGRAM_EPSILON / total
        else:
            p = (m + 1) / (total + 1)
        log_p += math.log(p)
    return _brevity(c, len(reference)) * math.exp(log_p / 4)


def corpus_bleu4(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]]) -> float:
    """Unsmoothed corpus BLEU-4 from n-gram counts pooled over all pairs."""
    if len(candidates) != len(references):
        raise MetricError(f"{len(candidates)} candidates for {len(references)} references")
    if not candidates:
        raise MetricError("corpus is empty")
    matches, totals = [0] * 4, [0] * 4
    c_len = r_len = 0
    for cand, ref in zip(candidates, references):
        if not ref:
            raise MetricError("reference must be non-empty")
        c_len += len(cand)
        r_len += len(ref)
        for n in range(1, 5):
            m, t = _clipped_matches(cand, ref, n)
            matches[n - 1] += m
            totals[n - 1] += t
    if c_len == 0 or min(matches) == 0:
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matches, totals)) / 4
    return _brevity(c_len, r_len) * math.exp(log_p)


def bleu4(candidate, reference, mode: str = "sentence") -> float:
    """BLEU-4 of one pair (``sentence``) or of parallel lists (``corpus``)."""
    if mode == "sentence":
        return sentence_bleu4(candidate, reference)
    if mode == "corpus":
        return corpus_bleu4(candidate, reference)
    raise ConfigError(f"unknown BLEU mode {mode!r}")


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str], beta: float = ROUGE_BETA) -> float:
    if not reference:
        raise MetricError("reference must be non-empty")
    if not candidate:
        return 0.0
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(candidate), lcs / len(reference)
    return (1 + beta**2) * p * r / (r + beta**2 * p)


# --------------------------------------------------------------------------
# word mover's distance


def _nbow(tokens: Sequence[str]) -> tuple[list[str], np.ndarray]:
    counts = Counter(tokens)
    words = sorted(counts)
    w = np.array([counts[t] for t in words], dtype=np.float64)
    return words, w / w.sum()


def transport_cost(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> float:
    """Exact minimum-cost transport between histograms ``a`` and ``b``.

    A simplex solve identifies an optimal basis; flows are then recomputed from
    the equality constraints restricted to that basis.
    """
    m, n = cost.shape
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n : (i + 1) * n] = 1
    for j in range(n):
        A_eq[m + j, j::n] = 1
    b_eq = np.concatenate([a, b])
    res = linprog(cost.reshape(-1), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    if not res.success:
        raise MetricError(f"transport solve failed: {res.message}")
    support = np.flatnonzero(res.x > 1e-12)
    flows, *_ = np.linalg.lstsq(A_eq[:, support], b_eq, rcond=None)
    if np.all(flows >= -1e-12) and np.allclose(A_eq[:, support] @ flows, b_eq, atol=1e-12):
        return float(np.dot(np.maximum(flows, 0), cost.reshape(-1)[support]))
    return float(res.fun)


def wmd(candidate: Sequence[str], reference: Sequence[str], embed: Embedder) -> float:
    """Word mover's distance with Euclidean ground cost between word vectors."""
    if not candidate or not reference:
        raise MetricError("word mover's distance needs two non-empty token sequences")
    wa, a = _nbow(candidate)
    wb, b = _nbow(reference)
    if wa == wb and np.array_equal(a, b):
        return 0.0
    va = np.asarray(embed(wa), dtype=np.float64)
    vb = np.asarray(embed(wb), dtype=np.float64)
    cost = np.sqrt(np.maximum(((va[:, None, :] - vb[None, :, :]) ** 2).sum(-1), 0.0))
    return transport_cost(a, b, cost)


def table_embedder(vocab, table: np.ndarray) -> Embedder:
    """Look tokens up in a fixed table; unknown tokens share the UNK row."""

    def embed(tokens: Sequence[str]) -> np.ndarray:
        return table[[vocab.id(t) for t in tokens]]

    return embed


@dataclass
class RewardReport:
    bleu4: float
    rouge_l: float
    wmd: float
    f_sem: float
    total: float
    alpha: float


def total_reward(candidate: Sequence[str], reference: Sequence[str], embed: Embedder,
                 alpha: float = DEFAULT_ALPHA) -> RewardReport:
    """``r(Y) = BLEU-4(Y, Y*) + alpha / (1 + WMD(Y, Y*))``.

    An empty candidate scores 0 on every component.
    """
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    if not candidate:
        return RewardReport(0.0, 0.0, math.inf, 0.0, 0.0, alpha)
    b = sentence_bleu4(candidate, reference)
    dist = wmd(candidate, reference, embed)
    f_sem = 1.0 / (1.0 + dist)
    return RewardReport(b, rouge_l(candidate, reference), dist, f_sem, b + alpha * f_sem, alpha)
