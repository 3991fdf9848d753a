"""Passage graphs: dependency-based static graphs and learned KNN graphs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gradcore as gc
from .corpus import PassageExample
from .errors import ConfigError, ShapeError
from .gradcore import Tensor

DEFAULT_K = 10


@dataclass
class TextGraph:
    kind: str  # "static" | "dynamic"
    n: int
    incoming: list[list[int]] = field(default_factory=list)
    outgoing: list[list[int]] = field(default_factory=list)
    A_in: Tensor | None = None
    A_out: Tensor | None = None
    mask: np.ndarray | None = None
    k: int | None = None

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, targets in enumerate(self.outgoing) for v in targets]


def build_static_graph(example: PassageExample) -> TextGraph:
    """Dependency arcs head -> dependent plus two-way links between sentences.

    Adjacent sentences are joined by an edge pair between the last token of
    one and the first token of the next.
    """
    n = example.n
    edges: set[tuple[int, int]] = set()
    for dep, head in enumerate(example.dep_head):
        if head >= 0 and head != dep:
            edges.add((head, dep))
    for (_, end), (start, _) in zip(example.sent_bounds, example.sent_bounds[1:]):
        edges.add((end - 1, start))
        edges.add((start, end - 1))
    incoming: list[list[int]] = [[] for _ in range(n)]
    outgoing: list[list[int]] = [[] for _ in range(n)]
    for u, v in sorted(edges):
        outgoing[u].append(v)
        incoming[v].append(u)
    return TextGraph("static", n, incoming, outgoing)


def dynamic_adjacency(H: Tensor, U: Tensor) -> Tensor:
    """Dense self-attention scores ``ReLU(U H)^T ReLU(U H)`` (N x N)."""
    if U.shape[1] != H.shape[0]:
        raise ShapeError(f"dynamic_adjacency: U {U.shape} does not accept embeddings {H.shape}")
    P = gc.relu(gc.matmul(U, H))
    return gc.matmul(gc.transpose(P), P)


def knn_mask(scores: np.ndarray, k: int) -> np.ndarray:
    """Per row, the ``k`` largest entries with the diagonal always kept.

    Remaining ties go to the lower column index.
    """
    if k < 1:
        raise ConfigError(f"neighborhood size must be >= 1, got {k}")
    n = scores.shape[0]
    if k >= n:
        return np.ones((n, n), dtype=bool)
    keyed = scores.astype(np.float64, copy=True)
    np.fill_diagonal(keyed, np.inf)
    order = np.argsort(-keyed, axis=1, kind="stable")[:, :k]
    mask = np.zeros((n, n), dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask


def sparsify_normalize(A: Tensor, k: int = DEFAULT_K) -> tuple[Tensor, Tensor, np.ndarray]:
    """KNN-sparsify ``A`` and normalize it in both directions.

    Returns ``(A_in, A_out, mask)`` with ``A_in = softmax(A_bar)`` and
    ``A_out = softmax(A_bar^T)``, softmax taken row-wise over kept entries.
    """
    mask = knn_mask(A.data, k)
    gc.note_kink("knn", mask)
    A_in = gc.masked_softmax(A, mask, axis=1)
    A_out = gc.masked_softmax(gc.transpose(A), mask.T, axis=1)
    return A_in, A_out, mask


def build_dynamic_graph(H: Tensor, U: Tensor, k: int = DEFAULT_K) -> TextGraph:
    A_in, A_out, mask = sparsify_normalize(dynamic_adjacency(H, U), k)
    return TextGraph("dynamic", H.shape[1], A_in=A_in, A_out=A_out, mask=mask, k=k)
