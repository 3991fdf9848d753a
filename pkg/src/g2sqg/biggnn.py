"""Bidirectional gated graph encoder with gated direction fusion and max-pool readout."""

from __future__ import annotations

import numpy as np

from . import gradcore as gc
from .errors import ConfigError, ShapeError
from .gradcore import ParameterStore, Tensor
from .textgraph import TextGraph

DEFAULT_HOPS = 3
DIRECTION_ORDERS = ("in_out", "out_in")


def mean_matrix(neighbors: list[list[int]]) -> np.ndarray:
    """Row v averages node v with its listed neighbors."""
    n = len(neighbors)
    M = np.zeros((n, n))
    for v, nbrs in enumerate(neighbors):
        members = [v, *[u for u in nbrs if u != v]]
        M[v, members] = 1.0 / len(members)
    return M


def aggregate(states: Tensor, graph: TextGraph, direction: str) -> Tensor:
    """Per-node aggregation of incoming or outgoing neighbors (self included)."""
    if states.shape[1] != graph.n:
        raise ShapeError(f"aggregate: {states.shape[1]} node states for a graph of {graph.n} nodes")
    if direction not in ("incoming", "outgoing"):
        raise ConfigError(f"unknown direction {direction!r}")
    if graph.kind == "static":
        M = mean_matrix(graph.incoming if direction == "incoming" else graph.outgoing)
        return gc.matmul(states, gc.const(M.T, dtype=states.dtype))
    weights = graph.A_in if direction == "incoming" else graph.A_out
    return gc.matmul(states, gc.transpose(weights))


def fuse(a: Tensor, b: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Gated sum ``z * a + (1 - z) * b`` with ``z = sigmoid(W [a; b; a*b; a-b] + b_z)``."""
    if a.shape != b.shape:
        raise ShapeError(f"fuse: shapes {a.shape} and {b.shape} differ")
    diff = gc.sub(a, b)
    feats = gc.concat([a, b, gc.mul(a, b), diff], axis=0)
    z = gc.sigmoid(gc.add(gc.matmul(params["W"], feats), params["b"]))
    # b + z*(a - b): exact when a == b
    return gc.add(b, gc.mul(z, diff))


def encode(
    X: Tensor,
    graph: TextGraph,
    n_hops: int,
    params: ParameterStore,
    direction_order: str = "in_out",
) -> Tensor:
    """``n_hops`` rounds of bidirectional aggregation, fusion and GRU update."""
    if n_hops < 0:
        raise ConfigError(f"hop count must be >= 0, got {n_hops}")
    if direction_order not in DIRECTION_ORDERS:
        raise ConfigError(f"direction_order must be one of {DIRECTION_ORDERS}")
    fusion = params.scope("gnn/fuse")
    gru = params.scope("gnn/gru")
    first, second = ("incoming", "outgoing") if direction_order == "in_out" else ("outgoing", "incoming")
    h = X
    for _ in range(n_hops):
        agg = fuse(aggregate(h, graph, first), aggregate(h, graph, second), fusion)
        h = gc.gru_cell(h, agg, gru)
    return h


def graph_readout(h: Tensor, params: ParameterStore) -> tuple[Tensor, Tensor, Tensor]:
    """Graph vector (max over projected nodes) and decoder initial cell/hidden states."""
    if h.shape[1] < 1:
        raise ShapeError("graph_readout needs at least one node")
    proj = gc.add(gc.matmul(params["readout/W"], h), params["readout/b"])
    hG = gc.max_pool(proj, axis=1)
    c0 = gc.add(gc.matmul(params["readout/W_c"], hG), params["readout/b_c"])
    s0 = gc.add(gc.matmul(params["readout/W_s"], hG), params["readout/b_s"])
    return hG, c0, s0
