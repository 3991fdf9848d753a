"""Finite-difference probes for every differentiable primitive and for the full model loss."""

from __future__ import annotations

import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from . import gradcore as gc
from .corpus import VocabBundle, extend_vocab
from .gradcore import GradCheckReport, ParameterStore, Tensor
from .model import Graph2Seq, ModelConfig
from .synthetic import gradcheck_fixture
from .trainer import lm_loss

# Central differences at h=1e-5 on a loss of magnitude ~20 carry rounding
# noise near 1e-10, so gradients below this floor are compared absolutely.
MODEL_FLOOR = 1e-5

Probe = Callable[[np.random.Generator], tuple[ParameterStore, Callable[[ParameterStore], Tensor]]]


def _store(rng: np.random.Generator, **shapes) -> ParameterStore:
    P = ParameterStore(np.float64)
    for name, shape in shapes.items():
        P.add(name, rng.normal(size=shape))
    return P


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    # a random linear functional makes every output coordinate matter
    return gc.sum(gc.mul(out, gc.const(w)))


def _unary(fn, positive: bool = False) -> Probe:
    def probe(rng):
        P = _store(rng, x=(3, 4))
        if positive:
            P["x"].data = np.abs(P["x"].data) + 0.5
        w = rng.normal(size=(3, 4))
        return P, lambda S: _weighted(fn(S["x"]), w)

    return probe


def _binary(fn, shape_b=(3, 4)) -> Probe:
    def probe(rng):
        P = _store(rng, a=(3, 4), b=shape_b)
        w = rng.normal(size=(3, 4))
        return P, lambda S: _weighted(fn(S["a"], S["b"]), w)

    return probe


def _matmul(rng):
    P = _store(rng, a=(3, 5), b=(5, 2))
    w = rng.normal(size=(3, 2))
    return P, lambda S: _weighted(gc.matmul(S["a"], S["b"]), w)


def _concat(rng):
    P = _store(rng, a=(2, 3), b=(4, 3))
    w = rng.normal(size=(6, 3))
    return P, lambda S: _weighted(gc.concat([S["a"], S["b"]], axis=0), w)


def _masked_softmax(rng):
    P = _store(rng, x=(4, 5))
    mask = rng.random((4, 5)) < 0.7
    mask[np.arange(4), rng.integers(5, size=4)] = True
    w = rng.normal(size=(4, 5))
    return P, lambda S: _weighted(gc.masked_softmax(S["x"], mask, axis=1), w)


def _max_pool(rng):
    P = _store(rng, x=(3, 6))
    w = rng.normal(size=(3, 1))
    return P, lambda S: _weighted(gc.max_pool(S["x"], axis=1), w)


def _gather(rng):
    P = _store(rng, x=(5, 3))
    idx = rng.integers(5, size=4)
    w = rng.normal(size=(4, 3))
    return P, lambda S: _weighted(gc.gather_rows(S["x"], idx), w)


def _scale(rng):
    c = float(rng.normal())
    return _unary(lambda x: gc.scale(x, c))(rng)


def _sum(rng):
    P = _store(rng, x=(3, 4))
    w = rng.normal(size=(1, 4))
    return P, lambda S: _weighted(gc.sum(S["x"], axis=0, keepdims=True), w)


def _transpose(rng):
    P = _store(rng, x=(3, 4))
    w = rng.normal(size=(4, 3))
    return P, lambda S: _weighted(gc.transpose(S["x"]), w)


PROBES: dict[str, Probe] = {
    "add": _binary(gc.add, (1, 4)),
    "sub": _binary(gc.sub, (3, 1)),
    "mul": _binary(gc.mul),
    "minimum": _binary(gc.minimum),
    "matmul": _matmul,
    "relu": _unary(gc.relu),
    "sigmoid": _unary(gc.sigmoid),
    "tanh": _unary(gc.tanh),
    "exp": _unary(gc.exp),
    "log": _unary(gc.log, positive=True),
    "concat": _concat,
    "masked_softmax": _masked_softmax,
    "max_pool": _max_pool,
    "gather_rows": _gather,
    "scale": _scale,
    "sum": _sum,
    "transpose": _transpose,
}


@dataclass
class ProbeSummary:
    name: str
    points: int
    max_rel_error: float
    checked: int
    skipped: int


def check_primitive(name: str, points: int = 100, seed: int = 0, h: float = 1e-5) -> ProbeSummary:
    rng = np.random.default_rng(np.random.SeedSequence([seed, sum(map(ord, name))]))
    worst, checked, skipped = 0.0, 0, 0
    for _ in range(points):
        P, fn = PROBES[name](rng)
        rep = gc.grad_check(fn, P, h=h)
        worst = max(worst, rep.max_rel_error)
        checked += rep.checked
        skipped += rep.skipped
    return ProbeSummary(name, points, worst, checked, skipped)


def check_all_primitives(points: int = 100, seed: int = 0, h: float = 1e-5) -> list[ProbeSummary]:
    return [check_primitive(name, points, seed, h) for name in sorted(gc.PRIMITIVES)]


def fixture_model(graph_kind: str = "static", hidden: int = 4, word_dim: int = 4, seed: int = 0,
                  use_dan: bool = True) -> tuple[Graph2Seq, list]:
    """A tiny float64 model over the two-example fixture, dropout off."""
    data = gradcheck_fixture()
    vb = VocabBundle.from_dataset(data)
    cfg = ModelConfig(hidden=hidden, word_dim=word_dim, graph_kind=graph_kind, hops=2, knn_k=3,
                      use_dan=use_dan, dropout_embed=0.0, dropout_rnn=0.0)
    model = Graph2Seq(cfg, vb, seed=seed).astype(np.float64)
    return model, data


def model_loss_fn(model: Graph2Seq, data, lam: float = 0.4) -> Callable[[ParameterStore], Tensor]:
    """Stage-1 loss over ``data`` with exact teacher forcing, as a function of a parameter store."""
    ext, srcs = extend_vocab(data, model.vocab.words)

    def loss(P: ParameterStore) -> Tensor:
        saved, model.params = model.params, P
        try:
            results = [model.teacher_forced(ex, ext, src) for ex, src in zip(data, srcs)]
            return lm_loss(results, lam)
        finally:
            model.params = saved

    return loss


def check_model(graph_kind: str = "static", h: float = 1e-5, max_coords: int | None = None, seed: int = 0,
                floor: float = MODEL_FLOOR, **kw) -> GradCheckReport:
    model, data = fixture_model(graph_kind, seed=seed, **kw)
    return gc.grad_check(model_loss_fn(model, data), model.params, h=h, max_coords=max_coords,
                         rng=np.random.default_rng(seed), floor=floor)


def run_all(points: int = 100, h: float = 1e-5, seed: int = 0, max_coords: int | None = None) -> dict:
    """Primitive probes plus full-model checks; returns a summary dictionary."""
    t0 = time.perf_counter()
    prims = check_all_primitives(points, seed, h)
    models = {kind: check_model(kind, h, max_coords, seed) for kind in ("static", "dynamic")}
    worst = max([p.max_rel_error for p in prims] + [r.max_rel_error for r in models.values()])
    return {
        "primitives": {p.name: p.max_rel_error for p in prims},
        "model": {k: r.max_rel_error for k, r in models.items()},
        "model_checked": {k: r.checked for k, r in models.items()},
        "max_rel_error": worst,
        "seconds": time.perf_counter() - t0,
    }
