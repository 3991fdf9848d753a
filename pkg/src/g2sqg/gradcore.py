"""Tape-based reverse-mode differentiation over numpy arrays.

Every differentiable value is a :class:`Tensor`.  Primitives compute their
forward result eagerly and, when gradients are enabled and some input
requires a gradient, link the output to its inputs together with the name
of a registered backward rule.  ``backward``/``grad`` walk that graph in
reverse topological order.

Arrays are never mutated after they are recorded, so a graph can be swept
any number of times with identical results.
"""

from __future__ import annotations

import contextlib
import threading
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateSliceError, NumericError, ShapeError

_local = threading.local()


def grad_enabled() -> bool:
    return getattr(_local, "grad", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    prev = grad_enabled()
    _local.grad = False
    try:
        yield
    finally:
        _local.grad = prev


@contextlib.contextmanager
def record_kinks() -> Iterator[list]:
    """Collect activation patterns of non-smooth primitives.

    Two evaluations whose kink records differ straddle a point where the
    function is not differentiable (ReLU at 0, min ties, argmax changes,
    top-k membership changes).
    """
    prev = getattr(_local, "kinks", None)
    rec: list = []
    _local.kinks = rec
    try:
        yield rec
    finally:
        _local.kinks = prev


def recording_kinks() -> bool:
    return getattr(_local, "kinks", None) is not None


def note_kink(tag: str, pattern: np.ndarray) -> None:
    rec = getattr(_local, "kinks", None)
    if rec is not None:
        rec.append((tag, np.ascontiguousarray(pattern).tobytes()))


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "ctx")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=np.float64)
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op: str | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.ctx = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f", op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def const(value, dtype=None) -> Tensor:
    """Wrap an array as a non-differentiable tensor."""
    arr = np.asarray(value, dtype=dtype) if dtype is not None else np.asarray(value)
    if arr.dtype.kind != "f":
        arr = arr.astype(np.float64)
    return Tensor(arr)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float64
    return Tensor(np.asarray(x, dtype=dtype))


# --------------------------------------------------------------------------
# registry

_BACKWARD: dict[str, Callable] = {}


def _rule(name: str):
    def deco(fn):
        _BACKWARD[name] = fn
        return fn

    return deco


def _make(op: str, data: np.ndarray, parents: tuple[Tensor, ...], ctx=None) -> Tensor:
    if op not in _BACKWARD:
        raise KeyError(f"primitive {op!r} has no registered backward rule")
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out.parents = parents
        out.ctx = ctx
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _broadcast_check(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# --------------------------------------------------------------------------
# primitives


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _make("matmul", a.data @ b.data, (a, b))


@_rule("matmul")
def _matmul_bw(g, out, parents, ctx):
    a, b = parents
    return (g @ b.data.T if a.requires_grad else None, a.data.T @ g if b.requires_grad else None)


def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _as_tensor(a, b)
    b = _as_tensor(b, a)
    _broadcast_check(a, b, "add")
    return _make("add", a.data + b.data, (a, b))


@_rule("add")
def _add_bw(g, out, parents, ctx):
    a, b = parents
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def sub(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _as_tensor(a, b)
    b = _as_tensor(b, a)
    _broadcast_check(a, b, "sub")
    return _make("sub", a.data - b.data, (a, b))


@_rule("sub")
def _sub_bw(g, out, parents, ctx):
    a, b = parents
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with broadcasting."""
    if not isinstance(a, Tensor):
        a = _as_tensor(a, b)
    b = _as_tensor(b, a)
    _broadcast_check(a, b, "mul")
    return _make("mul", a.data * b.data, (a, b))


@_rule("mul")
def _mul_bw(g, out, parents, ctx):
    a, b = parents
    ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
    gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
    return ga, gb


def relu(x) -> Tensor:
    x = _as_tensor(x)
    if recording_kinks():
        note_kink("relu", np.sign(x.data).astype(np.int8))
    return _make("relu", np.maximum(x.data, 0), (x,))


@_rule("relu")
def _relu_bw(g, out, parents, ctx):
    # ReLU'(0) = 0
    return (g * (parents[0].data > 0),)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    half = x.data.dtype.type(0.5)
    return _make("sigmoid", half * (np.tanh(half * x.data) + 1), (x,))


@_rule("sigmoid")
def _sigmoid_bw(g, out, parents, ctx):
    y = out.data
    return (g * y * (1 - y),)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    return _make("tanh", np.tanh(x.data), (x,))


@_rule("tanh")
def _tanh_bw(g, out, parents, ctx):
    y = out.data
    return (g * (1 - y * y),)


def exp(x) -> Tensor:
    x = _as_tensor(x)
    y = np.exp(x.data)
    if not np.isfinite(y).all():
        raise NumericError("exp overflowed")
    return _make("exp", y, (x,))


@_rule("exp")
def _exp_bw(g, out, parents, ctx):
    return (g * out.data,)


def log(x) -> Tensor:
    x = _as_tensor(x)
    if (x.data <= 0).any():
        raise NumericError("log of a non-positive value")
    return _make("log", np.log(x.data), (x,))


@_rule("log")
def _log_bw(g, out, parents, ctx):
    return (g / parents[0].data,)


def concat(xs: Sequence, axis: int = 0) -> Tensor:
    xs = tuple(_as_tensor(x) for x in xs)
    if not xs:
        raise ShapeError("concat: nothing to concatenate")
    try:
        data = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[x.shape for x in xs]} along axis {axis}") from None
    sizes = [x.shape[axis] for x in xs]
    return _make("concat", data, xs, (axis, np.cumsum(sizes)[:-1]))


@_rule("concat")
def _concat_bw(g, out, parents, ctx):
    axis, cuts = ctx
    return tuple(np.split(g, cuts, axis=axis))


def masked_softmax(x, mask=None, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` restricted to entries where ``mask`` is true.

    Masked entries come out exactly 0.
    """
    x = _as_tensor(x)
    d = x.data
    if mask is None:
        z = d
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), d.shape)
        if not mask.any(axis=axis).all():
            raise DegenerateSliceError("masked_softmax: a slice has no unmasked entry")
        z = np.where(mask, d, -np.inf)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)
    return _make("masked_softmax", y, (x,), axis)


@_rule("masked_softmax")
def _softmax_bw(g, out, parents, axis):
    y = out.data
    return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)


def softmax(x, axis: int = -1) -> Tensor:
    return masked_softmax(x, None, axis)


def minimum(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _as_tensor(a, b)
    b = _as_tensor(b, a)
    if a.shape != b.shape:
        raise ShapeError(f"minimum: shapes {a.shape} and {b.shape} differ")
    if recording_kinks():
        note_kink("min", np.sign(a.data - b.data).astype(np.int8))
    first = a.data <= b.data
    return _make("minimum", np.where(first, a.data, b.data), (a, b), first)


@_rule("minimum")
def _minimum_bw(g, out, parents, first):
    # ties route to the first argument
    return g * first, g * ~first


def max_pool(x, axis: int = 1) -> Tensor:
    """Max over ``axis`` (kept as a size-1 dimension)."""
    x = _as_tensor(x)
    arg = np.argmax(x.data, axis=axis)
    note_kink("max", arg)
    out = np.take_along_axis(x.data, np.expand_dims(arg, axis), axis=axis)
    return _make("max_pool", out, (x,), (axis, arg))


@_rule("max_pool")
def _max_pool_bw(g, out, parents, ctx):
    axis, arg = ctx
    gx = np.zeros_like(parents[0].data)
    np.put_along_axis(gx, np.expand_dims(arg, axis), g, axis=axis)
    return (gx,)


def gather_rows(x, idx, axis: int = 0) -> Tensor:
    """Select rows (or slices along ``axis``) by integer array or slice."""
    x = _as_tensor(x)
    if isinstance(idx, slice):
        key = (slice(None),) * axis + (idx,)
        data = x.data[key]
    else:
        idx = np.asarray(idx, dtype=np.intp)
        if idx.ndim != 1:
            raise ShapeError("gather_rows: index must be one-dimensional")
        if idx.size and (idx.min() < -x.shape[axis] or idx.max() >= x.shape[axis]):
            raise ShapeError(f"gather_rows: index out of range for axis of size {x.shape[axis]}")
        data = np.take(x.data, idx, axis=axis)
        key = (slice(None),) * axis + (idx,)
    return _make("gather_rows", data, (x,), key)


@_rule("gather_rows")
def _gather_bw(g, out, parents, key):
    gx = np.zeros_like(parents[0].data)
    if isinstance(key[-1], slice):
        gx[key] = g
    else:
        np.add.at(gx, key, g)
    return (gx,)


def scale(x, c: float) -> Tensor:
    x = _as_tensor(x)
    c = x.data.dtype.type(c)
    return _make("scale", x.data * c, (x,), c)


@_rule("scale")
def _scale_bw(g, out, parents, c):
    return (g * c,)


def sum(x, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = _as_tensor(x)
    return _make("sum", np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), (axis, keepdims))


@_rule("sum")
def _sum_bw(g, out, parents, ctx):
    axis, keepdims = ctx
    shape = parents[0].shape
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, shape),)


def transpose(x) -> Tensor:
    x = _as_tensor(x)
    return _make("transpose", x.data.T, (x,))


@_rule("transpose")
def _transpose_bw(g, out, parents, ctx):
    return (g.T,)


PRIMITIVES = frozenset(_BACKWARD)


# --------------------------------------------------------------------------
# reverse sweep


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _sweep(root: Tensor, seed: np.ndarray | None = None) -> dict[int, tuple[Tensor, np.ndarray]]:
    if seed is None:
        if root.data.size != 1:
            raise ShapeError(f"backward from a non-scalar of shape {root.shape} needs an explicit seed")
        seed = np.ones_like(root.data)
    pending: dict[int, np.ndarray] = {id(root): seed}
    leaves: dict[int, tuple[Tensor, np.ndarray]] = {}
    for node in reversed(_toposort(root)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.op is None:
            leaves[id(node)] = (node, g)
            continue
        for p, gp in zip(node.parents, _BACKWARD[node.op](g, node, node.parents, node.ctx)):
            if gp is None or not p.requires_grad:
                continue
            key = id(p)
            pending[key] = pending[key] + gp if key in pending else gp
    return leaves


def grad(root: Tensor, wrt: Sequence[Tensor], seed: np.ndarray | None = None) -> list[np.ndarray]:
    """Gradients of ``root`` with respect to each tensor in ``wrt``."""
    if not root.requires_grad:
        return [np.zeros_like(t.data) for t in wrt]
    leaves = _sweep(root, seed)
    return [np.array(leaves[id(t)][1], dtype=t.dtype) if id(t) in leaves else np.zeros_like(t.data) for t in wrt]


def backward(root: Tensor, seed: np.ndarray | None = None) -> None:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if not root.requires_grad:
        return
    for t, g in _sweep(root, seed).values():
        g = np.asarray(g, dtype=t.dtype)
        t.grad = g.copy() if t.grad is None else t.grad + g


# --------------------------------------------------------------------------
# parameters


class ParameterStore:
    """Named arrays holding every weight of a model.

    Fixed (non-trainable) entries are stored alongside trainable ones so a
    checkpoint captures the complete state.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._tensors: dict[str, Tensor] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, value, trainable: bool = True) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"parameter {name!r} already exists")
        t = Tensor(np.array(value, dtype=self.dtype), requires_grad=trainable)
        self._tensors[name] = t
        self._trainable[name] = trainable
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def items(self):
        return self._tensors.items()

    def trainable_items(self) -> list[tuple[str, Tensor]]:
        return [(k, t) for k, t in self._tensors.items() if self._trainable[k]]

    def scope(self, prefix: str) -> dict[str, Tensor]:
        p = prefix.rstrip("/") + "/"
        return {k[len(p):]: t for k, t in self._tensors.items() if k.startswith(p)}

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def num_parameters(self, trainable_only: bool = True) -> int:
        return int(np.sum([t.data.size for k, t in self._tensors.items() if self._trainable[k] or not trainable_only]))

    def astype(self, dtype) -> ParameterStore:
        out = ParameterStore(dtype)
        for k, t in self._tensors.items():
            out.add(k, t.data, self._trainable[k])
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._tensors.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        missing = set(self._tensors) - set(state)
        if missing:
            raise KeyError(f"state lacks parameters: {sorted(missing)[:5]}")
        for k, t in self._tensors.items():
            arr = np.asarray(state[k])
            if arr.shape != t.shape:
                raise ShapeError(f"parameter {k!r}: stored shape {arr.shape} != model shape {t.shape}")
            t.data = arr.astype(self.dtype, copy=True)


# --------------------------------------------------------------------------
# recurrent cells and dropout


def _check_rows(mat: Tensor, vec: Tensor, what: str) -> None:
    if mat.shape[1] != vec.shape[0]:
        raise ShapeError(f"{what}: weight {mat.shape} does not accept input {vec.shape}")


def lstm_cell(x, h_prev: Tensor, c_prev: Tensor, params: Mapping[str, Tensor], x_proj: Tensor | None = None):
    """One LSTM step on column vectors (or column batches).

    ``params`` holds ``W_x`` (4h x F), ``W_h`` (4h x h) and ``b`` (4h x 1); the
    gate blocks are stacked in the order input, forget, candidate, output.
    ``x_proj`` may carry a precomputed ``W_x @ x + b``.
    """
    W_h = params["W_h"]
    hs = W_h.shape[1]
    if h_prev.shape[0] != hs or c_prev.shape[0] != hs:
        raise ShapeError(f"lstm_cell: state shapes {h_prev.shape}/{c_prev.shape} do not match hidden size {hs}")
    if x_proj is None:
        _check_rows(params["W_x"], x, "lstm_cell")
        x_proj = add(matmul(params["W_x"], x), params["b"])
    gates = add(x_proj, matmul(W_h, h_prev))
    i = sigmoid(gather_rows(gates, slice(0, hs)))
    f = sigmoid(gather_rows(gates, slice(hs, 2 * hs)))
    g = tanh(gather_rows(gates, slice(2 * hs, 3 * hs)))
    o = sigmoid(gather_rows(gates, slice(3 * hs, 4 * hs)))
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


def gru_cell(h_prev: Tensor, a: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """GRU update of state ``h_prev`` with input ``a`` (both d x N).

    ``params``: ``W`` (3d x d) input weights for update/reset/candidate,
    ``U`` (2d x d) recurrent weights for update/reset, ``U_h`` (d x d)
    recurrent candidate weight, ``b`` (3d x 1).
    """
    W, U, U_h = params["W"], params["U"], params["U_h"]
    d = U_h.shape[0]
    if h_prev.shape != a.shape or h_prev.shape[0] != d:
        raise ShapeError(f"gru_cell: state {h_prev.shape} and input {a.shape} must both be {d} x N")
    wa = add(matmul(W, a), params["b"])
    uh = matmul(U, h_prev)
    z = sigmoid(add(gather_rows(wa, slice(0, d)), gather_rows(uh, slice(0, d))))
    r = sigmoid(add(gather_rows(wa, slice(d, 2 * d)), gather_rows(uh, slice(d, 2 * d))))
    cand = tanh(add(gather_rows(wa, slice(2 * d, 3 * d)), matmul(U_h, mul(r, h_prev))))
    return add(h_prev, mul(z, sub(cand, h_prev)))


def run_lstm(X: Tensor, params: Mapping[str, Tensor], reverse: bool = False) -> Tensor:
    """Run an LSTM over the columns of ``X`` (F x N); returns h x N."""
    W_x = params["W_x"]
    _check_rows(W_x, X, "run_lstm")
    hs = params["W_h"].shape[1]
    n = X.shape[1]
    xw = add(matmul(W_x, X), params["b"])
    zero = const(np.zeros((hs, 1), dtype=X.dtype))
    h, c = zero, zero
    outs: list[Tensor] = [None] * n  # type: ignore[list-item]
    steps = range(n - 1, -1, -1) if reverse else range(n)
    for t in steps:
        h, c = lstm_cell(None, h, c, params, x_proj=gather_rows(xw, slice(t, t + 1), axis=1))
        outs[t] = h
    return concat(outs, axis=1)


def variational_dropout(X: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Drop whole feature rows of ``X`` (F x N), one mask shared by all positions."""
    if not 0 <= rate < 1:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0:
        return X
    if rng is None:
        raise ConfigError("training-mode dropout needs a random generator")
    keep = rng.random((X.shape[0], 1)) >= rate
    mask = keep.astype(X.dtype) / X.dtype.type(1 - rate)
    return mul(X, const(mask))


# --------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    skipped: int
    worst: str = ""

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def grad_check(
    loss_fn: Callable[[ParameterStore], Tensor],
    params: ParameterStore,
    h: float = 1e-5,
    names: Iterable[str] | None = None,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare tape gradients with central differences, coordinate by coordinate.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``.  A coordinate whose
    perturbation changes any recorded kink pattern is skipped and counted.
    ``max_coords`` samples that many coordinates per parameter.
    """
    if params.dtype != np.float64:
        raise ConfigError("grad_check needs a float64 parameter store")
    with record_kinks() as base_kinks:
        loss = loss_fn(params)
    if loss.data.size != 1 or not np.isfinite(loss.data).all():
        raise NumericError(f"loss must be a finite scalar, got {loss.data!r}")
    chosen = [(k, t) for k, t in params.trainable_items() if names is None or k in set(names)]
    analytic = grad(loss, [t for _, t in chosen])
    worst, worst_name, checked, skipped = 0.0, "", 0, 0
    for (name, t), g in zip(chosen, analytic):
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort((rng or np.random.default_rng(0)).choice(flat.size, max_coords, replace=False))
        for i in coords:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                with record_kinks() as kp:
                    fp = loss_fn(params).item()
                flat[i] = orig - h
                with record_kinks() as km:
                    fm = loss_fn(params).item()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"non-finite loss while perturbing {name}[{i}]")
            if kp != km or kp != base_kinks:
                skipped += 1
                continue
            num = (fp - fm) / (2 * h)
            a = float(gflat[i])
            rel = abs(a - num) / max(abs(a), abs(num), floor)
            checked += 1
            if rel > worst:
                worst, worst_name = rel, f"{name}[{i}]"
    return GradCheckReport(worst, checked, skipped, worst_name)
