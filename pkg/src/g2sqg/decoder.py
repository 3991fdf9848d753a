"""Attention LSTM decoder with copying and coverage, plus search procedures.

Distributions range over the extended vocabulary: base ids first, then the
batch's out-of-vocabulary source tokens.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gradcore as gc
from .corpus import EOS_ID, SOS_ID, UNK_ID
from .errors import ConfigError, ShapeError
from .gradcore import ParameterStore, Tensor

DEFAULT_BEAM_WIDTH = 5
DEFAULT_MAX_LEN = 30


@dataclass
class DecoderState:
    s: Tensor  # d x 1
    cell: Tensor  # d x 1
    coverage: Tensor  # N x 1, sum of previous attention vectors
    attn: Tensor | None = None
    t: int = 0


@dataclass
class EncoderOutput:
    memory: Tensor  # d x N
    mem_proj: Tensor  # attention projection of the memory
    s0: Tensor
    c0: Tensor
    src_ids: np.ndarray  # extended id of each passage token
    copy_matrix: Tensor  # ext_size x N one-hot scatter
    vocab_size: int
    ext_size: int

    def initial_state(self) -> DecoderState:
        zeros = gc.const(np.zeros((self.memory.shape[1], 1), dtype=self.memory.dtype))
        return DecoderState(self.s0, self.c0, zeros)


def build_copy_matrix(src_ids: np.ndarray, ext_size: int, dtype=np.float32) -> Tensor:
    S = np.zeros((ext_size, len(src_ids)), dtype=dtype)
    S[np.asarray(src_ids), np.arange(len(src_ids))] = 1
    return gc.const(S)


def make_encoder_output(memory: Tensor, s0: Tensor, c0: Tensor, src_ids, vocab_size: int, ext_size: int,
                        params: ParameterStore) -> EncoderOutput:
    src_ids = np.asarray(src_ids, dtype=np.intp)
    if len(src_ids) != memory.shape[1]:
        raise ShapeError(f"{len(src_ids)} source ids for a memory of {memory.shape[1]} columns")
    return EncoderOutput(
        memory,
        gc.matmul(params["dec/att/W_h"], memory),
        s0,
        c0,
        src_ids,
        build_copy_matrix(src_ids, ext_size, memory.dtype),
        vocab_size,
        ext_size,
    )


def attention_step(s: Tensor, memory: Tensor, coverage: Tensor, params: dict[str, Tensor],
                   mem_proj: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Additive attention with a coverage term.

    ``e_i = v^T tanh(W_h h_i + W_s s + w_c c_i + b)``; returns the attention
    column (N x 1) and the context vector (d x 1).
    """
    if coverage.shape != (memory.shape[1], 1):
        raise ShapeError(f"coverage {coverage.shape} does not match memory {memory.shape}")
    if mem_proj is None:
        mem_proj = gc.matmul(params["W_h"], memory)
    query = gc.add(gc.matmul(params["W_s"], s), params["b"])
    feats = gc.add(gc.add(mem_proj, query), gc.matmul(params["w_c"], gc.transpose(coverage)))
    e = gc.matmul(params["v"], gc.tanh(feats))
    a = gc.transpose(gc.masked_softmax(e, None, axis=1))
    return a, gc.matmul(memory, a)


def copy_distribution(p_gen: Tensor, vocab_dist: Tensor, attn: Tensor, src_ids=None, ext_size: int | None = None,
                      copy_matrix: Tensor | None = None) -> Tensor:
    """``p_gen * P_vocab + (1 - p_gen) * (attention summed per source token)``."""
    V = vocab_dist.shape[0]
    if copy_matrix is None:
        if src_ids is None or ext_size is None:
            raise ConfigError("copy_distribution needs src_ids and ext_size or a copy matrix")
        copy_matrix = build_copy_matrix(src_ids, ext_size, vocab_dist.dtype)
    ext_size = copy_matrix.shape[0]
    gen = gc.mul(p_gen, vocab_dist)
    if ext_size > V:
        gen = gc.concat([gen, gc.const(np.zeros((ext_size - V, 1), dtype=vocab_dist.dtype))], axis=0)
    copied = gc.matmul(copy_matrix, attn)
    return gc.add(gen, gc.mul(gc.sub(1.0, p_gen), copied))


def embed_token(word_table: Tensor, y: int) -> Tensor:
    if y >= word_table.shape[0]:
        y = UNK_ID
    return gc.transpose(gc.gather_rows(word_table, [y]))


def decode_step(state: DecoderState, y_prev: int, enc: EncoderOutput, params: ParameterStore):
    """Advance one step; returns ``(distribution, new_state, covloss)``.

    The coverage loss is measured against coverage before this step's update.
    """
    x = embed_token(params["emb/word"], y_prev)
    s, cell = gc.lstm_cell(x, state.s, state.cell, params.scope("dec/lstm"))
    a, ctx = attention_step(s, enc.memory, state.coverage, params.scope("dec/att"), enc.mem_proj)
    p_gen = gc.sigmoid(
        gc.add(
            gc.add(gc.matmul(params["dec/gen/w_ctx"], ctx), gc.matmul(params["dec/gen/w_s"], s)),
            gc.add(gc.matmul(params["dec/gen/w_x"], x), params["dec/gen/b"]),
        )
    )
    logits = gc.add(gc.matmul(params["dec/out/W"], gc.concat([s, ctx], axis=0)), params["dec/out/b"])
    vocab_dist = gc.masked_softmax(logits, None, axis=0)
    dist = copy_distribution(p_gen, vocab_dist, a, copy_matrix=enc.copy_matrix)
    covloss = gc.sum(gc.minimum(a, state.coverage))
    new_state = DecoderState(s, cell, gc.add(state.coverage, a), a, state.t + 1)
    return dist, new_state, covloss


def _argmax(dist: Tensor) -> int:
    return int(np.argmax(dist.data[:, 0]))


def greedy_decode(enc: EncoderOutput, params: ParameterStore, max_len: int = DEFAULT_MAX_LEN) -> list[int]:
    with gc.no_grad():
        state, y, out = enc.initial_state(), SOS_ID, []
        for _ in range(max_len):
            dist, state, _ = decode_step(state, y, enc, params)
            y = _argmax(dist)
            if y == EOS_ID:
                break
            out.append(y)
        return out


@dataclass
class Hypothesis:
    tokens: list[int]
    logp: float
    state: DecoderState
    finished: bool = False
    length: int = 0  # emitted tokens, EOS included
    step_logps: list[float] = field(default_factory=list)

    @property
    def last(self) -> int:
        return self.tokens[-1] if self.tokens else SOS_ID

    def score(self) -> float:
        return self.logp / max(self.length, 1)


def beam_search(enc: EncoderOutput, params: ParameterStore, width: int = DEFAULT_BEAM_WIDTH,
                max_len: int = DEFAULT_MAX_LEN) -> Hypothesis:
    """Beam search; finished hypotheses are ranked by log-probability per emitted token.

    Each live hypothesis proposes its ``width`` most probable continuations;
    search stops once ``width`` hypotheses have emitted EOS.  Hypotheses still
    alive at ``max_len`` are force-finished.
    """
    if width < 1:
        raise ConfigError(f"beam width must be >= 1, got {width}")
    with gc.no_grad():
        beams = [Hypothesis([], 0.0, enc.initial_state())]
        finished: list[Hypothesis] = []
        for _ in range(max_len):
            cands = []
            for bi, hyp in enumerate(beams):
                dist, st, _ = decode_step(hyp.state, hyp.last, enc, params)
                p = dist.data[:, 0].astype(np.float64)
                with np.errstate(divide="ignore"):
                    logp = np.log(p)
                for y in np.argsort(-p, kind="stable")[:width]:
                    cands.append((hyp.logp + logp[y], bi, int(y), st, float(logp[y])))
            cands.sort(key=lambda c: -c[0])
            parents, beams = beams, []
            for score, bi, y, st, lp in cands:
                src = parents[bi]
                if y == EOS_ID:
                    finished.append(Hypothesis(list(src.tokens), score, st, True, src.length + 1, src.step_logps + [lp]))
                else:
                    beams.append(Hypothesis(src.tokens + [y], score, st, False, src.length + 1, src.step_logps + [lp]))
                if len(beams) == width or len(finished) >= width:
                    break
            if len(finished) >= width or not beams:
                break
        else:
            for hyp in beams:
                hyp.finished = True
            finished.extend(beams)
        return max(finished, key=lambda h: h.score())


def sample_sequence(enc: EncoderOutput, params: ParameterStore, mode: str = "multinomial",
                    max_len: int = DEFAULT_MAX_LEN, rng: np.random.Generator | None = None):
    """Decode by sampling or greedily, recording log-probabilities on the tape.

    Returns ``(tokens, sum_logp, covlosses)``; ``tokens`` excludes EOS while
    ``sum_logp`` includes the EOS step when it was emitted.
    """
    if mode not in ("multinomial", "greedy"):
        raise ConfigError(f"unknown sampling mode {mode!r}")
    if mode == "multinomial" and rng is None:
        raise ConfigError("multinomial sampling needs a random generator")
    state, y = enc.initial_state(), SOS_ID
    tokens: list[int] = []
    logps: list[Tensor] = []
    covlosses: list[Tensor] = []
    for _ in range(max_len):
        dist, state, cov = decode_step(state, y, enc, params)
        if mode == "greedy":
            y = _argmax(dist)
        else:
            cdf = np.cumsum(dist.data[:, 0].astype(np.float64))
            y = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)
        logps.append(gc.log(gc.gather_rows(dist, [y])))
        covlosses.append(cov)
        if y == EOS_ID:
            break
        tokens.append(y)
    return tokens, gc.sum(gc.concat(logps, axis=0)), covlosses
