"""Deep Alignment Network: answer-aware passage embeddings.

All matrices are feature x position (columns are tokens).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gradcore as gc
from .errors import EmptyInputError, ShapeError
from .gradcore import ParameterStore, Tensor


@dataclass
class AlignmentInputs:
    passage: Tensor  # F x N, scored side
    answer: Tensor  # F x L, scored side
    passage_value: Tensor  # F~p x N
    answer_value: Tensor  # F~a x L
    W: Tensor  # d x F


@dataclass
class TextEmbeddings:
    """Embedding blocks of one example; contextual blocks may be absent."""

    glove_p: Tensor
    feats_p: Tensor
    glove_a: Tensor
    ctx_p: Tensor | None = None
    ctx_a: Tensor | None = None


@dataclass
class DanOutput:
    word_aligned: Tensor  # (F~p + F~a) x N
    passage_ctx: Tensor  # F_bar x N
    answer_ctx: Tensor | None  # F_bar x L
    X: Tensor  # F_bar x N
    beta_word: Tensor | None  # N x L
    beta_hidden: Tensor | None  # N x L


def align(inputs: AlignmentInputs) -> tuple[Tensor, Tensor]:
    """Soft-align answer columns to every passage position.

    Returns ``[X~p; X~a beta^T]`` and ``beta`` (N x L, rows sum to one).
    """
    Xp, Xa = inputs.passage, inputs.answer
    n, l = Xp.shape[1], Xa.shape[1]
    if n == 0 or l == 0:
        raise EmptyInputError(f"align needs a non-empty passage and answer, got N={n}, L={l}")
    if Xp.shape[0] != Xa.shape[0]:
        raise ShapeError(f"align: passage features {Xp.shape} and answer features {Xa.shape} differ")
    if inputs.passage_value.shape[1] != n or inputs.answer_value.shape[1] != l:
        raise ShapeError("align: value matrices must have N and L columns")
    W = inputs.W
    scores = gc.matmul(gc.transpose(gc.relu(gc.matmul(W, Xp))), gc.relu(gc.matmul(W, Xa)))
    beta = gc.masked_softmax(scores, None, axis=1)
    summary = gc.matmul(inputs.answer_value, gc.transpose(beta))
    return gc.concat([inputs.passage_value, summary], axis=0), beta


def contextualize(H: Tensor, params: ParameterStore, prefix: str) -> Tensor:
    """BiLSTM over the columns of ``H``; forward and backward states stacked."""
    fw = params.scope(f"{prefix}/fw")
    bw = params.scope(f"{prefix}/bw")
    if fw["W_x"].shape[1] != H.shape[0]:
        raise ShapeError(f"{prefix}: BiLSTM expects {fw['W_x'].shape[1]} input rows, got {H.shape[0]}")
    return gc.concat([gc.run_lstm(H, fw), gc.run_lstm(H, bw, reverse=True)], axis=0)


def _stack(*blocks: Tensor | None) -> Tensor:
    present = [b for b in blocks if b is not None]
    return present[0] if len(present) == 1 else gc.concat(present, axis=0)


def dan_forward(
    emb: TextEmbeddings,
    params: ParameterStore,
    *,
    use_dan: bool = True,
    embed_dropout: float = 0.4,
    rnn_dropout: float = 0.3,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> DanOutput:
    Gp, Ga, Bp, Ba = emb.glove_p, emb.glove_a, emb.ctx_p, emb.ctx_a

    def drop(x, rate):
        return gc.variational_dropout(x, rate, training, rng)

    passage_value = _stack(Gp, Bp, emb.feats_p)
    if not use_dan:
        H_word = drop(passage_value, embed_dropout)
        H_p = drop(contextualize(H_word, params, "dan/ctx_p"), rnn_dropout)
        X = drop(contextualize(H_p, params, "dan/out"), rnn_dropout)
        return DanOutput(passage_value, H_p, None, X, None, None)

    word_aligned, beta_w = align(AlignmentInputs(Gp, Ga, passage_value, Ga, params["dan/word/W"]))
    H_p = drop(contextualize(drop(word_aligned, embed_dropout), params, "dan/ctx_p"), rnn_dropout)
    H_a = drop(contextualize(drop(_stack(Ga, Ba), embed_dropout), params, "dan/ctx_a"), rnn_dropout)
    hidden_aligned, beta_h = align(
        AlignmentInputs(_stack(Gp, Bp, H_p), _stack(Ga, Ba, H_a), H_p, H_a, params["dan/hidden/W"])
    )
    X = drop(contextualize(hidden_aligned, params, "dan/out"), rnn_dropout)
    return DanOutput(word_aligned, H_p, H_a, X, beta_w, beta_h)
