"""Graph2Seq question generator: parameters, encoder pipeline and teacher-forced pass."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gradcore as gc
from .biggnn import encode as gnn_encode
from .biggnn import graph_readout
from .corpus import CASE_DIM, EOS_ID, NER_DIM, POS_DIM, SOS_ID, ExtendedVocab, PassageExample, VocabBundle
from .dan import TextEmbeddings, dan_forward
from .decoder import (
    EncoderOutput,
    beam_search,
    decode_step,
    greedy_decode,
    make_encoder_output,
)
from .errors import ConfigError
from .gradcore import ParameterStore, Tensor
from .textgraph import build_dynamic_graph, build_static_graph


@dataclass
class ModelConfig:
    hidden: int = 300
    word_dim: int = 300
    ctx_dim: int = 0
    graph_kind: str = "static"
    hops: int = 3
    knn_k: int = 10
    direction_order: str = "in_out"
    use_dan: bool = True
    dropout_embed: float = 0.4
    dropout_rnn: float = 0.3

    def __post_init__(self):
        if self.hidden < 2 or self.hidden % 2:
            raise ConfigError(f"hidden size must be a positive even number, got {self.hidden}")
        if self.graph_kind not in ("static", "dynamic"):
            raise ConfigError(f"graph kind must be static or dynamic, got {self.graph_kind!r}")
        if self.hops < 0:
            raise ConfigError("hop count must be >= 0")
        if self.knn_k < 1:
            raise ConfigError("knn.k must be >= 1")
        for rate in (self.dropout_embed, self.dropout_rnn):
            if not 0 <= rate < 1:
                raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class ForwardResult:
    gold_probs: list[Tensor]
    covlosses: list[Tensor]
    predictions: list[int]
    targets: list[int]
    floored: int = 0
    extra: dict = field(default_factory=dict)


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    s = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=(rows, cols))


class Graph2Seq:
    def __init__(
        self,
        cfg: ModelConfig,
        vocab: VocabBundle,
        word_table: np.ndarray | None = None,
        contextual: dict[str, tuple[np.ndarray, np.ndarray]] | None = None,
        seed: int = 0,
        dtype=np.float32,
    ):
        self.cfg = cfg
        self.vocab = vocab
        self.contextual = contextual or {}
        self.pretrained = False
        if cfg.ctx_dim and not self.contextual:
            raise ConfigError("ctx_dim > 0 requires contextual embeddings")
        V = len(vocab.words)
        if word_table is None:
            from .corpus import random_embeddings

            word_table = random_embeddings(vocab.words, cfg.word_dim, seed)
        if word_table.shape != (V, cfg.word_dim):
            raise ConfigError(f"word table {word_table.shape} does not match vocabulary x word_dim {(V, cfg.word_dim)}")
        self.params = ParameterStore(dtype)
        self._init_params(np.random.default_rng(np.random.SeedSequence([seed, 1])), word_table)

    # ------------------------------------------------------------------

    def _init_params(self, rng: np.random.Generator, word_table: np.ndarray) -> None:
        cfg, P = self.cfg, self.params
        d, Fw, Fb = cfg.hidden, cfg.word_dim, cfg.ctx_dim
        V = len(self.vocab.words)
        feat = CASE_DIM + POS_DIM + NER_DIM
        Fp_val = Fw + Fb + feat

        def mat(name, rows, cols):
            P.add(name, _glorot(rng, rows, cols))

        def vec(name, rows, value=0.0):
            P.add(name, np.full((rows, 1), value))

        def lstm(prefix, fin, hs):
            mat(f"{prefix}/W_x", 4 * hs, fin)
            mat(f"{prefix}/W_h", 4 * hs, hs)
            vec(f"{prefix}/b", 4 * hs)

        P.add("emb/word", word_table, trainable=False)
        P.add("emb/case", rng.uniform(-0.1, 0.1, size=(3, CASE_DIM)))
        P.add("emb/pos", rng.uniform(-0.1, 0.1, size=(len(self.vocab.pos), POS_DIM)))
        P.add("emb/ner", rng.uniform(-0.1, 0.1, size=(len(self.vocab.ner), NER_DIM)))

        half = d // 2
        if cfg.use_dan:
            mat("dan/word/W", d, Fw)
            for dr in ("fw", "bw"):
                lstm(f"dan/ctx_p/{dr}", Fp_val + Fw, half)
            for dr in ("fw", "bw"):
                lstm(f"dan/ctx_a/{dr}", Fw + Fb, half)
            mat("dan/hidden/W", d, Fw + Fb + d)
            for dr in ("fw", "bw"):
                lstm(f"dan/out/{dr}", 2 * d, half)
            word_rows = Fp_val + Fw
        else:
            for dr in ("fw", "bw"):
                lstm(f"dan/ctx_p/{dr}", Fp_val, half)
            for dr in ("fw", "bw"):
                lstm(f"dan/out/{dr}", d, half)
            word_rows = Fp_val
        if cfg.graph_kind == "dynamic":
            mat("graph/U", d, word_rows)

        mat("gnn/fuse/W", d, 4 * d)
        vec("gnn/fuse/b", d)
        mat("gnn/gru/W", 3 * d, d)
        mat("gnn/gru/U", 2 * d, d)
        mat("gnn/gru/U_h", d, d)
        vec("gnn/gru/b", 3 * d)

        for suffix in ("", "_c", "_s"):
            mat(f"readout/W{suffix}", d, d)
            vec(f"readout/b{suffix}", d)

        lstm("dec/lstm", Fw, d)
        mat("dec/att/W_h", d, d)
        mat("dec/att/W_s", d, d)
        mat("dec/att/w_c", d, 1)
        vec("dec/att/b", d)
        mat("dec/att/v", 1, d)
        mat("dec/gen/w_ctx", 1, d)
        mat("dec/gen/w_s", 1, d)
        mat("dec/gen/w_x", 1, Fw)
        vec("dec/gen/b", 1)
        mat("dec/out/W", V, 2 * d)
        vec("dec/out/b", V)

    def astype(self, dtype) -> Graph2Seq:
        clone = object.__new__(Graph2Seq)
        clone.__dict__.update(self.__dict__)
        clone.params = self.params.astype(dtype)
        return clone

    @property
    def dtype(self) -> np.dtype:
        return self.params.dtype

    # ------------------------------------------------------------------

    def embed(self, ex: PassageExample) -> TextEmbeddings:
        P, dt = self.params, self.params.dtype
        words = self.vocab.words
        table = P["emb/word"]
        Gp = gc.transpose(gc.gather_rows(table, words.ids(ex.passage_tokens)))
        Ga = gc.transpose(gc.gather_rows(table, words.ids(ex.answer_tokens)))
        feats = gc.concat(
            [
                gc.gather_rows(P["emb/case"], list(ex.case)),
                gc.gather_rows(P["emb/pos"], self.vocab.pos.ids(ex.pos)),
                gc.gather_rows(P["emb/ner"], self.vocab.ner.ids(ex.ner)),
            ],
            axis=1,
        )
        Bp = Ba = None
        if self.cfg.ctx_dim:
            if ex.id not in self.contextual:
                raise ConfigError(f"no contextual embeddings for example {ex.id!r}")
            bp, ba = self.contextual[ex.id]
            if bp.shape != (self.cfg.ctx_dim, ex.n) or ba.shape != (self.cfg.ctx_dim, len(ex.answer_tokens)):
                raise ConfigError(f"contextual matrices of {ex.id!r} have shapes {bp.shape}/{ba.shape}")
            Bp, Ba = gc.const(bp, dtype=dt), gc.const(ba, dtype=dt)
        return TextEmbeddings(Gp, gc.transpose(feats), Ga, Bp, Ba)

    def encode(self, ex: PassageExample, src_ids, ext_size: int, training: bool = False,
               rng: np.random.Generator | None = None) -> EncoderOutput:
        cfg, P = self.cfg, self.params
        dan = dan_forward(
            self.embed(ex),
            P,
            use_dan=cfg.use_dan,
            embed_dropout=cfg.dropout_embed,
            rnn_dropout=cfg.dropout_rnn,
            training=training,
            rng=rng,
        )
        if cfg.graph_kind == "static":
            graph = build_static_graph(ex)
        else:
            graph = build_dynamic_graph(dan.word_aligned, P["graph/U"], cfg.knn_k)
        h = gnn_encode(dan.X, graph, cfg.hops, P, cfg.direction_order)
        _, c0, s0 = graph_readout(h, P)
        return make_encoder_output(h, s0, c0, src_ids, len(self.vocab.words), ext_size, P)

    def teacher_forced(
        self,
        ex: PassageExample,
        ext: ExtendedVocab,
        src_ids,
        training: bool = False,
        rng: np.random.Generator | None = None,
        tf_prob: float = 1.0,
        tf_rng: np.random.Generator | None = None,
        enc: EncoderOutput | None = None,
    ) -> ForwardResult:
        """Score the gold question; with probability ``1 - tf_prob`` per step the
        previous-token input is the model's own argmax instead of the gold token."""
        if ex.question_tokens is None:
            raise ConfigError(f"example {ex.id!r} has no question")
        if enc is None:
            enc = self.encode(ex, src_ids, len(ext), training, rng)
        targets = ext.ids(ex.question_tokens) + [EOS_ID]
        state, y = enc.initial_state(), SOS_ID
        probs, covs, preds = [], [], []
        for gold in targets:
            dist, state, cov = decode_step(state, y, enc, self.params)
            probs.append(gc.gather_rows(dist, [gold]))
            covs.append(cov)
            pred = int(np.argmax(dist.data[:, 0]))
            preds.append(pred)
            if tf_prob >= 1.0 or tf_rng.random() < tf_prob:
                y = gold
            else:
                y = pred
        return ForwardResult(probs, covs, preds, targets)

    def greedy(self, ex: PassageExample, ext: ExtendedVocab, src_ids, max_len: int = 30) -> list[int]:
        with gc.no_grad():
            return greedy_decode(self.encode(ex, src_ids, len(ext)), self.params, max_len)

    def beam(self, ex: PassageExample, ext: ExtendedVocab, src_ids, width: int = 5, max_len: int = 30) -> list[int]:
        with gc.no_grad():
            return beam_search(self.encode(ex, src_ids, len(ext)), self.params, width, max_len).tokens
