"""Losses, optimizer, two-stage training loop and checkpoints."""

from __future__ import annotations

import json
import logging
import math
import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gradcore as gc
from .container import read_container, write_container
from .corpus import PassageExample, extend_vocab
from .decoder import greedy_decode, sample_sequence
from .errors import ConfigError, NumericError
from .gradcore import ParameterStore, Tensor
from .model import ForwardResult, Graph2Seq
from .rewards import corpus_bleu4, table_embedder, total_reward

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass
class LossConfig:
    lam: float = 0.4
    gamma: float = 0.99
    alpha: float = 0.1
    tf_base: float = 0.75
    tf_decay: float = 0.9999
    clip: float = 10.0
    lr_pretrain: float = 1e-3
    lr_finetune: float = 1e-5
    plateau_factor: float = 0.5
    plateau_patience: int = 3
    early_stop: int = 10
    batch_size: int = 8
    epochs: int = 100
    max_len: int = 30

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.lam < 0 or self.alpha < 0:
            raise ConfigError("lambda and alpha must be non-negative")
        if self.lr_pretrain < 0 or self.lr_finetune < 0 or self.clip <= 0:
            raise ConfigError("learning rates must be >= 0 and the clip norm positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")


def _total(terms: Sequence[Tensor]) -> Tensor:
    out = gc.sum(terms[0])
    for t in terms[1:]:
        out = gc.add(out, gc.sum(t))
    return out


# --------------------------------------------------------------------------
# losses


def lm_loss(results: Sequence[ForwardResult], lam: float = 0.4) -> Tensor:
    """Batch mean of ``sum_t -log P(y*_t) + lam * covloss_t``.

    Gold probabilities below 1e-12 are floored (no gradient); the count is
    written to each result's ``floored`` field.
    """
    if not results:
        raise ConfigError("lm_loss over an empty batch")
    per_example = []
    for r in results:
        terms, r.floored = [], 0
        for p, cov in zip(r.gold_probs, r.covlosses):
            if p.item() < PROB_FLOOR:
                r.floored += 1
                terms.append(gc.const(np.asarray(-math.log(PROB_FLOOR), dtype=p.dtype)))
            else:
                terms.append(gc.scale(gc.log(p), -1.0))
            if lam:
                terms.append(gc.scale(cov, lam))
        per_example.append(_total(terms))
    return gc.scale(_total(per_example), 1.0 / len(results))


@dataclass
class RLInfo:
    baseline_tokens: list[str]
    sample_tokens: list[str]
    r_baseline: float
    r_sample: float
    sum_logp: float
    loss: float


def rl_loss(
    model: Graph2Seq,
    ex: PassageExample,
    ext,
    src_ids,
    rng: np.random.Generator,
    alpha: float = 0.1,
    max_len: int = 30,
    enc=None,
    training: bool = True,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[Tensor, RLInfo]:
    """Self-critical loss ``(r(greedy) - r(sample)) * sum_t log P(sample_t)``.

    The reward gap is a constant; gradients flow through the sample's
    log-probabilities only.
    """
    if ex.question_tokens is None:
        raise ConfigError(f"example {ex.id!r} has no question")
    if enc is None:
        enc = model.encode(ex, src_ids, len(ext), training, dropout_rng)
    params = model.params
    with gc.no_grad():
        base_ids = greedy_decode(enc, params, max_len)
    sample_ids, sum_logp, _ = sample_sequence(enc, params, "multinomial", max_len, rng)
    embed = table_embedder(model.vocab.words, params["emb/word"].data)
    ref = list(ex.question_tokens)
    base_tokens = [ext.token(i) for i in base_ids]
    sample_tokens = [ext.token(i) for i in sample_ids]
    r_b = total_reward(base_tokens, ref, embed, alpha).total
    r_s = total_reward(sample_tokens, ref, embed, alpha).total
    loss = gc.scale(sum_logp, r_b - r_s)
    return loss, RLInfo(base_tokens, sample_tokens, r_b, r_s, sum_logp.item(), loss.item())


def mixed_loss(l_rl, l_lm, gamma: float = 0.99):
    """``gamma * l_rl + (1 - gamma) * l_lm``."""
    if not 0 <= gamma <= 1:
        raise ConfigError(f"gamma must lie in [0, 1], got {gamma}")
    if gamma == 0:
        return l_lm
    if gamma == 1:
        return l_rl
    if isinstance(l_rl, Tensor) or isinstance(l_lm, Tensor):
        return gc.add(gc.scale(l_rl, gamma), gc.scale(l_lm, 1 - gamma))
    return gamma * l_rl + (1 - gamma) * l_lm


def teacher_forcing_prob(step: int, base: float = 0.75, decay: float = 0.9999) -> float:
    if step < 0:
        raise ConfigError("training step must be >= 0")
    return base * decay**step


# --------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ParameterStore) -> OptimizerState:
        st = cls()
        for name, t in params.trainable_items():
            st.m[name] = np.zeros_like(t.data)
            st.v[name] = np.zeros_like(t.data)
        return st


def clip_by_global_norm(grads: dict[str, np.ndarray], clip: float) -> tuple[dict[str, np.ndarray], float]:
    norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if not math.isfinite(norm):
        raise NumericError("non-finite gradient; optimizer step aborted")
    if clip and norm > clip:
        factor = clip / norm
        grads = {k: g * g.dtype.type(factor) for k, g in grads.items()}
    return grads, norm


def adam_step(params: ParameterStore, grads: dict[str, np.ndarray], state: OptimizerState, lr: float,
              clip: float = 10.0) -> float:
    """Clip to global L2 norm ``clip``, then one bias-corrected Adam update.

    Returns the gradient norm before clipping.
    """
    grads, norm = clip_by_global_norm(grads, clip)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1 - b1**t, 1 - b2**t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ConfigError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        dt = p.dtype.type
        m = dt(b1) * state.m[name] + dt(1 - b1) * g
        v = dt(b2) * state.v[name] + dt(1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = dt(lr) * (m / dt(c1)) / (np.sqrt(v / dt(c2)) + dt(state.eps))
        p.data = p.data - update
    return norm


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str | Path, params: ParameterStore, opt: OptimizerState | None = None,
                    config_hash: str = "", stage: str = "") -> None:
    tensors: dict[str, np.ndarray] = {f"param/{k}": t.data for k, t in params.items()}
    if opt is not None:
        for k in opt.m:
            tensors[f"opt/m/{k}"] = opt.m[k]
            tensors[f"opt/v/{k}"] = opt.v[k]
        tensors["opt/step"] = np.array([opt.step], dtype=np.float32)
    if config_hash:
        tensors[f"meta/config_hash/{config_hash}"] = np.zeros((0,), dtype=np.float32)
    if stage:
        tensors[f"meta/stage/{stage}"] = np.zeros((0,), dtype=np.float32)
    write_container(path, tensors)


def load_checkpoint(path: str | Path, params: ParameterStore, opt: OptimizerState | None = None,
                    config_hash: str | None = None) -> dict:
    """Restore parameters (and optimizer state) in place; returns metadata."""
    tensors = read_container(path)
    meta = {"config_hash": "", "stage": ""}
    for name in tensors:
        if name.startswith("meta/config_hash/"):
            meta["config_hash"] = name.split("/", 2)[2]
        elif name.startswith("meta/stage/"):
            meta["stage"] = name.split("/", 2)[2]
    if config_hash is not None and meta["config_hash"] != config_hash:
        warnings.warn(f"checkpoint config hash {meta['config_hash']!r} differs from current {config_hash!r}",
                      stacklevel=2)
    params.load_state({k[len("param/"):]: v for k, v in tensors.items() if k.startswith("param/")})
    if opt is not None and "opt/step" in tensors:
        opt.step = int(tensors["opt/step"][0])
        for name, _ in params.trainable_items():
            opt.m[name] = tensors[f"opt/m/{name}"].astype(params.dtype)
            opt.v[name] = tensors[f"opt/v/{name}"].astype(params.dtype)
    return meta


def checkpoint_io(mode: str, path: str | Path, params: ParameterStore, opt: OptimizerState | None = None,
                  config_hash: str = "") -> dict:
    if mode == "save":
        save_checkpoint(path, params, opt, config_hash)
        return {"status": "saved"}
    if mode == "load":
        return {"status": "loaded", **load_checkpoint(path, params, opt, config_hash)}
    raise ConfigError(f"checkpoint mode must be save or load, got {mode!r}")


# --------------------------------------------------------------------------
# evaluation helpers


def decode_corpus(model: Graph2Seq, examples: Sequence[PassageExample], beam_width: int = 1,
                  max_len: int = 30) -> list[list[str]]:
    """Decode every example (greedy when ``beam_width`` is 1); returns token strings."""
    out = []
    for ex in examples:
        ext, (src,) = extend_vocab([ex], model.vocab.words)
        if beam_width == 1:
            ids = model.greedy(ex, ext, src, max_len)
        else:
            ids = model.beam(ex, ext, src, beam_width, max_len)
        out.append([ext.token(i) for i in ids])
    return out


def exact_match(model: Graph2Seq, examples: Sequence[PassageExample], max_len: int = 30) -> float:
    preds = decode_corpus(model, examples, 1, max_len)
    return float(np.mean([p == list(ex.question_tokens) for p, ex in zip(preds, examples)]))


def token_accuracy(model: Graph2Seq, examples: Sequence[PassageExample]) -> float:
    """Teacher-forced argmax accuracy over gold tokens (EOS included)."""
    hits = total = 0
    with gc.no_grad():
        for ex in examples:
            ext, (src,) = extend_vocab([ex], model.vocab.words)
            r = model.teacher_forced(ex, ext, src)
            hits += sum(p == t for p, t in zip(r.predictions, r.targets))
            total += len(r.targets)
    return hits / total


def greedy_reward(model: Graph2Seq, examples: Sequence[PassageExample], alpha: float = 0.1,
                  max_len: int = 30) -> float:
    """Mean reward of greedy decodes against the gold questions."""
    embed = table_embedder(model.vocab.words, model.params["emb/word"].data)
    preds = decode_corpus(model, examples, 1, max_len)
    return float(np.mean([total_reward(p, list(ex.question_tokens), embed, alpha).total
                          for p, ex in zip(preds, examples)]))


def validation_bleu(model: Graph2Seq, examples: Sequence[PassageExample], max_len: int = 30) -> float:
    preds = decode_corpus(model, examples, 1, max_len)
    return corpus_bleu4(preds, [list(ex.question_tokens) for ex in examples])


# --------------------------------------------------------------------------
# training loop


@dataclass
class FitResult:
    epochs: list[dict] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    best_bleu: float = -1.0
    best_epoch: int = 0
    stopped_early: bool = False


class PlateauTracker:
    """Learning-rate reduction and early stopping on a maximized metric."""

    def __init__(self, lr: float, factor: float = 0.5, patience: int = 3, early_stop: int = 10):
        self.lr, self.factor, self.patience, self.early_stop = lr, factor, patience, early_stop
        self.best = -math.inf
        self.stale = 0
        self.bad = 0

    def update(self, score: float) -> tuple[bool, bool]:
        """Record one epoch; returns ``(improved, stop)``."""
        if score > self.best:
            self.best, self.stale, self.bad = score, 0, 0
            return True, False
        self.stale += 1
        self.bad += 1
        if self.bad >= self.patience:
            self.lr *= self.factor
            self.bad = 0
        return False, self.stale >= self.early_stop


def fit(
    model: Graph2Seq,
    train: Sequence[PassageExample],
    val: Sequence[PassageExample] | None = None,
    stage: str = "pretrain",
    cfg: LossConfig | None = None,
    seed: int = 0,
    opt: OptimizerState | None = None,
    log_path: str | Path | None = None,
    ckpt_path: str | Path | None = None,
    config_hash: str = "",
    callback: Callable[[dict, Graph2Seq], bool] | None = None,
    max_steps: int | None = None,
    validate: bool = True,
) -> FitResult:
    """Train for up to ``cfg.epochs`` epochs, keeping the best-validation parameters.

    ``callback(epoch_record, model)`` may return True to stop; ``max_steps``
    caps optimizer updates.
    """
    cfg = cfg or LossConfig()
    if not train:
        raise ConfigError("training set is empty")
    if stage not in ("pretrain", "finetune"):
        raise ConfigError(f"stage must be pretrain or finetune, got {stage!r}")
    if stage == "finetune" and not model.pretrained:
        raise ConfigError("fine-tuning needs a model loaded from a stage-1 checkpoint")
    for ex in train:
        if ex.question_tokens is None:
            raise ConfigError(f"training example {ex.id!r} has no question")
    val = list(val) if val else list(train)
    params = model.params
    opt = opt or OptimizerState.for_params(params)
    shuffle_rng, drop_rng, tf_rng, sample_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))
    plateau = PlateauTracker(cfg.lr_pretrain if stage == "pretrain" else cfg.lr_finetune,
                             cfg.plateau_factor, cfg.plateau_patience, cfg.early_stop)
    result = FitResult()
    best_state = params.state()
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    trainables = params.trainable_items()
    steps_done = 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = shuffle_rng.permutation(len(train))
            losses = []
            for lo in range(0, len(order), cfg.batch_size):
                batch = [train[i] for i in order[lo : lo + cfg.batch_size]]
                ext, srcs = extend_vocab(batch, model.vocab.words)
                params.zero_grad()
                tf = teacher_forcing_prob(opt.step, cfg.tf_base, cfg.tf_decay)
                per_ex, rl_infos = [], []
                for ex, src in zip(batch, srcs):
                    enc = model.encode(ex, src, len(ext), True, drop_rng)
                    fr = model.teacher_forced(ex, ext, src, True, tf_prob=tf, tf_rng=tf_rng, enc=enc)
                    l_lm = lm_loss([fr], cfg.lam)
                    if stage == "finetune" and cfg.gamma > 0:
                        l_rl, info = rl_loss(model, ex, ext, src, sample_rng, cfg.alpha, cfg.max_len, enc=enc)
                        rl_infos.append(info)
                        per_ex.append(mixed_loss(l_rl, l_lm, cfg.gamma))
                    else:
                        per_ex.append(l_lm)
                loss = gc.scale(_total(per_ex), 1.0 / len(batch))
                if not np.isfinite(loss.data).all():
                    raise NumericError(f"non-finite loss at epoch {epoch}")
                gc.backward(loss)
                grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in trainables}
                norm = adam_step(params, grads, opt, plateau.lr, cfg.clip)
                losses.append(loss.item())
                result.steps.append({
                    "step": opt.step, "epoch": epoch, "loss": loss.item(), "grad_norm": norm, "tf_prob": tf,
                    "rl": [vars(i) for i in rl_infos],
                })
                steps_done += 1
                if max_steps is not None and steps_done >= max_steps:
                    break
            val_bleu = validation_bleu(model, val, cfg.max_len) if validate else float("nan")
            rec = {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_bleu4": val_bleu,
                   "lr": plateau.lr, "stage": stage}
            stop = False
            if validate:
                improved, stop = plateau.update(val_bleu)
                if improved:
                    best_state = params.state()
                    result.best_bleu, result.best_epoch = val_bleu, epoch
                    if ckpt_path:
                        save_checkpoint(ckpt_path, params, opt, config_hash, stage)
            else:
                best_state = params.state()
            result.epochs.append(rec)
            log.info("epoch %d loss %.4f val_bleu4 %.4f lr %.2e", epoch, rec["train_loss"], val_bleu, rec["lr"])
            if log_fh:
                log_fh.write(json.dumps(rec) + "\n")
            if callback is not None and callback(rec, model):
                break
            if stop:
                result.stopped_early = True
                break
            if max_steps is not None and steps_done >= max_steps:
                break
    finally:
        if log_fh:
            log_fh.close()
    params.load_state(best_state)
    if ckpt_path and not validate:
        save_checkpoint(ckpt_path, params, opt, config_hash, stage)
    return result
