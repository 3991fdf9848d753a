"""``g2sqg <command> --config FILE [--key value ...] --out DIR``.

Exit status: 0 on success, 1 on a runtime failure, 2 on a usage or
configuration error.  Dataset paths may name a bundled corpus with
``builtin:overfit``, ``builtin:answer_dependent`` or ``builtin:fixture``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import synthetic
from .config import DEFAULTS, RunConfig
from .corpus import PassageExample, VocabBundle, load_contextual, load_dataset, load_glove, random_embeddings
from .errors import ConfigError, G2SError
from .model import Graph2Seq
from .rewards import corpus_bleu4, rouge_l
from .trainer import OptimizerState, decode_corpus, fit, load_checkpoint, validation_bleu

log = logging.getLogger("g2sqg")

COMMANDS = ("build-vocab", "train", "finetune", "generate", "evaluate", "gradcheck", "hop-sweep")

BUILTIN = {
    "builtin:overfit": synthetic.overfit_corpus,
    "builtin:answer_dependent": synthetic.answer_dependent_corpus,
    "builtin:fixture": synthetic.gradcheck_fixture,
}

VOCAB_FILE = "vocab.json"
PRETRAIN_CKPT = "pretrain.g2s"
FINETUNE_CKPT = "finetune.g2s"


class UsageError(Exception):
    pass


def load_examples(source: str, what: str) -> list[PassageExample]:
    if not source:
        raise ConfigError(f"paths.{what} is not set")
    if source.startswith("builtin:"):
        if source not in BUILTIN:
            raise ConfigError(f"unknown bundled corpus {source!r}; choose from {sorted(BUILTIN)}")
        return BUILTIN[source]()
    return load_dataset(source)


def parse_overrides(extra: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"flag {tok} needs a value")
            value = extra[i + 1]
            i += 2
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="g2sqg", description="Graph-to-sequence question generation.",
                                epilog="Any config key may be given as --key value, e.g. --gnn.hops 2.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value file")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--greedy", action="store_true", help="generate: decode greedily")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


# --------------------------------------------------------------------------
# helpers shared by commands


def _vocab(cfg: RunConfig, train: list[PassageExample] | None = None) -> VocabBundle:
    if cfg["paths.vocab"]:
        return VocabBundle.load(cfg["paths.vocab"])
    if train is None:
        raise ConfigError("paths.vocab is not set")
    return VocabBundle.from_dataset(train, cfg["vocab.max_size"])


def _model(cfg: RunConfig, vocab: VocabBundle, hops: int | None = None) -> Graph2Seq:
    seed = cfg["seed"]
    contextual = load_contextual(cfg["paths.context"]) if cfg["paths.context"] else None
    ctx_dim = next(iter(contextual.values()))[0].shape[0] if contextual else 0
    if cfg["paths.glove"]:
        table = load_glove(cfg["paths.glove"], vocab.words, cfg["model.word_dim"], seed)
    else:
        table = random_embeddings(vocab.words, cfg["model.word_dim"], seed)
    mcfg = cfg.model_config(ctx_dim)
    if hops is not None:
        mcfg.hops = hops
    return Graph2Seq(mcfg, vocab, table, contextual, seed=seed)


def _restore(cfg: RunConfig, model: Graph2Seq, opt: OptimizerState | None = None) -> None:
    if not cfg["paths.checkpoint"]:
        raise ConfigError("paths.checkpoint is not set")
    load_checkpoint(cfg["paths.checkpoint"], model.params, opt, cfg.digest())
    model.pretrained = True


def _vocab_beside_checkpoint(cfg: RunConfig) -> VocabBundle:
    if cfg["paths.vocab"]:
        return VocabBundle.load(cfg["paths.vocab"])
    if cfg["paths.checkpoint"]:
        guess = Path(cfg["paths.checkpoint"]).parent / VOCAB_FILE
        if guess.is_file():
            return VocabBundle.load(guess)
    raise ConfigError("paths.vocab is not set and no vocab.json sits beside the checkpoint")


# --------------------------------------------------------------------------
# commands


def cmd_build_vocab(cfg: RunConfig, out: Path, args) -> int:
    train = load_examples(cfg["paths.train"], "train")
    vb = VocabBundle.from_dataset(train, cfg["vocab.max_size"])
    vb.save(out / VOCAB_FILE)
    print(f"wrote {out / VOCAB_FILE} ({len(vb.words)} words)")
    return 0


def _train_stage(cfg: RunConfig, out: Path, stage: str) -> int:
    train = load_examples(cfg["paths.train"], "train")
    dev = load_examples(cfg["paths.dev"], "dev") if cfg["paths.dev"] else train
    vocab = _vocab(cfg, train) if stage == "pretrain" else _vocab_beside_checkpoint(cfg)
    model = _model(cfg, vocab)
    opt = None
    if stage == "finetune":
        _restore(cfg, model)
    vocab.save(out / VOCAB_FILE)
    ckpt = out / (PRETRAIN_CKPT if stage == "pretrain" else FINETUNE_CKPT)
    log_path = out / f"{stage}_log.jsonl"
    log_path.unlink(missing_ok=True)
    res = fit(model, train, dev, stage, cfg.loss_config(), cfg["seed"], opt, log_path, ckpt, cfg.digest())
    print(f"{stage}: {len(res.epochs)} epochs, best val BLEU-4 {res.best_bleu:.4f} at epoch {res.best_epoch}; "
          f"checkpoint {ckpt}")
    return 0


def cmd_train(cfg, out, args) -> int:
    return _train_stage(cfg, out, "pretrain")


def cmd_finetune(cfg, out, args) -> int:
    return _train_stage(cfg, out, "finetune")


def _eval_examples(cfg: RunConfig) -> list[PassageExample]:
    if cfg["paths.test"]:
        return load_examples(cfg["paths.test"], "test")
    return load_examples(cfg["paths.dev"], "dev")


def cmd_generate(cfg, out, args) -> int:
    vocab = _vocab_beside_checkpoint(cfg)
    model = _model(cfg, vocab)
    _restore(cfg, model)
    examples = _eval_examples(cfg)
    width = 1 if args.greedy else cfg["decode.beam_width"]
    preds = decode_corpus(model, examples, width, cfg["decode.max_len"])
    path = out / "predictions.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for ex, toks in zip(examples, preds):
            fh.write(json.dumps({"id": ex.id, "question_tokens": toks}, ensure_ascii=False) + "\n")
    print(f"wrote {len(preds)} questions to {path}")
    return 0


def cmd_evaluate(cfg, out, args) -> int:
    if not cfg["paths.predictions"]:
        raise ConfigError("paths.predictions is not set")
    refs = {ex.id: ex.question_tokens for ex in _eval_examples(cfg)}
    cands, golds = [], []
    with open(cfg["paths.predictions"], encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["id"] not in refs or refs[rec["id"]] is None:
                raise G2SError(f"line {lineno}: no reference question for id {rec['id']!r}")
            cands.append(list(rec["question_tokens"]))
            golds.append(list(refs[rec["id"]]))
    report = {
        "bleu4": corpus_bleu4(cands, golds),
        "rouge_l": float(np.mean([rouge_l(c, g) for c, g in zip(cands, golds)])),
        "n": len(cands),
    }
    (out / "metrics.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report))
    return 0


def cmd_gradcheck(cfg, out, args) -> int:
    from .verify import run_all

    coords = cfg["gradcheck.max_coords"] or None
    summary = run_all(max_coords=coords, seed=cfg["seed"])
    (out / "gradcheck.json").write_text(json.dumps(summary, indent=2) + "\n")
    ok = summary["max_rel_error"] < cfg["gradcheck.tol"]
    print(f"max relative error {summary['max_rel_error']:.3e} ({'ok' if ok else 'FAILED'}, "
          f"tolerance {cfg['gradcheck.tol']:g}, {summary['seconds']:.1f}s)")
    return 0 if ok else 1


def cmd_hop_sweep(cfg, out, args) -> int:
    train = load_examples(cfg["paths.train"], "train")
    dev = load_examples(cfg["paths.dev"], "dev") if cfg["paths.dev"] else train
    vocab = _vocab(cfg, train)
    rows = []
    for hops in cfg.hop_range():
        model = _model(cfg, vocab, hops)
        res = fit(model, train, dev, "pretrain", cfg.loss_config(), cfg["seed"])
        rows.append((hops, validation_bleu(model, dev, cfg["decode.max_len"]), len(res.epochs)))
        print(f"hops {hops}: val BLEU-4 {rows[-1][1]:.4f}", flush=True)
    with open(out / "hop_sweep.tsv", "w", encoding="utf-8") as fh:
        fh.write("hops\tval_bleu4\tepochs\n")
        for hops, bleu, epochs in rows:
            fh.write(f"{hops}\t{bleu:.6f}\t{epochs}\n")
    return 0


HANDLERS = {
    "build-vocab": cmd_build_vocab,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "hop-sweep": cmd_hop_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.resolve(args.config, parse_overrides(extra))
    except (UsageError, ConfigError) as exc:
        print(f"g2sqg: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"g2sqg: {exc}", file=sys.stderr)
        return 2
    except (G2SError, OSError, KeyError, ValueError) as exc:
        print(f"g2sqg: {args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
