from __future__ import annotations

import dataclasses
import json
import math
import warnings
from types import SimpleNamespace

import numpy as np
import pytest

from g2sqg import gradcore as gc
from g2sqg import trainer
from g2sqg.corpus import extend_vocab
from g2sqg.errors import ConfigError, IntegrityError, NumericError
from g2sqg.gradcore import ParameterStore
from g2sqg.model import ForwardResult
from g2sqg.trainer import (
    LossConfig,
    OptimizerState,
    PlateauTracker,
    adam_step,
    checkpoint_io,
    fit,
    lm_loss,
    load_checkpoint,
    mixed_loss,
    rl_loss,
    save_checkpoint,
    teacher_forcing_prob,
)

from conftest import tiny_model


def C(x):
    return gc.const(np.asarray(x, dtype=np.float64))


def test_lm_loss_examples():
    perfect = ForwardResult([C([[1.0]]), C([[1.0]])], [C(0.0), C(0.0)], [], [])
    assert lm_loss([perfect]).item() == 0.0
    uniform = ForwardResult([C([[1 / 8]]), C([[1 / 8]])], [C(0.3), C(0.2)], [], [])
    assert abs(lm_loss([uniform], lam=0.0).item() - 2 * math.log(8)) < 1e-12
    assert abs(lm_loss([uniform], lam=0.4).item() - (2 * math.log(8) + 0.4 * 0.5)) < 1e-12
    assert LossConfig().lam == 0.4


def test_lm_loss_floors_zero_probability():
    r = ForwardResult([C([[0.0]]), C([[0.5]])], [C(0.0), C(0.0)], [], [])
    loss = lm_loss([r], lam=0.0)
    assert r.floored == 1 and math.isfinite(loss.item())
    assert abs(loss.item() - (-math.log(1e-12) - math.log(0.5))) < 1e-9


def test_lm_loss_averages_batch():
    a = ForwardResult([C([[0.5]])], [C(0.0)], [], [])
    b = ForwardResult([C([[0.25]])], [C(0.0)], [], [])
    assert abs(lm_loss([a, b]).item() - (math.log(2) + math.log(4)) / 2) < 1e-12
    with pytest.raises(ConfigError):
        lm_loss([])


def _rl_setup(monkeypatch, r_base, r_sample, sum_logp, same=False):
    model, data = tiny_model()
    ext, srcs = extend_vocab(data, model.vocab.words)
    theta = gc.Tensor(np.array([[sum_logp]]), requires_grad=True)
    monkeypatch.setattr(trainer, "greedy_decode", lambda enc, params, max_len: [4, 5])
    monkeypatch.setattr(trainer, "sample_sequence",
                        lambda enc, params, mode, max_len, rng: ([4, 5] if same else [6], gc.sum(theta), []))
    rewards = iter([r_base, r_sample])
    monkeypatch.setattr(trainer, "total_reward", lambda c, r, e, a: SimpleNamespace(total=next(rewards)))
    return model, data[0], ext, srcs[0], theta


def test_rl_loss_hand_arithmetic(monkeypatch):
    model, ex, ext, src, theta = _rl_setup(monkeypatch, 0.5, 0.7, -10.0)
    loss, info = rl_loss(model, ex, ext, src, np.random.default_rng(0))
    assert abs(loss.item() - 2.0) < 1e-12 and info.r_baseline == 0.5 and info.r_sample == 0.7
    # the reward gap is a constant factor: d loss / d theta = r_b - r_s
    (g,) = gc.grad(loss, [theta])
    assert abs(g.item() - (0.5 - 0.7)) < 1e-12


def test_rl_loss_zero_when_sample_equals_baseline(monkeypatch):
    model, ex, ext, src, _ = _rl_setup(monkeypatch, 0.6, 0.6, -3.0, same=True)
    loss, _ = rl_loss(model, ex, ext, src, np.random.default_rng(0))
    assert loss.item() == 0.0


def test_rl_loss_sign_property_real_model():
    model, data = tiny_model()
    ext, srcs = extend_vocab(data, model.vocab.words)
    for seed in range(10):
        loss, info = rl_loss(model, data[seed % 2], ext, srcs[seed % 2], np.random.default_rng(seed), max_len=6)
        assert info.sum_logp < 0
        assert np.sign(loss.item()) == np.sign(info.r_sample - info.r_baseline)


def test_mixed_loss():
    assert mixed_loss(3.0, 5.0, 0.0) == 5.0 and mixed_loss(3.0, 5.0, 1.0) == 3.0
    assert abs(mixed_loss(3.0, 5.0, 0.99) - (0.99 * 3 + 0.01 * 5)) < 1e-15
    assert abs(mixed_loss(C(3.0), C(5.0), 0.25).item() - 4.5) < 1e-15
    with pytest.raises(ConfigError):
        mixed_loss(1.0, 1.0, 1.5)
    assert LossConfig().gamma == 0.99


def test_teacher_forcing_schedule():
    assert teacher_forcing_prob(0) == 0.75
    assert abs(teacher_forcing_prob(10000) - 0.75 * math.exp(10000 * math.log(0.9999))) < 1e-12
    assert abs(teacher_forcing_prob(10000) - 0.2759) < 1e-4
    assert teacher_forcing_prob(10**6) < 1e-40


def _scalar_store(v=1.0):
    P = ParameterStore(np.float64)
    P.add("w", [[v]])
    return P


def test_adam_first_step():
    P = _scalar_store()
    st = OptimizerState.for_params(P)
    adam_step(P, {"w": np.array([[1.0]])}, st, lr=0.1)
    assert abs(P["w"].data.item() - (1.0 - 0.1 / (1 + 1e-8))) < 1e-15


def test_adam_zero_gradient_and_clipping():
    P = _scalar_store()
    st = OptimizerState.for_params(P)
    adam_step(P, {"w": np.zeros((1, 1))}, st, lr=0.1)
    assert P["w"].data.item() == 1.0
    g, norm = trainer.clip_by_global_norm({"a": np.array([12.0]), "b": np.array([16.0])}, 10.0)
    assert norm == 20.0 and g["a"].tolist() == [6.0] and g["b"].tolist() == [8.0]
    with pytest.raises(NumericError):
        adam_step(P, {"w": np.array([[np.nan]])}, st, lr=0.1)
    assert P["w"].data.item() == 1.0 and st.step == 1


def test_plateau_trace():
    p = PlateauTracker(1e-3, 0.5, 3, 10)
    lrs = []
    for s in [10, 10, 10, 10]:
        p.update(s)
        lrs.append(p.lr)
    assert lrs == [1e-3, 1e-3, 1e-3, 5e-4]
    p = PlateauTracker(1e-3)
    assert all(p.update(s) == (True, False) for s in [1, 2, 3, 4, 5]) and p.lr == 1e-3
    p = PlateauTracker(1e-3)
    stops = [p.update(0.0)[1] for _ in range(11)]
    assert stops == [False] * 10 + [True]


def test_fit_lr_zero_leaves_parameters_bitwise(fixture_data):
    model, data = tiny_model(dtype=np.float32, dropout_embed=0.4, dropout_rnn=0.3)
    before = model.params.state()
    fit(model, data, cfg=LossConfig(epochs=1, batch_size=2, lr_pretrain=0.0, max_len=6), validate=False)
    assert all(np.array_equal(before[k], model.params[k].data) for k in before)


def test_full_teacher_forcing_loss_is_seed_independent():
    losses = []
    for seed in (0, 1, 7):
        model, data = tiny_model(dtype=np.float32)
        res = fit(model, data, cfg=LossConfig(epochs=1, batch_size=2, tf_base=1.0, max_len=6), seed=seed,
                  validate=False)
        losses.append(sorted(s["loss"] for s in res.steps))
    assert losses[0] == losses[1] == losses[2]


def test_fit_validation_errors(fixture_data):
    model, data = tiny_model()
    with pytest.raises(ConfigError):
        fit(model, [], cfg=LossConfig(epochs=1))
    with pytest.raises(ConfigError):
        fit(model, data, stage="finetune", cfg=LossConfig(epochs=1))
    with pytest.raises(ConfigError):
        fit(model, [dataclasses.replace(data[0], question_tokens=None)], cfg=LossConfig(epochs=1))


def test_fit_log_and_early_stop(tmp_path):
    model, data = tiny_model(dtype=np.float32)
    cfg = LossConfig(epochs=30, batch_size=2, max_len=4, early_stop=2, lr_pretrain=0.0)
    res = fit(model, data, data, cfg=cfg, log_path=tmp_path / "log.jsonl", ckpt_path=tmp_path / "c.g2s")
    assert res.stopped_early and len(res.epochs) == 3
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert len(lines) == 3 and set(json.loads(lines[0])) == {"epoch", "train_loss", "val_bleu4", "lr", "stage"}
    assert (tmp_path / "c.g2s").is_file()


def test_checkpoint_roundtrip_and_resume(tmp_path):
    model, data = tiny_model(dtype=np.float32)
    opt = OptimizerState.for_params(model.params)
    fit(model, data, cfg=LossConfig(epochs=1, batch_size=2, max_len=4), opt=opt, validate=False)
    save_checkpoint(tmp_path / "c.g2s", model.params, opt, "abc123", "pretrain")
    ext, srcs = extend_vocab(data, model.vocab.words)
    with gc.no_grad():
        ref = [p.data.copy() for p in model.teacher_forced(data[0], ext, srcs[0]).gold_probs]

    fresh, _ = tiny_model(dtype=np.float32, seed=9)
    opt2 = OptimizerState.for_params(fresh.params)
    meta = load_checkpoint(tmp_path / "c.g2s", fresh.params, opt2, "abc123")
    assert meta == {"config_hash": "abc123", "stage": "pretrain"} and opt2.step == opt.step
    for k, t in model.params.items():
        assert fresh.params[k].data.tobytes() == t.data.tobytes()
        if model.params.is_trainable(k):
            assert opt2.m[k].tobytes() == opt.m[k].tobytes() and opt2.v[k].tobytes() == opt.v[k].tobytes()
    with gc.no_grad():
        out = [p.data for p in fresh.teacher_forced(data[0], ext, srcs[0]).gold_probs]
    assert all(a.tobytes() == b.tobytes() for a, b in zip(ref, out))

    with pytest.warns(UserWarning, match="config hash"):
        load_checkpoint(tmp_path / "c.g2s", fresh.params, None, "other")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert checkpoint_io("load", tmp_path / "c.g2s", fresh.params, None, "abc123")["status"] == "loaded"


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "c.g2s"
    model, _ = tiny_model(dtype=np.float32)
    checkpoint_io("save", p, model.params)
    blob = bytearray(p.read_bytes())
    blob[0:5] = b"NOPE!"
    p.write_bytes(bytes(blob))
    with pytest.raises(IntegrityError):
        checkpoint_io("load", p, model.params)
    with pytest.raises(ConfigError):
        checkpoint_io("copy", p, model.params)
