from __future__ import annotations

import numpy as np
import pytest

from g2sqg import gradcore as gc
from g2sqg.corpus import VocabBundle
from g2sqg.model import Graph2Seq, ModelConfig
from g2sqg.synthetic import gradcheck_fixture, overfit_corpus


def tiny_model(data=None, dtype=np.float64, seed=0, **cfg) -> tuple[Graph2Seq, list]:
    """A small dropout-free model over ``data`` (default: the two-example fixture)."""
    data = data if data is not None else gradcheck_fixture()
    opts = dict(hidden=6, word_dim=5, hops=2, knn_k=3, dropout_embed=0.0, dropout_rnn=0.0)
    opts.update(cfg)
    model = Graph2Seq(ModelConfig(**opts), VocabBundle.from_dataset(data), seed=seed)
    return (model.astype(dtype) if dtype != np.float32 else model), data


@pytest.fixture
def fixture_data():
    return gradcheck_fixture()


@pytest.fixture(scope="session")
def overfit_data():
    return overfit_corpus(20)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def t64(x) -> gc.Tensor:
    return gc.Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
