import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from lbsplit.core import SeededRng
from lbsplit.denoise import ResidualConvNet, TrainConfig, synthetic_corpus, train


@pytest.fixture(scope="session")
def trained_net():
    """Denoiser trained once per session with the default recipe (seed 11).

    Mirrors the train-denoiser command's substream layout so CLI-produced
    weights and this fixture agree bit for bit.
    """
    rng = SeededRng(11)
    corpus = synthetic_corpus(rng.substream("corpus"), 24, 96)
    net = ResidualConvNet((1, 8, 8, 1)).init_uniform(rng.substream("init"))
    t0 = time.perf_counter()
    result = train(net, corpus, TrainConfig(), rng.substream("train"))
    wall = time.perf_counter() - t0
    return {"net": net, "result": result, "train_seconds": wall}


@pytest.fixture()
def rng():
    return SeededRng(1234)


@pytest.fixture(scope="session")
def test_image_64():
    return synthetic_corpus(SeededRng(21).substream("img"), 1, 64)[0]


@pytest.fixture(scope="session")
def test_image_32():
    return synthetic_corpus(SeededRng(77).substream("img"), 1, 32)[0]


def assert_close(a, b, tol, label=""):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    err = float(np.max(np.abs(a - b))) if a.size else 0.0
    assert err <= tol, "%s max abs err %.3e > %.3e" % (label or "mismatch", err, tol)
