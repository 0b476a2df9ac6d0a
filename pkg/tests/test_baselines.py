import inspect

import numpy as np
import pytest

from gth import baselines
from gth.baselines import itq_rotation, itq_train, lsh_train, noda_train, pca_hash_train
from gth.core import hash_codes
from gth.errors import DimensionError
from gth.stiefel import pca_init


@pytest.fixture(scope="module")
def x():
    r = np.random.default_rng(4)
    return r.standard_normal((16, 120)) * np.linspace(3, 0.2, 16)[:, None] + 2.0


def test_lsh_deterministic_and_shape():
    a, b = lsh_train(4096, 64, seed=3), lsh_train(4096, 64, seed=3)
    assert a.w.shape == (4096, 64) and np.all(np.isfinite(a.w))
    np.testing.assert_array_equal(a.w, b.w)
    assert not np.array_equal(a.w, lsh_train(4096, 64, seed=4).w)


def test_lsh_column_means_monte_carlo():
    trials, d = 200, 50
    means = np.array([lsh_train(d, 8, seed=s).w.mean(axis=0) for s in range(trials)])
    # each column mean has sd 1/sqrt(d); the average over trials sd 1/sqrt(d*trials)
    assert np.all(np.abs(means.mean(axis=0)) <= 3 / np.sqrt(d * trials))


def test_lsh_bad_dims():
    with pytest.raises(DimensionError):
        lsh_train(0, 4)


def test_pca_hash(x):
    model = pca_hash_train(x, 4)
    xc = x - x.mean(axis=1, keepdims=True)
    np.testing.assert_array_equal(model.w, pca_init(xc, 4))
    np.testing.assert_allclose(model.mean, x.mean(axis=1))
    with pytest.raises(DimensionError):
        pca_hash_train(x, 17)


def test_itq_pm1_input_converges_to_identity():
    r = np.random.default_rng(0)
    v = r.choice([-1.0, 1.0], size=(4, 40))
    rot, losses = itq_rotation(v, iters=5)
    assert losses[0] == 0.0 and losses[-1] <= 1e-20
    np.testing.assert_allclose(rot, np.eye(4), atol=1e-12)


def test_itq_loss_nonincreasing(x):
    model = itq_train(x, 8, iters=50, seed=1)
    trace = np.array(model.loss_trace)
    assert np.all(np.diff(trace) <= 1e-9 * trace[0])
    assert trace[-1] < trace[0]


def test_itq_orthonormal(x):
    for init in ("random", "identity"):
        w = itq_train(x, 8, seed=2, init=init).w
        assert np.max(np.abs(w.T @ w - np.eye(8))) <= 1e-8


def test_itq_deterministic(x):
    a, b = itq_train(x, 8, seed=9), itq_train(x, 8, seed=9)
    np.testing.assert_array_equal(a.w, b.w)


def test_noda_delegates_to_itq(x):
    a = noda_train(x, 6, method="itq", seed=3)
    b = itq_train(x, 6, seed=3)
    np.testing.assert_array_equal(a.w, b.w)
    np.testing.assert_array_equal(noda_train(x, 6, method="pca").w, pca_hash_train(x, 6).w)
    with pytest.raises(ValueError):
        noda_train(x, 6, method="och")


def test_noda_has_no_source_input():
    assert "source" not in " ".join(inspect.signature(noda_train).parameters)


def test_shared_encode_path(x):
    model = itq_train(x, 8, seed=0)
    np.testing.assert_array_equal(model.encode(x), hash_codes(model.w, model.mean, x))


def test_kinds():
    assert baselines.KINDS == ("lsh", "pca", "itq")
