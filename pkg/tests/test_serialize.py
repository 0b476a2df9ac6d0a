import numpy as np
import pytest

from gth import serialize
from gth.baselines import itq_train, lsh_train, pca_hash_train
from gth.core import TrainConfig, encode, train
from gth.errors import FormatError


@pytest.fixture(scope="module")
def data():
    r = np.random.default_rng(8)
    return r.standard_normal((12, 60)), r.standard_normal((12, 90)) + 0.5


@pytest.fixture(scope="module")
def gth_model(data):
    return train(*data, TrainConfig(bits=6, outer_iters=4, variant="g"))


def _same(a, b):
    assert type(a) is type(b)
    names = ("w_t", "w_s", "mean_t", "mean_s") if hasattr(a, "w_t") else ("w", "mean")
    for name in names:
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_gth_round_trip(tmp_path, gth_model, data):
    serialize.save(gth_model, tmp_path / "m.gthm")
    back = serialize.load(tmp_path / "m.gthm")
    _same(gth_model, back)
    assert back.config == gth_model.config and back.history == gth_model.history
    np.testing.assert_array_equal(encode(back, data[0]), encode(gth_model, data[0]))
    assert serialize.dumps(back) == serialize.dumps(gth_model)


@pytest.mark.parametrize("maker", [lambda x: lsh_train(12, 5, seed=3),
                                   lambda x: pca_hash_train(x, 5),
                                   lambda x: itq_train(x, 5, iters=7, seed=1)])
def test_baseline_round_trip(maker, data):
    m = maker(data[0])
    back = serialize.loads(serialize.dumps(m))
    _same(m, back)
    assert back.kind == m.kind and back.loss_trace == m.loss_trace
    np.testing.assert_array_equal(back.encode(data[0]), m.encode(data[0]))


def test_corrupt_files(gth_model):
    raw = serialize.dumps(gth_model)
    bad = {"truncated": raw[:-4], "magic": b"NOPE" + raw[4:], "trailing": raw + b"\0",
           "version": raw[:4] + b"\x09\x00" + raw[6:], "empty": b""}
    for name, blob in bad.items():
        with pytest.raises(FormatError):
            serialize.loads(blob, name)


def test_header_config_mismatch(gth_model):
    raw = bytearray(serialize.dumps(gth_model))
    raw[14] = ord("h")
    with pytest.raises(FormatError):
        serialize.loads(bytes(raw))


def test_unknown_type():
    with pytest.raises(TypeError):
        serialize.dumps(object())
