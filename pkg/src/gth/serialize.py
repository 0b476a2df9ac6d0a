"""Binary model container.

Layout (little-endian throughout)::

    magic     4 bytes   b"GTHM" (transfer model) or b"BASE" (baseline)
    version   u16
    d, r      u32, u32
    tag       u8        variant ('g'/'h') or baseline kind ('l'/'p'/'i')
    W         f64[d*r]  row-major; GTHM stores W_t then W_s
    mean      f64[d]    GTHM stores mean_t then mean_s
    config    u32 byte length + UTF-8 "key=value\\n" lines
    history   u32 count + count (f64, f64) pairs

GTHM history pairs are (objective, max|dW|); BASE pairs are
(iteration, quantisation loss) for ITQ and empty otherwise.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .baselines import BaselineModel
from .core import GthModel, IterationRecord, TrainConfig
from .errors import FormatError

VERSION = 1
GTH_MAGIC = b"GTHM"
BASE_MAGIC = b"BASE"
_HEAD = struct.Struct("<4sHIIB")
_KIND_TAGS = {"lsh": b"l", "pca": b"p", "itq": b"i"}


def _mat(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _kv_block(items) -> bytes:
    text = "".join(f"{k}={v}\n" for k, v in items).encode("utf-8")
    return struct.pack("<I", len(text)) + text


def _pairs(pairs) -> bytes:
    arr = np.asarray(pairs, dtype="<f8").reshape(-1, 2)
    return struct.pack("<I", arr.shape[0]) + arr.tobytes()


def dumps(model) -> bytes:
    if isinstance(model, GthModel):
        parts = [_HEAD.pack(GTH_MAGIC, VERSION, model.d, model.r, ord(model.variant)),
                 _mat(model.w_t), _mat(model.w_s), _mat(model.mean_t), _mat(model.mean_s),
                 _kv_block(model.config.to_items()),
                 _pairs([(h.objective, h.max_dw) for h in model.history])]
        return b"".join(parts)
    if isinstance(model, BaselineModel):
        items = [("kind", model.kind), ("seed", model.seed), ("iters", model.iters),
                 ("normalize", "true" if model.normalize else "false")]
        parts = [_HEAD.pack(BASE_MAGIC, VERSION, model.d, model.r, _KIND_TAGS[model.kind][0]),
                 _mat(model.w), _mat(model.mean), _kv_block(items),
                 _pairs([(i, v) for i, v in enumerate(model.loss_trace)])]
        return b"".join(parts)
    raise TypeError(f"cannot serialise {type(model).__name__}")


class _Reader:
    def __init__(self, raw: bytes, name: str):
        self.raw, self.pos, self.name = raw, 0, name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise FormatError(f"{self.name}: truncated model file")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def floats(self, *shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)

    def kv(self) -> list[tuple[str, str]]:
        (n,) = self.unpack(struct.Struct("<I"))
        try:
            text = self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{self.name}: config block is not UTF-8") from exc
        items = []
        for line in text.splitlines():
            key, sep, val = line.partition("=")
            if not sep:
                raise FormatError(f"{self.name}: malformed config line {line!r}")
            items.append((key, val))
        return items

    def pairs(self) -> np.ndarray:
        (n,) = self.unpack(struct.Struct("<I"))
        return self.floats(n, 2)


def loads(raw: bytes, name: str = "<bytes>"):
    rd = _Reader(raw, name)
    magic, version, d, r, tag = rd.unpack(_HEAD)
    if magic not in (GTH_MAGIC, BASE_MAGIC):
        raise FormatError(f"{name}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{name}: unsupported format version {version}")
    if magic == GTH_MAGIC:
        w_t, w_s = rd.floats(d, r), rd.floats(d, r)
        mean_t, mean_s = rd.floats(d), rd.floats(d)
        cfg = TrainConfig.from_items(rd.kv())
        hist = [IterationRecord(float(a), float(b)) for a, b in rd.pairs()]
        if chr(tag) != cfg.variant or cfg.bits != r:
            raise FormatError(f"{name}: header disagrees with config block")
        model = GthModel(w_t, w_s, mean_t, mean_s, cfg, hist)
    else:
        kinds = {v[0]: k for k, v in _KIND_TAGS.items()}
        if tag not in kinds:
            raise FormatError(f"{name}: unknown baseline tag {tag}")
        w, mean = rd.floats(d, r), rd.floats(d)
        meta = dict(rd.kv())
        trace = [float(v) for _, v in rd.pairs()]
        model = BaselineModel(kinds[tag], w, mean, seed=int(meta.get("seed", 0)),
                              iters=int(meta.get("iters", 0)),
                              normalize=meta.get("normalize") == "true", loss_trace=trace)
    if rd.pos != len(raw):
        raise FormatError(f"{name}: {len(raw) - rd.pos} trailing bytes")
    return model


def save(model, path) -> None:
    Path(path).write_bytes(dumps(model))


def load(path):
    return loads(Path(path).read_bytes(), str(path))
