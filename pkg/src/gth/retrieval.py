"""Bit-packed binary codes, Hamming ranking and retrieval metrics.

Code matrices are ``r x N`` arrays over {-1, +1}. Packed codes are
``N x ceil(r/64)`` uint64 words; bit ``j`` of item ``i`` lives in word
``j // 64`` at bit position ``j % 64`` and is set iff the code entry is +1.
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, InputError


@dataclass(frozen=True)
class PackedCodes:
    words: np.ndarray
    r: int

    @property
    def n(self) -> int:
        return self.words.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.words[i]


def pack(b: np.ndarray) -> PackedCodes:
    b = np.asarray(b)
    if b.ndim == 1:
        b = b[:, None]
    if not np.all((b == 1) | (b == -1)):
        raise InputError("code matrix entries must be exactly -1 or +1")
    r, n = b.shape
    nw = max(1, -(-r // 64))
    bits = np.zeros((n, nw * 64), dtype=np.uint64)
    bits[:, :r] = (b.T > 0)
    shifts = np.arange(64, dtype=np.uint64)
    words = (bits.reshape(n, nw, 64) << shifts).sum(axis=2, dtype=np.uint64)
    return PackedCodes(words, r)


def unpack(pc: PackedCodes) -> np.ndarray:
    shifts = np.arange(64, dtype=np.uint64)
    bits = (pc.words[:, :, None] >> shifts) & np.uint64(1)
    bits = bits.reshape(pc.n, pc.words.shape[1] * 64)[:, : pc.r]
    return np.where(bits.T == 1, 1.0, -1.0)


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Hamming distance between two packed items (1-D word arrays)."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if a.shape != b.shape:
        raise DimensionError(f"packed lengths differ: {a.shape} vs {b.shape}")
    return int(np.bitwise_count(a ^ b).sum())


def hamming_to_all(query: np.ndarray, db: PackedCodes) -> np.ndarray:
    query = np.asarray(query, dtype=np.uint64)
    if query.shape != db.words.shape[1:]:
        raise DimensionError(f"query has {query.shape} words, db has {db.words.shape[1:]}")
    return np.bitwise_count(db.words ^ query).sum(axis=1, dtype=np.int64)


def rank(query: np.ndarray, db: PackedCodes) -> np.ndarray:
    """Database indices by ascending distance; ties keep ascending index."""
    if db.n == 0:
        raise DimensionError("cannot rank against an empty database")
    return np.argsort(hamming_to_all(query, db), kind="stable")


def _fmean(values) -> float:
    # correctly rounded sum, so averages do not depend on summation order
    values = [float(v) for v in values]
    return math.fsum(values) / len(values)


def average_precision(ranking, rel) -> float:
    """AP of a ranking: mean over relevant positions of precision at that rank.

    ``rel[i]`` marks relevance of database item ``i``; ``ranking`` lists
    database indices in retrieval order.
    """
    hits = np.asarray(rel, dtype=bool)[np.asarray(ranking)]
    total = int(hits.sum())
    if total == 0:
        raise ValueError("average precision is undefined without relevant items")
    pos = np.flatnonzero(hits) + 1
    return _fmean(np.arange(1, total + 1) / pos)


@dataclass
class RetrievalReport:
    map: float
    precision_at_k: list = field(default_factory=list)
    recall_at_k: list = field(default_factory=list)
    # (radius, recall, precision); precision is None when nothing is retrieved
    pr_points: list = field(default_factory=list)
    per_query_ap: list = field(default_factory=list)
    n_queries: int = 0
    n_excluded: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, extra: dict | None = None) -> str:
        doc = {"report": self.to_dict()}
        if extra:
            doc.update(extra)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def pr_csv(self) -> str:
        rows = [(rad, "" if p is None else repr(p), repr(rec)) for rad, rec, p in self.pr_points]
        return _csv_table(rows)

    def at_k_csv(self) -> str:
        rec = dict(self.recall_at_k)
        rows = [(k, repr(p), repr(rec[k])) for k, p in self.precision_at_k]
        return _csv_table(rows)


def _csv_table(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["radius_or_k", "precision", "recall"])
    w.writerows(rows)
    return buf.getvalue()


def evaluate(queries: PackedCodes, q_labels, db: PackedCodes, db_labels,
             ks=(10, 50, 100)) -> RetrievalReport:
    """Hamming-ranking evaluation with class-label relevance.

    Queries without any relevant database item are excluded from every
    metric and counted in ``n_excluded``. ``k`` larger than the database is
    clipped to its size. Radius precision/recall are micro-averaged.
    """
    q_labels = np.asarray(q_labels)
    db_labels = np.asarray(db_labels)
    if queries.r != db.r:
        raise DimensionError(f"query bits {queries.r} != database bits {db.r}")
    if q_labels.shape != (queries.n,) or db_labels.shape != (db.n,):
        raise DimensionError("label vectors must match code counts")
    if db.n == 0:
        raise DimensionError("empty database")
    r = db.r
    ks = [int(k) for k in ks]
    if any(k < 1 for k in ks):
        raise ValueError("k values must be positive")

    aps = []
    prec_k = [[] for _ in ks]
    rec_k = [[] for _ in ks]
    retrieved = np.zeros(r + 1, dtype=np.int64)
    rel_retrieved = np.zeros(r + 1, dtype=np.int64)
    rel_total = 0
    excluded = 0
    for i in range(queries.n):
        rel = db_labels == q_labels[i]
        n_rel = int(rel.sum())
        if n_rel == 0:
            excluded += 1
            continue
        dist = hamming_to_all(queries[i], db)
        order = np.argsort(dist, kind="stable")
        hits = rel[order]
        cum = np.cumsum(hits)
        pos = np.flatnonzero(hits) + 1
        aps.append(_fmean(np.arange(1, n_rel + 1) / pos))
        for j, k in enumerate(ks):
            kk = min(k, db.n)
            prec_k[j].append(cum[kk - 1] / kk)
            rec_k[j].append(cum[kk - 1] / n_rel)
        retrieved += np.cumsum(np.bincount(dist, minlength=r + 1))
        rel_retrieved += np.cumsum(np.bincount(dist[rel], minlength=r + 1))
        rel_total += n_rel

    nq = len(aps)
    if nq == 0:
        raise ValueError("no query has a relevant database item")
    pr = []
    for rad in range(r + 1):
        p = float(rel_retrieved[rad] / retrieved[rad]) if retrieved[rad] else None
        pr.append((rad, float(rel_retrieved[rad] / rel_total), p))
    return RetrievalReport(
        map=_fmean(aps),
        precision_at_k=[(k, _fmean(v)) for k, v in zip(ks, prec_k)],
        recall_at_k=[(k, _fmean(v)) for k, v in zip(ks, rec_k)],
        pr_points=pr,
        per_query_ap=aps,
        n_queries=nq,
        n_excluded=excluded,
    )


# -- packed code files --------------------------------------------------------

CODE_MAGIC = b"GTHC"
_CODE_HEADER = struct.Struct("<4sIII")


def save_codes(pc: PackedCodes, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_CODE_HEADER.pack(CODE_MAGIC, pc.n, pc.r, pc.words.shape[1]))
        fh.write(np.ascontiguousarray(pc.words, dtype="<u8").tobytes())


def load_codes(path) -> PackedCodes:
    raw = Path(path).read_bytes()
    if len(raw) < _CODE_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, n, r, nw = _CODE_HEADER.unpack_from(raw, 0)
    if magic != CODE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if len(raw) != _CODE_HEADER.size + 8 * n * nw:
        raise FormatError(f"{path}: payload size does not match header")
    words = np.frombuffer(raw, dtype="<u8", offset=_CODE_HEADER.size).reshape(n, nw)
    return PackedCodes(words.astype(np.uint64), r)
