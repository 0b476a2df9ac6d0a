"""Dataset containers, feature file formats and the synthetic two-domain generator.

Features are held in memory as ``d x N`` float64 arrays (columns are samples).
On disk they are stored sample-major:

* ``csv``: one sample per row, optionally a trailing integer label column.
* ``fbin``: ``b"GTHF"``, u32 N, u32 d, u8 has_labels, N*d little-endian f32
  (row-major, one row per sample), then N little-endian i32 labels.
"""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, InputError, SeedError

FBIN_MAGIC = b"GTHF"
_FBIN_HEADER = struct.Struct("<4sIIB")


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DimensionError("features must be a d x N matrix")
        if not np.all(np.isfinite(self.features)):
            raise InputError(f"dataset {self.name!r} contains non-finite features")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.n,):
                raise DimensionError(f"{self.labels.size} labels for {self.n} samples")

    @property
    def d(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    def subset(self, idx, name: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.features[:, idx], labels, self.name if name is None else name)


# -- file formats -----------------------------------------------------------

def save_fbin(ds: Dataset, path) -> None:
    has_labels = ds.labels is not None
    rows = np.ascontiguousarray(ds.features.T, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_FBIN_HEADER.pack(FBIN_MAGIC, ds.n, ds.d, int(has_labels)))
        fh.write(rows.tobytes())
        if has_labels:
            fh.write(np.ascontiguousarray(ds.labels, dtype="<i4").tobytes())


def load_fbin(path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _FBIN_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, n, d, has_labels = _FBIN_HEADER.unpack_from(raw, 0)
    if magic != FBIN_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if has_labels not in (0, 1):
        raise FormatError(f"{path}: bad label flag {has_labels}")
    need = _FBIN_HEADER.size + 4 * n * d + (4 * n if has_labels else 0)
    if len(raw) < need:
        raise FormatError(f"{path}: truncated payload ({len(raw)} of {need} bytes)")
    if len(raw) > need:
        raise FormatError(f"{path}: {len(raw) - need} trailing bytes")
    off = _FBIN_HEADER.size
    rows = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    labels = None
    if has_labels:
        labels = np.frombuffer(raw, dtype="<i4", count=n, offset=off + 4 * n * d)
    if not np.all(np.isfinite(rows)):
        raise InputError(f"{path}: non-finite feature values")
    return Dataset(rows.T.astype(np.float64), labels, Path(path).stem)


def load_csv(path, has_labels: bool = False, header: bool = False) -> Dataset:
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if header:
        rows = rows[1:]
    if not rows:
        raise FormatError(f"{path}: no samples")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise FormatError(f"{path}: ragged row {i} ({len(row)} fields, expected {width})")
    try:
        vals = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    labels = None
    if has_labels:
        if width < 2:
            raise FormatError(f"{path}: label column requested but only {width} field(s)")
        lab = vals[:, -1]
        if not np.all(lab == np.round(lab)):
            raise FormatError(f"{path}: label column is not integer valued")
        labels = lab.astype(np.int64)
        vals = vals[:, :-1]
    if not np.all(np.isfinite(vals)):
        raise InputError(f"{path}: non-finite feature values")
    return Dataset(vals.T.copy(), labels, Path(path).stem)


def save_csv(ds: Dataset, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for i in range(ds.n):
        row = [repr(float(v)) for v in ds.features[:, i]]
        if ds.labels is not None:
            row.append(str(int(ds.labels[i])))
        writer.writerow(row)
    Path(path).write_text(buf.getvalue())


def load(path, fmt: str | None = None, has_labels: bool = False, header: bool = False) -> Dataset:
    """Load ``path`` as csv or fbin; the format defaults to the file suffix."""
    fmt = fmt or Path(path).suffix.lstrip(".").lower()
    if fmt == "fbin":
        return load_fbin(path)
    if fmt == "csv":
        return load_csv(path, has_labels=has_labels, header=header)
    raise FormatError(f"unknown feature format {fmt!r}")


# -- preprocessing ----------------------------------------------------------

def center(ds: Dataset) -> tuple[Dataset, np.ndarray]:
    if ds.n < 1:
        raise DimensionError("cannot center an empty dataset")
    mean = ds.features.mean(axis=1)
    return Dataset(ds.features - mean[:, None], ds.labels, ds.name), mean


def split(ds: Dataset, n_query: int, seed: int) -> tuple[Dataset, Dataset]:
    """Draw ``n_query`` samples without replacement as queries; the rest train.

    Both parts keep the original sample order.
    """
    if not 0 <= n_query < ds.n:
        raise DimensionError(f"n_query={n_query} must be in [0, N={ds.n})")
    perm = np.random.default_rng(seed).permutation(ds.n)
    q_idx = np.sort(perm[:n_query])
    t_idx = np.sort(perm[n_query:])
    return ds.subset(t_idx, f"{ds.name}-train"), ds.subset(q_idx, f"{ds.name}-query")


def subsample(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep ``round(fraction * N)`` samples (at least one), chosen by seed."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    k = max(1, int(round(fraction * ds.n)))
    idx = np.sort(np.random.default_rng(seed).permutation(ds.n)[:k])
    return ds.subset(idx)


# -- synthetic domains ------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Two related domains sharing a latent class structure.

    Latent class means are drawn in ``p`` dimensions with scale
    ``mean_scale`` and minimum pairwise distance ``min_sep``; samples add
    isotropic latent noise ``latent_sigma``. The source embeds through a
    random orthonormal ``d x p`` map, the target through the same map
    followed by Givens rotations of ``angle`` radians in ``p`` random
    coordinate planes. ``noise_sigma`` is ambient noise added to both.
    """

    d: int = 128
    p: int = 10
    classes: int = 5
    n_s: int = 2000
    n_t: int = 200
    angle: float = 0.3
    noise_sigma: float = 0.1
    seed: int = 0
    mean_scale: float = 1.0
    min_sep: float = 1.0
    latent_sigma: float = 1.0

    def __post_init__(self):
        if not 1 <= self.p <= self.d:
            raise ValueError(f"need 1 <= p <= d, got p={self.p}, d={self.d}")
        if not 0 <= self.angle <= math.pi / 2:
            raise ValueError(f"angle must lie in [0, pi/2], got {self.angle}")
        if self.noise_sigma < 0 or self.latent_sigma < 0:
            raise ValueError("noise levels must be nonnegative")
        if self.classes < 1 or self.n_s < 1 or self.n_t < 1:
            raise ValueError("classes and sample counts must be positive")
        if 2 * self.p > self.d:
            raise ValueError("need d >= 2p to place p disjoint rotation planes")

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "SynthConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in values.items():
            if k not in kinds:
                raise KeyError(k)
            out[k] = int(v) if kinds[k] == "int" else float(v)
        return cls(**out)


def _class_means(rng, cfg: SynthConfig, max_attempts: int = 1000) -> np.ndarray:
    for _ in range(max_attempts):
        means = rng.normal(scale=cfg.mean_scale, size=(cfg.classes, cfg.p))
        diff = means[:, None, :] - means[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        off = dist[~np.eye(cfg.classes, dtype=bool)]
        if off.size == 0 or off.min() >= cfg.min_sep:
            return means
    raise SeedError(f"seed {cfg.seed}: no class layout with min separation {cfg.min_sep} "
                    f"after {max_attempts} attempts")


def _plane_rotation(rng, d: int, planes: int, angle: float) -> np.ndarray:
    rot = np.eye(d)
    coords = rng.permutation(d)[: 2 * planes].reshape(planes, 2)
    c, s = math.cos(angle), math.sin(angle)
    for i, j in coords:
        rot[[i, i, j, j], [i, j, i, j]] = [c, -s, s, c]
    return rot


def synth(cfg: SynthConfig) -> tuple[Dataset, Dataset]:
    """Generate ``(source, target)`` labelled datasets."""
    rng = np.random.default_rng(cfg.seed)
    means = _class_means(rng, cfg)
    embed, _ = np.linalg.qr(rng.normal(size=(cfg.d, cfg.p)))
    target_embed = _plane_rotation(rng, cfg.d, cfg.p, cfg.angle) @ embed

    def draw(n, amap, name):
        labels = rng.integers(cfg.classes, size=n)
        latent = means[labels].T + cfg.latent_sigma * rng.normal(size=(cfg.p, n))
        x = amap @ latent + cfg.noise_sigma * rng.normal(size=(cfg.d, n))
        return Dataset(x, labels, name)

    source = draw(cfg.n_s, embed, "source")
    target = draw(cfg.n_t, target_embed, "target")
    return source, target
