"""Reference hashers: random projections (LSH), PCA + sign, and ITQ.

All of them are encoded through :func:`gth.core.hash_codes`, the same path
used by the transfer model, so comparisons differ only in ``w`` and ``mean``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import hash_codes, prepare, sign_codes
from .errors import DimensionError
from .stiefel import pca_init

KINDS = ("lsh", "pca", "itq")


@dataclass
class BaselineModel:
    kind: str
    w: np.ndarray
    mean: np.ndarray
    seed: int = 0
    iters: int = 0
    normalize: bool = False
    # per-iteration quantisation loss (ITQ only)
    loss_trace: list[float] = field(default_factory=list, compare=False)

    @property
    def d(self) -> int:
        return self.w.shape[0]

    @property
    def r(self) -> int:
        return self.w.shape[1]

    def projection(self, domain: str = "target") -> np.ndarray:
        return self.w

    def encode(self, x: np.ndarray) -> np.ndarray:
        return hash_codes(self.w, self.mean, x, self.normalize)


def lsh_train(d: int, r: int, seed: int = 0) -> BaselineModel:
    """Gaussian random projections; the mean is zero (data-independent)."""
    if d < 1 or r < 1:
        raise DimensionError(f"d and r must be positive, got d={d}, r={r}")
    w = np.random.default_rng(seed).standard_normal((d, r))
    return BaselineModel("lsh", w, np.zeros(d), seed=seed)


def pca_hash_train(x: np.ndarray, r: int, normalize: bool = False) -> BaselineModel:
    xc, mean = prepare(x, normalize=normalize)
    return BaselineModel("pca", pca_init(xc, r), mean, normalize=normalize)


def _random_rotation(rng, r: int) -> np.ndarray:
    qm, rm = np.linalg.qr(rng.standard_normal((r, r)))
    return qm * np.sign(np.diag(rm))


def itq_rotation(v: np.ndarray, iters: int = 50, r0: np.ndarray | None = None):
    """Alternate ``B = sgn(R^T V)`` and the orthogonal Procrustes update of R.

    Returns ``(R, losses)`` where ``losses[i]`` is ``||B - R^T V||^2`` after
    the i-th code update and before the following rotation update.
    """
    r = v.shape[0]
    rot = np.eye(r) if r0 is None else r0
    losses = []
    for _ in range(iters):
        b = sign_codes(rot, v)
        resid = b - rot.T @ v
        losses.append(float(np.vdot(resid, resid)))
        # maximise tr(R^T V B^T): svd(B V^T) = P S Q^T  ->  R = Q P^T
        p, _, qt = np.linalg.svd(b @ v.T)
        rot = qt.T @ p.T
    return rot, losses


def itq_train(x: np.ndarray, r: int, iters: int = 50, seed: int = 0,
              init: str = "random", normalize: bool = False) -> BaselineModel:
    """Iterative quantisation on top of the PCA projection.

    ``init="random"`` starts from a seeded random rotation, ``"identity"``
    from the PCA axes themselves.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    xc, mean = prepare(x, normalize=normalize)
    w0 = pca_init(xc, r)
    v = w0.T @ xc
    if init == "random":
        r0 = _random_rotation(np.random.default_rng(seed), r)
    elif init == "identity":
        r0 = np.eye(r)
    else:
        raise ValueError(f"unknown ITQ init {init!r}")
    rot, losses = itq_rotation(v, iters, r0)
    return BaselineModel("itq", w0 @ rot, mean, seed=seed, iters=iters,
                         normalize=normalize, loss_trace=losses)


def noda_train(x_target: np.ndarray, r: int, method: str = "itq", iters: int = 50,
               seed: int = 0, normalize: bool = False) -> BaselineModel:
    """Target-only control: train a single-domain hasher on target data alone."""
    if method == "itq":
        return itq_train(x_target, r, iters=iters, seed=seed, normalize=normalize)
    if method == "pca":
        return pca_hash_train(x_target, r, normalize=normalize)
    raise ValueError(f"NoDA method must be 'itq' or 'pca', got {method!r}")
