"""Sigmoid weighting of projection residuals and its associated penalty.

The weight ``omega(x) = sigmoid(mu * (delta - x**2))`` decays from ~1 to 0
as ``|x|`` crosses ``sqrt(delta)``; ``rho`` is the penalty whose derivative
satisfies ``rho'(x) = x * omega(x)`` with ``rho(0) = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputError

VARIANTS = ("g", "h")
GAUSSIAN_WEIGHT = 2.0


@dataclass(frozen=True)
class WeightParams:
    mu: float
    delta: float
    c: float = 8.0
    q: float = 0.8
    degenerate: bool = False

    def __post_init__(self):
        if not self.degenerate and not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if not 0 < self.q < 1:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")


def _sigmoid(a):
    a = np.asarray(a, dtype=np.float64)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def omega(x, p: WeightParams):
    """Weight ``exp(mu*delta - mu*x^2) / (1 + exp(mu*delta - mu*x^2))``.

    Accepts scalars or arrays; returns the same kind.
    """
    a = p.mu * (p.delta - np.square(np.asarray(x, dtype=np.float64)))
    out = _sigmoid(a)
    return float(out) if out.ndim == 0 else out


def rho(x, p: WeightParams):
    """Penalty ``(softplus(mu*delta) - softplus(mu*delta - mu*x^2)) / (2 mu)``.

    The difference of softplus terms is formed as
    ``log1p(sigmoid(a - b) * expm1(b))`` while ``b = mu*x^2`` is moderate,
    which keeps relative accuracy near ``x = 0``.
    """
    x = np.asarray(x, dtype=np.float64)
    a = p.mu * p.delta
    b = p.mu * np.square(x)
    small = b <= 1.0
    out = np.empty_like(b)
    bs = b[small]
    out[small] = np.log1p(_sigmoid(a - bs) * np.expm1(bs))
    bl = b[~small]
    out[~small] = np.logaddexp(0.0, a) - np.logaddexp(0.0, a - bl)
    out /= 2.0 * p.mu
    return float(out) if out.ndim == 0 else out


def rho_ceiling(p: WeightParams) -> float:
    """Limit of ``rho`` as ``|x| -> inf``."""
    return float(np.logaddexp(0.0, p.mu * p.delta)) / (2.0 * p.mu)


def nearest_rank_quantile(values: np.ndarray, q: float) -> float:
    """Smallest value with at least ``ceil(q*n)`` elements at or below it."""
    v = np.sort(np.ravel(values))
    if v.size == 0:
        raise DimensionError("cannot take a quantile of an empty set")
    k = max(1, math.ceil(q * v.size))
    return float(v[k - 1])


def select_params(e: np.ndarray, q: float = 0.8, c: float = 8.0) -> WeightParams:
    """Pick ``delta`` as the q-quantile of squared residuals and ``mu = c/delta``.

    When every residual is essentially zero the returned params carry
    ``degenerate=True`` and ``weight_matrix`` falls back to all-ones.
    """
    e = np.asarray(e, dtype=np.float64)
    if e.size == 0:
        raise DimensionError("error matrix is empty")
    if not np.all(np.isfinite(e)):
        raise InputError("error matrix contains non-finite values")
    delta = nearest_rank_quantile(np.square(e), q)
    if delta < 1e-12:
        return WeightParams(mu=0.0, delta=delta, c=c, q=q, degenerate=True)
    return WeightParams(mu=c / delta, delta=delta, c=c, q=q)


def weight_matrix(w_t: np.ndarray, w_s: np.ndarray, variant: str = "h",
                  q: float = 0.8, c: float = 8.0) -> np.ndarray:
    if w_t.shape != w_s.shape:
        raise DimensionError(f"shape mismatch: {w_t.shape} vs {w_s.shape}")
    if variant == "g":
        return np.full(w_t.shape, GAUSSIAN_WEIGHT)
    if variant != "h":
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    e = w_t - w_s
    params = select_params(e, q, c)
    if params.degenerate:
        return np.ones(w_t.shape)
    # keep weights strictly positive when the sigmoid underflows
    return np.maximum(omega(e, params), np.finfo(np.float64).tiny)
