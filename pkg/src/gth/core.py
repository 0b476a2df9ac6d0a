"""Projection-guided transfer hashing: objective, gradients and the training loop.

Two column-orthonormal projections ``W_t`` (target) and ``W_s`` (source) are
learned jointly. Each is pulled towards the other through an elementwise
weighted squared difference and towards a low quantisation loss on its own
domain. Training alternates ``M -> W_t -> W_s -> B_t -> B_s`` per outer
iteration; each projection update is a short run of Cayley steps with
Barzilai-Borwein step sizes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from . import stiefel
from .errors import ConfigError, DimensionError, InputError
from .weights import VARIANTS, weight_matrix

log = logging.getLogger(__name__)

DOMAINS = ("target", "source")


@dataclass(frozen=True)
class TrainConfig:
    bits: int = 32
    lambda1: float = 0.1
    lambda2: float = 1.0
    variant: str = "h"
    outer_iters: int = 30
    inner_iters: int = 5
    tau0: float = 0.1
    q: float = 0.8
    c: float = 8.0
    stiefel_mode: str = "right_cayley"
    seed: int = 0
    tol_w: float = 1e-5
    normalize: bool = False

    def __post_init__(self):
        problems = []
        if self.bits < 1:
            problems.append("bits must be >= 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            problems.append("lambda1 and lambda2 must be nonnegative")
        if self.variant not in VARIANTS:
            problems.append(f"variant must be one of {VARIANTS}")
        if self.outer_iters < 1 or self.inner_iters < 1:
            problems.append("outer_iters and inner_iters must be >= 1")
        if not self.tau0 > 0:
            problems.append("tau0 must be positive")
        if not 0 < self.q < 1:
            problems.append("q must lie in (0, 1)")
        if not self.c > 0:
            problems.append("c must be positive")
        if self.stiefel_mode not in stiefel.STIEFEL_MODES:
            problems.append(f"stiefel_mode must be one of {stiefel.STIEFEL_MODES}")
        if self.tol_w < 0:
            problems.append("tol_w must be nonnegative")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_items(self) -> list[tuple[str, str]]:
        return [(f.name, _fmt(getattr(self, f.name))) for f in fields(self)]

    @classmethod
    def from_items(cls, items) -> "TrainConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for key, raw in items:
            if key not in kinds:
                raise ConfigError(f"unknown train config key {key!r}")
            values[key] = _parse(kinds[key], raw)
        return cls(**values)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(kind: str, raw: str):
    if kind == "bool":
        low = str(raw).strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"not a boolean: {raw!r}")
        return low in ("true", "1", "yes")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return str(raw)


@dataclass(frozen=True)
class IterationRecord:
    objective: float
    max_dw: float


@dataclass
class GthModel:
    w_t: np.ndarray
    w_s: np.ndarray
    mean_t: np.ndarray
    mean_s: np.ndarray
    config: TrainConfig
    history: list[IterationRecord] = field(default_factory=list)
    # final training codes; kept in memory only
    codes_t: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    codes_s: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def d(self) -> int:
        return self.w_t.shape[0]

    @property
    def r(self) -> int:
        return self.w_t.shape[1]

    @property
    def variant(self) -> str:
        return self.config.variant

    @property
    def normalize(self) -> bool:
        return self.config.normalize

    def projection(self, domain: str = "target") -> np.ndarray:
        return self.w_t if _check_domain(domain) == "target" else self.w_s

    def mean(self, domain: str = "target") -> np.ndarray:
        return self.mean_t if _check_domain(domain) == "target" else self.mean_s


def _check_domain(domain: str) -> str:
    if domain not in DOMAINS:
        raise ValueError(f"domain must be one of {DOMAINS}, got {domain!r}")
    return domain


# -- objective and gradients -------------------------------------------------

def objective(w_t, w_s, b_t, b_s, m, x_t, x_s, lambda1: float, lambda2: float) -> float:
    """Relaxed training loss.

    ``0.5*sum(M*(W_t-W_s)**2) + lambda1/2*||B_t - W_t^T X_t||^2
    + lambda2/2*||B_s - W_s^T X_s||^2``
    """
    if np.any(m < 0):
        raise InputError("weight matrix has negative entries")
    e = w_t - w_s
    align = 0.5 * float(np.sum(m * e * e))
    qt = b_t - w_t.T @ x_t
    qs = b_s - w_s.T @ x_s
    return align + 0.5 * lambda1 * float(np.vdot(qt, qt)) + 0.5 * lambda2 * float(np.vdot(qs, qs))


def _grad(w, w_other, b, m, x, lam):
    if w.shape != w_other.shape or m.shape != w.shape:
        raise DimensionError(f"shape mismatch among {w.shape}, {w_other.shape}, {m.shape}")
    if x.shape[0] != w.shape[0] or b.shape != (w.shape[1], x.shape[1]):
        raise DimensionError(f"data {x.shape} / codes {b.shape} do not match projection {w.shape}")
    return m * (w - w_other) + lam * (x @ (x.T @ w) - x @ b.T)


def grad_wt(w_t, w_s, b_t, m, x_t, lambda1: float) -> np.ndarray:
    """``M*(W_t - W_s) + lambda1*(X_t X_t^T W_t - X_t B_t^T)``"""
    return _grad(w_t, w_s, b_t, m, x_t, lambda1)


def grad_ws(w_s, w_t, b_s, m, x_s, lambda2: float) -> np.ndarray:
    """``M*(W_s - W_t) + lambda2*(X_s X_s^T W_s - X_s B_s^T)``"""
    return _grad(w_s, w_t, b_s, m, x_s, lambda2)


def sign_codes(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``sgn(W^T X)`` with ties at zero mapped to +1."""
    return np.where(w.T @ x >= 0, 1.0, -1.0)


# -- preprocessing shared by every hasher ------------------------------------

def normalize_columns(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=0)
    norms[norms == 0] = 1.0
    return x / norms


def prepare(x: np.ndarray, mean: np.ndarray | None = None, normalize: bool = False):
    """Optionally unit-normalise samples, then center.

    Returns ``(centered, mean)``; when ``mean`` is given it is reused
    instead of being estimated from ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if normalize:
        x = normalize_columns(x)
    if mean is None:
        mean = x.mean(axis=1)
    return x - mean[:, None], mean


def hash_codes(w: np.ndarray, mean: np.ndarray, x: np.ndarray, normalize: bool = False) -> np.ndarray:
    """Encode raw samples with projection ``w`` and stored mean."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != w.shape[0]:
        raise DimensionError(f"data dimension {x.shape[0]} != model dimension {w.shape[0]}")
    xc, _ = prepare(x, mean, normalize)
    return sign_codes(w, xc)


def encode(model: GthModel, x: np.ndarray, domain: str = "target") -> np.ndarray:
    return hash_codes(model.projection(domain), model.mean(domain), x, model.normalize)


# -- training ---------------------------------------------------------------

@dataclass(frozen=True)
class IterationState:
    """Snapshot passed to the training callback after each outer iteration."""

    k: int
    weights: np.ndarray
    w_t: np.ndarray
    w_s: np.ndarray
    b_t: np.ndarray
    b_s: np.ndarray
    record: IterationRecord


def descend(w: np.ndarray, grad_fn: Callable[[np.ndarray], np.ndarray], tau: float,
            steps: int, mode: str = "right_cayley") -> tuple[np.ndarray, float]:
    """Run ``steps`` Cayley updates with BB step sizes, starting at step ``tau``.

    Returns the polished projection and the last BB step, which the caller
    carries into the next outer iteration.
    """
    g = grad_fn(w)
    state = stiefel.StepState(tau, w, g)
    for _ in range(steps):
        w = stiefel.stiefel_step(w, g, state.tau, mode)
        g = grad_fn(w)
        state = stiefel.bb_step(state, w, g)
    return stiefel.polish(w), state.tau


def _validate_inputs(x_t, x_s, r):
    for name, x in (("target", x_t), ("source", x_s)):
        if x.ndim != 2:
            raise DimensionError(f"{name} features must be a d x N matrix")
        if not np.all(np.isfinite(x)):
            raise InputError(f"{name} features contain non-finite values")
    if x_t.shape[0] != x_s.shape[0]:
        raise DimensionError(f"target dimension {x_t.shape[0]} != source dimension {x_s.shape[0]}")
    limit = min(x_t.shape[0], x_t.shape[1], x_s.shape[1])
    if r > limit:
        raise DimensionError(f"bits={r} exceeds min(d, N_t, N_s) = {limit}")


def train(x_t: np.ndarray, x_s: np.ndarray, cfg: TrainConfig = TrainConfig(),
          callback: Callable[[IterationState], None] | None = None) -> GthModel:
    """Learn target and source projections from unlabelled features.

    Parameters
    ----------
    x_t, x_s : ndarray, shape (d, N_t) and (d, N_s)
        Target and source features, one sample per column.
    cfg : TrainConfig
    callback : callable, optional
        Called with an :class:`IterationState` after every outer iteration.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    x_s = np.asarray(x_s, dtype=np.float64)
    r = cfg.bits
    _validate_inputs(x_t, x_s, r)

    xt, mean_t = prepare(x_t, normalize=cfg.normalize)
    xs, mean_s = prepare(x_s, normalize=cfg.normalize)
    w_t = stiefel.pca_init(xt, r)
    w_s = stiefel.pca_init(xs, r)
    rng = np.random.default_rng(cfg.seed)
    b_t = rng.choice([-1.0, 1.0], size=(r, xt.shape[1]))
    b_s = rng.choice([-1.0, 1.0], size=(r, xs.shape[1]))

    history = []
    tau_t = tau_s = cfg.tau0
    for k in range(1, cfg.outer_iters + 1):
        m = weight_matrix(w_t, w_s, cfg.variant, cfg.q, cfg.c)
        new_t, tau_t = descend(w_t, lambda w: grad_wt(w, w_s, b_t, m, xt, cfg.lambda1),
                               tau_t, cfg.inner_iters, cfg.stiefel_mode)
        new_s, tau_s = descend(w_s, lambda w: grad_ws(w, new_t, b_s, m, xs, cfg.lambda2),
                               tau_s, cfg.inner_iters, cfg.stiefel_mode)
        b_t = sign_codes(new_t, xt)
        b_s = sign_codes(new_s, xs)
        dw = max(float(np.max(np.abs(new_t - w_t))), float(np.max(np.abs(new_s - w_s))))
        w_t, w_s = new_t, new_s
        rec = IterationRecord(objective(w_t, w_s, b_t, b_s, m, xt, xs, cfg.lambda1, cfg.lambda2), dw)
        history.append(rec)
        log.debug("iter %d objective=%.6g max|dW|=%.3g", k, rec.objective, dw)
        if callback is not None:
            callback(IterationState(k, m, w_t, w_s, b_t, b_s, rec))
        if dw < cfg.tol_w:
            break

    return GthModel(w_t, w_s, mean_t, mean_s, cfg, history, codes_t=b_t, codes_s=b_s)
