"""Linear algebra on the Stiefel manifold of column-orthonormal matrices.

Everything here is a pure function of its inputs. Projections are ``d x r``
float64 arrays with ``W.T @ W == I_r`` up to round-off.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, InputError, NumericError

ORTHO_TOL = 1e-6
TAU_MIN = 1e-5
TAU_MAX = 1.0
STIEFEL_MODES = ("right_cayley", "full_cayley")


def orthonormality_error(w: np.ndarray) -> float:
    """Max-norm of ``W^T W - I``."""
    r = w.shape[1]
    return float(np.max(np.abs(w.T @ w - np.eye(r)))) if r else 0.0


def _fix_signs(u: np.ndarray) -> np.ndarray:
    # make the largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def pca_init(x: np.ndarray, r: int) -> np.ndarray:
    """Top-``r`` eigenvectors of ``x @ x.T`` for column-centered ``x`` (d x N).

    Computed from the thin SVD of ``x`` so the d x d scatter matrix is never
    formed. Columns are ordered by decreasing eigenvalue and sign-fixed so
    that each column's largest-magnitude entry is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-D feature matrix, got ndim={x.ndim}")
    d, n = x.shape
    if r < 1 or r > min(d, n):
        raise DimensionError(f"r={r} must lie in [1, min(d, N)] = [1, {min(d, n)}]")
    if not np.all(np.isfinite(x)):
        raise InputError("feature matrix contains non-finite values")
    u, _, _ = np.linalg.svd(x, full_matrices=False)
    return np.ascontiguousarray(_fix_signs(u[:, :r]))


def skew_from_gradient(w: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``W^T G - G^T W``, symmetrised so that ``Q == -Q.T`` holds exactly."""
    if w.shape != g.shape:
        raise DimensionError(f"shape mismatch: w {w.shape} vs g {g.shape}")
    a = w.T @ g
    q = a - a.T
    return 0.5 * (q - q.T)


def cayley_rotation(q: np.ndarray, tau: float) -> np.ndarray:
    """Cayley transform ``(I + tau/2 Q)^{-1} (I - tau/2 Q)`` of a skew matrix.

    The result is orthogonal with determinant +1. ``I + tau/2 Q`` has
    eigenvalues ``1 + i*t`` and is never singular, so a plain LU solve is used.
    """
    q = np.asarray(q, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise InputError("skew matrix contains non-finite values")
    eye = np.eye(q.shape[0])
    h = 0.5 * tau * q
    return np.linalg.solve(eye + h, eye - h)


def stiefel_step(w: np.ndarray, g: np.ndarray, tau: float, mode: str = "right_cayley") -> np.ndarray:
    """One curvilinear descent step from ``w`` along gradient ``g``.

    ``right_cayley`` right-multiplies by the r x r Cayley rotation of
    ``W^T G - G^T W``; the column space of ``w`` is left unchanged.
    ``full_cayley`` applies the d x d transform of ``A = G W^T - W G^T``
    through its rank-2r factorisation, which can leave the column space.
    """
    if mode == "right_cayley":
        return w @ cayley_rotation(skew_from_gradient(w, g), tau)
    if mode == "full_cayley":
        if w.shape != g.shape:
            raise DimensionError(f"shape mismatch: w {w.shape} vs g {g.shape}")
        if not np.all(np.isfinite(g)):
            raise InputError("gradient contains non-finite values")
        r = w.shape[1]
        u = np.hstack([g, w])
        v = np.hstack([w, -g])
        inner = np.eye(2 * r) + 0.5 * tau * (v.T @ u)
        return w - tau * (u @ np.linalg.solve(inner, v.T @ w))
    raise ValueError(f"unknown stiefel mode {mode!r}; expected one of {STIEFEL_MODES}")


@dataclass(frozen=True)
class StepState:
    """Barzilai-Borwein step bookkeeping for one projection."""

    tau: float
    prev_w: np.ndarray
    prev_g: np.ndarray
    tau_min: float = TAU_MIN
    tau_max: float = TAU_MAX

    def __post_init__(self):
        if not 0 < self.tau_min <= self.tau_max:
            raise ValueError("need 0 < tau_min <= tau_max")
        object.__setattr__(self, "tau", float(np.clip(self.tau, self.tau_min, self.tau_max)))


def bb_step(state: StepState, w_new: np.ndarray, g_new: np.ndarray) -> StepState:
    """Long (BB1) step ``|<dW, dW> / <dW, dG>|`` clamped to the state's interval.

    A vanishing denominator or a non-finite ratio keeps the previous step.
    """
    dw = w_new - state.prev_w
    dg = g_new - state.prev_g
    num = float(np.vdot(dw, dw))
    den = float(np.vdot(dw, dg))
    tau = state.tau
    if abs(den) >= 1e-12:
        cand = abs(num / den)
        if np.isfinite(cand):
            tau = cand
    return replace(state, tau=tau, prev_w=w_new, prev_g=g_new)


def polish(w: np.ndarray, tol: float = ORTHO_TOL) -> np.ndarray:
    """Re-orthonormalise ``w`` by thin QR if its drift exceeds ``tol``."""
    err = orthonormality_error(w)
    if not np.isfinite(err):
        raise InputError("projection contains non-finite values")
    if err <= tol:
        return w
    qm, rm = np.linalg.qr(w)
    diag = np.diag(rm)
    if np.min(np.abs(diag)) <= 1e-10 * max(np.max(np.abs(diag)), 1.0):
        raise NumericError("projection is rank deficient; cannot re-orthonormalise")
    return qm * np.sign(diag)
