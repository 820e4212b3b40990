"""Total-variation robust expectations.

The inner ``inf_P P.v`` over the TV ball ``{P : 0.5 * ||P - p0||_1 <= sigma}``
is computed through its scalar dual

    max_{alpha in [min v, max v]}  p0 . [v]_alpha - sigma * (alpha - min_s [v]_alpha(s))

where ``[v]_alpha`` clips ``v`` from above at ``alpha``.  The objective is
concave and piecewise linear in ``alpha`` with breakpoints at the entries of
``v``, so it is enough to evaluate it at the sorted entries.  The batched
functions take a stack of rows ``(..., S)`` sharing one value vector, which is
the shape of every backup in backward induction.
"""

from __future__ import annotations

import numpy as np

from .game import BadSigma


class BadDistribution(ValueError):
    pass


def clip_values(v, alpha: float) -> np.ndarray:
    """Clip ``v`` from above at ``alpha``."""
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    v = np.asarray(v, dtype=float)
    return np.where(v > alpha, alpha, v)


def _check(p0: np.ndarray, v: np.ndarray, sigma: float) -> None:
    if not 0.0 <= sigma <= 1.0:
        raise BadSigma(f"sigma must lie in [0, 1], got {sigma}")
    if p0.shape[-1] != v.shape[-1]:
        raise BadDistribution(f"row length {p0.shape[-1]} does not match value length {v.shape[-1]}")
    if (p0 < 0).any() or (np.abs(p0.sum(axis=-1) - 1.0) > 1e-9).any():
        raise BadDistribution("rows must be probability distributions")
    if not np.isfinite(v).all():
        raise ValueError("value vector must be finite")


def worst_case_rows(P: np.ndarray, v: np.ndarray, sigma: float) -> np.ndarray:
    """``inf`` of ``P_row . v`` over the TV ball of radius ``sigma`` around each row.

    ``P`` has shape ``(..., S)``; the result has shape ``P.shape[:-1]``.
    No input validation; see :func:`worst_case_expectation`.
    """
    if sigma == 0.0:
        return P @ v
    order = np.argsort(v, kind="stable")
    vs = v[order]
    Ps = P[..., order]
    below = np.cumsum(Ps * vs, axis=-1)  # sum_{j<=k} p_j v_j
    # mass strictly above breakpoint k, accumulated from the top to avoid 1 - cumsum drift
    above = np.zeros_like(Ps)
    above[..., :-1] = np.cumsum(Ps[..., :0:-1], axis=-1)[..., ::-1]
    dual = below + vs * above - sigma * (vs - vs[0])
    return dual.max(axis=-1)


def best_case_rows(P: np.ndarray, v: np.ndarray, sigma: float) -> np.ndarray:
    """``sup`` of ``P_row . v`` over the TV ball, by reflecting ``v`` through its range."""
    if sigma == 0.0:
        return P @ v
    c = v.min() + v.max()
    return c - worst_case_rows(P, c - v, sigma)


def variance_rows(P: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``P.(v*v) - (P.v)**2`` per row, clamped at zero."""
    mean = P @ v
    return np.maximum(P @ (v * v) - mean * mean, 0.0)


def worst_case_expectation(p0, v, sigma: float) -> float:
    p0 = np.asarray(p0, dtype=float)
    v = np.asarray(v, dtype=float)
    _check(p0, v, sigma)
    return float(worst_case_rows(p0, v, sigma))


def best_case_expectation(p0, v, sigma: float) -> float:
    p0 = np.asarray(p0, dtype=float)
    v = np.asarray(v, dtype=float)
    _check(p0, v, sigma)
    return float(best_case_rows(p0, v, sigma))


def empirical_variance(p, v) -> float:
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if p.shape != v.shape or (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise BadDistribution("p must be a distribution matching v")
    return float(variance_rows(p, v))


def robust_rows(P: np.ndarray, v: np.ndarray, sigma: float, worst: bool) -> np.ndarray:
    return worst_case_rows(P, v, sigma) if worst else best_case_rows(P, v, sigma)


__all__ = [
    "BadDistribution",
    "best_case_expectation",
    "best_case_rows",
    "clip_values",
    "empirical_variance",
    "robust_rows",
    "variance_rows",
    "worst_case_expectation",
    "worst_case_rows",
]
