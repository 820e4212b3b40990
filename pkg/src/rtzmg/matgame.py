"""Exact solver for two-player zero-sum matrix games (row player maximizes).

Resolution order for each payoff matrix:

1. pure saddle point (covers 1 x n, n x 1 and constant games),
2. closed-form indifference solution for 2 x 2 games without a saddle,
3. a dense tableau simplex with Bland's rule on the shifted game.

Every path is deterministic, so repeated solves of the same matrix return
bit-identical strategies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_NASH_TOL = 1e-9
_PIVOT_EPS = 1e-12


class MatrixGameError(ValueError):
    pass


class NonFiniteEntry(MatrixGameError):
    pass


class Degenerate(MatrixGameError):
    pass


class SizeMismatch(MatrixGameError):
    pass


class NashToleranceExceeded(MatrixGameError):
    def __init__(self, residual: float, tol: float):
        self.residual = residual
        super().__init__(f"exploitability {residual:.3e} exceeds tolerance {tol:.3e}")


@dataclass(frozen=True, eq=False)
class MatrixNash:
    w: np.ndarray
    z: np.ndarray
    value: float


def _as_matrix(N) -> np.ndarray:
    N = np.asarray(N, dtype=float)
    if N.ndim != 2 or N.shape[0] == 0 or N.shape[1] == 0:
        raise Degenerate(f"payoff must be a nonempty matrix, got shape {N.shape}")
    if not np.isfinite(N).all():
        raise NonFiniteEntry("payoff matrix has non-finite entries")
    return N


def exploitability(N, w, z) -> float:
    """Largest unilateral gain of either player against ``(w, z)``."""
    N = np.asarray(N, dtype=float)
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    if N.ndim != 2 or w.shape != (N.shape[0],) or z.shape != (N.shape[1],):
        raise SizeMismatch(f"strategies {w.shape}, {z.shape} do not fit payoff {N.shape}")
    value = w @ N @ z
    gain = max((N @ z).max() - value, value - (w @ N).min())
    return max(float(gain), 0.0)


def _simplex(N: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mixed equilibrium via ``max 1.y s.t. M y <= 1, y >= 0`` with ``M = N - min N + 1``.

    The column strategy is the normalized primal solution; the row strategy
    is read off the reduced costs of the slack columns.
    """
    m, n = N.shape
    M = N - N.min() + 1.0
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = M
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = 1.0
    T[m, :n] = -1.0
    basis = list(range(n, n + m))

    for _ in range(50 * (m + n) + 100):
        entering = np.flatnonzero(T[m, :-1] < -_PIVOT_EPS)
        if entering.size == 0:
            break
        j = int(entering[0])
        col = T[:m, j]
        rows = np.flatnonzero(col > _PIVOT_EPS)
        if rows.size == 0:
            # cannot happen for a strictly positive M: the feasible set is bounded
            raise MatrixGameError("unbounded tableau")
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + _PIVOT_EPS * max(1.0, abs(best))]
        i = int(min(ties, key=lambda r: basis[r]))
        T[i] /= T[i, j]
        for r in range(m + 1):
            if r != i and T[r, j] != 0.0:
                T[r] -= T[r, j] * T[i]
        basis[i] = j
    else:
        raise MatrixGameError("simplex did not terminate")

    y = np.zeros(n)
    for r, var in enumerate(basis):
        if var < n:
            y[var] = T[r, -1]
    x = T[m, n:n + m].copy()
    y = np.maximum(y, 0.0)
    x = np.maximum(x, 0.0)
    return x / x.sum(), y / y.sum()


def solve_zero_sum_batch(Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Equilibrium strategies for a stack of payoff matrices ``Q`` of shape ``(n, A, B)``.

    Returns ``(W, Z)`` with shapes ``(n, A)`` and ``(n, B)``.
    """
    Q = np.asarray(Q, dtype=float)
    n, A, B = Q.shape
    W = np.zeros((n, A))
    Z = np.zeros((n, B))

    rowmin = Q.min(axis=2)
    colmax = Q.max(axis=1)
    a_star = rowmin.argmax(axis=1)
    b_star = colmax.argmin(axis=1)
    lower = rowmin[np.arange(n), a_star]
    upper = colmax[np.arange(n), b_star]
    saddle = lower >= upper
    idx = np.flatnonzero(saddle)
    W[idx, a_star[idx]] = 1.0
    Z[idx, b_star[idx]] = 1.0

    rest = np.flatnonzero(~saddle)
    if rest.size == 0:
        return W, Z
    if A == 2 and B == 2:
        a = Q[rest, 0, 0]
        b = Q[rest, 0, 1]
        c = Q[rest, 1, 0]
        d = Q[rest, 1, 1]
        den = a - b - c + d
        w0 = np.clip((d - c) / den, 0.0, 1.0)
        z0 = np.clip((d - b) / den, 0.0, 1.0)
        W[rest, 0] = w0
        W[rest, 1] = 1.0 - w0
        Z[rest, 0] = z0
        Z[rest, 1] = 1.0 - z0
        return W, Z
    for k in rest:
        W[k], Z[k] = _simplex(Q[k])
    return W, Z


def solve_zero_sum(N, nash_tol: float = DEFAULT_NASH_TOL) -> MatrixNash:
    """Solve ``max_w min_z w^T N z``; verifies the result is a ``nash_tol``-equilibrium."""
    if not nash_tol > 0:
        raise ValueError("nash_tol must be positive")
    N = _as_matrix(N)
    W, Z = solve_zero_sum_batch(N[None])
    w, z = W[0], Z[0]
    gap = exploitability(N, w, z)
    if gap > nash_tol:
        raise NashToleranceExceeded(gap, nash_tol)
    return MatrixNash(w=w, z=z, value=float(w @ N @ z))
