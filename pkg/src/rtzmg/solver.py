"""Robust zero-sum value iteration: the pessimistic/optimistic LCB variant and the plain one.

Both solvers run the same backward induction over ``h = H-1 .. 0`` with a
zero terminal value.  At each step the max-player's table ``Q+`` backs up
against the worst case of its TV ball and the min-player's table ``Q-``
against the best case of its ball; each table is then solved state by state
as a zero-sum matrix game.  The returned policy pairs the max-player strategy
from ``Q-`` with the min-player strategy from ``Q+``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import EmpiricalModel
from .game import BadSigma, MarkovGame, PolicyPair
from .matgame import DEFAULT_NASH_TOL, NashToleranceExceeded, solve_zero_sum_batch
from .uncertainty import best_case_rows, variance_rows, worst_case_rows


class BadParams(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyParams:
    """Constants of the Bernstein penalty.

    ``c_n = 0`` is accepted as a diagnostic mode that switches the penalty
    off on visited cells.  ``k`` is the episode count in ``log(k H / delta)``.
    """

    c_n: float = 1.0
    delta: float = 0.05
    k: int = 1

    def __post_init__(self):
        if not (self.c_n >= 0 and math.isfinite(self.c_n)):
            raise BadParams(f"c_n must be a finite nonnegative number, got {self.c_n}")
        if not 0.0 < self.delta < 1.0:
            raise BadParams(f"delta must lie in (0, 1), got {self.delta}")
        if int(self.k) != self.k or self.k < 1:
            raise BadParams(f"k must be a positive integer, got {self.k}")

    def log_term(self, H: int) -> float:
        return math.log(self.k * H / self.delta)


def penalty_array(n, var_hat, params: PenaltyParams, H: int) -> np.ndarray:
    """Vectorized penalty; ``H`` on unvisited cells."""
    n = np.asarray(n, dtype=float)
    var_hat = np.asarray(var_hat, dtype=float)
    L = params.log_term(H)
    safe_n = np.maximum(n, 1.0)
    beta = np.maximum(np.sqrt(params.c_n * L * var_hat / safe_n), 2.0 * params.c_n * H * L / safe_n)
    return np.where(n > 0, np.minimum(beta, float(H)), float(H))


def penalty(n: int, var_hat: float, params: PenaltyParams, H: int) -> float:
    """Bernstein penalty for one cell."""
    if n < 0 or var_hat < 0:
        raise BadParams("count and variance must be nonnegative")
    return float(penalty_array(n, var_hat, params, H))


@dataclass(frozen=True, eq=False)
class SolveResult:
    v_plus: np.ndarray  # (H+1, S)
    v_minus: np.ndarray  # (H+1, S)
    q_plus: np.ndarray  # (H, S, A, B)
    q_minus: np.ndarray  # (H, S, A, B)
    policy: PolicyPair
    diagnostics: dict = field(default_factory=dict)
    # equilibrium strategies of each table separately: (mu+, nu+) solve Q+,
    # (mu-, nu-) solve Q-; ``policy`` is (mu-, nu+)
    policy_plus: PolicyPair | None = None
    policy_minus: PolicyPair | None = None

    @property
    def H(self) -> int:
        return self.q_plus.shape[0]

    def to_dict(self) -> dict:
        return {
            "v_plus": self.v_plus.tolist(),
            "v_minus": self.v_minus.tolist(),
            "q_plus": self.q_plus.tolist(),
            "q_minus": self.q_minus.tolist(),
            "policy": self.policy.to_dict(),
            "policy_plus": self.policy_plus.to_dict() if self.policy_plus else None,
            "policy_minus": self.policy_minus.to_dict() if self.policy_minus else None,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SolveResult":
        return cls(
            v_plus=np.asarray(data["v_plus"], dtype=float),
            v_minus=np.asarray(data["v_minus"], dtype=float),
            q_plus=np.asarray(data["q_plus"], dtype=float),
            q_minus=np.asarray(data["q_minus"], dtype=float),
            policy=PolicyPair.from_dict(data["policy"]),
            diagnostics=dict(data.get("diagnostics", {})),
            policy_plus=PolicyPair.from_dict(data["policy_plus"]) if data.get("policy_plus") else None,
            policy_minus=PolicyPair.from_dict(data["policy_minus"]) if data.get("policy_minus") else None,
        )


def save_result(result: SolveResult, path) -> None:
    Path(path).write_text(json.dumps(result.to_dict()))


def load_result(path) -> SolveResult:
    return SolveResult.from_dict(json.loads(Path(path).read_text()))


# Callables invoked as observer(result, sigma_plus, kind) after every solve,
# with kind "lcb" or "vi"; the test suite uses this to audit invariants
# across all solves it performs.
_observers: list[Callable[[SolveResult, float, str], None]] = []


def add_solve_observer(fn: Callable[[SolveResult, float, str], None]) -> None:
    _observers.append(fn)


def remove_solve_observer(fn) -> None:
    if fn in _observers:
        _observers.remove(fn)


def _check_sigma(name: str, sigma: float) -> float:
    sigma = float(sigma)
    if not 0.0 < sigma <= 1.0:
        raise BadSigma(f"{name} must lie in (0, 1], got {sigma}")
    return sigma


def _batch_exploitability(Q: np.ndarray, W: np.ndarray, Z: np.ndarray) -> np.ndarray:
    Qz = np.einsum("sab,sb->sa", Q, Z)
    wQ = np.einsum("sa,sab->sb", W, Q)
    value = np.einsum("sa,sa->s", W, Qz)
    return np.maximum(Qz.max(axis=1) - value, value - wQ.min(axis=1))


def _nash_step(Q: np.ndarray, nash_tol: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    W, Z = solve_zero_sum_batch(Q)
    worst = float(_batch_exploitability(Q, W, Z).max())
    if worst > nash_tol:
        raise NashToleranceExceeded(worst, nash_tol)
    V = np.einsum("sa,sab,sb->s", W, Q, Z)
    return V, W, Z, worst


def _backward(P, r, sigma_plus, sigma_minus, nash_tol, penalty_fn=None) -> SolveResult:
    H, S, A, B, _ = P.shape
    v_plus = np.zeros((H + 1, S))
    v_minus = np.zeros((H + 1, S))
    q_plus = np.empty((H, S, A, B))
    q_minus = np.empty((H, S, A, B))
    mu_p, mu_m = np.empty((H, S, A)), np.empty((H, S, A))
    nu_p, nu_m = np.empty((H, S, B)), np.empty((H, S, B))
    max_beta_plus = [0.0] * H
    max_beta_minus = [0.0] * H
    worst_residual = 0.0
    for h in range(H - 1, -1, -1):
        rows = P[h].reshape(-1, S)
        Qp = r[h] + worst_case_rows(rows, v_plus[h + 1], sigma_plus).reshape(S, A, B)
        Qm = r[h] + best_case_rows(rows, v_minus[h + 1], sigma_minus).reshape(S, A, B)
        if penalty_fn is not None:
            beta_p = penalty_fn(h, variance_rows(rows, v_plus[h + 1]).reshape(S, A, B))
            beta_m = penalty_fn(h, variance_rows(rows, v_minus[h + 1]).reshape(S, A, B))
            Qp = np.minimum(Qp + beta_p, float(H))
            Qm = np.maximum(Qm - beta_m, 0.0)
            max_beta_plus[h] = float(beta_p.max())
            max_beta_minus[h] = float(beta_m.max())
        q_plus[h] = Qp
        q_minus[h] = Qm
        v_plus[h], mu_p[h], nu_p[h], res_p = _nash_step(Qp, nash_tol)
        v_minus[h], mu_m[h], nu_m[h], res_m = _nash_step(Qm, nash_tol)
        worst_residual = max(worst_residual, res_p, res_m)
    diagnostics = {
        "nash_tol": nash_tol,
        "max_nash_residual": worst_residual,
        "max_penalty_plus": max_beta_plus,
        "max_penalty_minus": max_beta_minus,
    }
    result = SolveResult(
        v_plus, v_minus, q_plus, q_minus, PolicyPair(mu_m, nu_p), diagnostics,
        policy_plus=PolicyPair(mu_p, nu_p), policy_minus=PolicyPair(mu_m, nu_m),
    )
    for fn in _observers:
        fn(result, sigma_plus, "vi" if penalty_fn is None else "lcb")
    return result


def rtz_vi_lcb(
    model: EmpiricalModel,
    sigma_plus: float,
    sigma_minus: float,
    params: PenaltyParams,
    nash_tol: float = DEFAULT_NASH_TOL,
) -> SolveResult:
    """Robust value iteration with Bernstein confidence penalties on an empirical model.

    The penalty at each cell is recomputed for each player from the variance
    of that player's next-step value under the empirical kernel.
    """
    sigma_plus = _check_sigma("sigma_plus", sigma_plus)
    sigma_minus = _check_sigma("sigma_minus", sigma_minus)
    H = model.H
    n = model.counts.n

    def penalty_fn(h, var):
        return penalty_array(n[h], var, params, H)

    return _backward(model.p_hat, model.r_hat, sigma_plus, sigma_minus, nash_tol, penalty_fn)


def rtz_vi(model, sigma_plus=None, sigma_minus=None, nash_tol: float = DEFAULT_NASH_TOL) -> SolveResult:
    """Plain robust value iteration (no penalty).

    ``model`` is a :class:`MarkovGame` (radii default to the game's own) or an
    :class:`EmpiricalModel`.  On the true game this yields the exact robust
    Nash values for both players.
    """
    if isinstance(model, MarkovGame):
        P, r = model.transitions, model.rewards
        sigma_plus = model.sigma_plus if sigma_plus is None else sigma_plus
        sigma_minus = model.sigma_minus if sigma_minus is None else sigma_minus
    else:
        P, r = model.p_hat, model.r_hat
        if sigma_plus is None or sigma_minus is None:
            raise BadSigma("radii are required for an empirical model")
    sigma_plus = _check_sigma("sigma_plus", sigma_plus)
    sigma_minus = _check_sigma("sigma_minus", sigma_minus)
    return _backward(P, r, sigma_plus, sigma_minus, nash_tol)


def range_bound(h: int, H: int, sigma: float, offset: int = 0) -> float:
    """Span bound ``min((H+1)(1 - (1-sigma)^(H-h+offset))/sigma, H)`` for 1-based step ``h``.

    ``offset=0`` is the bound as commonly stated; ``offset=1`` is what the
    backward recursion over ``H - h + 1`` remaining steps actually supports.
    """
    return min((H + 1) * (1.0 - (1.0 - sigma) ** (H - h + offset)) / sigma, float(H))


def range_violations(result: SolveResult, sigma_plus: float, offset: int = 0, tol: float = 0.0) -> list:
    """Steps ``h`` (1-based) where the span of ``v_plus[h]`` exceeds :func:`range_bound`."""
    H = result.H
    bad = []
    for h in range(1, H + 1):
        span = float(np.ptp(result.v_plus[h - 1]))
        bound = range_bound(h, H, sigma_plus, offset)
        if span > bound + tol:
            bad.append((h, span, bound))
    return bad
