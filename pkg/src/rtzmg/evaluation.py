"""Exact robust evaluation against the true game.

Value tables here have shape ``(H + 1, S)`` with a zero terminal row, matching
the solver output.  The max-player evaluates against the worst case of its
ball (radius ``sigma_plus``); the min-player against the best case of its own
ball (radius ``sigma_minus``).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .game import BadSigma, MarkovGame, PolicyPair, Sense, ShapeMismatch
from .matgame import DEFAULT_NASH_TOL
from .solver import BadParams, SolveResult, rtz_vi
from .uncertainty import robust_rows


def _backup(game: MarkovGame, h: int, v_next: np.ndarray, sigma: float, worst: bool) -> np.ndarray:
    S, A, B = game.S, game.A, game.B
    rows = game.transitions[h].reshape(-1, S)
    return game.rewards[h] + robust_rows(rows, v_next, sigma, worst).reshape(S, A, B)


def robust_policy_value(game: MarkovGame, policies: PolicyPair, sigma: float, sense=Sense.WORST_CASE) -> np.ndarray:
    """Robust value of a fixed policy pair, shape ``(H + 1, S)``."""
    policies.check_against(game)
    worst = Sense(sense) is Sense.WORST_CASE
    V = np.zeros((game.H + 1, game.S))
    for h in range(game.H - 1, -1, -1):
        Q = _backup(game, h, V[h + 1], sigma, worst)
        V[h] = np.einsum("sa,sab,sb->s", policies.mu[h], Q, policies.nu[h])
    return V


def robust_best_response(game: MarkovGame, fixed, player: str, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Best response to a fixed opponent strategy table.

    ``player="max"`` takes the min-player's ``nu`` of shape ``(H, S, B)`` and
    maximizes worst-case value; ``player="min"`` takes ``mu`` of shape
    ``(H, S, A)`` and minimizes best-case value.  Returns the value table and a
    deterministic policy (ties go to the lowest action index).
    """
    fixed = np.asarray(fixed, dtype=float)
    H, S = game.H, game.S
    if player == "max":
        if fixed.shape != (H, S, game.B):
            raise ShapeMismatch(f"opponent policy shape {fixed.shape} does not fit game")
        n_act = game.A
    elif player == "min":
        if fixed.shape != (H, S, game.A):
            raise ShapeMismatch(f"opponent policy shape {fixed.shape} does not fit game")
        n_act = game.B
    else:
        raise ValueError(f"player must be 'max' or 'min', got {player!r}")
    V = np.zeros((H + 1, S))
    policy = np.zeros((H, S, n_act))
    for h in range(H - 1, -1, -1):
        if player == "max":
            q = np.einsum("sab,sb->sa", _backup(game, h, V[h + 1], sigma, True), fixed[h])
            best = q.argmax(axis=1)
        else:
            q = np.einsum("sa,sab->sb", fixed[h], _backup(game, h, V[h + 1], sigma, False))
            best = q.argmin(axis=1)
        V[h] = q[np.arange(S), best]
        policy[h, np.arange(S), best] = 1.0
    return V, policy


@dataclass(frozen=True)
class GapReport:
    gap: float
    raw_gap: float
    term_max_player: float
    term_min_player: float
    nash_values: tuple[float, float]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nash_values"] = list(self.nash_values)
        return d


def nash_gap(
    game: MarkovGame,
    mu_hat,
    nu_hat,
    rho=None,
    nash_tol: float = DEFAULT_NASH_TOL,
    exact: SolveResult | None = None,
) -> GapReport:
    """Largest unilateral robust improvement available to either player.

    ``rho`` defaults to the game's initial distribution.  ``exact`` may carry
    a precomputed :func:`rtz_vi` solve of ``game`` to avoid recomputation.
    """
    rho = game.initial_dist if rho is None else np.asarray(rho, dtype=float)
    if rho.shape != (game.S,):
        raise ShapeMismatch(f"rho has shape {rho.shape}, expected ({game.S},)")
    if exact is None:
        exact = rtz_vi(game, nash_tol=nash_tol)
    v_star_plus = float(rho @ exact.v_plus[0])
    v_star_minus = float(rho @ exact.v_minus[0])
    br_max, _ = robust_best_response(game, nu_hat, "max", game.sigma_plus)
    br_min, _ = robust_best_response(game, mu_hat, "min", game.sigma_minus)
    term_max = float(rho @ br_max[0]) - v_star_plus
    term_min = v_star_minus - float(rho @ br_min[0])
    raw = max(term_max, term_min)
    return GapReport(
        gap=max(raw, 0.0),
        raw_gap=raw,
        term_max_player=term_max,
        term_min_player=term_min,
        nash_values=(v_star_plus, v_star_minus),
    )


def _sigma_term(sigma: float, H: int) -> float:
    """``(H sigma - 1 + (1 - sigma)^H) / sigma^2``.

    For small ``H sigma`` the numerator cancels catastrophically, so the
    binomial expansion ``sum_{k>=2} C(H, k) (-sigma)^(k-2)`` is summed instead.
    """
    if not 0.0 < sigma <= 1.0:
        raise BadSigma(f"sigma must lie in (0, 1], got {sigma}")
    if H * sigma >= 0.1:
        return (H * sigma - 1.0 + (1.0 - sigma) ** H) / sigma**2
    coef = H * (H - 1) / 2.0
    total = coef
    for k in range(3, H + 1):
        coef *= -sigma * (H - k + 1) / k
        total += coef
        if abs(coef) < 1e-17 * abs(total):
            break
    return total


def horizon_factor(sigma_plus: float, sigma_minus: float, H: int) -> float:
    """``min`` of the two per-player horizon terms and ``H``."""
    if H < 1:
        raise BadParams("H must be positive")
    return min(_sigma_term(sigma_plus, H), _sigma_term(sigma_minus, H), float(H))


def theory_bound(c1, c_r_star, H, S, A, B, K, delta, sigma_plus, sigma_minus) -> float:
    """``c1 * sqrt(C_r H^3 S (A+B) log(KH/delta) / K * f)`` with ``f`` from :func:`horizon_factor`.

    ``c_r_star`` is supplied by the caller; ``min(A, B)`` is a sufficient
    choice under a uniformly covering data distribution.
    """
    if min(c1, c_r_star, H, S, A, B, K) <= 0:
        raise BadParams("all constants and sizes must be positive")
    if not 0.0 < delta < 1.0:
        raise BadParams(f"delta must lie in (0, 1), got {delta}")
    f = horizon_factor(sigma_plus, sigma_minus, H)
    return c1 * math.sqrt(c_r_star * H**3 * S * (A + B) * math.log(K * H / delta) / K * f)
