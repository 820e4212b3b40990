"""m-player robust general-sum games and the multi-player LCB value iteration.

Joint actions are flattened row-major in player order, so for two players
joint index ``a * B + b`` matches the ``(A, B)`` layout of the two-player
code.  The stage equilibrium solver is pluggable: any callable taking a
payoff array of shape ``(m, A_1, ..., A_m)`` and returning
``(strategies, residual)`` can be used.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import EmpiricalModel
from .game import BadSigma, MarkovGame, ShapeMismatch, _first_bad_row, NonStochasticRow, RewardOutOfRange
from .matgame import DEFAULT_NASH_TOL, exploitability, solve_zero_sum
from .solver import PenaltyParams, penalty_array
from .uncertainty import variance_rows, worst_case_rows


class StageSolverFailure(RuntimeError):
    def __init__(self, residual: float, where=None):
        self.residual = residual
        self.where = where
        super().__init__(f"stage equilibrium residual {residual:.3e} at {where}")


@dataclass(frozen=True, eq=False)
class MultiGame:
    """Robust m-player game; ``transitions`` is ``(H, S, J, S)``, ``rewards`` is ``(m, H, S, J)``."""

    transitions: np.ndarray
    rewards: np.ndarray
    sigmas: tuple
    action_sizes: tuple
    initial_dist: np.ndarray

    def __post_init__(self):
        P = np.ascontiguousarray(self.transitions, dtype=float)
        r = np.ascontiguousarray(self.rewards, dtype=float)
        sizes = tuple(int(a) for a in self.action_sizes)
        sigmas = tuple(float(s) for s in self.sigmas)
        J = int(np.prod(sizes))
        if P.ndim != 4 or P.shape[2] != J or P.shape[3] != P.shape[1]:
            raise ShapeMismatch(f"transitions shape {P.shape} does not fit joint size {J}")
        if r.shape != (len(sizes),) + P.shape[:3]:
            raise ShapeMismatch(f"rewards shape {r.shape} does not fit {len(sizes)} players")
        if len(sigmas) != len(sizes):
            raise ShapeMismatch("one radius per player is required")
        bad = _first_bad_row(P, 1e-9)
        if bad is not None:
            raise NonStochasticRow(*bad)
        out = ~((r >= 0) & (r <= 1))
        if out.any():
            idx = tuple(int(i) for i in np.argwhere(out)[0])
            raise RewardOutOfRange(idx, float(r[idx]))
        if any(not 0.0 < s <= 1.0 for s in sigmas):
            raise BadSigma(f"radii must lie in (0, 1], got {sigmas}")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "action_sizes", sizes)
        object.__setattr__(self, "initial_dist", np.asarray(self.initial_dist, dtype=float))

    @property
    def m(self) -> int:
        return len(self.action_sizes)

    @classmethod
    def from_two_player(cls, game: MarkovGame) -> "MultiGame":
        """Zero-sum embedding: player 2 receives ``1 - r``; both radii kept."""
        H, S, A, B = game.shape
        r = game.rewards.reshape(H, S, A * B)
        return cls(
            transitions=game.transitions.reshape(H, S, A * B, S),
            rewards=np.stack([r, 1.0 - r]),
            sigmas=(game.sigma_plus, game.sigma_minus),
            action_sizes=(A, B),
            initial_dist=game.initial_dist,
        )

    def to_dict(self) -> dict:
        return {
            "H": int(self.transitions.shape[0]),
            "S": int(self.transitions.shape[1]),
            "action_sizes": list(self.action_sizes),
            "sigmas": list(self.sigmas),
            "initial_dist": self.initial_dist.tolist(),
            "rewards": self.rewards.tolist(),
            "transitions": self.transitions.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MultiGame":
        return cls(
            np.asarray(data["transitions"]),
            np.asarray(data["rewards"]),
            tuple(data["sigmas"]),
            tuple(data["action_sizes"]),
            np.asarray(data["initial_dist"]),
        )


def save_multi_game(game: MultiGame, path) -> None:
    Path(path).write_text(json.dumps(game.to_dict()))


def load_multi_game(path) -> MultiGame:
    return MultiGame.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class MultiEmpiricalModel:
    p_hat: np.ndarray  # (H, S, J, S)
    r_hat: np.ndarray  # (m, H, S, J)
    n: np.ndarray  # (H, S, J)
    sigmas: tuple
    action_sizes: tuple
    delta: float
    K: int


def estimate_multi_model(n_next, true_rewards, sigmas, action_sizes, delta: float, K: int) -> MultiEmpiricalModel:
    """Empirical joint-action model from next-state counts ``(H, S, J, S)``."""
    n_next = np.asarray(n_next)
    r = np.asarray(true_rewards, dtype=float)
    S = n_next.shape[-1]
    n = n_next.sum(axis=-1)
    if r.shape[1:] != n.shape:
        raise ShapeMismatch(f"rewards shape {r.shape} does not fit counts {n.shape}")
    p_hat = np.where(n[..., None] > 0, n_next / np.maximum(n, 1)[..., None], 1.0 / S)
    r_hat = np.where(n[None] > 0, r, 0.0)
    return MultiEmpiricalModel(p_hat, r_hat, n, tuple(sigmas), tuple(action_sizes), float(delta), int(K))


def embed_two_player(model: EmpiricalModel, sigma_plus: float, sigma_minus: float) -> MultiEmpiricalModel:
    """Two-player empirical model as a two-player general-sum model with rewards ``(r, 1 - r)``.

    Unvisited cells keep reward 0 for both players, as they would after
    estimating from the same counts.
    """
    H, S, A, B = model.H, model.S, model.A, model.B
    n = model.counts.n.reshape(H, S, A * B)
    r1 = model.r_hat.reshape(H, S, A * B)
    r2 = np.where(n > 0, 1.0 - r1, 0.0)
    return MultiEmpiricalModel(
        p_hat=model.p_hat.reshape(H, S, A * B, S),
        r_hat=np.stack([r1, r2]),
        n=n,
        sigmas=(float(sigma_plus), float(sigma_minus)),
        action_sizes=(A, B),
        delta=model.delta,
        K=model.K,
    )


def _expected_per_action(payoff: np.ndarray, strategies: Sequence[np.ndarray], i: int) -> np.ndarray:
    """Expected payoff of each of player ``i``'s actions with the others fixed."""
    out = payoff
    # contract from the last axis backwards so remaining axis indices stay valid
    for j in range(len(strategies) - 1, -1, -1):
        if j != i:
            out = np.tensordot(out, strategies[j], axes=([j], [0]))
    return out


def nash_residual(payoffs: np.ndarray, strategies: Sequence[np.ndarray]) -> float:
    """Largest gain any single player gets by deviating, clamped at zero."""
    worst = 0.0
    for i in range(len(strategies)):
        per_action = _expected_per_action(payoffs[i], strategies, i)
        worst = max(worst, float(per_action.max() - per_action @ strategies[i]))
    return max(worst, 0.0)


def _pure_equilibria(payoffs: np.ndarray, tol: float) -> np.ndarray:
    m = payoffs.shape[0]
    ok = np.ones(payoffs.shape[1:], dtype=bool)
    for i in range(m):
        ok &= payoffs[i] >= payoffs[i].max(axis=i, keepdims=True) - tol
    return np.flatnonzero(ok)


def _regret_matching(payoffs: np.ndarray, tol: float, max_iters: int) -> list[np.ndarray]:
    sizes = payoffs.shape[1:]
    m = len(sizes)
    current = [np.full(n, 1.0 / n) for n in sizes]
    regrets = [np.zeros(n) for n in sizes]
    totals = [np.zeros(n) for n in sizes]
    for t in range(max_iters):
        for i in range(m):
            totals[i] += current[i]
        per_action = [_expected_per_action(payoffs[i], current, i) for i in range(m)]
        for i in range(m):
            regrets[i] += per_action[i] - per_action[i] @ current[i]
        nxt = []
        for i in range(m):
            pos = np.maximum(regrets[i], 0.0)
            nxt.append(pos / pos.sum() if pos.sum() > 0 else np.full(sizes[i], 1.0 / sizes[i]))
        current = nxt
        if t % 50 == 49:
            avg = [x / x.sum() for x in totals]
            if nash_residual(payoffs, avg) <= tol:
                break
    avg = [x / x.sum() for x in totals]
    return min((avg, current), key=lambda s: nash_residual(payoffs, s))


def stage_equilibrium(
    payoffs,
    tol: float = DEFAULT_NASH_TOL,
    max_iters: int = 5000,
    max_residual: float | None = None,
) -> tuple[list[np.ndarray], float]:
    """Product strategy profile for a one-shot game with payoffs ``(m, A_1, ..., A_m)``.

    Two-player constant-sum games are solved exactly.  Otherwise a pure
    equilibrium is returned when one exists (largest total payoff, then
    lowest joint index); failing that, regret matching runs for up to
    ``max_iters`` rounds and the residual is reported as found.  With
    ``max_residual`` set, a larger residual raises :class:`StageSolverFailure`.
    """
    payoffs = np.asarray(payoffs, dtype=float)
    m = payoffs.shape[0]
    if payoffs.ndim != m + 1:
        raise ShapeMismatch(f"payoff array of shape {payoffs.shape} does not describe {m} players")
    if m == 2 and np.ptp(payoffs[0] + payoffs[1]) <= 1e-12 * max(1.0, np.abs(payoffs).max()):
        sol = solve_zero_sum(payoffs[0], nash_tol=max(tol, DEFAULT_NASH_TOL))
        strategies = [sol.w, sol.z]
    else:
        pure = _pure_equilibria(payoffs, 0.0)
        if pure.size:
            totals = payoffs.sum(axis=0).ravel()[pure]
            joint = np.unravel_index(int(pure[int(np.argmax(totals))]), payoffs.shape[1:])
            strategies = [np.eye(n)[a] for n, a in zip(payoffs.shape[1:], joint)]
        else:
            strategies = _regret_matching(payoffs, tol, max_iters)
    residual = nash_residual(payoffs, strategies)
    if max_residual is not None and residual > max_residual:
        raise StageSolverFailure(residual)
    return strategies, residual


def zero_sum_stage_solver(payoffs, tol: float = DEFAULT_NASH_TOL) -> tuple[list[np.ndarray], float]:
    """Treat player 0's payoff as a zero-sum matrix game (player 1 minimizes it)."""
    payoffs = np.asarray(payoffs, dtype=float)
    if payoffs.shape[0] != 2 or payoffs.ndim != 3:
        raise ShapeMismatch("the zero-sum stage solver needs exactly two players")
    sol = solve_zero_sum(payoffs[0], nash_tol=tol)
    return [sol.w, sol.z], exploitability(payoffs[0], sol.w, sol.z)


@dataclass(frozen=True, eq=False)
class MultiSolveResult:
    values: np.ndarray  # (m, H+1, S)
    q: np.ndarray  # (m, H, S, J)
    policies: list  # per player, (H, S, A_i)
    residuals: np.ndarray  # (H, S)
    diagnostics: dict = field(default_factory=dict)


def _joint_distribution(strategies: Sequence[np.ndarray]) -> np.ndarray:
    joint = np.ones(())
    for x in strategies:
        joint = np.multiply.outer(joint, x)
    return joint.ravel()


def multi_rtz_vi_lcb(
    model: MultiEmpiricalModel,
    params: PenaltyParams,
    stage_solver: Callable = stage_equilibrium,
    max_residual: float | None = None,
) -> MultiSolveResult:
    """Optimistic robust value iteration for every player, coupled through a stage equilibrium."""
    H, S, J, _ = model.p_hat.shape
    sizes = model.action_sizes
    m = len(sizes)
    values = np.zeros((m, H + 1, S))
    q = np.empty((m, H, S, J))
    policies = [np.empty((H, S, n)) for n in sizes]
    residuals = np.zeros((H, S))
    for h in range(H - 1, -1, -1):
        rows = model.p_hat[h].reshape(-1, S)
        for i in range(m):
            v = values[i, h + 1]
            beta = penalty_array(model.n[h], variance_rows(rows, v).reshape(S, J), params, H)
            backup = worst_case_rows(rows, v, model.sigmas[i]).reshape(S, J)
            q[i, h] = np.minimum(model.r_hat[i, h] + backup + beta, float(H))
        for s in range(S):
            stage = q[:, h, s].reshape((m,) + tuple(sizes))
            strategies, res = stage_solver(stage)
            if max_residual is not None and res > max_residual:
                raise StageSolverFailure(res, where=(h, s))
            residuals[h, s] = res
            for i in range(m):
                policies[i][h, s] = strategies[i]
            joint = _joint_distribution(strategies)
            values[:, h, s] = q[:, h, s] @ joint
    return MultiSolveResult(values, q, policies, residuals, {"max_residual": float(residuals.max())})
