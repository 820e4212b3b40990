"""Core types for finite-horizon tabular robust two-player zero-sum Markov games.

Tensor layout is ``[h, s, a, b, s']`` with the next-state axis last and
contiguous, so every robust backup streams over one distribution row.
Steps are 0-based in code (``h = 0 .. H-1``); a value table of shape
``(H + 1, S)`` carries the terminal slice at index ``H``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

PROB_TOL = 1e-12
# rows off by more than this are rejected rather than renormalized
RENORM_TOL = 1e-9


class GameError(ValueError):
    """Base class for invalid game data."""


class NonStochasticRow(GameError):
    def __init__(self, index: tuple[int, ...], total: float):
        self.index = index
        self.total = total
        super().__init__(f"transition row {index} sums to {total!r} or has a negative entry")


class RewardOutOfRange(GameError):
    def __init__(self, index: tuple[int, ...], value: float):
        self.index = index
        self.value = value
        super().__init__(f"reward at {index} is {value!r}, outside [0, 1]")


class BadInitialDist(GameError):
    pass


class BadSigma(GameError):
    pass


class ShapeMismatch(GameError):
    pass


class Sense(str, Enum):
    """Which side of the uncertainty ball a player evaluates against."""

    WORST_CASE = "worst_case"
    BEST_CASE = "best_case"


@dataclass(frozen=True)
class UncertaintySpec:
    radius: float
    sense: Sense = Sense.WORST_CASE

    def __post_init__(self):
        if not 0.0 <= self.radius <= 1.0:
            raise BadSigma(f"radius must lie in [0, 1], got {self.radius}")
        object.__setattr__(self, "sense", Sense(self.sense))


def _first_bad_row(rows: np.ndarray, tol: float) -> tuple[tuple[int, ...], float] | None:
    sums = rows.sum(axis=-1)
    bad = (np.abs(sums - 1.0) > tol) | (rows < 0).any(axis=-1)
    if not bad.any():
        return None
    idx = tuple(int(i) for i in np.argwhere(bad)[0])
    return idx, float(sums[idx])


def normalize_rows(rows: np.ndarray, tol: float = RENORM_TOL) -> np.ndarray:
    """Renormalize distribution rows that drifted by at most ``tol``.

    Rows further off than ``tol`` (or with negative entries) raise
    :class:`NonStochasticRow`; they indicate bad data, not round-off.
    """
    rows = np.array(rows, dtype=float)
    bad = _first_bad_row(rows, tol)
    if bad is not None:
        raise NonStochasticRow(*bad)
    sums = rows.sum(axis=-1, keepdims=True)
    # rows already within PROB_TOL are left bit-for-bit alone so file round-trips are exact
    drifted = np.abs(sums - 1.0) > PROB_TOL
    return np.where(drifted, rows / sums, rows)


@dataclass(frozen=True, eq=False)
class MarkovGame:
    """A finite-horizon robust zero-sum Markov game.

    Attributes
    ----------
    transitions : ndarray, shape (H, S, A, B, S)
        Nominal kernel; ``transitions[h, s, a, b]`` is a distribution over s'.
    rewards : ndarray, shape (H, S, A, B)
        Deterministic rewards in [0, 1], gain of the max-player.
    sigma_plus, sigma_minus : float
        TV radii of the max-player's and min-player's uncertainty sets.
    initial_dist : ndarray, shape (S,)
    """

    transitions: np.ndarray
    rewards: np.ndarray
    sigma_plus: float
    sigma_minus: float
    initial_dist: np.ndarray

    def __post_init__(self):
        P = np.ascontiguousarray(self.transitions, dtype=float)
        r = np.ascontiguousarray(self.rewards, dtype=float)
        rho = np.ascontiguousarray(self.initial_dist, dtype=float)
        if P.ndim != 5 or P.shape[-1] != P.shape[1]:
            raise ShapeMismatch(f"transitions must have shape (H, S, A, B, S), got {P.shape}")
        if r.shape != P.shape[:4]:
            raise ShapeMismatch(f"rewards shape {r.shape} does not match {P.shape[:4]}")
        if rho.shape != (P.shape[1],):
            raise ShapeMismatch(f"initial_dist shape {rho.shape} does not match S={P.shape[1]}")
        for arr in (P, r, rho):
            arr.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "initial_dist", rho)
        object.__setattr__(self, "sigma_plus", float(self.sigma_plus))
        object.__setattr__(self, "sigma_minus", float(self.sigma_minus))

    @classmethod
    def build(cls, transitions, rewards, sigma_plus, sigma_minus, initial_dist) -> "MarkovGame":
        """Construct from raw arrays, renormalizing near-stochastic rows, then validate."""
        game = cls(
            transitions=normalize_rows(transitions),
            rewards=np.asarray(rewards, dtype=float),
            sigma_plus=sigma_plus,
            sigma_minus=sigma_minus,
            initial_dist=normalize_rows(np.asarray(initial_dist, dtype=float)),
        )
        validate_game(game)
        return game

    @property
    def H(self) -> int:
        return self.transitions.shape[0]

    @property
    def S(self) -> int:
        return self.transitions.shape[1]

    @property
    def A(self) -> int:
        return self.transitions.shape[2]

    @property
    def B(self) -> int:
        return self.transitions.shape[3]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.H, self.S, self.A, self.B

    def to_dict(self) -> dict:
        return {
            "H": self.H,
            "S": self.S,
            "A": self.A,
            "B": self.B,
            "sigma_plus": self.sigma_plus,
            "sigma_minus": self.sigma_minus,
            "initial_dist": self.initial_dist.tolist(),
            "rewards": self.rewards.tolist(),
            "transitions": self.transitions.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MarkovGame":
        game = cls.build(
            transitions=data["transitions"],
            rewards=data["rewards"],
            sigma_plus=data["sigma_plus"],
            sigma_minus=data["sigma_minus"],
            initial_dist=data["initial_dist"],
        )
        declared = tuple(int(data[k]) for k in ("H", "S", "A", "B"))
        if declared != game.shape:
            raise ShapeMismatch(f"declared sizes {declared} do not match arrays {game.shape}")
        return game


def validate_game(game: MarkovGame) -> None:
    """Raise on the first violated invariant; return None for a valid game."""
    bad = _first_bad_row(game.transitions, PROB_TOL)
    if bad is not None:
        raise NonStochasticRow(*bad)
    r = game.rewards
    out = ~((r >= 0.0) & (r <= 1.0))
    if out.any():
        idx = tuple(int(i) for i in np.argwhere(out)[0])
        raise RewardOutOfRange(idx, float(r[idx]))
    rho = game.initial_dist
    if (rho < 0).any() or abs(rho.sum() - 1.0) > PROB_TOL:
        raise BadInitialDist(f"initial_dist sums to {rho.sum()!r} or has a negative entry")
    for name in ("sigma_plus", "sigma_minus"):
        sigma = getattr(game, name)
        if not 0.0 < sigma <= 1.0:
            raise BadSigma(f"{name} must lie in (0, 1], got {sigma}")


@dataclass(frozen=True, eq=False)
class PolicyPair:
    """Product policy: ``mu[h, s]`` over max-player actions, ``nu[h, s]`` over min-player actions."""

    mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        mu = np.ascontiguousarray(self.mu, dtype=float)
        nu = np.ascontiguousarray(self.nu, dtype=float)
        if mu.ndim != 3 or nu.ndim != 3 or mu.shape[:2] != nu.shape[:2]:
            raise ShapeMismatch(f"policy shapes {mu.shape} and {nu.shape} are incompatible")
        for name, arr in (("mu", mu), ("nu", nu)):
            bad = _first_bad_row(arr, PROB_TOL)
            if bad is not None:
                raise NonStochasticRow(*bad)
            arr.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)

    def check_against(self, game: MarkovGame) -> None:
        if self.mu.shape != (game.H, game.S, game.A) or self.nu.shape != (game.H, game.S, game.B):
            raise ShapeMismatch(
                f"policy shapes {self.mu.shape}, {self.nu.shape} do not fit game {game.shape}"
            )

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "nu": self.nu.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyPair":
        return cls(np.asarray(data["mu"], dtype=float), np.asarray(data["nu"], dtype=float))


def uniform_policy_pair(S: int, A: int, B: int, H: int) -> PolicyPair:
    if min(S, A, B, H) < 1:
        raise ValueError("sizes must be positive")
    return PolicyPair(np.full((H, S, A), 1.0 / A), np.full((H, S, B), 1.0 / B))


def save_game(game: MarkovGame, path) -> None:
    Path(path).write_text(json.dumps(game.to_dict()))


def load_game(path) -> MarkovGame:
    return MarkovGame.from_dict(json.loads(Path(path).read_text()))
