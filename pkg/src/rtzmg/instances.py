"""Instance generators: random dense games and the two-state hard family with a hidden bit string."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import STREAM_INSTANCE, rng_stream
from .game import MarkovGame


class BadParams(ValueError):
    pass


class HTooSmall(ValueError):
    pass


def random_game(S: int, A: int, B: int, H: int, seed: int, sigma_plus: float = 0.2, sigma_minus: float = 0.2) -> MarkovGame:
    """Transition rows uniform on the simplex, rewards uniform on [0, 1], uniform initial distribution."""
    if min(S, A, B, H) < 1:
        raise BadParams("sizes must be positive")
    rng = rng_stream(seed, STREAM_INSTANCE)
    E = rng.standard_exponential((H, S, A, B, S))
    P = E / E.sum(axis=-1, keepdims=True)
    r = rng.random((H, S, A, B))
    return MarkovGame.build(P, r, sigma_plus, sigma_minus, np.full(S, 1.0 / S))


def _pairwise_ok(words: np.ndarray, d: int) -> bool:
    if len(words) < 2:
        return True
    dist = np.bitwise_count(words[:, None] ^ words[None, :])
    np.fill_diagonal(dist, 255)
    return bool(dist.min() >= d)


def gv_codebook(H: int, size: int | None = None, max_scan: int = 1 << 22, chunk: int = 4096) -> np.ndarray:
    """Greedy binary code of length ``H`` with pairwise Hamming distance at least ``ceil(H/8)``.

    Words are scanned in lexicographic order (as ``H``-bit integers, most
    significant bit first) and kept when far enough from every word kept so
    far.  The scan stops once ``size`` words are found (default
    ``ceil(exp(H/8))``) or after ``max_scan`` candidates.  The all-ones word
    is always appended if it fits, so the code has at least two words.

    Returns a ``(n_words, H)`` array of 0/1 entries.
    """
    if H < 16:
        raise HTooSmall(f"H must be at least 16, got {H}")
    if H > 64:
        raise BadParams("codebooks are limited to H <= 64")
    d = math.ceil(H / 8)
    target = math.ceil(math.exp(H / 8)) if size is None else int(size)
    limit = min(max_scan, 1 << H) if H < 64 else max_scan
    kept: list[int] = []
    kept_arr = np.zeros(0, dtype=np.uint64)
    start = 0
    while len(kept) < target and start < limit:
        cand = np.arange(start, min(start + chunk, limit), dtype=np.uint64)
        start += len(cand)
        if len(kept_arr):
            far = np.bitwise_count(cand[:, None] ^ kept_arr[None, :]).min(axis=1) >= d
            cand = cand[far]
        for c in cand:
            if len(kept) >= target:
                break
            if all(int(c ^ np.uint64(k)).bit_count() >= d for k in kept[len(kept_arr):]):
                kept.append(int(c))
        kept_arr = np.array(kept, dtype=np.uint64)
    ones = (1 << H) - 1
    if ones not in kept and all((ones ^ k).bit_count() >= d for k in kept):
        kept.append(ones)
    words = np.array(kept, dtype=np.uint64)
    assert _pairwise_ok(words, d)
    shifts = np.arange(H - 1, -1, -1, dtype=np.uint64)
    return ((words[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.int8)


@dataclass(frozen=True)
class HardInstanceParams:
    """Parameters of the two-state hard robust MDP.

    ``S_family`` and ``A_family`` are the sizes of the family the instance is
    drawn from; they enter only the initial distribution through ``C``.
    ``n_states`` pads the game with absorbing zero-reward states.
    """

    H: int
    sigma: float
    epsilon: float
    phi: tuple = ()
    c0: float = 0.25
    c2: float = 0.25
    c1: float | None = None
    c5: float = 0.1
    C: float = 1.0
    S_family: int = 2
    A_family: int = 2
    n_states: int = 2

    def __post_init__(self):
        phi = tuple(int(x) for x in self.phi)
        object.__setattr__(self, "phi", phi)
        if self.c1 is None:
            object.__setattr__(self, "c1", self.c0 / 2)
        if self.H < 2:
            raise BadParams("H must be at least 2")
        if len(phi) != self.H or any(x not in (0, 1) for x in phi):
            raise BadParams("phi must be a bit string of length H")
        if not 0.0 < self.c0 < 1.0:
            raise BadParams("c0 must lie in (0, 1)")
        if not 0.0 < self.c2 <= 0.25:
            raise BadParams("c2 must lie in (0, 1/4]")
        if not math.isclose(self.c1, self.c0 / 2) or self.c1 > 0.25:
            raise BadParams("c1 must equal c0/2 and be at most 1/4")
        if not 0.0 < self.sigma <= 1.0 - self.c0:
            raise BadParams(f"sigma must lie in (0, 1 - c0] = (0, {1 - self.c0}], got {self.sigma}")
        if self.c5 <= 0 or self.epsilon <= 0:
            raise BadParams("c5 and epsilon must be positive")
        if self.epsilon > (self.c2 / self.H if self.small_sigma else 1.0):
            raise BadParams("epsilon exceeds its admissible range")
        if self.C <= 0 or 1.0 / (self.C * self.S_family * self.A_family) > 0.25:
            raise BadParams("C must satisfy 1/(C S A) <= 1/4")
        if self.n_states < 2:
            raise BadParams("n_states must be at least 2")
        p, delta = self.p, self.delta
        if delta > (self.c2 / (2 * self.H) if self.small_sigma else self.c1 * self.sigma / self.H):
            raise BadParams("Delta exceeds its admissible range; reduce c5 or epsilon")
        if not (0.0 <= p - delta and p + delta <= 1.0):
            raise BadParams(f"p={p}, Delta={delta} violate 0 <= p - Delta, p + Delta <= 1")

    @property
    def small_sigma(self) -> bool:
        return self.sigma <= self.c2 / (2 * self.H)

    @property
    def p(self) -> float:
        return self.c2 / self.H if self.small_sigma else (1.0 + self.c1 / self.H) * self.sigma

    @property
    def delta(self) -> float:
        if self.small_sigma:
            return self.c5 * self.epsilon / self.H**2
        return self.c5 * self.sigma * self.epsilon / self.H

    @property
    def q(self) -> float:
        return self.p - self.delta

    @property
    def initial_mass_m(self) -> float:
        return 1.0 / (self.C * self.S_family * self.A_family)


M_STATE = 0
N_STATE = 1


def hard_rmdp(params: HardInstanceParams) -> MarkovGame:
    """Hard instance with a single trivial min-player action.

    State 0 plays the role of the informative state: action ``phi[h]`` moves
    to the absorbing rewarding state 1 with probability ``p``, the other
    action with probability ``q = p - Delta``.  Padding states are absorbing
    with zero reward.  Both radii equal ``params.sigma``.
    """
    H, S = params.H, params.n_states
    P = np.zeros((H, S, 2, 1, S))
    for s in range(S):
        if s != M_STATE:
            P[:, s, :, 0, s] = 1.0
    for h, bit in enumerate(params.phi):
        for a in (0, 1):
            go = params.p if a == bit else params.q
            P[h, M_STATE, a, 0, N_STATE] = go
            P[h, M_STATE, a, 0, M_STATE] = 1.0 - go
    r = np.zeros((H, S, 2, 1))
    r[:, N_STATE] = 1.0
    rho = np.zeros(S)
    rho[M_STATE] = params.initial_mass_m
    rho[N_STATE] = 1.0 - params.initial_mass_m
    return MarkovGame.build(P, r, params.sigma, params.sigma, rho)


def random_phi(H: int, seed: int) -> tuple:
    rng = rng_stream(seed, STREAM_INSTANCE, 1)
    return tuple(int(x) for x in rng.integers(0, 2, H))
