"""Offline data: behavior-policy trajectories, two-stage subsampling, counts and the empirical model.

A :class:`Dataset` stores one row per transition with columns
``episode, h, s, a, b, s_next``.  Episode-structured data has ``stage ==
"episodes"`` and rows ordered by (episode, h); after two-stage subsampling the
episode column is ``-1`` and the rows form an unordered bag of transitions.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .game import MarkovGame, PolicyPair, ShapeMismatch, normalize_rows

COLUMNS = ("episode", "h", "s", "a", "b", "s_next")

# spawn-key domains keep the episode, subsample and instance streams disjoint
STREAM_EPISODE = 1
STREAM_SUBSAMPLE = 2
STREAM_INSTANCE = 3

TRIM_CONSTANT = 10.0


class DatasetError(ValueError):
    pass


class IndexOutOfBounds(DatasetError):
    pass


class BadDelta(DatasetError):
    pass


def rng_stream(seed: int, domain: int, *key: int) -> np.random.Generator:
    """Counter-based generator for substream ``(domain, *key)`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(domain), *map(int, key)))
    return np.random.Generator(np.random.Philox(ss))


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise BadDelta(f"delta must lie in (0, 1), got {delta}")


@dataclass(frozen=True, eq=False)
class Dataset:
    tuples: np.ndarray  # (N, 6) int64, columns COLUMNS
    H: int
    S: int
    A: int
    B: int
    seed: int
    K: int
    stage: str = "episodes"

    def __post_init__(self):
        t = np.ascontiguousarray(self.tuples, dtype=np.int64).reshape(-1, 6)
        t.setflags(write=False)
        object.__setattr__(self, "tuples", t)

    def __len__(self) -> int:
        return self.tuples.shape[0]

    @property
    def episodes(self) -> np.ndarray:
        """``(K, H, 4)`` view of (s, a, b, s_next); only for episode-structured data."""
        if self.stage != "episodes":
            raise DatasetError("flattened datasets have no episode structure")
        return self.tuples[:, 2:].reshape(-1, self.H, 4)

    @property
    def meta(self) -> dict:
        return {
            "seed": self.seed,
            "K": self.K,
            "H": self.H,
            "S": self.S,
            "A": self.A,
            "B": self.B,
            "stage": self.stage,
        }


def _inverse_cdf(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index drawn from each CDF row by comparing against the uniform ``u``."""
    return (cdf_rows <= u[:, None]).sum(axis=1)


def _cdf(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    return c / c[..., -1:]


def episode_uniforms(seed: int, K: int, H: int) -> np.ndarray:
    """Per-episode uniforms, shape ``(K, 1 + 3H)``; row k depends only on (seed, k)."""
    U = np.empty((K, 1 + 3 * H))
    for k in range(K):
        U[k] = rng_stream(seed, STREAM_EPISODE, k).random(1 + 3 * H)
    return U


def sample_dataset(
    game: MarkovGame,
    behavior: PolicyPair,
    K: int,
    seed: int,
    initial=None,
) -> Dataset:
    """Draw ``K`` independent episodes of length ``H`` under ``behavior``.

    Episode ``k`` consumes uniforms from its own substream, used in the order
    initial state, then (a, b, s') for each step, so the data for a seed does
    not depend on how episodes are batched or scheduled.
    """
    if K < 1:
        raise DatasetError(f"K must be positive, got {K}")
    behavior.check_against(game)
    H, S = game.H, game.S
    rho = game.initial_dist if initial is None else normalize_rows(np.asarray(initial, dtype=float))
    if rho.shape != (S,):
        raise ShapeMismatch(f"initial distribution has shape {rho.shape}, expected ({S},)")

    U = episode_uniforms(seed, K, H)
    cdf_P = _cdf(game.transitions)
    cdf_mu = _cdf(behavior.mu)
    cdf_nu = _cdf(behavior.nu)

    out = np.empty((K, H, 6), dtype=np.int64)
    out[:, :, 0] = np.arange(K)[:, None]
    out[:, :, 1] = np.arange(H)[None, :]
    s = _inverse_cdf(np.broadcast_to(_cdf(rho), (K, S)), U[:, 0])
    for h in range(H):
        a = _inverse_cdf(cdf_mu[h, s], U[:, 1 + 3 * h])
        b = _inverse_cdf(cdf_nu[h, s], U[:, 2 + 3 * h])
        s_next = _inverse_cdf(cdf_P[h, s, a, b], U[:, 3 + 3 * h])
        out[:, h, 2] = s
        out[:, h, 3] = a
        out[:, h, 4] = b
        out[:, h, 5] = s_next
        s = s_next
    return Dataset(out.reshape(-1, 6), H, S, game.A, game.B, seed=seed, K=K)


def state_counts(tuples: np.ndarray, H: int, S: int) -> np.ndarray:
    """Number of transitions at each (h, s), shape ``(H, S)``."""
    t = np.asarray(tuples).reshape(-1, 6)
    return np.bincount(t[:, 1] * S + t[:, 2], minlength=H * S).reshape(H, S)


def trimmed_count(n_aux, H: int, S: int, delta: float, constant: float = TRIM_CONSTANT) -> np.ndarray:
    """``floor(max(N - c * sqrt(N log(HS/delta)), 0))`` elementwise."""
    _check_delta(delta)
    n = np.asarray(n_aux, dtype=float)
    trimmed = np.maximum(n - constant * np.sqrt(n * math.log(H * S / delta)), 0.0)
    return np.floor(trimmed).astype(np.int64)


def two_stage_subsample(d: Dataset, delta: float, seed: int, constant: float = TRIM_CONSTANT) -> Dataset:
    """Split episodes in halves, trim counts on the auxiliary half, subsample the main half.

    The first ``K // 2`` episodes form the main half and the next ``K // 2``
    the auxiliary half.  For every (h, s) the function keeps
    ``min(N^trim, N^main)`` main-half transitions, drawn without replacement
    by a partial Fisher-Yates shuffle seeded per (h, s).  The result is a flat
    bag of transitions with episode index ``-1``; its ``K`` records the
    original episode count.
    """
    _check_delta(delta)
    if d.stage != "episodes":
        raise DatasetError("two-stage subsampling needs episode-structured data")
    K = d.K
    if K % 2:
        warnings.warn(f"odd episode count {K}: dropping the last episode before splitting", stacklevel=2)
    half = K // 2
    H, S = d.H, d.S
    main = d.tuples[: half * H]
    aux = d.tuples[half * H : 2 * half * H]
    n_main = state_counts(main, H, S)
    keep = np.minimum(trimmed_count(state_counts(aux, H, S), H, S, delta, constant), n_main)

    cell = main[:, 1] * S + main[:, 2]
    order = np.argsort(cell, kind="stable")
    starts = np.concatenate([[0], np.cumsum(n_main.ravel())])
    chosen = []
    for c in np.flatnonzero(keep.ravel()):
        pool = order[starts[c] : starts[c + 1]].copy()
        m = int(keep.ravel()[c])
        rng = rng_stream(seed, STREAM_SUBSAMPLE, c)
        for i in range(m):
            j = i + int(rng.integers(len(pool) - i))
            pool[i], pool[j] = pool[j], pool[i]
        chosen.append(np.sort(pool[:m]))
    idx = np.concatenate(chosen) if chosen else np.empty(0, dtype=np.int64)
    flat = main[np.sort(idx)].copy()
    flat[:, 0] = -1
    return Dataset(flat, H, S, d.A, d.B, seed=seed, K=K, stage="subsampled")


def flatten(d: Dataset) -> Dataset:
    """All transitions of ``d`` as a flat bag (no subsampling)."""
    flat = d.tuples.copy()
    flat[:, 0] = -1
    return Dataset(flat, d.H, d.S, d.A, d.B, seed=d.seed, K=d.K, stage="flat")


@dataclass(frozen=True, eq=False)
class TransitionCounts:
    n: np.ndarray  # (H, S, A, B)
    n_next: np.ndarray  # (H, S, A, B, S)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.n.shape


def count_transitions(tuples, H: int, S: int, A: int, B: int) -> TransitionCounts:
    """Exact visit counts ``N_h(s, a, b)`` and next-state counts from transition rows."""
    t = np.asarray(tuples, dtype=np.int64).reshape(-1, 6)
    h, s, a, b, s2 = (t[:, i] for i in range(1, 6))
    for name, col, size in (("h", h, H), ("s", s, S), ("a", a, A), ("b", b, B), ("s_next", s2, S)):
        if col.size and (col.min() < 0 or col.max() >= size):
            raise IndexOutOfBounds(f"column {name} has values outside [0, {size})")
    flat = (((h * S + s) * A + a) * B + b) * S + s2
    n_next = np.bincount(flat, minlength=H * S * A * B * S).reshape(H, S, A, B, S)
    return TransitionCounts(n=n_next.sum(axis=-1), n_next=n_next)


def dataset_counts(d: Dataset) -> TransitionCounts:
    return count_transitions(d.tuples, d.H, d.S, d.A, d.B)


@dataclass(frozen=True, eq=False)
class EmpiricalModel:
    """Plug-in model. ``K`` is the episode count entering ``log(KH/delta)``."""

    p_hat: np.ndarray
    r_hat: np.ndarray
    counts: TransitionCounts
    delta: float
    K: int

    @property
    def H(self) -> int:
        return self.p_hat.shape[0]

    @property
    def S(self) -> int:
        return self.p_hat.shape[1]

    @property
    def A(self) -> int:
        return self.p_hat.shape[2]

    @property
    def B(self) -> int:
        return self.p_hat.shape[3]


def estimate_model(counts: TransitionCounts, true_rewards, delta: float, K: int) -> EmpiricalModel:
    """Empirical frequencies, uniform rows on unvisited cells, rewards revealed only where visited."""
    _check_delta(delta)
    r = np.asarray(true_rewards, dtype=float)
    if r.shape != counts.n.shape:
        raise ShapeMismatch(f"reward shape {r.shape} does not match counts {counts.n.shape}")
    S = counts.n_next.shape[-1]
    n = counts.n[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        p_hat = np.where(n > 0, counts.n_next / np.maximum(n, 1), 1.0 / S)
    r_hat = np.where(counts.n > 0, r, 0.0)
    return EmpiricalModel(p_hat=p_hat, r_hat=r_hat, counts=counts, delta=float(delta), K=int(K))


@dataclass(frozen=True, eq=False)
class OccupancyTable:
    d_s: np.ndarray  # (H, S)
    d_sab: np.ndarray  # (H, S, A, B)


def occupancy(kernel, policies: PolicyPair, initial=None) -> OccupancyTable:
    """State and state-action occupancy of ``policies`` under a kernel ``(H, S, A, B, S)``.

    ``kernel`` may also be a :class:`MarkovGame`, whose initial distribution is
    used when ``initial`` is omitted.
    """
    if isinstance(kernel, MarkovGame):
        if initial is None:
            initial = kernel.initial_dist
        kernel = kernel.transitions
    P = np.asarray(kernel, dtype=float)
    if initial is None:
        raise ShapeMismatch("an initial distribution is required with a bare kernel")
    H, S, A, B, _ = P.shape
    mu, nu = policies.mu, policies.nu
    if mu.shape != (H, S, A) or nu.shape != (H, S, B):
        raise ShapeMismatch(f"policy shapes {mu.shape}, {nu.shape} do not fit kernel {P.shape}")
    rho = np.asarray(initial, dtype=float)
    if rho.shape != (S,):
        raise ShapeMismatch(f"initial distribution has shape {rho.shape}, expected ({S},)")
    d_s = np.empty((H, S))
    d_sab = np.empty((H, S, A, B))
    d = rho
    for h in range(H):
        d_s[h] = d
        d_sab[h] = d[:, None, None] * mu[h][:, :, None] * nu[h][:, None, :]
        d = np.einsum("sab,sabt->t", d_sab[h], P[h])
    return OccupancyTable(d_s=d_s, d_sab=d_sab)


def _meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_dataset(d: Dataset, path) -> None:
    """CSV with header ``episode,h,s,a,b,s_next`` plus a ``<path>.meta.json`` sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        np.savetxt(fh, d.tuples, fmt="%d", delimiter=",")
    _meta_path(path).write_text(json.dumps(d.meta, sort_keys=True))


def load_dataset(path) -> Dataset:
    path = Path(path)
    meta = json.loads(_meta_path(path).read_text())
    with path.open() as fh:
        header = fh.readline().strip()
        if header != ",".join(COLUMNS):
            raise DatasetError(f"unexpected dataset header {header!r}")
        body = fh.read()
    rows = np.loadtxt(body.splitlines(), dtype=np.int64, delimiter=",", ndmin=2) if body.strip() else np.empty((0, 6), np.int64)
    d = Dataset(rows, meta["H"], meta["S"], meta["A"], meta["B"], seed=meta["seed"], K=meta["K"], stage=meta["stage"])
    count_transitions(d.tuples, d.H, d.S, d.A, d.B)  # bounds check
    return d
