"""Sample-size sweeps: sample, subsample, estimate, solve both ways, score against the true game."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .dataset import dataset_counts, estimate_model, flatten, sample_dataset, two_stage_subsample
from .evaluation import nash_gap
from .game import MarkovGame, load_game, uniform_policy_pair
from .instances import HardInstanceParams, hard_rmdp, random_game, random_phi
from .solver import PenaltyParams, rtz_vi, rtz_vi_lcb

CSV_HEADER = ("seed", "K", "gap_lcb", "gap_vi", "runtime_ms_lcb", "runtime_ms_vi")


class NonPositiveValue(ValueError):
    pass


class TooFewPoints(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One sweep over ``K_grid`` x ``seeds``.

    ``game`` selects the instance source: ``{"kind": "random", "S", "A",
    "B", "H"}`` draws a fresh game per seed, ``{"kind": "file", "path"}``
    loads one fixed game and ``{"kind": "hard", ...}`` builds the hard
    instance from :class:`HardInstanceParams` fields (``phi`` drawn per seed
    when absent).  ``subsample`` is ``"two-stage"`` or ``"none"`` (all
    episodes used as a flat bag).  Runtime columns hold ``nan`` unless
    ``timing`` is on, which keeps repeated runs byte-identical.
    """

    game: dict = field(default_factory=lambda: {"kind": "random", "S": 5, "A": 2, "B": 2, "H": 5})
    K_grid: tuple = (128, 256)
    seeds: tuple = (0,)
    delta: float = 0.05
    c_n: float = 1.0
    sigma_plus: float = 0.2
    sigma_minus: float = 0.2
    out_dir: str | None = None
    threads: int = 1
    subsample: str = "two-stage"
    trim_constant: float = 10.0
    timing: bool = False

    def __post_init__(self):
        self.K_grid = tuple(int(k) for k in self.K_grid)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.K_grid or min(self.K_grid) < 1:
            raise ConfigError("K grid must be nonempty and positive")
        if not self.seeds:
            raise ConfigError("seed list must be nonempty")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.subsample not in ("two-stage", "none"):
            raise ConfigError(f"unknown subsample mode {self.subsample!r}")
        if self.game.get("kind") not in ("random", "file", "hard"):
            raise ConfigError(f"unknown game source {self.game!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["K_grid"] = list(self.K_grid)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(**data)


def build_game(config: ExperimentConfig, seed: int) -> MarkovGame:
    src = config.game
    if src["kind"] == "random":
        return random_game(src["S"], src["A"], src["B"], src["H"], seed, config.sigma_plus, config.sigma_minus)
    if src["kind"] == "file":
        return load_game(src["path"])
    fields = {k: v for k, v in src.items() if k != "kind"}
    fields.setdefault("phi", random_phi(fields["H"], seed))
    return hard_rmdp(HardInstanceParams(**fields))


def resolve_threads(requested: int | None) -> int:
    env = os.environ.get("RMG_THREADS")
    n = int(env) if env else (requested or 1)
    return max(1, n)


def _run_seed(args) -> list[tuple]:
    config, seed = args
    game = build_game(config, seed)
    exact = rtz_vi(game)
    behavior = uniform_policy_pair(game.S, game.A, game.B, game.H)
    rows = []
    for K in config.K_grid:
        data = sample_dataset(game, behavior, K, seed)
        if config.subsample == "two-stage":
            data = two_stage_subsample(data, config.delta, seed, config.trim_constant)
        else:
            data = flatten(data)
        model = estimate_model(dataset_counts(data), game.rewards, config.delta, K)
        params = PenaltyParams(c_n=config.c_n, delta=config.delta, k=K)

        t0 = time.perf_counter()
        lcb = rtz_vi_lcb(model, game.sigma_plus, game.sigma_minus, params)
        t1 = time.perf_counter()
        vi = rtz_vi(model, game.sigma_plus, game.sigma_minus)
        t2 = time.perf_counter()

        gap_lcb = nash_gap(game, lcb.policy.mu, lcb.policy.nu, exact=exact).gap
        gap_vi = nash_gap(game, vi.policy.mu, vi.policy.nu, exact=exact).gap
        ms_lcb = (t1 - t0) * 1e3 if config.timing else math.nan
        ms_vi = (t2 - t1) * 1e3 if config.timing else math.nan
        rows.append((seed, K, gap_lcb, gap_vi, ms_lcb, ms_vi))
    return rows


def _fmt(x) -> str:
    return str(x) if isinstance(x, (int, np.integer)) else format(float(x), ".17g")


def write_rows(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in sorted(rows, key=lambda r: (r[0], r[1])):
            w.writerow([_fmt(x) for x in row])


def read_rows(path) -> list[tuple]:
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        return [(int(r[0]), int(r[1]), *map(float, r[2:])) for r in reader]


def fit_loglog_slope(points) -> tuple[float, float, float]:
    """Least-squares line through ``(log K, log gap)``; returns slope, intercept and r squared."""
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    if (pts <= 0).any():
        raise NonPositiveValue("log-log fit needs positive K and gap values")
    if len(np.unique(pts[:, 0])) < 2:
        raise TooFewPoints("need at least two distinct K values")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    xc, yc = x - x.mean(), y - y.mean()
    slope = float(xc @ yc / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    ss_res = float(((yc - slope * xc) ** 2).sum())
    ss_tot = float((yc**2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return slope, intercept, r2


def _ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    ranks[order] = np.arange(len(x), dtype=float)
    for v in np.unique(x):  # average ranks over ties
        tie = x == v
        ranks[tie] = ranks[tie].mean()
    return ranks


def spearman(x, y) -> float:
    rx, ry = _ranks(np.asarray(x, float)), _ranks(np.asarray(y, float))
    rx -= rx.mean()
    ry -= ry.mean()
    den = math.sqrt(float(rx @ rx) * float(ry @ ry))
    return float(rx @ ry / den) if den > 0 else float("nan")


def summarize(rows, config: ExperimentConfig | None = None) -> dict:
    rows = sorted(rows, key=lambda r: (r[0], r[1]))
    per_k = []
    for K in sorted({r[1] for r in rows}):
        lcb = np.array([r[2] for r in rows if r[1] == K])
        vi = np.array([r[3] for r in rows if r[1] == K])
        per_k.append({
            "K": K,
            "n": int(lcb.size),
            "mean_gap_lcb": float(lcb.mean()),
            "std_gap_lcb": float(lcb.std(ddof=1)) if lcb.size > 1 else 0.0,
            "mean_gap_vi": float(vi.mean()),
            "std_gap_vi": float(vi.std(ddof=1)) if vi.size > 1 else 0.0,
        })
    summary = {"per_K": per_k, "slope": None, "spearman_K_gap_lcb": None}
    pts = [(d["K"], d["mean_gap_lcb"]) for d in per_k]
    if len(pts) >= 2:
        summary["spearman_K_gap_lcb"] = spearman([p[0] for p in pts], [p[1] for p in pts])
        try:
            slope, intercept, r2 = fit_loglog_slope(pts)
            summary["slope"] = {"slope": slope, "intercept": intercept, "r_squared": r2}
        except NonPositiveValue:
            pass
    if config is not None:
        # output location and worker count do not affect results, so they stay out of the file
        summary["config"] = {k: v for k, v in config.to_dict().items() if k not in ("out_dir", "threads")}
    return summary


def run_experiment(config: ExperimentConfig) -> tuple[list[tuple], dict]:
    """Run every (seed, K) cell; write ``results.csv`` and ``summary.json`` when ``out_dir`` is set.

    Work is split by seed so each worker builds and solves its true game
    once.  If a cell fails, rows finished so far are written before the error
    propagates.
    """
    threads = resolve_threads(config.threads)
    jobs = [(config, s) for s in config.seeds]
    rows: list[tuple] = []
    out = Path(config.out_dir) if config.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    try:
        if threads > 1 and len(jobs) > 1:
            with get_context("fork").Pool(min(threads, len(jobs))) as pool:
                for chunk in pool.imap_unordered(_run_seed, jobs):
                    rows.extend(chunk)
        else:
            for job in jobs:
                rows.extend(_run_seed(job))
    except BaseException:
        if out is not None and rows:
            write_rows(rows, out / "results.csv")
        raise
    rows.sort(key=lambda r: (r[0], r[1]))
    summary = summarize(rows, config)
    if out is not None:
        write_rows(rows, out / "results.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return rows, summary
