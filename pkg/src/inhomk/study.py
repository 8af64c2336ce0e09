"""Monte Carlo study harness: rejection probabilities and covariance oracles.

Replicate ``r`` of cell ``i`` always draws from ``stream(seed, i * 10**6 + r)``,
so results are identical no matter how replicates are scheduled; worker
processes only ever receive disjoint replicate ranges and the merged output
preserves replicate order. Within a cell the same simulated patterns are
evaluated under every requested variance mode (that is what makes the
known-vs-estimated comparison a paired one), sharing a single critical-value
table: the estimated-intensity critical value is the standard table value
scaled by the inverse intensity estimate, the known-intensity one is a cached
per-estimate pass over the shared reservoir.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from math import sqrt

import numpy as np

from .geometry import PointPattern, Window, close_pairs, overlap_volume
from .gof import PoissonNullTables
from .intensity import ConstantIntensity
from .kstat import RadiusGrid, k_hat, k_poisson
from .seeds import stream
from .simulate import MaternParams, simulate_matern, simulate_poisson

__all__ = [
    "StudyConfig",
    "StudyCell",
    "StudyResult",
    "rejection_study",
    "empirical_cov_oracle",
]

_CELL_STRIDE = 10**6
_CHUNK = 250
_FAILURE_CAP = 0.01


@dataclass(frozen=True)
class StudyConfig:
    """One rejection-probability study: a process, windows, and test modes."""

    process: str = "poisson"
    rho: float = 200.0
    matern: MaternParams | None = None
    sides: tuple[float, ...] = (1.0, 2.0)
    modes: tuple[str, ...] = ("estimated", "known")
    replicates: int = 2000
    alpha: float = 0.05
    R: float = 0.05
    grid_size: int = 50
    sample_size: int = 10_000
    seed: int = 0
    dim: int = 2
    workers: int = 1

    def __post_init__(self):
        if self.process not in ("poisson", "matern"):
            raise ValueError("process must be 'poisson' or 'matern'")
        if self.process == "matern" and self.matern is None:
            raise ValueError("matern parameters required for a matern study")
        if self.replicates < 100:
            raise ValueError("need at least 100 replicates")
        for mode in self.modes:
            if mode not in ("estimated", "known"):
                raise ValueError(f"unknown mode {mode!r}")
        object.__setattr__(self, "sides", tuple(float(s) for s in self.sides))
        object.__setattr__(self, "modes", tuple(self.modes))

    @classmethod
    def from_dict(cls, raw: dict) -> "StudyConfig":
        raw = dict(raw)
        if {"kappa", "mu", "rdisp"} <= raw.keys():
            raw["matern"] = MaternParams(
                raw.pop("kappa"), raw.pop("mu"), raw.pop("rdisp")
            )
        return cls(**raw)


@dataclass(frozen=True)
class StudyCell:
    process: str
    side: float
    mode: str
    replicates: int
    rejections: int
    failures: int
    wall_time: float

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.replicates

    @property
    def std_error(self) -> float:
        p = self.rejection_rate
        return sqrt(p * (1.0 - p) / self.replicates)


@dataclass(frozen=True)
class StudyResult:
    config: StudyConfig
    cells: tuple[StudyCell, ...]

    def cell(self, side: float, mode: str) -> StudyCell:
        for c in self.cells:
            if c.side == side and c.mode == mode:
                return c
        raise KeyError(f"no cell for side={side}, mode={mode}")

    def to_markdown(self) -> str:
        lines = [
            "| process | side | mode | rejection rate | std error | replicates | seconds |",
            "|---|---|---|---|---|---|---|",
        ]
        for c in self.cells:
            lines.append(
                f"| {c.process} | {c.side:g} | {c.mode} | {c.rejection_rate:.4f} "
                f"| {c.std_error:.4f} | {c.replicates} | {c.wall_time:.1f} |"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["process,side,mode,rejection_rate,std_error,replicates,seconds"]
        for c in self.cells:
            lines.append(
                f"{c.process},{c.side:.17g},{c.mode},{c.rejection_rate:.17g},"
                f"{c.std_error:.17g},{c.replicates},{c.wall_time:.17g}"
            )
        return "\n".join(lines) + "\n"


def _simulate_cell_pattern(config: StudyConfig, window: Window, rng) -> PointPattern:
    if config.process == "poisson":
        return simulate_poisson(config.rho, window, rng)
    return simulate_matern(config.matern, window, rng)


def _replicate_stats(config: StudyConfig, side: float, cell_index: int, lo: int, hi: int):
    """Point count and sup statistic for replicates [lo, hi) of one cell.

    The statistic is computed from the unit-intensity pair sum and scaled by
    the squared intensity estimate, which is exact for the constant model and
    lets both variance modes share it. Counts below two yield a zero pair sum;
    a count of zero is reported as-is and treated as a failure upstream.
    """
    window = Window(config.dim, side)
    grid = RadiusGrid.uniform(config.R, config.grid_size)
    null_curve = k_poisson(grid.values, config.dim)
    sqrt_n = sqrt(window.volume)
    counts = np.empty(hi - lo, dtype=np.int64)
    stats = np.empty(hi - lo)
    for k, rep in enumerate(range(lo, hi)):
        rng = stream(config.seed, cell_index * _CELL_STRIDE + rep)
        pattern = _simulate_cell_pattern(config, window, rng)
        counts[k] = len(pattern)
        if len(pattern) == 0:
            stats[k] = np.nan
            continue
        beta_hat = len(pattern) / window.volume
        unit = k_hat(pattern, ConstantIntensity(1.0), grid)
        stats[k] = sqrt_n * np.abs(unit.values / beta_hat**2 - null_curve).max()
    return counts, stats


def _study_chunk(args):
    return _replicate_stats(*args)


def _collect_cell(config: StudyConfig, side: float, cell_index: int, executor):
    ranges = [
        (lo, min(lo + _CHUNK, config.replicates))
        for lo in range(0, config.replicates, _CHUNK)
    ]
    jobs = [(config, side, cell_index, lo, hi) for lo, hi in ranges]
    if executor is None:
        parts = [_study_chunk(j) for j in jobs]
    else:
        parts = list(executor.map(_study_chunk, jobs))
    counts = np.concatenate([p[0] for p in parts])
    stats = np.concatenate([p[1] for p in parts])
    return counts, stats


def rejection_study(config: StudyConfig) -> StudyResult:
    """Rejection probability of the goodness-of-fit test, per (side, mode).

    Deterministic given the config seed, independent of the worker count.
    Replicates that cannot be evaluated (empty patterns) count as failures;
    more than 1% failures in a cell aborts the study.
    """
    grid = RadiusGrid.uniform(config.R, config.grid_size)
    tables = PoissonNullTables(grid, config.sample_size, config.seed)
    volume_by_side = {side: Window(config.dim, side).volume for side in config.sides}

    executor = None
    if config.workers > 1:
        executor = ProcessPoolExecutor(max_workers=config.workers)
    try:
        cells = []
        for cell_index, side in enumerate(config.sides):
            start = time.perf_counter()
            counts, stats = _collect_cell(config, side, cell_index, executor)
            ok = counts > 0
            failures = int((~ok).sum())
            if failures > _FAILURE_CAP * config.replicates:
                raise RuntimeError(
                    f"{failures} failed replicates out of {config.replicates}"
                )
            beta_hats = counts[ok] / volume_by_side[side]
            t_ok = stats[ok]
            elapsed = time.perf_counter() - start
            for mode in config.modes:
                mode_start = time.perf_counter()
                if mode == "estimated":
                    crits = np.array(
                        [tables.estimated_critical(config.alpha, b) for b in beta_hats]
                    )
                else:
                    crits = np.array(
                        [tables.known_critical(config.alpha, b) for b in beta_hats]
                    )
                rejections = int((t_ok > crits).sum())
                cells.append(
                    StudyCell(
                        process=config.process,
                        side=side,
                        mode=mode,
                        replicates=config.replicates,
                        rejections=rejections,
                        failures=failures,
                        wall_time=elapsed + (time.perf_counter() - mode_start),
                    )
                )
        return StudyResult(config=config, cells=tuple(cells))
    finally:
        if executor is not None:
            executor.shutdown()


def _khat_at_two_radii(pattern: PointPattern, r1: float, r2: float, intensity: float):
    """K estimates at two radii with a constant intensity plugged in."""
    if not np.isfinite(intensity):
        return np.nan, np.nan
    rmax = max(r1, r2)
    pairs = close_pairs(pattern, rmax)
    if pairs.empty:
        return 0.0, 0.0
    overlap = overlap_volume(pattern.window, pairs.disp)
    w = 1.0 / (overlap * intensity**2)
    csum = np.concatenate(([0.0], np.cumsum(w)))
    s1 = csum[np.searchsorted(pairs.dist, r1, side="right")]
    s2 = csum[np.searchsorted(pairs.dist, r2, side="right")]
    return float(s1), float(s2)


def empirical_cov_oracle(
    config: StudyConfig,
    side: float,
    r1: float,
    r2: float,
    mode: str,
    replicates: int,
    seed: int,
) -> float:
    """Brute-force ``n Cov(Khat(r1), Khat(r2))`` across simulated replicates.

    ``mode='known'`` plugs the true intensity into the estimator,
    ``mode='estimated'`` the per-replicate count estimate. The process and its
    parameters are taken from ``config``; the study's grid settings are not
    used. Calls with the same seed see the same replicates in both modes.
    """
    if replicates < 1000:
        raise ValueError("need at least 1000 replicates for the oracle")
    if mode not in ("known", "estimated"):
        raise ValueError("mode must be 'known' or 'estimated'")
    if config.process != "poisson" and mode == "known":
        raise ValueError("known-intensity oracle requires the poisson process")
    window = Window(config.dim, side)
    k1 = np.empty(replicates)
    k2 = np.empty(replicates)
    for rep in range(replicates):
        rng = stream(seed, rep)
        pattern = _simulate_cell_pattern(config, window, rng)
        if mode == "known":
            intensity = config.rho
        else:
            intensity = len(pattern) / window.volume if len(pattern) else np.nan
        k1[rep], k2[rep] = _khat_at_two_radii(pattern, r1, r2, intensity)
    valid = np.isfinite(k1) & np.isfinite(k2)
    cov = np.cov(k1[valid], k2[valid], ddof=1)[0, 1]
    return float(window.volume * cov)
