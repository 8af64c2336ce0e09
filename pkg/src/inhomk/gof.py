"""Kolmogorov-Smirnov goodness-of-fit test for the homogeneous Poisson null.

The statistic is ``sqrt(n) sup_r |Khat(r) - pi r^2|`` over the radius grid,
with the intensity estimate plugged into Khat. Critical values come from the
Monte Carlo law of the sup of the limiting Gaussian process, under either the
estimated-intensity covariance ``2 pi min(s,t)^2 / rho^2`` or the
known-intensity covariance (which adds ``4 pi^2 s^2 t^2 / rho``); in both
variance formulas the unknown intensity is replaced by the estimate. The sup
is taken over the same grid used to simulate the Gaussian process, so the
statistic and its null law are directly comparable.

Closed-form covariances exist only in the plane; patterns in other dimensions
are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, pi, sqrt

import numpy as np

from .geometry import PointPattern
from .intensity import ConstantIntensity, estimate_constant
from .kstat import RadiusGrid, k_hat, k_poisson
from .limitlaw import MIN_SAMPLE, cholesky_with_jitter, normal_reservoir
from .seeds import stream

__all__ = ["GofConfig", "GofResult", "PoissonNullTables", "ks_statistic", "gof_test"]


@dataclass(frozen=True)
class GofConfig:
    """Configuration of one goodness-of-fit test.

    ``mode='estimated'`` uses the estimated-intensity variance formula;
    ``mode='known'`` uses the known-intensity formula with the estimate
    plugged in, quantifying what mistaking the estimate for the truth does to
    the test. An explicit ``rho`` is honored as the intensity plugged
    into the statistic in known mode, and as the fallback when the pattern is
    empty.
    """

    R: float = 0.05
    grid_size: int = 50
    alpha: float = 0.05
    mode: str = "estimated"
    rho: float | None = None
    sample_size: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.mode not in ("estimated", "known"):
            raise ValueError("mode must be 'estimated' or 'known'")
        if self.sample_size < MIN_SAMPLE:
            raise ValueError(f"sample size must be >= {MIN_SAMPLE}")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")

    def grid(self) -> RadiusGrid:
        return RadiusGrid.uniform(self.R, self.grid_size)


@dataclass(frozen=True)
class GofResult:
    statistic: float
    critical_value: float
    p_value: float
    reject: bool
    beta_hat: float
    mode: str
    alpha: float
    grid: RadiusGrid
    sample_size: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "reject": self.reject,
            "beta_hat": self.beta_hat,
            "mode": self.mode,
            "alpha": self.alpha,
            "R": self.grid.rmax,
            "grid_size": self.grid.m,
            "sample_size": self.sample_size,
            "seed": self.seed,
        }


class PoissonNullTables:
    """Shared Monte Carlo tables for the planar Poisson null on one grid.

    One standard-normal reservoir is drawn per seed and reused for every
    intensity: the estimated-intensity sup draws scale exactly as ``1/rho``
    (so a single table at rho = 1 serves all estimates), while the
    known-intensity covariance splits into the rho = 1 factor scaled by
    ``1/rho`` plus an independent rank-one part scaled by ``1/sqrt(rho)``,
    which costs only an elementwise pass per distinct estimate.
    """

    def __init__(self, grid: RadiusGrid, sample_size: int, seed: int):
        if sample_size < MIN_SAMPLE:
            raise ValueError(f"sample size must be >= {MIN_SAMPLE}")
        self.grid = grid
        self.sample_size = int(sample_size)
        self.seed = int(seed)
        r = grid.values
        base = 2.0 * pi * np.minimum.outer(r, r) ** 2
        factor = cholesky_with_jitter(base)
        normals = normal_reservoir(self.seed, self.sample_size, grid.m)
        # Signed rho=1 estimated-covariance paths plus one extra normal per
        # draw for the rank-one known-intensity component 2 pi r^2 / sqrt(rho).
        self._signed = normals @ factor.T
        self._xi = stream(self.seed, "supnorm-xi").standard_normal(self.sample_size)
        self._rank_one = 2.0 * pi * r**2
        self._std_estimated = np.sort(np.abs(self._signed).max(axis=1))
        self._known_draws_cache: dict[float, np.ndarray] = {}

    def estimated_draws(self, rho: float) -> np.ndarray:
        """Sorted sup draws under the estimated-intensity covariance at ``rho``."""
        return self._std_estimated / rho

    def known_draws(self, rho: float) -> np.ndarray:
        """Sorted sup draws under the known-intensity covariance at ``rho``.

        Cached per intensity: within a study the estimate takes one value per
        observed point count, so the cache stays small.
        """
        if rho not in self._known_draws_cache:
            paths = self._signed / rho + np.outer(self._xi, self._rank_one) / sqrt(rho)
            self._known_draws_cache[rho] = np.sort(np.abs(paths).max(axis=1))
        return self._known_draws_cache[rho]

    @staticmethod
    def _quantile(draws: np.ndarray, alpha: float) -> float:
        # alpha = 1 (always reject) is allowed in study configurations
        k = ceil((1.0 - alpha) * len(draws))
        return float(draws[k - 1]) if k > 0 else 0.0

    def estimated_critical(self, alpha: float, rho: float) -> float:
        # Exact 1/rho scaling of the standard table.
        return self._quantile(self._std_estimated, alpha) / rho

    def known_critical(self, alpha: float, rho: float) -> float:
        return self._quantile(self.known_draws(rho), alpha)


def ks_statistic(pattern: PointPattern, model, grid: RadiusGrid) -> float:
    """``sqrt(n)`` times the grid sup of ``|Khat(r) - K_poisson(r)|``."""
    khat = k_hat(pattern, model, grid)
    null = k_poisson(grid.values, pattern.window.dim)
    return sqrt(pattern.window.volume) * float(np.abs(khat.values - null).max())


def gof_test(
    pattern: PointPattern,
    config: GofConfig,
    tables: PoissonNullTables | None = None,
) -> GofResult:
    """Run the Kolmogorov-Smirnov test of the homogeneous Poisson null.

    Passing ``tables`` reuses a previously built Monte Carlo table (the study
    harness shares one across replicates); it must match the config's grid,
    sample size and seed.
    """
    if pattern.window.dim != 2:
        raise ValueError("closed form available only in the plane")
    grid = config.grid()

    beta_hat = None
    if len(pattern) > 0:
        beta_hat = estimate_constant(pattern)
    elif config.rho is not None and config.mode == "known":
        beta_hat = config.rho
    else:
        raise ValueError("zero estimated intensity: empty pattern")

    if config.mode == "known" and config.rho is not None:
        stat_intensity = config.rho
    else:
        stat_intensity = beta_hat

    statistic = ks_statistic(pattern, ConstantIntensity(stat_intensity), grid)

    if tables is None:
        tables = PoissonNullTables(grid, config.sample_size, config.seed)
    elif (
        tables.grid.m != grid.m
        or tables.grid.rmax != grid.rmax
        or tables.sample_size != config.sample_size
        or tables.seed != config.seed
    ):
        raise ValueError("tables were built for a different null configuration")

    if config.mode == "estimated":
        draws = tables.estimated_draws(beta_hat)
        crit = tables.estimated_critical(config.alpha, beta_hat)
    else:
        draws = tables.known_draws(beta_hat)
        crit = tables._quantile(draws, config.alpha)

    exceed = len(draws) - int(np.searchsorted(draws, statistic, side="left"))
    pval = (1 + exceed) / (len(draws) + 1)

    return GofResult(
        statistic=float(statistic),
        critical_value=float(crit),
        p_value=float(pval),
        reject=bool(statistic > crit),
        beta_hat=float(beta_hat),
        mode=config.mode,
        alpha=config.alpha,
        grid=grid,
        sample_size=config.sample_size,
        seed=config.seed,
    )
