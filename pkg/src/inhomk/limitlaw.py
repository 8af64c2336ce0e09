"""Monte Carlo law of the sup-norm of the limiting Gaussian process.

Draws of ``max_j |Z(r_j)|`` with ``Z ~ N(0, cov)`` on the grid, via a
Cholesky factor. One standard-normal reservoir per seed is reused against
different covariances, so critical values are directly comparable across
covariances and exact scaling relations of the covariance carry over to the
draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .seeds import stream

__all__ = ["SupSample", "normal_reservoir", "cholesky_with_jitter",
           "simulate_sup", "critical_value", "p_value"]

MIN_SAMPLE = 100
_JITTER_START = 1e-10
_JITTER_MAX = 1e-6


@dataclass(frozen=True)
class SupSample:
    """Sorted Monte Carlo draws of the sup-norm statistic under one covariance."""

    draws: np.ndarray
    cov: np.ndarray
    seed: int

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=float)
        if len(draws) < MIN_SAMPLE:
            raise ValueError(f"need at least {MIN_SAMPLE} draws")
        if np.any(np.diff(draws) < 0):
            raise ValueError("draws must be sorted")
        draws.flags.writeable = False
        object.__setattr__(self, "draws", draws)

    @property
    def size(self) -> int:
        return len(self.draws)


def normal_reservoir(seed: int, count: int, width: int) -> np.ndarray:
    """The ``(count, width)`` standard-normal block attached to a seed."""
    return stream(seed, "supnorm").standard_normal((count, width))


def cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, adding escalating relative jitter if needed.

    Jitter is ``eps * max(diag)`` with eps stepping 1e-10 -> 1e-6 by factors
    of ten; failure at 1e-6 means the matrix is not numerically PSD.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    if not np.allclose(cov, cov.T, rtol=1e-8, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise ValueError("covariance must be symmetric")
    scale = max(float(np.abs(np.diag(cov)).max()), 0.0)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eps = _JITTER_START
    eye = np.eye(len(cov))
    while eps <= _JITTER_MAX:
        try:
            return np.linalg.cholesky(cov + eps * scale * eye)
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise ValueError("covariance not numerically PSD")


def simulate_sup(cov, count: int, seed: int) -> SupSample:
    """Monte Carlo sample of ``max_j |Z(r_j)|`` for ``Z ~ N(0, cov)``.

    ``cov`` is a square matrix or anything exposing ``.matrix`` (a
    LimitCovariance). Deterministic in ``(cov, count, seed)``.
    """
    mat = np.asarray(getattr(cov, "matrix", cov), dtype=float)
    if count < MIN_SAMPLE:
        raise ValueError(f"need at least {MIN_SAMPLE} draws")
    factor = cholesky_with_jitter(mat)
    normals = normal_reservoir(seed, count, len(mat))
    draws = np.abs(normals @ factor.T).max(axis=1)
    draws.sort()
    return SupSample(draws=draws, cov=mat, seed=int(seed))


def critical_value(sample: SupSample, alpha: float) -> float:
    """Upper-alpha critical value: the ceil((1-alpha) M)-th smallest draw."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    k = ceil((1.0 - alpha) * sample.size)
    return float(sample.draws[k - 1])


def p_value(sample: SupSample, statistic: float) -> float:
    """Monte Carlo p-value ``(1 + #{draws >= statistic}) / (M + 1)``."""
    exceed = sample.size - np.searchsorted(sample.draws, statistic, side="left")
    return float((1 + exceed) / (sample.size + 1))
