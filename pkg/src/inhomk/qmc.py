"""Deterministic low-discrepancy sampling for covariance quadrature.

Plain (unscrambled) Halton points with a fixed prime-per-dimension
assignment. Integration domains are balls and annuli: one coordinate maps to
a volume-uniform radius, the remaining coordinates to a direction. Strata are
carved out of the global sequence as index blocks with a fixed stride, so a
larger sample extends a smaller one instead of replacing it.
"""

from __future__ import annotations

from math import gamma

import numpy as np
from scipy.special import ndtri

__all__ = [
    "halton",
    "ball_shell_points",
    "ball_points_weighted",
    "direction_dims",
    "STRATUM_STRIDE",
]

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71)

# Index block reserved per stratum; sample budgets must stay below this.
STRATUM_STRIDE = 2**24


def _radical_inverse(indices: np.ndarray, base: int) -> np.ndarray:
    out = np.zeros(len(indices), dtype=float)
    denom = 1.0
    work = indices.copy()
    while work.any():
        denom *= base
        out += (work % base) / denom
        work //= base
    return out


def halton(count: int, dims: int, start: int = 1, dim_offset: int = 0) -> np.ndarray:
    """``count`` Halton points in [0,1)^dims starting at sequence index ``start``.

    ``dim_offset`` selects which primes are used, so different integrals can
    draw from disjoint coordinate sets of the same global sequence.
    """
    if dim_offset + dims > len(_PRIMES):
        raise ValueError("not enough Halton dimensions configured")
    idx = np.arange(start, start + count, dtype=np.int64)
    cols = [
        _radical_inverse(idx, _PRIMES[dim_offset + k]) for k in range(dims)
    ]
    return np.stack(cols, axis=1)


def direction_dims(dim: int) -> int:
    """Halton coordinates consumed by one direction draw in ``dim`` dimensions."""
    if dim == 1:
        return 1
    if dim == 2:
        return 1
    return dim


def _directions(u: np.ndarray, dim: int) -> np.ndarray:
    if dim == 1:
        return np.where(u[:, 0] < 0.5, -1.0, 1.0)[:, None]
    if dim == 2:
        theta = 2.0 * np.pi * u[:, 0]
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    # Gaussian map then normalize; clip away the endpoints ndtri cannot take.
    g = ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
    norms = np.linalg.norm(g, axis=1)
    norms[norms == 0.0] = 1.0
    return g / norms[:, None]


def ball_shell_points(
    count: int,
    dim: int,
    r_inner: float,
    r_outer: float,
    stratum: int,
    dim_offset: int = 0,
) -> np.ndarray:
    """Low-discrepancy points, volume-uniform on the shell r_inner < |x| <= r_outer.

    ``stratum`` selects the index block of the global sequence; the radius uses
    the first assigned Halton coordinate (the lowest prime, where the
    one-dimensional equidistribution is best) and the direction the rest.
    """
    if count >= STRATUM_STRIDE:
        raise ValueError("sample budget exceeds the per-stratum index block")
    u = halton(count, 1 + direction_dims(dim), start=stratum * STRATUM_STRIDE + 1,
               dim_offset=dim_offset)
    radii = (r_inner**dim + u[:, 0] * (r_outer**dim - r_inner**dim)) ** (1.0 / dim)
    return radii[:, None] * _directions(u[:, 1:], dim)


def ball_points_weighted(
    count: int,
    dim: int,
    radius: float,
    stratum: int,
    dim_offset: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Low-discrepancy points in a ball, uniform in radius, with volume weights.

    The mean of ``f(points) * weights`` estimates the ball integral of ``f``.
    Uniform radial placement resolves integrands that decay away from the
    origin much better than volume-uniform placement, at no cost for flat or
    vanishing integrands (the truncated variables of the covariance blocks
    decay by assumption).
    """
    if count >= STRATUM_STRIDE:
        raise ValueError("sample budget exceeds the per-stratum index block")
    u = halton(count, 1 + direction_dims(dim), start=stratum * STRATUM_STRIDE + 1,
               dim_offset=dim_offset)
    radii = radius * u[:, 0]
    surface = dim * np.pi ** (dim / 2.0) / gamma(dim / 2.0 + 1.0) * radii ** (dim - 1)
    return radii[:, None] * _directions(u[:, 1:], dim), radius * surface
