"""Seeded point-process generators.

All generators are pure functions of ``(params, window, seed)``: the sequence
of draws from the underlying stream is fixed, so the same seed gives a
byte-identical pattern. ``seed`` may be an integer or an already-derived
:class:`numpy.random.Generator` (the study harness passes per-replicate
streams).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointPattern, Window
from .seeds import stream

__all__ = [
    "MaternParams",
    "simulate_poisson",
    "simulate_poisson_inhom",
    "simulate_matern",
]


@dataclass(frozen=True)
class MaternParams:
    """Matern cluster process parameters.

    kappa: parent intensity (parents per unit volume), mu: mean offspring per
    parent, rdisp: radius of the uniform dispersal ball.
    """

    kappa: float
    mu: float
    rdisp: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.mu > 0 and self.rdisp > 0):
            raise ValueError("Matern parameters must be strictly positive")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else stream(seed)


def simulate_poisson(rho: float, window: Window, seed) -> PointPattern:
    """Homogeneous Poisson pattern with intensity ``rho`` on ``window``."""
    if not rho > 0:
        raise ValueError("intensity must be positive")
    rng = _rng(seed)
    n = rng.poisson(rho * window.volume)
    half = window.side / 2.0
    pts = rng.uniform(-half, half, size=(n, window.dim))
    return PointPattern(window, pts)


def simulate_poisson_inhom(model, rho_max: float, window: Window, seed) -> PointPattern:
    """Inhomogeneous Poisson pattern by thinning a dominating Poisson(rho_max).

    ``model`` must expose ``value(points) -> (n,) array`` (an intensity model
    from :mod:`inhomk.intensity`). Retention probability at ``u`` is
    ``model.value(u) / rho_max``; if the model exceeds the bound at any
    evaluated location this is an error.
    """
    if not rho_max > 0:
        raise ValueError("dominating intensity must be positive")
    rng = _rng(seed)
    n = rng.poisson(rho_max * window.volume)
    half = window.side / 2.0
    pts = rng.uniform(-half, half, size=(n, window.dim))
    if n == 0:
        return PointPattern(window, pts)
    vals = np.asarray(model.value(pts), dtype=float)
    if np.any(vals > rho_max):
        raise ValueError("dominating bound violated")
    keep = rng.uniform(size=n) < vals / rho_max
    return PointPattern(window, pts[keep])


def _uniform_in_ball(rng: np.random.Generator, count: int, dim: int, radius: float):
    # Rejection from the bounding cube: exact and dimension-generic. The batch
    # policy is a fixed function of the deficit, so the draw sequence (and
    # hence the output) is deterministic for a given stream.
    out = np.empty((count, dim))
    got = 0
    while got < count:
        need = count - got
        batch = max(64, 2 * need)
        cand = rng.uniform(-radius, radius, size=(batch, dim))
        ok = cand[np.einsum("ij,ij->i", cand, cand) <= radius * radius]
        take = min(len(ok), need)
        out[got : got + take] = ok[:take]
        got += take
    return out


def simulate_matern(params: MaternParams, window: Window, seed) -> PointPattern:
    """Matern cluster pattern on ``window``.

    Parents are Poisson(kappa) on the window dilated by ``rdisp`` in every
    coordinate; any parent outside the dilated region contributes no offspring
    inside the window, so the restriction is exact. Each parent receives a
    Poisson(mu) number of offspring uniform in the ball of radius ``rdisp``
    around it; only offspring falling inside the window are returned.
    """
    rng = _rng(seed)
    d = window.dim
    dilated_side = window.side + 2.0 * params.rdisp
    n_parents = rng.poisson(params.kappa * dilated_side**d)
    parents = rng.uniform(-dilated_side / 2.0, dilated_side / 2.0, size=(n_parents, d))
    n_off = rng.poisson(params.mu, size=n_parents) if n_parents else np.empty(0, int)
    total = int(n_off.sum())
    offsets = _uniform_in_ball(rng, total, d, params.rdisp)
    children = np.repeat(parents, n_off, axis=0) + offsets
    half = window.side / 2.0
    inside = np.all(np.abs(children) <= half, axis=1)
    return PointPattern(window, children[inside])
