"""Asymptotic covariance machinery for K-function estimators.

Blocks of the limiting covariance of the joint vector (intensity parameter
estimate, K estimates on a radius grid):

* closed forms for the planar Poisson process, for both known and estimated
  intensity;
* general constant-intensity blocks as truncated integrals of the normalized
  joint intensities, evaluated by deterministic low-discrepancy quadrature;
* the composed limit covariance combining intensity-estimation and
  K-estimation fluctuations;
* the congruence ``A Sigma A^T`` for joint confidence statements;
* log-linear-model blocks as finite-window spatial averages times decay
  integrals.

Quadrature layout: every bounded integration variable is stratified over the
grid annuli (one low-discrepancy block per annulus, volume-uniform radius),
so cumulative sums over annuli give all grid radii at once and models with
constant normalized intensities are integrated exactly. Unbounded variables
are truncated to a ball of radius ``r_trunc``; the fast-decay assumption on
the joint intensities is what makes the truncation harmless. Each block is
reported together with the difference between the full-sample and half-sample
estimates, a practical quadrature error gauge.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import gamma as _gamma
from math import pi
from typing import Callable

import numpy as np

from .intensity import CovariateField, LogLinearIntensity, cl_sensitivity
from .kstat import Curve, RadiusGrid
from .qmc import ball_points_weighted, ball_shell_points, direction_dims

__all__ = [
    "ProductDensityModel",
    "POISSON_DENSITIES",
    "synthetic_densities",
    "QuadratureConfig",
    "CovarianceBlocks",
    "LimitCovariance",
    "poisson_cov",
    "poisson_cov_matrix",
    "poisson_blocks",
    "sigma_blocks_constant",
    "cov_estimated_constant",
    "compose_lim_cov",
    "joint_cov",
    "loglinear_sigma_blocks",
    "h_limit_constant",
    "h_limit_loglinear",
]

# Disjoint stratum-id regions per integral, so no two integrals share
# low-discrepancy points.
_REGION_K = 0
_REGION_S11 = 1
_REGION_S2 = 2
_REGION_C3 = 3
_REGION_C4 = 4
_REGION_LL_S11 = 5
_REGION_LL_C2 = 6
_REGION_WIDTH = 4096

# Reported quadrature errors are the accumulated absolute full-vs-half-sample
# differences times this factor; the margin is what makes "doubling the budget
# moves every entry by less than the reported error" hold in practice.
_ERROR_SAFETY = 3.0


def _stratum(region: int, local: int) -> int:
    if local >= _REGION_WIDTH:
        raise ValueError("grid too large for the stratum layout")
    return region * _REGION_WIDTH + local


def _ball_volume(dim: int, r) -> float | np.ndarray:
    return pi ** (dim / 2.0) / _gamma(dim / 2.0 + 1.0) * np.asarray(r, float) ** dim


@dataclass(frozen=True)
class ProductDensityModel:
    """Translation-invariant normalized joint intensities of orders 2..4.

    ``g(h)`` is the pair correlation at displacement ``h``; ``g3(x, y)`` and
    ``g4(x, y, z)`` are the third and fourth order functions anchored at the
    origin. All callables are vectorized over the leading axis and must be
    nonnegative and bounded. The Poisson instance has all three identically 1.
    """

    g: Callable[[np.ndarray], np.ndarray]
    g3: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g4: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _ones(*arrays) -> np.ndarray:
    return np.ones(len(arrays[0]))


POISSON_DENSITIES = ProductDensityModel(g=_ones, g3=_ones, g4=_ones)


def synthetic_densities(
    g_scale: float | None = None,
    g3_scale: float | None = None,
    g4_scale: float | None = None,
) -> ProductDensityModel:
    """Test kernels with exponentially decaying excess correlation.

    Each non-None scale adds ``exp(-|free variable| / scale)`` to the
    corresponding order: ``g - 1``, ``g3 - g`` and ``g4 - g g`` then have
    separable closed-form integrals against the indicator supports.
    """

    def g(h):
        out = np.ones(len(h))
        if g_scale is not None:
            out = out + np.exp(-np.linalg.norm(h, axis=1) / g_scale)
        return out

    def g3(x, y):
        out = g(x)
        if g3_scale is not None:
            out = out + np.exp(-np.linalg.norm(y, axis=1) / g3_scale)
        return out

    def g4(x, y, z):
        out = g(x) * g(y - z)
        if g4_scale is not None:
            out = out + np.exp(-np.linalg.norm(z, axis=1) / g4_scale)
        return out

    return ProductDensityModel(g=g, g3=g3, g4=g4)


@dataclass(frozen=True)
class QuadratureConfig:
    """Sample budget per block integral and truncation radius.

    The budget is split evenly across strata (grid annuli or annulus pairs).
    ``r_trunc`` defaults to five grid radii; integrands whose decay length is
    comparable to or larger than the grid need an explicit, larger value.
    """

    samples: int = 2**16
    r_trunc: float | None = None

    def __post_init__(self):
        if self.samples < 64:
            raise ValueError("sample budget too small")
        if self.r_trunc is not None and not self.r_trunc > 0:
            raise ValueError("truncation radius must be positive")

    def resolve_trunc(self, grid: RadiusGrid) -> float:
        return self.r_trunc if self.r_trunc is not None else 5.0 * grid.rmax

    def per_stratum(self, n_strata: int) -> int:
        n = max(32, self.samples // n_strata)
        return n + (n % 2)


@dataclass(frozen=True)
class LimitCovariance:
    """Limit covariance of the (scaled) K estimator on a grid."""

    grid: RadiusGrid
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        m = self.grid.m
        if mat.shape != (m, m):
            raise ValueError(f"matrix must be {m}x{m}")
        if not np.allclose(mat, mat.T, rtol=1e-8, atol=1e-12 * max(1.0, np.abs(mat).max())):
            raise ValueError("limit covariance must be symmetric")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)


@dataclass(frozen=True)
class CovarianceBlocks:
    """Limiting covariance blocks on a radius grid.

    For the constant model the blocks are in estimator coordinates:
    ``sigma11`` is ``lim n Var(beta_hat)``, row ``r`` of ``sigma2`` is
    ``lim n Cov(beta_hat, Khat(r))`` and ``c`` is the known-intensity K
    covariance. For the log-linear model the blocks are in score coordinates
    (the variance of the normalized composite likelihood score) and carry the
    ``sensitivity`` matrix; :meth:`beta_coords` converts. ``k_curve`` is the
    model K-function on the grid, computed by the same quadrature.
    """

    grid: RadiusGrid
    sigma11: np.ndarray
    sigma2: np.ndarray
    c: np.ndarray
    k_curve: np.ndarray
    sigma11_err: np.ndarray | None = None
    sigma2_err: np.ndarray | None = None
    c_err: np.ndarray | None = None
    sensitivity: np.ndarray | None = None
    zbar: np.ndarray | None = None

    def __post_init__(self):
        m = self.grid.m
        s11 = np.atleast_2d(np.asarray(self.sigma11, dtype=float))
        s2 = np.asarray(self.sigma2, dtype=float)
        if s2.ndim == 1:
            s2 = s2[:, None]
        c = np.asarray(self.c, dtype=float)
        k = np.asarray(self.k_curve, dtype=float)
        p = s11.shape[0]
        if s11.shape != (p, p) or s2.shape != (m, p) or c.shape != (m, m) or k.shape != (m,):
            raise ValueError("inconsistent block shapes")
        for arr in (s11, s2, c, k):
            arr.flags.writeable = False
        object.__setattr__(self, "sigma11", s11)
        object.__setattr__(self, "sigma2", s2)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "k_curve", k)

    @property
    def p(self) -> int:
        return self.sigma11.shape[0]

    def beta_coords(self) -> "CovarianceBlocks":
        """Blocks for the parameter estimate itself.

        Applies the inverse sensitivity sandwich that maps score fluctuations
        to parameter fluctuations; a no-op when the blocks are already in
        estimator coordinates. Near-singular sensitivities are a modelling
        problem (the limit may not be identified), surfaced as a warning.
        """
        if self.sensitivity is None:
            return self
        if np.linalg.cond(self.sensitivity) > 1e12:
            import warnings

            warnings.warn(
                "sensitivity matrix is nearly singular; parameter-coordinate "
                "blocks are unreliable",
                RuntimeWarning,
                stacklevel=2,
            )
        sinv = np.linalg.inv(self.sensitivity)
        return replace(
            self,
            sigma11=sinv @ self.sigma11 @ sinv.T,
            sigma2=self.sigma2 @ sinv.T,
            sigma11_err=None,
            sigma2_err=None,
            sensitivity=None,
        )


def poisson_cov(s: float, t: float, rho: float, mode: str, dim: int = 2) -> float:
    """Closed-form limit covariance of the planar Poisson K estimator.

    ``mode='known'``: ``2 pi min(s,t)^2 / rho^2 + 4 pi^2 s^2 t^2 / rho``;
    ``mode='estimated'`` keeps only the first term. Only the planar case has
    this closed form.
    """
    if dim != 2:
        raise ValueError("closed form available only in the plane")
    if s < 0 or t < 0:
        raise ValueError("radii must be nonnegative")
    if not rho > 0:
        raise ValueError("intensity must be positive")
    base = 2.0 * pi * min(s, t) ** 2 / rho**2
    if mode == "estimated":
        return base
    if mode == "known":
        return base + 4.0 * pi**2 * s**2 * t**2 / rho
    raise ValueError("mode must be 'known' or 'estimated'")


def poisson_cov_matrix(grid: RadiusGrid, rho: float, mode: str) -> LimitCovariance:
    """`poisson_cov` evaluated on the full grid."""
    r = grid.values
    rmin = np.minimum.outer(r, r)
    mat = 2.0 * pi * rmin**2 / rho**2
    if mode == "known":
        mat = mat + 4.0 * pi**2 * np.outer(r**2, r**2) / rho
    elif mode != "estimated":
        raise ValueError("mode must be 'known' or 'estimated'")
    return LimitCovariance(grid, mat)


def poisson_blocks(beta: float, grid: RadiusGrid, dim: int = 2) -> CovarianceBlocks:
    """Exact covariance blocks for the Poisson model (any dimension).

    With all normalized joint intensities equal to one the block integrals
    collapse to ball volumes: ``sigma11 = beta``, ``sigma2(r) = 2 K(r)`` and
    ``c`` is the two-term known-intensity expression.
    """
    if not beta > 0:
        raise ValueError("intensity must be positive")
    k = np.asarray(_ball_volume(dim, grid.values))
    kmin = np.minimum.outer(k, k)
    c = 4.0 * np.outer(k, k) / beta + 2.0 * kmin / beta**2
    return CovarianceBlocks(
        grid=grid,
        sigma11=np.array([[beta]]),
        sigma2=(2.0 * k)[:, None],
        c=c,
        k_curve=k,
    )


# ---------------------------------------------------------------------------
# Quadrature internals
# ---------------------------------------------------------------------------


def _annulus_edges(grid: RadiusGrid) -> np.ndarray:
    return np.concatenate(([0.0], grid.values))


def _full_half(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # values: (n, ...) sample evaluations; nested half-sample reuses the first n/2
    n = len(values)
    return values.mean(axis=0), values[: n // 2].mean(axis=0)


def _annulus_integrals(grid, dim, n_per, region, integrand):
    """Per-annulus integrals of a function of the annulus variable.

    ``integrand(x, stratum, n)`` must return per-sample values; sampling of
    any additional joint variables happens inside the integrand using the same
    stratum and sample count.
    """
    edges = _annulus_edges(grid)
    shell_vol = np.diff(_ball_volume(dim, edges))
    full_parts, half_parts = [], []
    for l in range(grid.m):
        x = ball_shell_points(n_per, dim, edges[l], edges[l + 1], _stratum(region, l))
        vals = integrand(x, _stratum(region, l), n_per)
        f, h = _full_half(vals)
        full_parts.append(shell_vol[l] * f)
        half_parts.append(shell_vol[l] * h)
    return np.array(full_parts), np.array(half_parts)


def _tail_points(n, dim, r_trunc, stratum, dim_offset):
    # Uniform in radius with volume-element weights: mean(f * w) estimates the
    # ball integral and resolves decaying integrands near the origin.
    return ball_points_weighted(n, dim, r_trunc, stratum, dim_offset=dim_offset)


def _tail_integral(f, dim, r_trunc, n, region):
    """Integral of ``f`` over the truncated ball; returns (full, half)."""
    v, w = _tail_points(n, dim, r_trunc, _stratum(region, 0), 0)
    return _full_half(np.asarray(f(v), dtype=float) * w)


def _pair_matrix_integrals(grid, dim, n_per, region, pair_values):
    """Per-annulus-pair integrals, symmetrized over the pair order.

    ``pair_values(x, y, stratum, n)`` returns per-sample values for the two
    bounded variables; the result matrices hold the integral over annulus
    l times annulus l' in entry (l, l').
    """
    edges = _annulus_edges(grid)
    shell_vol = np.diff(_ball_volume(dim, edges))
    m = grid.m
    vdims = 1 + direction_dims(dim)
    full = np.zeros((m, m))
    half = np.zeros((m, m))
    for l in range(m):
        for lp in range(l, m):
            sid = _stratum(region, l * m + lp)
            x = ball_shell_points(n_per, dim, edges[l], edges[l + 1], sid)
            y = ball_shell_points(
                n_per, dim, edges[lp], edges[lp + 1], sid, dim_offset=vdims
            )
            f, h = _full_half(np.asarray(pair_values(x, y, sid, n_per), dtype=float))
            w = shell_vol[l] * shell_vol[lp]
            full[l, lp] = full[lp, l] = w * f
            half[l, lp] = half[lp, l] = w * h
    return full, half


def sigma_blocks_constant(
    model: ProductDensityModel,
    beta: float,
    grid: RadiusGrid,
    quad: QuadratureConfig | None = None,
    dim: int = 2,
) -> CovarianceBlocks:
    """Constant-intensity covariance blocks by low-discrepancy quadrature.

    Evaluates, over the truncated domains, the Campbell-formula limits: the
    estimator variance ``beta^2 int(g-1) + beta``, the cross covariance
    ``beta int int (g3-g) 1{|x|<=r} + 2K(r)`` and the three-term K covariance.
    ``K(r)`` itself is the integral of ``g`` over the r-ball with the same
    scheme.
    """
    if not beta > 0:
        raise ValueError("intensity must be positive")
    quad = quad or QuadratureConfig()
    r_trunc = quad.resolve_trunc(grid)
    vdims = 1 + direction_dims(dim)

    # K(r) = int_{B_r} g, cumulated over annuli.
    n_k = quad.per_stratum(grid.m)
    k_parts, k_parts_half = _annulus_integrals(
        grid, dim, n_k, _REGION_K, lambda x, s, n: np.asarray(model.g(x), float)
    )
    k_curve = np.cumsum(k_parts)

    # sigma11 = beta^2 int (g - 1) + beta.
    gm1_full, gm1_half = _tail_integral(
        lambda v: np.asarray(model.g(v), float) - 1.0,
        dim, r_trunc, quad.per_stratum(1), _REGION_S11,
    )
    sigma11 = np.array([[beta**2 * gm1_full + beta]])
    sigma11_err = _ERROR_SAFETY * np.array([[abs(beta**2 * (gm1_full - gm1_half))]])

    # sigma2(r) = beta * int_{B_r} dx int dy (g3(x,y) - g(x)) + 2 K(r).
    def s2_integrand(x, stratum, n):
        y, w = _tail_points(n, dim, r_trunc, stratum, vdims)
        return w * (
            np.asarray(model.g3(x, y), float) - np.asarray(model.g(x), float)
        )

    n_s2 = quad.per_stratum(grid.m)
    d_parts, d_parts_half = _annulus_integrals(grid, dim, n_s2, _REGION_S2, s2_integrand)
    decay2 = np.cumsum(d_parts)
    k_part_err = np.cumsum(np.abs(k_parts - k_parts_half))
    d_part_err = np.cumsum(np.abs(d_parts - d_parts_half))
    sigma2 = (beta * decay2 + 2.0 * k_curve)[:, None]
    sigma2_err = _ERROR_SAFETY * (beta * d_part_err + 2.0 * k_part_err)[:, None]

    # c(r1, r2): fourth-order term + (4/beta) third-order term + (2/beta^2) K(min).
    n_pair = quad.per_stratum(grid.m * (grid.m + 1) // 2)

    def g4_values(x, u, stratum, n):
        z, w = _tail_points(n, dim, r_trunc, stratum, 2 * vdims)
        return w * (
            np.asarray(model.g4(x, u + z, z), float)
            - np.asarray(model.g(x), float) * np.asarray(model.g(u), float)
        )

    t1, t1_half = _pair_matrix_integrals(grid, dim, n_pair, _REGION_C4, g4_values)
    t2, t2_half = _pair_matrix_integrals(
        grid, dim, n_pair, _REGION_C3,
        lambda x, y, s, n: np.asarray(model.g3(x, y), float),
    )
    t1_cum = t1.cumsum(axis=0).cumsum(axis=1)
    t2_cum = t2.cumsum(axis=0).cumsum(axis=1)
    idx = np.arange(grid.m)
    minix = np.minimum.outer(idx, idx)
    kmin = k_curve[minix]
    c = t1_cum + 4.0 / beta * t2_cum + 2.0 / beta**2 * kmin
    c = 0.5 * (c + c.T)
    c_err = _ERROR_SAFETY * (
        np.abs(t1 - t1_half).cumsum(axis=0).cumsum(axis=1)
        + 4.0 / beta * np.abs(t2 - t2_half).cumsum(axis=0).cumsum(axis=1)
        + 2.0 / beta**2 * k_part_err[minix]
    )

    return CovarianceBlocks(
        grid=grid,
        sigma11=sigma11,
        sigma2=sigma2,
        c=c,
        k_curve=k_curve,
        sigma11_err=sigma11_err,
        sigma2_err=sigma2_err,
        c_err=c_err,
    )


def cov_estimated_constant(blocks: CovarianceBlocks, beta: float) -> LimitCovariance:
    """Estimated-intensity K covariance from constant-model blocks.

    The correction terms of the estimated-intensity formula are exact
    recombinations of the block integrals: the third-order decay integral is
    ``(sigma2(r) - 2K(r)) / beta`` and ``int(g-1)`` is
    ``(sigma11 - beta) / beta^2``, so no further quadrature is involved.
    """
    if blocks.sensitivity is not None:
        raise ValueError("expected constant-model blocks")
    if blocks.p != 1:
        raise ValueError("constant-model blocks must have p = 1")
    k = blocks.k_curve
    s2 = blocks.sigma2[:, 0]
    decay2 = s2 - 2.0 * k
    gm1 = (blocks.sigma11[0, 0] - beta) / beta**2
    mat = (
        blocks.c
        - (2.0 / beta) * (np.outer(k, decay2) + np.outer(decay2, k))
        + 4.0 * np.outer(k, k) * (gm1 - 1.0 / beta)
    )
    return LimitCovariance(blocks.grid, mat)


def compose_lim_cov(h, blocks: CovarianceBlocks) -> LimitCovariance:
    """Limit covariance of the plug-in K estimator.

    ``c~(s,t) = H(s) Sigma11 H(t)' + H(s) Sigma2,t + H(t) Sigma2,s + c(s,t)``
    where ``h`` holds the rows ``H(r)`` for each grid radius (a Curve of
    p-vectors or an ``(m, p)`` array). Score-coordinate blocks are converted
    to estimator coordinates first.
    """
    blocks = blocks.beta_coords()
    hmat = np.asarray(h.values if isinstance(h, Curve) else h, dtype=float)
    if hmat.ndim == 1:
        hmat = hmat[:, None]
    if hmat.shape != (blocks.grid.m, blocks.p):
        raise ValueError(
            f"H must be ({blocks.grid.m}, {blocks.p}), got {hmat.shape}"
        )
    cross = hmat @ blocks.sigma2.T
    mat = hmat @ blocks.sigma11 @ hmat.T + cross + cross.T + blocks.c
    return LimitCovariance(blocks.grid, mat)


def joint_cov(h_rows: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Covariance ``A Sigma A'`` of the joint (parameter, K) limit.

    ``A = [[I_p, 0], [H, I_k]]`` with ``H = h_rows`` a ``(k, p)`` matrix.
    Symmetric, and positive semidefinite whenever ``sigma`` is (congruence).
    """
    h_rows = np.atleast_2d(np.asarray(h_rows, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    k, p = h_rows.shape
    if sigma.shape != (p + k, p + k):
        raise ValueError(f"sigma must be ({p + k}, {p + k}), got {sigma.shape}")
    if not np.allclose(sigma, sigma.T, rtol=1e-8, atol=1e-12):
        raise ValueError("sigma must be symmetric")
    a = np.eye(p + k)
    a[p:, :p] = h_rows
    return a @ sigma @ a.T


def h_limit_constant(blocks: CovarianceBlocks, beta: float) -> np.ndarray:
    """Limit H rows for the constant model: ``-2 K(r) / beta``."""
    return (-2.0 / beta) * blocks.k_curve[:, None]


def h_limit_loglinear(blocks: CovarianceBlocks) -> np.ndarray:
    """Limit H rows for the log-linear model: ``-2 K(r) zbar``."""
    if blocks.zbar is None:
        raise ValueError("blocks do not carry a covariate average")
    return -2.0 * np.outer(blocks.k_curve, blocks.zbar)


# ---------------------------------------------------------------------------
# Log-linear blocks (finite-window spatial averages x decay integrals)
# ---------------------------------------------------------------------------


def _shifted_cell_pieces(field: CovariateField, v: np.ndarray):
    """Decompose ``W and (W + v)`` into boxes constant for both u and u - v.

    Returns piece volumes and the flat raster cell indices of ``u`` and
    ``u - v`` on each piece; empty arrays when the shifted windows do not
    overlap. Supports the exact evaluation of spatial averages of products of
    raster functions at lag ``v``.
    """
    window = field.window
    half = window.side / 2.0
    lens, idx_u, idx_s = [], [], []
    for axis, res in enumerate(field.resolution):
        lo = -half + max(v[axis], 0.0)
        hi = half + min(v[axis], 0.0)
        if hi <= lo:
            e = np.empty(0)
            return e, e.astype(int), e.astype(int)
        cell = window.side / res
        edges = -half + cell * np.arange(res + 1)
        cuts = np.unique(
            np.concatenate([
                np.clip(edges, lo, hi),
                np.clip(edges + v[axis], lo, hi),
            ])
        )
        mids = 0.5 * (cuts[:-1] + cuts[1:])
        keep = cuts[1:] > cuts[:-1]
        lens.append((cuts[1:] - cuts[:-1])[keep])
        ku = np.clip(np.floor((mids[keep] + half) / cell).astype(int), 0, res - 1)
        ks = np.clip(
            np.floor((mids[keep] - v[axis] + half) / cell).astype(int), 0, res - 1
        )
        idx_u.append(ku)
        idx_s.append(ks)

    vol = lens[0]
    cu, cs = idx_u[0], idx_s[0]
    for axis in range(1, window.dim):
        res = field.resolution[axis]
        vol = np.multiply.outer(vol, lens[axis]).ravel()
        cu = np.add.outer(cu * res, idx_u[axis]).ravel()
        cs = np.add.outer(cs * res, idx_s[axis]).ravel()
    return vol, cu, cs


def _lag_average(q_u: np.ndarray, q_s: np.ndarray, field: CovariateField, v) -> np.ndarray:
    """Average of ``q_u(u) q_s(u - v)'`` over the overlap window, exactly.

    ``q_u`` and ``q_s`` are per-cell vectors ``(ncells, a)`` and
    ``(ncells, b)``; returns an ``(a, b)`` matrix (zeros when the windows do
    not overlap).
    """
    vol, cu, cs = _shifted_cell_pieces(field, np.asarray(v, float))
    if len(vol) == 0:
        return np.zeros((q_u.shape[1], q_s.shape[1]))
    total = vol.sum()
    return (q_u[cu] * vol[:, None]).T @ q_s[cs] / total


def loglinear_sigma_blocks(
    field: CovariateField,
    beta,
    model: ProductDensityModel,
    grid: RadiusGrid,
    quad: QuadratureConfig | None = None,
) -> CovarianceBlocks:
    """Log-linear-model covariance blocks in score coordinates.

    Ergodic limits are replaced by finite-window spatial averages over the
    raster: the sensitivity and the lag averages of ``z z' rho rho`` (score
    variance), ``z rho`` and ``1/rho`` (cross and K blocks) are exact raster
    sums; the decay integrals over the normalized joint intensities use the
    same stratified quadrature as the constant model. The returned blocks
    carry the sensitivity matrix; use :meth:`CovarianceBlocks.beta_coords` for
    estimator coordinates and :func:`h_limit_loglinear` for the matching H.
    """
    quad = quad or QuadratureConfig()
    dim = field.window.dim
    r_trunc = quad.resolve_trunc(grid)
    vdims = 1 + direction_dims(dim)
    intensity = LogLinearIntensity(np.asarray(beta, float), field)

    z_cells = field.flat()
    rho_cells = intensity.cell_values()
    sens = cl_sensitivity(intensity)
    zbar = z_cells.mean(axis=0)
    z_rho_bar = (z_cells * rho_cells[:, None]).mean(axis=0)
    inv_rho_bar = float((1.0 / rho_cells).mean())
    q_zrho = z_cells * rho_cells[:, None]
    q_invrho = (1.0 / rho_cells)[:, None]

    # K(r) and the third-order decay integral, same scheme as the constant model.
    n_k = quad.per_stratum(grid.m)
    k_parts, k_half_parts = _annulus_integrals(
        grid, dim, n_k, _REGION_K, lambda x, s, n: np.asarray(model.g(x), float)
    )
    k_curve = np.cumsum(k_parts)

    def s2_integrand(x, stratum, n):
        y, w = _tail_points(n, dim, r_trunc, stratum, vdims)
        return w * (
            np.asarray(model.g3(x, y), float) - np.asarray(model.g(x), float)
        )

    d_parts, d_half_parts = _annulus_integrals(
        grid, dim, quad.per_stratum(grid.m), _REGION_S2, s2_integrand
    )
    decay2 = np.cumsum(d_parts)
    d_part_err = np.cumsum(np.abs(d_parts - d_half_parts))
    k_part_err = np.cumsum(np.abs(k_parts - k_half_parts))

    # Score variance: sensitivity plus the lag integral of (g-1) against the
    # spatial average of z z' rho rho.
    n_tail = quad.per_stratum(1)
    v_pts, v_w = _tail_points(n_tail, dim, r_trunc, _stratum(_REGION_LL_S11, 0), 0)
    g_vals = (np.asarray(model.g(v_pts), float) - 1.0) * v_w
    lagavg = np.array([_lag_average(q_zrho, q_zrho, field, v) for v in v_pts])
    weighted = g_vals[:, None, None] * lagavg
    s11_int, s11_int_half = _full_half(weighted)
    sigma11 = sens + s11_int
    sigma11 = 0.5 * (sigma11 + sigma11.T)
    sigma11_err = _ERROR_SAFETY * np.abs(s11_int - s11_int_half)

    # Cross block: decay integral times avg(z rho) plus 2 K(r) zbar.
    sigma2 = np.outer(decay2, z_rho_bar) + 2.0 * np.outer(k_curve, zbar)
    sigma2_err = _ERROR_SAFETY * (
        np.outer(d_part_err, np.abs(z_rho_bar))
        + 2.0 * np.outer(k_part_err, np.abs(zbar))
    )

    # K covariance: fourth-order term (no intensity), third-order term times
    # avg(1/rho), and the lag average of g(w)/(rho(u) rho(u-w)).
    n_pair = quad.per_stratum(grid.m * (grid.m + 1) // 2)

    def g4_values(x, u, stratum, n):
        z, w = _tail_points(n, dim, r_trunc, stratum, 2 * vdims)
        return w * (
            np.asarray(model.g4(x, u + z, z), float)
            - np.asarray(model.g(x), float) * np.asarray(model.g(u), float)
        )

    t1, t1_half = _pair_matrix_integrals(grid, dim, n_pair, _REGION_C4, g4_values)
    t2, t2_half = _pair_matrix_integrals(
        grid, dim, n_pair, _REGION_C3,
        lambda x, y, s, n: np.asarray(model.g3(x, y), float),
    )

    def weighted_g(x, stratum, n):
        g = np.asarray(model.g(x), float)
        phis = np.array(
            [_lag_average(q_invrho, q_invrho, field, w)[0, 0] for w in x]
        )
        return g * phis

    c3_parts, c3_half_parts = _annulus_integrals(
        grid, dim, quad.per_stratum(grid.m), _REGION_LL_C2, weighted_g
    )
    c3_cum = np.cumsum(c3_parts)
    c3_part_err = np.cumsum(np.abs(c3_parts - c3_half_parts))

    idx = np.arange(grid.m)
    minix = np.minimum.outer(idx, idx)
    t1_cum = t1.cumsum(axis=0).cumsum(axis=1)
    t2_cum = t2.cumsum(axis=0).cumsum(axis=1)
    c = t1_cum + 4.0 * inv_rho_bar * t2_cum + 2.0 * c3_cum[minix]
    c = 0.5 * (c + c.T)
    c_err = _ERROR_SAFETY * (
        np.abs(t1 - t1_half).cumsum(axis=0).cumsum(axis=1)
        + 4.0 * inv_rho_bar * np.abs(t2 - t2_half).cumsum(axis=0).cumsum(axis=1)
        + 2.0 * c3_part_err[minix]
    )

    return CovarianceBlocks(
        grid=grid,
        sigma11=sigma11,
        sigma2=sigma2,
        c=c,
        k_curve=k_curve,
        sigma11_err=sigma11_err,
        sigma2_err=sigma2_err,
        c_err=c_err,
        sensitivity=sens,
        zbar=zbar,
    )
