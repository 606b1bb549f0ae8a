"""Nonparametric intensity as a function of covariates (ratio estimator).

    rho(z) = sum_i K_b(z - C(x_i)) / ∫_W K_b(z - C(u)) du

with ``K_b`` a product Gaussian kernel in covariate space. By default the
ratio is tabulated on a regular node lattice spanning the observed covariate
range: the numerator exactly, the denominator from linear binning of the
cell values; cell values of rho-hat are then read off by multilinear
interpolation. ``exact=True`` evaluates both sums at every cell directly and
serves as the reference for the binned path.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .geom import PointPattern
from .raster import Grid, ScalarField, lookup

__all__ = [
    "MAX_COVARIATES",
    "BANDWIDTH_ADJUST",
    "BIAS_CORRECTION",
    "DegenerateCovariateError",
    "RhoEstimate",
    "default_rho_bandwidths",
    "fit_rho",
]

log = logging.getLogger(__name__)

MAX_COVARIATES = 3
FLOOR_FRACTION = 1e-8
BANDWIDTH_ADJUST = 0.5
BIAS_CORRECTION = False
_NODES = {1: 512, 2: 128, 3: 40}
_SQRT2PI = np.sqrt(2.0 * np.pi)


class DegenerateCovariateError(ValueError):
    """A covariate is constant over the window."""


@dataclass(frozen=True, eq=False)
class RhoEstimate:
    covariates: tuple[ScalarField, ...]
    intensity: ScalarField
    bandwidths: np.ndarray
    n_points: int
    floor_active: bool = False
    nodes: tuple[np.ndarray, ...] = field(default=(), repr=False)
    rho_nodes: np.ndarray | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return len(self.covariates)


def _check_grids(covariates) -> None:
    g0 = covariates[0].grid
    for c in covariates[1:]:
        if not g0.same_geometry(c.grid):
            raise ValueError("covariate grids differ in geometry")


def default_rho_bandwidths(cell_values: np.ndarray, n_points: int, adjust: float | None = None) -> np.ndarray:
    """Normal-scale rule ``adjust * sd_j * n^(-1/(4+m))`` with sds taken over grid cells.

    The ratio estimator attenuates the fitted covariate effect by a factor of
    roughly ``1/(1 + b^2/sd^2)``; the default ``adjust`` of one half keeps
    that bias small at typical pattern sizes.
    """
    m = cell_values.shape[1]
    sd = cell_values.std(axis=0, ddof=1)
    adjust = BANDWIDTH_ADJUST if adjust is None else adjust
    return adjust * sd * max(n_points, 2) ** (-1.0 / (4 + m))


def _gauss(d, b):
    return np.exp(-0.5 * (d / b) ** 2) / (_SQRT2PI * b)


def _linear_weights(values: np.ndarray, nodes: list[np.ndarray]):
    """Corner indices and weights for multilinear binning / interpolation."""
    m = values.shape[1]
    lower, frac = [], []
    for j in range(m):
        z = nodes[j]
        step = z[1] - z[0]
        t = (values[:, j] - z[0]) / step
        i = np.clip(np.floor(t).astype(np.intp), 0, len(z) - 2)
        lower.append(i)
        frac.append(np.clip(t - i, 0.0, 1.0))
    shape = tuple(len(z) for z in nodes)
    corners = []
    for bits in itertools.product((0, 1), repeat=m):
        idx = tuple(lower[j] + bits[j] for j in range(m))
        w = np.ones(values.shape[0])
        for j in range(m):
            w = w * (frac[j] if bits[j] else 1.0 - frac[j])
        corners.append((np.ravel_multi_index(idx, shape), w))
    return corners, shape


def _separable_on_nodes(values: np.ndarray, weights: np.ndarray | None, nodes, bw) -> np.ndarray:
    """``sum_k w_k prod_j K_bj(z_j - v_kj)`` on the node lattice."""
    mats = [_gauss(nodes[j][None, :] - values[:, j : j + 1], bw[j]) for j in range(len(nodes))]
    if weights is not None:
        mats[0] = mats[0] * weights[:, None]
    if len(mats) == 1:
        return mats[0].sum(axis=0)
    if len(mats) == 2:
        return mats[0].T @ mats[1]
    return np.einsum("ka,kb,kc->abc", *mats, optimize=True)


def _binned_density(values: np.ndarray, nodes, bw) -> np.ndarray:
    corners, shape = _linear_weights(values, nodes)
    counts = np.zeros(int(np.prod(shape)))
    for flat, w in corners:
        counts += np.bincount(flat, weights=w, minlength=counts.size)
    counts = counts.reshape(shape)
    out = counts
    for j, z in enumerate(nodes):
        k = _gauss(z[:, None] - z[None, :], bw[j])
        out = np.moveaxis(np.tensordot(k, out, axes=([1], [j])), 0, j)
    return out


def _interpolate(table: np.ndarray, values: np.ndarray, nodes) -> np.ndarray:
    corners, _ = _linear_weights(values, nodes)
    flat = table.ravel()
    out = np.zeros(values.shape[0])
    for idx, w in corners:
        out += w * flat[idx]
    return out


def fit_rho(
    pattern: PointPattern,
    covariates,
    bandwidths=None,
    *,
    exact: bool = False,
    max_covariates: int = MAX_COVARIATES,
    grid: Grid | None = None,
    bias_correction: bool | None = None,
) -> RhoEstimate:
    """Kernel ratio estimate of the intensity as a function of ``covariates``.

    With no covariates this is the constant ``n / |W|`` on ``grid`` (default:
    :meth:`Grid.for_window` of the pattern's window).

    ``bias_correction=True`` applies one multiplicative correction step: the
    ratio estimator is rerun with point weights ``1 / rho1(C(x_i))`` and the
    result multiplies the pilot ``rho1``. This removes most of the slope
    attenuation at wide bandwidths. Off by default (``BIAS_CORRECTION``).
    """
    covariates = tuple(covariates)
    m = len(covariates)
    if m > max_covariates:
        raise ValueError(f"at most {max_covariates} covariates supported by the product-kernel estimator, got {m}")
    if m == 0:
        grid = Grid.for_window(pattern.window) if grid is None else grid
        return RhoEstimate((), constant_intensity(pattern, grid), np.zeros(0), pattern.n)
    _check_grids(covariates)
    grid = covariates[0].grid
    mask = covariates[0].mask.copy()
    for c in covariates[1:]:
        mask &= c.mask
    cell_vals = np.column_stack([c.values[mask] for c in covariates])
    sd = cell_vals.std(axis=0)
    if np.any(sd <= 1e-12 * np.maximum(1.0, np.abs(cell_vals).max(axis=0))):
        raise DegenerateCovariateError("covariate has zero variance over the window")
    n = pattern.n
    if n > 0:
        pt_vals = np.column_stack([lookup(c, pattern.xy) for c in covariates])
    else:
        pt_vals = np.zeros((0, m))
    bw = default_rho_bandwidths(cell_vals, n) if bandwidths is None else np.asarray(bandwidths, dtype=float)
    bw = np.broadcast_to(bw, (m,)).astype(float)
    if np.any(bw <= 0):
        raise ValueError("covariate-space bandwidths must be positive")
    area = float(mask.sum()) * grid.cell_area
    floor = FLOOR_FRACTION * area
    correct = BIAS_CORRECTION if bias_correction is None else bool(bias_correction)

    lam = np.zeros(grid.shape)
    nodes: list[np.ndarray] = []
    table = None
    floor_active = False
    if n > 0 and exact:
        est = np.empty(cell_vals.shape[0])
        for s in range(0, cell_vals.shape[0], 512):
            chunk = cell_vals[s : s + 512]
            kd = np.ones((chunk.shape[0], cell_vals.shape[0]))
            kn = np.ones((chunk.shape[0], n))
            for j in range(m):
                kd *= _gauss(chunk[:, j : j + 1] - cell_vals[None, :, j], bw[j])
                kn *= _gauss(chunk[:, j : j + 1] - pt_vals[None, :, j], bw[j])
            den = kd.sum(axis=1) * grid.cell_area
            floor_active |= bool(np.any(den < floor))
            est[s : s + 512] = kn.sum(axis=1) / np.maximum(den, floor)
        if correct:
            pilot = _exact_ratio(pt_vals, cell_vals, pt_vals, bw, grid.cell_area, floor)
            w = 1.0 / np.maximum(pilot, floor / area)
            for s in range(0, cell_vals.shape[0], 512):
                chunk = cell_vals[s : s + 512]
                kd = np.ones((chunk.shape[0], cell_vals.shape[0]))
                kn = np.ones((chunk.shape[0], n))
                for j in range(m):
                    kd *= _gauss(chunk[:, j : j + 1] - cell_vals[None, :, j], bw[j])
                    kn *= _gauss(chunk[:, j : j + 1] - pt_vals[None, :, j], bw[j])
                den = np.maximum(kd.sum(axis=1) * grid.cell_area, floor)
                est[s : s + 512] *= (kn @ w) / den
        lam[mask] = est
    elif n > 0:
        nn = _NODES[m]
        lo, hi = cell_vals.min(axis=0), cell_vals.max(axis=0)
        nodes = [np.linspace(lo[j], hi[j], nn) for j in range(m)]
        num = _separable_on_nodes(pt_vals, None, nodes, bw)
        den = _binned_density(cell_vals, nodes, bw) * grid.cell_area
        floor_active = bool(np.any(den < floor))
        table = num / np.maximum(den, floor)
        if correct:
            w = 1.0 / np.maximum(_interpolate(table, pt_vals, nodes), floor / area)
            table = table * _separable_on_nodes(pt_vals, w, nodes, bw) / np.maximum(den, floor)
        lam[mask] = np.maximum(_interpolate(table, cell_vals, nodes), 0.0)
    if floor_active:
        log.info("rho-hat denominator floor active")
    return RhoEstimate(
        covariates=covariates,
        intensity=ScalarField(grid, lam, mask),
        bandwidths=bw.copy(),
        n_points=n,
        floor_active=floor_active,
        nodes=tuple(nodes),
        rho_nodes=table,
    )


def _exact_ratio(at, cell_vals, pt_vals, bw, cell_area, floor) -> np.ndarray:
    num = np.ones((at.shape[0], pt_vals.shape[0]))
    den = np.zeros(at.shape[0])
    for j in range(at.shape[1]):
        num *= _gauss(at[:, j : j + 1] - pt_vals[None, :, j], bw[j])
    for s in range(0, cell_vals.shape[0], 4096):
        kd = np.ones((at.shape[0], min(4096, cell_vals.shape[0] - s)))
        for j in range(at.shape[1]):
            kd *= _gauss(at[:, j : j + 1] - cell_vals[None, s : s + 4096, j], bw[j])
        den += kd.sum(axis=1)
    return num.sum(axis=1) / np.maximum(den * cell_area, floor)


def constant_intensity(pattern: PointPattern, grid) -> ScalarField:
    """The covariate-free estimate ``n(X ∩ W) / |W|``."""
    return ScalarField.constant(pattern.n / pattern.window.area, grid)
