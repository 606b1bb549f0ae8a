"""Residual measures and smoothed residual fields.

The fitted intensity ``λ̂`` comes from one of four provenances: a log-linear
fit, a nonparametric ``ρ̂`` fit, the constant ``n/|W|``, or a user-supplied
intensity field (e.g. the true intensity in a simulation). The residual
measure of a set ``B`` is ``n(X ∩ B) - ∫_B λ̂``; its kernel-smoothed,
edge-corrected density is the smoothed residual field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import PointPattern, Window
from .loglin import LogLinFit, fit_loglinear
from .raster import Grid, ScalarField, integrate, lookup
from .rhohat import RhoEstimate, fit_rho
from .smooth import KernelSpec, _as_kernel, _gauss, default_bandwidth, kernel_intensity, smooth_field_against_kernel

__all__ = [
    "CONSTANT",
    "ResidualMeasure",
    "ResidualField",
    "fit_intensity",
    "residual_measure",
    "smoothed_residual_field",
    "residual_at",
]

CONSTANT = "constant"


def _resolve(pattern: PointPattern, provenance, grid: Grid | None):
    """Return ``(kind, λ̂ field, scalar or None)``."""
    if isinstance(provenance, LogLinFit):
        return "parametric", provenance.intensity, None
    if isinstance(provenance, RhoEstimate):
        return "nonparametric", provenance.intensity, None
    if isinstance(provenance, ScalarField):
        return "given", provenance, None
    if provenance == CONSTANT or provenance is None:
        grid = Grid.for_window(pattern.window) if grid is None else grid
        c = pattern.n / pattern.window.area
        return "constant", ScalarField.constant(c, grid), c
    raise TypeError(f"unsupported intensity provenance {provenance!r}")


def _is_constant(field: ScalarField) -> bool:
    vals = field.window_values()
    return vals.size == 0 or bool(np.ptp(vals) <= 1e-12 * max(1.0, float(np.abs(vals).max())))


def fit_intensity(
    pattern: PointPattern,
    nuisance=(),
    residuals: str = "nonparametric",
    *,
    grid: Grid | None = None,
    bandwidths=None,
):
    """Estimate ``λ̂`` from the nuisance covariates.

    Returns a provenance object usable by :func:`residual_measure` and
    :func:`smoothed_residual_field`. With no nuisance covariates the
    estimate is the constant ``n/|W|`` for either residual type. Nuisance
    covariates that are constant over the window carry no information and
    are dropped.
    """
    nuisance = tuple(c for c in nuisance if not _is_constant(c))
    if not nuisance:
        return CONSTANT
    if residuals == "nonparametric":
        return fit_rho(pattern, nuisance, bandwidths)
    if residuals == "parametric":
        return fit_loglinear(pattern, nuisance, grid=grid)
    raise ValueError(f"residuals must be 'parametric' or 'nonparametric', got {residuals!r}")


@dataclass(frozen=True, eq=False)
class ResidualMeasure:
    """Signed measure: unit atoms at the points minus the density ``λ̂``."""

    pattern: PointPattern
    intensity: ScalarField
    provenance: str
    constant: float | None = None

    def evaluate(self, region: Window | np.ndarray | None = None) -> float:
        """``R(B)`` for a window ``B`` or a boolean cell mask; ``None`` means ``W``."""
        if region is None:
            region = self.pattern.window
        if isinstance(region, Window):
            count = self.pattern.count_in(region)
            if self.constant is not None:
                grid = self.intensity.grid
                cells = grid.mask_for(region) & self.intensity.mask
                return float(count - self.constant * cells.sum() * grid.cell_area)
            return float(count - integrate(self.intensity, region))
        mask = np.asarray(region, dtype=bool) & self.intensity.mask
        grid = self.intensity.grid
        if self.pattern.n:
            r, c = grid.cell_index(self.pattern.x, self.pattern.y)
            count = int(mask[r, c].sum())
        else:
            count = 0
        return float(count - self.intensity.values[mask].sum() * grid.cell_area)

    @property
    def total(self) -> float:
        return self.evaluate(None)

    def weighted(self, covariate: ScalarField) -> float:
        """``∫_W C dR``: the covariate summed at the points minus ``∫_W C λ̂``."""
        pts = lookup(covariate, self.pattern.xy).sum() if self.pattern.n else 0.0
        mask = covariate.mask & self.intensity.mask
        integral = (covariate.values[mask] * self.intensity.values[mask]).sum() * covariate.grid.cell_area
        return float(pts - integral)


@dataclass(frozen=True, eq=False)
class ResidualField:
    field: ScalarField
    kernel: KernelSpec
    provenance: str

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def residual_measure(pattern: PointPattern, provenance=CONSTANT, *, grid: Grid | None = None) -> ResidualMeasure:
    kind, lam, c = _resolve(pattern, provenance, grid)
    return ResidualMeasure(pattern, lam, kind, c)


def smoothed_residual_field(
    pattern: PointPattern, provenance=CONSTANT, kernel=None, *, grid: Grid | None = None
) -> ResidualField:
    """Edge-corrected smoothed residual ``s(u) = λ̂_kernel(u) - (smoothed λ̂)(u)``.

    For constant provenance the fitted part is subtracted as the exact
    scalar ``n/|W|`` without smoothing.
    """
    if kernel is None:
        kernel = default_bandwidth(pattern.window)
    kernel = _as_kernel(kernel)
    kind, lam, c = _resolve(pattern, provenance, grid)
    raw = kernel_intensity(pattern, kernel, lam.grid, lam.mask)
    if c is not None:
        vals = np.where(lam.mask, raw.values - c, 0.0)
    else:
        vals = np.where(lam.mask, raw.values - smooth_field_against_kernel(lam, kernel).values, 0.0)
    return ResidualField(ScalarField(lam.grid, vals, lam.mask), kernel, kind)


def residual_at(pattern: PointPattern, provenance, kernel, xy, *, grid: Grid | None = None) -> np.ndarray:
    """Smoothed residual evaluated directly at arbitrary locations in ``W``.

    Uses the same midpoint-rule quadrature as :func:`smoothed_residual_field`,
    so at cell centres both agree to rounding error.
    """
    sigma = _as_kernel(kernel).bandwidth
    kind, lam, c = _resolve(pattern, provenance, grid)
    g = lam.grid
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    h = g.cellsize
    py = _gauss(xy[:, 1:2] - g.yc[None, :], sigma) * h
    px = _gauss(xy[:, 0:1] - g.xc[None, :], sigma) * h
    e = np.einsum("ic,ic->i", py @ lam.mask.astype(float), px)
    if pattern.n:
        ksum = (
            _gauss(xy[:, 0:1] - pattern.x[None, :], sigma) * _gauss(xy[:, 1:2] - pattern.y[None, :], sigma)
        ).sum(axis=1)
    else:
        ksum = np.zeros(xy.shape[0])
    if c is not None:
        return ksum / e - c
    smoothed = np.einsum("ic,ic->i", py @ lam.masked_values(), px)
    return (ksum - smoothed) / e
