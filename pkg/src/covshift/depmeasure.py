"""Dependence statistics between a point pattern and a covariate.

* Kendall correlation between the covariate and the smoothed residual field,
  both read at independent uniform sampling points, plain or partial (after
  removing nuisance covariates), with an adaptive bandwidth rule.
* The covariate-weighted residual (CWR): covariate summed over the points
  minus its integral against the fitted intensity.
* The mean covariate value at the points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from . import rng as rngmod
from .geom import PointPattern, Window
from .raster import ScalarField, lookup
from .residual import CONSTANT, fit_intensity, residual_at, residual_measure

__all__ = [
    "DEFAULT_SAMPLING_POINTS",
    "UndefinedStatisticError",
    "SamplingPoints",
    "DependenceResult",
    "kendall_tau",
    "kendall_tau_bruteforce",
    "default_candidates",
    "tau_hat",
    "tau_partial",
    "adaptive_bandwidth",
    "cwr",
    "mean_covariate_T",
]

DEFAULT_SAMPLING_POINTS = 100


class UndefinedStatisticError(ValueError):
    pass


# ---------------------------------------------------------------- Kendall


@numba.njit(cache=True)
def _merge_count(b):
    """Stable bottom-up merge sort of ``b`` in place; returns strict inversions."""
    n = b.shape[0]
    tmp = np.empty_like(b)
    swaps = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if b[j] < b[i]:
                    tmp[k] = b[j]
                    swaps += mid - i
                    j += 1
                else:
                    tmp[k] = b[i]
                    i += 1
                k += 1
            while i < mid:
                tmp[k] = b[i]
                i += 1
                k += 1
            while j < hi:
                tmp[k] = b[j]
                j += 1
                k += 1
        for t in range(n):
            b[t] = tmp[t]
        width *= 2
    return swaps


@numba.njit(cache=True)
def _tie_pairs_sorted(v):
    total = 0
    run = 1
    for i in range(1, v.shape[0]):
        if v[i] == v[i - 1]:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    return total + run * (run - 1) // 2


@numba.njit(cache=True)
def _joint_ties(a, b):
    total = 0
    run = 1
    for i in range(1, a.shape[0]):
        if a[i] == a[i - 1] and b[i] == b[i - 1]:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    return total + run * (run - 1) // 2


@numba.njit(cache=True)
def _kendall_s(a_sorted, b_sorted):
    """``Σ_{i<j} sgn(Δa) sgn(Δb)`` for data sorted lexicographically by (a, b)."""
    n = a_sorted.shape[0]
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs_sorted(a_sorted)
    n3 = _joint_ties(a_sorted, b_sorted)
    b = b_sorted.copy()
    swaps = _merge_count(b)
    n2 = _tie_pairs_sorted(b)
    return n0 - n1 - n2 + n3 - 2 * swaps


def _check_pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("Kendall correlation needs at least 2 observations")
    return a, b


def kendall_tau(a, b) -> float:
    """Kendall correlation with ``sgn(0) = 0``, computed in O(n log n).

    Equals ``(1/(n(n-1))) Σ_{i≠j} sgn(a_i - a_j) sgn(b_i - b_j)``; ties add
    nothing to the numerator and are not removed from the denominator.
    """
    a, b = _check_pair(a, b)
    order = np.lexsort((b, a))
    s = _kendall_s(np.ascontiguousarray(a[order]), np.ascontiguousarray(b[order]))
    n = a.size
    return 2.0 * s / (n * (n - 1))


def kendall_tau_bruteforce(a, b) -> float:
    """O(n²) reference for :func:`kendall_tau`."""
    a, b = _check_pair(a, b)
    sa = np.sign(a[:, None] - a[None, :]).astype(np.int64)
    sb = np.sign(b[:, None] - b[None, :]).astype(np.int64)
    n = a.size
    return float((sa * sb).sum()) / (n * (n - 1))


# ------------------------------------------------------------ data types


@dataclass(frozen=True, eq=False)
class SamplingPoints:
    """Locations, independent of the data, at which fields are compared."""

    xy: np.ndarray
    window: Window

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        if xy.shape[0] and not np.all(self.window.contains(xy[:, 0], xy[:, 1])):
            raise ValueError("sampling points must lie inside the window")
        xy = xy.copy()
        xy.setflags(write=False)
        object.__setattr__(self, "xy", xy)

    @property
    def n(self) -> int:
        return self.xy.shape[0]

    @classmethod
    def uniform(cls, window: Window, count: int = DEFAULT_SAMPLING_POINTS, rng=None) -> "SamplingPoints":
        """``count`` i.i.d. uniform points (rejection sampling for polygons)."""
        gen = rngmod.as_generator(rng)
        return cls(_uniform_in(window, count, gen), window)

    @classmethod
    def poisson(cls, window: Window, intensity: float, rng=None) -> "SamplingPoints":
        """Homogeneous Poisson sampling points (random count)."""
        gen = rngmod.as_generator(rng)
        count = int(gen.poisson(intensity * window.area))
        return cls(_uniform_in(window, count, gen), window)


def _uniform_in(window: Window, count: int, gen) -> np.ndarray:
    x0, y0, x1, y1 = window.bounds
    out = np.empty((0, 2))
    while out.shape[0] < count:
        need = count - out.shape[0]
        batch = max(16, int(need * (x1 - x0) * (y1 - y0) / window.area * 1.2) + 8)
        xy = np.column_stack([gen.uniform(x0, x1, batch), gen.uniform(y0, y1, batch)])
        xy = xy[window.contains(xy[:, 0], xy[:, 1])]
        out = np.vstack([out, xy[:need]])
    return out


@dataclass(frozen=True)
class DependenceResult:
    kind: str
    value: float
    bandwidth: float | None = None
    n_sampling: int | None = None

    def __post_init__(self):
        if self.kind.startswith("tau") and not -1.0 <= self.value <= 1.0:
            raise ValueError("Kendall-type value outside [-1, 1]")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "bandwidth": self.bandwidth, "n_sampling": self.n_sampling}


# ----------------------------------------------------- correlation family


def default_candidates(window: Window, count: int = 8) -> np.ndarray:
    """Log-spaced bandwidths from 0.05 to 0.8 times the shorter window side."""
    side = min(window.side_lengths)
    return np.geomspace(0.05 * side, 0.8 * side, count)


def _sampling_values(field: ScalarField, sampling: SamplingPoints) -> np.ndarray:
    return np.asarray(lookup(field, sampling.xy), dtype=float).reshape(-1)


def tau_hat(pattern: PointPattern, covariate: ScalarField, kernel, sampling: SamplingPoints) -> DependenceResult:
    """Kendall correlation of the covariate with the constant-intensity residual field."""
    s = residual_at(pattern, CONSTANT, kernel, sampling.xy, grid=covariate.grid)
    value = kendall_tau(_sampling_values(covariate, sampling), s)
    return DependenceResult("tau", value, float(_bw(kernel)), sampling.n)


def _bw(kernel) -> float:
    return kernel.bandwidth if hasattr(kernel, "bandwidth") else float(kernel)


def adaptive_bandwidth(
    pattern: PointPattern,
    nuisance,
    sampling: SamplingPoints,
    candidates=None,
    *,
    residuals: str = "nonparametric",
    provenance=None,
) -> float:
    """Candidate bandwidth minimizing ``Σ_i τ(s̃, C_i)²`` over nuisance covariates.

    Ties go to the smaller bandwidth. A single candidate is returned as is.
    """
    return _adaptive(pattern, nuisance, sampling, candidates, residuals, provenance)[0]


def _adaptive(pattern, nuisance, sampling, candidates, residuals, provenance):
    nuisance = tuple(nuisance)
    cands = np.sort(np.asarray(default_candidates(pattern.window) if candidates is None else candidates, float))
    if cands.size == 0:
        raise ValueError("empty candidate bandwidth list")
    if provenance is None:
        provenance = fit_intensity(pattern, nuisance, residuals)
    if cands.size == 1:
        return float(cands[0]), provenance, None
    grid = nuisance[0].grid if nuisance else None
    nuis_vals = [_sampling_values(c, sampling) for c in nuisance]
    best, best_obj, best_s = None, np.inf, None
    for b in cands:
        s = residual_at(pattern, provenance, b, sampling.xy, grid=grid)
        obj = sum(kendall_tau(v, s) ** 2 for v in nuis_vals)
        if obj < best_obj:
            best, best_obj, best_s = float(b), obj, s
    return best, provenance, best_s


def tau_partial(
    pattern: PointPattern,
    nuisance,
    interest: ScalarField,
    kernel="adaptive",
    sampling: SamplingPoints | None = None,
    *,
    residuals: str = "nonparametric",
    candidates=None,
    provenance=None,
) -> DependenceResult:
    """Kendall correlation of ``interest`` with the residual field after
    removing the nuisance covariates.

    ``kernel`` is a bandwidth, a :class:`KernelSpec`, or ``"adaptive"``.
    """
    if sampling is None:
        raise ValueError("sampling points are required")
    nuisance = tuple(nuisance)
    if provenance is None:
        provenance = fit_intensity(pattern, nuisance, residuals)
    if isinstance(kernel, str):
        if kernel != "adaptive":
            raise ValueError(f"unknown kernel choice {kernel!r}")
        bw, provenance, s = _adaptive(pattern, nuisance, sampling, candidates, residuals, provenance)
        if s is None:
            s = residual_at(pattern, provenance, bw, sampling.xy, grid=interest.grid)
    else:
        bw = _bw(kernel)
        s = residual_at(pattern, provenance, bw, sampling.xy, grid=interest.grid)
    value = kendall_tau(_sampling_values(interest, sampling), s)
    return DependenceResult("tau_partial", value, bw, sampling.n)


# -------------------------------------------------------------- CWR, T


def cwr(pattern: PointPattern, nuisance, interest: ScalarField, provenance=None, *, residuals="nonparametric"):
    """Covariate-weighted residual ``Σ_x C(x) - ∫_W C λ̂``.

    ``provenance`` may be a fitted object, ``"constant"`` or an intensity
    field; otherwise it is estimated from ``nuisance``.
    """
    if provenance is None:
        provenance = fit_intensity(pattern, nuisance, residuals)
    rm = residual_measure(pattern, provenance, grid=interest.grid)
    return DependenceResult("cwr", rm.weighted(interest))


def mean_covariate_T(pattern: PointPattern, covariate: ScalarField) -> DependenceResult:
    """Mean covariate value over the points of the pattern."""
    if pattern.n == 0:
        raise UndefinedStatisticError("mean covariate value is undefined for an empty pattern")
    return DependenceResult("mean_covariate", float(np.mean(lookup(covariate, pattern.xy))))
