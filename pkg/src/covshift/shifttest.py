"""Random-shift Monte Carlo tests of covariate significance.

The residual object (the residual measure for CWR and the mean covariate,
the smoothed residual field at the sampling points for the partial Kendall
correlation) is built once; the covariate of interest is translated ``N``
times. Shifts are snapped to whole grid cells, so a shifted covariate is an
index permutation of the original raster and every replicate of the CWR and
mean-covariate statistics follows from one FFT cross-correlation.

Torus correction wraps shifts cyclically on a rectangular window. Variance
correction uses Euclidean shifts, restricts every replicate to the overlap
``W_i = W ∩ (W + v_i)`` and standardizes
``S_i = (T_i - T̄) / sqrt(f_i)`` before ranking.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import fft as sfft

from . import rng as rngmod
from .depmeasure import (
    DEFAULT_SAMPLING_POINTS,
    SamplingPoints,
    _adaptive,
    _sampling_values,
    kendall_tau,
)
from .geom import PointPattern, default_shift_radius, draw_shift_vectors, draw_torus_vectors
from .raster import ScalarField, lookup, shift_field
from .residual import fit_intensity, residual_at, residual_measure

__all__ = [
    "ConfigError",
    "ShiftTestConfig",
    "ShiftTestResult",
    "run_shift_test",
    "replicate_statistics_direct",
    "monte_carlo_pvalue",
    "standardize",
    "backward_input_adapter",
    "mask_shift_radius",
]

STATISTICS = ("tau_partial", "cwr", "mean_covariate")
CORRECTIONS = ("torus", "variance")
RESIDUALS = ("parametric", "nonparametric")
MIN_SHIFTS = 19
TIE_RTOL = 1e-10


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ShiftTestConfig:
    """Settings of one random-shift test.

    ``radius=None`` picks the largest disc radius keeping every overlap at
    least a quarter of the window. ``bandwidth`` applies to ``tau_partial``
    only and may be a number or ``"adaptive"``.
    """

    statistic: str = "cwr"
    residuals: str = "nonparametric"
    correction: str = "torus"
    n_shifts: int = 999
    radius: float | None = None
    seed: int = 0
    shift_distribution: str = "disc"
    n_sampling: int = DEFAULT_SAMPLING_POINTS
    bandwidth: float | str = "adaptive"
    candidates: tuple[float, ...] | None = None
    alternative: str = "two-sided"

    def __post_init__(self):
        if self.statistic not in STATISTICS:
            raise ConfigError(f"statistic must be one of {STATISTICS}, got {self.statistic!r}")
        if self.residuals not in RESIDUALS:
            raise ConfigError(f"residuals must be one of {RESIDUALS}, got {self.residuals!r}")
        if self.correction not in CORRECTIONS:
            raise ConfigError(f"correction must be one of {CORRECTIONS}, got {self.correction!r}")
        if int(self.n_shifts) < MIN_SHIFTS:
            raise ConfigError(f"need at least {MIN_SHIFTS} shifts, got {self.n_shifts}")
        if self.radius is not None and not self.radius > 0:
            raise ConfigError("shift radius must be positive")
        if self.shift_distribution not in ("disc", "window"):
            raise ConfigError("shift_distribution must be 'disc' or 'window'")
        if self.shift_distribution == "window" and self.correction != "torus":
            raise ConfigError("shifts uniform on the window are only meaningful with torus correction")
        if self.alternative != "two-sided":
            raise ConfigError("only the two-sided alternative is supported")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "adaptive":
                raise ConfigError("bandwidth must be positive or 'adaptive'")
        elif not self.bandwidth > 0:
            raise ConfigError("bandwidth must be positive or 'adaptive'")
        if self.n_sampling < 2:
            raise ConfigError("need at least 2 sampling points")


@dataclass(frozen=True, eq=False)
class ShiftTestResult:
    """Outcome of a random-shift test; index 0 of every vector is the data."""

    statistics: np.ndarray
    standardized: np.ndarray | None
    shifts: np.ndarray
    areas: np.ndarray
    counts: np.ndarray
    p_value: float
    config: ShiftTestConfig
    radius: float
    bandwidth: float | None = None
    n_points: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def observed(self) -> float:
        return float(self.statistics[0])

    @property
    def replicates(self) -> np.ndarray:
        return self.statistics[1:]

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        if cfg["candidates"] is not None:
            cfg["candidates"] = [float(c) for c in cfg["candidates"]]
        return {
            "statistic": self.config.statistic,
            "observed": self.observed,
            "p_value": self.p_value,
            "n_points": self.n_points,
            "radius": self.radius,
            "bandwidth": self.bandwidth,
            "config": cfg,
            "statistics": [float(t) for t in self.statistics],
            "standardized": None if self.standardized is None else [float(s) for s in self.standardized],
            "shifts": [[float(a), float(b)] for a, b in self.shifts],
            "areas": [float(a) for a in self.areas],
            "counts": [int(c) for c in self.counts],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def backward_input_adapter(result: ShiftTestResult) -> float:
    """The p-value, as consumed by backward selection."""
    return float(result.p_value)


def standardize(statistics, factors) -> np.ndarray:
    """``S_i = (T_i - T̄) / sqrt(f_i)`` with ``T̄`` over all ``N + 1`` values."""
    t = np.asarray(statistics, dtype=float)
    return (t - t.mean()) / np.sqrt(np.asarray(factors, dtype=float))


def monte_carlo_pvalue(values) -> float:
    """Two-sided rank p-value ``(1 + #{i ≥ 1: |S_i| ≥ |S_0|}) / (N + 1)``.

    Values within a relative ``1e-10`` of ``|S_0|`` count as ties, and ties
    count as extreme.
    """
    a = np.abs(np.asarray(values, dtype=float))
    tol = TIE_RTOL * max(float(a.max()), np.finfo(float).tiny)
    return float((1 + np.count_nonzero(a[1:] >= a[0] - tol)) / a.size)


# ------------------------------------------------------------------ shifts


def _draw_cells(config, window, grid, radius, rng, count, valid_fn=None):
    """Snapped shift vectors ``(k_row, k_col)``; invalid ones are redrawn."""
    h = grid.cellsize
    out = np.zeros((0, 2), dtype=np.int64)
    attempts = 0
    while out.shape[0] < count:
        need = count - out.shape[0]
        if config.shift_distribution == "window":
            v = draw_torus_vectors(need, window, rng)
        else:
            v = draw_shift_vectors(need, radius, rng)
        k = np.rint(v[:, ::-1] / h).astype(np.int64)  # (row, col) lags
        if valid_fn is not None:
            k = k[valid_fn(k)]
        out = np.vstack([out, k])
        attempts += need
        if attempts > 1000 * count:
            raise ConfigError("could not draw shifts with usable overlaps; reduce the shift radius")
    return out[:count]


def _cellwise_correlation(a: np.ndarray, b: np.ndarray, periodic: bool) -> np.ndarray:
    """``G[k] = Σ_c a[c] b[c - k]`` for every cyclic (or zero-padded) lag ``k``."""
    nr, nc = a.shape
    shape = (nr, nc) if periodic else (2 * nr, 2 * nc)
    fa = sfft.rfft2(a, s=shape)
    fb = sfft.rfft2(b, s=shape)
    return sfft.irfft2(fa * np.conj(fb), s=shape)


def _at_lags(table: np.ndarray, k: np.ndarray) -> np.ndarray:
    return table[k[:, 0] % table.shape[0], k[:, 1] % table.shape[1]]


def _overlap_cells(mask: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Number of cells of ``mask`` whose source ``c - k`` is also in ``mask``."""
    m = mask.astype(float)
    return np.rint(_at_lags(_cellwise_correlation(m, m, False), k))


def mask_shift_radius(mask: np.ndarray, cellsize: float, min_ratio: float = 0.25) -> float:
    """Raster analogue of the default radius for arbitrary windows.

    The largest R such that every whole-cell lag of length at most R keeps
    at least ``min_ratio`` of the window's cells in the overlap.
    """
    m = mask.astype(float)
    over = _cellwise_correlation(m, m, False) / m.sum()
    nr, nc = mask.shape
    lr = np.fft.fftfreq(2 * nr, 1.0 / (2 * nr))
    lc = np.fft.fftfreq(2 * nc, 1.0 / (2 * nc))
    dist = np.hypot(lr[:, None], lc[None, :]) * cellsize
    bad = over < min_ratio - 1e-9
    if not bad.any():
        return float(dist.max())
    return float(dist[bad].min() - 0.5 * cellsize)


def _counts_grid(pattern: PointPattern, grid) -> np.ndarray:
    counts = np.zeros(grid.shape)
    if pattern.n:
        r, c = grid.cell_index(pattern.x, pattern.y)
        np.add.at(counts, (r, c), 1.0)
    return counts


# ------------------------------------------------------------------ engine


def run_shift_test(
    pattern: PointPattern,
    nuisance,
    interest: ScalarField,
    config: ShiftTestConfig | None = None,
    *,
    rng=None,
    sampling: SamplingPoints | None = None,
    provenance=None,
) -> ShiftTestResult:
    """Random-shift test of independence between ``pattern`` and ``interest``
    given the ``nuisance`` covariates.

    Randomness comes from ``rng`` (a seed, generator or ``None``, meaning the
    config seed). Shifts and sampling points use separate substreams.
    """
    config = config or ShiftTestConfig()
    nuisance = tuple(nuisance)
    window = pattern.window
    grid = interest.grid
    if config.correction == "torus" and not grid.tiles_window:
        raise ConfigError("torus correction needs a rectangular window tiled by the covariate grid")
    for c in nuisance:
        if not grid.same_geometry(c.grid):
            raise ValueError("nuisance and interest covariates live on different grids")
    if isinstance(rng, np.random.Generator):
        shift_rng, sample_rng = rng, rng
    else:
        seed = config.seed if rng is None else int(rng)
        shift_rng = rngmod.stream(seed, "shifts")
        sample_rng = rngmod.stream(seed, "sampling")
    if config.radius is not None:
        radius = float(config.radius)
    elif window.is_rectangle:
        radius = default_shift_radius(window)
    else:
        radius = mask_shift_radius(interest.mask, grid.cellsize)
    if provenance is None:
        provenance = fit_intensity(pattern, nuisance, config.residuals, grid=grid)
    if config.statistic == "tau_partial":
        if sampling is None:
            sampling = SamplingPoints.uniform(window, config.n_sampling, sample_rng)
        return _run_tau(pattern, nuisance, interest, config, provenance, sampling, shift_rng, radius)
    return _run_counting(pattern, interest, config, provenance, shift_rng, radius)


def _run_counting(pattern, interest, config, provenance, rng, radius) -> ShiftTestResult:
    grid = interest.grid
    window = pattern.window
    torus = config.correction == "torus"
    rm = residual_measure(pattern, provenance, grid=grid)
    mask = interest.mask & rm.intensity.mask
    psi = np.where(mask, interest.values, 0.0)
    counts = _counts_grid(pattern, grid)
    ind = mask.astype(float)
    n_cells = int(mask.sum())

    def valid(k):
        ok = np.all(np.abs(k) < np.array(grid.shape), axis=1)
        k = np.where(ok[:, None], k, 0)
        good = ok & (_overlap_cells(mask, k) > 0)
        if config.statistic == "mean_covariate":
            good &= np.rint(_at_lags(_cellwise_correlation(counts, ind, False), k)) > 0
        return good

    k = _draw_cells(config, window, grid, radius, rng, int(config.n_shifts), None if torus else valid)
    ka = np.vstack([[0, 0], k])
    n_in = pattern.n
    pts_in = np.full(ka.shape[0], float(n_in))
    areas = np.full(ka.shape[0], n_cells * grid.cell_area)
    if not torus:
        pts_in = np.rint(_at_lags(_cellwise_correlation(counts, ind, False), ka))
        areas = _overlap_cells(mask, ka) * grid.cell_area
    point_sum = _at_lags(_cellwise_correlation(counts, psi, torus), ka)
    # exact observed value
    obs_points = float(lookup(interest, pattern.xy).sum()) if pattern.n else 0.0
    point_sum[0] = obs_points
    if config.statistic == "cwr":
        lam_h = np.where(mask, rm.intensity.values, 0.0) * grid.cell_area
        integral = _at_lags(_cellwise_correlation(lam_h, psi, torus), ka)
        integral[0] = float((lam_h * psi).sum())
        t = point_sum - integral
        factors = np.maximum(pts_in, 1.0)
    else:
        if pattern.n == 0:
            raise ValueError("mean covariate statistic is undefined for an empty pattern")
        t = point_sum / pts_in
        factors = 1.0 / pts_in
    if torus:
        s = None
        ranked = t - t.mean() if config.statistic == "mean_covariate" else t
    else:
        s = standardize(t, factors)
        ranked = s
    h = grid.cellsize
    return ShiftTestResult(
        statistics=t,
        standardized=s,
        shifts=k[:, ::-1] * h,
        areas=areas,
        counts=pts_in.astype(np.int64),
        p_value=monte_carlo_pvalue(ranked),
        config=config,
        radius=radius,
        n_points=pattern.n,
    )


def _run_tau(pattern, nuisance, interest, config, provenance, sampling, rng, radius) -> ShiftTestResult:
    grid = interest.grid
    window = pattern.window
    torus = config.correction == "torus"
    if config.bandwidth == "adaptive":
        bw, provenance, s_vals = _adaptive(
            pattern, nuisance, sampling, config.candidates, config.residuals, provenance
        )
        if s_vals is None:
            s_vals = residual_at(pattern, provenance, bw, sampling.xy, grid=grid)
    else:
        bw = float(config.bandwidth)
        s_vals = residual_at(pattern, provenance, bw, sampling.xy, grid=grid)
    rows, cols = grid.cell_index(sampling.xy[:, 0], sampling.xy[:, 1])
    nr, nc = grid.shape
    mask = interest.mask

    def sources(k):
        sr = rows[None, :] - k[:, 0:1]
        sc = cols[None, :] - k[:, 1:2]
        if torus:
            return sr % nr, sc % nc, np.ones(sr.shape, dtype=bool)
        inside = (sr >= 0) & (sr < nr) & (sc >= 0) & (sc < nc)
        sr_c, sc_c = np.clip(sr, 0, nr - 1), np.clip(sc, 0, nc - 1)
        return sr_c, sc_c, inside & mask[sr_c, sc_c]

    def valid(k):
        return sources(k)[2].sum(axis=1) >= 2

    k = _draw_cells(config, window, grid, radius, rng, int(config.n_shifts), None if torus else valid)
    ka = np.vstack([[0, 0], k])
    sr, sc, keep = sources(ka)
    psi = interest.values[sr, sc]
    psi[0] = _sampling_values(interest, sampling)
    keep[0] = True
    sgn_phi = np.sign(s_vals[:, None] - s_vals[None, :])
    t = np.empty(ka.shape[0])
    n_i = keep.sum(axis=1)
    for start in range(0, ka.shape[0], 64):
        p = psi[start : start + 64]
        w = keep[start : start + 64].astype(float)
        sgn_psi = np.sign(p[:, :, None] - p[:, None, :])
        num = np.einsum("bij,ij,bi,bj->b", sgn_psi, sgn_phi, w, w, optimize=True)
        n = n_i[start : start + 64]
        t[start : start + 64] = num / (n * (n - 1))
    t[0] = kendall_tau(psi[0], s_vals)
    areas = np.full(ka.shape[0], window.area)
    if not torus:
        areas = _overlap_cells(mask, ka) * grid.cell_area
        s = standardize(t, 1.0 / n_i)
        ranked = s
    else:
        s = None
        ranked = t
    return ShiftTestResult(
        statistics=t,
        standardized=s,
        shifts=k[:, ::-1] * grid.cellsize,
        areas=areas,
        counts=n_i.astype(np.int64),
        p_value=monte_carlo_pvalue(ranked),
        config=config,
        radius=radius,
        bandwidth=bw,
        n_points=pattern.n,
        extra={"sampling_points": sampling.n},
    )


def replicate_statistics_direct(pattern, provenance, interest: ScalarField, shifts, mode: str, statistic="cwr"):
    """Reference evaluation of the replicate statistics, one shifted raster at a time.

    ``shifts`` are vectors ``(dx, dy)``; ``mode`` is ``"torus"`` or
    ``"euclid"``. Returns ``(statistics, point counts in W_i)`` for the CWR or
    mean-covariate statistic. Slow; used to check the FFT engine.
    """
    rm = residual_measure(pattern, provenance, grid=interest.grid)
    grid = interest.grid
    out, cnt = [], []
    for v in np.atleast_2d(shifts):
        sh = shift_field(interest, v, mode)
        mask = sh.mask & rm.intensity.mask
        if pattern.n:
            r, c = grid.cell_index(pattern.x, pattern.y)
            inside = mask[r, c]
            pts = sh.values[r[inside], c[inside]]
        else:
            pts = np.zeros(0)
        if statistic == "cwr":
            integral = (sh.values[mask] * rm.intensity.values[mask]).sum() * grid.cell_area
            out.append(pts.sum() - integral)
        else:
            out.append(pts.mean())
        cnt.append(pts.size)
    return np.array(out), np.array(cnt)
