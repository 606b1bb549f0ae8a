"""Replication harness for the calibration, power and variance studies.

Every replicate derives its randomness from ``(seed, replicate index)``
through named substreams, so results do not depend on the number of
workers or on completion order.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom, binomtest

from . import rng as rngmod
from .depmeasure import SamplingPoints, cwr, tau_hat, tau_partial
from .geom import PointPattern, Window
from .loglin import ConvergenceError, SingularDesignError, fit_loglinear, wald_test
from .models import ModelSpec, get_model, simulate_model
from .pointsim import simulate_poisson
from .randfield import GaussFieldSpec, simulate_grfs
from .raster import Grid, ScalarField
from .residual import fit_intensity
from .shifttest import ShiftTestConfig, run_shift_test

__all__ = [
    "TestSpec",
    "parse_test",
    "RateRow",
    "ReplicationTable",
    "null_band",
    "replicate_model",
    "exponential_trend_pattern",
    "correlation_curves",
    "proposition_variance",
    "window_size_variances",
]

log = logging.getLogger(__name__)

_STAT_ALIASES = {"cwr": "cwr", "tau": "tau_partial", "tau_p": "tau_partial", "tau_partial": "tau_partial", "t": "mean_covariate", "mean_covariate": "mean_covariate"}
_RES_ALIASES = {"n": "nonparametric", "p": "parametric", "nonparametric": "nonparametric", "parametric": "parametric"}
_COR_ALIASES = {"tor": "torus", "var": "variance", "torus": "torus", "variance": "variance"}


@dataclass(frozen=True)
class TestSpec:
    """One test applied to every replicate.

    ``kind="shift"`` runs a random-shift test; ``kind="wald"`` runs the
    log-linear Poisson Wald test of the interest coefficient.
    """

    label: str
    kind: str = "shift"
    statistic: str = "cwr"
    residuals: str = "nonparametric"
    correction: str = "torus"


def parse_test(label: str) -> TestSpec:
    """``"cwr/n/tor"``, ``"tau/n/var"``, ``"wald"`` and similar labels."""
    text = label.strip().lower()
    if text in ("wald", "ppm", "loglin"):
        return TestSpec(label, "wald")
    parts = [p for p in text.replace(",", "/").replace(" ", "/").split("/") if p]
    if len(parts) != 3:
        raise ValueError(f"test label {label!r} is not of the form statistic/residuals/correction")
    try:
        return TestSpec(label, "shift", _STAT_ALIASES[parts[0]], _RES_ALIASES[parts[1]], _COR_ALIASES[parts[2]])
    except KeyError as exc:
        raise ValueError(f"unknown token {exc} in test label {label!r}") from None


@dataclass(frozen=True)
class RateRow:
    test: str
    rejections: int
    reps: int
    failures: int
    ci_low: float
    ci_high: float

    @property
    def fraction(self) -> float:
        return self.rejections / self.reps if self.reps else float("nan")

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "rejections": self.rejections,
            "reps": self.reps,
            "failures": self.failures,
            "fraction": self.fraction,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
        }


@dataclass(frozen=True)
class ReplicationTable:
    model: str
    params: dict
    alpha: float
    rows: tuple[RateRow, ...]
    null_band: tuple[float, float]
    p_values: dict = field(default_factory=dict, repr=False)

    def row(self, test: str) -> RateRow:
        for r in self.rows:
            if r.test == test:
                return r
        raise KeyError(test)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": self.params,
            "alpha": self.alpha,
            "null_band": list(self.null_band),
            "rows": [r.to_dict() for r in self.rows],
        }

    def to_csv(self) -> str:
        lines = ["model,test,reps,rejections,fraction,ci_low,ci_high,failures"]
        for r in self.rows:
            lines.append(
                f"{self.model},{r.test},{r.reps},{r.rejections},{r.fraction:.4f},{r.ci_low:.4f},{r.ci_high:.4f},{r.failures}"
            )
        return "\n".join(lines) + "\n"


def null_band(reps: int, alpha: float = 0.05, level: float = 0.95) -> tuple[float, float]:
    """Central binomial quantile band for the rejection fraction of a level-``alpha`` test."""
    lo = binom.ppf((1 - level) / 2, reps, alpha) / reps
    hi = binom.ppf(1 - (1 - level) / 2, reps, alpha) / reps
    return float(lo), float(hi)


def _one_replicate(args):
    spec, tests, alpha, seed, rep, n_shifts, radius = args
    real = simulate_model(spec, seed, rep)
    pattern = real.pattern
    c1, c2 = real.covariates["C1"], real.covariates["C2"]
    out = {}
    for t in tests:
        try:
            if t.kind == "wald":
                fit = fit_loglinear(pattern, [c1, c2])
                out[t.label] = wald_test(fit, 2)
            else:
                cfg = ShiftTestConfig(
                    statistic=t.statistic,
                    residuals=t.residuals,
                    correction=t.correction,
                    n_shifts=n_shifts,
                    radius=radius,
                )
                rng = rngmod.stream(seed, "test", rep, t.label)
                out[t.label] = run_shift_test(pattern, [c1], c2, cfg, rng=rng).p_value
        except (ConvergenceError, SingularDesignError, ValueError) as exc:
            log.debug("replicate %d, test %s failed: %s", rep, t.label, exc)
            out[t.label] = float("nan")
    return rep, out


def replicate_model(
    model: str | ModelSpec,
    tests,
    reps: int,
    *,
    alpha: float = 0.05,
    seed: int = 0,
    n_shifts: int = 999,
    radius: float | None = None,
    workers: int = 1,
    params: dict | None = None,
    progress=None,
) -> ReplicationTable:
    """Rejection fractions of ``tests`` over ``reps`` realizations of ``model``.

    Failed fits count as non-rejections and are reported per row. Confidence
    bands are Clopper-Pearson 95% intervals.
    """
    spec = get_model(model, **(params or {})) if isinstance(model, str) else model
    tests = [parse_test(t) if isinstance(t, str) else t for t in tests]
    jobs = [(spec, tests, alpha, seed, rep, n_shifts, radius) for rep in range(reps)]
    pvals = {t.label: np.full(reps, np.nan) for t in tests}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_one_replicate, jobs, chunksize=max(1, reps // (8 * workers)))
            for rep, out in results:
                for k, v in out.items():
                    pvals[k][rep] = v
                if progress:
                    progress(rep)
    else:
        for job in jobs:
            rep, out = _one_replicate(job)
            for k, v in out.items():
                pvals[k][rep] = v
            if progress:
                progress(rep)
    rows = []
    for t in tests:
        p = pvals[t.label]
        failures = int(np.isnan(p).sum())
        k = int(np.sum(p[~np.isnan(p)] <= alpha)) if t.kind == "shift" else int(np.sum(p[~np.isnan(p)] < alpha))
        ci = binomtest(k, reps, alpha).proportion_ci(0.95, method="exact")
        rows.append(RateRow(t.label, k, reps, failures, float(ci.low), float(ci.high)))
    return ReplicationTable(spec.name, dict(spec.params), alpha, tuple(rows), null_band(reps, alpha), pvals)


# ------------------------------------------------------- correlation curves


def exponential_trend_pattern(a: float, expected: float, rng, window: Window | None = None) -> PointPattern:
    """Poisson process on the unit square with intensity proportional to ``exp(a x)``."""
    window = window or Window.unit_square()
    n = rng.poisson(expected)
    u = rng.random(n)
    if abs(a) < 1e-12:
        x = u
    else:
        x = np.log1p(u * np.expm1(a)) / a
    y = rng.random(n)
    return PointPattern(np.column_stack([x, y]), window)


def correlation_curves(
    a_values, reps: int, *, seed: int = 0, bandwidth: float = 0.5, expected: float = 200.0, partial: bool = True, cells: int = 128
) -> dict:
    """Mean plain and partial Kendall correlations along the exponential-trend family.

    Plain: covariate ``x`` (and ``x + y``) against the constant-intensity
    residual field with a fixed bandwidth. Partial: ``x + y`` as interest with
    ``x`` as nuisance and the adaptive bandwidth.
    """
    window = Window.unit_square()
    grid = Grid.for_window(window, cells)
    cx = ScalarField.from_function(lambda x, y: x, grid)
    cxy = ScalarField.from_function(lambda x, y: x + y, grid)
    out = {"a": [], "tau_x": [], "tau_xy": [], "tau_partial": []}
    for a in a_values:
        tx, txy, tp = [], [], []
        for rep in range(reps):
            gen = rngmod.stream(seed, "curve", float(a).hex(), rep)
            pat = exponential_trend_pattern(a, expected, gen)
            sp = SamplingPoints.uniform(window, 100, rngmod.stream(seed, "curve-sampling", float(a).hex(), rep))
            tx.append(tau_hat(pat, cx, bandwidth, sp).value)
            txy.append(tau_hat(pat, cxy, bandwidth, sp).value)
            if partial:
                tp.append(tau_partial(pat, [cx], cxy, "adaptive", sp).value)
        out["a"].append(float(a))
        out["tau_x"].append(float(np.mean(tx)))
        out["tau_xy"].append(float(np.mean(txy)))
        out["tau_partial"].append(float(np.mean(tp)) if tp else float("nan"))
    return out


# ------------------------------------------------------- variance studies


def proposition_variance(intensity, reps: int, *, seed: int = 0, cells: int = 128, scale: float = 0.1) -> dict:
    """Monte Carlo variance of ``Σ_x C(x) - ∫ C λ`` with the true ``λ``.

    ``intensity`` is a callable ``f(x, y)`` on the unit square; ``C`` is a
    centred unit-variance Gaussian field with exponential correlation.
    """
    window = Window.unit_square()
    grid = Grid.for_window(window, cells)
    lam = ScalarField.from_function(intensity, grid)
    gspec = GaussFieldSpec(grid, scale=scale)
    values = np.empty(reps)
    for rep in range(0, reps, 2):
        fields = simulate_grfs(gspec, rngmod.stream(seed, "prop-field", rep), 2)
        for j, c in enumerate(fields):
            if rep + j >= reps:
                break
            pat = simulate_poisson(lam, rngmod.stream(seed, "prop-pattern", rep + j))
            values[rep + j] = cwr(pat, (), c, provenance=lam).value
    target = float(lam.values[grid.mask].sum() * grid.cell_area)
    return {"variance": float(np.var(values, ddof=1)), "mean": float(values.mean()), "target": target, "values": values}


def window_size_variances(
    sizes, reps: int, *, seed: int = 0, scale: float = 0.1, cells_per_unit: int = 64, sampling_intensity: float = 100.0
) -> dict:
    """Variances of the partial Kendall correlation and of CWR on ``[0, a]²``.

    Model: the correlated-covariate LGCP (``L1*`` with ``b = 1``) with
    nonparametric residuals. Sampling points are Poisson with the given
    intensity. Returns ``|W| var(τ_p)`` and ``var(CWR) / |W|`` per size.
    """
    base = get_model("L1*", b=1.0)
    out = {"a": [], "area_times_var_tau": [], "var_cwr_over_area": []}
    for a in sizes:
        spec = ModelSpec(
            name=base.name,
            intensity=base.intensity,
            covariates=base.covariates,
            lgcp=True,
            field_scale=scale,
            window=(0.0, 0.0, float(a), float(a)),
            cells=int(round(a * cells_per_unit)),
            params=base.params,
        )
        area = float(a) ** 2
        taus, cwrs = [], []
        for rep in range(reps):
            real = simulate_model(spec, seed, rep)
            pat = real.pattern
            c1, c2 = real.covariates["C1"], real.covariates["C2"]
            try:
                prov = fit_intensity(pat, [c1], "nonparametric")
            except ValueError:
                continue
            sp = SamplingPoints.poisson(pat.window, sampling_intensity, rngmod.stream(seed, "wsv-sampling", rep))
            if sp.n >= 2:
                taus.append(tau_partial(pat, [c1], c2, "adaptive", sp, provenance=prov).value)
            cwrs.append(cwr(pat, [c1], c2, provenance=prov).value)
        out["a"].append(float(a))
        out["area_times_var_tau"].append(area * float(np.var(taus, ddof=1)))
        out["var_cwr_over_area"].append(float(np.var(cwrs, ddof=1)) / area)
    return out
