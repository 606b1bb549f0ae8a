import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats
from scipy.spatial.distance import pdist

from covshift.geom import UnsupportedGeometryError, Window
from covshift.models import get_model, simulate_lgcp, simulate_model
from covshift.pointsim import Interaction, simulate_gibbs, simulate_poisson
from covshift.raster import Grid, ScalarField, integrate
from covshift.rng import stream


def poisson_chisquare(counts, mean):
    """Goodness of fit of integer counts to Poisson(mean) on quantile bins."""
    edges = np.unique(stats.poisson.ppf(np.linspace(0, 1, 11)[1:-1], mean).astype(int))
    bins = np.concatenate([[-np.inf], edges + 0.5, [np.inf]])
    observed = np.histogram(counts, bins)[0]
    probs = np.diff(stats.poisson.cdf(np.concatenate([[-1], edges, [np.inf]]), mean))
    expected = probs * len(counts)
    return stats.chisquare(observed, expected).pvalue


def test_zero_intensity_empty(grid64):
    assert simulate_poisson(ScalarField.constant(0.0, grid64), np.random.default_rng(0)).n == 0


def test_negative_intensity_rejected(grid64):
    with pytest.raises(ValueError):
        simulate_poisson(ScalarField.constant(-1.0, grid64), np.random.default_rng(0))


def test_poisson_mean_and_dispersion():
    g = Grid.for_window(Window.unit_square(), 32)
    lam = ScalarField.constant(math.exp(5), g)
    counts = np.array([simulate_poisson(lam, stream(1, "csr", r)).n for r in range(5000)])
    assert abs(counts.mean() - 148.4) < 2
    assert abs(counts.var(ddof=1) / counts.mean() - 1) < 0.1


def test_parabolic_intensity_symmetric():
    g = Grid.for_window(Window.unit_square(), 64)
    lam = ScalarField.from_function(lambda x, y: 400 * (1 - 4 * (x - 0.5) ** 2), g)
    left = right = 0
    for r in range(500):
        p = simulate_poisson(lam, stream(2, "para", r))
        left += int(np.sum(p.x < 0.5))
        right += int(np.sum(p.x >= 0.5))
    # counts are independent Poisson with equal means
    z = (left - right) / math.sqrt(left + right)
    assert abs(z) < 3.5
    assert (left + right) / 500 == pytest.approx(integrate(lam), rel=0.02)


def test_points_inside_polygon():
    tri = Window.polygon([(0, 0), (1, 0), (0, 1)])
    g = Grid.for_window(tri, 32)
    p = simulate_poisson(ScalarField.constant(500.0, g), np.random.default_rng(3))
    assert np.all(tri.contains(p.x, p.y))
    assert abs(p.n - 250) < 5 * math.sqrt(250)


def _small(name, **params):
    spec = get_model(name, **params)
    return replace(spec, cells=32)


def test_lgcp_l1_mean_and_overdispersion():
    spec = _small("L1")
    counts = np.array([simulate_model(spec, 4, r).pattern.n for r in range(5000)])
    assert abs(counts.mean() - math.exp(5)) < 3
    assert counts.var(ddof=1) / counts.mean() > 1.5


def test_lgcp_l2_mean():
    spec = _small("L2")
    counts = np.array([simulate_model(spec, 5, r).pattern.n for r in range(5000)])
    assert abs(counts.mean() - math.exp(5)) < 3


def test_lgcp_degenerate_fields_reduce_to_poisson(grid64):
    zero = {"Z1": ScalarField.constant(0.0, grid64), "Z2": ScalarField.constant(0.0, grid64)}
    a = simulate_lgcp("exp(4.0 + Z1 + Z2)", zero, stream(6, "p"))
    b = simulate_poisson(ScalarField.constant(math.exp(4.0), grid64), stream(6, "p"))
    assert np.array_equal(a.xy, b.xy)


def test_gibbs_validation():
    with pytest.raises(ValueError):
        Interaction("strauss", gamma=1.5, radius=0.05)
    with pytest.raises(ValueError):
        Interaction("hardcore_strauss", gamma=4.0, radius=0.02, hardcore=0.0)
    with pytest.raises(ValueError):
        Interaction("hardcore_strauss", gamma=4.0, radius=0.01, hardcore=0.02)


def test_gibbs_rejects_polygon():
    tri = Window.polygon([(0, 0), (1, 0), (0, 1)])
    g = Grid.for_window(tri, 16)
    with pytest.raises(UnsupportedGeometryError):
        simulate_gibbs(Interaction("strauss", 0.5, 0.05), ScalarField.constant(100.0, g), np.random.default_rng(0))


@pytest.mark.slow
def test_strauss_gamma_one_is_poisson():
    g = Grid.for_window(Window.unit_square(), 32)
    beta = ScalarField.constant(100.0, g)
    inter = Interaction("strauss", gamma=1.0, radius=0.05)
    counts = np.array([simulate_gibbs(inter, beta, stream(7, "g1", r), steps=20_000).n for r in range(1000)])
    assert abs(counts.mean() - 100) < 4 * math.sqrt(100 / 1000)
    assert poisson_chisquare(counts, 100.0) > 0.01


def test_strauss_inhibits():
    g = Grid.for_window(Window.unit_square(), 32)
    beta = ScalarField.constant(200.0, g)
    soft = [simulate_gibbs(Interaction("strauss", 0.5, 0.05), beta, stream(8, "s", r), steps=30_000).n for r in range(30)]
    assert np.mean(soft) < 180


def test_h1_hardcore_never_violated():
    spec = get_model("H1")
    for r in range(200):
        xy = simulate_model(spec, 9, r).pattern.xy
        if len(xy) > 1:
            assert pdist(xy).min() >= 0.01


@pytest.mark.slow
def test_s1_mean_count():
    spec = get_model("S1")
    counts = [simulate_model(spec, 10, r).pattern.n for r in range(1000)]
    assert abs(np.mean(counts) / math.exp(5) - 1) < 0.05


def test_h_trend_normalized():
    real = simulate_model(get_model("H1"), 11, 0)
    assert real.intensity.window_values().max() == pytest.approx(180.0)
