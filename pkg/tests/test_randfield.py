import numpy as np
import pytest
from scipy import stats

from covshift.geom import Window
from covshift.randfield import GaussFieldSpec, embedding_spectrum, simulate_grf, simulate_grfs
from covshift.raster import Grid
from covshift.rng import stream


@pytest.fixture(scope="module")
def sample():
    g = Grid.for_window(Window.unit_square(), 40)
    fields = simulate_grfs(GaussFieldSpec(g, scale=0.1), np.random.default_rng(5), 10_000)
    return g, np.stack([f.values for f in fields])


def test_zero_variance_constant(grid64):
    f = simulate_grf(GaussFieldSpec(grid64, variance=0.0, mean=2.5), np.random.default_rng(0))
    assert np.all(f.values == 2.5)


def test_pointwise_variance(sample):
    _, z = sample
    assert abs(z[:, 20, 20].var(ddof=1) - 1.0) < 0.05


def test_lag_correlation(sample):
    g, z = sample
    lag = int(round(0.1 / g.cellsize))
    a, b = z[:, 20, 10], z[:, 20, 10 + lag]
    assert abs(np.corrcoef(a, b)[0, 1] - np.exp(-1)) < 0.03


def test_gaussian_marginals(sample):
    _, z = sample
    v = z[:, 7, 31]
    assert abs(stats.skew(v)) < 0.1
    assert abs(stats.kurtosis(v)) < 0.1


def test_independent_streams_uncorrelated(grid64):
    # a single pair of fields has cross-correlation sd near 0.12 at this
    # range, so the bound applies to the average over replicated pairs
    spec = GaussFieldSpec(grid64)
    corr = [
        np.corrcoef(simulate_grf(spec, stream(rep, "a")).values.ravel(), simulate_grf(spec, stream(rep, "b")).values.ravel())[0, 1]
        for rep in range(300)
    ]
    assert abs(np.mean(corr)) < 0.03


def test_same_seed_bit_identical(grid64):
    spec = GaussFieldSpec(grid64)
    assert np.array_equal(simulate_grf(spec, stream(3, "f")).values, simulate_grf(spec, stream(3, "f")).values)


def test_mean_and_variance_parameters(grid64):
    fields = simulate_grfs(GaussFieldSpec(grid64, variance=4.0, mean=-1.0), np.random.default_rng(2), 2000)
    v = np.array([f.values[5, 5] for f in fields])
    assert abs(v.mean() + 1) < 0.15 and abs(v.var() / 4 - 1) < 0.1


def test_clipped_mass_small(grid64):
    _, clipped = embedding_spectrum(GaussFieldSpec(grid64, scale=0.1))
    assert 0 <= clipped <= 0.01


def test_invalid_spec(grid64):
    with pytest.raises(ValueError):
        GaussFieldSpec(grid64, scale=0)
    with pytest.raises(ValueError):
        GaussFieldSpec(grid64, variance=-1)
