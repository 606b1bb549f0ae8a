import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covshift.geom import (
    PointPattern,
    UnsupportedGeometryError,
    Window,
    default_shift_radius,
    draw_shift_vectors,
    euclid_shift_intersection,
    torus_shift,
)


def test_torus_wraps_right_edge(unit):
    assert np.allclose(torus_shift([[0.9, 0.5]], (0.2, 0.0), unit), [[0.1, 0.5]])


def test_torus_zero_shift_is_identity(unit):
    assert np.array_equal(torus_shift([[0.3, 0.3]], (0.0, 0.0), unit), [[0.3, 0.3]])


def test_torus_negative_and_vertical_wrap(unit):
    assert np.allclose(torus_shift([[0.5, 0.95]], (-0.7, 0.1), unit), [[0.8, 0.05]])


def test_torus_upper_edge_maps_to_lower(unit):
    out = torus_shift([[1.0, 1.0]], (0.0, 0.0), unit)
    assert np.all(out >= 0) and np.all(out < 1)


def test_torus_rejects_polygon():
    tri = Window.polygon([(0, 0), (1, 0), (0, 1)])
    with pytest.raises(UnsupportedGeometryError):
        torus_shift([[0.1, 0.1]], (0.1, 0.1), tri)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0, 2, exclude_max=True), st.floats(0, 1, exclude_max=True)), min_size=1, max_size=20),
    st.floats(-5, 5),
    st.floats(-5, 5),
)
def test_torus_round_trip(points, dx, dy):
    w = Window.rectangle(0, 0, 2, 1)
    xy = np.array(points)
    back = torus_shift(torus_shift(xy, (dx, dy), w), (-dx, -dy), w)
    # a point may come back at the opposite edge of the half-open torus
    diff = np.abs(back - xy)
    diff = np.minimum(diff, np.array([2.0, 1.0]) - diff)
    assert diff.max() <= 1e-12
    out = torus_shift(xy, (dx, dy), w)
    assert np.all(out[:, 0] >= 0) and np.all(out[:, 0] < 2) and np.all(out[:, 1] >= 0) and np.all(out[:, 1] < 1)


def test_intersection_half(unit):
    wi = euclid_shift_intersection(unit, (0.5, 0.0))
    assert wi.bounds == pytest.approx((0.5, 0, 1, 1))
    assert wi.area == pytest.approx(0.5)


def test_intersection_identity(unit):
    assert euclid_shift_intersection(unit, (0, 0)).area == pytest.approx(1.0)


def test_intersection_rectangle():
    w = Window.rectangle(0, 0, 2, 1)
    wi = euclid_shift_intersection(w, (0.4, 0.3))
    assert wi.bounds == pytest.approx((0.4, 0.3, 2, 1))
    assert wi.area == pytest.approx(1.12)


def test_intersection_empty_signal(unit):
    assert euclid_shift_intersection(unit, (1.5, 0)) is None


@settings(max_examples=100, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_intersection_symmetric_area(dx, dy):
    w = Window.polygon([(0, 0), (2, 0), (2, 1), (1, 1.5), (0, 1)])
    a = euclid_shift_intersection(w, (dx, dy))
    b = euclid_shift_intersection(w, (-dx, -dy))
    area_a = 0.0 if a is None else a.area
    area_b = 0.0 if b is None else b.area
    assert area_a == pytest.approx(area_b, abs=1e-12)
    assert area_a <= w.area + 1e-12


def test_shift_vectors_in_disc():
    v = draw_shift_vectors(1000, 0.5, np.random.default_rng(1))
    assert v.shape == (1000, 2)
    assert np.all((v**2).sum(axis=1) <= 0.25)


def test_shift_vectors_moments():
    v = draw_shift_vectors(100_000, 1.0, np.random.default_rng(2))
    assert abs(v[:, 0].mean()) < 0.01 and abs(v[:, 1].mean()) < 0.01
    inner = np.mean(np.hypot(v[:, 0], v[:, 1]) <= 0.5)
    assert abs(inner - 0.25) < 0.01


def test_shift_vectors_reproducible():
    a = draw_shift_vectors(50, 0.3, np.random.default_rng(9))
    b = draw_shift_vectors(50, 0.3, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_default_radius_unit_square(unit):
    r = default_shift_radius(unit)
    assert r == pytest.approx(math.sqrt(2) / 2, abs=1e-9)
    assert (1 - r / math.sqrt(2)) ** 2 == pytest.approx(0.25, abs=1e-9)


def test_default_radius_scales(unit):
    assert default_shift_radius(Window.rectangle(0, 0, 2, 2)) == pytest.approx(2 * default_shift_radius(unit), rel=1e-12)


@pytest.mark.parametrize("sides", [(1, 1), (2, 1), (3, 0.5), (1, 4)])
def test_default_radius_stress(sides):
    w = Window.rectangle(0, 0, *sides)
    r = default_shift_radius(w)
    theta = np.random.default_rng(3).uniform(0, 2 * np.pi, 10_000)
    dx, dy = np.abs(r * np.cos(theta)), np.abs(r * np.sin(theta))
    ratio = (sides[0] - dx) * (sides[1] - dy) / w.area
    assert ratio.min() >= 0.25 - 1e-9


def test_default_radius_polygon_rejected():
    with pytest.raises(UnsupportedGeometryError):
        default_shift_radius(Window.polygon([(0, 0), (1, 0), (0, 1)]))


def test_window_validation():
    with pytest.raises(ValueError):
        Window.rectangle(1, 0, 0, 1)
    with pytest.raises(ValueError):
        Window.polygon([(0, 0), (1, 1), (1, 0), (0, 1)])


def test_pattern_boundary_inclusive(unit):
    p = PointPattern([[0, 0], [1, 1], [0.5, 1.0]], unit)
    assert p.n == 3
    with pytest.raises(ValueError):
        PointPattern([[1.01, 0.5]], unit)


def test_pattern_csv_round_trip(tmp_path, unit):
    p = PointPattern([[0.1, 0.2], [0.3, 0.4], [0.3, 0.4]], unit)
    p.to_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "x,y"
    q = PointPattern.from_csv(tmp_path / "p.csv", unit)
    assert np.array_equal(p.xy, q.xy)
