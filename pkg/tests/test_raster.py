import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from covshift.geom import Window
from covshift.raster import (
    Grid,
    OutOfDomainError,
    ScalarField,
    integrate,
    lookup,
    read_ascii_grid,
    shift_field,
    write_ascii_grid,
)


def test_lookup_constant(grid64):
    f = ScalarField.constant(7.0, grid64)
    assert lookup(f, (0.123, 0.987)) == 7.0


def test_lookup_column_index(unit):
    g = Grid.with_cellsize(unit, 0.1)
    f = ScalarField.from_function(lambda x, y: np.floor(x / 0.1), g)
    assert lookup(f, (0.25, 0.99)) == 2


def test_lookup_cell_centre_exact(grid64, rng):
    f = ScalarField(grid64, rng.normal(size=grid64.shape))
    r, c = 17, 41
    assert lookup(f, (grid64.xc[c], grid64.yc[r])) == f.values[r, c]


def test_lookup_outside(grid64):
    with pytest.raises(OutOfDomainError):
        lookup(ScalarField.constant(1.0, grid64), (1.5, 0.5))


def test_integrate_area(unit):
    assert integrate(ScalarField.constant(1.0, Grid.with_cellsize(unit, 0.01))) == pytest.approx(1.0, abs=1e-9)


def test_integrate_linear(unit):
    g = Grid.with_cellsize(unit, 0.005)
    assert integrate(ScalarField.from_function(lambda x, y: x, g)) == pytest.approx(0.5, abs=1e-4)


def test_integrate_no_cells(unit):
    g = Grid.with_cellsize(unit, 0.01)
    tiny = Window.rectangle(0.001, 0.001, 0.002, 0.002)
    assert integrate(ScalarField.constant(3.0, g), tiny) == 0.0


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, (8, 8), elements=st.floats(-1e3, 1e3)),
    arrays(np.float64, (8, 8), elements=st.floats(-1e3, 1e3)),
    st.floats(-10, 10),
    st.floats(-10, 10),
)
def test_integrate_linear_map(f, g, a, b):
    grid = Grid.for_window(Window.unit_square(), 8)
    lhs = integrate(ScalarField(grid, a * f + b * g))
    rhs = a * integrate(ScalarField(grid, f)) + b * integrate(ScalarField(grid, g))
    scale = max(1.0, abs(a) * np.abs(f).sum() + abs(b) * np.abs(g).sum()) / 64
    assert abs(lhs - rhs) <= 1e-12 * scale


def test_shift_zero(grid64, rng):
    f = ScalarField(grid64, rng.normal(size=grid64.shape))
    assert np.array_equal(shift_field(f, (0, 0)).values, f.values)


def test_shift_full_period(grid64, rng):
    f = ScalarField(grid64, rng.normal(size=grid64.shape))
    assert np.array_equal(shift_field(f, (1.0, 0.0)).values, f.values)
    assert np.array_equal(shift_field(f, (0.0, -1.0)).values, f.values)


def test_shift_one_cell_rotates_rows(unit):
    g = Grid.for_window(unit, 4)
    f = ScalarField(g, np.arange(16.0).reshape(4, 4))
    out = shift_field(f, (0.25, 0.0)).values
    assert np.array_equal(out, np.roll(f.values, 1, axis=1))
    assert np.array_equal(out[0], [3, 0, 1, 2])


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_torus_preserves_values(dx, dy, seed):
    g = Grid.for_window(Window.unit_square(), 16)
    f = ScalarField(g, np.random.default_rng(seed).normal(size=g.shape))
    assert np.array_equal(np.sort(shift_field(f, (dx, dy)).values, axis=None), np.sort(f.values, axis=None))


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
def test_euclid_shift_change_of_variables(dx, dy):
    unit = Window.unit_square()
    g = Grid.for_window(unit, 50)
    f = ScalarField.from_function(lambda x, y: 1 + x * y + np.sin(3 * x), g)
    s = shift_field(f, (dx, dy), mode="euclid")
    kx, ky = np.rint(dx / g.cellsize) * g.cellsize, np.rint(dy / g.cellsize) * g.cellsize
    lhs = integrate(s)
    back = Window.rectangle(max(0, -kx), max(0, -ky), min(1, 1 - kx), min(1, 1 - ky)) if abs(kx) < 1 and abs(ky) < 1 else None
    rhs = 0.0 if back is None or back.area < 1e-12 else integrate(f, back)
    # one row or column of cells of discretization slack
    assert abs(lhs - rhs) <= 2 * 2.0 * g.cellsize + 1e-9


def test_euclid_masks_outside(unit):
    g = Grid.for_window(unit, 10)
    s = shift_field(ScalarField.constant(1.0, g), (0.5, 0.0), mode="euclid")
    assert s.mask[:, :5].sum() == 0 and s.mask[:, 5:].all()
    assert integrate(s) == pytest.approx(0.5)


def test_ascii_round_trip(tmp_path, rng):
    w = Window.rectangle(2.0, 3.0, 4.0, 4.0)
    g = Grid.with_cellsize(w, 0.25)
    f = ScalarField(g, rng.normal(size=g.shape))
    write_ascii_grid(f, tmp_path / "f.asc")
    text = (tmp_path / "f.asc").read_text().splitlines()
    assert text[0] == "ncols 8" and text[1] == "nrows 4"
    h = read_ascii_grid(tmp_path / "f.asc")
    assert h.grid.same_geometry(g)
    assert np.array_equal(h.values, f.values)


def test_ascii_north_up(tmp_path, unit):
    g = Grid.for_window(unit, 2)
    f = ScalarField(g, [[1.0, 2.0], [3.0, 4.0]])
    write_ascii_grid(f, tmp_path / "f.asc")
    rows = (tmp_path / "f.asc").read_text().splitlines()[-2:]
    assert rows[0].split() == ["3.0", "4.0"]
    assert lookup(read_ascii_grid(tmp_path / "f.asc"), (0.75, 0.75)) == 4.0


def test_ascii_nodata_outside_window(tmp_path):
    tri = Window.polygon([(0, 0), (1, 0), (0, 1)])
    g = Grid.for_window(tri, 8)
    f = ScalarField(g, np.where(g.mask, 1.0, np.nan))
    write_ascii_grid(f, tmp_path / "f.asc")
    h = read_ascii_grid(tmp_path / "f.asc", tri)
    assert np.isnan(h.values[~g.mask]).all()
    assert integrate(h) == pytest.approx(integrate(f))


def test_ascii_bad_count(tmp_path):
    (tmp_path / "f.asc").write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n")
    with pytest.raises(ValueError, match="expected 4 values"):
        read_ascii_grid(tmp_path / "f.asc")


def test_nonfinite_inside_rejected(grid64):
    v = np.zeros(grid64.shape)
    v[3, 3] = np.nan
    with pytest.raises(ValueError):
        ScalarField(grid64, v)
