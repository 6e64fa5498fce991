import numpy as np
import pytest
from hypothesis import given, strategies as st

from gevreybl.grid import (
    ConfigurationError, Field, Grid, GridMismatchError, cumint_y, dx, dy, dyy, product,
)


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        Grid(48, 65)
    with pytest.raises(ConfigurationError):
        Grid(8, 65)
    with pytest.raises(ConfigurationError):
        Grid(16, 32)
    g = Grid(32, 65)
    assert g.dy == pytest.approx(12 / 64)
    assert g.nk == 17


def test_phys_spec_roundtrip(rng):
    g = Grid(32, 33)
    a = rng.standard_normal((g.Ny, g.Nx))
    f = Field(g, phys=a)
    back = Field(g, spec=f.spec).phys
    assert np.max(np.abs(back - a)) <= 1e-12 * np.max(np.abs(a))


def test_reality_of_full_spectrum(rng):
    g = Grid(32, 33)
    full = Field(g, phys=rng.standard_normal((g.Ny, g.Nx))).full_spec()
    j = np.arange(1, g.Nx)
    assert np.allclose(full[:, j], np.conj(full[:, g.Nx - j]), atol=1e-14)


def test_field_product_operator_is_refused():
    g = Grid(16, 33)
    f = Field.zeros(g)
    with pytest.raises(TypeError):
        f * f


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        Field.zeros(Grid(16, 33)) + Field.zeros(Grid(32, 33))


def test_spectral_dx_of_sine_is_exact():
    g = Grid(32, 33)
    f = Field.from_function(g, lambda X, Y: np.sin(3 * X) * np.exp(-Y**2))
    exact = Field.from_function(g, lambda X, Y: 3 * np.cos(3 * X) * np.exp(-Y**2))
    assert (dx(f) - exact).max_abs() < 1e-12


def test_dy_dyy_second_order():
    errs1, errs2 = [], []
    # Ny = 65 is still pre-asymptotic for the fourth derivative of exp(-y^2)
    for Ny in (129, 257, 513):
        g = Grid(16, Ny)
        f = Field.from_function(g, lambda X, Y: np.cos(X) * np.exp(-Y**2))
        d1 = Field.from_function(g, lambda X, Y: -2 * Y * np.cos(X) * np.exp(-Y**2))
        d2 = Field.from_function(g, lambda X, Y: (4 * Y**2 - 2) * np.cos(X) * np.exp(-Y**2))
        errs1.append((dy(f) - d1).max_abs())
        # the one-sided wall/top rows of d_y^2 are first order; test the interior
        errs2.append(np.max(np.abs((dyy(f) - d2).phys[1:-1])))
    for e in (errs1, errs2):
        assert np.log2(e[0] / e[1]) > 1.8 and np.log2(e[1] / e[2]) > 1.8


def test_cumint_matches_antiderivative():
    g = Grid(16, 257)
    f = Field.from_function(g, lambda X, Y: np.exp(-Y) + 0 * X)
    F = cumint_y(f)
    # trapezoid error is dy^2/12 * (f'(Ymax) - f'(0)) ~ dy^2/12
    assert np.max(np.abs(F.phys - (1 - np.exp(-g.y))[:, None])) < 1.01 * g.dy**2 / 12


def test_restore_keeps_primary_representation(rng):
    g = Grid(16, 33)
    f = Field(g, spec=Field(g, phys=rng.standard_normal((g.Ny, g.Nx))).spec)
    r = Field.restore(g, f.phys, f.spec, "spec")
    assert np.array_equal(dy(r).spec, dy(f).spec)


@given(st.integers(min_value=0, max_value=5), st.integers(min_value=0, max_value=5))
def test_product_is_exact_for_resolved_modes(j, k):
    g = Grid(32, 33)
    f = Field.from_function(g, lambda X, Y: np.cos(j * X) + 0 * Y)
    h = Field.from_function(g, lambda X, Y: np.sin(k * X) + 0 * Y)
    exact = Field.from_function(g, lambda X, Y: np.cos(j * X) * np.sin(k * X) + 0 * Y)
    assert (product(f, h) - exact).max_abs() < 1e-13
