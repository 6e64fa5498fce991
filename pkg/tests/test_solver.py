import numpy as np
import pytest
from scipy.integrate import quad

from gevreybl.grid import ConfigurationError, Field, Grid, dy
from gevreybl.solver import (
    InitSpec, NumericalBlowup, PositivityError, SimState, apply_boundary, cfl_dt,
    divergence_residual, implicit_diffusion, initial_state, make_initial, positivity_margin,
    reconstruct_v, step, theta_size, thomas,
)


def test_thomas_matches_dense(rng):
    n, m = 12, 3
    sub, sup = rng.uniform(-1, 0, (n, m)), rng.uniform(-1, 0, (n, m))
    diag = 3 + rng.uniform(0, 1, (n, m))
    rhs = rng.standard_normal((n, m))
    x = thomas(sub, diag, sup, rhs)
    for j in range(m):
        A = np.diag(diag[:, j]) + np.diag(sub[1:, j], -1) + np.diag(sup[:-1, j], 1)
        assert np.allclose(A @ x[:, j], rhs[:, j], atol=1e-13)


def test_implicit_diffusion_neumann_row(rng):
    rhs = rng.standard_normal((20, 4))
    x = implicit_diffusion(rhs, 1.0, 0.1, 0.5, wall="neumann", top="dirichlet")
    assert np.allclose(-3 * x[0] + 4 * x[1] - x[2], 0, atol=1e-13)
    assert np.all(x[-1] == 0)


def test_reconstruct_v_pure_temperature():
    g = Grid(16, 257)
    th = Field.from_function(g, lambda X, Y: np.exp(-Y**2) * np.cos(X))
    v = reconstruct_v(Field.zeros(g), th)
    exact = -2 * g.y[:, None] * np.exp(-g.y[:, None] ** 2) * np.cos(g.x[None, :])
    assert np.max(np.abs(v.phys - exact)) < 2e-3 * g.dy**2 / (12 / 256) ** 2
    assert np.all(v.phys[0] == 0)


def test_reconstruct_v_against_quadrature():
    g = Grid(16, 60001, Ymax=6.0)
    u = Field.from_function(g, lambda X, Y: np.sin(X) * Y * np.exp(-Y))
    v = reconstruct_v(u, Field.zeros(g))
    for xi in (0, 3, 7):
        x = g.x[xi]
        integrand = lambda y: (np.sin(x) * (1 - y) * np.exp(-y)) ** 2 - np.cos(x) * y * np.exp(-y)
        for y in (0.5, 2.0, 5.0):
            j = int(round(y / g.dy))
            ref = quad(integrand, 0, g.y[j], epsabs=1e-13, epsrel=1e-13)[0]
            assert abs(v.phys[j, xi] - ref) < 1e-8


def test_reconstruct_v_mean():
    g = Grid(32, 129)
    u = Field.from_function(g, lambda X, Y: (np.sin(X) + 0.3) * Y * np.exp(-Y**2))
    th = Field.from_function(g, lambda X, Y: np.cos(X) * np.exp(-Y**2))
    v = reconstruct_v(u, th)
    from gevreybl.grid import cumint_y, product

    expect = dy(th).phys.mean(axis=1) - dy(th).phys[0].mean() + cumint_y(product(dy(u), dy(u))).phys.mean(axis=1)
    assert np.allclose(v.phys.mean(axis=1), expect, atol=1e-13)


def test_apply_boundary_examples():
    g = Grid(16, 65)
    u = Field.from_function(g, lambda X, Y: 1.0 + Y + 0 * X)
    th = Field.from_function(g, lambda X, Y: 2.0 * Y + 0 * X)
    st = apply_boundary(SimState(0.0, u, th, Field.zeros(g)))
    assert np.all(st.u.phys[0] == 0)
    t = st.theta.phys
    assert np.max(np.abs(-3 * t[0] + 4 * t[1] - t[2])) < 1e-12
    again = apply_boundary(st)
    for a, b in ((again.u, st.u), (again.theta, st.theta), (again.v, st.v)):
        assert np.array_equal(a.phys, b.phys)


def test_cfl():
    g = Grid(32, 65)
    z = SimState.zeros(g)
    assert cfl_dt(z, 0.01) == 0.01
    u = Field.from_function(g, lambda X, Y: np.sin(X) * np.exp(-Y**2) * 100)
    st = SimState(0.0, u, Field.zeros(g), Field.zeros(g))
    st2 = SimState(0.0, u * 2.0, Field.zeros(g), Field.zeros(g))
    assert cfl_dt(st2, 1.0) == pytest.approx(cfl_dt(st, 1.0) / 2, rel=1e-14)


def test_cfl_regression_fixture():
    st = initial_state(InitSpec(amplitude=0.5, epsilon=1e-2), Grid(64, 97))
    # frozen once from the formula 0.4 * min(dx/max|u|, dy/max|v|)
    assert cfl_dt(st, 1.0) == pytest.approx(CFL_FIXTURE, rel=1e-12)


CFL_FIXTURE = 0.3055327364817404


def test_zero_state_is_fixed_point():
    g = Grid(32, 65)
    st = step(SimState.zeros(g), 0.01)
    assert st.u.max_abs() == 0 and st.theta.max_abs() == 0 and st.v.max_abs() == 0


def test_initial_data_properties():
    g = Grid(64, 97)
    spec = InitSpec(amplitude=1e-2, epsilon=1e-3)
    u0, th0 = make_initial(spec, g)
    assert np.all(u0.phys[0] == 0)
    assert np.max(np.abs(dy(th0).phys[0])) < 1e-12
    assert theta_size(th0, spec) == pytest.approx(1e-3, rel=0.05)
    # x-spectrum follows exp(-decay <xi>^(1/2)) exactly at any fixed row
    row = 10
    j = np.arange(1, 20)
    logc = np.log(np.abs(th0.spec[row, j])) + spec.decay * np.sqrt(g.bracket[j])
    assert np.ptp(logc) < 1e-6


def test_initial_data_zero_amplitude():
    u0, th0 = make_initial(InitSpec(amplitude=0.0), Grid(32, 65))
    assert u0.max_abs() == 0 and th0.max_abs() == 0


def test_initial_data_errors():
    with pytest.raises(ConfigurationError):
        InitSpec(epsilon=2.0)
    with pytest.raises(ConfigurationError):
        InitSpec(decay=0.05, delta=0.1)
    with pytest.raises(ConfigurationError):
        make_initial(InitSpec(profile_theta=lambda y: 0.0 * y), Grid(16, 33))


def test_positivity_abort():
    g = Grid(16, 65)
    th = Field.from_function(g, lambda X, Y: -0.8 * np.exp(-Y**2) + 0 * X)
    st = SimState(0.0, Field.zeros(g), th, Field.zeros(g))
    assert positivity_margin(st) < 0.5
    with pytest.raises(PositivityError):
        step(st, 0.01)


def test_nan_abort():
    g = Grid(16, 65)
    u = Field(g, phys=np.full((g.Ny, g.Nx), np.nan))
    with pytest.raises(NumericalBlowup):
        step(SimState(0.0, u, Field.zeros(g), Field.zeros(g)), 0.01)


def test_small_data_run_invariants():
    g = Grid(64, 97)
    st = initial_state(InitSpec(), g)
    r0 = np.sqrt(np.mean(divergence_residual(st).phys ** 2))
    for _ in range(40):
        st = step(st, 0.005)
        assert np.sqrt(np.mean(divergence_residual(st).phys ** 2)) <= 10 * r0
        assert positivity_margin(st) >= 0.5
        assert np.max(np.abs(st.u.phys[0])) == 0 and np.max(np.abs(st.v.phys[0])) == 0
    # preserved parity: u odd, theta and v even in x
    assert np.max(np.abs(st.u.spec.real)) < 1e-10
    assert np.max(np.abs(st.theta.spec.imag)) < 1e-10
    assert np.max(np.abs(st.v.spec.imag)) < 1e-10
