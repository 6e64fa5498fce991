import numpy as np
import pytest

from gevreybl import auxiliary as A
from gevreybl.checks import aux_collapse
from gevreybl.dyadic import dyadic_block, low_freq_cutoff, make_partition
from gevreybl.grid import Field, Grid, dx, dy, dyy, product
from gevreybl.solver import InitSpec, SimState, initial_state, reconstruct_v, step
from gevreybl.spaces import PhaseState


def _para_by_blocks(a: Field, b: Field) -> Field:
    """sum_k S_{k-1} a * Delta_k b, one dealiased product per block."""
    acc = Field.zeros(a.grid)
    for k in make_partition(a.grid).blocks:
        acc = acc + product(low_freq_cutoff(a, k - 1), dyadic_block(b, k))
    return acc


def _state(Nx=32, Ny=49, amplitude=0.05, epsilon=1e-2):
    return initial_state(InitSpec(amplitude=amplitude, epsilon=epsilon), Grid(Nx, Ny))


def _trajectory(st, dt, n):
    ax = A.initial_aux(st)
    for _ in range(n):
        st1 = step(st, dt)
        ax = A.evolve_W(ax, st, dt, st1)
        st = st1
    st1 = step(st, dt)
    return [(st, ax), (st1, A.evolve_W(ax, st, dt, st1))]


def test_collapse_cases():
    r = aux_collapse()
    assert r.passed, r.line()


def test_zero_W_gives_plain_derivatives():
    st = _state()
    ax = A.initial_aux(st)
    assert ax.W.max_abs() == 0 and ax.U.max_abs() == 0
    assert np.array_equal(ax.lam.spec, dx(st.u).spec)
    assert np.array_equal(ax.varphi.spec, dx(st.theta).spec)


def test_lambda_varphi_against_block_sums():
    snaps = _trajectory(_state(), 0.01, 5)
    st, ax = snaps[0]
    assert ax.W.max_abs() > 0
    lam = dx(st.u) - _para_by_blocks(dy(st.u), ax.W)
    phi = dx(st.theta) - _para_by_blocks(dy(st.theta), ax.W)
    assert (ax.lam - lam).max_abs() <= 1e-12 * max(1.0, lam.max_abs())
    assert (ax.varphi - phi).max_abs() <= 1e-12 * max(1.0, phi.max_abs())


def test_W_vanishes_at_wall():
    snaps = _trajectory(_state(), 0.01, 5)
    for _, ax in snaps:
        assert np.all(ax.W.phys[0] == 0)


def test_odd_wall_row():
    g = Grid(16, 65)
    W = Field.from_function(g, lambda X, Y: np.sin(Y) * np.cos(X))
    U = A.dy_odd_wall(W)
    assert np.allclose(U.phys[0], W.phys[1] / g.dy)
    assert np.max(np.abs(U.phys[0] - np.cos(g.x))) < g.dy**2


def test_pointwise_terms_against_physical_quadrature():
    g = Grid(32, 65)
    X, Y = g.mesh()
    f = Y * np.exp(-Y**2)
    h = np.exp(-Y**2)
    u = Field(g, phys=np.sin(X) * f)
    th = Field(g, phys=np.cos(2 * X) * h)
    st = SimState(0.0, u, th, reconstruct_v(u, th))
    ax = A.initial_aux(st)
    tU, tl, tp = A.terms_U(st, ax), A.terms_lambda(st, ax), A.terms_varphi(st, ax)
    # with W = 0, lambda = d_x u, so A4 = d_x^2 u
    assert np.max(np.abs(tU["A4"].phys + np.sin(X) * f)) < 1e-10
    assert np.max(np.abs(tl["B4"].phys + (np.cos(X) * f) ** 2)) < 1e-10
    C4 = np.cos(X) * f * 2 * np.sin(2 * X) * h
    assert np.max(np.abs(tp["C4"].phys - C4)) < 1e-10


def test_viscous_terms_only_when_nu_positive():
    st = _state()
    ax = A.initial_aux(st)
    assert "B_nu" not in A.terms_lambda(st, ax)
    visc = SimState(st.t, st.u, st.theta, st.v, nu=1e-3, theta_E=st.theta_E)
    assert "B_nu" in A.terms_lambda(visc, ax) and "C_nu" in A.terms_varphi(visc, ax)


def _small_data_pair(dt=0.00125, Ny=193, T=0.05):
    # reference small data; the forward-difference defect is O(dt), and 1e-2 holds from dt = 1.25e-3
    return _trajectory(_state(Ny=Ny, amplitude=1e-2, epsilon=1e-3), dt, int(round(T / dt))), dt


def test_trajectory_residual_small_against_terms():
    snaps, dt = _small_data_pair()
    (st, ax), (_, ax1) = snaps
    cases = [(A.residual_U, A.terms_U, "U"), (A.residual_lambda, A.terms_lambda, "lam"),
             (A.residual_varphi, A.terms_varphi, "varphi")]
    for res_fn, terms_fn, attr in cases:
        X0, X1 = getattr(ax, attr), getattr(ax1, attr)
        # every term of the equation, the linear left-hand side included
        terms = [*terms_fn(st, ax).values(), (X1 - X0) / dt, dyy(X0) * st.theta_E]
        biggest = max(A.band_norm(v, st.t, st.theta_E) for v in terms)
        assert A.band_norm(res_fn(snaps, dt), st.t, st.theta_E) < 1e-2 * biggest


def test_identity_gap_small_against_terms():
    snaps, dt = _small_data_pair()
    ph = PhaseState(0.1, 1.0, 0.0)
    for fn in (A.decompose_inner_U, A.decompose_inner_lambda, A.decompose_inner_varphi):
        vals = fn(snaps, dt, ph, 2.6)
        scale = max(abs(v) for v in vals.values())
        assert abs(A.identity_gap(vals)) < 1e-2 * scale


def test_snapshot_mismatch():
    st = _state()
    ax = A.initial_aux(st)
    st1 = step(st, 0.01)
    snaps = [(st, ax), (st1, A.evolve_W(ax, st, 0.01, st1))]
    with pytest.raises(A.SnapshotMismatch):
        A.residual_U(snaps, 0.02)
    other = _state(Ny=65)
    with pytest.raises(A.SnapshotMismatch):
        A.residual_U([(st, ax), (other, A.initial_aux(other))], 0.01)
    with pytest.raises(ValueError):
        A.evolve_W(ax, st, 0.0)
