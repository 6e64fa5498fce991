import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import Polynomial

from gevreybl import monitor as M
from gevreybl.auxiliary import AuxState, initial_aux
from gevreybl.grid import ConfigurationError, Field, Grid, dy, dyy
from gevreybl.solver import InitSpec, SimState, initial_state
from gevreybl.spaces import NormSpec, PhaseState, sobolev_norm

PH = PhaseState(0.1, 1.0, 0.0)


def _zero():
    g = Grid(16, 49)
    return SimState.zeros(g), AuxState.zeros(g)


def _params(**kw):
    base = dict(M=0.04, zeta=0.002, epsilon=1e-3, s=2.6, eta=1 / 16, k_coupling=17.2,
                gamma=1.0, theta_E=1.0)
    return M.BootstrapParams(**{**base, **kw})


def _constant_ledger(c, T, dt, gamma=2.0):
    led = M.EnergyLedger(s=2.6, gamma=gamma, theta_E=1.0)
    norms = {(f, q): c for f in M.TRACKED for q in M.OFFSETS_Q}
    for i in range(int(round(T / dt))):
        led.observe(i * dt, norms)
        led.advance(dt, 1.0)
    led.observe(T, norms)
    return led


def test_mu_rhs_zero_fields():
    st_, ax = _zero()
    val, groups = M.mu_rhs(st_, ax, PH)
    assert val == 1.0 and all(v == 0 for v in groups.values())


def test_mu_rhs_temperature_only_group():
    g = Grid(16, 97)
    th = Field.from_function(g, lambda X, Y: 1e-2 * np.cos(X) * np.exp(-Y**2))
    st_ = SimState(0.0, Field.zeros(g), th, Field.zeros(g))
    _, groups = M.mu_rhs(st_, AuxState.zeros(g), PH)
    n = lambda f, r: float(sobolev_norm(f, NormSpec(r + 0.01, 0, True), 0.0, 1.0, PH))
    g2 = n(th, 1.5) ** 2 + n(dy(th), 2.5) ** 2 + n(dyy(th), 1.5) ** 2
    assert groups["G2"] == pytest.approx(g2, rel=1e-12)
    assert groups["G3"] == pytest.approx(n(th, 0.5) ** 4 + (n(dy(th), 1.5) + n(dyy(th), 1.5)) ** 4,
                                         rel=1e-12)


def test_mu_rhs_homogeneity():
    st_ = initial_state(InitSpec(), Grid(32, 65))
    ax = initial_aux(st_)
    _, g1 = M.mu_rhs(st_, ax, PH)
    big = SimState(0.0, st_.u * 2.0, st_.theta * 2.0, st_.v * 2.0)
    _, g2 = M.mu_rhs(big, ax, PH)
    powers = {"G1": 2, "G2": 4, "G3": 16, "G4": 4, "G5": 4}
    for k, p in powers.items():
        assert g2[k] == pytest.approx(p * g1[k], rel=1e-12)


def test_mu_rhs_logs_and_rejects_nonfinite():
    st_, ax = _zero()
    led = M.EnergyLedger(s=2.6, gamma=1.0, theta_E=1.0)
    M.mu_rhs(st_, ax, PH, ledger=led)
    assert {r[1] for r in led.rows} == {f"mu_group_G{i}" for i in range(1, 6)}
    g = st_.grid
    bad = SimState(0.0, Field(g, phys=np.full((g.Ny, g.Nx), np.inf)), st_.theta, st_.v)
    with np.errstate(all="ignore"), pytest.raises(FloatingPointError):
        M.mu_rhs(bad, ax, PH)


def test_advance_mu():
    ph = PhaseState(0.1, 1.0, 0.0)
    ms = M.advance_mu(M.MuState(), 1.0, 0.01, ph)
    assert ms.mu == pytest.approx(0.01) and ms.t_star is None and not ms.terminated
    ms = M.advance_mu(M.MuState(mu=0.095, t=0.3), 1.0, 0.01, ph)
    assert ms.t_star == pytest.approx(0.305, rel=1e-12) and ms.terminated
    with pytest.raises(ValueError):
        M.advance_mu(M.MuState(), 1.0, 0.0, ph)
    with pytest.raises(ValueError):
        M.advance_mu(M.MuState(), 0.5, 0.01, ph)


def test_energy_functional_zero_and_closed_form():
    led = _constant_ledger(0.0, 1.0, 0.1)
    assert M.energy_functional(led, "u", 2.6) == 0.0
    c, T, gamma = 0.3, 1.0, 2.0
    led = _constant_ledger(c, T, 0.05, gamma)
    expect = c**2 + gamma * c**2 * T + c**2 * T / 16
    assert M.energy_functional(led, "u", 2.6) == pytest.approx(expect, rel=1e-12)


def test_energy_functional_missing():
    led = _constant_ledger(0.1, 0.1, 0.05)
    with pytest.raises(M.MissingSeries):
        M.energy_functional(led, "dxu", 2.6)
    with pytest.raises(M.MissingSeries):
        M.energy_functional(led, "u", 2.7)
    with pytest.raises(M.MissingSeries):
        M.energy_functional(led, "u", 2.6 + 7 / 4)


@given(st.lists(st.floats(0, 10), min_size=2, max_size=8))
def test_energy_functional_monotone_in_time(values):
    led = M.EnergyLedger(s=2.6, gamma=1.0, theta_E=1.0)
    prev = 0.0
    for i, v in enumerate(values):
        led.observe(0.1 * i, {(f, q): v for f in M.TRACKED for q in M.OFFSETS_Q})
        e = M.energy_functional(led, "u", 2.6)
        assert e >= prev * (1 - 1e-15)
        prev = e
        led.advance(0.1, 1.0)


def test_ledger_array_roundtrip():
    led = _constant_ledger(0.2, 0.2, 0.05)
    back = M.EnergyLedger.from_arrays(led.to_arrays())
    assert back.sup == led.sup and back.l2t == led.l2t and back.l2mu == led.l2mu
    assert back.initial == led.initial and back.t == led.t


def test_bootstrap_zero_data():
    led = _constant_ledger(0.0, 0.1, 0.05)
    rep = M.bootstrap_check(led, _params())
    for k in ("dyu<=M", "dytheta<=zeta", "dyu<=sqrt6/4*M", "dytheta<=sqrt3/2*zeta"):
        assert rep[k]["holds"] and rep[k]["margin"] == np.inf
    assert rep["positivity_holds"]


def test_bootstrap_first_violation():
    led = M.EnergyLedger(s=2.6, gamma=1.0, theta_E=1.0)
    p = _params()
    for i, scale in enumerate((0.1, 0.5, 1.5, 0.2)):
        led.observe(0.01 * i, {("dyu", 0): 0.0, ("dytheta", 0): scale * p.zeta},
                    {"positivity": 0.9})
    rep = M.bootstrap_check(led, p)
    assert not rep["dytheta<=zeta"]["holds"]
    assert rep["dytheta<=zeta"]["first_violation_t"] == pytest.approx(0.02)
    assert rep["dytheta<=sqrt3/2*zeta"]["first_violation_t"] == pytest.approx(0.02)
    assert rep["dyu<=M"]["holds"] and rep["positivity_margin"] == 0.9


def test_bootstrap_params_validation():
    with pytest.raises(ConfigurationError):
        _params(epsilon=1.0)


def test_k_formula():
    assert M.k_from_formula(0.0, 0.0, 1.0) == pytest.approx((3 / 8 + 5) / (5 / 16), rel=1e-15)
    with pytest.raises(ConfigurationError):
        M.k_from_formula(0.0, 1.0, 1.0)


def test_minimal_C_units():
    C = Polynomial([0.0, 1.0])
    one = Polynomial([1.0])
    assert M.minimal_C(2 * one, one + C) == pytest.approx(1.0)
    assert M.minimal_C(one, 2 * one) == 0.0
    assert M.minimal_C(2 * one, one - C) == np.inf
    assert M.minimal_C(4 * one, C * C) == pytest.approx(2.0)


def test_slack_zero_data():
    led = _constant_ledger(0.0, 0.1, 0.05)
    for which in M.INEQUALITIES:
        rows = M.inequality_slack(led, which, _params())
        assert len(rows) == len(led.history)
        for t, lhs, rhs, c, ok in rows:
            assert lhs == 0 and rhs == 0 and ok
            assert c in (None, 0.0)
    with pytest.raises(ValueError):
        M.inequality_slack(led, "nonsense", _params())


def test_refinement_drift():
    rows = [(0.0, 1.0, 1.0, 2.0, True)]
    assert M.refinement_drift([rows, rows]) == 1.0
    assert M.refinement_drift([rows, [(0.0, 1, 1, 3.0, True)]]) == pytest.approx(1.5)


def test_fitted_decay_rate_exact_spectrum():
    g = Grid(64, 33)
    spec = np.zeros((g.Ny, g.Nx // 2 + 1), dtype=complex)
    spec[:, :-1] = np.exp(-3.0 * np.sqrt(g.bracket[:-1]))[None, :] * np.exp(-g.y[:, None])
    assert M.fitted_decay_rate(Field(g, spec=spec)) == pytest.approx(3.0, rel=1e-10)
    assert M.fitted_decay_rate(Field.zeros(g)) == np.inf


def test_compute_norms_keys_and_sum():
    st_ = initial_state(InitSpec(), Grid(32, 65))
    norms = M.compute_norms(st_, initial_aux(st_), PH, 2.6)
    assert {k[0] for k in norms} == set(M.TRACKED)
    for q in M.OFFSETS_Q:
        assert norms[("u_s1", q)] == norms[("u", q)] + norms[("dyu", q)]
