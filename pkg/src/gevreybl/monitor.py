"""Gevrey-radius ODE, energy ledger, bootstrap bounds and inequality slacks.

The a priori inequalities carry unspecified constants ``C`` and ``C_eta``.
Both are identified with a single unknown ``C``; each inequality then reads
``lhs(C) <= rhs(C)`` with polynomial sides, and the monitor reports the
smallest ``C >= 0`` for which it holds.  The three energy bounds of the main
a priori estimate have explicit right-hand sides and are checked as booleans.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import Polynomial

from .grid import ConfigurationError, Field, dx, dy, dyy
from .spaces import (
    PhaseState,
    PastTStarError,
    gevrey_lift,
    mode_energy,
    norm_from_energy,
    weight_dy,
)

# offsets relative to s, in quarters: s-1 ... s+3/2
OFFSETS_Q = tuple(range(-4, 7))

TRACKED = (
    "u", "theta", "dyu", "dytheta", "dy2u", "dy2theta", "dy3u", "dy3theta",
    "U", "dyU", "lam", "dylam", "phi", "dyphi", "dxu", "dxtheta", "u_s1",
)

# d_y partner of each field, used by the energy functional
DY_OF = {
    "u": "dyu", "theta": "dytheta", "dyu": "dy2u", "dytheta": "dy2theta",
    "dy2u": "dy3u", "dy2theta": "dy3theta", "U": "dyU", "lam": "dylam", "phi": "dyphi",
}


class MissingSeries(KeyError):
    """A ledger series needed by a functional or inequality is absent."""


# ------------------------------------------------------------------ fields

def field_set(state, aux) -> dict:
    """Every tracked field (un-lifted) for a snapshot."""
    u, th = state.u, state.theta
    uy, thy = dy(u), dy(th)
    uyy, thyy = dyy(u), dyy(th)
    return {
        "u": u, "theta": th, "dyu": uy, "dytheta": thy, "dy2u": uyy, "dy2theta": thyy,
        "dy3u": dy(uyy), "dy3theta": dy(thyy),
        "U": aux.U, "dyU": dy(aux.U), "lam": aux.lam, "dylam": dy(aux.lam),
        "phi": aux.varphi, "dyphi": dy(aux.varphi), "dxu": dx(u), "dxtheta": dx(th),
    }


def field_energies(state, aux, phase: PhaseState) -> dict:
    """Lifted per-mode energies of each tracked field at the state's time."""
    t, tE = state.t, state.theta_E
    return {k: mode_energy(f, t, tE, phase) for k, f in field_set(state, aux).items()}


def compute_norms(state, aux, phase: PhaseState, s: float) -> dict:
    """Lifted H^{r,0}_Psi norms for r = s + q/4, keyed by (field, q)."""
    g = state.grid
    en = field_energies(state, aux, phase)
    out = {}
    for name, e in en.items():
        for q in OFFSETS_Q:
            out[(name, q)] = norm_from_energy(e, g, s + q / 4)
    for q in OFFSETS_Q:
        out[("u_s1", q)] = out[("u", q)] + out[("dyu", q)]
    return out


# -------------------------------------------------------------- mu and T*

@dataclass(frozen=True)
class MuState:
    mu: float = 0.0
    mu_dot: float = 1.0
    t: float = 0.0
    t_star: float | None = None

    @property
    def terminated(self) -> bool:
        return self.t_star is not None


def mu_groups(state, phase: PhaseState, sigma_plus: float = 0.01) -> dict:
    """The five norm groups on the right of the radius ODE (without the 1)."""
    g = state.grid
    t, tE = state.t, state.theta_E
    u, th = state.u, state.theta
    uy, thy = dy(u), dy(th)
    uyy, thyy = dyy(u), dyy(th)
    uyyy, thyyy = dy(uyy), dy(thyy)
    E = {k: mode_energy(f, t, tE, phase) for k, f in {
        "u": u, "th": th, "uy": uy, "thy": thy, "uyy": uyy, "thyy": thyy,
        "uyyy": uyyy, "thyyy": thyyy}.items()}
    n = lambda k, r: norm_from_energy(E[k], g, r + sigma_plus)
    pair = lambda a, b, r: np.hypot(n(a, r), n(b, r))
    # H^{r,1} = ||f||_r + ||d_y f||_r; the pair norm is the l^2 sum of the two
    s1 = lambda a, da, r: n(a, r) + n(da, r)
    pair1 = lambda a, da, b, db, r: np.hypot(s1(a, da, r), s1(b, db, r))
    g1 = (1 + t) ** 0.25 * (pair("uy", "thy", 2.5) + pair1("uyy", "uyyy", "thyy", "thyyy", 1.5))
    g2 = (1 + t) ** 0.5 * (n("u", 2.5) ** 2 + n("th", 1.5) ** 2
                           + pair("uy", "thy", 2.5) ** 2 + pair("uyy", "thyy", 1.5) ** 2)
    g3 = n("th", 0.5) ** 4 + (1 + t) * pair1("uy", "uyy", "thy", "thyy", 1.5) ** 4
    g4 = (1 + t) ** 0.5 * n("thy", 1.5) * (n("uyyy", 1.5) + n("thyyy", 1.5))
    g5 = (n("uyyy", 0.5) * (n("uy", 0.5) + n("uyy", 0.5) + n("th", 0.5))
          + n("thyyy", 0.5) * n("uy", 0.5))
    return {"G1": g1, "G2": g2, "G3": g3, "G4": g4, "G5": g5}


def mu_rhs(state, aux, phase: PhaseState, ledger=None, sigma_plus: float = 0.01):
    """Right-hand side of the radius ODE; returns (value, groups)."""
    groups = mu_groups(state, phase, sigma_plus)
    for k, v in groups.items():
        if not np.isfinite(v):
            raise FloatingPointError(f"non-finite mu-rhs group {k}")
    value = 1.0 + sum(groups.values())
    if ledger is not None:
        ledger.log_series(state.t, {f"mu_group_{k}": v for k, v in groups.items()})
    return value, groups


def advance_mu(ms: MuState, rhs: float, dt: float, phase: PhaseState) -> MuState:
    """Forward Euler for mu; flags T* when mu reaches delta/gamma."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if rhs < 1:
        raise ValueError("mu rhs must be >= 1")
    mu_new = ms.mu + dt * rhs
    t_new = ms.t + dt
    t_star = ms.t_star
    if t_star is None and mu_new >= phase.mu_star:
        # linear interpolation inside the step (exact for constant rhs)
        t_star = ms.t + (phase.mu_star - ms.mu) / rhs
    return MuState(mu=mu_new, mu_dot=rhs, t=t_new, t_star=t_star)


# ----------------------------------------------------------------- ledger

@dataclass
class EnergyLedger:
    """Running L^inf_t, L^2_t and L^2_{t,mu'} accumulators of lifted norms."""

    s: float
    gamma: float
    theta_E: float
    sup: dict = field(default_factory=dict)
    l2t: dict = field(default_factory=dict)
    l2mu: dict = field(default_factory=dict)
    current: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    t: float = 0.0

    def observe(self, t: float, norms: dict, extras: dict | None = None) -> None:
        """Record norms at time t (integrals so far end at t)."""
        self.t = t
        if not self.initial:
            self.initial = dict(norms)
        self.current = dict(norms)
        for k, v in norms.items():
            self.sup[k] = max(self.sup.get(k, 0.0), v)
            self.l2t.setdefault(k, 0.0)
            self.l2mu.setdefault(k, 0.0)
        self.history.append({
            "t": t, "now": dict(norms), "sup": dict(self.sup),
            "l2t": dict(self.l2t), "l2mu": dict(self.l2mu), "extras": dict(extras or {}),
        })

    def advance(self, dt: float, mu_dot: float) -> None:
        """Left-endpoint update with the norms of the last observation."""
        if dt <= 0 or mu_dot < 0:
            raise ValueError("need dt > 0 and mu_dot >= 0")
        for k, v in self.current.items():
            self.l2t[k] += v * v * dt
            self.l2mu[k] += mu_dot * v * v * dt

    def log_series(self, t: float, values: dict) -> None:
        for k, v in values.items():
            self.rows.append((t, k, float(v)))

    # -- state for resume
    def to_arrays(self) -> dict:
        keys = sorted(self.sup)
        return {
            "keys": np.array([f"{f}|{q}" for f, q in keys]),
            "sup": np.array([self.sup[k] for k in keys]),
            "l2t": np.array([self.l2t[k] for k in keys]),
            "l2mu": np.array([self.l2mu[k] for k in keys]),
            "current": np.array([self.current[k] for k in keys]),
            "initial": np.array([self.initial[k] for k in keys]),
            "meta": np.array([self.s, self.gamma, self.theta_E, self.t]),
        }

    @classmethod
    def from_arrays(cls, arr) -> "EnergyLedger":
        s, gamma, tE, t = (float(x) for x in arr["meta"])
        keys = []
        for item in arr["keys"]:
            f, q = str(item).split("|")
            keys.append((f, int(q)))
        led = cls(s=s, gamma=gamma, theta_E=tE, t=t)
        for name in ("sup", "l2t", "l2mu", "current", "initial"):
            setattr(led, name, {k: float(v) for k, v in zip(keys, arr[name])})
        return led


def _q(ledger, r) -> int:
    q = (r - ledger.s) * 4
    qi = int(round(q))
    if abs(q - qi) > 1e-9:
        raise MissingSeries(f"regularity {r} is not s + k/4")
    return qi


def _get(table: dict, key):
    if key not in table:
        raise MissingSeries(f"series {key} not in ledger")
    return table[key]


def energy_functional(ledger: EnergyLedger, field_name: str, r: float, entry=None) -> float:
    """sup ||f||_r^2 + gamma ||f||^2_{L^2_{mu'}(r+1/4)} + (theta_E/16) ||d_y f||^2_{L^2_t(r)}."""
    if field_name not in DY_OF:
        raise MissingSeries(f"no d_y partner tracked for {field_name}")
    src = entry if entry is not None else {"sup": ledger.sup, "l2t": ledger.l2t, "l2mu": ledger.l2mu}
    q = _q(ledger, r)
    return (_get(src["sup"], (field_name, q)) ** 2
            + ledger.gamma * _get(src["l2mu"], (field_name, q + 1))
            + ledger.theta_E / 16 * _get(src["l2t"], (DY_OF[field_name], q)))


# -------------------------------------------------------------- bootstrap

@dataclass(frozen=True)
class BootstrapParams:
    M: float
    zeta: float
    epsilon: float
    s: float
    eta: float
    k_coupling: float
    gamma: float
    theta_E: float

    def __post_init__(self):
        if not self.epsilon < self.theta_E:
            raise ConfigurationError("epsilon must be smaller than theta_E")


def k_from_formula(M: float, zeta: float, theta_E: float, C: float = 1.0, t: float = 0.0) -> float:
    """Smallest coupling k allowed by the closing condition at time t."""
    num = 3 * theta_E / 8 + 5 / theta_E + C * (1 + t) ** 0.5 * M**2 * 5 / theta_E
    den = 5 * theta_E / 16 - C * (1 + t) ** 0.5 * zeta**2 * 5 / theta_E
    if den <= 0:
        raise ConfigurationError("coupling k undefined: zeta too large for theta_E")
    return num / den


def make_bootstrap_params(u0: Field, theta0: Field, delta: float, s: float, epsilon: float,
                          theta_E: float, gamma: float, C: float = 1.0) -> BootstrapParams:
    """M, zeta, eta, k from initial data (lifted with the full radius delta)."""
    from .spaces import NormSpec, sobolev_norm

    ph = PhaseState(delta=delta, gamma=1.0, mu=0.0)
    spec = NormSpec(s, 0, True)
    nu_ = float(sobolev_norm(dy(u0), spec, 0.0, theta_E, ph))
    nth = float(sobolev_norm(dy(theta0), spec, 0.0, theta_E, ph))
    M = 2 * (nu_ + nth)
    zeta = 2 * epsilon
    k = k_from_formula(M, zeta, theta_E, C)
    return BootstrapParams(M=M, zeta=zeta, epsilon=epsilon, s=s, eta=theta_E / 16,
                           k_coupling=k, gamma=gamma, theta_E=theta_E)


def bootstrap_check(ledger: EnergyLedger, params: BootstrapParams) -> dict:
    """Did the assumed and the improved bounds hold at every logged step?"""
    key_u, key_th = ("dyu", 0), ("dytheta", 0)
    out = {}
    series = [(h["t"], h["now"].get(key_u, 0.0), h["now"].get(key_th, 0.0),
               h["extras"].get("positivity", np.inf)) for h in ledger.history]
    checks = {
        "dyu<=M": (1, params.M),
        "dytheta<=zeta": (2, params.zeta),
        "dyu<=sqrt6/4*M": (1, np.sqrt(6) / 4 * params.M),
        "dytheta<=sqrt3/2*zeta": (2, np.sqrt(3) / 2 * params.zeta),
    }
    for name, (col, bound) in checks.items():
        worst = max((row[col] for row in series), default=0.0)
        first = next((row[0] for row in series if row[col] > bound), None)
        out[name] = {
            "holds": first is None,
            "max": worst,
            "bound": bound,
            "margin": np.inf if worst == 0 else bound / worst,
            "first_violation_t": first,
        }
    pos = min((row[3] for row in series), default=np.inf)
    out["positivity_margin"] = pos
    out["positivity_holds"] = bool(pos >= 0.5)
    return out


# ---------------------------------------------------------------- slacks

# C-bearing estimates: the unknown constant is solved for, not assumed
ESTIMATES = ("U_estimate", "lambda_estimate", "varphi_estimate", "u_estimate", "theta_estimate",
             "dyu_estimate", "dytheta_estimate", "dy2_estimate")
# closed energy bounds with explicit right-hand sides from the initial data
CLOSED_BOUNDS = ("energy_main", "energy_slope", "energy_curvature")
INEQUALITIES = ESTIMATES + CLOSED_BOUNDS


def _sides(which: str, ledger: EnergyLedger, p: BootstrapParams, h: dict):
    """Both sides as polynomials in the unknown constant C."""
    C = Polynomial([0.0, 1.0])
    one = Polynomial([1.0])
    t = h["t"]
    now = lambda f, q: _get(h["now"], (f, q)) ** 2
    init = lambda f, q: _get(ledger.initial, (f, q)) ** 2
    mu2 = lambda f, q: _get(h["l2mu"], (f, q))
    t2 = lambda f, q: _get(h["l2t"], (f, q))
    tE, eta, g = p.theta_E, p.eta, p.gamma
    zt = p.zeta * (1 + t) ** 0.25
    diss = tE * one - zt * C - 2 * eta

    def std(f, dyf, q):
        return now(f, q) + 2 * (g - C) * mu2(f, q + 1) + diss * t2(dyf, q)

    if which == "U_estimate":
        lhs = std("U", "dyU", 0)
        rhs = 2 * eta * t2("dyu", 4) + C * mu2("lam", 3) + 5 / tE * t2("dytheta", 4)
    elif which == "lambda_estimate":
        lhs = std("lam", "dylam", 2)
        rhs = (init("dxu", 2) + C * mu2("u", 5) + (2 * eta + zt * C) * t2("dyu", 2)
               + C * mu2("theta", 5) + 2 * eta * t2("dytheta", 2) + C * mu2("U", 1)
               + 2 * eta * t2("dyU", -2))
    elif which == "varphi_estimate":
        lhs = std("phi", "dyphi", 0)
        rhs = (init("dxtheta", 0) + C * mu2("u", 4) + 2 * eta * t2("dyu", 4)
               + C * mu2("theta", 4) + (2 * eta + zt * C) * t2("dytheta", 4)
               + C * mu2("U", 0) + 2 * eta * t2("dyU", -4))
    elif which in ("u_estimate", "theta_estimate"):
        tail = (2 * eta * t2("dyu", 4) + C * mu2("lam", 3) + 5 / tE * t2("dytheta", 4))
        if which == "u_estimate":
            lhs = std("u", "dyu", 4)
            rhs = (init("u", 6) + C * mu2("u", 5) + (2 * eta + zt * C) * t2("dyu", 4)
                   + C * mu2("theta", 4) + 4 * eta * t2("dytheta", 4) + C * mu2("U", 1)
                   + 2 * eta * t2("dyU", -1) + C * (1 + t) ** 0.5 * p.M**2 * tail)
        else:
            lhs = std("theta", "dytheta", 4)
            rhs = (init("theta", 4) + C * mu2("u", 5) + 4 * eta * t2("dyu", 4)
                   + C * mu2("theta", 4) + (2 * eta + zt * C) * t2("dytheta", 4)
                   + C * mu2("U", 0) + 2 * eta * t2("dyU", -4)
                   + C * (1 + t) ** 0.5 * p.zeta**2 * tail)
    elif which == "dyu_estimate":
        lhs = std("dyu", "dy2u", 0)
        rhs = init("dyu", 0) + C * (mu2("u", 4) + mu2("dytheta", 0)) + 2 * eta * t2("dy2theta", 0)
    elif which == "dytheta_estimate":
        lhs = std("dytheta", "dy2theta", 0)
        rhs = (init("dytheta", 0) + C * (mu2("u", 4) + mu2("dyu", 0) + mu2("theta", 4))
               + 2 * eta * t2("dy2u", 0))
    elif which == "dy2_estimate":
        lhs = std("dy2u", "dy3u", -4) + std("dy2theta", "dy3theta", -4)
        rhs = (init("dy2u", -4) + init("dy2theta", -4)
               + C * (mu2("u_s1", 0) + mu2("theta", -4) + mu2("dytheta", 0)))
    else:
        raise ValueError(which)
    return lhs, rhs


def minimal_C(lhs: Polynomial, rhs: Polynomial, tol: float = 0.0) -> float:
    """Smallest C >= 0 with rhs(C) - lhs(C) >= 0 from C onwards (inf if none)."""
    gap = rhs - lhs
    if gap(0.0) >= -tol:
        return 0.0
    roots = gap.roots()
    real = sorted(float(r.real) for r in roots if abs(r.imag) < 1e-12 and r.real > 0)
    for r in real:
        probe = r * (1 + 1e-9) + 1e-300
        big = 2 * r + 1
        if gap(probe) >= -tol and gap(big) >= -tol:
            return r
    return float(np.inf)


def _closed_bound(which: str, ledger: EnergyLedger, p: BootstrapParams, h: dict):
    s = ledger.s
    E = lambda f, r: energy_functional(ledger, f, r, entry=h)
    init = lambda f, q: _get(ledger.initial, (f, q)) ** 2
    k = p.k_coupling
    if which == "energy_main":
        lhs = E("U", s) + E("lam", s + 0.5) + E("u", s + 1) + k * E("theta", s + 1)
        rhs = 2 * init("u", 6) + k * init("theta", 4)
    elif which == "energy_slope":
        lhs = E("dyu", s) + E("dytheta", s)
        rhs = 1.5 * (init("dyu", 0) + init("dytheta", 0))
    else:
        lhs = E("dy2u", s - 1) + E("dy2theta", s - 1)
        rhs = 1.5 * (init("dy2u", -4) + init("dy2theta", -4))
    return lhs, rhs


def inequality_slack(ledger: EnergyLedger, which: str, params: BootstrapParams) -> list:
    """Rows (t, lhs, rhs, minimal_C, pass) along the logged history.

    For the C-bearing estimates, lhs and rhs are evaluated at the minimal
    C and ``pass`` means that a finite C exists.  For the closed energy bounds the
    sides are explicit and ``pass`` is the strict comparison.
    """
    if which not in INEQUALITIES:
        raise ValueError(f"unknown inequality {which}")
    rows = []
    for h in ledger.history:
        if which in CLOSED_BOUNDS:
            lhs, rhs = _closed_bound(which, ledger, params, h)
            rows.append((h["t"], lhs, rhs, None, bool(lhs <= rhs)))
            continue
        lp, rp = _sides(which, ledger, params, h)
        c = minimal_C(lp, rp, tol=1e-14 * max(1.0, abs(rp(0.0)), abs(lp(0.0))))
        cc = c if np.isfinite(c) else 0.0
        rows.append((h["t"], float(lp(cc)), float(rp(cc)), c, bool(np.isfinite(c))))
    return rows


def refinement_drift(series_list) -> float:
    """Largest ratio between the peak minimal-C values of several runs."""
    peaks = [max((r[3] for r in rows if r[3] is not None and np.isfinite(r[3])), default=0.0)
             for rows in series_list]
    lo, hi = min(peaks), max(peaks)
    if hi == 0:
        return 1.0
    return np.inf if lo == 0 else hi / lo


# ------------------------------------------------- instantaneous bound constants

def weighted_slope_norm(f: Field, t: float, theta_E: float, phase: PhaseState, r: float) -> float:
    """||(d_y Psi) f_Phi||_{H^{r,0}_Psi}."""
    g = f.grid
    w = weight_dy(t, g.y, theta_E)[:, None]
    e = mode_energy(Field(g, spec=gevrey_lift(f, phase).spec * w), t, theta_E)
    return norm_from_energy(e, g, r)


def bound_constants(state, aux, decomp: dict, norms: dict, mu_dot: float,
                    params: BootstrapParams, phase: PhaseState) -> dict:
    """Smallest C in the instantaneous bounds on sum|A_i|, |sum B_i|, sum|C_i|."""
    n2 = lambda f, q: norms[(f, q)] ** 2
    t, tE, eta = state.t, state.theta_E, params.eta
    zt = params.zeta * (1 + t) ** 0.25
    out = {}

    A = sum(abs(v) for k, v in decomp["U"].items() if k[0] == "A" and k[1:].isdigit())
    coef = mu_dot * (n2("U", 1) + n2("lam", 3)) + zt * n2("dyU", 0)
    fixed = (eta * (n2("dyU", 0) + n2("dyu", 4)) + tE / 6 * n2("dyU", 0)
             + 5 / (2 * tE) * n2("dytheta", 4)
             + tE * weighted_slope_norm(aux.U, t, tE, phase, params.s) ** 2)
    out["A"] = _linear_C(A, coef, fixed)

    B = abs(sum(v for k, v in decomp["lambda"].items() if k[0] == "B" and k[1:].isdigit()))
    coef = (mu_dot * (n2("lam", 3) + n2("u", 5) + n2("theta", 5) + n2("U", 1))
            + zt * (n2("dylam", 2) + n2("dyu", 2)))
    fixed = eta * (n2("dylam", 2) + n2("dyu", 2) + n2("dytheta", 2) + n2("dyU", -2))
    out["B"] = _linear_C(B, coef, fixed)

    Cs = sum(abs(v) for k, v in decomp["varphi"].items() if k[0] == "C" and k[1:].isdigit())
    coef = (mu_dot * (n2("phi", 1) + n2("u", 4) + n2("theta", 4) + n2("U", 0))
            + zt * (n2("dytheta", 4) + n2("dyphi", 0)))
    fixed = eta * (n2("dytheta", 4) + n2("dyphi", 0) + n2("dyu", 4) + n2("dyU", -4))
    out["C"] = _linear_C(Cs, coef, fixed)
    return out


def _linear_C(lhs: float, coef: float, fixed: float) -> float:
    if lhs <= fixed:
        return 0.0
    return np.inf if coef <= 0 else (lhs - fixed) / coef


# ---------------------------------------------------------- radius tracking

def fitted_decay_rate(f: Field, row: int | None = None, floor: float = 1e-13) -> float:
    """Least-squares slope of -log|f^(xi, y*)| against <xi>^(1/2).

    ``y*`` defaults to the row of largest amplitude; modes below ``floor``
    times the peak (round-off) and the Nyquist mode are excluded.
    """
    g = f.grid
    amp = np.abs(f.spec)
    if row is None:
        row = int(np.argmax(amp.max(axis=1)))
    a = amp[row, :-1]
    if a.max() == 0:
        return np.inf
    keep = a > floor * a.max()
    if keep.sum() < 3:
        return np.inf
    x = np.sqrt(g.bracket[:-1][keep])
    slope, _ = np.polyfit(x, -np.log(a[keep]), 1)
    return float(slope)


__all__ = [
    "MuState", "mu_rhs", "advance_mu", "EnergyLedger", "energy_functional", "BootstrapParams",
    "bootstrap_check", "inequality_slack", "compute_norms", "PastTStarError",
]
