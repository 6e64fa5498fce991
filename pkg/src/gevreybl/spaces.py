"""Gaussian weight, Gevrey phase and weighted anisotropic Sobolev norms."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import ConfigurationError, Field, dy, dyy

LIFT_EXPONENT_LIMIT = 700.0
DECAY_THRESHOLD = 1e-12


class PastTStarError(ValueError):
    """The Gevrey radius delta - gamma*mu has become negative."""


class LiftOverflowError(ArithmeticError):
    """exp(Phi) would overflow double precision."""


# ------------------------------------------------------------------ weight

def weight(t, y, theta_E):
    """Psi(t, y) = y^2 / (16 theta_E (1 + t))."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if theta_E <= 0 or np.any(t < 0) or np.any(y < 0):
        raise ValueError("weight needs theta_E > 0, t >= 0, y >= 0")
    return y**2 / (16.0 * theta_E * (1.0 + t))


def weight_dt(t, y, theta_E):
    """Exact time derivative, written in terms of ``weight`` itself."""
    return -weight(t, y, theta_E) / (1.0 + np.asarray(t, dtype=float))


def weight_dy(t, y, theta_E):
    """Exact y-derivative 2*Psi/y (zero at the wall), in terms of ``weight``."""
    y = np.asarray(y, dtype=float)
    psi = weight(t, y, theta_E)
    safe = np.where(y > 0, y, 1.0)
    return np.where(y > 0, 2.0 * psi / safe, 0.0)


def weight_identity_residual(t, y, theta_E):
    """d_t Psi + 4 theta_E (d_y Psi)^2, identically zero for the true weight."""
    return weight_dt(t, y, theta_E) + 4.0 * theta_E * weight_dy(t, y, theta_E) ** 2


# ------------------------------------------------------------------- phase

@dataclass(frozen=True)
class PhaseState:
    delta: float
    gamma: float
    mu: float = 0.0

    def __post_init__(self):
        if self.delta <= 0 or self.gamma <= 0:
            raise ConfigurationError("delta and gamma must be positive")
        if self.mu < 0:
            raise ConfigurationError("mu must be non-negative")

    @property
    def radius(self) -> float:
        return self.delta - self.gamma * self.mu

    @property
    def mu_star(self) -> float:
        return self.delta / self.gamma

    def with_mu(self, mu: float) -> "PhaseState":
        return replace(self, mu=mu)


def phase_symbol_array(xi, phase: PhaseState) -> np.ndarray:
    r = phase.radius
    if r < 0:
        raise PastTStarError(f"radius {r:.3e} < 0 (mu={phase.mu}, delta/gamma={phase.mu_star})")
    return r * (1.0 + np.asarray(xi, dtype=float) ** 2) ** 0.25


def phase_symbol(xi, phase: PhaseState):
    """Phi = (delta - gamma mu) <xi>^(1/2)."""
    out = phase_symbol_array(xi, phase)
    return float(out) if np.ndim(out) == 0 else out


def _lift_factor(grid, phase: PhaseState, sign: float = 1.0) -> np.ndarray:
    ph = phase_symbol_array(grid.xi, phase)
    if ph.max() > LIFT_EXPONENT_LIMIT:
        raise LiftOverflowError(
            f"max Phi = {ph.max():.1f} > {LIFT_EXPONENT_LIMIT}; use a smaller delta or fewer modes"
        )
    return np.exp(sign * ph)


def gevrey_lift(f: Field, phase: PhaseState) -> Field:
    """f_Phi: multiply each mode by exp(Phi(xi))."""
    return Field(f.grid, spec=f.spec * _lift_factor(f.grid, phase))


def gevrey_unlift(f: Field, phase: PhaseState) -> Field:
    return Field(f.grid, spec=f.spec * _lift_factor(f.grid, phase, -1.0))


# ------------------------------------------------------------------- norms

@dataclass(frozen=True)
class NormSpec:
    s: float
    k_order: int = 0
    weighted: bool = True

    def __post_init__(self):
        if self.k_order not in (0, 1, 2):
            raise ValueError("k_order must be 0, 1 or 2")
        if not np.isfinite(self.s):
            raise ValueError("s must be finite")


class NormValue(float):
    """A float that may carry a truncation warning."""

    warning: str | None

    def __new__(cls, value, warning=None):
        obj = super().__new__(cls, value)
        obj.warning = warning
        return obj


def y_weight(grid, t: float, theta_E: float, weighted: bool = True) -> np.ndarray:
    if not weighted:
        return np.ones(grid.Ny)
    return np.exp(2.0 * weight(t, grid.y, theta_E))


def mode_energy(f: Field, t: float, theta_E: float, phase: PhaseState | None = None,
                weighted: bool = True) -> np.ndarray:
    """Per-mode weighted energy e_j, so that ||f||^2_{H^{r,0}} = sum <xi_j>^{2r} e_j."""
    g = f.grid
    c = f.spec if phase is None else f.spec * _lift_factor(g, phase)
    w = y_weight(g, t, theta_E, weighted)[:, None]
    return g.Lx * g.mode_weight * np.trapezoid(w * np.abs(c) ** 2, dx=g.dy, axis=0)


def norm_from_energy(e: np.ndarray, grid, r: float) -> float:
    return float(np.sqrt(np.sum(grid.bracket ** (2 * r) * e)))


def decay_warning(f: Field, t: float, theta_E: float, phase=None) -> str | None:
    g = f.grid
    c = f.spec[-1] if phase is None else f.spec[-1] * _lift_factor(g, phase)
    edge = np.exp(2 * weight(t, g.Ymax, theta_E)) * np.sum(g.mode_weight * np.abs(c) ** 2)
    if edge > DECAY_THRESHOLD:
        return f"field not decayed at Ymax: e^(2Psi)|f|^2 = {edge:.2e}"
    return None


def sobolev_norm(f: Field, spec: NormSpec, t: float, theta_E: float = 1.0,
                 phase: PhaseState | None = None) -> NormValue:
    """||f||_{H^{s,k}_Psi} (lifted by exp(Phi) when ``phase`` is given)."""
    total = 0.0
    warn = None
    h = f
    for l in range(spec.k_order + 1):
        if l == 1:
            h = dy(f)
        elif l == 2:
            h = dyy(f)
        total += norm_from_energy(mode_energy(h, t, theta_E, phase, spec.weighted), f.grid, spec.s)
    if spec.weighted:
        warn = decay_warning(f, t, theta_E, phase)
    return NormValue(total, warn)


def inner_product(f: Field, g: Field, s: float, t: float, theta_E: float,
                  weighted: bool = True) -> float:
    """<f, g>_{H^{s,0}_Psi}; both arguments are taken as already lifted."""
    f._check(g)
    G = f.grid
    w = y_weight(G, t, theta_E, weighted)[:, None]
    dens = G.mode_weight * G.bracket ** (2 * s) * np.real(f.spec * np.conj(g.spec))
    return float(G.Lx * np.sum(np.trapezoid(w * dens, dx=G.dy, axis=0)))


def linf_y_hs(f: Field, s: float) -> float:
    """sup_y ||f(., y)||_{H^s_x}."""
    g = f.grid
    rows = g.Lx * np.sum(g.mode_weight * g.bracket ** (2 * s) * np.abs(f.spec) ** 2, axis=-1)
    return float(np.sqrt(rows.max()))


def poincare_constant(t: float, theta_E: float) -> float:
    """Explicit constant (2 pi theta_E)^(1/4) (1+t)^(1/4) of the L^inf_y bound."""
    return (2 * np.pi * theta_E) ** 0.25 * (1 + t) ** 0.25


def weighted_poincare_ratio(f: Field, t: float, theta_E: float) -> float:
    """int |f d_yPsi|^2 e^{2Psi} / int |d_y f|^2 e^{2Psi}."""
    g = f.grid
    dpsi = weight_dy(t, g.y, theta_E)
    num = mode_energy(Field(g, spec=f.spec * dpsi[:, None]), t, theta_E).sum()
    den = mode_energy(dy(f), t, theta_E).sum()
    return float(num / den) if den > 0 else 0.0


# ------------------------------------------------------------ accumulators

@dataclass(frozen=True)
class TimeAccumulator:
    p: float = 2
    value: float = 0.0

    def __post_init__(self):
        if self.p not in (2, np.inf):
            raise ValueError("p must be 2 or inf")


def accumulate_time_norm(acc: TimeAccumulator, norm_value: float, dt: float,
                         weight_value: float = 1.0) -> TimeAccumulator:
    """Left-endpoint update of an L^2_{t,f} or L^inf_t accumulator."""
    if weight_value < 0:
        raise ValueError("time weight must be non-negative")
    if acc.p == 2:
        if dt <= 0:
            raise ValueError("dt must be positive")
        return replace(acc, value=acc.value + weight_value * norm_value**2 * dt)
    return replace(acc, value=max(acc.value, norm_value))
