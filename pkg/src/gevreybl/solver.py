"""IMEX integrator for the thermal boundary-layer system with artificial viscosity.

Unknowns are the tangential velocity ``u`` and temperature perturbation
``theta``; the normal velocity ``v`` is diagnostic and recovered from the
divergence constraint after every step.  One step is

1. explicit advection/source terms (dealiased products) and optional forcing,
2. implicit diffusion ``(theta + theta_E) d_y^2`` with the coefficient frozen
   at the start of the step, solved column by column in physical space,
3. the exact Fourier factor ``exp(-nu xi^2 dt)``,
4. boundary rows and ``v`` reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .grid import ConfigurationError, Field, Grid, cumint_y, dx, dy, dyy, product
from .spaces import NormSpec, sobolev_norm


class PositivityError(RuntimeError):
    """theta + theta_E dropped below theta_E / 2."""


class NumericalBlowup(RuntimeError):
    """A prognostic field became non-finite."""


@dataclass(frozen=True)
class SimState:
    t: float
    u: Field
    theta: Field
    v: Field
    mu: float = 0.0
    nu: float = 0.0
    theta_E: float = 1.0

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @classmethod
    def zeros(cls, grid: Grid, **kw) -> "SimState":
        z = Field.zeros(grid)
        return cls(t=0.0, u=z, theta=z, v=z, **kw)


# ----------------------------------------------------------------- helpers

def thomas(sub, diag, sup, rhs):
    """Batched tridiagonal solve along axis 0; columns are independent systems.

    ``sub[i]`` multiplies x[i-1] and ``sup[i]`` multiplies x[i+1]; ``sub[0]``
    and ``sup[-1]`` are ignored.
    """
    n = diag.shape[0]
    cp = np.empty_like(diag)
    dp = np.empty_like(rhs)
    cp[0] = sup[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - sub[i] * cp[i - 1]
        cp[i] = sup[i] / m
        dp[i] = (rhs[i] - sub[i] * dp[i - 1]) / m
    x = np.empty_like(rhs)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def implicit_diffusion(rhs: np.ndarray, coef, dt: float, h: float,
                       wall: str = "dirichlet", top: str = "dirichlet") -> np.ndarray:
    """Solve (I - dt*coef*D_yy) x = rhs column by column.

    Each end is ``"dirichlet"`` (x = 0) or ``"neumann"`` (second-order
    one-sided zero slope, e.g. x_0 = (4 x_1 - x_2)/3 eliminated from row 1).
    """
    coef = np.broadcast_to(coef, rhs.shape)
    a = dt * coef[1:-1] / h**2
    sub = -a.copy()
    sup = -a.copy()
    diag = 1.0 + 2.0 * a
    b = rhs[1:-1].copy()
    for end, i, off in ((wall, 0, sup), (top, -1, sub)):
        if end == "neumann":
            diag[i] = 1.0 + 2.0 * a[i] / 3.0
            off[i] = -2.0 * a[i] / 3.0
        elif end != "dirichlet":
            raise ValueError(end)
    out = np.zeros_like(rhs)
    out[1:-1] = thomas(sub, diag, sup, b)
    if wall == "neumann":
        out[0] = (4 * out[1] - out[2]) / 3.0
    if top == "neumann":
        out[-1] = (4 * out[-2] - out[-3]) / 3.0
    return out


# ------------------------------------------------------------- operations

def reconstruct_v(u: Field, theta: Field) -> Field:
    """v = d_y theta - d_y theta|_{y=0} + int_0^y ((d_y u)^2 - d_x u)."""
    dth = dy(theta)
    wall = np.array(dth.spec[0])
    source = product(dy(u), dy(u)) - dx(u)
    spec = dth.spec - wall[None, :] + cumint_y(source).spec
    spec = np.array(spec)
    spec[0] = 0.0
    return Field(u.grid, spec=spec)


def divergence_residual(state: SimState) -> Field:
    """d_x u + d_y v - d_y^2 theta - (d_y u)^2 with the discrete operators."""
    u, th, v = state.u, state.theta, state.v
    return dx(u) + dy(v) - dyy(th) - product(dy(u), dy(u))


def apply_boundary(state: SimState) -> SimState:
    """Wall rows u = v = 0, one-sided zero slope for theta; u = theta = 0 at Ymax."""
    u = np.array(state.u.phys)
    th = np.array(state.theta.phys)
    v = np.array(state.v.phys)
    u[0] = 0.0
    u[-1] = 0.0
    v[0] = 0.0
    th[0] = (4 * th[1] - th[2]) / 3.0
    th[-1] = 0.0
    g = state.grid
    return replace(state, u=Field(g, phys=u), theta=Field(g, phys=th), v=Field(g, phys=v))


def cfl_dt(state: SimState, dt_max: float, c_cfl: float = 0.4) -> float:
    """Advective CFL limit; implicit diffusion imposes no restriction."""
    g = state.grid
    cands = []
    umax = state.u.max_abs()
    vmax = state.v.max_abs()
    if umax > 0:
        cands.append(g.dx / umax)
    if vmax > 0:
        cands.append(g.dy / vmax)
    if not cands:
        return dt_max
    return min(dt_max, c_cfl * min(cands))


def positivity_margin(state: SimState) -> float:
    """min(theta + theta_E) / theta_E."""
    return float((state.theta.phys.min() + state.theta_E) / state.theta_E)


Forcing = Callable[[float, Grid], tuple]


def step(state: SimState, dt: float, *, linear: bool = False,
         forcing: Forcing | None = None) -> SimState:
    """Advance (u, theta) by one first-order IMEX step and rebuild v."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = state.grid
    margin = positivity_margin(state)
    if margin < 0.5:
        raise PositivityError(f"t={state.t:.4g}: min(theta+theta_E)/theta_E = {margin:.4f} < 1/2")
    u, th, v = state.u, state.theta, state.v
    tE = state.theta_E
    coef = th.phys + tE

    if linear:
        nu_rhs = Field.zeros(g)
        nth_rhs = Field.zeros(g)
    else:
        du = dy(u)
        nu_rhs = -(product(u, dx(u)) + product(v, du))
        nth_rhs = -(product(u, dx(th)) + product(v, dy(th))) + product(th + tE, product(du, du))
    if forcing is not None:
        fu, fth = forcing(state.t, g)
        nu_rhs = nu_rhs + fu
        nth_rhs = nth_rhs + fth

    u_star = u.phys + dt * nu_rhs.phys
    th_star = th.phys + dt * nth_rhs.phys
    u_new = implicit_diffusion(u_star, coef, dt, g.dy, "dirichlet")
    th_new = implicit_diffusion(th_star, coef, dt, g.dy, "neumann")

    visc = np.exp(-state.nu * g.xi**2 * dt)
    visc[-1] = 0.0
    u1 = Field(g, spec=Field(g, phys=u_new).spec * visc)
    th1 = Field(g, spec=Field(g, phys=th_new).spec * visc)
    if not (np.all(np.isfinite(u1.phys)) and np.all(np.isfinite(th1.phys))):
        raise NumericalBlowup(f"non-finite field after step at t={state.t + dt:.4g}")
    nxt = replace(state, t=state.t + dt, u=u1, theta=th1)
    nxt = apply_boundary(nxt)
    nxt = replace(nxt, v=Field(g, spec=reconstruct_v(nxt.u, nxt.theta).spec))
    margin = positivity_margin(nxt)
    if margin < 0.5:
        raise PositivityError(f"t={nxt.t:.4g}: min(theta+theta_E)/theta_E = {margin:.4f} < 1/2")
    return nxt


# ------------------------------------------------------------ initial data

def default_profile_u(y):
    return y * np.exp(-y**2)


def default_profile_theta(y):
    return np.exp(-y**2)


@dataclass(frozen=True)
class InitSpec:
    """Gevrey data with x-spectrum ~ exp(-decay <xi>^(1/2)).

    theta_0 is a cosine series; u_0 is a sine series by default, which is the
    x-parity the equations preserve (x -> -x flips the sign of u).

    ``decay`` is the data's own Gevrey rate; it must exceed the phase radius
    ``delta`` so that the lifted norms are dominated by low modes.
    """

    amplitude: float = 1e-2
    epsilon: float = 1e-3
    delta: float = 0.1
    decay: float = 5.0
    s: float = 2.6
    theta_E: float = 1.0
    profile_u: Callable = field(default=default_profile_u, compare=False)
    profile_theta: Callable = field(default=default_profile_theta, compare=False)
    noise: float = 0.0
    seed: int = 0
    u_sine: bool = True

    def __post_init__(self):
        if self.theta_E <= 0:
            raise ConfigurationError("theta_E must be positive")
        if self.amplitude < 0 or self.epsilon < 0:
            raise ConfigurationError("amplitude and epsilon must be non-negative")
        if self.decay <= self.delta:
            raise ConfigurationError("data decay must exceed the Gevrey radius delta")
        if self.epsilon >= self.theta_E:
            raise ConfigurationError("epsilon must be smaller than theta_E")


def _x_coefficients(spec: InitSpec, grid: Grid) -> np.ndarray:
    w = np.exp(-spec.decay * np.sqrt(grid.bracket))
    w[-1] = 0.0
    c = spec.amplitude * w / np.sum(grid.mode_weight * w)
    if spec.noise > 0:
        rng = np.random.default_rng(spec.seed)
        kick = rng.standard_normal(grid.nk) + 1j * rng.standard_normal(grid.nk)
        kick[0] = kick[0].real
        c = c * (1.0 + spec.noise * kick)
        c[-1] = 0.0
    return c


def theta_size(theta: Field, spec: InitSpec) -> float:
    """||exp(delta <D>^(1/2)) d_y theta||_{H^{s,0}_{Psi_0}}."""
    from .spaces import PhaseState

    ph = PhaseState(delta=spec.delta, gamma=1.0, mu=0.0)
    return float(sobolev_norm(dy(theta), NormSpec(spec.s, 0, True), 0.0, spec.theta_E, ph))


def make_initial(spec: InitSpec, grid: Grid) -> tuple:
    """Return (u0, theta0); theta0 is scaled so its lifted slope norm is epsilon."""
    if spec.amplitude == 0:
        z = Field.zeros(grid)
        return z, z
    c = _x_coefficients(spec, grid)
    pu = np.asarray(spec.profile_u(grid.y), dtype=float)
    pth = np.asarray(spec.profile_theta(grid.y), dtype=float)
    pu = pu - pu[0]
    cu = np.array(c)
    if spec.u_sine:
        cu = -1j * cu
        cu[0] = 0.0
    u0 = Field(grid, spec=pu[:, None] * cu[None, :])
    th = Field(grid, spec=pth[:, None] * c[None, :])
    # enforce the wall and far-field rows exactly
    state = apply_boundary(SimState(0.0, u0, th, Field.zeros(grid), theta_E=spec.theta_E))
    base = theta_size(state.theta, spec)
    if not np.isfinite(base) or base == 0:
        raise ConfigurationError("theta profile has zero or non-finite slope norm")
    theta0 = Field(grid, spec=state.theta.spec * (spec.epsilon / base))
    if np.min(theta0.phys) + spec.theta_E < spec.theta_E / 2:
        raise ConfigurationError("initial temperature violates positivity")
    return state.u, theta0


def initial_state(spec: InitSpec, grid: Grid, nu: float = 0.0) -> SimState:
    u0, th0 = make_initial(spec, grid)
    st = SimState(0.0, u0, th0, reconstruct_v(u0, th0), mu=0.0, nu=nu, theta_E=spec.theta_E)
    return st
