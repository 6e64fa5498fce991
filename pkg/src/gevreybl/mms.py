"""Manufactured solutions and convergence studies for the integrator.

The exact pair is

    u*  = a(t) (1 + cos(x)/2) y exp(-y^2),
    th* = b(t) (cos(x) + 3/10) exp(-y^2),

with v* from the divergence constraint.  The forcing that makes (u*, th*)
an exact solution is derived symbolically once and evaluated with numpy.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sp

from .grid import Field, Grid
from .solver import SimState, apply_boundary, reconstruct_v, step

A0, A1 = 0.05, 0.5
B0, B1 = 0.02, 0.5


@lru_cache(maxsize=None)
def _symbolic(theta_E: float, nu: float):
    t, x, y, s = sp.symbols("t x y s", real=True)
    a = A0 * (1 + A1 * sp.sin(t))
    b = B0 * (1 + B1 * t)
    u = a * (1 + sp.cos(x) / 2) * y * sp.exp(-y**2)
    th = b * (sp.cos(x) + sp.Rational(3, 10)) * sp.exp(-y**2)
    uy = sp.diff(u, y)
    src = (uy**2 - sp.diff(u, x)).subs(y, s)
    v = sp.diff(th, y) - sp.diff(th, y).subs(y, 0) + sp.integrate(src, (s, 0, y))
    c = th + theta_E
    fu = sp.diff(u, t) + u * sp.diff(u, x) + v * uy - c * sp.diff(u, y, 2) - nu * sp.diff(u, x, 2)
    fth = (sp.diff(th, t) + u * sp.diff(th, x) + v * sp.diff(th, y) - c * sp.diff(th, y, 2)
           - c * uy**2 - nu * sp.diff(th, x, 2))
    mods = ["numpy", {"erf": _erf}]
    f = lambda e: sp.lambdify((t, x, y), e, modules=mods)
    return f(u), f(th), f(v), f(fu), f(fth)


def _erf(z):
    from scipy.special import erf

    return erf(z)


def _eval(fn, t, grid: Grid) -> Field:
    X, Y = grid.mesh()
    return Field(grid, phys=np.broadcast_to(fn(t, X, Y), X.shape))


def exact_state(t: float, grid: Grid, theta_E: float = 1.0, nu: float = 0.0) -> SimState:
    fu, fth, fv, _, _ = _symbolic(theta_E, nu)
    return SimState(t, _eval(fu, t, grid), _eval(fth, t, grid), _eval(fv, t, grid),
                    nu=nu, theta_E=theta_E)


def forcing(theta_E: float = 1.0, nu: float = 0.0):
    """Forcing callable in the form expected by :func:`solver.step`."""
    _, _, _, fu, fth = _symbolic(theta_E, nu)
    return lambda t, grid: (_eval(fu, t, grid), _eval(fth, t, grid))


def run_mms(grid: Grid, dt: float, T: float, theta_E: float = 1.0, nu: float = 0.0) -> SimState:
    """Integrate from the exact data to T with the manufactured forcing."""
    st = exact_state(0.0, grid, theta_E, nu)
    st = apply_boundary(st)
    st = SimState(0.0, st.u, st.theta, reconstruct_v(st.u, st.theta), nu=nu, theta_E=theta_E)
    f = forcing(theta_E, nu)
    n = int(round(T / dt))
    for _ in range(n):
        st = step(st, dt, forcing=f)
    return st


def l2_error(a: SimState, b: SimState) -> float:
    """Discrete L^2 distance of (u, theta) over the strip."""
    g = a.grid
    d2 = (a.u.phys - b.u.phys) ** 2 + (a.theta.phys - b.theta.phys) ** 2
    return float(np.sqrt(g.dx * np.trapezoid(d2.sum(axis=1), dx=g.dy)))


def orders(errors) -> list:
    e = np.asarray(errors, dtype=float)
    return list(np.log2(e[:-1] / e[1:]))


def y_order_study(Nys=(65, 129, 257), Nx: int = 16, dt: float = 1e-4, T: float = 0.1,
                  Ymax: float = 12.0) -> dict:
    errs = []
    for Ny in Nys:
        g = Grid(Nx, Ny, Ymax=Ymax)
        errs.append(l2_error(run_mms(g, dt, T), exact_state(T, g)))
    return {"Ny": list(Nys), "errors": errs, "orders": orders(errs)}


def t_order_study(dts=(0.01, 0.005, 0.0025, 0.00125), Ny: int = 65, Nx: int = 16,
                  T: float = 0.1) -> dict:
    """Self-convergence in dt: successive differences at fixed Ny."""
    g = Grid(Nx, Ny)
    sols = [run_mms(g, dt, T) for dt in dts]
    diffs = [l2_error(sols[i], sols[i + 1]) for i in range(len(sols) - 1)]
    return {"dt": list(dts), "differences": diffs, "orders": orders(diffs)}


def linear_mode_study(Ny: int = 129, Nx: int = 16, dt: float = 0.005, T: float = 1.0,
                      theta_E: float = 1.0) -> dict:
    """Decay of sin(pi y / Ymax) under the linearised step versus the discrete eigenvalue."""
    from scipy.linalg import eigh_tridiagonal

    g = Grid(Nx, Ny)
    h = g.dy
    n = Ny - 2
    ev = eigh_tridiagonal(np.full(n, -2.0 / h**2), np.full(n - 1, 1.0 / h**2),
                          eigvals_only=True, select="i", select_range=(n - 1, n - 1))[0]
    prof = np.sin(np.pi * g.y / g.Ymax)
    prof[-1] = 0.0
    u0 = Field(g, phys=np.repeat(prof[:, None], Nx, axis=1))
    z = Field.zeros(g)
    st = SimState(0.0, u0, z, z, theta_E=theta_E)
    steps = int(round(T / dt))
    for _ in range(steps):
        st = step(st, dt, linear=True)
    amp = np.max(np.abs(st.u.phys)) / np.max(np.abs(u0.phys))
    measured = -np.log(amp) / T
    oracle = -theta_E * ev
    return {"measured_rate": float(measured), "oracle_rate": float(oracle),
            "relative_error": float(abs(measured - oracle) / oracle)}
