"""Auxiliary unknowns W, U = d_y W, lambda, varphi and their derived equations.

``W`` solves the para-linearized transport-diffusion equation

    d_t W + T_u d_x W + T_v d_y W - T_theta d_y^2 W - theta_E d_y^2 W = -d_x v,

with ``W = 0`` at the wall and a zero slope at ``Ymax`` (``U -> 0``).  The
remaining fields are built from ``W`` rather than evolved, so their defining
relations hold exactly after each update.

The ``*_terms`` functions list the right-hand sides of the equations obeyed
by ``U``, ``lambda`` and ``varphi`` term by term.  ``residual_*`` compares a
forward difference of two snapshots with those terms, and ``decompose_*``
returns their lifted weighted inner products with the unknown.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyadic import paraproduct as T
from .dyadic import remainder as R
from .grid import Field, dx, dy, dyy, product
from .solver import SimState, implicit_diffusion
from .spaces import PhaseState, gevrey_lift, inner_product, mode_energy, norm_from_energy, weight


@dataclass(frozen=True)
class AuxState:
    W: Field
    U: Field
    lam: Field
    varphi: Field

    @classmethod
    def zeros(cls, grid) -> "AuxState":
        z = Field.zeros(grid)
        return cls(z, z, z, z)


class SnapshotMismatch(ValueError):
    """Two snapshots are not dt apart or live on different grids."""


def compute_lambda(u: Field, dy_u: Field, W: Field) -> Field:
    """lambda = d_x u - T_{d_y u} W."""
    return dx(u) - T(dy_u, W)


def compute_varphi(theta: Field, dy_theta: Field, W: Field) -> Field:
    """varphi = d_x theta - T_{d_y theta} W."""
    return dx(theta) - T(dy_theta, W)


def dy_odd_wall(W: Field) -> Field:
    """d_y W with the wall row from an odd reflection, W_{-1} = -W_1.

    W and d_y^2 W both vanish at the wall, so the reflected centered stencil
    keeps the same O(dy^2) error profile as the interior rows; the one-sided
    stencil would not, and d_y^2 U would then be O(1) wrong at the wall.
    """
    spec = np.array(dy(W).spec)
    spec[0] = W.spec[1] / W.grid.dy
    return Field(W.grid, spec=spec)


def build_aux(W: Field, state: SimState) -> AuxState:
    return AuxState(
        W=W,
        U=dy_odd_wall(W),
        lam=compute_lambda(state.u, dy(state.u), W),
        varphi=compute_varphi(state.theta, dy(state.theta), W),
    )


def initial_aux(state: SimState) -> AuxState:
    return build_aux(Field.zeros(state.grid), state)


def evolve_W(aux: AuxState, state: SimState, dt: float,
             next_state: SimState | None = None) -> AuxState:
    """One IMEX step for W with coefficients from ``state``.

    The para-product terms are explicit and ``theta_E d_y^2`` is implicit.
    U, lambda and varphi are rebuilt from ``next_state`` (defaults to
    ``state``), i.e. from the velocity/temperature at the new time level.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    W = aux.W
    g = W.grid
    explicit = -T(state.u, dx(W)) - T(state.v, dy(W)) + T(state.theta, dyy(W)) - dx(state.v)
    rhs = W.phys + dt * explicit.phys
    W1 = implicit_diffusion(rhs, state.theta_E, dt, g.dy, wall="dirichlet", top="neumann")
    W1 = Field(g, phys=W1)
    if not np.all(np.isfinite(W1.phys)):
        from .solver import NumericalBlowup

        raise NumericalBlowup(f"non-finite W after step at t={state.t + dt:.4g}")
    return build_aux(W1, next_state if next_state is not None else state)


# ------------------------------------------------------------------ terms

def _comm(a: Field, b: Field, f: Field) -> Field:
    """[T_a; T_b] f."""
    return T(a, T(b, f)) - T(b, T(a, f))


def _comp(a: Field, b: Field, f: Field) -> Field:
    """(T_a T_b - T_{ab}) f."""
    return T(a, T(b, f)) - T(product(a, b), f)


def terms_U(state: SimState, aux: AuxState) -> dict:
    """Right-hand side of d_t U - theta_E d_y^2 U = sum A_i."""
    u, th, v = state.u, state.theta, state.v
    U, W, lam = aux.U, aux.W, aux.lam
    uy = dy(u)
    return {
        "A1": -T(u, dx(U)),
        "A2": -T(v, dy(U)),
        "A3": T(th, dyy(U)),
        "A4": dx(lam),
        "A5": T(dx(uy), W),
        "A6": -2.0 * product(uy, dx(uy)),
        "A7": -dx(dyy(th)),
        "A8": -T(dy(v), U),
        "A9": T(dy(th), dy(U)),
    }


def _cross_terms(state: SimState, aux: AuxState, a: Field, coef: Field, prefix: str,
                 start: int) -> dict:
    """Terms produced by L(T_a W), shared by the lambda and varphi equations."""
    u, th, v = state.u, state.theta, state.v
    U, W = aux.U, aux.W
    tE = state.theta_E
    comp = _comp(u, dx(a), W) + _comp(v, dy(a), W) - _comp(th, dyy(a), W)
    low = T(dy(a), U)
    i = start
    out = {}
    for val in (
        -T(coef, W),
        -comp,
        -_comm(u, a, dx(W)),
        -_comm(v, a, U),
        _comm(th, a, dy(U)),
        2.0 * (T(th, low) + tE * low),
    ):
        out[f"{prefix}{i}"] = val
        i += 1
    return out


def terms_lambda(state: SimState, aux: AuxState) -> dict:
    """Right-hand side of d_t lambda - theta_E d_y^2 lambda = sum B_i."""
    u, th, v = state.u, state.theta, state.v
    lam = aux.lam
    uy = dy(u)
    uyy = dyy(u)
    ux = dx(u)
    vx = dx(v)
    uxx = dx(u, 2)
    uxy = dx(uy)
    uxyy = dx(uyy)
    out = {
        "B1": -T(u, dx(lam)),
        "B2": -T(v, dy(lam)),
        "B3": T(th, dyy(lam)),
        "B4": -product(ux, ux),
        "B5": -T(vx, uy),
        "B6": -R(vx, uy),
        "B7": product(dx(th), uyy),
        "B8": -T(uxx, u),
        "B9": -R(uxx, u),
        "B10": -T(uxy, v),
        "B11": -R(uxy, v),
        "B12": T(uxyy, th),
        "B13": R(uxyy, th),
    }
    coef = -product(uy, ux) - product(dy(v), uy) + product(dy(th), uyy)
    out.update(_cross_terms(state, aux, uy, coef, "B", 14))
    if state.nu > 0:
        out["B_nu"] = state.nu * (dx(u, 3) - T(dx(uy, 2), aux.W))
    return out


def terms_varphi(state: SimState, aux: AuxState) -> dict:
    """Right-hand side of d_t varphi - theta_E d_y^2 varphi = sum C_i."""
    u, th, v = state.u, state.theta, state.v
    phi_ = aux.varphi
    uy = dy(u)
    thy = dy(th)
    thyy = dyy(th)
    thx = dx(th)
    vx = dx(v)
    c = th + state.theta_E
    out = {
        "C1": -T(u, dx(phi_)),
        "C2": -T(v, dy(phi_)),
        "C3": T(th, dyy(phi_)),
        "C4": -product(dx(u), thx),
        "C5": -T(vx, thy),
        "C6": -R(vx, thy),
        "C7": product(thx, thyy),
        "C8": product(thx, product(uy, uy)),
        "C9": 2.0 * product(c, product(uy, dx(uy))),
        "C10": -T(dx(th, 2), u),
        "C11": -R(dx(th, 2), u),
        "C12": -T(dx(thy), v),
        "C13": -R(dx(thy), v),
        "C14": T(dx(thyy), th),
        "C15": R(dx(thyy), th),
    }
    coef = -product(uy, thx) + product(dx(u), thy) + 2.0 * product(c, product(uy, dyy(u)))
    out.update(_cross_terms(state, aux, thy, coef, "C", 16))
    if state.nu > 0:
        out["C_nu"] = state.nu * (dx(th, 3) - T(dx(thy, 2), aux.W))
    return out


_IDENTITIES = {
    "U": (terms_U, lambda a: a.U, 0.0),
    "lambda": (terms_lambda, lambda a: a.lam, 0.5),
    "varphi": (terms_varphi, lambda a: a.varphi, 0.0),
}


# -------------------------------------------------------------- residuals

def _unpack(snapshots, dt):
    (s0, a0), (s1, a1) = snapshots
    if s0.grid != s1.grid:
        raise SnapshotMismatch("snapshots on different grids")
    if not np.isclose(s1.t - s0.t, dt, rtol=1e-9, atol=1e-14):
        raise SnapshotMismatch(f"snapshot spacing {s1.t - s0.t} != dt {dt}")
    return s0, a0, s1, a1


def _residual(which: str, snapshots, dt: float) -> Field:
    s0, a0, s1, a1 = _unpack(snapshots, dt)
    terms_fn, pick, _ = _IDENTITIES[which]
    X0, X1 = pick(a0), pick(a1)
    res = (X1 - X0) / dt - s0.theta_E * dyy(X0)
    for val in terms_fn(s0, a0).values():
        res = res - val
    return res


def residual_U(snapshots, dt: float) -> Field:
    """Forward-difference defect of the U equation."""
    return _residual("U", snapshots, dt)


def residual_lambda(snapshots, dt: float) -> Field:
    """Forward-difference defect of the lambda equation."""
    return _residual("lambda", snapshots, dt)


def residual_varphi(snapshots, dt: float) -> Field:
    """Forward-difference defect of the varphi equation."""
    return _residual("varphi", snapshots, dt)


def band_norm(f: Field, t: float, theta_E: float, band=(0.5, 2.0)) -> float:
    """Weighted L^2 norm restricted to y in [band[0], Ymax - band[1]].

    One-sided stencils make residuals O(1) on the first and last rows, so
    refinement studies use this interior band.
    """
    g = f.grid
    lo = int(np.ceil(band[0] / g.dy - 1e-9))
    hi = int(np.floor((g.Ymax - band[1]) / g.dy + 1e-9))
    w = np.exp(2 * weight(t, g.y[lo:hi + 1], theta_E))[:, None]
    dens = g.Lx * g.mode_weight * np.abs(f.spec[lo:hi + 1]) ** 2
    return float(np.sqrt(np.trapezoid(w * dens, dx=g.dy, axis=0).sum()))


# ---------------------------------------------------------- decompositions

def _decompose(which: str, snapshots, dt: float, phase: PhaseState, s: float,
               mu_dot: float) -> dict:
    s0, a0, s1, a1 = _unpack(snapshots, dt)
    terms_fn, pick, shift = _IDENTITIES[which]
    r = s + shift
    t, tE = s0.t, s0.theta_E
    X0, X1 = pick(a0), pick(a1)
    Xp = gevrey_lift(X0, phase)
    ip = lambda f: inner_product(gevrey_lift(f, phase), Xp, r, t, tE)
    mu_term = phase.gamma * mu_dot * norm_from_energy(mode_energy(Xp, t, tE), X0.grid, r + 0.25) ** 2
    out = {
        "L_dt": ip((X1 - X0) / dt) - mu_term,
        "L_mu": mu_term,
        "L_diff": -tE * inner_product(dyy(Xp), Xp, r, t, tE),
    }
    for name, val in terms_fn(s0, a0).items():
        out[name] = ip(val)
    return out


def decompose_inner_U(snapshots, dt: float, phase: PhaseState, s: float,
                      mu_dot: float = 1.0) -> dict:
    """Lifted H^{s,0}_Psi inner products of every U-equation term with U."""
    return _decompose("U", snapshots, dt, phase, s, mu_dot)


def decompose_inner_lambda(snapshots, dt: float, phase: PhaseState, s: float,
                           mu_dot: float = 1.0) -> dict:
    """Same for lambda in H^{s+1/2,0}_Psi."""
    return _decompose("lambda", snapshots, dt, phase, s, mu_dot)


def decompose_inner_varphi(snapshots, dt: float, phase: PhaseState, s: float,
                           mu_dot: float = 1.0) -> dict:
    """Same for varphi in H^{s,0}_Psi."""
    return _decompose("varphi", snapshots, dt, phase, s, mu_dot)


def identity_gap(values: dict) -> float:
    """Left-hand terms minus right-hand terms of a decomposition."""
    left = sum(v for k, v in values.items() if k.startswith("L_"))
    right = sum(v for k, v in values.items() if not k.startswith("L_"))
    return left - right
