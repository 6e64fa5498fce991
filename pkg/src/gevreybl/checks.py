"""Verification checks shared by the ``verify`` verb and the acceptance tests.

Every check returns a :class:`CheckResult`; suites are lists of checks run at
pinned, desk-scale resolutions.
"""

from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dyadic, spaces
from .grid import Field, Grid, dx, product
from .spaces import NormSpec, PhaseState
from .monitor import CLOSED_BOUNDS


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: value={self.value:.4g} threshold={self.threshold:.4g} ({self.seconds:.1f}s)"


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def random_field(grid: Grid, rng, decaying: bool = False, kmax: int | None = None) -> Field:
    """Random real field; ``decaying`` gives Gaussian y-envelopes vanishing at Ymax."""
    if not decaying:
        return Field(grid, phys=rng.standard_normal((grid.Ny, grid.Nx)))
    kmax = kmax or grid.Nx // 4
    y = grid.y
    spec = np.zeros((grid.Ny, grid.nk), dtype=complex)
    for j in range(kmax + 1):
        a = rng.uniform(0.3, 2.0)
        y0 = rng.uniform(0.0, 2.0)
        amp = (rng.standard_normal() + 1j * rng.standard_normal()) * np.exp(-0.3 * j)
        if j == 0:
            amp = amp.real
        spec[:, j] = amp * np.exp(-a * (y - y0) ** 2) * (1 + rng.uniform(-1, 1) * y)
    return Field(grid, spec=spec)


# ------------------------------------------------------------------ dyadic

@_timed
def bony_identity(n_pairs: int = 100, Nx: int = 256, Ny: int = 33, seed: int = 0,
                  tol: float = 1e-10) -> CheckResult:
    """fg = T_f g + T_g f + R(f, g) on random pairs."""
    g = Grid(Nx, Ny)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        f, h = random_field(g, rng), random_field(g, rng)
        err = product(f, h) - dyadic.paraproduct(f, h) - dyadic.paraproduct(h, f) - dyadic.remainder(f, h)
        worst = max(worst, err.max_abs() / (f.max_abs() * h.max_abs()))
    return CheckResult("bony_identity", worst <= tol, worst, tol, {"pairs": n_pairs, "Nx": Nx})


@_timed
def partition_of_unity(Nx: int = 256, tol: float = 1e-14) -> CheckResult:
    """sum_k Delta_k = 1 on every grid frequency."""
    part = dyadic.make_partition(Grid(Nx, 33))
    total = sum(part.block_symbol(k) for k in part.blocks)
    err = float(np.max(np.abs(total - 1.0)))
    return CheckResult("partition_of_unity", err <= tol, err, tol)


@_timed
def paraproduct_of_one(Nx: int = 128, seed: int = 1, tol: float = 1e-12) -> CheckResult:
    """T_1 g = g with the literal low-frequency cut-off (Nyquist-free g)."""
    g = Grid(Nx, 33)
    h = random_field(g, np.random.default_rng(seed), decaying=True)
    one = Field(g, phys=np.ones((g.Ny, g.Nx)))
    err = (dyadic.paraproduct(one, h) - h).max_abs() / h.max_abs()
    return CheckResult("paraproduct_of_one", err <= tol, err, tol)


def dyadic_suite() -> list:
    return [bony_identity(n_pairs=20), partition_of_unity(), paraproduct_of_one()]


# ------------------------------------------------------------------ spaces

@_timed
def weight_identity(n: int = 10_000, seed: int = 2, theta_E: float = 1.0,
                    tol: float = 1e-12) -> CheckResult:
    """d_t Psi + 4 theta_E (d_y Psi)^2 = 0 at random (t, y)."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, 10, n)
    y = rng.uniform(0, 12, n)
    err = float(np.max(np.abs(spaces.weight_identity_residual(t, y, theta_E))))
    return CheckResult("weight_identity", err <= tol, err, tol, {"samples": n})


@_timed
def poincare_bound(n_fields: int = 50, Nx: int = 64, Ny: int = 241, s: float = 1.5,
                   seed: int = 3, slack: float = 1.01) -> CheckResult:
    """sup_y ||u||_{H^s_x} <= slack (2 pi theta_E)^(1/4) (1+t)^(1/4) ||d_y u||_{H^{s,0}_Psi}."""
    g = Grid(Nx, Ny)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_fields):
        t = rng.uniform(0, 2)
        tE = rng.uniform(0.5, 2.0)
        u = random_field(g, rng, decaying=True)
        lhs = spaces.linf_y_hs(u, s)
        from .grid import dy

        rhs = spaces.poincare_constant(t, tE) * float(spaces.sobolev_norm(dy(u), NormSpec(s, 0, True), t, tE))
        worst = max(worst, lhs / rhs)
    return CheckResult("poincare_bound", worst <= slack, worst, slack, {"fields": n_fields})


@_timed
def phase_convexity(Nx: int = 128, delta: float = 0.1, gamma: float = 1.0,
                    mus=(0.0, 0.05, 0.099), tol: float = 1e-12) -> CheckResult:
    """Phi(xi) <= Phi(xi - eta) + Phi(eta) for all integer grid pairs."""
    k = np.arange(-Nx // 2, Nx // 2, dtype=float)
    XI, ETA = np.meshgrid(k, k, indexing="ij")
    worst = -np.inf
    for mu in mus:
        ph = PhaseState(delta, gamma, mu)
        gap = (spaces.phase_symbol_array(XI, ph) - spaces.phase_symbol_array(XI - ETA, ph)
               - spaces.phase_symbol_array(ETA, ph))
        worst = max(worst, float(gap.max()))
    return CheckResult("phase_convexity", worst <= tol, worst, tol)


@_timed
def weight_derivatives(tol: float = 1e-6) -> CheckResult:
    """Closed-form d_t Psi and d_y Psi agree with finite differences of Psi."""
    t = np.linspace(0.1, 3.0, 7)[:, None]
    y = np.linspace(0.5, 10.0, 9)[None, :]
    h = 1e-5
    ft = (spaces.weight(t + h, y, 1.3) - spaces.weight(t - h, y, 1.3)) / (2 * h)
    fy = (spaces.weight(t, y + h, 1.3) - spaces.weight(t, y - h, 1.3)) / (2 * h)
    err = max(np.max(np.abs(ft - spaces.weight_dt(t, y, 1.3))),
              np.max(np.abs(fy - spaces.weight_dy(t, y, 1.3))))
    return CheckResult("weight_derivatives", err <= tol, float(err), tol)


@_timed
def gaussian_norm_oracle(tol: float = 1e-6) -> CheckResult:
    """||exp(-y^2)||_{H^{0,0}_Psi} at t=0 against the half-line closed form."""
    g = Grid(16, 2001, Ymax=12.0)
    f = Field(g, phys=np.repeat(np.exp(-g.y**2)[:, None], g.Nx, axis=1))
    got = float(spaces.sobolev_norm(f, NormSpec(0.0, 0, True), 0.0, 1.0))
    # weight e^{2Psi} = e^{y^2/8}: int_0^inf e^{-15 y^2/8} = sqrt(pi / (15/8)) / 2
    exact = np.sqrt(g.Lx * 0.5 * np.sqrt(np.pi / 1.875))
    err = abs(got - exact) / exact
    return CheckResult("gaussian_norm_oracle", err <= tol, err, tol)


def spaces_suite() -> list:
    return [weight_identity(), weight_derivatives(), poincare_bound(n_fields=10),
            phase_convexity(), gaussian_norm_oracle()]


# ------------------------------------------------------------------ solver

@_timed
def mms_y_order(threshold: float = 1.9, **kw) -> CheckResult:
    from .mms import y_order_study

    r = y_order_study(**kw)
    o = min(r["orders"])
    return CheckResult("mms_y_order", o >= threshold, o, threshold, r)


@_timed
def mms_t_order(threshold: float = 0.9, **kw) -> CheckResult:
    from .mms import t_order_study

    r = t_order_study(**kw)
    o = min(r["orders"])
    return CheckResult("mms_t_order", o >= threshold, o, threshold, r)


@_timed
def linear_mode_rate(tol: float = 0.02, **kw) -> CheckResult:
    from .mms import linear_mode_study

    r = linear_mode_study(**kw)
    return CheckResult("linear_mode_rate", r["relative_error"] <= tol, r["relative_error"], tol, r)


@_timed
def divergence_order(threshold: float = 3.5, Nx: int = 16) -> CheckResult:
    """Constraint residual of the reconstructed v drops by >= 3.5 from Ny=129 to 257."""
    from .mms import exact_state
    from .solver import SimState, divergence_residual, reconstruct_v

    norms = []
    for Ny in (129, 257):
        g = Grid(Nx, Ny)
        ex = exact_state(0.0, g)
        st = SimState(0.0, ex.u, ex.theta, reconstruct_v(ex.u, ex.theta))
        r = divergence_residual(st).phys
        norms.append(float(np.sqrt(g.dx * np.trapezoid((r**2).sum(axis=1), dx=g.dy))))
    ratio = norms[0] / norms[1]
    return CheckResult("divergence_order", ratio >= threshold, ratio, threshold, {"norms": norms})


def solver_suite() -> list:
    return [mms_y_order(), mms_t_order(dts=(0.01, 0.005, 0.0025)), linear_mode_rate(),
            divergence_order()]


# ---------------------------------------------------------------- auxiliary

def _aux_trajectory(Nx, Ny, dt, T, amplitude, epsilon):
    from .auxiliary import evolve_W, initial_aux
    from .solver import InitSpec, initial_state, step

    g = Grid(Nx, Ny)
    st = initial_state(InitSpec(amplitude=amplitude, epsilon=epsilon), g)
    ax = initial_aux(st)
    n = int(round(T / dt))
    for i in range(n + 1):
        st1 = step(st, dt)
        ax1 = evolve_W(ax, st, dt, st1)
        if i == n:
            return [(st, ax), (st1, ax1)]
        st, ax = st1, ax1


def aux_refinement(levels=((49, 0.02), (97, 0.01), (193, 0.005)), Nx: int = 32, T: float = 0.2,
                   amplitude: float = 0.05, epsilon: float = 1e-2, delta: float = 0.1,
                   s: float = 2.6) -> dict:
    """Residual band norms and identity gaps along a joint (Ny, dt) refinement."""
    from . import auxiliary as A

    ph = PhaseState(delta, 1.0, 0.0)
    res = {k: [] for k in ("U", "lambda", "varphi")}
    gap = {k: [] for k in ("U", "lambda", "varphi")}
    rfn = {"U": A.residual_U, "lambda": A.residual_lambda, "varphi": A.residual_varphi}
    dfn = {"U": A.decompose_inner_U, "lambda": A.decompose_inner_lambda,
           "varphi": A.decompose_inner_varphi}
    for Ny, dt in levels:
        snaps = _aux_trajectory(Nx, Ny, dt, T, amplitude, epsilon)
        s0 = snaps[0][0]
        for k in res:
            res[k].append(A.band_norm(rfn[k](snaps, dt), s0.t, s0.theta_E))
            gap[k].append(abs(A.identity_gap(dfn[k](snaps, dt, ph, s))))
    order = lambda e: [float(np.log2(e[i] / e[i + 1])) for i in range(len(e) - 1)]
    return {"dt": [d for _, d in levels], "residuals": res, "gaps": gap,
            "residual_orders": {k: order(v) for k, v in res.items()},
            "gap_orders": {k: order(v) for k, v in gap.items()}}


@_timed
def aux_residual_order(threshold: float = 0.9, study: dict | None = None) -> CheckResult:
    study = study or aux_refinement()
    o = min(min(v) for v in study["residual_orders"].values())
    return CheckResult("aux_residual_order", o >= threshold, o, threshold, study["residual_orders"])


@_timed
def identity_gap_order(threshold: float = 0.9, study: dict | None = None) -> CheckResult:
    study = study or aux_refinement()
    o = min(min(v) for v in study["gap_orders"].values())
    return CheckResult("identity_gap_order", o >= threshold, o, threshold, study["gap_orders"])


@_timed
def aux_collapse(tol: float = 1e-12) -> CheckResult:
    """Zero fields and x-independent fields give identically vanishing residuals."""
    from . import auxiliary as A
    from .solver import SimState, reconstruct_v, step

    g = Grid(32, 49)
    worst = 0.0
    dt = 0.01
    cases = [SimState.zeros(g)]
    prof = np.exp(-g.y**2)
    u = Field(g, phys=np.repeat((g.y * prof)[:, None] * 0.05, g.Nx, axis=1))
    th = Field(g, phys=np.repeat(prof[:, None] * 0.01, g.Nx, axis=1))
    cases.append(SimState(0.0, u, th, reconstruct_v(u, th)))
    for st in cases:
        ax = A.initial_aux(st)
        st1 = step(st, dt)
        snaps = [(st, ax), (st1, A.evolve_W(ax, st, dt, st1))]
        for fn in (A.residual_U, A.residual_lambda, A.residual_varphi):
            worst = max(worst, fn(snaps, dt).max_abs())
    return CheckResult("aux_collapse", worst <= tol, worst, tol)


def aux_suite() -> list:
    study = aux_refinement()
    return [aux_residual_order(study=study), identity_gap_order(study=study), aux_collapse()]


# ----------------------------------------------------------------- monitors

def _run(cfg, outdir=None):
    from .runner import run

    with tempfile.TemporaryDirectory() as tmp:
        return run(replace(cfg, output_dir=str(outdir or tmp))), None


def reference_config(**kw):
    from .runner import RunConfig

    base = dict(Nx=64, Ny=97, epsilon=1e-3, theta_E=1.0, delta=0.1, amplitude=1e-2,
                dt=0.005, T_end=0.05, gamma=0.0)
    base.update(kw)
    return RunConfig(**base)


def reference_run(outdir, **kw):
    """Run the small-data reference configuration into ``outdir``."""
    from .runner import run

    return run(reference_config(output_dir=str(outdir), **kw))


def _ledger_series(outdir: Path, name: str) -> tuple:
    import csv

    t, v = [], []
    with open(Path(outdir) / "ledger.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["series"] == name:
                t.append(float(row["t"]))
                v.append(float(row["value"]))
    return np.array(t), np.array(v)


@_timed
def radius_tracking(outdir, ratio: float = 0.9) -> CheckResult:
    """Fitted Fourier-decay exponent stays above ratio * (delta - gamma mu(t))."""
    _, fit = _ledger_series(outdir, "fit_decay_u")
    _, radius = _ledger_series(outdir, "radius")
    margin = float(np.min(fit / (ratio * radius)))
    return CheckResult("radius_tracking", margin >= 1.0, margin, 1.0,
                       {"min_fit": float(fit.min()), "max_radius": float(radius.max())})


@_timed
def zero_field_t_star(delta: float = 0.1, gamma: float = 1.0, dt: float = 0.01,
                      tol: float = 1e-12) -> CheckResult:
    from .runner import RunConfig, run

    with tempfile.TemporaryDirectory() as tmp:
        m = run(RunConfig(amplitude=0.0, delta=delta, gamma=gamma, dt=dt, T_end=1.0,
                          output_dir=tmp))
    err = abs(m.t_star - delta / gamma) if m.t_star is not None else np.inf
    ok = m.termination == "T*" and err <= tol
    return CheckResult("zero_field_t_star", ok, err, tol, {"t_star": m.t_star})


@_timed
def bootstrap_bounds(manifest) -> CheckResult:
    b = manifest.bootstrap
    ok = (b["dyu<=M"]["holds"] and b["dytheta<=zeta"]["holds"] and b["positivity_holds"])
    worst = min(float(b["dyu<=M"]["margin"]), float(b["dytheta<=zeta"]["margin"]))
    return CheckResult("bootstrap_bounds", bool(ok), worst, 1.0,
                       {"positivity_margin": b["positivity_margin"]})


@_timed
def closed_bound_booleans(outdir) -> CheckResult:
    import json

    slack = json.loads((Path(outdir) / "slack.json").read_text())
    bad = [w for w in CLOSED_BOUNDS if not all(r[4] for r in slack[w])]
    return CheckResult("closed_bound_booleans", not bad, float(len(bad)), 0.0, {"failing": bad})


@_timed
def minimal_C_drift(Nxs=(64, 128, 256), which=("U_estimate", "lambda_estimate", "varphi_estimate"),
                    limit: float = 2.0, **kw) -> CheckResult:
    """Peak minimal C of each estimate across x-resolutions."""
    import json

    from . import monitor as mon
    from .runner import run

    series = {w: [] for w in which}
    gamma = None
    with tempfile.TemporaryDirectory() as tmp:
        for Nx in Nxs:
            cfg = reference_config(Nx=Nx, **kw)
            if gamma is not None:
                cfg = replace(cfg, gamma=gamma)
            m = run(replace(cfg, output_dir=f"{tmp}/nx{Nx}"))
            gamma = m.constants["gamma"]
            slack = json.loads(Path(f"{tmp}/nx{Nx}/slack.json").read_text())
            for w in which:
                series[w].append([(r[0], r[1], r[2], float(r[3]), r[4]) for r in slack[w]])
    drift = {w: mon.refinement_drift(series[w]) for w in which}
    worst = max(drift.values())
    return CheckResult("minimal_C_drift", worst < limit, worst, limit, drift)


def monitors_suite() -> list:
    with tempfile.TemporaryDirectory() as tmp:
        m = reference_run(tmp)
        out = [radius_tracking(tmp), bootstrap_bounds(m), closed_bound_booleans(tmp)]
    out.append(zero_field_t_star())
    return out


# ------------------------------------------------------------- robustness

@_timed
def nu_robustness(nus=(1e-2, 5e-3, 2.5e-3), T_end: float = 0.05) -> CheckResult:
    """||u^nu - u^(nu/2)||_{H^{1,0}_Psi} at T_end decreases as nu halves."""
    from .solver import initial_state, step

    cfg = reference_config()
    g = cfg.grid
    spec = cfg.init_spec()
    finals = {}
    for nu in sorted(set(nus) | {n / 2 for n in nus}):
        st = initial_state(spec, g, nu=nu)
        n = int(round(T_end / cfg.dt))
        for _ in range(n):
            st = step(st, cfg.dt)
        finals[nu] = st
    diffs = [float(spaces.sobolev_norm(finals[nu].u - finals[nu / 2].u, NormSpec(1.0, 0, True),
                                       T_end, cfg.theta_E)) for nu in nus]
    mono = all(diffs[i + 1] < diffs[i] for i in range(len(diffs) - 1))
    ratio = max(diffs[i + 1] / diffs[i] for i in range(len(diffs) - 1))
    return CheckResult("nu_robustness", mono, ratio, 1.0, {"nu": list(nus), "differences": diffs})


# ------------------------------------------------------------- determinism

@_timed
def determinism(tmpdir=None) -> CheckResult:
    """Two runs give byte-identical ledgers; resume reproduces the tail exactly."""
    import filecmp

    from .runner import resume, run

    names = ("ledger.csv", "norms.csv", "decomposition.csv", "slack.json")
    with tempfile.TemporaryDirectory(dir=tmpdir) as tmp:
        cfg = reference_config(T_end=0.03, gamma=1.0, snapshot_every=3)
        run(replace(cfg, output_dir=f"{tmp}/a"))
        run(replace(cfg, output_dir=f"{tmp}/b"))
        same = {n: filecmp.cmp(f"{tmp}/a/{n}", f"{tmp}/b/{n}", shallow=False) for n in names}
        resume(f"{tmp}/a/snap_000003.bin", {"output_dir": f"{tmp}/c"})
        resumed = {n: filecmp.cmp(f"{tmp}/a/{n}", f"{tmp}/c/{n}", shallow=False) for n in names}
    bad = [n for n, ok in same.items() if not ok] + [f"resume:{n}" for n, ok in resumed.items() if not ok]
    return CheckResult("determinism", not bad, float(len(bad)), 0.0, {"mismatched": bad})


SUITES = {
    "dyadic": dyadic_suite,
    "spaces": spaces_suite,
    "solver-mms": solver_suite,
    "aux-residuals": aux_suite,
    "monitors": monitors_suite,
}


def run_suite(name: str) -> list:
    if name == "all":
        out = []
        for fn in SUITES.values():
            out.extend(fn())
        return out
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join([*SUITES, 'all'])}")
    return SUITES[name]()
