"""Run configuration, the simulation loop, persistence and resume.

Output directory layout::

    manifest.json        resolved config, constants, termination reason
    ledger.csv           t, series, value (mu, groups, positivity, radius fit)
    norms.csv            t, field, s, k, weighted, value (lifted norms)
    decomposition.csv    t, identity, term, value
    slack.json           per-inequality rows (t, lhs, rhs, minimal_C, pass)
    snap_NNNNNN.bin      JSON header line + little-endian float64 u, theta, v
    snap_NNNNNN.npz      sidecar: spectra, W, mu state and ledger accumulators

A snapshot taken at step n holds the state at t_n *before* it is observed,
so on resume every CSV row with ``t >= t_n`` is dropped and recomputed.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import shutil
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import monitor as mon
from .auxiliary import (
    AuxState, build_aux, decompose_inner_U, decompose_inner_lambda, decompose_inner_varphi,
    identity_gap, initial_aux, evolve_W,
)
from .grid import ConfigurationError, Field, Grid, GridMismatchError
from .solver import (
    InitSpec, NumericalBlowup, PositivityError, SimState, cfl_dt, divergence_residual,
    initial_state, positivity_margin, step,
)
from .spaces import PastTStarError, PhaseState

OUTPUT_ENV = "GEVREYBL_OUTPUT_DIR"
SNAP_FORMAT = "gevreybl-snapshot-1"


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# ----------------------------------------------------------------- config

@dataclass(frozen=True)
class RunConfig:
    # grid
    Nx: int = 64
    Ny: int = 97
    Lx: float = 2 * np.pi
    Ymax: float = 12.0
    # physics
    theta_E: float = 1.0
    nu: float = 0.0
    epsilon: float = 1e-3
    amplitude: float = 1e-2
    decay: float = 5.0
    noise: float = 0.0
    seed: int = 0
    # Gevrey
    delta: float = 0.1
    gamma: float = 0.0          # 0 means calibrate
    s: float = 2.6
    sigma_plus: float = 0.01
    # numerics
    dt: float = 0.005           # 0 means CFL-limited with dt_max
    dt_max: float = 0.01
    cfl: float = 0.4
    T_end: float = 0.05
    linear: bool = False
    mms: bool = False
    monitors: bool = True
    calibration_steps: int = 10
    # output
    output_dir: str = "runs/default"
    snapshot_every: int = 5

    def __post_init__(self):
        try:
            Grid(self.Nx, self.Ny, self.Lx, self.Ymax)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        pos = dict(theta_E=self.theta_E, delta=self.delta, T_end=self.T_end,
                   dt_max=self.dt_max, cfl=self.cfl)
        for k, v in pos.items():
            if not (np.isfinite(v) and v > 0):
                raise ConfigurationError(f"{k} must be positive and finite")
        for k in ("nu", "epsilon", "amplitude", "noise", "gamma", "dt", "sigma_plus"):
            v = getattr(self, k)
            if not (np.isfinite(v) and v >= 0):
                raise ConfigurationError(f"{k} must be non-negative and finite")
        if self.sigma_plus == 0:
            raise ConfigurationError("sigma_plus must be positive")
        if self.snapshot_every < 1 or self.calibration_steps < 1:
            raise ConfigurationError("snapshot_every and calibration_steps must be >= 1")
        if self.epsilon >= self.theta_E:
            raise ConfigurationError("epsilon must be smaller than theta_E")
        if self.linear and self.mms:
            raise ConfigurationError("linear and mms modes are exclusive")

    @property
    def grid(self) -> Grid:
        return Grid(self.Nx, self.Ny, self.Lx, self.Ymax)

    def init_spec(self) -> InitSpec:
        try:
            return InitSpec(amplitude=self.amplitude, epsilon=self.epsilon, delta=self.delta,
                            decay=self.decay, s=self.s, theta_E=self.theta_E,
                            noise=self.noise, seed=self.seed)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        typed = {}
        for k, v in d.items():
            want = type(known[k].default)
            if want is bool and not isinstance(v, bool):
                raise ConfigurationError(f"{k} must be true or false")
            if want is int and (isinstance(v, bool) or not isinstance(v, int)):
                raise ConfigurationError(f"{k} must be an integer")
            if want is float:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigurationError(f"{k} must be a number")
                v = float(v)
            if want is str and not isinstance(v, str):
                raise ConfigurationError(f"{k} must be a string")
            typed[k] = v
        return cls(**typed)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigurationError("config must be a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(Path(path).read_text())


def resolve_output(config: RunConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or config.output_dir)


@dataclass
class RunManifest:
    config: dict
    version: str
    constants: dict
    termination: str
    steps: int
    t_final: float
    t_star: float | None
    outputs: dict
    wall_clock: dict = field(default_factory=dict)
    error: str | None = None
    bootstrap: dict = field(default_factory=dict)
    resumed_from: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def ok(self) -> bool:
        return self.termination in ("T_end", "T*")


# ------------------------------------------------------------ calibration

def calibrate_gamma(config: RunConfig, steps: int | None = None) -> tuple:
    """gamma = max(10 * largest instantaneous bound constant, 1) from a short run."""
    cal = dataclasses.replace(config, Nx=64, gamma=1.0, monitors=True)
    ctx = _Context.fresh(cal, gamma=1.0)
    worst = {"A": 0.0, "B": 0.0, "C": 0.0}
    n = steps or config.calibration_steps
    for _ in range(n):
        if ctx.st.t >= cal.T_end - 1e-14 or ctx.ms.terminated:
            break
        info = ctx.advance(collect_bounds=True)
        for k, v in info["bounds"].items():
            worst[k] = max(worst[k], v)
    cmax = max(worst.values())
    if not np.isfinite(cmax):
        raise ConfigurationError("calibration found an unbounded bound constant")
    return max(10.0 * cmax, 1.0), worst


# ------------------------------------------------------------------- loop

class _Context:
    """Mutable run state: solver snapshot, W, mu and the ledger."""

    def __init__(self, config, st, aux, ms, ledger, params, step_no=0):
        self.config = config
        self.st = st
        self.aux = aux
        self.ms = ms
        self.ledger = ledger
        self.params = params
        self.step_no = step_no
        self.phase0 = PhaseState(config.delta, params.gamma, 0.0)
        self.forcing = None
        if config.mms:
            from .mms import forcing

            self.forcing = forcing(config.theta_E, config.nu)

    @classmethod
    def fresh(cls, config: RunConfig, gamma: float):
        g = config.grid
        if config.mms:
            from .mms import exact_state
            from .solver import apply_boundary, reconstruct_v

            st = apply_boundary(exact_state(0.0, g, config.theta_E, config.nu))
            st = SimState(0.0, st.u, st.theta, reconstruct_v(st.u, st.theta),
                          nu=config.nu, theta_E=config.theta_E)
        else:
            st = initial_state(config.init_spec(), g, config.nu)
        params = mon.make_bootstrap_params(st.u, st.theta, config.delta, config.s,
                                           config.epsilon, config.theta_E, gamma)
        ledger = mon.EnergyLedger(config.s, gamma, config.theta_E)
        return cls(config, st, initial_aux(st), mon.MuState(), ledger, params)

    @property
    def phase(self) -> PhaseState:
        return self.phase0.with_mu(self.ms.mu)

    def observe(self) -> dict:
        """Norms, radius-ODE groups and diagnostics at the current state."""
        cfg, st, aux, ph = self.config, self.st, self.aux, self.phase
        rhs, groups = mon.mu_rhs(st, aux, ph, sigma_plus=cfg.sigma_plus)
        norms = mon.compute_norms(st, aux, ph, cfg.s)
        pos = positivity_margin(st)
        self.ledger.observe(st.t, norms, {"positivity": pos})
        series = {"mu": self.ms.mu, "mu_dot": rhs, "radius": ph.radius, "positivity": pos,
                  "divergence_residual": float(np.sqrt(np.mean(divergence_residual(st).phys ** 2))),
                  "fit_decay_u": mon.fitted_decay_rate(st.u),
                  "fit_decay_theta": mon.fitted_decay_rate(st.theta)}
        series.update({f"mu_group_{k}": v for k, v in groups.items()})
        return {"rhs": rhs, "norms": norms, "series": series}

    def next_dt(self) -> float:
        cfg = self.config
        dt = cfg.dt if cfg.dt > 0 else cfl_dt(self.st, cfg.dt_max, cfg.cfl)
        remaining = cfg.T_end - self.st.t
        return min(dt, remaining)

    def advance(self, collect_bounds: bool = False) -> dict:
        cfg = self.config
        obs = self.observe()
        dt = self.next_dt()
        ph = self.phase
        nst = step(self.st, dt, linear=cfg.linear, forcing=self.forcing)
        naux = evolve_W(self.aux, self.st, dt, nst)
        decomp = None
        bounds = None
        if cfg.monitors:
            snaps = [(self.st, self.aux), (nst, naux)]
            decomp = {
                "U": decompose_inner_U(snaps, dt, ph, cfg.s, obs["rhs"]),
                "lambda": decompose_inner_lambda(snaps, dt, ph, cfg.s, obs["rhs"]),
                "varphi": decompose_inner_varphi(snaps, dt, ph, cfg.s, obs["rhs"]),
            }
            if collect_bounds:
                bounds = mon.bound_constants(self.st, self.aux, decomp, obs["norms"], obs["rhs"],
                                            self.params, ph)
        t_obs = self.st.t
        self.ledger.advance(dt, obs["rhs"])
        self.ms = mon.advance_mu(self.ms, obs["rhs"], dt, self.phase0)
        self.st, self.aux = nst, naux
        self.step_no += 1
        return {"t": t_obs, "obs": obs, "decomp": decomp, "bounds": bounds}


# ------------------------------------------------------------- persistence

class _Writer:
    """Append-only CSV writers; every row is flushed at once."""

    NAMES = ("ledger.csv", "norms.csv", "decomposition.csv")

    def __init__(self, out: Path, norm_keys, s: float):
        self.out = out
        self.norm_keys = list(norm_keys)
        self.s = s
        self.files = {}
        headers = {
            "ledger.csv": ["t", "series", "value"],
            "norms.csv": ["t", "field", "s", "k", "weighted", "value"],
            "decomposition.csv": ["t", "identity", "term", "value"],
        }
        for name in self.NAMES:
            path = out / name
            new = not path.exists()
            fh = open(path, "a", newline="")
            w = csv.writer(fh)
            if new:
                w.writerow(headers[name])
            self.files[name] = (fh, w)

    def rows(self, name, rows):
        fh, w = self.files[name]
        w.writerows(rows)
        fh.flush()

    def record(self, info: dict):
        t = info["t"]
        obs = info["obs"]
        self.rows("ledger.csv", [(repr(t), k, repr(float(v))) for k, v in obs["series"].items()])
        self.rows("norms.csv", [(repr(t), f, repr(self.s + q / 4), 0, 1, repr(float(obs["norms"][(f, q)])))
                                for f, q in self.norm_keys])
        if info["decomp"] is not None:
            rows = []
            for ident, vals in info["decomp"].items():
                for term, v in vals.items():
                    rows.append((repr(t), ident, term, repr(float(v))))
                rows.append((repr(t), ident, "gap", repr(float(identity_gap(vals)))))
            self.rows("decomposition.csv", rows)

    def close(self):
        for fh, _ in self.files.values():
            fh.close()


def _norm_keys():
    return [(f, q) for f in mon.TRACKED for q in mon.OFFSETS_Q]


def _field_arrays(prefix: str, f: Field) -> dict:
    return {f"{prefix}_phys": np.asarray(f.phys), f"{prefix}_spec": np.asarray(f.spec),
            f"{prefix}_primary": np.array(f._primary)}


def write_snapshot(ctx: _Context, out: Path, constants: dict) -> Path:
    st = ctx.st
    g = st.grid
    header = {
        "format": SNAP_FORMAT,
        "grid": g.to_dict(),
        "step": ctx.step_no,
        "t": st.t,
        "mu": ctx.ms.mu,
        "mu_dot": ctx.ms.mu_dot,
        "mu_star": ctx.phase0.mu_star,
        "t_star": ctx.ms.t_star,
        "theta_E": st.theta_E,
        "nu": st.nu,
        "constants": constants,
        "config": ctx.config.to_dict(),
        "fields": ["u", "theta", "v"],
        "dtype": "<f8",
        "shape": [g.Ny, g.Nx],
    }
    path = out / f"snap_{ctx.step_no:06d}.bin"
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for f in (st.u, st.theta, st.v):
            fh.write(np.ascontiguousarray(f.phys, dtype="<f8").tobytes())
    arrays = {}
    for name, f in (("u", st.u), ("theta", st.theta), ("v", st.v), ("W", ctx.aux.W)):
        arrays.update(_field_arrays(name, f))
    arrays.update({f"ledger_{k}": v for k, v in ctx.ledger.to_arrays().items()})
    arrays.update({f"history_{k}": v for k, v in _history_arrays(ctx.ledger).items()})
    with open(path.with_suffix(".npz"), "wb") as fh:
        np.savez(fh, **arrays)
    return path


def _history_arrays(ledger: mon.EnergyLedger) -> dict:
    keys = _norm_keys()
    H = ledger.history
    tab = lambda part: np.array([[h[part].get(k, 0.0) for k in keys] for h in H]).reshape(len(H), len(keys))
    return {
        "t": np.array([h["t"] for h in H]),
        "positivity": np.array([h["extras"].get("positivity", np.inf) for h in H]),
        "now": tab("now"), "sup": tab("sup"), "l2t": tab("l2t"), "l2mu": tab("l2mu"),
    }


def _restore_history(arr) -> list:
    keys = _norm_keys()
    out = []
    for i, t in enumerate(arr["history_t"]):
        row = {"t": float(t), "extras": {"positivity": float(arr["history_positivity"][i])}}
        for part in ("now", "sup", "l2t", "l2mu"):
            row[part] = {k: float(v) for k, v in zip(keys, arr[f"history_{part}"][i])}
        out.append(row)
    return out


def read_snapshot_header(path) -> dict:
    with open(path, "rb") as fh:
        line = fh.readline()
    try:
        head = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path} is not a snapshot") from exc
    if head.get("format") != SNAP_FORMAT:
        raise ConfigurationError(f"{path}: unknown snapshot format")
    return head


def read_snapshot(path) -> tuple:
    """Return (header, u, theta, v) with physical arrays from the binary file."""
    head = read_snapshot_header(path)
    ny, nx = head["shape"]
    with open(path, "rb") as fh:
        fh.readline()
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != 3 * ny * nx:
        raise ConfigurationError(f"{path}: truncated snapshot")
    u, th, v = data.reshape(3, ny, nx)
    return head, u, th, v


# --------------------------------------------------------------------- run

def _finish(ctx: _Context, out: Path, writer: _Writer, constants: dict, termination: str,
            error, t0: float, resumed_from=None) -> RunManifest:
    if termination in ("T_end", "T*") and not ctx.ms.terminated:
        try:
            obs = ctx.observe()
            writer.record({"t": ctx.st.t, "obs": obs, "decomp": None})
        except PastTStarError:
            pass
    writer.close()
    slack = {w: [list(r) for r in mon.inequality_slack(ctx.ledger, w, ctx.params)]
             for w in mon.INEQUALITIES}
    boot = mon.bootstrap_check(ctx.ledger, ctx.params)
    (out / "slack.json").write_text(json.dumps(_jsonable(slack), indent=1, sort_keys=True))
    outputs = {name: name for name in (*_Writer.NAMES, "slack.json")}
    outputs["snapshots"] = sorted(p.name for p in out.glob("snap_*.bin"))
    man = RunManifest(
        config=ctx.config.to_dict(), version=code_version(), constants=constants,
        termination=termination, steps=ctx.step_no, t_final=ctx.st.t, t_star=ctx.ms.t_star,
        outputs=outputs, wall_clock={"seconds": time.perf_counter() - t0},
        error=error, bootstrap=_jsonable(boot), resumed_from=resumed_from,
    )
    (out / "manifest.json").write_text(json.dumps(_jsonable(man.to_dict()), indent=2, sort_keys=True))
    return man


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _loop(ctx: _Context, out: Path, writer: _Writer, constants: dict, t0: float,
          resumed_from=None) -> RunManifest:
    cfg = ctx.config
    termination, error = "T_end", None
    try:
        while ctx.st.t < cfg.T_end - 1e-12 * max(1.0, cfg.T_end):
            if ctx.step_no % cfg.snapshot_every == 0:
                write_snapshot(ctx, out, constants)
            info = ctx.advance()
            writer.record(info)
            if ctx.ms.terminated:
                termination = "T*"
                break
    except PositivityError as exc:
        termination, error = "positivity-abort", str(exc)
    except (NumericalBlowup, FloatingPointError) as exc:
        termination, error = "NaN", str(exc)
    write_snapshot(ctx, out, constants)
    return _finish(ctx, out, writer, constants, termination, error, t0, resumed_from)


def _constants(ctx: _Context, gamma_source: str, bounds=None) -> dict:
    p = ctx.params
    return {"gamma": p.gamma, "gamma_source": gamma_source, "k": p.k_coupling, "eta": p.eta,
            "M": p.M, "zeta": p.zeta, "bound_constants": bounds or {}}


def run(config: RunConfig) -> RunManifest:
    """Initialise, step to T_end (or T*), write ledgers, snapshots and manifest."""
    t0 = time.perf_counter()
    out = resolve_output(config)
    out.mkdir(parents=True, exist_ok=True)
    for old in [*out.glob("snap_*"), *(out / n for n in (*_Writer.NAMES, "slack.json", "manifest.json"))]:
        if old.exists():
            old.unlink()
    bounds = None
    if config.gamma > 0:
        gamma, source = config.gamma, "config"
    else:
        gamma, bounds = calibrate_gamma(config)
        source = "calibrated"
    ctx = _Context.fresh(config, gamma)
    writer = _Writer(out, _norm_keys(), config.s)
    return _loop(ctx, out, writer, _constants(ctx, source, bounds), t0)


def _truncate_csv(src: Path, dst: Path, t_cut: float) -> None:
    """Copy src to dst keeping the header and rows with t < t_cut."""
    with open(src, newline="") as fh:
        rows = list(csv.reader(fh))
    keep = [rows[0]] + [r for r in rows[1:] if float(r[0]) < t_cut]
    with open(dst, "w", newline="") as fh:
        csv.writer(fh).writerows(keep)


def resume(snapshot_path, config_overrides: dict | None = None) -> RunManifest:
    """Continue a run from a snapshot and its sidecar.

    Only numerics and output keys may differ from the stored config; grid
    changes raise :class:`GridMismatchError`.
    """
    t0 = time.perf_counter()
    snap = Path(snapshot_path)
    head, u, th, v = read_snapshot(snap)
    side = snap.with_suffix(".npz")
    if not side.exists():
        raise ConfigurationError(f"accumulator sidecar {side.name} is missing")
    if head["t_star"] is not None or head["mu"] >= head["mu_star"]:
        raise PastTStarError(f"snapshot at t={head['t']} is past T* (mu={head['mu']})")
    base = dict(head["config"])
    overrides = dict(config_overrides or {})
    for k in ("Nx", "Ny", "Lx", "Ymax"):
        if k in overrides and overrides[k] != base[k]:
            raise GridMismatchError(f"override changes grid key {k}")
    base.update(overrides)
    config = RunConfig.from_dict(base)
    g = config.grid
    if g.to_dict() != head["grid"]:
        raise GridMismatchError("snapshot grid differs from config grid")

    arr = np.load(side)
    mk = lambda name: Field.restore(g, arr[f"{name}_phys"], arr[f"{name}_spec"],
                                    str(arr[f"{name}_primary"]))
    if not (np.array_equal(arr["u_phys"], u) and np.array_equal(arr["theta_phys"], th)
            and np.array_equal(arr["v_phys"], v)):
        raise ConfigurationError("snapshot and sidecar disagree")
    st = SimState(head["t"], mk("u"), mk("theta"), mk("v"), mu=head["mu"], nu=config.nu,
                  theta_E=config.theta_E)
    aux = build_aux(mk("W"), st)
    ledger = mon.EnergyLedger.from_arrays({k[7:]: arr[k] for k in arr.files if k.startswith("ledger_")})
    ledger.history = _restore_history(arr)
    constants = head["constants"]
    params = mon.BootstrapParams(M=constants["M"], zeta=constants["zeta"], epsilon=config.epsilon,
                                 s=config.s, eta=constants["eta"], k_coupling=constants["k"],
                                 gamma=constants["gamma"], theta_E=config.theta_E)
    ms = mon.MuState(mu=head["mu"], mu_dot=head["mu_dot"], t=head["t"], t_star=None)
    ctx = _Context(config, st, aux, ms, ledger, params, step_no=head["step"])

    src_dir = snap.parent
    out = resolve_output(config)
    out.mkdir(parents=True, exist_ok=True)
    for name in _Writer.NAMES:
        if (src_dir / name).exists():
            _truncate_csv(src_dir / name, out / name, head["t"])
    if out.resolve() != src_dir.resolve():
        for p in src_dir.glob("snap_*"):
            if int(p.stem.split("_")[1]) <= head["step"]:
                shutil.copy2(p, out / p.name)
    else:
        for p in out.glob("snap_*"):
            if int(p.stem.split("_")[1]) > head["step"]:
                p.unlink()
    writer = _Writer(out, _norm_keys(), config.s)
    # the snapshot at this step already exists; the loop rewrites it identically
    return _loop(ctx, out, writer, constants, t0, resumed_from=str(snap))
