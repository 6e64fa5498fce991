import csv
import filecmp
import json

import numpy as np
import pytest

from gevreybl import checks, spaces
from gevreybl.grid import ConfigurationError, GridMismatchError
from gevreybl.runner import (
    OUTPUT_ENV, RunConfig, read_snapshot, read_snapshot_header, resume, run,
)
from gevreybl.spaces import PastTStarError

SMALL = dict(Nx=32, Ny=49, dt=0.005, T_end=0.03, gamma=1.0, snapshot_every=2)


def _cfg(tmp_path, name="a", **kw):
    return RunConfig(**{**SMALL, **kw, "output_dir": str(tmp_path / name)})


def test_config_roundtrip():
    cfg = RunConfig(Nx=32, nu=1e-3, linear=True, output_dir="x")
    assert RunConfig.from_json(cfg.to_json()) == cfg


@pytest.mark.parametrize("bad", [
    {"Nx": 30, "surprise": 1},
    {"Nx": "64"},
    {"linear": 1},
    {"dt": -1.0},
    {"epsilon": 2.0},
    {"snapshot_every": 0},
    {"linear": True, "mms": True},
])
def test_config_rejections(bad):
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict(bad)


def test_config_from_bad_json():
    with pytest.raises(ConfigurationError):
        RunConfig.from_json("[1, 2]")
    with pytest.raises(ConfigurationError):
        RunConfig.from_json("{nope")


def test_run_outputs(tmp_path):
    m = run(_cfg(tmp_path))
    out = tmp_path / "a"
    assert m.ok and m.termination == "T_end" and m.steps == 6
    assert m.t_final == pytest.approx(0.03)
    for name in ("ledger.csv", "norms.csv", "decomposition.csv", "slack.json", "manifest.json"):
        assert (out / name).exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["constants"]["gamma_source"] == "config"
    assert man["outputs"]["snapshots"] == [f"snap_{i:06d}.bin" for i in (0, 2, 4, 6)]
    with open(out / "norms.csv") as fh:
        rows = list(csv.DictReader(fh))
    ts = sorted({float(r["t"]) for r in rows})
    assert len(ts) == 7 and ts[-1] == pytest.approx(0.03)
    slack = json.loads((out / "slack.json").read_text())
    assert all(all(r[4] for r in rows) for rows in slack.values())


def test_snapshot_layout(tmp_path):
    run(_cfg(tmp_path))
    head, u, th, v = read_snapshot(tmp_path / "a" / "snap_000002.bin")
    assert head["step"] == 2 and head["t"] == pytest.approx(0.01)
    assert u.shape == (49, 32) and np.all(u[0] == 0) and np.all(v[0] == 0)
    side = np.load(tmp_path / "a" / "snap_000002.npz")
    assert np.array_equal(side["u_phys"], u)


def test_zero_amplitude_reaches_t_star(tmp_path):
    m = run(_cfg(tmp_path, amplitude=0.0, delta=0.02, T_end=1.0, dt=0.01))
    assert m.termination == "T*" and m.ok
    assert m.t_star == pytest.approx(0.02, abs=1e-12)
    with pytest.raises(PastTStarError):
        resume(tmp_path / "a" / m.outputs["snapshots"][-1])


def test_resume_matches_uninterrupted(tmp_path):
    run(_cfg(tmp_path))
    resume(tmp_path / "a" / "snap_000004.bin", {"output_dir": str(tmp_path / "r")})
    for name in ("ledger.csv", "norms.csv", "decomposition.csv", "slack.json"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "r" / name, shallow=False), name
    man = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert man["resumed_from"].endswith("snap_000004.bin")


def test_resume_in_place(tmp_path):
    run(_cfg(tmp_path))
    ref = (tmp_path / "a" / "norms.csv").read_bytes()
    m = resume(tmp_path / "a" / "snap_000002.bin")
    assert m.ok and (tmp_path / "a" / "norms.csv").read_bytes() == ref


def test_resume_extends_horizon(tmp_path):
    run(_cfg(tmp_path))
    m = resume(tmp_path / "a" / "snap_000006.bin", {"T_end": 0.04, "output_dir": str(tmp_path / "x")})
    assert m.steps == 8 and m.t_final == pytest.approx(0.04)


def test_resume_refusals(tmp_path):
    run(_cfg(tmp_path))
    snap = tmp_path / "a" / "snap_000002.bin"
    with pytest.raises(GridMismatchError):
        resume(snap, {"Ny": 65})
    with pytest.raises(ConfigurationError):
        resume(snap, {"bogus": 1})
    (tmp_path / "a" / "snap_000002.npz").unlink()
    with pytest.raises(ConfigurationError):
        resume(snap)
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"not json\n")
    with pytest.raises(ConfigurationError):
        read_snapshot_header(junk)


def test_output_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    run(_cfg(tmp_path, name="ignored", T_end=0.01))
    assert (tmp_path / "env" / "manifest.json").exists()
    assert not (tmp_path / "ignored").exists()


def test_oversized_temperature_rejected_at_setup(tmp_path):
    # zeta = 2 epsilon leaves no admissible coupling k
    with pytest.raises(ConfigurationError):
        run(_cfg(tmp_path, epsilon=0.9))


def test_positivity_abort_is_reported(tmp_path, monkeypatch):
    from gevreybl import solver

    calls = {"n": 0}
    real = solver.step

    def failing(state, dt, **kw):
        calls["n"] += 1
        if calls["n"] == 3:
            raise solver.PositivityError("coefficient dropped below theta_E/2")
        return real(state, dt, **kw)

    monkeypatch.setattr("gevreybl.runner.step", failing)
    m = run(_cfg(tmp_path))
    assert m.termination == "positivity-abort" and not m.ok
    assert "theta_E/2" in m.error and m.steps == 2
    assert "snap_000002.bin" in m.outputs["snapshots"]


def test_determinism_check():
    r = checks.determinism()
    assert r.passed, r.line()


def test_weight_sign_mutation_is_caught(monkeypatch):
    orig = spaces.weight
    monkeypatch.setattr(spaces, "weight", lambda t, y, tE: -orig(t, y, tE))
    results = {r.name: r for r in checks.run_suite("spaces")}
    assert not results["weight_identity"].passed
