# Interrupt a run at a snapshot, resume it elsewhere and compare the ledgers byte for byte.

import filecmp
import tempfile
from dataclasses import replace
from pathlib import Path

from gevreybl.checks import reference_config
from gevreybl.runner import read_snapshot_header, resume, run

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    cfg = reference_config(gamma=1.0, T_end=0.03, snapshot_every=2)
    run(replace(cfg, output_dir=str(tmp / "full")))

    snap = tmp / "full" / "snap_000002.bin"
    head = read_snapshot_header(snap)
    print(f"snapshot: step {head['step']}, t = {head['t']:.3f}, mu = {head['mu']:.4f}")

    resume(snap, {"output_dir": str(tmp / "resumed")})
    for name in ("ledger.csv", "norms.csv", "decomposition.csv", "slack.json"):
        same = filecmp.cmp(tmp / "full" / name, tmp / "resumed" / name, shallow=False)
        print(f"  {name:18s} identical: {same}")
