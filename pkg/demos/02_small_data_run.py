# The small-data reference run: calibrate gamma, step to T_end, read back the ledgers.

import csv
import json
import sys
from pathlib import Path

from gevreybl.checks import reference_config
from gevreybl.runner import run

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/demo_reference")
manifest = run(reference_config(output_dir=str(out)))

print("termination:", manifest.termination, "after", manifest.steps, "steps")
c = manifest.constants
print(f"gamma = {c['gamma']:.4g} ({c['gamma_source']}), k = {c['k']:.4g}, M = {c['M']:.4g}, "
      f"zeta = {c['zeta']:.4g}")

b = manifest.bootstrap
print(f"bootstrap margins: dy u {b['dyu<=M']['margin']:.3g}, dy theta {b['dytheta<=zeta']['margin']:.3g}")
print(f"positivity margin: {b['positivity_margin']:.3g}")

# radius against the decay fitted from the spectrum of u
series = {}
with open(out / "ledger.csv", newline="") as fh:
    for row in csv.DictReader(fh):
        series.setdefault(row["series"], []).append((float(row["t"]), float(row["value"])))
for (t, r), (_, fit) in list(zip(series["radius"], series["fit_decay_u"]))[::3]:
    print(f"  t={t:.3f}  radius {r:.4f}  fitted decay {fit:.3f}")

slack = json.loads((out / "slack.json").read_text())
for name in ("U_estimate", "lambda_estimate", "varphi_estimate"):
    peak = max(float(r[3]) for r in slack[name])
    print(f"  peak minimal C for {name}: {peak:.4g}")
for name in ("energy_main", "energy_slope", "energy_curvature"):
    print(f"  {name} holds at every step:", all(r[4] for r in slack[name]))
