"""Two gases pushed through the same channel forget where they started.

The channel has inflow on the left, outflow on the right and solid walls
above and below. We start once from a gas at the boundary temperature and
once from a much hotter one, then watch the ballistic energy E_B. Both
trajectories settle to the same level, which is what a bounded absorbing set
in energy looks like in practice.

    python3 demos/channel_dissipativity.py            # 32x32, about 1 minute
    python3 demos/channel_dissipativity.py --full     # 64x64, about 10 minutes
"""
import argparse
import tempfile
from pathlib import Path

import numpy as np

from nsfsim import cli
from nsfsim import io as snapio
from nsfsim.config import parse_config
from nsfsim.diagnostics import calibrate_dichotomy, dichotomy_classify

ap = argparse.ArgumentParser()
ap.add_argument("--full", action="store_true", help="64x64 and 20 flow-through times")
ap.add_argument("--out", default=None)
args = ap.parse_args()

n, t_end = (64, 40 / 3) if args.full else (32, 6.0)
out = Path(args.out or tempfile.mkdtemp(prefix="channel_"))
base = f"[run]\npreset = channel\nt_end = {t_end!r}\noutput_every = 10\n[grid]\nnx = {n}\nny = {n}\n"

series = {}
for label, theta0 in (("cool", 1.0), ("hot", 4.5)):
    spec = parse_config(base + f"[initial]\ntheta0 = {theta0}\n")
    res = cli.run(spec, out / label)
    series[label] = snapio.read_series(out / label / "series.csv")
    s = res.summary
    print(f"{label:5s} start E_B = {s['E_B_initial']:8.4f}   trailing max E_B = {s['E_B_trailing_max']:8.5f}"
          f"   max density = {s['rho_max_all_steps']:.3f}")

print("\nE_B at a few times:")
print("     t    cool       hot")
for t in np.linspace(0, t_end, 7):
    row = [np.interp(t, series[k]["t"], series[k]["ballistic"]) for k in ("cool", "hot")]
    print(f"{t:6.2f}  {row[0]:8.4f}  {row[1]:8.4f}")

# Dichotomy constants come from the first run only, then get applied to both.
window = 2 / 3
thr, drop = calibrate_dichotomy(series["cool"]["t"], series["cool"]["ballistic"], window)
print(f"\nthreshold {thr:.4f}, required drop per window {drop:.4f}")
for k, d in series.items():
    v = dichotomy_classify(d["t"], d["ballistic"], window, thr, drop)
    print(f"{k:5s} windows: {' '.join(c[0] for c in v.classes)}  consistent: {v.dissipative_consistent}")
print("(s = strictly decreasing, b = below threshold, n = neither)")
print(f"\nrun directories under {out}")
