"""A closed box in a potential field relaxes to hydrostatic equilibrium.

The walls are at rest and held at one temperature, and gravity pulls the gas
down. The equilibrium density solves ``h(rho) = Pi + lambda`` with the
enthalpy ``h`` and the force potential ``Pi``. It comes from
``solve_equilibrium``, which does not run the flow solver. The simulation
starts from uniform gas at rest; its distance to that profile should shrink
while the Lyapunov functional only goes down.

    python3 demos/hydrostatic_relaxation.py           # 32x32, about 1 minute
    python3 demos/hydrostatic_relaxation.py --full    # 64x64, about 4 minutes
"""
import argparse
import tempfile
from pathlib import Path

import numpy as np

from nsfsim import cli
from nsfsim import io as snapio
from nsfsim.config import parse_config

ap = argparse.ArgumentParser()
ap.add_argument("--full", action="store_true")
ap.add_argument("--out", default=None)
args = ap.parse_args()

n = 64 if args.full else 32
out = Path(args.out or tempfile.mkdtemp(prefix="relax_"))
spec = parse_config(f"[run]\npreset = relax\nt_end = 3.0\noutput_every = 20\n[grid]\nnx = {n}\nny = {n}\n")
res = cli.run(spec, out)
s = res.summary
eq = s["equilibrium"]

d = snapio.read_series(out / "series.csv")
L = d["lyapunov"]
print(f"{res.steps} steps to t = {res.t:.2f} on {n}x{n}")
print(f"Lyapunov functional {L[0]:.6f} -> {L[-1]:.6f}; "
      f"largest one-step increase {s['lyapunov_max_increase_per_step']:.1e}")
print(f"relative L^5/3 distance to the equilibrium density: {eq['d_rho_relative']:.2e}")
print(f"relative L^4 distance to the wall temperature:     {eq['d_theta_relative']:.2e}")
print(f"equilibrium constant lambda = {eq['lambda']:.6f}")

# column averages of the final density against the equilibrium profile
h, state = snapio.read_snapshot(out / "final.nsf")
cli.equilibrium(spec, out)
_, (rho_E,) = snapio.read_arrays(out / "equilibrium.nsf")
print("\n   y     rho (computed)   rho (equilibrium)")
ys = (np.arange(h.ny) + 0.5) * h.dy
for j in range(0, h.ny, max(1, h.ny // 8)):
    print(f"{ys[j]:6.3f}   {state.rho[:, j].mean():.6f}        {rho_E[:, j].mean():.6f}")
