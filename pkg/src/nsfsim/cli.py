"""Command line entry point and the run loop.

    nsfsim run <config> [--out DIR] [--seed N] [--max-steps N]
    nsfsim resume <snapshot> <config> [--out DIR] [--max-steps N]
    nsfsim equilibrium <config> [--out DIR]
    nsfsim check-eos <config> [--out DIR]

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io as snapio
from .config import ConfigError, RunSpec, load_config
from .diagnostics import (DiagnosticsRecord, ballistic_inequality_residual, dichotomy_classify,
                          calibrate_dichotomy, dissipativity_estimate, lyapunov_functional, record)
from .domain import harmonic_extension, validate_boundary_data
from .equilibrium import (HypothesisError, InfeasibleMassError, convergence_metrics, solve_equilibrium)
from .solver import FluidState, Problem, StepError, step, time_step_size
from .thermo import ThermoError, property_suite

log = logging.getLogger("nsfsim")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

RECORD_FIELDS = [f.name for f in fields(DiagnosticsRecord)]
SERIES_COLUMNS = (["step", "dt"] + RECORD_FIELDS
                  + ["influx_total", "outflux_total", "floors_total", "lyapunov"])


def build_problem(spec: RunSpec) -> Problem:
    return Problem(spec.grid, spec.eos, spec.transport, spec.boundary_data(), spec.scheme)


def _smooth_noise(grid, modes, rng):
    X, Y = grid.centers()
    x = (X - grid.origin[0]) / grid.lx
    y = (Y - grid.origin[1]) / grid.ly
    out = np.zeros(grid.shape)
    for k in range(1, modes + 1):
        for l in range(1, modes + 1):
            out += rng.standard_normal() / (k * k + l * l) * np.sin(np.pi * k * x) * np.sin(np.pi * l * y)
    peak = np.abs(out).max()
    return out / peak if peak > 0 else out


def initial_state(spec: RunSpec, problem: Problem, seed=None, ext=None) -> FluidState:
    """Initial fields from the ``[initial]`` section.

    ``boundary``: density and velocity from the boundary data evaluated inside,
    temperature from the harmonic extension. ``rest``: uniform and at rest.
    ``equilibrium``: the hydrostatic profile for mass ``rho0 |Omega|``.
    Optional smooth random density perturbation (``amplitude``, ``modes``) and a
    Gaussian vortex of peak speed about ``vortex``.
    """
    grid, eos, bd = problem.grid, problem.eos, problem.bd
    ini = spec.initial
    X, Y = grid.centers()
    kind = ini["kind"]
    u = np.array([np.broadcast_to(c, grid.shape) for c in bd.velocity(0.0, X, Y)], dtype=float)
    if kind == "equilibrium":
        thB = float(bd.temperature(0.0, X, Y).flat[0])
        prof = solve_equilibrium(spec.force, bd, thB, ini.get("rho0", 1.0) * grid.area, grid, eos)
        rho, theta = prof.rho_E.copy(), np.full(grid.shape, thB)
    elif kind == "rest":
        rho = np.full(grid.shape, ini.get("rho0", 1.0))
        theta = np.full(grid.shape, ini.get("theta0", 1.0))
        u = np.zeros((2,) + grid.shape)
    else:
        rho = (np.full(grid.shape, ini["rho0"]) if "rho0" in ini
               else np.array(np.broadcast_to(bd.density(0.0, X, Y), grid.shape), dtype=float))
        if "theta0" in ini:
            theta = np.full(grid.shape, ini["theta0"])
        else:
            theta = (ext or harmonic_extension(bd, 0.0, grid)).theta_tilde.copy()
    u[0] += ini.get("ux", 0.0)
    u[1] += ini.get("uy", 0.0)
    if ini.get("amplitude", 0.0):
        seed = spec.seed if seed is None else seed
        rho = rho * (1.0 + ini["amplitude"] * _smooth_noise(grid, ini.get("modes", 3), np.random.default_rng(seed)))
    if ini.get("vortex", 0.0):
        cx, cy = grid.origin[0] + 0.5 * grid.lx, grid.origin[1] + 0.5 * grid.ly
        r0 = 0.15 * min(grid.lx, grid.ly)
        amp = ini["vortex"] / r0 * np.exp(0.5) * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * r0**2))
        u[0] += -amp * (Y - cy)
        u[1] += amp * (X - cx)
    return FluidState.from_primitive(eos, rho, u, theta, 0.0)


@dataclass
class RunResult:
    status: str
    exit_code: int
    steps: int
    t: float
    out_dir: Path
    summary: dict = field(default_factory=dict)


def _record_from_row(row):
    kw = {}
    for name in RECORD_FIELDS:
        v = row[name]
        kw[name] = int(v) if name == "floors" else float(v)
    return DiagnosticsRecord(**kw)


def _load_rows(path, last_step):
    if not path.exists():
        return []
    data = snapio.read_series(path)
    if not data or len(data["step"]) == 0:
        return []
    keep = data["step"] <= last_step
    ints = ("step", "floors", "floors_total")
    return [{k: (int(v[i]) if k in ints else float(v[i])) for k, v in data.items()} for i in np.flatnonzero(keep)]


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o))


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)


def summarize(spec: RunSpec, rows, problem, state, extra) -> dict:
    """Summary quantities computed from the full series of the run."""
    out = dict(extra)
    if not rows:
        return out
    t = np.array([r["t"] for r in rows])
    E = np.array([r["ballistic"] for r in rows])
    out["E_B_initial"] = float(E[0])
    out["E_B_final"] = float(E[-1])
    frac = spec.diagnostics.get("trailing_fraction", 0.5)
    out["E_B_trailing_max"] = dissipativity_estimate(t, E, frac)
    thr = spec.diagnostics.get("threshold")
    drop = spec.diagnostics.get("drop", 0.0)
    auto = thr is None
    try:
        if auto:
            thr, drop = calibrate_dichotomy(t, E, spec.window, trailing_fraction=frac)
        v = dichotomy_classify(t, E, spec.window, thr, drop)
        out["dichotomy"] = {"threshold": thr, "drop": drop, "auto_threshold": auto,
                            "dissipative_consistent": v.dissipative_consistent,
                            "classes": v.classes, "limsup_estimate": v.limsup_estimate}
    except ValueError as exc:
        out["dichotomy"] = {"error": str(exc)}
    recs = [_record_from_row(r) for r in rows]
    if len(recs) >= 2:
        res = ballistic_inequality_residual(recs)
        out["ballistic_residual"] = res
        out["ballistic_residual_positive"] = max(res, 0.0)
        dm = rows[-1]["mass"] - rows[0]["mass"]
        net = ((rows[-1]["influx_total"] - rows[0]["influx_total"])
               - (rows[-1]["outflux_total"] - rows[0]["outflux_total"]))
        out["mass_balance_residual"] = dm - net
        out["mass_balance_relative"] = (dm - net) / max(abs(rows[0]["mass"]), 1e-300)
    smin = min(r["sigma_min"] for r in rows)
    scale = max(max(abs(r["sigma_max"]) for r in rows), 1e-300)
    out["sigma_min"] = smin
    out["sigma_scale"] = scale
    out["sigma_min_relative"] = smin / scale
    out["rho_max_recorded"] = max(r["rho_max"] for r in rows)
    if spec.equilibrium:
        L = np.array([r["lyapunov"] for r in rows])
        out["lyapunov_initial"] = float(L[0])
        out["lyapunov_final"] = float(L[-1])
        out["lyapunov_max_increase_recorded"] = float(max(np.max(np.diff(L)), 0.0)) if len(L) > 1 else 0.0
        bd, grid = problem.bd, problem.grid
        X, Y = grid.centers()
        thB = float(bd.temperature(state.t, X, Y).flat[0])
        M = float(state.rho.sum() * grid.cell_area)
        try:
            prof = solve_equilibrium(spec.force, bd, thB, M, grid, problem.eos)
            d_rho, d_mom, d_theta = convergence_metrics(state, prof, thB, bd, grid, problem.eos)
            nrm = float(np.sum(np.abs(prof.rho_E) ** (5 / 3)) * grid.cell_area) ** 0.6
            out["equilibrium"] = {"lambda": prof.lam, "mass": prof.mass, "theta_B": thB,
                                  "d_rho": d_rho, "d_mom": d_mom, "d_theta": d_theta,
                                  "rho_E_norm": nrm, "d_rho_relative": d_rho / nrm,
                                  "d_theta_relative": d_theta / thB}
        except (HypothesisError, InfeasibleMassError, RuntimeError) as exc:
            out["equilibrium"] = {"error": str(exc)}
    return out


def run(spec: RunSpec, out_dir, seed=None, max_steps=None, start=None, log_every=0) -> RunResult:
    """Validate, step to ``t_end`` and write the run directory.

    ``start`` is ``(header, state)`` from a snapshot when resuming.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wall0 = time.time()
    problem = build_problem(spec)
    grid, eos, bd = problem.grid, problem.eos, problem.bd
    (out / "spec.ini").write_text(spec.to_ini())
    rho_bar = eos.rho_bar if eos.hs_enabled else None
    report = validate_boundary_data(bd, grid, np.linspace(0.0, spec.t_end, 5), rho_bar)
    (out / "validation.txt").write_text(str(report) + "\n")
    digest = spec.physics_hash()
    base = {"scenario": spec.scenario, "spec_hash": digest, "t_end": spec.t_end,
            "grid": [grid.nx, grid.ny]}
    if not report.passed:
        summary = dict(base, status="validation-failed", failures=report.failures())
        _write_json(out / "summary.json", summary)
        return RunResult("validation-failed", EXIT_VALIDATION, 0, 0.0, out, summary)

    ext = harmonic_extension(bd, 0.0, grid)
    if start is None:
        state = initial_state(spec, problem, seed, ext)
        k = 0
        totals = {"influx_total": 0.0, "outflux_total": 0.0, "floors_total": 0,
                  "rho_max_all": float(state.rho.max()), "theta_min_all": np.inf,
                  "lyapunov_max_increase": 0.0}
        rows = []
    else:
        header, state = start
        k = header.step
        totals = dict(header.extra["totals"])
        totals["floors_total"] = int(totals["floors_total"])
        rows = _load_rows(out / "series.csv", k)
    series = snapio.SeriesWriter(out / "series.csv", SERIES_COLUMNS)
    for r in rows:
        series.write(r)

    def fresh_ext(t):
        if bd.steady:
            return ext, None
        h = 1e-6
        e = harmonic_extension(bd, t, grid)
        d = (harmonic_extension(bd, t + h, grid).theta_tilde - harmonic_extension(bd, t - h, grid).theta_tilde) / (2 * h)
        return e, d

    def emit(state, dt):
        e, d = fresh_ext(state.t)
        rec = record(state, problem, e, totals["floors_total"], d)
        row = dict(rec.as_dict(), step=k, dt=dt, influx_total=totals["influx_total"],
                   outflux_total=totals["outflux_total"], floors_total=totals["floors_total"],
                   lyapunov=lyapunov_functional(state, problem) if spec.equilibrium else 0.0)
        series.write(row)
        rows.append(row)
        totals["theta_min_all"] = min(totals["theta_min_all"], rec.theta_min)

    def snapshot(name, st):
        totals_json = {kk: float(v) for kk, v in totals.items()}
        header = snapio.SnapshotHeader(grid.nx, grid.ny, grid.dx, grid.dy, st.t, k, spec_hash=digest,
                                       origin=tuple(grid.origin), extra={"totals": totals_json})
        return snapio.write_arrays(out / name, header, [st.rho, st.mom[0], st.mom[1], st.rho_e])

    if not rows or rows[-1]["step"] != k:
        if k % spec.output_every == 0 or k == 0:
            emit(state, 0.0)
    status, code, error = "completed", EXIT_OK, None
    budget = max_steps if max_steps is not None else spec.scheme.max_steps
    taken = 0
    lyap = lyapunov_functional(state, problem) if spec.equilibrium else None
    t_end = spec.t_end
    tol = 1e-12 * max(1.0, t_end)
    dt = 0.0
    try:
        while state.t < t_end - tol:
            if taken >= budget:
                status = "max-steps"
                break
            dt = min(time_step_size(state, problem), t_end - state.t)
            new, rep = step(state, problem, dt)
            state = new
            k += 1
            taken += 1
            totals["influx_total"] += rep.influx
            totals["outflux_total"] += rep.outflux
            totals["floors_total"] += rep.floors
            totals["rho_max_all"] = max(totals["rho_max_all"], float(state.rho.max()))
            if lyap is not None:
                nl = lyapunov_functional(state, problem)
                totals["lyapunov_max_increase"] = max(totals["lyapunov_max_increase"], nl - lyap)
                lyap = nl
            last = state.t >= t_end - tol
            if k % spec.output_every == 0 or last:
                emit(state, dt)
            if spec.snapshot_every and k % spec.snapshot_every == 0:
                snapshot(f"snap_{k:08d}.nsf", state)
            if log_every and k % log_every == 0:
                log.info("step %d t=%.6g dt=%.3g", k, state.t, dt)
    except (StepError, ThermoError) as exc:
        status, code, error = "numerical-failure", EXIT_NUMERICAL, str(exc)
        snapshot("failure.nsf", state)
    series.close()
    snapshot("final.nsf", state)
    extra = dict(base, status=status, steps=k, steps_this_invocation=taken, t_final=state.t,
                 wall_seconds=time.time() - wall0,
                 rho_max_all_steps=totals["rho_max_all"], floors_total=totals["floors_total"])
    if error:
        extra["error"] = error
    if eos.hs_enabled:
        extra["rho_bar"] = eos.rho_bar
        extra["density_bound_held"] = totals["rho_max_all"] < eos.rho_bar
    if spec.equilibrium:
        extra["lyapunov_max_increase_per_step"] = totals["lyapunov_max_increase"]
    summary = summarize(spec, rows, problem, state, extra)
    _write_json(out / "summary.json", summary)
    return RunResult(status, code, k, state.t, out, summary)


def resume(snapshot_path, spec: RunSpec, out_dir, max_steps=None, log_every=0) -> RunResult:
    header, state = snapio.read_snapshot(snapshot_path)
    diffs = snapio.header_diff(header, spec.grid, spec.physics_hash())
    if diffs:
        raise ConfigError(["snapshot does not match the configuration: " + "; ".join(diffs)])
    if "totals" not in header.extra:
        raise ConfigError(["snapshot carries no run totals; it was not written by a run"])
    return run(spec, out_dir, max_steps=max_steps, start=(header, state), log_every=log_every)


def equilibrium(spec: RunSpec, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(spec)
    grid, bd = problem.grid, problem.bd
    X, Y = grid.centers()
    thB = bd.temperature(0.0, X, Y)
    if np.ptp(thB) > 1e-12 * max(1.0, float(np.abs(thB).max())):
        raise HypothesisError("constant boundary temperature required")
    M = spec.initial.get("rho0", 1.0) * grid.area
    prof = solve_equilibrium(spec.force, bd, float(thB.flat[0]), M, grid, problem.eos)
    header = snapio.SnapshotHeader(grid.nx, grid.ny, grid.dx, grid.dy, 0.0, 0, fields=("rho_E",),
                                   spec_hash=spec.physics_hash(), origin=tuple(grid.origin))
    snapio.write_arrays(out / "equilibrium.nsf", header, [prof.rho_E])
    info = {"lambda": prof.lam, "mass": prof.mass, "theta_B": prof.theta_B, "iterations": prof.iterations,
            "rho_min": float(prof.rho_E.min()), "rho_max": float(prof.rho_E.max())}
    _write_json(out / "equilibrium.json", info)
    return info


def check_eos(spec: RunSpec, out_dir=None) -> dict:
    rep = property_suite(spec.eos)
    rep["gibbs_ok"] = max(rep["gibbs_theta_max"], rep["gibbs_rho_max"]) < 1e-6
    rep["ok"] = bool(rep["gibbs_ok"] and rep["pressure_increasing"] and rep["dp_drho_positive"])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "eos_report.json", rep)
    return rep


def _parser():
    p = argparse.ArgumentParser(prog="nsfsim", description="Compressible heat-conducting flow simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "resume", "equilibrium", "check-eos"):
        sp = sub.add_parser(name)
        if name == "resume":
            sp.add_argument("snapshot")
        sp.add_argument("config")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="seed for random initial perturbations")
        sp.add_argument("--max-steps", type=int, default=None, help="step budget for this invocation")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = args.out or f"out_{Path(args.config).stem}"
    try:
        spec = load_config(args.config)
        if args.command == "run":
            res = run(spec, out, seed=args.seed, max_steps=args.max_steps, log_every=100 if args.verbose else 0)
        elif args.command == "resume":
            res = resume(args.snapshot, spec, out, max_steps=args.max_steps, log_every=100 if args.verbose else 0)
        elif args.command == "equilibrium":
            info = equilibrium(spec, out)
            print(json.dumps(info, indent=2, default=_json_default))
            return EXIT_OK
        else:
            rep = check_eos(spec, out if args.out else None)
            print(json.dumps(rep, indent=2, default=_json_default))
            return EXIT_OK if rep["ok"] else EXIT_NUMERICAL
    except (ConfigError, HypothesisError, InfeasibleMassError, snapio.SnapshotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (StepError, ThermoError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    s = res.summary
    print(f"{res.status}: {res.steps} steps, t = {res.t:.6g}, output in {res.out_dir}")
    if "E_B_trailing_max" in s:
        print(f"  trailing max E_B = {s['E_B_trailing_max']:.6g}")
    if "equilibrium" in s and "d_rho_relative" in s["equilibrium"]:
        print(f"  relative density distance to equilibrium = {s['equilibrium']['d_rho_relative']:.3g}")
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
