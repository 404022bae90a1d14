"""Acceptance criteria 1-10.

Each test records one ``criterion N: PASS|FAIL ...`` line (printed, and
repeated in the terminal summary). The long runs are module fixtures so each
scenario is simulated once. Expect roughly 25 minutes on one core.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from nsfsim import cli
from nsfsim import io as snapio
from nsfsim.config import load_config, parse_config
from nsfsim.diagnostics import (ballistic_inequality_residual, calibrate_dichotomy, dichotomy_classify,
                                gauss_green_residual, record)
from nsfsim.domain import BoundaryData, Grid, boundary_preset, extension_bounds_check, harmonic_extension
from nsfsim.equilibrium import quadrature_enthalpy, relaxation_oracle, solve_equilibrium
from nsfsim.solver import FluidState, Force, Problem, SchemeConfig, step, time_step_size
from nsfsim.thermo import EosSpec, HardSphere, TransportSpec, get_eos, property_suite

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def report(verdicts, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    verdicts.append(line)
    return ok


def timed_run(spec, out, **kw):
    t0 = time.perf_counter()
    res = cli.run(spec, out, **kw)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def channel_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("channel")
    out = []
    for name in ("channel.ini", "channel_hot.ini"):
        res, wall = timed_run(load_config(CONFIGS / name), root / name[:-4])
        out.append((res, wall))
    return out


@pytest.fixture(scope="module")
def benard_run(tmp_path_factory):
    # 20 time units is about 1.2e4 steps at 32x32
    spec = load_config(CONFIGS / "benard.ini", {"run": {"t_end": 20.0}})
    res, wall = timed_run(spec, tmp_path_factory.mktemp("benard"))
    return res, wall


@pytest.fixture(scope="module")
def relax_run(tmp_path_factory):
    spec = load_config(CONFIGS / "relax.ini")
    res, wall = timed_run(spec, tmp_path_factory.mktemp("relax"))
    return spec, res, wall


def test_criterion_1_gibbs(verdicts):
    t0 = time.perf_counter()
    presets = {"linear": EosSpec(),
               "linear-polytropic": EosSpec("linear-polytropic", p_inf=0.5, a=1e-3),
               "hard-sphere": EosSpec(hard_sphere=HardSphere(True, 1.0, 4.0, 1.0))}
    worst = {}
    for name, spec in presets.items():
        rep = property_suite(spec)
        worst[name] = max(rep["gibbs_theta_max"], rep["gibbs_rho_max"])
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-6 and elapsed < 10.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(verdicts, 1, ok, f"max relative Gibbs residual: {detail}; {elapsed:.1f} s")
    assert ok


def test_criterion_2_hard_sphere(verdicts):
    eos = get_eos(EosSpec(hard_sphere=HardSphere(True)))
    p0 = float(eos.p_hs(np.array(0.0)))
    rho = np.linspace(0.0, 1.0, 20001)[1:-1]
    p = eos.p_hs(rho)
    increasing = bool(np.all(np.diff(p) > 0))
    near = float(eos.pressure(np.array(1.0 - 1e-6), np.array(1.0)))
    ok = p0 == 0.0 and increasing and near > 1e18
    report(verdicts, 2, ok, f"p_hs(0) = {p0}, increasing on {rho.size} samples: {increasing}, "
                            f"p(rho_bar - 1e-6, 1) = {near:.2e}")
    assert ok


def test_criterion_3_extension(verdicts):
    rng = np.random.default_rng(2024)
    principle = 0
    for _ in range(20):
        a = rng.uniform(-1, 1, 6)
        n = int(rng.choice([8, 12, 16, 24]))

        def th(t, x, y, a=a):
            return (2.0 + a[0] * np.sin(3 * x) + a[1] * np.cos(5 * y) + a[2] * x * y
                    + a[3] * np.sin(7 * x * y) + a[4] * x**2 + a[5] * np.cos(2 * (x + y)))

        g = Grid.unit_square(n)
        principle += extension_bounds_check(harmonic_extension(BoundaryData(lambda t, x, y: (0 * x, 0 * y), th),
                                                               0.0, g))[0]
    g = Grid.unit_square(32)
    ext = harmonic_extension(boundary_preset("xy", g, theta0=1.0, gamma=1.0), 0.0, g, tol=1e-14)
    X, Y = g.centers()
    xy_err = float(np.max(np.abs(ext.theta_tilde - (1 + X * Y))))
    gg = []
    for n in (8, 16, 32, 64):
        g = Grid.unit_square(n)
        bd = boundary_preset("benard", g)
        bd = BoundaryData(bd.u_B, lambda t, x, y: 1.0 + x * x + 0.5 * np.sin(3 * y), bd.rho_B)
        pb = Problem(g, EosSpec(), TransportSpec(kappa0=1.0, beta_kappa=2.0), bd)
        ext = harmonic_extension(bd, 0.0, g)
        gg.append(abs(gauss_green_residual(ext.theta_tilde, ext, pb)))
    ratios = [a / b for a, b in zip(gg, gg[1:])]
    ok = principle == 20 and xy_err < 1e-10 and min(ratios) >= 1.5
    report(verdicts, 3, ok, f"max principle {principle}/20, |theta - (1+xy)| = {xy_err:.1e}, "
                            f"Gauss-Green ratios {', '.join(f'{r:.2f}' for r in ratios)}")
    assert ok


def test_criterion_4_solver(verdicts):
    t0 = time.perf_counter()
    g = Grid.unit_square(16)
    pb = Problem(g, EosSpec(), TransportSpec(), boundary_preset("constant", g, rho0=1.0, theta0=1.0))
    s0 = FluidState.from_primitive(pb.eos, np.ones(g.shape), np.zeros((2,) + g.shape), 1.0)
    s = s0
    for _ in range(1000):
        s, _r = step(s, pb)
    fixed = max(np.max(np.abs(s.rho - s0.rho)), np.max(np.abs(s.mom)),
                np.max(np.abs(s.rho_e - s0.rho_e)) / s0.rho_e.max())

    pb = Problem(g, EosSpec(), TransportSpec(), boundary_preset("relax", g),
                 SchemeConfig(force=Force("constant", (0.0, -1.0))))
    rng = np.random.default_rng(0)
    s = FluidState.from_primitive(pb.eos, 1 + 0.2 * rng.random(g.shape), 0.1 * rng.standard_normal((2,) + g.shape),
                                  1 + 0.2 * rng.random(g.shape))
    drift = 0.0
    for _ in range(100):
        m0 = s.rho.sum()
        s, _r = step(s, pb)
        drift = max(drift, abs(s.rho.sum() - m0) / m0)

    g = Grid(4, 128, 1 / 4, 1 / 128, periodic=(True, False))
    pb = Problem(g, EosSpec(), TransportSpec(mu0=1.0), boundary_preset("constant", g), SchemeConfig(flux="upwind"))
    _, Y = g.centers()
    k, eps = math.pi, 1e-4
    s = FluidState.from_primitive(pb.eos, np.ones(g.shape), np.array([eps * np.sin(k * Y), 0 * Y]), 1.0)
    ke = lambda s: 0.5 * np.sum(s.mom[0] ** 2 / s.rho)
    E0, rate = ke(s), 2 * pb.transport.mu(1.0) * k**2
    T = 1 / rate
    while s.t < T:
        s, _r = step(s, pb, dt=min(time_step_size(s, pb), T - s.t))
    measured = -math.log(ke(s) / E0) / s.t
    rel = abs(measured / rate - 1)
    elapsed = time.perf_counter() - t0
    ok = fixed < 1e-12 and drift < 1e-12 and rel < 0.05 and elapsed < 60
    report(verdicts, 4, ok, f"fixed point {fixed:.1e}, mass drift/step {drift:.1e}, "
                            f"shear decay rate off by {100 * rel:.2f}%, {elapsed:.1f} s")
    assert ok


def test_criterion_5_density_bound(verdicts, channel_runs, benard_run):
    runs = [("channel", channel_runs[0][0]), ("channel-hot", channel_runs[1][0]), ("benard", benard_run[0])]
    parts, ok = [], True
    for name, res in runs:
        s = res.summary
        held = s["status"] == "completed" and s["density_bound_held"] and s["rho_max_all_steps"] < s["rho_bar"]
        enough = s["steps"] >= 10_000
        ok &= bool(held and enough)
        parts.append(f"{name} max rho {s['rho_max_all_steps']:.4f} over {s['steps']} steps")
    report(verdicts, 5, ok, "; ".join(parts))
    assert ok


def test_criterion_6_entropy_production(verdicts, channel_runs, benard_run, relax_run):
    runs = [("channel", channel_runs[0][0]), ("channel-hot", channel_runs[1][0]), ("benard", benard_run[0]),
            ("relax", relax_run[1])]
    parts, ok = [], True
    for name, res in runs:
        series = snapio.read_series(res.out_dir / "series.csv")
        scale = float(np.max(np.abs(series["sigma_max"])))
        worst = float(np.min(series["sigma_min"]))
        ok &= worst >= -1e-12 * scale
        parts.append(f"{name} min sigma {worst:.2e} (scale {scale:.2e}, {len(series['t'])} records)")
    report(verdicts, 6, ok, "; ".join(parts))
    assert ok


def test_criterion_7_dissipativity(verdicts, channel_runs):
    (r1, w1), (r2, w2) = channel_runs
    s1, s2 = r1.summary, r2.summary
    ratio = s2["E_B_initial"] / s1["E_B_initial"]
    e1, e2 = s1["E_B_trailing_max"], s2["E_B_trailing_max"]
    agree = abs(e1 - e2) / max(abs(e1), abs(e2))
    spec = load_config(CONFIGS / "channel.ini")
    d1 = snapio.read_series(r1.out_dir / "series.csv")
    d2 = snapio.read_series(r2.out_dir / "series.csv")
    thr, drop = calibrate_dichotomy(d1["t"], d1["ballistic"], spec.window)
    v1 = dichotomy_classify(d1["t"], d1["ballistic"], spec.window, thr, drop)
    v2 = dichotomy_classify(d2["t"], d2["ballistic"], spec.window, thr, drop)
    horizon_ok = math.isclose(s1["t_final"], 20 / 1.5, rel_tol=1e-9) and math.isclose(s2["t_final"], 20 / 1.5,
                                                                                      rel_tol=1e-9)
    wall = w1 + w2
    ok = (ratio >= 4 and agree < 0.10 and v1.dissipative_consistent and v2.dissipative_consistent
          and horizon_ok and wall < 15 * 60)
    report(verdicts, 7, ok, f"initial E_B ratio {ratio:.2f}, trailing max {e1:.5f} vs {e2:.5f} "
                            f"({100 * agree:.3f}% apart), threshold {thr:.4f} drop {drop:.4f}, "
                            f"consistent {v1.dissipative_consistent}/{v2.dissipative_consistent}, "
                            f"wall {wall / 60:.1f} min")
    assert ok


def test_criterion_8_equilibrium(verdicts, relax_run):
    spec, res, wall = relax_run
    s = res.summary
    eq = s["equilibrium"]
    L0 = abs(s["lyapunov_initial"])
    lyap = s["lyapunov_max_increase_per_step"] / L0

    pb = cli.build_problem(spec)
    prof = solve_equilibrium(spec.force, pb.bd, eq["theta_B"], eq["mass"], pb.grid, pb.eos)
    rho_o, _ = relaxation_oracle(spec.force, pb.bd, eq["theta_B"], eq["mass"], pb.grid,
                                 quadrature_enthalpy(pb.eos, eq["theta_B"], "gauss"))
    oracle = float(np.max(np.abs(prof.rho_E - rho_o)))

    ideal = EosSpec()
    g = pb.grid
    baro = solve_equilibrium(spec.force, pb.bd, 1.0, 1.0, g, ideal)
    _, Y = g.centers()
    shape = np.exp(-0.5 * Y)
    closed = shape / (shape.sum() * g.cell_area)
    baro_err = float(np.max(np.abs(baro.rho_E - closed)))

    ok = (s["status"] == "completed" and lyap <= 1e-6 and eq["d_rho_relative"] < 1e-2
          and eq["d_theta_relative"] < 1e-2 and oracle < 1e-8 and baro_err < 1e-10 and wall < 15 * 60)
    report(verdicts, 8, ok, f"Lyapunov max increase/step {lyap:.1e} of L0, d_rho {eq['d_rho_relative']:.2e}, "
                            f"d_theta {eq['d_theta_relative']:.2e}, oracle {oracle:.1e}, "
                            f"barometric {baro_err:.1e}, wall {wall / 60:.1f} min")
    assert ok


def _ladder(preset, levels, T, dt_coarse):
    """Positive part of the residual over [0, T] with h and dt halved together."""
    out = []
    for j, n in enumerate(levels):
        spec = parse_config(f"[run]\npreset = {preset}\n[grid]\nnx = {n}\nny = {n}\n")
        pb = cli.build_problem(spec)
        ext = harmonic_extension(pb.bd, 0.0, pb.grid)
        s = cli.initial_state(spec, pb, 0, ext)
        dt = dt_coarse / 2**j
        recs = [record(s, pb, ext)]
        for _ in range(int(round(T / dt))):
            s, _r = step(s, pb, dt)
            recs.append(record(s, pb, ext))
        out.append(ballistic_inequality_residual(recs))
    return out


def test_criterion_9_ballistic_inequality(verdicts):
    ok, parts = True, []
    for preset, T, dt in (("channel", 2.0, 2.4e-3), ("relax", 1.0, 1e-3)):
        res = _ladder(preset, (16, 32, 64), T, dt)
        pos = [max(r, 0.0) for r in res]
        ok &= all(1.5 * b <= a for a, b in zip(pos, pos[1:]))
        parts.append(f"{preset} residual {', '.join(f'{r:.3e}' for r in res)}")
    report(verdicts, 9, ok, "; ".join(parts) + " at 16/32/64")
    assert ok


def test_criterion_10_resume(verdicts, tmp_path):
    text = "[run]\npreset = channel\nt_end = 0.5\noutput_every = 5\n[grid]\nnx = 24\nny = 24\n"
    spec = parse_config(text)
    full = cli.run(spec, tmp_path / "full")
    cli.run(spec, tmp_path / "split", max_steps=full.steps // 2 + 3)
    cli.resume(tmp_path / "split" / "final.nsf", spec, tmp_path / "split")
    a = snapio.read_series(tmp_path / "full" / "series.csv")
    b = snapio.read_series(tmp_path / "split" / "series.csv")
    shared = np.intersect1d(a["step"], b["step"])
    worst = 0.0
    for name in a:
        va = a[name][np.isin(a["step"], shared)]
        vb = b[name][np.isin(b["step"], shared)]
        worst = max(worst, float(np.max(np.abs(va - vb) / np.maximum(np.abs(va), 1e-300))))
    ok = len(shared) == len(a["step"]) and worst <= 1e-12
    report(verdicts, 10, ok, f"{len(shared)} shared records, max relative difference {worst:.1e}")
    assert ok
