"""Energy functionals, entropy production and windowed balance checks."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import INFLOW, OUTFLOW, Grid, TemperatureExtension, harmonic_extension
from .solver import FluidState, Problem, StepReport, _pad, cell_stress, dissipation, kinematics
from .thermo import kappa_primitive

__all__ = [
    "StaleExtensionError",
    "IncompleteWindowError",
    "DiagnosticsRecord",
    "DichotomyVerdict",
    "ballistic_energy",
    "budget",
    "entropy_production",
    "record",
    "ballistic_inequality_residual",
    "gauss_green_residual",
    "dichotomy_classify",
    "dissipativity_estimate",
    "calibrate_dichotomy",
    "mass_balance_residual",
    "lyapunov_functional",
]


class StaleExtensionError(ValueError):
    pass


class IncompleteWindowError(ValueError):
    pass


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    kinetic: float
    internal: float
    entropy: float
    ballistic: float
    entropy_production: float
    inflow_term: float
    outflow_term: float
    rho_min: float
    rho_max: float
    theta_min: float
    theta_max: float
    floors: int = 0
    # remaining integrands of the windowed ballistic inequality
    weighted_dissipation: float = 0.0
    stress_work: float = 0.0
    force_work: float = 0.0
    extension_work: float = 0.0
    sigma_min: float = 0.0
    sigma_max: float = 0.0

    def as_dict(self):
        return asdict(self)


@dataclass
class DichotomyVerdict:
    windows: list
    classes: list
    dissipative_consistent: bool
    limsup_estimate: float


def _check_fresh(ext: TemperatureExtension, t, bd, tol=1e-12):
    if not bd.steady and abs(ext.t - t) > tol * max(1.0, abs(t)):
        raise StaleExtensionError(f"extension computed at t={ext.t}, state at t={t}")


def _cell_velocity_B(bd, grid: Grid, t):
    X, Y = grid.centers()
    ux, uy = bd.velocity(t, X, Y)
    return np.array([ux, uy])


def _grad_uB(bd, grid: Grid, t):
    """``d u_B,i / d x_j`` at cell centres by centred differences of the data."""
    X, Y = grid.centers()
    h = 1e-6 * max(grid.lx, grid.ly)
    out = np.empty((2, 2) + grid.shape)
    for j, (ex, ey) in enumerate(((h, 0.0), (0.0, h))):
        p = np.array(bd.velocity(t, X + ex, Y + ey))
        m = np.array(bd.velocity(t, X - ex, Y - ey))
        out[:, j] = (p - m) / (2 * h)
    return out


def ballistic_energy(state: FluidState, ext: TemperatureExtension, problem: Problem, theta=None):
    """``sum [rho |u - u_B|**2 / 2 + rho e - theta_tilde rho s] * cell area``."""
    _check_fresh(ext, state.t, problem.bd)
    eos, grid = problem.eos, problem.grid
    theta = state.temperature(eos) if theta is None else theta
    w = state.velocity - _cell_velocity_B(problem.bd, grid, state.t)
    dens = 0.5 * state.rho * (w[0] ** 2 + w[1] ** 2) + state.rho_e - ext.theta_tilde * eos.rho_s(state.rho, theta)
    return float(dens.sum() * grid.cell_area)


def budget(state: FluidState, problem: Problem):
    """``(mass, kinetic, internal, total)``; the kinetic part is relative to ``u_B``."""
    grid = problem.grid
    w = state.velocity - _cell_velocity_B(problem.bd, grid, state.t)
    mass = float(state.rho.sum() * grid.cell_area)
    kin = float((0.5 * state.rho * (w[0] ** 2 + w[1] ** 2)).sum() * grid.cell_area)
    internal = float(state.rho_e.sum() * grid.cell_area)
    return mass, kin, internal, kin + internal


def entropy_production(state: FluidState, problem: Problem, kin=None):
    """Cell field ``(S:Du + kappa |grad theta|**2 / theta) / theta`` and its integral."""
    kin = kin or kinematics(state, problem)
    th = kin.theta
    gt = kin.grad_theta
    cond = problem.transport.kappa(th) * (gt[0] ** 2 + gt[1] ** 2) / th
    sigma = (dissipation(kin, problem.transport) + cond) / th
    return sigma, float(sigma.sum() * problem.grid.cell_area)


def _boundary_terms(state: FluidState, problem: Problem, t):
    """Inflow and outflow integrals of ``[rho e - theta_B rho s] (u_B . n)``."""
    eos, grid = problem.eos, problem.grid
    frame = problem.frame(t)
    t_in = t_out = 0.0
    for side, s in frame.sides.items():
        idx = 0 if side in ("left", "bottom") else -1
        interior = state.rho[idx] if side in ("left", "right") else state.rho[:, idx]
        lab = s["label"]
        length = grid.face_length(side)
        if np.any(lab == INFLOW):
            r, th = s["rho"][lab == INFLOW], s["theta"][lab == INFLOW]
            val = eos.rho_e(r, th) - th * eos.rho_s(r, th)
            t_in += float(np.sum(val * s["un"][lab == INFLOW]) * length)
        if np.any(lab == OUTFLOW):
            r, th = interior[lab == OUTFLOW], s["theta"][lab == OUTFLOW]
            val = eos.rho_e(r, th) - th * eos.rho_s(r, th)
            t_out += float(np.sum(val * s["un"][lab == OUTFLOW]) * length)
    return t_in, t_out


def _extension_gradient(ext: TemperatureExtension, problem: Problem):
    grid, bd = problem.grid, problem.bd
    get = lambda side: grid.face_centers(side)
    tb = lambda side: bd.temperature(ext.t, *get(side)) if side in grid.boundary_sides() else 0.0
    g = _pad(ext.theta_tilde, grid, tb("left"), tb("right"), tb("bottom"), tb("top"))
    return ((g[2:, 1:-1] - g[:-2, 1:-1]) / (2 * grid.dx),
            (g[1:-1, 2:] - g[1:-1, :-2]) / (2 * grid.dy))


def record(state: FluidState, problem: Problem, ext: TemperatureExtension, floors=0,
           dtheta_tilde_dt=None) -> DiagnosticsRecord:
    """All functionals and inequality integrands at the current state."""
    _check_fresh(ext, state.t, problem.bd)
    eos, grid, bd, tr = problem.eos, problem.grid, problem.bd, problem.transport
    t = state.t
    kin = kinematics(state, problem, t)
    th = kin.theta
    area = grid.cell_area
    mass, kinetic, internal, _ = budget(state, problem)
    rho_s = eos.rho_s(state.rho, th)
    ent = float(rho_s.sum() * area)
    eb = ballistic_energy(state, ext, problem, th)
    sigma, sigma_int = entropy_production(state, problem, kin)
    t_in, t_out = _boundary_terms(state, problem, t)

    uB = _cell_velocity_B(bd, grid, t)
    w = kin.u - uB
    DuB = _grad_uB(bd, grid, t)
    DuB = 0.5 * (DuB + DuB.transpose(1, 0, 2, 3))
    S = cell_stress(kin, tr)
    T = state.rho * w[:, None] * w[None, :] - S
    T[0, 0] += kin.p
    T[1, 1] += kin.p
    stress_work = -float(np.einsum("ijxy,ijxy->", T, DuB) * area)

    gx, gy = problem.force(t)
    h = 1e-6
    if bd.steady:
        dtu = np.zeros_like(uB)
    else:
        dtu = (_cell_velocity_B(bd, grid, t + h) - _cell_velocity_B(bd, grid, t - h)) / (2 * h)
    GuB = _grad_uB(bd, grid, t)
    adv = np.einsum("jxy,ijxy->ixy", uB, GuB)
    force_work = float(np.sum(state.rho * (w[0] * (gx - dtu[0] - adv[0]) + w[1] * (gy - dtu[1] - adv[1]))) * area)

    gtt = _extension_gradient(ext, problem)
    dtt = np.zeros_like(th) if dtheta_tilde_dt is None else dtheta_tilde_dt
    kap = tr.kappa(th)
    q = (-kap * kin.grad_theta[0], -kap * kin.grad_theta[1])
    ext_work = -float(np.sum(rho_s * (dtt + kin.u[0] * gtt[0] + kin.u[1] * gtt[1])
                             + (q[0] * gtt[0] + q[1] * gtt[1]) / th) * area)
    wdiss = float(np.sum(ext.theta_tilde * sigma) * area)
    return DiagnosticsRecord(
        t=t, mass=mass, kinetic=kinetic, internal=internal, entropy=ent, ballistic=eb,
        entropy_production=sigma_int, inflow_term=t_in, outflow_term=t_out,
        rho_min=float(state.rho.min()), rho_max=float(state.rho.max()),
        theta_min=float(th.min()), theta_max=float(th.max()), floors=int(floors),
        weighted_dissipation=wdiss, stress_work=stress_work, force_work=force_work,
        extension_work=ext_work, sigma_min=float(sigma.min()), sigma_max=float(sigma.max()))


def _trapz(t, y):
    return float(np.trapezoid(y, t)) if hasattr(np, "trapezoid") else float(np.trapz(y, t))


def ballistic_inequality_residual(records: Sequence[DiagnosticsRecord], t0=None, t1=None):
    """LHS minus RHS of the windowed ballistic-energy inequality on ``[t0, t1]``.

    Time integrals use the trapezoid rule over the records; the window ends
    must coincide with recorded times. Non-positive values mean the
    inequality holds.
    """
    recs = sorted(records, key=lambda r: r.t)
    if len(recs) < 2:
        raise IncompleteWindowError("need at least two records")
    t0 = recs[0].t if t0 is None else t0
    t1 = recs[-1].t if t1 is None else t1
    ts = np.array([r.t for r in recs])
    tol = 1e-12 * max(1.0, abs(t1))
    i0 = np.flatnonzero(np.abs(ts - t0) <= tol)
    i1 = np.flatnonzero(np.abs(ts - t1) <= tol)
    if len(i0) == 0 or len(i1) == 0:
        raise IncompleteWindowError(f"window [{t0}, {t1}] does not start and end on records")
    win = recs[i0[0]:i1[-1] + 1]
    tt = np.array([r.t for r in win])
    col = lambda name: np.array([getattr(r, name) for r in win])
    lhs = (win[-1].ballistic - win[0].ballistic + _trapz(tt, col("inflow_term"))
           + _trapz(tt, col("outflow_term")) + _trapz(tt, col("weighted_dissipation")))
    rhs = _trapz(tt, col("stress_work") + col("force_work") + col("extension_work"))
    return lhs - rhs


def gauss_green_residual(theta, ext: TemperatureExtension, problem: Problem):
    """``int kappa grad(theta) / theta . grad(theta_tilde) - oint K(theta_B) d_n theta_tilde``.

    Cell-centred gradients for the volume term, half-cell one-sided normal
    derivatives for the boundary term.
    """
    grid, bd, tr = problem.grid, problem.bd, problem.transport
    t = ext.t
    faces = {s: grid.face_centers(s) for s in grid.boundary_sides()}
    tb = {s: bd.temperature(t, *faces[s]) for s in faces}
    z = np.zeros(1)
    pad = lambda f: _pad(f, grid, tb.get("left", z), tb.get("right", z), tb.get("bottom", z), tb.get("top", z))
    gth, gtt = pad(theta), pad(ext.theta_tilde)
    grad = lambda g: ((g[2:, 1:-1] - g[:-2, 1:-1]) / (2 * grid.dx), (g[1:-1, 2:] - g[1:-1, :-2]) / (2 * grid.dy))
    a, b = grad(gth), grad(gtt)
    vol = float(np.sum(tr.kappa(theta) / theta * (a[0] * b[0] + a[1] * b[1])) * grid.cell_area)
    surf = 0.0
    tt = ext.theta_tilde
    for side, v in tb.items():
        edge = {"left": tt[0], "right": tt[-1], "bottom": tt[:, 0], "top": tt[:, -1]}[side]
        h = grid.dx if side in ("left", "right") else grid.dy
        dn = (v - edge) / (0.5 * h)
        surf += float(np.sum(kappa_primitive(v, tr) * dn) * grid.face_length(side))
    return vol - surf


def _interp(t, E, x):
    return float(np.interp(x, t, E))


def dichotomy_classify(t, E, window=1.0, threshold=0.0, drop=0.0, t0=None) -> DichotomyVerdict:
    """Classify consecutive windows ``[I, I + window]`` of an energy series.

    ``below-threshold`` if the minimum over the window is at most
    ``threshold``; otherwise ``strictly-decreasing`` if
    ``E(I + window) <= E(I) - drop``; otherwise ``neither``. The series is
    dissipative-consistent when some window is below threshold and no
    ``neither`` window follows the first one that is.
    """
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    order = np.argsort(t, kind="stable")
    t, E = t[order], E[order]
    start = t[0] if t0 is None else t0
    eps = 1e-12 * max(1.0, abs(t[-1]))
    n = int(np.floor((t[-1] - start) / window + 1e-9))
    if n < 2:
        raise ValueError("series must cover at least two windows")
    windows, classes = [], []
    for k in range(n):
        a, b = start + k * window, start + (k + 1) * window
        inside = (t >= a - eps) & (t <= b + eps)
        ea, eb = _interp(t, E, a), _interp(t, E, b)
        emin = min(ea, eb, float(E[inside].min()) if np.any(inside) else np.inf)
        tol = 1e-12 * max(1.0, abs(ea))
        if emin <= threshold:
            cls = "below-threshold"
        elif eb <= ea - drop + tol:
            cls = "strictly-decreasing"
        else:
            cls = "neither"
        windows.append((a, b))
        classes.append(cls)
    first = next((i for i, c in enumerate(classes) if c == "below-threshold"), None)
    ok = first is not None and "neither" not in classes[first:]
    return DichotomyVerdict(windows, classes, ok, dissipativity_estimate(t, E))


def dissipativity_estimate(t, E, trailing_fraction=0.5):
    """Maximum of ``E`` over the trailing fraction of the time span."""
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    if E.size == 0:
        raise ValueError("empty series")
    cut = t.max() - trailing_fraction * (t.max() - t.min())
    return float(E[t >= cut - 1e-12 * max(1.0, abs(cut))].max())


def calibrate_dichotomy(t, E, window=1.0, margin=0.1, drop_fraction=0.5, trailing_fraction=0.5):
    """Pick ``(threshold, drop)`` for :func:`dichotomy_classify` from a reference run.

    The threshold sits ``margin * |E_inf|`` above the trailing maximum
    ``E_inf`` (works for either sign). The drop is ``drop_fraction`` of the
    smallest per-window decrease seen before the first window that reaches
    the threshold; zero if the run starts below it.
    """
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    e_inf = dissipativity_estimate(t, E, trailing_fraction)
    threshold = e_inf + margin * max(abs(e_inf), 1e-12)
    v = dichotomy_classify(t, E, window, threshold, 0.0)
    drops = []
    for (a, b), cls in zip(v.windows, v.classes):
        if cls == "below-threshold":
            break
        drops.append(_interp(t, E, a) - _interp(t, E, b))
    drop = drop_fraction * min(drops) if drops else 0.0
    return threshold, max(drop, 0.0)


def mass_balance_residual(records: Sequence[DiagnosticsRecord], reports: Sequence[StepReport]):
    """``[M(t1) - M(t0)] - sum(influx - outflux)`` over contiguous step reports."""
    recs = sorted(records, key=lambda r: r.t)
    if len(recs) < 2:
        raise IncompleteWindowError("need records at both window ends")
    t0, t1 = recs[0].t, recs[-1].t
    reps = [r for r in reports if r.t > t0 + 1e-12 * max(1.0, abs(t0)) and r.t <= t1 + 1e-12 * max(1.0, abs(t1))]
    if not reps:
        raise IncompleteWindowError("no step reports inside the window")
    tcur = t0
    for r in reps:
        if abs((r.t - r.dt) - tcur) > 1e-9 * max(1.0, abs(tcur)):
            raise IncompleteWindowError(f"gap in step reports near t={tcur}")
        tcur = r.t
    if abs(tcur - t1) > 1e-9 * max(1.0, abs(t1)):
        raise IncompleteWindowError("step reports do not reach the window end")
    net = sum(r.influx - r.outflux for r in reps)
    return (recs[-1].mass - recs[0].mass) - net


def lyapunov_functional(state: FluidState, problem: Problem, theta=None):
    """``int [rho |u - u_B|**2/2 + rho e - rho (G + |u_B|**2/2) - theta_B rho s]`` for
    rigid data with constant boundary temperature and a potential force."""
    eos, grid, bd = problem.eos, problem.grid, problem.bd
    theta = state.temperature(eos) if theta is None else theta
    X, Y = grid.centers()
    uB = _cell_velocity_B(bd, grid, state.t)
    w = state.velocity - uB
    thB = bd.temperature(state.t, X, Y)
    G = problem.scheme.force.G(X, Y)
    dens = (0.5 * state.rho * (w[0] ** 2 + w[1] ** 2) + state.rho_e
            - state.rho * (G + 0.5 * (uB[0] ** 2 + uB[1] ** 2)) - thB * eos.rho_s(state.rho, theta))
    return float(dens.sum() * grid.cell_area)
