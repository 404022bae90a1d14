"""Finite-volume semi-discretisation and explicit midpoint stepping.

Cell-centred ``(rho, rho u, rho e)`` on a rectangle with one ghost layer.
Convection uses Rusanov (or plain upwind) fluxes on interior faces and the
Dirichlet normal velocity ``u_B . n`` on boundary faces; the pressure gradient
is a cell term built from face pressures; stresses and heat fluxes are
evaluated on faces with centred differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .domain import INFLOW, OUTFLOW, WALL, BoundaryData, BoundaryPartition, Grid, classify_boundary
from .thermo import EquationOfState, ThermoError, TransportSpec, get_eos

__all__ = [
    "StepError",
    "Force",
    "SchemeConfig",
    "Problem",
    "FluidState",
    "StepReport",
    "Ghosts",
    "apply_boundary",
    "viscous_stress",
    "heat_flux",
    "convective_update",
    "time_step_size",
    "step",
]


class StepError(RuntimeError):
    """Numerical failure during a step; ``payload`` carries diagnostics."""

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload or {}


@dataclass(frozen=True)
class Force:
    """Driving force ``g``.

    ``kind`` is ``zero``, ``constant`` (``g = vector``) or ``potential`` with
    ``G = vector . x`` (``potential="linear"``) or
    ``G = -strength/2 |x - center|**2`` (``potential="quadratic"``).
    """

    kind: str = "zero"
    vector: tuple = (0.0, 0.0)
    potential: str = "linear"
    strength: float = 0.0
    center: tuple = (0.5, 0.5)

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "potential"):
            raise ValueError(f"unknown force kind {self.kind!r}")
        if self.kind == "potential" and self.potential not in ("linear", "quadratic"):
            raise ValueError(f"unknown potential {self.potential!r}")

    def G(self, x, y):
        """Potential with ``g = grad G``; a constant force is the linear potential."""
        if self.kind == "zero":
            return 0.0 * x + 0.0 * y
        if self.kind == "constant" or self.potential == "linear":
            return self.vector[0] * x + self.vector[1] * y
        cx, cy = self.center
        return -0.5 * self.strength * ((x - cx) ** 2 + (y - cy) ** 2)

    def g(self, t, x, y):
        if self.kind == "zero":
            return 0.0 * x + 0.0 * y, 0.0 * x + 0.0 * y
        if self.kind == "constant" or self.potential == "linear":
            return self.vector[0] + 0.0 * x + 0.0 * y, self.vector[1] + 0.0 * x + 0.0 * y
        cx, cy = self.center
        return -self.strength * (x - cx) + 0.0 * y, -self.strength * (y - cy) + 0.0 * x

    @property
    def bound(self):
        """Sup-norm of ``g`` over the unit square (constant and linear forces are exact)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant" or self.potential == "linear":
            return float(np.hypot(*self.vector))
        return float(self.strength * np.sqrt(2.0))


@dataclass(frozen=True)
class SchemeConfig:
    cfl: float = 0.4
    flux: str = "rusanov"
    rho_floor: float = 1e-10
    theta_floor: float = 1e-8
    floors: bool = True
    max_steps: int = 10**7
    dt_min: float = 1e-12
    force: Force = field(default_factory=Force)

    def __post_init__(self):
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if self.flux not in ("rusanov", "upwind"):
            raise ValueError(f"unknown flux {self.flux!r}")


class Problem:
    """Everything a step needs besides the state: grid, constitutive data,
    boundary data and scheme parameters."""

    def __init__(self, grid: Grid, eos, transport: TransportSpec, bd: BoundaryData,
                 scheme: Optional[SchemeConfig] = None):
        self.grid = grid
        self.eos = get_eos(eos)
        self.transport = transport
        self.bd = bd
        self.scheme = scheme or SchemeConfig()
        self._frame_cache = {}
        X, Y = grid.centers()
        self.X, self.Y = X, Y

    def frame(self, t) -> "BoundaryFrame":
        key = 0.0 if self.bd.steady else float(t)
        fr = self._frame_cache.get(key)
        if fr is None:
            fr = BoundaryFrame(self.grid, self.bd, self.eos, t)
            if self.bd.steady:
                self._frame_cache[key] = fr
        return fr

    def force(self, t):
        return self.scheme.force.g(t, self.X, self.Y)


class BoundaryFrame:
    """Boundary data sampled on the faces of every Dirichlet side at time ``t``."""

    def __init__(self, grid: Grid, bd: BoundaryData, eos: EquationOfState, t):
        self.t = t
        self.partition: BoundaryPartition = classify_boundary(bd, t, grid)
        self.sides = {}
        for side in grid.boundary_sides():
            x, y = grid.face_centers(side)
            ux, uy = bd.velocity(t, x, y)
            # face corners along the side, for tangential derivatives
            if side in ("left", "right"):
                nodes_y = grid.origin[1] + np.arange(grid.ny + 1) * grid.dy
                nodes_x = np.full_like(nodes_y, x[0])
                h = grid.dy
            else:
                nodes_x = grid.origin[0] + np.arange(grid.nx + 1) * grid.dx
                nodes_y = np.full_like(nodes_x, y[0])
                h = grid.dx
            nux, nuy = bd.velocity(t, nodes_x, nodes_y)
            self.sides[side] = dict(
                x=x, y=y, ux=np.array(ux), uy=np.array(uy),
                theta=np.array(bd.temperature(t, x, y)),
                rho=np.array(bd.density(t, x, y)),
                dux_t=np.diff(nux) / h, duy_t=np.diff(nuy) / h,
                un=self.partition.un[side], label=self.partition.labels[side],
            )


@dataclass
class FluidState:
    rho: np.ndarray
    mom: np.ndarray
    rho_e: np.ndarray
    t: float = 0.0

    def copy(self):
        return FluidState(self.rho.copy(), self.mom.copy(), self.rho_e.copy(), self.t)

    def __post_init__(self):
        self._theta = None

    @property
    def velocity(self):
        return self.mom / self.rho

    @classmethod
    def from_primitive(cls, eos, rho, u, theta, t=0.0):
        eos = get_eos(eos)
        rho = np.array(rho, dtype=float)
        u = np.asarray(u, dtype=float)
        theta = np.broadcast_to(np.asarray(theta, dtype=float), rho.shape)
        mom = rho[None] * np.broadcast_to(u, (2,) + rho.shape)
        return cls(rho, np.array(mom), np.array(eos.rho_e(rho, theta)), float(t))

    def temperature(self, eos):
        # cached per (eos, array objects); fields are never modified in place
        key = (id(eos), id(self.rho), id(self.rho_e))
        if self._theta is None or self._theta[0] != key:
            self._theta = (key, eos.theta_from_rho_e(self.rho, self.rho_e))
        return self._theta[1]


@dataclass
class StepReport:
    dt: float
    max_wave_speed: float
    floors: int
    influx: float
    outflux: float
    t: float = 0.0


@dataclass
class Ghosts:
    """Cell fields padded with one ghost layer, shape ``(nx + 2, ny + 2)``."""

    rho: np.ndarray
    ux: np.ndarray
    uy: np.ndarray
    theta: np.ndarray


def _pad(f, grid: Grid, lo_x, hi_x, lo_y, hi_y, mirror=True):
    """Pad ``f``; Dirichlet sides get ``2 b - f`` (mirror) or ``b`` (copy)."""
    nx, ny = f.shape
    g = np.zeros((nx + 2, ny + 2))
    g[1:-1, 1:-1] = f
    if grid.periodic[0]:
        g[0, 1:-1], g[-1, 1:-1] = f[-1], f[0]
    else:
        g[0, 1:-1] = 2.0 * lo_x - f[0] if mirror else lo_x
        g[-1, 1:-1] = 2.0 * hi_x - f[-1] if mirror else hi_x
    if grid.periodic[1]:
        g[1:-1, 0], g[1:-1, -1] = f[:, -1], f[:, 0]
    else:
        g[1:-1, 0] = 2.0 * lo_y - f[:, 0] if mirror else lo_y
        g[1:-1, -1] = 2.0 * hi_y - f[:, -1] if mirror else hi_y
    # corners are not used by the face stencils; fill with the diagonal cell
    g[0, 0], g[0, -1], g[-1, 0], g[-1, -1] = f[0, 0], f[0, -1], f[-1, 0], f[-1, -1]
    return g


def _side(frame, side, key, default):
    s = frame.sides.get(side)
    return default if s is None else s[key]


def apply_boundary(state: FluidState, frame: BoundaryFrame, grid: Grid, theta=None, eos=None) -> Ghosts:
    """Ghost values for ``rho``, ``u`` and ``theta``.

    Velocity and temperature ghosts mirror the interior so that face averages
    equal ``u_B`` and ``theta_B``. Density ghosts are ``rho_B`` on inflow faces
    and copies of the interior cell on wall and outflow faces.
    """
    if theta is None:
        theta = state.temperature(eos)
    u = state.velocity
    z = np.zeros(1)
    get = lambda side, key: _side(frame, side, key, z)
    ghosts = {}
    for name, f in (("ux", u[0]), ("uy", u[1]), ("theta", theta)):
        ghosts[name] = _pad(f, grid, get("left", name), get("right", name),
                            get("bottom", name), get("top", name))
    rho = state.rho

    def rho_face(side, interior):
        if side not in frame.sides:
            return z
        s = frame.sides[side]
        return np.where(s["label"] == INFLOW, s["rho"], interior)

    ghosts["rho"] = _pad(rho, grid, rho_face("left", rho[0]), rho_face("right", rho[-1]),
                         rho_face("bottom", rho[:, 0]), rho_face("top", rho[:, -1]), mirror=False)
    return Ghosts(**ghosts)


# ---------------------------------------------------------------------------
# discrete operators


def _cell_grad(g: np.ndarray, grid: Grid):
    """Centred cell gradient of a padded field."""
    return ((g[2:, 1:-1] - g[:-2, 1:-1]) / (2 * grid.dx),
            (g[1:-1, 2:] - g[1:-1, :-2]) / (2 * grid.dy))


def _xface_avg(g):
    return 0.5 * (g[1:, 1:-1] + g[:-1, 1:-1])


def _yface_avg(g):
    return 0.5 * (g[1:-1, 1:] + g[1:-1, :-1])


def _xface_tangential(cell_dy, grid: Grid, frame, key):
    """d/dy on x-faces: neighbour average inside, boundary data on Dirichlet sides."""
    nx, ny = cell_dy.shape
    out = np.empty((nx + 1, ny))
    out[1:-1] = 0.5 * (cell_dy[1:] + cell_dy[:-1])
    if grid.periodic[0]:
        out[0] = out[-1] = 0.5 * (cell_dy[0] + cell_dy[-1])
    else:
        out[0] = frame.sides["left"][key]
        out[-1] = frame.sides["right"][key]
    return out


def _yface_tangential(cell_dx, grid: Grid, frame, key):
    nx, ny = cell_dx.shape
    out = np.empty((nx, ny + 1))
    out[:, 1:-1] = 0.5 * (cell_dx[:, 1:] + cell_dx[:, :-1])
    if grid.periodic[1]:
        out[:, 0] = out[:, -1] = 0.5 * (cell_dx[:, 0] + cell_dx[:, -1])
    else:
        out[:, 0] = frame.sides["bottom"][key]
        out[:, -1] = frame.sides["top"][key]
    return out


def _div(fx, fy, grid: Grid):
    return (fx[1:] - fx[:-1]) / grid.dx + (fy[:, 1:] - fy[:, :-1]) / grid.dy


@dataclass
class Kinematics:
    """Primitive fields, ghosts and gradients shared by the operators."""

    theta: np.ndarray
    u: np.ndarray
    p: np.ndarray
    ghosts: Ghosts
    grad_u: np.ndarray       # [i, j] = d u_i / d x_j at cells
    grad_theta: tuple

    @property
    def div_u(self):
        return self.grad_u[0, 0] + self.grad_u[1, 1]


def kinematics(state: FluidState, problem: Problem, t=None, theta=None) -> Kinematics:
    t = state.t if t is None else t
    eos, grid = problem.eos, problem.grid
    if theta is None:
        theta = state.temperature(eos)
    frame = problem.frame(t)
    gh = apply_boundary(state, frame, grid, theta=theta)
    dux = _cell_grad(gh.ux, grid)
    duy = _cell_grad(gh.uy, grid)
    grad_u = np.array([[dux[0], dux[1]], [duy[0], duy[1]]])
    return Kinematics(theta, state.velocity, eos.pressure(state.rho, theta), gh, grad_u,
                      _cell_grad(gh.theta, grid))


def cell_stress(kin: Kinematics, transport: TransportSpec):
    """Cell-centred Newtonian stress ``S`` with shape ``(2, 2, nx, ny)``."""
    mu, eta = transport.mu(kin.theta), transport.eta(kin.theta)
    G = kin.grad_u
    div = kin.div_u
    S = np.empty_like(G)
    S[0, 0] = mu * (2 * G[0, 0] - div) + eta * div
    S[1, 1] = mu * (2 * G[1, 1] - div) + eta * div
    S[0, 1] = S[1, 0] = mu * (G[0, 1] + G[1, 0])
    return S


def dissipation(kin: Kinematics, transport: TransportSpec):
    """``S : D u`` written as ``2 mu |D u - div u I / 2|**2 + eta (div u)**2 >= 0``."""
    mu, eta = transport.mu(kin.theta), transport.eta(kin.theta)
    G = kin.grad_u
    div = kin.div_u
    a = G[0, 0] - 0.5 * div
    d = G[1, 1] - 0.5 * div
    b = 0.5 * (G[0, 1] + G[1, 0])
    return 2.0 * mu * (a * a + d * d + 2.0 * b * b) + eta * div * div


def viscous_stress(state: FluidState, problem: Problem, t=None):
    """Cell-centred viscous stress tensor field ``S`` (shape ``(2, 2, nx, ny)``)."""
    return cell_stress(kinematics(state, problem, t), problem.transport)


def _face_stress(kin: Kinematics, problem: Problem, frame):
    """Stress components on x-faces (``Sxx``, ``Sxy``) and y-faces (``Sxy``, ``Syy``)."""
    grid, tr = problem.grid, problem.transport
    gh = kin.ghosts
    th_x, th_y = _xface_avg(gh.theta), _yface_avg(gh.theta)
    # x-faces
    dux_dx = (gh.ux[1:, 1:-1] - gh.ux[:-1, 1:-1]) / grid.dx
    duy_dx = (gh.uy[1:, 1:-1] - gh.uy[:-1, 1:-1]) / grid.dx
    dux_dy = _xface_tangential(kin.grad_u[0, 1], grid, frame, "dux_t")
    duy_dy = _xface_tangential(kin.grad_u[1, 1], grid, frame, "duy_t")
    mu, eta = tr.mu(th_x), tr.eta(th_x)
    div = dux_dx + duy_dy
    sxx_x = mu * (2 * dux_dx - div) + eta * div
    sxy_x = mu * (dux_dy + duy_dx)
    # y-faces
    dux_dy_f = (gh.ux[1:-1, 1:] - gh.ux[1:-1, :-1]) / grid.dy
    duy_dy_f = (gh.uy[1:-1, 1:] - gh.uy[1:-1, :-1]) / grid.dy
    dux_dx_f = _yface_tangential(kin.grad_u[0, 0], grid, frame, "dux_t")
    duy_dx_f = _yface_tangential(kin.grad_u[1, 0], grid, frame, "duy_t")
    mu, eta = tr.mu(th_y), tr.eta(th_y)
    div = dux_dx_f + duy_dy_f
    syy_y = mu * (2 * duy_dy_f - div) + eta * div
    sxy_y = mu * (dux_dy_f + duy_dx_f)
    return sxx_x, sxy_x, sxy_y, syy_y


def _face_heat_flux(kin: Kinematics, problem: Problem):
    grid, tr = problem.grid, problem.transport
    gh = kin.ghosts
    qx = -tr.kappa(_xface_avg(gh.theta)) * (gh.theta[1:, 1:-1] - gh.theta[:-1, 1:-1]) / grid.dx
    qy = -tr.kappa(_yface_avg(gh.theta)) * (gh.theta[1:-1, 1:] - gh.theta[1:-1, :-1]) / grid.dy
    return qx, qy


def heat_flux(state: FluidState, problem: Problem, t=None):
    """Fourier heat flux on faces: ``(qx, qy)`` with shapes ``(nx+1, ny)`` and ``(nx, ny+1)``."""
    return _face_heat_flux(kinematics(state, problem, t), problem)


def _boundary_face_pressure(state, kin, problem, frame):
    """Face pressures: averages inside, ``p(rho_face, theta_B)`` on Dirichlet faces."""
    grid, eos = problem.grid, problem.eos
    p = kin.p
    gp = _pad(p, grid, 0.0, 0.0, 0.0, 0.0, mirror=False)
    gh = kin.ghosts
    sides = {"left": (gh.rho[0, 1:-1], (0, slice(1, -1)), p[0]),
             "right": (gh.rho[-1, 1:-1], (-1, slice(1, -1)), p[-1]),
             "bottom": (gh.rho[1:-1, 0], (slice(1, -1), 0), p[:, 0]),
             "top": (gh.rho[1:-1, -1], (slice(1, -1), -1), p[:, -1])}
    names = [n for n in sides if n in frame.sides]
    pb = _per_side(eos.pressure, [sides[n][0] for n in names], [frame.sides[n]["theta"] for n in names])
    for n, pf in zip(names, pb):
        gp[sides[n][1]] = 2 * pf - sides[n][2]
    return _xface_avg(gp), _yface_avg(gp)


def _per_side(fn, *columns):
    """Evaluate ``fn`` once on side arrays joined end to end, then split back."""
    sizes = np.cumsum([len(a) for a in columns[0]])[:-1]
    if len(columns[0]) == 0:
        return []
    joined = [np.concatenate([np.broadcast_to(a, b.shape) for a, b in zip(col, columns[0])]) for col in columns]
    return np.split(fn(*joined), sizes)


def _wave_speed(state, kin, problem):
    return problem.eos.adiabatic_sound_speed(state.rho, kin.theta)


def _convective_fluxes(state, kin, problem, frame, cs):
    """Face fluxes of ``(rho, mx, my, rho_e)`` plus signed boundary mass fluxes."""
    grid, eos, scheme = problem.grid, problem.eos, problem.scheme
    U = [state.rho, state.mom[0], state.mom[1], state.rho_e]
    u = kin.u
    fluxes = []
    for axis in (0, 1):
        un = u[axis]
        if axis == 0:
            def pair(f):
                if grid.periodic[0]:
                    f = np.concatenate([f[-1:], f, f[:1]], 0)
                    return f[:-1], f[1:]
                return f[:-1], f[1:]
        else:
            def pair(f):
                if grid.periodic[1]:
                    f = np.concatenate([f[:, -1:], f, f[:, :1]], 1)
                    return f[:, :-1], f[:, 1:]
                return f[:, :-1], f[:, 1:]
        uL, uR = pair(un)
        out = []
        if scheme.flux == "rusanov":
            sL, sR = pair(np.abs(un) + cs)
            a = np.maximum(sL, sR)
            for q in U:
                qL, qR = pair(q)
                out.append(0.5 * (qL * uL + qR * uR) - 0.5 * a * (qR - qL))
        else:
            ubar = 0.5 * (uL + uR)
            up, um = np.maximum(ubar, 0.0), np.minimum(ubar, 0.0)
            for q in U:
                qL, qR = pair(q)
                out.append(up * qL + um * qR)
        if not grid.periodic[axis]:
            full = []
            for q in out:
                shape = list(q.shape)
                shape[axis] += 2
                fq = np.zeros(shape)
                if axis == 0:
                    fq[1:-1] = q
                else:
                    fq[:, 1:-1] = q
                full.append(fq)
            out = full
        fluxes.append(out)

    mass_in = mass_out = 0.0
    face_rho = {}
    for side, s in frame.sides.items():
        idx = 0 if side in ("left", "bottom") else -1
        interior = state.rho[idx] if side in ("left", "right") else state.rho[:, idx]
        face_rho[side] = np.where(s["label"] == INFLOW, s["rho"], interior)
    names = list(face_rho)
    face_e = dict(zip(names, _per_side(eos.rho_e, [face_rho[n] for n in names],
                                       [frame.sides[n]["theta"] for n in names])))
    for side, s in frame.sides.items():
        axis = 0 if side in ("left", "right") else 1
        sign = -1.0 if side in ("left", "bottom") else 1.0
        idx = 0 if sign < 0 else -1
        rho_f = face_rho[side]
        un = np.where(s["label"] == WALL, 0.0, s["un"])
        # flux along +axis direction = sign * (u_B . n) * U_face
        mf = rho_f * un
        vals = [mf, mf * s["ux"], mf * s["uy"], face_e[side] * un]
        for k in range(4):
            if axis == 0:
                fluxes[0][k][idx] = sign * vals[k]
            else:
                fluxes[1][k][:, idx] = sign * vals[k]
        length = grid.face_length(side)
        mass_in += float(-np.sum(mf[mf < 0]) * length)
        mass_out += float(np.sum(mf[mf > 0]) * length)
    return fluxes, mass_in, mass_out


def convective_update(state: FluidState, problem: Problem, t=None, kin=None):
    """Convective and pressure contributions to ``d/dt (rho, rho u, rho e)``.

    Returns ``(drho, dmom, drho_e)``: minus the flux divergences, minus the
    cell pressure gradient for momentum and ``- p div u`` for the internal
    energy.
    """
    t = state.t if t is None else t
    kin = kin or kinematics(state, problem, t)
    frame = problem.frame(t)
    cs = _wave_speed(state, kin, problem)
    (fx, fy), _, _ = _convective_fluxes(state, kin, problem, frame, cs)
    grid = problem.grid
    drho = -_div(fx[0], fy[0], grid)
    pfx, pfy = _boundary_face_pressure(state, kin, problem, frame)
    dmx = -_div(fx[1], fy[1], grid) - (pfx[1:] - pfx[:-1]) / grid.dx
    dmy = -_div(fx[2], fy[2], grid) - (pfy[:, 1:] - pfy[:, :-1]) / grid.dy
    de = -_div(fx[3], fy[3], grid) - kin.p * kin.div_u
    return drho, np.array([dmx, dmy]), de


def rhs(state: FluidState, problem: Problem, t=None, theta=None):
    """Full semi-discrete right-hand side and boundary mass fluxes."""
    t = state.t if t is None else t
    grid = problem.grid
    kin = kinematics(state, problem, t, theta)
    frame = problem.frame(t)
    cs = _wave_speed(state, kin, problem)
    (fx, fy), m_in, m_out = _convective_fluxes(state, kin, problem, frame, cs)
    pfx, pfy = _boundary_face_pressure(state, kin, problem, frame)
    sxx_x, sxy_x, sxy_y, syy_y = _face_stress(kin, problem, frame)
    qx, qy = _face_heat_flux(kin, problem)
    gx, gy = problem.force(t)

    drho = -_div(fx[0], fy[0], grid)
    dmx = (-_div(fx[1], fy[1], grid) - (pfx[1:] - pfx[:-1]) / grid.dx
           + _div(sxx_x, sxy_y, grid) + state.rho * gx)
    dmy = (-_div(fx[2], fy[2], grid) - (pfy[:, 1:] - pfy[:, :-1]) / grid.dy
           + _div(sxy_x, syy_y, grid) + state.rho * gy)
    de = (-_div(fx[3], fy[3], grid) - _div(qx, qy, grid)
          + dissipation(kin, problem.transport) - kin.p * kin.div_u)
    speed = float(np.max(np.hypot(kin.u[0], kin.u[1]) + cs))
    return drho, np.array([dmx, dmy]), de, m_in, m_out, speed


def time_step_size(state: FluidState, problem: Problem, theta=None):
    """``cfl * min(h/(|u| + c_s), h**2 rho/(4 (mu + eta)), h**2 rho c_v/(4 kappa))``
    with the isothermal sound speed ``c_s = sqrt(dp/drho)``."""
    eos, tr, grid = problem.eos, problem.transport, problem.grid
    theta = state.temperature(eos) if theta is None else theta
    h = min(grid.dx, grid.dy)
    u = state.velocity
    cs = eos.sound_speed(state.rho, theta)
    speed = np.hypot(u[0], u[1]) + cs
    if not np.all(np.isfinite(speed)):
        raise StepError("non-finite wave speed", {"t": state.t})
    acoustic = h / speed
    visc = h**2 * state.rho / (4.0 * (tr.mu(theta) + tr.eta(theta)))
    cond = h**2 * eos.drho_e_dtheta(state.rho, theta) / (4.0 * tr.kappa(theta))
    dt = problem.scheme.cfl * float(np.min(np.minimum(np.minimum(acoustic, visc), cond)))
    if not dt > 0:
        raise StepError("non-positive time step", {"t": state.t})
    return dt


def _apply_floors(rho, mom, rho_e, problem: Problem):
    eos, sc = problem.eos, problem.scheme
    if not np.all(np.isfinite(rho)) or not np.all(np.isfinite(rho_e)) or not np.all(np.isfinite(mom)):
        raise StepError("non-finite state")
    count = 0
    if eos.hs_enabled and np.any(rho >= eos.rho_bar):
        raise StepError("density reached the hard-sphere limit", {"max_rho": float(rho.max())})
    if not sc.floors:
        if np.any(rho <= 0):
            raise StepError("non-positive density", {"min_rho": float(rho.min())})
        return rho, mom, rho_e, 0
    low = rho < sc.rho_floor
    if np.any(low):
        count += int(np.count_nonzero(low))
        rho = np.where(low, sc.rho_floor, rho)
    cold = eos.rho_e(rho, np.full(rho.shape, sc.theta_floor))
    cold_mask = rho_e < cold
    if np.any(cold_mask):
        count += int(np.count_nonzero(cold_mask))
        rho_e = np.where(cold_mask, cold, rho_e)
    return rho, mom, rho_e, count


def step(state: FluidState, problem: Problem, dt=None):
    """Advance one explicit midpoint step; returns ``(new_state, StepReport)``."""
    eos = problem.eos
    try:
        theta = state.temperature(eos)
        if dt is None:
            dt = time_step_size(state, problem, theta)
        if dt < problem.scheme.dt_min:
            raise StepError("time step below dt_min", {"dt": dt, "t": state.t})
        t = state.t
        d1 = rhs(state, problem, t, theta)
        r, m, e, f1 = _apply_floors(state.rho + 0.5 * dt * d1[0], state.mom + 0.5 * dt * d1[1],
                                    state.rho_e + 0.5 * dt * d1[2], problem)
        half = FluidState(r, m, e, t + 0.5 * dt)
        d2 = rhs(half, problem, t + 0.5 * dt)
        r, m, e, f2 = _apply_floors(state.rho + dt * d2[0], state.mom + dt * d2[1],
                                    state.rho_e + dt * d2[2], problem)
        new = FluidState(r, m, e, t + dt)
        new.temperature(eos)
    except ThermoError as exc:
        raise StepError(f"state recovery failed: {exc}", {"t": state.t}) from exc
    return new, StepReport(dt, max(d1[5], d2[5]), f1 + f2, dt * d2[3], dt * d2[4], new.t)
