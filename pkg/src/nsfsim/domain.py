"""Rectangular grid, boundary data, boundary classification and the harmonic
temperature extension."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

__all__ = [
    "Grid",
    "BoundaryData",
    "BoundaryPartition",
    "TemperatureExtension",
    "ValidationReport",
    "SolverError",
    "INFLOW",
    "WALL",
    "OUTFLOW",
    "SIDES",
    "classify_boundary",
    "validate_boundary_data",
    "harmonic_extension",
    "extension_bounds_check",
    "boundary_preset",
]

INFLOW, WALL, OUTFLOW = -1, 0, 1
SIDES = ("left", "right", "bottom", "top")
MODES = ("flow-through", "impermeable", "rigid")
_NORMALS = {"left": (-1.0, 0.0), "right": (1.0, 0.0), "bottom": (0.0, -1.0), "top": (0.0, 1.0)}


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    dx: float
    dy: float
    origin: tuple = (0.0, 0.0)
    periodic: tuple = (False, False)

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError("grid needs at least 4 cells per direction")
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("cell sizes must be positive")

    @classmethod
    def unit_square(cls, n, **kw):
        return cls(n, n, 1.0 / n, 1.0 / n, **kw)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def lx(self):
        return self.nx * self.dx

    @property
    def ly(self):
        return self.ny * self.dy

    @property
    def area(self):
        return self.lx * self.ly

    @property
    def cell_area(self):
        return self.dx * self.dy

    @property
    def xc(self):
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def yc(self):
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.dy

    def centers(self):
        """Cell-center coordinates ``(X, Y)`` of shape ``(nx, ny)``."""
        return np.meshgrid(self.xc, self.yc, indexing="ij")

    def boundary_sides(self):
        """Sides carrying Dirichlet data (periodic directions excluded)."""
        sides = []
        if not self.periodic[0]:
            sides += ["left", "right"]
        if not self.periodic[1]:
            sides += ["bottom", "top"]
        return sides

    def face_centers(self, side):
        x0, y0 = self.origin
        if side == "left":
            return np.full(self.ny, x0), self.yc
        if side == "right":
            return np.full(self.ny, x0 + self.lx), self.yc
        if side == "bottom":
            return self.xc, np.full(self.nx, y0)
        if side == "top":
            return self.xc, np.full(self.nx, y0 + self.ly)
        raise KeyError(side)

    def face_length(self, side):
        return self.dy if side in ("left", "right") else self.dx

    @staticmethod
    def normal(side):
        return _NORMALS[side]


def _const(value):
    return lambda t, x, y: np.full(np.broadcast(x, y).shape, float(value))


@dataclass(frozen=True)
class BoundaryData:
    """Boundary functions defined for every ``(t, x, y)``.

    ``u_B`` returns a pair ``(ux, uy)``. ``mode`` selects the hypotheses the
    data are validated against: ``flow-through``, ``impermeable`` or ``rigid``.
    """

    u_B: Callable
    theta_B: Callable
    rho_B: Callable = field(default_factory=lambda: _const(1.0))
    mode: str = "impermeable"
    steady: bool = True
    theta_bounds: Optional[tuple] = None
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown boundary mode {self.mode!r}")

    def velocity(self, t, x, y):
        ux, uy = self.u_B(t, x, y)
        shape = np.broadcast(x, y).shape
        return np.broadcast_to(np.asarray(ux, float), shape), np.broadcast_to(np.asarray(uy, float), shape)

    def temperature(self, t, x, y):
        return np.broadcast_to(np.asarray(self.theta_B(t, x, y), float), np.broadcast(x, y).shape)

    def density(self, t, x, y):
        return np.broadcast_to(np.asarray(self.rho_B(t, x, y), float), np.broadcast(x, y).shape)


@dataclass
class BoundaryPartition:
    """Per-side face labels (``INFLOW``, ``WALL``, ``OUTFLOW``) and ``u_B . n``."""

    t: float
    labels: dict
    un: dict

    def count(self, label):
        return int(sum(np.count_nonzero(v == label) for v in self.labels.values()))


def classify_boundary(u_B, t, grid: Grid, tau=None) -> BoundaryPartition:
    """Label every boundary face by the sign of ``u_B . n``.

    Faces with ``|u_B . n| <= tau`` are walls; ``tau`` defaults to
    ``1e-12`` times the largest boundary speed.
    """
    velocity = u_B.velocity if isinstance(u_B, BoundaryData) else (
        lambda t, x, y: tuple(np.broadcast_to(np.asarray(c, float), np.broadcast(x, y).shape)
                              for c in u_B(t, x, y)))
    un = {}
    speed = 0.0
    for side in grid.boundary_sides():
        x, y = grid.face_centers(side)
        ux, uy = velocity(t, x, y)
        nx_, ny_ = Grid.normal(side)
        un[side] = ux * nx_ + uy * ny_
        speed = max(speed, float(np.max(np.hypot(ux, uy))))
    if tau is None:
        tau = 1e-12 * (speed if speed > 0 else 1.0)
    labels = {s: np.where(v < -tau, INFLOW, np.where(v > tau, OUTFLOW, WALL)) for s, v in un.items()}
    return BoundaryPartition(t, labels, un)


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, name, passed, value=None, message=""):
        self.checks.append({"name": name, "passed": bool(passed), "value": value, "message": message})

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c["passed"]]

    def __str__(self):
        lines = []
        for c in self.checks:
            tag = "PASS" if c["passed"] else "FAIL"
            val = "" if c["value"] is None else f" value={c['value']:.6g}"
            lines.append(f"{tag} {c['name']}{val} {c['message']}".rstrip())
        return "\n".join(lines)


def net_boundary_flux(bd: BoundaryData, t, grid: Grid):
    """Midpoint-rule value of the boundary integral of ``u_B . n``."""
    part = classify_boundary(bd, t, grid)
    return float(sum(np.sum(v) * grid.face_length(s) for s, v in part.un.items()))


def validate_boundary_data(bd: BoundaryData, grid: Grid, t_samples, rho_bar=None,
                           tol=1e-12) -> ValidationReport:
    """Check the boundary data against the hypotheses of its mode at sampled times."""
    report = ValidationReport()
    X, Y = grid.centers()
    t_samples = np.atleast_1d(np.asarray(t_samples, dtype=float))
    th_min, th_max = np.inf, -np.inf
    for t in t_samples:
        pts = [(X, Y)] + [grid.face_centers(s) for s in SIDES]
        for x, y in pts:
            th = bd.temperature(t, x, y)
            th_min = min(th_min, float(th.min()))
            th_max = max(th_max, float(th.max()))
    report.add("theta_B positive", th_min > 0, th_min, "inf of sampled theta_B")
    if bd.theta_bounds is not None:
        lo, hi = bd.theta_bounds
        report.add("theta_B within declared bounds", lo - tol <= th_min and th_max <= hi + tol,
                   th_max, f"declared [{lo}, {hi}]")

    for t in t_samples:
        part = classify_boundary(bd, t, grid)
        flux = float(sum(np.sum(v) * grid.face_length(s) for s, v in part.un.items()))
        if bd.mode == "flow-through":
            report.add(f"net outflux > 0 at t={t:g}", flux > tol, flux,
                       "boundary integral of u_B . n")
            rho_min, rho_max = np.inf, -np.inf
            for side in part.labels:
                mask = part.labels[side] == INFLOW
                if np.any(mask):
                    x, y = grid.face_centers(side)
                    r = bd.density(t, x[mask], y[mask])
                    rho_min = min(rho_min, float(r.min()))
                    rho_max = max(rho_max, float(r.max()))
            if np.isfinite(rho_min):
                ok = rho_min > 0 and (rho_bar is None or rho_max <= rho_bar)
                report.add(f"inflow density in (0, rho_bar] at t={t:g}", ok, rho_max,
                           "" if rho_bar is None else f"rho_bar={rho_bar}")
        else:
            worst = max((float(np.max(np.abs(v))) for v in part.un.values()), default=0.0)
            report.add(f"u_B . n = 0 at t={t:g}", worst <= tol, worst, "impermeable boundary")
    if bd.mode == "rigid":
        report.add("theta_B constant", th_max - th_min <= tol * max(1.0, th_max), th_max - th_min)
        strain = _max_strain(bd, grid, t_samples)
        report.add("u_B rigid (D u_B = 0)", strain <= 1e-8, strain)
    return report


def _max_strain(bd, grid, t_samples, h=1e-6):
    X, Y = grid.centers()
    worst = 0.0
    for t in t_samples:
        uxp, uyp = bd.velocity(t, X + h, Y)
        uxm, uym = bd.velocity(t, X - h, Y)
        vxp, vyp = bd.velocity(t, X, Y + h)
        vxm, vym = bd.velocity(t, X, Y - h)
        dux_dx = (uxp - uxm) / (2 * h)
        duy_dx = (uyp - uym) / (2 * h)
        dux_dy = (vxp - vxm) / (2 * h)
        duy_dy = (vyp - vym) / (2 * h)
        sym = np.abs(dux_dx) + np.abs(duy_dy) + 0.5 * np.abs(dux_dy + duy_dx)
        worst = max(worst, float(sym.max()))
    return worst


# ---------------------------------------------------------------------------
# harmonic extension


@dataclass
class TemperatureExtension:
    theta_tilde: np.ndarray
    t: float
    boundary_min: float
    boundary_max: float
    tol: float
    iterations: int = 0

    @property
    def extrema(self):
        return float(self.theta_tilde.min()), float(self.theta_tilde.max())


def _dirichlet_laplacian(grid: Grid):
    """Negative 5-point Laplacian with Dirichlet faces folded into the diagonal."""
    nx, ny = grid.shape
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []
    diag = np.zeros((nx, ny))
    for axis, h, per in ((0, grid.dx, grid.periodic[0]), (1, grid.dy, grid.periodic[1])):
        w = 1.0 / h**2
        n = grid.shape[axis]
        for shift in (1, -1):
            nb = np.roll(idx, -shift, axis=axis)
            valid = np.ones((nx, ny), dtype=bool)
            if not per:
                edge = n - 1 if shift == 1 else 0
                sl = [slice(None), slice(None)]
                sl[axis] = edge
                valid[tuple(sl)] = False
            rows.append(idx[valid])
            cols.append(nb[valid])
            vals.append(np.full(np.count_nonzero(valid), -w))
            # ghost = 2 theta_B - theta: contributes 2w to the diagonal on walls
            diag += np.where(valid, w, 2.0 * w)
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(nx * ny, nx * ny))
    return A


def _dirichlet_rhs(values, grid: Grid):
    nx, ny = grid.shape
    b = np.zeros((nx, ny))
    for side, v in values.items():
        if side == "left":
            b[0, :] += 2.0 * v / grid.dx**2
        elif side == "right":
            b[-1, :] += 2.0 * v / grid.dx**2
        elif side == "bottom":
            b[:, 0] += 2.0 * v / grid.dy**2
        else:
            b[:, -1] += 2.0 * v / grid.dy**2
    return b.ravel()


_LAPLACIAN_CACHE: dict = {}


def harmonic_extension(theta_B, t, grid: Grid, tol=1e-12, maxiter=None) -> TemperatureExtension:
    """Discrete-harmonic field with Dirichlet data ``theta_B(t, .)`` on the faces.

    Solved with Jacobi-preconditioned conjugate gradients to relative residual
    ``tol``.
    """
    temperature = theta_B.temperature if isinstance(theta_B, BoundaryData) else (
        lambda t, x, y: np.broadcast_to(np.asarray(theta_B(t, x, y), float), np.broadcast(x, y).shape))
    values = {}
    for side in grid.boundary_sides():
        x, y = grid.face_centers(side)
        values[side] = temperature(t, x, y)
    bmin = min(float(v.min()) for v in values.values())
    bmax = max(float(v.max()) for v in values.values())
    key = (grid.nx, grid.ny, grid.dx, grid.dy, grid.periodic)
    A = _LAPLACIAN_CACHE.get(key)
    if A is None:
        A = _LAPLACIAN_CACHE[key] = _dirichlet_laplacian(grid)
    b = _dirichlet_rhs(values, grid)
    M = sparse.diags(1.0 / A.diagonal())
    x0 = np.full(b.shape, 0.5 * (bmin + bmax))
    count = [0]

    def cb(_):
        count[0] += 1

    maxiter = maxiter or 20 * (grid.nx + grid.ny) + 1000
    sol, info = splinalg.cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=cb)
    if info != 0:
        raise SolverError(f"harmonic extension did not converge (info={info})")
    return TemperatureExtension(sol.reshape(grid.shape), float(t), bmin, bmax, tol, count[0])


def extension_bounds_check(ext: TemperatureExtension, eps=None):
    """``(ok, (min, max))``: whether the field obeys the discrete maximum principle."""
    if eps is None:
        eps = 10.0 * ext.tol * max(1.0, abs(ext.boundary_max))
    lo, hi = ext.extrema
    ok = (ext.boundary_min - eps <= lo) and (hi <= ext.boundary_max + eps)
    return ok, (lo, hi)


def theta_ghosts(ext_field, grid: Grid, bd: BoundaryData, t):
    """Cell-centred field padded with Dirichlet ghosts ``2 theta_B - theta``."""
    return pad_dirichlet(ext_field, grid, lambda x, y: bd.temperature(t, x, y))


def pad_dirichlet(f, grid: Grid, face_value):
    """Pad a cell field with one ghost layer: mirror on Dirichlet sides, wrap on periodic ones.

    Corner ghosts take the Dirichlet rule of the bottom/top sides applied to
    the left/right ghost columns.
    """
    nx, ny = grid.shape
    g = np.empty((nx + 2, ny + 2))
    g[1:-1, 1:-1] = f
    if grid.periodic[0]:
        g[0, 1:-1] = f[-1]
        g[-1, 1:-1] = f[0]
    else:
        x, y = grid.face_centers("left")
        g[0, 1:-1] = 2.0 * face_value(x, y) - f[0]
        x, y = grid.face_centers("right")
        g[-1, 1:-1] = 2.0 * face_value(x, y) - f[-1]
    xg = grid.origin[0] + (np.arange(-1, nx + 1) + 0.5) * grid.dx
    if grid.periodic[1]:
        g[:, 0] = g[:, -2]
        g[:, -1] = g[:, 1]
    else:
        y0 = np.full(nx + 2, grid.origin[1])
        g[:, 0] = 2.0 * face_value(xg, y0) - g[:, 1]
        g[:, -1] = 2.0 * face_value(xg, y0 + grid.ly) - g[:, -2]
        if grid.periodic[0]:
            g[0, [0, -1]] = g[-2, [0, -1]]
            g[-1, [0, -1]] = g[1, [0, -1]]
    return g


# ---------------------------------------------------------------------------
# presets


def boundary_preset(name: str, grid: Optional[Grid] = None, **p) -> BoundaryData:
    """Named analytic boundary data.

    ``channel``
        ``u_B = (u_in + (u_out - u_in) (x - x0)/Lx, 0)``, ``theta_B = theta0``,
        ``rho_B = rho_in``; flow-through.
    ``benard``
        ``u_B = 0``, ``theta_B`` linear in ``y`` from ``theta_bottom`` to
        ``theta_top``; impermeable.
    ``relax``
        ``u_B = 0``, ``theta_B = theta0``; rigid.
    ``constant``
        uniform ``(rho0, (ux, uy), theta0)``; the mode is given by ``mode``.
    ``parabolic-inlet``
        ``u_B = (4 U s(1-s) (1 + stretch (x - x0)/Lx), 0)`` with ``s = (y - y0)/Ly``;
        flow-through.
    ``xy``
        ``u_B = 0``, ``theta_B = theta0 + gamma x y``; impermeable.
    """
    if grid is None:
        grid = Grid.unit_square(4)
    x0, y0 = grid.origin
    lx, ly = grid.lx, grid.ly
    desc = {"preset": name, **p}
    zero = lambda t, x, y: (0.0 * x, 0.0 * y)
    if name == "channel":
        u_in, u_out = p.get("u_in", 1.0), p.get("u_out", 2.0)
        th0, rin = p.get("theta0", 1.0), p.get("rho_in", 0.5)
        u = lambda t, x, y: (u_in + (u_out - u_in) * (x - x0) / lx + 0.0 * y, 0.0 * x + 0.0 * y)
        return BoundaryData(u, _const(th0), _const(rin), "flow-through", True, (th0, th0), desc)
    if name == "benard":
        tb, tt = p.get("theta_bottom", 2.0), p.get("theta_top", 1.0)
        th = lambda t, x, y: tb + (tt - tb) * (y - y0) / ly + 0.0 * x
        return BoundaryData(zero, th, _const(p.get("rho0", 0.5)), "impermeable", True,
                            (min(tb, tt), max(tb, tt)), desc)
    if name == "relax":
        th0 = p.get("theta0", 1.0)
        return BoundaryData(zero, _const(th0), _const(p.get("rho0", 1.0)), "rigid", True, (th0, th0), desc)
    if name == "constant":
        ux, uy = p.get("ux", 0.0), p.get("uy", 0.0)
        th0 = p.get("theta0", 1.0)
        u = lambda t, x, y: (ux + 0.0 * x + 0.0 * y, uy + 0.0 * x + 0.0 * y)
        return BoundaryData(u, _const(th0), _const(p.get("rho0", 1.0)), p.get("mode", "impermeable"),
                            True, (th0, th0), desc)
    if name == "parabolic-inlet":
        U, st = p.get("U", 1.0), p.get("stretch", 1.0)
        th0 = p.get("theta0", 1.0)

        def u(t, x, y):
            s = (y - y0) / ly
            return 4.0 * U * s * (1.0 - s) * (1.0 + st * (x - x0) / lx), 0.0 * x + 0.0 * y

        return BoundaryData(u, _const(th0), _const(p.get("rho_in", 0.5)), "flow-through", True,
                            (th0, th0), desc)
    if name == "xy":
        th0, gam = p.get("theta0", 1.0), p.get("gamma", 1.0)
        th = lambda t, x, y: th0 + gam * x * y
        return BoundaryData(zero, th, _const(p.get("rho0", 1.0)), "impermeable", True, None, desc)
    raise KeyError(f"unknown boundary preset {name!r}")
