"""Hydrostatic equilibria at constant boundary temperature.

The balance ``grad p(rho, theta_B) = rho grad Pi`` with ``Pi = G + |u_B|**2/2``
becomes ``h(rho) = Pi + lambda`` through the enthalpy
``h(rho) = int_{rho_ref}^{rho} dp/drho(z, theta_B) / z dz``; ``lambda`` is fixed
by the total mass.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .domain import Grid
from .thermo import get_eos

__all__ = [
    "InfeasibleMassError",
    "HypothesisError",
    "EquilibriumProfile",
    "reference_density",
    "enthalpy",
    "inverse_enthalpy",
    "check_hypotheses",
    "solve_equilibrium",
    "relaxation_oracle",
    "quadrature_enthalpy",
    "convergence_metrics",
]


class InfeasibleMassError(ValueError):
    pass


class HypothesisError(ValueError):
    pass


@dataclass
class EquilibriumProfile:
    rho_E: np.ndarray
    lam: float
    mass: float
    iterations: int
    theta_B: float = 1.0


_eos = get_eos


def reference_density(eos) -> float:
    """1, or ``rho_bar/2`` when the hard-sphere limit does not exceed 2."""
    eos = _eos(eos)
    if eos.hs_enabled and eos.rho_bar <= 2.0:
        return 0.5 * eos.rho_bar
    return 1.0


def enthalpy(rho, theta_B, spec):
    """``h(rho)``; strictly increasing, ``-> -inf`` at vacuum."""
    eos = _eos(spec)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("enthalpy needs rho > 0")
    ref = reference_density(eos)
    th = float(theta_B)
    kind = eos.spec.structural
    if kind == "linear":
        h = th * np.log(rho / ref)
    elif kind == "linear-polytropic":
        h = th * np.log(rho / ref) + 2.5 * eos.spec.p_inf * (np.cbrt(rho) ** 2 - np.cbrt(ref) ** 2)
    else:
        h = _tabulated_structural_enthalpy(eos, rho, th, ref)
    if eos.hs_enabled:
        h = h + eos.hs_enthalpy(rho) - eos.hs_enthalpy(np.array(ref))
    return h


def _tabulated_structural_enthalpy(eos, rho, th, ref):
    # theta P'(Z) / z with Z = z theta**-1.5; the log part is split off
    def f(z):
        _, dP = eos.structural(np.array(z * th**-1.5))
        return float(th * (dP - eos.structural(np.array(0.0))[1]) / z)

    slope0 = float(eos.structural(np.array(0.0))[1])
    flat = rho.ravel()
    out = np.array([integrate.quad(f, ref, r, epsabs=1e-13, epsrel=1e-13, limit=200)[0] for r in flat])
    return (out.reshape(rho.shape) + th * slope0 * np.log(rho / ref))


def inverse_enthalpy(value, theta_B, spec, rtol=1e-14, maxiter=200):
    """Solve ``h(rho) = value`` elementwise (bracketed Newton in ``log rho``)."""
    eos = _eos(spec)
    v = np.atleast_1d(np.asarray(value, dtype=float)).astype(float)
    th = float(theta_B)
    ref = reference_density(eos)
    slope = th * float(eos.structural(np.array(0.0))[1])
    x = np.log(ref) + v / slope
    if eos.hs_enabled:
        x = np.minimum(x, np.log(ref))
    lo = x - 1.0
    for _ in range(100):
        above = enthalpy(np.exp(lo), th, eos) > v
        if not np.any(above):
            break
        lo = np.where(above, lo - 2.0 * (x - lo), lo)
    if eos.hs_enabled:
        # h -> +inf at rho_bar, so log(rho_bar) brackets from above
        hi = np.full_like(x, np.log(eos.rho_bar))
    else:
        hi = x + 1.0
        for _ in range(100):
            below = enthalpy(np.exp(hi), th, eos) < v
            if not np.any(below):
                break
            hi = np.where(below, hi + 2.0 * (hi - x), hi)
    x = np.clip(x, lo, hi)
    x = np.where(x >= hi, 0.5 * (lo + hi), x)
    for _ in range(maxiter):
        rho = np.exp(x)
        f = enthalpy(rho, th, eos) - v
        lo = np.where(f < 0, x, lo)
        hi = np.where(f > 0, x, hi)
        new = x - f / eos.dp_drho(rho, np.full_like(rho, th))
        new = np.where((new > lo) & (new < hi), new, 0.5 * (lo + hi))
        done = (np.abs(new - x) <= rtol) | (f == 0)
        x = np.where(f == 0, x, new)
        if np.all(done):
            out = np.exp(x)
            return out.reshape(np.shape(value)) if np.ndim(value) else out[0]
    raise RuntimeError("inverse enthalpy did not converge")


def check_hypotheses(force, bd, grid: Grid, t_samples=(0.0,), tol=1e-10):
    """Constant boundary temperature, rigid tangential ``u_B`` and ``grad G . u_B = 0``."""
    errors = []
    X, Y = grid.centers()
    for t in t_samples:
        vals = [bd.temperature(t, *grid.face_centers(s)) for s in ("left", "right", "bottom", "top")]
        allv = np.concatenate([np.ravel(v) for v in vals])
        if np.ptp(allv) > tol * max(1.0, abs(allv).max()):
            errors.append("constant boundary temperature required")
        for s in ("left", "right", "bottom", "top"):
            x, y = grid.face_centers(s)
            ux, uy = bd.velocity(t, x, y)
            nx_, ny_ = grid.normal(s)
            if np.max(np.abs(ux * nx_ + uy * ny_)) > tol:
                errors.append(f"u_B . n must vanish on the {s} side")
        h = 1e-6
        g = []
        for ex, ey in ((h, 0.0), (0.0, h)):
            p = np.array(bd.velocity(t, X + ex, Y + ey))
            m = np.array(bd.velocity(t, X - ex, Y - ey))
            g.append((p - m) / (2 * h))
        D = np.array([[g[0][0], 0.5 * (g[1][0] + g[0][1])], [0.5 * (g[1][0] + g[0][1]), g[1][1]]])
        if np.max(np.abs(D)) > 1e-6:
            errors.append("u_B must be a rigid motion (D u_B = 0)")
        ux, uy = bd.velocity(t, X, Y)
        gx, gy = force.g(t, X, Y)
        if np.max(np.abs(gx * ux + gy * uy)) > tol:
            errors.append("grad G . u_B must vanish")
    if errors:
        raise HypothesisError("; ".join(dict.fromkeys(errors)))


def _potential(force, bd, grid: Grid):
    X, Y = grid.centers()
    ux, uy = bd.velocity(0.0, X, Y)
    return force.G(X, Y) + 0.5 * (ux**2 + uy**2)


def solve_equilibrium(force, bd, theta_B, M, grid: Grid, spec, check=True, tol=1e-10) -> EquilibriumProfile:
    """``rho_E = h^{-1}(Pi + lambda)`` with ``sum rho_E * area = M``."""
    eos = _eos(spec)
    if check:
        check_hypotheses(force, bd, grid)
    if M <= 0:
        raise InfeasibleMassError("mass must be positive")
    if eos.hs_enabled and M >= eos.rho_bar * grid.area:
        raise InfeasibleMassError("mass at or above rho_bar * |Omega| is unreachable")
    Pi = _potential(force, bd, grid)
    area = grid.cell_area
    count = [0]

    def excess(lam):
        count[0] += 1
        return float(np.sum(inverse_enthalpy(Pi + lam, theta_B, eos)) * area - M)

    lam0 = float(enthalpy(np.array(M / grid.area), theta_B, eos)) - float(np.mean(Pi))
    span = max(1.0, float(np.ptp(Pi)))
    a, b = lam0 - span, lam0 + span
    while excess(a) > 0:
        a -= 2 * (b - a)
    while excess(b) < 0:
        b += 2 * (b - a)
    lam = optimize.brentq(excess, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    rho = inverse_enthalpy(Pi + lam, theta_B, eos)
    mass = float(rho.sum() * area)
    if abs(mass - M) > tol * M:
        raise RuntimeError(f"mass constraint missed: {mass} vs {M}")
    return EquilibriumProfile(rho, lam, mass, count[0], float(theta_B))


def quadrature_enthalpy(spec, theta_B, method="adaptive"):
    """Independent enthalpy from quadrature of ``dp/drho / z`` starting at the reference density.

    ``method="adaptive"`` calls ``scipy.integrate.quad`` per point (slow,
    tight). ``"gauss"`` is vectorized Gauss-Legendre on panels graded
    toward the upper limit, which keeps the hard-sphere blow-up resolved
    and is fast enough to sit inside an ODE right-hand side.
    """
    eos = _eos(spec)
    ref = reference_density(eos)
    th = float(theta_B)

    if method == "gauss":
        x, w = np.polynomial.legendre.leggauss(32)
        breaks = np.concatenate([[0.0], 1.0 - 0.5 ** np.arange(1, 10), [1.0]])

        def h_gauss(rho):
            rho = np.asarray(rho, dtype=float)
            out = np.zeros_like(rho)
            for a, b in zip(breaks[:-1], breaks[1:]):
                lo = (ref + (rho - ref) * a)[..., None]
                hi = (ref + (rho - ref) * b)[..., None]
                z = 0.5 * (hi + lo) + 0.5 * (hi - lo) * x
                f = eos.dp_drho(z, np.full_like(z, th)) / z
                out += 0.5 * (hi - lo)[..., 0] * (f @ w)
            return out

        return h_gauss
    if method != "adaptive":
        raise ValueError(f"unknown quadrature method {method!r}")

    def f(z):
        return float(eos.dp_drho(np.array(z), np.array(th))) / z

    def h(rho):
        rho = np.asarray(rho, dtype=float)
        out = np.array([integrate.quad(f, ref, r, epsabs=1e-14, epsrel=1e-12, limit=400)[0] for r in rho.ravel()])
        return out.reshape(rho.shape)

    return h


def relaxation_oracle(force, bd, theta_B, M, grid: Grid, h, tau_end=None, rtol=1e-12):
    """Pseudo-time limit of ``d_tau rho = div(rho grad(h(rho) - Pi))`` with no-flux walls.

    Starts from the uniform density ``M/|Omega|`` (mass is conserved by the
    flux form) and integrates with an implicit BDF method until the
    increments stall.
    """
    Pi = _potential(force, bd, grid)
    nx, ny = grid.shape
    rho0 = np.full(grid.shape, M / grid.area)

    def rhs(_, y):
        r = y.reshape(nx, ny)
        phi = h(r) - Pi
        fx = 0.5 * (r[1:] + r[:-1]) * (phi[1:] - phi[:-1]) / grid.dx
        fy = 0.5 * (r[:, 1:] + r[:, :-1]) * (phi[:, 1:] - phi[:, :-1]) / grid.dy
        d = np.zeros_like(r)
        d[:-1] += fx / grid.dx
        d[1:] -= fx / grid.dx
        d[:, :-1] += fy / grid.dy
        d[:, 1:] -= fy / grid.dy
        return d.ravel()

    # banded sparsity: 5-point stencil
    from scipy.sparse import diags

    n = nx * ny
    pattern = diags([1, 1, 1, 1, 1], [0, -1, 1, -ny, ny], shape=(n, n))
    tau_end = tau_end or 200.0
    sol = integrate.solve_ivp(rhs, (0.0, tau_end), rho0.ravel(), method="BDF", rtol=rtol,
                              atol=rtol * float(rho0.max()), jac_sparsity=pattern)
    if not sol.success:
        raise RuntimeError(sol.message)
    rho = sol.y[:, -1].reshape(nx, ny)
    lam = float(np.sum((h(rho) - Pi) * rho) / np.sum(rho))
    return rho, lam


def _lp(f, p, area):
    return float(np.sum(np.abs(f) ** p) * area) ** (1.0 / p)


def convergence_metrics(state, profile: EquilibriumProfile, theta_B, bd, grid: Grid, eos):
    """``(||rho - rho_E||_{5/3}, ||rho u - rho_E u_B||_{5/4}, ||theta - theta_B||_4)``."""
    if state.rho.shape != profile.rho_E.shape or state.rho.shape != grid.shape:
        raise ValueError("grid mismatch between state and profile")
    X, Y = grid.centers()
    ux, uy = bd.velocity(state.t, X, Y)
    area = grid.cell_area
    d_rho = _lp(state.rho - profile.rho_E, 5.0 / 3.0, area)
    mx = state.mom[0] - profile.rho_E * ux
    my = state.mom[1] - profile.rho_E * uy
    d_mom = _lp(np.hypot(mx, my), 5.0 / 4.0, area)
    theta = state.temperature(_eos(eos))
    d_theta = _lp(theta - theta_B, 4.0, area)
    return d_rho, d_mom, d_theta
