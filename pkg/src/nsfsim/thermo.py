"""Constitutive relations: pressure, internal energy, entropy and transport.

The equation of state has the form

    p(rho, theta)   = theta**2.5 * P(Z) + a/3 * theta**4 + p_hs(rho)
    e(rho, theta)   = 1.5 * theta**2.5 * P(Z) / rho + a * theta**4 / rho + e_hs(rho)
    s(rho, theta)   = S(Z) + 4a/3 * theta**3 / rho

with ``Z = rho * theta**-1.5`` and ``S'(Z) = -1.5 * (5/3 P(Z) - P'(Z) Z) / Z**2``.
The hard-sphere energy ``e_hs(rho) = int_{rho_bar/2}^{rho} p_hs(z) / z**2 dz`` is
tabulated once per equation of state.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, interpolate, special

__all__ = [
    "ThermoError",
    "HardSphere",
    "StructuralTable",
    "EosSpec",
    "TransportSpec",
    "EquationOfState",
    "get_eos",
    "structural_P",
    "pressure",
    "internal_energy",
    "entropy",
    "dp_drho",
    "theta_from_internal_energy",
    "gibbs_residual",
    "transport",
    "kappa_primitive",
    "third_law_probe",
    "third_law_table",
    "property_suite",
]

PRESETS = ("linear", "linear-polytropic", "tabulated")

# Gauss-Legendre nodes on [0, 1] used for in-piece entropy integrals.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class ThermoError(ValueError):
    """Raised for states outside the domain of the equation of state."""


@dataclass(frozen=True)
class HardSphere:
    enabled: bool = False
    rho_bar: float = 1.0
    beta: float = 4.0
    c: float = 1.0

    def __post_init__(self):
        if self.enabled:
            if not self.rho_bar > 0:
                raise ThermoError("hard sphere: rho_bar must be positive")
            if not self.beta > 3:
                raise ThermoError("hard sphere: beta_hs must exceed 3")
            if not self.c > 0:
                raise ThermoError("hard sphere: c_hs must be positive")


@dataclass(frozen=True)
class StructuralTable:
    """Samples ``(Z_i, P_i, P'_i)`` of the structural function.

    ``Z`` must start at 0 and increase. If ``S_end`` is given the entropy
    function is anchored so that ``S(Z[-1]) == S_end``; otherwise the anchor is
    the reference state ``s(1, 1) == entropy_const``.
    """

    Z: tuple
    P: tuple
    dP: tuple
    S_end: Optional[float] = None

    def __post_init__(self):
        z = np.asarray(self.Z, dtype=float)
        if z.ndim != 1 or len(z) < 3:
            raise ThermoError("structural table needs at least 3 samples")
        if z[0] != 0.0 or np.any(np.diff(z) <= 0):
            raise ThermoError("structural table Z must start at 0 and increase")
        if len(self.P) != len(z) or len(self.dP) != len(z):
            raise ThermoError("structural table columns differ in length")


@dataclass(frozen=True)
class EosSpec:
    structural: str = "linear"
    p_inf: float = 0.0
    table: Optional[StructuralTable] = None
    a: float = 0.0
    hard_sphere: HardSphere = field(default_factory=HardSphere)
    entropy_const: float = 0.0

    def __post_init__(self):
        if self.structural not in PRESETS:
            raise ThermoError(f"unknown structural preset {self.structural!r}")
        if self.p_inf < 0:
            raise ThermoError("p_inf must be non-negative")
        if self.a < 0:
            raise ThermoError("radiation constant a must be non-negative")
        if self.structural == "tabulated" and self.table is None:
            raise ThermoError("tabulated preset requires a table")


@dataclass(frozen=True)
class TransportSpec:
    """``mu = mu0 (1 + theta**Lambda)``, ``eta = eta0 (1 + theta**Lambda)``,
    ``kappa = kappa0 (1 + theta**beta_kappa)``."""

    mu0: float = 1.0
    Lambda: float = 1.0
    eta0: float = 0.0
    kappa0: float = 1.0
    beta_kappa: float = 0.0

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ThermoError("mu0 must be positive")
        if not 0.5 <= self.Lambda <= 1.0:
            raise ThermoError("Lambda must lie in [1/2, 1]")
        if self.eta0 < 0:
            raise ThermoError("eta0 must be non-negative")
        if not self.kappa0 > 0:
            raise ThermoError("kappa0 must be positive")
        if self.beta_kappa < 0:
            raise ThermoError("beta_kappa must be non-negative")

    def mu(self, theta):
        return self.mu0 * (1.0 + np.power(theta, self.Lambda))

    def eta(self, theta):
        return self.eta0 * (1.0 + np.power(theta, self.Lambda))

    def kappa(self, theta):
        return self.kappa0 * (1.0 + np.power(theta, self.beta_kappa))


class EquationOfState:
    """Vectorised evaluation of the constitutive relations for one ``EosSpec``.

    Instances are immutable after construction and can be shared freely.
    """

    def __init__(self, spec: EosSpec):
        self.spec = spec
        self.a = float(spec.a)
        hs = spec.hard_sphere
        self.hs_enabled = bool(hs.enabled)
        self.rho_bar = float(hs.rho_bar) if hs.enabled else np.inf
        self._table = None
        if spec.structural == "tabulated":
            self._build_table(spec.table)
        self._S_shift = 0.0
        self._S_shift = self._entropy_anchor()
        self._ehs = None
        self._hhs = None
        if self.hs_enabled:
            self._build_ehs_cache()

    # structural function -------------------------------------------------

    def structural(self, Z):
        """Return ``(P(Z), P'(Z))``."""
        Z = np.asarray(Z, dtype=float)
        if np.any(Z < 0):
            raise ThermoError("structural function needs Z >= 0")
        kind = self.spec.structural
        if kind == "linear":
            return Z.copy(), np.ones_like(Z)
        if kind == "linear-polytropic":
            pinf = self.spec.p_inf
            Z23 = np.cbrt(Z) ** 2
            return Z + pinf * Z * Z23, 1.0 + (5.0 / 3.0) * pinf * Z23
        return self._table_P(Z)

    def _build_table(self, table: StructuralTable):
        z = np.asarray(table.Z, dtype=float)
        P = np.asarray(table.P, dtype=float)
        dP = np.asarray(table.dP, dtype=float)
        if P[0] != 0.0:
            raise ThermoError("structural table must have P(0) = 0")
        if np.any(dP <= 0):
            raise ThermoError("structural table needs P' > 0 at every sample")
        spline = interpolate.CubicHermiteSpline(z, P, dP)
        fine = np.linspace(0.0, 1.0, 9)[1:-1]
        probe = (z[:-1, None] + fine[None, :] * np.diff(z)[:, None]).ravel()
        if np.any(spline(probe, 1) <= 0):
            raise ThermoError("structural table interpolant is not monotone")
        self._table = spline
        self._table_z = z
        self._table_dspline = spline.derivative()
        # cumulative entropy at the nodes (anchored at Z[1])
        S = np.zeros_like(z)
        for i in range(2, len(z)):
            S[i] = S[i - 1] + self._S_piece(np.array([z[i - 1]]), np.array([z[i]]))[0]
        self._table_S = S

    def _table_P(self, Z):
        if np.any(Z > self._table_z[-1]):
            raise ThermoError("Z beyond the structural table range")
        return self._table(Z), self._table_dspline(Z)

    def _dS_dZ(self, Z):
        P, dP = self.structural(Z)
        return -1.5 * ((5.0 / 3.0) * P - dP * Z) / Z**2

    def _S_piece(self, z0, z1):
        """Integral of S' from ``z0`` to ``z1`` (elementwise, same table piece).

        Integrated in ``log Z`` where the integrand ``Z S'(Z)`` stays bounded.
        """
        t0, t1 = np.log(z0), np.log(z1)
        pts = np.exp(t0[..., None] + (t1 - t0)[..., None] * _GL_X)
        return (t1 - t0) * np.sum(pts * self._dS_dZ(pts) * _GL_W, axis=-1)

    def _S_raw(self, Z):
        kind = self.spec.structural
        if kind in ("linear", "linear-polytropic"):
            # 5/3 P - P' Z = 2/3 Z for both presets, so S' = -1/Z.
            return -np.log(Z)
        z = self._table_z
        if np.any(Z <= 0):
            raise ThermoError("entropy undefined at Z = 0")
        if np.any(Z > z[-1]):
            raise ThermoError("Z beyond the structural table range")
        idx = np.clip(np.searchsorted(z, Z, side="right") - 1, 1, len(z) - 2)
        # first piece [0, z1] has a log singularity; anchor there at z1 instead
        idx = np.where(Z < z[1], 1, idx)
        base = z[idx]
        return self._table_S[idx] + self._S_piece(base, Z)

    def _entropy_anchor(self):
        spec = self.spec
        if spec.structural == "tabulated" and spec.table.S_end is not None:
            return spec.table.S_end - float(self._S_raw(np.array(self._table_z[-1])))
        # S(1) = entropy_const; radiation adds 4a/3 at (1, 1)
        return spec.entropy_const - float(self._S_raw(np.array(1.0)))

    def S(self, Z):
        Z = np.asarray(Z, dtype=float)
        return self._S_raw(Z) + self._S_shift

    # hard sphere -----------------------------------------------------------

    def _w(self, rho):
        return np.asarray(rho, dtype=float) / self.rho_bar

    def p_hs(self, rho):
        rho = np.asarray(rho, dtype=float)
        if not self.hs_enabled:
            return np.zeros_like(rho)
        hs = self.spec.hard_sphere
        self._check_rho(rho)
        w = self._w(rho)
        return hs.c * hs.rho_bar**-hs.beta * w * w * _binomial_tail(w, hs.beta, 2)

    def dp_hs(self, rho):
        rho = np.asarray(rho, dtype=float)
        if not self.hs_enabled:
            return np.zeros_like(rho)
        hs = self.spec.hard_sphere
        self._check_rho(rho)
        w = self._w(rho)
        return hs.c * hs.beta * hs.rho_bar ** (-hs.beta - 1) * w * _binomial_tail(w, hs.beta + 1, 1)

    def _ehs_integrand(self, z):
        """``p_hs(z) / z**2``."""
        hs = self.spec.hard_sphere
        return hs.c * hs.rho_bar ** (-hs.beta - 2) * _binomial_tail(self._w(z), hs.beta, 2)

    def _build_ehs_cache(self):
        hs = self.spec.hard_sphere
        k = hs.c * hs.rho_bar ** (-hs.beta - 3)
        d2 = lambda z: k * _binomial_tail(self._w(z), hs.beta, 2, deriv=True)
        self._ehs = _HsTable(self.rho_bar, self._ehs_integrand, d2)

    def _hs_enthalpy_integrand(self, z):
        """``p_hs'(z) / z``."""
        hs = self.spec.hard_sphere
        return hs.c * hs.beta * hs.rho_bar ** (-hs.beta - 2) * _binomial_tail(self._w(z), hs.beta + 1, 1)

    def hs_enthalpy(self, rho):
        """``int_{rho_bar/2}^{rho} p_hs'(z) / z dz``."""
        rho = np.asarray(rho, dtype=float)
        if not self.hs_enabled:
            return np.zeros_like(rho)
        self._check_rho(rho)
        if self._hhs is None:
            hs = self.spec.hard_sphere
            k = hs.c * hs.beta * hs.rho_bar ** (-hs.beta - 3)
            d2 = lambda z: k * _binomial_tail(self._w(z), hs.beta + 1, 1, deriv=True)
            self._hhs = _HsTable(self.rho_bar, self._hs_enthalpy_integrand, d2)
        return self._hhs(rho)

    def e_hs(self, rho):
        rho = np.asarray(rho, dtype=float)
        if not self.hs_enabled:
            return np.zeros_like(rho)
        self._check_rho(rho)
        return self._ehs(rho)

    def _check_rho(self, rho):
        if self.hs_enabled and np.any(rho >= self.rho_bar):
            raise ThermoError("density at or above the hard-sphere limit rho_bar")

    # state functions -------------------------------------------------------

    def _check_state(self, rho, theta):
        if np.any(rho < 0):
            raise ThermoError("negative density")
        if np.any(theta <= 0):
            raise ThermoError("temperature must be positive")
        self._check_rho(rho)

    def pressure(self, rho, theta):
        rho = np.asarray(rho, dtype=float)
        theta = np.asarray(theta, dtype=float)
        self._check_state(rho, theta)
        P, _ = self.structural(rho * theta**-1.5)
        return theta**2.5 * P + self.a / 3.0 * theta**4 + self.p_hs(rho)

    def rho_e(self, rho, theta):
        """Volumetric internal energy; extends continuously to ``rho = 0``."""
        rho = np.asarray(rho, dtype=float)
        theta = np.asarray(theta, dtype=float)
        self._check_state(rho, theta)
        P, _ = self.structural(rho * theta**-1.5)
        return 1.5 * theta**2.5 * P + self.a * theta**4 + rho * self.e_hs(rho)

    def internal_energy(self, rho, theta):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho <= 0):
            raise ThermoError("specific internal energy undefined at vacuum")
        return self.rho_e(rho, theta) / rho

    def entropy(self, rho, theta):
        rho = np.asarray(rho, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if np.any(rho <= 0) or np.any(theta <= 0):
            raise ThermoError("entropy needs rho > 0 and theta > 0")
        return self.S(rho * theta**-1.5) + 4.0 * self.a / 3.0 * theta**3 / rho

    def rho_s(self, rho, theta):
        """Volumetric entropy ``rho * s``."""
        rho = np.asarray(rho, dtype=float)
        return rho * self.entropy(rho, theta)

    def dp_drho(self, rho, theta):
        rho = np.asarray(rho, dtype=float)
        theta = np.asarray(theta, dtype=float)
        self._check_state(rho, theta)
        _, dP = self.structural(rho * theta**-1.5)
        return theta * dP + self.dp_hs(rho)

    def dp_dtheta(self, rho, theta):
        rho = np.asarray(rho, dtype=float)
        theta = np.asarray(theta, dtype=float)
        Z = rho * theta**-1.5
        P, dP = self.structural(Z)
        return theta**1.5 * (2.5 * P - 1.5 * dP * Z) + 4.0 * self.a / 3.0 * theta**3

    def drho_e_dtheta(self, rho, theta):
        """``rho * c_v``; positive by the structural hypotheses."""
        rho = np.asarray(rho, dtype=float)
        theta = np.asarray(theta, dtype=float)
        Z = rho * theta**-1.5
        P, dP = self.structural(Z)
        return 2.25 * theta**1.5 * ((5.0 / 3.0) * P - dP * Z) + 4.0 * self.a * theta**3

    def sound_speed(self, rho, theta):
        """Isothermal sound speed ``sqrt(dp/drho)``."""
        return np.sqrt(self.dp_drho(rho, theta))

    def adiabatic_sound_speed(self, rho, theta):
        rho = np.asarray(rho, dtype=float)
        cv = self.drho_e_dtheta(rho, theta)
        pt = self.dp_dtheta(rho, theta)
        return np.sqrt(self.dp_drho(rho, theta) + theta * pt**2 / (rho * cv))

    # state recovery ---------------------------------------------------------

    def theta_from_rho_e(self, rho, rho_e, rtol=1e-12, maxiter=200):
        """Temperature with ``rho_e(rho, theta) == rho_e`` (vectorised).

        The initial guess depends only on ``(rho, rho_e)``, so the result is a
        deterministic function of the state.
        """
        rho = np.asarray(rho, dtype=float)
        target = np.asarray(rho_e, dtype=float)
        if np.any(rho <= 0):
            raise ThermoError("temperature recovery needs rho > 0")
        thermal = target - rho * self.e_hs(rho)
        if np.any(~np.isfinite(thermal)) or np.any(thermal <= 0):
            raise ThermoError("internal energy below the cold-state bound; cannot recover theta")
        rho, thermal = np.broadcast_arrays(rho, thermal)
        # bracket: rho_e_thermal(theta) is increasing from 0 to infinity
        guess = thermal / (1.5 * rho)
        if self.a > 0:
            guess = np.minimum(guess, (thermal / self.a) ** 0.25)
        lo = np.full(rho.shape, 0.0)
        hi = np.full(rho.shape, np.inf)
        theta = guess.copy()
        for _ in range(maxiter):
            f = self._rho_e_thermal(rho, theta) - thermal
            lo = np.where(f < 0, theta, lo)
            hi = np.where(f > 0, theta, hi)
            df = self.drho_e_dtheta(rho, theta)
            new = theta - f / df
            bad = ~(new > lo) | ~(new < hi)
            bisect = np.where(np.isfinite(hi), 0.5 * (lo + hi), 2.0 * theta)
            new = np.where(bad, bisect, new)
            done = np.abs(new - theta) <= rtol * np.abs(new)
            theta = new
            if np.all(done):
                return theta
        raise ThermoError("temperature recovery did not converge")

    def _rho_e_thermal(self, rho, theta):
        P, _ = self.structural(rho * theta**-1.5)
        return 1.5 * theta**2.5 * P + self.a * theta**4


@functools.lru_cache(maxsize=64)
def _tail_coefficients(gamma, k, deriv, nterms):
    n = np.arange(k, k + nterms)
    coef = np.exp(special.gammaln(gamma + n) - special.gammaln(gamma) - special.gammaln(n + 1))
    if deriv:
        coef = coef[1:] * np.arange(1, nterms)
    coef.setflags(write=False)
    return coef


def _binomial_tail(w, gamma, k, deriv=False, cut=0.1, nterms=60):
    """``((1 - w)**-gamma - sum_{n<k} (gamma)_n w**n / n!) / w**k`` or its ``w``-derivative.

    Power series below ``cut`` (no cancellation near ``w = 0``), closed form above.
    """
    w = np.asarray(w, dtype=float)
    out = np.empty(w.shape)
    small = w < cut
    if np.any(small):
        coef = _tail_coefficients(float(gamma), int(k), bool(deriv), int(nterms))
        ws = w[small]
        ser = np.zeros_like(ws)
        for c in coef[::-1]:
            ser = ser * ws + c
        out[small] = ser
    if not np.all(small):
        wl = w[~small]
        A = (1.0 - wl) ** -gamma
        head = np.zeros_like(wl)
        dhead = np.zeros_like(wl)
        c = 1.0
        for j in range(k):
            head = head + c * wl**j
            if j > 0:
                dhead = dhead + c * j * wl ** (j - 1)
            c *= (gamma + j) / (j + 1)
        if deriv:
            out[~small] = (gamma * A / (1.0 - wl) - dhead) / wl**k - k * (A - head) / wl ** (k + 1)
        else:
            out[~small] = (A - head) / wl**k
    return out


class _HsTable:
    """Antiderivative ``F(rho) = int_{rho_bar/2}^{rho} f`` of a hard-sphere integrand.

    Quintic Hermite pieces on nodes uniform in ``-log(1 - rho/rho_bar)`` up to
    ``0.999 rho_bar``; adaptive quadrature beyond.
    """

    def __init__(self, rho_bar, f, df, n=1201):
        self.rho_bar = rb = rho_bar
        self.f = f
        s = np.linspace(0.0, np.log(1000.0), n)
        nodes = rb * (1.0 - np.exp(-s))
        nodes[-1] = 0.999 * rb
        half = 0.5 * rb
        quad = lambda lo, hi: integrate.quad(lambda z: float(f(z)), lo, hi, epsabs=1e-13, epsrel=1e-13)[0]
        vals = np.empty_like(nodes)
        # integrate outward from rho_bar/2 so the anchor is exact
        k0 = int(np.searchsorted(nodes, half))
        vals[k0] = quad(half, nodes[k0])
        for k in range(k0 + 1, n):
            vals[k] = vals[k - 1] + quad(nodes[k - 1], nodes[k])
        for k in range(k0 - 1, -1, -1):
            vals[k] = vals[k + 1] - quad(nodes[k], nodes[k + 1])
        bp = interpolate.BPoly.from_derivatives(nodes, np.column_stack([vals, f(nodes), df(nodes)]))
        self.poly = interpolate.PPoly.from_bernstein_basis(bp)
        self.nodes = nodes
        self.ds = s[1] - s[0]
        self.max = nodes[-1]
        self.half = half
        # remove the interpolation offset at the anchor
        self.poly.c[-1] -= self._eval(np.array(half))

    def _eval(self, rho):
        # direct piece lookup from the uniform variable
        nodes, c = self.nodes, self.poly.c
        i = np.floor(-np.log1p(-rho / self.rho_bar) / self.ds).astype(np.intp)
        i = np.clip(i, 0, len(nodes) - 2)
        i = np.where((rho < nodes[i]) & (i > 0), i - 1, i)
        i = np.where((rho >= nodes[i + 1]) & (i < len(nodes) - 2), i + 1, i)
        dx = rho - nodes[i]
        out = c[0, i]
        for k in range(1, c.shape[0]):
            out = out * dx + c[k, i]
        return out

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.where(rho == self.half, 0.0, self._eval(np.minimum(rho, self.max)))
        beyond = rho > self.max
        if np.any(beyond):
            out = out.copy()
            out[beyond] += [integrate.quad(lambda z: float(self.f(z)), self.max, r,
                                           epsabs=1e-12, limit=200)[0] for r in rho[beyond]]
        return out


_EOS_CACHE: dict = {}


def get_eos(spec) -> EquationOfState:
    """Equation of state for ``spec``; hashable specs share one instance."""
    if isinstance(spec, EquationOfState):
        return spec
    try:
        key = hash(spec)
    except TypeError:
        return EquationOfState(spec)
    eos = _EOS_CACHE.get(key)
    if eos is None or eos.spec != spec:
        eos = _EOS_CACHE[key] = EquationOfState(spec)
    return eos


_eos = get_eos


def structural_P(Z, spec):
    """Return ``(P(Z), P'(Z))`` for the configured structural function."""
    return _eos(spec).structural(Z)


def pressure(rho, theta, spec):
    return _eos(spec).pressure(rho, theta)


def internal_energy(rho, theta, spec):
    return _eos(spec).internal_energy(rho, theta)


def entropy(rho, theta, spec):
    return _eos(spec).entropy(rho, theta)


def dp_drho(rho, theta, spec):
    return _eos(spec).dp_drho(rho, theta)


def theta_from_internal_energy(rho, rho_e, spec):
    return _eos(spec).theta_from_rho_e(rho, rho_e)


def gibbs_residual(rho, theta, spec, h=None):
    """Centered-difference residuals of the Gibbs relation.

    Returns ``(r_theta, r_rho)`` with ``r_theta = de/dtheta - theta ds/dtheta``
    and ``r_rho = de/drho - theta ds/drho - p/rho**2``.
    """
    eos = _eos(spec)
    rho = float(rho)
    theta = float(theta)
    hr = h if h is not None else 1e-5 * rho
    ht = h if h is not None else 1e-5 * theta
    if rho - hr <= 0 or theta - ht <= 0 or rho + hr >= eos.rho_bar:
        raise ThermoError("finite-difference stencil leaves the state domain")
    e, s = eos.internal_energy, eos.entropy
    de_dt = (e(rho, theta + ht) - e(rho, theta - ht)) / (2 * ht)
    ds_dt = (s(rho, theta + ht) - s(rho, theta - ht)) / (2 * ht)
    de_dr = (e(rho + hr, theta) - e(rho - hr, theta)) / (2 * hr)
    ds_dr = (s(rho + hr, theta) - s(rho - hr, theta)) / (2 * hr)
    p = eos.pressure(rho, theta)
    return float(de_dt - theta * ds_dt), float(de_dr - theta * ds_dr - p / rho**2)


def transport(theta, tspec: TransportSpec):
    """Return ``(mu, eta, kappa)`` at temperature ``theta``."""
    return tspec.mu(theta), tspec.eta(theta), tspec.kappa(theta)


def kappa_primitive(theta, tspec: TransportSpec):
    """Antiderivative ``K`` of ``kappa(theta) / theta`` normalised by ``K(1) = 0``."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise ThermoError("kappa_primitive needs theta > 0")
    b = tspec.beta_kappa
    if b == 0:
        # kappa = 2 kappa0 constant
        return 2.0 * tspec.kappa0 * np.log(theta)
    return tspec.kappa0 * (np.log(theta) + (theta**b - 1.0) / b)


@dataclass
class ThirdLawReport:
    verdict: str
    theta: np.ndarray
    s: np.ndarray


def third_law_probe(rho, spec, theta_seq: Sequence[float], tol=1e-3, threshold=5.0):
    """Classify the low-temperature limit of ``s(rho, theta)``.

    ``compatible`` when ``|s|`` decreases along the sequence and ends below
    ``tol``; ``divergent`` when ``|s|`` grows monotonically past ``threshold``.
    """
    eos = _eos(spec)
    theta = np.asarray(theta_seq, dtype=float)
    if np.any(np.diff(theta) >= 0):
        raise ThermoError("theta_seq must be strictly decreasing")
    s = np.array([float(eos.entropy(rho, t)) for t in theta])
    mag = np.abs(s)
    if mag[-1] < tol and np.all(np.diff(mag[-3:]) <= 0):
        verdict = "compatible"
    elif mag[-1] > threshold and np.all(np.diff(mag[len(mag) // 2:]) > 0):
        verdict = "divergent"
    else:
        verdict = "inconclusive"
    return ThirdLawReport(verdict, theta, s)


def third_law_table(p_inf=0.0, z_max=1e8, n=400):
    """Structural table whose entropy ``S(Z) = log(1 + 1/Z)`` vanishes as Z grows.

    Built from ``5/3 P - P' Z = 2/3 Z/(1+Z)``, i.e.
    ``P(Z) = Z**(5/3) (p_inf + 2/3 int_Z^inf w**(-5/3) / (1+w) dw)``.
    """
    z = np.concatenate([[0.0], np.logspace(-6, np.log10(z_max), n - 1)])
    x = 1.0 / z[1:]
    # int_Z^inf w**(-5/3) / (1+w) dw = int_0^{1/Z} v**(2/3) / (1+v) dv
    tail = x ** (5.0 / 3.0) * 0.6 * special.hyp2f1(1.0, 5.0 / 3.0, 8.0 / 3.0, -x)
    P = np.zeros_like(z)
    dP = np.ones_like(z)
    P[1:] = z[1:] ** (5.0 / 3.0) * (p_inf + 2.0 / 3.0 * tail)
    dP[1:] = 5.0 / 3.0 * P[1:] / z[1:] - 2.0 / 3.0 / (1.0 + z[1:])
    return StructuralTable(tuple(z), tuple(P), tuple(dP), S_end=float(np.log1p(1.0 / z[-1])))


def _relative_gibbs(eos, rho, theta):
    # residuals scaled by the magnitude of the terms that cancel
    hr, ht = 1e-5 * rho, 1e-5 * theta
    e, s = eos.internal_energy, eos.entropy
    de_dt = (e(rho, theta + ht) - e(rho, theta - ht)) / (2 * ht)
    ds_dt = theta * (s(rho, theta + ht) - s(rho, theta - ht)) / (2 * ht)
    de_dr = (e(rho + hr, theta) - e(rho - hr, theta)) / (2 * hr)
    ds_dr = theta * (s(rho + hr, theta) - s(rho - hr, theta)) / (2 * hr)
    pr = eos.pressure(rho, theta) / rho**2
    r1 = np.abs(de_dt - ds_dt) / (np.abs(de_dt) + np.abs(ds_dt))
    r2 = np.abs(de_dr - ds_dr - pr) / (np.abs(de_dr) + np.abs(ds_dr) + np.abs(pr))
    return r1, r2


def property_suite(spec, n_rho=40, n_theta=40, theta_range=(0.05, 5.0), rho_min=0.01, rho_frac=0.95):
    """Sampled checks of an EOS over ``[rho_min, rho_frac*rho_bar] x theta_range``.

    ``rho_bar`` is the hard-sphere limit, or its nominal value when the hard
    sphere is off. Returns a plain dict.
    """
    eos = _eos(spec)
    spec = eos.spec
    rb = spec.hard_sphere.rho_bar
    rho = np.linspace(rho_min, rho_frac * rb, n_rho)
    theta = np.geomspace(*theta_range, n_theta)
    R, T = np.meshgrid(rho, theta, indexing="ij")
    r1, r2 = _relative_gibbs(eos, R, T)
    p = eos.pressure(R, T)
    dp = eos.dp_drho(R, T)
    re = eos.rho_e(R, T)
    rs = eos.rho_s(R, T)
    ratio = re / p
    out = {
        "gibbs_theta_max": float(r1.max()),
        "gibbs_rho_max": float(r2.max()),
        "pressure_increasing": bool(np.all(np.diff(p, axis=0) > 0)),
        "dp_drho_positive": bool(np.all(dp > 0)),
        "rho_e_min": float(re.min()),
        "rho_e_nonnegative": bool(np.all(re >= 0)),
        "rho_e_over_p_max": float(ratio.max()),
    }
    bound = 1.0 + R * np.abs(np.log(R)) + R * np.maximum(np.log(T), 0.0) + T**3
    out["entropy_bound_constant"] = float(np.max(np.abs(rs) / bound))
    if eos.hs_enabled:
        out["p_hs_zero"] = float(eos.p_hs(np.array(0.0)))
        out["pressure_near_limit"] = float(eos.pressure(rb - 1e-6 * rb, 1.0))
    probe = third_law_probe(0.5 * min(rb, 1.0), spec, np.geomspace(1.0, 1e-4, 13))
    out["third_law"] = probe.verdict
    out["third_law_s_last"] = float(probe.s[-1])
    return out
