import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from nsfsim.thermo import (EosSpec, HardSphere, ThermoError, TransportSpec, dp_drho, entropy, get_eos,
                           gibbs_residual, internal_energy, kappa_primitive, pressure, property_suite,
                           structural_P, theta_from_internal_energy, third_law_probe, third_law_table,
                           transport)

LIN = EosSpec()
POLY = EosSpec("linear-polytropic", p_inf=1.0)
HS = EosSpec(hard_sphere=HardSphere(True, 1.0, 4.0, 1.0))


def p_hs_oracle(z, rb=1.0, beta=4.0, c=1.0):
    w = z / rb
    return c * ((1 - w) ** -beta - 1 - beta * w)


class TestStructural:
    def test_zero_density_linear(self):
        assert structural_P(0.0, LIN) == (0.0, 1.0)

    def test_polytropic_at_eight(self):
        P, dP = structural_P(8.0, POLY)
        assert P == pytest.approx(40.0, rel=1e-14)
        assert dP == pytest.approx(23.0 / 3.0, rel=1e-14)

    def test_identity(self):
        assert structural_P(1.0, LIN) == pytest.approx((1.0, 1.0))

    def test_negative_argument_rejected(self):
        with pytest.raises(ThermoError):
            structural_P(-1.0, LIN)


class TestPressure:
    def test_ideal(self):
        assert pressure(1.0, 1.0, LIN) == pytest.approx(1.0)

    def test_vacuum_leaves_radiation(self):
        spec = EosSpec(a=0.3, hard_sphere=HardSphere(True))
        assert pressure(0.0, 1.0, spec) == pytest.approx(0.1, rel=1e-14)

    def test_hard_sphere_at_half(self):
        assert pressure(0.5, 1.0, HS) == pytest.approx(13.5, rel=1e-13)

    def test_at_or_above_limit_rejected(self):
        with pytest.raises(ThermoError):
            pressure(1.0, 1.0, HS)


class TestInternalEnergy:
    def test_ideal(self):
        assert internal_energy(1.0, 1.0, LIN) == pytest.approx(1.5)

    def test_hard_sphere_term_vanishes_at_half_limit(self):
        eos = get_eos(HS)
        assert eos.e_hs(np.array(0.5)) == 0.0

    def test_hard_sphere_against_quadrature(self):
        # the hard-sphere energy is the integral of p_hs / z**2 from rho_bar/2
        Q = integrate.quad(lambda z: p_hs_oracle(z) / z**2, 0.5, 0.75, epsabs=1e-13, epsrel=1e-12)[0]
        assert internal_energy(0.75, 1.0, HS) == pytest.approx(1.5 + Q, abs=1e-10)

    @pytest.mark.parametrize("rho", [0.01, 0.2, 0.49, 0.9, 0.99])
    def test_hard_sphere_quadrature_sweep(self, rho):
        Q = integrate.quad(lambda z: p_hs_oracle(z) / z**2, 0.5, rho, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        assert float(get_eos(HS).e_hs(np.array(rho))) == pytest.approx(Q, rel=1e-9, abs=1e-10)


class TestEntropy:
    def test_reference_state(self):
        assert entropy(1.0, 1.0, LIN) == pytest.approx(0.0, abs=1e-14)

    def test_log_density(self):
        assert entropy(math.e, 1.0, LIN) == pytest.approx(-1.0, rel=1e-13)

    def test_radiation_contribution(self):
        assert entropy(1.0, 1.0, EosSpec(a=0.75)) == pytest.approx(1.0, rel=1e-13)


class TestDerivatives:
    def test_ideal_slope(self):
        assert dp_drho(1.0, 2.0, LIN) == pytest.approx(2.0)

    def test_hard_sphere_slope_at_vacuum(self):
        assert dp_drho(0.0, 1.0, HS) == pytest.approx(1.0)

    def test_hard_sphere_blow_up(self):
        assert dp_drho(1.0 - 1e-6, 1.0, HS) > 1e18


class TestTemperatureRecovery:
    @pytest.mark.parametrize("rho,rho_e,theta", [(1.0, 3.0, 2.0), (1.0, 1.5, 1.0), (2.0, 3.0, 1.0)])
    def test_ideal_inversion(self, rho, rho_e, theta):
        assert theta_from_internal_energy(rho, rho_e, LIN) == pytest.approx(theta, rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(rho=st.floats(0.01, 0.9), theta=st.floats(0.05, 5.0))
    def test_round_trip(self, rho, theta):
        spec = EosSpec("linear-polytropic", p_inf=0.5, a=1e-3, hard_sphere=HardSphere(True, c=0.1))
        re = float(get_eos(spec).rho_e(np.array(rho), np.array(theta)))
        assert theta_from_internal_energy(rho, re, spec) == pytest.approx(theta, rel=1e-10)


class TestGibbs:
    def test_ideal_small(self):
        r = gibbs_residual(1.0, 1.0, LIN, h=1e-5)
        assert max(map(abs, r)) < 1e-8

    def test_hard_sphere_small(self):
        spec = EosSpec(a=1e-3, hard_sphere=HardSphere(True))
        assert max(map(abs, gibbs_residual(0.5, 2.0, spec))) < 1e-7

    def test_second_order(self):
        spec = EosSpec("linear-polytropic", p_inf=1.0, a=0.2)
        r1 = np.abs(gibbs_residual(0.7, 1.3, spec, h=1e-2))
        r2 = np.abs(gibbs_residual(0.7, 1.3, spec, h=5e-3))
        ratio = r1 / r2
        assert np.all((ratio > 3.0) & (ratio < 5.0))


class TestTransport:
    def test_viscosity(self):
        mu, eta, kappa = transport(1.0, TransportSpec(mu0=1.0, Lambda=1.0))
        assert mu == pytest.approx(2.0)

    def test_lower_bounds(self):
        mu, eta, kappa = transport(1e-14, TransportSpec(mu0=0.3, kappa0=0.7, beta_kappa=3))
        assert mu == pytest.approx(0.3, rel=1e-6)
        assert kappa == pytest.approx(0.7, rel=1e-6)

    def test_conductivity(self):
        assert transport(2.0, TransportSpec(kappa0=1.0, beta_kappa=3.0))[2] == pytest.approx(9.0)

    def test_primitive_normalized(self):
        assert kappa_primitive(1.0, TransportSpec(beta_kappa=3.0)) == 0.0

    def test_primitive_value(self):
        K = kappa_primitive(2.0, TransportSpec(kappa0=1.0, beta_kappa=3.0))
        assert K == pytest.approx(math.log(2) + 7.0 / 3.0, rel=1e-14)

    @given(a=st.floats(0.01, 10.0), b=st.floats(0.01, 10.0))
    def test_primitive_increasing(self, a, b):
        tr = TransportSpec(kappa0=0.5, beta_kappa=2.0)
        lo, hi = sorted((a, b))
        if hi > lo * (1 + 1e-9):
            assert kappa_primitive(hi, tr) > kappa_primitive(lo, tr)

    def test_invalid_lambda(self):
        with pytest.raises(ThermoError):
            TransportSpec(Lambda=2.0)


class TestThirdLaw:
    def test_linear_diverges(self):
        assert third_law_probe(1.0, LIN, np.geomspace(1.0, 1e-4, 13)).verdict == "divergent"

    def test_table_compatible(self):
        spec = EosSpec("tabulated", table=third_law_table())
        assert third_law_probe(1.0, spec, np.geomspace(1.0, 1e-4, 13)).verdict == "compatible"

    def test_radiation_vanishes_in_limit(self):
        spec = EosSpec("tabulated", table=third_law_table(), a=0.5)
        base = EosSpec("tabulated", table=third_law_table())
        s1 = third_law_probe(1.0, spec, np.geomspace(1.0, 1e-4, 9)).s
        s0 = third_law_probe(1.0, base, np.geomspace(1.0, 1e-4, 9)).s
        assert abs(s1[-1] - s0[-1]) < 1e-10

    def test_table_entropy_against_closed_form(self):
        # S(Z) = log(1 + 1/Z) for the table; s = S(rho theta**-1.5) without radiation
        spec = EosSpec("tabulated", table=third_law_table())
        for rho, th in [(1.0, 0.5), (0.3, 2.0), (0.9, 0.05)]:
            Z = rho * th**-1.5
            assert entropy(rho, th, spec) == pytest.approx(math.log1p(1 / Z), rel=1e-5, abs=1e-8)

    def test_increasing_sequence_rejected(self):
        with pytest.raises(ThermoError):
            third_law_probe(1.0, LIN, [0.1, 0.2])


class TestSuite:
    @pytest.mark.parametrize("spec", [LIN, EosSpec("linear-polytropic", p_inf=0.5, a=1e-3),
                                      EosSpec(hard_sphere=HardSphere(True))], ids=["linear", "poly", "hs"])
    def test_monotone_and_consistent(self, spec):
        rep = property_suite(spec, n_rho=15, n_theta=15)
        assert rep["pressure_increasing"] and rep["dp_drho_positive"]
        assert max(rep["gibbs_theta_max"], rep["gibbs_rho_max"]) < 1e-6
        assert np.isfinite(rep["rho_e_over_p_max"])
        assert np.isfinite(rep["entropy_bound_constant"])

    def test_hard_sphere_energy_can_be_negative(self):
        # the hard-sphere energy is anchored at rho_bar/2 and is negative below it
        assert property_suite(HS, n_rho=10, n_theta=5)["rho_e_min"] < 0

    @settings(max_examples=40, deadline=None)
    @given(r1=st.floats(0.0, 0.99), r2=st.floats(0.0, 0.99), th=st.floats(0.05, 5.0))
    def test_pressure_monotone_hard_sphere(self, r1, r2, th):
        lo, hi = sorted((r1, r2))
        if hi - lo > 1e-9:
            assert pressure(hi, th, HS) > pressure(lo, th, HS)
