import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsfsim.diagnostics import (IncompleteWindowError, StaleExtensionError, ballistic_energy,
                                ballistic_inequality_residual, budget, calibrate_dichotomy, dichotomy_classify,
                                dissipativity_estimate, entropy_production, gauss_green_residual,
                                lyapunov_functional, mass_balance_residual, record)
from nsfsim.domain import BoundaryData, Grid, boundary_preset, harmonic_extension
from nsfsim.solver import FluidState, Force, Problem, SchemeConfig, step
from nsfsim.thermo import EosSpec, TransportSpec


def setup(n=8, bd=None, transport=None, eos=None, force=None):
    g = Grid.unit_square(n)
    bd = bd or boundary_preset("relax", g)
    pb = Problem(g, eos or EosSpec(), transport or TransportSpec(), bd, SchemeConfig(force=force or Force()))
    return g, pb, harmonic_extension(bd, 0.0, g)


def uniform(pb, rho, u, theta):
    g = pb.grid
    u = np.array([np.full(g.shape, c) for c in u])
    return FluidState.from_primitive(pb.eos, np.full(g.shape, rho), u, theta)


class TestEnergy:
    def test_rest_state(self):
        g, pb, ext = setup()
        assert ballistic_energy(uniform(pb, 1.0, (0, 0), 1.0), ext, pb) == pytest.approx(1.5, rel=1e-14)

    def test_relative_kinetic(self):
        g, pb, ext = setup()
        assert ballistic_energy(uniform(pb, 1.0, (2, 0), 1.0), ext, pb) == pytest.approx(3.5, rel=1e-14)

    def test_extension_lowers_energy(self):
        g, pb, ext = setup()
        s = uniform(pb, 0.5, (0, 0), 1.0)
        rs = float(np.sum(pb.eos.rho_s(s.rho, np.ones(g.shape))) * g.cell_area)
        assert rs > 0
        hot = dataclasses.replace(ext, theta_tilde=ext.theta_tilde + 0.3)
        diff = ballistic_energy(s, ext, pb) - ballistic_energy(s, hot, pb)
        assert diff == pytest.approx(0.3 * rs, rel=1e-12)

    def test_budget(self):
        g, pb, ext = setup()
        assert budget(uniform(pb, 1.0, (2, 0), 1.0), pb) == pytest.approx((1.0, 2.0, 1.5, 3.5), rel=1e-14)

    def test_stale_extension_rejected(self):
        g = Grid.unit_square(8)
        bd = dataclasses.replace(boundary_preset("relax", g), steady=False)
        pb = Problem(g, EosSpec(), TransportSpec(), bd)
        ext = harmonic_extension(bd, 0.0, g)
        s = uniform(pb, 1.0, (0, 0), 1.0)
        s.t = 0.5
        with pytest.raises(StaleExtensionError):
            record(s, pb, ext)


class TestEntropyProduction:
    def test_uniform(self):
        g, pb, ext = setup()
        sigma, total = entropy_production(uniform(pb, 1.0, (0, 0), 1.0), pb)
        assert np.max(np.abs(sigma)) == 0.0 and total == 0.0

    def test_shear(self):
        g = Grid.unit_square(8)
        bd = BoundaryData(lambda t, x, y: (y + 0 * x, 0 * x), lambda t, x, y: 1.0 + 0 * x,
                          lambda t, x, y: 1.0 + 0 * x, "flow-through")
        pb = Problem(g, EosSpec(), TransportSpec(mu0=1.0, Lambda=1.0), bd)
        X, Y = g.centers()
        s = FluidState.from_primitive(pb.eos, np.ones(g.shape), np.array([Y, 0 * Y]), 1.0)
        sigma, _ = entropy_production(s, pb)
        assert np.allclose(sigma, 2.0, rtol=1e-12)

    def test_conduction(self):
        gam = 0.5
        g = Grid.unit_square(8)
        bd = boundary_preset("benard", g, theta_bottom=1.0, theta_top=1.0 + gam)
        pb = Problem(g, EosSpec(), TransportSpec(kappa0=0.7, beta_kappa=0.0), bd)
        X, Y = g.centers()
        th = 1.0 + gam * Y
        s = FluidState.from_primitive(pb.eos, np.ones(g.shape), np.zeros((2,) + g.shape), th)
        sigma, _ = entropy_production(s, pb)
        assert np.allclose(sigma, pb.transport.kappa(th) * gam**2 / th**2, rtol=1e-12)
        assert np.all(sigma > 0)


class TestInequality:
    def test_steady_uniform_is_zero(self):
        g, pb, ext = setup()
        s = uniform(pb, 1.0, (0, 0), 1.0)
        recs = [record(s, pb, ext)]
        for _ in range(3):
            s, _r = step(s, pb)
            recs.append(record(s, pb, ext))
        assert abs(ballistic_inequality_residual(recs)) < 1e-12

    def test_closed_box_small(self):
        g, pb, ext = setup(12, transport=TransportSpec(mu0=0.05, kappa0=0.05))
        X, Y = g.centers()
        u = 0.2 * np.array([np.sin(np.pi * X) * np.sin(2 * np.pi * Y), 0 * X])
        s = FluidState.from_primitive(pb.eos, np.ones(g.shape), u, 1.0 + 0.1 * X)
        recs = [record(s, pb, ext)]
        while s.t < 0.2:
            s, _r = step(s, pb)
            recs.append(record(s, pb, ext))
        E0 = recs[0].ballistic
        assert ballistic_inequality_residual(recs) < 1e-3 * E0

    def test_window_must_hit_records(self):
        g, pb, ext = setup()
        s = uniform(pb, 1.0, (0, 0), 1.0)
        recs = [record(s, pb, ext)]
        s, _r = step(s, pb)
        recs.append(record(s, pb, ext))
        with pytest.raises(IncompleteWindowError):
            ballistic_inequality_residual(recs, 0.0, 0.5 * s.t)


class TestGaussGreen:
    def test_uniform_temperature(self):
        g, pb, ext = setup(16)
        assert abs(gauss_green_residual(np.ones(g.shape), ext, pb)) < 1e-12

    def test_refinement_of_extension_itself(self):
        res = []
        for n in (8, 16, 32, 64):
            g = Grid.unit_square(n)
            bd = boundary_preset("benard", g, theta_bottom=2.0, theta_top=1.0)
            bd = BoundaryData(bd.u_B, lambda t, x, y: 1.0 + x * x + 0.5 * np.sin(3 * y), bd.rho_B)
            pb = Problem(g, EosSpec(), TransportSpec(kappa0=1.0, beta_kappa=2.0), bd)
            ext = harmonic_extension(bd, 0.0, g)
            res.append(abs(gauss_green_residual(ext.theta_tilde, ext, pb)))
        assert all(a / b >= 1.5 for a, b in zip(res, res[1:]))


class TestDichotomy:
    def test_linear_decrease(self):
        t = np.linspace(0, 5, 501)
        v = dichotomy_classify(t, 10 - t, 1.0, 3.0, 1.0)
        assert v.classes == ["strictly-decreasing"] * 5
        assert not v.dissipative_consistent

    def test_decrease_then_threshold(self):
        t = np.linspace(0, 9, 901)
        v = dichotomy_classify(t, np.maximum(10 - t, 2.5), 1.0, 3.0, 1.0)
        first = v.classes.index("below-threshold")
        assert v.classes[:first] == ["strictly-decreasing"] * first
        assert v.dissipative_consistent

    def test_constant_below(self):
        t = np.linspace(0, 4, 41)
        v = dichotomy_classify(t, np.ones_like(t), 1.0, 3.0, 1.0)
        assert set(v.classes) == {"below-threshold"} and v.dissipative_consistent

    def test_growth_negative_control(self):
        t = np.linspace(0, 4, 41)
        v = dichotomy_classify(t, 10 + t, 1.0, 3.0, 1.0)
        assert set(v.classes) == {"neither"} and not v.dissipative_consistent

    def test_relapse_is_inconsistent(self):
        t = np.linspace(0, 6, 601)
        E = np.where(t < 3, 1.0, 10.0 + t)
        assert not dichotomy_classify(t, E, 1.0, 3.0, 1.0).dissipative_consistent


class TestCalibration:
    def test_hand_series(self):
        t = np.linspace(0, 20, 2001)
        thr, drop = calibrate_dichotomy(t, np.maximum(10 - t, 2.5), 1.0)
        assert thr == pytest.approx(2.75, rel=1e-12)
        assert drop == pytest.approx(0.5, rel=1e-9)

    def test_negative_energy(self):
        t = np.linspace(0, 10, 1001)
        E = -0.1 + 0.5 * np.exp(-2 * t)
        thr, drop = calibrate_dichotomy(t, E, 1.0)
        assert thr > -0.1 and drop > 0
        assert dichotomy_classify(t, E, 1.0, thr, drop).dissipative_consistent

    def test_growth_stays_inconsistent(self):
        t = np.linspace(0, 10, 1001)
        thr, drop = calibrate_dichotomy(t, -0.1 + 0.5 * np.exp(-2 * t), 1.0)
        assert not dichotomy_classify(t, 0.2 * t, 1.0, thr, drop).dissipative_consistent


class TestDissipativity:
    def test_exponential_tail(self):
        t = np.linspace(0, 20, 2001)
        assert dissipativity_estimate(t, 2 + np.exp(-t)) == pytest.approx(2 + np.exp(-10), rel=1e-14)

    def test_constant(self):
        assert dissipativity_estimate([0, 1, 2], [4.0, 4.0, 4.0]) == 4.0

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30))
    def test_increasing_gives_last(self, vals):
        E = np.sort(np.array(vals))
        t = np.arange(len(E), dtype=float)
        assert dissipativity_estimate(t, E) == E[-1]


class TestMassBalance:
    def run(self, preset, n=10, steps=30):
        g = Grid.unit_square(n)
        bd = boundary_preset(preset, g)
        pb = Problem(g, EosSpec(), TransportSpec(mu0=0.05, kappa0=0.05), bd)
        ext = harmonic_extension(bd, 0.0, g)
        X, Y = g.centers()
        u = np.array(bd.velocity(0.0, X, Y))
        s = FluidState.from_primitive(pb.eos, np.full(g.shape, 0.5), u, 1.0)
        recs, reps = [record(s, pb, ext)], []
        for _ in range(steps):
            s, r = step(s, pb)
            reps.append(r)
        recs.append(record(s, pb, ext))
        return recs, reps

    def test_closed_box(self):
        recs, reps = self.run("relax")
        assert abs(mass_balance_residual(recs, reps)) < 1e-12

    def test_channel(self):
        recs, reps = self.run("channel")
        assert abs(mass_balance_residual(recs, reps)) < 1e-10 * recs[0].mass

    def test_corrupted_flux_detected(self):
        recs, reps = self.run("channel")
        reps[5] = dataclasses.replace(reps[5], influx=reps[5].influx * 1.01)
        assert abs(mass_balance_residual(recs, reps)) > 1e-6

    def test_gap_detected(self):
        recs, reps = self.run("channel")
        del reps[3]
        with pytest.raises(IncompleteWindowError):
            mass_balance_residual(recs, reps)


class TestLyapunov:
    @settings(max_examples=5, deadline=None)
    @given(seed=st.integers(0, 1000))
    def test_decreases_in_relaxation(self, seed):
        g = Grid.unit_square(10)
        eos = EosSpec("linear-polytropic", p_inf=0.5, a=1e-3)
        pb = Problem(g, eos, TransportSpec(mu0=0.05, kappa0=0.05, beta_kappa=3.0), boundary_preset("relax", g),
                     SchemeConfig(flux="upwind", force=Force("potential", (0.0, -0.5))))
        rng = np.random.default_rng(seed)
        s = FluidState.from_primitive(pb.eos, 1 + 0.1 * rng.random(g.shape), 0.05 * rng.standard_normal((2,) + g.shape),
                                      1 + 0.1 * rng.random(g.shape))
        L = [lyapunov_functional(s, pb)]
        for _ in range(40):
            s, _r = step(s, pb)
            L.append(lyapunov_functional(s, pb))
        assert np.max(np.diff(L)) <= 1e-6 * abs(L[0])
