"""A walk through the equation of state.

Run with ``python3 demos/eos_tour.py``. Takes a few seconds.
"""
import numpy as np

from nsfsim.thermo import EosSpec, HardSphere, get_eos, property_suite, third_law_probe, third_law_table

print("1. Thermodynamic consistency")
print("   The pressure, energy and entropy are built from one structural function P(Z),")
print("   so the Gibbs relation should hold up to finite-difference error.")
for name, spec in [("linear", EosSpec()),
                   ("linear-polytropic", EosSpec("linear-polytropic", p_inf=0.5, a=1e-3)),
                   ("hard sphere", EosSpec(hard_sphere=HardSphere(True)))]:
    rep = property_suite(spec)
    worst = max(rep["gibbs_theta_max"], rep["gibbs_rho_max"])
    print(f"   {name:18s} worst relative Gibbs residual {worst:.1e}")

print("\n2. The hard-sphere wall")
print("   With the hard-sphere term on, the pressure blows up as the density approaches")
print("   the packing limit rho_bar = 1, which keeps computed densities below it.")
eos = get_eos(EosSpec(hard_sphere=HardSphere(True)))
for gap in (1e-1, 1e-2, 1e-4, 1e-6):
    p = float(eos.pressure(np.array(1 - gap), np.array(1.0)))
    print(f"   p(1 - {gap:.0e}, theta = 1) = {p:.3e}")

print("\n3. Third law")
print("   The entropy of the tabulated structural function stays bounded as theta -> 0;")
print("   the linear law p = rho*theta does not.")
thetas = np.geomspace(1.0, 1e-4, 13)
for name, spec in [("third-law table", EosSpec("tabulated", table=third_law_table(0.0))), ("linear", EosSpec())]:
    rep = third_law_probe(0.5, spec, thetas)
    print(f"   {name:16s} {rep.verdict:12s} s at theta = 1e-4: {rep.s[-1]:.3g}")
