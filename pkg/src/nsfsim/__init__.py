"""Finite-volume simulator for compressible, viscous, heat-conducting gases
with general equations of state and inflow/outflow boundaries."""

from . import config, diagnostics, domain, equilibrium, io, solver, thermo

__version__ = "0.1.0"

__all__ = ["config", "diagnostics", "domain", "equilibrium", "io", "solver", "thermo", "__version__"]
