"""Run configuration: INI parsing, scenario presets and validation."""
from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domain import Grid, boundary_preset
from .solver import Force, SchemeConfig
from .thermo import EosSpec, HardSphere, TransportSpec, third_law_table

__all__ = ["ConfigError", "RunSpec", "parse_config", "load_config", "PRESETS", "SCHEMA"]


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _pair(v):
    parts = [float(x) for x in re.split(r"[,\s]+", str(v).strip()) if x]
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {v!r}")
    return tuple(parts)


# section -> key -> converter
SCHEMA = {
    "run": {"preset": str, "t_end": float, "output_every": int, "snapshot_every": int,
            "window": float, "equilibrium": _bool, "seed": int},
    "grid": {"nx": int, "ny": int, "lx": float, "ly": float},
    "eos": {"structural": str, "p_inf": float, "a": float, "entropy_const": float,
            "hard_sphere": _bool, "rho_bar": float, "beta_hs": float, "c_hs": float},
    "transport": {"mu0": float, "Lambda": float, "eta0": float, "kappa0": float, "beta_kappa": float},
    "boundary": {"preset": str, "u_in": float, "u_out": float, "theta0": float, "rho_in": float,
                 "theta_bottom": float, "theta_top": float, "rho0": float, "ux": float, "uy": float,
                 "mode": str, "U": float, "stretch": float, "gamma": float},
    "force": {"kind": str, "gx": float, "gy": float, "potential": str, "strength": float,
              "cx": float, "cy": float},
    "scheme": {"cfl": float, "flux": str, "rho_floor": float, "theta_floor": float,
               "floors": _bool, "max_steps": int, "dt_min": float},
    "initial": {"kind": str, "rho0": float, "theta0": float, "ux": float, "uy": float,
                "amplitude": float, "vortex": float, "modes": int},
    "diagnostics": {"threshold": float, "drop": float, "trailing_fraction": float},
}

BOUNDARY_KEYS = {
    "channel": {"u_in", "u_out", "theta0", "rho_in"},
    "benard": {"theta_bottom", "theta_top", "rho0"},
    "relax": {"theta0", "rho0"},
    "constant": {"ux", "uy", "theta0", "rho0", "mode"},
    "parabolic-inlet": {"U", "stretch", "theta0", "rho_in"},
    "xy": {"theta0", "gamma", "rho0"},
}

BASE = {
    "run": {"preset": "custom", "t_end": 1.0, "output_every": 10, "snapshot_every": 0,
            "window": 1.0, "equilibrium": False, "seed": 0},
    "grid": {"nx": 32, "ny": 32, "lx": 1.0, "ly": 1.0},
    "eos": {"structural": "linear", "p_inf": 0.0, "a": 0.0, "entropy_const": 0.0,
            "hard_sphere": False, "rho_bar": 1.0, "beta_hs": 4.0, "c_hs": 1.0},
    "transport": {"mu0": 1.0, "Lambda": 1.0, "eta0": 0.0, "kappa0": 1.0, "beta_kappa": 0.0},
    "boundary": {"preset": "constant"},
    "force": {"kind": "zero"},
    "scheme": {"cfl": 0.4, "flux": "rusanov", "rho_floor": 1e-10, "theta_floor": 1e-8,
               "floors": True, "max_steps": 10**7, "dt_min": 1e-12},
    "initial": {"kind": "boundary", "amplitude": 0.0, "vortex": 0.0, "modes": 3},
    "diagnostics": {"trailing_fraction": 0.5},
}

# Scenario presets. "channel": net outflow through a straight channel;
# "benard": closed box heated from below under gravity; "relax": closed box
# at uniform temperature in a potential force field, compared with the
# hydrostatic equilibrium.
PRESETS = {
    "channel": {
        "run": {"t_end": 40.0 / 3.0, "window": 2.0 / 3.0, "output_every": 20},
        "grid": {"nx": 64, "ny": 64},
        "eos": {"hard_sphere": True, "rho_bar": 1.0, "beta_hs": 4.0, "c_hs": 0.1},
        "transport": {"mu0": 0.005, "kappa0": 0.005},
        "boundary": {"preset": "channel", "u_in": 1.0, "u_out": 2.0, "theta0": 1.0, "rho_in": 0.5},
        "scheme": {"flux": "rusanov"},
        "initial": {"kind": "boundary", "rho0": 0.5, "theta0": 1.0},
    },
    "benard": {
        "run": {"t_end": 10.0, "window": 1.0, "output_every": 20},
        "grid": {"nx": 32, "ny": 32},
        "eos": {"hard_sphere": True, "rho_bar": 1.0, "beta_hs": 4.0, "c_hs": 0.1},
        "transport": {"mu0": 0.01, "kappa0": 0.01},
        "boundary": {"preset": "benard", "theta_bottom": 2.0, "theta_top": 1.0, "rho0": 0.5},
        "force": {"kind": "constant", "gx": 0.0, "gy": -1.0},
        "scheme": {"flux": "rusanov"},
        "initial": {"kind": "boundary", "rho0": 0.5, "amplitude": 0.01},
    },
    "relax": {
        "run": {"t_end": 3.0, "window": 0.5, "output_every": 10, "equilibrium": True},
        "grid": {"nx": 64, "ny": 64},
        "eos": {"structural": "linear-polytropic", "p_inf": 0.5, "a": 1e-3, "hard_sphere": False},
        "transport": {"mu0": 0.05, "kappa0": 0.05, "beta_kappa": 3.0},
        "boundary": {"preset": "relax", "theta0": 1.0, "rho0": 1.0},
        "force": {"kind": "potential", "potential": "linear", "gx": 0.0, "gy": -0.5},
        "scheme": {"flux": "upwind"},
        "initial": {"kind": "rest", "rho0": 1.0, "theta0": 1.0},
    },
}

SCENARIOS = {"channel": "flow-through", "benard": "heated-box", "relax": "relaxation", "custom": "custom"}


@dataclass
class RunSpec:
    values: dict
    grid: Grid
    eos: EosSpec
    transport: TransportSpec
    boundary: dict
    force: Force
    scheme: SchemeConfig
    t_end: float
    output_every: int
    snapshot_every: int
    window: float
    equilibrium: bool
    initial: dict
    diagnostics: dict
    seed: int = 0
    scenario: str = "custom"
    out_dir: Optional[str] = None

    def boundary_data(self):
        p = dict(self.boundary)
        name = p.pop("preset")
        return boundary_preset(name, self.grid, **p)

    def physics_hash(self):
        """Digest of everything that affects the trajectory."""
        keep = {k: v for k, v in self.values.items() if k in ("grid", "eos", "transport", "boundary", "force")}
        sch = dict(self.values["scheme"])
        sch.pop("max_steps", None)
        keep["scheme"] = sch
        return hashlib.sha256(json.dumps(keep, sort_keys=True, default=str).encode()).hexdigest()[:16]

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for sec, kv in self.values.items():
            cp[sec] = {k: (str(v).lower() if isinstance(v, bool) else repr(v) if isinstance(v, float) else str(v))
                       for k, v in kv.items()}
        from io import StringIO

        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()


def _line_index(text):
    """``(section, key) -> line number`` for error messages."""
    idx, sec = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            sec = m.group(1).strip()
            idx[(sec, None)] = n
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and sec is not None:
            idx[(sec, m.group(1).strip())] = n
    return idx


def parse_config(text, overrides=None) -> RunSpec:
    """Parse INI text into a validated :class:`RunSpec`; raises :class:`ConfigError`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError([f"line {line}: syntax error: {exc.message if hasattr(exc, 'message') else exc}"
                           if line else f"syntax error: {exc}"]) from exc
    lines = _line_index(text)
    def where(sec, key=None):
        name = f"[{sec}]" + (f" {key}" if key else "")
        n = lines.get((sec, key))
        return f"line {n}, {name}" if n else f"{name} (preset or default value)"

    errors = []
    raw = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            errors.append(f"{where(sec)}: unknown section")
            continue
        raw[sec] = {}
        for key, val in cp[sec].items():
            conv = SCHEMA[sec].get(key)
            if conv is None:
                errors.append(f"{where(sec, key)}: unknown key")
                continue
            try:
                raw[sec][key] = conv(val)
            except ValueError as exc:
                errors.append(f"{where(sec, key)}: {exc}")
    for sec, kv in (overrides or {}).items():
        for key, val in kv.items():
            conv = SCHEMA.get(sec, {}).get(key)
            if conv is None:
                errors.append(f"override [{sec}] {key}: unknown key")
                continue
            try:
                raw.setdefault(sec, {})[key] = conv(val) if isinstance(val, str) else val
            except ValueError as exc:
                errors.append(f"override [{sec}] {key}: {exc}")
    if errors:
        raise ConfigError(errors)

    preset = raw.get("run", {}).get("preset", "custom")
    if preset not in PRESETS and preset != "custom":
        raise ConfigError([f"{where('run', 'preset')}: unknown preset {preset!r}"])
    values = {sec: dict(kv) for sec, kv in BASE.items()}
    for sec, kv in PRESETS.get(preset, {}).items():
        values[sec].update(kv)
    user_boundary = raw.get("boundary", {})
    if "preset" in user_boundary and user_boundary["preset"] != values["boundary"].get("preset"):
        values["boundary"] = {"preset": user_boundary["preset"]}
    for sec, kv in raw.items():
        values[sec].update(kv)
    return _build(values, where)


def _build(v, where) -> RunSpec:
    errors = []

    def check(cond, sec, key, msg):
        if not cond:
            errors.append(f"{where(sec, key)}: {msg}")

    g, e, tr, b, f, sc, ini, run = (v[k] for k in ("grid", "eos", "transport", "boundary", "force",
                                                    "scheme", "initial", "run"))
    check(g["nx"] >= 4, "grid", "nx", "need at least 4 cells")
    check(g["ny"] >= 4, "grid", "ny", "need at least 4 cells")
    check(g["lx"] > 0, "grid", "lx", "must be positive")
    check(g["ly"] > 0, "grid", "ly", "must be positive")
    check(e["structural"] in ("linear", "linear-polytropic", "third-law"), "eos", "structural",
          "must be 'linear', 'linear-polytropic' or 'third-law'")
    check(e["p_inf"] >= 0, "eos", "p_inf", "must be non-negative")
    check(e["a"] >= 0, "eos", "a", "must be non-negative")
    if e["hard_sphere"]:
        check(e["beta_hs"] > 3, "eos", "beta_hs", "the hard-sphere exponent must satisfy beta > 3")
        check(e["rho_bar"] > 0, "eos", "rho_bar", "must be positive")
        check(e["c_hs"] > 0, "eos", "c_hs", "must be positive")
    for k in ("mu0", "kappa0"):
        check(tr[k] > 0, "transport", k, "must be positive")
    check(tr["eta0"] >= 0, "transport", "eta0", "must be non-negative")
    check(0.5 <= tr["Lambda"] <= 1.0, "transport", "Lambda", "must lie in [1/2, 1]")
    check(tr["beta_kappa"] >= 0, "transport", "beta_kappa", "must be non-negative")
    check(0 < sc["cfl"] < 1, "scheme", "cfl", "must lie in (0, 1)")
    check(sc["flux"] in ("rusanov", "upwind"), "scheme", "flux", "must be 'rusanov' or 'upwind'")
    check(sc["rho_floor"] > 0, "scheme", "rho_floor", "must be positive")
    check(sc["theta_floor"] > 0, "scheme", "theta_floor", "must be positive")
    check(sc["max_steps"] > 0, "scheme", "max_steps", "must be positive")
    check(run["t_end"] > 0, "run", "t_end", "must be positive")
    check(run["output_every"] > 0, "run", "output_every", "must be positive")
    check(run["snapshot_every"] >= 0, "run", "snapshot_every", "must be non-negative")
    check(run["window"] > 0, "run", "window", "must be positive")
    check(f["kind"] in ("zero", "constant", "potential"), "force", "kind",
          "must be 'zero', 'constant' or 'potential'")
    check(ini["kind"] in ("boundary", "rest", "equilibrium"), "initial", "kind",
          "must be 'boundary', 'rest' or 'equilibrium'")
    bname = b.get("preset", "constant")
    if bname not in BOUNDARY_KEYS:
        errors.append(f"{where('boundary', 'preset')}: unknown boundary preset {bname!r}")
    else:
        for k in b:
            if k != "preset" and k not in BOUNDARY_KEYS[bname]:
                errors.append(f"{where('boundary', k)}: not a parameter of boundary preset {bname!r}")
        if "mode" in b:
            check(b["mode"] in ("flow-through", "impermeable", "rigid"), "boundary", "mode",
                  "must be 'flow-through', 'impermeable' or 'rigid'")
    if errors:
        raise ConfigError(errors)

    try:
        grid = Grid(g["nx"], g["ny"], g["lx"] / g["nx"], g["ly"] / g["ny"])
        hs = HardSphere(e["hard_sphere"], e["rho_bar"], e["beta_hs"], e["c_hs"])
        if e["structural"] == "third-law":
            eos = EosSpec(structural="tabulated", table=third_law_table(e["p_inf"]), a=e["a"],
                          entropy_const=e["entropy_const"], hard_sphere=hs)
        else:
            eos = EosSpec(structural=e["structural"], p_inf=e["p_inf"], a=e["a"],
                          entropy_const=e["entropy_const"], hard_sphere=hs)
        transport = TransportSpec(tr["mu0"], tr["Lambda"], tr["eta0"], tr["kappa0"], tr["beta_kappa"])
        force = Force(f["kind"], (f.get("gx", 0.0), f.get("gy", 0.0)), f.get("potential", "linear"),
                      f.get("strength", 0.0), (f.get("cx", 0.5 * g["lx"]), f.get("cy", 0.5 * g["ly"])))
        scheme = SchemeConfig(sc["cfl"], sc["flux"], sc["rho_floor"], sc["theta_floor"], sc["floors"],
                              sc["max_steps"], sc["dt_min"], force)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    spec = RunSpec(v, grid, eos, transport, dict(b), force, scheme, run["t_end"], run["output_every"],
                   run["snapshot_every"], run["window"], run["equilibrium"], dict(ini), dict(v["diagnostics"]),
                   run["seed"], SCENARIOS.get(run["preset"], "custom"))

    # cross-field rules
    bd = spec.boundary_data()
    if run["equilibrium"]:
        X, Y = grid.centers()
        samples = np.concatenate([np.ravel(bd.temperature(0.0, *grid.face_centers(s))) for s in
                                  ("left", "right", "bottom", "top")])
        if np.ptp(samples) > 1e-12 * max(1.0, np.abs(samples).max()):
            errors.append(f"{where('run', 'equilibrium')}: equilibrium comparison requires constant "
                          "boundary temperature")
        if force.kind != "potential" and force.kind != "zero":
            errors.append(f"{where('force', 'kind')}: equilibrium comparison requires a potential force")
    if ini["kind"] == "equilibrium" and not run["equilibrium"]:
        errors.append(f"{where('initial', 'kind')}: an equilibrium initial state needs equilibrium = true")
    if errors:
        raise ConfigError(errors)
    return spec


def load_config(path, overrides=None) -> RunSpec:
    with open(path) as fh:
        return parse_config(fh.read(), overrides)
