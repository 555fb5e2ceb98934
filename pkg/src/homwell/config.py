"""JSON config loading with embedded defaults.

The file has four main sections (potential, schedule, solver, output) plus
optional per-command sections (kh, minimize, isotropy, probe, validate).
Unknown keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import copy
import json

import numpy as np

from homwell.experiment import ScalingSchedule
from homwell.minimize import SolverOptions
from homwell.potential import make_potential

__all__ = ["DEFAULTS", "load_config", "build_potential", "build_schedule",
           "build_solver_options"]

DEFAULTS = {
    "potential": {
        "base": "quartic_scalar",
        "wells": [-1.0, 1.0],
        "modulation": "checkerboard",
        "modulation_params": {"values": [1.0, 2.0]},
        "dim_x": 2,
    },
    "schedule": {
        "eps0": 0.23,
        "delta0": 0.2,
        "rho": 0.5,
        "alpha": 0.5,
        "n_max": 5,
    },
    "solver": {
        "mode": "semi_implicit",
        "tol": 1e-9,
        "max_iter": 4000,
    },
    "output": {
        "path": "rows.csv",
        "deterministic_timing": True,
    },
    "kh": {
        "node_count": 128,
        "tol": 1e-8,
        "max_iter": 4000,
        "oracle": False,
        "oracle_per_axis": 201,
    },
    "minimize": {
        "eps": 0.115,
        "delta": 0.141,
        "divisions": 0,
        "bc": "pair",
        "theta_deg": 0.0,
    },
    "isotropy": {
        "angles_deg": [0.0, 30.0, 45.0, 60.0, 90.0],
        "eps": None,
        "delta": None,
    },
    "probe": {
        "alphas": [0.5, 0.6666666666666666, 0.8],
        "n_max": 3,
    },
    "validate": {
        "samples": 400,
    },
}


_OPAQUE = {"modulation_params"}  # keys whose content depends on other choices


def _merge(base, override, path="config"):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise KeyError(f"unknown key {path}.{key}")
        if key in _OPAQUE:
            out[key] = copy.deepcopy(val)
        elif isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, f"{path}.{key}")
        else:
            out[key] = val
    return out


def load_config(path=None):
    """Defaults deep-merged with the JSON file at path, if given."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be an object")
    return _merge(DEFAULTS, data)


def build_potential(cfg):
    pot = cfg["potential"]
    wells = pot["wells"]
    wells = (np.asarray(wells[0], dtype=float), np.asarray(wells[1], dtype=float))
    return make_potential(base_well=pot["base"], wells=wells,
                          modulation=pot["modulation"],
                          modulation_params=pot["modulation_params"],
                          dim_x=pot["dim_x"])


def build_schedule(cfg):
    sch = cfg["schedule"]
    return ScalingSchedule(eps0=sch["eps0"], delta0=sch["delta0"], rho=sch["rho"],
                           alpha=sch["alpha"], n_max=sch["n_max"])


def build_solver_options(cfg, seed=0):
    sol = cfg["solver"]
    return SolverOptions(mode=sol["mode"], tol=sol["tol"],
                         max_iter=sol["max_iter"], seed=seed)
