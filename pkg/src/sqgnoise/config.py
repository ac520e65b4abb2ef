"""Run configuration: a JSON document with a fixed schema plus dotted overrides.

Schema (every key optional; missing keys take the defaults below)::

    {
      "grid":     {"N": 16, "dealias_cutoff": null},
      "params":   {"nu": 1.0, "s": 0.6, "sigma": 1.8, "alpha": 1.0,
                   "beta": 0.4, "epsilon": 0.1, "strict": true},
      "solver":   {"dt": 0.01, "T_end": 30.0, "scheme": "etdrk2", "record_every": 1,
                   "overflow_policy": "abort", "filter_tol": 0.0, "rel_tol": 1e-8},
      "initial":  {"seed": 1, "E": 0.09, "slope": 1.0, "modes": null},
      "path":     {"T": 30.0, "h": 0.01, "master_seed": 0},
      "ensemble": {"n_paths": 2000, "save_trajectories": 4, "horizon_slack": 0.01},
      "output": "runs/default",
      "allow_inadmissible": false
    }

``initial.E`` is the target G^sigma_{alpha+epsilon} norm of the random datum;
``initial.modes`` ("(1,0):1,(0,2):0.5j") replaces the random recipe when set.
A run is rejected at load when E exceeds nu^2/2 - beta unless
``allow_inadmissible`` is true.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .solver import SolverConfig
from .spectral import FourierField, GevreyParams, SpectralGrid, make_field, random_field

DEFAULTS = {
    "grid": {"N": 16, "dealias_cutoff": None},
    "params": {"nu": 1.0, "s": 0.6, "sigma": 1.8, "alpha": 1.0, "beta": 0.4, "epsilon": 0.1,
               "strict": True},
    "solver": {"dt": 0.01, "T_end": 30.0, "scheme": "etdrk2", "record_every": 1,
               "overflow_policy": "abort", "filter_tol": 0.0, "rel_tol": 1e-8},
    "initial": {"seed": 1, "E": 0.09, "slope": 1.0, "modes": None},
    "path": {"T": 30.0, "h": 0.01, "master_seed": 0},
    "ensemble": {"n_paths": 2000, "save_trajectories": 4, "horizon_slack": 0.01},
    "output": "runs/default",
    "allow_inadmissible": False,
}

_TYPES = {
    "grid": {"N": int, "dealias_cutoff": int},
    "params": {"nu": float, "s": float, "sigma": float, "alpha": float, "beta": float,
               "epsilon": float, "strict": bool},
    "solver": {"dt": float, "T_end": float, "scheme": str, "record_every": int,
               "overflow_policy": str, "filter_tol": float, "rel_tol": float},
    "initial": {"seed": int, "E": float, "slope": float, "modes": str},
    "path": {"T": float, "h": float, "master_seed": int},
    "ensemble": {"n_paths": int, "save_trajectories": int, "horizon_slack": float},
    "output": str,
    "allow_inadmissible": bool,
}


class ConfigError(ValueError):
    pass


def _coerce(kind, value, where):
    if value is None:
        return None
    if kind is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0", "yes", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ConfigError(f"{where}: expected a boolean, got {value!r}")
    if kind is int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot read {value!r} as {kind.__name__}") from None


def normalize(doc: dict) -> dict:
    """Fill defaults, coerce types and reject unknown keys."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    out = copy.deepcopy(DEFAULTS)
    for key, val in doc.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown config section {key!r}; expected one of {sorted(_TYPES)}")
        spec = _TYPES[key]
        if isinstance(spec, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"section {key!r} must be an object")
            for k, v in val.items():
                if k not in spec:
                    raise ConfigError(f"unknown key {key}.{k}; expected one of {sorted(spec)}")
                out[key][k] = _coerce(spec[k], v, f"{key}.{k}")
        else:
            out[key] = _coerce(spec, val, key)
    return out


def apply_override(doc: dict, assignment: str) -> dict:
    """Apply one ``section.key=value`` override (value parsed as JSON when possible)."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    path, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = path.strip().split(".")
    doc = copy.deepcopy(doc)
    if len(parts) == 1:
        doc[parts[0]] = value
    elif len(parts) == 2:
        doc.setdefault(parts[0], {})
        if not isinstance(doc[parts[0]], dict):
            raise ConfigError(f"{parts[0]} is not a section")
        doc[parts[0]][parts[1]] = value
    else:
        raise ConfigError(f"override key {path!r} nests too deeply")
    return doc


_MODE = re.compile(r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)\s*:\s*([^,()]+)")


def parse_modes(text: str) -> dict:
    """'(1,0):1,(0,2):0.5j' -> {(1, 0): 1, (0, 2): 0.5j}."""
    modes = {}
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _MODE.match(text, pos)
        if not m:
            raise ConfigError(f"cannot parse modes at {text[pos:]!r}; expected '(k1,k2):amp,...'")
        try:
            amp = complex(m.group(3).strip().replace(" ", ""))
        except ValueError:
            raise ConfigError(f"bad amplitude {m.group(3)!r}") from None
        modes[(int(m.group(1)), int(m.group(2)))] = amp
        pos = m.end()
        while pos < len(text) and text[pos] in ", ":
            pos += 1
    if not modes:
        raise ConfigError("empty mode list")
    return modes


@dataclass(frozen=True)
class RunConfig:
    doc: dict

    @classmethod
    def from_dict(cls, doc: dict, overrides=(), validate: bool = True) -> "RunConfig":
        for o in overrides:
            doc = apply_override(doc, o)
        cfg = cls(normalize(doc))
        if validate:
            cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, overrides=(), validate: bool = True) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: malformed JSON ({err})") from None
        return cls.from_dict(doc, overrides, validate)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.doc)

    def dumps(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True) + "\n"

    @property
    def params(self) -> GevreyParams:
        return GevreyParams(**self.doc["params"])

    @property
    def grid(self) -> SpectralGrid:
        g = self.doc["grid"]
        return SpectralGrid(g["N"], g["dealias_cutoff"])

    def solver(self, **changes) -> SolverConfig:
        kw = dict(self.doc["solver"])
        kw.update(changes)
        return SolverConfig(**kw)

    def initial_field(self) -> FourierField:
        ini = self.doc["initial"]
        if ini["modes"]:
            return make_field(self.grid, parse_modes(ini["modes"]))
        return random_field(ini["seed"], self.grid, self.params, ini["E"], ini["slope"])

    def validate(self) -> None:
        """Component invariants plus the admissibility gate on E."""
        try:
            p = self.params
            self.grid
            self.solver()
        except ValueError as err:
            raise ConfigError(str(err)) from None
        ini = self.doc["initial"]
        if ini["E"] < 0:
            raise ConfigError("initial.E must be nonnegative")
        pth = self.doc["path"]
        if pth["T"] <= 0 or pth["h"] <= 0:
            raise ConfigError("path.T and path.h must be positive")
        if pth["T"] < self.doc["solver"]["T_end"]:
            raise ConfigError(f"path.T = {pth['T']:g} is shorter than solver.T_end")
        if self.doc["ensemble"]["n_paths"] < 1:
            raise ConfigError("ensemble.n_paths must be >= 1")
        if not self.doc["allow_inadmissible"] and not ini["modes"] and ini["E"] > p.threshold:
            raise ConfigError(
                f"initial.E = {ini['E']:g} exceeds nu^2/2 - beta = {p.threshold:g}; "
                "set allow_inadmissible (or pass --allow-inadmissible) for exploratory runs")
