"""Run configuration: JSON parsing, defaults and validation.

A config document looks like::

    {
      "group": {"model": "zd", "dim": 1},
      "kernel": [[1, 1.0], [-1, 1.0]],
      "delta": 1.5,
      "caps": [10, 14],
      "mc": {"n": 100000, "t_grid": [5, 10, 20], "seed": 0}
    }

Every field not given takes the default from :data:`DEFAULTS`; the resolved
document (defaults included) is what gets echoed into the outputs.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, InvalidKernelError, SubcritError
from .groups import Group, group_from_spec
from .kernel import Kernel, kernel_from_spec

DEFAULTS: dict = {
    "group": {"model": "zd", "dim": 1},
    "kernel": [],
    "delta": 1.0,
    "delta_grid": [],
    "caps": [6, 8],
    "max_states": 2_000_000,
    "tol": 1e-13,
    "gammas": [0.0],
    "mc": {"n": 10000, "t_grid": [5.0, 10.0], "seed": 0, "threads": None},
    "simulate": {"horizon": 5.0, "n_trajectories": 3},
    "eigenmeasure": {"t_grid": [2.0, 5.0, 10.0, 15.0], "survivors": 10000, "max_runs": 100_000_000},
    "derivative": {"fd_h": 0.05, "russo_t": 10.0, "russo_s": [5.0], "russo_n": 10000},
    "sweep": {"fd_h": 0.05, "mc": True, "audit_tol": 1e-9},
    "delta_c": {"method": "mc", "bracket": [0.1, 2.0], "tol": 0.05, "t": None, "n": 4000},
    "check": {"random_sets": 1000, "duality_realizations": 200, "dense_limit": 400},
    "outputs": {"dir": "out", "export_generator": False},
}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigError(f"unknown config field {where}{key!r}")
        if isinstance(base[key], dict) and key != "group":
            if not isinstance(val, dict):
                raise ConfigError(f"config field {where}{key!r} must be an object")
            out[key] = _merge(base[key], val, f"{where}{key}.")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _positive_number(x, name, allow_zero=True):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{name} must be a number")
    if x < 0 or (x == 0 and not allow_zero):
        raise ConfigError(f"{name} must be {'>= 0' if allow_zero else '> 0'}")
    return float(x)


def _int(x, name, minimum=0):
    if isinstance(x, bool) or not isinstance(x, int) or x < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}")
    return x


@dataclass
class RunConfig:
    """Validated configuration with its resolved JSON form."""

    resolved: dict
    group: Group
    kernel: Kernel

    @property
    def delta(self) -> float:
        return float(self.resolved["delta"])

    @property
    def caps(self) -> tuple:
        return tuple(self.resolved["caps"])

    @property
    def seed(self) -> int:
        return int(self.resolved["mc"]["seed"])

    @property
    def threads(self) -> int:
        return int(self.resolved["mc"]["threads"])

    @property
    def out_dir(self) -> Path:
        return Path(self.resolved["outputs"]["dir"])

    def section(self, name: str) -> dict:
        return self.resolved[name]


def resolve_config(doc: dict, seed: int | None = None, threads: int | None = None,
                   out_dir: str | None = None) -> RunConfig:
    """Merge defaults, apply command-line overrides and validate everything."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULTS, doc)
    if seed is not None:
        cfg["mc"]["seed"] = seed
    if threads is not None:
        cfg["mc"]["threads"] = threads
    if cfg["mc"]["threads"] is None:
        cfg["mc"]["threads"] = max(1, os.cpu_count() or 1)
    if out_dir is not None:
        cfg["outputs"]["dir"] = out_dir
    try:
        group = group_from_spec(cfg["group"])
        kernel = kernel_from_spec(group, cfg["kernel"])
    except InvalidKernelError as exc:
        raise ConfigError(f"invalid kernel: {exc}") from exc
    except (SubcritError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid group or kernel: {exc}") from exc
    cfg["group"] = group.descriptor()
    cfg["kernel"] = [[_offset_json(group, o), r] for o, r in zip(kernel.offsets, kernel.rates)]
    _positive_number(cfg["delta"], "delta")
    cfg["delta"] = float(cfg["delta"])
    if not isinstance(cfg["delta_grid"], list):
        raise ConfigError("delta_grid must be a list")
    cfg["delta_grid"] = [_positive_number(d, "delta_grid entry") for d in cfg["delta_grid"]]
    caps = cfg["caps"]
    if not isinstance(caps, list) or len(caps) != 2:
        raise ConfigError("caps must be [max_size, max_diameter]")
    _int(caps[0], "caps[0]", 1)
    _int(caps[1], "caps[1]", 0)
    _int(cfg["max_states"], "max_states", 1)
    _positive_number(cfg["tol"], "tol", allow_zero=False)
    if not isinstance(cfg["gammas"], list):
        raise ConfigError("gammas must be a list")
    cfg["gammas"] = [_positive_number(g, "gamma") for g in cfg["gammas"]]
    mc = cfg["mc"]
    _int(mc["n"], "mc.n", 0)
    _int(mc["seed"], "mc.seed", 0)
    _int(mc["threads"], "mc.threads", 1)
    if not isinstance(mc["t_grid"], list) or not mc["t_grid"]:
        raise ConfigError("mc.t_grid must be a nonempty list")
    mc["t_grid"] = [_positive_number(t, "mc.t_grid entry") for t in mc["t_grid"]]
    _positive_number(cfg["simulate"]["horizon"], "simulate.horizon")
    _int(cfg["simulate"]["n_trajectories"], "simulate.n_trajectories", 0)
    em = cfg["eigenmeasure"]
    em["t_grid"] = [_positive_number(t, "eigenmeasure.t_grid entry") for t in em["t_grid"]]
    _int(em["survivors"], "eigenmeasure.survivors", 0)
    _int(em["max_runs"], "eigenmeasure.max_runs", 1)
    dv = cfg["derivative"]
    _positive_number(dv["fd_h"], "derivative.fd_h", allow_zero=False)
    _positive_number(dv["russo_t"], "derivative.russo_t")
    dv["russo_s"] = [_positive_number(s, "derivative.russo_s entry") for s in dv["russo_s"]]
    if any(s > dv["russo_t"] for s in dv["russo_s"]):
        raise ConfigError("derivative.russo_s entries must lie in [0, russo_t]")
    _int(dv["russo_n"], "derivative.russo_n", 0)
    _positive_number(cfg["sweep"]["fd_h"], "sweep.fd_h", allow_zero=False)
    _positive_number(cfg["sweep"]["audit_tol"], "sweep.audit_tol")
    dc = cfg["delta_c"]
    if dc["method"] not in ("mc", "spectral"):
        raise ConfigError("delta_c.method must be 'mc' or 'spectral'")
    if not isinstance(dc["bracket"], list) or len(dc["bracket"]) != 2 or dc["bracket"][0] >= dc["bracket"][1]:
        raise ConfigError("delta_c.bracket must be [lo, hi] with lo < hi")
    _positive_number(dc["tol"], "delta_c.tol", allow_zero=False)
    _int(dc["n"], "delta_c.n", 1)
    ck = cfg["check"]
    for key in ("random_sets", "duality_realizations", "dense_limit"):
        _int(ck[key], f"check.{key}", 0)
    return RunConfig(cfg, group, kernel)


def _offset_json(group: Group, o):
    if group.model == "zd":
        return o[0] if group.dim == 1 else list(o)
    return group.format(o)


def load_config(path, **overrides) -> RunConfig:
    """Read and resolve a JSON config file (config problems raise :class:`ConfigError`)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return resolve_config(doc, **overrides)
