"""Command-line entry point ``subcrit-cp``.

Usage::

    subcrit-cp <command> --config <path> [--out <dir>] [--seed N] [--threads N]

Each command writes ``<out>/<command>.json`` (``sweep`` also writes
``sweep.csv``).  Exit codes: 0 success, 1 config error, 2 computation error,
3 invariant-check failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, backend
from .checks import run_checks
from .config import RunConfig, load_config
from .errors import ConfigError, SubcritError
from .estimators import (estimate_conditioned_law, estimate_delta_c, estimate_growth_rate,
                         estimate_r_gamma, estimate_russo_integrand)
from .kernel import build_metric, dual_kernel
from .measures import growth_derivative
from .quotient import build_generator, enumerate_states, expected_size
from .rng import task_rng
from .simulate import simulate_batch, simulate_forward
from .spectral import quasi_convergence_check, solve_spectrum

COMMANDS = ("spectrum", "simulate", "growth", "eigenmeasure", "derivative", "sweep", "delta-c", "check")
SWEEP_COLUMNS = ["delta", "r_spectral", "r_mc", "r_mc_stderr", "caps_S", "caps_D", "trunc_mass",
                 "derivative_formula", "derivative_fd"]
AUDIT_COLUMNS = ["bounds_ok", "monotone_ok", "lipschitz_ok", "derivative_jump"]

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE, EXIT_CHECK = 0, 1, 2, 3


class _Spaces:
    """Forward and dual state spaces, enumerated once per run."""

    def __init__(self, cfg: RunConfig):
        k = cfg.kernel
        kd = dual_kernel(k)
        self.forward = enumerate_states(k, cfg.caps, cfg.resolved["max_states"])
        self.dual = self.forward if kd == k else enumerate_states(kd, cfg.caps, cfg.resolved["max_states"])

    def solve(self, delta: float, tol: float):
        res_f = solve_spectrum(build_generator(self.forward, delta), tol)
        if self.dual is self.forward:
            return res_f, res_f
        return res_f, solve_spectrum(build_generator(self.dual, delta), tol)


def _derivative(res_f, res_d) -> float:
    return growth_derivative(res_f.eigenmeasure("forward"), res_d.eigenmeasure("dual"))


def cmd_spectrum(cfg: RunConfig) -> dict:
    spaces = _Spaces(cfg)
    res_f, res_d = spaces.solve(cfg.delta, cfg.resolved["tol"])
    values = {"forward": res_f.to_json(), "dual": res_d.to_json()}
    if cfg.resolved["outputs"]["export_generator"]:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        paths = {}
        for side, res in (("forward", res_f), ("dual", res_d)):
            p = cfg.out_dir / f"generator_{side}.txt"
            res.generator.export_triplets(p)
            paths[side] = str(p)
        values["generator_files"] = paths
    return {"values": values, "provenance": {"kind": "exact", "caps": list(cfg.caps)}}


def cmd_simulate(cfg: RunConfig) -> dict:
    sim = cfg.section("simulate")
    k, delta, horizon = cfg.kernel, cfg.delta, float(sim["horizon"])
    trajectories = []
    for i in range(sim["n_trajectories"]):
        tr = simulate_forward(k, delta, [k.group.identity], horizon, task_rng(cfg.seed, f"simulate/trajectory={i}"))
        trajectories.append({
            "initial": k.group.format_set(tr.initial),
            "events": [[t, k.group.format(x), kind] for t, x, kind in tr.events],
            "final": k.group.format_set(tr.final),
            "survived": tr.survived,
        })
    n = cfg.section("mc")["n"]
    stats = None
    if n > 0:
        batch = simulate_batch(k, delta, horizon, n, cfg.seed, path="simulate/batch", threads=cfg.threads)
        sizes = batch.sizes.astype(np.float64)
        alive = (sizes > 0).astype(np.float64)
        stats = {
            "n_runs": batch.n_runs,
            "survival": float(alive.mean()),
            "survival_stderr": float(alive.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
            "mean_size": float(sizes.mean()),
            "mean_size_stderr": float(sizes.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        }
    return {"values": {"trajectories": trajectories, "batch": stats},
            "provenance": {"kind": "mc", "seed": cfg.seed, "horizon": horizon}}


def cmd_growth(cfg: RunConfig) -> dict:
    mc = cfg.section("mc")
    k, delta = cfg.kernel, cfg.delta
    spaces = _Spaces(cfg)
    res_f, _ = spaces.solve(delta, cfg.resolved["tol"])
    gen = res_f.generator
    semigroup = []
    for t in mc["t_grid"]:
        val, trunc = expected_size(gen, spaces.forward, t)
        semigroup.append({"t": t, "expected_size": val, "rate": math.log(val) / t if t > 0 else 0.0,
                          "truncated_mass": trunc})
    values = {"r_spectral": res_f.r_hat, "semigroup": semigroup}
    if mc["n"] > 0:
        values["mc"] = estimate_growth_rate(k, delta, mc["t_grid"], mc["n"], cfg.seed, cfg.threads).to_json()
        gammas = [g for g in cfg.resolved["gammas"] if g > 0]
        if gammas:
            metric = build_metric(k)
            values["r_gamma"] = {repr(g): estimate_r_gamma(k, delta, metric, g, mc["t_grid"], mc["n"], cfg.seed,
                                                           cfg.threads).to_json() for g in gammas}
    return {"values": values, "provenance": {"kind": "exact+mc", "caps": list(cfg.caps), "seed": cfg.seed}}


def cmd_eigenmeasure(cfg: RunConfig) -> dict:
    em = cfg.section("eigenmeasure")
    spaces = _Spaces(cfg)
    res_f, res_d = spaces.solve(cfg.delta, cfg.resolved["tol"])
    nu, nu_d = res_f.eigenmeasure("forward"), res_d.eigenmeasure("dual")

    def doc(m):
        return {"c": m.c, "trunc_fraction": m.trunc, "law": m.law.to_json(), "meta": m.meta}

    exact_tv = quasi_convergence_check(res_f.generator, 0, em["t_grid"], res_f.nu_tilde)
    series = []
    for t, tv_exact in zip(em["t_grid"], exact_tv):
        row = {"t": t, "tv_semigroup": tv_exact}
        if em["survivors"] > 0:
            cl = estimate_conditioned_law(cfg.kernel, cfg.delta, t, em["max_runs"], cfg.seed, cfg.threads,
                                          target_survivors=em["survivors"], max_runs=em["max_runs"],
                                          path="eigenmeasure/conditioned")
            row.update({"tv_mc": cl.law.tv_distance(res_f.nu_tilde), "mc_tv_error": cl.mc_tv_error(),
                        "n_runs": cl.n_runs, "n_survivors": cl.n_survivors})
        series.append(row)
    return {"values": {"nu_circ": doc(nu), "nu_circ_dagger": doc(nu_d), "tv_series": series},
            "provenance": {"kind": "exact+mc", "caps": list(cfg.caps), "seed": cfg.seed}}


def cmd_derivative(cfg: RunConfig) -> dict:
    dv = cfg.section("derivative")
    tol = cfg.resolved["tol"]
    spaces = _Spaces(cfg)
    res_f, res_d = spaces.solve(cfg.delta, tol)
    value = _derivative(res_f, res_d)
    h = dv["fd_h"]
    r_plus = solve_spectrum(build_generator(spaces.forward, cfg.delta + h), tol).r_hat
    r_minus = solve_spectrum(build_generator(spaces.forward, max(cfg.delta - h, 0.0)), tol).r_hat
    fd = -(r_plus - r_minus) / (cfg.delta + h - max(cfg.delta - h, 0.0))
    russo = []
    if dv["russo_n"] > 0:
        for s in dv["russo_s"]:
            est = estimate_russo_integrand(cfg.kernel, cfg.delta, s, dv["russo_t"], dv["russo_n"], cfg.seed,
                                           cfg.threads, path=f"derivative/russo/s={s!r}")
            russo.append({"s": s, "t": dv["russo_t"], **est.to_json()})
    return {"values": {"derivative_formula": value, "derivative_fd": fd, "fd_h": h, "r_hat": res_f.r_hat,
                       "russo": russo},
            "provenance": {"kind": "exact+mc", "caps": list(cfg.caps), "seed": cfg.seed}}


def sweep_rows(cfg: RunConfig) -> list:
    """One row per grid value of delta, with the audit columns filled in."""
    grid = sorted(cfg.resolved["delta_grid"] or [cfg.delta])
    sw = cfg.section("sweep")
    mc = cfg.section("mc")
    tol = cfg.resolved["tol"]
    spaces = _Spaces(cfg)
    rows = []
    for d in grid:
        res_f, res_d = spaces.solve(d, tol)
        h = sw["fd_h"]
        lo = max(d - h, 0.0)
        r_plus = solve_spectrum(build_generator(spaces.forward, d + h), tol).r_hat
        r_minus = solve_spectrum(build_generator(spaces.forward, lo), tol).r_hat
        row = {
            "delta": d,
            "r_spectral": res_f.r_hat,
            "r_mc": "",
            "r_mc_stderr": "",
            "caps_S": cfg.caps[0],
            "caps_D": cfg.caps[1],
            "trunc_mass": res_f.trunc_fraction(),
            "derivative_formula": _derivative(res_f, res_d),
            "derivative_fd": -(r_plus - r_minus) / (d + h - lo),
        }
        if sw["mc"] and mc["n"] > 0:
            est = estimate_growth_rate(cfg.kernel, d, mc["t_grid"], mc["n"], cfg.seed, cfg.threads,
                                       path=f"sweep/delta={d!r}")
            row["r_mc"], row["r_mc_stderr"] = est.r_hat, est.stderr
        rows.append(row)
    atol = sw["audit_tol"]
    total = cfg.kernel.total_rate
    for i, row in enumerate(rows):
        d, r = row["delta"], row["r_spectral"]
        row["bounds_ok"] = bool(-d - atol <= r <= total - d + atol)
        row["monotone_ok"] = bool(i == 0 or r <= rows[i - 1]["r_spectral"] + 2 * atol)
        row["lipschitz_ok"] = all(abs(r - o["r_spectral"]) <= abs(d - o["delta"]) + 2 * atol for o in rows)
        row["derivative_jump"] = (abs(row["derivative_formula"] - rows[i - 1]["derivative_formula"])
                                  if i > 0 else 0.0)
    return rows


def cmd_sweep(cfg: RunConfig) -> dict:
    rows = sweep_rows(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS + AUDIT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    audit = {c: all(r[c] for r in rows) for c in ("bounds_ok", "monotone_ok", "lipschitz_ok")}
    audit["max_derivative_jump"] = max(r["derivative_jump"] for r in rows)
    return {"values": {"rows": rows, "audit": audit, "csv": str(path)},
            "provenance": {"kind": "exact+mc", "caps": list(cfg.caps), "seed": cfg.seed}}


def cmd_delta_c(cfg: RunConfig) -> dict:
    dc = cfg.section("delta_c")
    res = estimate_delta_c(cfg.kernel, dc["method"], dc["bracket"], dc["tol"], dc["t"], dc["n"], cfg.caps,
                           cfg.seed, cfg.threads)
    return {"values": res.to_json(), "provenance": {"kind": dc["method"], "seed": cfg.seed}}


def cmd_check(cfg: RunConfig) -> dict:
    ck = cfg.section("check")
    results = run_checks(cfg.kernel, cfg.delta, cfg.caps, cfg.seed, ck["random_sets"],
                         ck["duality_realizations"], ck["dense_limit"], cfg.resolved["max_states"],
                         cfg.resolved["tol"])
    return {"values": {"checks": [r.to_json() for r in results],
                       "all_passed": all(r.passed for r in results)},
            "provenance": {"kind": "exact+mc", "caps": list(cfg.caps), "seed": cfg.seed}}


HANDLERS = {
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "growth": cmd_growth,
    "eigenmeasure": cmd_eigenmeasure,
    "derivative": cmd_derivative,
    "sweep": cmd_sweep,
    "delta-c": cmd_delta_c,
    "check": cmd_check,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def run(command: str, cfg: RunConfig) -> dict:
    """Execute one command and return its result document."""
    start = time.perf_counter()
    body = HANDLERS[command](cfg)
    doc = {
        "command": command,
        "version": __version__,
        "backend": backend.BACKEND,
        "config": cfg.resolved,
        "values": body["values"],
        "provenance": body["provenance"],
        "wall_clock_s": time.perf_counter() - start,
    }
    return _jsonable(doc)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subcrit-cp", description="Subcritical contact-process numerics.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", default=None, help="output directory (overrides outputs.dir)")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides mc.seed)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (overrides mc.threads)")
    p.add_argument("--export-generator", action="store_true", help="write sparse generator triplet files")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, threads=args.threads, out_dir=args.out)
        if args.export_generator:
            cfg.resolved["outputs"]["export_generator"] = True
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        doc = run(args.command, cfg)
    except (SubcritError, ValueError, ArithmeticError) as exc:
        print(f"computation error in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.command}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(path)
    if args.command == "check":
        for c in doc["values"]["checks"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}")
        if not doc["values"]["all_passed"]:
            return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
