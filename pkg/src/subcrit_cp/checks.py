"""Invariant suite run by the ``check`` command.

Each check returns a :class:`CheckResult`; the suite never stops at the first
failure so the report lists every property.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graphical import dual_set, forward_set, sample_realization
from .kernel import Kernel, build_metric, dual_kernel, e_gamma
from .measures import (HomogeneousMeasure, TildeLaw, cform_constant, growth_derivative, h_eval,
                       intersection_stats, weighted_bracket)
from .quotient import apply_semigroup, build_generator, enumerate_states, singleton_vector
from .rng import task_rng
from .spectral import doob_transform, solve_spectrum


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def _top_law(law: TildeLaw, keep: int = 400) -> TildeLaw:
    """The ``keep`` heaviest classes, renormalized (an exact law in its own right)."""
    order = np.argsort(-law.probs, kind="stable")[:keep]
    order = np.sort(order)
    sub = TildeLaw(law.group, [law.reps[i] for i in order], law.probs[order])
    return sub.normalized()


def _random_sets(group, rng, count: int, radius: int = 3, max_size: int = 5) -> list:
    ball = group.ball(radius)
    out = []
    for _ in range(count):
        size = int(rng.integers(1, max_size + 1))
        idx = rng.choice(len(ball), size=min(size, len(ball)), replace=False)
        out.append(group.config([ball[i] for i in idx]))
    return out


def run_checks(k: Kernel, delta: float, caps, seed: int = 0, random_sets: int = 1000,
               duality_realizations: int = 200, dense_limit: int = 400,
               max_states: int = 2_000_000, tol: float = 1e-13) -> list:
    """Evaluate every module invariant on one instance."""
    group = k.group
    rng = task_rng(seed, "check/random")
    out = []

    # group axioms on random triples from a ball
    ball = group.ball(3)
    bad = 0
    for _ in range(1000):
        x, y, z = (ball[int(i)] for i in rng.integers(len(ball), size=3))
        if group.mul(group.mul(x, y), z) != group.mul(x, group.mul(y, z)):
            bad += 1
        if group.mul(x, group.inv(x)) != group.identity or group.mul(group.identity, x) != x:
            bad += 1
        if group.inv(group.mul(x, y)) != group.mul(group.inv(y), group.inv(x)):
            bad += 1
    out.append(CheckResult("group_axioms", bad == 0, {"violations": bad}))

    kd = dual_kernel(k)
    out.append(CheckResult("dual_involution", dual_kernel(kd) == k and math.isclose(kd.total_rate, k.total_rate),
                           {"total_rate": k.total_rate}))

    # metric axioms on random pairs
    metric = build_metric(k)
    bad = 0
    for _ in range(200):
        i, j, g_, m_ = (ball[int(q)] for q in rng.integers(len(ball), size=4))
        if abs(metric.dist(i, j) - metric.dist(group.mul(g_, i), group.mul(g_, j))) > 1e-12:
            bad += 1
        if metric.dist(i, j) > metric.dist(i, m_) + metric.dist(m_, j) + 1e-12:
            bad += 1
        if (metric.dist(i, j) == 0) != (i == j):
            bad += 1
    out.append(CheckResult("metric_axioms", bad == 0, {"violations": bad}))

    space = enumerate_states(k, caps, max_states)
    space_d = enumerate_states(kd, caps, max_states) if kd != k else space
    gen = build_generator(space, delta)
    gen_d = build_generator(space_d, delta) if kd != k else gen
    rows = float(np.abs(gen.row_residuals()).max())
    scale = float(np.abs(gen.diagonal).max()) or 1.0
    off = gen.offdiag_triplets()
    out.append(CheckResult("generator_rows", rows <= 1e-12 * scale and bool(np.all(off[2] >= 0)),
                           {"max_row_residual": rows, "n_states": space.n}))
    m = space.symmetry_counts()
    sizes = np.array([len(r) for r in space.reps])
    out.append(CheckResult("m_divides_size", bool(np.all(sizes % m == 0))))

    eps = 1e-12
    vec1, died, trunc = apply_semigroup(gen, singleton_vector(space.n), 1.0, eps)
    surviving = float(vec1.sum())
    total = surviving + died + trunc
    out.append(CheckResult("semigroup_mass", abs(total - 1) <= 10 * eps,
                           {"surviving": surviving, "died": died, "truncated": trunc}))

    res = solve_spectrum(gen, tol)
    res_d = solve_spectrum(gen_d, tol) if kd != k else res
    gap = res.residuals["eigenvalue_gap"]
    out.append(CheckResult("left_right_agreement", gap <= 1e-9, {"gap": gap, "r_hat": res.r_hat}))
    lo, hi = -delta, k.total_rate - delta
    # truncation kills mass, which can push r_hat below -delta but never above |a| - delta
    out.append(CheckResult("r_upper_bound", res.r_hat <= hi + 1e-9,
                           {"r_hat": res.r_hat, "bounds": [lo, hi], "above_minus_delta": res.r_hat >= lo - 1e-9}))
    if space.n <= dense_limit:
        ev = np.linalg.eigvals(gen.todense())
        r_dense = float(ev.real.max())
        out.append(CheckResult("dense_eigen_oracle", abs(r_dense - res.r_hat) <= 1e-9,
                               {"r_dense": r_dense, "r_hat": res.r_hat}))

    doob = doob_transform(gen, res.h_tilde, res.r_hat, res.nu_tilde.probs)
    rows_h = float(np.abs(np.asarray(doob.Qh.sum(axis=1)).ravel()).max())
    out.append(CheckResult("doob_conservative", rows_h <= 1e-10, {"max_row_sum": rows_h,
                                                                   "projection": doob.projection_residual}))
    out.append(CheckResult("doob_stationary", doob.stationarity_residual <= 1e-8,
                           {"residual": doob.stationarity_residual}))
    out.append(CheckResult("doob_pip", doob.pip_distance <= 1e-6, {"l1": doob.pip_distance}))

    nu = res.eigenmeasure("forward")
    nu_d = res_d.eigenmeasure("dual")
    nu_s = HomogeneousMeasure(nu.c, _top_law(nu.law), meta=dict(nu.meta))
    nu_ds = HomogeneousMeasure(nu_d.c, _top_law(nu_d.law), meta=dict(nu_d.meta))
    st = intersection_stats(nu_s, nu_ds)
    wb = weighted_bracket(nu_s, nu_ds)
    rel = abs(st.bracket - wb) / max(abs(wb), 1e-300)
    out.append(CheckResult("intersection_weighted_identity", rel <= 1e-12,
                           {"bracket": st.bracket, "weighted": wb, "relative": rel}))
    sym = intersection_stats(nu_ds, nu_s).bracket
    out.append(CheckResult("intersection_symmetry", abs(sym - st.bracket) <= 1e-12 * abs(st.bracket),
                           {"forward_first": st.bracket, "dual_first": sym}))
    d = growth_derivative(nu_s, nu_ds)
    out.append(CheckResult("derivative_range", 0 < d <= 1 + 1e-12, {"value": d}))
    cf = cform_constant(nu_s, nu_s, nu_ds)
    out.append(CheckResult("cform_self", abs(cf - 1) <= 1e-12, {"value": cf}))

    h0 = h_eval(nu_ds, [group.identity])
    bad = 0
    for A in _random_sets(group, rng, random_sets):
        h = h_eval(nu_ds, A)
        if not (nu_ds.c * len(A) * (1 - 1e-12) <= h <= h0 * len(A) * (1 + 1e-12)):
            bad += 1
    out.append(CheckResult("h_sandwich", bad == 0, {"violations": bad, "samples": random_sets}))

    e_bad = 0
    for A in _random_sets(group, rng, 100):
        if e_gamma(metric, 0.0, A) != len(A):
            e_bad += 1
    out.append(CheckResult("e_gamma_zero", e_bad == 0, {"violations": e_bad}))

    bad = 0
    for rep in range(duality_realizations):
        t = float(rng.uniform(0.1, 2.0))
        real = sample_realization(k, delta, (0.0, t), seed=int(rng.integers(2**62)))
        A, B = _random_sets(group, rng, 2, radius=2, max_size=3)
        lhs = bool(set(forward_set(real, A, 0.0, t)) & set(B))
        rhs = bool(set(A) & set(dual_set(real, B, t, t)))
        bad += lhs != rhs
    out.append(CheckResult("pathwise_duality", bad == 0,
                           {"violations": bad, "realizations": duality_realizations}))
    return out
