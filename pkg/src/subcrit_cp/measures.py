"""Homogeneous locally finite measures in the ``(c, law of Delta)`` form.

A homogeneous measure is stored as ``mu = c * sum_i P[i Delta in .]`` where the
law of the shift class of ``Delta`` is a :class:`TildeLaw`.  With this
representation ``<<mu>> = c`` and every functional used here reduces to finite
sums over classes, because only translates ``i Delta`` with ``i^{-1}`` in
``Delta`` contain the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import backend
from .errors import EmptyLawError, SubcritError
from .groups import Group, ZdGroup
from .kernel import Metric, e_gamma
from .quotient import (SparseGenerator, StateSpace, apply_semigroup, apply_semigroup_grid,
                       canonical_rep, singleton_vector)


@dataclass
class TildeLaw:
    """Law on shift classes: canonical reps with (sub-)probabilities.

    ``n_samples`` is set for empirical laws built from simulated sets.  The
    probabilities sum to one for proper laws; the output of the semigroup is
    a sub-probability whose mass is the survival probability.
    """

    group: Group
    reps: list
    probs: np.ndarray
    n_samples: int | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if len(self.reps) != self.probs.size:
            raise ValueError("reps and probs differ in length")
        if np.any(self.probs < 0):
            raise ValueError("probabilities must be nonnegative")

    @classmethod
    def point(cls, group: Group, A) -> "TildeLaw":
        return cls(group, [canonical_rep(group, A)], np.ones(1))

    @classmethod
    def singleton(cls, group: Group) -> "TildeLaw":
        return cls(group, [(group.identity,)], np.ones(1))

    @classmethod
    def from_vector(cls, space: StateSpace, v: np.ndarray) -> "TildeLaw":
        return cls(space.group, list(space.reps), np.asarray(v, dtype=np.float64).copy())

    @classmethod
    def empirical(cls, group: Group, sets: Sequence) -> "TildeLaw":
        """Empirical law of the classes of the given nonempty sets."""
        if len(sets) == 0:
            raise EmptyLawError("no sets to build an empirical law from")
        counts = {}
        for A in sets:
            rep = canonical_rep(group, A)
            counts[rep] = counts.get(rep, 0) + 1
        n = len(sets)
        reps = sorted(counts, key=lambda r: (len(r), [group.key(x) for x in r]))
        return cls(group, reps, np.array([counts[r] / n for r in reps]), n_samples=n)

    @property
    def mass(self) -> float:
        return float(math.fsum(self.probs))

    def normalized(self) -> "TildeLaw":
        m = self.mass
        if m <= 0:
            raise EmptyLawError("law has zero mass")
        return TildeLaw(self.group, list(self.reps), self.probs / m, self.n_samples)

    def sizes(self) -> np.ndarray:
        return np.array([len(r) for r in self.reps], dtype=np.float64)

    def mean_size(self) -> float:
        return float(self.probs @ self.sizes() / self.mass)

    def as_dict(self) -> dict:
        return {r: float(p) for r, p in zip(self.reps, self.probs)}

    def to_json(self, drop_below: float = 0.0) -> dict:
        return {self.group.format_set(r): float(p) for r, p in zip(self.reps, self.probs) if p > drop_below}

    def tv_distance(self, other: "TildeLaw") -> float:
        a = self.as_dict()
        b = other.as_dict()
        keys = set(a) | set(b)
        return 0.5 * math.fsum(abs(a.get(r, 0.0) - b.get(r, 0.0)) for r in keys)

    def restricted(self, eps: float = 0.0) -> "TildeLaw":
        keep = self.probs > eps
        return TildeLaw(self.group, [r for r, k in zip(self.reps, keep) if k], self.probs[keep],
                        self.n_samples)


@dataclass
class HomogeneousMeasure:
    """``mu = c * sum_i P[i Delta in .]`` with ``Delta`` distributed by ``law``.

    ``trunc`` records mass (relative to ``c``) lost to truncation while this
    measure was produced; ``meta`` carries tags such as ``delta`` and
    ``side`` ("forward" or "dual").
    """

    c: float
    law: TildeLaw
    trunc: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def group(self) -> Group:
        return self.law.group

    def scaled(self, factor: float) -> "HomogeneousMeasure":
        return HomogeneousMeasure(self.c * factor, self.law, self.trunc, dict(self.meta))

    def point_mass(self, A) -> float:
        """``mu({A}) = m(A) * c * law(class of A)``."""
        from .quotient import symmetry_m

        rep = canonical_rep(self.group, A)
        p = self.law.as_dict().get(rep, 0.0)
        return symmetry_m(self.group, rep) * self.c * p


def chi(group: Group, A=None) -> HomogeneousMeasure:
    """Counting measure on translates of ``A`` (default the singleton): c = 1."""
    if A is None:
        return HomogeneousMeasure(1.0, TildeLaw.singleton(group))
    return HomogeneousMeasure(1.0, TildeLaw.point(group, A))


@dataclass
class IntersectionStats:
    """``<<mu ^ nu>>`` and ``(mu ^ nu)({{0}})`` with sampling errors if empirical."""

    bracket: float
    singleton_mass: float
    bracket_se: float = 0.0
    singleton_se: float = 0.0
    ratio_se: float = 0.0
    method: str = "dual"

    @property
    def ratio(self) -> float:
        return self.singleton_mass / self.bracket


def bracket_of(m: HomogeneousMeasure) -> float:
    """``<<mu>>``, which equals ``c`` in the homogeneous representation."""
    return float(m.c)


# ---------------------------------------------------------------------------
# translate counting
# ---------------------------------------------------------------------------

def _hit_structure(group: Group, queries: Sequence, reps: Sequence):
    """Bitsets ``W[k, p]`` of translates ``i`` with ``site_p in i Delta_k``.

    ``queries`` are finite sets; their union gives the sites ``p``.  Returns
    ``(set_ptr, set_idx, W)`` in the layout expected by ``hit_counts``.
    """
    sites = {}
    set_ptr = [0]
    set_idx = []
    for A in queries:
        for a in A:
            p = sites.setdefault(a, len(sites))
            set_idx.append(p)
        set_ptr.append(len(set_idx))
    P = len(sites)
    K = len(reps)
    site_list = list(sites)
    if isinstance(group, ZdGroup):
        dim = group.dim
        pts = np.array(site_list, dtype=np.int64).reshape(P, dim)
        flat = [d for r in reps for d in r]
        cls = np.repeat(np.arange(K), [len(r) for r in reps])
        D = np.array(flat, dtype=np.int64).reshape(len(flat), dim)
        diff = pts[:, None, :] - D[None, :, :]  # (P, N, dim): translates a - d
        lo = diff.min(axis=(0, 1)) if diff.size else np.zeros(dim, np.int64)
        span = (diff.max(axis=(0, 1)) - lo + 1) if diff.size else np.ones(dim, np.int64)
        lin = np.zeros(diff.shape[:2], dtype=np.int64)
        for c in range(dim):
            lin = lin * span[c] + (diff[:, :, c] - lo[c])
        uniq, inv = np.unique(lin, return_inverse=True)
        inv = inv.reshape(lin.shape)
        nw = max(1, -(-uniq.size // 64))
        W = np.zeros((K, P, nw), dtype=np.uint64)
        word = inv // 64
        bit = np.left_shift(np.uint64(1), (inv % 64).astype(np.uint64))
        kk = np.broadcast_to(cls[None, :], inv.shape)
        pp = np.broadcast_to(np.arange(P)[:, None], inv.shape)
        np.bitwise_or.at(W, (kk.ravel(), pp.ravel(), word.ravel()), bit.ravel())
    else:
        universe = {}
        entries = []
        for p, a in enumerate(site_list):
            for k, r in enumerate(reps):
                for d in r:
                    i = group.mul(a, group.inv(d))
                    u = universe.setdefault(i, len(universe))
                    entries.append((k, p, u))
        nw = max(1, -(-len(universe) // 64))
        W = np.zeros((K, P, nw), dtype=np.uint64)
        if entries:
            e = np.array(entries, dtype=np.int64)
            bit = np.left_shift(np.uint64(1), (e[:, 2] % 64).astype(np.uint64))
            np.bitwise_or.at(W, (e[:, 0], e[:, 1], e[:, 2] // 64), bit)
    return (np.asarray(set_ptr, dtype=np.int64), np.asarray(set_idx, dtype=np.int64),
            np.ascontiguousarray(W))


def hit_counts(group: Group, queries: Sequence, reps: Sequence, weights) -> tuple[np.ndarray, np.ndarray]:
    """For each query ``A``: ``sum_k w_k |A Delta_k^{-1}|`` and the number of
    translates meeting ``A`` in exactly one site, weighted the same way."""
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if len(queries) == 0:
        return np.zeros(0), np.zeros(0)
    if len(reps) == 0:
        return np.zeros(len(queries)), np.zeros(len(queries))
    ptr, idx, W = _hit_structure(group, queries, reps)
    return backend.get("hit_counts")(ptr, idx, W, weights)


def h_eval(m: HomogeneousMeasure, A) -> float:
    """``h_mu(A) = c * sum_classes law * |{a d^{-1} : a in A, d in rep}|`` (0 for empty A)."""
    A = list(A)
    if not A:
        return 0.0
    g = m.group
    total = 0.0
    for rep, p in zip(m.law.reps, m.law.probs):
        if p == 0:
            continue
        inv = [g.inv(d) for d in rep]
        total += p * len({g.mul(a, di) for a in A for di in inv})
    return m.c * total


def h_eval_many(m: HomogeneousMeasure, sets: Sequence) -> np.ndarray:
    """Vectorized :func:`h_eval` over many sets (bitset kernel)."""
    keep = m.law.probs > 0
    reps = [r for r, k in zip(m.law.reps, keep) if k]
    h, _ = hit_counts(m.group, list(sets), reps, m.law.probs[keep])
    return m.c * h


# ---------------------------------------------------------------------------
# intersection functionals
# ---------------------------------------------------------------------------

def _pair_sums_direct(group: Group, D1, D2):
    """Literal double sum over translates containing the origin."""
    br = 0.0
    sg = 0
    t1 = [frozenset(group.translate(group.inv(d), D1)) for d in D1]
    t2 = [frozenset(group.translate(group.inv(d), D2)) for d in D2]
    for X in t1:
        for Y in t2:
            inter = X & Y
            br += 1.0 / len(inter)  # origin is in both
            if len(inter) == 1:
                sg += 1
    return br, float(sg)


def intersection_stats(mu: HomogeneousMeasure, nu: HomogeneousMeasure, method: str = "auto") -> IntersectionStats:
    """Bracket and singleton mass of the intersection measure ``mu ^ nu``.

    ``method="direct"`` evaluates the defining double sum over class pairs and
    the translates ``i`` with ``i^{-1}`` in ``Delta``, ``j^{-1}`` in ``Delta'``.
    ``method="dual"`` uses the equivalent single sum over translates meeting
    ``Delta``: ``<<mu ^ nu>> = c_mu E[h_nu(Delta)]`` and
    ``(mu ^ nu)({{0}}) = c_mu c_nu E[#{i : |Delta cap i Delta'| = 1}]``.
    ``auto`` picks ``direct`` for small laws.  Sampling errors are attached
    when either law is empirical.
    """
    g = mu.group
    lm = mu.law.restricted()
    ln = nu.law.restricted()
    if method == "auto":
        cost = sum(len(r) ** 2 for r in lm.reps) * sum(len(r) ** 2 for r in ln.reps)
        method = "direct" if cost <= 20000 else "dual"
    cc = mu.c * nu.c
    if method == "direct":
        br = 0.0
        sg = 0.0
        rows_b = np.zeros(len(lm.reps))
        rows_s = np.zeros(len(lm.reps))
        cols_b = np.zeros(len(ln.reps))
        cols_s = np.zeros(len(ln.reps))
        for a, (D1, p1) in enumerate(zip(lm.reps, lm.probs)):
            for b, (D2, p2) in enumerate(zip(ln.reps, ln.probs)):
                x, y = _pair_sums_direct(g, D1, D2)
                rows_b[a] += p2 * x
                rows_s[a] += p2 * y
                cols_b[b] += p1 * x
                cols_s[b] += p1 * y
        br = float(lm.probs @ rows_b)
        sg = float(lm.probs @ rows_s)
    elif method == "dual":
        rows_b, rows_s = hit_counts(g, lm.reps, ln.reps, ln.probs)
        br = float(lm.probs @ rows_b)
        sg = float(lm.probs @ rows_s)
        if ln.n_samples:
            cols_b, cols_s = hit_counts(g, ln.reps, lm.reps, lm.probs)
        else:
            cols_b = cols_s = None
    else:
        raise ValueError(f"unknown method {method!r}")
    stats = IntersectionStats(cc * br, cc * sg, method=method)
    # sampling errors from the first-order (Hoeffding) projections
    var_b = var_s = var_r = 0.0
    ratio = sg / br if br > 0 else 0.0
    for law, fb, fs in ((lm, rows_b, rows_s), (ln, cols_b, cols_s)):
        if not law.n_samples or fb is None:
            continue
        p = law.probs
        n = law.n_samples
        for f, acc in ((fb, "b"), (fs, "s"), ((fs - ratio * fb) / br if br > 0 else fs, "r")):
            mean = float(p @ f)
            var = float(p @ (f - mean) ** 2) / n
            if acc == "b":
                var_b += var
            elif acc == "s":
                var_s += var
            else:
                var_r += var
    stats.bracket_se = cc * math.sqrt(var_b)
    stats.singleton_se = cc * math.sqrt(var_s)
    stats.ratio_se = math.sqrt(var_r)
    return stats


def weighted_bracket(mu: HomogeneousMeasure, nu: HomogeneousMeasure) -> float:
    """``<<h_nu mu>> = c_mu E_mu[h_nu(Delta)]`` evaluated with :func:`h_eval`."""
    lm = mu.law.restricted()
    return mu.c * math.fsum(p * h_eval(nu, D) for D, p in zip(lm.reps, lm.probs))


# ---------------------------------------------------------------------------
# time evolution and duality
# ---------------------------------------------------------------------------

def evolve_measure(m: HomogeneousMeasure, g: SparseGenerator, space: StateSpace | None = None,
                   t: float = 0.0, eps: float = 1e-13) -> HomogeneousMeasure:
    """``mu P_t`` in homogeneous form: ``(c * surviving, renormalized law)``.

    The mass killed by truncation (relative to ``c``) is added to ``trunc``.
    """
    if t == 0:
        return HomogeneousMeasure(m.c, m.law, m.trunc, dict(m.meta))
    if space is not None and g.space is None:
        g.space = space
    law_t, died, trunc = apply_semigroup(g, m.law.normalized(), t, eps)
    surv = law_t.mass
    if surv <= 0:
        raise EmptyLawError("all mass was killed")
    meta = dict(m.meta)
    meta["t"] = meta.get("t", 0.0) + t
    return HomogeneousMeasure(m.c * surv, law_t.normalized().restricted(), m.trunc + trunc, meta)


@dataclass
class DualityResidual:
    residual: float
    lhs: float
    rhs: float
    trunc_bound: float


def duality_residual(mu: HomogeneousMeasure, nu: HomogeneousMeasure, g_fwd: SparseGenerator,
                     g_dual: SparseGenerator, spaces=None, t: float = 0.0,
                     eps: float = 1e-13) -> DualityResidual:
    """``|<<mu P_t ^ nu>> - <<mu ^ nu P^dagger_t>>|`` with a truncation scale.

    ``trunc_bound`` is the bracket that the truncated mass would carry if it
    had stayed inside the caps: ``c * trunc * S * h({0})`` of the opposite
    measure, summed over both sides.
    """
    if t == 0:
        b = intersection_stats(mu, nu).bracket
        return DualityResidual(0.0, b, b, 0.0)
    sf = spaces[0] if spaces else None
    sd = spaces[1] if spaces else None
    mu_t = evolve_measure(mu, g_fwd, sf, t, eps)
    nu_t = evolve_measure(nu, g_dual, sd, t, eps)
    lhs = intersection_stats(mu_t, nu).bracket
    rhs = intersection_stats(mu, nu_t).bracket
    S_f = g_fwd.space.caps[0] if g_fwd.space is not None else 1
    S_d = g_dual.space.caps[0] if g_dual.space is not None else 1
    origin = [mu.group.identity]
    bound = (mu.c * (mu_t.trunc - mu.trunc) * S_f * h_eval(nu, origin)
             + nu.c * (nu_t.trunc - nu.trunc) * S_d * h_eval(mu, origin))
    return DualityResidual(abs(lhs - rhs), lhs, rhs, bound + 10 * eps * (abs(lhs) + abs(rhs)))


def cform_constant(mu: HomogeneousMeasure, nu_circ: HomogeneousMeasure,
                   nu_circ_dagger: HomogeneousMeasure) -> float:
    """``<<mu ^ nu_dag>> / <<nu ^ nu_dag>>``."""
    den = intersection_stats(nu_circ, nu_circ_dagger).bracket
    if den <= 0:
        raise SubcritError("zero denominator in the c constant")
    return intersection_stats(mu, nu_circ_dagger).bracket / den


def growth_derivative(nu_circ: HomogeneousMeasure, nu_circ_dagger: HomogeneousMeasure,
                      method: str = "auto") -> float:
    """``(nu ^ nu_dag)({{0}}) / <<nu ^ nu_dag>>``, the value of ``-dr/d delta``."""
    d1 = nu_circ.meta.get("delta")
    d2 = nu_circ_dagger.meta.get("delta")
    if d1 is not None and d2 is not None and abs(d1 - d2) > 1e-12:
        raise ValueError(f"mismatched delta tags {d1} and {d2}")
    st = intersection_stats(nu_circ, nu_circ_dagger, method)
    return st.ratio


# ---------------------------------------------------------------------------
# tightness diagnostic
# ---------------------------------------------------------------------------

@dataclass
class TightnessResult:
    lhs: float
    rhs: float
    rhs_se: float
    holds: bool
    t_grid: list
    means: list


class DivergentIntegralError(SubcritError):
    """The tightness integrand does not decay over the time grid."""


def loglinear_integral(t, f, tail: bool = True):
    """Integral of the piecewise exponential interpolant of positive ``f``.

    Exact for ``f(t) = C e^{-kt}``.  The tail beyond the last node is the
    exponential ``C e^{-kappa t}`` fitted by least squares to ``log f`` on the
    second half of the grid (at least two nodes), which keeps sampling noise
    in the last few nodes from dominating the tail.

    Raises
    ------
    DivergentIntegralError
        If the fitted tail rate is not positive.
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    total = 0.0
    for k in range(len(t) - 1):
        h = t[k + 1] - t[k]
        a, b = f[k], f[k + 1]
        if a <= 0 or b <= 0:
            total += 0.5 * h * (a + b)
        elif abs(a - b) <= 1e-14 * max(a, b):
            total += h * a
        else:
            total += h * (b - a) / math.log(b / a)
    if tail and f[-1] > 0:
        half = t >= 0.5 * (t[0] + t[-1])
        sel = half & (f > 0)
        if sel.sum() < 2:
            sel = np.zeros_like(half)
            sel[-2:] = True
        if np.any(f[sel] <= 0):
            raise DivergentIntegralError("integrand vanishes inside the tail window")
        slope, icpt = np.polyfit(t[sel], np.log(f[sel]), 1)
        kappa = -slope
        if kappa <= 0:
            raise DivergentIntegralError("integrand does not decay at the end of the grid")
        total += math.exp(icpt + slope * t[-1]) / kappa
    return total


def tightness_lhs(nu_circ: HomogeneousMeasure, metric: Metric, gamma: float) -> float:
    """``int nu(dA) 1{0 in A} e_gamma(A) = c E[sum_{d in Delta} e_gamma(d^{-1} Delta)]``."""
    g = nu_circ.group
    law = nu_circ.law.restricted()
    total = 0.0
    for D, p in zip(law.reps, law.probs):
        s = 0.0
        for d in D:
            di = g.inv(d)
            s += e_gamma(metric, gamma, [g.mul(di, x) for x in D])
        total += p * s
    return nu_circ.c * total


def tightness_check(nu_circ: HomogeneousMeasure, metric: Metric, gamma: float, r_hat: float,
                    mc_params: dict) -> TightnessResult:
    """Compare both sides of the tightness estimate.

    ``mc_params`` must provide ``t_grid``, ``kernel`` and ``delta``.  When
    ``gamma == 0`` or the kernel is zero, ``E[e_gamma(eta_t)]`` is taken from
    the truncated semigroup (``space`` or ``caps`` in ``mc_params``), since it
    then only depends on the class of ``eta_t``; otherwise it is estimated by
    simulation with ``n``, ``seed`` and ``threads``.  A callable ``mean_fn(t_grid)
    -> (means, ses)`` overrides both.
    """
    lhs = tightness_lhs(nu_circ, metric, gamma)
    t_grid = list(mc_params["t_grid"])
    if t_grid[0] != 0:
        t_grid = [0.0] + t_grid
    k = mc_params["kernel"]
    delta = float(mc_params["delta"])
    mean_fn: Callable | None = mc_params.get("mean_fn")
    if mean_fn is not None:
        means, ses = mean_fn(t_grid)
    elif gamma == 0 or not k.offsets:
        from .quotient import build_generator, enumerate_states

        space = mc_params.get("space") or enumerate_states(k, mc_params.get("caps", (1, 0)))
        gen = build_generator(space, delta)
        weights = np.array([e_gamma(metric, gamma, r) for r in space.reps]) if gamma == 0 else np.ones(space.n)
        res = apply_semigroup_grid(gen, singleton_vector(space.n), t_grid)
        means = [float(v @ weights) for v, _, _ in res]
        ses = [0.0] * len(t_grid)
    else:
        from .estimators import mean_e_gamma

        means, ses = mean_e_gamma(k, delta, metric, gamma, t_grid, int(mc_params.get("n", 20000)),
                                  int(mc_params.get("seed", 0)), int(mc_params.get("threads", 1)))
    t_arr = np.asarray(t_grid)
    m_arr = np.asarray(means)
    f = np.exp(-r_hat * t_arr) * m_arr ** 2
    rate = float(k.total_rate + delta)
    rhs = rate * loglinear_integral(t_arr, f)
    # linearized error: d f_k = 2 f_k se_k / m_k, spread with trapezoid weights
    w = np.zeros_like(t_arr)
    dt = np.diff(t_arr)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    se_arr = np.asarray(ses)
    rel = np.divide(2 * se_arr, m_arr, out=np.zeros_like(m_arr), where=m_arr > 0)
    rhs_se = rate * float(np.sqrt(np.sum((w * f * rel) ** 2)))
    holds = bool(lhs <= rhs * (1 + 1e-12))
    return TightnessResult(float(lhs), float(rhs), rhs_se, holds, t_grid, [float(x) for x in means])
