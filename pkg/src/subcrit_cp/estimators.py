"""Monte Carlo estimators built on the simulators and the graphical representation.

Every estimator takes a master ``seed`` and derives its streams from task
paths, so two calls with the same arguments return identical numbers and
``threads`` never changes a result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketError, EmptyLawError
from .graphical import forward_set, has_pivotal, sample_realization
from .kernel import Kernel, Metric, dual_kernel, e_gamma
from .measures import HomogeneousMeasure, TildeLaw, intersection_stats
from .quotient import apply_semigroup_grid, build_generator, enumerate_states, singleton_vector
from .rng import task_rng
from .simulate import simulate_batch


@dataclass
class MCEstimate:
    """Point estimate with standard error (sample std / sqrt(n))."""

    value: float
    stderr: float
    n: int
    seed: int

    def to_json(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n": self.n, "seed": self.seed}


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


@dataclass
class GrowthEstimate:
    """Per-time estimates of ``(1/t) log E[f(eta_t)]`` and their minimum.

    ``per_t[k]`` is ``None`` when every replicate died out at ``t_grid[k]``;
    such times are listed in ``undefined`` and left out of the minimum.
    """

    t_grid: list
    per_t: list
    means: list
    r_hat: float
    stderr: float
    t_best: float
    undefined: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "t_grid": list(self.t_grid),
            "per_t": [None if e is None else e.to_json() for e in self.per_t],
            "means": [None if m is None else m.to_json() for m in self.means],
            "r_hat": self.r_hat,
            "stderr": self.stderr,
            "t_best": self.t_best,
            "undefined": list(self.undefined),
        }


def _rate_from_samples(values: np.ndarray, t: float, seed: int):
    mean, se = _mean_se(values)
    m_est = MCEstimate(mean, se, int(values.size), seed)
    if mean <= 0:
        return None, m_est
    if t == 0:
        return MCEstimate(0.0, 0.0, int(values.size), seed), m_est
    return MCEstimate(math.log(mean) / t, se / (mean * t), int(values.size), seed), m_est


def _combine(t_grid, per_t, means) -> GrowthEstimate:
    valid = [(e.value, e.stderr, t) for e, t in zip(per_t, t_grid) if e is not None and t > 0]
    undefined = [t for e, t in zip(per_t, t_grid) if e is None]
    if not valid:
        raise EmptyLawError("every replicate died out at every grid time")
    r, se, tb = min(valid)
    return GrowthEstimate(list(t_grid), per_t, means, r, se, tb, undefined)


def estimate_growth_rate(k: Kernel, delta: float, t_grid, n: int, seed: int = 0,
                         threads: int = 1, path: str = "growth") -> GrowthEstimate:
    """``(1/t) log mean |eta_t|`` from ``{0}`` on each grid time, and the minimum.

    Subadditivity makes every grid value an upper bound on ``r`` up to
    sampling error, hence the minimum.  Standard errors use the delta method
    ``se(mean) / (t * mean)``.
    """
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        raise ValueError("t_grid must be nonempty")
    per_t, means = [], []
    for t in t_grid:
        batch = simulate_batch(k, delta, t, n, seed, path=f"{path}/t={t!r}", threads=threads)
        est, m_est = _rate_from_samples(batch.sizes.astype(np.float64), t, seed)
        per_t.append(est)
        means.append(m_est)
    return _combine(t_grid, per_t, means)


def _e_gamma_samples(k: Kernel, delta: float, metric: Metric, gamma: float, t: float, n: int,
                     seed: int, threads: int, path: str) -> np.ndarray:
    batch = simulate_batch(k, delta, t, n, seed, path=path, threads=threads, store_sets=True)
    values = np.zeros(batch.n_runs)
    if gamma == 0:
        values[:] = batch.sizes
        return values
    for run, A in zip(batch.surv_runs, batch.finals):
        values[run] = e_gamma(metric, gamma, A)
    return values


def mean_e_gamma(k: Kernel, delta: float, metric: Metric, gamma: float, t_grid, n: int,
                 seed: int = 0, threads: int = 1, path: str = "e_gamma"):
    """Sample means and standard errors of ``e_gamma(eta_t)`` from ``{0}``."""
    means, ses = [], []
    for t in t_grid:
        if t == 0:
            means.append(1.0)
            ses.append(0.0)
            continue
        vals = _e_gamma_samples(k, delta, metric, gamma, float(t), n, seed, threads,
                                f"{path}/gamma={gamma!r}/t={float(t)!r}")
        m, s = _mean_se(vals)
        means.append(m)
        ses.append(s)
    return means, ses


def estimate_r_gamma(k: Kernel, delta: float, metric: Metric, gamma: float, t_grid, n: int,
                     seed: int = 0, threads: int = 1, path: str = "r_gamma") -> GrowthEstimate:
    """Same scheme as :func:`estimate_growth_rate` with ``e_gamma(eta_t)``.

    With ``gamma = 0`` this is exactly :func:`estimate_growth_rate` (same
    streams when ``path`` matches).
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma == 0:
        return estimate_growth_rate(k, delta, t_grid, n, seed, threads, path)
    t_grid = [float(t) for t in t_grid]
    per_t, means = [], []
    for t in t_grid:
        vals = _e_gamma_samples(k, delta, metric, gamma, t, n, seed, threads, f"{path}/t={t!r}")
        est, m_est = _rate_from_samples(vals, t, seed)
        per_t.append(est)
        means.append(m_est)
    return _combine(t_grid, per_t, means)


@dataclass
class ConditionedLaw:
    """Empirical law of the class of ``eta_t`` given survival."""

    law: TildeLaw
    n_runs: int
    n_survivors: int
    survival: MCEstimate

    def mc_tv_error(self) -> float:
        """Expected TV distance of the empirical law from its mean,
        ``1/2 sum_k sqrt(2 p_k (1 - p_k) / (pi n))``."""
        p = self.law.probs
        n = self.n_survivors
        return 0.5 * float(np.sum(np.sqrt(2 * p * (1 - p) / (math.pi * n))))


def estimate_conditioned_law(k: Kernel, delta: float, t: float, n: int, seed: int = 0,
                             threads: int = 1, target_survivors: int = 0,
                             max_runs: int | None = None, A=None,
                             path: str = "conditioned", dual: bool = False) -> ConditionedLaw:
    """Empirical law of the shift class of ``eta_t`` over surviving replicates.

    Runs ``n`` replicates, or, with ``target_survivors > 0``, runs until that
    many replicates survived (at most ``max_runs``).  ``dual=True`` simulates
    the dual kernel instead.
    """
    kk = dual_kernel(k) if dual else k
    batch = simulate_batch(kk, delta, t, n, seed, path=f"{path}/t={float(t)!r}", A=A,
                           threads=threads, store_sets=True, target_survivors=target_survivors,
                           max_runs=max_runs)
    if batch.n_survivors == 0:
        raise EmptyLawError(f"no replicate survived to t={t} in {batch.n_runs} runs")
    law = TildeLaw.empirical(kk.group, batch.finals)
    alive = (batch.sizes > 0).astype(np.float64)
    m, s = _mean_se(alive)
    return ConditionedLaw(law, batch.n_runs, batch.n_survivors, MCEstimate(m, s, batch.n_runs, seed))


def estimate_russo_integrand(k: Kernel, delta: float, s: float, t: float, n: int, seed: int = 0,
                             threads: int = 1, max_runs: int | None = None,
                             path: str = "russo") -> MCEstimate:
    """Ratio estimator of ``(chi P_s ^ chi P^dag_{t-s})({{0}}) / <<chi P_s ^ chi P^dag_{t-s}>>``.

    Collects ``n`` survivors of the forward process to time ``s`` and ``n``
    survivors of the dual process to time ``t - s``; the survival
    probabilities cancel in the ratio, so both laws enter with ``c = 1``.
    The standard error comes from the first-order projections of the two
    sample averages.
    """
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    cap = max_runs if max_runs is not None else 10_000 * n
    fwd = estimate_conditioned_law(k, delta, s, n, seed, threads, target_survivors=n,
                                   max_runs=cap, path=f"{path}/forward")
    bwd = estimate_conditioned_law(k, delta, t - s, n, seed, threads, target_survivors=n,
                                   max_runs=cap, path=f"{path}/dual", dual=True)
    mu = HomogeneousMeasure(1.0, fwd.law)
    nu = HomogeneousMeasure(1.0, bwd.law)
    st = intersection_stats(mu, nu, method="dual")
    return MCEstimate(st.ratio, st.ratio_se, min(fwd.n_survivors, bwd.n_survivors), seed)


def estimate_pivotal_fraction(k: Kernel, delta: float, s: float, t: float, n: int,
                              seed: int = 0, path: str = "pivotal") -> MCEstimate:
    """Campbell-law frequency of a pivotal point at time ``s``.

    Each replicate samples a graphical realization on ``[0, t]``, reads
    ``eta_t`` from ``{0}``, picks ``iota`` uniformly in ``eta_t`` with weight
    ``|eta_t|`` and tests :func:`has_pivotal`.  The estimate is the weighted
    mean; its standard error is the delta-method error of the ratio of means.
    Intended for small instances (it walks the realization site by site).
    """
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    g = k.group
    pick = task_rng(seed, f"{path}/iota")
    weights = np.zeros(n)
    hits = np.zeros(n)
    for rep in range(n):
        real = sample_realization(k, delta, (0.0, t), seed=_realization_seed(seed, path, rep))
        eta = forward_set(real, [g.identity], 0.0, t)
        if not eta:
            continue
        iota = eta[int(pick.integers(len(eta)))]
        weights[rep] = len(eta)
        hits[rep] = len(eta) * float(has_pivotal(real, iota, s, t))
    wbar = weights.mean()
    if wbar == 0:
        raise EmptyLawError("no replicate survived")
    ratio = float(hits.mean() / wbar)
    resid = (hits - ratio * weights) / wbar
    se = float(resid.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MCEstimate(ratio, se, n, seed)


def _realization_seed(seed: int, path: str, rep: int) -> int:
    return int(task_rng(seed, f"{path}/realization={rep}").integers(2**63))


@dataclass
class DeltaCResult:
    """Bisection interval for the critical recovery rate and its trace."""

    lo: float
    hi: float
    method: str
    trace: list  # (delta, r_hat, stderr)
    monotone: bool
    notes: str = ""

    def to_json(self) -> dict:
        return {"interval": [self.lo, self.hi], "method": self.method,
                "trace": [list(x) for x in self.trace], "monotone": self.monotone,
                "notes": self.notes}


def estimate_delta_c(k: Kernel, method: str = "mc", bracket=(0.1, 2.0), tol: float = 0.05,
                     t: float | None = None, n: int = 4000, caps=(10, 14), seed: int = 0,
                     threads: int = 1) -> DeltaCResult:
    """Bisection on the sign of ``r_hat(delta)``.

    ``r_hat`` is the log-slope ``(log E|eta_t| - log E|eta_{t/2}|) / (t/2)``,
    which removes the subexponential prefactor that biases ``(1/t) log E|eta_t|``
    upward near criticality.  ``method="mc"`` estimates both means from ``n``
    replicates (default ``t = 40``); ``method="spectral"`` reads them off the
    truncated semigroup at ``caps`` (default ``t = 4``, since truncation kills
    growing sets at longer times, so that route is a short-time proxy).
    With the zero kernel ``r = -delta`` and the degenerate interval
    ``[0, 0]`` is returned.
    """
    if not k.offsets:
        return DeltaCResult(0.0, 0.0, method, [], True, "zero kernel: r = -delta < 0 for delta > 0")
    if method == "mc":
        t = 40.0 if t is None else float(t)

        def rate(d):
            est = estimate_growth_rate(k, d, [t / 2, t], n, seed, threads, path=f"delta_c/delta={d!r}")
            (m1, m2) = est.means
            if m2.value <= 0 or m1.value <= 0:
                return -math.inf, 0.0
            r = (math.log(m2.value) - math.log(m1.value)) / (t / 2)
            se = math.hypot(m1.stderr / m1.value, m2.stderr / m2.value) / (t / 2)
            return r, se
        notes = f"MC log-slope of E|eta_t| over [{t / 2}, {t}], n={n}"
    elif method == "spectral":
        t = 4.0 if t is None else float(t)
        space = enumerate_states(k, caps)
        sizes = np.array([len(r) for r in space.reps], dtype=np.float64)

        def rate(d):
            gen = build_generator(space, d)
            (v1, _, _), (v2, _, _) = apply_semigroup_grid(gen, singleton_vector(space.n), [t / 2, t])
            m1, m2 = float(v1 @ sizes), float(v2 @ sizes)
            if m1 <= 0 or m2 <= 0:
                return -math.inf, 0.0
            return (math.log(m2) - math.log(m1)) / (t / 2), 0.0
        notes = (f"truncated semigroup log-slope over [{t / 2}, {t}] at caps {tuple(caps)}; "
                 "short-time proxy biased toward larger delta")
    else:
        raise ValueError(f"unknown method {method!r}")
    lo, hi = float(bracket[0]), float(bracket[1])
    r_lo, se_lo = rate(lo)
    r_hi, se_hi = rate(hi)
    trace = [(lo, r_lo, se_lo), (hi, r_hi, se_hi)]
    if not (r_lo > 0 > r_hi):
        raise BracketError(f"bracket [{lo}, {hi}] does not straddle a sign change "
                           f"(r = {r_lo:.4g}, {r_hi:.4g}); widen it")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        r_mid, se_mid = rate(mid)
        trace.append((mid, r_mid, se_mid))
        if r_mid > 0:
            lo = mid
        else:
            hi = mid
    ordered = sorted(trace)
    monotone = all(b[1] <= a[1] + 3 * math.hypot(a[2], b[2]) for a, b in zip(ordered, ordered[1:]))
    return DeltaCResult(lo, hi, method, trace, monotone, notes)
