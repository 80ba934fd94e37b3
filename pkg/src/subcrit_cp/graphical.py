"""Graphical representation: lazily sampled Poisson marks and arrows, and
forward / backward open-path reachability on a shared realization."""
from __future__ import annotations

import heapq
import threading
from dataclasses import dataclass, field

import numpy as np

from .kernel import Kernel
from .rng import site_rng


@dataclass
class SiteEvents:
    """Events owned by one site inside the realization window.

    ``rec_times`` are the recovery marks that are active at the realization's
    recovery rate; ``arrows[k]`` are the times of arrows ``x -> x * offsets[k]``.
    """

    rec_times: np.ndarray
    arrows: list


class GraphicalRealization:
    """A realization of the graphical representation on ``[t0, t1]``.

    Per-site streams are generated on first use from a Philox stream keyed by
    ``(seed, site)`` only, so the realization is a deterministic function of
    the seed regardless of query order.  Recovery marks are drawn at intensity
    ``delta_max`` with independent uniform levels; a mark with level ``u`` is
    active when ``u * delta_max < delta``.  Realizations with the same seed and
    ``delta_max`` are therefore monotonically coupled in ``delta``.
    """

    def __init__(self, kernel: Kernel, delta: float, window=(0.0, 1.0), seed: int = 0,
                 delta_max: float | None = None):
        t0, t1 = float(window[0]), float(window[1])
        if t1 < t0:
            raise ValueError("window must satisfy t0 <= t1")
        if delta < 0:
            raise ValueError("delta must be >= 0")
        self.kernel = kernel
        self.group = kernel.group
        self.delta = float(delta)
        self.delta_max = float(delta if delta_max is None else delta_max)
        if self.delta_max < self.delta:
            raise ValueError("delta_max must be >= delta")
        self.window = (t0, t1)
        self.seed = int(seed)
        self._cache = {}
        self._fixed = None
        self._lock = threading.Lock()

    @classmethod
    def from_events(cls, kernel: Kernel, window, marks: dict, arrows: dict) -> "GraphicalRealization":
        """Realization with explicitly given events (every other site is empty).

        ``marks`` maps site -> recovery times; ``arrows`` maps
        ``(site, offset)`` -> arrow times.  Offsets must be in the kernel support.
        """
        g = cls(kernel, 0.0, window, seed=0)
        index = {o: n for n, o in enumerate(kernel.offsets)}
        fixed = {}
        sites = set(marks) | {s for s, _ in arrows}
        for x in sites:
            arr = [np.empty(0) for _ in kernel.offsets]
            for (s, o), times in arrows.items():
                if s == x:
                    arr[index[o]] = np.sort(np.asarray(times, dtype=float))
            fixed[x] = SiteEvents(np.sort(np.asarray(marks.get(x, ()), dtype=float)), arr)
        g._fixed = fixed
        return g

    def with_delta(self, delta: float) -> "GraphicalRealization":
        """Same underlying Poisson streams, thinned to recovery rate ``delta``."""
        return GraphicalRealization(self.kernel, delta, self.window, self.seed, self.delta_max)

    def _generate(self, x) -> SiteEvents:
        t0, t1 = self.window
        span = t1 - t0
        rng = site_rng(self.seed, self.group.stream_key(x))
        n_rec = rng.poisson(self.delta_max * span)
        times = t0 + rng.random(n_rec) * span
        levels = rng.random(n_rec)
        order = np.argsort(times)
        times, levels = times[order], levels[order]
        active = times[levels * self.delta_max < self.delta] if self.delta_max > 0 else times[:0]
        arrows = []
        for rate in self.kernel.rates:
            n_arr = rng.poisson(rate * span)
            arrows.append(np.sort(t0 + rng.random(n_arr) * span))
        return SiteEvents(active, arrows)

    def events(self, x) -> SiteEvents:
        ev = self._cache.get(x)
        if ev is not None:
            return ev
        if self._fixed is not None:
            ev = self._fixed.get(x)
            if ev is None:
                ev = SiteEvents(np.empty(0), [np.empty(0) for _ in self.kernel.offsets])
        else:
            ev = self._generate(x)
        with self._lock:
            return self._cache.setdefault(x, ev)

    def materialized_sites(self) -> list:
        return list(self._cache)

    def _check(self, lo, hi):
        t0, t1 = self.window
        if lo < t0 - 1e-12 or hi > t1 + 1e-12 or hi < lo:
            raise ValueError(f"interval [{lo}, {hi}] not inside window [{t0}, {t1}]")


def sample_realization(k: Kernel, delta: float, window=(0.0, 1.0), seed: int = 0,
                       delta_max: float | None = None) -> GraphicalRealization:
    return GraphicalRealization(k, delta, window, seed, delta_max)


def _between(times: np.ndarray, lo: float, hi: float, lo_open=True, hi_open=False) -> np.ndarray:
    a = np.searchsorted(times, lo, side="right" if lo_open else "left")
    b = np.searchsorted(times, hi, side="left" if hi_open else "right")
    return times[a:b]


def forward_set(g: GraphicalRealization, A, s: float, t: float) -> tuple:
    """Sites ``j`` with an open path from ``(i, s)`` to ``(j, s + t)``, ``i`` in ``A``."""
    end = s + t
    g._check(s, end)
    group = g.group
    offsets = g.kernel.offsets
    infected = set(A)
    epoch = {}
    heap = []
    seq = 0

    def push(x, after):
        nonlocal seq
        ev = g.events(x)
        e = epoch[x]
        for tau in _between(ev.rec_times, after, end):
            heapq.heappush(heap, (float(tau), seq, 0, x, e, -1))
            seq += 1
        for k, times in enumerate(ev.arrows):
            for tau in _between(times, after, end):
                heapq.heappush(heap, (float(tau), seq, 1, x, e, k))
                seq += 1

    for x in infected:
        epoch[x] = 0
    for x in list(infected):
        push(x, s)
    while heap:
        tau, _, kind, x, e, k = heapq.heappop(heap)
        if epoch.get(x) != e or x not in infected:
            continue
        if kind == 0:
            infected.discard(x)
            epoch[x] = e + 1
        else:
            y = group.mul(x, offsets[k])
            if y not in infected:
                infected.add(y)
                epoch[y] = epoch.get(y, -1) + 1
                push(y, tau)
    return group.config(infected)


def dual_set(g: GraphicalRealization, B, s: float, t: float) -> tuple:
    """Sites ``j`` with an open path from ``(j, s - t)`` to ``(i, s)``, ``i`` in ``B``."""
    start = s - t
    g._check(start, s)
    group = g.group
    offsets = g.kernel.offsets
    inv_offsets = [group.inv(o) for o in offsets]
    current = set(B)
    epoch = {}
    heap = []
    seq = 0

    def push(j, before):
        # events relevant to j while it is in the backward set, earlier than ``before``
        nonlocal seq
        e = epoch[j]
        ev = g.events(j)
        for tau in _between(ev.rec_times, start, before, lo_open=False, hi_open=True):
            heapq.heappush(heap, (-float(tau), seq, 0, j, e, None))
            seq += 1
        for k, oinv in enumerate(inv_offsets):
            src = group.mul(j, oinv)
            for tau in _between(g.events(src).arrows[k], start, before, lo_open=False, hi_open=True):
                heapq.heappush(heap, (-float(tau), seq, 1, j, e, src))
                seq += 1

    for j in current:
        epoch[j] = 0
    for j in list(current):
        push(j, s)
    while heap:
        neg_tau, _, kind, j, e, src = heapq.heappop(heap)
        if epoch.get(j) != e or j not in current:
            continue
        if kind == 0:
            current.discard(j)
            epoch[j] = e + 1
        elif src not in current:
            current.add(src)
            epoch[src] = epoch.get(src, -1) + 1
            push(src, -neg_tau)
    return group.config(current)


def has_pivotal(g: GraphicalRealization, iota, s: float, t: float, origin=None) -> bool:
    """Whether some ``(j, s)`` lies on every open path from ``(0, 0)`` to ``(iota, t)``.

    The sites at time ``s`` lying on an open path between the two endpoints
    are exactly ``forward_set({0}, 0, s)`` intersected with
    ``dual_set({iota}, t, t - s)``; a pivotal site exists iff this set has a
    single element.  Assumes ``(0, 0)`` is connected to ``(iota, t)``.
    """
    o = g.group.identity if origin is None else origin
    fwd = forward_set(g, [o], 0.0, s)
    if not fwd:
        return False
    bwd = dual_set(g, [iota], t, t - s)
    return len(set(fwd) & set(bwd)) == 1
