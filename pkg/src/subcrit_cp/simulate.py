"""Event-driven continuous-time simulation of the contact process.

All simulators share one draw protocol per event, which is what makes the
compiled and Python backends agree replicate by replicate:

1. ``u1`` gives the holding time ``-log1p(-u1) / (|A| (delta + |a|))``;
   the run stops when it passes the horizon.
2. ``u2`` picks the acting site ``A[int(u2 |A|)]`` from the site list.
3. ``u3 (delta + |a|) < delta`` is a recovery (swap-with-last removal);
   otherwise the offset is the first one whose cumulative rate exceeds
   ``u3 (delta + |a|) - delta``.  Infections of occupied sites are void.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .groups import ZdGroup
from .kernel import Kernel
from .rng import task_rng

CHUNK = 4096
_BIAS = 1 << 20
_BITS = 21


@dataclass
class Trajectory:
    """One simulated path: initial set, ordered events and final set."""

    initial: tuple
    events: list  # (time, site, "infect" | "recover")
    final: tuple
    horizon: float

    @property
    def survived(self) -> bool:
        return len(self.final) > 0


@dataclass
class BatchResult:
    """Final states of a batch of independent replicates.

    ``sizes`` covers every executed replicate; ``finals`` holds the final
    sets of the surviving replicates (in run order) when requested.
    """

    sizes: np.ndarray
    finals: list = field(default_factory=list)
    surv_runs: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @property
    def n_runs(self) -> int:
        return int(self.sizes.size)

    @property
    def n_survivors(self) -> int:
        return int(np.count_nonzero(self.sizes))


def default_threads() -> int:
    return max(1, os.cpu_count() or 1)


def _packable(k: Kernel) -> bool:
    g = k.group
    return isinstance(g, ZdGroup) and g.dim <= 3


def pack(points, dim: int) -> np.ndarray:
    """Map Z^d points (|coordinates| < 2^20) to int64 keys additively."""
    arr = np.asarray(points, dtype=np.int64).reshape(-1, dim)
    if arr.size and np.abs(arr).max() >= _BIAS:
        raise OverflowError("coordinate too large to pack")
    out = np.zeros(arr.shape[0], dtype=np.int64)
    for c in range(dim):
        out += (arr[:, c] + _BIAS) << (_BITS * c)
    return out


def pack_offsets(offsets, dim: int) -> np.ndarray:
    arr = np.asarray(offsets, dtype=np.int64).reshape(-1, dim)
    out = np.zeros(arr.shape[0], dtype=np.int64)
    for c in range(dim):
        out += arr[:, c] << (_BITS * c)
    return out


def unpack(keys, dim: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty((keys.size, dim), dtype=np.int64)
    mask = (1 << _BITS) - 1
    for c in range(dim):
        out[:, c] = ((keys >> (_BITS * c)) & mask) - _BIAS
    return out


def simulate_forward(k: Kernel, delta: float, A, horizon: float, rng: np.random.Generator) -> Trajectory:
    """Exact event-driven simulation from ``A`` up to ``horizon``, recording events."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    g = k.group
    sites = list(g.config(A))
    initial = tuple(sites)
    members = set(sites)
    offsets = k.offsets
    cum = np.cumsum(k.rates).tolist() if k.rates else []
    n_off = len(offsets)
    per_site = delta + (cum[-1] if cum else 0.0)
    events = []
    t = 0.0
    size = len(sites)
    while size > 0:
        t += -math.log1p(-rng.random()) / (size * per_site)
        if t > horizon:
            break
        idx = int(rng.random() * size)
        if idx >= size:
            idx = size - 1
        x = rng.random() * per_site
        if x < delta:
            gone = sites[idx]
            size -= 1
            sites[idx] = sites[size]
            sites.pop()
            members.discard(gone)
            events.append((t, gone, "recover"))
            continue
        x -= delta
        j = 0
        while j < n_off - 1 and cum[j] <= x:
            j += 1
        tgt = g.mul(sites[idx], offsets[j])
        if tgt not in members:
            sites.append(tgt)
            members.add(tgt)
            size += 1
            events.append((t, tgt, "infect"))
    return Trajectory(initial, events, g.config(sites), float(horizon))


def _generic_batch(k: Kernel, delta, init, horizon, n_runs, bitgen, store_sets, target):
    rng = np.random.Generator(bitgen)
    sizes, finals, surv = [], [], []
    n_surv = 0
    for run in range(n_runs):
        tr = simulate_forward(k, delta, init, horizon, rng)
        sizes.append(len(tr.final))
        if tr.final:
            n_surv += 1
            if store_sets:
                finals.append(tr.final)
                surv.append(run)
        if target > 0 and n_surv >= target:
            break
    return np.asarray(sizes, dtype=np.int64), finals, np.asarray(surv, dtype=np.int64)


def _packed_batch(k: Kernel, delta, init, horizon, n_runs, bitgen, store_sets, target):
    dim = k.group.dim
    fn = backend.get("simulate_batch_packed")
    cum = np.cumsum(np.asarray(k.rates, dtype=np.float64)) if k.rates else np.zeros(0)
    deltas = pack_offsets(k.offsets, dim) if k.offsets else np.zeros(0, np.int64)
    init_keys = pack(init, dim) if init else np.zeros(0, np.int64)
    sizes, surv, ptr, keys = fn(bitgen, init_keys, deltas, cum, float(delta), float(horizon),
                                int(n_runs), bool(store_sets), int(target))
    finals = []
    if store_sets and surv.size:
        pts = unpack(keys, dim)
        for q in range(surv.size):
            block = pts[ptr[q]:ptr[q + 1]]
            finals.append(tuple(sorted(map(tuple, block.tolist()))))
    return sizes, finals, surv


def _run_chunk(k, delta, init, horizon, n_runs, seed, path, chunk, store_sets, target):
    bitgen = task_rng(seed, f"{path}/chunk={chunk}").bit_generator
    if _packable(k):
        return _packed_batch(k, delta, init, horizon, n_runs, bitgen, store_sets, target)
    return _generic_batch(k, delta, init, horizon, n_runs, bitgen, store_sets, target)


def simulate_batch(k: Kernel, delta: float, horizon: float, n: int, seed: int = 0,
                   path: str = "batch", A=None, threads: int = 1, store_sets: bool = False,
                   target_survivors: int = 0, max_runs: int | None = None) -> BatchResult:
    """Run ``n`` independent replicates from ``A`` (default ``{0}``).

    Replicates are split into fixed chunks of ``CHUNK`` runs; chunk ``c`` uses
    the stream ``(seed, path/chunk=c)``, so results do not depend on
    ``threads``.  With ``target_survivors > 0`` the batch stops once that many
    replicates survived (at most ``max_runs`` replicates, default ``n``);
    the survivors returned are the first ones in run order.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    g = k.group
    init = g.config([g.identity] if A is None else A)
    total = int(n if max_runs is None else max_runs)
    n_chunks = max(1, -(-total // CHUNK))
    sizes_parts, finals, surv_parts = [], [], []
    n_surv = 0
    threads = max(1, int(threads))
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        c = 0
        while c < n_chunks:
            wave = range(c, min(n_chunks, c + threads))
            args = [(k, delta, init, horizon, min(CHUNK, total - cc * CHUNK), seed, path, cc,
                     store_sets, 0) for cc in wave]
            if pool is None:
                results = [_run_chunk(*a) for a in args]
            else:
                results = list(pool.map(lambda a: _run_chunk(*a), args))
            for cc, (sz, fin, sv) in zip(wave, results):
                if target_survivors > 0 and n_surv >= target_survivors:
                    break
                base = cc * CHUNK
                if target_survivors > 0 and n_surv + np.count_nonzero(sz) >= target_survivors:
                    need = target_survivors - n_surv
                    alive = np.flatnonzero(sz)
                    last = alive[need - 1]
                    sz = sz[:last + 1]
                    if store_sets:
                        fin = fin[:need]
                        sv = sv[:need]
                sizes_parts.append(sz)
                n_surv += int(np.count_nonzero(sz))
                if store_sets:
                    finals.extend(fin)
                    surv_parts.append(sv + base)
            if target_survivors > 0 and n_surv >= target_survivors:
                break
            c += threads
    finally:
        if pool is not None:
            pool.shutdown()
    sizes = np.concatenate(sizes_parts) if sizes_parts else np.zeros(0, np.int64)
    surv = np.concatenate(surv_parts) if surv_parts else np.zeros(0, np.int64)
    return BatchResult(sizes, finals, surv)


def sample_campbell(k: Kernel, delta: float, t: float, rng: np.random.Generator):
    """Size-biased sample: ``(trajectory, iota, weight)``.

    ``weight = |eta_t|`` and ``iota`` is uniform on ``eta_t``; an extinct
    run has weight 0 and ``iota = None``.
    """
    g = k.group
    tr = simulate_forward(k, delta, [g.identity], t, rng)
    if not tr.final:
        return tr, None, 0.0
    iota = tr.final[int(rng.integers(len(tr.final)))]
    return tr, iota, float(len(tr.final))
