"""Pure-Python reference implementations of the compiled kernels.

The simulation loop consumes uniforms in exactly the same order as the
compiled version, so for the same generator state both return the same
replicates.
"""
from __future__ import annotations

import math

import numpy as np


def simulate_batch_packed(bit_generator, init_keys, deltas, cumrates, delta, horizon,
                          n_runs, store_sets=True, target=0):
    """See :func:`subcrit_cp._kernels.simulate_batch_packed`."""
    rng = np.random.Generator(bit_generator)
    rand = rng.random
    init = [int(v) for v in init_keys]
    deltas = [int(v) for v in deltas]
    cum = [float(v) for v in cumrates]
    n_off = len(deltas)
    a_tot = cum[-1] if n_off else 0.0
    per_site = delta + a_tot
    log1p = math.log1p
    sizes = []
    surv, ptr, keys = [], [0], []
    n_surv = 0
    for run in range(n_runs):
        sites = list(init)
        members = set(sites)
        size = len(sites)
        t = 0.0
        while size > 0:
            t += -log1p(-rand()) / (size * per_site)
            if t > horizon:
                break
            idx = int(rand() * size)
            if idx >= size:
                idx = size - 1
            x = rand() * per_site
            if x < delta:
                gone = sites[idx]
                size -= 1
                sites[idx] = sites[size]
                sites.pop()
                members.discard(gone)
                continue
            x -= delta
            j = 0
            while j < n_off - 1 and cum[j] <= x:
                j += 1
            tgt = sites[idx] + deltas[j]
            if tgt not in members:
                sites.append(tgt)
                members.add(tgt)
                size += 1
        sizes.append(size)
        if size > 0:
            n_surv += 1
            if store_sets:
                keys.extend(sites)
                surv.append(run)
                ptr.append(len(keys))
        if target > 0 and n_surv >= target:
            break
    return (np.asarray(sizes, dtype=np.int64), np.asarray(surv, dtype=np.int64),
            np.asarray(ptr, dtype=np.int64), np.asarray(keys, dtype=np.int64))


def hit_counts(set_ptr, set_idx, W, weights):
    """See :func:`subcrit_cp._kernels.hit_counts` (vectorized over classes)."""
    nq = len(set_ptr) - 1
    h = np.zeros(nq)
    s = np.zeros(nq)
    weights = np.asarray(weights, dtype=np.float64)
    for q in range(nq):
        idx = set_idx[set_ptr[q]:set_ptr[q + 1]]
        once = np.zeros((W.shape[0], W.shape[2]), dtype=np.uint64)
        twice = np.zeros_like(once)
        for p in idx:
            v = W[:, p, :]
            twice |= once & v
            once |= v
        c1 = np.bitwise_count(once).sum(axis=1, dtype=np.int64)
        c2 = np.bitwise_count(once & ~twice).sum(axis=1, dtype=np.int64)
        h[q] = float(weights @ c1)
        s[q] = float(weights @ c2)
    return h, s
