"""Compare the compiled and pure-Python kernels on the two hot loops.

Run with ``python3 benchmarks/bench_kernels.py [--runs N] [--repeat R]``.
Both backends consume the same random doubles, so the benchmark also checks
that their outputs agree exactly.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from subcrit_cp import _pykernels, backend
from subcrit_cp.groups import ZdGroup
from subcrit_cp.kernel import kernel_from_spec
from subcrit_cp.measures import _hit_structure
from subcrit_cp.quotient import enumerate_states
from subcrit_cp.simulate import pack, pack_offsets


def _best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_simulation(compiled, runs: int, repeat: int) -> None:
    k = kernel_from_spec(ZdGroup(1), {1: 1.0, -1: 1.0})
    init = pack([(0,)], 1)
    deltas = pack_offsets(k.offsets, 1)
    cum = np.cumsum(np.asarray(k.rates))

    def call(mod):
        bg = np.random.PCG64(12345)
        return mod.simulate_batch_packed(bg, init, deltas, cum, 1.5, 10.0, runs, True, 0)

    t_py, out_py = _best_of(lambda: call(_pykernels), repeat)
    print(f"simulate_batch_packed  runs={runs:>7d}  python {t_py:8.3f} s", end="")
    if compiled is None:
        print()
        return
    t_c, out_c = _best_of(lambda: call(compiled), repeat)
    same = all(np.array_equal(a, b) for a, b in zip(out_py, out_c))
    print(f"  cython {t_c:8.4f} s  speedup {t_py / t_c:7.1f}x  identical={same}")


def bench_hit_counts(compiled, caps, repeat: int) -> None:
    k = kernel_from_spec(ZdGroup(1), {1: 1.0, -1: 1.0})
    space = enumerate_states(k, caps)
    reps = list(space.reps)
    weights = np.full(len(reps), 1.0 / len(reps))
    ptr, idx, W = _hit_structure(k.group, reps, reps)
    t_py, out_py = _best_of(lambda: _pykernels.hit_counts(ptr, idx, W, weights), repeat)
    print(f"hit_counts  classes={len(reps):>6d}  python {t_py:8.3f} s", end="")
    if compiled is None:
        print()
        return
    t_c, out_c = _best_of(lambda: compiled.hit_counts(ptr, idx, W, weights), repeat)
    same = all(np.allclose(a, b, rtol=1e-13, atol=0) for a, b in zip(out_py, out_c))
    print(f"  cython {t_c:8.4f} s  speedup {t_py / t_c:7.1f}x  agree={same}")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--runs", type=int, default=20000)
    p.add_argument("--caps", type=int, nargs=2, default=(8, 10))
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    compiled = backend.kernels if backend.BACKEND == "cython" else None
    print(f"active backend: {backend.BACKEND}")
    bench_simulation(compiled, args.runs, args.repeat)
    bench_hit_counts(compiled, tuple(args.caps), args.repeat)


if __name__ == "__main__":
    main()
