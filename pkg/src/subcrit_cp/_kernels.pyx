# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: batched event-driven simulation on Z^d (packed integer
sites) and the bitset counting kernel behind h-function evaluation.

Both functions mirror ``_pykernels`` draw for draw, so the two backends
return identical results for identical generator states.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log1p
from libc.stdlib cimport malloc, realloc, free
from libc.stdint cimport int64_t, uint64_t
from numpy.random cimport bitgen_t

cnp.import_array()


cdef inline double _next(bitgen_t *bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef int _grow(int64_t **buf, Py_ssize_t *cap, Py_ssize_t need) noexcept nogil:
    cdef Py_ssize_t newcap
    cdef int64_t *tmp
    if need <= cap[0]:
        return 0
    newcap = cap[0] * 2
    if newcap < need:
        newcap = need
    tmp = <int64_t *> realloc(buf[0], newcap * sizeof(int64_t))
    if tmp == NULL:
        return -1
    buf[0] = tmp
    cap[0] = newcap
    return 0


def simulate_batch_packed(bit_generator, const int64_t[::1] init_keys, const int64_t[::1] deltas,
                          const double[::1] cumrates, double delta, double horizon,
                          Py_ssize_t n_runs, bint store_sets=True, Py_ssize_t target=0):
    """Run independent replicates from ``init_keys`` up to ``horizon``.

    Parameters
    ----------
    bit_generator : numpy.random.BitGenerator
        Source of uniforms (consumed through ``next_double``).
    init_keys, deltas : int64 arrays
        Packed initial sites and packed offset increments.
    cumrates : float64 array
        Inclusive cumulative offset rates.
    n_runs : int
        Number of replicates, or the maximum number when ``target > 0``.
    store_sets : bool
        Keep the final sets of surviving replicates.
    target : int
        If positive, stop as soon as this many replicates survived.

    Returns
    -------
    sizes : int64 array, final size of every executed replicate
    surv_runs : int64 array, indices of surviving replicates (when storing)
    ptr, keys : CSR arrays holding the surviving final sets (when storing)
    """
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")
    cdef Py_ssize_t n_init = init_keys.shape[0]
    cdef Py_ssize_t n_off = deltas.shape[0]
    cdef double a_tot = cumrates[n_off - 1] if n_off > 0 else 0.0
    cdef double per_site = delta + a_tot
    cdef Py_ssize_t cap = 64 if n_init < 64 else 2 * n_init
    cdef int64_t *sites = <int64_t *> malloc(cap * sizeof(int64_t))
    cdef Py_ssize_t out_cap = 1024
    cdef int64_t *out_keys = <int64_t *> malloc(out_cap * sizeof(int64_t))
    cdef Py_ssize_t surv_cap = 256
    cdef int64_t *surv = <int64_t *> malloc(surv_cap * sizeof(int64_t))
    cdef Py_ssize_t ptr_cap = 257
    cdef int64_t *ptr = <int64_t *> malloc(ptr_cap * sizeof(int64_t))
    sizes_arr = np.zeros(n_runs, dtype=np.int64)
    cdef int64_t[::1] sizes = sizes_arr
    cdef Py_ssize_t run, size, idx, j, q, n_out = 0, n_surv = 0, runs_done = 0
    cdef double t, u, x, rate
    cdef int64_t tgt
    cdef bint present
    cdef int err = 0
    if sites == NULL or out_keys == NULL or surv == NULL or ptr == NULL:
        free(sites); free(out_keys); free(surv); free(ptr)
        raise MemoryError()
    ptr[0] = 0
    with bit_generator.lock:
      with nogil:
        for run in range(n_runs):
            size = n_init
            for j in range(n_init):
                sites[j] = init_keys[j]
            t = 0.0
            while size > 0:
                rate = size * per_site
                u = _next(bg)
                t += -log1p(-u) / rate
                if t > horizon:
                    break
                idx = <Py_ssize_t> (_next(bg) * size)
                if idx >= size:
                    idx = size - 1
                x = _next(bg) * per_site
                if x < delta:
                    size -= 1
                    sites[idx] = sites[size]
                    continue
                x -= delta
                j = 0
                while j < n_off - 1 and cumrates[j] <= x:
                    j += 1
                tgt = sites[idx] + deltas[j]
                present = False
                for q in range(size):
                    if sites[q] == tgt:
                        present = True
                        break
                if not present:
                    if _grow(&sites, &cap, size + 1) != 0:
                        err = 1
                        break
                    sites[size] = tgt
                    size += 1
            if err:
                break
            sizes[run] = size
            runs_done = run + 1
            if size > 0 and store_sets:
                if (_grow(&out_keys, &out_cap, n_out + size) != 0
                        or _grow(&surv, &surv_cap, n_surv + 1) != 0
                        or _grow(&ptr, &ptr_cap, n_surv + 2) != 0):
                    err = 1
                    break
                for q in range(size):
                    out_keys[n_out + q] = sites[q]
                n_out += size
                surv[n_surv] = run
                n_surv += 1
                ptr[n_surv] = n_out
            elif size > 0:
                n_surv += 1
            if target > 0 and n_surv >= target:
                break
    try:
        if err:
            raise MemoryError()
        if store_sets:
            keys_arr = np.array(<int64_t[:n_out]> out_keys, dtype=np.int64) if n_out else np.zeros(0, np.int64)
            surv_arr = np.array(<int64_t[:n_surv]> surv, dtype=np.int64) if n_surv else np.zeros(0, np.int64)
            ptr_arr = np.array(<int64_t[:n_surv + 1]> ptr, dtype=np.int64)
        else:
            keys_arr = np.zeros(0, np.int64)
            surv_arr = np.zeros(0, np.int64)
            ptr_arr = np.zeros(1, np.int64)
    finally:
        free(sites); free(out_keys); free(surv); free(ptr)
    return sizes_arr[:runs_done], surv_arr, ptr_arr, keys_arr


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline int _popcount(uint64_t v) noexcept nogil:
    return __builtin_popcountll(v)


def hit_counts(const int64_t[::1] set_ptr, const int64_t[::1] set_idx,
               const uint64_t[:, :, ::1] W, const double[::1] weights):
    """Weighted translate counts for each query set.

    For query set ``A`` (site indices ``set_idx[set_ptr[q]:set_ptr[q+1]]``) and
    class ``k``, ``W[k, p]`` is the bitset of translates ``i`` with
    ``site_p`` in ``i * Delta_k``.  Returns

    * ``h[q] = sum_k weights[k] * #{i : |A cap i Delta_k| >= 1}``
    * ``s[q] = sum_k weights[k] * #{i : |A cap i Delta_k| == 1}``
    """
    cdef Py_ssize_t nq = set_ptr.shape[0] - 1
    cdef Py_ssize_t K = W.shape[0]
    cdef Py_ssize_t nw = W.shape[2]
    h_arr = np.zeros(nq, dtype=np.float64)
    s_arr = np.zeros(nq, dtype=np.float64)
    cdef double[::1] h = h_arr
    cdef double[::1] s = s_arr
    cdef Py_ssize_t q, k, w, m, p
    cdef uint64_t once, twice, v
    cdef long c1, c2
    cdef double acc_h, acc_s
    with nogil:
        for q in range(nq):
            acc_h = 0.0
            acc_s = 0.0
            for k in range(K):
                c1 = 0
                c2 = 0
                for w in range(nw):
                    once = 0
                    twice = 0
                    for m in range(set_ptr[q], set_ptr[q + 1]):
                        p = set_idx[m]
                        v = W[k, p, w]
                        twice = twice | (once & v)
                        once = once | v
                    c1 += _popcount(once)
                    c2 += _popcount(once & ~twice)
                acc_h += weights[k] * c1
                acc_s += weights[k] * c2
            h[q] = acc_h
            s[q] = acc_s
    return h_arr, s_arr
