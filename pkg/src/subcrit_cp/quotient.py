"""The contact process modulo left shifts as an explicit finite-state chain.

States are shift classes of nonempty finite configurations, represented by a
canonical representative.  A truncated state space keeps the classes with at
most ``S`` sites and word-length diameter at most ``D`` that are reachable from
the singleton class; transitions leaving it are killed and booked separately
from genuine extinction.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from .errors import CapsTooLargeError, NoClassError
from .groups import Group, ZdGroup
from .kernel import Kernel

DEFAULT_MAX_STATES = 2_000_000


@dataclass(frozen=True)
class ShiftClass:
    """Class of a configuration modulo left translations."""

    rep: tuple
    m: int = 1

    def __len__(self):
        return len(self.rep)


def canonical_rep(group: Group, A) -> tuple:
    """Canonical representative of the class of the nonempty set ``A``.

    On Z^d this is ``A - min(A)``.  In general it is the smallest of the sorted
    translates ``a^{-1} A`` (``a`` in ``A``) compared elementwise in the group
    order; every candidate contains the identity as its minimal element.
    """
    if isinstance(group, ZdGroup):
        s = sorted(set(A))
        if not s:
            raise NoClassError("the empty set has no shift class")
        m0 = s[0]
        return tuple(tuple(u - v for u, v in zip(x, m0)) for x in s)
    return _canonical_generic(group, A)[0]


def _canonical_generic(group: Group, A):
    elems = list(set(A))
    if not elems:
        raise NoClassError("the empty set has no shift class")
    key = group.key
    best = None
    best_key = None
    best_shift = None
    count = 0
    for a in elems:
        ai = group.inv(a)
        cand = sorted((group.mul(ai, b) for b in elems), key=key)
        ck = [key(x) for x in cand]
        if best is None or ck < best_key:
            best, best_key, best_shift, count = tuple(cand), ck, a, 1
        elif ck == best_key:
            count += 1
    return best, best_shift, count


def canonicalize(group: Group, A):
    """Return ``(ShiftClass, shift)`` with ``shift * rep == A``.

    Raises
    ------
    NoClassError
        If ``A`` is empty.
    """
    if isinstance(group, ZdGroup):
        rep = canonical_rep(group, A)
        shift = min(set(A))
        return ShiftClass(rep, 1), shift
    rep, shift, count = _canonical_generic(group, A)
    # every translate a^{-1}A equal to the minimum corresponds to one symmetry
    return ShiftClass(rep, count), shift


def symmetry_m(group: Group, c) -> int:
    """``|{i : i * rep = rep}|`` by testing all candidates ``a1 * a2^{-1}``."""
    rep = c.rep if isinstance(c, ShiftClass) else tuple(c)
    target = set(rep)
    candidates = {group.mul(a1, group.inv(a2)) for a1 in rep for a2 in rep}
    return sum(1 for i in candidates if {group.mul(i, x) for x in rep} == target)


# ---------------------------------------------------------------------------
# truncated state space
# ---------------------------------------------------------------------------

@dataclass
class StateSpace:
    """Classes reachable from the singleton class within ``caps = (S, D)``.

    The rate structure is stored independently of ``delta``:

    * ``rec``: sparse counts of recoveries leading from class to class;
    * ``inf``: sparse summed infection rates between in-cap classes;
    * ``death_count``: number of recoveries leading to the empty set;
    * ``trunc_rate``: infection rate leaving the caps;
    * ``inf_out``: total rate of effective infections (in-cap or not).
    """

    kernel: Kernel
    caps: tuple
    reps: list
    index: dict
    sizes: np.ndarray
    diams: np.ndarray
    rec: sp.csr_matrix
    inf: sp.csr_matrix
    death_count: np.ndarray
    trunc_rate: np.ndarray
    inf_out: np.ndarray
    _m: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.reps)

    @property
    def group(self) -> Group:
        return self.kernel.group

    def class_of(self, A) -> int:
        """Index of the class of ``A`` (``KeyError`` when outside the space)."""
        return self.index[canonical_rep(self.group, A)]

    def symmetry_counts(self) -> np.ndarray:
        if self._m is None:
            if isinstance(self.group, ZdGroup):
                self._m = np.ones(self.n, dtype=np.int64)
            else:
                self._m = np.array([symmetry_m(self.group, r) for r in self.reps], dtype=np.int64)
        return self._m

    def class_string(self, i: int) -> str:
        return self.group.format_set(self.reps[i])


def _zd_diam_with(A, j, diam):
    best = diam
    for a in A:
        w = sum(abs(u - v) for u, v in zip(a, j))
        if w > best:
            best = w
    return best


def enumerate_states(k: Kernel, caps, max_states: int = DEFAULT_MAX_STATES) -> StateSpace:
    """Breadth-first enumeration of the truncated quotient state space.

    Parameters
    ----------
    k : Kernel
    caps : (int, int)
        Maximum number of sites ``S`` and maximum diameter ``D``.
    max_states : int
        Hard limit; exceeding it raises :class:`CapsTooLargeError`.
    """
    S, D = int(caps[0]), int(caps[1])
    if S < 1 or D < 0:
        raise ValueError("caps must satisfy S >= 1 and D >= 0")
    g = k.group
    zd = isinstance(g, ZdGroup)
    offsets = list(k.offsets)
    rates = list(k.rates)
    start = (g.identity,)
    reps = [start]
    index = {start: 0}
    diams = [0]
    rec_rows, rec_cols = [], []
    inf_rows, inf_cols, inf_vals = [], [], []
    death = []
    trunc = []
    inf_out = []
    queue = deque([0])

    def add(rep, diam):
        idx = index.get(rep)
        if idx is None:
            idx = len(reps)
            if idx >= max_states:
                raise CapsTooLargeError(
                    f"state space exceeds {max_states} classes at caps {(S, D)}", idx)
            index[rep] = idx
            reps.append(rep)
            diams.append(diam)
            queue.append(idx)
        return idx

    while queue:
        src = queue.popleft()
        A = reps[src]
        members = set(A)
        n_a = len(A)
        dA = diams[src]
        # recoveries
        d_count = 0
        if n_a == 1:
            d_count = 1
        else:
            for p in range(n_a):
                rep = canonical_rep(g, A[:p] + A[p + 1:])
                tgt = index.get(rep)
                if tgt is None:
                    tgt = add(rep, g.diameter(rep))
                rec_rows.append(src)
                rec_cols.append(tgt)
        death.append(d_count)
        # infections
        tr = 0.0
        out = 0.0
        for a in A:
            for o, r in zip(offsets, rates):
                j = g.mul(a, o)
                if j in members:
                    continue
                out += r
                if n_a + 1 > S:
                    tr += r
                    continue
                if zd:
                    dB = _zd_diam_with(A, j, dA)
                else:
                    dB = max(dA, max(g.word_length(g.div(x, j)) for x in A))
                if dB > D:
                    tr += r
                    continue
                rep = canonical_rep(g, A + (j,))
                tgt = index.get(rep)
                if tgt is None:
                    tgt = add(rep, dB)
                inf_rows.append(src)
                inf_cols.append(tgt)
                inf_vals.append(r)
        trunc.append(tr)
        inf_out.append(out)

    n = len(reps)
    rec = sp.csr_matrix((np.ones(len(rec_rows)), (rec_rows, rec_cols)), shape=(n, n))
    inf = sp.csr_matrix((np.asarray(inf_vals, dtype=float), (inf_rows, inf_cols)), shape=(n, n))
    rec.sum_duplicates()
    inf.sum_duplicates()
    return StateSpace(
        kernel=k, caps=(S, D), reps=reps, index=index,
        sizes=np.array([len(r) for r in reps], dtype=np.int64),
        diams=np.array(diams, dtype=np.int64),
        rec=rec, inf=inf,
        death_count=np.array(death, dtype=np.float64),
        trunc_rate=np.array(trunc, dtype=np.float64),
        inf_out=np.array(inf_out, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# generator and semigroup
# ---------------------------------------------------------------------------

@dataclass
class SparseGenerator:
    """Truncated sub-Markov generator ``Q`` (diagonal included) with kill rates.

    Every row satisfies ``Q.sum(row) + kill_death + kill_trunc = 0``.
    """

    Q: sp.csr_matrix
    kill_death: np.ndarray
    kill_trunc: np.ndarray
    gamma: float
    delta: float
    space: StateSpace | None = None

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return self.Q.diagonal()

    @property
    def exit_rates(self) -> np.ndarray:
        return -self.diagonal

    def todense(self) -> np.ndarray:
        return self.Q.toarray()

    def row_residuals(self) -> np.ndarray:
        """``Q.sum(row) + kill_death + kill_trunc`` (zero up to rounding)."""
        return np.asarray(self.Q.sum(axis=1)).ravel() + self.kill_death + self.kill_trunc

    def offdiag_triplets(self):
        coo = self.Q.tocoo()
        mask = coo.row != coo.col
        return coo.row[mask], coo.col[mask], coo.data[mask]

    def uniformized(self) -> sp.csr_matrix:
        """``M = I + Q / Gamma`` (substochastic)."""
        return (sp.identity(self.n, format="csr") + self.Q / self.gamma).tocsr()

    def export_triplets(self, path) -> None:
        """Write ``from to rate`` lines (diagonal included) and the kill vectors."""
        coo = self.Q.tocoo()
        with open(path, "w") as fh:
            fh.write(f"# n {self.n} delta {self.delta!r} gamma {self.gamma!r}\n")
            fh.write("# from to rate\n")
            order = np.lexsort((coo.col, coo.row))
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{r} {c} {float(v)!r}\n")
            fh.write("# kill_death\n")
            for i, v in enumerate(self.kill_death):
                fh.write(f"{i} {float(v)!r}\n")
            fh.write("# kill_trunc\n")
            for i, v in enumerate(self.kill_trunc):
                fh.write(f"{i} {float(v)!r}\n")


def read_triplets(path):
    """Parse a file written by :meth:`SparseGenerator.export_triplets`."""
    section = None
    n = None
    rows, cols, vals = [], [], []
    kd, kt = {}, {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[0] == "n":
                    n = int(parts[1])
                    section = "Q"
                elif parts[0] in ("kill_death", "kill_trunc"):
                    section = parts[0]
                continue
            parts = line.split()
            if section == "Q":
                rows.append(int(parts[0]))
                cols.append(int(parts[1]))
                vals.append(float(parts[2]))
            elif section == "kill_death":
                kd[int(parts[0])] = float(parts[1])
            else:
                kt[int(parts[0])] = float(parts[1])
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return Q, np.array([kd[i] for i in range(n)]), np.array([kt[i] for i in range(n)])


def build_generator(space: StateSpace, delta: float) -> SparseGenerator:
    """Assemble ``Q`` at recovery rate ``delta`` from the cached rate structure."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    n = space.n
    exit_rate = delta * space.sizes + space.inf_out
    Q = (delta * space.rec + space.inf - sp.diags(exit_rate)).tocsr()
    Q.sum_duplicates()
    Q.eliminate_zeros()
    kd = delta * space.death_count
    kt = space.trunc_rate.copy()
    max_exit = float(exit_rate.max()) if n else 0.0
    gamma = 1.01 * max_exit if max_exit > 0 else 1.0
    return SparseGenerator(Q, kd, kt, gamma, float(delta), space)


def _as_vector(g: SparseGenerator, law):
    """Return ``(vector, rebuild)`` for a numpy vector or a TildeLaw."""
    if isinstance(law, np.ndarray):
        return law.astype(np.float64, copy=True), lambda v: v
    from .measures import TildeLaw  # local import: measures depends on this module

    space = g.space
    if space is None:
        raise ValueError("generator has no state space attached")
    v = np.zeros(g.n)
    for rep, p in zip(law.reps, law.probs):
        try:
            v[space.index[rep]] += p
        except KeyError:
            raise KeyError(f"class {space.group.format_set(rep)} is outside the state space") from None
    return v, lambda w: TildeLaw.from_vector(space, w)


def poisson_window(lam: float, eps: float):
    """Smallest ``K`` with ``P[Poisson(lam) > K] <= eps`` and the weights up to ``K``."""
    if lam == 0:
        return 0, np.ones(1)
    K = int(poisson.isf(eps, lam)) + 1
    ks = np.arange(K + 1)
    return K, poisson.pmf(ks, lam)


def apply_semigroup_grid(g: SparseGenerator, law, times, eps: float = 1e-13):
    """Evaluate ``law e^{Q t}`` for every ``t`` in ``times`` by uniformization.

    Returns a list of ``(law_t, died, truncated)``.  With ``M = I + Q/Gamma``
    the surviving part is ``sum_k Pois(k; Gamma t) law M^k``; the killed
    fluxes per step are accumulated separately, so that surviving + died +
    truncated equals the retained Poisson mass (at least ``1 - eps`` times
    the initial mass).
    """
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ValueError("t must be >= 0")
    v0, rebuild = _as_vector(g, law)
    M_T = g.uniformized().T.tocsr()
    kd = g.kill_death / g.gamma
    kt = g.kill_trunc / g.gamma
    windows = [poisson_window(g.gamma * t, eps) for t in times]
    K_max = max(w[0] for w in windows) if windows else 0
    acc = [np.zeros_like(v0) for _ in times]
    died = [0.0] * len(times)
    trunc = [0.0] * len(times)
    v = v0
    D_k = 0.0
    T_k = 0.0
    for k in range(K_max + 1):
        for q, (K, w) in enumerate(windows):
            if k <= K:
                acc[q] += w[k] * v
                died[q] += w[k] * D_k
                trunc[q] += w[k] * T_k
        if k == K_max:
            break
        D_k += float(v @ kd)
        T_k += float(v @ kt)
        v = M_T @ v
    return [(rebuild(a), d, tr) for a, d, tr in zip(acc, died, trunc)]


def apply_semigroup(g: SparseGenerator, law, t: float, eps: float = 1e-13):
    """``(law e^{Q t}, died, truncated)``; see :func:`apply_semigroup_grid`."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return apply_semigroup_grid(g, law, [t], eps)[0]


def singleton_vector(n: int) -> np.ndarray:
    v = np.zeros(n)
    v[0] = 1.0
    return v


def expected_size(g: SparseGenerator, space: StateSpace, t: float, eps: float = 1e-13):
    """``E|eta_t|`` from ``{0}`` on the truncated chain, with the truncated mass.

    The value is a lower bound for the untruncated expectation.
    """
    vec, died, trunc = apply_semigroup(g, singleton_vector(space.n), t, eps)
    return float(vec @ space.sizes), trunc


def survival_probability(g: SparseGenerator, t: float, eps: float = 1e-13) -> float:
    vec, _, _ = apply_semigroup(g, singleton_vector(g.n), t, eps)
    return float(vec.sum())
