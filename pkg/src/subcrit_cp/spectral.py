"""Perron pair of the truncated quotient chain, the Doob transform and the
normalized homogeneous eigenmeasures.

Sign convention: ``r_hat`` is the growth rate (``P_t h = e^{r t} h``).  The
decay parameter used by the Doob transform is ``lambda = -r_hat``, applied
only inside :func:`doob_transform`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError
from .kernel import Kernel, dual_kernel
from .measures import HomogeneousMeasure, TildeLaw, h_eval, h_eval_many
from .quotient import (ShiftClass, SparseGenerator, StateSpace, apply_semigroup_grid,
                       build_generator, canonical_rep, enumerate_states)


@dataclass
class PowerResult:
    r_hat: float
    vector: np.ndarray
    iterations: int
    residual: float
    reducible: bool = False


def _is_reducible(g: SparseGenerator) -> bool:
    if g.n <= 1:
        return False
    ncomp, _ = connected_components(g.Q, directed=True, connection="strong")
    return ncomp > 1


def _power(g: SparseGenerator, side: str, tol: float, max_iter: int, start=None) -> PowerResult:
    n = g.n
    M = g.uniformized()
    op = M.T.tocsr() if side == "left" else M
    if start is not None:
        v = np.asarray(start, dtype=float).copy()
    else:
        v = np.full(n, 1.0 / n)
    v /= v.sum() if side == "left" else v[0] if v[0] > 0 else v.max()
    rho = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        w = op @ v
        if side == "left":
            rho = w.sum()  # v sums to one
            w /= rho
            change = np.abs(w - v).sum()
        else:
            rho = w[0] / v[0]
            w /= w[0]
            change = np.abs(w - v).max() / np.abs(w).max()
        v = w
        if change < tol:
            break
    else:
        raise ConvergenceError(f"power iteration did not converge in {max_iter} steps (change {change:.3e})")
    # refine the eigenvalue with a Rayleigh-type quotient of the final vector
    Qv = (g.Q.T @ v) if side == "left" else (g.Q @ v)
    if side == "left":
        r = float(Qv.sum() / v.sum())
        residual = float(np.abs(Qv - r * v).sum() / v.sum())
    else:
        r = float(Qv[0] / v[0])
        residual = float(np.abs(Qv - r * v).max() / np.abs(v).max())
    return PowerResult(r, v, it, residual, _is_reducible(g))


def leading_eigen(g: SparseGenerator, tol: float = 1e-13, max_iter: int = 500000):
    """Left Perron pair of ``Q``: ``(r_hat, nu_tilde)`` with ``nu_tilde`` summing to one.

    Power iteration on ``M = I + Q / Gamma``; ``r_hat = Gamma (rho(M) - 1)``
    (evaluated as ``nu Q 1`` for the normalized final vector).
    """
    res = _power(g, "left", tol, max_iter)
    if g.space is not None:
        return res.r_hat, TildeLaw.from_vector(g.space, res.vector)
    return res.r_hat, res.vector


def right_eigen(g: SparseGenerator, tol: float = 1e-13, max_iter: int = 500000) -> np.ndarray:
    """Right Perron vector ``h_tilde`` of ``Q`` normalized by ``h(singleton) = 1``."""
    return _power(g, "right", tol, max_iter).vector


@dataclass
class SpectralResult:
    """Perron data of one truncated chain."""

    r_hat: float
    nu_tilde: TildeLaw
    h_tilde: np.ndarray
    residuals: dict
    caps: tuple
    delta: float
    iterations: dict = field(default_factory=dict)
    reducible: bool = False
    generator: SparseGenerator | None = field(default=None, repr=False)

    @property
    def space(self) -> StateSpace:
        return self.generator.space

    def eigenmeasure(self, side: str = "forward") -> HomogeneousMeasure:
        m = normalize_eigenmeasure(self.nu_tilde)
        m.meta.update({"delta": self.delta, "side": side, "caps": list(self.caps),
                       "r_hat": self.r_hat})
        m.trunc = self.trunc_fraction()
        return m

    def trunc_fraction(self) -> float:
        """Share of the exit flux of ``nu_tilde`` that goes to truncation."""
        g = self.generator
        v = self.nu_tilde.probs
        kd = float(v @ g.kill_death)
        kt = float(v @ g.kill_trunc)
        return kt / (kd + kt) if kd + kt > 0 else 0.0

    def to_json(self, drop_below: float = 0.0) -> dict:
        space = self.space
        return {
            "r_hat": self.r_hat,
            "caps": list(self.caps),
            "delta": self.delta,
            "n_states": space.n,
            "residuals": dict(self.residuals),
            "iterations": dict(self.iterations),
            "reducible": self.reducible,
            "trunc_fraction": self.trunc_fraction(),
            "nu_tilde": self.nu_tilde.to_json(drop_below),
            "h_tilde": {space.class_string(i): float(x) for i, x in enumerate(self.h_tilde)
                        if self.nu_tilde.probs[i] > drop_below or drop_below == 0.0},
        }


def solve_spectrum(g: SparseGenerator, tol: float = 1e-13, max_iter: int = 500000) -> SpectralResult:
    left = _power(g, "left", tol, max_iter)
    right = _power(g, "right", tol, max_iter)
    space = g.space
    law = TildeLaw.from_vector(space, left.vector)
    return SpectralResult(
        r_hat=left.r_hat,
        nu_tilde=law,
        h_tilde=right.vector,
        residuals={"left": left.residual, "right": right.residual,
                   "eigenvalue_gap": abs(left.r_hat - right.r_hat)},
        caps=space.caps,
        delta=g.delta,
        iterations={"left": left.iterations, "right": right.iterations},
        reducible=left.reducible,
        generator=g,
    )


def spectral_solve(k: Kernel, delta: float, caps, space: StateSpace | None = None,
                   tol: float = 1e-13, max_iter: int = 500000) -> SpectralResult:
    """Enumerate (unless ``space`` is given), build ``Q`` at ``delta`` and solve."""
    if space is None:
        space = enumerate_states(k, caps)
    return solve_spectrum(build_generator(space, delta), tol, max_iter)


def h_from_dual(dual_measure: HomogeneousMeasure, A) -> float:
    """``h(A)`` assembled from a dual eigenmeasure in homogeneous form."""
    return h_eval(dual_measure, A)


def h_from_dual_vector(dual_measure: HomogeneousMeasure, space: StateSpace) -> np.ndarray:
    """:func:`h_from_dual` evaluated on every class representative of ``space``."""
    return h_eval_many(dual_measure, space.reps)


def proportionality_deviation(h_tilde: np.ndarray, h_dual: np.ndarray, weights=None) -> float:
    """Deviation of ``h_dual / h_dual[0]`` from ``h_tilde / h_tilde[0]``.

    Without weights: the maximum relative deviation over all classes.  With
    weights (for example ``nu_tilde``): the weighted mean relative deviation.
    """
    a = np.asarray(h_tilde, dtype=float) / h_tilde[0]
    b = np.asarray(h_dual, dtype=float) / h_dual[0]
    rel = np.abs(b / a - 1.0)
    if weights is None:
        return float(rel.max())
    w = np.asarray(weights, dtype=float)
    return float(w @ rel / w.sum())


@dataclass
class DoobChain:
    """Conservative Doob-transformed generator and its stationary law."""

    Qh: sp.csr_matrix
    pi: np.ndarray
    projection_residual: float
    stationarity_residual: float
    pip_distance: float | None = None


def doob_transform(g: SparseGenerator, h_tilde: np.ndarray, r_hat: float,
                   nu_tilde: np.ndarray | None = None, tol: float = 1e-15,
                   max_iter: int = 2_000_000) -> DoobChain:
    """``Q^h(i, j) = h_i^{-1} Q(i, j) h_j + lambda 1{i=j}`` with ``lambda = -r_hat``.

    Each diagonal entry is then reset so that the row sums vanish; the
    largest correction is recorded as ``projection_residual``.  The stationary
    law is the left Perron vector of ``Q^h`` (power iteration from the
    uniform law) and, when ``nu_tilde`` is given, is
    compared in l1 with the normalized product ``nu_tilde * h_tilde``.
    """
    h = np.asarray(h_tilde, dtype=float)
    if np.any(h <= 0):
        raise ValueError("h_tilde must be strictly positive")
    lam = -r_hat
    Hinv = sp.diags(1.0 / h)
    H = sp.diags(h)
    Qh = (Hinv @ g.Q @ H).tocsr() + lam * sp.identity(g.n, format="csr")
    Qh = Qh.tocsr()
    rows = np.asarray(Qh.sum(axis=1)).ravel()
    proj = float(np.abs(rows).max()) if g.n else 0.0
    Qh = (Qh - sp.diags(rows)).tocsr()
    n = g.n
    if n == 1:
        pi = np.ones(1)
    else:
        max_exit = float(-Qh.diagonal().min())
        doob = SparseGenerator(Qh, np.zeros(n), np.zeros(n), 1.01 * max_exit if max_exit > 0 else 1.0,
                               g.delta)
        pi = _power(doob, "left", tol, max_iter).vector
    stat = float(np.abs(Qh.T @ pi).sum())
    pip = None
    if nu_tilde is not None:
        prod = np.asarray(nu_tilde, dtype=float) * h
        prod /= prod.sum()
        pip = float(np.abs(prod - pi).sum())
    return DoobChain(Qh, pi, proj, stat, pip)


def normalize_eigenmeasure(nu_tilde: TildeLaw) -> HomogeneousMeasure:
    """``(c = 1 / E|Delta|, nu_tilde)``, so that ``int nu(dA) 1{0 in A} = 1``."""
    law = nu_tilde.normalized()
    return HomogeneousMeasure(1.0 / law.mean_size(), law)


def quasi_convergence_check(g: SparseGenerator, start, t_grid, nu_tilde: TildeLaw | None = None,
                            eps: float = 1e-13) -> list:
    """TV distance between the survival-conditioned law at each ``t`` and ``nu_tilde``.

    ``start`` is a state index, a :class:`ShiftClass` or a set.
    """
    space = g.space
    if isinstance(start, (int, np.integer)):
        idx = int(start)
    elif isinstance(start, ShiftClass):
        idx = space.index[start.rep]
    else:
        idx = space.index[canonical_rep(space.group, start)]
    if nu_tilde is None:
        _, nu_tilde = leading_eigen(g)
    nu = nu_tilde.normalized().probs
    v0 = np.zeros(g.n)
    v0[idx] = 1.0
    out = []
    for vec, _, _ in apply_semigroup_grid(g, v0, t_grid, eps):
        mass = vec.sum()
        if mass <= 1e-300:
            raise ConvergenceError("all mass killed before the requested time")
        out.append(0.5 * float(np.abs(vec / mass - nu).sum()))
    return out


def forward_and_dual(k: Kernel, delta: float, caps, spaces=None, tol: float = 1e-13):
    """Spectral results for the kernel and its dual (sharing work when equal)."""
    kd = dual_kernel(k)
    sf = spaces[0] if spaces else enumerate_states(k, caps)
    res_f = spectral_solve(k, delta, caps, sf, tol)
    if kd == k:
        return res_f, res_f
    sd = spaces[1] if spaces else enumerate_states(kd, caps)
    return res_f, spectral_solve(kd, delta, caps, sd, tol)
