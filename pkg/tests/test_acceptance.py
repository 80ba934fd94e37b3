"""Acceptance suite: one PASS/FAIL line per criterion, printed as ``ACCEPTANCE k ...``.

Run with ``pytest tests/test_acceptance.py -v`` (a few minutes on one core).
"""
import math
import time

import numpy as np
import pytest
import scipy.linalg

from subcrit_cp.estimators import (estimate_conditioned_law, estimate_growth_rate, estimate_pivotal_fraction,
                                   estimate_russo_integrand)
from subcrit_cp.graphical import dual_set, forward_set, sample_realization
from subcrit_cp.groups import FreeProductGroup, ZdGroup
from subcrit_cp.kernel import build_metric, kernel_from_spec, zero_kernel
from subcrit_cp.measures import (HomogeneousMeasure, TildeLaw, chi, duality_residual, growth_derivative,
                                 h_eval_many, intersection_stats, tightness_check, weighted_bracket)
from subcrit_cp.quotient import build_generator, enumerate_states
from subcrit_cp.rng import task_rng
from subcrit_cp.spectral import (doob_transform, h_from_dual_vector, proportionality_deviation,
                                 quasi_convergence_check, solve_spectrum, spectral_solve)

Z = ZdGroup(1)
NN = kernel_from_spec(Z, {1: 1.0, -1: 1.0})
DELTA = 1.5
CAPS = (10, 14)
SWEEP = [round(0.8 + 0.1 * i, 1) for i in range(13)]
AUDIT_TOL = 1e-9


@pytest.fixture
def report(capsys):
    def _report(k, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {k} {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return _report


@pytest.fixture(scope="module")
def sweep(space_1014):
    """Spectral r and the derivative formula over the delta grid at caps (10, 14)."""
    rows = {}
    for d in SWEEP:
        res = solve_spectrum(build_generator(space_1014, d))
        nu = res.eigenmeasure()
        rows[d] = (res.r_hat, growth_derivative(nu, nu))
    return rows


def test_1_pure_death_anchor(report):
    t0 = time.perf_counter()
    res = spectral_solve(zero_kernel(Z), 0.7, CAPS)
    nu = res.eigenmeasure()
    deriv = growth_derivative(nu, nu)
    elapsed = time.perf_counter() - t0
    ok = (abs(res.r_hat + 0.7) <= 1e-9 and res.nu_tilde.reps == [((0,),)]
          and res.nu_tilde.probs.tolist() == [1.0] and np.all(res.h_tilde == 1.0)
          and deriv == 1.0 and elapsed < 1.0)
    assert report(1, ok, f"r={res.r_hat!r} derivative={deriv!r} runtime={elapsed:.3f}s")


def test_2_closed_form_truncation(report, two_state):
    t0 = time.perf_counter()
    res = solve_spectrum(two_state)
    elapsed = time.perf_counter() - t0
    w = scipy.linalg.eigvals(two_state.todense())
    r_dense = float(w.real.max())
    r_closed = (-7 + math.sqrt(17)) / 2
    ok = (np.array_equal(two_state.todense(), [[-3.0, 2.0], [2.0, -4.0]])
          and np.array_equal(two_state.kill_death, [1.0, 0.0]) and np.array_equal(two_state.kill_trunc, [0.0, 2.0])
          and abs(res.r_hat - r_closed) <= 1e-9 and abs(r_dense - r_closed) <= 1e-9 and elapsed < 1.0)
    assert report(2, ok, f"r={res.r_hat!r} closed form={r_closed!r} runtime={elapsed:.3f}s")


def _duality_cases(k, n, sample_set, seed_path):
    rng = task_rng(0, seed_path)
    bad = 0
    for rep in range(n):
        t = float(rng.uniform(0.1, 3.0))
        A = sample_set(rng)
        B = sample_set(rng)
        g = sample_realization(k, 1.0, (0.0, t), seed=rep)
        lhs = bool(set(forward_set(g, A, 0.0, t)) & set(B))
        rhs = bool(set(A) & set(dual_set(g, B, t, t)))
        bad += lhs != rhs
    return bad


def test_3_pathwise_duality(report):
    t0 = time.perf_counter()
    kz = kernel_from_spec(Z, {1: 1.2, -1: 0.6, 2: 0.3})
    ball_z = Z.ball(5)
    tree = FreeProductGroup((2, 2, 2))
    kt = kernel_from_spec(tree, {"a": 0.7, "b": 0.5, "c": 0.4})
    ball_t = tree.ball(3)

    def pick(ball):
        def sample(rng):
            idx = rng.choice(len(ball), size=int(rng.integers(1, 5)), replace=False)
            return [ball[i] for i in idx]
        return sample

    bad = _duality_cases(kz, 1000, pick(ball_z), "acceptance/duality/z")
    bad += _duality_cases(kt, 1000, pick(ball_t), "acceptance/duality/tree")
    elapsed = time.perf_counter() - t0
    assert report(3, bad == 0 and elapsed < 30, f"violations={bad}/2000 runtime={elapsed:.1f}s")


def test_4_spectral_vs_mc(report, spec_1014):
    est = estimate_growth_rate(NN, DELTA, [20.0], 100_000, seed=0, path="acceptance/growth")
    r_mc, se = est.per_t[0].value, est.per_t[0].stderr
    diff = abs(spec_1014.r_hat - r_mc)
    rs = [spectral_solve(NN, DELTA, caps).r_hat for caps in [(2, 1), (3, 2), (6, 8)]] + [spec_1014.r_hat]
    mono = all(a <= b + 1e-12 for a, b in zip(rs, rs[1:]))
    ok = diff <= max(2 * se, 0.02) and mono
    assert report(4, ok, f"r_spectral={spec_1014.r_hat:.6f} r_mc={r_mc:.6f}+-{se:.6f} "
                         f"diff={diff:.4f} caps ladder={[round(r, 6) for r in rs]}")


def test_5_derivative_formula(report, space_1014, sweep):
    h = 0.05
    r_plus = solve_spectrum(build_generator(space_1014, DELTA + h)).r_hat
    r_minus = solve_spectrum(build_generator(space_1014, DELTA - h)).r_hat
    fd = -(r_plus - r_minus) / (2 * h)
    formula = sweep[DELTA][1]
    rel = abs(formula - fd) / abs(fd)
    derivs = [sweep[d][1] for d in SWEEP]
    jump = max(abs(b - a) for a, b in zip(derivs, derivs[1:]))
    ok = rel <= 0.05 and formula > 0 and fd > 0 and jump <= 0.1
    assert report(5, ok, f"formula={formula:.6f} fd={fd:.6f} rel_err={rel:.4f} max_jump={jump:.4f}")


def test_6_conditioned_law_convergence(report, spec_1014):
    t_grid = [2.0, 5.0, 10.0, 15.0]
    tvs, errs = [], []
    for t in t_grid:
        cl = estimate_conditioned_law(NN, DELTA, t, 10, seed=0, target_survivors=100_000,
                                      max_runs=10**9, path="acceptance/conditioned")
        tvs.append(cl.law.tv_distance(spec_1014.nu_tilde))
        errs.append(cl.mc_tv_error())
    exact = quasi_convergence_check(spec_1014.generator, 0, t_grid, spec_1014.nu_tilde)
    mono = all(b < a for a, b in zip(tvs, tvs[1:]))
    small = tvs[-1] < 0.02 + 3 * errs[-1]
    detail = (f"tv_mc={[round(x, 5) for x in tvs]} mc_tv_err={[round(x, 5) for x in errs]} "
              f"monotone={mono} final_ok={small} tv_exact={[float(f'{x:.3g}') for x in exact]}")
    assert report(6, mono and small, detail)


def test_7_bounds_audit(report, sweep):
    r = [sweep[d][0] for d in SWEEP]
    nonincreasing = all(b <= a + AUDIT_TOL for a, b in zip(r, r[1:]))
    lipschitz = all(abs(r[i] - r[j]) <= abs(SWEEP[i] - SWEEP[j]) + 2 * AUDIT_TOL
                    for i in range(len(r)) for j in range(i))
    bounds = all(-d - AUDIT_TOL <= x <= NN.total_rate - d + AUDIT_TOL for d, x in zip(SWEEP, r))
    ok = nonincreasing and lipschitz and bounds
    assert report(7, ok, f"nonincreasing={nonincreasing} lipschitz={lipschitz} bounds={bounds} "
                         f"r={[round(x, 5) for x in r]}")


def test_8_duality_residual(report, spec_1014):
    g = spec_1014.generator
    lines, ok = [], True
    for t in (0.5, 1.0, 2.0):
        d = duality_residual(chi(Z), chi(Z), g, g, t=t)
        ok &= d.residual <= 10 * d.trunc_bound
        lines.append(f"t={t}: {d.residual:.2e}<=10*{d.trunc_bound:.2e}")
    assert report(8, ok, "; ".join(lines))


def test_9_cpsi_and_sandwich(report, spec_1014):
    nu = spec_1014.eigenmeasure()
    order = np.argsort(-nu.law.probs, kind="stable")[:400]
    top = TildeLaw(Z, [nu.law.reps[i] for i in order], nu.law.probs[order]).normalized()
    pairs = [
        (chi(Z), chi(Z)),
        (chi(Z), chi(Z, [(0,), (1,)])),
        (HomogeneousMeasure(nu.c, top), HomogeneousMeasure(nu.c, top)),
        (chi(Z, [(0,), (2,), (3,)]).scaled(0.7), HomogeneousMeasure(nu.c, top)),
    ]
    worst = 0.0
    for mu, other in pairs:
        direct = intersection_stats(mu, other, "direct").bracket
        worst = max(worst, abs(direct - weighted_bracket(mu, other)) / direct)
    rng = task_rng(0, "acceptance/sandwich")
    ball = Z.ball(8)
    sets = [Z.config([ball[i] for i in rng.choice(len(ball), size=int(rng.integers(1, 7)), replace=False)])
            for _ in range(1000)]
    h = h_eval_many(nu, sets)
    h0 = h_eval_many(nu, [((0,),)])[0]
    sizes = np.array([len(A) for A in sets])
    viol = int(np.sum(nu.c * sizes > h * (1 + 1e-12)) + np.sum(h > h0 * sizes * (1 + 1e-12)))
    ok = worst <= 1e-12 and viol == 0
    assert report(9, ok, f"max relative cpsi gap={worst:.2e} sandwich violations={viol}/1000")


def test_10_doob_machinery(report, spec_1014):
    doob = doob_transform(spec_1014.generator, spec_1014.h_tilde, spec_1014.r_hat, spec_1014.nu_tilde.probs)
    devs = []
    for caps in [(6, 8), (8, 10)]:
        res = spectral_solve(NN, DELTA, caps)
        devs.append(proportionality_deviation(res.h_tilde, h_from_dual_vector(res.eigenmeasure("dual"), res.space)))
    devs.append(proportionality_deviation(
        spec_1014.h_tilde, h_from_dual_vector(spec_1014.eigenmeasure("dual"), spec_1014.space)))
    decreasing = all(b < a for a, b in zip(devs, devs[1:]))
    ok = (doob.projection_residual <= 1e-10 and doob.pip_distance <= 1e-6
          and doob.stationarity_residual <= 1e-8 and devs[-1] <= 0.02 and decreasing)
    assert report(10, ok, f"projection={doob.projection_residual:.1e} pip={doob.pip_distance:.1e} "
                          f"stationarity={doob.stationarity_residual:.1e} "
                          f"max_rel_proportionality(caps 6,8 / 8,10 / 10,14)={[round(x, 3) for x in devs]}")


def test_11_russo_consistency(report, sweep):
    plug_in = sweep[DELTA][1]
    russo = estimate_russo_integrand(NN, DELTA, 5.0, 10.0, 5000, seed=0, path="acceptance/russo")
    line_ok = abs(russo.value - plug_in) <= 3 * russo.stderr
    piv0 = estimate_pivotal_fraction(zero_kernel(Z), DELTA, 0.5, 1.0, 200, seed=0, path="acceptance/pivotal0")
    ring = FreeProductGroup((8,))
    k8 = kernel_from_spec(ring, {"a": 1.0, "a^-1": 1.0})
    piv8 = estimate_pivotal_fraction(k8, DELTA, 1.0, 2.0, 2000, seed=0, path="acceptance/pivotal8")
    rus8 = estimate_russo_integrand(k8, DELTA, 1.0, 2.0, 20000, seed=0, path="acceptance/russo8")
    small_ok = abs(piv8.value - rus8.value) <= 3 * math.hypot(piv8.stderr, rus8.stderr)
    ok = line_ok and piv0.value == 1.0 and small_ok
    assert report(11, ok, f"russo={russo.value:.4f}+-{russo.stderr:.4f} plug_in={plug_in:.4f}; "
                          f"pivotal(a=0)={piv0.value}; Z_8 pivotal={piv8.value:.4f}+-{piv8.stderr:.4f} "
                          f"russo={rus8.value:.4f}+-{rus8.stderr:.4f}")


def test_12_tightness(report, spec_1014, space_1014):
    metric = build_metric(NN)
    nu = spec_1014.eigenmeasure()
    grid = [float(t) for t in range(1, 13)]
    r0 = tightness_check(nu, metric, 0.0, spec_1014.r_hat,
                         {"t_grid": grid, "kernel": NN, "delta": DELTA, "space": space_1014})
    r2 = tightness_check(nu, metric, 0.2, spec_1014.r_hat,
                         {"t_grid": grid, "kernel": NN, "delta": DELTA, "n": 100_000, "seed": 0})
    zk = zero_kernel(Z)
    pd = spectral_solve(zk, 0.7, (2, 2))
    eq = tightness_check(pd.eigenmeasure(), build_metric(zk), 0.0, pd.r_hat,
                         {"t_grid": [1.0, 2.0, 4.0], "kernel": zk, "delta": 0.7, "caps": (2, 2)})
    ok = r0.lhs <= r0.rhs and r2.lhs <= r2.rhs and abs(eq.lhs - eq.rhs) <= 1e-12
    assert report(12, ok, f"gamma=0: {r0.lhs:.4f}<={r0.rhs:.4f}; gamma=0.2: {r2.lhs:.4f}<={r2.rhs:.4f}; "
                          f"pure death: lhs={eq.lhs!r} rhs={eq.rhs!r}")
