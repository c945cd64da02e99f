"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` (the summary
lines appear at the end of the session) or ``python tests/test_acceptance.py``.
"""

import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_histogram, random_instance, tight_config
from sharpot.barycenter import delta_pair_regularized_closed_form
from sharpot.core import cost_from_points
from sharpot.exact import exact_wasserstein, wasserstein_1d
from sharpot.grad import (
    _dense_solve,
    _woodbury_solve,
    dual_hessian,
    dual_objective_gradient,
    regularized_gradient,
    sharp_gradient,
    tangent_directional_derivatives,
)
from sharpot.sinkhorn import distances, sinkhorn_solve
from sharpot.studies import (
    learning_curve,
    random_rate_instance,
    rate_slopes,
    run_dirac_pair,
    run_rate_study,
    sparse_barycenter_trial,
)


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    lams = (1.0, 5.0, 20.0)
    start = time.perf_counter()
    worst = 0.0
    for trial in range(20):
        n, m = int(rng.integers(3, 11)), int(rng.integers(2, 9))
        lam = lams[trial % 3]
        a, b, M = random_instance(rng, n, m)
        cfg = tight_config(lam)
        V = rng.standard_normal((10, n))
        V -= V.mean(axis=1, keepdims=True)
        for grad_fn, idx in ((sharp_gradient, 0), (regularized_gradient, 1)):
            g = grad_fn(a, b, M, cfg)
            fd = tangent_directional_derivatives(lambda x: distances(x, b, M, cfg)[idx], a, V, step=1e-5)
            rel = np.linalg.norm(V @ g - fd) / np.linalg.norm(fd)
            worst = max(worst, rel)
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-4 and elapsed <= 30, f"max relative error {worst:.2e} (<= 1e-4), {elapsed:.1f}s (<= 30s)")


def test_criterion_2_hessian_blocks_equal_numerical_hessian_over_lambda():
    rng = np.random.default_rng(2)
    worst = 0.0
    for trial in range(10):
        lam = float(rng.choice([1.0, 2.0, 5.0]))
        a, b, M = random_instance(rng, 4, 3)
        sol = sinkhorn_solve(a, b, M, tight_config(lam))
        z = np.concatenate([sol.duals.alpha, sol.duals.beta[:-1]])
        h = 1e-6
        H = np.empty((z.size, z.size))
        for k in range(z.size):
            e = np.zeros(z.size)
            e[k] = h
            gp = dual_objective_gradient((z + e)[:4], (z + e)[4:], a, b, M, lam)
            gm = dual_objective_gradient((z - e)[:4], (z - e)[4:], a, b, M, lam)
            H[:, k] = (gp - gm) / (2 * h)
        blocks = dual_hessian(a, b, sol.plan).assemble()
        worst = max(worst, np.abs(H / lam - blocks).max())
    report(2, worst <= 1e-5, f"max entrywise error {worst:.2e} (<= 1e-5) on 10 random 4x3 instances")


def test_criterion_3_rate_exponents():
    start = time.perf_counter()
    a, b, M = random_rate_instance(seed=0)
    records, _ = run_rate_study(a, b, M, np.arange(1, 31))
    sharp_slope, reg_slope = rate_slopes(records, floor=1e-10)
    elapsed = time.perf_counter() - start
    ok = sharp_slope <= -0.5 and -1.5 <= reg_slope <= -0.7 and elapsed <= 60
    report(
        3,
        ok,
        f"sharp log-gap slope {sharp_slope:.3f} (<= -0.5), regularized log-log slope {reg_slope:.3f} "
        f"(in [-1.5, -0.7]), {elapsed:.1f}s (<= 60s)",
    )


def test_criterion_4_dirac_pair_barycenters():
    start = time.perf_counter()
    sharp = run_dirac_pair((0.5, 1.0, 5.0))
    mass = min(s[10] for s, _, _ in sharp.values())
    reg = run_dirac_pair((0.1, 1.0))
    err = max(np.abs(r - c).sum() for _, r, c in reg.values())
    elapsed = time.perf_counter() - start
    ok = mass >= 0.99 and err <= 1e-6 and elapsed <= 60
    report(4, ok, f"min sharp mass on bin 10 {mass:.6f} (>= 0.99), IBP vs closed form L1 {err:.1e} (<= 1e-6), {elapsed:.1f}s")


def test_criterion_5_exact_oracle_matches_cdf_formula():
    rng = np.random.default_rng(5)
    worst, max_nnz_excess = 0.0, -np.inf
    for _ in range(20):
        xs, ys = rng.uniform(0, 10, 15), rng.uniform(0, 10, 15)
        a, b = random_histogram(rng, 15), random_histogram(rng, 15)
        sol = exact_wasserstein(a, b, cost_from_points(xs, ys, p=1))
        worst = max(worst, abs(sol.value - wasserstein_1d(xs, a, ys, b)))
        max_nnz_excess = max(max_nnz_excess, np.count_nonzero(sol.plan) - (15 + 15 - 1))
    ok = worst <= 1e-10 and max_nnz_excess <= 0
    report(5, ok, f"max |LP - CDF| {worst:.1e} (<= 1e-10), nonzeros minus (n+m-1) at most {max_nnz_excess}")


def test_criterion_6_sharp_barycenter_improves_on_ibp():
    start = time.perf_counter()
    details, ok = [], True
    for k in (1, 2, 10):
        trials = [sparse_barycenter_trial(k, seed) for seed in range(10)]
        wins = sum(t.sharp_exact <= t.ibp_exact for t in trials)
        mean_gain = float(np.mean([t.improvement for t in trials]))
        ok &= wins >= 9 and (k == 10 or mean_gain > 0)
        details.append(f"k={k}: {wins}/10 seeds, mean gain {mean_gain:.4g}")
    elapsed = time.perf_counter() - start
    ok &= elapsed <= 600
    report(6, ok, "; ".join(details) + f"; {elapsed:.0f}s (<= 600s)")


def test_criterion_7_learning_curve():
    start = time.perf_counter()
    ells = (20, 80, 320)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        losses, residuals = learning_curve(ells, seeds=range(5))
    means = losses.mean(axis=1)
    inversions = int(np.sum(np.diff(means) > 0))
    elapsed = time.perf_counter() - start
    ok = residuals.max() <= 1e-10 and inversions <= 1 and elapsed <= 600
    curve = ", ".join(f"l={ell}: {v:.6f}" for ell, v in zip(ells, means))
    report(7, ok, f"mean test loss {curve}; {inversions} inversion(s) (<= 1); residual {residuals.max():.1e}; {elapsed:.0f}s")


def test_criterion_8_structured_solve():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(3, 40))
        m = int(rng.integers(2, n + 1))
        T = rng.uniform(0.05, 1.0, (n, m))
        T /= T.sum()
        tbar = T[:, :-1]
        d1, d2inv = T.sum(axis=1), tbar.sum(axis=0)
        f = rng.standard_normal(n)
        g_w = _woodbury_solve(d1[None], tbar[None], d2inv[None], f[None])[0]
        g_d = _dense_solve(d1[None], tbar[None], d2inv[None], f[None])[0]
        worst = max(worst, np.linalg.norm(g_w - g_d) / np.linalg.norm(g_d))

    n, ms, times = 200, (5, 10, 20, 40), []
    for m in ms:
        T = rng.uniform(0.05, 1.0, (n, m))
        T /= T.sum()
        args = (T.sum(axis=1)[None], T[None, :, :-1], T[:, :-1].sum(axis=0)[None], rng.standard_normal((1, n)))
        reps = []
        for _ in range(30):
            t0 = time.perf_counter()
            _woodbury_solve(*args)
            reps.append(time.perf_counter() - t0)
        times.append(np.median(reps))
    slope = np.polyfit(np.log(ms), np.log(times), 1)[0]
    ok = worst <= 1e-9 and slope <= 2.0
    report(8, ok, f"max relative Woodbury-vs-dense difference {worst:.1e} (<= 1e-9); time-vs-m log-log slope {slope:.2f} (<= 2)")


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
