import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance, tight_config
from sharpot.core import entropy
from sharpot.exact import exact_wasserstein
from sharpot.exceptions import InvalidInputError, InvalidParameterError, NonConvergenceError, NumericalOverflowError
from sharpot.sinkhorn import (
    SinkhornConfig,
    distances,
    plan_from_duals,
    regularized_distance,
    sharp_distance,
    sinkhorn_solve,
    solve_batch,
)

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def two_by_two_grid_oracle(lam):
    """Minimize the entropic objective over T(t) = [[t, .5-t], [.5-t, t]]."""
    t = np.linspace(1e-9, 0.5 - 1e-9, 500_001)
    off = 0.5 - t
    cost = 2 * off
    h = -2 * (t * (np.log(t) - 1) + off * (np.log(off) - 1))
    obj = cost - h / lam
    k = np.argmin(obj)
    return obj[k], cost[k]


class TestConfig:
    @pytest.mark.parametrize("kwargs", [{"lam": 0.0}, {"lam": -1.0}, {"lam": np.inf}, {"lam": 1.0, "marginal_tol": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParameterError):
            SinkhornConfig(**kwargs)

    def test_replace(self):
        cfg = SinkhornConfig(lam=2.0).replace(lam=3.0)
        assert cfg.lam == 3.0 and cfg.marginal_tol == 1e-6 and cfg.max_iter == 1000


class TestSolve:
    def test_singleton(self):
        sol = sinkhorn_solve([1.0], [1.0], [[3.0]], SinkhornConfig(lam=1.0))
        np.testing.assert_array_equal(sol.plan, [[1.0]])
        assert sol.residual == 0.0
        assert sharp_distance([1.0], [1.0], [[3.0]], SinkhornConfig(lam=2.0)) == pytest.approx(3.0, abs=1e-15)
        assert regularized_distance([1.0], [1.0], [[3.0]], SinkhornConfig(lam=2.0)) == pytest.approx(2.5, abs=1e-15)

    def test_symmetric_instance(self):
        T = sinkhorn_solve([0.5, 0.5], [0.5, 0.5], SWAP, tight_config(1.0)).plan
        np.testing.assert_allclose(T, T.T, atol=1e-15)
        np.testing.assert_allclose(T, T[::-1, ::-1], atol=1e-15)

    def test_grid_oracle(self):
        reg_star, sharp_star = two_by_two_grid_oracle(2.0)
        cfg = tight_config(2.0)
        assert regularized_distance([0.5, 0.5], [0.5, 0.5], SWAP, cfg) == pytest.approx(reg_star, abs=1e-5)
        assert sharp_distance([0.5, 0.5], [0.5, 0.5], SWAP, cfg) == pytest.approx(sharp_star, abs=1e-5)

    def test_residual_and_gauge(self, rng):
        a, b, M = random_instance(rng, 5, 4)
        sol = sinkhorn_solve(a, b, M, SinkhornConfig(lam=3.0))
        assert sol.residual <= 1e-6
        assert sol.duals.beta[-1] == 0.0
        rebuilt = plan_from_duals(sol.duals.alpha, sol.duals.beta, M, 3.0)
        np.testing.assert_allclose(rebuilt, sol.plan, rtol=1e-10)

    def test_default_stopping_rule(self, rng):
        a, b, M = random_instance(rng, 6, 6)
        sol = sinkhorn_solve(a, b, M, SinkhornConfig(lam=10.0))
        T = sol.plan
        assert np.abs(T.sum(1) - a).sum() + np.abs(T.sum(0) - b).sum() <= 1e-6

    def test_ordering_against_exact(self, rng):
        for _ in range(5):
            a, b, M = random_instance(rng, 4, 5)
            sharp, reg, sol = distances(a, b, M, tight_config(4.0))
            assert reg < sharp
            assert reg == pytest.approx(sharp - entropy(sol.plan) / 4.0, abs=1e-10)
            assert sharp >= exact_wasserstein(a, b, M).value - 1e-12

    @pytest.mark.parametrize("lam", [1.0, 10.0, 30.0, 50.0])
    def test_log_and_linear_domains_agree(self, rng, lam):
        a, b, M = random_instance(rng, 5, 5)
        base = SinkhornConfig(lam=lam, max_iter=100000, marginal_tol=1e-12)
        lin = sharp_distance(a, b, M, base.replace(log_domain=False))
        log = sharp_distance(a, b, M, base.replace(log_domain=True))
        assert lin == pytest.approx(log, abs=1e-8)

    def test_zero_marginals_need_log_domain(self):
        a, b = [0.5, 0.5], [1.0, 0.0]
        with pytest.raises(InvalidInputError):
            sinkhorn_solve(a, b, SWAP, SinkhornConfig(lam=1.0, log_domain=False))
        sol = sinkhorn_solve(a, b, SWAP, SinkhornConfig(lam=1.0))
        assert sol.log_domain
        np.testing.assert_allclose(sol.plan, [[0.5, 0.0], [0.5, 0.0]], atol=1e-12)

    def test_non_convergence_reports_residual(self, rng):
        a, b, M = random_instance(rng, 5, 5)
        with pytest.raises(NonConvergenceError) as info:
            sinkhorn_solve(a, b, M, SinkhornConfig(lam=5.0, max_iter=1, marginal_tol=1e-15))
        assert info.value.residual > 0

    def test_linear_overflow_raises(self):
        # every kernel entry underflows to zero
        M = np.array([[8.0, 9.0], [9.0, 8.0]])
        with pytest.raises(NumericalOverflowError):
            sinkhorn_solve([0.5, 0.5], [0.5, 0.5], M, SinkhornConfig(lam=100.0, log_domain=False))
        # auto mode handles the same instance in the log domain
        sol = sinkhorn_solve([0.5, 0.5], [0.5, 0.5], M, SinkhornConfig(lam=100.0))
        assert sol.log_domain and sol.residual <= 1e-6

    def test_deterministic(self, rng):
        a, b, M = random_instance(rng, 6, 3)
        s1 = sinkhorn_solve(a, b, M, SinkhornConfig(lam=7.0))
        s2 = sinkhorn_solve(a, b, M, SinkhornConfig(lam=7.0))
        np.testing.assert_array_equal(s1.plan, s2.plan)
        np.testing.assert_array_equal(s1.duals.alpha, s2.duals.alpha)

    def test_batch_matches_single_solves(self, rng):
        a, _, M = random_instance(rng, 4, 3)
        B = np.stack([random_instance(rng, 4, 3)[1] for _ in range(3)])
        cfg = tight_config(2.0)
        _, _, plans, _, _, _ = solve_batch(a, B, M, cfg)
        for r in range(3):
            np.testing.assert_allclose(plans[r], sinkhorn_solve(a, B[r], M, cfg).plan, atol=1e-13)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            sinkhorn_solve([0.5, 0.5], [1.0], SWAP, SinkhornConfig(lam=1.0))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(0.5, 20.0), st.integers(0, 2**32 - 1))
def test_constant_cost_shift(n, m, lam, seed):
    rng = np.random.default_rng(seed)
    a, b, M = random_instance(rng, n, m)
    cfg = SinkhornConfig(lam=lam, max_iter=100000, marginal_tol=1e-12)
    s0, r0, _ = distances(a, b, M, cfg)
    s1, r1, _ = distances(a, b, M + 0.75, cfg)
    assert s1 - s0 == pytest.approx(0.75, abs=1e-8)
    assert r1 - r0 == pytest.approx(0.75, abs=1e-8)
