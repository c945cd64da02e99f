"""Reproducible numerical studies built on the solvers.

* the rate study: distance gaps to the exact Wasserstein value as lambda grows;
* two Dirac masses on a line, whose sharp barycenter is the midpoint spike;
* sparse-support barycenters compared under the exact functional;
* learning curves for the synthetic histogram regression task.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .barycenter import (
    BarycenterConfig,
    BarycenterProblem,
    barycenter_functional,
    delta_pair_regularized_closed_form,
    regularized_barycenter_ibp,
    sharp_barycenter_gd,
    warn_on_stall,
)
from .core import grid_cost
from .exact import exact_wasserstein
from .exceptions import SharpOTError
from .sinkhorn import SinkhornConfig, distances

RATE_STUDY_HEADER = ("lambda", "sharp_gap", "regularized_gap", "iterations")


@dataclass(frozen=True)
class RateStudyRecord:
    lam: float
    sharp_gap: float
    regularized_gap: float
    iterations: int

    def as_row(self):
        return (self.lam, self.sharp_gap, self.regularized_gap, self.iterations)


def run_rate_study(a, b, M, lambdas, cfg=None):
    """Gaps ``|S - W|`` and ``|S_reg - W|`` for each lambda.

    ``W`` comes from the exact oracle, computed once.  A lambda whose
    Sinkhorn solve fails is recorded with NaN gaps and ``iterations = -1``.

    Returns
    -------
    records : list of RateStudyRecord
    exact_value : float
    """
    cfg = cfg or SinkhornConfig(lam=1.0, max_iter=100000, marginal_tol=1e-12)
    W = exact_wasserstein(a, b, M).value
    records = []
    for lam in lambdas:
        try:
            sharp, reg, sol = distances(a, b, M, cfg.replace(lam=float(lam)))
        except SharpOTError:
            records.append(RateStudyRecord(float(lam), float("nan"), float("nan"), -1))
            continue
        records.append(RateStudyRecord(float(lam), abs(sharp - W), abs(reg - W), sol.iterations))
    return records, W


def rate_slopes(records, floor=1e-10):
    """Least-squares slopes of ``log(sharp_gap)`` vs lambda and ``log(regularized_gap)`` vs ``log(lambda)``.

    Sharp gaps at or below ``floor`` (the solver tolerance) are left out
    of the first fit.
    """
    lam = np.array([r.lam for r in records])
    sg = np.array([r.sharp_gap for r in records])
    rg = np.array([r.regularized_gap for r in records])
    keep = np.isfinite(sg) & (sg > floor)
    sharp_slope = np.polyfit(lam[keep], np.log(sg[keep]), 1)[0] if keep.sum() >= 2 else float("nan")
    keep = np.isfinite(rg) & (rg > 0)
    reg_slope = np.polyfit(np.log(lam[keep]), np.log(rg[keep]), 1)[0] if keep.sum() >= 2 else float("nan")
    return float(sharp_slope), float(reg_slope)


def random_rate_instance(seed, n=5, max_cost=6):
    """Seeded interior histograms with an integer-valued cost (zero diagonal)."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.5, 1.5, n)
    b = rng.uniform(0.5, 1.5, n)
    M = rng.integers(1, max_cost + 1, size=(n, n)).astype(float)
    np.fill_diagonal(M, 0.0)
    return a / a.sum(), b / b.sum(), M


# two Dirac masses ------------------------------------------------------------


def dirac_pair_problem(n=21):
    """Diracs at the two ends of the integer grid ``0..n-1`` with squared cost."""
    first = np.zeros(n)
    first[0] = 1.0
    last = np.zeros(n)
    last[-1] = 1.0
    return BarycenterProblem([first, last], grid_cost(n))


def run_dirac_pair(lambdas=(0.5, 1.0, 5.0), n=21, cfg=None):
    """Sharp and regularized barycenters of the Dirac pair for each lambda.

    Returns a dict ``lambda -> (sharp, regularized, closed_form)`` where the
    closed form is the analytic regularized barycenter.
    """
    prob = dirac_pair_problem(n)
    M = prob.costs[0]
    out = {}
    for lam in lambdas:
        reg = regularized_barycenter_ibp(prob, lam, tol=1e-12)
        sharp, _ = warn_on_stall(sharp_barycenter_gd, prob, lam, cfg=cfg)
        out[lam] = (sharp, reg, delta_pair_regularized_closed_form(M[:, 0], M[:, -1], lam))
    return out


# sparse-support barycenters ------------------------------------------------------


def sparse_measures(n, k, count, rng):
    """``count`` histograms on ``n`` bins, each supported on ``k`` consecutive bins."""
    out = []
    for _ in range(count):
        start = rng.integers(0, n - k + 1)
        h = np.zeros(n)
        h[start : start + k] = rng.uniform(0.1, 1.0, k)
        out.append(h / h.sum())
    return out


@dataclass(frozen=True)
class SparseTrial:
    k: int
    seed: int
    ibp_exact: float
    sharp_exact: float
    sharp_iterations: int

    @property
    def improvement(self):
        return self.ibp_exact - self.sharp_exact


def sparse_barycenter_trial(k, seed, n=30, count=10, lam=0.1, max_iter=100):
    """Regularized (IBP) versus sharp barycenter, both scored by the exact functional.

    The sharp descent starts from the IBP output.
    """
    rng = np.random.default_rng(seed)
    prob = BarycenterProblem(sparse_measures(n, k, count, rng), grid_cost(n))
    ibp = regularized_barycenter_ibp(prob, lam)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sharp, trace = warn_on_stall(sharp_barycenter_gd, prob, lam, init=ibp, cfg=BarycenterConfig(max_iter=max_iter))
    return SparseTrial(
        k=k,
        seed=seed,
        ibp_exact=barycenter_functional(ibp, prob, "exact"),
        sharp_exact=barycenter_functional(sharp, prob, "exact"),
        sharp_iterations=trace.iterations,
    )


# learning curves ----------------------------------------------------------------


def learning_curve(ells, seeds, n_test=10, sigma=0.01, lam=20.0, metric="sharp"):
    """Mean held-out sharp loss per training size, ``gamma = ell ** -0.5``.

    Returns
    -------
    losses : ndarray, shape (len(ells), len(seeds))
    residuals : ndarray, shape (len(ells), len(seeds))
        Max residual of the kernel ridge system on the test inputs.
    """
    from .learning import SinkhornRegressor, gaussian_histogram_task

    losses = np.empty((len(ells), len(seeds)))
    residuals = np.empty_like(losses)
    for i, ell in enumerate(ells):
        for j, seed in enumerate(seeds):
            X, Y = gaussian_histogram_task(ell, seed=seed)
            Xt, Yt = gaussian_histogram_task(n_test, seed=10_000 + seed)
            est = SinkhornRegressor(sigma=sigma, gamma=ell**-0.5, metric=metric, lam=lam).fit(X, Y)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                losses[i, j] = -est.score(Xt, Yt)
            residuals[i, j] = est.weight_model_.residual(Xt)
    return losses, residuals
