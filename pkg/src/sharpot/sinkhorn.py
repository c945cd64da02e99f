"""Entropic optimal transport by Sinkhorn scaling.

The solver works on a batch of problems sharing the same first marginal
and cost matrix (a common situation in barycenter and prediction
problems); single problems are the batch of size one.  Duals are returned
in the gauge where the potential of the last column with positive mass is
zero, so for strictly positive ``b`` this is ``beta[-1] == 0``.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import as_cost_matrix, as_histogram, entropy
from .exceptions import (
    InvalidInputError,
    InvalidParameterError,
    NonConvergenceError,
    NumericalOverflowError,
)

# above this lambda the auto mode switches to log-domain updates
LOG_DOMAIN_LAMBDA = 30.0
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class SinkhornConfig:
    """Solver settings.

    ``log_domain`` is ``"auto"``, ``True`` or ``False``.  The defaults stop
    once the plan is within ``1e-6`` (L1) of the transport polytope and
    allow 1000 iterations.
    """

    lam: float
    max_iter: int = 1000
    marginal_tol: float = 1e-6
    log_domain: object = "auto"

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidParameterError(f"lambda must be positive and finite, got {self.lam!r}")
        if not self.marginal_tol > 0:
            raise InvalidParameterError(f"marginal_tol must be positive, got {self.marginal_tol!r}")
        if int(self.max_iter) < 1:
            raise InvalidParameterError(f"max_iter must be >= 1, got {self.max_iter!r}")
        if self.log_domain not in ("auto", True, False):
            raise InvalidParameterError(f"log_domain must be 'auto', True or False, got {self.log_domain!r}")

    def replace(self, **changes):
        params = dict(lam=self.lam, max_iter=self.max_iter, marginal_tol=self.marginal_tol, log_domain=self.log_domain)
        params.update(changes)
        return SinkhornConfig(**params)


@dataclass(frozen=True)
class DualPotentials:
    alpha: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class SinkhornSolution:
    plan: np.ndarray
    duals: DualPotentials
    iterations: int
    residual: float
    log_domain: bool = field(default=False)


def _logsumexp(x, axis):
    mx = np.max(x, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - mx), axis=axis, keepdims=True)) + mx
    return np.squeeze(out, axis=axis)


def _resolve_log_domain(mode, lam, M, a, B):
    if mode is True or mode is False:
        return mode
    if lam > LOG_DOMAIN_LAMBDA:
        return True
    if np.any(a == 0) or np.any(B == 0):
        return True
    return bool(np.exp(-lam * M.max()) < _TINY)


def _gauge(alpha, beta, B):
    # shift so the last column with positive mass has zero potential
    ref = B.shape[1] - 1 - np.argmax((B > 0)[:, ::-1], axis=1)
    shift = beta[np.arange(B.shape[0]), ref]
    return alpha + shift[:, None], beta - shift[:, None]


def plan_from_duals(alpha, beta, M, lam):
    """Primal plan ``diag(e^{lam alpha}) e^{-lam M} diag(e^{lam beta})`` (batched on leading axis)."""
    with np.errstate(invalid="ignore"):
        expo = lam * (alpha[..., :, None] + beta[..., None, :] - M)
    expo = np.where(np.isnan(expo), -np.inf, expo)
    return np.exp(expo)


def _residuals(T, a, B):
    return np.abs(T.sum(axis=-1) - a).sum(axis=-1) + np.abs(T.sum(axis=-2) - B).sum(axis=-1)


def _linear_iterations(a, B, M, lam, tol, max_iter, beta0):
    K = np.exp(-lam * M)
    k = B.shape[0]
    v = np.ones((k, M.shape[1])) if beta0 is None else np.exp(lam * (beta0 - beta0.max(axis=1, keepdims=True)))
    residual = np.full(k, np.inf)
    it = 0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        while it < max_iter:
            it += 1
            Kv = v @ K.T
            u = a / Kv
            Ku = u @ K
            v = B / Ku
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))) or np.any(Kv <= 0) or np.any(Ku <= 0):
                raise NumericalOverflowError(
                    f"linear-domain Sinkhorn overflowed at lambda={lam:g}; use log_domain=True"
                )
            residual = np.abs(u * (v @ K.T) - a).sum(axis=1)
            if residual.max() <= tol:
                alpha = np.log(u) / lam
                beta = np.log(v) / lam
                T = u[:, :, None] * K * v[:, None, :]
                residual = _residuals(T, a, B)
                if residual.max() <= tol:
                    return alpha, beta, T, it, residual
    raise NonConvergenceError(
        f"Sinkhorn did not reach marginal tolerance {tol:g} in {max_iter} iterations "
        f"(residual {residual.max():.3e})",
        residual=float(residual.max()),
    )


def _log_iterations(a, B, M, lam, tol, max_iter, beta0):
    k, m = B.shape
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
        log_B = np.log(B)
    beta = np.zeros((k, m)) if beta0 is None else np.where(B > 0, beta0, -np.inf)
    beta = np.where(B > 0, beta, -np.inf)
    residual = np.full(k, np.inf)
    it = 0
    while it < max_iter:
        it += 1
        row_lse = _logsumexp(lam * (beta[:, None, :] - M), axis=2)
        alpha = (log_a - row_lse) / lam
        col_lse = _logsumexp(lam * (alpha[:, :, None] - M), axis=1)
        beta = np.where(B > 0, (log_B - col_lse) / lam, -np.inf)
        row_lse = _logsumexp(lam * (beta[:, None, :] - M), axis=2)
        with np.errstate(invalid="ignore"):
            log_rows = lam * alpha + row_lse
        rows = np.exp(np.where(np.isnan(log_rows), -np.inf, log_rows))
        residual = np.abs(rows - a).sum(axis=1)
        if residual.max() <= tol:
            T = plan_from_duals(alpha, beta, M, lam)
            residual = _residuals(T, a, B)
            if residual.max() <= tol:
                return alpha, beta, T, it, residual
    raise NonConvergenceError(
        f"log-domain Sinkhorn did not reach marginal tolerance {tol:g} in {max_iter} iterations "
        f"(residual {residual.max():.3e})",
        residual=float(residual.max()),
    )


def solve_batch(a, B, M, cfg, beta0=None):
    """Solve ``k`` entropic problems ``(a, B[r])`` with a shared cost.

    Parameters
    ----------
    a : ndarray, shape (n,)
    B : ndarray, shape (k, m)
        One target histogram per row.
    M : ndarray, shape (n, m)
    cfg : SinkhornConfig
    beta0 : ndarray, shape (k, m), optional
        Warm-start column potentials.

    Returns
    -------
    alpha, beta : ndarrays, shapes (k, n) and (k, m)
        Gauge-fixed duals.
    plans : ndarray, shape (k, n, m)
    iterations : int
    residuals : ndarray, shape (k,)
    log_domain : bool
        Which update rule produced the result.
    """
    lam = float(cfg.lam)
    log_mode = _resolve_log_domain(cfg.log_domain, lam, M, a, B)
    if not log_mode and (np.any(a <= 0) or np.any(B <= 0)):
        raise InvalidInputError("zero marginal entries require log_domain=True")
    if beta0 is not None and not np.all(np.isfinite(beta0[B > 0])):
        beta0 = None
    if not log_mode:
        try:
            alpha, beta, plans, it, res = _linear_iterations(a, B, M, lam, cfg.marginal_tol, int(cfg.max_iter), beta0)
        except NumericalOverflowError:
            if cfg.log_domain != "auto":
                raise
            log_mode = True
    if log_mode:
        alpha, beta, plans, it, res = _log_iterations(a, B, M, lam, cfg.marginal_tol, int(cfg.max_iter), beta0)
    # the gauge shift cancels in the plan
    alpha, beta = _gauge(alpha, beta, B)
    return alpha, beta, plans, it, res, log_mode


def _check_problem(a, b, M):
    a = as_histogram(a, name="a")
    b = as_histogram(b, name="b")
    M = as_cost_matrix(M, shape=(a.size, b.size))
    return a, b, M


def sinkhorn_solve(a, b, M, cfg):
    """Entropy-regularized transport plan and dual potentials for ``(a, b, M)``.

    Examples
    --------
    >>> sol = sinkhorn_solve([0.5, 0.5], [0.5, 0.5], [[0, 1], [1, 0]], SinkhornConfig(lam=1.0))
    >>> sol.plan.round(6)
    array([[0.365529, 0.134471],
           [0.134471, 0.365529]])
    """
    a, b, M = _check_problem(a, b, M)
    alpha, beta, plans, it, res, log_mode = solve_batch(a, b[None, :], M, cfg)
    return SinkhornSolution(
        plan=plans[0],
        duals=DualPotentials(alpha=alpha[0], beta=beta[0]),
        iterations=it,
        residual=float(res[0]),
        log_domain=log_mode,
    )


def sharp_distance(a, b, M, cfg):
    """Transport cost ``<T_lam, M>`` of the entropic optimal plan."""
    sol = sinkhorn_solve(a, b, M, cfg)
    return float(np.sum(sol.plan * np.asarray(M, dtype=float)))


def regularized_distance(a, b, M, cfg):
    """Entropic objective ``<T_lam, M> - h(T_lam) / lam`` at its optimum."""
    sol = sinkhorn_solve(a, b, M, cfg)
    return float(np.sum(sol.plan * np.asarray(M, dtype=float)) - entropy(sol.plan) / cfg.lam)


def distances(a, b, M, cfg):
    """Both distances from a single solve, as ``(sharp, regularized, solution)``."""
    sol = sinkhorn_solve(a, b, M, cfg)
    sharp = float(np.sum(sol.plan * np.asarray(M, dtype=float)))
    return sharp, sharp - entropy(sol.plan) / cfg.lam, sol
