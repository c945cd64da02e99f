"""Gradients of the Sinkhorn distances with respect to the first histogram.

The sharp gradient comes from implicit differentiation of the dual
optimality conditions.  With ``T`` the entropic plan, ``L = T * M`` and a
bar denoting "reference column removed", it reduces to one solve with

    H = diag(T 1) - Tbar diag(Tbar' 1)^{-1} Tbar'

a diagonal-plus-rank-(m-1) matrix, handled through its (m-1)x(m-1) Schur
complement so the cost is O(n m^2).

Columns of ``b`` with zero mass carry no plan mass and are dropped from
the system (equivalently: treated as decoupled unit rows of the Schur
complement), so ``b`` may sit on the simplex boundary.  ``a`` may not.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import as_cost_matrix, as_histogram, as_interior_histogram
from .exceptions import DegenerateInstanceError, InvalidInputError
from .sinkhorn import plan_from_duals, solve_batch


@dataclass(frozen=True)
class HessianBlocks:
    """Blocks of the reduced dual Hessian (divided by lambda).

    Attributes
    ----------
    d1 : ndarray, shape (n,)
        Row masses ``T 1``.
    tbar : ndarray, shape (n, m-1)
        Plan without its last column.
    d2inv : ndarray, shape (m-1,)
        Column masses ``Tbar' 1``.
    reduced_b : ndarray, shape (m-1,)
    """

    d1: np.ndarray
    tbar: np.ndarray
    d2inv: np.ndarray
    reduced_b: np.ndarray

    def assemble(self):
        """Dense symmetric ``(n+m-1) x (n+m-1)`` matrix ``[[diag(d1), Tbar], [Tbar', diag(d2inv)]]``."""
        n, r = self.tbar.shape
        H = np.zeros((n + r, n + r))
        H[:n, :n] = np.diag(self.d1)
        H[:n, n:] = self.tbar
        H[n:, :n] = self.tbar.T
        H[n:, n:] = np.diag(self.d2inv)
        return H


def dual_hessian(a, b, plan):
    """Hessian blocks of the reduced dual at the plan's potentials."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    plan = np.asarray(plan, dtype=float)
    if plan.shape != (a.size, b.size):
        raise InvalidInputError(f"plan shape {plan.shape} does not match marginals ({a.size}, {b.size})")
    tbar = plan[:, :-1]
    return HessianBlocks(d1=plan.sum(axis=1), tbar=tbar.copy(), d2inv=tbar.sum(axis=0), reduced_b=b[:-1].copy())


def dual_objective(alpha, beta_reduced, a, b, M, lam):
    """Convex reduced dual with the last column potential pinned at zero.

    ``-alpha.a - beta.b[:-1] + (1/lam) sum_ij exp(-lam (M_ij - alpha_i - beta_j))``.
    Its minimizer gives the entropic plan; its Hessian equals ``lam`` times
    the blocks returned by :func:`dual_hessian`.
    """
    beta = np.append(beta_reduced, 0.0)
    T = plan_from_duals(np.asarray(alpha, float), beta, M, lam)
    return float(-np.dot(alpha, a) - np.dot(beta_reduced, b[:-1]) + T.sum() / lam)


def dual_objective_gradient(alpha, beta_reduced, a, b, M, lam):
    """Gradient of :func:`dual_objective`: ``(T 1 - a, Tbar' 1 - b[:-1])``."""
    beta = np.append(beta_reduced, 0.0)
    T = plan_from_duals(np.asarray(alpha, float), beta, M, lam)
    return np.concatenate([T.sum(axis=1) - a, T[:, :-1].sum(axis=0) - b[:-1]])


def _cholesky(S):
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise DegenerateInstanceError("Schur complement is not numerically positive definite") from exc


def _chol_solve(L, rhs):
    y = np.linalg.solve(L, rhs[..., None])
    return np.linalg.solve(np.swapaxes(L, -1, -2), y)[..., 0]


def _mv(A, x):
    return (A @ x[..., None])[..., 0]


def _mtv(A, x):
    return (x[..., None, :] @ A)[..., 0, :]


def _apply_h(d1, tbar, d2inv, g):
    return d1 * g - _mv(tbar, _mtv(tbar, g) / d2inv)


def _woodbury_solve(d1, tbar, d2inv, f):
    """Batched ``(diag(d1) - Tbar diag(d2inv)^{-1} Tbar') g = f`` via the Schur complement."""
    scaled = tbar / d1[..., :, None]
    S = -(np.swapaxes(tbar, -1, -2) @ scaled)
    idx = np.arange(tbar.shape[-1])
    S[..., idx, idx] += d2inv
    L = _cholesky(S)
    # one batched triangular inverse, then only matrix products per right-hand side
    Linv = np.linalg.solve(L, np.broadcast_to(np.eye(L.shape[-1]), L.shape))

    def solve(rhs):
        y = rhs / d1
        z = _mtv(Linv, _mv(Linv, _mtv(tbar, y)))
        return y + _mv(scaled, z)

    g = solve(f)
    g = g + solve(f - _apply_h(d1, tbar, d2inv, g))
    return g


def _dense_solve(d1, tbar, d2inv, f):
    H = -((tbar / d2inv[..., None, :]) @ np.swapaxes(tbar, -1, -2))
    idx = np.arange(d1.shape[-1])
    H[..., idx, idx] += d1
    L = _cholesky(H)
    g = _chol_solve(L, f)
    return g + _chol_solve(L, f - _apply_h(d1, tbar, d2inv, g))


def _reduced_solve(d1, tbar, d2inv, f):
    if tbar.shape[-1] == 0:
        g = f / d1
    elif tbar.shape[-1] < d1.shape[-1]:
        g = _woodbury_solve(d1, tbar, d2inv, f)
    else:
        g = _dense_solve(d1, tbar, d2inv, f)
    if not np.all(np.isfinite(g)):
        raise DegenerateInstanceError("reduced system produced non-finite values")
    return g


def solve_reduced(blocks, f):
    """Solve ``(D1 - Tbar D2 Tbar') g = f`` for one instance.

    Uses the (m-1)-dimensional Schur complement when ``m <= n`` and a
    dense Cholesky factorization of the n x n matrix otherwise.
    """
    f = np.asarray(f, dtype=float)
    if np.any(blocks.d1 <= 0) or np.any(blocks.d2inv <= 0):
        raise DegenerateInstanceError("Hessian blocks have non-positive diagonal masses")
    return _reduced_solve(blocks.d1[None], blocks.tbar[None], blocks.d2inv[None], f[None])[0]


def tangent_project(g):
    """Orthogonal projection onto ``{x : sum(x) = 0}`` (along the last axis)."""
    g = np.asarray(g, dtype=float)
    return g - g.mean(axis=-1, keepdims=True)


def sharp_gradient_from_plans(plans, M, B):
    """Batched sharp gradient from entropic plans.

    Parameters
    ----------
    plans : ndarray, shape (k, n, m)
    M : ndarray, shape (n, m)
    B : ndarray, shape (k, m)
        Column marginals; zero entries are dropped from the linear system.

    Returns
    -------
    ndarray, shape (k, n)
        Tangent gradients.
    """
    k, n, m = plans.shape
    ref = m - 1 - np.argmax((B > 0)[:, ::-1], axis=1)
    keep = B > 0
    keep[np.arange(k), ref] = False
    L = plans * M
    tbar = plans * keep[:, None, :]
    col_mass = tbar.sum(axis=1)
    d2inv = np.where(keep, col_mass, 1.0)
    if np.any(col_mass[keep] <= 0):
        raise DegenerateInstanceError("plan has an empty column with positive target mass")
    d1 = plans.sum(axis=2)
    if np.any(d1 <= 0):
        raise DegenerateInstanceError("plan has an empty row; the first histogram must be interior")
    col_L = np.where(keep, L.sum(axis=1), 0.0)
    f = L.sum(axis=2) - _mv(tbar, col_L / d2inv)
    # masked columns are decoupled unit rows, so the Schur system has size m here
    if m == 1:
        g = f / d1
    elif m <= n:
        g = _woodbury_solve(d1, tbar, d2inv, f)
    else:
        g = _dense_solve(d1, tbar, d2inv, f)
    if not np.all(np.isfinite(g)):
        raise DegenerateInstanceError("reduced system produced non-finite values")
    return tangent_project(g)


def _check(a, b, M):
    a = as_interior_histogram(a, name="a")
    b = as_histogram(b, name="b")
    M = as_cost_matrix(M, shape=(a.size, b.size))
    return a, b, M


def sharp_gradient(a, b, M, cfg):
    """Gradient in ``a`` of the sharp Sinkhorn distance, as a tangent vector.

    ``a`` must be strictly positive; ``b`` may contain zeros.
    """
    a, b, M = _check(a, b, M)
    _, _, plans, _, _, _ = solve_batch(a, b[None], M, cfg)
    return sharp_gradient_from_plans(plans, M, b[None])[0]


def regularized_gradient(a, b, M, cfg):
    """Gradient in ``a`` of the regularized distance: the row potential, centered."""
    a, b, M = _check(a, b, M)
    alpha, _, _, _, _, _ = solve_batch(a, b[None], M, cfg)
    return tangent_project(alpha[0])


def tangent_directional_derivatives(fun, a, directions, step=1e-5):
    """Central differences ``(fun(a + h v) - fun(a - h v)) / 2h`` for each direction ``v``.

    Directions are centered first so the perturbed points stay on the
    simplex.
    """
    a = np.asarray(a, dtype=float)
    out = []
    for v in np.atleast_2d(directions):
        v = tangent_project(v)
        out.append((fun(a + step * v) - fun(a - step * v)) / (2 * step))
    return np.array(out)


def finite_difference_gradient(fun, a, step=1e-5):
    """Tangent gradient estimate using the directions ``e_i - 1/n``."""
    n = len(a)
    return tangent_directional_derivatives(fun, a, np.eye(n), step=step)
