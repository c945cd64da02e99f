"""Histograms, cost matrices, simplex geometry and the transport entropy.

Histograms are plain 1-D float arrays and cost matrices plain 2-D float
arrays; the ``as_*`` helpers validate them once at the API boundary and
return float64 copies that the rest of the package can trust.
"""

import numpy as np

from .exceptions import InvalidInputError, InvalidParameterError

#: Absolute tolerance on ``sum(p) == 1`` for a histogram.
SUM_TOL = 1e-12


def as_histogram(p, name="histogram", atol=SUM_TOL):
    """Validate ``p`` as a point of the probability simplex.

    Inputs whose sum is off by more than ``atol`` are rejected, never
    silently renormalized.
    """
    p = np.array(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-D array, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError(f"{name} has non-finite entries")
    if np.any(p < 0):
        raise InvalidInputError(f"{name} has negative entries")
    total = p.sum()
    if abs(total - 1.0) > atol:
        raise InvalidInputError(f"{name} sums to {total!r}, expected 1 within {atol:g}")
    return p


def as_interior_histogram(p, epsilon=0.0, name="histogram", atol=SUM_TOL):
    """Validate ``p`` as a histogram with every entry ``> 0`` and ``>= epsilon``."""
    p = as_histogram(p, name=name, atol=atol)
    if np.any(p <= 0) or np.any(p < epsilon):
        raise InvalidInputError(
            f"{name} must lie in the interior of the simplex (min entry {p.min():g}, epsilon {epsilon:g})"
        )
    return p


def as_cost_matrix(M, shape=None, name="cost"):
    """Validate a nonnegative finite cost matrix, optionally of a given shape."""
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    if np.any(M < 0):
        raise InvalidInputError(f"{name} has negative entries")
    if shape is not None and M.shape != tuple(shape):
        raise InvalidInputError(f"{name} has shape {M.shape}, expected {tuple(shape)}")
    return M


def _project_scaled_simplex(v, radius):
    # sort-and-threshold: p = max(v - tau, 0) with sum(p) = radius
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    p = np.maximum(v - tau, 0.0)
    # v - tau cancels badly for large |v|; restore the exact mass
    return p * (radius / p.sum())


def simplex_project(v, epsilon=0.0):
    """Euclidean projection onto the simplex, or onto its ``epsilon``-interior.

    Parameters
    ----------
    v : array_like, shape (n,)
        Finite vector.
    epsilon : float, default=0.0
        Lower bound on every coordinate of the result; must satisfy
        ``0 <= epsilon < 1/n`` (``epsilon = 1/n`` is allowed and returns
        the uniform histogram).

    Returns
    -------
    p : ndarray, shape (n,)
        The unique minimizer of ``||p - v||_2`` over
        ``{p : p_i >= epsilon, sum(p) = 1}``.
    """
    v = np.array(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInputError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("cannot project a vector with non-finite entries")
    n = v.size
    if epsilon < 0 or epsilon * n > 1 + 1e-15:
        raise InvalidParameterError(f"epsilon={epsilon!r} outside [0, 1/n] for n={n}")
    # points already in the set (up to rounding) are returned as is, which makes
    # the projection exactly idempotent
    if v.min() >= epsilon and abs(v.sum() - 1.0) <= 4 * n * np.finfo(float).eps:
        return v
    radius = 1.0 - n * epsilon
    if radius <= 0:
        return np.full(n, 1.0 / n)
    return epsilon + _project_scaled_simplex(v - epsilon, radius)


def clip_to_interior(p, epsilon):
    """Move a histogram into ``{q in simplex : q_i >= epsilon}``.

    The result is the closest point of that set in Euclidean norm, which
    leaves inputs already inside it untouched and keeps every coordinate
    at least ``epsilon`` after the sum is restored to one.
    """
    p = np.asarray(p, dtype=float)
    n = p.size
    if not 0 < epsilon < 1.0 / n:
        raise InvalidParameterError(f"epsilon must lie in (0, 1/n) = (0, {1.0 / n:g}), got {epsilon!r}")
    if np.all(p >= epsilon) and abs(p.sum() - 1.0) <= SUM_TOL:
        return p.copy()
    return simplex_project(p, epsilon)


def cost_from_points(xs, ys, p=2.0):
    """Ground cost ``M_ij = ||x_i - y_j||_2 ** p``.

    ``xs`` and ``ys`` may be 1-D (scalar points) or 2-D ``(n_points, d)``.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size == 0 or ys.size == 0:
        raise InvalidInputError("point lists must be non-empty")
    if xs.ndim == 1:
        xs = xs[:, None]
    if ys.ndim == 1:
        ys = ys[:, None]
    if xs.shape[1] != ys.shape[1]:
        raise InvalidInputError(f"point dimensions differ: {xs.shape[1]} vs {ys.shape[1]}")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise InvalidInputError("points must be finite")
    if p < 1:
        raise InvalidParameterError(f"exponent p must be >= 1, got {p!r}")
    diff = xs[:, None, :] - ys[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    if p == 2:
        return sq
    return np.sqrt(sq) ** p


def grid_cost(n, p=2.0, normalize=False):
    """Cost between the integer points ``0..n-1``; optionally rescaled to ``[0, 1]``."""
    x = np.arange(n, dtype=float)
    if normalize and n > 1:
        x = x / (n - 1)
    return cost_from_points(x, x, p=p)


def entropy(T):
    """Transport entropy ``-sum T_ij (log T_ij - 1)`` with ``0 log 0 = 0``."""
    T = np.asarray(T, dtype=float)
    pos = T > 0
    t = T[pos]
    return float(-np.sum(t * (np.log(t) - 1.0)))


def marginal_residual(T, a, b):
    """L1 distance of ``T`` to the transportation polytope constraints of ``(a, b)``."""
    T = np.asarray(T)
    return float(np.abs(T.sum(axis=1) - a).sum() + np.abs(T.sum(axis=0) - b).sum())
