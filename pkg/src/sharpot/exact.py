"""Exact discrete Wasserstein distance for small instances.

Transportation simplex on the ``n x m`` tableau: a northwest-corner
basis (always a spanning tree of the row/column bipartite graph,
degenerate cells included), potentials ``u_i + v_j = M_ij`` on the tree,
and cycle pivots.  Pricing is Dantzig's rule; after a run of degenerate
pivots it switches to Bland's rule so cycling cannot occur.  The result
carries a certificate that the recovered prices are dual feasible.
"""

from dataclasses import dataclass

import numpy as np

from .core import as_cost_matrix, as_histogram
from .exceptions import InvalidInputError, NonConvergenceError, OutOfScaleError

MAX_CELLS = 2500
_DEGENERATE_RUN = 50


@dataclass(frozen=True)
class ExactSolution:
    value: float
    plan: np.ndarray
    certificate: bool
    pivots: int


def _northwest_corner(a, b):
    n, m = a.size, b.size
    x = np.zeros((n, m))
    basis = []
    supply, demand = a.copy(), b.copy()
    i = j = 0
    while True:
        if i == n - 1 and j == m - 1:
            x[i, j] = max(min(supply[i], demand[j]), 0.0)
            basis.append((i, j))
            break
        if j == m - 1 or (i < n - 1 and supply[i] <= demand[j]):
            q = supply[i]
            x[i, j] = q
            demand[j] -= q
            basis.append((i, j))
            i += 1
        else:
            q = demand[j]
            x[i, j] = q
            supply[i] -= q
            basis.append((i, j))
            j += 1
    return x, basis


class _Tree:
    """Basis cells as a spanning tree over nodes 0..n-1 (rows) and n..n+m-1 (columns)."""

    def __init__(self, n, m, cells):
        self.n, self.m = n, m
        self.adj = [set() for _ in range(n + m)]
        for i, j in cells:
            self.add(i, j)

    def add(self, i, j):
        self.adj[i].add(self.n + j)
        self.adj[self.n + j].add(i)

    def remove(self, i, j):
        self.adj[i].discard(self.n + j)
        self.adj[self.n + j].discard(i)

    def potentials(self, M):
        n = self.n
        u = np.zeros(n)
        v = np.zeros(self.m)
        parent = [-1] * (n + self.m)
        depth = [0] * (n + self.m)
        seen = [False] * (n + self.m)
        seen[0] = True
        stack = [0]
        while stack:
            node = stack.pop()
            for nb in self.adj[node]:
                if seen[nb]:
                    continue
                seen[nb] = True
                parent[nb] = node
                depth[nb] = depth[node] + 1
                if node < n:
                    v[nb - n] = M[node, nb - n] - u[node]
                else:
                    u[nb] = M[nb, node - n] - v[node - n]
                stack.append(nb)
        if not all(seen):
            raise InvalidInputError("basis is not a spanning tree")
        return u, v, parent, depth

    def cycle(self, i, j, parent, depth):
        """Tree path closing the cycle of entering cell ``(i, j)``, starting at column ``j``."""
        n = self.n
        p, q = i, n + j
        up_q, up_p = [], []
        while depth[q] > depth[p]:
            up_q.append((q, parent[q]))
            q = parent[q]
        while depth[p] > depth[q]:
            up_p.append((p, parent[p]))
            p = parent[p]
        while p != q:
            up_q.append((q, parent[q]))
            q = parent[q]
            up_p.append((p, parent[p]))
            p = parent[p]
        edges = up_q + [(y, x) for x, y in reversed(up_p)]
        cells = []
        for s, t in edges:
            r, c = (s, t - n) if s < n else (t, s - n)
            cells.append((r, c))
        return cells


def exact_wasserstein(a, b, M, tol=1e-12, max_pivots=None):
    """Optimal value and vertex plan of ``min <T, M>`` over the transportation polytope.

    Parameters
    ----------
    a, b : array_like
        Histograms of sizes ``n`` and ``m``, with ``n * m <= 2500``.
    M : array_like, shape (n, m)
    tol : float, default=1e-12
        Optimality tolerance on reduced costs, relative to ``max(1, max M)``.

    Returns
    -------
    ExactSolution
    """
    a = as_histogram(a, name="a")
    b = as_histogram(b, name="b")
    M = as_cost_matrix(M, shape=(a.size, b.size))
    n, m = M.shape
    if n * m > MAX_CELLS:
        raise OutOfScaleError(f"exact oracle limited to n*m <= {MAX_CELLS}, got {n}x{m}")
    x, cells = _northwest_corner(a, b)
    tree = _Tree(n, m, cells)
    basic = np.zeros((n, m), dtype=bool)
    for i, j in cells:
        basic[i, j] = True
    thresh = tol * max(1.0, float(M.max()))
    max_pivots = max_pivots or 20 * n * m + 1000
    pivots = 0
    degenerate_run = 0
    while True:
        u, v, parent, depth = tree.potentials(M)
        reduced = M - u[:, None] - v[None, :]
        reduced[basic] = 0.0
        if degenerate_run < _DEGENERATE_RUN:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -thresh:
                break
        else:
            candidates = np.flatnonzero(reduced < -thresh)
            if candidates.size == 0:
                break
            flat = int(candidates[0])
        if pivots >= max_pivots:
            raise NonConvergenceError(f"transportation simplex exceeded {max_pivots} pivots")
        ei, ej = divmod(flat, m)
        path = tree.cycle(ei, ej, parent, depth)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(x[c] for c in minus)
        leaving = min((c for c in minus if x[c] <= theta), key=lambda c: c[0] * m + c[1])
        for c in plus:
            x[c] += theta
        for c in minus:
            x[c] = max(x[c] - theta, 0.0)
        x[ei, ej] = theta
        x[leaving] = 0.0
        basic[leaving] = False
        basic[ei, ej] = True
        tree.remove(*leaving)
        tree.add(ei, ej)
        pivots += 1
        degenerate_run = degenerate_run + 1 if theta == 0 else 0

    x[~basic] = 0.0
    value = float(np.sum(x * M))
    u, v, _, _ = tree.potentials(M)
    reduced = M - u[:, None] - v[None, :]
    residual = np.abs(x.sum(axis=1) - a).sum() + np.abs(x.sum(axis=0) - b).sum()
    dual_value = float(u @ a + v @ b)
    certificate = bool(
        reduced.min() >= -thresh
        and np.all(np.abs(reduced[x > 0]) <= thresh)
        and np.all(x >= 0)
        and residual <= 1e-10
        and abs(dual_value - value) <= 1e-9 * max(1.0, abs(value))
    )
    return ExactSolution(value=value, plan=x, certificate=certificate, pivots=pivots)


def wasserstein_1d(xs, a, ys, b):
    """W1 between two measures on the real line via ``integral |F_a - F_b|``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    z = np.concatenate([xs, ys])
    w = np.concatenate([a, -b])
    order = np.argsort(z, kind="stable")
    z, w = z[order], w[order]
    cdf_gap = np.cumsum(w)[:-1]
    return float(np.sum(np.abs(cdf_gap) * np.diff(z)))
