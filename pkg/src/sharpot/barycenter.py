"""Fixed-support barycenters under the sharp and regularized Sinkhorn distances."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import as_cost_matrix, as_histogram, simplex_project
from .exact import exact_wasserstein
from .exceptions import InvalidInputError, InvalidParameterError, NonConvergenceError, StallError
from .grad import sharp_gradient_from_plans, tangent_project
from .sinkhorn import LOG_DOMAIN_LAMBDA, SinkhornConfig, _logsumexp, solve_batch

METRICS = ("sharp", "regularized", "exact")


@dataclass
class BarycenterProblem:
    """Measures ``nu_i`` with costs ``M_i`` (``n x m_i``) and weights ``w_i``.

    ``costs`` is either one ``n x m`` array shared by every measure or a
    list with one matrix per measure.  ``relaxed=True`` admits signed
    weights that need not sum to one.
    """

    measures: list
    costs: object
    weights: object = None
    relaxed: bool = False
    groups: list = field(init=False, repr=False)

    def __post_init__(self):
        measures = [as_histogram(nu, name=f"measure {i}") for i, nu in enumerate(self.measures)]
        if not measures:
            raise InvalidInputError("at least one measure is required")
        shared = not isinstance(self.costs, (list, tuple))
        costs = [as_cost_matrix(self.costs)] * len(measures) if shared else [as_cost_matrix(M) for M in self.costs]
        if len(costs) != len(measures):
            raise InvalidInputError(f"{len(costs)} cost matrices for {len(measures)} measures")
        n = costs[0].shape[0]
        for i, (nu, M) in enumerate(zip(measures, costs)):
            if M.shape != (n, nu.size):
                raise InvalidInputError(f"cost {i} has shape {M.shape}, expected ({n}, {nu.size})")
        if self.weights is None:
            w = np.full(len(measures), 1.0 / len(measures))
        else:
            w = np.asarray(self.weights, dtype=float).ravel()
        if w.size != len(measures) or not np.all(np.isfinite(w)):
            raise InvalidInputError("weights must be finite, one per measure")
        if not self.relaxed and (np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12):
            raise InvalidInputError("weights must be nonnegative and sum to 1 (use relaxed=True for signed weights)")
        self.measures, self.costs, self.weights = measures, costs, w
        self.support_size = n
        self.groups = []
        for i, M in enumerate(costs):
            for grp in self.groups:
                if grp[0] is M or (grp[0].shape == M.shape and np.array_equal(grp[0], M)):
                    grp[1].append(i)
                    break
            else:
                self.groups.append((M, [i]))
        self.groups = [(M, np.array(idx), np.stack([measures[i] for i in idx]), w[idx]) for M, idx in self.groups]

    @property
    def max_cost(self):
        return max(float(M.max()) for M in self.costs)


@dataclass
class BarycenterConfig:
    """Settings for the projected gradient barycenter solver.

    ``epsilon`` and ``step0`` default to ``1e-8 / n`` and
    ``1 / (lam * max M)``.
    """

    grad_tol: float = 1e-6
    max_iter: int = 500
    epsilon: float = None
    step0: float = None
    backtrack: float = 0.5
    sufficient_decrease: float = 1e-4
    marginal_tol: float = 1e-10
    sinkhorn_max_iter: int = 20000
    log_domain: object = "auto"


@dataclass
class SolverTrace:
    objective: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    grad_norm: float = float("nan")
    iterations: int = 0
    restarts: int = 0
    converged: bool = False
    reason: str = ""


def _batch_entropy(plans):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(plans > 0, plans * (np.log(plans) - 1.0), 0.0)
    return -terms.sum(axis=(1, 2))


class _Objective:
    """``mu -> sum_i w_i S(mu, nu_i)`` with warm-started duals per group."""

    def __init__(self, prob, lam, sk_cfg, metric):
        self.prob = prob
        self.lam = lam
        self.cfg = sk_cfg
        self.metric = metric
        self.beta = [None] * len(prob.groups)
        self.evaluations = 0

    def __call__(self, mu, grad=True):
        self.evaluations += 1
        total = 0.0
        g = np.zeros(mu.size)
        for gi, (M, _, B, w) in enumerate(self.prob.groups):
            alpha, beta, plans, _, _, _ = solve_batch(mu, B, M, self.cfg, beta0=self.beta[gi])
            self.beta[gi] = beta
            vals = np.einsum("kij,ij->k", plans, M)
            if self.metric == "regularized":
                vals = vals - _batch_entropy(plans) / self.lam
            total += float(w @ vals)
            if grad:
                if self.metric == "sharp":
                    G = sharp_gradient_from_plans(plans, M, B)
                else:
                    G = tangent_project(alpha)
                g += w @ G
        return total, g


def barycenter_functional(mu, prob, metric, lam=None, cfg=None):
    """``sum_i w_i D(mu, nu_i)`` for ``D`` the sharp, regularized or exact distance."""
    if metric not in METRICS:
        raise InvalidParameterError(f"metric must be one of {METRICS}, got {metric!r}")
    mu = as_histogram(mu, name="mu")
    if metric == "exact":
        return float(sum(w * exact_wasserstein(mu, nu, M).value for w, nu, M in zip(prob.weights, prob.measures, prob.costs)))
    if lam is None:
        raise InvalidParameterError("lambda is required for Sinkhorn metrics")
    cfg = cfg or SinkhornConfig(lam=lam)
    value, _ = _Objective(prob, lam, cfg, metric)(mu, grad=False)
    return value


def _use_log_domain(mode, lam, prob):
    if mode in (True, False):
        return mode
    if lam > LOG_DOMAIN_LAMBDA:
        return True
    return bool(np.exp(-lam * prob.max_cost) < np.finfo(float).tiny)


def regularized_barycenter_ibp(prob, lam, tol=1e-9, max_iter=10000, log_domain="auto"):
    """Regularized barycenter by iterative Bregman projections.

    Alternates the column scaling of every coupling with the geometric-mean
    update ``a = prod_i (u_i * K_i v_i) ** w_i`` of the shared row marginal.
    Stops when two successive iterates differ by at most ``tol`` in L1.
    """
    w = prob.weights
    if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
        raise InvalidInputError("IBP needs positive weights summing to 1")
    n = prob.support_size
    log_mode = _use_log_domain(log_domain, lam, prob)
    a = np.full(n, 1.0 / n)
    delta = np.inf
    if log_mode:
        f = [np.zeros((B.shape[0], n)) for _, _, B, _ in prob.groups]
        with np.errstate(divide="ignore"):
            logB = [np.log(B) for _, _, B, _ in prob.groups]
        for it in range(1, max_iter + 1):
            log_a = np.zeros(n)
            lse_rows = []
            for gi, (M, _, B, wg) in enumerate(prob.groups):
                g = (logB[gi] - _logsumexp(lam * (f[gi][:, :, None] - M), axis=1)) / lam
                lse = _logsumexp(lam * (g[:, None, :] - M), axis=2)
                log_a += wg @ (lam * f[gi] + lse)
                lse_rows.append(lse)
            for gi in range(len(prob.groups)):
                f[gi] = (log_a - lse_rows[gi]) / lam
            a_new = np.exp(log_a)
            delta = np.abs(a_new - a).sum()
            a = a_new
            if delta <= tol:
                return a / a.sum()
    else:
        Ks = [np.exp(-lam * M) for M, _, _, _ in prob.groups]
        u = [np.ones((B.shape[0], n)) for _, _, B, _ in prob.groups]
        for it in range(1, max_iter + 1):
            log_a = np.zeros(n)
            Kvs = []
            for gi, (M, _, B, wg) in enumerate(prob.groups):
                v = B / (u[gi] @ Ks[gi])
                Kv = v @ Ks[gi].T
                log_a += wg @ np.log(u[gi] * Kv)
                Kvs.append(Kv)
            a_new = np.exp(log_a)
            for gi in range(len(prob.groups)):
                u[gi] = a_new / Kvs[gi]
            if not np.all(np.isfinite(a_new)):
                raise NonConvergenceError("linear-domain IBP overflowed; use log_domain=True", iterate=a)
            delta = np.abs(a_new - a).sum()
            a = a_new
            if delta <= tol:
                return a / a.sum()
    raise NonConvergenceError(
        f"IBP did not converge in {max_iter} iterations (last change {delta:.3e})", residual=float(delta), iterate=a / a.sum()
    )


def barycenter_gd(prob, lam, init=None, cfg=None, metric="sharp"):
    """Accelerated projected gradient descent on ``mu -> sum_i w_i S(mu, nu_i)``.

    Nesterov momentum with restart whenever the objective would increase,
    backtracking (halving) until an Armijo condition holds, projection on
    ``{mu_i >= epsilon}`` each step.  Stops when the gradient mapping norm
    falls below ``cfg.grad_tol`` or after ``cfg.max_iter`` iterations, and
    returns the best iterate with its trace.

    Raises
    ------
    StallError
        When a plain projected gradient step from the current iterate
        finds no decrease even at the minimum step.
    """
    if metric not in ("sharp", "regularized"):
        raise InvalidParameterError(f"metric must be 'sharp' or 'regularized', got {metric!r}")
    cfg = cfg or BarycenterConfig()
    n = prob.support_size
    eps = cfg.epsilon if cfg.epsilon is not None else 1e-8 / n
    step0 = cfg.step0 if cfg.step0 is not None else 1.0 / (lam * max(prob.max_cost, 1e-12))
    min_step = step0 * 1e-10
    sk_cfg = SinkhornConfig(
        lam=lam, max_iter=cfg.sinkhorn_max_iter, marginal_tol=cfg.marginal_tol, log_domain=cfg.log_domain
    )
    F = _Objective(prob, lam, sk_cfg, metric)
    # evaluation error from the marginal tolerance, allowed in the decrease test
    noise = 4.0 * cfg.marginal_tol * float(np.abs(prob.weights).sum()) * prob.max_cost

    x = simplex_project(np.full(n, 1.0 / n) if init is None else np.asarray(init, dtype=float), eps)
    fx, gx = F(x)
    trace = SolverTrace(objective=[fx], steps=[])
    y, fy, gy = x, fx, gx
    t = 1.0
    step = step0
    while trace.iterations < cfg.max_iter:
        trace.iterations += 1
        s = 2.0 * step
        closest = np.inf
        while True:
            z = simplex_project(y - s * gy, eps)
            try:
                fz, gz = F(z)
            except NonConvergenceError:
                # trial points far from the current one can be out of Sinkhorn's reach; shorten the step
                fz, gz = np.inf, None
            if fz <= fy + cfg.sufficient_decrease * float(gy @ (z - y)):
                break
            closest = min(closest, fz - fy)
            s *= cfg.backtrack
            if s < min_step:
                break
        if s < min_step or fz > fx:
            if y is x:
                if s >= min_step or closest <= noise:
                    trace.converged = True
                    trace.reason = "objective at evaluation-noise floor"
                    break
                raise StallError("line search failed at the minimum step", trace=trace, iterate=x)
            # momentum overshoot: restart from the last accepted iterate
            trace.restarts += 1
            t = 1.0
            y, fy, gy = x, fx, gx
            continue
        gmap = float(np.linalg.norm(z - y) / s)
        step = s
        x_prev, x, fx, gx = x, z, fz, gz
        trace.objective.append(fx)
        trace.steps.append(s)
        trace.grad_norm = gmap
        if gmap <= cfg.grad_tol:
            trace.converged = True
            trace.reason = "gradient mapping below tolerance"
            break
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = simplex_project(x + ((t - 1.0) / t_next) * (x - x_prev), eps)
        t = t_next
        if np.array_equal(y, x):
            y, fy, gy = x, fx, gx
        else:
            try:
                fy, gy = F(y)
            except NonConvergenceError:
                t = 1.0
                y, fy, gy = x, fx, gx
    else:
        trace.reason = "max_iter reached"
    return x, trace


def sharp_barycenter_gd(prob, lam, init=None, cfg=None):
    """Sharp Sinkhorn barycenter; see :func:`barycenter_gd`."""
    return barycenter_gd(prob, lam, init=init, cfg=cfg, metric="sharp")


def delta_pair_regularized_closed_form(cost_z, cost_y, lam):
    """Regularized barycenter of two Dirac masses with equal weights.

    ``a_i`` is proportional to ``exp(-lam (cost_z[i] + cost_y[i]) / 2)``
    where the cost vectors hold the ground cost from each Dirac location
    to every support point.
    """
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam!r}")
    s = -lam * (np.asarray(cost_z, float) + np.asarray(cost_y, float)) / 2.0
    s -= s.max()
    a = np.exp(s)
    return a / a.sum()


def warn_on_stall(fn, *args, **kwargs):
    """Run a barycenter solver, turning a stall into a warning plus best iterate."""
    try:
        return fn(*args, **kwargs)
    except StallError as exc:
        warnings.warn(str(exc), RuntimeWarning, stacklevel=2)
        exc.trace.reason = "stalled"
        return exc.iterate, exc.trace
