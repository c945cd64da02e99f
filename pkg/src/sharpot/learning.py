"""Structured prediction of histograms with Sinkhorn losses.

Training pairs ``(x_i, y_i)`` give kernel ridge scores

    alpha(x) = (K + gamma * l * I)^{-1} K_x

and a prediction is the (signed-weight) barycenter
``argmin_y sum_i alpha_i(x) S(y, y_i)`` over the interior of the simplex,
solved by projected gradient descent.
"""

import warnings

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist
from scipy.stats import norm
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.model_selection import KFold
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .barycenter import BarycenterConfig, BarycenterProblem, barycenter_gd
from .core import as_cost_matrix, grid_cost, simplex_project
from .exceptions import InvalidInputError, InvalidParameterError, StallError
from .sinkhorn import SinkhornConfig, solve_batch


def gaussian_kernel(x, x2, sigma):
    """``exp(-||x - x2||^2 / sigma)``."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma!r}")
    d = np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)
    return float(np.exp(-np.dot(d.ravel(), d.ravel()) / sigma))


def kernel_matrix(X, Z, sigma):
    """Gaussian kernel between the rows of ``X`` and ``Z``; exactly symmetric when ``Z is X``."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma!r}")
    return np.exp(-cdist(X, Z, "sqeuclidean") / sigma)


class WeightModel(BaseEstimator):
    """Kernel ridge scores over the training inputs.

    Parameters
    ----------
    sigma : float, default=1.0
        Gaussian kernel bandwidth.
    gamma : float, default=1e-3
        Ridge parameter; the system solved is ``K + gamma * l * I``.

    Attributes
    ----------
    X_fit_ : ndarray, shape (l, d)
    cholesky_ : ndarray, shape (l, l)
        Lower Cholesky factor of ``K + gamma * l * I``.
    """

    def __init__(self, sigma=1.0, gamma=1e-3):
        self.sigma = sigma
        self.gamma = gamma

    def fit(self, X, y=None):
        X = check_array(X)
        if not self.gamma > 0:
            raise InvalidParameterError(f"gamma must be positive, got {self.gamma!r}")
        ell = X.shape[0]
        A = kernel_matrix(X, X, self.sigma)
        A[np.diag_indices(ell)] += self.gamma * ell
        try:
            self.cholesky_ = np.linalg.cholesky(A)
        except np.linalg.LinAlgError as exc:
            raise InvalidInputError("K + gamma*l*I is not positive definite; check inputs for non-finite values") from exc
        self.X_fit_ = X
        self.n_features_in_ = X.shape[1]
        return self

    def system_matrix(self):
        check_is_fitted(self, "cholesky_")
        return self.cholesky_ @ self.cholesky_.T

    def scores(self, X):
        """Scores ``alpha(x)`` for each row of ``X``, shape ``(n_queries, l)``."""
        check_is_fitted(self, "cholesky_")
        X = check_array(X)
        Kx = kernel_matrix(self.X_fit_, X, self.sigma)
        return scipy.linalg.cho_solve((self.cholesky_, True), Kx).T

    def residual(self, X):
        """Max-norm residual ``|(K + gamma l I) alpha(x) - K_x|`` over the rows of ``X``."""
        Kx = kernel_matrix(self.X_fit_, check_array(X), self.sigma)
        return float(np.abs(self.system_matrix() @ self.scores(X).T - Kx).max())


def predict_histogram(scores, outputs, M, lam, metric="sharp", epsilon=None, cfg=None):
    """Minimize ``sum_i scores_i S(y, outputs_i)`` over ``y`` in the ``epsilon``-interior.

    Scores are rescaled to unit L1 norm (the minimizer is unchanged).  The
    descent starts from the score-weighted average of the outputs when the
    scores have positive sum, otherwise from the uniform histogram.  A
    stalled descent returns its best iterate with a
    :class:`~sklearn.exceptions.ConvergenceWarning`.

    Returns
    -------
    y : ndarray, shape (n,)
    trace : SolverTrace
    """
    scores = np.asarray(scores, dtype=float)
    outputs = np.asarray(outputs, dtype=float)
    n = outputs.shape[1]
    eps = epsilon if epsilon is not None else 1e-6 / n
    cfg = cfg or BarycenterConfig()
    cfg = BarycenterConfig(**{**cfg.__dict__, "epsilon": eps})
    total = np.abs(scores).sum()
    w = scores / total if total > 0 else np.full(scores.size, 1.0 / scores.size)
    if w.sum() > 0:
        init = (w @ outputs) / w.sum()
    else:
        init = np.full(n, 1.0 / n)
    prob = BarycenterProblem(list(outputs), M, weights=w, relaxed=True)
    try:
        return barycenter_gd(prob, lam, init=simplex_project(init, eps), cfg=cfg, metric=metric)
    except StallError as exc:
        warnings.warn(f"prediction stalled: {exc}", ConvergenceWarning, stacklevel=2)
        exc.trace.reason = "stalled"
        return exc.iterate, exc.trace


def sinkhorn_losses(Y_pred, Y_true, M, lam, metric="sharp", marginal_tol=1e-10):
    """Row-wise Sinkhorn loss ``S(Y_pred[r], Y_true[r])``."""
    cfg = SinkhornConfig(lam=lam, marginal_tol=marginal_tol, max_iter=100000)
    out = np.empty(len(Y_pred))
    for r, (p, t) in enumerate(zip(Y_pred, Y_true)):
        _, _, plans, _, _, _ = solve_batch(np.asarray(p, float), np.asarray(t, float)[None], M, cfg)
        out[r] = np.sum(plans[0] * M)
        if metric == "regularized":
            T = plans[0][plans[0] > 0]
            out[r] += np.sum(T * (np.log(T) - 1.0)) / lam
    return out


class SinkhornRegressor(BaseEstimator, RegressorMixin):
    """Histogram-valued regression with a sharp or regularized Sinkhorn loss.

    Parameters
    ----------
    sigma : float, default=1.0
        Gaussian kernel bandwidth, ``k(x, x') = exp(-||x - x'||^2 / sigma)``.
    gamma : float, default=1e-3
        Kernel ridge parameter.
    metric : {"sharp", "regularized"}, default="sharp"
        Loss minimized at prediction time.
    lam : float, default=20.0
        Entropic regularization parameter of the loss.
    cost : array-like of shape (n_bins, n_bins), default=None
        Ground cost between bins; defaults to squared distances between
        ``n_bins`` equispaced points of ``[0, 1]``.
    epsilon : float, default=None
        Lower bound on predicted and (clipped) training histogram entries;
        defaults to ``1e-6 / n_bins``.
    max_iter : int, default=200
        Gradient iterations per prediction.
    grad_tol : float, default=1e-6
    marginal_tol : float, default=1e-10
        Sinkhorn marginal tolerance inside the descent.

    Attributes
    ----------
    weight_model_ : WeightModel
    outputs_ : ndarray, shape (l, n_bins)
        Training histograms clipped to the ``epsilon``-interior.
    cost_ : ndarray, shape (n_bins, n_bins)
    traces_ : list of SolverTrace
        Traces of the most recent :meth:`predict` call.
    """

    def __init__(
        self,
        sigma=1.0,
        gamma=1e-3,
        metric="sharp",
        lam=20.0,
        cost=None,
        epsilon=None,
        max_iter=200,
        grad_tol=1e-6,
        marginal_tol=1e-10,
    ):
        self.sigma = sigma
        self.gamma = gamma
        self.metric = metric
        self.lam = lam
        self.cost = cost
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.marginal_tol = marginal_tol

    def _epsilon(self, n):
        return self.epsilon if self.epsilon is not None else 1e-6 / n

    def fit(self, X, Y):
        X, Y = check_X_y(X, Y, multi_output=True, y_numeric=True)
        if Y.ndim != 2:
            raise InvalidInputError("Y must be a 2-D array with one histogram per row")
        if self.metric not in ("sharp", "regularized"):
            raise InvalidParameterError(f"metric must be 'sharp' or 'regularized', got {self.metric!r}")
        if np.any(Y < 0) or np.any(np.abs(Y.sum(axis=1) - 1.0) > 1e-9):
            raise InvalidInputError("every row of Y must be a histogram")
        n = Y.shape[1]
        eps = self._epsilon(n)
        self.cost_ = grid_cost(n, normalize=True) if self.cost is None else as_cost_matrix(self.cost, shape=(n, n))
        self.outputs_ = np.stack([simplex_project(y, eps) for y in Y])
        self.weight_model_ = WeightModel(sigma=self.sigma, gamma=self.gamma).fit(X)
        self.n_features_in_ = X.shape[1]
        return self

    def scores(self, X):
        check_is_fitted(self, "weight_model_")
        return self.weight_model_.scores(X)

    def predict(self, X):
        check_is_fitted(self, "weight_model_")
        S = self.scores(X)
        n = self.outputs_.shape[1]
        cfg = BarycenterConfig(max_iter=self.max_iter, grad_tol=self.grad_tol, marginal_tol=self.marginal_tol)
        preds, self.traces_ = [], []
        for s in S:
            y, trace = predict_histogram(
                s, self.outputs_, self.cost_, self.lam, metric=self.metric, epsilon=self._epsilon(n), cfg=cfg
            )
            preds.append(y)
            self.traces_.append(trace)
        return np.stack(preds)

    def score(self, X, Y, sample_weight=None):
        """Negative mean sharp Sinkhorn loss (greater is better)."""
        losses = sinkhorn_losses(self.predict(X), check_array(Y), self.cost_, self.lam)
        return -float(np.average(losses, weights=sample_weight))


def cross_validate(X, Y, sigma_grid, gamma_grid, folds=3, metric="sharp", lam=20.0, seed=0, **estimator_params):
    """Grid search of ``(sigma, gamma)`` by K-fold held-out sharp Sinkhorn loss.

    Folds are shuffled with ``seed``.  Ties (relative difference below
    ``1e-9``) keep the earliest grid entry, ``sigma`` varying slowest.

    Returns
    -------
    best : tuple
        ``(sigma, gamma)``.
    losses : ndarray, shape (len(sigma_grid), len(gamma_grid))
        Mean held-out loss of every grid point.
    """
    sigma_grid = list(sigma_grid)
    gamma_grid = list(gamma_grid)
    if not sigma_grid or not gamma_grid:
        raise InvalidInputError("parameter grids must be non-empty")
    if folds < 2:
        raise InvalidParameterError(f"folds must be >= 2, got {folds!r}")
    X = check_array(X)
    Y = check_array(Y)
    splits = list(KFold(n_splits=folds, shuffle=True, random_state=seed).split(X))
    losses = np.empty((len(sigma_grid), len(gamma_grid)))
    for i, sigma in enumerate(sigma_grid):
        for j, gamma in enumerate(gamma_grid):
            fold_losses = []
            for train, test in splits:
                est = SinkhornRegressor(sigma=sigma, gamma=gamma, metric=metric, lam=lam, **estimator_params)
                est.fit(X[train], Y[train])
                fold_losses.append(-est.score(X[test], Y[test]))
            losses[i, j] = np.mean(fold_losses)
    best, best_loss = (0, 0), losses[0, 0]
    for i in range(len(sigma_grid)):
        for j in range(len(gamma_grid)):
            if losses[i, j] < best_loss - 1e-9 * max(abs(best_loss), 1e-300):
                best, best_loss = (i, j), losses[i, j]
    return (sigma_grid[best[0]], gamma_grid[best[1]]), losses


def gaussian_histogram_task(n_samples, n_bins=20, seed=0, sd=2.0):
    """Synthetic regression task: ``x ~ U[0, 1]`` and a discretized Gaussian target.

    The target puts on bin ``i`` (centered at ``i``) the Gaussian mass of
    ``[i - 0.5, i + 0.5]`` for mean ``5 + 10 x`` and standard deviation
    ``sd``, renormalized and moved into the ``1e-6 / n_bins`` interior.

    Returns
    -------
    X : ndarray, shape (n_samples, 1)
    Y : ndarray, shape (n_samples, n_bins)
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n_samples, 1))
    edges = np.arange(n_bins + 1) - 0.5
    mass = np.diff(norm.cdf((edges[None, :] - (5.0 + 10.0 * X)) / sd), axis=1)
    mass /= mass.sum(axis=1, keepdims=True)
    eps = 1e-6 / n_bins
    return X, np.stack([simplex_project(m, eps) for m in mass])
