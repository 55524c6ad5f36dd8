"""GP expert: ARD squared-exponential kernel with a constant mean.

Integrating the latent function out of y = m(x) + noise gives
Y ~ N(beta0 1, sigma2 I + K), so every quantity below is a Gaussian
computation with that covariance. Unconstrained coordinates are
(log sigma2, beta0, log s_f^2, log l_1, ..., log l_D).
"""
import math

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular

from edpmoe.model import ExpertParams

__all__ = ['kernel', 'kernel_matrix', 'cholesky_jitter', 'log_marginal', 'log_conditional_block',
           'predict', 'log_posterior', 'grad_log_posterior', 'sq_diffs', 'GpCache', 'NumericalError']

_LOG_2PI = math.log(2.0 * math.pi)
JITTER_START = 1e-10
JITTER_MAX = 1e-4


class NumericalError(ArithmeticError):
    pass


def kernel(x, x2, params):
    d = (np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)) / params.lengthscales
    return params.magnitude * math.exp(-0.5 * float(np.dot(d, d)))


def _sqdist(X1, X2, ls):
    A = X1 / ls
    B = X2 / ls
    if A.shape[1] == 1:
        return (A - B.T) ** 2
    d2 = np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


def kernel_matrix(X1, X2, params):
    X1 = np.atleast_2d(X1)
    X2 = np.atleast_2d(X2)
    return params.magnitude * np.exp(-0.5 * _sqdist(X1, X2, params.lengthscales))


def _cov(X, params):
    C = kernel_matrix(X, X, params)
    C[np.diag_indices_from(C)] += params.sigma2
    return C


def cholesky_jitter(C):
    """Lower Cholesky factor, adding diagonal jitter only if plain factorisation fails.

    Returns ``(L, jitter)``. Jitter starts at 1e-10 times the mean diagonal and
    grows by a factor of ten up to 1e-4 times the mean diagonal.
    """
    try:
        return np.linalg.cholesky(C), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(C)))
    jit = JITTER_START
    while jit <= JITTER_MAX * (1 + 1e-12):
        try:
            return np.linalg.cholesky(C + jit * scale * np.eye(C.shape[0])), jit * scale
        except np.linalg.LinAlgError:
            jit *= 10.0
    raise NumericalError('covariance not positive definite after jitter escalation')


def _gauss_logpdf_chol(r, L):
    v = solve_triangular(L, r, lower=True, check_finite=False)
    return -0.5 * float(v @ v) - float(np.sum(np.log(np.diag(L)))) - 0.5 * r.shape[0] * _LOG_2PI


def log_marginal(y, X, params):
    """log N(y | beta0 1, sigma2 I + K)."""
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] == 0:
        return 0.0
    X = np.asarray(X, dtype=float).reshape(y.shape[0], -1)
    if y.shape[0] == 1:
        v = params.sigma2 + params.magnitude
        r = y[0] - params.beta0
        return -0.5 * (_LOG_2PI + math.log(v) + r * r / v)
    L, _ = cholesky_jitter(_cov(X, params))
    return _gauss_logpdf_chol(y - params.beta0, L)


def log_conditional_block(yb, Xb, yo, Xo, params):
    """log density of block outputs ``yb`` given outputs ``yo`` of the same expert."""
    yb = np.asarray(yb, dtype=float).ravel()
    yo = np.asarray(yo, dtype=float).ravel()
    if yo.shape[0] == 0:
        return log_marginal(yb, Xb, params)
    if yb.shape[0] == 0:
        return 0.0
    Xb = np.asarray(Xb, dtype=float).reshape(yb.shape[0], -1)
    Xo = np.asarray(Xo, dtype=float).reshape(yo.shape[0], -1)
    Lo, _ = cholesky_jitter(_cov(Xo, params))
    Kob = kernel_matrix(Xo, Xb, params)
    V = solve_triangular(Lo, Kob, lower=True, check_finite=False)
    w = solve_triangular(Lo, yo - params.beta0, lower=True, check_finite=False)
    mean = params.beta0 + V.T @ w
    Cb = _cov(Xb, params) - V.T @ V
    Lb, _ = cholesky_jitter(0.5 * (Cb + Cb.T))
    return _gauss_logpdf_chol(yb - mean, Lb)


def predict(Xs, y, X, params):
    """GP predictive mean and variance (noise included) at the rows of ``Xs``."""
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float).reshape(y.shape[0], -1)
    L, _ = cholesky_jitter(_cov(X, params))
    Ks = kernel_matrix(X, Xs, params)
    V = solve_triangular(L, Ks, lower=True, check_finite=False)
    w = solve_triangular(L, y - params.beta0, lower=True, check_finite=False)
    mean = params.beta0 + V.T @ w
    var = params.magnitude + params.sigma2 - np.sum(V * V, axis=0)
    return mean, np.maximum(var, params.sigma2)


# -- posterior over unconstrained coordinates -------------------------------

def _prior_terms(u, priors, with_grad):
    """Log prior (with log-transform Jacobians) and its gradient in unconstrained coordinates."""
    lp = 0.0
    g = np.zeros_like(u)
    for i, pr in enumerate(priors):
        if pr.fixed:
            continue
        if i == 1:
            lp += pr.logpdf(u[i])
            if with_grad:
                g[i] = pr.grad_logpdf(u[i])
        else:
            lp += pr.logpdf_log(u[i])
            if with_grad:
                g[i] = pr.grad_logpdf_log(u[i])
    return float(lp), g


def log_posterior(y, X, u, priors):
    """log h(y | params) + log prior, with ``u`` in unconstrained coordinates."""
    params = ExpertParams.from_unconstrained(u)
    return log_marginal(y, X, params) + _prior_terms(np.asarray(u, dtype=float), priors, False)[0]


def sq_diffs(X):
    """Per-dimension squared input differences, shape (D, n, n), reusable across gradient calls."""
    X = np.asarray(X, dtype=float)
    return (X.T[:, :, None] - X.T[:, None, :]) ** 2


def grad_log_posterior(y, X, u, priors, sqd=None):
    """Value and gradient of ``log_posterior`` with respect to ``u``.

    Uses d log N / d theta = 1/2 tr((a a^T - C^-1) dC/dtheta) with a = C^-1 (y - beta0).
    ``sqd`` optionally supplies ``sq_diffs(X)``.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    X = np.asarray(X, dtype=float).reshape(n, -1)
    params = ExpertParams.from_unconstrained(u)
    D = X.shape[1]
    if sqd is None:
        sqd = sq_diffs(X)
    il2 = 1.0 / params.lengthscales ** 2
    K = params.magnitude * np.exp(-0.5 * np.tensordot(il2, sqd, 1))
    C = K.copy()
    C.flat[::n + 1] += params.sigma2
    L, _ = cholesky_jitter(C)
    r = y - params.beta0
    a = cho_solve((L, True), r, check_finite=False)
    Ci, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise NumericalError('inverse from Cholesky factor failed')
    Cinv = Ci + np.tril(Ci, -1).T
    W = np.outer(a, a) - Cinv
    WK = W * K
    g = np.empty(3 + D)
    g[0] = 0.5 * params.sigma2 * np.trace(W)
    g[1] = np.sum(a)
    g[2] = 0.5 * np.sum(WK)
    g[3:] = 0.5 * il2 * (sqd.reshape(D, -1) @ WK.ravel())
    val = -0.5 * float(r @ a) - float(np.sum(np.log(np.diag(L)))) - 0.5 * n * _LOG_2PI
    lp, gp = _prior_terms(u, priors, True)
    return val + lp, g + gp


class GpCache(object):
    """Cholesky factor and solved residual for one cluster's members.

    Built once per membership or parameter change and reused for the
    point-conditional queries made during a Gibbs sweep.
    """

    def __init__(self, y, X, params):
        self.y = np.asarray(y, dtype=float).ravel()
        self.X = np.asarray(X, dtype=float).reshape(self.y.shape[0], -1)
        self.params = params
        self.L, self.jitter = cholesky_jitter(_cov(self.X, params))
        self.w = solve_triangular(self.L, self.y - params.beta0, lower=True, check_finite=False)
        self.a = solve_triangular(self.L.T, self.w, lower=False, check_finite=False)
        self.logml = (-0.5 * float(self.w @ self.w) - float(np.sum(np.log(np.diag(self.L))))
                      - 0.5 * self.y.shape[0] * _LOG_2PI)

    @property
    def n(self):
        return self.y.shape[0]

    def cond_point(self, x, y):
        """log h(y | members) for a new point at input ``x``."""
        p = self.params
        k = kernel_matrix(self.X, np.atleast_2d(x), p)[:, 0]
        v = solve_triangular(self.L, k, lower=True, check_finite=False)
        mean = p.beta0 + float(v @ self.w)
        var = max(p.magnitude + p.sigma2 + self.jitter - float(v @ v), 1e-300)
        r = y - mean
        return -0.5 * (_LOG_2PI + math.log(var) + r * r / var)

    def mean_var(self, Xs):
        """Predictive mean and variance (noise included) at the rows of ``Xs``."""
        p = self.params
        Ks = kernel_matrix(self.X, Xs, p)
        V = solve_triangular(self.L, Ks, lower=True, check_finite=False)
        mean = p.beta0 + V.T @ self.w
        var = np.maximum(p.magnitude + p.sigma2 + self.jitter - np.sum(V * V, axis=0), p.sigma2)
        return mean, var

    def mean_only(self, Xs):
        """Predictive mean without the variance (no triangular solve)."""
        return self.params.beta0 + kernel_matrix(Xs, self.X, self.params) @ self.a

    def cond_points(self, Xs, ys):
        """Vectorised ``cond_point`` over the rows of ``Xs``."""
        p = self.params
        Ks = kernel_matrix(self.X, Xs, p)
        V = solve_triangular(self.L, Ks, lower=True, check_finite=False)
        mean = p.beta0 + V.T @ self.w
        var = np.maximum(p.magnitude + p.sigma2 + self.jitter - np.sum(V * V, axis=0), 1e-300)
        r = ys - mean
        return -0.5 * (_LOG_2PI + np.log(var) + r * r / var)

    def loo_all(self):
        """``loo`` for every member at once."""
        Linv = solve_triangular(self.L, np.eye(self.n), lower=True, check_finite=False)
        Qd = np.sum(Linv * Linv, axis=0)
        r = self.a / Qd
        return -0.5 * (_LOG_2PI - np.log(Qd) + r * r * Qd)

    def loo(self, i):
        """log h(y_i | other members) via the precision matrix identity."""
        e = np.zeros(self.n)
        e[i] = 1.0
        q = solve_triangular(self.L, e, lower=True, check_finite=False)
        Qii = float(q @ q)
        var = 1.0 / Qii
        r = self.a[i] / Qii
        return -0.5 * (_LOG_2PI + math.log(var) + r * r / var)
