"""RBF kernel, exact GP regression and the sparse variational GP.

The kernel is ``exp(-|x - x'|^2 / gamma^2)``, with no factor 1/2 in the
exponent, optionally multiplied by a trainable output scale.

Sparse variational GP conventions: ``q(u) = N(m, L L^T)`` over the inducing
values ``u = f(Z)``; ``K_ZZ`` always carries a diagonal jitter of at least
1e-6.  The bound on a Gaussian likelihood is evaluated in closed form::

    ELBO = sum_i [log N(y_i | mu_i, s^2) - var_i / (2 s^2)] - KL[q(u) || p(u)]

Functions ending in ``_terms`` or taking raw parameters accept either arrays
or :class:`~dklpricer.grad.Var` objects, so the same code produces both
predictions and gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
from scipy.spatial.distance import cdist

from . import grad as G
from .errors import NotPSD, ShapeMismatch

__all__ = [
    "RbfKernel", "ExactGpModel", "SvgpState",
    "rbf", "kernel_matrix", "gpr_posterior_mean", "gpr_log_marginal",
    "svgp_predict", "elbo", "kl_gaussian", "fit_exact_gp", "optimal_variational",
    "JITTER", "JITTER_MAX",
]

JITTER = 1e-6
JITTER_MAX = 1e-4
LOG_2PI = float(np.log(2 * np.pi))
_EXPAND_MIN = 4096  # pair count above which distances use the inner-product form


@dataclass
class RbfKernel:
    gamma: float = 1.0
    output_scale: float | None = None  # None: no output scale

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass
class ExactGpModel:
    X: np.ndarray
    y: np.ndarray
    kernel: RbfKernel = field(default_factory=RbfKernel)
    sigma: float = 0.1

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.shape[0]:
            raise ShapeMismatch(f"{self.X.shape[0]} inputs but {self.y.shape[0]} targets")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass
class SvgpState:
    Z: np.ndarray
    m: np.ndarray
    L_lam: np.ndarray
    kernel: RbfKernel = field(default_factory=RbfKernel)
    sigma: float = 0.1

    @property
    def M(self) -> int:
        return self.Z.shape[0]

    @property
    def Lam(self) -> np.ndarray:
        return self.L_lam @ self.L_lam.T


# ---------------------------------------------------------------- kernel

def sqdist(A, B):
    """Pairwise squared distances; differentiable when either side is a Var."""
    if not isinstance(A, G.Var) and not isinstance(B, G.Var):
        return cdist(np.atleast_2d(A), np.atleast_2d(B), "sqeuclidean")
    n, p = A.shape
    m = B.shape[0]
    if n * m <= _EXPAND_MIN:
        diff = G.reshape(A, (n, 1, p)) - G.reshape(B, (1, m, p))
        return G.sum(G.square(diff), axis=2)
    # |a|^2 + |b|^2 - 2 a.b avoids the (n, m, p) intermediate; inputs live in a
    # bounded latent box, so cancellation error stays at rounding level
    na = G.reshape(G.sum(G.square(A), axis=1), (n, 1))
    nb = G.reshape(G.sum(G.square(B), axis=1), (1, m))
    return na + nb - 2.0 * G.matmul(A, G.transpose(B))


def rbf_from_sqdist(D, gamma, output_scale=None):
    K = G.exp(-(D / G.square(gamma)))
    return K if output_scale is None else K * output_scale


def rbf(kernel: RbfKernel, x, x2) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    d2 = float(np.sum((x - x2) ** 2))
    out = np.exp(-d2 / kernel.gamma ** 2)
    return float(out if kernel.output_scale is None else out * kernel.output_scale)


def kernel_matrix(kernel: RbfKernel, X, X2) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X.shape[1] != X2.shape[1]:
        raise ShapeMismatch(f"latent dimensions differ: {X.shape[1]} vs {X2.shape[1]}")
    return rbf_from_sqdist(sqdist(X, X2), kernel.gamma, kernel.output_scale)


def chol_jitter(K, base=JITTER, always=True):
    """Cholesky of ``K + j I`` with ``j`` escalating tenfold up to 1e-4.

    With ``always=False`` a plain factorization is tried first.
    """
    Kv = K.value if isinstance(K, G.Var) else np.asarray(K)
    eye = np.eye(Kv.shape[0])
    tries = ([0.0] if not always else []) + [base * 10 ** k for k in range(3)]
    for j in tries:
        if j > JITTER_MAX * (1 + 1e-9):
            break
        try:
            np.linalg.cholesky(Kv + j * eye)
        except np.linalg.LinAlgError:
            continue
        return G.cholesky(K + j * eye) if j else G.cholesky(K)
    raise NotPSD("matrix not positive definite even with maximal jitter")


# ---------------------------------------------------------------- exact GP

def _exact_terms(D, y, gamma, sigma, output_scale=None):
    N = y.shape[0]
    K = rbf_from_sqdist(D, gamma, output_scale) + G.square(sigma) * np.eye(N)
    L = chol_jitter(K, always=False)
    a = G.solve_triangular(L, y)
    return L, a


def _log_marginal_terms(D, y, gamma, sigma, output_scale=None):
    L, a = _exact_terms(D, y, gamma, sigma, output_scale)
    N = y.shape[0]
    return -G.sum(G.log(G.diag(L))) - 0.5 * G.sum(G.square(a)) - 0.5 * N * LOG_2PI


def gpr_posterior_mean(model: ExactGpModel, Xq) -> np.ndarray:
    """``K(Xq, X) [K(X, X) + sigma^2 I]^{-1} y``; jitter only if the solve needs it."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    k = model.kernel
    L, a = _exact_terms(sqdist(model.X, model.X), model.y, k.gamma, model.sigma, k.output_scale)
    alpha = G.solve_triangular(L, a, trans=True)
    return kernel_matrix(k, Xq, model.X) @ alpha


def gpr_log_marginal(model: ExactGpModel) -> float:
    k = model.kernel
    return float(_log_marginal_terms(sqdist(model.X, model.X), model.y, k.gamma,
                                     model.sigma, k.output_scale))


def fit_exact_gp(X, y, *, gamma0=1.0, sigma0=0.1, output_scale0=None, maxiter=200) -> ExactGpModel:
    """Maximize the log marginal likelihood over gamma, sigma (and output scale).

    Positive parameters are optimized in softplus coordinates with L-BFGS-B,
    using tape gradients.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    D = sqdist(X, X)
    init = [gamma0, sigma0] + ([output_scale0] if output_scale0 is not None else [])
    theta0 = G.softplus_inverse(np.array(init, dtype=float))

    def objective(theta):
        tape = G.Tape()
        t = tape.variable(theta)
        pos = G.softplus(t)
        parts = [G.take(pos, i) for i in range(len(theta))]
        scale = parts[2] if len(parts) > 2 else None
        try:
            val = -_log_marginal_terms(D, y, parts[0], parts[1], scale)
        except NotPSD:
            return np.inf, np.zeros_like(theta)
        return float(val.value), G.backward(val)[t]

    res = scipy.optimize.minimize(objective, theta0, jac=True, method="L-BFGS-B",
                                  options={"maxiter": maxiter})
    vals = np.logaddexp(0.0, res.x)
    kern = RbfKernel(gamma=float(vals[0]),
                     output_scale=float(vals[2]) if len(vals) > 2 else None)
    return ExactGpModel(X, y, kern, float(vals[1]))


# ---------------------------------------------------------------- sparse variational GP

def kl_terms(m, L_lam, Lk, whiten=False):
    """KL[N(m, L_lam L_lam^T) || N(0, Lk Lk^T)].

    With ``whiten`` the variational parameters live in the coordinates where
    the prior is standard normal and ``Lk`` is ignored.
    """
    M = m.shape[0]
    logdet_q = G.sum(G.log(G.square(G.diag(L_lam))))
    if whiten:
        return 0.5 * (G.sum(G.square(L_lam)) + G.sum(G.square(m)) - M - logdet_q)
    A = G.solve_triangular(Lk, L_lam)
    b = G.solve_triangular(Lk, m)
    logdet_p = 2.0 * G.sum(G.log(G.diag(Lk)))
    return 0.5 * (G.sum(G.square(A)) + G.sum(G.square(b)) - M + logdet_p - logdet_q)


def kl_gaussian(m, Lam, K) -> float:
    """KL divergence between ``N(m, Lam)`` and ``N(0, K)`` (jitter on ``K`` only if needed)."""
    m = np.asarray(m, dtype=float).ravel()
    Lq = chol_jitter(np.asarray(Lam, dtype=float), always=False)
    Lk = chol_jitter(np.asarray(K, dtype=float), always=False)
    return float(kl_terms(m, Lq, Lk))


def predict_terms(Z, m, L_lam, gamma, Xq, output_scale=None, whiten=False, with_var=True):
    """Variational predictive mean and marginal variance at ``Xq``; also returns chol(K_ZZ)."""
    Kzz = rbf_from_sqdist(sqdist(Z, Z), gamma, output_scale)
    Lk = chol_jitter(Kzz)
    Kzx = rbf_from_sqdist(sqdist(Z, Xq), gamma, output_scale)
    A = G.solve_triangular(Lk, Kzx)
    if whiten:
        mean = G.matmul(G.transpose(A), m)
    else:
        mean = G.matmul(G.transpose(A), G.solve_triangular(Lk, m))
    if not with_var:
        return mean, None, Lk
    kxx = 1.0 if output_scale is None else output_scale
    B = A if whiten else G.solve_triangular(Lk, A, trans=True)
    C = G.matmul(G.transpose(L_lam), B)
    var = kxx - G.sum(G.square(A), axis=0) + G.sum(G.square(C), axis=0)
    return mean, var, Lk


def elbo_terms(Z, m, L_lam, gamma, sigma, Xlat, y, output_scale=None, whiten=False):
    mean, var, Lk = predict_terms(Z, m, L_lam, gamma, Xlat, output_scale, whiten)
    s2 = G.square(sigma)
    N = y.shape[0]
    resid = G.square(y - mean)
    ell = -0.5 * N * (LOG_2PI + G.log(s2)) - G.sum(resid + var) / (2.0 * s2)
    return ell - kl_terms(m, L_lam, Lk, whiten)


def svgp_predict(state: SvgpState, Xq):
    """Predictive mean and variance of ``q(f)`` at latent points ``Xq``."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    k = state.kernel
    mean, var, _ = predict_terms(state.Z, state.m, state.L_lam, k.gamma, Xq, k.output_scale)
    return mean, var


def elbo(state: SvgpState, Glat, y) -> float:
    Glat = np.atleast_2d(np.asarray(Glat, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if Glat.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"{Glat.shape[0]} latent inputs but {y.shape[0]} targets")
    k = state.kernel
    return float(elbo_terms(state.Z, state.m, state.L_lam, k.gamma, state.sigma, Glat, y,
                            k.output_scale))


def optimal_variational(kernel: RbfKernel, sigma: float, Z, X, y):
    """Maximizer of the ELBO over ``(m, L_lam)`` for fixed kernel, noise and ``Z``.

    With ``A = K + s^-2 Kzx Kxz`` (``K`` jittered as in training) the optimum
    is ``m = s^-2 K A^-1 Kzx y`` and ``Lam = K A^-1 K``; returns ``(m, chol(Lam))``.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    K = kernel_matrix(kernel, Z, Z) + JITTER * np.eye(Z.shape[0])
    Kzx = kernel_matrix(kernel, Z, X)
    A = K + Kzx @ Kzx.T / sigma ** 2
    m = K @ np.linalg.solve(A, Kzx @ np.asarray(y, dtype=float)) / sigma ** 2
    S = K @ np.linalg.solve(A, K)
    return m, np.linalg.cholesky(0.5 * (S + S.T))
