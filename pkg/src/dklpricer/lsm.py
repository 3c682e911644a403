"""Polynomial least-squares continuation regressor.

Feature order for total degree ``p`` is graded lexicographic: the constant,
then every monomial of degree 1, 2, ..., p, where the monomials of one degree
are the sorted index tuples ``i1 <= i2 <= ... `` in lexicographic order.  For
degree 2 this reads ``[1, x1..xd, x1x1, x1x2, ..., x1xd, x2x2, ..., xdxd]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
import scipy.linalg

from .errors import ShapeMismatch, UnsupportedDegree

__all__ = ["PolyRegressor", "poly_features", "n_features", "lsm_fit", "lsm_predict"]

@lru_cache(maxsize=64)
def _monomials(d: int, degree: int, cross_terms: bool) -> tuple:
    out = []
    for k in range(1, degree + 1):
        for idx in combinations_with_replacement(range(d), k):
            if cross_terms or len(set(idx)) == 1:
                out.append(idx)
    return tuple(out)


def _check_degree(d, degree):
    if degree == 2:
        return
    if degree < 1 or d > 3:
        raise UnsupportedDegree(
            f"degree {degree} is only available for d <= 3 (got d={d}); pricing uses degree 2")


def n_features(d: int, degree: int = 2, cross_terms: bool = True) -> int:
    return 1 + len(_monomials(d, degree, cross_terms))


def poly_features(x, degree: int = 2, cross_terms: bool = True) -> np.ndarray:
    """Monomial features of a single point ``(d,)`` or a batch ``(N, d)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    _check_degree(X.shape[1], degree)
    mons = _monomials(X.shape[1], degree, cross_terms)
    F = np.empty((X.shape[0], 1 + len(mons)), order="F")
    F[:, 0] = 1.0
    cache = {}
    for j, idx in enumerate(mons, start=1):
        if len(idx) == 1:
            col = X[:, idx[0]]
        else:
            col = cache[idx[:-1]] * X[:, idx[-1]]
        cache[idx] = col
        F[:, j] = col
    return F[0] if single else F


@dataclass
class PolyRegressor:
    degree: int
    d: int
    coeffs: np.ndarray
    cross_terms: bool = True

    def __post_init__(self):
        if self.coeffs.shape != (n_features(self.d, self.degree, self.cross_terms),):
            raise ShapeMismatch("coefficient vector does not match the monomial basis")

    def predict(self, X) -> np.ndarray:
        return lsm_predict(self, X)


_GRAM_MIN_FEATURES = 1000
_GRAM_MIN_RCOND = 1e-10


def _solve_gram(F, y):
    """Normal equations on unit-norm columns; None when too ill-conditioned."""
    s = np.linalg.norm(F, axis=0)
    if np.any(s == 0):
        return None
    Fs = F / s
    A = Fs.T @ Fs
    try:
        c, low = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None
    dg = np.diag(c) ** 2
    if dg.min() < _GRAM_MIN_RCOND * dg.max():
        return None
    return scipy.linalg.cho_solve((c, low), Fs.T @ y, check_finite=False) / s


def lsm_fit(X, y, degree: int = 2, cross_terms: bool = True) -> PolyRegressor:
    """Least-squares coefficients over the monomial span.

    Solved by complete orthogonal decomposition (QR with column pivoting,
    LAPACK ``gelsy``), which returns the minimum-norm solution when the design
    matrix is rank deficient.  Bases with 1000 or more columns (d >= 44) first
    try Cholesky on the column-normalized Gram matrix, an order of magnitude
    faster, and fall back to ``gelsy`` if that system is ill-conditioned.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"{X.shape[0]} rows but {y.shape[0]} targets")
    if X.shape[0] < 1:
        raise ShapeMismatch("need at least one observation")
    F = poly_features(X, degree, cross_terms)
    b = None
    if F.shape[1] >= _GRAM_MIN_FEATURES and F.shape[0] >= F.shape[1]:
        b = _solve_gram(F, y)
    if b is None:
        b, *_ = scipy.linalg.lstsq(F, y, lapack_driver="gelsy", check_finite=False)
    return PolyRegressor(degree, X.shape[1], b, cross_terms)


def lsm_predict(reg: PolyRegressor, x) -> np.ndarray | float:
    F = poly_features(x, reg.degree, reg.cross_terms)
    out = F @ reg.coeffs
    return float(out) if np.ndim(out) == 0 else out
