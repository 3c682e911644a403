"""Reverse-mode differentiation over numpy arrays.

A :class:`Tape` records every primitive applied to its :class:`Var` leaves in
execution order; :func:`backward` walks the record in reverse and accumulates
vector-Jacobian products.  Every primitive also accepts plain ndarrays, in
which case nothing is recorded and a plain ndarray comes back.  This lets the
GP and network code be written once and used both for training (on a tape)
and for prediction (plain numpy).

Only the primitives needed by the ELBO and the feature extractor exist.  Matrix
inverses are never formed; linear algebra goes through :func:`cholesky` and
:func:`solve_triangular`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import ShapeMismatch

__all__ = [
    "Tape", "Var", "Gradients", "backward",
    "add", "sub", "mul", "div", "neg", "matmul", "transpose", "reshape",
    "exp", "log", "square", "sqrt", "relu", "softplus", "astype",
    "sum", "mean", "amin", "amax", "diag", "take",
    "dense", "cholesky", "solve_triangular",
    "SgdState", "sgd_step", "finite_diff_check", "softplus_inverse",
]


class Var:
    """A value recorded on a tape."""

    __slots__ = ("tape", "index", "value")
    __array_ufunc__ = None  # make ndarray (op) Var defer to Var's reflected ops

    def __init__(self, tape: "Tape", index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def T(self):
        return transpose(self)

    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, o): return matmul(self, o)
    def __rmatmul__(self, o): return matmul(o, self)

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.value.shape}, dtype={self.value.dtype})"


@dataclass
class _Node:
    parents: tuple
    vjp: Callable | None  # adjoint of output -> tuple of parent adjoints


@dataclass
class Tape:
    """Ordered record of primitive applications; recording order is topological."""

    nodes: list = field(default_factory=list)
    values: list = field(default_factory=list)
    leaves: list = field(default_factory=list)

    def variable(self, value) -> Var:
        """Register a trainable leaf."""
        v = self._push(np.asarray(value), (), None)
        self.leaves.append(v.index)
        return v

    def clear(self) -> None:
        """Drop every recorded node and value.

        Closures on the tape refer back to it through their Vars, so a tape is
        a reference cycle; clearing frees its buffers without waiting for the
        cyclic garbage collector.
        """
        self.nodes.clear()
        self.values.clear()
        self.leaves.clear()

    def _push(self, value, parents, vjp) -> Var:
        self.nodes.append(_Node(parents, vjp))
        self.values.append(value)
        return Var(self, len(self.nodes) - 1, value)


class Gradients:
    """Mapping from leaf :class:`Var` to its gradient array."""

    def __init__(self, grads: dict):
        self._grads = grads

    def __getitem__(self, var: Var) -> np.ndarray:
        return self._grads[var.index]

    def __len__(self):
        return len(self._grads)

    def __iter__(self):
        return iter(self._grads)


def backward(output: Var) -> Gradients:
    """Gradients of the scalar ``output`` with respect to every leaf of its tape.

    Leaves that do not influence ``output`` get zero gradients.
    """
    if not isinstance(output, Var):
        raise TypeError("backward() needs a Var recorded on a tape")
    if output.value.size != 1:
        raise ShapeMismatch(f"output must be a scalar, got shape {output.value.shape}")
    tape = output.tape
    leaves = set(tape.leaves)
    adj: list = [None] * (output.index + 1)
    adj[output.index] = np.ones_like(output.value)
    for i in range(output.index, -1, -1):
        g = adj[i]
        if g is None:
            continue
        node = tape.nodes[i]
        if node.vjp is None:
            continue
        pgrads = node.vjp(g)
        for p, pg in zip(node.parents, pgrads):
            if isinstance(p, Var) and pg is not None:
                if pg.shape != p.value.shape:
                    raise ShapeMismatch(
                        f"adjoint shape {pg.shape} != value shape {p.value.shape} at node {p.index}")
                j = p.index
                pg = np.asarray(pg).astype(p.value.dtype, copy=False)  # adjoints keep the value dtype
                adj[j] = pg if adj[j] is None else adj[j] + pg
        if i not in leaves:
            adj[i] = None
    out = {}
    for li in tape.leaves:
        v = tape.values[li]
        if li <= output.index and adj[li] is not None:
            out[li] = adj[li]
        else:
            out[li] = np.zeros_like(v)
    return Gradients(out)


# ---------------------------------------------------------------- helpers

def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x)


def _tape_of(*args):
    for a in args:
        if isinstance(a, Var):
            return a.tape
    return None


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _record(value, parents, vjp):
    tape = _tape_of(*parents)
    if tape is None:
        return value
    return tape._push(value, tuple(parents), vjp)


# ---------------------------------------------------------------- elementwise

def add(a, b):
    av, bv = _val(a), _val(b)
    out = av + bv
    return _record(out, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = _val(a), _val(b)
    out = av - bv
    return _record(out, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)))


def mul(a, b):
    av, bv = _val(a), _val(b)
    out = av * bv
    return _record(out, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a, b):
    av, bv = _val(a), _val(b)
    out = av / bv
    return _record(out, (a, b),
                   lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)))


def neg(a):
    return _record(-_val(a), (a,), lambda g: (-g,))


def exp(a):
    out = np.exp(_val(a))
    return _record(out, (a,), lambda g: (g * out,))


def log(a):
    av = _val(a)
    return _record(np.log(av), (a,), lambda g: (g / av,))


def square(a):
    av = _val(a)
    return _record(av * av, (a,), lambda g: (2.0 * g * av,))


def sqrt(a):
    out = np.sqrt(_val(a))
    return _record(out, (a,), lambda g: (0.5 * g / out,))


def relu(a):
    av = _val(a)
    out = np.maximum(av, 0)
    # gradient at exactly 0 is 0
    return _record(out, (a,), lambda g: (np.where(out > 0, g, 0).astype(g.dtype, copy=False),))


def softplus(a):
    av = _val(a)
    out = np.logaddexp(0.0, av).astype(av.dtype, copy=False)
    sig = 0.5 * (1.0 + np.tanh(0.5 * av))
    return _record(out, (a,), lambda g: (g * sig,))


def softplus_inverse(y):
    """Unconstrained value whose softplus equals ``y`` (> 0)."""
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


def astype(a, dtype):
    av = _val(a)
    if av.dtype == dtype:
        return a
    return _record(av.astype(dtype), (a,), lambda g: (g.astype(av.dtype),))


# ---------------------------------------------------------------- shape / reductions

def transpose(a):
    av = _val(a)
    return _record(av.T, (a,), lambda g: (g.T,))


def reshape(a, shape):
    av = _val(a)
    return _record(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),))


def sum(a, axis=None, keepdims=False):
    av = _val(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape).copy(),)
    return _record(np.asarray(out), (a,), vjp)


def mean(a, axis=None):
    av = _val(a)
    n = av.size if axis is None else av.shape[axis]
    return sum(a, axis=axis) / n


def _argext(a, axis, fn):
    av = _val(a)
    idx = fn(av, axis=axis)
    out = np.take_along_axis(av, np.expand_dims(idx, axis), axis).squeeze(axis)

    def vjp(g):
        ga = np.zeros_like(av)
        np.put_along_axis(ga, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
        return (ga,)
    return _record(out, (a,), vjp)


def amin(a, axis=0):
    """Minimum along ``axis``; the gradient goes to the first minimizer."""
    return _argext(a, axis, np.argmin)


def amax(a, axis=0):
    """Maximum along ``axis``; the gradient goes to the first maximizer."""
    return _argext(a, axis, np.argmax)


def take(a, idx):
    """``a[idx]`` for a basic or integer-array index."""
    av = _val(a)

    def vjp(g):
        ga = np.zeros_like(av)
        np.add.at(ga, idx, g)
        return (ga,)
    return _record(np.asarray(av[idx]), (a,), vjp)


def diag(a):
    """Diagonal of a square matrix."""
    av = _val(a)
    return _record(np.diag(av).copy(), (a,), lambda g: (np.diag(g),))


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    av, bv = _val(a), _val(b)
    if av.shape[-1] != bv.shape[0]:
        raise ShapeMismatch(f"matmul shapes {av.shape} and {bv.shape}")
    out = av @ bv

    def vjp(g):
        ga = gb = None
        if isinstance(a, Var):
            ga = g @ bv.T if bv.ndim == 2 else np.outer(g, bv)
        if isinstance(b, Var):
            gb = av.T @ g if av.ndim == 2 else np.outer(av, g)
            if bv.ndim == 1 and gb.ndim == 2:
                gb = gb.ravel()
        return ga, gb
    return _record(out, (a, b), vjp)


def dense(x, w, b, activate=True):
    """Affine layer ``x @ w.T + b``, followed by ReLU when ``activate``.

    One fused node: the big ``(N, out)`` buffer is touched once per pass
    instead of once per elementary operation.
    """
    xv, wv, bv = _val(x), _val(w), _val(b)
    if xv.shape[-1] != wv.shape[1] or bv.shape != (wv.shape[0],):
        raise ShapeMismatch(f"dense shapes {xv.shape}, {wv.shape}, {bv.shape}")
    out = xv @ wv.T
    out += bv
    if activate:
        np.maximum(out, 0, out=out)

    def vjp(g):
        if activate:
            g = np.where(out > 0, g, 0).astype(g.dtype, copy=False)
        gx = g @ wv if isinstance(x, Var) else None
        gw = g.T @ xv if isinstance(w, Var) else None
        gb = g.sum(axis=0) if isinstance(b, Var) else None
        return gx, gw, gb
    return _record(out, (x, w, b), vjp)


def cholesky(a):
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises ``numpy.linalg.LinAlgError`` when the matrix is not PD; callers
    own jitter policy.
    """
    av = _val(a)
    L = np.linalg.cholesky(av)

    def vjp(gL):
        P = np.tril(L.T @ gL)
        P[np.diag_indices_from(P)] *= 0.5
        S = scipy.linalg.solve_triangular(L, P, lower=True, trans="T")
        S = scipy.linalg.solve_triangular(L, S.T, lower=True, trans="T").T
        return (0.5 * (S + S.T),)
    return _record(L, (a,), vjp)


def solve_triangular(L, b, trans=False):
    """Solve ``L x = b`` (or ``L^T x = b`` when ``trans``) for lower-triangular ``L``."""
    Lv, bv = _val(L), _val(b)
    if Lv.shape[0] != bv.shape[0]:
        raise ShapeMismatch(f"triangular solve shapes {Lv.shape} and {bv.shape}")
    t = "T" if trans else "N"
    x = scipy.linalg.solve_triangular(Lv, bv, lower=True, trans=t)

    def vjp(g):
        gb = scipy.linalg.solve_triangular(Lv, g, lower=True, trans="N" if trans else "T")
        gL = None
        if isinstance(L, Var):
            if trans:
                outer = np.outer(x, gb) if x.ndim == 1 else x @ gb.T
            else:
                outer = np.outer(gb, x) if x.ndim == 1 else gb @ x.T
            gL = -np.tril(outer)
        return gL, gb
    return _record(x, (L, b), vjp)


# ---------------------------------------------------------------- optimizer

@dataclass
class SgdState:
    """Momentum SGD with decoupled-into-gradient weight decay."""

    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-8
    velocity: list | None = None


def sgd_step(state: SgdState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
    """One in-place update ``v <- mu v + (g + wd p); p <- p - lr v``; returns ``params``."""
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} parameters but {len(grads)} gradients")
    if state.velocity is None:
        state.velocity = [np.zeros_like(p) for p in params]
    for p, g, v in zip(params, grads, state.velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ShapeMismatch(f"parameter {p.shape}, gradient {g.shape}, velocity {v.shape}")
        step = g + state.weight_decay * p if state.weight_decay else g
        v *= state.momentum
        v += step
        p -= state.lr * v
    return params


# ---------------------------------------------------------------- verification

def finite_diff_check(f, x, eps=1e-5):
    """Compare reverse-mode and central-difference gradients of ``f`` at ``x``.

    ``f(x)`` must be written with this module's primitives: it is called with a
    :class:`Var` to get the reverse-mode gradient and with plain arrays for
    the differences.  Returns ``max_i |g_ad - g_fd| / max(1, |g_fd|)``.
    """
    x = np.array(x, dtype=float)
    tape = Tape()
    xv = tape.variable(x.copy())
    g_ad = backward(f(xv))[xv]
    g_fd = np.empty_like(x)
    flat = g_fd.reshape(-1)
    for i in range(x.size):
        xp = x.copy().reshape(-1)
        xm = x.copy().reshape(-1)
        xp[i] += eps
        xm[i] -= eps
        fp = float(np.asarray(f(xp.reshape(x.shape))))
        fm = float(np.asarray(f(xm.reshape(x.shape))))
        flat[i] = (fp - fm) / (2 * eps)
    return float(np.max(np.abs(g_ad - g_fd) / np.maximum(1.0, np.abs(g_fd)))) if x.size else 0.0
