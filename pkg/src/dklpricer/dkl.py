"""Deep kernel learning regressor: MLP feature map, rescale to [-1, 1], sparse GP.

The model is ``y = f(l(Psi(x))) + eps`` where ``Psi`` is a ReLU network,
``l`` maps each latent coordinate affinely onto [-1, 1] using the training
batch's min and max (clamping outside that range), and ``f`` has an RBF
Gaussian-process prior approximated with ``M`` inducing points.  Network
weights, inducing locations, variational parameters, the length-scale and
the noise are trained jointly by momentum SGD on the negative ELBO.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import gp
from . import grad as G
from .errors import DegenerateRange, ShapeMismatch, TrainingDiverged

__all__ = [
    "DklConfig", "FeatureExtractor", "RescaleStats", "DeepKernelModel",
    "init_extractor", "mlp_forward", "rescale_l", "fit_rescale", "deep_kernel",
    "latent", "negative_elbo", "train_dkl", "predict_continuation",
    "save_checkpoint", "load_checkpoint", "DKL_HIDDEN",
]

DKL_HIDDEN = (1000, 500, 50)


@dataclass(frozen=True)
class DklConfig:
    """Training and architecture settings; defaults follow the reference experiments."""

    hidden: tuple = DKL_HIDDEN
    latent_dim: int = 2
    inducing: int = 40
    iterations: int = 1500
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-8
    batch_size: int | None = None  # None: full batch
    init_gamma: float = 1.0
    init_sigma: float = 0.8326  # softplus(0): raw noise parameter starts at zero
    init_lam_scale: float = 0.1
    output_scale: bool = False
    y_standardize: bool = True
    whiten: bool = True
    input_scale: bool = True
    dtype: str = "float32"
    grad_clip: float | None = 1.0  # max global gradient norm
    hyper_lr_scale: float = 1.0  # step-size multiplier for gamma, sigma, output scale
    detach_rescale: bool = False  # treat the batch min/max as constants


@dataclass
class FeatureExtractor:
    """Weights ``W[j]`` have shape (out, in); ReLU after every layer but the last."""

    weights: list
    biases: list

    @property
    def layer_dims(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)


@dataclass
class RescaleStats:
    lo: np.ndarray
    hi: np.ndarray


@dataclass
class DeepKernelModel:
    extractor: FeatureExtractor
    rescale: RescaleStats
    svgp: gp.SvgpState
    config: DklConfig = field(default_factory=DklConfig)
    x_scale: np.ndarray | None = None
    y_shift: float = 0.0
    y_scale: float = 1.0
    history: np.ndarray | None = None  # -ELBO / N per iteration


def init_extractor(dims, rng, dtype=np.float64) -> FeatureExtractor:
    """Uniform(+-1/sqrt(fan_in)) initialization for weights and biases."""
    Ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        Ws.append(rng.uniform(-bound, bound, (fan_out, fan_in)).astype(dtype))
        bs.append(rng.uniform(-bound, bound, fan_out).astype(dtype))
    return FeatureExtractor(Ws, bs)


def _forward(Ws, bs, X):
    H = X
    for j, (W, b) in enumerate(zip(Ws, bs)):
        H = G.dense(H, W, b, activate=j < len(Ws) - 1)
    return H


def mlp_forward(extractor: FeatureExtractor, x) -> np.ndarray:
    """Network output for one input ``(d,)`` or a batch ``(N, d)``."""
    x = np.asarray(x)
    d = extractor.layer_dims[0]
    if x.shape[-1] != d:
        raise ShapeMismatch(f"extractor expects {d} inputs, got {x.shape[-1]}")
    X = np.atleast_2d(x).astype(extractor.weights[0].dtype, copy=False)
    out = _forward(extractor.weights, extractor.biases, X)
    return out[0] if x.ndim == 1 else out


def _rescale_terms(P, lo, hi, clamp):
    width = hi - lo
    span = G._val(width)
    degenerate = span <= 0
    safe = width + degenerate.astype(span.dtype)  # avoid 0/0; masked out below
    out = 2.0 * (P - lo) / safe - 1.0
    if clamp:
        out = np.clip(G._val(out), -1.0, 1.0)
    if np.any(degenerate):
        out = out * (~degenerate).astype(span.dtype)
    return out


def fit_rescale(P) -> RescaleStats:
    P = np.atleast_2d(P)
    return RescaleStats(P.min(axis=0), P.max(axis=0))


def rescale_l(stats: RescaleStats, v) -> np.ndarray:
    """Map into [-1, 1] per coordinate; outside the batch range clamps to +-1.

    A coordinate whose batch range is empty (max == min) maps to 0.
    """
    v = np.asarray(v, dtype=float)
    if np.any(stats.hi <= stats.lo):
        warnings.warn("rescale range is degenerate in some dimension; mapping it to 0",
                      DegenerateRange, stacklevel=2)
    return _rescale_terms(v, stats.lo, stats.hi, clamp=True)


def latent(model: DeepKernelModel, X) -> np.ndarray:
    """Frozen feature map ``l(Psi(x))`` used for prediction, float64."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if model.x_scale is not None:
        X = X / model.x_scale
    P = mlp_forward(model.extractor, X).astype(np.float64)
    return _rescale_terms(P, model.rescale.lo, model.rescale.hi, clamp=True)


def deep_kernel(model: DeepKernelModel, x, x2) -> float:
    g1 = latent(model, np.atleast_2d(x))[0]
    g2 = latent(model, np.atleast_2d(x2))[0]
    return gp.rbf(model.svgp.kernel, g1, g2)


# ---------------------------------------------------------------- training

_PARAM_ORDER = ("Z", "m", "L_raw", "gamma_raw", "sigma_raw", "scale_raw")


def _lower_from_raw(raw):
    """Lower-triangular factor with a softplus-positive diagonal."""
    M = raw.shape[0]
    strict = np.tril(np.ones((M, M)), -1)
    d = G.softplus(G.diag(raw))
    return raw * strict + G.reshape(d, (1, M)) * np.eye(M)


def negative_elbo(Ws, bs, gp_params, X, y, config: DklConfig):
    """Negative ELBO per training point for the full deep-kernel model.

    ``gp_params`` maps the names in ``_PARAM_ORDER`` to arrays or Vars.
    Returns ``(loss, lo, hi)``, the rescale bounds of this batch included.
    """
    P = _forward(Ws, bs, X)
    P = G.astype(P, np.float64)
    if config.detach_rescale:
        lo, hi = G._val(P).min(axis=0), G._val(P).max(axis=0)
    else:
        lo, hi = G.amin(P, axis=0), G.amax(P, axis=0)
    Glat = _rescale_terms(P, lo, hi, clamp=False)
    gamma = G.softplus(gp_params["gamma_raw"])
    sigma = G.softplus(gp_params["sigma_raw"])
    scale = G.softplus(gp_params["scale_raw"]) if config.output_scale else None
    L_lam = _lower_from_raw(gp_params["L_raw"])
    val = gp.elbo_terms(gp_params["Z"], gp_params["m"], L_lam, gamma, sigma, Glat, y,
                        scale, whiten=config.whiten)
    return -val / y.shape[0], G._val(lo), G._val(hi)


def _init_params(d, config: DklConfig, rng):
    dtype = np.dtype(config.dtype)
    dims = (d,) + tuple(config.hidden) + (config.latent_dim,)
    ext = init_extractor(dims, rng, dtype)
    M = config.inducing
    raw_diag = float(G.softplus_inverse(config.init_lam_scale))
    L_raw = np.eye(M) * raw_diag
    gp_params = {
        "Z": rng.standard_normal((M, config.latent_dim)),
        "m": np.zeros(M),
        "L_raw": L_raw,
        "gamma_raw": np.array(float(G.softplus_inverse(config.init_gamma))),
        "sigma_raw": np.array(float(G.softplus_inverse(config.init_sigma))),
        "scale_raw": np.array(float(G.softplus_inverse(1.0))),
    }
    return ext, gp_params


def _svgp_state(gp_params, config: DklConfig) -> gp.SvgpState:
    sp = lambda a: float(np.logaddexp(0.0, a))
    kern = gp.RbfKernel(gamma=sp(gp_params["gamma_raw"]),
                        output_scale=sp(gp_params["scale_raw"]) if config.output_scale else None)
    L_lam = np.asarray(_lower_from_raw(gp_params["L_raw"]))
    m = np.asarray(gp_params["m"], dtype=float)
    Z = np.asarray(gp_params["Z"], dtype=float)
    if config.whiten:
        Kzz = gp.kernel_matrix(kern, Z, Z)
        Lk = np.asarray(gp.chol_jitter(Kzz))
        m, L_lam = Lk @ m, Lk @ L_lam
    return gp.SvgpState(Z=Z, m=m, L_lam=L_lam, kernel=kern, sigma=sp(gp_params["sigma_raw"]))


def train_dkl(X, y, config: DklConfig = DklConfig(), seed=None, rng=None) -> DeepKernelModel:
    """Fit the deep-kernel model by momentum SGD on the per-point negative ELBO."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    N, d = X.shape
    if N != y.shape[0]:
        raise ShapeMismatch(f"{N} inputs but {y.shape[0]} targets")
    if N < config.inducing:
        raise ShapeMismatch(f"need at least M={config.inducing} training points, got {N}")
    if not np.all(np.isfinite(y)):
        raise TrainingDiverged("non-finite training targets")
    rng = rng if rng is not None else np.random.default_rng(seed)
    dtype = np.dtype(config.dtype)

    x_scale = None
    if config.input_scale:
        x_scale = np.abs(X).mean(axis=0)
        x_scale[x_scale == 0] = 1.0
    Xin = (X / x_scale if x_scale is not None else X).astype(dtype)
    y_shift, y_scale = 0.0, 1.0
    if config.y_standardize:
        y_shift, y_scale = float(y.mean()), float(y.std()) or 1.0
    yt = (y - y_shift) / y_scale

    ext, gp_params = _init_params(d, config, rng)
    names = [k for k in _PARAM_ORDER if config.output_scale or k != "scale_raw"]
    params = list(ext.weights) + list(ext.biases) + [gp_params[k] for k in names]
    state = G.SgdState(config.lr, config.momentum, config.weight_decay)
    n_layers = len(ext.weights)
    history = np.empty(config.iterations)
    bs = config.batch_size

    for it in range(config.iterations):
        if bs is not None and bs < N:
            idx = rng.choice(N, size=bs, replace=False)
            Xb, yb = Xin[idx], yt[idx]
        else:
            Xb, yb = Xin, yt
        tape = G.Tape()
        vars_ = [tape.variable(p) for p in params]
        Wv, bv = vars_[:n_layers], vars_[n_layers:2 * n_layers]
        gpv = dict(zip(names, vars_[2 * n_layers:]))
        gpv.setdefault("scale_raw", gp_params["scale_raw"])
        try:
            loss, _, _ = negative_elbo(Wv, bv, gpv, Xb, yb, config)
        except Exception as exc:  # NotPSD and friends mid-training
            raise TrainingDiverged(f"iteration {it}: {exc}") from exc
        lval = float(loss.value)
        if not np.isfinite(lval):
            raise TrainingDiverged(f"negative ELBO became non-finite at iteration {it}")
        history[it] = lval
        grads = G.backward(loss)
        glist = [grads[v] for v in vars_]
        if config.hyper_lr_scale != 1.0:
            for k, name in enumerate(names):
                if name.endswith("_raw") and name != "L_raw":
                    glist[2 * n_layers + k] = glist[2 * n_layers + k] * config.hyper_lr_scale
        if config.grad_clip is not None:
            norm = np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in glist))
            if norm > config.grad_clip:
                glist = [g * (config.grad_clip / norm) for g in glist]
        G.sgd_step(state, params, glist)
        tape.clear()

    P = mlp_forward(ext, Xin).astype(np.float64)
    stats = fit_rescale(P)
    return DeepKernelModel(ext, stats, _svgp_state(gp_params, config), config,
                           x_scale=x_scale, y_shift=y_shift, y_scale=y_scale, history=history)


def predict_continuation(model: DeepKernelModel, x) -> np.ndarray | float:
    """Variational posterior mean at the frozen latent image of ``x``."""
    x = np.asarray(x, dtype=float)
    Glat = latent(model, np.atleast_2d(x))
    s = model.svgp
    mean, _, _ = gp.predict_terms(s.Z, s.m, s.L_lam, s.kernel.gamma, Glat,
                                  s.kernel.output_scale, with_var=False)
    out = model.y_shift + model.y_scale * np.asarray(mean)
    return float(out[0]) if x.ndim == 1 else out


# ---------------------------------------------------------------- checkpoints

_MAGIC = b"DKLCKPT1"


def save_checkpoint(model: DeepKernelModel, fh) -> None:
    """Write a flat little-endian binary checkpoint.

    Layout: magic ``DKLCKPT1``; uint32 layer count L; L+1 uint32 layer dims;
    uint32 M; then float64 blocks in row-major order: W_1, b_1, ..., W_L, b_L,
    rescale lo, rescale hi, Z (M x d'), m (M), L_lam (M x M), and the scalars
    gamma, output_scale (NaN when disabled), sigma, y_shift, y_scale; finally
    uint32 flag for an input scale and, if set, the d input scales.
    """
    ext, s = model.extractor, model.svgp
    dims = ext.layer_dims
    fh.write(_MAGIC)
    fh.write(struct.pack("<I", len(ext.weights)))
    fh.write(struct.pack(f"<{len(dims)}I", *dims))
    fh.write(struct.pack("<I", s.M))
    blocks = []
    for W, b in zip(ext.weights, ext.biases):
        blocks += [W, b]
    blocks += [model.rescale.lo, model.rescale.hi, s.Z, s.m, s.L_lam]
    scale = np.nan if s.kernel.output_scale is None else s.kernel.output_scale
    blocks.append(np.array([s.kernel.gamma, scale, s.sigma, model.y_shift, model.y_scale]))
    for blk in blocks:
        fh.write(np.ascontiguousarray(blk, dtype="<f8").tobytes())
    fh.write(struct.pack("<I", model.x_scale is not None))
    if model.x_scale is not None:
        fh.write(np.ascontiguousarray(model.x_scale, dtype="<f8").tobytes())


def load_checkpoint(fh, config: DklConfig | None = None) -> DeepKernelModel:
    if fh.read(8) != _MAGIC:
        raise ValueError("not a DKL checkpoint")
    (L,) = struct.unpack("<I", fh.read(4))
    dims = struct.unpack(f"<{L + 1}I", fh.read(4 * (L + 1)))
    (M,) = struct.unpack("<I", fh.read(4))

    def take(*shape):
        n = int(np.prod(shape))
        return np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()

    Ws, bs = [], []
    for i in range(L):
        Ws.append(take(dims[i + 1], dims[i]))
        bs.append(take(dims[i + 1]))
    dlat = dims[-1]
    lo, hi = take(dlat), take(dlat)
    Z, m, L_lam = take(M, dlat), take(M), take(M, M)
    gamma, scale, sigma, y_shift, y_scale = take(5)
    (has_scale,) = struct.unpack("<I", fh.read(4))
    x_scale = take(dims[0]) if has_scale else None
    kern = gp.RbfKernel(gamma=float(gamma), output_scale=None if np.isnan(scale) else float(scale))
    cfg = config or DklConfig(hidden=tuple(dims[1:-1]), latent_dim=dlat, inducing=M,
                              output_scale=not np.isnan(scale), dtype="float64")
    return DeepKernelModel(FeatureExtractor(Ws, bs), RescaleStats(lo, hi),
                           gp.SvgpState(Z, m, L_lam, kern, float(sigma)), cfg,
                           x_scale=x_scale, y_shift=float(y_shift), y_scale=float(y_scale))
