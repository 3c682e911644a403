"""Longstaff-Schwartz backward induction with pluggable continuation regressors."""
from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dkl, gp, lsm
from .errors import EmptyPaths, UnsupportedDimension
from .payoff import PayoffSpec, discount, evaluate
from .sim import PathSet

__all__ = [
    "LsmPoly", "ExactGpr", "Dkl", "PriceEstimate",
    "longstaff_schwartz", "european_mc_price", "fit_last_step",
    "continuation_surface", "write_surface_csv", "monotonicity_violations",
    "aggregate", "batch_seeds", "price_batches", "WORKERS_ENV",
]

WORKERS_ENV = "DKLPRICER_WORKERS"


# ---------------------------------------------------------------- regressors

@dataclass(frozen=True)
class LsmPoly:
    degree: int = 2
    cross_terms: bool = True

    def fit(self, X, y, rng=None):
        return lsm.lsm_fit(X, y, self.degree, self.cross_terms)


class _FittedGpr:
    def __init__(self, model: gp.ExactGpModel, stats, y_shift, y_scale):
        self.model, self.stats = model, stats
        self.y_shift, self.y_scale = y_shift, y_scale

    def predict(self, X):
        Xl = dkl._rescale_terms(np.atleast_2d(X), self.stats.lo, self.stats.hi, clamp=True)
        return self.y_shift + self.y_scale * gp.gpr_posterior_mean(self.model, Xl)


@dataclass(frozen=True)
class ExactGpr:
    """Exact GP regression with an RBF kernel on inputs rescaled to [-1, 1].

    Hyperparameters maximize the log marginal likelihood on at most
    ``max_points`` randomly chosen training points, and the posterior is
    conditioned on the same subset (the full O(N^3) solve is impractical at
    N = 10^4 on a desk machine).
    """

    max_points: int = 1000
    output_scale: bool = True

    def fit(self, X, y, rng=None):
        rng = rng if rng is not None else np.random.default_rng()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        if X.shape[0] > self.max_points:
            idx = np.sort(rng.choice(X.shape[0], self.max_points, replace=False))
            X, y = X[idx], y[idx]
        stats = dkl.fit_rescale(X)
        Xl = dkl._rescale_terms(X, stats.lo, stats.hi, clamp=True)
        shift, scale = float(y.mean()), float(y.std()) or 1.0
        model = gp.fit_exact_gp(Xl, (y - shift) / scale, gamma0=1.0, sigma0=0.5,
                                output_scale0=1.0 if self.output_scale else None)
        return _FittedGpr(model, stats, shift, scale)


class _FittedDkl:
    def __init__(self, model: dkl.DeepKernelModel):
        self.model = model

    def predict(self, X):
        return dkl.predict_continuation(self.model, np.atleast_2d(X))


@dataclass(frozen=True)
class Dkl:
    config: dkl.DklConfig = field(default_factory=dkl.DklConfig)

    def fit(self, X, y, rng=None):
        return _FittedDkl(dkl.train_dkl(X, y, self.config, rng=rng))


# ---------------------------------------------------------------- pricing

def _check(paths: PathSet):
    if paths.values.size == 0 or paths.n_paths == 0:
        raise EmptyPaths("no simulated paths")


def longstaff_schwartz(paths: PathSet, spec: PayoffSpec, r: float, regressor, *,
                       itm_filter: bool = False, rng=None, seed=None) -> float:
    """Bermudan price by backward induction over the exercise dates.

    Every step trains ``regressor`` on all paths (``itm_filter`` restricts it
    to in-the-money paths), exercises where the payoff is positive and beats
    the discounted continuation estimate, and otherwise carries the next
    date's value back one step.  Time 0 is not an exercise date.
    """
    _check(paths)
    rng = rng if rng is not None else np.random.default_rng(seed)
    S, t = paths.values, paths.times
    n = paths.n_steps
    V = evaluate(spec, S[:, n])
    for i in range(n - 1, 0, -1):
        D = discount(r, t[i], t[i + 1])
        h = evaluate(spec, S[:, i])
        mask = h > 0 if itm_filter else slice(None)
        if itm_filter and not np.any(mask):
            V = D * V
            continue
        fitted = regressor.fit(S[mask, i], V[mask], rng)
        cont = D * np.asarray(fitted.predict(S[:, i]))
        exercise = (h > 0) & (h > cont)
        V = np.where(exercise, h, D * V)
    return discount(r, t[0], t[1]) * float(np.mean(V))


def european_mc_price(paths: PathSet, spec: PayoffSpec, r: float) -> float:
    _check(paths)
    return discount(r, paths.times[0], paths.times[-1]) * float(np.mean(evaluate(spec, paths.values[:, -1])))


def european_mc_stderr(paths: PathSet, spec: PayoffSpec, r: float) -> float:
    _check(paths)
    disc = discount(r, paths.times[0], paths.times[-1]) * evaluate(spec, paths.values[:, -1])
    return float(disc.std(ddof=1) / np.sqrt(paths.n_paths))


@dataclass
class PriceEstimate:
    price: float
    per_batch: list
    std: float
    wall_time: float
    single_batch: bool = False


def aggregate(prices, wall_time: float) -> PriceEstimate:
    """Mean and sample (n-1) standard deviation; a single batch reports std 0 and is flagged."""
    prices = [float(p) for p in prices]
    single = len(prices) == 1
    std = 0.0 if single else float(np.std(prices, ddof=1))
    return PriceEstimate(float(np.mean(prices)), prices, std, wall_time, single)


def batch_seeds(master_seed: int, batches: int) -> list:
    """Independent 64-bit seeds for each batch, spawned from the master seed."""
    kids = np.random.SeedSequence(int(master_seed)).spawn(int(batches))
    return [int(k.generate_state(1, np.uint64)[0]) for k in kids]


def _price_one(config, seed: int) -> float:
    paths = config.simulate(seed)
    rng = np.random.default_rng([seed, 1])
    return longstaff_schwartz(paths, config.payoff_spec, config.rate, config.regressor(),
                              itm_filter=config.itm_filter, rng=rng)


def _workers(requested, batches):
    if requested is None:
        env = os.environ.get(WORKERS_ENV)
        requested = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(int(requested), batches))


def price_batches(config, workers: int | None = None) -> PriceEstimate:
    """Price ``config.batches`` independently seeded batches.

    Batches run in a process pool (``workers``, else the ``DKLPRICER_WORKERS``
    environment variable, else the CPU count); results are collected in batch
    order, so the estimate depends only on the config and its master seed.
    """
    seeds = batch_seeds(config.master_seed, config.batches)
    n = _workers(workers, len(seeds))
    t0 = time.perf_counter()
    if n == 1:
        prices = [_price_one(config, s) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            prices = list(pool.map(_price_one, [config] * len(seeds), seeds))
    return aggregate(prices, time.perf_counter() - t0)


# ---------------------------------------------------------------- continuation surface

def fit_last_step(paths: PathSet, spec: PayoffSpec, regressor, rng=None):
    """Regressor trained on (S_{n-1}, h(S_n)), the first regression of the recursion."""
    _check(paths)
    n = paths.n_steps
    if n < 2:
        raise ValueError("need at least two exercise dates")
    return regressor.fit(paths.values[:, n - 1], evaluate(spec, paths.values[:, n]),
                         rng if rng is not None else np.random.default_rng())


def continuation_surface(fitted, disc: float, lo: float = 30.0, hi: float = 180.0,
                         points: int = 151) -> np.ndarray:
    """Rows ``(s1, s2, D * estimate)`` over a square grid, row-major in (s1, s2)."""
    dim = getattr(fitted, "d", None) or _fitted_dim(fitted)
    if dim != 2:
        raise UnsupportedDimension(f"continuation surface needs d=2, got d={dim}")
    g = np.linspace(lo, hi, points)
    s1, s2 = np.meshgrid(g, g, indexing="ij")
    X = np.column_stack([s1.ravel(), s2.ravel()])
    vals = disc * np.asarray(fitted.predict(X), dtype=float)
    return np.column_stack([X, vals])


def _fitted_dim(fitted):
    if isinstance(fitted, _FittedDkl):
        return fitted.model.extractor.layer_dims[0]
    if isinstance(fitted, _FittedGpr):
        return fitted.model.X.shape[1]
    return None


def write_surface_csv(rows: np.ndarray, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["s1", "s2", "value"])
    for s1, s2, v in rows:
        w.writerow([repr(float(s1)), repr(float(s2)), repr(float(v))])


def monotonicity_violations(rows: np.ndarray, s2: float = 180.0, tol: float = 0.0) -> int:
    """Number of decreases of the slice ``C(., s2)`` along increasing s1."""
    sel = rows[np.isclose(rows[:, 1], s2)]
    sel = sel[np.argsort(sel[:, 0])]
    return int(np.sum(np.diff(sel[:, 2]) < -tol))


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
