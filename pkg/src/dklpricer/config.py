"""Experiment configuration: a flat INI file mapped onto :class:`ExperimentConfig`.

Example::

    [market]
    model = gbm
    d = 2
    s0 = 100

    [payoff]
    kind = max_call
    strike = 100

    [experiment]
    method = dkl40
    batches = 10
    paths = 10000
    master_seed = 2024

    [dkl]
    iterations = 1500
    extractor = 1000,500,50

Market fields left out take the model's reference values: GBM max call
(r=5%, q=10%, sigma=20%, rho=0, T=3, nine dates) or the MJD geometric basket
(S0=K=40, r=8%, T=1, ten dates, lambda=5; see :func:`dklpricer.sim.reference_mjd_params`).
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import dkl, sim
from .errors import InvalidConfig
from .payoff import GEO_BASKET_PUT, MAX_CALL, PayoffSpec

__all__ = ["ExperimentConfig", "load_config", "parse_config", "dump_config", "METHODS"]

METHODS = ("lsm", "gpr", "dkl40", "dkl200", "dkl(M)")
_DKL_RE = re.compile(r"^dkl(\d+)?$")

_GBM_DEFAULTS = dict(s0=100.0, r=0.05, q=0.1, sigma=0.2, rho=0.0, T=3.0, n=9,
                     payoff=MAX_CALL, strike=100.0)
_MJD_DEFAULTS = dict(s0=40.0, r=0.08, T=1.0, n=10, payoff=GEO_BASKET_PUT, strike=40.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one pricing run.

    ``None`` market fields resolve to the model's reference values.
    ``method`` is ``lsm``, ``gpr``, ``dkl40``, ``dkl200`` or ``dkl<M>``.
    """

    model: str = "gbm"
    d: int = 2
    s0: float | None = None
    r: float | None = None
    q: float | None = None
    sigma: float | None = None
    rho: float | None = None
    T: float | None = None
    n: int | None = None
    lambda_j: float = 5.0
    mu_j: float = -0.025
    sigma_j: float | None = None
    kappa_form: str = "variance"
    dividend_form: str = "benchmark"
    payoff: str | None = None
    strike: float | None = None
    method: str = "lsm"
    batches: int = 10
    paths: int = 10_000
    master_seed: int = 0
    lsm_degree: int = 2
    itm_filter: bool = False
    iterations: int = 1500
    extractor: tuple = dkl.DKL_HIDDEN
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-8
    output_scale: bool = False
    y_standardize: bool = True
    gpr_points: int = 1000
    name: str = ""

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------ validation
    def validate(self):
        if self.model not in ("gbm", "mjd"):
            raise InvalidConfig(f"model must be gbm or mjd, got {self.model!r}")
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise InvalidConfig(f"d must be a positive integer, got {self.d!r}")
        if self.model == "mjd" and self.d < 2:
            raise InvalidConfig("the MJD basket market needs d >= 2")
        if self.batches < 1:
            raise InvalidConfig(f"batches must be >= 1, got {self.batches}")
        if self.paths < 1:
            raise InvalidConfig(f"paths must be >= 1, got {self.paths}")
        if self.iterations < 1:
            raise InvalidConfig(f"iterations must be >= 1, got {self.iterations}")
        if self.method != "gpr" and self.method != "lsm" and not _DKL_RE.match(self.method):
            raise InvalidConfig(f"unknown method {self.method!r}; expected one of {METHODS}")
        if _DKL_RE.match(self.method) and self.inducing > self.paths:
            raise InvalidConfig(f"{self.inducing} inducing points but only {self.paths} paths")
        if any(int(h) < 1 for h in self.extractor):
            raise InvalidConfig("extractor widths must be positive")
        if self.kappa_form not in ("variance", "literal"):
            raise InvalidConfig(f"kappa_form must be variance or literal, got {self.kappa_form!r}")
        if self.dividend_form not in ("benchmark", "literal"):
            raise InvalidConfig(f"dividend_form must be benchmark or literal, got {self.dividend_form!r}")
        if self.payoff_kind not in (MAX_CALL, GEO_BASKET_PUT):
            raise InvalidConfig(f"unknown payoff {self.payoff_kind!r}")
        if self.lsm_degree != 2 and self.d > 3:
            raise InvalidConfig("polynomial degree other than 2 needs d <= 3")
        # builds and checks the market block (InvalidConfig from sim)
        self.market()
        PayoffSpec(self.payoff_kind, self.strike_value)

    # ------------------------------------------------------------ derived
    @property
    def _defaults(self) -> dict:
        return _GBM_DEFAULTS if self.model == "gbm" else _MJD_DEFAULTS

    @property
    def payoff_kind(self) -> str:
        return self.payoff or self._defaults["payoff"]

    @property
    def strike_value(self) -> float:
        return float(self.strike if self.strike is not None else self._defaults["strike"])

    @property
    def payoff_spec(self) -> PayoffSpec:
        return PayoffSpec(self.payoff_kind, self.strike_value)

    @property
    def is_dkl(self) -> bool:
        return bool(_DKL_RE.match(self.method))

    @property
    def inducing(self) -> int:
        m = _DKL_RE.match(self.method)
        if not m:
            return 0
        return int(m.group(1)) if m.group(1) else 40

    @property
    def rate(self) -> float:
        return float(self.market_base().r)

    def _get(self, key):
        v = getattr(self, key)
        return v if v is not None else self._defaults.get(key)

    def market_base(self) -> sim.GbmParams:
        m = self.market()
        return m if isinstance(m, sim.GbmParams) else m.base

    def market(self):
        """GbmParams or MjdParams for this configuration."""
        try:
            if self.model == "gbm":
                return sim.GbmParams(d=self.d, s0=self._get("s0"), r=self._get("r"),
                                     q=self._get("q"), sigma=self._get("sigma"),
                                     rho=self._get("rho"), T=self._get("T"), n=int(self._get("n")))
            ref = sim.reference_mjd_params(self.d, dividend_form=self.dividend_form,
                                       kappa_form=self.kappa_form)
            b = ref.base
            sigma = self.sigma if self.sigma is not None else float(b.sigma[0])
            sigma_j = self.sigma_j if self.sigma_j is not None else sigma
            rho = self.rho if self.rho is not None else float(b.rho[0, 1])
            if self.q is not None:
                q = self.q
            elif self.dividend_form == "benchmark":
                q = sim.benchmark_dividend(self.lambda_j, self.mu_j, sigma_j, sigma, self.d, rho)
            else:
                q = float(b.q[0])
            base = sim.GbmParams(d=self.d, s0=self._get("s0"), r=self._get("r"), q=q,
                                 sigma=sigma, rho=rho, T=self._get("T"), n=int(self._get("n")))
            return sim.MjdParams(base=base, lambda_j=self.lambda_j, mu_j=self.mu_j,
                                 sigma_j=sigma_j, rho_j=rho, kappa_form=self.kappa_form)
        except InvalidConfig:
            raise
        except (ValueError, TypeError) as exc:
            raise InvalidConfig(str(exc)) from exc

    def simulate(self, seed) -> sim.PathSet:
        m = self.market()
        if isinstance(m, sim.MjdParams):
            return sim.simulate_mjd(m, self.paths, seed=seed)
        return sim.simulate_gbm(m, self.paths, seed=seed)

    def dkl_config(self) -> dkl.DklConfig:
        return dkl.DklConfig(hidden=tuple(int(h) for h in self.extractor),
                             inducing=self.inducing or 40, iterations=self.iterations,
                             lr=self.lr, momentum=self.momentum, weight_decay=self.weight_decay,
                             output_scale=self.output_scale, y_standardize=self.y_standardize)

    def regressor(self):
        from . import pricer
        if self.method == "lsm":
            return pricer.LsmPoly(degree=self.lsm_degree)
        if self.method == "gpr":
            return pricer.ExactGpr(max_points=self.gpr_points, output_scale=self.output_scale)
        return pricer.Dkl(self.dkl_config())

    def label(self) -> str:
        return self.name or f"{self.model}_{self.payoff_kind}_d{self.d}"

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


# ---------------------------------------------------------------- INI mapping

_SECTIONS = {
    "market": ("model", "d", "s0", "r", "q", "sigma", "rho", "T", "n",
               "lambda_j", "mu_j", "sigma_j", "kappa_form", "dividend_form"),
    "payoff": ("payoff", "strike"),
    "experiment": ("name", "method", "batches", "paths", "master_seed", "itm_filter",
                   "lsm_degree", "gpr_points"),
    "dkl": ("iterations", "extractor", "lr", "momentum", "weight_decay",
            "output_scale", "y_standardize"),
}
_ALIASES = {("payoff", "kind"): "payoff", ("experiment", "seed"): "master_seed"}
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key, raw: str):
    raw = raw.strip()
    t = str(_TYPES[key])
    if raw == "" and t == "str":
        return raw
    if raw == "" or raw.lower() == "none":
        if "None" in t:
            return None
        raise InvalidConfig(f"{key} needs a value")
    try:
        if key == "extractor":
            return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
        if t.startswith("bool"):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if t.startswith("int"):
            return int(raw)
        if t.startswith("float"):
            return float(raw)
        return raw
    except ValueError as exc:
        raise InvalidConfig(f"bad value for {key}: {raw!r}") from exc


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse INI text; keyword ``overrides`` (non-None) win over file values."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidConfig(f"unreadable config: {exc}") from exc
    kw = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise InvalidConfig(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            name = _ALIASES.get((section, key), key)
            if name not in _SECTIONS[section]:
                raise InvalidConfig(f"unknown key {key!r} in [{section}]")
            kw[name] = _convert(name, raw)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from exc


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, **overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text that parses back to ``cfg``."""
    out = []
    for section, keys in _SECTIONS.items():
        out.append(f"[{section}]")
        for k in keys:
            v = getattr(cfg, k)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(str(int(h)) for h in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{k} = {v}")
        out.append("")
    return "\n".join(out)
