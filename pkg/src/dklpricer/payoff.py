"""Exercise payoffs and discount factors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidConfig

__all__ = ["PayoffSpec", "evaluate", "discount", "MAX_CALL", "GEO_BASKET_PUT"]

MAX_CALL = "max_call"
GEO_BASKET_PUT = "geo_basket_put"


@dataclass(frozen=True)
class PayoffSpec:
    kind: str
    strike: float

    def __post_init__(self):
        if self.kind not in (MAX_CALL, GEO_BASKET_PUT):
            raise InvalidConfig(f"unknown payoff kind {self.kind!r}")
        if not self.strike > 0:
            raise InvalidConfig("strike must be positive")


def evaluate(spec: PayoffSpec, s) -> np.ndarray | float:
    """Payoff of ``s``; the last axis indexes assets, leading axes broadcast.

    The geometric mean is taken in log space so that d=100 baskets do not
    overflow.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("payoffs need strictly positive prices")
    if spec.kind == MAX_CALL:
        out = np.maximum(s.max(axis=-1) - spec.strike, 0.0)
    else:
        out = np.maximum(spec.strike - np.exp(np.log(s).mean(axis=-1)), 0.0)
    return out if out.ndim else float(out)


def discount(r: float, t_from: float, t_to: float) -> float:
    """Discount factor ``exp(-r (t_to - t_from))`` from ``t_to`` back to ``t_from``."""
    if t_to < t_from:
        raise DomainError("discount needs t_to >= t_from")
    return float(np.exp(-r * (t_to - t_from)))
