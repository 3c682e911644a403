"""Bermudan option pricing by regression Monte Carlo with deep-kernel Gaussian processes.

Modules
-------
sim      correlated GBM and Merton jump-diffusion path simulation
payoff   max call and geometric basket put payoffs, discounting
grad     reverse-mode gradient tape, momentum SGD, finite-difference checks
gp       RBF kernel, exact GP regression, sparse variational GP and its ELBO
dkl      deep kernel learning regressor (MLP feature map + sparse GP)
lsm      polynomial least-squares regressor
pricer   Longstaff-Schwartz backward induction and batch pricing
oracles  closed-form, binomial-tree and quadrature reference prices
config   experiment configuration files
bench    reports, sweeps and the oracle suite
"""
from .config import ExperimentConfig, load_config, parse_config
from .payoff import GEO_BASKET_PUT, MAX_CALL, PayoffSpec
from .pricer import Dkl, ExactGpr, LsmPoly, PriceEstimate, longstaff_schwartz, price_batches

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "load_config", "parse_config", "PayoffSpec", "MAX_CALL",
    "GEO_BASKET_PUT", "LsmPoly", "ExactGpr", "Dkl", "PriceEstimate",
    "longstaff_schwartz", "price_batches",
]
