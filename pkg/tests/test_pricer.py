import io

import numpy as np
import pytest

from dklpricer import dkl, oracles, pricer, sim
from dklpricer.config import ExperimentConfig
from dklpricer.errors import EmptyPaths, UnsupportedDimension
from dklpricer.payoff import GEO_BASKET_PUT, MAX_CALL, PayoffSpec

TINY_DKL = dkl.DklConfig(hidden=(8, 4), inducing=5, iterations=20, dtype="float64")


class _Zero:
    def fit(self, X, y, rng=None):
        return self

    def predict(self, X):
        return np.zeros(np.atleast_2d(X).shape[0])


def _gbm(d=2, **kw):
    return sim.GbmParams(**{**dict(d=d, s0=100.0, r=0.05, q=0.1, sigma=0.2, rho=0.0, T=3.0, n=9), **kw})


@pytest.mark.parametrize("regressor", [pricer.LsmPoly(), _Zero(), pricer.Dkl(TINY_DKL)])
def test_single_date_is_european_bitwise(regressor):
    p = _gbm(n=1)
    paths = sim.simulate_gbm(p, 2000, seed=1)
    spec = PayoffSpec(MAX_CALL, 100.0)
    assert pricer.longstaff_schwartz(paths, spec, p.r, regressor) == pricer.european_mc_price(paths, spec, p.r)


def test_bermudan_put_against_binomial_tree():
    p = sim.GbmParams(d=1, s0=40.0, r=0.06, q=0.0, sigma=0.2, rho=0.0, T=1.0, n=10)
    spec = PayoffSpec(GEO_BASKET_PUT, 40.0)  # one-asset geometric basket is the asset
    est = pricer.longstaff_schwartz(sim.simulate_gbm(p, 100_000, seed=7), spec, p.r, pricer.LsmPoly(degree=3))
    tree = oracles.crr_bermudan(40.0, 40.0, 0.06, 0.2, 1.0, 2000, 10)
    assert abs(est - tree) / tree < 0.01


def test_mjd_geometric_put_d10():
    cfg = ExperimentConfig(model="mjd", d=10, method="lsm", master_seed=11)
    est = pricer.price_batches(cfg, workers=1)
    assert abs(est.price - 6.995) / 6.995 < 0.02


def test_max_call_d2_batches_and_spread():
    cfg = ExperimentConfig(model="gbm", d=2, method="lsm", master_seed=5)
    est = pricer.price_batches(cfg, workers=1)
    assert abs(est.price - 13.899) < 0.25
    assert 0.05 <= est.std <= 0.45
    assert len(est.per_batch) == 10
    assert est.price == pytest.approx(np.mean(est.per_batch), rel=1e-15)
    assert est.std == pytest.approx(np.std(est.per_batch, ddof=1), rel=1e-12)


def test_single_batch_is_flagged():
    est = pricer.price_batches(ExperimentConfig(batches=1, paths=500), workers=1)
    assert est.std == 0.0 and est.single_batch
    assert not pricer.aggregate([1.0, 2.0], 0.0).single_batch


def test_batches_are_deterministic_and_independent_of_workers():
    cfg = ExperimentConfig(batches=3, paths=2000, master_seed=99)
    a = pricer.price_batches(cfg, workers=1)
    b = pricer.price_batches(cfg, workers=1)
    c = pricer.price_batches(cfg, workers=2)
    assert a.per_batch == b.per_batch == c.per_batch
    assert (a.price, a.std) == (b.price, b.std) == (c.price, c.std)
    assert len(set(a.per_batch)) == 3


def test_batch_seeds():
    assert pricer.batch_seeds(1, 4) == pricer.batch_seeds(1, 4)
    assert pricer.batch_seeds(1, 4)[:2] == pricer.batch_seeds(1, 2)
    assert len(set(pricer.batch_seeds(1, 50))) == 50
    assert pricer.batch_seeds(1, 3) != pricer.batch_seeds(2, 3)


def test_workers_env(monkeypatch):
    monkeypatch.setenv(pricer.WORKERS_ENV, "3")
    assert pricer._workers(None, 10) == 3
    assert pricer._workers(None, 2) == 2
    assert pricer._workers(1, 10) == 1


def test_european_zero_vol_exact():
    p = _gbm(d=1, sigma=0.0, q=0.0, s0=110.0)
    paths = sim.simulate_gbm(p, 10, seed=0)
    expected = np.exp(-0.05 * 3) * (110 * np.exp(0.05 * 3) - 100)
    assert pricer.european_mc_price(paths, PayoffSpec(MAX_CALL, 100.0), 0.05) == pytest.approx(expected, rel=1e-13)


def test_european_geometric_basket_matches_closed_form():
    p = _gbm(d=5, rho=0.3, q=0.02, T=1.0, n=4, s0=100.0)
    paths = sim.simulate_gbm(p, 100_000, seed=3)
    spec = PayoffSpec(GEO_BASKET_PUT, 100.0)
    mc = pricer.european_mc_price(paths, spec, p.r)
    se = pricer.european_mc_stderr(paths, spec, p.r)
    assert abs(mc - oracles.bs_geometric_basket(p, 100.0)) < 3 * se


@pytest.mark.parametrize("model,d,seed", [("gbm", 2, 0), ("gbm", 5, 1), ("mjd", 10, 2)])
@pytest.mark.parametrize("itm", [False, True])
def test_american_dominates_european(model, d, seed, itm):
    cfg = ExperimentConfig(model=model, d=d, paths=5000)
    paths = cfg.simulate(seed)
    spec = cfg.payoff_spec
    am = pricer.longstaff_schwartz(paths, spec, cfg.rate, pricer.LsmPoly(), itm_filter=itm, seed=seed)
    eu = pricer.european_mc_price(paths, spec, cfg.rate)
    assert am >= eu - 3 * pricer.european_mc_stderr(paths, spec, cfg.rate)


def test_zero_volatility_recursion_is_exact():
    p = sim.GbmParams(d=1, s0=120.0, r=0.05, q=0.0, sigma=0.0, rho=0.0, T=3.0, n=9)
    price = pricer.longstaff_schwartz(sim.simulate_gbm(p, 20, seed=0), PayoffSpec(MAX_CALL, 100.0),
                                      p.r, pricer.LsmPoly())
    assert price == pytest.approx(oracles.zero_vol_max_call(120.0, 100.0, 0.05, 0.0, 3.0, 9), abs=1e-10)


def test_itm_filter_changes_training_set_only():
    cfg = ExperimentConfig(d=2, paths=4000)
    paths = cfg.simulate(4)
    a = pricer.longstaff_schwartz(paths, cfg.payoff_spec, cfg.rate, pricer.LsmPoly())
    b = pricer.longstaff_schwartz(paths, cfg.payoff_spec, cfg.rate, pricer.LsmPoly(), itm_filter=True)
    assert a != b
    assert abs(a - b) / a < 0.05


def test_gpr_regressor_prices_sensibly():
    cfg = ExperimentConfig(d=2, paths=3000, method="gpr", gpr_points=300)
    paths = cfg.simulate(8)
    v = pricer.longstaff_schwartz(paths, cfg.payoff_spec, cfg.rate, cfg.regressor(), seed=8)
    assert abs(v - 13.899) / 13.899 < 0.06


def test_empty_paths():
    p = _gbm()
    empty = sim.PathSet(times=np.linspace(0, 3, 10), values=np.zeros((0, 10, 2)))
    with pytest.raises(EmptyPaths):
        pricer.longstaff_schwartz(empty, PayoffSpec(MAX_CALL, 100.0), p.r, pricer.LsmPoly())
    with pytest.raises(EmptyPaths):
        pricer.european_mc_price(empty, PayoffSpec(MAX_CALL, 100.0), p.r)


def test_surface_grid_shape_and_corners():
    paths = sim.simulate_gbm(_gbm(), 2000, seed=0)
    fitted = pricer.fit_last_step(paths, PayoffSpec(MAX_CALL, 100.0), pricer.Dkl(TINY_DKL),
                                  np.random.default_rng(0))
    rows = pricer.continuation_surface(fitted, 0.98, points=31)
    assert rows.shape == (31 * 31, 3)
    corners = {(30.0, 30.0), (30.0, 180.0), (180.0, 30.0), (180.0, 180.0)}
    assert corners <= {(float(a), float(b)) for a, b, _ in rows}
    buf = io.StringIO()
    pricer.write_surface_csv(rows, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "s1,s2,value" and len(lines) == 31 * 31 + 1
    assert pricer.monotonicity_violations(rows) >= 0


def test_zero_regressor_surface():
    z = _Zero()
    z.d = 2
    rows = pricer.continuation_surface(z, 0.97, points=11)
    assert np.all(rows[:, 2] == 0.0)


def test_surface_needs_two_dimensions():
    paths = sim.simulate_gbm(_gbm(d=3), 500, seed=0)
    fitted = pricer.fit_last_step(paths, PayoffSpec(MAX_CALL, 100.0), pricer.Dkl(TINY_DKL),
                                  np.random.default_rng(0))
    with pytest.raises(UnsupportedDimension):
        pricer.continuation_surface(fitted, 0.98)


def test_monotonicity_counter():
    g = np.linspace(30, 180, 4)
    rows = np.array([[a, b, v] for a, b, v in zip(g, [180.0] * 4, [1.0, 2.0, 1.5, 3.0])])
    assert pricer.monotonicity_violations(rows) == 1
