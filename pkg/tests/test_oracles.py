import numpy as np
import pytest
from scipy.stats import norm

from dklpricer import bench, gp, oracles, sim


def _bs_put(s, k, r, q, sigma, T):
    d1 = (np.log(s / k) + (r - q + sigma**2 / 2) * T) / (sigma * np.sqrt(T))
    d2 = d1 - sigma * np.sqrt(T)
    return k * np.exp(-r * T) * norm.cdf(-d2) - s * np.exp(-q * T) * norm.cdf(-d1)


def test_tree_with_one_date_is_european():
    assert oracles.crr_bermudan(40, 40, 0.06, 0.2, 1.0, 2000, 1) == pytest.approx(
        _bs_put(40, 40, 0.06, 0.0, 0.2, 1.0), abs=1e-3)


def test_tree_monotone_in_exercise_dates():
    eu, berm, am = (oracles.crr_bermudan(40, 40, 0.06, 0.2, 1.0, 1000, k) for k in (1, 10, 1000))
    assert eu < berm < am
    assert am == pytest.approx(2.3196, abs=1e-3)  # converged American put value


def test_tree_rejects_misaligned_dates():
    with pytest.raises(ValueError):
        oracles.crr_bermudan(40, 40, 0.06, 0.2, 1.0, 2001, 10)


def test_geometric_basket_closed_form_one_asset():
    p = sim.GbmParams(d=1, s0=100.0, r=0.05, q=0.02, sigma=0.3, rho=0.0, T=2.0, n=1)
    assert oracles.bs_geometric_basket(p, 95.0) == pytest.approx(_bs_put(100, 95, 0.05, 0.02, 0.3, 2.0), rel=1e-12)


def test_geometric_basket_moments_identical_assets():
    # d perfectly correlated identical assets: the geometric mean is one asset
    p = sim.GbmParams(d=4, s0=100.0, r=0.05, q=0.0, sigma=0.2, rho=1.0, T=1.0, n=1)
    mu, var = oracles.geometric_basket_moments(p)
    assert mu == pytest.approx(np.log(100.0) + 0.05 - 0.02, abs=1e-12)
    assert var == pytest.approx(0.04, abs=1e-12)


def test_mjd_quadrature_without_jumps_matches_tree():
    v = oracles.mjd_bermudan_put_1d(40, 40, 0.06, 0.0, 0.2, 0.0, 0.0, 0.1, 1.0, 10, points=1201)
    assert v == pytest.approx(oracles.crr_bermudan(40, 40, 0.06, 0.2, 1.0, 2000, 10), rel=1e-3)


def test_mjd_quadrature_reproduces_basket_benchmark():
    # the basket's geometric mean is a one-asset MJD with vol and jump vol sqrt(0.05)
    v = np.sqrt(0.05)
    assert oracles.mjd_bermudan_put_1d(40, 40, 0.08, 0.0, v, 5.0, -0.025, v, 1.0, 10) == pytest.approx(
        bench.MJD_GEOPUT_BENCHMARK, abs=5e-4)


def test_zero_vol_max_call():
    # q=0, r>0: waiting is optimal, value is the discounted terminal intrinsic
    assert oracles.zero_vol_max_call(110, 100, 0.05, 0.0, 3.0, 9) == pytest.approx(110 - 100 * np.exp(-0.15))
    # heavy dividend: exercise at the first date
    assert oracles.zero_vol_max_call(150, 100, 0.0, 0.5, 3.0, 9) == pytest.approx(150 * np.exp(-0.5 / 3) - 100)
    assert oracles.zero_vol_max_call(50, 100, 0.05, 0.1, 3.0, 9) == 0.0


def test_suite_passes_and_is_deterministic():
    lines_a, lines_b = [], []
    a = bench.run_oracle_suite(seed=0, emit=lines_a.append)
    b = bench.run_oracle_suite(seed=0, emit=lines_b.append)
    assert all(r.passed for r in a), "\n".join(lines_a)
    assert lines_a == lines_b
    assert len(a) == len(lines_a) >= 8
    assert all(line.startswith("PASS ") for line in lines_a)


def test_suite_flags_tampered_kernel(monkeypatch):
    # factor-2 exponent: gradients stay consistent, the kernel convention check trips
    orig = gp.rbf_from_sqdist
    monkeypatch.setattr(gp, "rbf_from_sqdist", lambda D, gamma, scale=None: orig(2.0 * D, gamma, scale))
    res = {r.name: r for r in bench.run_oracle_suite(seed=0, emit=None)}
    failed = [n for n, r in res.items() if not r.passed]
    assert any("RBF convention" in n for n in failed)
    assert all(r.passed for n, r in res.items() if "gradient" in n)
