import io

import numpy as np
import pytest

from dklpricer import sim
from dklpricer.errors import InvalidConfig, NotPSD


def test_cholesky_identity():
    np.testing.assert_array_equal(sim.correlation_cholesky(np.eye(3)), np.eye(3))


def test_cholesky_two_by_two():
    L = sim.correlation_cholesky(np.array([[1.0, 0.5], [0.5, 1.0]]))
    np.testing.assert_allclose(L, [[1.0, 0.0], [0.5, np.sqrt(0.75)]], atol=1e-15)


def test_cholesky_mjd_d10_round_trip():
    rho = sim.equicorrelation(10, 31 / 81)
    L = sim.correlation_cholesky(rho)
    np.testing.assert_allclose(L @ L.T, rho, atol=1e-12)
    assert np.allclose(L, np.tril(L))


def test_cholesky_singular_gets_jitter():
    rho = np.ones((3, 3))  # rank one: needs jitter
    L = sim.correlation_cholesky(rho)
    np.testing.assert_allclose(L @ L.T, rho, atol=1e-5)


def test_cholesky_indefinite_fails():
    rho = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    with pytest.raises(NotPSD):
        sim.correlation_cholesky(rho)


def test_exercise_grid_examples():
    g = sim.exercise_grid(3.0, 9)
    assert len(g) == 10 and g[0] == 0.0 and g[-1] == 3.0
    np.testing.assert_allclose(np.diff(g), 1 / 3)
    np.testing.assert_array_equal(sim.exercise_grid(1.0, 1), [0.0, 1.0])
    np.testing.assert_allclose(np.diff(sim.exercise_grid(1.0, 10)), 0.1)


@pytest.mark.parametrize("T,n", [(1.0, 0), (0.0, 3), (-1.0, 3)])
def test_exercise_grid_invalid(T, n):
    with pytest.raises(InvalidConfig):
        sim.exercise_grid(T, n)


def test_params_validation():
    with pytest.raises(InvalidConfig):
        sim.GbmParams(d=2, s0=[100.0, -1.0], r=0.05, q=0.0, sigma=0.2, rho=0.0, T=1.0, n=3)
    with pytest.raises(InvalidConfig):
        sim.GbmParams(d=2, s0=100.0, r=0.05, q=0.0, sigma=-0.2, rho=0.0, T=1.0, n=3)
    with pytest.raises(InvalidConfig):
        sim.GbmParams(d=2, s0=100.0, r=0.05, q=0.0, sigma=0.2, rho=[[1, 0.3], [0.2, 1]], T=1.0, n=3)


def test_zero_vol_paths_are_deterministic_drift():
    p = sim.GbmParams(d=3, s0=[90.0, 100.0, 110.0], r=0.05, q=[0.0, 0.1, 0.02], sigma=0.0,
                      rho=0.0, T=3.0, n=9)
    ps = sim.simulate_gbm(p, 5, seed=1)
    expected = p.s0[None, :] * np.exp((p.r - p.q)[None, :] * ps.times[:, None])
    np.testing.assert_allclose(ps.values, np.broadcast_to(expected, ps.values.shape), rtol=1e-14)


def test_pathset_invariants():
    ps = sim.simulate_gbm(sim.reference_gbm_params(5), 1000, seed=3)
    assert ps.values.shape == (1000, 10, 5)
    np.testing.assert_array_equal(ps.values[:, 0], 100.0)
    assert np.all(ps.values > 0)
    assert np.all(np.diff(ps.times) > 0) and ps.times[-1] == 3.0


def test_seed_reproducibility_bitwise():
    p = sim.reference_mjd_params(10)
    a = sim.simulate_mjd(p, 500, seed=42)
    b = sim.simulate_mjd(p, 500, seed=42)
    assert a.values.tobytes() == b.values.tobytes()
    c = sim.simulate_mjd(p, 500, seed=43)
    assert not np.array_equal(a.values, c.values)


def _martingale_z(values, r, q, T, s0):
    disc = np.exp(-(r - q) * T) * values[:, -1, 0]
    return abs(disc.mean() - s0) / (disc.std(ddof=1) / np.sqrt(len(disc)))


def test_gbm_martingale():
    p = sim.GbmParams(d=1, s0=100.0, r=0.05, q=0.0, sigma=0.2, rho=0.0, T=1.0, n=4)
    assert _martingale_z(sim.simulate_gbm(p, 200_000, seed=5).values, 0.05, 0.0, 1.0, 100.0) < 3


def test_mjd_martingale():
    base = sim.GbmParams(d=1, s0=40.0, r=0.08, q=0.0, sigma=0.3, rho=0.0, T=1.0, n=10)
    p = sim.MjdParams(base=base, lambda_j=5.0, mu_j=-0.025, sigma_j=0.3354, rho_j=0.0)
    assert _martingale_z(sim.simulate_mjd(p, 200_000, seed=6).values, 0.08, 0.0, 1.0, 40.0) < 3


def test_jump_intensity_recovered():
    # with sigma_j -> 0 and mu_j = 1, each log-increment minus drift counts jumps
    base = sim.GbmParams(d=1, s0=1.0, r=0.0, q=0.0, sigma=0.0, rho=0.0, T=1.0, n=10)
    p = sim.MjdParams(base=base, lambda_j=5.0, mu_j=1.0, sigma_j=0.0, rho_j=0.0)
    ps = sim.simulate_mjd(p, 50_000, seed=7)
    drift = -5.0 * p.kappa[0] * 0.1
    counts = np.round(np.diff(np.log(ps.values[:, :, 0]), axis=1) - drift)
    rate = counts.sum(axis=1) / 1.0
    z = abs(rate.mean() - 5.0) / (rate.std(ddof=1) / np.sqrt(rate.size))
    assert z < 3


def test_mjd_without_jumps_equals_gbm():
    g = sim.reference_gbm_params(3)
    m = sim.MjdParams(base=g, lambda_j=0.0, mu_j=-0.1, sigma_j=0.2, rho_j=0.0)
    a = sim.simulate_gbm(g, 300, seed=9)
    b = sim.simulate_mjd(m, 300, seed=9)
    np.testing.assert_array_equal(a.values, b.values)


def test_correlation_recovery():
    rho = np.array([[1.0, 0.6, -0.3], [0.6, 1.0, 0.1], [-0.3, 0.1, 1.0]])
    p = sim.GbmParams(d=3, s0=100.0, r=0.05, q=0.0, sigma=[0.1, 0.2, 0.3], rho=rho, T=1.0, n=1)
    ps = sim.simulate_gbm(p, 100_000, seed=11)
    ret = np.log(ps.values[:, 1] / ps.values[:, 0])
    assert np.max(np.abs(np.corrcoef(ret.T) - rho)) < 0.02


def test_kappa_forms():
    base = sim.reference_gbm_params(2)
    v = sim.MjdParams(base=base, lambda_j=1.0, mu_j=-0.025, sigma_j=0.3, rho_j=0.0)
    lit = sim.MjdParams(base=base, lambda_j=1.0, mu_j=-0.025, sigma_j=0.3, rho_j=0.0,
                        kappa_form="literal")
    np.testing.assert_allclose(v.kappa, np.exp(-0.025 + 0.045) - 1)
    np.testing.assert_allclose(lit.kappa, np.exp(-0.025 + 0.15) - 1)


def test_reference_mjd_market():
    p = sim.reference_mjd_params(10)
    assert p.base.rho[0, 1] == pytest.approx(31 / 81)
    assert p.base.sigma[0] == pytest.approx(1.5 * np.sqrt(0.05))
    assert p.base.q[0] == pytest.approx(-0.18997, abs=1e-5)
    literal = sim.reference_mjd_params(10, dividend_form="literal")
    assert literal.base.q[0] == pytest.approx((1 - 1.5 ** 2) / 40 - 5 * np.exp(-31 / 32))


def test_paths_csv_round_trip():
    ps = sim.simulate_gbm(sim.reference_gbm_params(2), 4, seed=0)
    buf = io.StringIO()
    sim.save_paths_csv(ps, buf)
    header = buf.getvalue().splitlines()[0]
    assert header.startswith("t0_a0,t0_a1,t1_a0")
    buf.seek(0)
    back = sim.load_paths_csv(buf, ps.times)
    np.testing.assert_array_equal(back.values, ps.values)
