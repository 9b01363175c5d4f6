"""The numba and numpy kernel flavours, and the Gauss-Kronrod tables."""
import math
import runpy
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from recoil_sigma import _kernels
from recoil_sigma._backend import requested_backend, worker_count

pytestmark = pytest.mark.skipif(_kernels.NUMBA_KERNELS is None, reason="numba not installed")

PARAMS = (210.3, 38.4, 1.0 / (math.sqrt(2 * math.pi) * 38.4), 59.6, 738.0)


def test_gauss_nodes_are_legendre_roots():
    nodes, weights = np.polynomial.legendre.leggauss(10)
    gauss_nodes = _kernels.NODES[_kernels.GAUSS_W != 0.0]
    np.testing.assert_allclose(np.sort(gauss_nodes), nodes, atol=1e-15)
    np.testing.assert_allclose(_kernels.GAUSS_W[_kernels.GAUSS_W != 0.0], weights, atol=1e-15)


def test_rule_weights_sum_to_interval_length():
    assert _kernels.KRONROD_W.sum() == pytest.approx(2.0, abs=1e-15)
    assert _kernels.GAUSS_W.sum() == pytest.approx(2.0, abs=1e-15)


@pytest.mark.parametrize("degree", range(0, 32))
def test_kronrod_exact_to_degree_31(degree):
    x = _kernels.NODES
    exact = 0.0 if degree % 2 else 2.0 / (degree + 1)
    assert _kernels.KRONROD_W @ x**degree == pytest.approx(exact, abs=2e-15)
    if degree <= 19:
        assert _kernels.GAUSS_W @ x**degree == pytest.approx(exact, abs=2e-15)


@pytest.mark.parametrize("mode", [0, 1])
def test_panel_sums_flavours_agree(mode):
    if mode == 0:
        a = np.linspace(-0.0015, 0.05, 40)
    else:
        a = np.linspace(0.1, 20.0, 40)
    b = a + (a[1] - a[0])
    ref = _kernels.NUMPY_KERNELS["panel_sums"](a, b, mode, *PARAMS)
    got = _kernels.NUMBA_KERNELS["panel_sums"](a, b, mode, *PARAMS)
    for r, g in zip(ref, got):
        np.testing.assert_allclose(g, r, rtol=1e-13, atol=1e-300)


def test_panel_sums_integrate_known_gaussian():
    # mode 1 with N = 0 is a plain Gaussian density
    v0, sv = 210.3, 38.4
    amp = 1.0 / (math.sqrt(2 * math.pi) * sv)
    edges = v0 + sv * np.linspace(-3, 3, 61)
    kre, kim, _, _ = _kernels.panel_sums(edges[:-1], edges[1:], 1, v0, sv, amp, 0.0, 0.0)
    assert kre.sum() == pytest.approx(stats.norm.cdf(3) - stats.norm.cdf(-3), abs=1e-14)
    assert not kim.any()


@given(st.lists(st.floats(0.0, 1.0, exclude_max=True), min_size=1, max_size=50),
       st.floats(0.0, 30.0))
def test_poisson_flavours_agree(us, lam):
    u = np.array(us)
    lams = np.full(u.shape, lam)
    a = _kernels.NUMPY_KERNELS["poisson_small"](u, lams)
    b = _kernels.NUMBA_KERNELS["poisson_small"](u, lams)
    np.testing.assert_array_equal(a, b)


def test_poisson_inversion_matches_scipy_ppf():
    u = np.linspace(0.0005, 0.9995, 999)
    for lam in (0.01, 0.28, 3.0, 29.0):
        got = _kernels.poisson_small(u, np.full(u.shape, lam))
        ref = stats.poisson.ppf(u, lam)
        # ties at CDF steps can round either way; only exact-boundary draws may differ
        assert np.mean(got == ref) > 0.995


@given(st.lists(st.floats(-10.0, 10.0), min_size=2, max_size=200))
def test_jackknife_flavours_agree(phases):
    ph = np.array(phases)
    r1, s1 = _kernels.NUMPY_KERNELS["phasor_jackknife"](ph)
    r2, s2 = _kernels.NUMBA_KERNELS["phasor_jackknife"](ph)
    assert r2 == pytest.approx(r1, abs=1e-13)
    assert s2 == pytest.approx(s1, abs=1e-10)


def test_jackknife_known_cases():
    r, se = _kernels.phasor_jackknife(np.zeros(100))
    assert r == 1.0 and se == 0.0
    # two opposite phasors cancel
    r, _ = _kernels.phasor_jackknife(np.array([0.0, math.pi]))
    assert r == pytest.approx(0.0, abs=1e-15)


def test_jackknife_se_matches_delta_method():
    rng = np.random.default_rng(1)
    ph = rng.normal(0.5, 0.8, 20000)
    r, se = _kernels.phasor_jackknife(ph)
    c, s = np.cos(ph), np.sin(ph)
    mc, ms = c.mean(), s.mean()
    # gradient of hypot(mc, ms) is the unit vector (mc, ms) / r
    g = np.array([mc, ms]) / r
    cov = np.cov(np.vstack([c, s])) / ph.size
    assert se == pytest.approx(math.sqrt(g @ cov @ g), rel=1e-3)


def test_backend_env(monkeypatch):
    monkeypatch.setenv("RECOIL_SIGMA_BACKEND", "numpy")
    assert requested_backend() == "numpy"
    monkeypatch.setenv("RECOIL_SIGMA_BACKEND", "fortran")
    with pytest.raises(ValueError):
        requested_backend()
    monkeypatch.setenv("RECOIL_SIGMA_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("RECOIL_SIGMA_THREADS", "0")
    assert worker_count() >= 1
    monkeypatch.setenv("RECOIL_SIGMA_THREADS", "-2")
    with pytest.raises(ValueError):
        worker_count()


def test_benchmark_script_runs(capsys):
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    bench = runpy.run_path(str(path))
    bench["main"](["--size", "2100", "--repeat", "1"])
    out = capsys.readouterr().out
    for name in ("panel_sums", "poisson_small", "phasor_jackknife"):
        assert name in out
