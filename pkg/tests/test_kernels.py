"""Backend agreement: the compiled kernels must match the NumPy fallback."""

import numpy as np
import pytest

from covaropt._kernels import BACKEND, pure

native = pytest.importorskip(
    "covaropt._kernels._native", reason="compiled kernel extension not built"
)


@pytest.fixture
def gjr_args():
    rng = np.random.default_rng(1)
    returns = rng.normal(0.001, 0.02, size=800)
    return returns, 9e-5, 0.06, 0.1, 0.8, 0.05, 0.001, 4e-4


def test_backend_label():
    assert BACKEND in ("native", "pure")


def test_gjr_filter_agreement(gjr_args):
    sig_n, eps_n, nll_n = native.gjr_filter(*gjr_args)
    sig_p, eps_p, nll_p = pure.gjr_filter(*gjr_args)
    np.testing.assert_allclose(sig_n, sig_p, rtol=1e-13)
    np.testing.assert_allclose(eps_n, eps_p, rtol=1e-13)
    assert nll_n == pytest.approx(nll_p, rel=1e-13)


def test_dcc_nll_agreement():
    rng = np.random.default_rng(2)
    n, m = 400, 4
    u = rng.normal(size=(n, m))
    inno = rng.normal(scale=0.02, size=(n, m))
    a = rng.normal(size=(m, m + 2))
    c_raw = a @ a.T / (m + 2)
    d = np.sqrt(np.diag(c_raw))
    c_bar = c_raw / np.outer(d, d)
    for b1, b2 in ((0.05, 0.9), (0.0, 0.0), (0.3, 0.4)):
        nll_n = native.dcc_nll(u, inno, c_bar, b1, b2)
        nll_p = pure.dcc_nll(u, inno, c_bar, b1, b2)
        assert nll_n == pytest.approx(nll_p, rel=1e-10)


def test_dcc_simulate_agreement():
    rng = np.random.default_rng(3)
    paths, steps, m = 7, 25, 3
    z = rng.standard_normal((paths, steps, m))
    alphas = np.array([[9e-5, 0.05, 0.08, 0.82]] * m)
    kappas = np.array([0.05, 0.0, -0.02])
    c_bar = np.array([[1.0, 0.4, 0.2], [0.4, 1.0, 0.3], [0.2, 0.3, 1.0]])
    sigma1 = np.array([9e-4, 8e-4, 1.1e-3])
    for rn in (False, True):
        for std in (False, True):
            out_n = native.dcc_simulate(z, alphas, kappas, 0.001, c_bar,
                                        0.05, 0.9, sigma1, c_bar, rn, std)
            out_p = pure.dcc_simulate(z, alphas, kappas, 0.001, c_bar,
                                      0.05, 0.9, sigma1, c_bar, rn, std)
            np.testing.assert_allclose(out_n, out_p, rtol=1e-10, atol=1e-14)


def test_pure_override_env(monkeypatch):
    import importlib
    import covaropt._kernels as kern

    monkeypatch.setenv("COVAROPT_PURE_PYTHON", "1")
    reloaded = importlib.reload(kern)
    assert reloaded.BACKEND == "pure"
    monkeypatch.delenv("COVAROPT_PURE_PYTHON")
    importlib.reload(kern)
