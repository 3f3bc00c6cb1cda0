import math
import os

import numpy as np
import pytest

import vsem

ROOT = os.environ.get("VSEM_ROOT", os.path.join(os.path.dirname(__file__), "..", ".."))


def model_text(name):
    with open(os.path.join(ROOT, "models", name)) as f:
        return f.read()


@pytest.fixture(scope="module")
def data():
    gen = vsem.parse_model(model_text("path_generator.txt"))
    return vsem.simulate(gen, np.zeros(0), 300, seed=4), gen.manifest_names


def test_parse_and_print():
    spec = vsem.parse_model("F =~ X1 + X2 + X3")
    assert spec.manifest_names == ["X1", "X2", "X3"]
    assert spec.latent_names == ["F"]
    assert spec.k == 6
    assert "=~" in str(spec)
    with pytest.raises(vsem.ParseError):
        vsem.parse_model("F =~")


def test_fit_and_loglik(data):
    cases, names = data
    spec = vsem.parse_model(model_text("path_a.txt"))
    fit = vsem.fit(spec, cases, names)
    assert fit.converged
    assert fit.n == 300
    assert fit.scores.shape == (300, spec.k)
    assert np.allclose(fit.scores.sum(axis=0), 0.0, atol=1e-4)
    ll = vsem.casewise_loglik(fit.mu, fit.sigma, cases)
    assert math.isclose(ll.sum(), fit.loglik, rel_tol=1e-10)
    assert math.isclose(fit.bic - fit.aic, spec.k * (math.log(300) - 2), rel_tol=1e-10)


def test_compare_report(data):
    cases, names = data
    fa = vsem.fit(vsem.parse_model(model_text("path_a.txt")), cases, names)
    fb = vsem.fit(vsem.parse_model(model_text("path_b.txt")), cases, names)
    rep = vsem.compare(fa, fb)
    assert rep["n"] == 300
    assert rep["decision"] in {"prefer-A", "prefer-B", "no-preference", "equivalent-fit-indistinguishable"}
    lo, hi = rep["ic"]["ci"]
    assert lo <= rep["ic"]["bic_diff"] <= hi
    w = vsem.omega_hat_squared(fa.loglik_casewise, fb.loglik_casewise)
    assert math.isclose(w, np.var(fa.loglik_casewise - fb.loglik_casewise), rel_tol=1e-10)
    assert len(vsem.w_eigenvalues(fa, fb)) == fa.k + fb.k


def test_formula_helpers():
    assert math.isclose(vsem.omega_hat_squared(np.array([0.0, 1.0, 2.0]), np.zeros(3)), 2 / 3)
    lo, hi = vsem.ic_difference_ci(15.2, 0.05, 599, 0.05)
    assert math.isclose((hi - lo) / 2, 21.45, abs_tol=5e-3)
    assert math.isclose(vsem.endpoint_sd([1, 2, 3], [1, 4, 7]), math.sqrt(5), rel_tol=1e-12)


def test_weighted_chisq():
    w = vsem.WeightedChiSq([1.0, 1.0])
    assert math.isclose(w.cdf(2.0), 1 - math.exp(-1.0), abs_tol=1e-8)
    assert math.isclose(w.mean(), 2.0)
    mixed = vsem.WeightedChiSq([1.0, -0.5])
    draws = np.asarray(mixed.sample(200000, 3))
    assert abs((draws <= 0.5).mean() - mixed.cdf(0.5)) < 0.005


def test_bootstrap_and_simulation(data):
    cases, names = data
    a = vsem.parse_model(model_text("path_a.txt"))
    lo, hi, dropped = vsem.bootstrap_ic_ci(a, a, cases, names, reps=100)
    assert (lo, hi, dropped) == (0.0, 0.0, 0)
    rows = vsem.run_simulation(3, reps=5, n_levels=[200], d_levels=[0.0], threads=1)
    assert len(rows) == 1
    assert rows[0]["reps"] + rows[0]["dropped"] == 5
    with pytest.raises(ValueError):
        vsem.run_simulation(4, reps=5)
