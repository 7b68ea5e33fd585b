import numpy as np
import pytest

import dtl


@pytest.fixture(scope="module")
def shallow():
    spec = dtl.NetworkSpec.uniform(1, dtl.Activation.tanh(2), 1.4)
    return spec, dtl.propagate(spec)


def test_activations():
    assert dtl.Activation.tanh(2)(0.5) == pytest.approx(np.tanh(1.0), abs=1e-15)
    assert dtl.Activation.parse("erf:2").name.startswith("erf")
    assert dtl.Activation.sign().is_odd
    x = np.linspace(-1, 1, 6).reshape(2, 3)
    np.testing.assert_allclose(dtl.Activation.tanh(1)(x), np.tanh(x), atol=1e-15)


def test_linear_target_profile():
    p = dtl.propagate(dtl.NetworkSpec.uniform(1, dtl.Activation.identity()))
    assert p.rho == pytest.approx(1.0, abs=1e-12)
    assert p.eps_r == pytest.approx(0.0, abs=1e-12)


def test_optimal_ridge_equals_bayes(shallow):
    _, p = shallow
    lam = dtl.optimal_lambda_ridge(p)
    assert lam == pytest.approx(p.eps_r / p.rho, rel=1e-12)
    for alpha in (0.5, 2.0, 6.0):
        bayes = dtl.bayes_regression(p, alpha).error
        ridge = dtl.ridge_regression(p, alpha, lam).error
        assert abs(bayes - ridge) < 1e-8


def test_errors_are_typed(shallow):
    _, p = shallow
    with pytest.raises(dtl.DomainError):
        dtl.kernel_regression(p, 1.0, 1.0, dtl.Activation.sign(), -5.0)
    with pytest.raises(dtl.ConfigError):
        dtl.NetworkSpec.from_json('{"activations": ["tanh:2"], "widths": [1.4,,]}')
    assert issubclass(dtl.ConvergenceError, dtl.Error)


def test_spec_json_round_trip(shallow):
    spec, _ = shallow
    back = dtl.NetworkSpec.from_json(spec.to_json())
    assert back.widths == spec.widths
    assert back.depth == 1


def test_generate_and_fit(shallow):
    spec, p = shallow
    d = 100
    w = dtl.sample_target(spec, d, 3)
    X, y = dtl.generate(spec, w, 200, seed=4)
    Xt, yt = dtl.generate(spec, w, 2000, seed=4, first_row=1 << 40)
    assert X.shape == (200, d) and y.shape == (200,)
    np.testing.assert_allclose(dtl.network_output(spec, w, X), y, atol=1e-12)
    lam = 2 * dtl.optimal_lambda_ridge(p)
    r = dtl.fit_ridge(X, y, lam, Xt, yt)
    assert r.n_train == 200 and r.n_test == 2000
    assert 0.05 < r.test_error < 0.5
    wr = dtl.ridge_weights(X, y, lam)
    pred = Xt @ wr / np.sqrt(d)
    assert np.mean((pred - yt) ** 2) == pytest.approx(r.test_error, rel=1e-10)


def test_ridge_weights_match_numpy():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 10))
    y = rng.standard_normal(40)
    lam = 0.7
    A = X.T @ X / 10 + lam / 2 * np.eye(10)
    expected = np.linalg.solve(A, X.T @ y / np.sqrt(10))
    np.testing.assert_allclose(dtl.ridge_weights(X, y, lam), expected, rtol=1e-10, atol=1e-12)


def test_kernels_and_gram():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((5, 30))
    k = dtl.KernelSpec(dtl.KernelKind.ArcCosine0)
    G = dtl.gram(k, A, A)
    assert G.shape == (5, 5)
    np.testing.assert_allclose(G, G.T, atol=1e-14)
    assert np.linalg.eigvalsh(G).min() > -1e-12
    np.testing.assert_allclose(np.diag(G), 1.0, atol=1e-12)


def test_logistic_returns_weights(shallow):
    spec, _ = shallow
    w = dtl.sample_target(spec, 40, 5)
    X, y = dtl.generate(spec, w, 120, dtl.Task.Classification, 6)
    Xt, yt = dtl.generate(spec, w, 500, dtl.Task.Classification, 6, 1 << 40)
    assert set(np.unique(y)) <= {-1.0, 1.0}
    r, wl = dtl.fit_logistic(X, y, 0.1, Xt, yt)
    assert wl.shape == (40,)
    err = np.mean(np.sign(Xt @ wl) != yt)
    assert err == pytest.approx(r.test_error, abs=1e-12)


def test_covariance_and_gaussianity():
    spec = dtl.NetworkSpec.uniform(2, dtl.Activation.tanh(1))
    w = dtl.sample_target(spec, 60, 7)
    reports = dtl.covariance_check(spec, w, [1, 2], 20000, 8)
    assert [r.layer for r in reports] == [1, 2]
    for r in reports:
        assert r.theory.shape == (60, 60)
        assert r.rel_frobenius < 0.05
    np.testing.assert_allclose(dtl.theory_covariance(spec, w, 0), np.eye(60), atol=1e-14)
    g = dtl.gaussianity_diagnostics(spec, w, 10000, 9)
    assert set(g.cumulants) == {3, 4, 6, 8}
    assert 0.0 <= g.ks_statistic <= 1.0


def test_k_statistic_matches_sample_variance():
    x = np.random.default_rng(2).standard_normal(500)
    assert dtl.k_statistic(x, 2) == pytest.approx(np.var(x, ddof=1), rel=1e-12)
