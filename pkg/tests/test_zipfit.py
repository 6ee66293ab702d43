"""Likelihood evaluation and the weighted null-model fit."""

import math

import numpy as np
import pytest
from scipy.special import expit

from zipvc.errors import BoundaryError, ConvergenceError, InputError
from zipvc.zipfit import (
    FitConfig,
    fit_zip,
    logistic_glm,
    loglik,
    poisson_glm,
)
from zipvc.zipfit import _estep, _gradient, _information, _weighted_loglik


def _zip_data(seed, n=400, q=2):
    """Counts from a ZIP model with known coefficients."""
    rng = np.random.default_rng(seed)
    X = rng.normal(0.0, 0.7, (n, q))
    beta_pi = np.concatenate([[0.8], np.full(q, 0.4)])
    beta_lambda = np.concatenate([[1.0], np.full(q, 0.3)])
    Xd = np.column_stack([np.ones(n), X])
    pi = expit(Xd @ beta_pi)
    lam = np.exp(Xd @ beta_lambda)
    y = np.where(rng.random(n) < pi, rng.poisson(lam), 0)
    return y, X


class TestLoglik:
    def test_zero_count_mixture(self):
        # (1 - pi) + pi * e^{-lam} with e^{-lam} = 1/2
        assert loglik(0, 0.5, math.log(2.0)) == pytest.approx(
            math.log(0.75), abs=1e-12
        )

    def test_pure_poisson_branch(self):
        assert loglik(2, 1.0, 1.0) == pytest.approx(-1.0 - math.log(2.0),
                                                    abs=1e-12)

    def test_structural_only_cannot_emit_positive(self):
        assert loglik(5, 0.0, 1.0) == -np.inf

    def test_vectorized(self):
        out = loglik(np.array([0, 2]), np.array([0.5, 1.0]),
                     np.array([math.log(2.0), 1.0]))
        assert out.shape == (2,)
        assert out[0] == pytest.approx(math.log(0.75))

    @pytest.mark.parametrize(
        "y, pi, lam",
        [(0, 0.5, 0.0), (0, 0.5, -1.0), (0, 1.5, 1.0), (-1, 0.5, 1.0),
         (1.5, 0.5, 1.0)],
    )
    def test_bad_arguments(self, y, pi, lam):
        with pytest.raises(InputError):
            loglik(y, pi, lam)


class TestFitZip:
    def test_all_zero_counts(self):
        with pytest.raises(BoundaryError):
            fit_zip(np.zeros(50, dtype=int), np.empty((50, 0)))

    def test_weight_rescaling_is_exact(self):
        y, X = _zip_data(0)
        base = fit_zip(y, X)
        doubled = fit_zip(y, X, weights=np.full(len(y), 2.0))
        assert np.array_equal(base.beta_pi, doubled.beta_pi)
        assert np.array_equal(base.beta_lambda, doubled.beta_lambda)

    def test_em_and_newton_agree(self):
        y, X = _zip_data(1)
        em = fit_zip(y, X, config=FitConfig(method="em"))
        nt = fit_zip(y, X, config=FitConfig(method="newton"))
        assert abs(em.loglik - nt.loglik) < 1e-6
        assert np.allclose(em.beta_pi, nt.beta_pi, atol=1e-4)
        assert np.allclose(em.beta_lambda, nt.beta_lambda, atol=1e-4)

    def test_em_loglik_is_monotone(self):
        y, X = _zip_data(2)
        fit = fit_zip(y, X, track_loglik=True)
        trace = np.array(fit.loglik_trace)
        assert trace.size >= 2
        assert np.all(np.diff(trace) >= -1e-9)
        assert fit.loglik == pytest.approx(trace[-1], abs=1e-9)

    def test_fitted_values_match_links(self):
        y, X = _zip_data(3)
        fit = fit_zip(y, X)
        Xd = np.column_stack([np.ones(len(y)), X])
        assert np.allclose(fit.pi0, expit(Xd @ fit.beta_pi), atol=1e-10)
        assert np.allclose(np.log(fit.lambda0), Xd @ fit.beta_lambda,
                           atol=1e-10)

    def test_converged_score_is_small(self):
        y, X = _zip_data(4)
        fit = fit_zip(y, X)
        assert fit.converged
        assert fit.gradient_norm < 1e-8 * len(y)

    def test_information_is_symmetric_psd(self):
        y, X = _zip_data(5)
        fit = fit_zip(y, X)
        assert np.allclose(fit.info, fit.info.T)
        w = np.linalg.eigvalsh(fit.info)
        assert w[0] > -1e-8 * w[-1]

    def test_intercept_recovery(self):
        # intercept-only model, big n: estimates land within 3 SE of truth
        rng = np.random.default_rng(6)
        n = 5000
        true_pi, true_loglam = 0.8, 0.7
        y = np.where(
            rng.random(n) < true_pi, rng.poisson(math.exp(true_loglam), n), 0
        )
        fit = fit_zip(y, np.empty((n, 0)))
        se = np.sqrt(np.diag(np.linalg.inv(fit.info)))
        assert abs(fit.beta_pi[0] - math.log(true_pi / (1 - true_pi))) < 3 * se[0]
        assert abs(fit.beta_lambda[0] - true_loglam) < 3 * se[1]

    def test_warm_start_converges_immediately(self):
        y, X = _zip_data(7)
        fit = fit_zip(y, X)
        again = fit_zip(y, X, init=(fit.beta_pi, fit.beta_lambda))
        assert again.iterations == 0
        assert np.array_equal(again.beta_pi, fit.beta_pi)

    def test_rank_deficient_design(self):
        y, X = _zip_data(8)
        with pytest.raises(InputError, match="rank deficient"):
            fit_zip(y, np.column_stack([X, X[:, 0]]))

    def test_bad_init_shape(self):
        y, X = _zip_data(9)
        with pytest.raises(InputError):
            fit_zip(y, X, init=(np.zeros(2), np.zeros(2)))

    @pytest.mark.parametrize(
        "weights",
        [np.full(3, -1.0), np.zeros(400), np.ones(5)],
        ids=["negative", "all-zero", "wrong-length"],
    )
    def test_bad_weights(self, weights):
        y, X = _zip_data(10)
        if weights.shape[0] == 3:
            weights = np.resize(weights, len(y))
        with pytest.raises(InputError):
            fit_zip(y, X, weights=weights)

    def test_iteration_cap(self):
        y, X = _zip_data(11)
        with pytest.raises(ConvergenceError) as err:
            fit_zip(y, X, config=FitConfig(max_iterations=1))
        assert err.value.gradient_norm is not None

    def test_non_integer_counts(self):
        with pytest.raises(InputError):
            fit_zip(np.array([0.0, 1.5, 2.0]), np.empty((3, 0)))


class TestDerivatives:
    """Analytic score and information against central finite differences."""

    def _setup(self, seed):
        y, X = _zip_data(seed, n=60, q=2)
        rng = np.random.default_rng(seed + 1000)
        Xd = np.column_stack([np.ones(len(y)), X])
        w = rng.uniform(0.5, 1.5, len(y))
        # evaluate near the generating coefficients; no fit needed
        theta = np.array([0.8, 0.4, 0.4, 1.0, 0.3, 0.3])
        theta = theta + rng.normal(0.0, 0.15, theta.size)
        return Xd, y, w, theta

    def _analytic_grad(self, Xd, y, w, theta):
        m = Xd.shape[1]
        pi, lam, zhat = _estep(Xd, y, theta[:m], theta[m:], 1e-10)
        return _gradient(Xd, y, w, pi, lam, zhat)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradient(self, seed):
        Xd, y, w, theta = self._setup(seed)
        m = Xd.shape[1]

        def f(t):
            return _weighted_loglik(Xd, y, w, t[:m], t[m:], 1e-10)

        grad = self._analytic_grad(Xd, y, w, theta)
        fd = np.empty_like(grad)
        h = 1e-6
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            fd[i] = (f(theta + e) - f(theta - e)) / (2 * h)
        scale = max(1.0, np.max(np.abs(grad)))
        assert np.max(np.abs(grad - fd)) / scale < 1e-5

    @pytest.mark.parametrize("seed", [0, 1])
    def test_information(self, seed):
        Xd, y, w, theta = self._setup(seed)
        m = Xd.shape[1]
        pi, lam, _ = _estep(Xd, y, theta[:m], theta[m:], 1e-10)
        info = _information(Xd, y, w, pi, lam)
        fd = np.empty_like(info)
        h = 1e-5
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            gp = self._analytic_grad(Xd, y, w, theta + e)
            gm = self._analytic_grad(Xd, y, w, theta - e)
            fd[i] = (gp - gm) / (2 * h)
        fd = -(fd + fd.T) / 2.0
        assert np.linalg.norm(info - fd) / np.linalg.norm(info) < 1e-4


class TestInnerGlms:
    def test_poisson_estimating_equation(self):
        rng = np.random.default_rng(12)
        n = 500
        x = rng.normal(size=n)
        Xd = np.column_stack([np.ones(n), x])
        y = rng.poisson(np.exp(1.0 + 0.5 * x))
        beta = poisson_glm(Xd, y)
        resid = y - np.exp(Xd @ beta)
        assert np.max(np.abs(Xd.T @ resid)) < 1e-6 * n

    def test_logistic_estimating_equation(self):
        rng = np.random.default_rng(13)
        n = 500
        x = rng.normal(size=n)
        Xd = np.column_stack([np.ones(n), x])
        z = (rng.random(n) < expit(0.3 + 0.8 * x)).astype(float)
        beta = logistic_glm(Xd, z)
        resid = z - expit(Xd @ beta)
        assert np.max(np.abs(Xd.T @ resid)) < 1e-6 * n

    def test_weighted_poisson(self):
        rng = np.random.default_rng(14)
        n = 300
        x = rng.normal(size=n)
        Xd = np.column_stack([np.ones(n), x])
        y = rng.poisson(np.exp(0.5 + 0.3 * x))
        w = rng.uniform(0.2, 2.0, n)
        beta = poisson_glm(Xd, y, weights=w)
        resid = w * (y - np.exp(Xd @ beta))
        assert np.max(np.abs(Xd.T @ resid)) < 1e-6 * n


class TestFitConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"tolerance": 0.0},
            {"eps": 0.6},
            {"method": "bfgs"},
            {"max_iterations": 0},
        ],
    )
    def test_rejects_bad_settings(self, kwargs):
        with pytest.raises(InputError):
            FitConfig(**kwargs)
