"""Score residuals, feature bases, and the set-level statistics."""

import math

import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from zipvc.data import make_dataset
from zipvc.errors import InputError
from zipvc.scores import (
    Basis,
    BasisSpec,
    build_basis,
    residual_lambda,
    residual_pi,
    score_residuals,
    score_statistics,
)
from zipvc.zipfit import NullFit

LN2 = math.log(2.0)


def _fake_fit(pi0, lambda0):
    """NullFit carrying only the fields score_statistics touches."""
    pi0 = np.asarray(pi0, dtype=float)
    lambda0 = np.asarray(lambda0, dtype=float)
    n = pi0.shape[0]
    return NullFit(
        beta_pi=np.zeros(1),
        beta_lambda=np.zeros(1),
        pi0=pi0,
        lambda0=lambda0,
        loglik=0.0,
        info=np.eye(2),
        converged=True,
        iterations=0,
        weights_used=np.ones(n),
        gradient_norm=0.0,
    )


class TestResiduals:
    def test_zero_count_pi(self):
        # pi(1-pi)(1-e^{-lam})/D with e^{-lam}=1/2, D=3/4
        assert residual_pi(0, 0.5, LN2) == pytest.approx(1.0 / 6.0, abs=1e-12)

    def test_positive_count_pi(self):
        assert residual_pi(3, 0.5, LN2) == pytest.approx(-0.5, abs=1e-12)

    def test_zero_count_lambda(self):
        assert residual_lambda(0, 0.5, LN2) == pytest.approx(LN2 / 3.0,
                                                             abs=1e-12)

    def test_positive_count_lambda(self):
        assert residual_lambda(3, 0.5, LN2) == pytest.approx(-(3.0 - LN2),
                                                             abs=1e-12)

    def test_rate_to_zero_limit(self):
        # a Poisson with vanishing rate makes zeros uninformative
        assert residual_pi(0, 0.5, 1e-12) == pytest.approx(0.0, abs=1e-10)
        assert residual_lambda(0, 0.5, 1e-12) == pytest.approx(0.0, abs=1e-10)

    def test_no_susceptible_mass_limit(self):
        assert residual_lambda(0, 1e-12, 2.0) == pytest.approx(0.0, abs=1e-10)

    def test_vectorized(self):
        r_pi, r_lam = score_residuals(
            np.array([0, 3]), np.full(2, 0.5), np.full(2, LN2)
        )
        assert r_pi == pytest.approx([1.0 / 6.0, -0.5])
        assert r_lam == pytest.approx([LN2 / 3.0, -(3.0 - LN2)])

    @pytest.mark.parametrize("pi0, lam0", [(0.0, 1.0), (1.0, 1.0), (0.5, 0.0)])
    def test_bad_arguments(self, pi0, lam0):
        with pytest.raises(InputError):
            residual_pi(0, pi0, lam0)

    def test_population_mean_is_zero(self):
        # residuals average to zero over outcomes from the matching ZIP law
        rng = np.random.default_rng(21)
        n = 10**6
        pi0, lam0 = 0.7, 1.8
        y = np.where(rng.random(n) < pi0, rng.poisson(lam0, n), 0)
        for r in score_residuals(y, np.full(n, pi0), np.full(n, lam0)):
            se = r.std(ddof=1) / math.sqrt(n)
            assert abs(r.mean()) < 4 * se


class TestBuildBasis:
    def _genotypes(self, seed=0, n=40, p=5):
        rng = np.random.default_rng(seed)
        return rng.binomial(2, 0.3, (n, p)).astype(float) \
            + rng.normal(0.0, 0.01, (n, p))

    def test_identity_copies(self):
        G = self._genotypes()
        basis = build_basis(G)
        assert np.array_equal(basis.psi, G)
        assert basis.psi is not G
        assert basis.K == G.shape[1]

    def test_identity_centering(self):
        G = self._genotypes(1)
        basis = build_basis(G, BasisSpec(center_columns=True))
        assert np.allclose(basis.psi.mean(axis=0), 0.0, atol=1e-12)

    def test_linear_kernel_spans_genotypes(self):
        G = self._genotypes(2)
        basis = build_basis(
            G, BasisSpec(kind="kernel_pca", kernel="linear", rank=G.shape[1])
        )
        # projection of psi onto col(G) leaves nothing behind
        Q, _ = np.linalg.qr(G)
        resid = basis.psi - Q @ (Q.T @ basis.psi)
        assert np.max(np.abs(resid)) < 1e-8

    def test_gaussian_kernel_eigen_residual(self):
        G = self._genotypes(3, n=15, p=2)
        sigma = 1.3
        basis = build_basis(
            G,
            BasisSpec(kind="kernel_pca", kernel="gaussian", bandwidth=sigma,
                      rank=4),
        )
        K = np.exp(-squareform(pdist(G, "sqeuclidean")) / (2 * sigma**2))
        for k in range(basis.K):
            mu = basis.eigenvalues[k]
            v = basis.psi[:, k] / math.sqrt(mu)
            assert np.linalg.norm(K @ v - mu * v) < 1e-8

    def test_poly_kernel_is_psd_path(self):
        G = self._genotypes(4, n=20, p=3)
        basis = build_basis(
            G, BasisSpec(kind="kernel_pca", kernel="poly", degree=2)
        )
        assert basis.K >= 1
        assert np.all(np.diff(basis.eigenvalues) <= 1e-9)

    def test_gaussian_default_bandwidth(self):
        G = self._genotypes(5, n=18, p=2)
        basis = build_basis(G, BasisSpec(kind="kernel_pca", kernel="gaussian"))
        assert basis.K >= 1

    def test_rank_beyond_numerical_rank(self):
        G = self._genotypes(6, n=12, p=3)
        with pytest.raises(InputError, match="rank"):
            build_basis(G, BasisSpec(kind="kernel_pca", kernel="linear",
                                     rank=10))

    def test_rank_frac_keeps_leading_mass(self):
        G = self._genotypes(7, n=30, p=6)
        full = build_basis(G, BasisSpec(kind="kernel_pca", kernel="linear",
                                        rank_frac=1.0))
        trimmed = build_basis(G, BasisSpec(kind="kernel_pca", kernel="linear",
                                           rank_frac=0.9))
        assert trimmed.K <= full.K
        mass = np.cumsum(full.eigenvalues) / np.sum(full.eigenvalues)
        assert mass[trimmed.K - 1] >= 0.9

    def test_zero_column_rejected(self):
        G = self._genotypes(8)
        G[:, 2] = 0.0
        with pytest.raises(InputError, match="zero column"):
            build_basis(G)

    def test_spec_validation(self):
        with pytest.raises(InputError):
            BasisSpec(kind="pls")
        with pytest.raises(InputError):
            BasisSpec(kernel="sigmoid")
        with pytest.raises(InputError):
            BasisSpec(rank_frac=0.0)
        with pytest.raises(InputError):
            BasisSpec(bandwidth=-1.0)


class TestScoreStatistics:
    def test_hand_example(self):
        # y=(1,2) at lambda0=(2,1) gives lambda-residuals (1,-1); with the
        # single genotype column (1,2): S = (1*1 + (-1)*2)/2, Q = n*S^2
        ds = make_dataset(["a", "b"], [1, 2], [[1.0], [2.0]])
        fit = _fake_fit([0.5, 0.5], [2.0, 1.0])
        sr = score_statistics(fit, ds, build_basis(ds.genotypes))
        assert sr.s_lambda[0] == pytest.approx(-0.5, abs=1e-12)
        assert sr.q_lambda == pytest.approx(0.5, abs=1e-12)

    def test_quadratic_from_vector(self, fitted_bundle):
        sr = score_statistics(
            fitted_bundle.fit, fitted_bundle.dataset, fitted_bundle.basis
        )
        n = fitted_bundle.dataset.n
        assert sr.q_pi == pytest.approx(n * sr.s_pi @ sr.s_pi, rel=1e-12)
        assert sr.q_lambda == pytest.approx(n * sr.s_lambda @ sr.s_lambda,
                                            rel=1e-12)

    def test_identity_matches_linear_kernel_form(self, fitted_bundle):
        # Q with the identity basis equals n^{-1} r' G G' r
        ds = fitted_bundle.dataset
        sr = score_statistics(fitted_bundle.fit, ds, fitted_bundle.basis)
        G = ds.genotypes
        for q, r in ((sr.q_pi, sr.residuals_pi),
                     (sr.q_lambda, sr.residuals_lambda)):
            direct = float(r @ (G @ (G.T @ r))) / ds.n
            assert q == pytest.approx(direct, rel=1e-10)

    def test_kernel_pca_full_rank_reproduces_identity(self, fitted_bundle):
        ds = fitted_bundle.dataset
        sr_id = score_statistics(fitted_bundle.fit, ds, fitted_bundle.basis)
        kp = build_basis(
            ds.genotypes,
            BasisSpec(kind="kernel_pca", kernel="linear", rank_frac=1.0),
        )
        sr_kp = score_statistics(fitted_bundle.fit, ds, kp)
        assert sr_kp.q_pi == pytest.approx(sr_id.q_pi, rel=1e-8)
        assert sr_kp.q_lambda == pytest.approx(sr_id.q_lambda, rel=1e-8)

    def test_joint_permutation_invariance(self, fitted_bundle):
        ds = fitted_bundle.dataset
        sr = score_statistics(fitted_bundle.fit, ds, fitted_bundle.basis)
        rng = np.random.default_rng(9)
        perm = rng.permutation(ds.n)
        ds2 = make_dataset(
            [ds.ids[i] for i in perm],
            ds.y[perm],
            ds.genotypes[perm],
            ds.covariates[perm],
            genotype_names=ds.genotype_names,
            covariate_names=ds.covariate_names,
        )
        fit2 = _fake_fit(fitted_bundle.fit.pi0[perm],
                         fitted_bundle.fit.lambda0[perm])
        sr2 = score_statistics(fit2, ds2, build_basis(ds2.genotypes))
        assert sr2.q_pi == pytest.approx(sr.q_pi, rel=1e-12)
        assert sr2.q_lambda == pytest.approx(sr.q_lambda, rel=1e-12)

    def test_psi_scaling_is_quadratic(self, fitted_bundle):
        ds = fitted_bundle.dataset
        sr = score_statistics(fitted_bundle.fit, ds, fitted_bundle.basis)
        scaled = Basis(psi=3.0 * fitted_bundle.basis.psi,
                       spec=fitted_bundle.basis.spec)
        sr2 = score_statistics(fitted_bundle.fit, ds, scaled)
        assert sr2.q_pi == pytest.approx(9.0 * sr.q_pi, rel=1e-12)

    def test_orthogonality_to_null_design(self, fitted_bundle):
        # fitted residuals are orthogonal to every null-model column
        ds = fitted_bundle.dataset
        fit = fitted_bundle.fit
        Xd = np.column_stack([np.ones(ds.n), ds.covariates])
        r_pi, r_lam = score_residuals(ds.y, fit.pi0, fit.lambda0)
        assert np.max(np.abs(Xd.T @ r_pi)) < 1e-6 * ds.n
        assert np.max(np.abs(Xd.T @ r_lam)) < 1e-6 * ds.n

    def test_dimension_mismatch(self, fitted_bundle):
        ds = fitted_bundle.dataset
        short = build_basis(ds.genotypes[: ds.n - 1])
        with pytest.raises(InputError):
            score_statistics(fitted_bundle.fit, ds, short)
